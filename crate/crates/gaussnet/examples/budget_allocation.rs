//! Smoothness seminorms of a coefficient tree and the per-wavelet budgets they induce.

use gaussnet::budget::{allocate, besov_seminorm, tl_seminorm, NormIndex, SmoothnessParams};
use gaussnet::harness::make_synthetic_tree;

fn main() -> gaussnet::Result<()> {
    let t = make_synthetic_tree(1, 1.0, (-3, 0), None, 5)?;
    println!("{} coefficients on levels {:?}", t.len(), t.level_range());

    let tl = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1)?;
    println!("kind {:?}, q = {:.4}, tau = {:.4}", tl.kind(), tl.q, tl.tau);
    println!("TL seminorm {:.6}", tl_seminorm(&t, tl.s, tl.q, tl.tau));
    let (b, per_level) = besov_seminorm(&t, 1.0);
    println!("Besov seminorm {b:.6}, per level {per_level:?}");

    for params in [tl, SmoothnessParams::new(1.0, NormIndex::Infinity, 1)?] {
        for n in [100, 1000, 10_000] {
            let a = allocate(&t, &params, n, 57)?;
            println!(
                "{:?} N = {n:5}: cost sum {:9.2}, budgets {:5}, funded {:2} of {}",
                a.kind,
                a.cost_sum(),
                a.budget_sum(),
                a.funded().count(),
                a.entries.len()
            );
        }
    }

    let a = allocate(&t, &tl, 2000, 57)?;
    a.write_csv(std::io::stdout())?;
    Ok(())
}
