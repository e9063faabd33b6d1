//! Full pipeline: coefficient tree, budgets, atoms and the assembled N-term Gaussian sum.

use gaussnet::assembler::Assembler;
use gaussnet::atom::BudgetRule;
use gaussnet::budget::{NormIndex, SmoothnessParams};
use gaussnet::harness::{lp_error, make_synthetic_tree, ErrorGrid};
use gaussnet::wavelet::build_meyer;

fn main() -> gaussnet::Result<()> {
    let w = build_meyer(1, 512)?;
    let t = make_synthetic_tree(1, 1.0, (-4, 0), None, 3)?;
    let params = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1)?;
    let asm = Assembler::new(&w, BudgetRule::default_for(&w)?)?;
    let grid = ErrorGrid::for_tree(&t, NormIndex::Finite(2.0), 1)?;

    for n in [512, 1024, 2048, 4096, 8192] {
        let a = asm.approximate(&t, &params, n)?;
        let r = &a.report;
        println!(
            "N = {n:5}: {:5} terms, {:2}/{} funded, L2 error {:.3e}, dropped |f| {:.3e}",
            r.terms,
            r.funded,
            r.indices,
            lp_error(&t, &w, &a.sum, &grid)?,
            r.dropped_mass
        );
    }
    println!("atom cache: {} entries, {} hits", asm.cache().len(), asm.cache().hits());

    let a = asm.approximate(&t, &params, 4096)?;
    println!("{}", serde_json::to_string_pretty(&a.report).unwrap());
    Ok(())
}
