//! Error against N on a synthetic tree, with the fitted log-log rate.

use gaussnet::atom::BudgetRule;
use gaussnet::budget::{NormIndex, SmoothnessParams};
use gaussnet::harness::{make_synthetic_tree, rate_study, ErrorGrid};
use gaussnet::wavelet::build_meyer;

fn main() -> gaussnet::Result<()> {
    let w = build_meyer(1, 512)?;
    let rule = BudgetRule::default_for(&w)?;
    let ns = [256, 512, 1024, 2048, 4096, 8192];
    for (s, p) in [(1.0, NormIndex::Finite(2.0)), (2.0, NormIndex::Finite(2.0)), (1.0, NormIndex::Infinity)] {
        let t = make_synthetic_tree(1, s, (-5, 0), None, 7)?;
        let params = SmoothnessParams::new(s, p, 1)?;
        let grid = ErrorGrid::for_tree(&t, NormIndex::Finite(2.0), 1)?;
        let fit = rate_study(&t, &w, &params, &ns, &rule, &grid)?;
        println!(
            "{:?} s = {s}: slope {:.3} (target {:.1}), fit residual {:.3}, excluded {:?}",
            fit.kind, fit.slope, -s, fit.residual, fit.excluded
        );
        fit.write_csv(std::io::stdout())?;
    }
    Ok(())
}
