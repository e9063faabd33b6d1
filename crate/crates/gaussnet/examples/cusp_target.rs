//! A windowed cusp |x - c|^a analyzed into wavelets, then approximated with Gaussians.

use gaussnet::assembler::Assembler;
use gaussnet::atom::BudgetRule;
use gaussnet::budget::{NormIndex, SmoothnessParams};
use gaussnet::harness::{lp_error, ErrorGrid};
use gaussnet::wavelet::{analyze, build_meyer, AnalysisConfig};

fn main() -> gaussnet::Result<()> {
    let w = build_meyer(1, 512)?;
    let c = 0.3;
    let cusp = |x: &[f64]| {
        let r = x[0] - c;
        r.abs().sqrt() * (-r * r).exp()
    };
    let mut cfg = AnalysisConfig::for_system(&w);
    cfg.levels = (-6, 2);
    let (t, report) = analyze(&w, cusp, &[c - 6.0], &[c + 6.0], &cfg)?;
    println!("{} coefficients, max quadrature estimate {:.2e}", t.len(), report.max_error_estimate);

    // the finest levels should put their mass next to the cusp
    for (j, row) in t.by_level().iter().take(3) {
        let side = 2f64.powi(*j);
        let near: f64 = row
            .iter()
            .filter(|(i, _)| ((i.cube.offset[0] as f64 + 0.5) * side - c).abs() <= 4.0 * side)
            .map(|(_, f)| f.abs())
            .sum();
        let all: f64 = row.iter().map(|(_, f)| f.abs()).sum();
        println!("level {j:2}: {:.3} of the coefficient mass lies within 4 sides of the cusp", near / all);
    }

    let params = SmoothnessParams::new(0.5, NormIndex::Finite(2.0), 1)?;
    let asm = Assembler::new(&w, BudgetRule::default_for(&w)?)?;
    let grid = ErrorGrid::for_tree(&t, NormIndex::Finite(2.0), 1)?;
    for n in [20_000, 80_000] {
        let a = asm.approximate(&t, &params, n)?;
        println!(
            "N = {n}: {} terms, {} funded, L2 error against the synthesized tree {:.3e}",
            a.report.terms,
            a.report.funded,
            lp_error(&t, &w, &a.sum, &grid)?
        );
    }
    Ok(())
}
