//! One wavelet replaced by a budgeted sum of Gaussians, and the error as the budget grows.

use gaussnet::atom::{atom_on_cube, choose_h, BudgetRule};
use gaussnet::harness::{atom_budget_sweep, SweepSettings};
use gaussnet::wavelet::{build_meyer, Gender, WaveletIndex};

fn main() -> gaussnet::Result<()> {
    let w = build_meyer(1, 512)?;
    let rule = BudgetRule::default_for(&w)?;
    println!("sigma {}, smallest fundable budget {}", rule.sigma, rule.n0);

    for n in [57, 101, 401, 1601] {
        let c = choose_h(n, 1)?;
        println!("N = {n}: spacing {:.5}, {} centers", c.spacing, c.count);
    }

    let idx = WaveletIndex::new(-2, vec![3], vec![1])?;
    let s = atom_on_cube(&w, &idx, 201, &rule, None)?;
    let err = (0..=200)
        .map(|i| 4.0 + 0.08 * i as f64)
        .map(|x| (w.eval_wavelet(&idx, &[x]).unwrap() - s.eval(&[x]).unwrap()).abs())
        .fold(0.0, f64::max);
    println!("psi on [12, 16) with 201 Gaussians ({} used): sup error {err:.3e}", s.len());

    let e = Gender::new(vec![1])?;
    let sweep = atom_budget_sweep(&w, &e, &[101, 151, 201, 301, 401], &SweepSettings::for_dim(1))?;
    for r in &sweep.rows {
        println!("N = {:4}  terms = {:4}  error = {:.3e}", r.n, r.terms, r.error);
    }
    println!("fitted slope {:.3}", sweep.slope);
    Ok(())
}
