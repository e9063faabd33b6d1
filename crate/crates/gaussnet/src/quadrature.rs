//! Adaptive tensor Gauss–Legendre quadrature over axis-aligned boxes.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per axis on each panel.
    pub order: usize,
    /// Panels per axis before refinement starts.
    pub initial_panels: Vec<usize>,
    /// Target error relative to the integrand's estimated L1 mass.
    pub rel_tol: f64,
    /// Absolute error floor; panels already below it are accepted.
    pub abs_tol: f64,
    pub max_depth: u32,
    pub max_evals: usize,
}

impl QuadConfig {
    pub fn new(d: usize) -> Self {
        QuadConfig {
            order: if d == 1 { 10 } else { 8 },
            initial_panels: vec![8; d],
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_depth: if d == 1 { 40 } else { 14 },
            max_evals: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    /// Sum of |coarse - fine| over accepted panels.
    pub error_estimate: f64,
    /// Estimate of the integral of |f|.
    pub l1_mass: f64,
    pub evaluations: usize,
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new(order: usize) -> Rule {
        let gl = GaussLegendre::new(NonZeroUsize::new(order.max(2)).unwrap());
        let pairs = gl.as_node_weight_pairs();
        Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Tensor rule on the box; returns (integral, integral of |f|).
    fn apply<F: Fn(&[f64]) -> f64>(&self, f: &F, lo: &[f64], hi: &[f64], evals: &mut usize) -> (f64, f64) {
        let d = lo.len();
        let n = self.nodes.len();
        let half: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b + a)).collect();
        let jac: f64 = half.iter().product();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let (mut acc, mut acc_abs) = (0.0, 0.0);
        loop {
            let mut w = 1.0;
            for a in 0..d {
                x[a] = mid[a] + half[a] * self.nodes[idx[a]];
                w *= self.weights[idx[a]];
            }
            let v = f(&x);
            acc += w * v;
            acc_abs += w * v.abs();
            *evals += 1;
            let mut a = 0;
            loop {
                if a == d {
                    return (acc * jac, acc_abs * jac);
                }
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

struct Panel {
    lo: Vec<f64>,
    hi: Vec<f64>,
    coarse: f64,
    depth: u32,
}

fn children(lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = lo.len();
    let mut out = Vec::with_capacity(1 << d);
    for mask in 0..(1usize << d) {
        let mut a = lo.to_vec();
        let mut b = hi.to_vec();
        for ax in 0..d {
            let m = 0.5 * (lo[ax] + hi[ax]);
            if mask >> ax & 1 == 1 {
                a[ax] = m;
            } else {
                b[ax] = m;
            }
        }
        out.push((a, b));
    }
    out
}

/// Integrate `f` over the box `[lo, hi]`.
///
/// Each panel is compared against the sum over its 2^d children; panels whose
/// discrepancy exceeds their volume share of the global tolerance are split.
pub fn integrate_box<F>(f: F, lo: &[f64], hi: &[f64], cfg: &QuadConfig) -> Result<QuadOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    let d = lo.len();
    if d == 0 || hi.len() != d || cfg.initial_panels.len() != d {
        return Err(Error::InvalidInput("quadrature box dimensions disagree".into()));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Ok(QuadOutcome::default());
    }
    let rule = Rule::new(cfg.order);
    let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mut evals = 0usize;

    let mut stack = Vec::new();
    let mut l1 = 0.0;
    let mut idx = vec![0usize; d];
    'outer: loop {
        let mut a = lo.to_vec();
        let mut b = hi.to_vec();
        for ax in 0..d {
            let p = cfg.initial_panels[ax].max(1);
            let w = (hi[ax] - lo[ax]) / p as f64;
            a[ax] = lo[ax] + w * idx[ax] as f64;
            b[ax] = if idx[ax] + 1 == p { hi[ax] } else { lo[ax] + w * (idx[ax] + 1) as f64 };
        }
        let (v, va) = rule.apply(&f, &a, &b, &mut evals);
        l1 += va;
        stack.push(Panel { lo: a, hi: b, coarse: v, depth: 0 });
        let mut ax = 0;
        loop {
            if ax == d {
                break 'outer;
            }
            idx[ax] += 1;
            if idx[ax] < cfg.initial_panels[ax].max(1) {
                break;
            }
            idx[ax] = 0;
            ax += 1;
        }
    }

    let tol = (cfg.rel_tol * l1).max(cfg.abs_tol);
    let mut value = 0.0;
    let mut err = 0.0;
    let mut unresolved = 0usize;
    // Panels are processed in a fixed order so results are reproducible.
    stack.reverse();
    while let Some(p) = stack.pop() {
        let kids = children(&p.lo, &p.hi);
        let mut fine = 0.0;
        let mut parts = Vec::with_capacity(kids.len());
        for (a, b) in kids {
            let (v, _) = rule.apply(&f, &a, &b, &mut evals);
            fine += v;
            parts.push((a, b, v));
        }
        let diff = (fine - p.coarse).abs();
        let share: f64 = p.lo.iter().zip(&p.hi).map(|(a, b)| b - a).product::<f64>() / volume;
        if diff <= tol * share || diff <= cfg.abs_tol {
            value += fine;
            err += diff;
        } else if p.depth >= cfg.max_depth || evals > cfg.max_evals {
            value += fine;
            err += diff;
            unresolved += 1;
        } else {
            for (a, b, v) in parts.into_iter().rev() {
                stack.push(Panel { lo: a, hi: b, coarse: v, depth: p.depth + 1 });
            }
        }
    }
    if unresolved > 0 && err > tol.max(1e-13 * l1) {
        return Err(Error::Quadrature(format!(
            "{unresolved} panels unresolved after {evals} evaluations; error estimate {err:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(QuadOutcome {
        value,
        error_estimate: err,
        l1_mass: l1,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let cfg = QuadConfig::new(1);
        let r = integrate_box(|x| x[0].powi(5) - 3.0 * x[0] * x[0], &[-1.0], &[2.0], &cfg).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn gaussian_2d() {
        let cfg = QuadConfig::new(2);
        let r = integrate_box(
            |x| (-(x[0] * x[0] + x[1] * x[1])).exp(),
            &[-9.0, -9.0],
            &[9.0, 9.0],
            &cfg,
        )
        .unwrap();
        assert!((r.value - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn refines_a_kink() {
        let mut cfg = QuadConfig::new(1);
        cfg.initial_panels = vec![3];
        let r = integrate_box(|x| x[0].abs().sqrt(), &[-1.0], &[1.0], &cfg).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn empty_box_is_zero() {
        let cfg = QuadConfig::new(1);
        assert_eq!(integrate_box(|_| 1.0, &[1.0], &[1.0], &cfg).unwrap().value, 0.0);
    }
}
