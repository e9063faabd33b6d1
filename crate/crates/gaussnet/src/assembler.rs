//! Assembly of the N-term approximant `s_f = sum_I f_I T_{N_I} psi_I`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::atom::{atom_on_cube, AtomCache, BudgetRule};
use crate::budget::{allocate, AllocationKind, CostAllocation, SmoothnessParams};
use crate::error::{check_dim, Result};
use crate::kernel::GaussianSum;
use crate::wavelet::{synthesize, CoefficientTree, MotherWavelets};

/// Summary of one assembly.
#[derive(Clone, Debug, Serialize)]
pub struct ApproximationReport {
    pub requested: usize,
    pub kind: AllocationKind,
    pub seminorm: f64,
    pub n0: usize,
    pub sigma: f64,
    pub indices: usize,
    pub funded: usize,
    pub terms: usize,
    /// Sum of the integer budgets.
    pub budget_used: usize,
    /// Requested budget left unassigned by the floors.
    pub slack: usize,
    pub funded_by_level: BTreeMap<i32, usize>,
    pub terms_by_level: BTreeMap<i32, usize>,
    /// Sum of `|f_I|` over unfunded indices.
    pub dropped_mass: f64,
    pub min_funded_budget: Option<usize>,
    /// Funded indices whose budget is below `onset_budget`.
    pub funded_below_onset: usize,
    /// Budget above which single atoms are in their asymptotic regime.
    pub onset_budget: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// An assembled approximant together with its report and the allocation behind it.
#[derive(Clone, Debug)]
pub struct Approximation {
    pub sum: GaussianSum,
    pub report: ApproximationReport,
    pub allocation: CostAllocation,
}

/// Reusable assembly context holding the atom cache.
pub struct Assembler<'a> {
    w: &'a MotherWavelets,
    rule: BudgetRule,
    onset: usize,
    cache: AtomCache,
}

impl<'a> Assembler<'a> {
    pub fn new(w: &'a MotherWavelets, rule: BudgetRule) -> Result<Self> {
        rule.validate(w)?;
        let onset = BudgetRule::default_for(w)?.n0;
        Ok(Assembler {
            w,
            rule,
            onset,
            cache: AtomCache::new(),
        })
    }

    pub fn rule(&self) -> &BudgetRule {
        &self.rule
    }

    pub fn cache(&self) -> &AtomCache {
        &self.cache
    }

    /// Allocate `n` Gaussians over `t` and replace every funded wavelet by its atom.
    ///
    /// Unfunded indices are dropped. Leftover budget from the floors is not redistributed.
    pub fn approximate(&self, t: &CoefficientTree, params: &SmoothnessParams, n: usize) -> Result<Approximation> {
        let start = Instant::now();
        check_dim(self.w.dim(), t.dim())?;
        let allocation = allocate(t, params, n, self.rule.n0)?;
        let funded: Vec<_> = allocation.funded().collect();
        let atoms: Vec<Result<GaussianSum>> = funded
            .par_iter()
            .map(|e| {
                atom_on_cube(self.w, &e.index, e.budget, &self.rule, Some(&self.cache))
                    .map(|s| s.scaled(e.coefficient))
            })
            .collect();
        let mut sum = GaussianSum::new(self.w.dim());
        let mut funded_by_level = BTreeMap::new();
        let mut terms_by_level = BTreeMap::new();
        for (e, atom) in funded.iter().zip(atoms) {
            let atom = atom?;
            let j = e.index.cube.level;
            *funded_by_level.entry(j).or_insert(0) += 1;
            *terms_by_level.entry(j).or_insert(0) += atom.len();
            sum.extend(atom)?;
        }
        let budget_used = allocation.budget_sum();
        let min_funded_budget = funded.iter().map(|e| e.budget).min();
        let report = ApproximationReport {
            requested: n,
            kind: allocation.kind,
            seminorm: allocation.seminorm,
            n0: self.rule.n0,
            sigma: self.rule.sigma,
            indices: allocation.entries.len(),
            funded: funded.len(),
            terms: sum.len(),
            budget_used,
            slack: n - budget_used,
            funded_by_level,
            terms_by_level,
            dropped_mass: allocation
                .entries
                .iter()
                .filter(|e| e.budget == 0)
                .fold(0.0, |acc, e| acc + e.coefficient.abs()),
            min_funded_budget,
            funded_below_onset: funded.iter().filter(|e| e.budget < self.onset).count(),
            onset_budget: self.onset,
            elapsed: start.elapsed(),
        };
        if report.funded_below_onset > 0 {
            log::info!(
                "{} funded wavelets have budgets below {} where single-atom rates are not yet asymptotic",
                report.funded_below_onset,
                self.onset
            );
        }
        Ok(Approximation {
            sum,
            report,
            allocation,
        })
    }
}

/// One-shot form of [`Assembler::approximate`].
pub fn approximate(
    t: &CoefficientTree,
    w: &MotherWavelets,
    params: &SmoothnessParams,
    n: usize,
    rule: &BudgetRule,
) -> Result<Approximation> {
    Assembler::new(w, rule.clone())?.approximate(t, params, n)
}

/// `synthesize(t, x) - s(x)`.
pub fn residual(t: &CoefficientTree, w: &MotherWavelets, s: &GaussianSum, x: &[f64]) -> Result<f64> {
    Ok(synthesize(t, w, x)? - s.eval(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::DEFAULT_SIGMA;
    use crate::budget::NormIndex;
    use crate::spectral::DEFAULT_LATTICE_CAP;
    use crate::wavelet::{build_meyer, WaveletIndex};

    fn single(j: i32, k: i64, f: f64) -> CoefficientTree {
        let mut t = CoefficientTree::new(1, (j, j)).unwrap();
        t.insert(WaveletIndex::new(j, vec![k], vec![1]).unwrap(), f).unwrap();
        t
    }

    #[test]
    fn single_wavelet_gets_everything() {
        let w = build_meyer(1, 512).unwrap();
        let rule = BudgetRule::default_for(&w).unwrap();
        let params = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1).unwrap();
        let t = single(0, 0, 1.0);
        let a = approximate(&t, &w, &params, 300, &rule).unwrap();
        assert_eq!(a.allocation.entries[0].budget, 300);
        let idx = WaveletIndex::new(0, vec![0], vec![1]).unwrap();
        let direct = atom_on_cube(&w, &idx, 300, &rule, None).unwrap();
        assert_eq!(a.sum, direct);
        assert!(a.report.terms <= 300);
        assert_eq!(a.report.slack, 0);
    }

    #[test]
    fn tiny_budget_funds_nothing() {
        let w = build_meyer(1, 512).unwrap();
        let rule = BudgetRule::default_for(&w).unwrap();
        let params = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1).unwrap();
        let a = approximate(&single(0, 0, 1.0), &w, &params, rule.n0 - 1, &rule).unwrap();
        assert!(a.sum.is_empty());
        assert_eq!(a.report.funded, 0);
        assert_eq!(a.report.dropped_mass, 1.0);
    }

    #[test]
    fn scaling_the_tree_scales_amplitudes_only() {
        let w = build_meyer(1, 512).unwrap();
        let rule = BudgetRule::new(&w, DEFAULT_SIGMA, 57, DEFAULT_LATTICE_CAP).unwrap();
        let params = SmoothnessParams::new(1.0, NormIndex::Infinity, 1).unwrap();
        let mut t = CoefficientTree::new(1, (-2, 0)).unwrap();
        t.insert(WaveletIndex::new(0, vec![0], vec![1]).unwrap(), 0.8).unwrap();
        t.insert(WaveletIndex::new(-2, vec![1], vec![1]).unwrap(), -0.3).unwrap();
        let a = approximate(&t, &w, &params, 600, &rule).unwrap();
        let b = approximate(&t.scaled(4.0), &w, &params, 600, &rule).unwrap();
        assert_eq!(a.sum.len(), b.sum.len());
        for (x, y) in a.sum.terms().iter().zip(b.sum.terms()) {
            assert_eq!(y.amplitude, 4.0 * x.amplitude);
            assert_eq!(y.center, x.center);
            assert_eq!(y.sigma, x.sigma);
        }
    }

    #[test]
    fn large_budget_single_wavelet_residual() {
        let w = build_meyer(1, 512).unwrap();
        let rule = BudgetRule::default_for(&w).unwrap();
        let params = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1).unwrap();
        let t = single(0, 0, 1.0);
        let a = approximate(&t, &w, &params, 4001, &rule).unwrap();
        let r = residual(&t, &w, &a.sum, &[0.5]).unwrap();
        assert!(r.abs() < 1e-6, "{r}");
        let empty = GaussianSum::new(1);
        assert_eq!(residual(&t, &w, &empty, &[0.5]).unwrap(), synthesize(&t, &w, &[0.5]).unwrap());
    }
}
