//! Gaussian lattice approximants of band-limited functions and of single wavelets.
//!
//! For a band-limited `f` with `f_phi` the function whose transform is `f_hat / phi_hat`,
//! the lattice sum `h^d sum_alpha f_phi(alpha) phi(x - alpha)` reproduces `f` up to an
//! error that decays like `exp(-c/h^2)` as long as `h < pi / R`. Keeping only the
//! centers with `|alpha| <= 1/h` gives about `h^{-2d}` terms.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{GaussianSum, GaussianTerm, EXP_UNDERFLOW};
use crate::spectral::{ball_keys, SpectralFunction, DEFAULT_LATTICE_CAP};
use crate::wavelet::{Gender, MotherWavelets, WaveletIndex};

/// Reference-frame tension of every Gaussian.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// `#{k in Z^d : |k|^2 <= t}`.
pub fn lattice_count(d: usize, t: u64) -> u64 {
    match d {
        0 => 1,
        1 => 2 * t.isqrt() + 1,
        _ => {
            let m = t.isqrt();
            let mut acc = lattice_count(d - 1, t);
            for k in 1..=m {
                acc += 2 * lattice_count(d - 1, t - k * k);
            }
            acc
        }
    }
}

/// A lattice spacing together with the exact number of centers it produces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeChoice {
    pub spacing: f64,
    pub count: usize,
    /// Largest `|k|^2` among the admitted integer offsets.
    pub shell: u64,
}

/// Spacing `h` whose truncated lattice `h Z^d ∩ B(0, 1/h)` has the largest count `<= n`.
///
/// Centers are `h k` with `|k|^2 <= h^{-4}`. With `t` the last admitted shell and `t'`
/// the next occupied one, `h^{-4}` is placed at `(t + t') / 2`, so membership never
/// depends on rounding.
pub fn choose_h(n: usize, d: usize) -> Result<LatticeChoice> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("choose_h needs n >= 1 and d >= 1".into()));
    }
    let n = n as u64;
    // largest t with count(t) <= n
    let mut hi = 1u64;
    while lattice_count(d, hi) <= n {
        hi *= 2;
    }
    let mut lo = 0u64;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if lattice_count(d, mid) <= n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = lo;
    let count = lattice_count(d, t);
    // the smallest m with the same count is the last occupied shell
    let (mut a, mut b) = (0u64, t);
    while a < b {
        let mid = a + (b - a) / 2;
        if lattice_count(d, mid) >= count {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let shell = a;
    let rho2 = (shell as f64 + (t + 1) as f64) / 2.0;
    Ok(LatticeChoice {
        spacing: rho2.powf(-0.25),
        count: count as usize,
        shell,
    })
}

fn check_spacing(f: &SpectralFunction, h: f64) -> Result<()> {
    let limit = PI / f.radius();
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {h}")));
    }
    if h >= limit {
        return Err(Error::Aliasing { h, limit });
    }
    Ok(())
}

fn lattice_sum(
    f_phi: &SpectralFunction,
    sigma: f64,
    h: f64,
    keys: &[Vec<i64>],
) -> Result<GaussianSum> {
    let d = f_phi.dim();
    let values = f_phi.sample_keys(h, keys)?;
    let scale = h.powi(d as i32);
    let mut terms = Vec::with_capacity(keys.len());
    for (k, v) in keys.iter().zip(values) {
        if v == 0.0 {
            continue;
        }
        terms.push(GaussianTerm {
            amplitude: scale * v,
            center: k.iter().map(|&ki| h * ki as f64).collect(),
            sigma,
        });
    }
    GaussianSum::from_terms(d, terms)
}

/// `h^d sum_{alpha in h Z^d} f_phi(alpha) phi(x - alpha)` restricted to centers that
/// can reach the box `[lo, hi]`.
///
/// Centers farther than `sigma sqrt(745)` from the box contribute exactly zero at every
/// point of it in double precision.
pub fn full_approximant(
    f: &SpectralFunction,
    sigma: f64,
    h: f64,
    lo: &[f64],
    hi: &[f64],
    cap: usize,
) -> Result<GaussianSum> {
    check_spacing(f, h)?;
    let d = f.dim();
    check_dim(d, lo.len())?;
    check_dim(d, hi.len())?;
    let f_phi = f.fourier_divide(sigma)?;
    let pad = sigma * (-EXP_UNDERFLOW).sqrt();
    let ranges: Vec<(i64, i64)> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| (((a - pad) / h).floor() as i64, ((b + pad) / h).ceil() as i64))
        .collect();
    let count: u128 = ranges.iter().map(|r| (r.1 - r.0 + 1).max(0) as u128).product();
    if count > cap as u128 {
        return Err(Error::LatticeCap {
            count: usize::try_from(count).unwrap_or(usize::MAX),
            cap,
        });
    }
    let mut keys = Vec::with_capacity(count as usize);
    let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        keys.push(k.clone());
        let mut a = d;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            k[a] += 1;
            if k[a] <= ranges[a].1 {
                break;
            }
            k[a] = ranges[a].0;
        }
    }
    lattice_sum(&f_phi, sigma, h, &keys)
}

/// The truncated approximant with centers `h Z^d ∩ B(0, 1/h)`, in lexicographic order.
pub fn truncated_approximant(f: &SpectralFunction, sigma: f64, h: f64, cap: usize) -> Result<GaussianSum> {
    check_spacing(f, h)?;
    let f_phi = f.fourier_divide(sigma)?;
    let keys = ball_keys(f.dim(), h, 1.0 / h, cap)?;
    lattice_sum(&f_phi, sigma, h, &keys)
}

/// A reference-frame truncated approximant of one mother wavelet.
#[derive(Clone, Debug)]
pub struct AtomApproximation {
    pub gender: Gender,
    pub spacing: f64,
    pub sigma: f64,
    pub sum: GaussianSum,
}

/// Tension, minimum funded budget and lattice cap for wavelet atoms.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRule {
    pub sigma: f64,
    pub n0: usize,
    pub lattice_cap: usize,
}

/// Smallest budget whose lattice spacing is below `h_max` and has at least `3^d` centers.
fn smallest_budget_below(d: usize, h_max: f64) -> Result<usize> {
    let need = 3u64.pow(d as u32);
    let target = h_max.powi(-4);
    let mut shell = 0u64;
    loop {
        let c = lattice_count(d, shell);
        let mut next = shell + 1;
        while lattice_count(d, next) == c {
            next += 1;
        }
        let rho2 = (shell as f64 + next as f64) / 2.0;
        if rho2 > target && c >= need {
            return Ok(c as usize);
        }
        shell = next;
        if shell > 1 << 40 {
            return Err(Error::InvalidInput(format!("no admissible budget for h < {h_max}")));
        }
    }
}

impl BudgetRule {
    /// Validated rule for the wavelet system `w`.
    pub fn new(w: &MotherWavelets, sigma: f64, n0: usize, lattice_cap: usize) -> Result<Self> {
        let rule = BudgetRule { sigma, n0, lattice_cap };
        rule.validate(w)?;
        Ok(rule)
    }

    /// `N0` is the smallest budget with spacing below half of `pi / R` and at least `3^d` centers.
    pub fn default_for(w: &MotherWavelets) -> Result<Self> {
        let n0 = smallest_budget_below(w.dim(), PI / w.band_radius() / 2.0)?;
        Self::new(w, DEFAULT_SIGMA, n0, DEFAULT_LATTICE_CAP)
    }

    /// `N0` is the smallest budget with spacing below `pi / R` and at least `3^d` centers.
    pub fn minimal_for(w: &MotherWavelets) -> Result<Self> {
        let n0 = smallest_budget_below(w.dim(), PI / w.band_radius())?;
        Self::new(w, DEFAULT_SIGMA, n0, DEFAULT_LATTICE_CAP)
    }

    pub fn validate(&self, w: &MotherWavelets) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::InvalidInput("N0 must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {}", self.sigma)));
        }
        let h = choose_h(self.n0, w.dim())?.spacing;
        let limit = PI / w.band_radius();
        if h >= limit {
            return Err(Error::Aliasing { h, limit });
        }
        let exponent = self.sigma * self.sigma * w.band_radius().powi(2) / 4.0;
        if exponent > crate::spectral::CONDITIONING_LIMIT {
            return Err(Error::Conditioning {
                exponent,
                limit: crate::spectral::CONDITIONING_LIMIT,
            });
        }
        Ok(())
    }
}

/// Reference-frame atoms keyed by gender and spacing.
#[derive(Default, Debug)]
pub struct AtomCache {
    entries: RwLock<HashMap<(Gender, u64), Arc<AtomApproximation>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl AtomCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("atom cache").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached `(gender, spacing)` keys, sorted.
    pub fn keys(&self) -> Vec<(Gender, f64)> {
        let mut k: Vec<_> = self
            .entries
            .read()
            .expect("atom cache")
            .keys()
            .map(|(g, h)| (g.clone(), f64::from_bits(*h)))
            .collect();
        k.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        k
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

/// The reference atom for gender `e` at spacing `h`, from `cache` when present.
pub fn reference_atom(
    w: &MotherWavelets,
    e: &Gender,
    h: f64,
    rule: &BudgetRule,
    cache: Option<&AtomCache>,
) -> Result<Arc<AtomApproximation>> {
    let key = (e.clone(), h.to_bits());
    if let Some(c) = cache {
        if let Some(a) = c.entries.read().expect("atom cache").get(&key) {
            c.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(a.clone());
        }
    }
    let sum = truncated_approximant(w.spectral(e)?, rule.sigma, h, rule.lattice_cap)?;
    let atom = Arc::new(AtomApproximation {
        gender: e.clone(),
        spacing: h,
        sigma: rule.sigma,
        sum,
    });
    if let Some(c) = cache {
        c.misses.fetch_add(1, Ordering::Relaxed);
        // a concurrent fill computes the same value, so either copy may win
        c.entries.write().expect("atom cache").entry(key).or_insert_with(|| atom.clone());
    }
    Ok(atom)
}

/// Approximate `psi_{I,e}` with at most `budget` Gaussians.
///
/// The spacing comes from [`choose_h`], the reference approximant carries the `h^d`
/// prefactor and is moved onto the cube by the affine map, so every output tension is
/// `sigma * l(I)`.
pub fn atom_on_cube(
    w: &MotherWavelets,
    idx: &WaveletIndex,
    budget: usize,
    rule: &BudgetRule,
    cache: Option<&AtomCache>,
) -> Result<GaussianSum> {
    check_dim(w.dim(), idx.dim())?;
    if budget < rule.n0 {
        return Err(Error::BelowThreshold { budget, n0: rule.n0 });
    }
    let choice = choose_h(budget, w.dim())?;
    let limit = PI / w.band_radius();
    if choice.spacing >= limit {
        return Err(Error::Aliasing {
            h: choice.spacing,
            limit,
        });
    }
    let atom = reference_atom(w, &idx.gender, choice.spacing, rule, cache)?;
    atom.sum.map_to_cube(&idx.cube.frame())
}

/// Fill a cache with the atoms needed for every gender and every budget in `budgets`.
pub fn precompute_atoms(w: &MotherWavelets, rule: &BudgetRule, budgets: &[usize]) -> Result<AtomCache> {
    let cache = AtomCache::new();
    let mut seen = std::collections::BTreeSet::new();
    for &n in budgets {
        if n < rule.n0 {
            continue;
        }
        let h = choose_h(n, w.dim())?.spacing;
        if seen.insert(h.to_bits()) {
            for e in w.genders() {
                reference_atom(w, &e, h, rule, Some(&cache))?;
            }
        }
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::build_meyer;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_count(1, 0), 1);
        assert_eq!(lattice_count(1, 10_000), 201);
        assert_eq!(lattice_count(2, 1), 5);
        assert_eq!(lattice_count(2, 2), 9);
        assert_eq!(lattice_count(3, 1), 7);
    }

    #[test]
    fn choose_h_examples() {
        let c = choose_h(201, 1).unwrap();
        assert_eq!(c.count, 201);
        let h2 = c.spacing * c.spacing;
        assert!(h2 > 1.0 / 101.0 && h2 <= 1.0 / 100.0, "{h2}");
        let c = choose_h(1, 1).unwrap();
        assert_eq!(c.count, 1);
        assert!(c.spacing > 1.0);
        assert_eq!(choose_h(5, 2).unwrap().count, 5);
        assert_eq!(choose_h(8, 2).unwrap().count, 5);
        assert_eq!(choose_h(9, 2).unwrap().count, 9);
    }

    #[test]
    fn truncated_counts() {
        let f = SpectralFunction::univariate(1.0, 64, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(truncated_approximant(&f, 0.5, 0.1, 1000).unwrap().len(), 201);
        let g = SpectralFunction::from_fn(2, 1.0, 32, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(truncated_approximant(&g, 0.5, 1.0, 1000).unwrap().len(), 5);
        assert!(matches!(
            truncated_approximant(&f, 0.5, 3.2, 1000),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn zero_input_gives_empty_sum() {
        let f = SpectralFunction::univariate(1.0, 64, |_| Complex64::new(0.0, 0.0)).unwrap();
        assert!(full_approximant(&f, 0.5, 0.5, &[-1.0], &[1.0], 1000).unwrap().is_empty());
    }

    #[test]
    fn full_scheme_is_linear() {
        let w = build_meyer(1, 512).unwrap();
        let psi = w.spectral(&Gender(vec![1])).unwrap();
        let a = full_approximant(psi, 0.5, 0.3, &[-2.0], &[2.0], 100_000).unwrap();
        let b = full_approximant(&psi.scaled(2.0), 0.5, 0.3, &[-2.0], &[2.0], 100_000).unwrap();
        for (s, t) in a.terms().iter().zip(b.terms()) {
            assert_eq!(t.amplitude, 2.0 * s.amplitude);
            assert_eq!(t.center, s.center);
        }
    }

    #[test]
    fn default_thresholds() {
        let w1 = build_meyer(1, 512).unwrap();
        let r = BudgetRule::default_for(&w1).unwrap();
        assert_eq!(r.n0, 57);
        assert!(choose_h(r.n0, 1).unwrap().spacing < PI / w1.band_radius() / 2.0);
        assert!(choose_h(r.n0 - 1, 1).unwrap().spacing >= PI / w1.band_radius() / 2.0);
        let m = BudgetRule::minimal_for(&w1).unwrap();
        assert!(m.n0 < r.n0);
        assert!(BudgetRule::new(&w1, 0.5, 3, DEFAULT_LATTICE_CAP).is_err());
    }

    #[test]
    fn atom_on_cube_contract() {
        let w = build_meyer(1, 512).unwrap();
        let rule = BudgetRule::default_for(&w).unwrap();
        let idx = WaveletIndex::new(-2, vec![3], vec![1]).unwrap();
        let s = atom_on_cube(&w, &idx, 201, &rule, None).unwrap();
        assert!(s.len() <= 201);
        let reference = reference_atom(&w, &idx.gender, choose_h(201, 1).unwrap().spacing, &rule, None).unwrap();
        for (t, r) in s.terms().iter().zip(reference.sum.terms()) {
            assert_eq!(t.sigma, 0.25 * rule.sigma);
            assert_eq!(t.center[0], 0.75 + 0.25 * r.center[0]);
            assert_eq!(t.amplitude, r.amplitude);
        }
        assert!(matches!(
            atom_on_cube(&w, &idx, rule.n0 - 1, &rule, None),
            Err(Error::BelowThreshold { .. })
        ));
    }

    #[test]
    fn cache_is_transparent() {
        let w = build_meyer(2, 256).unwrap();
        let rule = BudgetRule::minimal_for(&w).unwrap();
        let budgets = [rule.n0, rule.n0 + 400, rule.n0];
        let cache = precompute_atoms(&w, &rule, &budgets).unwrap();
        assert_eq!(cache.len(), 3 * 2);
        assert_eq!(cache.misses(), 6);
        let idx = WaveletIndex::new(0, vec![1, -1], vec![1, 0]).unwrap();
        let warm = atom_on_cube(&w, &idx, rule.n0 + 400, &rule, Some(&cache)).unwrap();
        let cold = atom_on_cube(&w, &idx, rule.n0 + 400, &rule, None).unwrap();
        assert_eq!(warm, cold);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.len(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn choose_h_is_tight(n in 1usize..5000, d in 1usize..4) {
            let c = choose_h(n, d).unwrap();
            prop_assert!(c.count <= n);
            prop_assert_eq!(ball_keys(d, c.spacing, 1.0 / c.spacing, 10_000_000).unwrap().len(), c.count);
            // the next occupied shell would overshoot the budget
            let mut next = c.shell + 1;
            while lattice_count(d, next) as usize == c.count { next += 1; }
            prop_assert!(lattice_count(d, next) as usize > n);
        }
    }
}
