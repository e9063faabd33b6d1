//! Error measurement on tensor grids, operator-bound sweeps and rate studies.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembler::Assembler;
use crate::atom::{choose_h, full_approximant, truncated_approximant, BudgetRule};
use crate::budget::{AllocationKind, NormIndex, SmoothnessParams};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{GaussianSum, EXP_UNDERFLOW};
use crate::spectral::DEFAULT_LATTICE_CAP;
use crate::wavelet::{CoefficientTree, Gender, MotherWavelets, WaveletIndex};

/// Smallest number of nodes per axis.
pub const MIN_NODES: usize = 64;

/// Uniform tensor grid on a box together with the norm index used on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: Vec<usize>,
    p: NormIndex,
}

impl ErrorGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>, p: NormIndex) -> Result<Self> {
        let d = lo.len();
        if d == 0 {
            return Err(Error::InvalidInput("grid dimension must be positive".into()));
        }
        check_dim(d, hi.len())?;
        check_dim(d, nodes.len())?;
        for a in 0..d {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::InvalidInput(format!("grid axis {a} has empty extent")));
            }
            if nodes[a] < MIN_NODES {
                return Err(Error::InvalidInput(format!(
                    "grid axis {a} has {} nodes, at least {MIN_NODES} are required",
                    nodes[a]
                )));
            }
        }
        Ok(ErrorGrid { lo, hi, nodes, p })
    }

    /// Cube `[-half, half]^d` with the given spacing.
    pub fn centered(d: usize, half: f64, spacing: f64, p: NormIndex) -> Result<Self> {
        let n = ((2.0 * half / spacing).round() as usize + 1).max(MIN_NODES);
        ErrorGrid::new(vec![-half; d], vec![half; d], vec![n; d], p)
    }

    /// Hull of the tree's cubes padded by 8 times the largest side.
    ///
    /// The spacing is `l_min / 4` for finite `p` and `l_min / 32` for `p = inf`, divided by `refine`.
    pub fn for_tree(t: &CoefficientTree, p: NormIndex, refine: usize) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::Degenerate("cannot size a grid for an empty tree".into()));
        }
        let d = t.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
        for (idx, _) in t.iter() {
            let s = idx.cube.side();
            lmin = lmin.min(s);
            lmax = lmax.max(s);
            for a in 0..d {
                let c = s * idx.cube.offset[a] as f64;
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c + s);
            }
        }
        let per = if p.is_infinite() { 32.0 } else { 4.0 };
        let spacing = lmin / per / refine.max(1) as f64;
        let mut nodes = Vec::with_capacity(d);
        for a in 0..d {
            lo[a] -= 8.0 * lmax;
            hi[a] += 8.0 * lmax;
            nodes.push((((hi[a] - lo[a]) / spacing).ceil() as usize + 1).max(MIN_NODES));
        }
        ErrorGrid::new(lo, hi, nodes, p)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn p(&self) -> NormIndex {
        self.p
    }

    pub fn with_p(&self, p: NormIndex) -> ErrorGrid {
        ErrorGrid { p, ..self.clone() }
    }

    /// Same box with `factor` times as many intervals per axis.
    pub fn refined(&self, factor: usize) -> ErrorGrid {
        let nodes = self.nodes.iter().map(|&n| (n - 1) * factor.max(1) + 1).collect();
        ErrorGrid { nodes, ..self.clone() }
    }

    pub fn step(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / (self.nodes[a] - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    #[inline]
    fn coord(&self, a: usize, i: usize) -> f64 {
        self.lo[a] + self.step(a) * i as f64
    }

    pub fn axis(&self, a: usize) -> Vec<f64> {
        (0..self.nodes[a]).map(|i| self.coord(a, i)).collect()
    }

    /// Node with flat index `flat`; the last axis varies fastest.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        let mut rem = flat;
        for a in (0..d).rev() {
            x[a] = self.coord(a, rem % self.nodes[a]);
            rem /= self.nodes[a];
        }
        x
    }

    pub fn sample_fn<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|i| f(&self.point(i))).collect()
    }

    /// Run `fill(i0_start, i0_end, slab)` over contiguous slabs of the first axis in parallel.
    fn scatter<F>(&self, fill: F) -> Vec<f64>
    where
        F: Fn(usize, usize, &mut [f64]) + Sync,
    {
        let stride: usize = self.nodes[1..].iter().product();
        let n0 = self.nodes[0];
        let blocks = n0.min(256);
        let per = n0.div_ceil(blocks);
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(per * stride).enumerate().for_each(|(b, slab)| {
            let start = b * per;
            let end = (start + per).min(n0);
            fill(start, end, slab);
        });
        out
    }

    /// Index range of nodes on axis `a` within `[x0, x1]`, padded by one node.
    fn index_range(&self, a: usize, x0: f64, x1: f64) -> Option<(usize, usize)> {
        let h = self.step(a);
        let i0 = ((x0 - self.lo[a]) / h).floor() - 1.0;
        let i1 = ((x1 - self.lo[a]) / h).ceil() + 1.0;
        let last = (self.nodes[a] - 1) as f64;
        if i1 < 0.0 || i0 > last {
            return None;
        }
        Some((i0.max(0.0) as usize, i1.min(last) as usize))
    }

    /// Values of `s` at every node. Bit-identical to `s.eval` at [`ErrorGrid::point`].
    pub fn sample_sum(&self, s: &GaussianSum) -> Result<Vec<f64>> {
        check_dim(self.dim(), s.dim())?;
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|a| self.axis(a)).collect();
        // at (746 sigma^2) on one axis the exponent is already below the underflow cut
        let reach = (1.0 - EXP_UNDERFLOW).sqrt();
        Ok(self.scatter(|b0, b1, slab| {
            let mut ranges = vec![(0usize, 0usize); d];
            let mut sq: Vec<Vec<f64>> = vec![Vec::new(); d];
            'terms: for term in s.terms() {
                let r = term.sigma * reach;
                for a in 0..d {
                    let c = term.center[a];
                    match self.index_range(a, c - r, c + r) {
                        Some(mut rg) => {
                            if a == 0 {
                                rg.0 = rg.0.max(b0);
                                rg.1 = rg.1.min(b1 - 1);
                                if rg.0 > rg.1 {
                                    continue 'terms;
                                }
                            }
                            ranges[a] = rg;
                            sq[a].clear();
                            sq[a].extend(axes[a][rg.0..=rg.1].iter().map(|x| {
                                let t = x - c;
                                t * t
                            }));
                        }
                        None => continue 'terms,
                    }
                }
                let s2 = term.sigma * term.sigma;
                for_each_multi(&ranges, |ix| {
                    let mut r2 = 0.0;
                    for a in 0..d {
                        r2 += sq[a][ix[a] - ranges[a].0];
                    }
                    let e = -r2 / s2;
                    if e >= EXP_UNDERFLOW {
                        let mut flat = ix[0] - b0;
                        for a in 1..d {
                            flat = flat * self.nodes[a] + ix[a];
                        }
                        slab[flat] += term.amplitude * e.exp();
                    }
                });
            }
        }))
    }

    /// Values of `sum_I f_I psi_I` at every node, matching [`crate::wavelet::synthesize`].
    pub fn sample_tree(&self, t: &CoefficientTree, w: &MotherWavelets) -> Result<Vec<f64>> {
        check_dim(self.dim(), t.dim())?;
        check_dim(self.dim(), w.dim())?;
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|a| self.axis(a)).collect();
        let entries: Vec<(&WaveletIndex, f64)> = t.iter().collect();
        let win = w.window();
        Ok(self.scatter(|b0, b1, slab| {
            let mut ranges = vec![(0usize, 0usize); d];
            let mut vals: Vec<Vec<f64>> = vec![Vec::new(); d];
            'entries: for (idx, f) in &entries {
                let s = idx.cube.side();
                for a in 0..d {
                    let c = s * idx.cube.offset[a] as f64;
                    match self.index_range(a, c - s * win, c + s * win) {
                        Some(mut rg) => {
                            if a == 0 {
                                rg.0 = rg.0.max(b0);
                                rg.1 = rg.1.min(b1 - 1);
                                if rg.0 > rg.1 {
                                    continue 'entries;
                                }
                            }
                            ranges[a] = rg;
                            let b = idx.gender.0[a];
                            vals[a].clear();
                            vals[a].extend(axes[a][rg.0..=rg.1].iter().map(|x| w.profile(b, (x - c) / s)));
                        }
                        None => continue 'entries,
                    }
                }
                for_each_multi(&ranges, |ix| {
                    let mut v = 1.0;
                    for a in 0..d {
                        v *= vals[a][ix[a] - ranges[a].0];
                    }
                    let mut flat = ix[0] - b0;
                    for a in 1..d {
                        flat = flat * self.nodes[a] + ix[a];
                    }
                    slab[flat] += f * v;
                });
            }
        }))
    }

    /// Trapezoid `L_p` norm of nodal values, or their maximum modulus for `p = inf`.
    pub fn norm(&self, values: &[f64]) -> f64 {
        self.norm_with(values, self.p)
    }

    pub fn norm_with(&self, values: &[f64], p: NormIndex) -> f64 {
        match p {
            NormIndex::Infinity => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            NormIndex::Finite(p) => {
                let d = self.dim();
                let weights: Vec<Vec<f64>> = (0..d)
                    .map(|a| {
                        let h = self.step(a);
                        let n = self.nodes[a];
                        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
                    })
                    .collect();
                let mut acc = 0.0;
                for (flat, v) in values.iter().enumerate() {
                    let mut wt = 1.0;
                    let mut rem = flat;
                    for a in (0..d).rev() {
                        wt *= weights[a][rem % self.nodes[a]];
                        rem /= self.nodes[a];
                    }
                    acc += wt * v.abs().powf(p);
                }
                acc.powf(1.0 / p)
            }
        }
    }
}

fn for_each_multi<F: FnMut(&[usize])>(ranges: &[(usize, usize)], mut f: F) {
    let d = ranges.len();
    let mut ix: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&ix);
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            ix[a] += 1;
            if ix[a] <= ranges[a].1 {
                break;
            }
            ix[a] = ranges[a].0;
        }
    }
}

/// `|| f - s ||_p` over the grid, with `f` the synthesis of `t`.
pub fn lp_error(t: &CoefficientTree, w: &MotherWavelets, s: &GaussianSum, grid: &ErrorGrid) -> Result<f64> {
    let target = grid.sample_tree(t, w)?;
    let approx = grid.sample_sum(s)?;
    let diff: Vec<f64> = target.iter().zip(&approx).map(|(a, b)| a - b).collect();
    Ok(grid.norm(&diff))
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of `ln y` from the line.
    pub residual: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Study("a log-log fit needs at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Study("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Study("log-log fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Which lattice scheme an operator sweep exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// All lattice centers, compared on a fixed box.
    Full,
    /// Centers in `B(0, 1/h)`, compared on a fixed box.
    Truncated,
    /// Truncated, with weighted error `|err(x)| (1 + |x|)^k / h^k` on `|x| <= 4/h`.
    Localized,
}

/// Grid and tension used by the operator sweeps.
#[derive(Clone, Debug, Serialize)]
pub struct SweepSettings {
    pub sigma: f64,
    /// Half-width of the comparison box for full and truncated sweeps.
    pub half_width: f64,
    pub spacing: f64,
    pub lattice_cap: usize,
}

impl SweepSettings {
    pub fn for_dim(d: usize) -> Self {
        SweepSettings {
            sigma: crate::atom::DEFAULT_SIGMA,
            half_width: 20.0,
            spacing: if d == 1 { 1.0 / 64.0 } else { 1.0 / 8.0 },
            lattice_cap: DEFAULT_LATTICE_CAP,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub terms: usize,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub gender: Vec<u8>,
    pub k: u32,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln error` against `ln h`.
    pub slope: f64,
    /// Slopes between consecutive rows.
    pub pair_slopes: Vec<f64>,
}

/// `psi_e` on every grid node, by direct spectral evaluation of each factor.
fn mother_on_grid(w: &MotherWavelets, e: &Gender, grid: &ErrorGrid) -> Vec<f64> {
    let d = grid.dim();
    let per_axis: Vec<Vec<f64>> = (0..d)
        .map(|a| grid.axis(a).par_iter().map(|&x| w.profile_direct(e.0[a], x)).collect())
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut v = 1.0;
            for a in (0..d).rev() {
                v *= per_axis[a][rem % grid.nodes[a]];
                rem /= grid.nodes[a];
            }
            v
        })
        .collect()
}

fn sup_error(reference: &[f64], approx: &[f64]) -> f64 {
    reference.iter().zip(approx).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Errors of the lattice approximants of `psi_e` over a list of spacings.
pub fn operator_bound_sweep(
    w: &MotherWavelets,
    e: &Gender,
    kind: SweepKind,
    hs: &[f64],
    k: u32,
    settings: &SweepSettings,
) -> Result<SweepTable> {
    let d = w.dim();
    let f = w.spectral(e)?;
    if hs.len() < 2 {
        return Err(Error::InvalidInput("a sweep needs at least two spacings".into()));
    }
    let limit = std::f64::consts::PI / f.radius();
    if let Some(&h) = hs.iter().find(|&&h| !(h > 0.0) || h >= limit) {
        return Err(Error::Aliasing { h, limit });
    }
    let fixed = ErrorGrid::centered(d, settings.half_width, settings.spacing, NormIndex::Infinity)?;
    let fixed_ref = match kind {
        SweepKind::Localized => Vec::new(),
        _ => mother_on_grid(w, e, &fixed),
    };
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let row = match kind {
            SweepKind::Full => {
                let s = full_approximant(f, settings.sigma, h, fixed.lo(), fixed.hi(), settings.lattice_cap)?;
                let err = sup_error(&fixed_ref, &fixed.sample_sum(&s)?);
                SweepRow {
                    h,
                    terms: s.len(),
                    error: err,
                }
            }
            SweepKind::Truncated => {
                let s = truncated_approximant(f, settings.sigma, h, settings.lattice_cap)?;
                let err = sup_error(&fixed_ref, &fixed.sample_sum(&s)?);
                SweepRow {
                    h,
                    terms: s.len(),
                    error: err,
                }
            }
            SweepKind::Localized => {
                let s = truncated_approximant(f, settings.sigma, h, settings.lattice_cap)?;
                let grid = ErrorGrid::centered(d, 4.0 / h, settings.spacing, NormIndex::Infinity)?;
                let reference = mother_on_grid(w, e, &grid);
                let approx = grid.sample_sum(&s)?;
                let hk = h.powi(k as i32);
                let mut worst = 0.0f64;
                for (i, (a, b)) in reference.iter().zip(&approx).enumerate() {
                    let x = grid.point(i);
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r <= 4.0 / h {
                        worst = worst.max((a - b).abs() * (1.0 + r).powi(k as i32) / hk);
                    }
                }
                SweepRow {
                    h,
                    terms: s.len(),
                    error: worst,
                }
            }
        };
        log::debug!("{kind:?} sweep h = {h}: {} terms, error {:.3e}", row.terms, row.error);
        rows.push(row);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error.max(f64::MIN_POSITIVE)).collect();
    let slope = fit_loglog(&xs, &ys)?.slope;
    let pair_slopes = rows
        .windows(2)
        .map(|p| (p[0].error.max(f64::MIN_POSITIVE).ln() - p[1].error.max(f64::MIN_POSITIVE).ln()) / (p[0].h.ln() - p[1].h.ln()))
        .collect();
    Ok(SweepTable {
        kind,
        gender: e.0.clone(),
        k,
        rows,
        slope,
        pair_slopes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomSweepRow {
    pub n: usize,
    pub h: f64,
    pub terms: usize,
    pub error: f64,
}

/// Sup errors of budgeted reference atoms against `N`.
#[derive(Clone, Debug, Serialize)]
pub struct AtomSweep {
    pub gender: Vec<u8>,
    pub rows: Vec<AtomSweepRow>,
    /// Least-squares slope of `ln error` against `ln N`.
    pub slope: f64,
}

pub fn atom_budget_sweep(
    w: &MotherWavelets,
    e: &Gender,
    ns: &[usize],
    settings: &SweepSettings,
) -> Result<AtomSweep> {
    let d = w.dim();
    let f = w.spectral(e)?;
    let grid = ErrorGrid::centered(d, settings.half_width, settings.spacing, NormIndex::Infinity)?;
    let reference = mother_on_grid(w, e, &grid);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let h = choose_h(n, d)?.spacing;
        let s = truncated_approximant(f, settings.sigma, h, settings.lattice_cap)?;
        rows.push(AtomSweepRow {
            n,
            h,
            terms: s.len(),
            error: sup_error(&reference, &grid.sample_sum(&s)?),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = fit_loglog(&xs, &ys)?.slope;
    Ok(AtomSweep {
        gender: e.0.clone(),
        rows,
        slope,
    })
}

/// Outcome of one bound check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Every consecutive drop beats `min_slope` in `ln h` until the error reaches `floor`.
pub fn check_full(table: &SweepTable, min_slope: f64, floor: f64) -> Check {
    let mut worst = f64::INFINITY;
    for (i, s) in table.pair_slopes.iter().enumerate() {
        if table.rows[i].error <= floor {
            break;
        }
        if table.rows[i + 1].error <= floor {
            continue;
        }
        worst = worst.min(*s);
    }
    let errors: Vec<String> = table.rows.iter().map(|r| format!("{:.2e}", r.error)).collect();
    Check {
        name: "full".into(),
        passed: worst >= min_slope,
        value: worst,
        threshold: min_slope,
        detail: format!("errors [{}]", errors.join(", ")),
    }
}

/// Fitted slope at least `k - 0.5`.
pub fn check_truncated(table: &SweepTable, k: u32) -> Check {
    let threshold = k as f64 - 0.5;
    Check {
        name: format!("truncated k={k}"),
        passed: table.slope >= threshold,
        value: table.slope,
        threshold,
        detail: format!("pair slopes {:?}", round3(&table.pair_slopes)),
    }
}

/// Weighted errors vary by less than `max_ratio` across the sweep.
pub fn check_localized(table: &SweepTable, max_ratio: f64) -> Check {
    let hi = table.rows.iter().fold(0.0f64, |m, r| m.max(r.error));
    let lo = table.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.error));
    let ratio = hi / lo;
    Check {
        name: format!("localized k={}", table.k),
        passed: ratio < max_ratio,
        value: ratio,
        threshold: max_ratio,
        detail: format!("weighted sup in [{lo:.3e}, {hi:.3e}]"),
    }
}

/// Fitted exponent in `N` at most `-k / (2d) + 0.25`.
pub fn check_atom(sweep: &AtomSweep, k: u32, d: usize) -> Check {
    let threshold = -(k as f64) / (2.0 * d as f64) + 0.25;
    Check {
        name: format!("atom budget k={k}"),
        passed: sweep.slope <= threshold,
        value: sweep.slope,
        threshold,
        detail: format!(
            "errors [{}]",
            sweep.rows.iter().map(|r| format!("{}:{:.2e}", r.n, r.error)).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn round3(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

/// One measured point of a rate study.
#[derive(Clone, Debug, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub terms: usize,
    pub funded: usize,
    pub error: f64,
    pub seminorm: f64,
    /// `error / (seminorm N^{-s/d})`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub kind: AllocationKind,
    pub s: f64,
    pub d: usize,
    pub p: NormIndex,
    pub points: Vec<RatePoint>,
    /// Budgets skipped because nothing was funded.
    pub excluded: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Grid energy of the target over its coefficient energy.
    pub coverage: f64,
    pub grid_nodes: Vec<usize>,
}

impl RateFit {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["N", "terms", "error", "seminorm", "ratio"])?;
        for p in &self.points {
            wr.write_record([
                p.n.to_string(),
                p.terms.to_string(),
                format!("{:e}", p.error),
                format!("{:e}", p.seminorm),
                format!("{:e}", p.ratio),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Approximate `t` at every budget in `ns`, measure the error on `grid` and fit the rate.
pub fn rate_study(
    t: &CoefficientTree,
    w: &MotherWavelets,
    params: &SmoothnessParams,
    ns: &[usize],
    rule: &BudgetRule,
    grid: &ErrorGrid,
) -> Result<RateFit> {
    if ns.len() < 4 {
        return Err(Error::Study(format!("a rate study needs at least 4 budgets, got {}", ns.len())));
    }
    if ns.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Study("budgets must be strictly increasing".into()));
    }
    let asm = Assembler::new(w, rule.clone())?;
    let target = grid.sample_tree(t, w)?;
    let energy: f64 = t.iter().map(|(idx, f)| f * f * idx.cube.volume()).sum();
    let coverage = grid.norm_with(&target, NormIndex::Finite(2.0)).powi(2) / energy;
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &n in ns {
        let a = asm.approximate(t, params, n)?;
        if a.report.funded == 0 {
            log::warn!("budget {n} funds no wavelet and is left out of the fit");
            excluded.push(n);
            continue;
        }
        let approx = grid.sample_sum(&a.sum)?;
        let diff: Vec<f64> = target.iter().zip(&approx).map(|(x, y)| x - y).collect();
        let error = grid.norm(&diff);
        let seminorm = a.report.seminorm;
        points.push(RatePoint {
            n,
            terms: a.report.terms,
            funded: a.report.funded,
            error,
            seminorm,
            ratio: error / (seminorm * (n as f64).powf(-params.s / params.d as f64)),
        });
    }
    if points.len() < 4 {
        return Err(Error::Study(format!(
            "only {} budgets fund any wavelet, at least 4 are needed",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.error > 0.0)) {
        return Err(Error::Study("a measured error is zero, no rate can be fitted".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error).collect();
    let fit = fit_loglog(&xs, &ys)?;
    Ok(RateFit {
        kind: params.kind(),
        s: params.s,
        d: params.d,
        p: grid.p(),
        points,
        excluded,
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        coverage,
        grid_nodes: grid.nodes().to_vec(),
    })
}

/// Seeded tree on `[0, 2^{jmax}]^d` with `|f_I| = |I|^{s/d + 1/2} u_I`, `u_I` uniform in
/// `[1/2, 1]` and signs alternating in canonical order.
///
/// Every cube of every level is populated unless `per_level` caps the count, in which
/// case that many cubes per level are drawn without replacement.
pub fn make_synthetic_tree(
    d: usize,
    s: f64,
    levels: (i32, i32),
    per_level: Option<usize>,
    seed: u64,
) -> Result<CoefficientTree> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("smoothness must be positive, got {s}")));
    }
    let (jmin, jmax) = levels;
    if jmin > jmax {
        return Err(Error::InvalidInput(format!("empty level range [{jmin}, {jmax}]")));
    }
    let mut tree = CoefficientTree::new(d, levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genders = Gender::all(d);
    let mut sign = 1.0;
    for j in (jmin..=jmax).rev() {
        let side = 1u64
            .checked_shl((jmax - j) as u32)
            .ok_or_else(|| Error::InvalidInput("level range too wide".into()))?;
        let count = side
            .checked_pow(d as u32)
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| Error::InvalidInput("level population too large".into()))? as usize;
        let mut flats: Vec<usize> = match per_level {
            Some(m) if m < count => sample(&mut rng, count, m).into_vec(),
            _ => (0..count).collect(),
        };
        flats.sort_unstable();
        let weight = 2f64.powi(j).powf(d as f64 * (s / d as f64 + 0.5));
        for flat in flats {
            let mut rem = flat as u64;
            let mut k = vec![0i64; d];
            for a in (0..d).rev() {
                k[a] = (rem % side) as i64;
                rem /= side;
            }
            for g in &genders {
                let u: f64 = rng.random_range(0.5..=1.0);
                let idx = WaveletIndex::new(j, k.clone(), g.0.clone())?;
                tree.insert(idx, sign * weight * u)?;
                sign = -sign;
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GaussianTerm;
    use crate::wavelet::{build_meyer, synthesize};
    use proptest::prelude::*;

    fn grid1(lo: f64, hi: f64, n: usize, p: NormIndex) -> ErrorGrid {
        ErrorGrid::new(vec![lo], vec![hi], vec![n], p).unwrap()
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(ErrorGrid::new(vec![0.0], vec![1.0], vec![63], NormIndex::Infinity).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let w = build_meyer(1, 512).unwrap();
        let t = make_synthetic_tree(1, 1.0, (-2, 0), None, 3).unwrap();
        let g = grid1(-5.0, 6.0, 200, NormIndex::Finite(2.0));
        let a = g.sample_tree(&t, &w).unwrap();
        let b = g.sample_tree(&t, &w).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert_eq!(g.norm(&diff), 0.0);
    }

    #[test]
    fn tree_scatter_matches_synthesize() {
        let w = build_meyer(1, 512).unwrap();
        let t = make_synthetic_tree(1, 1.0, (-3, 0), None, 9).unwrap();
        let g = grid1(-10.0, 11.0, 333, NormIndex::Infinity);
        let v = g.sample_tree(&t, &w).unwrap();
        for i in (0..g.len()).step_by(7) {
            assert_eq!(v[i], synthesize(&t, &w, &g.point(i)).unwrap());
        }
    }

    #[test]
    fn tree_scatter_matches_synthesize_2d() {
        let w = build_meyer(2, 256).unwrap();
        let t = make_synthetic_tree(2, 1.0, (-1, 0), None, 9).unwrap();
        let g = ErrorGrid::new(vec![-3.0, -2.0], vec![4.0, 3.5], vec![70, 64], NormIndex::Infinity).unwrap();
        let v = g.sample_tree(&t, &w).unwrap();
        for i in (0..g.len()).step_by(37) {
            assert_eq!(v[i], synthesize(&t, &w, &g.point(i)).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sum_scatter_is_bit_identical(
            terms in prop::collection::vec((-2.0f64..2.0, -3.0f64..3.0, -3.0f64..3.0, 0.05f64..1.5), 1..12),
            n in 64usize..90,
        ) {
            let s = GaussianSum::from_terms(
                2,
                terms.iter().map(|&(a, x, y, sg)| GaussianTerm::new(a, vec![x, y], sg).unwrap()).collect(),
            ).unwrap();
            let g = ErrorGrid::new(vec![-4.0, -3.5], vec![3.0, 4.0], vec![n, 64], NormIndex::Infinity).unwrap();
            let v = g.sample_sum(&s).unwrap();
            for i in (0..g.len()).step_by(11) {
                prop_assert_eq!(v[i], s.eval(&g.point(i)).unwrap());
            }
        }
    }

    #[test]
    fn trapezoid_norm_of_a_gaussian() {
        let s = GaussianSum::from_terms(1, vec![GaussianTerm::new(1.0, vec![0.3], 0.7).unwrap()]).unwrap();
        let g = grid1(-10.0, 10.0, 2001, NormIndex::Finite(2.0));
        let v = g.sample_sum(&s).unwrap();
        // int exp(-2 x^2 / sigma^2) = sigma sqrt(pi / 2)
        let want = (0.7 * (std::f64::consts::PI / 2.0).sqrt()).sqrt();
        assert!((g.norm(&v) - want).abs() < 1e-12);
        assert_eq!(g.norm_with(&v, NormIndex::Infinity), v.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn sup_dominates_normalized_l2() {
        let w = build_meyer(1, 512).unwrap();
        for seed in 0..5 {
            let t = make_synthetic_tree(1, 1.0, (-2, 0), Some(2), seed).unwrap();
            let g = grid1(-6.0, 7.0, 500, NormIndex::Finite(2.0));
            let v = g.sample_tree(&t, &w).unwrap();
            let l2 = g.norm(&v) / g.volume().sqrt();
            assert!(g.norm_with(&v, NormIndex::Infinity) >= l2);
        }
    }

    #[test]
    fn lp_increase_toward_sup() {
        let w = build_meyer(1, 512).unwrap();
        let t = make_synthetic_tree(1, 1.0, (-2, 0), None, 1).unwrap();
        let g = grid1(-6.0, 7.0, 1000, NormIndex::Infinity);
        let v = g.sample_tree(&t, &w).unwrap();
        let vol = g.volume();
        let normalized: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|&p| g.norm_with(&v, NormIndex::Finite(p)) / vol.powf(1.0 / p))
            .collect();
        let sup = g.norm(&v);
        assert!(normalized[0] <= normalized[1] * (1.0 + 1e-3));
        assert!(normalized[1] <= normalized[2] * (1.0 + 1e-3));
        assert!(normalized[2] <= sup * (1.0 + 1e-3));
    }

    #[test]
    fn refinement_is_stable() {
        let w = build_meyer(1, 512).unwrap();
        let t = make_synthetic_tree(1, 1.0, (-2, 0), None, 4).unwrap();
        let g = grid1(-8.0, 9.0, 513, NormIndex::Finite(2.0));
        let a = g.norm(&g.sample_tree(&t, &w).unwrap());
        let r = g.refined(2);
        let b = r.norm(&r.sample_tree(&t, &w).unwrap());
        assert!((a - b).abs() < 0.01 * b);
    }

    #[test]
    fn synthetic_tree_is_seeded() {
        let a = make_synthetic_tree(1, 1.0, (-4, 0), Some(3), 11).unwrap();
        let b = make_synthetic_tree(1, 1.0, (-4, 0), Some(3), 11).unwrap();
        let c = make_synthetic_tree(1, 1.0, (-4, 0), Some(3), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 1 + 2 + 3 + 3 + 3);
    }

    #[test]
    fn smoother_trees_decay_faster() {
        let levels = (-5, 0);
        let ratios = |s: f64| {
            let t = make_synthetic_tree(1, s, levels, None, 2).unwrap();
            let mut by: Vec<f64> = Vec::new();
            for j in levels.0..=levels.1 {
                let m = t
                    .by_level()
                    .get(&j)
                    .map(|v| v.iter().fold(0.0f64, |m, (_, f)| m.max(f.abs())))
                    .unwrap();
                by.push(m);
            }
            by
        };
        let r1 = ratios(1.0);
        let r2 = ratios(2.0);
        for j in 0..r1.len() - 1 {
            assert!(r2[j] / r2[j + 1] < r1[j] / r1[j + 1]);
        }
    }

    #[test]
    fn loglog_fit_recovers_power() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn sweep_rejects_aliasing_spacings() {
        let w = build_meyer(1, 512).unwrap();
        let e = Gender::new(vec![1]).unwrap();
        let st = SweepSettings::for_dim(1);
        let r = operator_bound_sweep(&w, &e, SweepKind::Truncated, &[0.5, 0.4, 0.3, 0.25], 4, &st);
        assert!(matches!(r, Err(Error::Aliasing { .. })));
    }

    #[test]
    fn study_needs_four_budgets() {
        let w = build_meyer(1, 512).unwrap();
        let t = make_synthetic_tree(1, 1.0, (-1, 0), None, 0).unwrap();
        let params = SmoothnessParams::new(1.0, NormIndex::Finite(2.0), 1).unwrap();
        let rule = BudgetRule::default_for(&w).unwrap();
        let g = ErrorGrid::for_tree(&t, NormIndex::Finite(2.0), 1).unwrap();
        assert!(matches!(
            rate_study(&t, &w, &params, &[100, 200, 400], &rule, &g),
            Err(Error::Study(_))
        ));
    }
}
