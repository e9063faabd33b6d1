//! Smoothness seminorms of coefficient trees and the cost rules that split a budget.
//!
//! For `L_p` targets (`p < inf`) the Triebel–Lizorkin rule is used, with
//! `1/tau = 1/p + s/d` and `1/q = 1 + s/d`. For `L_inf` the Besov rule is used, with
//! `tau = d/s` and the same `q`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{CoefficientTree, Cube, WaveletIndex};

/// Relative slack added before flooring costs.
const FLOOR_SLACK: f64 = 1e-12;

/// A norm index `p` in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormIndex {
    Finite(f64),
    Infinity,
}

impl NormIndex {
    pub fn from_f64(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(NormIndex::Infinity)
        } else if p >= 1.0 && p.is_finite() {
            Ok(NormIndex::Finite(p))
        } else {
            Err(Error::InvalidInput(format!("norm index must lie in [1, inf], got {p}")))
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            NormIndex::Finite(p) => *p,
            NormIndex::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, NormIndex::Infinity)
    }
}

impl std::fmt::Display for NormIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormIndex::Finite(p) => write!(f, "{p}"),
            NormIndex::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for NormIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormIndex::Finite(p) => s.serialize_f64(*p),
            NormIndex::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Num(p) => p,
            Raw::Str(s) if s == "inf" || s == "infinity" => f64::INFINITY,
            Raw::Str(s) => return Err(serde::de::Error::custom(format!("unknown norm index {s:?}"))),
        };
        NormIndex::from_f64(p).map_err(serde::de::Error::custom)
    }
}

/// Which cost rule an allocation was made with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AllocationKind {
    #[serde(rename = "triebel-lizorkin")]
    TriebelLizorkin,
    #[serde(rename = "besov")]
    Besov,
}

/// Smoothness `s`, norm index `p`, dimension `d` and the derived exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothnessParams {
    pub s: f64,
    pub p: NormIndex,
    pub d: usize,
    pub tau: f64,
    pub q: f64,
}

impl SmoothnessParams {
    pub fn new(s: f64, p: NormIndex, d: usize) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput(format!("smoothness must be positive, got {s}")));
        }
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let r = s / d as f64;
        let q = 1.0 / (1.0 + r);
        let tau = match p {
            NormIndex::Finite(p) => 1.0 / (1.0 / p + r),
            NormIndex::Infinity => 1.0 / r,
        };
        // q <= tau is used by the budget-sum bound, and |I|^q = |I|^{1 - qs/d}
        assert!(q <= tau * (1.0 + 1e-15), "q = {q} exceeds tau = {tau}");
        assert!((1.0 - q * r - q).abs() < 1e-12, "exponent identity fails for s/d = {r}");
        Ok(SmoothnessParams { s, p, d, tau, q })
    }

    pub fn kind(&self) -> AllocationKind {
        if self.p.is_infinite() {
            AllocationKind::Besov
        } else {
            AllocationKind::TriebelLizorkin
        }
    }
}

/// `|Q|^{-sq/d} sum_e |f_{Q,e}|^q` for every cube of the tree.
pub fn cube_weights(t: &CoefficientTree, s: f64, q: f64) -> HashMap<Cube, f64> {
    let mut out: HashMap<Cube, f64> = HashMap::new();
    for (idx, f) in t.iter() {
        let scale = (-(idx.cube.level as f64) * s * q).exp2();
        *out.entry(idx.cube.clone()).or_insert(0.0) += scale * f.abs().powf(q);
    }
    out
}

fn ancestor_sum(weights: &HashMap<Cube, f64>, cube: &Cube, top: i32) -> f64 {
    let mut acc = 0.0;
    let mut c = cube.clone();
    loop {
        if let Some(w) = weights.get(&c) {
            acc += w;
        }
        if c.level >= top {
            return acc;
        }
        c = c.parent();
    }
}

/// `m_{s,q,I} = (sum_{I' ⊇ I} |I'|^{-sq/d} sum_e |f_{I',e}|^q)^{1/q}`, the cube itself included.
pub fn partial_maximal(t: &CoefficientTree, s: f64, q: f64, cube: &Cube) -> f64 {
    let weights = cube_weights(t, s, q);
    let top = t.level_range().1;
    ancestor_sum(&weights, cube, top).powf(1.0 / q)
}

/// `|f|_F = || M_{s,q} f ||_tau`, integrated exactly.
///
/// `M^q` is constant on each support cube minus its nearest support descendants, so
/// the integral is a finite sum over the forest of support cubes.
pub fn tl_seminorm(t: &CoefficientTree, s: f64, q: f64, tau: f64) -> f64 {
    let weights = cube_weights(t, s, q);
    if weights.is_empty() {
        return 0.0;
    }
    let top = t.level_range().1;
    let cubes: HashSet<&Cube> = weights.keys().collect();
    let mut ordered: Vec<&Cube> = cubes.iter().copied().collect();
    ordered.sort();
    // accumulated weight along the chain of support ancestors, and covered child volume
    let mut acc: HashMap<&Cube, f64> = HashMap::new();
    let mut covered: HashMap<&Cube, f64> = HashMap::new();
    for c in &ordered {
        let mut parent = None;
        let mut a = c.parent();
        while a.level <= top {
            if let Some(p) = cubes.get(&a) {
                parent = Some(*p);
                break;
            }
            a = a.parent();
        }
        let base = parent.map(|p| acc[p]).unwrap_or(0.0);
        acc.insert(c, base + weights[*c]);
        if let Some(p) = parent {
            *covered.entry(p).or_insert(0.0) += c.volume();
        }
    }
    let mut integral = 0.0;
    for c in &ordered {
        let free = c.volume() - covered.get(c).copied().unwrap_or(0.0);
        if free > 0.0 {
            integral += free * acc[c].powf(tau / q);
        }
    }
    integral.powf(1.0 / tau)
}

/// Brute-force reference for [`tl_seminorm`] in one dimension: midpoint sampling of
/// `M_{s,q} f` on cells `cells_per_finest` times finer than the finest level.
pub fn tl_seminorm_grid_1d(t: &CoefficientTree, s: f64, q: f64, tau: f64, cells_per_finest: usize) -> f64 {
    assert_eq!(t.dim(), 1, "grid oracle is one-dimensional");
    if t.is_empty() {
        return 0.0;
    }
    let entries: Vec<(f64, f64, f64)> = t
        .iter()
        .map(|(idx, f)| {
            let side = idx.cube.side();
            let a = side * idx.cube.offset[0] as f64;
            (a, a + side, side.powf(-s * q) * f.abs().powf(q))
        })
        .collect();
    let lo = entries.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let hi = entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let finest = t.iter().map(|(i, _)| i.cube.level).min().unwrap();
    let step = 2f64.powi(finest) / cells_per_finest as f64;
    let n = ((hi - lo) / step).round() as usize;
    let mut integral = 0.0;
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * step;
        let m: f64 = entries.iter().filter(|e| e.0 <= x && x < e.1).map(|e| e.2).sum();
        integral += step * m.powf(tau / q);
    }
    integral.powf(1.0 / tau)
}

/// Per-level energies `A_j = (sum_{I in D_j} |f_I|^tau)^{1/tau}` and `(sum_j A_j^q)^{1/q}`.
pub fn besov_seminorm(t: &CoefficientTree, s: f64) -> (f64, BTreeMap<i32, f64>) {
    let d = t.dim() as f64;
    let tau = d / s;
    let q = 1.0 / (1.0 + s / d);
    let mut levels = BTreeMap::new();
    for (j, entries) in t.by_level() {
        let sum: f64 = entries.iter().map(|(_, f)| f.abs().powf(tau)).sum();
        levels.insert(j, sum.powf(1.0 / tau));
    }
    let norm = levels.values().map(|a: &f64| a.powf(q)).sum::<f64>().powf(1.0 / q);
    (norm, levels)
}

/// One row of a cost allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationEntry {
    pub index: WaveletIndex,
    pub coefficient: f64,
    pub cost: f64,
    pub budget: usize,
}

/// Costs `c_I` and integer budgets `N_I` for every entry of a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct CostAllocation {
    pub kind: AllocationKind,
    pub total: usize,
    pub n0: usize,
    pub seminorm: f64,
    /// In canonical index order.
    pub entries: Vec<AllocationEntry>,
}

impl CostAllocation {
    pub fn cost_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).sum()
    }

    pub fn budget_sum(&self) -> usize {
        self.entries.iter().map(|e| e.budget).sum()
    }

    pub fn funded(&self) -> impl Iterator<Item = &AllocationEntry> {
        self.entries.iter().filter(|e| e.budget > 0)
    }

    pub fn budgets(&self) -> BTreeMap<&WaveletIndex, usize> {
        self.entries.iter().map(|e| (&e.index, e.budget)).collect()
    }

    /// CSV with columns `j, k0.., e0.., cost, budget`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.entries.first().map(|e| e.index.dim()).unwrap_or(1);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["j".to_string()];
        header.extend((0..d).map(|a| format!("k{a}")));
        header.extend((0..d).map(|a| format!("e{a}")));
        header.push("cost".into());
        header.push("budget".into());
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.index.cube.level.to_string()];
            row.extend(e.index.cube.offset.iter().map(|k| k.to_string()));
            row.extend(e.index.gender.0.iter().map(|b| b.to_string()));
            row.push(e.cost.to_string());
            row.push(e.budget.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `floor(c)` when it reaches `n0`, otherwise zero.
pub fn floor_budget(cost: f64, n0: usize) -> usize {
    let b = (cost * (1.0 + FLOOR_SLACK)).floor();
    if b >= n0 as f64 {
        b as usize
    } else {
        0
    }
}

fn finish(
    kind: AllocationKind,
    total: usize,
    n0: usize,
    seminorm: f64,
    rows: Vec<(WaveletIndex, f64, f64)>,
) -> Result<CostAllocation> {
    // the N-independent share is formed first so funding is monotone in N
    let entries: Vec<AllocationEntry> = rows
        .into_iter()
        .map(|(index, coefficient, share)| {
            let cost = share * total as f64;
            AllocationEntry {
                index,
                coefficient,
                cost,
                budget: floor_budget(cost, n0),
            }
        })
        .collect();
    let alloc = CostAllocation {
        kind,
        total,
        n0,
        seminorm,
        entries,
    };
    if alloc.budget_sum() > total {
        return Err(Error::Degenerate(format!(
            "integer budgets sum to {} above the total {total}",
            alloc.budget_sum()
        )));
    }
    Ok(alloc)
}

fn check_total(t: &CoefficientTree, total: usize) -> Result<()> {
    if total == 0 {
        return Err(Error::InvalidInput("budget N must be at least 1".into()));
    }
    if t.is_zero() {
        return Err(Error::Degenerate(
            "the coefficient tree is zero, so its seminorm vanishes and no cost can be assigned".into(),
        ));
    }
    Ok(())
}

/// Triebel–Lizorkin costs `c_I = |f|^{-tau} m_I^{tau-q} |f_I|^q |I|^q N`.
pub fn tl_costs(t: &CoefficientTree, params: &SmoothnessParams, total: usize, n0: usize) -> Result<CostAllocation> {
    check_total(t, total)?;
    let SmoothnessParams { s, q, tau, d, .. } = *params;
    let norm = tl_seminorm(t, s, q, tau);
    let weights = cube_weights(t, s, q);
    let top = t.level_range().1;
    let mut m_cache: HashMap<&Cube, f64> = HashMap::new();
    let mut rows = Vec::with_capacity(t.len());
    for (idx, f) in t.iter() {
        let share = if f == 0.0 {
            0.0
        } else {
            let m = *m_cache
                .entry(&idx.cube)
                .or_insert_with(|| ancestor_sum(&weights, &idx.cube, top).powf(1.0 / q));
            let vol_q = (idx.cube.level as f64 * d as f64 * q).exp2();
            norm.powf(-tau) * m.powf(tau - q) * f.abs().powf(q) * vol_q
        };
        rows.push((idx.clone(), f, share));
    }
    finish(AllocationKind::TriebelLizorkin, total, n0, norm, rows)
}

/// Besov costs `c_I = N |f|_B^{-q} A_j^{q - tau} |f_I|^tau`.
pub fn besov_costs(t: &CoefficientTree, params: &SmoothnessParams, total: usize, n0: usize) -> Result<CostAllocation> {
    check_total(t, total)?;
    let (norm, levels) = besov_seminorm(t, params.s);
    let d = t.dim() as f64;
    let tau = d / params.s;
    let q = params.q;
    let rows = t
        .iter()
        .map(|(idx, f)| {
            let share = if f == 0.0 {
                0.0
            } else {
                let a = levels[&idx.cube.level];
                norm.powf(-q) * a.powf(q - tau) * f.abs().powf(tau)
            };
            (idx.clone(), f, share)
        })
        .collect();
    finish(AllocationKind::Besov, total, n0, norm, rows)
}

/// Dispatch on the norm index: Triebel–Lizorkin for finite `p`, Besov for `p = inf`.
pub fn allocate(t: &CoefficientTree, params: &SmoothnessParams, total: usize, n0: usize) -> Result<CostAllocation> {
    if t.dim() != params.d {
        return Err(Error::DimensionMismatch {
            expected: params.d,
            found: t.dim(),
        });
    }
    match params.kind() {
        AllocationKind::TriebelLizorkin => tl_costs(t, params, total, n0),
        AllocationKind::Besov => besov_costs(t, params, total, n0),
    }
}
