//! Tensor-product Meyer wavelets, dyadic cube indexing and coefficient trees.
//!
//! Cubes are `I = 2^j (k + [0,1]^d)` with corner `2^j k` and side `2^j`. Wavelets are
//! the unnormalized dilates `psi_I(x) = psi_e((x - c(I)) / l(I))`, so the expansion
//! coefficients are `f_I = |I|^{-1} <f, psi_I>`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::CubeFrame;
use crate::quadrature::{integrate_box, QuadConfig};
use crate::spectral::SpectralFunction;

/// Half-width of the frequency band of the univariate wavelet.
pub const BAND_EDGE: f64 = 8.0 * PI / 3.0;

/// Step of the tabulated profiles.
const TABLE_STEP: f64 = 1.0 / 64.0;
/// Points in the interpolation stencil.
const STENCIL: usize = 12;

/// `nu(t) = t^4 (35 - 84 t + 70 t^2 - 20 t^3)`, clamped to `[0, 1]`.
pub fn meyer_nu(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
}

/// Transform of the scaling function.
pub fn scaling_hat(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 2.0 * PI / 3.0 {
        1.0
    } else if a < 4.0 * PI / 3.0 {
        (PI / 2.0 * meyer_nu(3.0 * a / (2.0 * PI) - 1.0)).cos()
    } else {
        0.0
    }
}

/// Modulus of the wavelet transform; the transform itself is `e^{-i xi/2}` times this.
pub fn wavelet_hat_modulus(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 2.0 * PI / 3.0 || a >= 8.0 * PI / 3.0 {
        0.0
    } else if a <= 4.0 * PI / 3.0 {
        (PI / 2.0 * meyer_nu(3.0 * a / (2.0 * PI) - 1.0)).sin()
    } else {
        (PI / 2.0 * meyer_nu(3.0 * a / (4.0 * PI) - 1.0)).cos()
    }
}

/// Transform of the wavelet, real and symmetric about `x = 1/2` in physical space.
pub fn wavelet_hat(xi: f64) -> Complex64 {
    Complex64::from_polar(wavelet_hat_modulus(xi), -xi / 2.0)
}

/// A dyadic cube `2^level (offset + [0,1]^d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    pub level: i32,
    pub offset: Vec<i64>,
}

impl Cube {
    pub fn new(level: i32, offset: Vec<i64>) -> Self {
        Cube { level, offset }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(self.level)
    }

    pub fn volume(&self) -> f64 {
        2f64.powi(self.level * self.dim() as i32)
    }

    pub fn corner(&self) -> Vec<f64> {
        let s = self.side();
        self.offset.iter().map(|&k| s * k as f64).collect()
    }

    pub fn frame(&self) -> CubeFrame {
        CubeFrame::new(self.corner(), self.side()).expect("dyadic cubes are valid frames")
    }

    pub fn parent(&self) -> Cube {
        Cube {
            level: self.level + 1,
            offset: self.offset.iter().map(|k| k.div_euclid(2)).collect(),
        }
    }

    /// The ancestor at `level`, or `self` if `level <= self.level`.
    pub fn ancestor(&self, level: i32) -> Cube {
        if level <= self.level {
            return self.clone();
        }
        let shift = (level - self.level) as u32;
        Cube {
            level,
            offset: self
                .offset
                .iter()
                .map(|k| if shift >= 63 { if *k < 0 { -1 } else { 0 } } else { k >> shift })
                .collect(),
        }
    }

    /// Whether `self` contains `other` (inclusive).
    pub fn contains(&self, other: &Cube) -> bool {
        other.level <= self.level && other.ancestor(self.level) == *self
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let s = self.side();
        x.iter()
            .zip(&self.offset)
            .all(|(&x, &k)| (x / s).floor() as i64 == k)
    }
}

impl Ord for Cube {
    /// Coarse levels first, then offsets lexicographically.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .level
            .cmp(&self.level)
            .then_with(|| self.offset.cmp(&other.offset))
    }
}

impl PartialOrd for Cube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A gender `e` in `{0,1}^d \ {0}`; axis `a` uses the wavelet when `e[a] = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Gender(pub Vec<u8>);

impl Gender {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.iter().any(|&b| b > 1) || bits.iter().all(|&b| b == 0) {
            return Err(Error::InvalidInput(format!(
                "gender must be a nonzero 0/1 vector, got {bits:?}"
            )));
        }
        Ok(Gender(bits))
    }

    /// All genders in lexicographic order.
    pub fn all(d: usize) -> Vec<Gender> {
        (1..(1u32 << d))
            .map(|m| Gender((0..d).map(|a| (m >> (d - 1 - a) & 1) as u8).collect()))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// A cube together with a gender.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WaveletIndex {
    pub cube: Cube,
    pub gender: Gender,
}

impl WaveletIndex {
    pub fn new(level: i32, offset: Vec<i64>, gender: Vec<u8>) -> Result<Self> {
        let gender = Gender::new(gender)?;
        check_dim(offset.len(), gender.dim())?;
        Ok(WaveletIndex {
            cube: Cube::new(level, offset),
            gender,
        })
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }
}

impl Ord for WaveletIndex {
    /// Level descending, then offset, then gender.
    fn cmp(&self, other: &Self) -> Ordering {
        self.cube
            .cmp(&other.cube)
            .then_with(|| self.gender.cmp(&other.gender))
    }
}

impl PartialOrd for WaveletIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A univariate profile tabulated on a uniform grid and interpolated locally.
struct Table {
    half_width: f64,
    values: Vec<f64>,
    /// Barycentric weights of the equispaced stencil.
    bary: [f64; STENCIL],
}

impl Table {
    fn build(spec: &SpectralFunction, half_width: f64) -> Table {
        let n = (half_width / TABLE_STEP).round() as i64;
        let values: Vec<f64> = (-n..=n)
            .into_par_iter()
            .map(|i| spec.eval_real(&[i as f64 * TABLE_STEP]))
            .collect();
        let mut bary = [0.0; STENCIL];
        let mut c = 1.0;
        for (j, b) in bary.iter_mut().enumerate() {
            *b = if j % 2 == 0 { c } else { -c };
            c = c * (STENCIL - 1 - j) as f64 / (j + 1) as f64;
        }
        Table {
            half_width: n as f64 * TABLE_STEP,
            values,
            bary,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        if !(x.abs() <= self.half_width) {
            return 0.0;
        }
        let u = (x + self.half_width) / TABLE_STEP;
        let last = self.values.len() - STENCIL;
        let start = ((u.floor() as i64) - (STENCIL as i64 / 2 - 1)).clamp(0, last as i64) as usize;
        let t = u - start as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..STENCIL {
            let dt = t - j as f64;
            if dt == 0.0 {
                return self.values[start + j];
            }
            let w = self.bary[j] / dt;
            num += w * self.values[start + j];
            den += w;
        }
        num / den
    }
}

struct Profiles {
    resolution: usize,
    scaling: SpectralFunction,
    wavelet: SpectralFunction,
    scaling_table: Table,
    wavelet_table: Table,
}

fn profiles(resolution: usize) -> Result<Arc<Profiles>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Profiles>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("profile cache").get(&resolution) {
        return Ok(p.clone());
    }
    let scaling = SpectralFunction::univariate(BAND_EDGE, resolution, |xi| Complex64::new(scaling_hat(xi), 0.0))?;
    let wavelet = SpectralFunction::univariate(BAND_EDGE, resolution, wavelet_hat)?;
    // Stay well inside half the alias period of the trapezoid surrogate.
    let period = 2.0 * PI * resolution as f64 / (2.0 * BAND_EDGE);
    let half_width = (0.45 * period).floor();
    let p = Arc::new(Profiles {
        resolution,
        scaling_table: Table::build(&scaling, half_width),
        wavelet_table: Table::build(&wavelet, half_width),
        scaling,
        wavelet,
    });
    cache.lock().expect("profile cache").insert(resolution, p.clone());
    Ok(p)
}

/// The Meyer scaling function and wavelet together with their `d`-variate tensor products.
#[derive(Clone)]
pub struct MotherWavelets {
    d: usize,
    profiles: Arc<Profiles>,
    spectra: Vec<(Gender, SpectralFunction)>,
}

impl std::fmt::Debug for MotherWavelets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MotherWavelets")
            .field("d", &self.d)
            .field("resolution", &self.profiles.resolution)
            .finish()
    }
}

/// Default spectral resolution per axis for dimension `d`.
pub fn default_resolution(d: usize) -> usize {
    if d == 1 {
        512
    } else {
        256
    }
}

/// Build the Meyer system in dimension `d` (1, 2 or 3) with `resolution` grid intervals per axis.
pub fn build_meyer(d: usize, resolution: usize) -> Result<MotherWavelets> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!(
            "wavelet systems are built for d in 1..=3, got {d}"
        )));
    }
    let profiles = profiles(resolution)?;
    let mut spectra = Vec::new();
    for g in Gender::all(d) {
        let factors: Vec<&SpectralFunction> = g
            .0
            .iter()
            .map(|&b| if b == 1 { &profiles.wavelet } else { &profiles.scaling })
            .collect();
        spectra.push((g, SpectralFunction::tensor(&factors)?));
    }
    Ok(MotherWavelets { d, profiles, spectra })
}

impl MotherWavelets {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> usize {
        self.profiles.resolution
    }

    pub fn genders(&self) -> Vec<Gender> {
        self.spectra.iter().map(|(g, _)| g.clone()).collect()
    }

    /// Radius `(8 pi / 3) sqrt(d)` of the ball holding every `psi_e` transform.
    pub fn band_radius(&self) -> f64 {
        BAND_EDGE * (self.d as f64).sqrt()
    }

    /// Half-width of the window outside which the profiles are treated as zero.
    pub fn window(&self) -> f64 {
        self.profiles.wavelet_table.half_width
    }

    /// Univariate scaling function and wavelet as spectral functions.
    pub fn univariate(&self) -> (&SpectralFunction, &SpectralFunction) {
        (&self.profiles.scaling, &self.profiles.wavelet)
    }

    /// The tensor product `psi_e` as a spectral function.
    pub fn spectral(&self, e: &Gender) -> Result<&SpectralFunction> {
        self.spectra
            .iter()
            .find(|(g, _)| g == e)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::InvalidInput(format!("gender {:?} is not valid in d = {}", e.0, self.d)))
    }

    /// Univariate profile `eta_b(x)` from the table.
    #[inline]
    pub fn profile(&self, b: u8, x: f64) -> f64 {
        if b == 1 {
            self.profiles.wavelet_table.eval(x)
        } else {
            self.profiles.scaling_table.eval(x)
        }
    }

    /// Univariate profile by direct trapezoid evaluation, bypassing the table.
    pub fn profile_direct(&self, b: u8, x: f64) -> f64 {
        let s = if b == 1 { &self.profiles.wavelet } else { &self.profiles.scaling };
        s.eval_axis(0, x).map(|v| v.re).unwrap_or(0.0)
    }

    /// `psi_e(y)` in the reference frame.
    pub fn eval_mother(&self, e: &Gender, y: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&b, &ya) in e.0.iter().zip(y) {
            v *= self.profile(b, ya);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// `psi_e((x - c(I)) / l(I))`.
    pub fn eval_wavelet(&self, idx: &WaveletIndex, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        check_dim(self.d, idx.dim())?;
        Ok(self.eval_index(idx, x))
    }

    #[inline]
    pub(crate) fn eval_index(&self, idx: &WaveletIndex, x: &[f64]) -> f64 {
        let s = idx.cube.side();
        let mut v = 1.0;
        for a in 0..self.d {
            let c = s * idx.cube.offset[a] as f64;
            v *= self.profile(idx.gender.0[a], (x[a] - c) / s);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// Box in physical space outside which `psi_I` is treated as zero.
    pub fn support_box(&self, cube: &Cube) -> (Vec<f64>, Vec<f64>) {
        let s = cube.side();
        let w = self.window();
        let lo = cube.offset.iter().map(|&k| s * (k as f64 - w)).collect();
        let hi = cube.offset.iter().map(|&k| s * (k as f64 + w)).collect();
        (lo, hi)
    }
}

/// A finitely supported map from wavelet indices to coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTree {
    d: usize,
    levels: (i32, i32),
    entries: BTreeMap<WaveletIndex, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    d: usize,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    j: i32,
    k: Vec<i64>,
    e: Vec<u8>,
    f: f64,
}

impl CoefficientTree {
    /// Empty tree whose entries must lie in levels `jmin..=jmax`.
    pub fn new(d: usize, levels: (i32, i32)) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if levels.0 > levels.1 {
            return Err(Error::InvalidInput(format!(
                "level range [{}, {}] is empty",
                levels.0, levels.1
            )));
        }
        Ok(CoefficientTree {
            d,
            levels,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn level_range(&self) -> (i32, i32) {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, idx: WaveletIndex, f: f64) -> Result<()> {
        check_dim(self.d, idx.dim())?;
        if idx.cube.level < self.levels.0 || idx.cube.level > self.levels.1 {
            return Err(Error::InvalidInput(format!(
                "level {} outside the declared range [{}, {}]",
                idx.cube.level, self.levels.0, self.levels.1
            )));
        }
        if !f.is_finite() {
            return Err(Error::InvalidInput("coefficient must be finite".into()));
        }
        self.entries.insert(idx, f);
        Ok(())
    }

    pub fn get(&self, idx: &WaveletIndex) -> Option<f64> {
        self.entries.get(idx).copied()
    }

    /// Entries in canonical order: level descending, offset, gender.
    pub fn iter(&self) -> impl Iterator<Item = (&WaveletIndex, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Entries grouped by level.
    pub fn by_level(&self) -> BTreeMap<i32, Vec<(&WaveletIndex, f64)>> {
        let mut out: BTreeMap<i32, Vec<_>> = BTreeMap::new();
        for (k, v) in self.iter() {
            out.entry(k.cube.level).or_default().push((k, v));
        }
        out
    }

    /// Coefficients grouped by cube, genders in order.
    pub fn by_cube(&self) -> BTreeMap<&Cube, Vec<(&Gender, f64)>> {
        let mut out: BTreeMap<&Cube, Vec<_>> = BTreeMap::new();
        for (k, v) in self.iter() {
            out.entry(&k.cube).or_default().push((&k.gender, v));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, lambda: f64) -> CoefficientTree {
        CoefficientTree {
            d: self.d,
            levels: self.levels,
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * lambda)).collect(),
        }
    }

    /// Sum of `|f_I|`.
    pub fn l1(&self) -> f64 {
        self.entries.values().map(|v| v.abs()).sum()
    }

    pub fn to_json(&self) -> String {
        let file = TreeFile {
            d: self.d,
            entries: self
                .iter()
                .map(|(k, f)| EntryFile {
                    j: k.cube.level,
                    k: k.cube.offset.clone(),
                    e: k.gender.0.clone(),
                    f,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("tree serializes")
    }

    /// Parse the JSON tree format; the declared level range is the span of the entries.
    pub fn from_json(src: &str) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(src).map_err(|e| Error::json(e, src))?;
        let jmin = file.entries.iter().map(|e| e.j).min().unwrap_or(0);
        let jmax = file.entries.iter().map(|e| e.j).max().unwrap_or(0);
        let mut t = CoefficientTree::new(file.d, (jmin, jmax))?;
        for e in file.entries {
            let idx = WaveletIndex::new(e.j, e.k, e.e)?;
            if t.entries.contains_key(&idx) {
                return Err(Error::InvalidInput(format!(
                    "duplicate entry j = {}, k = {:?}, e = {:?}",
                    idx.cube.level, idx.cube.offset, idx.gender.0
                )));
            }
            t.insert(idx, e.f)?;
        }
        Ok(t)
    }
}

/// `sum_I f_I psi_I(x)` in canonical order.
pub fn synthesize(t: &CoefficientTree, w: &MotherWavelets, x: &[f64]) -> Result<f64> {
    check_dim(w.dim(), x.len())?;
    check_dim(w.dim(), t.dim())?;
    let mut acc = 0.0;
    for (idx, f) in t.iter() {
        acc += f * w.eval_index(idx, x);
    }
    Ok(acc)
}

/// [`synthesize`] at many points in parallel.
pub fn synthesize_many(t: &CoefficientTree, w: &MotherWavelets, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_dim(w.dim(), t.dim())?;
    for p in points {
        check_dim(w.dim(), p.len())?;
    }
    Ok(points
        .par_iter()
        .map(|x| t.iter().fold(0.0, |acc, (idx, f)| acc + f * w.eval_index(idx, x)))
        .collect())
}

/// Settings for [`analyze`].
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisConfig {
    pub levels: (i32, i32),
    /// Domain padding per level, in units of the cube side.
    pub pad: f64,
    /// Reference-frame half-width of the integration window around each wavelet.
    pub window: f64,
    pub rel_tol: f64,
    /// Entries with `|f_I|` at or below this are omitted.
    pub drop_below: f64,
}

impl AnalysisConfig {
    /// Defaults for `w`: the full tabulated window in one dimension, a narrower one above.
    pub fn for_system(w: &MotherWavelets) -> Self {
        AnalysisConfig {
            levels: (-8, 16),
            pad: 8.0,
            window: if w.dim() == 1 { w.window() } else { w.window().min(16.0) },
            rel_tol: 1e-9,
            drop_below: 0.0,
        }
    }
}

/// Quadrature diagnostics returned by [`analyze`].
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub levels: (i32, i32),
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub pad: f64,
    pub window: f64,
    pub rel_tol: f64,
    pub indices_examined: usize,
    pub entries: usize,
    pub evaluations: usize,
    /// Largest per-coefficient quadrature error estimate, in coefficient units.
    pub max_error_estimate: f64,
    /// Sum of per-coefficient error estimates.
    pub total_error_estimate: f64,
}

/// Wavelet coefficients `f_I = |I|^{-1} <f, psi_I>` of `f` supported in the box `[lo, hi]`.
///
/// All cubes at the requested levels that meet the box padded by `pad` cube sides
/// are examined. Each inner product is computed in the cube's reference frame over the
/// box intersected with the wavelet window.
pub fn analyze<F>(
    w: &MotherWavelets,
    f: F,
    lo: &[f64],
    hi: &[f64],
    cfg: &AnalysisConfig,
) -> Result<(CoefficientTree, AnalysisReport)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = w.dim();
    check_dim(d, lo.len())?;
    check_dim(d, hi.len())?;
    if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(Error::InvalidInput("analysis box must have positive extent".into()));
    }
    if cfg.window > w.window() {
        return Err(Error::InvalidInput(format!(
            "analysis window {} exceeds the tabulated window {}",
            cfg.window,
            w.window()
        )));
    }
    let mut tree = CoefficientTree::new(d, cfg.levels)?;

    // Scale for the absolute quadrature floor.
    let probe = 41usize;
    let mut fmax: f64 = 0.0;
    let total = probe.pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        let x: Vec<f64> = (0..d)
            .map(|a| {
                let i = rem % probe;
                rem /= probe;
                lo[a] + (hi[a] - lo[a]) * i as f64 / (probe - 1) as f64
            })
            .collect();
        fmax = fmax.max(f(&x).abs());
    }

    let mut jobs = Vec::new();
    for j in cfg.levels.0..=cfg.levels.1 {
        let s = 2f64.powi(j);
        let ranges: Vec<(i64, i64)> = (0..d)
            .map(|a| {
                let k0 = ((lo[a] - cfg.pad * s) / s).floor() as i64;
                let k1 = ((hi[a] + cfg.pad * s) / s).ceil() as i64 - 1;
                (k0, k1)
            })
            .collect();
        let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'cubes: loop {
            for g in w.genders() {
                jobs.push(WaveletIndex {
                    cube: Cube::new(j, k.clone()),
                    gender: g,
                });
            }
            let mut a = d;
            loop {
                if a == 0 {
                    break 'cubes;
                }
                a -= 1;
                k[a] += 1;
                if k[a] <= ranges[a].1 {
                    break;
                }
                k[a] = ranges[a].0;
            }
        }
    }

    let results: Vec<Result<(f64, f64, usize)>> = jobs
        .par_iter()
        .map(|idx| {
            let s = idx.cube.side();
            let c = idx.cube.corner();
            let mut ylo = vec![0.0; d];
            let mut yhi = vec![0.0; d];
            for a in 0..d {
                ylo[a] = ((lo[a] - c[a]) / s).max(0.5 - cfg.window);
                yhi[a] = ((hi[a] - c[a]) / s).min(0.5 + cfg.window);
                if !(yhi[a] > ylo[a]) {
                    return Ok((0.0, 0.0, 0));
                }
            }
            let mut qc = QuadConfig::new(d);
            qc.rel_tol = cfg.rel_tol;
            qc.initial_panels = ylo
                .iter()
                .zip(&yhi)
                .map(|(a, b)| ((b - a) / if d == 1 { 1.0 } else { 2.0 }).ceil().clamp(1.0, 64.0) as usize)
                .collect();
            let vol: f64 = ylo.iter().zip(&yhi).map(|(a, b)| b - a).product();
            qc.abs_tol = 1e-15 * fmax.max(1e-300) * vol;
            let out = integrate_box(
                |y| {
                    let x: Vec<f64> = y.iter().zip(&c).map(|(y, c)| c + s * y).collect();
                    f(&x) * w.eval_mother(&idx.gender, y)
                },
                &ylo,
                &yhi,
                &qc,
            )
            .map_err(|e| {
                Error::Quadrature(format!(
                    "coefficient j = {}, k = {:?}, e = {:?}: {e}",
                    idx.cube.level, idx.cube.offset, idx.gender.0
                ))
            })?;
            Ok((out.value, out.error_estimate, out.evaluations))
        })
        .collect();

    let mut report = AnalysisReport {
        levels: cfg.levels,
        domain_lo: lo.to_vec(),
        domain_hi: hi.to_vec(),
        pad: cfg.pad,
        window: cfg.window,
        rel_tol: cfg.rel_tol,
        indices_examined: jobs.len(),
        entries: 0,
        evaluations: 0,
        max_error_estimate: 0.0,
        total_error_estimate: 0.0,
    };
    for (idx, r) in jobs.into_iter().zip(results) {
        let (v, err, evals) = r?;
        report.evaluations += evals;
        report.max_error_estimate = report.max_error_estimate.max(err);
        report.total_error_estimate += err;
        if v.abs() > cfg.drop_below {
            tree.insert(idx, v)?;
        }
    }
    report.entries = tree.len();
    Ok((tree, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w1() -> MotherWavelets {
        build_meyer(1, 512).unwrap()
    }

    #[test]
    fn profile_values() {
        assert_eq!(scaling_hat(0.0), 1.0);
        assert_eq!(scaling_hat(4.0 * PI / 3.0 + 1e-12), 0.0);
        // partition of unity on the overlap
        for xi in [2.2, 3.0, 3.9, 4.1] {
            let s = scaling_hat(xi);
            let w = wavelet_hat_modulus(xi);
            assert!((s * s + w * w - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn wavelet_band_is_exact_on_the_grid() {
        let w = w1();
        let (_, eta1) = w.univariate();
        let nodes = eta1.axis_nodes(0);
        let mut i = 0;
        eta1.for_each_node(|_, v| {
            let a = nodes[i].abs();
            if a <= 2.0 * PI / 3.0 || a >= 8.0 * PI / 3.0 {
                assert_eq!(v, Complex64::new(0.0, 0.0), "node {}", nodes[i]);
            }
            i += 1;
        });
    }

    #[test]
    fn genders() {
        assert_eq!(Gender::all(1), vec![Gender(vec![1])]);
        assert_eq!(
            Gender::all(2),
            vec![Gender(vec![0, 1]), Gender(vec![1, 0]), Gender(vec![1, 1])]
        );
        assert_eq!(Gender::all(3).len(), 7);
        assert!(Gender::new(vec![0, 0]).is_err());
        assert!(build_meyer(4, 64).is_err());
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let w = w1();
        let mut worst: f64 = 0.0;
        for i in 0..4000 {
            let x = -70.0 + 140.0 * (i as f64 + 0.37) / 4000.0;
            for b in [0u8, 1] {
                worst = worst.max((w.profile(b, x) - w.profile_direct(b, x)).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn wavelet_is_symmetric_about_half() {
        let w = w1();
        for x in [0.1, 0.9, 2.3, 7.7] {
            let a = w.profile_direct(1, 0.5 + x);
            let b = w.profile_direct(1, 0.5 - x);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn vanishing_mean() {
        let w = w1();
        let mut cfg = QuadConfig::new(1);
        cfg.initial_panels = vec![120];
        let lim = w.window();
        let r = integrate_box(|x| w.profile(1, x[0]), &[-lim], &[lim], &cfg).unwrap();
        assert!(r.value.abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn dilation_covariance() {
        let w = w1();
        let a = WaveletIndex::new(1, vec![0], vec![1]).unwrap();
        let b = WaveletIndex::new(0, vec![0], vec![1]).unwrap();
        for y in [0.3, -1.7, 4.2] {
            assert_eq!(w.eval_wavelet(&a, &[2.0 * y]).unwrap(), w.eval_wavelet(&b, &[y]).unwrap());
        }
    }

    #[test]
    fn tensor_consistency_2d() {
        let w = build_meyer(2, 256).unwrap();
        let idx = WaveletIndex::new(0, vec![0, 0], vec![1, 0]).unwrap();
        for (x1, x2) in [(0.3, -0.4), (1.2, 2.5)] {
            let v = w.eval_wavelet(&idx, &[x1, x2]).unwrap();
            let u = w.profile_direct(1, x1) * w.profile_direct(0, x2);
            assert!((v - u).abs() < 1e-12);
            // the tensor spectral function agrees with the factorized profiles
            let s = w.spectral(&idx.gender).unwrap().eval_physical(&[x1, x2]).unwrap();
            assert!((s - u).abs() < 1e-12);
        }
        assert!((w.band_radius() - BAND_EDGE * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn decay_envelope() {
        let w = w1();
        let mut worst: f64 = 0.0;
        for i in 0..=2000 {
            let x = -50.0 + 0.05 * i as f64;
            worst = worst.max(w.profile(1, x).abs() * (1.0 + x.abs()).powi(2));
        }
        assert!(worst < 10.0, "{worst}");
    }

    #[test]
    fn ordering_is_level_descending() {
        let a = WaveletIndex::new(2, vec![5], vec![1]).unwrap();
        let b = WaveletIndex::new(0, vec![-3], vec![1]).unwrap();
        let c = WaveletIndex::new(0, vec![1], vec![1]).unwrap();
        let mut v = vec![c.clone(), b.clone(), a.clone()];
        v.sort();
        assert_eq!(v, vec![a, b, c]);
    }

    #[test]
    fn cube_ancestry() {
        let c = Cube::new(-2, vec![-5, 3]);
        assert_eq!(c.parent(), Cube::new(-1, vec![-3, 1]));
        assert_eq!(c.ancestor(0), Cube::new(0, vec![-2, 0]));
        assert!(Cube::new(0, vec![-2, 0]).contains(&c));
        assert!(c.contains(&c));
        assert!(!c.contains(&Cube::new(0, vec![-2, 0])));
        assert!(c.contains_point(&[-1.2, 0.8]));
    }

    #[test]
    fn tree_json_round_trip() {
        let mut t = CoefficientTree::new(2, (-3, 1)).unwrap();
        t.insert(WaveletIndex::new(-3, vec![1, -2], vec![1, 1]).unwrap(), 0.1 + 0.2).unwrap();
        t.insert(WaveletIndex::new(1, vec![0, 0], vec![0, 1]).unwrap(), -2.5e-17).unwrap();
        let back = CoefficientTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back.len(), 2);
        for ((a, x), (b, y)) in t.iter().zip(back.iter()) {
            assert_eq!(a, b);
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(t.insert(WaveletIndex::new(2, vec![0, 0], vec![0, 1]).unwrap(), 1.0).is_err());
        assert!(CoefficientTree::from_json(r#"{"d":1,"entries":[{"j":0,"k":[0],"e":[0],"f":1}]}"#).is_err());
        assert!(CoefficientTree::from_json(r#"{"d":1,"entries":[],"extra":1}"#).is_err());
    }

    #[test]
    fn synthesize_trivia() {
        let w = w1();
        let t = CoefficientTree::new(1, (0, 0)).unwrap();
        assert_eq!(synthesize(&t, &w, &[0.3]).unwrap(), 0.0);
        let mut t = t;
        let idx = WaveletIndex::new(0, vec![2], vec![1]).unwrap();
        t.insert(idx.clone(), 1.0).unwrap();
        assert_eq!(synthesize(&t, &w, &[2.7]).unwrap(), w.eval_wavelet(&idx, &[2.7]).unwrap());
    }

    #[test]
    fn analyze_recovers_single_wavelets() {
        let w = w1();
        let i0 = WaveletIndex::new(0, vec![0], vec![1]).unwrap();
        let i1 = WaveletIndex::new(-1, vec![3], vec![1]).unwrap();
        let mut cfg = AnalysisConfig::for_system(&w);
        cfg.levels = (-2, 1);
        let f = |x: &[f64]| 3.0 * w.eval_index(&i0, x) + w.eval_index(&i1, x);
        let (t, rep) = analyze(&w, f, &[-40.0], &[40.0], &cfg).unwrap();
        assert!(rep.max_error_estimate < 1e-7);
        for (idx, v) in t.iter() {
            let want = if *idx == i0 {
                3.0
            } else if *idx == i1 {
                1.0
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-6, "{idx:?}: {v}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ancestor_chain_is_parent_iteration(level in -6i32..3, k in -100i64..100, up in 0i32..5) {
            let c = Cube::new(level, vec![k]);
            let mut p = c.clone();
            for _ in 0..up { p = p.parent(); }
            prop_assert_eq!(c.ancestor(level + up), p.clone());
            prop_assert!(p.contains(&c));
        }
    }
}
