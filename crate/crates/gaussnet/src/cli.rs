//! Command-line verbs `analyze`, `approximate`, `study` and `verify`.
//!
//! Exit codes: 0 on success, 1 when a bound check or computation fails, 2 for usage
//! and input errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assembler::Assembler;
use crate::atom::{BudgetRule, DEFAULT_SIGMA};
use crate::budget::{NormIndex, SmoothnessParams};
use crate::error::{Error, Result};
use crate::harness::{
    atom_budget_sweep, check_atom, check_full, check_localized, check_truncated, make_synthetic_tree,
    operator_bound_sweep, rate_study, Check, ErrorGrid, SweepKind, SweepSettings, SweepTable,
};
use crate::spectral::DEFAULT_LATTICE_CAP;
use crate::wavelet::{
    analyze, build_meyer, default_resolution, AnalysisConfig, AnalysisReport, CoefficientTree, Gender,
    MotherWavelets, WaveletIndex,
};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "gaussnet", version, about = "N-term Gaussian approximation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand a target in the wavelet basis and write its coefficient tree.
    Analyze(CommonArgs),
    /// Build the N-term Gaussian approximant of a coefficient tree.
    Approximate(CommonArgs),
    /// Measure errors over a list of budgets and fit the rate.
    Study(CommonArgs),
    /// Run the lattice operator sweeps and check their bounds.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Budget N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Smoothness s.
    #[arg(long)]
    pub s: Option<f64>,
    /// Norm index p, a number >= 1 or `inf`.
    #[arg(long)]
    pub p: Option<String>,
    /// Dimension d.
    #[arg(long)]
    pub d: Option<usize>,
}

fn default_d() -> usize {
    1
}
fn default_s() -> f64 {
    1.0
}
fn default_p() -> NormIndex {
    NormIndex::Finite(2.0)
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}
fn default_cap() -> usize {
    DEFAULT_LATTICE_CAP
}
fn default_one() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Run configuration shared by all verbs. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_p")]
    pub p: NormIndex,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_list: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Funding threshold; the system default when absent.
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default = "default_cap")]
    pub lattice_cap: usize,
    /// Coefficient tree for `approximate` and `study`, relative to the config file.
    #[serde(default)]
    pub tree: Option<PathBuf>,
    /// Generated tree for `study` when no tree file is given.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_one")]
    pub grid_refine: usize,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            d: 1,
            s: 1.0,
            p: default_p(),
            n: None,
            n_list: None,
            seed: 0,
            sigma: DEFAULT_SIGMA,
            n0: None,
            resolution: None,
            lattice_cap: DEFAULT_LATTICE_CAP,
            tree: None,
            synthetic: None,
            grid_refine: 1,
            target: None,
            analysis: None,
            verify: None,
            out_dir: default_out(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub levels: (i32, i32),
    #[serde(default)]
    pub per_level: Option<usize>,
}

/// A builtin target or a file of samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum TargetSpec {
    GaussianBump(BumpParams),
    WindowedCusp(CuspParams),
    SinusoidPacket(PacketParams),
    Wavelet(WaveletParams),
    Samples(SamplesParams),
}

fn default_width() -> f64 {
    1.0
}
fn default_amp() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_amp")]
    pub amplitude: f64,
}

fn default_exponent() -> f64 {
    0.5
}

/// `|x - c|^exponent exp(-|x - c|^2 / width^2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_frequency() -> f64 {
    4.0
}

/// `sin(frequency x_0) exp(-|x - c|^2 / width^2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletParams {
    pub j: i32,
    pub k: Vec<i64>,
    pub e: Vec<u8>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesParams {
    pub path: PathBuf,
}

/// Values on a uniform grid, last axis fastest, interpolated multilinearly and zero outside.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

impl SampleGrid {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.lo.len() != d || self.hi.len() != d || self.nodes.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.lo.len(),
            });
        }
        if self.nodes.iter().any(|&n| n < 2) || self.lo.iter().zip(&self.hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidInput("sample grid needs two nodes and positive extent per axis".into()));
        }
        let count: usize = self.nodes.iter().product();
        if count != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "sample grid has {} values for {count} nodes",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.lo.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let h = (self.hi[a] - self.lo[a]) / (self.nodes[a] - 1) as f64;
            let t = (x[a] - self.lo[a]) / h;
            if !(t >= 0.0) || t > (self.nodes[a] - 1) as f64 {
                return 0.0;
            }
            let i = (t.floor() as usize).min(self.nodes[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut wgt = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                wgt *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.nodes[a] + base[a] + bit;
            }
            if wgt != 0.0 {
                acc += wgt * self.values[flat];
            }
        }
        acc
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub levels: Option<(i32, i32)>,
    #[serde(default)]
    pub pad: Option<f64>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub drop_below: Option<f64>,
}

/// Sweep lists and thresholds for `verify`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub gender: Option<Vec<u8>>,
    pub full_h: Vec<f64>,
    pub full_min_slope: f64,
    pub full_floor: f64,
    pub truncated_h: Vec<f64>,
    pub truncated_k: Vec<u32>,
    pub localized_h: Vec<f64>,
    pub localized_k: u32,
    pub localized_max_ratio: f64,
    pub atom_n: Vec<usize>,
    pub atom_k: u32,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            gender: None,
            full_h: vec![0.35, 0.3, 0.25, 0.225, 0.2],
            full_min_slope: 8.0,
            full_floor: 1e-13,
            truncated_h: vec![0.25, 0.2, 0.15, 0.125],
            truncated_k: vec![2, 4],
            localized_h: vec![0.25, 0.2, 0.15, 0.125],
            localized_k: 4,
            localized_max_ratio: 10.0,
            atom_n: vec![101, 151, 201, 301, 401],
            atom_k: 4,
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parse a config, reporting JSON errors with their byte offset.
    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::json(e, src))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_json(&src)?;
        // relative input paths are taken from the config's directory
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(t) = &cfg.tree {
            if t.is_relative() {
                cfg.tree = Some(base.join(t));
            }
        }
        if let Some(TargetSpec::Samples(s)) = &mut cfg.target {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, args: &CommonArgs) -> Result<()> {
        if let Some(o) = &args.out {
            self.out_dir = o.clone();
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(n) = args.n {
            self.n = Some(n);
        }
        if let Some(s) = args.s {
            self.s = s;
        }
        if let Some(p) = &args.p {
            let v: f64 = if p == "inf" {
                f64::INFINITY
            } else {
                p.parse().map_err(|_| config_err("p", format!("cannot parse {p:?}")))?
            };
            self.p = NormIndex::from_f64(v).map_err(|e| config_err("p", e.to_string()))?;
        }
        if let Some(d) = args.d {
            self.d = d;
        }
        Ok(())
    }

    /// Check every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if !(1..=3).contains(&self.d) {
            return Err(config_err("d", format!("must be 1, 2 or 3, got {}", self.d)));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(config_err("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(config_err("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.n == Some(0) {
            return Err(config_err("n", "must be at least 1"));
        }
        if let Some(ns) = &self.n_list {
            if ns.contains(&0) || ns.windows(2).any(|p| p[1] <= p[0]) {
                return Err(config_err("n_list", "must be positive and strictly increasing"));
            }
        }
        if self.grid_refine == 0 {
            return Err(config_err("grid_refine", "must be at least 1"));
        }
        if let Some(m) = self.resolution {
            if m < 16 {
                return Err(config_err("resolution", format!("must be at least 16, got {m}")));
            }
        }
        if let Some(syn) = &self.synthetic {
            if syn.levels.0 > syn.levels.1 {
                return Err(config_err("synthetic.levels", "lower level exceeds upper level"));
            }
        }
        if let Some(a) = &self.analysis {
            if let Some((lo, hi)) = a.levels {
                if lo > hi {
                    return Err(config_err("analysis.levels", "lower level exceeds upper level"));
                }
            }
            if let Some(t) = a.rel_tol {
                if !(t > 0.0) {
                    return Err(config_err("analysis.rel_tol", "must be positive"));
                }
            }
        }
        if let Some(v) = &self.verify {
            if let Some(g) = &v.gender {
                Gender::new(g.clone()).map_err(|e| config_err("verify.gender", e.to_string()))?;
                if g.len() != self.d {
                    return Err(config_err("verify.gender", format!("needs {} entries", self.d)));
                }
            }
        }
        Ok(())
    }

    fn params(&self) -> Result<SmoothnessParams> {
        SmoothnessParams::new(self.s, self.p, self.d).map_err(|e| config_err("s", e.to_string()))
    }

    fn system(&self) -> Result<MotherWavelets> {
        build_meyer(self.d, self.resolution.unwrap_or_else(|| default_resolution(self.d)))
    }

    fn rule(&self, w: &MotherWavelets) -> Result<BudgetRule> {
        let n0 = match self.n0 {
            Some(n0) => n0,
            None => BudgetRule::default_for(w)?.n0,
        };
        BudgetRule::new(w, self.sigma, n0, self.lattice_cap).map_err(|e| config_err("n0", e.to_string()))
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_tree(cfg: &RunConfig) -> Result<CoefficientTree> {
    let path = cfg
        .tree
        .as_ref()
        .ok_or_else(|| config_err("tree", "a coefficient tree file is required"))?;
    let src = std::fs::read_to_string(path)
        .map_err(|e| config_err("tree", format!("cannot read {}: {e}", path.display())))?;
    let t = CoefficientTree::from_json(&src)?;
    if t.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            found: t.dim(),
        });
    }
    Ok(t)
}

/// Paths written by a verb.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False when a check failed.
    pub passed: bool,
}

#[derive(Serialize)]
struct AnalyzeSummary<'a> {
    target: &'a TargetSpec,
    domain_lo: Vec<f64>,
    domain_hi: Vec<f64>,
    report: &'a AnalysisReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    concentration_ratio: Option<f64>,
}

/// Share of the energy `sum |f_I|^2 |I|` on the three finest levels carried by cubes
/// within four sides of `center`.
pub fn concentration_ratio(t: &CoefficientTree, center: &[f64]) -> f64 {
    let (jmin, _) = t.level_range();
    let (mut near, mut all) = (0.0, 0.0);
    for (idx, f) in t.iter() {
        if idx.cube.level > jmin + 2 {
            continue;
        }
        let s = idx.cube.side();
        let e = f * f * idx.cube.volume();
        all += e;
        let dist = idx
            .cube
            .offset
            .iter()
            .zip(center)
            .map(|(&k, c)| (s * (k as f64 + 0.5) - c).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist <= 4.0 * s {
            near += e;
        }
    }
    if all > 0.0 {
        near / all
    } else {
        0.0
    }
}

fn center_of(c: &Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match c {
        Some(v) if v.len() == d => Ok(v.clone()),
        Some(v) => Err(config_err("target.center", format!("needs {d} entries, got {}", v.len()))),
        None => Ok(vec![0.0; d]),
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(field, format!("must be positive, got {v}")))
    }
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let d = cfg.d;
    let w = cfg.system()?;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| config_err("target", "analyze needs a target"))?;
    let mut acfg = AnalysisConfig::for_system(&w);
    if let Some(a) = &cfg.analysis {
        if let Some(l) = a.levels {
            acfg.levels = l;
        }
        if let Some(p) = a.pad {
            acfg.pad = p;
        }
        if let Some(win) = a.window {
            acfg.window = win;
        }
        if let Some(t) = a.rel_tol {
            acfg.rel_tol = t;
        }
        if let Some(b) = a.drop_below {
            acfg.drop_below = b;
        }
    }
    let mut ratio_center = None;
    let (tree, report, lo, hi) = match target {
        TargetSpec::GaussianBump(b) => {
            let c = center_of(&b.center, d)?;
            let wd = positive("target.width", b.width)?;
            let (lo, hi) = boxed(&c, 6.0 * wd);
            let amp = b.amplitude;
            let f = |x: &[f64]| amp * (-dist2(x, &c) / (wd * wd)).exp();
            let (t, r) = analyze(&w, f, &lo, &hi, &acfg)?;
            (t, r, lo, hi)
        }
        TargetSpec::WindowedCusp(p) => {
            let c = center_of(&p.center, d)?;
            let wd = positive("target.width", p.width)?;
            let ex = positive("target.exponent", p.exponent)?;
            let (lo, hi) = boxed(&c, 6.0 * wd);
            let f = |x: &[f64]| {
                let r2 = dist2(x, &c);
                r2.powf(0.5 * ex) * (-r2 / (wd * wd)).exp()
            };
            let (t, r) = analyze(&w, f, &lo, &hi, &acfg)?;
            ratio_center = Some(c);
            (t, r, lo, hi)
        }
        TargetSpec::SinusoidPacket(p) => {
            let c = center_of(&p.center, d)?;
            let wd = positive("target.width", p.width)?;
            let om = p.frequency;
            let (lo, hi) = boxed(&c, 6.0 * wd);
            let f = |x: &[f64]| (om * x[0]).sin() * (-dist2(x, &c) / (wd * wd)).exp();
            let (t, r) = analyze(&w, f, &lo, &hi, &acfg)?;
            (t, r, lo, hi)
        }
        TargetSpec::Wavelet(p) => {
            let idx = WaveletIndex::new(p.j, p.k.clone(), p.e.clone())
                .map_err(|e| config_err("target", e.to_string()))?;
            if idx.dim() != d {
                return Err(config_err("target.k", format!("needs {d} entries")));
            }
            let s = idx.cube.side();
            let c: Vec<f64> = idx.cube.corner().iter().map(|v| v + 0.5 * s).collect();
            let (lo, hi) = boxed(&c, 16.0 * s);
            let f = |x: &[f64]| w.eval_index(&idx, x);
            let (t, r) = analyze(&w, f, &lo, &hi, &acfg)?;
            (t, r, lo, hi)
        }
        TargetSpec::Samples(sp) => {
            let src = std::fs::read_to_string(&sp.path)
                .map_err(|e| config_err("target.path", format!("cannot read {}: {e}", sp.path.display())))?;
            let g: SampleGrid = serde_json::from_str(&src).map_err(|e| Error::json(e, &src))?;
            g.validate(d)?;
            let (lo, hi) = (g.lo.clone(), g.hi.clone());
            let (t, r) = analyze(&w, |x: &[f64]| g.eval(x), &lo, &hi, &acfg)?;
            (t, r, lo, hi)
        }
    };
    let concentration = ratio_center.map(|c| concentration_ratio(&tree, &c));
    let tree_path = cfg.out_dir.join("tree.json");
    let report_path = cfg.out_dir.join("analysis.json");
    write_atomic(&tree_path, tree.to_json().as_bytes())?;
    let summary = AnalyzeSummary {
        target,
        domain_lo: lo,
        domain_hi: hi,
        report: &report,
        concentration_ratio: concentration,
    };
    write_atomic(&report_path, to_json(&summary).as_bytes())?;
    log::info!("analyze: {} coefficients", tree.len());
    Ok(Outcome {
        files: vec![tree_path, report_path],
        passed: true,
    })
}

fn boxed(c: &[f64], half: f64) -> (Vec<f64>, Vec<f64>) {
    (c.iter().map(|v| v - half).collect(), c.iter().map(|v| v + half).collect())
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn cmd_approximate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let n = cfg.n.ok_or_else(|| config_err("n", "approximate needs a budget"))?;
    let t = load_tree(cfg)?;
    let w = cfg.system()?;
    let params = cfg.params()?;
    let asm = Assembler::new(&w, cfg.rule(&w)?)?;
    let a = asm.approximate(&t, &params, n)?;
    log::info!(
        "approximate: {} terms for {} funded wavelets in {:?}",
        a.report.terms,
        a.report.funded,
        a.report.elapsed
    );
    let sum_path = cfg.out_dir.join("sum.json");
    let report_path = cfg.out_dir.join("report.json");
    let alloc_path = cfg.out_dir.join("allocation.csv");
    write_atomic(&sum_path, a.sum.to_json().as_bytes())?;
    write_atomic(&report_path, to_json(&a.report).as_bytes())?;
    let mut csv = Vec::new();
    a.allocation.write_csv(&mut csv)?;
    write_atomic(&alloc_path, &csv)?;
    Ok(Outcome {
        files: vec![sum_path, report_path, alloc_path],
        passed: true,
    })
}

pub fn cmd_study(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let ns = cfg
        .n_list
        .as_ref()
        .ok_or_else(|| config_err("n_list", "study needs a list of budgets"))?;
    if ns.len() < 4 {
        return Err(config_err("n_list", format!("at least 4 budgets are required, got {}", ns.len())));
    }
    let t = if cfg.tree.is_some() {
        load_tree(cfg)?
    } else {
        let syn = cfg
            .synthetic
            .as_ref()
            .ok_or_else(|| config_err("synthetic", "study needs a tree file or a synthetic tree"))?;
        make_synthetic_tree(cfg.d, cfg.s, syn.levels, syn.per_level, cfg.seed)?
    };
    let w = cfg.system()?;
    let params = cfg.params()?;
    let rule = cfg.rule(&w)?;
    let grid = ErrorGrid::for_tree(&t, cfg.p, cfg.grid_refine)?;
    let fit = rate_study(&t, &w, &params, ns, &rule, &grid)?;
    log::info!("study: slope {:.3}, residual {:.3}", fit.slope, fit.residual);
    let csv_path = cfg.out_dir.join("study.csv");
    let json_path = cfg.out_dir.join("study.json");
    let mut csv = Vec::new();
    fit.write_csv(&mut csv)?;
    write_atomic(&csv_path, &csv)?;
    write_atomic(&json_path, to_json(&fit).as_bytes())?;
    Ok(Outcome {
        files: vec![csv_path, json_path],
        passed: true,
    })
}

#[derive(Serialize)]
struct VerifySummary {
    passed: bool,
    checks: Vec<Check>,
    sweeps: Vec<SweepTable>,
    atom: crate::harness::AtomSweep,
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let spec = cfg.verify.clone().unwrap_or_default();
    let w = cfg.system()?;
    let gender = Gender::new(spec.gender.clone().unwrap_or_else(|| vec![1; cfg.d]))?;
    let mut settings = SweepSettings::for_dim(cfg.d);
    settings.sigma = cfg.sigma;
    settings.lattice_cap = cfg.lattice_cap;
    let mut checks = Vec::new();
    let full = operator_bound_sweep(&w, &gender, SweepKind::Full, &spec.full_h, 0, &settings)?;
    checks.push(check_full(&full, spec.full_min_slope, spec.full_floor));
    let trunc = operator_bound_sweep(&w, &gender, SweepKind::Truncated, &spec.truncated_h, 0, &settings)?;
    for &k in &spec.truncated_k {
        checks.push(check_truncated(&trunc, k));
    }
    let loc = operator_bound_sweep(&w, &gender, SweepKind::Localized, &spec.localized_h, spec.localized_k, &settings)?;
    checks.push(check_localized(&loc, spec.localized_max_ratio));
    let atom = atom_budget_sweep(&w, &gender, &spec.atom_n, &settings)?;
    checks.push(check_atom(&atom, spec.atom_k, cfg.d));
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        log::info!(
            "{} {}: {:.4} vs {:.4}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let json_path = cfg.out_dir.join("verify.json");
    let csv_path = cfg.out_dir.join("verify.csv");
    let mut csv = Vec::new();
    {
        let mut wr = csv::Writer::from_writer(&mut csv);
        wr.write_record(["check", "passed", "value", "threshold"])?;
        for c in &checks {
            wr.write_record([c.name.clone(), c.passed.to_string(), format!("{}", c.value), format!("{}", c.threshold)])?;
        }
        wr.flush()?;
    }
    write_atomic(&csv_path, &csv)?;
    let summary = VerifySummary {
        passed,
        checks,
        sweeps: vec![full, trunc, loc],
        atom,
    };
    write_atomic(&json_path, to_json(&summary).as_bytes())?;
    Ok(Outcome {
        files: vec![json_path, csv_path],
        passed,
    })
}

/// Exit code for an error under the 0/1/2 contract.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() || matches!(e, Error::Study(_)) {
        2
    } else {
        1
    }
}

/// Load the config, apply overrides and run one verb. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (args, verb): (&CommonArgs, fn(&RunConfig) -> Result<Outcome>) = match &cli.command {
        Command::Analyze(a) => (a, cmd_analyze),
        Command::Approximate(a) => (a, cmd_approximate),
        Command::Study(a) => (a, cmd_study),
        Command::Verify(a) => (a, cmd_verify),
    };
    let result = (|| {
        let mut cfg = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(args)?;
        verb(&cfg)
    })();
    match result {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.passed {
                0
            } else {
                eprintln!("error: one or more checks failed");
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_json(r#"{"version": 1, "bogus": 3}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn malformed_json_names_offset() {
        let src = "{\"version\": 1,\n \"d\": }";
        match RunConfig::from_json(src).unwrap_err() {
            Error::Json { offset, .. } => assert_eq!(&src[offset..offset + 1], "}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_target_is_usage_error() {
        let e = RunConfig::from_json(r#"{"version": 1, "target": {"name": "mystery"}}"#).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let e = RunConfig::from_json(r#"{"version": 1, "target": {"name": "gaussian-bump", "wdth": 2}}"#).unwrap_err();
        assert!(e.to_string().contains("wdth"), "{e}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.version = 7;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "version"));
        let mut c = RunConfig::default();
        c.n_list = Some(vec![10, 5]);
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "n_list"));
        let mut c = RunConfig::default();
        c.sigma = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "sigma"));
    }

    #[test]
    fn overrides_apply() {
        let mut c = RunConfig::default();
        let args = CommonArgs {
            p: Some("inf".into()),
            n: Some(9),
            d: Some(2),
            ..Default::default()
        };
        c.apply(&args).unwrap();
        assert_eq!(c.p, NormIndex::Infinity);
        assert_eq!(c.n, Some(9));
        assert_eq!(c.d, 2);
        let bad = CommonArgs {
            p: Some("0.5".into()),
            ..Default::default()
        };
        assert!(matches!(c.apply(&bad), Err(Error::Config { field, .. }) if field == "p"));
    }

    #[test]
    fn sample_grid_interpolates() {
        let g = SampleGrid {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 2.0],
            nodes: vec![2, 3],
            values: vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0],
        };
        g.validate(2).unwrap();
        assert_eq!(g.eval(&[0.0, 0.0]), 0.0);
        assert!((g.eval(&[0.5, 1.5]) - 6.5).abs() < 1e-14);
        assert_eq!(g.eval(&[1.0, 2.0]), 12.0);
        assert_eq!(g.eval(&[1.5, 0.0]), 0.0);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
    }
}
