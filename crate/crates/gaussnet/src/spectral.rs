//! Band-limited functions stored as Fourier-transform samples on a uniform grid.
//!
//! The transform convention is `f_hat(xi) = int f(x) e^{-i xi.x} dx` with inverse
//! `f(x) = (2 pi)^{-d} int f_hat(xi) e^{+i xi.x} d xi`. Physical values come from the
//! trapezoid rule on the stored grid, which is spectrally accurate for smooth,
//! compactly supported transforms.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Largest allowed exponent `sigma^2 R^2 / 4` in `1/phi_hat`.
pub const CONDITIONING_LIMIT: f64 = 600.0;

/// Default cap on the number of lattice points sampled at once.
pub const DEFAULT_LATTICE_CAP: usize = 10_000_000;

/// Relative slack for lattice-ball membership so that exact ties are kept.
const TIE_SLACK: f64 = 1e-12;

/// Samples of a univariate transform on `[-half_width, half_width]`, `resolution` intervals.
#[derive(Clone, Debug)]
struct Axis {
    half_width: f64,
    resolution: usize,
    values: Vec<Complex64>,
    /// Nonzero nodes as `(xi, trapezoid weight * value * delta / 2 pi)`.
    weighted: Vec<(f64, Complex64)>,
}

impl Axis {
    fn new(half_width: f64, resolution: usize, values: Vec<Complex64>) -> Axis {
        let delta = 2.0 * half_width / resolution as f64;
        let weighted = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
            .map(|(i, v)| {
                let w = if i == 0 || i == resolution { 0.5 } else { 1.0 };
                (node(half_width, resolution, i), v * (w * delta / (2.0 * PI)))
            })
            .collect();
        Axis {
            half_width,
            resolution,
            values,
            weighted,
        }
    }

    fn eval(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(xi, wv) in &self.weighted {
            let (s, c) = (xi * x).sin_cos();
            acc += wv * Complex64::new(c, s);
        }
        acc
    }

    fn l1(&self) -> f64 {
        self.weighted.iter().map(|(_, wv)| wv.norm()).sum::<f64>() * 2.0 * PI
    }
}

#[inline]
fn node(half_width: f64, resolution: usize, i: usize) -> f64 {
    -half_width + 2.0 * half_width * i as f64 / resolution as f64
}

#[derive(Clone, Debug)]
enum Repr {
    /// Full tensor grid over `[-R, R]^d`, row-major with axis 0 slowest.
    Dense(Vec<Axis>, Vec<Complex64>),
    /// Product of univariate transforms, one per axis.
    Tensor(Vec<Axis>),
}

/// A band-limited function represented by samples of its Fourier transform.
#[derive(Clone, Debug)]
pub struct SpectralFunction {
    d: usize,
    radius: f64,
    repr: Repr,
    hermitian: bool,
}

fn check_resolution(m: usize) -> Result<()> {
    if m < 32 || m % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be even and at least 32, got {m}"
        )));
    }
    Ok(())
}

impl SpectralFunction {
    /// Sample `f_hat` on the grid over `[-radius, radius]^d`; nodes outside the ball are zero.
    pub fn from_fn<F>(d: usize, radius: f64, resolution: usize, f_hat: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        check_resolution(resolution)?;
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        let n = resolution + 1;
        let total = n.checked_pow(d as u32).ok_or_else(|| {
            Error::InvalidInput("spectral grid is too large".into())
        })?;
        let mut values = Vec::with_capacity(total);
        let mut xi = vec![0.0; d];
        let r2 = radius * radius * (1.0 + TIE_SLACK);
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..d).rev() {
                xi[a] = node(radius, resolution, rem % n);
                rem /= n;
            }
            let norm2: f64 = xi.iter().map(|v| v * v).sum();
            values.push(if norm2 <= r2 { f_hat(&xi) } else { Complex64::new(0.0, 0.0) });
        }
        if d == 1 {
            return Ok(Self::from_axes(radius, vec![Axis::new(radius, resolution, values)]));
        }
        let axes = (0..d)
            .map(|_| Axis::new(radius, resolution, vec![Complex64::new(0.0, 0.0); n]))
            .collect();
        let mut out = SpectralFunction {
            d,
            radius,
            repr: Repr::Dense(axes, values),
            hermitian: false,
        };
        out.hermitian = out.check_hermitian();
        Ok(out)
    }

    /// Univariate convenience constructor.
    pub fn univariate<F>(radius: f64, resolution: usize, f_hat: F) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
    {
        Self::from_fn(1, radius, resolution, |xi| f_hat(xi[0]))
    }

    /// Tensor product of univariate functions; the ball radius is the norm of the factor radii.
    pub fn tensor(factors: &[&SpectralFunction]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("tensor product needs at least one factor".into()));
        }
        let mut axes = Vec::new();
        for f in factors {
            match &f.repr {
                Repr::Tensor(a) if f.d == 1 => axes.push(a[0].clone()),
                _ => {
                    return Err(Error::InvalidInput(
                        "tensor factors must be univariate".into(),
                    ))
                }
            }
        }
        let radius = axes.iter().map(|a| a.half_width * a.half_width).sum::<f64>().sqrt();
        Ok(Self::from_axes(radius, axes))
    }

    fn from_axes(radius: f64, axes: Vec<Axis>) -> Self {
        let mut out = SpectralFunction {
            d: axes.len(),
            radius,
            repr: Repr::Tensor(axes),
            hermitian: false,
        };
        out.hermitian = out.check_hermitian();
        out
    }

    fn check_hermitian(&self) -> bool {
        let sym = |v: &[Complex64], tol: f64| {
            let n = v.len();
            (0..n).all(|i| (v[i] - v[n - 1 - i].conj()).norm() <= tol)
        };
        match &self.repr {
            Repr::Tensor(axes) => axes.iter().all(|a| {
                let m = a.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                sym(&a.values, 1e-14 * m)
            }),
            Repr::Dense(_, v) => {
                let m = v.iter().map(|v| v.norm()).fold(0.0, f64::max);
                sym(v, 1e-14 * m)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Radius of the ball containing the support of the transform.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Intervals per axis (the first axis for tensor products).
    pub fn resolution(&self) -> usize {
        match &self.repr {
            Repr::Dense(a, _) | Repr::Tensor(a) => a[0].resolution,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self.repr, Repr::Tensor(_))
    }

    /// Grid nodes along `axis`.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let a = match &self.repr {
            Repr::Dense(a, _) | Repr::Tensor(a) => &a[axis],
        };
        (0..=a.resolution).map(|i| node(a.half_width, a.resolution, i)).collect()
    }

    /// Visit every grid node with its stored value, in row-major order.
    pub fn for_each_node<F: FnMut(&[f64], Complex64)>(&self, mut f: F) {
        let axes = match &self.repr {
            Repr::Dense(a, _) | Repr::Tensor(a) => a,
        };
        let n: Vec<usize> = axes.iter().map(|a| a.resolution + 1).collect();
        let total: usize = n.iter().product();
        let mut xi = vec![0.0; self.d];
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; self.d];
            for a in (0..self.d).rev() {
                idx[a] = rem % n[a];
                rem /= n[a];
                xi[a] = node(axes[a].half_width, axes[a].resolution, idx[a]);
            }
            let v = match &self.repr {
                Repr::Dense(_, v) => v[flat],
                Repr::Tensor(axes) => axes
                    .iter()
                    .zip(&idx)
                    .fold(Complex64::new(1.0, 0.0), |acc, (a, &i)| acc * a.values[i]),
            };
            f(&xi, v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            Repr::Dense(_, v) => v.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Repr::Tensor(axes) => axes
                .iter()
                .map(|a| a.values.iter().map(|v| v.norm()).fold(0.0, f64::max))
                .product(),
        }
    }

    fn map_values<F: Fn(&[f64], Complex64) -> Complex64, G: Fn(f64, Complex64) -> Complex64>(
        &self,
        dense: F,
        per_axis: G,
    ) -> SpectralFunction {
        let repr = match &self.repr {
            Repr::Dense(axes, values) => {
                let mut out = Vec::with_capacity(values.len());
                self.for_each_node(|xi, v| out.push(if v == Complex64::new(0.0, 0.0) { v } else { dense(xi, v) }));
                Repr::Dense(axes.clone(), out)
            }
            Repr::Tensor(axes) => Repr::Tensor(
                axes.iter()
                    .map(|a| {
                        let vals = a
                            .values
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| {
                                if v == Complex64::new(0.0, 0.0) {
                                    v
                                } else {
                                    per_axis(node(a.half_width, a.resolution, i), v)
                                }
                            })
                            .collect();
                        Axis::new(a.half_width, a.resolution, vals)
                    })
                    .collect(),
            ),
        };
        SpectralFunction {
            d: self.d,
            radius: self.radius,
            repr,
            hermitian: self.hermitian,
        }
    }

    fn check_conditioning(&self, sigma: f64) -> Result<()> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("tension must be positive, got {sigma}")));
        }
        let exponent = sigma * sigma * self.radius * self.radius / 4.0;
        if exponent > CONDITIONING_LIMIT {
            return Err(Error::Conditioning {
                exponent,
                limit: CONDITIONING_LIMIT,
            });
        }
        Ok(())
    }

    /// The transform of `f_phi`: `f_hat / phi_hat_sigma` on the same grid.
    pub fn fourier_divide(&self, sigma: f64) -> Result<SpectralFunction> {
        self.check_conditioning(sigma)?;
        let c1 = sigma * PI.sqrt();
        let cd = c1.powi(self.d as i32);
        let s2 = sigma * sigma / 4.0;
        Ok(self.map_values(
            |xi, v| {
                let r2: f64 = xi.iter().map(|t| t * t).sum();
                v * ((s2 * r2).exp() / cd)
            },
            |xi, v| v * ((s2 * xi * xi).exp() / c1),
        ))
    }

    /// Pointwise product with `phi_hat_sigma`; the inverse of [`Self::fourier_divide`].
    pub fn multiply_gaussian(&self, sigma: f64) -> Result<SpectralFunction> {
        self.check_conditioning(sigma)?;
        let c1 = sigma * PI.sqrt();
        let cd = c1.powi(self.d as i32);
        let s2 = sigma * sigma / 4.0;
        Ok(self.map_values(
            |xi, v| {
                let r2: f64 = xi.iter().map(|t| t * t).sum();
                v * (cd * (-s2 * r2).exp())
            },
            |xi, v| v * (c1 * (-s2 * xi * xi).exp()),
        ))
    }

    /// Multiply all values by `lambda`.
    pub fn scaled(&self, lambda: f64) -> SpectralFunction {
        let repr = match &self.repr {
            Repr::Dense(axes, v) => Repr::Dense(axes.clone(), v.iter().map(|v| v * lambda).collect()),
            Repr::Tensor(axes) => {
                // a tensor product is scaled through its first factor
                let mut axes = axes.clone();
                let a = &axes[0];
                axes[0] = Axis::new(a.half_width, a.resolution, a.values.iter().map(|v| v * lambda).collect());
                Repr::Tensor(axes)
            }
        };
        SpectralFunction {
            d: self.d,
            radius: self.radius,
            repr,
            hermitian: self.hermitian,
        }
    }

    /// Trapezoid approximation of the inverse transform, real and imaginary parts.
    pub fn eval_complex(&self, x: &[f64]) -> Result<Complex64> {
        check_dim(self.d, x.len())?;
        Ok(self.eval_complex_unchecked(x))
    }

    fn eval_complex_unchecked(&self, x: &[f64]) -> Complex64 {
        match &self.repr {
            Repr::Tensor(axes) => axes
                .iter()
                .zip(x)
                .fold(Complex64::new(1.0, 0.0), |acc, (a, &xa)| acc * a.eval(xa)),
            Repr::Dense(axes, values) => {
                let d = self.d;
                let phases: Vec<Vec<Complex64>> = axes
                    .iter()
                    .zip(x)
                    .map(|(a, &xa)| {
                        let delta = 2.0 * a.half_width / a.resolution as f64;
                        (0..=a.resolution)
                            .map(|i| {
                                let w = if i == 0 || i == a.resolution { 0.5 } else { 1.0 };
                                let (s, c) = (node(a.half_width, a.resolution, i) * xa).sin_cos();
                                Complex64::new(c, s) * (w * delta / (2.0 * PI))
                            })
                            .collect()
                    })
                    .collect();
                let n = axes[0].resolution + 1;
                let mut acc = Complex64::new(0.0, 0.0);
                let mut idx = vec![0usize; d];
                for &v in values {
                    if v.re != 0.0 || v.im != 0.0 {
                        let mut ph = Complex64::new(1.0, 0.0);
                        for a in 0..d {
                            ph *= phases[a][idx[a]];
                        }
                        acc += v * ph;
                    }
                    for a in (0..d).rev() {
                        idx[a] += 1;
                        if idx[a] < n {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                acc
            }
        }
    }

    /// Real part of the trapezoid inverse transform at `x`.
    pub fn eval_physical(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.eval_real(x))
    }

    pub(crate) fn eval_real(&self, x: &[f64]) -> f64 {
        let v = self.eval_complex_unchecked(x);
        debug_assert!(
            !self.hermitian || v.im.abs() <= 1e-10 * self.l1_spectrum().max(1e-300),
            "imaginary residue {} for a Hermitian transform",
            v.im
        );
        v.re
    }

    /// Univariate inverse transform of axis `a` of a tensor product.
    pub(crate) fn eval_axis(&self, axis: usize, x: f64) -> Option<Complex64> {
        match &self.repr {
            Repr::Tensor(axes) => Some(axes[axis].eval(x)),
            Repr::Dense(..) => None,
        }
    }

    /// Trapezoid value of `int |f_hat|`.
    pub fn l1_spectrum(&self) -> f64 {
        match &self.repr {
            Repr::Tensor(axes) => axes.iter().map(Axis::l1).product(),
            Repr::Dense(axes, values) => {
                let n = axes[0].resolution + 1;
                let delta = 2.0 * axes[0].half_width / axes[0].resolution as f64;
                let mut acc = 0.0;
                let mut idx = vec![0usize; self.d];
                for v in values {
                    let w: f64 = idx
                        .iter()
                        .map(|&i| if i == 0 || i == n - 1 { 0.5 } else { 1.0 })
                        .product();
                    acc += w * v.norm();
                    for a in (0..self.d).rev() {
                        idx[a] += 1;
                        if idx[a] < n {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                acc * delta.powi(self.d as i32)
            }
        }
    }

    /// Evaluate at every `alpha` in `h Z^d` with `|alpha| <= rho`.
    pub fn sample_lattice(&self, h: f64, rho: f64, cap: usize) -> Result<LatticeSamples> {
        let keys = ball_keys(self.d, h, rho, cap)?;
        let values = self.sample_keys(h, &keys)?;
        Ok(LatticeSamples {
            spacing: h,
            radius: rho,
            keys,
            values,
        })
    }

    /// Evaluate at `h k` for each integer vector `k`.
    pub fn sample_keys(&self, h: f64, keys: &[Vec<i64>]) -> Result<Vec<f64>> {
        for k in keys {
            check_dim(self.d, k.len())?;
        }
        let kmax = keys
            .iter()
            .flat_map(|k| k.iter().map(|v| v.unsigned_abs()))
            .max()
            .unwrap_or(0) as i64;
        Ok(match &self.repr {
            Repr::Tensor(axes) => {
                // per-axis tables, then products
                let tables: Vec<Vec<Complex64>> = axes
                    .iter()
                    .map(|a| {
                        (-kmax..=kmax)
                            .into_par_iter()
                            .map(|k| a.eval(h * k as f64))
                            .collect()
                    })
                    .collect();
                keys.par_iter()
                    .map(|k| {
                        k.iter()
                            .zip(&tables)
                            .fold(Complex64::new(1.0, 0.0), |acc, (&ki, t)| {
                                acc * t[(ki + kmax) as usize]
                            })
                            .re
                    })
                    .collect()
            }
            Repr::Dense(..) => keys
                .par_iter()
                .map(|k| {
                    let x: Vec<f64> = k.iter().map(|&ki| h * ki as f64).collect();
                    self.eval_real(&x)
                })
                .collect(),
        })
    }

    /// JSON dump of the grid and values for debugging. Not a stable format.
    pub fn to_debug_json(&self) -> String {
        #[derive(Serialize)]
        struct AxisDump {
            half_width: f64,
            resolution: usize,
            re: Vec<f64>,
            im: Vec<f64>,
        }
        #[derive(Serialize)]
        struct Dump {
            d: usize,
            radius: f64,
            kind: &'static str,
            axes: Vec<AxisDump>,
            re: Vec<f64>,
            im: Vec<f64>,
        }
        let dump_axis = |a: &Axis| AxisDump {
            half_width: a.half_width,
            resolution: a.resolution,
            re: a.values.iter().map(|v| v.re).collect(),
            im: a.values.iter().map(|v| v.im).collect(),
        };
        let dump = match &self.repr {
            Repr::Tensor(axes) => Dump {
                d: self.d,
                radius: self.radius,
                kind: "tensor",
                axes: axes.iter().map(dump_axis).collect(),
                re: vec![],
                im: vec![],
            },
            Repr::Dense(axes, v) => Dump {
                d: self.d,
                radius: self.radius,
                kind: "dense",
                axes: axes.iter().map(|a| AxisDump { re: vec![], im: vec![], ..dump_axis(a) }).collect(),
                re: v.iter().map(|v| v.re).collect(),
                im: v.iter().map(|v| v.im).collect(),
            },
        };
        serde_json::to_string(&dump).expect("dump serializes")
    }
}

/// Integer offsets `k` with `|h k| <= rho`, in lexicographic order.
pub fn ball_keys(d: usize, h: f64, rho: f64, cap: usize) -> Result<Vec<Vec<i64>>> {
    if !(h > 0.0) || !(rho > 0.0) || !h.is_finite() || !rho.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lattice spacing and radius must be positive, got h = {h}, rho = {rho}"
        )));
    }
    let t = rho / h;
    let bound = t * t * (1.0 + TIE_SLACK);
    let kmax = (t * (1.0 + TIE_SLACK)).floor() as i64;
    let count = ball_count(d, kmax, bound);
    if count > cap as u128 {
        return Err(Error::LatticeCap {
            count: usize::try_from(count).unwrap_or(usize::MAX),
            cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut k = vec![0i64; d];
    push_keys(&mut out, &mut k, 0, 0.0, kmax, bound);
    Ok(out)
}

fn ball_count(d: usize, kmax: i64, bound: f64) -> u128 {
    fn rec(depth: usize, d: usize, acc: f64, kmax: i64, bound: f64) -> u128 {
        if depth == d {
            return 1;
        }
        let rem = bound - acc;
        if rem < 0.0 {
            return 0;
        }
        if depth + 1 == d {
            let mut m = rem.sqrt().floor() as i64;
            while ((m + 1) * (m + 1)) as f64 <= rem {
                m += 1;
            }
            while m >= 0 && (m * m) as f64 > rem {
                m -= 1;
            }
            return (2 * m.min(kmax) + 1) as u128;
        }
        (-kmax..=kmax)
            .map(|k| rec(depth + 1, d, acc + (k * k) as f64, kmax, bound))
            .sum()
    }
    rec(0, d, 0.0, kmax, bound)
}

fn push_keys(out: &mut Vec<Vec<i64>>, k: &mut Vec<i64>, depth: usize, acc: f64, kmax: i64, bound: f64) {
    if depth == k.len() {
        out.push(k.clone());
        return;
    }
    for v in -kmax..=kmax {
        let a = acc + (v * v) as f64;
        if a <= bound {
            k[depth] = v;
            push_keys(out, k, depth + 1, a, kmax, bound);
        }
    }
}

/// Values of a function on `h Z^d` restricted to the closed ball of radius `rho`.
#[derive(Clone, Debug)]
pub struct LatticeSamples {
    pub spacing: f64,
    pub radius: f64,
    /// Integer coordinates `k` of `alpha = h k`, lexicographic.
    pub keys: Vec<Vec<i64>>,
    pub values: Vec<f64>,
}

impl LatticeSamples {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.keys[i].iter().map(|&k| self.spacing * k as f64).collect()
    }
}
