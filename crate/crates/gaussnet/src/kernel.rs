//! Gaussian terms, Gaussian sums and the affine cube frames they are moved between.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Exponents below this underflow `exp` to zero in double precision.
pub const EXP_UNDERFLOW: f64 = -745.0;

/// One term `A exp(-|x - c|^2 / sigma^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    #[serde(rename = "A")]
    pub amplitude: f64,
    #[serde(rename = "c")]
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl GaussianTerm {
    pub fn new(amplitude: f64, center: Vec<f64>, sigma: f64) -> Result<Self> {
        let t = GaussianTerm {
            amplitude,
            center,
            sigma,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tension must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !self.amplitude.is_finite() || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite amplitude or center".into()));
        }
        Ok(())
    }

    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for (xi, ci) in x.iter().zip(&self.center) {
            let t = xi - ci;
            r2 += t * t;
        }
        let e = -r2 / (self.sigma * self.sigma);
        if e < EXP_UNDERFLOW {
            0.0
        } else {
            self.amplitude * e.exp()
        }
    }
}

/// A finite sum of Gaussian terms in a fixed dimension.
///
/// Terms are kept in insertion order and evaluation always sums in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSum")]
pub struct GaussianSum {
    d: usize,
    terms: Vec<GaussianTerm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSum {
    d: usize,
    terms: Vec<GaussianTerm>,
}

impl TryFrom<RawSum> for GaussianSum {
    type Error = Error;
    fn try_from(raw: RawSum) -> Result<Self> {
        GaussianSum::from_terms(raw.d, raw.terms)
    }
}

impl GaussianSum {
    pub fn new(d: usize) -> Self {
        GaussianSum { d, terms: Vec::new() }
    }

    pub fn from_terms(d: usize, terms: Vec<GaussianTerm>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for t in &terms {
            check_dim(d, t.center.len())?;
            t.validate()?;
        }
        Ok(GaussianSum { d, terms })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn push(&mut self, term: GaussianTerm) -> Result<()> {
        check_dim(self.d, term.center.len())?;
        term.validate()?;
        self.terms.push(term);
        Ok(())
    }

    /// Append all terms of `other`, keeping their order.
    pub fn extend(&mut self, other: GaussianSum) -> Result<()> {
        check_dim(self.d, other.d)?;
        self.terms.extend(other.terms);
        Ok(())
    }

    /// Multiply every amplitude by `lambda`.
    pub fn scaled(mut self, lambda: f64) -> Self {
        for t in &mut self.terms {
            t.amplitude *= lambda;
        }
        self
    }

    /// `sum_j A_j exp(-|x - c_j|^2 / sigma_j^2)`, skipping underflowing terms.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.value(x);
        }
        acc
    }

    /// Evaluate at many points in parallel. The per-point order of summation is fixed.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        for p in points {
            check_dim(self.d, p.len())?;
        }
        Ok(points.par_iter().map(|p| self.eval_unchecked(p)).collect())
    }

    /// Push a reference-frame sum onto `cube`: `(A, c, s) -> (A, corner + side*c, side*s)`.
    pub fn map_to_cube(&self, cube: &CubeFrame) -> Result<GaussianSum> {
        check_dim(self.d, cube.dim())?;
        let terms = self
            .terms
            .iter()
            .map(|t| GaussianTerm {
                amplitude: t.amplitude,
                center: t
                    .center
                    .iter()
                    .zip(&cube.corner)
                    .map(|(c, k)| k + cube.side * c)
                    .collect(),
                sigma: cube.side * t.sigma,
            })
            .collect();
        Ok(GaussianSum { d: self.d, terms })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gaussian sum serializes")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::json(e, src))
    }
}

/// `(sigma sqrt(pi))^d exp(-sigma^2 |xi|^2 / 4)`, the Fourier transform of
/// `exp(-|x|^2/sigma^2)` under `f_hat(xi) = int f(x) e^{-i xi.x} dx`.
pub fn gaussian_fourier(sigma: f64, xi: &[f64]) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tension must be positive, got {sigma}"
        )));
    }
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    let d = xi.len() as i32;
    Ok((sigma * std::f64::consts::PI.sqrt()).powi(d) * (-sigma * sigma * r2 / 4.0).exp())
}

/// An axis-aligned cube given by its lower corner and side length.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeFrame {
    corner: Vec<f64>,
    side: f64,
}

impl CubeFrame {
    pub fn new(corner: Vec<f64>, side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cube side must be positive, got {side}"
            )));
        }
        if corner.is_empty() || corner.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("cube corner must be finite".into()));
        }
        Ok(CubeFrame { corner, side })
    }

    pub fn unit(d: usize) -> Self {
        CubeFrame {
            corner: vec![0.0; d],
            side: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn corner(&self) -> &[f64] {
        &self.corner
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    /// `(x - corner) / side`.
    pub fn pullback(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.pullback_unchecked(x))
    }

    pub(crate) fn pullback_unchecked(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.corner)
            .map(|(x, c)| (x - c) / self.side)
            .collect()
    }
}

/// Free-function form of [`CubeFrame::pullback`].
pub fn affine_pullback_point(x: &[f64], cube: &CubeFrame) -> Result<Vec<f64>> {
    cube.pullback(x)
}

/// Free-function form of [`GaussianSum::map_to_cube`].
pub fn map_sum_to_cube(s: &GaussianSum, cube: &CubeFrame) -> Result<GaussianSum> {
    s.map_to_cube(cube)
}
