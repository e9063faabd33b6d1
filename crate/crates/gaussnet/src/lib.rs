//! Nonlinear N-term approximation by sums of Gaussians.
//!
//! A target is expanded in a band-limited Meyer wavelet basis, a budget of `N`
//! Gaussians is distributed over the wavelet coefficients by a Triebel–Lizorkin or
//! Besov cost rule, and every funded wavelet is replaced by a truncated lattice of
//! dilated Gaussians. The result is a single [`GaussianSum`] with at most `N` terms.

pub mod assembler;
pub mod atom;
pub mod budget;
pub mod cli;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod quadrature;
pub mod spectral;
pub mod wavelet;

pub use error::{Error, Result};
pub use kernel::{affine_pullback_point, gaussian_fourier, map_sum_to_cube, CubeFrame, GaussianSum, GaussianTerm};
pub use spectral::{LatticeSamples, SpectralFunction};
pub use wavelet::{
    analyze, build_meyer, synthesize, AnalysisConfig, CoefficientTree, Cube, Gender, MotherWavelets, WaveletIndex,
};
