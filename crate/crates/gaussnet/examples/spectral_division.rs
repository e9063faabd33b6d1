//! A band-limited function given by its spectrum, evaluated in space, and divided by a
//! Gaussian transform to get the lattice density used by the quasi-interpolant.

use std::f64::consts::PI;

use gaussnet::atom::{full_approximant, DEFAULT_SIGMA};
use gaussnet::spectral::DEFAULT_LATTICE_CAP;
use gaussnet::SpectralFunction;

fn main() -> gaussnet::Result<()> {
    // f_hat(xi) = (1 - |xi| / R)^3_+ with R = 4
    let radius = 4.0;
    let f = SpectralFunction::univariate(radius, 256, |xi| (1.0 - xi.abs() / radius).max(0.0).powi(3).into())?;
    for x in [0.0, 0.5, 1.0, 2.0] {
        println!("f({x}) = {:.8}", f.eval_physical(&[x])?);
    }

    let f_phi = f.fourier_divide(DEFAULT_SIGMA)?;
    println!("max |f_hat| = {:.4}, max |f_hat / phi_hat| = {:.4}", f.max_abs(), f_phi.max_abs());

    let limit = PI / radius;
    println!("lattice spacing must stay below {limit:.4}");
    for h in [0.7, 0.5, 0.35] {
        let s = full_approximant(&f, DEFAULT_SIGMA, h, &[-2.0], &[2.0], DEFAULT_LATTICE_CAP)?;
        let err = (0..=40)
            .map(|i| -2.0 + 0.1 * i as f64)
            .map(|x| (f.eval_physical(&[x]).unwrap() - s.eval(&[x]).unwrap()).abs())
            .fold(0.0, f64::max);
        println!("h = {h}: {} terms, sup error on [-2, 2] = {err:.3e}", s.len());
    }
    match full_approximant(&f, DEFAULT_SIGMA, 0.8, &[-2.0], &[2.0], DEFAULT_LATTICE_CAP) {
        Err(e) => println!("h = 0.8 rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
