//! Gaussian terms, sums, their Fourier transform and the affine map onto a dyadic cube.

use gaussnet::{gaussian_fourier, CubeFrame, GaussianSum, GaussianTerm};

fn main() -> gaussnet::Result<()> {
    let mut s = GaussianSum::new(2);
    s.push(GaussianTerm::new(1.0, vec![0.0, 0.0], 0.5)?)?;
    s.push(GaussianTerm::new(-0.25, vec![0.5, -0.5], 0.25)?)?;
    for x in [[0.0, 0.0], [0.5, -0.5], [1.0, 1.0]] {
        println!("s({:?}) = {:.6}", x, s.eval(&x)?);
    }

    for xi in [0.0, 1.0, 4.0, 16.0] {
        println!("phi_hat(sigma = 0.5, |xi| = {xi}) = {:.6e}", gaussian_fourier(0.5, &[xi, 0.0])?);
    }

    // dilate onto the cube of side 1/4 with corner (1, 2)
    let cube = CubeFrame::new(vec![1.0, 2.0], 0.25)?;
    let moved = s.map_to_cube(&cube)?;
    for t in moved.terms() {
        println!("amplitude {:+.3} center {:?} sigma {}", t.amplitude, t.center, t.sigma);
    }
    println!("s on the cube at its corner: {:.6}", moved.eval(&[1.0, 2.0])?);
    Ok(())
}
