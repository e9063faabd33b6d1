//! The Meyer system: mother profiles, tensor genders, wavelets on dyadic cubes, analysis
//! and synthesis.

use gaussnet::wavelet::{analyze, build_meyer, synthesize, AnalysisConfig, Gender, WaveletIndex};

fn main() -> gaussnet::Result<()> {
    let w = build_meyer(1, 512)?;
    println!("band radius {:.4}, table window {}", w.band_radius(), w.window());
    for x in [0.0, 0.5, 1.0, 2.0, 5.0] {
        println!("phi({x}) = {:+.6}  psi({x}) = {:+.6}", w.profile(0, x), w.profile(1, x));
    }

    let w2 = build_meyer(2, 64)?;
    for e in Gender::all(2) {
        println!("gender {:?}: psi(0.5, 0.5) = {:+.6}", e.0, w2.eval_mother(&e, &[0.5, 0.5]));
    }

    // one wavelet on I = [2, 4): analysis returns a single unit coefficient
    let idx = WaveletIndex::new(-1, vec![1], vec![1])?;
    let f = |x: &[f64]| w.eval_wavelet(&idx, x).unwrap();
    let mut cfg = AnalysisConfig::for_system(&w);
    cfg.levels = (-3, 1);
    let (t, report) = analyze(&w, f, &[-40.0], &[40.0], &cfg)?;
    println!("{} coefficients, {} integrand evaluations", t.len(), report.evaluations);
    let (top, c) = t.iter().fold((None, 0.0f64), |b, (i, c)| if c.abs() > b.1.abs() { (Some(i), c) } else { b });
    println!("largest coefficient {c:.10} at {top:?}");
    println!("synthesis at x = 3: {:.8} vs {:.8}", synthesize(&t, &w, &[3.0])?, f(&[3.0]));
    Ok(())
}
