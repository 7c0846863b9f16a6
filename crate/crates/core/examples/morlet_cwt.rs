// Real Morlet CWT of a pure tone: FFT path against the direct sum, and the
// ridge frequency.

use std::error::Error;
use std::f64::consts::PI;

use scalodet::cwt::{cwt_direct, cwt_fft, morlet, pseudo_frequency, ridge_frequency, ScaleGrid};
use scalodet::Segment;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!("psi(0) = {}, psi(1) = {:.6}", morlet(0.0), morlet(1.0));

    let fs = 12_000.0;
    let tone = 440.0;
    let samples: Vec<f64> = (0..2048).map(|i| (2.0 * PI * tone * i as f64 / fs).sin()).collect();
    let segment = Segment::from_samples(samples, fs);

    let grid = ScaleGrid::new(100.0, 3_000.0, 96, fs)?;
    println!("{}", grid.describe());
    println!("scale 8 ↔ {:.1} Hz", pseudo_frequency(8.0, fs));

    let fast = cwt_fft(&segment, &grid)?;
    let slow = cwt_direct(&segment, &grid)?;
    let err = fast.coefficients().relative_frobenius_error(slow.coefficients());
    println!("fft vs direct relative error: {err:.2e}");
    assert!(err < 1e-8);

    let ridge = ridge_frequency(&fast);
    println!("ridge at {ridge:.1} Hz for a {tone} Hz tone");
    assert!((ridge - tone).abs() / tone < 0.05);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
