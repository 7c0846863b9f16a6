//! Continuous wavelet transform with the real Morlet wavelet
//! `ψ(t) = exp(−t²/2)·cos(5t)`.
//!
//! Discretized on sample indices:
//!
//! ```text
//! CWT(a, b) = a^(-1/2) · Σ_t x[t] · ψ((t − b) / a)
//! ```
//!
//! with `x` zero outside the segment and `ψ` truncated to `|t| ≤ 6` wavelet
//! units. [`cwt_direct`] evaluates the sum literally and is the reference;
//! [`cwt_fft`] computes the same linear correlation through zero-padded FFTs.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::segment::Segment;

/// Angular carrier frequency of the mother wavelet (rad per wavelet unit).
pub const MORLET_CARRIER: f64 = 5.0;

/// Wavelet support kept on each side of the center, in wavelet units.
/// The envelope there is `e^{-18}`.
pub const SUPPORT_HALF_WIDTH: f64 = 6.0;

/// Default lower pseudo-frequency as a fraction of the sample rate.
pub const DEFAULT_F_MIN_FRACTION: f64 = 1.0 / 500.0;
/// Default upper pseudo-frequency as a fraction of the sample rate.
pub const DEFAULT_F_MAX_FRACTION: f64 = 1.0 / 4.0;
pub const DEFAULT_NUM_SCALES: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum CwtError {
    #[error("invalid scale grid: {0}")]
    Grid(String),
    #[error("cannot transform an empty segment")]
    EmptySegment,
    #[error("segment sampled at {segment} Hz but scale grid built for {grid} Hz")]
    RateMismatch { segment: f64, grid: f64 },
    #[error("scalogram dump is malformed: {0}")]
    Dump(String),
}

#[inline]
pub fn morlet(t: f64) -> f64 {
    (-0.5 * t * t).exp() * (MORLET_CARRIER * t).cos()
}

/// Frequency (Hz) whose period matches the wavelet carrier at `scale`.
#[inline]
pub fn pseudo_frequency(scale: f64, sample_rate_hz: f64) -> f64 {
    MORLET_CARRIER / (2.0 * PI) * sample_rate_hz / scale
}

/// Inverse of [`pseudo_frequency`].
#[inline]
pub fn scale_for_frequency(frequency_hz: f64, sample_rate_hz: f64) -> f64 {
    MORLET_CARRIER / (2.0 * PI) * sample_rate_hz / frequency_hz
}

/// Strictly increasing wavelet scales, in samples per wavelet unit.
/// Index 0 is the smallest scale, i.e. the highest frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    scales: Vec<f64>,
    f_min_hz: f64,
    f_max_hz: f64,
    sample_rate_hz: f64,
}

impl ScaleGrid {
    /// Log-spaced scales whose pseudo-frequencies run from `f_max_hz` down to `f_min_hz`.
    pub fn new(
        f_min_hz: f64,
        f_max_hz: f64,
        num_scales: usize,
        sample_rate_hz: f64,
    ) -> Result<Self, CwtError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(CwtError::Grid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(f_min_hz.is_finite() && f_max_hz.is_finite() && 0.0 < f_min_hz && f_min_hz < f_max_hz)
        {
            return Err(CwtError::Grid(format!(
                "need 0 < f_min < f_max, got f_min={f_min_hz}, f_max={f_max_hz}"
            )));
        }
        if f_max_hz > sample_rate_hz / 2.0 {
            return Err(CwtError::Grid(format!(
                "f_max {f_max_hz} exceeds the Nyquist rate {}",
                sample_rate_hz / 2.0
            )));
        }
        if num_scales < 2 {
            return Err(CwtError::Grid(format!(
                "need at least 2 scales, got {num_scales}"
            )));
        }
        let a_min = scale_for_frequency(f_max_hz, sample_rate_hz);
        let a_max = scale_for_frequency(f_min_hz, sample_rate_hz);
        let (ln_lo, ln_hi) = (a_min.ln(), a_max.ln());
        let last = num_scales - 1;
        let scales = (0..num_scales)
            .map(|i| match i {
                0 => a_min,
                i if i == last => a_max,
                i => (ln_lo + (ln_hi - ln_lo) * i as f64 / last as f64).exp(),
            })
            .collect();
        Ok(Self {
            scales,
            f_min_hz,
            f_max_hz,
            sample_rate_hz,
        })
    }

    /// `num_scales` scales spanning `[fs/500, fs/4]`.
    pub fn default_for(sample_rate_hz: f64, num_scales: usize) -> Result<Self, CwtError> {
        Self::new(
            sample_rate_hz * DEFAULT_F_MIN_FRACTION,
            sample_rate_hz * DEFAULT_F_MAX_FRACTION,
            num_scales,
            sample_rate_hz,
        )
    }

    /// Wrap explicit scales. A single scale is allowed here.
    pub fn from_scales(scales: Vec<f64>, sample_rate_hz: f64) -> Result<Self, CwtError> {
        if scales.is_empty() {
            return Err(CwtError::Grid("no scales".into()));
        }
        if scales.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(CwtError::Grid("scales must be positive and finite".into()));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CwtError::Grid("scales must be strictly increasing".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(CwtError::Grid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let f_max_hz = pseudo_frequency(scales[0], sample_rate_hz);
        let f_min_hz = pseudo_frequency(*scales.last().unwrap(), sample_rate_hz);
        Ok(Self {
            scales,
            f_min_hz,
            f_max_hz,
            sample_rate_hz,
        })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn f_min_hz(&self) -> f64 {
        self.f_min_hz
    }

    pub fn f_max_hz(&self) -> f64 {
        self.f_max_hz
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Pseudo-frequency of row `index`.
    pub fn frequency(&self, index: usize) -> f64 {
        pseudo_frequency(self.scales[index], self.sample_rate_hz)
    }

    pub fn describe(&self) -> String {
        format!(
            "morlet5 {} log scales {:.3}-{:.3} Hz @ {} Hz",
            self.len(),
            self.f_min_hz,
            self.f_max_hz,
            self.sample_rate_hz
        )
    }
}

/// Same as [`ScaleGrid::new`].
pub fn make_scale_grid(
    f_min_hz: f64,
    f_max_hz: f64,
    num_scales: usize,
    sample_rate_hz: f64,
) -> Result<ScaleGrid, CwtError> {
    ScaleGrid::new(f_min_hz, f_max_hz, num_scales, sample_rate_hz)
}

/// CWT coefficients: one row per scale, one column per time shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    coefficients: Matrix,
    scale_grid: ScaleGrid,
}

impl Scalogram {
    /// Panics when the row count disagrees with the grid.
    pub fn new(coefficients: Matrix, scale_grid: ScaleGrid) -> Self {
        assert_eq!(
            coefficients.rows(),
            scale_grid.len(),
            "scalogram rows must match the number of scales"
        );
        Self {
            coefficients,
            scale_grid,
        }
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn scale_grid(&self) -> &ScaleGrid {
        &self.scale_grid
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.scale_grid.sample_rate_hz
    }

    pub fn num_scales(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn window_len(&self) -> usize {
        self.coefficients.cols()
    }

    pub fn into_coefficients(self) -> Matrix {
        self.coefficients
    }
}

fn check_inputs(segment: &Segment, grid: &ScaleGrid) -> Result<(), CwtError> {
    if segment.is_empty() {
        return Err(CwtError::EmptySegment);
    }
    let (s, g) = (segment.sample_rate_hz(), grid.sample_rate_hz());
    if ((s - g) / g).abs() > 1e-9 {
        return Err(CwtError::RateMismatch {
            segment: s,
            grid: g,
        });
    }
    Ok(())
}

/// Number of taps on each side of the wavelet center at `scale`, clipped so
/// the kernel never extends past what a length-`n` signal can reach.
fn half_width(scale: f64, n: usize) -> usize {
    ((SUPPORT_HALF_WIDTH * scale).floor() as usize).min(n.saturating_sub(1))
}

/// `ψ(m / a) / √a` for `m = −k..=k`.
fn kernel_taps(scale: f64, k: usize) -> Vec<f64> {
    let norm = scale.sqrt().recip();
    (-(k as isize)..=k as isize)
        .map(|m| morlet(m as f64 / scale) * norm)
        .collect()
}

/// Reference transform: the truncated sum evaluated term by term.
pub fn cwt_direct(segment: &Segment, grid: &ScaleGrid) -> Result<Scalogram, CwtError> {
    check_inputs(segment, grid)?;
    let x = segment.samples();
    let n = x.len();
    let mut out = Matrix::zeros(grid.len(), n);
    for (row, &scale) in grid.scales().iter().enumerate() {
        let k = half_width(scale, n);
        let taps = kernel_taps(scale, k);
        let dst = out.row_mut(row);
        for (b, slot) in dst.iter_mut().enumerate() {
            let lo = b.saturating_sub(k);
            let hi = (b + k).min(n - 1);
            let mut acc = 0.0;
            for t in lo..=hi {
                acc += x[t] * taps[t + k - b];
            }
            *slot = acc;
        }
    }
    Ok(Scalogram::new(out, grid.clone()))
}

/// FFT-accelerated transform, numerically equivalent to [`cwt_direct`].
///
/// Scales are processed in pairs: both real kernels share one complex FFT
/// (`g₁ + i·g₂`), and since the signal is real the inverse transform yields
/// the two correlations in its real and imaginary parts.
pub fn cwt_fft(segment: &Segment, grid: &ScaleGrid) -> Result<Scalogram, CwtError> {
    check_inputs(segment, grid)?;
    let x = segment.samples();
    let n = x.len();
    let k_max = grid
        .scales()
        .iter()
        .map(|&a| half_width(a, n))
        .max()
        .unwrap_or(0);
    let fft_len = (n + 2 * k_max + 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);
    let mut scratch = vec![Complex64::default(); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];

    let mut spectrum: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(fft_len)
        .collect();
    forward.process_with_scratch(&mut spectrum, &mut scratch);

    let mut out = Matrix::zeros(grid.len(), n);
    let mut buf = vec![Complex64::default(); fft_len];
    let inv_len = 1.0 / fft_len as f64;
    let scales = grid.scales();
    let mut row = 0;
    while row < scales.len() {
        let pair = row + 1 < scales.len();
        buf.iter_mut().for_each(|c| *c = Complex64::default());
        place_kernel(&mut buf, scales[row], n, fft_len, |c, v| c.re = v);
        if pair {
            place_kernel(&mut buf, scales[row + 1], n, fft_len, |c, v| c.im = v);
        }
        forward.process_with_scratch(&mut buf, &mut scratch);
        for (c, s) in buf.iter_mut().zip(&spectrum) {
            *c *= s;
        }
        inverse.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in out.row_mut(row).iter_mut().zip(&buf) {
            *dst = c.re * inv_len;
        }
        if pair {
            for (dst, c) in out.row_mut(row + 1).iter_mut().zip(&buf) {
                *dst = c.im * inv_len;
            }
        }
        row += if pair { 2 } else { 1 };
    }
    Ok(Scalogram::new(out, grid.clone()))
}

/// Write the reversed kernel `g[j] = h[−j]` into circular positions so that
/// circular convolution with `x` equals the linear correlation for outputs `0..n`.
fn place_kernel(
    buf: &mut [Complex64],
    scale: f64,
    n: usize,
    fft_len: usize,
    set: impl Fn(&mut Complex64, f64),
) {
    let k = half_width(scale, n);
    let taps = kernel_taps(scale, k);
    for (i, &v) in taps.iter().enumerate() {
        let m = i as isize - k as isize;
        let j = (-m).rem_euclid(fft_len as isize) as usize;
        set(&mut buf[j], v);
    }
}

/// Mean absolute coefficient of each row.
pub fn row_energy(scalogram: &Scalogram) -> Vec<f64> {
    let m = scalogram.coefficients();
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>() / m.cols().max(1) as f64)
        .collect()
}

/// Pseudo-frequency of the row with the largest mean `|coefficient|`.
/// Ties go to the lower row index.
pub fn ridge_frequency(scalogram: &Scalogram) -> f64 {
    let energy = row_energy(scalogram);
    let mut best = 0;
    for (i, &e) in energy.iter().enumerate().skip(1) {
        if e > energy[best] {
            best = i;
        }
    }
    scalogram.scale_grid().frequency(best)
}

/// Binary dump: `u32` rows, `u32` cols (little-endian), then row-major `f64` LE.
pub fn encode_scalogram_dump(matrix: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + matrix.as_slice().len() * 8);
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scalogram_dump(bytes: &[u8]) -> Result<Matrix, CwtError> {
    if bytes.len() < 8 {
        return Err(CwtError::Dump(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != rows * cols * 8 {
        return Err(CwtError::Dump(format!(
            "header says {rows}x{cols} but body holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn write_scalogram_dump(scalogram: &Scalogram, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, encode_scalogram_dump(scalogram.coefficients()))
}

pub fn read_scalogram_dump(path: impl AsRef<Path>) -> crate::Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(decode_scalogram_dump(&bytes)?)
}
