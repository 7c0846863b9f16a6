//! Scalogram → detection-ready image.
//!
//! `|c|` is log-compressed, min-max normalized to `[0, 1]` per image, resized
//! with corner-aligned bilinear interpolation and written as an 8-bit PNG.
//! Row 0 of the image is the highest frequency.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwt::Scalogram;
use crate::matrix::Matrix;

pub const DEFAULT_IMAGE_SIZE: usize = 640;
pub const DEFAULT_LOG_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("pixel ({row}, {col}) = {value} outside [0, 1]")]
    PixelRange { row: usize, col: usize, value: f64 },
    #[error("image dimensions must be positive, got {height}x{width}")]
    ZeroSize { height: usize, width: usize },
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    /// Single-channel 8-bit.
    #[default]
    Grayscale,
    /// RGB through a perceptually uniform blue-green-yellow ramp.
    Viridis,
}

/// Normalized image plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pixels: Matrix,
    colormap: Colormap,
    provenance: String,
}

impl SpectrogramImage {
    pub fn new(
        pixels: Matrix,
        colormap: Colormap,
        provenance: impl Into<String>,
    ) -> Result<Self, RenderError> {
        if pixels.rows() == 0 || pixels.cols() == 0 {
            return Err(RenderError::ZeroSize {
                height: pixels.rows(),
                width: pixels.cols(),
            });
        }
        for row in 0..pixels.rows() {
            for (col, &value) in pixels.row(row).iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(RenderError::PixelRange { row, col, value });
                }
            }
        }
        Ok(Self {
            pixels,
            colormap,
            provenance: provenance.into(),
        })
    }

    pub fn pixels(&self) -> &Matrix {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.pixels.rows()
    }

    pub fn width(&self) -> usize {
        self.pixels.cols()
    }

    pub fn colormap(&self) -> Colormap {
        self.colormap
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Swap pixels for a same-shaped buffer that is already known to be in range.
    pub(crate) fn with_pixels(&self, pixels: Matrix) -> Self {
        debug_assert_eq!((pixels.rows(), pixels.cols()), (self.height(), self.width()));
        Self {
            pixels,
            colormap: self.colormap,
            provenance: self.provenance.clone(),
        }
    }
}

/// `log(|c| + ε)`, then min-max scaled to `[0, 1]`; all zeros if constant.
pub fn log_normalize(scalogram: &Scalogram, epsilon: f64) -> Matrix {
    log_normalize_matrix(scalogram.coefficients(), epsilon)
}

pub fn log_normalize_matrix(coefficients: &Matrix, epsilon: f64) -> Matrix {
    let logged = coefficients.map(|c| (c.abs() + epsilon).ln());
    let Some((lo, hi)) = logged.min_max() else {
        return logged;
    };
    if hi == lo {
        return Matrix::zeros(logged.rows(), logged.cols());
    }
    let span = hi - lo;
    logged.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Bilinear resize with corner-aligned sampling: output corners coincide with
/// input corners. Equal dimensions return an exact copy.
pub fn resize(matrix: &Matrix, out_h: usize, out_w: usize) -> Matrix {
    let (in_h, in_w) = (matrix.rows(), matrix.cols());
    assert!(in_h > 0 && in_w > 0, "cannot resize an empty matrix");
    if (in_h, in_w) == (out_h, out_w) {
        return matrix.clone();
    }
    let ys = sample_positions(in_h, out_h);
    let xs = sample_positions(in_w, out_w);
    let mut out = Matrix::zeros(out_h, out_w);
    for (i, &(y0, y1, wy)) in ys.iter().enumerate() {
        let (r0, r1) = (matrix.row(y0), matrix.row(y1));
        let dst = out.row_mut(i);
        for (j, &(x0, x1, wx)) in xs.iter().enumerate() {
            let top = r0[x0] + (r0[x1] - r0[x0]) * wx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * wx;
            dst[j] = top + (bottom - top) * wy;
        }
    }
    out
}

/// For each output index: lower source index, upper source index, weight of the upper.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|i| {
            if input == 1 || output == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (input - 1) as f64 / (output - 1) as f64;
            let lo = (pos.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub height: usize,
    pub width: usize,
    pub log_epsilon: f64,
    pub colormap: Colormap,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            height: DEFAULT_IMAGE_SIZE,
            width: DEFAULT_IMAGE_SIZE,
            log_epsilon: DEFAULT_LOG_EPSILON,
            colormap: Colormap::Grayscale,
        }
    }
}

/// Log-normalize and resize in one step.
pub fn spectrogram_image(
    scalogram: &Scalogram,
    options: &RenderOptions,
    provenance: impl Into<String>,
) -> Result<SpectrogramImage, RenderError> {
    if options.height == 0 || options.width == 0 {
        return Err(RenderError::ZeroSize {
            height: options.height,
            width: options.width,
        });
    }
    let normalized = log_normalize(scalogram, options.log_epsilon);
    let mut pixels = resize(&normalized, options.height, options.width);
    // Bilinear blends stay in range up to the last ulp.
    pixels.as_mut_slice().iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    SpectrogramImage::new(pixels, options.colormap, provenance)
}

#[inline]
pub fn quantize(p: f64) -> u8 {
    (p * 255.0).round().clamp(0.0, 255.0) as u8
}

// Viridis sampled at 1/8 intervals.
const VIRIDIS_ANCHORS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [72.0, 40.0, 120.0],
    [62.0, 73.0, 137.0],
    [49.0, 104.0, 142.0],
    [38.0, 130.0, 142.0],
    [31.0, 158.0, 137.0],
    [53.0, 183.0, 121.0],
    [110.0, 206.0, 88.0],
    [253.0, 231.0, 37.0],
];

/// The 256-entry RGB table used for [`Colormap::Viridis`].
pub fn viridis_lut() -> &'static [[u8; 3]; 256] {
    static LUT: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [[0u8; 3]; 256];
        let segments = (VIRIDIS_ANCHORS.len() - 1) as f64;
        for (i, entry) in lut.iter_mut().enumerate() {
            let pos = i as f64 / 255.0 * segments;
            let lo = (pos.floor() as usize).min(VIRIDIS_ANCHORS.len() - 2);
            let w = pos - lo as f64;
            for c in 0..3 {
                let v = VIRIDIS_ANCHORS[lo][c] * (1.0 - w) + VIRIDIS_ANCHORS[lo + 1][c] * w;
                entry[c] = v.round() as u8;
            }
        }
        lut
    })
}

/// PNG bytes for `image`: gray8 for grayscale, rgb8 through the LUT otherwise.
pub fn encode_png(image: &SpectrogramImage) -> Result<Vec<u8>, RenderError> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let levels = image.pixels().as_slice().iter().map(|&p| quantize(p));
    let (color, data): (png::ColorType, Vec<u8>) = match image.colormap() {
        Colormap::Grayscale => (png::ColorType::Grayscale, levels.collect()),
        Colormap::Viridis => {
            let lut = viridis_lut();
            (
                png::ColorType::Rgb,
                levels.flat_map(|l| lut[l as usize]).collect(),
            )
        }
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w, h);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| RenderError::Png(e.to_string()))?;
        writer
            .write_image_data(&data)
            .map_err(|e| RenderError::Png(e.to_string()))?;
        writer.finish().map_err(|e| RenderError::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn render_png(image: &SpectrogramImage, path: impl AsRef<Path>) -> Result<(), RenderError> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    fs::write(path, bytes).map_err(|source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cwt::ScaleGrid;
    use proptest::prelude::*;

    fn scalogram(rows: &[Vec<f64>]) -> Scalogram {
        let scales = (1..=rows.len()).map(|i| i as f64).collect();
        Scalogram::new(
            Matrix::from_rows(rows),
            ScaleGrid::from_scales(scales, 1000.0).unwrap(),
        )
    }

    #[test]
    fn constant_scalogram_normalizes_to_zero() {
        let s = scalogram(&[vec![3.0; 4], vec![-3.0; 4]]);
        assert!(log_normalize(&s, 1e-10).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_entry_hand_case() {
        let eps = DEFAULT_LOG_EPSILON;
        let s = scalogram(&[vec![0.0, std::f64::consts::E - eps]]);
        let out = log_normalize(&s, eps);
        assert_eq!(out.get(0, 0), 0.0);
        assert!((out.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resize_two_by_two_to_two_by_three() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
        let out = resize(&m, 2, 3);
        assert_eq!(out.row(0), &[0.0, 0.5, 1.0]);
        assert_eq!(out.row(1), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let m = Matrix::from_rows(&[vec![0.1, 0.7, 0.3], vec![0.9, 0.2, 0.4]]);
        assert_eq!(resize(&m, 2, 3), m);
        let c = Matrix::filled(5, 7, 0.37);
        assert!(resize(&c, 13, 3).as_slice().iter().all(|&v| v == 0.37));
        let single = Matrix::filled(1, 1, 0.25);
        assert!(resize(&single, 4, 4).as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn image_rejects_out_of_range() {
        let m = Matrix::from_rows(&[vec![0.0, 1.5]]);
        assert!(matches!(
            SpectrogramImage::new(m, Colormap::Grayscale, ""),
            Err(RenderError::PixelRange { col: 1, .. })
        ));
    }

    #[test]
    fn viridis_lut_endpoints() {
        let lut = viridis_lut();
        assert_eq!(lut[0], [68, 1, 84]);
        assert_eq!(lut[255], [253, 231, 37]);
    }

    #[test]
    fn unwritable_path_errors() {
        let img = SpectrogramImage::new(Matrix::zeros(2, 2), Colormap::Grayscale, "").unwrap();
        assert!(matches!(
            render_png(&img, "/nonexistent-dir/x.png"),
            Err(RenderError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn normalized_in_unit_interval(vals in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let n = vals.len();
            let s = scalogram(&[vals]);
            let out = log_normalize(&s, DEFAULT_LOG_EPSILON);
            prop_assert_eq!(out.cols(), n);
            prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn normalization_ignores_positive_scaling(
            vals in prop::collection::vec(1e-3f64..1e3, 2..40),
            alpha in 1e-2f64..1e2,
        ) {
            // ε negligible against these magnitudes, so log α cancels in min-max.
            let a = log_normalize(&scalogram(std::slice::from_ref(&vals)), 1e-300);
            let b = log_normalize(&scalogram(&[vals.iter().map(|v| v * alpha).collect()]), 1e-300);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn resize_stays_in_input_range(
            h in 1usize..6, w in 1usize..6, oh in 1usize..12, ow in 1usize..12, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_vec(h, w, (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect());
            let (lo, hi) = m.min_max().unwrap();
            let out = resize(&m, oh, ow);
            prop_assert!(out.as_slice().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }
}
