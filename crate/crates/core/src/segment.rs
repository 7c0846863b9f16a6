//! Fixed-length overlapping windows over a [`Signal`].

use thiserror::Error;

use crate::annotation::FaultClass;
use crate::signal::Signal;

pub const DEFAULT_WINDOW_LEN: usize = 2048;
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("signal has {len} samples, shorter than the window length {window_len}")]
    TooShort { len: usize, window_len: usize },
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("overlap fraction must lie in [0, 1), got {0}")]
    Overlap(f64),
    #[error("window {window_len} with overlap {overlap} gives a zero hop")]
    ZeroHop { window_len: usize, overlap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    start_index: usize,
    parent_rate_hz: f64,
    inherited_label: Option<FaultClass>,
}

impl Segment {
    /// Build a stand-alone segment, e.g. for transforming an arbitrary buffer.
    pub fn from_samples(samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            start_index: 0,
            parent_rate_hz: sample_rate_hz,
            inherited_label: None,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.parent_rate_hz
    }

    pub fn label(&self) -> Option<FaultClass> {
        self.inherited_label
    }
}

/// `round(window_len · (1 − overlap))`.
pub fn hop_length(window_len: usize, overlap_fraction: f64) -> Result<usize, SegmentError> {
    if window_len == 0 {
        return Err(SegmentError::ZeroWindow);
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(SegmentError::Overlap(overlap_fraction));
    }
    let hop = (window_len as f64 * (1.0 - overlap_fraction)).round() as usize;
    if hop == 0 {
        return Err(SegmentError::ZeroHop {
            window_len,
            overlap: overlap_fraction,
        });
    }
    Ok(hop)
}

/// Number of full windows; the trailing partial window is dropped.
pub fn segment_count(len: usize, window_len: usize, hop: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

/// Slice `signal` into windows starting at `0, hop, 2·hop, …`.
pub fn segment_signal(
    signal: &Signal,
    window_len: usize,
    overlap_fraction: f64,
) -> Result<Vec<Segment>, SegmentError> {
    let hop = hop_length(window_len, overlap_fraction)?;
    let len = signal.len();
    if len < window_len {
        return Err(SegmentError::TooShort { len, window_len });
    }
    let samples = signal.samples();
    Ok((0..segment_count(len, window_len, hop))
        .map(|i| {
            let start = i * hop;
            Segment {
                samples: samples[start..start + window_len].to_vec(),
                start_index: start,
                parent_rate_hz: signal.sample_rate_hz(),
                inherited_label: signal.source_label(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Signal {
        Signal::new((0..n).map(|i| i as f64).collect(), 1000.0, Some(FaultClass::Ball)).unwrap()
    }

    #[test]
    fn default_parameters_on_4096() {
        let segs = segment_signal(&ramp(4096), 2048, 0.5).unwrap();
        let starts: Vec<_> = segs.iter().map(Segment::start_index).collect();
        assert_eq!(starts, vec![0, 1024, 2048]);
        assert!(segs.iter().all(|s| s.label() == Some(FaultClass::Ball)));
    }

    #[test]
    fn exact_window_gives_one_segment() {
        for overlap in [0.0, 0.25, 0.5, 0.9] {
            assert_eq!(segment_signal(&ramp(2048), 2048, overlap).unwrap().len(), 1);
        }
    }

    #[test]
    fn ten_thousand_samples() {
        // Brute-force enumeration of admissible starts.
        let brute = (0..10_000usize)
            .step_by(1024)
            .filter(|s| s + 2048 <= 10_000)
            .count();
        assert_eq!(brute, 8);
        assert_eq!(segment_signal(&ramp(10_000), 2048, 0.5).unwrap().len(), brute);
    }

    #[test]
    fn short_signal_rejected() {
        assert_eq!(
            segment_signal(&ramp(100), 2048, 0.5).unwrap_err(),
            SegmentError::TooShort {
                len: 100,
                window_len: 2048
            }
        );
    }

    #[test]
    fn bad_overlap_rejected() {
        assert!(matches!(
            segment_signal(&ramp(4096), 2048, 1.0),
            Err(SegmentError::Overlap(_))
        ));
        assert!(matches!(
            segment_signal(&ramp(4096), 2048, -0.1),
            Err(SegmentError::Overlap(_))
        ));
        assert!(matches!(
            segment_signal(&ramp(10), 1, 0.9),
            Err(SegmentError::ZeroHop { .. })
        ));
    }

    #[test]
    fn hop_rounds() {
        assert_eq!(hop_length(1000, 1.0 / 3.0).unwrap(), 667);
        assert_eq!(hop_length(2048, 0.5).unwrap(), 1024);
    }

    proptest! {
        #[test]
        fn segments_tile_parent(len in 16usize..600, window in 1usize..16, overlap in 0.0f64..0.95) {
            let sig = ramp(len);
            let Ok(hop) = hop_length(window, overlap) else { return Ok(()); };
            let segs = segment_signal(&sig, window, overlap).unwrap();
            prop_assert_eq!(segs.len(), (len - window) / hop + 1);
            for (i, seg) in segs.iter().enumerate() {
                prop_assert_eq!(seg.len(), window);
                prop_assert_eq!(seg.start_index(), i * hop);
                prop_assert!(seg.start_index() + window <= len);
                prop_assert_eq!(seg.samples(), &sig.samples()[seg.start_index()..seg.start_index() + window]);
            }
            // Dropped remainder is shorter than a hop past the last window.
            let last = segs.last().unwrap().start_index();
            prop_assert!(last + hop + window > len);
        }
    }
}
