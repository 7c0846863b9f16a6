//! Vibration signals in, object-detection datasets and detector scores out.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`signal`]: load recordings (csv, wav, raw f32) and synthesize bearing-fault signals
//! * [`segment`]: overlapping fixed-length windows
//! * [`cwt`]: real Morlet continuous wavelet transform, FFT path plus direct-sum reference
//! * [`render`]: log compression, min-max normalization, bilinear resize, PNG output
//! * [`annotation`]: fault classes and YOLO label/prediction files
//! * [`dataset`]: stratified splits, augmentation, dataset directory + manifest
//! * [`eval`]: IoU matching, AP, mAP@0.5, precision, recall, F1
//! * [`report`]: published reference numbers and deltas against them
//! * [`cli`]: the `scalodet` command line
//!
//! ```no_run
//! use scalodet::{cwt, segment, signal};
//!
//! let spec = signal::FaultSpec::preset(scalodet::FaultClass::InnerRace);
//! let sig = signal::generate_fault_signal(&spec, 0.5, 12_000.0, 7).unwrap();
//! let segments = segment::segment_signal(&sig, 2048, 0.5).unwrap();
//! let grid = cwt::ScaleGrid::default_for(sig.sample_rate_hz(), 64).unwrap();
//! let scalogram = cwt::cwt_fft(&segments[0], &grid).unwrap();
//! println!("ridge at {:.1} Hz", cwt::ridge_frequency(&scalogram));
//! ```

pub mod annotation;
pub mod cli;
pub mod config;
pub mod cwt;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod render;
pub mod report;
pub mod segment;
pub mod signal;

pub use annotation::{Annotation, Detection, FaultClass};
pub use config::PipelineConfig;
pub use cwt::{Scalogram, ScaleGrid};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use render::SpectrogramImage;
pub use segment::Segment;
pub use signal::{FaultSpec, Signal};
