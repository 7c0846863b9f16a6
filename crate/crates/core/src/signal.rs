//! Vibration recordings: loading from disk and synthetic bearing-fault generation.
//!
//! Real dataset files (CWRU, PU, IMS exports) are read as plain numeric series.
//! The generator produces a parametric surrogate so every later stage can be
//! exercised without downloading anything: Gaussian noise, a shaft-rate
//! sinusoid, and for faulty bearings a train of exponentially decaying
//! resonance bursts repeating at the characteristic defect frequency.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::FaultClass;
use crate::segment::DEFAULT_WINDOW_LEN;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed numeric field {field:?} at line {line}")]
    MalformedField {
        path: PathBuf,
        line: usize,
        field: String,
    },
    #[error("{path}: raw f32 file length {len} is not a multiple of 4 bytes")]
    RawLength { path: PathBuf, len: u64 },
    #[error("{path}: unsupported or corrupt wav file: {message}")]
    Wav { path: PathBuf, message: String },
    #[error("empty signal")]
    Empty,
    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("sample rate must be positive and finite, got {0}")]
    SampleRate(f64),
    #[error("invalid fault spec: {0}")]
    InvalidSpec(String),
    #[error("duration yields {samples} samples, fewer than the {required} needed for one segment")]
    TooShort { samples: usize, required: usize },
}

/// A sampled single-channel waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    source_label: Option<FaultClass>,
}

impl Signal {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        source_label: Option<FaultClass>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::SampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SignalError::NonFinite { index, value });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_label,
        })
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

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn source_label(&self) -> Option<FaultClass> {
        self.source_label
    }

    pub fn with_label(mut self, label: Option<FaultClass>) -> Self {
        self.source_label = label;
        self
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// On-disk encodings accepted by [`load_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SignalFormat {
    /// One value per line, optional non-numeric header line.
    Csv,
    /// RIFF wave, PCM integer or 32-bit float.
    Wav,
    /// Headerless little-endian 32-bit floats.
    #[value(name = "raw_f32le", alias = "raw")]
    RawF32Le,
}

impl SignalFormat {
    /// Guess from a file extension: `.csv`/`.txt`, `.wav`, anything else raw.
    pub fn from_extension(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") | Some("txt") => SignalFormat::Csv,
            Some("wav") => SignalFormat::Wav,
            _ => SignalFormat::RawF32Le,
        }
    }
}

/// Load a recording. For wav files the embedded rate replaces `sample_rate_hz`;
/// multi-channel data keeps channel 0 only.
pub fn load_signal(
    path: impl AsRef<Path>,
    format: SignalFormat,
    sample_rate_hz: f64,
) -> Result<Signal, SignalError> {
    let path = path.as_ref();
    match format {
        SignalFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
            Signal::new(parse_csv(path, &text)?, sample_rate_hz, None)
        }
        SignalFormat::RawF32Le => {
            let bytes = fs::read(path).map_err(|source| io_err(path, source))?;
            if bytes.len() % 4 != 0 {
                return Err(SignalError::RawLength {
                    path: path.to_path_buf(),
                    len: bytes.len() as u64,
                });
            }
            let samples = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            Signal::new(samples, sample_rate_hz, None)
        }
        SignalFormat::Wav => load_wav(path),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SignalError {
    SignalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<f64>, SignalError> {
    let mut samples = Vec::new();
    let mut first_content_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // Extra columns are further channels.
        let field = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .next()
            .unwrap_or("")
            .trim();
        match field.parse::<f64>() {
            Ok(v) => samples.push(v),
            Err(_) if first_content_line => {}
            Err(_) => {
                return Err(SignalError::MalformedField {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    field: field.to_string(),
                })
            }
        }
        first_content_line = false;
    }
    Ok(samples)
}

fn load_wav(path: &Path) -> Result<Signal, SignalError> {
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => io_err(path, source),
        other => SignalError::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let full_scale = (1_i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .step_by(channels)
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    Signal::new(samples, spec.sample_rate as f64, None)
}

/// Write samples as headerless little-endian `f32`.
pub fn write_raw_f32le(signal: &Signal, path: impl AsRef<Path>) -> Result<(), SignalError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = signal
        .samples
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|source| io_err(path, source))
}

/// Write one value per line using the shortest representation that parses
/// back to the same `f64`.
pub fn write_csv(signal: &Signal, path: impl AsRef<Path>) -> Result<(), SignalError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(signal.len() * 24);
    for v in &signal.samples {
        out.push_str(&format!("{v}\n"));
    }
    let mut file = fs::File::create(path).map_err(|source| io_err(path, source))?;
    file.write_all(out.as_bytes())
        .map_err(|source| io_err(path, source))
}

/// Parameters of the synthetic bearing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_class: FaultClass,
    /// Shaft rotation rate (Hz).
    pub shaft_hz: f64,
    /// Impulse repetition rate: BPFO, BPFI or BSF depending on the defect.
    pub fault_hz: f64,
    /// Structural resonance excited by each impact (Hz).
    pub resonance_hz: f64,
    /// Exponential ring-down rate (1/s).
    pub decay_rate: f64,
    pub impulse_amplitude: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub shaft_amplitude: f64,
}

impl FaultSpec {
    /// Defaults modeled on a 6205 deep-groove bearing at 1797 rpm. Resonances
    /// sit inside the default 12 kHz analysis band (24 Hz to 3 kHz); only
    /// Normal carries the shaft tone.
    pub fn preset(fault_class: FaultClass) -> Self {
        let shaft_hz = 29.95;
        let (fault_hz, resonance_hz, impulse_amplitude, shaft_amplitude) = match fault_class {
            FaultClass::Normal => (shaft_hz, 2_000.0, 0.0, 0.1),
            FaultClass::Ball => (141.17, 1_900.0, 1.0, 0.0),
            FaultClass::InnerRace => (162.19, 2_700.0, 1.0, 0.0),
            FaultClass::OuterRace => (107.36, 1_100.0, 1.0, 0.0),
        };
        Self {
            fault_class,
            shaft_hz,
            fault_hz,
            resonance_hz,
            decay_rate: 900.0,
            impulse_amplitude,
            noise_std: 0.05,
            shaft_amplitude,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let positive = [
            ("shaft_hz", self.shaft_hz),
            ("fault_hz", self.fault_hz),
            ("resonance_hz", self.resonance_hz),
            ("decay_rate", self.decay_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SignalError::InvalidSpec(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonneg = [
            ("impulse_amplitude", self.impulse_amplitude),
            ("noise_std", self.noise_std),
            ("shaft_amplitude", self.shaft_amplitude),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SignalError::InvalidSpec(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Impulse amplitude actually used; always zero for a healthy bearing.
    pub fn effective_impulse_amplitude(&self) -> f64 {
        match self.fault_class {
            FaultClass::Normal => 0.0,
            _ => self.impulse_amplitude,
        }
    }
}

/// Envelope level below which a ring-down is truncated.
const RINGDOWN_FLOOR: f64 = 1e-12;

/// Synthesize `duration_s` seconds of vibration for `spec`.
///
/// The output depends only on the arguments. Impulse `k` starts at sample
/// `round(k · fs / fault_hz)`, and `floor(duration_s · fault_hz)` impulses are placed.
pub fn generate_fault_signal(
    spec: &FaultSpec,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Signal, SignalError> {
    spec.validate()?;
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(SignalError::SampleRate(sample_rate_hz));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SignalError::InvalidSpec(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let amplitude = spec.effective_impulse_amplitude();
    if amplitude > 0.0 && spec.fault_hz >= sample_rate_hz / 2.0 {
        return Err(SignalError::InvalidSpec(format!(
            "fault_hz {} must be below the Nyquist rate {}",
            spec.fault_hz,
            sample_rate_hz / 2.0
        )));
    }
    let n = (duration_s * sample_rate_hz + 1e-9).floor() as usize;
    if n < DEFAULT_WINDOW_LEN {
        return Err(SignalError::TooShort {
            samples: n,
            required: DEFAULT_WINDOW_LEN,
        });
    }

    let mut samples = vec![0.0; n];

    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.noise_std)
            .map_err(|e| SignalError::InvalidSpec(e.to_string()))?;
        for s in samples.iter_mut() {
            *s = noise.sample(&mut rng);
        }
    }

    if spec.shaft_amplitude > 0.0 {
        let w = 2.0 * PI * spec.shaft_hz / sample_rate_hz;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += spec.shaft_amplitude * (w * i as f64).sin();
        }
    }

    if amplitude > 0.0 {
        let period = sample_rate_hz / spec.fault_hz;
        let count = (duration_s * spec.fault_hz + 1e-9).floor() as usize;
        let tail_len =
            ((-RINGDOWN_FLOOR.ln()) / spec.decay_rate * sample_rate_hz).ceil() as usize + 1;
        let decay_per_sample = spec.decay_rate / sample_rate_hz;
        let w = 2.0 * PI * spec.resonance_hz / sample_rate_hz;
        for k in 0..count {
            let start = (k as f64 * period).round() as usize;
            if start >= n {
                break;
            }
            let end = (start + tail_len).min(n);
            for (j, s) in samples[start..end].iter_mut().enumerate() {
                let t = j as f64;
                *s += amplitude * (-decay_per_sample * t).exp() * (w * t).sin();
            }
        }
    }

    Signal::new(samples, sample_rate_hz, Some(spec.fault_class))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_file(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn csv_three_values() {
        let f = temp_file(b"0.0\n1.0\n-1.0\n");
        let s = load_signal(f.path(), SignalFormat::Csv, 1000.0).unwrap();
        assert_eq!(s.samples(), &[0.0, 1.0, -1.0]);
        assert_eq!(s.sample_rate_hz(), 1000.0);
        let max = s.samples().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn csv_empty_is_error() {
        let f = temp_file(b"");
        let err = load_signal(f.path(), SignalFormat::Csv, 1000.0).unwrap_err();
        assert!(matches!(err, SignalError::Empty));
        assert_eq!(err.to_string(), "empty signal");
    }

    #[test]
    fn csv_header_skipped_and_extra_columns_dropped() {
        let f = temp_file(b"accel,tach\n0.5,9\n0.25,9\n");
        let s = load_signal(f.path(), SignalFormat::Csv, 10.0).unwrap();
        assert_eq!(s.samples(), &[0.5, 0.25]);
    }

    #[test]
    fn csv_malformed_field_reports_line() {
        let f = temp_file(b"1.0\n2.0\nabc\n");
        match load_signal(f.path(), SignalFormat::Csv, 10.0).unwrap_err() {
            SignalError::MalformedField { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "abc");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_non_finite_rejected() {
        let f = temp_file(b"1.0\nNaN\n");
        let err = load_signal(f.path(), SignalFormat::Csv, 10.0).unwrap_err();
        assert!(matches!(err, SignalError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_signal("/nonexistent/x.csv", SignalFormat::Csv, 10.0).unwrap_err();
        assert!(matches!(err, SignalError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }

    #[test]
    fn raw_8192_bytes_is_2048_samples() {
        let f = temp_file(&[0u8; 8192]);
        let s = load_signal(f.path(), SignalFormat::RawF32Le, 12_000.0).unwrap();
        assert_eq!(s.len(), 2048);
    }

    #[test]
    fn raw_bad_length() {
        let f = temp_file(&[0u8; 7]);
        let err = load_signal(f.path(), SignalFormat::RawF32Le, 1.0).unwrap_err();
        assert!(matches!(err, SignalError::RawLength { len: 7, .. }));
    }

    #[test]
    fn wav_stereo_int16_takes_channel_zero_and_embedded_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 48_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(16384_i16, -1_i16), (-32768, 5), (0, 7)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let s = load_signal(&path, SignalFormat::Wav, 1.0).unwrap();
        assert_eq!(s.sample_rate_hz(), 48_000.0);
        assert_eq!(s.samples(), &[0.5, -1.0, 0.0]);
    }

    #[test]
    fn wav_float32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 12_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0.25_f32, -0.75] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let s = load_signal(&path, SignalFormat::Wav, 1.0).unwrap();
        assert_eq!(s.samples(), &[0.25, -0.75]);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(SignalFormat::from_extension(Path::new("a.CSV")), SignalFormat::Csv);
        assert_eq!(SignalFormat::from_extension(Path::new("a.wav")), SignalFormat::Wav);
        assert_eq!(SignalFormat::from_extension(Path::new("a.bin")), SignalFormat::RawF32Le);
    }

    fn silent_normal() -> FaultSpec {
        FaultSpec {
            impulse_amplitude: 0.0,
            noise_std: 0.0,
            shaft_amplitude: 0.0,
            ..FaultSpec::preset(FaultClass::Normal)
        }
    }

    #[test]
    fn zero_spec_is_all_zero() {
        let s = generate_fault_signal(&silent_normal(), 1.0, 4096.0, 3).unwrap();
        assert!(s.samples().iter().all(|&v| v == 0.0));
        assert_eq!(s.source_label(), Some(FaultClass::Normal));
    }

    #[test]
    fn normal_ignores_impulse_amplitude() {
        let spec = FaultSpec {
            impulse_amplitude: 5.0,
            ..silent_normal()
        };
        let s = generate_fault_signal(&spec, 1.0, 4096.0, 3).unwrap();
        assert!(s.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FaultSpec::preset(FaultClass::OuterRace);
        let a = generate_fault_signal(&spec, 0.5, 12_000.0, 99).unwrap();
        let b = generate_fault_signal(&spec, 0.5, 12_000.0, 99).unwrap();
        let c = generate_fault_signal(&spec, 0.5, 12_000.0, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn too_short_duration_rejected() {
        let spec = FaultSpec::preset(FaultClass::Ball);
        let err = generate_fault_signal(&spec, 0.1, 12_000.0, 0).unwrap_err();
        assert!(matches!(err, SignalError::TooShort { samples: 1200, .. }));
    }

    #[test]
    fn fault_rate_above_nyquist_rejected() {
        let spec = FaultSpec {
            fault_hz: 7_000.0,
            ..FaultSpec::preset(FaultClass::Ball)
        };
        assert!(generate_fault_signal(&spec, 1.0, 12_000.0, 0).is_err());
    }

    #[test]
    fn negative_noise_rejected() {
        let spec = FaultSpec {
            noise_std: -1.0,
            ..FaultSpec::preset(FaultClass::Ball)
        };
        assert!(matches!(
            generate_fault_signal(&spec, 1.0, 12_000.0, 0),
            Err(SignalError::InvalidSpec(_))
        ));
    }
}
