//! The `scalodet` command line.
//!
//! Subcommands: `transform`, `synth`, `build`, `evaluate`, `report`.
//! Pipeline flags may also come from a TOML file (`--config`) or from
//! `SCALODET_*` environment variables; explicit flags win over the file.
//! Every output directory receives the effective settings as `config.toml`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::ffi::OsString;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::FaultClass;
use crate::config::{PipelineConfig, CONFIG_FILE_NAME};
use crate::cwt::{cwt_fft, write_scalogram_dump};
use crate::dataset::{build_dataset, LabeledSignal, Split};
use crate::error::Error;
use crate::eval::{evaluate_dataset, EvalReport, DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use crate::render::{render_png, spectrogram_image, Colormap};
use crate::report::compare;
use crate::segment::segment_signal;
use crate::signal::{generate_fault_signal, load_signal, write_csv, FaultSpec, SignalFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

pub const TRUTH_FILE_NAME: &str = "truth.json";

#[derive(Debug, Parser)]
#[command(
    name = "scalodet",
    version,
    about = "Vibration signals to CWT spectrogram detection datasets, and detector evaluation"
)]
pub struct Cli {
    /// Worker threads for per-file stages (output does not depend on it) [default: all cores]
    #[arg(long, global = true, env = "SCALODET_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn signal files into spectrogram PNGs (one per segment)
    Transform(TransformArgs),
    /// Generate a synthetic labeled bearing-fault corpus
    Synth(SynthArgs),
    /// Build a detection dataset (images, labels, splits, manifest)
    Build(BuildArgs),
    /// Score prediction files against a dataset split
    Evaluate(EvaluateArgs),
    /// Compare an evaluation report with published reference numbers
    Report(ReportArgs),
}

/// Flags mirroring [`PipelineConfig`]. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with pipeline settings; flags given here override it
    #[arg(long, env = "SCALODET_CONFIG")]
    pub config: Option<PathBuf>,
    /// Sample rate assumed for csv/raw inputs, Hz [default: 12000]
    #[arg(long, env = "SCALODET_SAMPLE_RATE")]
    pub sample_rate: Option<f64>,
    /// Segment length in samples [default: 2048]
    #[arg(long, env = "SCALODET_WINDOW_LEN")]
    pub window_len: Option<usize>,
    /// Fractional overlap between consecutive segments, in [0, 1) [default: 0.5]
    #[arg(long, env = "SCALODET_OVERLAP")]
    pub overlap: Option<f64>,
    /// Number of log-spaced CWT scales [default: 64]
    #[arg(long, env = "SCALODET_NUM_SCALES")]
    pub num_scales: Option<usize>,
    /// Lowest analysed frequency, Hz [default: sample_rate/500]
    #[arg(long, env = "SCALODET_F_MIN")]
    pub f_min: Option<f64>,
    /// Highest analysed frequency, Hz [default: sample_rate/4]
    #[arg(long, env = "SCALODET_F_MAX")]
    pub f_max: Option<f64>,
    /// Output image side in pixels [default: 640]
    #[arg(long, env = "SCALODET_IMAGE_SIZE")]
    pub image_size: Option<usize>,
    /// PNG color mapping [default: grayscale]
    #[arg(long, env = "SCALODET_COLORMAP", value_enum)]
    pub colormap: Option<Colormap>,
    /// Offset added before the log compression [default: 1e-10]
    #[arg(long, env = "SCALODET_LOG_EPSILON")]
    pub log_epsilon: Option<f64>,
    /// Energy quantile that defines the synthesized box [default: 0.9]
    #[arg(long, env = "SCALODET_ENERGY_QUANTILE")]
    pub energy_quantile: Option<f64>,
    /// Seed for splitting and augmentation [default: 0]
    #[arg(long, env = "SCALODET_SEED")]
    pub seed: Option<u64>,
    /// Train fraction [default: 0.8]
    #[arg(long, env = "SCALODET_TRAIN_RATIO")]
    pub train_ratio: Option<f64>,
    /// Validation fraction [default: 0.1]
    #[arg(long, env = "SCALODET_VAL_RATIO")]
    pub val_ratio: Option<f64>,
    /// Test fraction [default: 0.1]
    #[arg(long, env = "SCALODET_TEST_RATIO")]
    pub test_ratio: Option<f64>,
    /// Augmented copies per training image, 0 disables [default: 1]
    #[arg(long, env = "SCALODET_AUGMENT_COPIES")]
    pub augment_copies: Option<usize>,
    /// Horizontal flip probability [default: 0.5]
    #[arg(long, env = "SCALODET_FLIP_PROBABILITY")]
    pub flip_probability: Option<f64>,
    /// Largest rotation angle in degrees, at most 5 [default: 5]
    #[arg(long, env = "SCALODET_MAX_ROTATION")]
    pub max_rotation: Option<f64>,
    /// Lower contrast factor, at least 0.8 [default: 0.8]
    #[arg(long, env = "SCALODET_CONTRAST_MIN")]
    pub contrast_min: Option<f64>,
    /// Upper contrast factor, at most 1.2 [default: 1.2]
    #[arg(long, env = "SCALODET_CONTRAST_MAX")]
    pub contrast_max: Option<f64>,
    /// Rotated boxes keeping less than this fraction of their area are dropped [default: 0.1]
    #[arg(long, env = "SCALODET_MIN_BOX_AREA")]
    pub min_box_area: Option<f64>,
}

impl ConfigArgs {
    /// File (or defaults) first, then every flag that was given.
    pub fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        apply! {
            sample_rate => sample_rate_hz,
            window_len => window_len,
            overlap => overlap,
            num_scales => num_scales,
            image_size => image_size,
            colormap => colormap,
            log_epsilon => log_epsilon,
            energy_quantile => energy_quantile,
            seed => seed,
            train_ratio => split.train,
            val_ratio => split.val,
            test_ratio => split.test,
            augment_copies => augment.copies,
            flip_probability => augment.flip_probability,
            max_rotation => augment.max_rotation_deg,
            contrast_min => augment.contrast_min,
            contrast_max => augment.contrast_max,
            min_box_area => augment.min_box_area_fraction,
        }
        if self.f_min.is_some() {
            c.f_min_hz = self.f_min;
        }
        if self.f_max.is_some() {
            c.f_max_hz = self.f_max;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Signal files (.csv/.txt, .wav, anything else raw f32 little-endian)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory
    #[arg(short, long, env = "SCALODET_OUT")]
    pub out: PathBuf,
    /// Force an input format instead of guessing from the extension
    #[arg(long, value_enum)]
    pub format: Option<SignalFormat>,
    /// Also write raw coefficients as `<name>.scalogram`
    #[arg(long)]
    pub dump: bool,
    #[command(flatten)]
    pub pipeline: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of signals; classes are cycled in spec order
    #[arg(long, env = "SCALODET_COUNT")]
    pub count: usize,
    /// Base seed; signal i uses seed + i [default: 0]
    #[arg(long, env = "SCALODET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Signal length in seconds [default: 0.5]
    #[arg(long, default_value_t = 0.5)]
    pub duration: f64,
    /// Sample rate, Hz [default: 12000]
    #[arg(long, default_value_t = crate::config::DEFAULT_SAMPLE_RATE_HZ)]
    pub sample_rate: f64,
    /// TOML file with `[[spec]]` tables; the four class presets when absent
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory
    #[arg(short, long, env = "SCALODET_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory of signal files, usually written by `synth`
    #[arg(long)]
    pub signals: PathBuf,
    /// Dataset output directory
    #[arg(short, long, env = "SCALODET_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset directory written by `build`
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory with one `<image name>.txt` prediction file per image
    #[arg(long)]
    pub predictions: PathBuf,
    /// Split to score [default: test]
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// IoU needed for a match [default: 0.5]
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// Confidence cut for precision/recall/F1 [default: 0.25]
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub conf: f64,
    /// Where report.json and report.txt go
    #[arg(short, long, env = "SCALODET_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `evaluate`
    #[arg(long)]
    pub eval: PathBuf,
    /// Reference dataset: CWRU, PU or IMS
    #[arg(long)]
    pub dataset: String,
    /// Reference model: YOLOv9, YOLOv10, YOLOv11 or MCNN-LSTM
    #[arg(long)]
    pub model: String,
    /// Also write comparison.json and comparison.txt here
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Ground truth written by `synth` and read back by `build`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub signals: Vec<TruthEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub file: String,
    pub class: FaultClass,
    pub seed: u64,
    pub spec: FaultSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    spec: Vec<FaultSpec>,
}

#[derive(Serialize)]
struct SynthSettings<'a> {
    count: usize,
    seed: u64,
    duration_s: f64,
    sample_rate_hz: f64,
    spec: &'a [FaultSpec],
}

#[derive(Serialize)]
struct EvaluateSettings {
    dataset: PathBuf,
    predictions: PathBuf,
    split: Split,
    iou_threshold: f64,
    confidence_threshold: f64,
}

#[derive(Serialize)]
struct ReportSettings {
    eval: PathBuf,
    dataset: String,
    model: String,
}

/// A failed command: message for stderr and the exit code to return.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Report(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| execute(&cli))) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            f.code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            eprintln!("internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

/// Run an already parsed command line.
pub fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        builder = builder.num_threads(n as usize);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Transform(a) => transform(a),
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn echo_toml(dir: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = toml::to_string_pretty(value)
        .map_err(|e| Failure::usage(format!("cannot serialize settings: {e}")))?;
    write_text(&dir.join(CONFIG_FILE_NAME), &text)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".to_string())
}

fn transform(a: &TransformArgs) -> Result<(), Failure> {
    let config = a.pipeline.resolve()?;
    create_dir(&a.out)?;
    config.echo_into(&a.out)?;
    let written: Vec<usize> = a
        .inputs
        .par_iter()
        .map(|path| transform_file(path, a, &config))
        .collect::<Result<_, _>>()?;
    println!(
        "wrote {} spectrograms from {} file(s) to {}",
        written.iter().sum::<usize>(),
        a.inputs.len(),
        a.out.display()
    );
    Ok(())
}

fn transform_file(path: &Path, a: &TransformArgs, config: &PipelineConfig) -> Result<usize, Failure> {
    let format = a.format.unwrap_or_else(|| SignalFormat::from_extension(path));
    let signal = load_signal(path, format, config.sample_rate_hz).map_err(Error::from)?;
    let at = |seg: Option<usize>, e: Error| {
        let place = match seg {
            Some(i) => format!("{} segment {i}", path.display()),
            None => path.display().to_string(),
        };
        Failure {
            message: format!("{place}: {}", e),
            ..Failure::from(e)
        }
    };
    let grid = config
        .scale_grid(signal.sample_rate_hz())
        .map_err(|e| at(None, e))?;
    let segments = segment_signal(&signal, config.window_len, config.overlap)
        .map_err(|e| at(None, e.into()))?;
    let stem = file_stem(path);
    let render = config.render_options();
    for (i, seg) in segments.iter().enumerate() {
        let name = format!("{stem}_s{i:04}");
        let scalogram = cwt_fft(seg, &grid).map_err(|e| at(Some(i), e.into()))?;
        let provenance = format!(
            "{} start={} len={} {}",
            path.display(),
            seg.start_index(),
            seg.len(),
            grid.describe()
        );
        let image = spectrogram_image(&scalogram, &render, provenance)
            .map_err(|e| at(Some(i), e.into()))?;
        render_png(&image, a.out.join(format!("{name}.png"))).map_err(|e| at(Some(i), e.into()))?;
        if a.dump {
            let p = a.out.join(format!("{name}.scalogram"));
            write_scalogram_dump(&scalogram, &p)
                .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(segments.len())
}

fn load_specs(path: Option<&Path>) -> Result<Vec<FaultSpec>, Failure> {
    let Some(path) = path else {
        return Ok(FaultClass::ALL.iter().map(|&c| FaultSpec::preset(c)).collect());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let file: SpecFile = toml::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if file.spec.is_empty() {
        return Err(Failure::usage(format!("{}: no [[spec]] entries", path.display())));
    }
    for s in &file.spec {
        s.validate()
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    Ok(file.spec)
}

fn class_slug(c: FaultClass) -> &'static str {
    match c {
        FaultClass::Normal => "normal",
        FaultClass::Ball => "ball",
        FaultClass::InnerRace => "inner_race",
        FaultClass::OuterRace => "outer_race",
    }
}

fn synth(a: &SynthArgs) -> Result<(), Failure> {
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let specs = load_specs(a.spec.as_deref())?;
    create_dir(&a.out)?;

    let mut per_class = [0usize; 4];
    let plan: Vec<(String, u64, &FaultSpec)> = (0..a.count)
        .map(|i| {
            let spec = &specs[i % specs.len()];
            let k = &mut per_class[spec.fault_class.id() as usize];
            let name = format!("{}_{:03}.csv", class_slug(spec.fault_class), *k);
            *k += 1;
            (name, a.seed.wrapping_add(i as u64), spec)
        })
        .collect();

    plan.par_iter()
        .map(|(name, seed, spec)| {
            let signal = generate_fault_signal(spec, a.duration, a.sample_rate, *seed)
                .map_err(|e| Failure::usage(format!("{name}: {e}")))?;
            write_csv(&signal, a.out.join(name)).map_err(|e| Failure::from(Error::from(e)))
        })
        .collect::<Result<Vec<()>, _>>()?;

    let truth = TruthFile {
        seed: a.seed,
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
        signals: plan
            .iter()
            .map(|(name, seed, spec)| TruthEntry {
                file: name.clone(),
                class: spec.fault_class,
                seed: *seed,
                spec: (*spec).clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n";
    write_text(&a.out.join(TRUTH_FILE_NAME), &json)?;
    echo_toml(
        &a.out,
        &SynthSettings {
            count: a.count,
            seed: a.seed,
            duration_s: a.duration,
            sample_rate_hz: a.sample_rate,
            spec: &specs,
        },
    )?;
    println!("wrote {} signals to {}", a.count, a.out.display());
    Ok(())
}

fn is_signal_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("csv" | "txt" | "wav" | "f32" | "raw" | "bin")
    )
}

/// `inner_race_007` → InnerRace: everything before the last `_` names the class.
fn class_from_stem(stem: &str) -> Option<FaultClass> {
    let head = stem.rsplit_once('_').map_or(stem, |(h, _)| h);
    head.parse().ok().or_else(|| stem.parse().ok())
}

/// Signals listed in `truth.json` if present, otherwise every signal file in
/// the directory with its class taken from the file name.
pub fn discover_signals(dir: &Path) -> Result<Vec<(PathBuf, FaultClass)>, Error> {
    let truth_path = dir.join(TRUTH_FILE_NAME);
    if truth_path.is_file() {
        let text = fs::read_to_string(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
        let truth: TruthFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: truth_path.display().to_string(),
            source,
        })?;
        return Ok(truth
            .signals
            .into_iter()
            .map(|t| (dir.join(t.file), t.class))
            .collect());
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_signal_file(&path) {
            continue;
        }
        let class = class_from_stem(&file_stem(&path)).ok_or_else(|| {
            Error::Config(format!(
                "{}: cannot tell the fault class from the file name and no {TRUTH_FILE_NAME} exists",
                path.display()
            ))
        })?;
        found.push((path, class));
    }
    found.sort();
    Ok(found)
}

fn build(a: &BuildArgs) -> Result<(), Failure> {
    let config = a.pipeline.resolve()?;
    let listed = discover_signals(&a.signals)?;
    if listed.is_empty() {
        return Err(Failure::data(format!("{}: no signal files", a.signals.display())));
    }
    let signals: Vec<LabeledSignal> = listed
        .par_iter()
        .map(|(path, class)| {
            let signal = load_signal(path, SignalFormat::from_extension(path), config.sample_rate_hz)
                .map_err(Error::from)?;
            Ok(LabeledSignal {
                id: file_stem(path),
                signal: signal.with_label(Some(*class)),
            })
        })
        .collect::<Result<_, Error>>()?;
    create_dir(&a.out)?;
    let manifest = build_dataset(&signals, &config, &a.out)?;
    config.echo_into(&a.out)?;
    println!(
        "dataset {}: train {} / val {} / test {} images",
        a.out.display(),
        manifest.counts.train,
        manifest.counts.val,
        manifest.counts.test
    );
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), Failure> {
    let report = evaluate_dataset(&a.dataset, a.split, &a.predictions, a.iou, a.conf).map_err(|e| {
        match e {
            Error::Eval(crate::eval::EvalError::Threshold { .. }) => Failure::usage(e.to_string()),
            _ => Failure::from(e),
        }
    })?;
    create_dir(&a.out)?;
    report.write(&a.out)?;
    echo_toml(
        &a.out,
        &EvaluateSettings {
            dataset: a.dataset.clone(),
            predictions: a.predictions.clone(),
            split: a.split,
            iou_threshold: a.iou,
            confidence_threshold: a.conf,
        },
    )?;
    print!("{}", report.to_text());
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> Result<(), Failure> {
    let report = EvalReport::load(&a.eval)?;
    let cmp = compare(&report, &a.dataset, &a.model).map_err(Error::from)?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        cmp.write(out)?;
        echo_toml(
            out,
            &ReportSettings {
                eval: a.eval.clone(),
                dataset: cmp.dataset.clone(),
                model: cmp.model.clone(),
            },
        )?;
    }
    print!("{}", cmp.to_text());
    Ok(())
}
