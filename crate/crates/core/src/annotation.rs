//! Fault classes and YOLO-format boxes.
//!
//! Label files hold one `class x_center y_center width height` record per
//! line, predictions add a trailing `confidence`. Coordinates are normalized
//! to the image and written with six decimals.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwt::Scalogram;
use crate::render::{log_normalize, DEFAULT_LOG_EPSILON};

/// Slack allowed when checking that a box lies inside the unit square.
/// Six-decimal text can overshoot the edge by half a unit in the last place.
pub const BOX_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_ENERGY_QUANTILE: f64 = 0.90;
/// Padding added on each side of a synthesized box, as a fraction of the image.
pub const SYNTH_BOX_MARGIN: f64 = 0.02;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum FaultClass {
    Normal = 0,
    Ball = 1,
    InnerRace = 2,
    OuterRace = 3,
}

impl FaultClass {
    pub const ALL: [FaultClass; 4] = [
        FaultClass::Normal,
        FaultClass::Ball,
        FaultClass::InnerRace,
        FaultClass::OuterRace,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultClass::Normal => "Normal",
            FaultClass::Ball => "Ball",
            FaultClass::InnerRace => "InnerRace",
            FaultClass::OuterRace => "OuterRace",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "normal" | "0" => Ok(FaultClass::Normal),
            "ball" | "ballfault" | "1" => Ok(FaultClass::Ball),
            "innerrace" | "innerracefault" | "ir" | "2" => Ok(FaultClass::InnerRace),
            "outerrace" | "outerracefault" | "or" | "3" => Ok(FaultClass::OuterRace),
            _ => Err(format!("unknown fault class {s:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("{reason} at line {line}")]
    Malformed { line: usize, reason: String },
    #[error("unknown class id {id} at line {line}")]
    UnknownClass { line: usize, id: String },
    #[error("box outside the image at line {line}: {reason}")]
    OutOfBounds { line: usize, reason: String },
    #[error("confidence {value} outside [0, 1] at line {line}")]
    Confidence { line: usize, value: f64 },
    #[error("invalid box: {0}")]
    Invalid(String),
    #[error("scalogram has no energy concentration (constant input)")]
    NoEnergyConcentration,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<LabelError>,
    },
}

/// A class plus a normalized axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: FaultClass,
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl Annotation {
    pub fn new(
        class: FaultClass,
        x_center: f64,
        y_center: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, LabelError> {
        let a = Self {
            class,
            x_center,
            y_center,
            width,
            height,
        };
        a.check().map_err(LabelError::Invalid)?;
        Ok(a)
    }

    /// Box from edges `[x0, x1] × [y0, y1]`.
    pub fn from_corners(
        class: FaultClass,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    ) -> Result<Self, LabelError> {
        Self::new(class, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    fn check(&self) -> Result<(), String> {
        let fields = [self.x_center, self.y_center, self.width, self.height];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if !(self.width > 0.0 && self.width <= 1.0 + BOX_TOLERANCE) {
            return Err(format!("width {} not in (0, 1]", self.width));
        }
        if !(self.height > 0.0 && self.height <= 1.0 + BOX_TOLERANCE) {
            return Err(format!("height {} not in (0, 1]", self.height));
        }
        let (x0, y0, x1, y1) = self.corners();
        if x0 < -BOX_TOLERANCE || x1 > 1.0 + BOX_TOLERANCE {
            return Err(format!(
                "x_center {} ± width/2 leaves [0, 1]",
                self.x_center
            ));
        }
        if y0 < -BOX_TOLERANCE || y1 > 1.0 + BOX_TOLERANCE {
            return Err(format!(
                "y_center {} ± height/2 leaves [0, 1]",
                self.y_center
            ));
        }
        Ok(())
    }

    /// `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.x_center - self.width / 2.0,
            self.y_center - self.height / 2.0,
            self.x_center + self.width / 2.0,
            self.y_center + self.height / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class.id(),
            self.x_center,
            self.y_center,
            self.width,
            self.height
        )
    }
}

/// A predicted box with its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub annotation: Annotation,
    pub confidence: f64,
}

impl Detection {
    pub fn new(annotation: Annotation, confidence: f64) -> Result<Self, LabelError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(LabelError::Invalid(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            annotation,
            confidence,
        })
    }

    pub fn class(&self) -> FaultClass {
        self.annotation.class
    }

    pub fn to_line(&self) -> String {
        format!("{} {:.6}", self.annotation.to_line(), self.confidence)
    }
}

pub fn format_labels(annotations: &[Annotation]) -> String {
    annotations.iter().map(|a| a.to_line() + "\n").collect()
}

pub fn format_predictions(detections: &[Detection]) -> String {
    detections.iter().map(|d| d.to_line() + "\n").collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), LabelError> {
    fs::write(path, text).map_err(|source| LabelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, LabelError> {
    fs::read_to_string(path).map_err(|source| LabelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_labels(annotations: &[Annotation], path: impl AsRef<Path>) -> Result<(), LabelError> {
    write_text(path.as_ref(), &format_labels(annotations))
}

pub fn write_predictions(
    detections: &[Detection],
    path: impl AsRef<Path>,
) -> Result<(), LabelError> {
    write_text(path.as_ref(), &format_predictions(detections))
}

fn parse_box_fields(line: usize, fields: &[&str]) -> Result<Annotation, LabelError> {
    let class = match fields[0].parse::<u8>().ok().and_then(FaultClass::from_id) {
        Some(c) => c,
        None => {
            return Err(LabelError::UnknownClass {
                line,
                id: fields[0].to_string(),
            })
        }
    };
    let mut coords = [0.0; 4];
    for (slot, (name, raw)) in coords.iter_mut().zip(
        ["x_center", "y_center", "width", "height"]
            .iter()
            .zip(&fields[1..5]),
    ) {
        *slot = raw.parse::<f64>().map_err(|_| LabelError::Malformed {
            line,
            reason: format!("non-numeric {name} {raw:?}"),
        })?;
    }
    let ann = Annotation {
        class,
        x_center: coords[0],
        y_center: coords[1],
        width: coords[2],
        height: coords[3],
    };
    ann.check()
        .map_err(|reason| LabelError::OutOfBounds { line, reason })?;
    Ok(ann)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

pub fn parse_labels_str(text: &str) -> Result<Vec<Annotation>, LabelError> {
    content_lines(text)
        .map(|(line, fields)| {
            if fields.len() != 5 {
                return Err(LabelError::Malformed {
                    line,
                    reason: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            parse_box_fields(line, &fields)
        })
        .collect()
}

pub fn parse_predictions_str(text: &str) -> Result<Vec<Detection>, LabelError> {
    content_lines(text)
        .map(|(line, fields)| {
            if fields.len() != 6 {
                return Err(LabelError::Malformed {
                    line,
                    reason: format!("expected 6 fields, found {}", fields.len()),
                });
            }
            let annotation = parse_box_fields(line, &fields)?;
            let confidence = fields[5].parse::<f64>().map_err(|_| LabelError::Malformed {
                line,
                reason: format!("non-numeric confidence {:?}", fields[5]),
            })?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(LabelError::Confidence {
                    line,
                    value: confidence,
                });
            }
            Ok(Detection {
                annotation,
                confidence,
            })
        })
        .collect()
}

fn in_file(path: &Path, e: LabelError) -> LabelError {
    match e {
        io @ LabelError::Io { .. } => io,
        other => LabelError::InFile {
            path: path.to_path_buf(),
            source: Box::new(other),
        },
    }
}

pub fn parse_labels(path: impl AsRef<Path>) -> Result<Vec<Annotation>, LabelError> {
    let path = path.as_ref();
    read_text(path)
        .and_then(|t| parse_labels_str(&t))
        .map_err(|e| in_file(path, e))
}

pub fn parse_predictions(path: impl AsRef<Path>) -> Result<Vec<Detection>, LabelError> {
    let path = path.as_ref();
    read_text(path)
        .and_then(|t| parse_predictions_str(&t))
        .map_err(|e| in_file(path, e))
}

/// Box around the energy concentration of `scalogram`.
///
/// Pixels of the log-normalized scalogram strictly above the `energy_quantile`
/// level are hulled (falling back to pixels at that level if none exceed
/// it), padded by [`SYNTH_BOX_MARGIN`] of the image per side and clipped.
pub fn synthesize_annotation(
    scalogram: &Scalogram,
    label: FaultClass,
    energy_quantile: f64,
) -> Result<Annotation, LabelError> {
    if !(energy_quantile > 0.0 && energy_quantile < 1.0) {
        return Err(LabelError::Invalid(format!(
            "energy quantile {energy_quantile} not in (0, 1)"
        )));
    }
    let m = log_normalize(scalogram, DEFAULT_LOG_EPSILON);
    let (rows, cols) = (m.rows(), m.cols());
    match m.min_max() {
        Some((lo, hi)) if hi > lo => {}
        _ => return Err(LabelError::NoEnergyConcentration),
    }
    let mut sorted = m.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let level = sorted[((sorted.len() - 1) as f64 * energy_quantile).floor() as usize];

    let hull = |keep: &dyn Fn(f64) -> bool| {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for r in 0..rows {
            for (c, &v) in m.row(r).iter().enumerate() {
                if keep(v) {
                    bounds = Some(match bounds {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bounds
    };
    let (r0, r1, c0, c1) = hull(&|v| v > level)
        .or_else(|| hull(&|v| v >= level))
        .ok_or(LabelError::NoEnergyConcentration)?;

    let x0 = (c0 as f64 / cols as f64 - SYNTH_BOX_MARGIN).max(0.0);
    let x1 = ((c1 + 1) as f64 / cols as f64 + SYNTH_BOX_MARGIN).min(1.0);
    let y0 = (r0 as f64 / rows as f64 - SYNTH_BOX_MARGIN).max(0.0);
    let y1 = ((r1 + 1) as f64 / rows as f64 + SYNTH_BOX_MARGIN).min(1.0);
    Annotation::from_corners(label, x0, y0, x1, y1)
}
