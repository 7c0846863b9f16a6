//! Detection scoring: IoU, greedy matching, all-point AP, mAP@0.5 and
//! thresholded precision / recall / F1.
//!
//! AP ranks every detection regardless of score. Precision, recall and F1
//! only count detections at or above the confidence threshold and pool
//! TP/FP/FN over classes (micro average); per-class means are reported too.
//! Zero denominators give 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{parse_labels, parse_predictions, Annotation, Detection, FaultClass};
use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction file for image {image} (expected {})", path.display())]
    MissingPredictions { image: String, path: PathBuf },
    #[error("split {0} has no images")]
    EmptySplit(Split),
    #[error("threshold {name} = {value} outside [0, 1]")]
    Threshold { name: &'static str, value: f64 },
}

/// Intersection over union of two normalized boxes.
pub fn iou(a: &Annotation, b: &Annotation) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    /// Index into the detections passed to [`match_detections`].
    pub detection: usize,
    pub confidence: f64,
    pub ground_truth: Option<usize>,
    /// IoU with the claimed box, or the best IoU seen for a false positive.
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// In processing order: confidence descending, ties by input order.
    pub matches: Vec<DetectionMatch>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Indices of `dets` by descending confidence, stable for ties.
fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy matching within one image and one class.
///
/// Each detection, best score first, claims the unclaimed ground truth with
/// the highest IoU at or above `iou_threshold` (lowest index on ties).
pub fn match_detections(
    gts: &[Annotation],
    dets: &[Detection],
    iou_threshold: f64,
) -> MatchResult {
    let mut claimed = vec![false; gts.len()];
    let mut matches = Vec::with_capacity(dets.len());
    let mut tp = 0;
    for di in confidence_order(dets) {
        let det = &dets[di].annotation;
        let mut best: Option<(usize, f64)> = None;
        let mut best_any = 0.0_f64;
        for (gi, gt) in gts.iter().enumerate() {
            let o = iou(det, gt);
            best_any = best_any.max(o);
            if claimed[gi] || o < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        let m = match best {
            Some((gi, o)) => {
                claimed[gi] = true;
                tp += 1;
                DetectionMatch {
                    detection: di,
                    confidence: dets[di].confidence,
                    ground_truth: Some(gi),
                    iou: o,
                }
            }
            None => DetectionMatch {
                detection: di,
                confidence: dets[di].confidence,
                ground_truth: None,
                iou: best_any,
            },
        };
        matches.push(m);
    }
    MatchResult {
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
        matches,
    }
}

/// All-point interpolated area under the precision-recall curve for one
/// class, pooled over images. `None` when there is no ground truth.
pub fn average_precision(
    images: &[(&[Annotation], &[Detection])],
    iou_threshold: f64,
) -> Option<f64> {
    let total_gt: usize = images.iter().map(|(g, _)| g.len()).sum();
    if total_gt == 0 {
        return None;
    }
    // (confidence, image, rank within image, true positive)
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (img, (gts, dets)) in images.iter().enumerate() {
        let result = match_detections(gts, dets, iou_threshold);
        for (rank, m) in result.matches.iter().enumerate() {
            ranked.push((m.confidence, img, rank, m.ground_truth.is_some()));
        }
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    Some(area_under_envelope(
        ranked.iter().map(|r| r.3),
        total_gt,
    ))
}

fn area_under_envelope(hits: impl Iterator<Item = bool>, total_gt: usize) -> f64 {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut tp = 0usize;
    for (k, hit) in hits.enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Ground truth and predictions for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageEval {
    pub name: String,
    pub ground_truth: Vec<Annotation>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: FaultClass,
    pub num_gt: usize,
    pub num_detections: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ap: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_class: Vec<ClassCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_images: usize,
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    /// Only classes that occur in the ground truth.
    pub per_class_ap: BTreeMap<FaultClass, f64>,
    pub absent_classes: Vec<FaultClass>,
    pub map50: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub counts: EvalCounts,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_threshold(name: &'static str, value: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(EvalError::Threshold { name, value })
    }
}

/// Score in-memory predictions.
pub fn evaluate(
    images: &[ImageEval],
    iou_threshold: f64,
    confidence_threshold: f64,
) -> Result<EvalReport, EvalError> {
    check_threshold("iou", iou_threshold)?;
    check_threshold("confidence", confidence_threshold)?;

    let mut per_class_ap = BTreeMap::new();
    let mut absent_classes = Vec::new();
    let mut per_class = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);

    for class in FaultClass::ALL {
        let filtered: Vec<(Vec<Annotation>, Vec<Detection>)> = images
            .iter()
            .map(|img| {
                (
                    img.ground_truth.iter().filter(|a| a.class == class).copied().collect(),
                    img.detections.iter().filter(|d| d.class() == class).copied().collect(),
                )
            })
            .collect();
        let views: Vec<(&[Annotation], &[Detection])> = filtered
            .iter()
            .map(|(g, d)| (g.as_slice(), d.as_slice()))
            .collect();
        let ap = average_precision(&views, iou_threshold);
        match ap {
            Some(v) => {
                per_class_ap.insert(class, v);
            }
            None => absent_classes.push(class),
        }

        let (mut ctp, mut cfp, mut cfn, mut ngt, mut ndet) = (0, 0, 0, 0, 0);
        for (gts, dets) in &filtered {
            let kept: Vec<Detection> = dets
                .iter()
                .filter(|d| d.confidence >= confidence_threshold)
                .copied()
                .collect();
            let m = match_detections(gts, &kept, iou_threshold);
            ctp += m.tp;
            cfp += m.fp;
            cfn += m.fn_;
            ngt += gts.len();
            ndet += dets.len();
        }
        tp += ctp;
        fp += cfp;
        fn_ += cfn;
        let precision = ratio(ctp, ctp + cfp);
        let recall = ratio(ctp, ctp + cfn);
        per_class.push(ClassCounts {
            class,
            num_gt: ngt,
            num_detections: ndet,
            tp: ctp,
            fp: cfp,
            fn_: cfn,
            ap,
            precision,
            recall,
            f1: f1_score(precision, recall),
        });
    }

    let present: Vec<&ClassCounts> = per_class.iter().filter(|c| c.num_gt > 0).collect();
    let mean = |f: &dyn Fn(&ClassCounts) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    let map50 = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(EvalReport {
        num_images: images.len(),
        iou_threshold,
        confidence_threshold,
        map50,
        precision,
        recall,
        f1: f1_score(precision, recall),
        macro_precision: mean(&|c| c.precision),
        macro_recall: mean(&|c| c.recall),
        macro_f1: mean(&|c| c.f1),
        per_class_ap,
        absent_classes,
        counts: EvalCounts {
            tp,
            fp,
            fn_,
            per_class,
        },
    })
}

/// Load labels for one split of a built dataset and the matching
/// `{predictions_dir}/{name}.txt` files.
pub fn load_split(
    dataset_dir: impl AsRef<Path>,
    split: Split,
    predictions_dir: impl AsRef<Path>,
) -> Result<Vec<ImageEval>> {
    let dataset_dir = dataset_dir.as_ref();
    let predictions_dir = predictions_dir.as_ref();
    let manifest = DatasetManifest::load(dataset_dir)?;
    let mut images = Vec::new();
    for entry in manifest.split_entries(split) {
        let ground_truth = parse_labels(dataset_dir.join(&entry.label))?;
        let pred_path = predictions_dir.join(format!("{}.txt", entry.name));
        if !pred_path.is_file() {
            return Err(EvalError::MissingPredictions {
                image: entry.image.clone(),
                path: pred_path,
            }
            .into());
        }
        let detections = parse_predictions(&pred_path)?;
        images.push(ImageEval {
            name: entry.name.clone(),
            ground_truth,
            detections,
        });
    }
    if images.is_empty() {
        return Err(EvalError::EmptySplit(split).into());
    }
    Ok(images)
}

/// [`load_split`] followed by [`evaluate`].
pub fn evaluate_dataset(
    dataset_dir: impl AsRef<Path>,
    split: Split,
    predictions_dir: impl AsRef<Path>,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> Result<EvalReport> {
    let images = load_split(dataset_dir, split, predictions_dir)?;
    Ok(evaluate(&images, iou_threshold, confidence_threshold)?)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "eval report".into(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "images: {}  IoU threshold: {}  confidence threshold: {}",
            self.num_images, self.iou_threshold, self.confidence_threshold
        );
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>6} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8}",
            "class", "gt", "dets", "TP", "FP", "FN", "AP@0.5", "PRE", "REC", "F1"
        );
        for c in &self.counts.per_class {
            let ap = c.ap.map_or_else(|| "absent".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>6} {:>5} {:>5} {:>5} {:>8} {:>8.4} {:>8.4} {:>8.4}",
                c.class.name(),
                c.num_gt,
                c.num_detections,
                c.tp,
                c.fp,
                c.fn_,
                ap,
                c.precision,
                c.recall,
                c.f1
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>6} {:>5} {:>5} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            "all (micro)",
            "",
            "",
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.map50,
            self.precision,
            self.recall,
            self.f1
        );
        let _ = writeln!(
            s,
            "macro: PRE {:.4}  REC {:.4}  F1 {:.4}",
            self.macro_precision, self.macro_recall, self.macro_f1
        );
        s
    }

    /// Write `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [(REPORT_JSON, self.to_json()), (REPORT_TEXT, self.to_text())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(c: FaultClass, x: f64, y: f64, w: f64, h: f64) -> Annotation {
        Annotation::new(c, x, y, w, h).unwrap()
    }

    fn det(a: Annotation, conf: f64) -> Detection {
        Detection::new(a, conf).unwrap()
    }

    const B: FaultClass = FaultClass::Ball;

    #[test]
    fn iou_examples() {
        let a = bx(B, 0.25, 0.25, 0.5, 0.5);
        let b = bx(B, 0.5, 0.5, 0.5, 0.5);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(B, 0.8, 0.8, 0.2, 0.2)), 0.0);
        // 0.0625 / 0.4375
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn identical_predictions_all_tp() {
        let gts = vec![bx(B, 0.2, 0.2, 0.2, 0.2), bx(B, 0.7, 0.7, 0.3, 0.3)];
        let dets: Vec<_> = gts.iter().map(|g| det(*g, 1.0)).collect();
        let m = match_detections(&gts, &dets, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));
    }

    #[test]
    fn lone_detection_is_fp() {
        let m = match_detections(&[], &[det(bx(B, 0.5, 0.5, 0.2, 0.2), 0.3)], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 0));
    }

    #[test]
    fn top_detection_claims_higher_iou() {
        let g0 = bx(B, 0.40, 0.5, 0.2, 0.2);
        let g1 = bx(B, 0.46, 0.5, 0.2, 0.2);
        let d = bx(B, 0.45, 0.5, 0.2, 0.2);
        assert!(iou(&d, &g0) >= 0.5 && iou(&d, &g1) > iou(&d, &g0));
        let dets = [det(d, 0.9), det(g0, 0.5), det(bx(B, 0.9, 0.9, 0.1, 0.1), 0.4)];
        let m = match_detections(&[g0, g1], &dets, 0.5);
        assert_eq!(m.matches[0].ground_truth, Some(1));
        assert_eq!(m.matches[1].ground_truth, Some(0));
        assert_eq!((m.tp, m.fp, m.fn_), (2, 1, 0));
    }

    #[test]
    fn hand_computed_ap_half() {
        let gt = [bx(B, 0.5, 0.5, 0.2, 0.2)];
        let dets = [det(bx(B, 0.1, 0.1, 0.1, 0.1), 0.9), det(gt[0], 0.8)];
        let ap = average_precision(&[(&gt[..], &dets[..])], 0.5).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn ap_edge_cases() {
        let gt = [bx(B, 0.5, 0.5, 0.2, 0.2)];
        assert_eq!(average_precision(&[(&gt[..], &[][..])], 0.5), Some(0.0));
        assert_eq!(average_precision(&[(&[][..], &[][..])], 0.5), None);
        let perfect = [det(gt[0], 0.7)];
        assert_eq!(average_precision(&[(&gt[..], &perfect[..])], 0.5), Some(1.0));
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let img = |name: &str, gts: Vec<Annotation>, conf: Option<f64>| ImageEval {
            name: name.into(),
            detections: conf.map_or(vec![], |c| gts.iter().map(|g| det(*g, c)).collect()),
            ground_truth: gts,
        };
        let gts_a = vec![bx(FaultClass::Normal, 0.5, 0.5, 0.4, 0.4)];
        let gts_b = vec![bx(FaultClass::OuterRace, 0.3, 0.3, 0.2, 0.2), bx(B, 0.7, 0.7, 0.2, 0.2)];
        let perfect = evaluate(
            &[img("a", gts_a.clone(), Some(1.0)), img("b", gts_b.clone(), Some(1.0))],
            0.5,
            0.25,
        )
        .unwrap();
        assert_eq!((perfect.map50, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(perfect.absent_classes, vec![FaultClass::InnerRace]);
        assert_eq!(perfect.per_class_ap.len(), 3);

        let empty = evaluate(&[img("a", gts_a, None), img("b", gts_b, None)], 0.5, 0.25).unwrap();
        assert_eq!((empty.map50, empty.precision, empty.recall, empty.f1), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn threshold_filters_precision_but_not_ap() {
        let gt = bx(B, 0.5, 0.5, 0.2, 0.2);
        let images = [ImageEval {
            name: "x".into(),
            ground_truth: vec![gt],
            detections: vec![det(gt, 0.1)],
        }];
        let r = evaluate(&images, 0.5, 0.25).unwrap();
        assert_eq!(r.map50, 1.0);
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        assert_eq!(r.counts.fn_, 1);
    }

    #[test]
    fn bad_thresholds_rejected() {
        assert!(evaluate(&[], 1.5, 0.25).is_err());
        assert!(evaluate(&[], 0.5, -0.1).is_err());
    }

    fn arb_box() -> impl Strategy<Value = Annotation> {
        (0.05f64..0.5, 0.05f64..0.5, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(w, h, fx, fy)| {
            bx(B, w / 2.0 + fx * (1.0 - w), h / 2.0 + fy * (1.0 - h), w, h)
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn report_invariants(
            gts in prop::collection::vec(arb_box(), 0..5),
            dets in prop::collection::vec((arb_box(), 0.0f64..1.0), 0..7),
            extra_fp in arb_box(),
        ) {
            let dets: Vec<Detection> = dets.into_iter().map(|(a, c)| det(a, c)).collect();
            let images = vec![ImageEval { name: "i".into(), ground_truth: gts.clone(), detections: dets.clone() }];
            let r = evaluate(&images, 0.5, 0.25).unwrap();
            let expect_map = if r.per_class_ap.is_empty() { 0.0 } else {
                r.per_class_ap.values().sum::<f64>() / r.per_class_ap.len() as f64
            };
            prop_assert_eq!(r.map50, expect_map);
            prop_assert!((r.f1 - f1_score(r.precision, r.recall)).abs() < 1e-15);
            for c in &r.counts.per_class {
                prop_assert_eq!(c.tp + c.fn_, c.num_gt);
            }

            // An added false positive (scored above the threshold, far from
            // every box) never raises precision.
            let mut more = dets.clone();
            let far = bx(FaultClass::OuterRace, extra_fp.x_center, extra_fp.y_center, extra_fp.width, extra_fp.height);
            more.push(det(far, 0.9));
            let images2 = vec![ImageEval { name: "i".into(), ground_truth: gts.clone(), detections: more }];
            let r2 = evaluate(&images2, 0.5, 0.25).unwrap();
            prop_assert!(r2.precision <= r.precision + 1e-15);

            // A true positive ranked above everything never lowers AP.
            if let Some(g) = gts.first() {
                let mut top = dets.clone();
                top.push(det(*g, 1.0));
                let before = average_precision(&[(&gts[..], &dets[..])], 0.5).unwrap();
                let after = average_precision(&[(&gts[..], &top[..])], 0.5).unwrap();
                prop_assert!(after + 1e-12 >= before);
            }
        }

        #[test]
        fn distinct_confidences_permutation_invariant(
            gts in prop::collection::vec(arb_box(), 1..5),
            dets in prop::collection::vec(arb_box(), 1..7),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let dets: Vec<Detection> = dets.iter().enumerate()
                .map(|(i, a)| det(*a, 0.05 + 0.9 * i as f64 / dets.len() as f64)).collect();
            let mut shuffled = dets.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = average_precision(&[(&gts[..], &dets[..])], 0.5).unwrap();
            let b = average_precision(&[(&gts[..], &shuffled[..])], 0.5).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
