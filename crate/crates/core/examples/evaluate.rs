// Scoring detections: matching, AP, and the full report.

use std::error::Error;

use scalodet::eval::{average_precision, evaluate, iou, match_detections, ImageEval};
use scalodet::{Annotation, Detection, FaultClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let gt = Annotation::from_corners(FaultClass::Ball, 0.2, 0.2, 0.6, 0.6)?;
    let near = Detection::new(Annotation::from_corners(FaultClass::Ball, 0.25, 0.2, 0.65, 0.6)?, 0.8)?;
    let far = Detection::new(Annotation::from_corners(FaultClass::Ball, 0.7, 0.7, 0.9, 0.9)?, 0.9)?;
    println!("IoU(gt, near) = {:.4}", iou(&gt, &near.annotation));

    let m = match_detections(&[gt], &[far, near], 0.5);
    println!("tp {} fp {} fn {}", m.tp, m.fp, m.fn_);

    let gts = [gt];
    let dets = [far, near];
    let ap = average_precision(&[(&gts[..], &dets[..])], 0.5);
    println!("AP = {ap:?} (miss ranked first, then hit)");
    assert_eq!(ap, Some(0.5));

    let images = vec![
        ImageEval { name: "a".into(), ground_truth: vec![gt], detections: vec![far, near] },
        ImageEval {
            name: "b".into(),
            ground_truth: vec![Annotation::new(FaultClass::OuterRace, 0.5, 0.5, 0.4, 0.4)?],
            detections: vec![],
        },
    ];
    let report = evaluate(&images, 0.5, 0.25)?;
    print!("{}", report.to_text());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
