// Compare a report with the published reference grid.

use std::error::Error;

use scalodet::eval::{evaluate, ImageEval};
use scalodet::report::{compare, load_reference_table};
use scalodet::{Annotation, Detection, FaultClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let table = load_reference_table();
    println!("{} reference rows ({})", table.rows.len(), table.provenance);

    let gt = Annotation::new(FaultClass::InnerRace, 0.5, 0.4, 1.0, 0.7)?;
    let images = vec![ImageEval {
        name: "x".into(),
        ground_truth: vec![gt],
        detections: vec![Detection::new(gt, 0.9)?],
    }];
    let report = evaluate(&images, 0.5, 0.25)?;
    let cmp = compare(&report, "CWRU", "YOLOv11")?;
    print!("{}", cmp.to_text());

    if let Err(e) = compare(&report, "XJTU", "YOLOv11") {
        println!("unknown key: {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
