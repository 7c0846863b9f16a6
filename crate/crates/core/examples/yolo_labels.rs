// Boxes from scalogram energy, written and read back as YOLO text files.

use std::error::Error;

use scalodet::annotation::{
    format_predictions, parse_labels, parse_predictions_str, synthesize_annotation, write_labels,
    DEFAULT_ENERGY_QUANTILE,
};
use scalodet::cwt::{cwt_fft, ScaleGrid};
use scalodet::segment::segment_signal;
use scalodet::signal::{generate_fault_signal, FaultSpec};
use scalodet::{Annotation, Detection, FaultClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let signal = generate_fault_signal(&FaultSpec::preset(FaultClass::Ball), 0.25, 12_000.0, 9)?;
    let segment = &segment_signal(&signal, 2048, 0.5)?[0];
    let scalogram = cwt_fft(segment, &ScaleGrid::default_for(12_000.0, 64)?)?;
    let auto = synthesize_annotation(&scalogram, FaultClass::Ball, DEFAULT_ENERGY_QUANTILE)?;
    println!("synthesized: {}", auto.to_line());

    let manual = Annotation::from_corners(FaultClass::InnerRace, 0.1, 0.2, 0.4, 0.6)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("example.txt");
    write_labels(&[auto, manual], &path)?;
    let back = parse_labels(&path)?;
    assert_eq!(back.len(), 2);
    assert!((back[1].width - 0.3).abs() < 1e-6);

    let dets = vec![Detection::new(manual, 0.87)?];
    let text = format_predictions(&dets);
    print!("prediction file:\n{text}");
    assert_eq!(parse_predictions_str(&text)?.len(), 1);

    match parse_labels_bad() {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

fn parse_labels_bad() -> Result<Vec<Annotation>, scalodet::annotation::LabelError> {
    scalodet::annotation::parse_labels_str("7 0.5 0.5 0.1 0.1\n")
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
