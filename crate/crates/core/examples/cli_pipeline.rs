// The whole command-line flow driven in-process: synth, build, evaluate, report.

use std::error::Error;
use std::fs;

use scalodet::cli::run;
use scalodet::dataset::{DatasetManifest, Split};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).display().to_string();

    assert_eq!(run(["scalodet", "synth", "--count", "4", "--duration", "0.35", "--out", &p("signals")]), 0);
    assert_eq!(
        run(["scalodet", "build", "--signals", &p("signals"), "--out", &p("dataset"), "--image-size", "128", "--augment-copies", "0"]),
        0
    );

    // Ground truth as predictions with confidence 1.
    let manifest = DatasetManifest::load(p("dataset"))?;
    fs::create_dir_all(p("pred"))?;
    for entry in manifest.split_entries(Split::Test) {
        let labels = fs::read_to_string(dir.path().join("dataset").join(&entry.label))?;
        let preds: String = labels.lines().map(|l| format!("{l} 1.000000\n")).collect();
        fs::write(dir.path().join("pred").join(format!("{}.txt", entry.name)), preds)?;
    }

    assert_eq!(
        run(["scalodet", "evaluate", "--dataset", &p("dataset"), "--predictions", &p("pred"), "--out", &p("eval")]),
        0
    );
    assert_eq!(
        run(["scalodet", "report", "--eval", &p("eval/report.json"), "--dataset", "IMS", "--model", "YOLOv10"]),
        0
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
