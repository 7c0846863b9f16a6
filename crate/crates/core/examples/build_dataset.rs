// Four synthetic recordings in, a split and augmented detection dataset out.

use std::error::Error;

use scalodet::dataset::{build_dataset, LabeledSignal, Split};
use scalodet::signal::{generate_fault_signal, FaultSpec};
use scalodet::{FaultClass, PipelineConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut signals = Vec::new();
    for (i, class) in FaultClass::ALL.into_iter().enumerate() {
        // 4096 samples: three 2048-sample windows at 50% overlap.
        let signal = generate_fault_signal(&FaultSpec::preset(class), 4096.0 / 12_000.0, 12_000.0, i as u64)?;
        signals.push(LabeledSignal {
            id: format!("{}_{i:03}", class.name().to_lowercase()),
            signal: signal.with_label(Some(class)),
        });
    }

    let config = PipelineConfig {
        image_size: 160,
        ..PipelineConfig::default()
    };
    let dir = tempfile::tempdir()?;
    let manifest = build_dataset(&signals, &config, dir.path())?;
    println!(
        "train {} (incl. augmented) / val {} / test {}",
        manifest.counts.train, manifest.counts.val, manifest.counts.test
    );
    for entry in manifest.split_entries(Split::Test) {
        println!("test image {} class {:?}", entry.image, entry.class);
    }
    let augmented: Vec<_> = manifest.entries.iter().filter(|e| e.is_augmented()).collect();
    println!("first augmentation: {} {:?}", augmented[0].name, augmented[0].augmentations);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
