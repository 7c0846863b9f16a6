// Generate one synthetic recording per fault class and save them as csv.

use std::error::Error;

use scalodet::signal::{generate_fault_signal, load_signal, write_csv, FaultSpec, SignalFormat};
use scalodet::FaultClass;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    for class in FaultClass::ALL {
        let spec = FaultSpec::preset(class);
        let signal = generate_fault_signal(&spec, 0.5, 12_000.0, 42)?;
        let rms = (signal.samples().iter().map(|x| x * x).sum::<f64>() / signal.len() as f64).sqrt();
        println!(
            "{class:<10} {} samples, rms {rms:.4}, impulses every {:.1} samples",
            signal.len(),
            12_000.0 / spec.fault_hz
        );

        let path = dir.path().join(format!("{class}.csv"));
        write_csv(&signal, &path)?;
        let back = load_signal(&path, SignalFormat::Csv, 12_000.0)?;
        assert_eq!(back.samples(), signal.samples());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
