// Cut a recording into overlapping windows and render each as a PNG.

use std::error::Error;

use scalodet::cwt::{cwt_fft, ScaleGrid};
use scalodet::render::{render_png, spectrogram_image, Colormap, RenderOptions};
use scalodet::segment::segment_signal;
use scalodet::signal::{generate_fault_signal, FaultSpec};
use scalodet::FaultClass;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let spec = FaultSpec::preset(FaultClass::OuterRace);
    let signal = generate_fault_signal(&spec, 4096.0 / 12_000.0, 12_000.0, 1)?;
    let segments = segment_signal(&signal, 2048, 0.5)?;
    println!(
        "{} samples -> {} segments starting at {:?}",
        signal.len(),
        segments.len(),
        segments.iter().map(|s| s.start_index()).collect::<Vec<_>>()
    );

    let grid = ScaleGrid::default_for(signal.sample_rate_hz(), 64)?;
    let options = RenderOptions {
        colormap: Colormap::Viridis,
        ..RenderOptions::default()
    };
    let dir = tempfile::tempdir()?;
    for (i, seg) in segments.iter().enumerate() {
        let scalogram = cwt_fft(seg, &grid)?;
        let image = spectrogram_image(&scalogram, &options, format!("segment {i}"))?;
        let path = dir.path().join(format!("outer_race_s{i:04}.png"));
        render_png(&image, &path)?;
        println!("{} ({}x{}, {} bytes)", path.display(), image.width(), image.height(), std::fs::metadata(&path)?.len());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
