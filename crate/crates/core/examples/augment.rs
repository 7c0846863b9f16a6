// Flip, small rotation and contrast jitter applied to an image and its boxes.

use std::error::Error;

use scalodet::dataset::{contrast_jitter, flip_horizontal, rotate_small};
use scalodet::render::Colormap;
use scalodet::{Annotation, FaultClass, Matrix, SpectrogramImage};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (h, w) = (64, 64);
    let pixels = Matrix::from_vec(h, w, (0..h * w).map(|i| (i % w) as f64 / (w - 1) as f64).collect());
    let image = SpectrogramImage::new(pixels, Colormap::Grayscale, "horizontal ramp")?;
    let boxes = [Annotation::new(FaultClass::OuterRace, 0.3, 0.5, 0.2, 0.4)?];

    let (flipped, fb) = flip_horizontal(&image, &boxes);
    println!("flip:     x_center {:.3} -> {:.3}, left pixel {:.2} -> {:.2}",
        boxes[0].x_center, fb[0].x_center, image.pixels().get(0, 0), flipped.pixels().get(0, 0));

    let (_, rb) = rotate_small(&image, &boxes, 5.0)?;
    println!("rotate 5°: {:.4} x {:.4} -> {:.4} x {:.4}", boxes[0].width, boxes[0].height, rb[0].width, rb[0].height);

    let brighter = contrast_jitter(&image, 1.2)?;
    let (lo, hi) = brighter.pixels().min_max().expect("non-empty image");
    println!("contrast 1.2: range [{lo:.3}, {hi:.3}]");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
