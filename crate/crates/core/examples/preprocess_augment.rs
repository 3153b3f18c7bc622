// Resize, augment and normalize one fixture image, writing the stages as
// PNGs into a temporary directory.

use xrayclip::data::augment::{augment, sample_rng, AugmentationSpec};
use xrayclip::data::image::{normalize, resize_to_input, ImageTensor, PreprocessSpec, RawImage, INPUT_SIZE};
use xrayclip::data::synthetic::{generate, FixtureSpec};

fn to_png(t: &ImageTensor) -> xrayclip::Result<RawImage> {
    let mut rgb = Vec::with_capacity(INPUT_SIZE * INPUT_SIZE * 3);
    for y in 0..INPUT_SIZE {
        for x in 0..INPUT_SIZE {
            for c in 0..3 {
                rgb.push(t.at(c, y, x).clamp(0.0, 1.0));
            }
        }
    }
    RawImage::rgb(INPUT_SIZE, INPUT_SIZE, rgb)
}

pub fn run_example() -> xrayclip::Result<[usize; 3]> {
    let fixture = generate(&FixtureSpec::default());
    let (id, raw) = &fixture.images[0];
    let resized = resize_to_input(raw)?;
    let spec = AugmentationSpec::default();
    let augmented = augment(&resized, &spec, &mut sample_rng(7, 1, id));
    let again = augment(&resized, &spec, &mut sample_rng(7, 1, id));
    assert_eq!(augmented, again, "same (seed, epoch, image) gives the same draw");

    let dir = std::env::temp_dir().join("xrayclip-preprocess-example");
    std::fs::create_dir_all(&dir)?;
    raw.save_png(&dir.join("raw.png"))?;
    to_png(&resized)?.save_png(&dir.join("resized.png"))?;
    to_png(&augmented)?.save_png(&dir.join("augmented.png"))?;

    let mut input = augmented.clone();
    normalize(&mut input, &PreprocessSpec::default());
    let mean: f32 = input.as_slice().iter().sum::<f32>() / input.as_slice().len() as f32;
    println!("{id}: {}x{} -> {:?}, normalized mean {mean:.3}", raw.width, raw.height, input.shape());
    println!("stages written to {}", dir.display());
    Ok(input.shape())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("preprocess example failed");
}
