//! Stochastic training-time augmentation on un-normalized input tensors.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::image::{ImageTensor, CHANNELS, INPUT_SIZE};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub enabled: bool,
    pub hflip_prob: f64,
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    /// Maximum absolute translation as a fraction of the image side.
    pub translate_frac: f64,
    pub scale_range: [f64; 2],
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            hflip_prob: 0.5,
            rotation_deg: 10.0,
            translate_frac: 0.1,
            scale_range: [0.9, 1.1],
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.1,
        }
    }
}

impl AugmentationSpec {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// All draws collapse to the identity transform.
    pub fn identity() -> Self {
        Self {
            enabled: true,
            hflip_prob: 0.0,
            rotation_deg: 0.0,
            translate_frac: 0.0,
            scale_range: [1.0, 1.0],
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            problems.push(format!("hflip_prob {} outside [0, 1]", self.hflip_prob));
        }
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            problems.push(format!("rotation_deg {} outside [0, 180]", self.rotation_deg));
        }
        if !(0.0..1.0).contains(&self.translate_frac) {
            problems.push(format!("translate_frac {} outside [0, 1)", self.translate_frac));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            problems.push(format!("scale_range [{lo}, {hi}] is not a positive interval"));
        }
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(0.0..1.0).contains(&v) {
                problems.push(format!("{name} {v} outside [0, 1)"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Rng for one sample in one epoch; independent of worker scheduling.
pub fn sample_rng(seed: u64, epoch: usize, image_id: &str) -> Rng {
    rng_for(seed, &format!("augment/{epoch}/{image_id}"))
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        // still consume a draw so the stream layout does not depend on the spec
        let _: f64 = rng.gen();
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Horizontal flip, applied unconditionally.
pub fn hflip(image: &ImageTensor) -> ImageTensor {
    let mut out = image.clone();
    for row in out.as_mut_slice().chunks_mut(INPUT_SIZE) {
        row.reverse();
    }
    out
}

pub fn augment(image: &ImageTensor, spec: &AugmentationSpec, rng: &mut Rng) -> ImageTensor {
    if !spec.enabled {
        return image.clone();
    }
    let flip = rng.gen::<f64>() < spec.hflip_prob;
    let angle = uniform(rng, -spec.rotation_deg, spec.rotation_deg);
    let tx = uniform(rng, -spec.translate_frac, spec.translate_frac);
    let ty = uniform(rng, -spec.translate_frac, spec.translate_frac);
    let scale = uniform(rng, spec.scale_range[0], spec.scale_range[1]);
    let brightness = uniform(rng, 1.0 - spec.brightness, 1.0 + spec.brightness);
    let contrast = uniform(rng, 1.0 - spec.contrast, 1.0 + spec.contrast);
    let saturation = uniform(rng, 1.0 - spec.saturation, 1.0 + spec.saturation);

    let mut out = if flip { hflip(image) } else { image.clone() };
    if angle != 0.0 || tx != 0.0 || ty != 0.0 || scale != 1.0 {
        out = affine(&out, angle, tx * INPUT_SIZE as f64, ty * INPUT_SIZE as f64, scale);
    }
    if brightness != 1.0 {
        let b = brightness as f32;
        for v in out.as_mut_slice() {
            *v = (*v * b).clamp(0.0, 1.0);
        }
    }
    if contrast != 1.0 {
        let n = (INPUT_SIZE * INPUT_SIZE) as f64;
        let mean = (0..INPUT_SIZE * INPUT_SIZE)
            .map(|i| luminance(&out, i) as f64)
            .sum::<f64>()
            / n;
        blend_toward(&mut out, contrast as f32, |_| mean as f32);
    }
    if saturation != 1.0 {
        let gray: Vec<f32> = (0..INPUT_SIZE * INPUT_SIZE)
            .map(|i| luminance(&out, i))
            .collect();
        blend_toward(&mut out, saturation as f32, |i| gray[i]);
    }
    out
}

fn luminance(t: &ImageTensor, i: usize) -> f32 {
    0.299 * t.channel(0)[i] + 0.587 * t.channel(1)[i] + 0.114 * t.channel(2)[i]
}

/// `x <- factor * x + (1 - factor) * target(pixel)`, clamped.
fn blend_toward(t: &mut ImageTensor, factor: f32, target: impl Fn(usize) -> f32) {
    let n = INPUT_SIZE * INPUT_SIZE;
    for plane in t.as_mut_slice().chunks_mut(n) {
        for (i, v) in plane.iter_mut().enumerate() {
            *v = (factor * *v + (1.0 - factor) * target(i)).clamp(0.0, 1.0);
        }
    }
}

/// Rotation about the center, scale, then translation (pixels). Sampled by
/// inverse mapping with bilinear interpolation and zero fill.
fn affine(image: &ImageTensor, angle_deg: f64, tx: f64, ty: f64, scale: f64) -> ImageTensor {
    let n = INPUT_SIZE;
    let c = (n as f64 - 1.0) / 2.0;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = vec![0f32; CHANNELS * n * n];
    for y in 0..n {
        for x in 0..n {
            let u = (x as f64 - c - tx) / scale;
            let v = (y as f64 - c - ty) / scale;
            // inverse rotation
            let sx = cos * u + sin * v + c;
            let sy = -sin * u + cos * v + c;
            if sx < 0.0 || sy < 0.0 || sx > (n - 1) as f64 || sy > (n - 1) as f64 {
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for ch in 0..CHANNELS {
                let top = image.at(ch, y0, x0) * (1.0 - fx) + image.at(ch, y0, x1) * fx;
                let bottom = image.at(ch, y1, x0) * (1.0 - fx) + image.at(ch, y1, x1) * fx;
                out[(ch * n + y) * n + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    ImageTensor::from_vec(out).expect("affine output has input shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn gradient_image() -> ImageTensor {
        let mut data = Vec::with_capacity(CHANNELS * INPUT_SIZE * INPUT_SIZE);
        for c in 0..CHANNELS {
            for y in 0..INPUT_SIZE {
                for x in 0..INPUT_SIZE {
                    data.push(((x + 2 * y + 30 * c) % 224) as f32 / 223.0);
                }
            }
        }
        ImageTensor::from_vec(data).unwrap()
    }

    #[test]
    fn disabled_spec_is_bit_identical() {
        let img = gradient_image();
        let mut rng = Rng::seed_from_u64(1);
        let out = augment(&img, &AugmentationSpec::disabled(), &mut rng);
        assert_eq!(out, img);
    }

    #[test]
    fn identity_ranges_are_identity() {
        let img = gradient_image();
        for seed in 0..5 {
            let mut rng = Rng::seed_from_u64(seed);
            assert_eq!(augment(&img, &AugmentationSpec::identity(), &mut rng), img);
        }
    }

    #[test]
    fn same_rng_state_same_output() {
        let img = gradient_image();
        let spec = AugmentationSpec::default();
        let a = augment(&img, &spec, &mut sample_rng(7, 3, "x.png"));
        let b = augment(&img, &spec, &mut sample_rng(7, 3, "x.png"));
        assert_eq!(a, b);
        let c = augment(&img, &spec, &mut sample_rng(7, 4, "x.png"));
        assert_ne!(a, c);
    }

    #[test]
    fn hflip_is_an_involution() {
        let img = gradient_image();
        assert_ne!(hflip(&img), img);
        assert_eq!(hflip(&hflip(&img)), img);
        let forced = AugmentationSpec {
            hflip_prob: 1.0,
            ..AugmentationSpec::identity()
        };
        let once = augment(&img, &forced, &mut Rng::seed_from_u64(3));
        assert_eq!(once, hflip(&img));
        assert_eq!(augment(&once, &forced, &mut Rng::seed_from_u64(4)), img);
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let img = gradient_image();
        let spec = AugmentationSpec::default();
        for seed in 0..4 {
            let out = augment(&img, &spec, &mut Rng::seed_from_u64(seed));
            assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn default_spec_validates_and_bad_spec_lists_every_problem() {
        AugmentationSpec::default().validate().unwrap();
        let bad = AugmentationSpec {
            hflip_prob: 2.0,
            scale_range: [1.2, 0.8],
            ..AugmentationSpec::default()
        };
        match bad.validate() {
            Err(Error::Config(list)) => assert_eq!(list.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
