//! Image loading, resizing and normalization to encoder input tensors.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_SIZE: usize = 224;
pub const CHANNELS: usize = 3;
pub const INPUT_LEN: usize = CHANNELS * INPUT_SIZE * INPUT_SIZE;

/// Per-channel statistics of the vision-language encoder's pretraining pipeline.
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
#[allow(clippy::excessive_precision)]
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

/// A decoded image with intensities in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl RawImage {
    pub fn gray(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn rgb(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, 3, data)
    }

    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape {
                expected: format!("{width}x{height}x{channels}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        if img.color().has_color() {
            let buf = img.to_rgb32f();
            Self {
                width,
                height,
                channels: 3,
                data: buf.into_raw(),
            }
        } else {
            let buf = img.to_luma32f();
            Self {
                width,
                height,
                channels: 1,
                data: buf.into_raw(),
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path).map_err(|e| Error::file(path, e))?;
        Ok(Self::from_dynamic(img))
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let img = match self.channels {
            1 => DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, bytes).unwrap()),
            _ => DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, bytes).unwrap()),
        };
        img.save(path).map_err(|e| Error::file(path, e))
    }
}

/// A channel-first `3 x 224 x 224` image tensor. Before normalization
/// values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        if data.len() != INPUT_LEN {
            return Err(Error::Shape {
                expected: format!("{CHANNELS}x{INPUT_SIZE}x{INPUT_SIZE}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { data })
    }

    pub fn filled(value: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(INPUT_LEN);
        for v in value {
            data.extend(std::iter::repeat_n(v, INPUT_SIZE * INPUT_SIZE));
        }
        Self { data }
    }

    pub fn shape(&self) -> [usize; 3] {
        [CHANNELS, INPUT_SIZE, INPUT_SIZE]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * INPUT_SIZE + y) * INPUT_SIZE + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = INPUT_SIZE * INPUT_SIZE;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            mean: CLIP_MEAN,
            std: CLIP_STD,
        }
    }
}

impl PreprocessSpec {
    pub fn target_size(&self) -> (usize, usize) {
        (INPUT_SIZE, INPUT_SIZE)
    }
}

/// Bicubic resize of the shorter side to 224 followed by a center crop,
/// with grayscale replicated to three channels. Output is un-normalized.
pub fn resize_to_input(image: &RawImage) -> Result<ImageTensor> {
    if image.is_empty() {
        return Err(Error::InvalidInput("zero-sized image".into()));
    }
    let planes: Vec<Vec<f32>> = match image.channels {
        1 => vec![resize_plane(&image.data, image.width, image.height)],
        3 => {
            if image.width == INPUT_SIZE && image.height == INPUT_SIZE {
                split_channels(&image.data)
            } else {
                let buf: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_raw(
                    image.width as u32,
                    image.height as u32,
                    image.data.clone(),
                )
                .expect("length checked at construction");
                let hwc = resize_and_crop(&buf).into_raw();
                split_channels(&hwc)
            }
        }
        n => return Err(Error::InvalidInput(format!("unsupported channel count {n}"))),
    };
    let mut data = Vec::with_capacity(INPUT_LEN);
    for c in 0..CHANNELS {
        data.extend_from_slice(&planes[c.min(planes.len() - 1)]);
    }
    ImageTensor::from_vec(data)
}

fn resize_plane(data: &[f32], width: usize, height: usize) -> Vec<f32> {
    if width == INPUT_SIZE && height == INPUT_SIZE {
        return data.to_vec();
    }
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(width as u32, height as u32, data.to_vec())
            .expect("length checked at construction");
    resize_and_crop(&buf).into_raw()
}

fn resize_and_crop<P>(buf: &ImageBuffer<P, Vec<f32>>) -> ImageBuffer<P, Vec<f32>>
where
    P: image::Pixel<Subpixel = f32> + 'static,
{
    let (w, h) = buf.dimensions();
    let target = INPUT_SIZE as u32;
    let (nw, nh) = if w <= h {
        (target, ((h as f64 * target as f64 / w as f64).round() as u32).max(target))
    } else {
        (((w as f64 * target as f64 / h as f64).round() as u32).max(target), target)
    };
    let resized = imageops::resize(buf, nw, nh, FilterType::CatmullRom);
    let (x0, y0) = ((nw - target) / 2, (nh - target) / 2);
    imageops::crop_imm(&resized, x0, y0, target, target).to_image()
}

fn split_channels(hwc: &[f32]) -> Vec<Vec<f32>> {
    (0..3)
        .map(|c| hwc.iter().skip(c).step_by(3).copied().collect())
        .collect()
}

/// Channel-wise `(x - mean) / std`.
pub fn normalize(tensor: &mut ImageTensor, spec: &PreprocessSpec) {
    let n = INPUT_SIZE * INPUT_SIZE;
    for (c, plane) in tensor.as_mut_slice().chunks_mut(n).enumerate() {
        let (m, s) = (spec.mean[c], spec.std[c]);
        for v in plane {
            *v = (*v - m) / s;
        }
    }
}

/// Resize, channel replication and normalization.
pub fn preprocess(image: &RawImage, spec: &PreprocessSpec) -> Result<ImageTensor> {
    let mut t = resize_to_input(image)?;
    normalize(&mut t, spec);
    Ok(t)
}

/// Supplies decoded images by id.
pub trait ImageSource: Send + Sync {
    fn load(&self, image_id: &str) -> Result<RawImage>;
}

/// PNG files under `<data_root>/images/<image_id>`.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    root: PathBuf,
}

impl DirectorySource {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            root: data_root.into(),
        }
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.root.join("images").join(image_id)
    }
}

impl ImageSource for DirectorySource {
    fn load(&self, image_id: &str) -> Result<RawImage> {
        RawImage::load(&self.path_for(image_id))
    }
}

#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    images: HashMap<String, RawImage>,
}

impl InMemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, image: RawImage) {
        self.images.insert(image_id.into(), image);
    }
}

impl ImageSource for InMemorySource {
    fn load(&self, image_id: &str) -> Result<RawImage> {
        self.images
            .get(image_id)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("no image {image_id:?} in memory source")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_grayscale_becomes_three_channel_input() {
        let data: Vec<f32> = (0..1024 * 1024).map(|i| (i % 251) as f32 / 250.0).collect();
        let img = RawImage::gray(1024, 1024, data).unwrap();
        let t = preprocess(&img, &PreprocessSpec::default()).unwrap();
        assert_eq!(t.shape(), [3, 224, 224]);
        assert_eq!(t.as_slice().len(), INPUT_LEN);
        let raw = resize_to_input(&img).unwrap();
        assert_eq!(raw.channel(0), raw.channel(1));
        assert_eq!(raw.channel(1), raw.channel(2));
    }

    #[test]
    fn channel_mean_image_normalizes_to_zero() {
        let spec = PreprocessSpec::default();
        let mut data = Vec::new();
        for _ in 0..(300 * 260) {
            data.extend_from_slice(&spec.mean);
        }
        let img = RawImage::rgb(300, 260, data).unwrap();
        let t = preprocess(&img, &spec).unwrap();
        assert!(t.as_slice().iter().all(|v| v.abs() < 1e-5));

        // a 224x224 input is passed through, so equality is exact here
        let hwc = {
            let planes = ImageTensor::filled(spec.mean);
            let mut v = Vec::with_capacity(INPUT_LEN);
            for i in 0..224 * 224 {
                for c in 0..3 {
                    v.push(planes.channel(c)[i]);
                }
            }
            v
        };
        let t = preprocess(&RawImage::rgb(224, 224, hwc).unwrap(), &spec).unwrap();
        assert!(t.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn native_resolution_rgb_is_preserved() {
        let hwc: Vec<f32> = (0..224 * 224 * 3).map(|i| (i % 97) as f32 / 96.0).collect();
        let img = RawImage::rgb(224, 224, hwc.clone()).unwrap();
        let t = resize_to_input(&img).unwrap();
        assert_eq!(t.shape(), [3, 224, 224]);
        assert_eq!(t.at(1, 0, 0), hwc[1]);
        assert_eq!(t.at(2, 3, 5), hwc[(3 * 224 + 5) * 3 + 2]);
    }

    #[test]
    fn zero_sized_image_is_an_error() {
        let img = RawImage::gray(0, 0, vec![]).unwrap();
        assert!(matches!(
            preprocess(&img, &PreprocessSpec::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn non_square_is_center_cropped() {
        let img = RawImage::gray(448, 224, vec![0.5; 448 * 224]).unwrap();
        let t = resize_to_input(&img).unwrap();
        assert_eq!(t.shape(), [3, 224, 224]);
        assert!(t.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-5));
    }

    #[test]
    fn png_round_trip_keeps_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let data: Vec<f32> = (0..64).map(|i| i as f32 / 255.0).collect();
        RawImage::gray(8, 8, data.clone()).unwrap().save_png(&path).unwrap();
        let back = RawImage::load(&path).unwrap();
        assert_eq!(back.channels, 1);
        for (a, b) in back.data.iter().zip(&data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
