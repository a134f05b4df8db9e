//! RGB / depth / label triplet loading and writing.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::labels::{Labels, IGNORE_ID};
use crate::tensor::Tensor;

use super::class_map::ClassMap;

/// One aligned RGB image, depth map, and label map.
///
/// `rgb` is `[3,H,W]` in `[0,1]`, `depth` is `[1,H,W]` in `[0,1]`, labels
/// hold class ids in `[0,K)` plus the ignore id.
pub struct Sample {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub labels: Labels,
}

impl Sample {
    pub fn new(rgb: Tensor<f32>, depth: Tensor<f32>, labels: Labels) -> Result<Self> {
        let rs = rgb.shape();
        let ds = depth.shape();
        if rs.len() != 3 || rs[0] != 3 {
            return Err(Error::Shape(format!("sample rgb wants [3,H,W], got {rs:?}")));
        }
        if ds.len() != 3 || ds[0] != 1 {
            return Err(Error::Shape(format!("sample depth wants [1,H,W], got {ds:?}")));
        }
        if rs[1..] != ds[1..] || (labels.h, labels.w) != (rs[1], rs[2]) || labels.n != 1 {
            return Err(Error::Shape(format!(
                "sample planes disagree: rgb {rs:?}, depth {ds:?}, labels ({},{},{})",
                labels.n, labels.h, labels.w
            )));
        }
        Ok(Sample { rgb, depth, labels })
    }

    pub fn hw(&self) -> (usize, usize) {
        let s = self.rgb.shape();
        (s[1], s[2])
    }

    /// `[1,3,H,W]` view for the model.
    pub fn rgb_batch(&self) -> Result<Tensor<f32>> {
        let (h, w) = self.hw();
        self.rgb.reshaped(&[1, 3, h, w])
    }

    pub fn depth_batch(&self) -> Result<Tensor<f32>> {
        let (h, w) = self.hw();
        self.depth.reshaped(&[1, 1, h, w])
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::image(path, other),
    })
}

/// Load a triplet.
///
/// RGB is 8-bit 3-channel scaled by 1/255. Depth is 16-bit scaled by 1/65535
/// or 8-bit scaled by 1/255, auto-detected from the file's bit depth. Labels
/// are 8-bit raw ids remapped through `class_map`; unmapped ids become the
/// ignore id.
pub fn load_sample(
    rgb_path: &Path,
    depth_path: &Path,
    label_path: &Path,
    class_map: &ClassMap,
) -> Result<Sample> {
    let rgb_img = match open(rgb_path)? {
        DynamicImage::ImageRgb8(img) => img,
        other => other.to_rgb8(),
    };
    let (w, h) = (rgb_img.width() as usize, rgb_img.height() as usize);

    let mut rgb = vec![0.0f32; 3 * h * w];
    for (x, y, px) in rgb_img.enumerate_pixels() {
        let p = y as usize * w + x as usize;
        for c in 0..3 {
            rgb[c * h * w + p] = px.0[c] as f32 / 255.0;
        }
    }

    let depth = match open(depth_path)? {
        DynamicImage::ImageLuma16(img) => {
            check_dims(depth_path, img.width(), img.height(), w, h)?;
            img.pixels().map(|p| p.0[0] as f32 / 65535.0).collect::<Vec<f32>>()
        }
        DynamicImage::ImageLuma8(img) => {
            check_dims(depth_path, img.width(), img.height(), w, h)?;
            img.pixels().map(|p| p.0[0] as f32 / 255.0).collect::<Vec<f32>>()
        }
        _ => {
            return Err(Error::Data(format!(
                "{}: depth must be 8- or 16-bit single-channel",
                depth_path.display()
            )))
        }
    };

    let label_img = match open(label_path)? {
        DynamicImage::ImageLuma8(img) => img,
        _ => {
            return Err(Error::Data(format!(
                "{}: labels must be 8-bit single-channel",
                label_path.display()
            )))
        }
    };
    check_dims(label_path, label_img.width(), label_img.height(), w, h)?;
    let ids: Vec<u8> = label_img.pixels().map(|p| class_map.apply(p.0[0])).collect();

    Sample::new(
        Tensor::from_vec(rgb, &[3, h, w])?,
        Tensor::from_vec(depth, &[1, h, w])?,
        Labels::new(1, h, w, ids)?,
    )
}

fn check_dims(path: &Path, got_w: u32, got_h: u32, w: usize, h: usize) -> Result<()> {
    if (got_w as usize, got_h as usize) != (w, h) {
        return Err(Error::Data(format!(
            "{}: dimensions {got_w}x{got_h} do not match rgb {w}x{h}",
            path.display()
        )));
    }
    Ok(())
}

/// Write the triplet back: 8-bit RGB, 16-bit depth, 8-bit raw label ids.
pub fn save_sample(
    sample: &Sample,
    rgb_path: &Path,
    depth_path: &Path,
    label_path: &Path,
) -> Result<()> {
    let (h, w) = sample.hw();
    write_rgb8(rgb_path, &sample.rgb.to_vec(), h, w)?;
    write_gray16(depth_path, &sample.depth.to_vec(), h, w)?;
    write_gray8(label_path, &sample.labels.ids, h, w)
}

pub fn write_rgb8(path: &Path, planar: &[f32], h: usize, w: usize) -> Result<()> {
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        Rgb([
            to_u8(planar[p]),
            to_u8(planar[h * w + p]),
            to_u8(planar[2 * h * w + p]),
        ])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn write_gray16(path: &Path, plane: &[f32], h: usize, w: usize) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = plane[y as usize * w + x as usize];
        Luma([(v.clamp(0.0, 1.0) * 65535.0).round() as u16])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn write_gray8(path: &Path, ids: &[u8], h: usize, w: usize) -> Result<()> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([ids[y as usize * w + x as usize]])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Colorized label rendering through a palette (one RGB triple per class id).
pub fn write_colorized(
    path: &Path,
    labels: &Labels,
    palette: &[[u8; 3]],
) -> Result<()> {
    let (h, w) = (labels.h, labels.w);
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let id = labels.ids[y as usize * w + x as usize];
        let color = if id == IGNORE_ID {
            [0, 0, 0]
        } else {
            palette.get(id as usize).copied().unwrap_or([255, 0, 255])
        };
        Rgb(color)
    });
    img.save(path).map_err(|e| Error::image(path, e))
}
