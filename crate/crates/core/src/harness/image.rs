//! 8-bit image I/O as order-3 tensors in `[0, 1]`, and the bundled test image.

use std::f64::consts::PI;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Decodes a PNG or PPM/PGM file into a `height × width × channels` tensor,
/// `channels ∈ {1, 3}`. Alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let img = image::load_from_memory(&bytes)
        .map_err(|source| Error::Image { path: path.to_owned(), source })?;
    from_dynamic(img)
}

/// Decodes an in-memory image (any supported format).
pub fn decode_image(bytes: &[u8]) -> Result<DenseTensor> {
    let img = image::load_from_memory(bytes).map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    from_dynamic(img)
}

fn from_dynamic(img: DynamicImage) -> Result<DenseTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let (channels, raw) = if gray {
        (1, img.into_luma8().into_raw())
    } else {
        (3, img.into_rgb8().into_raw())
    };
    let data = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    DenseTensor::new(vec![h, w, channels], data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an order-3 tensor as an 8-bit image, clamping to `[0, 1]`. The
/// format follows the extension (`.png`, `.ppm`, `.pgm`, `.pnm`).
pub fn save_image(x: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let &[h, w, c] = x.shape() else {
        return Err(Error::dim(format!("images are order 3, got shape {:?}", x.shape())));
    };
    let format = ImageFormat::from_path(path).map_err(|source| Error::Image { path: path.to_owned(), source })?;
    let raw: Vec<u8> = x.data().iter().map(|&v| quantize(v)).collect();
    let (w32, h32) = (w as u32, h as u32);
    let img = match c {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w32, h32, raw).expect("buffer sized from shape")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w32, h32, raw).expect("buffer sized from shape")),
        _ => return Err(Error::dim(format!("images have 1 or 3 channels, got {c}"))),
    };
    img.save_with_format(path, format)
        .map_err(|source| Error::Image { path: path.to_owned(), source })
}

/// Piecewise-smooth `size × size × 3` test scene: a shaded background, a
/// bright disk, two rectangles and a soft diagonal band.
pub fn synthetic_image(size: usize) -> Result<DenseTensor> {
    if size < 8 {
        return Err(Error::param(format!("synthetic image needs size >= 8, got {size}")));
    }
    let s = size as f64;
    DenseTensor::from_fn(&[size, size, 3], |idx| {
        let (y, x, c) = (idx[0] as f64 / s, idx[1] as f64 / s, idx[2]);
        let base = [0.25 + 0.35 * x, 0.3 + 0.3 * y, 0.55 - 0.25 * x];
        let mut v = base[c];
        let band = (2.0 * PI * (x + y)).sin();
        v += 0.08 * band * [1.0, 0.5, -0.5][c];
        let (dx, dy) = (x - 0.62, y - 0.38);
        if dx * dx + dy * dy < 0.04 {
            v = [0.92, 0.78, 0.25][c];
        }
        if (0.12..0.45).contains(&x) && (0.55..0.85).contains(&y) {
            v = [0.15, 0.45, 0.8][c];
        }
        if (0.55..0.9).contains(&x) && (0.7..0.8).contains(&y) {
            v = [0.7, 0.2, 0.3][c];
        }
        v.clamp(0.0, 1.0)
    })
}

/// The 64×64 RGB test image shipped with the crate: [`synthetic_image`]
/// quantized to 8 bits.
pub fn bundled_image() -> Result<DenseTensor> {
    decode_image(include_bytes!("../../assets/synthetic64.png"))
}
