use std::path::Path;

use image::ImageFormat;

use super::pnm::{self, Pnm};
use crate::error::{Error, Result};
use crate::map::EdgeMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Interleaved integer samples plus the value that maps to 1.0.
struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u16,
    samples: Vec<u16>,
}

fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if pnm::is_pnm(&bytes) {
        let p = pnm::decode(&bytes, path)?;
        return Ok(Raster {
            width: p.width,
            height: p.height,
            channels: p.channels,
            maxval: p.maxval,
            samples: p.samples,
        });
    }
    if !bytes.starts_with(PNG_MAGIC) {
        return Err(Error::format(path, "unsupported image format (expected PNG, PGM or PPM)"));
    }
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let wide = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let (channels, maxval, samples) = match (gray, wide) {
        (true, false) => (1, 255, img.to_luma8().into_raw().into_iter().map(u16::from).collect()),
        (false, false) => (3, 255, img.to_rgb8().into_raw().into_iter().map(u16::from).collect()),
        (true, true) => (1, 65535, img.to_luma16().into_raw()),
        (false, true) => (3, 65535, img.to_rgb16().into_raw()),
    };
    Ok(Raster {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

/// Loads a PNG, binary PPM or binary PGM as a `[3, H, W]` tensor in
/// `[0, 1]`. Grayscale is replicated to three channels.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let r = read_raster(path.as_ref())?;
    let plane = r.width * r.height;
    let scale = T::lit(r.maxval as f64);
    let data = (0..3 * plane)
        .map(|i| {
            let (c, p) = (i / plane, i % plane);
            let src = if r.channels == 1 { p } else { p * 3 + c };
            T::lit(r.samples[src] as f64) / scale
        })
        .collect();
    Tensor::new(&[3, r.height, r.width], data)
}

fn quantize<T: Scalar>(v: T, levels: f64) -> u16 {
    (v.as_f64() * levels).round() as u16
}

/// Saves a `[3, H, W]` tensor with values in `[0, 1]` as 8-bit PNG or PPM,
/// chosen by the file extension.
pub fn save_image<T: Scalar>(image: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = match image.shape() {
        [c, h, w] if *c == 3 => (*c, *h, *w),
        s => {
            return Err(Error::InvalidShape {
                op: "save_image",
                detail: format!("expected [3, H, W], got {s:?}"),
            })
        }
    };
    if image.data().iter().any(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
        return Err(Error::InvalidArgument("image values must lie in [0, 1]".into()));
    }
    let plane = h * w;
    let interleaved: Vec<u8> = (0..c * plane)
        .map(|i| quantize(image.data()[(i % 3) * plane + i / 3], 255.0) as u8)
        .collect();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => image::save_buffer_with_format(
            path,
            &interleaved,
            w as u32,
            h as u32,
            image::ExtendedColorType::Rgb8,
            ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        }),
        Some("ppm") => {
            let p = Pnm {
                width: w,
                height: h,
                channels: 3,
                maxval: 255,
                samples: interleaved.into_iter().map(u16::from).collect(),
            };
            std::fs::write(path, pnm::encode(&p)).map_err(|e| Error::io(path, e))
        }
        _ => Err(Error::InvalidArgument(format!(
            "{}: image extension must be .png or .ppm",
            path.display()
        ))),
    }
}

/// Writes a 16-bit big-endian PGM (`P5`, maxval 65535), storing
/// `round(p * 65535)`.
pub fn write_edge_map<T: Scalar>(map: &EdgeMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if map.data().iter().any(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
        return Err(Error::InvalidArgument("edge map values must lie in [0, 1]".into()));
    }
    let p = Pnm {
        width: map.width(),
        height: map.height(),
        channels: 1,
        maxval: 65535,
        samples: map.data().iter().map(|&v| quantize(v, 65535.0)).collect(),
    };
    std::fs::write(path, pnm::encode(&p)).map_err(|e| Error::io(path, e))
}

/// Reads a single-channel map (PGM of any depth, or grayscale PNG),
/// scaled by its maxval into `[0, 1]`.
pub fn read_edge_map<T: Scalar>(path: impl AsRef<Path>) -> Result<EdgeMap<T>> {
    let path = path.as_ref();
    let r = read_raster(path)?;
    if r.channels != 1 {
        return Err(Error::format(path, "edge maps must be single-channel"));
    }
    let scale = T::lit(r.maxval as f64);
    EdgeMap::new(
        r.height,
        r.width,
        r.samples.iter().map(|&s| T::lit(s as f64) / scale).collect(),
    )
}
