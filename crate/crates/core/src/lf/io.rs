//! `.lf4d` binary container and PNG tile-grid interchange.
//!
//! `.lf4d` layout (little-endian):
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `LF4D`                            |
//! | 2     | version (u16, currently 1)              |
//! | 24    | dims `b,u,v,h,w,c` as six u32           |
//! | 1     | range tag (0 unit, 1 signed, 2 unbounded) |
//! | 4·N   | f32 payload, row-major `(b,u,v,h,w,c)`  |

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use super::{denormalize, Dims, LightField, RangeTag};
use crate::error::{Error, Result};

pub const LF4D_MAGIC: [u8; 4] = *b"LF4D";
pub const LF4D_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 6 * 4 + 1;

pub fn encode_lf4d(lf: &LightField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * lf.data().len());
    out.extend_from_slice(&LF4D_MAGIC);
    out.extend_from_slice(&LF4D_VERSION.to_le_bytes());
    for d in lf.dims().as_array() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(lf.range().code());
    for x in lf.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_lf4d(bytes: &[u8]) -> Result<LightField> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != LF4D_MAGIC {
        return Err(Error::BadMagic {
            expected: LF4D_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LF4D_VERSION {
        return Err(Error::Version {
            expected: LF4D_VERSION,
            found: version,
        });
    }
    let mut dims = [0usize; 6];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 6 + 4 * i;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    }
    let dims = Dims::from_array(dims);
    dims.validate()?;
    let range = RangeTag::from_code(bytes[30])
        .ok_or_else(|| Error::DimMismatch(format!("unknown range tag {}", bytes[30])))?;
    let expected = 4 * dims.len();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::DimMismatch(format!(
            "payload has {} bytes but dims {dims} require {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LightField::new(dims, data, range)
}

pub fn write_lf4d(lf: &LightField, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_lf4d(lf))?;
    Ok(())
}

pub fn read_lf4d(path: impl AsRef<Path>) -> Result<LightField> {
    decode_lf4d(&fs::read(path)?)
}

fn to_u8(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes batch item 0 as a `u × v` montage of SAIs; tile `(u, v)` sits at
/// tile-row `u`, tile-column `v`. Signed-range input is mapped to `[0, 1]`.
pub fn export_png_grid(lf: &LightField, path: impl AsRef<Path>) -> Result<()> {
    let lf = match lf.range() {
        RangeTag::Unit => lf.clone(),
        RangeTag::Signed => denormalize(lf)?,
        RangeTag::Unbounded => lf.clone().clamp_to(RangeTag::Unit),
    };
    let d = lf.dims();
    let (width, height) = ((d.v * d.w) as u32, (d.u * d.h) as u32);
    let pixel = |x: u32, y: u32, c: usize| {
        let (u, h) = (y as usize / d.h, y as usize % d.h);
        let (v, w) = (x as usize / d.w, x as usize % d.w);
        to_u8(lf.get(0, u, v, h, w, c))
    };
    if d.c == 3 {
        let img: RgbImage =
            ImageBuffer::from_fn(width, height, |x, y| Rgb([pixel(x, y, 0), pixel(x, y, 1), pixel(x, y, 2)]));
        img.save(path)?;
    } else {
        let img: GrayImage = ImageBuffer::from_fn(width, height, |x, y| Luma([pixel(x, y, 0)]));
        img.save(path)?;
    }
    Ok(())
}

/// Reads a montage written by [`export_png_grid`] back into a unit-range
/// light field with the given angular resolution.
pub fn import_png_grid(path: impl AsRef<Path>, u: usize, v: usize, channels: usize) -> Result<LightField> {
    let img = image::open(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if u == 0 || v == 0 || width % v != 0 || height % u != 0 {
        return Err(Error::DimMismatch(format!(
            "{width}x{height} image does not tile into a {u}x{v} grid"
        )));
    }
    let dims = Dims::new(1, u, v, height / u, width / v, channels);
    dims.validate()?;
    let fetch: Box<dyn Fn(u32, u32, usize) -> f32> = if channels == 3 {
        let rgb = img.to_rgb8();
        Box::new(move |x, y, c| rgb.get_pixel(x, y).0[c] as f32 / 255.0)
    } else {
        let gray = img.to_luma8();
        Box::new(move |x, y, _| gray.get_pixel(x, y).0[0] as f32 / 255.0)
    };
    LightField::from_fn(dims, RangeTag::Unit, |_, uu, vv, h, w, c| {
        fetch((vv * dims.w + w) as u32, (uu * dims.h + h) as u32, c)
    })
}
