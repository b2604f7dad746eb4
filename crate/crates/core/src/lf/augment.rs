use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dims, LightField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipAxis {
    /// mirrors `w` and `v` together
    Horizontal,
    /// mirrors `h` and `u` together
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentOp {
    /// Square spatial crop; the offset is drawn from the seed.
    Crop(usize),
    /// Quarter turns, applied to `(h, w)` and `(u, v)` together.
    Rotate90(u8),
    Flip(FlipAxis),
}

/// Applies `ops` in order. Geometric ops move the angular axes with the
/// spatial ones so that EPI slopes keep their physical meaning.
pub fn augment(lf: &LightField, seed: u64, ops: &[AugmentOp]) -> Result<LightField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = lf.clone();
    for op in ops {
        cur = match *op {
            AugmentOp::Crop(size) => {
                let d = cur.dims();
                if size == 0 || size > d.h || size > d.w {
                    return Err(Error::config(format!(
                        "crop {size} exceeds spatial extent {}x{}",
                        d.h, d.w
                    )));
                }
                let top = rng.random_range(0..=d.h - size);
                let left = rng.random_range(0..=d.w - size);
                crop(&cur, top, left, size, size)
            }
            AugmentOp::Rotate90(k) => (0..k % 4).fold(cur, |acc, _| rotate90(&acc)),
            AugmentOp::Flip(axis) => flip(&cur, axis),
        };
    }
    Ok(cur)
}

/// Draws a random crop + rotation + flip sequence (the usual training mix).
pub fn random_ops(rng: &mut impl Rng, crop: Option<usize>) -> Vec<AugmentOp> {
    let mut ops = Vec::with_capacity(4);
    if let Some(size) = crop {
        ops.push(AugmentOp::Crop(size));
    }
    ops.push(AugmentOp::Rotate90(rng.random_range(0..4)));
    if rng.random_bool(0.5) {
        ops.push(AugmentOp::Flip(FlipAxis::Horizontal));
    }
    if rng.random_bool(0.5) {
        ops.push(AugmentOp::Flip(FlipAxis::Vertical));
    }
    ops
}

pub(crate) fn crop(lf: &LightField, top: usize, left: usize, rows: usize, cols: usize) -> LightField {
    let d = lf.dims();
    let out = Dims { h: rows, w: cols, ..d };
    let mut data = Vec::with_capacity(out.len());
    for b in 0..d.b {
        for u in 0..d.u {
            for v in 0..d.v {
                for h in top..top + rows {
                    let start = d.offset(b, u, v, h, left, 0);
                    data.extend_from_slice(&lf.data()[start..start + cols * d.c]);
                }
            }
        }
    }
    LightField::new(out, data, lf.range()).expect("crop preserves validity")
}

/// Quarter turn: `(y', x') = (W-1-x, y)` spatially and `(u', v') = (V-1-v, u)`
/// angularly, so centered coordinates rotate by the same linear map.
fn rotate90(lf: &LightField) -> LightField {
    let d = lf.dims();
    let out = Dims {
        u: d.v,
        v: d.u,
        h: d.w,
        w: d.h,
        ..d
    };
    LightField::from_fn(out, lf.range(), |b, u2, v2, y2, x2, c| {
        lf.get(b, v2, d.v - 1 - u2, x2, d.w - 1 - y2, c)
    })
    .expect("rotation preserves validity")
}

fn flip(lf: &LightField, axis: FlipAxis) -> LightField {
    let d = lf.dims();
    LightField::from_fn(d, lf.range(), |b, u, v, h, w, c| match axis {
        FlipAxis::Horizontal => lf.get(b, u, d.v - 1 - v, h, d.w - 1 - w, c),
        FlipAxis::Vertical => lf.get(b, d.u - 1 - u, v, d.h - 1 - h, w, c),
    })
    .expect("flip preserves validity")
}
