//! Dense 4-D light fields stored as `(b, u, v, h, w, c)` row-major tensors.
//!
//! `u, v` index the angular grid of sub-aperture images (SAIs), `h, w` the
//! pixels inside each SAI. A horizontal EPI fixes `(u, h)` and spans
//! `(v, w)`; a vertical EPI fixes `(v, w)` and spans `(u, h)`.

mod augment;
mod io;
mod layout;

pub use augment::{augment, random_ops, AugmentOp, FlipAxis};
pub use io::{export_png_grid, import_png_grid, read_lf4d, write_lf4d, LF4D_MAGIC, LF4D_VERSION};
pub use layout::{permute, reshape_pattern, LayoutPattern, PatternedView};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RANGE_TOL: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub b: usize,
    pub u: usize,
    pub v: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub const fn new(b: usize, u: usize, v: usize, h: usize, w: usize, c: usize) -> Self {
        Dims { b, u, v, h, w, c }
    }

    pub fn as_array(&self) -> [usize; 6] {
        [self.b, self.u, self.v, self.h, self.w, self.c]
    }

    pub fn from_array(a: [usize; 6]) -> Self {
        Dims::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn len(&self) -> usize {
        self.as_array().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of sub-aperture images per batch item.
    pub fn views(&self) -> usize {
        self.u * self.v
    }

    pub fn with_batch(&self, b: usize) -> Self {
        Dims { b, ..*self }
    }

    #[inline]
    pub fn offset(&self, b: usize, u: usize, v: usize, h: usize, w: usize, c: usize) -> usize {
        ((((b * self.u + u) * self.v + v) * self.h + h) * self.w + w) * self.c + c
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|&d| d == 0) {
            return Err(Error::DimMismatch(format!("zero-sized axis in {self:?}")));
        }
        if self.c != 1 && self.c != 3 {
            return Err(Error::DimMismatch(format!("channel count must be 1 or 3, got {}", self.c)));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}x{}x{}", self.b, self.u, self.v, self.h, self.w, self.c)
    }
}

/// Declared value range of a light field.
///
/// `Unbounded` is used for intermediate diffusion states (`X_t`), which are
/// not confined to either interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RangeTag {
    Unit,
    Signed,
    Unbounded,
}

impl RangeTag {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::Signed => (-1.0, 1.0),
            RangeTag::Unbounded => (f32::NEG_INFINITY, f32::INFINITY),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            RangeTag::Unit => 0,
            RangeTag::Signed => 1,
            RangeTag::Unbounded => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RangeTag::Unit),
            1 => Some(RangeTag::Signed),
            2 => Some(RangeTag::Unbounded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    dims: Dims,
    data: Vec<f32>,
    range: RangeTag,
}

impl LightField {
    pub fn new(dims: Dims, data: Vec<f32>, range: RangeTag) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "data length {} does not match dims {dims} ({})",
                data.len(),
                dims.len()
            )));
        }
        let (lo, hi) = range.bounds();
        if let Some(bad) = data
            .iter()
            .find(|x| !(x.is_finite() || range == RangeTag::Unbounded) || **x < lo - RANGE_TOL || **x > hi + RANGE_TOL)
        {
            return Err(Error::Range(format!("{bad} outside {range:?}")));
        }
        Ok(LightField { dims, data, range })
    }

    pub fn zeros(dims: Dims, range: RangeTag) -> Self {
        dims.validate().expect("invalid dims");
        LightField {
            dims,
            data: vec![0.0; dims.len()],
            range,
        }
    }

    pub fn filled(dims: Dims, value: f32, range: RangeTag) -> Result<Self> {
        Self::new(dims, vec![value; dims.len()], range)
    }

    /// Builds a light field from a generator over `(b, u, v, h, w, c)`.
    pub fn from_fn(
        dims: Dims,
        range: RangeTag,
        mut f: impl FnMut(usize, usize, usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for b in 0..dims.b {
            for u in 0..dims.u {
                for v in 0..dims.v {
                    for h in 0..dims.h {
                        for w in 0..dims.w {
                            for c in 0..dims.c {
                                data.push(f(b, u, v, h, w, c));
                            }
                        }
                    }
                }
            }
        }
        Self::new(dims, data, range)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn range(&self) -> RangeTag {
        self.range
    }

    #[inline]
    pub fn get(&self, b: usize, u: usize, v: usize, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.dims.offset(b, u, v, h, w, c)]
    }

    /// Re-tags the field, clamping into the new interval.
    pub fn clamp_to(mut self, range: RangeTag) -> Self {
        let (lo, hi) = range.bounds();
        for x in &mut self.data {
            *x = x.clamp(lo, hi);
        }
        self.range = range;
        self
    }

    /// Applies `f` elementwise; the result is tagged `range` and validated.
    pub fn map(&self, range: RangeTag, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.dims, self.data.iter().map(|&x| f(x)).collect(), range)
    }

    /// One batch item as a standalone single-batch light field.
    pub fn batch_item(&self, b: usize) -> Result<Self> {
        if b >= self.dims.b {
            return Err(Error::OutOfBounds {
                axis: "b",
                index: b,
                extent: self.dims.b,
            });
        }
        let n = self.dims.len() / self.dims.b;
        Ok(LightField {
            dims: self.dims.with_batch(1),
            data: self.data[b * n..(b + 1) * n].to_vec(),
            range: self.range,
        })
    }

    /// Concatenates single- or multi-batch fields along the batch axis.
    pub fn stack(items: &[LightField]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::DimMismatch("cannot stack zero light fields".into()))?;
        let mut b = 0;
        let mut data = Vec::new();
        for it in items {
            if it.dims.with_batch(1) != first.dims.with_batch(1) || it.range != first.range {
                return Err(Error::DimMismatch(format!("cannot stack {} with {}", it.dims, first.dims)));
            }
            b += it.dims.b;
            data.extend_from_slice(&it.data);
        }
        Ok(LightField {
            dims: first.dims.with_batch(b),
            data,
            range: first.range,
        })
    }

    /// The SAI at `(b, u, v)` as an `h × w × c` slice.
    pub fn view(&self, b: usize, u: usize, v: usize) -> &[f32] {
        let n = self.dims.h * self.dims.w * self.dims.c;
        let start = self.dims.offset(b, u, v, 0, 0, 0);
        &self.data[start..start + n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Per-pixel luminance-like average over channels, shape `(b,u,v,h,w)`.
    pub fn channel_mean(&self) -> Vec<f32> {
        let c = self.dims.c;
        self.data
            .chunks_exact(c)
            .map(|px| px.iter().sum::<f32>() / c as f32)
            .collect()
    }
}

/// Affine remap between `Unit` and `Signed` ranges.
pub fn normalize(lf: &LightField, target: RangeTag) -> Result<LightField> {
    let f: fn(f32) -> f32 = match (lf.range, target) {
        (a, b) if a == b => |x| x,
        (RangeTag::Unit, RangeTag::Signed) => |x| 2.0 * x - 1.0,
        (RangeTag::Signed, RangeTag::Unit) => |x| 0.5 * (x + 1.0),
        (from, to) => return Err(Error::config(format!("cannot normalize {from:?} to {to:?}"))),
    };
    let data = lf.data.iter().map(|&x| f(x)).collect();
    let (lo, hi) = target.bounds();
    let mut out = LightField {
        dims: lf.dims,
        data,
        range: target,
    };
    // Rounding can push endpoints a hair outside the interval.
    for x in &mut out.data {
        *x = x.clamp(lo, hi);
    }
    Ok(out)
}

/// Inverse of [`normalize`]: maps a signed-range field back to `[0, 1]`.
pub fn denormalize(lf: &LightField) -> Result<LightField> {
    normalize(lf, RangeTag::Unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpiOrientation {
    /// `(v, w)` plane at fixed `(u, h)`.
    Horizontal,
    /// `(u, h)` plane at fixed `(v, w)`.
    Vertical,
}

/// A 2-D multi-channel image, row-major `(rows, cols, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f32 {
        self.data[(r * self.cols + c) * self.channels + ch]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        let n = self.cols * self.channels;
        &self.data[r * n..(r + 1) * n]
    }
}

/// Extracts an epipolar-plane image from batch item 0.
///
/// Horizontal: rows are `v`, columns are `w`, at fixed `(u = angular, h = spatial)`.
/// Vertical: rows are `u`, columns are `h`, at fixed `(v = angular, w = spatial)`.
pub fn epi_slice(
    lf: &LightField,
    orientation: EpiOrientation,
    fixed_angular: usize,
    fixed_spatial: usize,
) -> Result<Plane> {
    let d = lf.dims;
    let check = |axis, index, extent| {
        if index >= extent {
            Err(Error::OutOfBounds { axis, index, extent })
        } else {
            Ok(())
        }
    };
    match orientation {
        EpiOrientation::Horizontal => {
            check("u", fixed_angular, d.u)?;
            check("h", fixed_spatial, d.h)?;
            let mut data = Vec::with_capacity(d.v * d.w * d.c);
            for v in 0..d.v {
                let start = d.offset(0, fixed_angular, v, fixed_spatial, 0, 0);
                data.extend_from_slice(&lf.data[start..start + d.w * d.c]);
            }
            Ok(Plane {
                rows: d.v,
                cols: d.w,
                channels: d.c,
                data,
            })
        }
        EpiOrientation::Vertical => {
            check("v", fixed_angular, d.v)?;
            check("w", fixed_spatial, d.w)?;
            let mut data = Vec::with_capacity(d.u * d.h * d.c);
            for u in 0..d.u {
                for h in 0..d.h {
                    let start = d.offset(0, u, fixed_angular, h, fixed_spatial, 0);
                    data.extend_from_slice(&lf.data[start..start + d.c]);
                }
            }
            Ok(Plane {
                rows: d.u,
                cols: d.h,
                channels: d.c,
                data,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: Dims) -> LightField {
        let n = dims.len();
        LightField::new(dims, (0..n).map(|i| i as f32 / n as f32).collect(), RangeTag::Unit).unwrap()
    }

    #[test]
    fn rejects_bad_length_and_channels() {
        assert!(LightField::new(Dims::new(1, 1, 1, 2, 2, 1), vec![0.0; 3], RangeTag::Unit).is_err());
        assert!(LightField::new(Dims::new(1, 1, 1, 1, 1, 2), vec![0.0; 2], RangeTag::Unit).is_err());
    }

    #[test]
    fn rejects_out_of_range() {
        let d = Dims::new(1, 1, 1, 1, 2, 1);
        assert!(LightField::new(d, vec![0.0, 1.5], RangeTag::Unit).is_err());
        assert!(LightField::new(d, vec![-1.0, 1.0], RangeTag::Signed).is_ok());
        assert!(LightField::new(d, vec![-7.0, 3.0], RangeTag::Unbounded).is_ok());
    }

    #[test]
    fn normalize_endpoints() {
        let d = Dims::new(1, 1, 1, 1, 2, 1);
        let lf = LightField::new(d, vec![0.0, 1.0], RangeTag::Unit).unwrap();
        let s = normalize(&lf, RangeTag::Signed).unwrap();
        assert_eq!(s.data(), &[-1.0, 1.0]);
        assert_eq!(denormalize(&s).unwrap().data(), lf.data());
    }

    #[test]
    fn normalize_round_trip_random() {
        let lf = ramp(Dims::new(2, 2, 3, 4, 5, 3));
        let back = denormalize(&normalize(&lf, RangeTag::Signed).unwrap()).unwrap();
        let worst = lf
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn epi_of_constant_is_constant() {
        let lf = LightField::filled(Dims::new(1, 3, 3, 4, 5, 1), 0.25, RangeTag::Unit).unwrap();
        let e = epi_slice(&lf, EpiOrientation::Horizontal, 1, 2).unwrap();
        assert_eq!((e.rows, e.cols), (3, 5));
        assert!(e.data.iter().all(|&x| x == 0.25));
        let e = epi_slice(&lf, EpiOrientation::Vertical, 0, 4).unwrap();
        assert_eq!((e.rows, e.cols), (3, 4));
    }

    #[test]
    fn epi_of_single_view_is_image_row() {
        let lf = ramp(Dims::new(1, 1, 1, 4, 6, 3));
        let e = epi_slice(&lf, EpiOrientation::Horizontal, 0, 2).unwrap();
        assert_eq!(e.rows, 1);
        assert_eq!(e.row(0), &lf.view(0, 0, 0)[2 * 6 * 3..3 * 6 * 3]);
    }

    #[test]
    fn epi_out_of_bounds_names_axis() {
        let lf = ramp(Dims::new(1, 2, 3, 4, 5, 1));
        match epi_slice(&lf, EpiOrientation::Horizontal, 2, 0) {
            Err(Error::OutOfBounds { axis: "u", .. }) => {}
            other => panic!("{other:?}"),
        }
        match epi_slice(&lf, EpiOrientation::Vertical, 0, 5) {
            Err(Error::OutOfBounds { axis: "w", .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_item_and_stack_invert() {
        let lf = ramp(Dims::new(3, 1, 2, 2, 2, 1));
        let items: Vec<_> = (0..3).map(|b| lf.batch_item(b).unwrap()).collect();
        assert_eq!(LightField::stack(&items).unwrap(), lf);
    }
}
