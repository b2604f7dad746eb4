use serde::{Deserialize, Serialize};

use super::{Dims, LightField, RangeTag};
use crate::error::Result;

/// Which 2-D plane of a light field is "active" for a planar operator.
///
/// The remaining axes fold into a leading batch axis; channels stay last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutPattern {
    /// plane `(h, w)`, batch `b·u·v`
    Spatial,
    /// plane `(u, v)`, batch `b·h·w`
    Angular,
    /// plane `(v, w)`, batch `b·u·h`
    EpiHorizontal,
    /// plane `(u, h)`, batch `b·v·w`
    EpiVertical,
}

impl LayoutPattern {
    pub const ALL: [LayoutPattern; 4] = [
        LayoutPattern::Spatial,
        LayoutPattern::Angular,
        LayoutPattern::EpiHorizontal,
        LayoutPattern::EpiVertical,
    ];

    /// Source axis for each destination axis, over `(b, u, v, h, w, c)`.
    pub const fn axis_order(self) -> [usize; 6] {
        match self {
            LayoutPattern::Spatial => [0, 1, 2, 3, 4, 5],
            LayoutPattern::Angular => [0, 3, 4, 1, 2, 5],
            LayoutPattern::EpiHorizontal => [0, 1, 3, 2, 4, 5],
            LayoutPattern::EpiVertical => [0, 2, 4, 1, 3, 5],
        }
    }

    pub fn inverse_order(self) -> [usize; 6] {
        let p = self.axis_order();
        let mut inv = [0; 6];
        for (i, &src) in p.iter().enumerate() {
            inv[src] = i;
        }
        inv
    }

    /// `(batch, plane_rows, plane_cols, channels)` after folding.
    pub fn folded_shape(self, dims: Dims) -> [usize; 4] {
        let a = dims.as_array();
        let p = self.axis_order();
        [a[p[0]] * a[p[1]] * a[p[2]], a[p[3]], a[p[4]], a[p[5]]]
    }

    pub fn name(self) -> &'static str {
        match self {
            LayoutPattern::Spatial => "spatial",
            LayoutPattern::Angular => "angular",
            LayoutPattern::EpiHorizontal => "epi_h",
            LayoutPattern::EpiVertical => "epi_v",
        }
    }
}

/// A light field permuted into a pattern's leading-batch, plane-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternedView {
    pub pattern: LayoutPattern,
    pub source: Dims,
    pub range: RangeTag,
    /// `(batch, rows, cols, channels)`
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

impl PatternedView {
    pub fn inverse(&self) -> Result<LightField> {
        let a = self.source.as_array();
        let p = self.pattern.axis_order();
        let permuted_shape: Vec<usize> = p.iter().map(|&i| a[i]).collect();
        let data = permute(&self.data, &permuted_shape, &self.pattern.inverse_order());
        LightField::new(self.source, data, self.range)
    }
}

pub fn reshape_pattern(lf: &LightField, pattern: LayoutPattern) -> PatternedView {
    let dims = lf.dims();
    PatternedView {
        pattern,
        source: dims,
        range: lf.range(),
        shape: pattern.folded_shape(dims),
        data: permute(lf.data(), &dims.as_array(), &pattern.axis_order()),
    }
}

/// Permutes a dense row-major tensor: output axis `i` is input axis `perm[i]`.
pub fn permute<T: Copy>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let n = shape.len();
    assert_eq!(perm.len(), n, "permutation rank");
    assert_eq!(data.len(), shape.iter().product::<usize>(), "data length");
    // Trailing axes that stay in place are copied as contiguous runs.
    let mut lead = n;
    while lead > 0 && perm[lead - 1] == lead - 1 {
        lead -= 1;
    }
    if lead == 0 {
        return data.to_vec();
    }
    let chunk: usize = shape[lead..].iter().product();
    let mut in_strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_extent: Vec<usize> = perm[..lead].iter().map(|&p| shape[p]).collect();
    let step: Vec<usize> = perm[..lead].iter().map(|&p| in_strides[p]).collect();

    let mut out = Vec::with_capacity(data.len());
    if data.is_empty() {
        return out;
    }
    let mut idx = vec![0usize; lead];
    let mut offset = 0usize;
    loop {
        if chunk == 1 {
            out.push(data[offset]);
        } else {
            out.extend_from_slice(&data[offset..offset + chunk]);
        }
        let mut ax = lead;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            offset += step[ax];
            if idx[ax] < out_extent[ax] {
                break;
            }
            offset -= step[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}
