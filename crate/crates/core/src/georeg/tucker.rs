//! Truncated higher-order SVD of 3-way tensors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular vectors whose value is below this fraction of the largest are
/// treated as null directions and replaced by the canonical completion.
const RANGE_TOL: f64 = 1e-9;

/// Core and column-orthonormal factors with `V ≈ G ×₁ O ×₂ P ×₃ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    /// row-major `(r1, r2, r3)`
    pub core: Vec<f64>,
    pub ranks: [usize; 3],
    /// mode extents `(I1, I2, I3)`
    pub dims: [usize; 3],
    /// `O (I1×r1)`, `P (I2×r2)`, `Q (I3×r3)`
    pub factors: [DMatrix<f64>; 3],
    /// all singular values of each mode unfolding, descending, zero-padded
    /// to the mode extent
    pub mode_singular_values: [Vec<f64>; 3],
}

/// Mode-`mode` unfolding of a row-major 3-way tensor: `(I_mode, ∏ others)`.
pub fn unfold(data: &[f64], dims: [usize; 3], mode: usize) -> DMatrix<f64> {
    let [i1, i2, i3] = dims;
    let rows = dims[mode];
    let cols = data.len() / rows.max(1);
    let mut m = DMatrix::zeros(rows, cols);
    for a in 0..i1 {
        for b in 0..i2 {
            for c in 0..i3 {
                let x = data[(a * i2 + b) * i3 + c];
                let (r, col) = match mode {
                    0 => (a, b * i3 + c),
                    1 => (b, a * i3 + c),
                    _ => (c, a * i2 + b),
                };
                m[(r, col)] = x;
            }
        }
    }
    m
}

/// `out[.., r, ..] = Σ_i m[(r, i)] · x[.., i, ..]` along `mode`.
pub fn mode_mul(data: &[f64], dims: [usize; 3], mode: usize, m: &DMatrix<f64>) -> (Vec<f64>, [usize; 3]) {
    debug_assert_eq!(m.ncols(), dims[mode]);
    let mut out_dims = dims;
    out_dims[mode] = m.nrows();
    let outer: usize = dims[..mode].iter().product();
    let inner: usize = dims[mode + 1..].iter().product();
    let (n_in, n_out) = (dims[mode], m.nrows());
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for r in 0..n_out {
            let dst = &mut out[(o * n_out + r) * inner..(o * n_out + r + 1) * inner];
            for i in 0..n_in {
                let k = m[(r, i)];
                if k == 0.0 {
                    continue;
                }
                let src = &data[(o * n_in + i) * inner..(o * n_in + i + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += k * s;
                }
            }
        }
    }
    (out, out_dims)
}

/// Flips each column so its largest-magnitude entry (first on ties) is
/// positive.
pub fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Extends orthonormal columns to a basis of size `target` by Gram-Schmidt
/// over the standard basis vectors in index order.
fn complete_basis(cols: Vec<DVector<f64>>, n: usize, target: usize) -> Vec<DVector<f64>> {
    let mut basis = cols;
    let mut e = 0;
    while basis.len() < target && e < n {
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    basis
}

/// Left singular vectors of a mode unfolding: the first `rank` columns of a
/// canonical orthonormal basis, plus all singular values.
fn mode_basis(m: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.nrows();
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.resize(n, 0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let kept: Vec<DVector<f64>> = (0..u.ncols().min(rank))
        .take_while(|&j| sv[j] > RANGE_TOL * smax && smax > 0.0)
        .map(|j| u.column(j).into_owned())
        .collect();
    let basis = complete_basis(kept, n, rank);
    let mut out = DMatrix::from_columns(&basis);
    fix_signs(&mut out);
    (out, sv)
}

/// HOSVD: factors are the leading left singular vectors of each unfolding,
/// the core is `V ×₁ Oᵀ ×₂ Pᵀ ×₃ Qᵀ`.
pub fn tucker_hosvd(data: &[f64], dims: [usize; 3], ranks: [usize; 3]) -> Result<TuckerFactors> {
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::shape("tucker_hosvd", format!("{} values for dims {dims:?}", data.len())));
    }
    for mode in 0..3 {
        if ranks[mode] == 0 || ranks[mode] > dims[mode] {
            return Err(Error::config(format!(
                "rank {} for mode {} must be in 1..={}",
                ranks[mode],
                mode + 1,
                dims[mode]
            )));
        }
    }
    let mut factors = Vec::with_capacity(3);
    let mut svs = Vec::with_capacity(3);
    for mode in 0..3 {
        let (f, s) = mode_basis(&unfold(data, dims, mode), ranks[mode]);
        factors.push(f);
        svs.push(s);
    }
    let factors: [DMatrix<f64>; 3] = factors.try_into().expect("three modes");
    let core = project(data, dims, &factors);
    Ok(TuckerFactors {
        core,
        ranks,
        dims,
        factors,
        mode_singular_values: svs.try_into().expect("three modes"),
    })
}

/// `V ×₁ Oᵀ ×₂ Pᵀ ×₃ Qᵀ`.
pub fn project(data: &[f64], dims: [usize; 3], factors: &[DMatrix<f64>; 3]) -> Vec<f64> {
    let (mut x, mut d) = (data.to_vec(), dims);
    for (mode, f) in factors.iter().enumerate() {
        (x, d) = mode_mul(&x, d, mode, &f.transpose());
    }
    x
}

/// `G ×₁ O ×₂ P ×₃ Q`.
pub fn expand(core: &[f64], ranks: [usize; 3], factors: &[DMatrix<f64>; 3]) -> Vec<f64> {
    let (mut x, mut d) = (core.to_vec(), ranks);
    for (mode, f) in factors.iter().enumerate() {
        (x, d) = mode_mul(&x, d, mode, f);
    }
    x
}

impl TuckerFactors {
    pub fn reconstruct(&self) -> Vec<f64> {
        expand(&self.core, self.ranks, &self.factors)
    }

    /// Core of another tensor of the same shape in these factors.
    pub fn project(&self, data: &[f64]) -> Vec<f64> {
        project(data, self.dims, &self.factors)
    }
}
