//! Dense reference Tucker decomposition, independent of the library's SVD
//! path: cyclic Jacobi on each mode's Gram matrix, with explicit loops for
//! every contraction.

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (vals, vecs)
}

pub fn at(x: &[f64], d: [usize; 3], i: usize, j: usize, k: usize) -> f64 {
    x[(i * d[1] + j) * d[2] + k]
}

/// Orthonormal basis vectors for one mode and that mode's singular values.
/// Null directions are completed by Gram-Schmidt over the unit vectors.
pub fn oracle_mode(x: &[f64], d: [usize; 3], mode: usize, rank: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = d[mode];
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                let idx = [i, j, k];
                for r in 0..n {
                    let mut other = idx;
                    other[mode] = r;
                    gram[idx[mode]][r] += at(x, d, i, j, k) * at(x, d, other[0], other[1], other[2]);
                }
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(&gram);
    let sv: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let lmax = vals[0].max(0.0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (l, v) in vals.iter().zip(&vecs) {
        if basis.len() < rank && *l > 1e-12 * lmax && lmax > 0.0 {
            basis.push(v.clone());
        }
    }
    // canonical completion: Gram-Schmidt over e_0, e_1, ...
    let mut e = 0;
    while basis.len() < rank {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = b.iter().zip(&v).map(|(p, q)| p * q).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
        }
        let norm = v.iter().map(|q| q * q).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.iter().map(|q| q / norm).collect());
        }
    }
    for b in basis.iter_mut() {
        let big = b.iter().copied().fold(0.0f64, |m, q| if q.abs() > m.abs() { q } else { m });
        if big < 0.0 {
            b.iter_mut().for_each(|q| *q = -*q);
        }
    }
    (basis, sv)
}

pub fn oracle_core(x: &[f64], d: [usize; 3], f: &[Vec<Vec<f64>>; 3]) -> Vec<f64> {
    let r = [f[0].len(), f[1].len(), f[2].len()];
    let mut g = vec![0.0; r[0] * r[1] * r[2]];
    for a in 0..r[0] {
        for b in 0..r[1] {
            for c in 0..r[2] {
                let mut s = 0.0;
                for i in 0..d[0] {
                    for j in 0..d[1] {
                        for k in 0..d[2] {
                            s += at(x, d, i, j, k) * f[0][a][i] * f[1][b][j] * f[2][c][k];
                        }
                    }
                }
                g[(a * r[1] + b) * r[2] + c] = s;
            }
        }
    }
    g
}

pub fn frob2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

