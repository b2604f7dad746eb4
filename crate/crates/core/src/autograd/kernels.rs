//! Raw loops behind the differentiable ops. All layouts are channel-last.

use super::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    pub cin: usize,
    pub cout: usize,
    /// odd kernel side; zero padding keeps the plane size
    pub k: usize,
}

impl ConvShape {
    fn taps(&self, y: usize, x: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let pad = self.k / 2;
        let (k, rows, cols) = (self.k, self.rows, self.cols);
        (0..k).flat_map(move |ky| {
            (0..k).filter_map(move |kx| {
                let iy = (y + ky).checked_sub(pad)?;
                let ix = (x + kx).checked_sub(pad)?;
                (iy < rows && ix < cols).then_some((ky * k + kx, iy, ix))
            })
        })
    }
}

#[inline]
fn axpy<T: Real>(out: &mut [T], a: T, x: &[T]) {
    for (o, &xv) in out.iter_mut().zip(x) {
        *o += a * xv;
    }
}

/// `input (B,H,W,Ci) ⊛ weight (K,K,Ci,Co) -> (B,H,W,Co)`
pub fn conv2d_forward<T: Real>(input: &[T], weight: &[T], s: ConvShape) -> Vec<T> {
    let ConvShape {
        batch,
        rows,
        cols,
        cin,
        cout,
        ..
    } = s;
    let mut out = vec![T::zero(); batch * rows * cols * cout];
    for n in 0..batch {
        for y in 0..rows {
            for x in 0..cols {
                let o_at = ((n * rows + y) * cols + x) * cout;
                let o = &mut out[o_at..o_at + cout];
                for (tap, iy, ix) in s.taps(y, x) {
                    let i_at = ((n * rows + iy) * cols + ix) * cin;
                    let xin = &input[i_at..i_at + cin];
                    let wk = &weight[tap * cin * cout..(tap + 1) * cin * cout];
                    for (c, &a) in xin.iter().enumerate() {
                        axpy(o, a, &wk[c * cout..(c + 1) * cout]);
                    }
                }
            }
        }
    }
    out
}

/// Gradient with respect to the input.
pub fn conv2d_backward_input<T: Real>(grad: &[T], weight: &[T], s: ConvShape) -> Vec<T> {
    let ConvShape {
        batch,
        rows,
        cols,
        cin,
        cout,
        k,
    } = s;
    // (tap, co, ci) layout so the inner loop runs over contiguous ci
    let mut wt = vec![T::zero(); weight.len()];
    for tap in 0..k * k {
        for ci in 0..cin {
            for co in 0..cout {
                wt[(tap * cout + co) * cin + ci] = weight[(tap * cin + ci) * cout + co];
            }
        }
    }
    let mut dx = vec![T::zero(); batch * rows * cols * cin];
    for n in 0..batch {
        for y in 0..rows {
            for x in 0..cols {
                let g_at = ((n * rows + y) * cols + x) * cout;
                let g = &grad[g_at..g_at + cout];
                for (tap, iy, ix) in s.taps(y, x) {
                    let i_at = ((n * rows + iy) * cols + ix) * cin;
                    let d = &mut dx[i_at..i_at + cin];
                    let wk = &wt[tap * cout * cin..(tap + 1) * cout * cin];
                    for (co, &gv) in g.iter().enumerate() {
                        axpy(d, gv, &wk[co * cin..(co + 1) * cin]);
                    }
                }
            }
        }
    }
    dx
}

/// Gradient with respect to the weight.
pub fn conv2d_backward_weight<T: Real>(grad: &[T], input: &[T], s: ConvShape) -> Vec<T> {
    let ConvShape {
        batch,
        rows,
        cols,
        cin,
        cout,
        k,
    } = s;
    let mut dw = vec![T::zero(); k * k * cin * cout];
    for n in 0..batch {
        for y in 0..rows {
            for x in 0..cols {
                let g_at = ((n * rows + y) * cols + x) * cout;
                let g = &grad[g_at..g_at + cout];
                for (tap, iy, ix) in s.taps(y, x) {
                    let i_at = ((n * rows + iy) * cols + ix) * cin;
                    let xin = &input[i_at..i_at + cin];
                    let dwk = &mut dw[tap * cin * cout..(tap + 1) * cin * cout];
                    for (c, &a) in xin.iter().enumerate() {
                        axpy(&mut dwk[c * cout..(c + 1) * cout], a, g);
                    }
                }
            }
        }
    }
    dw
}

/// `a (M,K) · b (K,N)`
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            axpy(row, av, &b[p * n..(p + 1) * n]);
        }
    }
    out
}

pub fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// 2×2 mean pooling over `(B,H,W,C)` with even `H, W`.
pub fn avg_pool2<T: Real>(input: &[T], batch: usize, rows: usize, cols: usize, c: usize) -> Vec<T> {
    let (r2, c2) = (rows / 2, cols / 2);
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); batch * r2 * c2 * c];
    for n in 0..batch {
        for y in 0..r2 {
            for x in 0..c2 {
                let o_at = ((n * r2 + y) * c2 + x) * c;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i_at = ((n * rows + 2 * y + dy) * cols + 2 * x + dx) * c;
                    axpy(&mut out[o_at..o_at + c], quarter, &input[i_at..i_at + c]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`avg_pool2`].
pub fn avg_pool2_backward<T: Real>(grad: &[T], batch: usize, rows: usize, cols: usize, c: usize) -> Vec<T> {
    let (r2, c2) = (rows / 2, cols / 2);
    let quarter = T::of(0.25);
    let mut dx = vec![T::zero(); batch * rows * cols * c];
    for n in 0..batch {
        for y in 0..r2 {
            for x in 0..c2 {
                let g_at = ((n * r2 + y) * c2 + x) * c;
                for (dy, ddx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i_at = ((n * rows + 2 * y + dy) * cols + 2 * x + ddx) * c;
                    axpy(&mut dx[i_at..i_at + c], quarter, &grad[g_at..g_at + c]);
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour 2× upsampling over `(B,H,W,C)`.
pub fn upsample2<T: Real>(input: &[T], batch: usize, rows: usize, cols: usize, c: usize) -> Vec<T> {
    let (r2, c2) = (rows * 2, cols * 2);
    let mut out = vec![T::zero(); batch * r2 * c2 * c];
    for n in 0..batch {
        for y in 0..r2 {
            for x in 0..c2 {
                let i_at = ((n * rows + y / 2) * cols + x / 2) * c;
                let o_at = ((n * r2 + y) * c2 + x) * c;
                out[o_at..o_at + c].copy_from_slice(&input[i_at..i_at + c]);
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2×2 block. `rows, cols` are the
/// pre-upsampling extents.
pub fn upsample2_backward<T: Real>(grad: &[T], batch: usize, rows: usize, cols: usize, c: usize) -> Vec<T> {
    let (r2, c2) = (rows * 2, cols * 2);
    let mut dx = vec![T::zero(); batch * rows * cols * c];
    for n in 0..batch {
        for y in 0..r2 {
            for x in 0..c2 {
                let i_at = ((n * rows + y / 2) * cols + x / 2) * c;
                let g_at = ((n * r2 + y) * c2 + x) * c;
                axpy(&mut dx[i_at..i_at + c], T::one(), &grad[g_at..g_at + c]);
            }
        }
    }
    dx
}
