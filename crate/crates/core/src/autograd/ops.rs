//! Differentiable primitives. Each op checks shapes, computes its forward
//! value and records an exact vector-Jacobian product.

use super::graph::{Graph, Var};
use super::kernels::{self, ConvShape};
use super::tensor::{neumaier_sum, Real, Tensor};
use crate::error::{Error, Result};
use crate::lf::permute as permute_data;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

impl Reduction {
    fn factor<T: Real>(self, n: usize) -> T {
        match self {
            Reduction::Sum => T::one(),
            Reduction::Mean => T::one() / T::of(n as f64),
        }
    }
}

fn same_shape<T: Real>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape(op, format!("{:?} vs {:?}", g.shape(a), g.shape(b))));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).unwrap()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

impl<T: Real> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.record(out, &[a, b], |c| vec![Some(c.grad.clone()), Some(c.grad.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.record(out, &[a, b], |c| {
            vec![Some(c.grad.clone()), Some(c.grad.map(|g| -g))]
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.record(out, &[a, b], |c| {
            vec![
                c.needs[0].then(|| zip_map(c.grad, c.inputs[1], |g, y| g * y)),
                c.needs[1].then(|| zip_map(c.grad, c.inputs[0], |g, x| g * x)),
            ]
        }))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let k = T::of(s);
        let out = self.value(a).map(|x| x * k);
        self.record(out, &[a], move |c| vec![Some(c.grad.map(|g| g * k))])
    }

    /// `Σ cᵢ·xᵢ` over same-shaped inputs.
    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let (first, _) = *terms
            .first()
            .ok_or_else(|| Error::shape("lincomb", "no terms"))?;
        for &(v, _) in terms {
            same_shape(self, "lincomb", first, v)?;
        }
        let coeffs: Vec<T> = terms.iter().map(|&(_, c)| T::of(c)).collect();
        let mut out = Tensor::zeros(self.shape(first));
        for (&(v, _), &k) in terms.iter().zip(&coeffs) {
            for (o, &x) in out.data_mut().iter_mut().zip(self.value(v).data()) {
                *o += k * x;
            }
        }
        let vars: Vec<Var> = terms.iter().map(|&(v, _)| v).collect();
        Ok(self.record(out, &vars, move |c| {
            coeffs
                .iter()
                .zip(&c.needs)
                .map(|(&k, &need)| need.then(|| c.grad.map(|g| g * k)))
                .collect()
        }))
    }

    /// Adds `bias (C)` along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_bias", format!("bias {:?} for input {:?}", self.shape(bias), self.shape(x))));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.record(out, &[x, bias], move |ctx| {
            let db = ctx.needs[1].then(|| {
                let mut acc = vec![T::zero(); c];
                for row in ctx.grad.data().chunks_exact(c) {
                    for (a, &g) in acc.iter_mut().zip(row) {
                        *a += g;
                    }
                }
                Tensor::new(&[c], acc).unwrap()
            });
            vec![Some(ctx.grad.clone()), db]
        }))
    }

    /// Multiplies by `gain (C)` along the last axis.
    pub fn mul_lastdim(&mut self, x: Var, gain: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(gain) != [c] {
            return Err(Error::shape("mul_lastdim", format!("gain {:?} for input {:?}", self.shape(gain), self.shape(x))));
        }
        let mut out = self.value(x).clone();
        let gv = self.value(gain).data().to_vec();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (o, &k) in row.iter_mut().zip(&gv) {
                *o *= k;
            }
        }
        Ok(self.record(out, &[x, gain], move |ctx| {
            let gain = ctx.inputs[1].data();
            let dx = ctx.needs[0].then(|| {
                let mut d = ctx.grad.clone();
                for row in d.data_mut().chunks_exact_mut(c) {
                    for (o, &k) in row.iter_mut().zip(gain) {
                        *o *= k;
                    }
                }
                d
            });
            let dg = ctx.needs[1].then(|| {
                let mut acc = vec![T::zero(); c];
                for (grow, xrow) in ctx.grad.data().chunks_exact(c).zip(ctx.inputs[0].data().chunks_exact(c)) {
                    for i in 0..c {
                        acc[i] += grow[i] * xrow[i];
                    }
                }
                Tensor::new(&[c], acc).unwrap()
            });
            vec![dx, dg]
        }))
    }

    /// Adds row `i` of `emb (N, C)` to every element of batch item `i` of
    /// `x (N, ..., C)`.
    pub fn add_per_batch(&mut self, x: Var, emb: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let es = self.shape(emb).to_vec();
        if es.len() != 2 || xs.len() < 2 || xs[0] != es[0] || xs[xs.len() - 1] != es[1] {
            return Err(Error::shape("add_per_batch", format!("{xs:?} + {es:?}")));
        }
        let (n, c) = (es[0], es[1]);
        let per = self.value(x).len() / n;
        let mut out = self.value(x).clone();
        let e = self.value(emb).data().to_vec();
        for (i, item) in out.data_mut().chunks_exact_mut(per).enumerate() {
            for row in item.chunks_exact_mut(c) {
                for (o, &ev) in row.iter_mut().zip(&e[i * c..(i + 1) * c]) {
                    *o += ev;
                }
            }
        }
        Ok(self.record(out, &[x, emb], move |ctx| {
            let de = ctx.needs[1].then(|| {
                let mut acc = vec![T::zero(); n * c];
                for (i, item) in ctx.grad.data().chunks_exact(per).enumerate() {
                    for row in item.chunks_exact(c) {
                        for (a, &g) in acc[i * c..(i + 1) * c].iter_mut().zip(row) {
                            *a += g;
                        }
                    }
                }
                Tensor::new(&[n, c], acc).unwrap()
            });
            vec![Some(ctx.grad.clone()), de]
        }))
    }

    /// `a (M,K) · b (K,N)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new(&[m, n], out).unwrap();
        Ok(self.record(out, &[a, b], move |c| {
            let g = c.grad.data();
            let da = c.needs[0].then(|| {
                let bt = kernels::transpose(c.inputs[1].data(), k, n);
                Tensor::new(&[m, k], kernels::matmul(g, &bt, m, n, k)).unwrap()
            });
            let db = c.needs[1].then(|| {
                let at = kernels::transpose(c.inputs[0].data(), m, k);
                Tensor::new(&[k, n], kernels::matmul(&at, g, k, m, n)).unwrap()
            });
            vec![da, db]
        }))
    }

    /// Applies `w (Cin, Cout)` to the last axis of `x (..., Cin)`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(Error::shape("linear", format!("{xs:?} · {ws:?}")));
        }
        let (cin, cout) = (ws[0], ws[1]);
        let rows = self.value(x).len() / cin;
        let out = kernels::matmul(self.value(x).data(), self.value(w).data(), rows, cin, cout);
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = cout;
        let out = Tensor::new(&out_shape, out).unwrap();
        Ok(self.record(out, &[x, w], move |c| {
            let g = c.grad.data();
            let dx = c.needs[0].then(|| {
                let wt = kernels::transpose(c.inputs[1].data(), cin, cout);
                Tensor::new(&xs, kernels::matmul(g, &wt, rows, cout, cin)).unwrap()
            });
            let dw = c.needs[1].then(|| {
                let xt = kernels::transpose(c.inputs[0].data(), rows, cin);
                Tensor::new(&[cin, cout], kernels::matmul(&xt, g, cin, rows, cout)).unwrap()
            });
            vec![dx, dw]
        }))
    }

    /// Batched `a (G,M,K) · b (G,K,N)`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", format!("{sa:?} · {sb:?}")));
        }
        let (gcount, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(gcount * m * n);
        for i in 0..gcount {
            out.extend(kernels::matmul(&av[i * m * k..(i + 1) * m * k], &bv[i * k * n..(i + 1) * k * n], m, k, n));
        }
        let out = Tensor::new(&[gcount, m, n], out).unwrap();
        Ok(self.record(out, &[a, b], move |c| {
            let g = c.grad.data();
            let (av, bv) = (c.inputs[0].data(), c.inputs[1].data());
            let da = c.needs[0].then(|| {
                let mut d = Vec::with_capacity(gcount * m * k);
                for i in 0..gcount {
                    let bt = kernels::transpose(&bv[i * k * n..(i + 1) * k * n], k, n);
                    d.extend(kernels::matmul(&g[i * m * n..(i + 1) * m * n], &bt, m, n, k));
                }
                Tensor::new(&[gcount, m, k], d).unwrap()
            });
            let db = c.needs[1].then(|| {
                let mut d = Vec::with_capacity(gcount * k * n);
                for i in 0..gcount {
                    let at = kernels::transpose(&av[i * m * k..(i + 1) * m * k], m, k);
                    d.extend(kernels::matmul(&at, &g[i * m * n..(i + 1) * m * n], k, m, n));
                }
                Tensor::new(&[gcount, k, n], d).unwrap()
            });
            vec![da, db]
        }))
    }

    /// Gradient-transparent axis permutation; output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("{perm:?} on {shape:?}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let out = Tensor::new(&out_shape, permute_data(self.value(x).data(), &shape, perm)).unwrap();
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        Ok(self.record(out, &[x], move |c| {
            vec![Some(Tensor::new(&shape, permute_data(c.grad.data(), &out_shape, &inv)).unwrap())]
        }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let from = self.shape(x).to_vec();
        let out = self.value(x).clone().reshaped(shape)?;
        Ok(self.record(out, &[x], move |c| vec![Some(c.grad.clone().reshaped(&from).unwrap())]))
    }

    /// Same-size 2-D convolution of `x (B,H,W,Ci)` with `w (K,K,Ci,Co)`.
    pub fn conv2d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != ws[1] || ws[0] % 2 == 0 || ws[2] != xs[3] {
            return Err(Error::shape("conv2d", format!("input {xs:?}, kernel {ws:?}")));
        }
        let s = ConvShape {
            batch: xs[0],
            rows: xs[1],
            cols: xs[2],
            cin: xs[3],
            cout: ws[3],
            k: ws[0],
        };
        let out = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), s);
        let out = Tensor::new(&[s.batch, s.rows, s.cols, s.cout], out).unwrap();
        Ok(self.record(out, &[x, w], move |c| {
            let g = c.grad.data();
            vec![
                c.needs[0].then(|| Tensor::new(&xs, kernels::conv2d_backward_input(g, c.inputs[1].data(), s)).unwrap()),
                c.needs[1].then(|| Tensor::new(&ws, kernels::conv2d_backward_weight(g, c.inputs[0].data(), s)).unwrap()),
            ]
        }))
    }

    fn plane_dims(&self, op: &'static str, x: Var, even: bool) -> Result<[usize; 4]> {
        let s = self.shape(x);
        if s.len() != 4 || (even && (s[1] % 2 != 0 || s[2] % 2 != 0)) {
            return Err(Error::shape(op, format!("expected (B,H,W,C) with even H,W, got {s:?}")));
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let [b, h, w, c] = self.plane_dims("avg_pool2", x, true)?;
        let out = Tensor::new(&[b, h / 2, w / 2, c], kernels::avg_pool2(self.value(x).data(), b, h, w, c)).unwrap();
        Ok(self.record(out, &[x], move |ctx| {
            vec![Some(Tensor::new(&[b, h, w, c], kernels::avg_pool2_backward(ctx.grad.data(), b, h, w, c)).unwrap())]
        }))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let [b, h, w, c] = self.plane_dims("upsample2", x, false)?;
        let out = Tensor::new(&[b, 2 * h, 2 * w, c], kernels::upsample2(self.value(x).data(), b, h, w, c)).unwrap();
        Ok(self.record(out, &[x], move |ctx| {
            vec![Some(Tensor::new(&[b, h, w, c], kernels::upsample2_backward(ctx.grad.data(), b, h, w, c)).unwrap())]
        }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var {
        let out = self.value(x).map(f);
        self.record(out, &[x], move |c| {
            let d = c
                .grad
                .data()
                .iter()
                .zip(c.inputs[0].data())
                .zip(c.out.data())
                .map(|((&g, &xv), &yv)| g * df(xv, yv))
                .collect();
            vec![Some(Tensor::new(c.grad.shape(), d).unwrap())]
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), |xv, _| if xv > T::zero() { T::one() } else { T::zero() })
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v * sigmoid(v),
            |xv, _| {
                let s = sigmoid(xv);
                s * (T::one() + xv * (T::one() - s))
            },
        )
    }

    /// tanh-approximated GELU
    pub fn gelu(&mut self, x: Var) -> Var {
        let (k, c3) = (T::of(GELU_K), T::of(GELU_C));
        let half = T::of(0.5);
        self.unary(
            x,
            move |v| half * v * (T::one() + (k * (v + c3 * v * v * v)).tanh()),
            move |v, _| {
                let inner = k * (v + c3 * v * v * v);
                let t = inner.tanh();
                let dinner = k * (T::one() + T::of(3.0) * c3 * v * v);
                half * (T::one() + t) + half * v * (T::one() - t * t) * dinner
            },
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let c = *self.shape(x).last().ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        Ok(self.record(out, &[x], move |ctx| {
            let mut d = ctx.grad.clone();
            for (drow, yrow) in d.data_mut().chunks_exact_mut(c).zip(ctx.out.data().chunks_exact(c)) {
                let dot: T = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                for (dv, &y) in drow.iter_mut().zip(yrow) {
                    *dv = y * (*dv - dot);
                }
            }
            vec![Some(d)]
        }))
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let c = *self.shape(x).last().ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
        let eps = T::of(eps);
        let cn = T::of(c as f64);
        let mut out = self.value(x).clone();
        let mut inv_std = Vec::with_capacity(out.len() / c);
        for row in out.data_mut().chunks_exact_mut(c) {
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let is = T::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        Ok(self.record(out, &[x], move |ctx| {
            let mut d = ctx.grad.clone();
            for ((drow, yrow), &is) in d
                .data_mut()
                .chunks_exact_mut(c)
                .zip(ctx.out.data().chunks_exact(c))
                .zip(&inv_std)
            {
                let gm = drow.iter().copied().sum::<T>() / cn;
                let gy = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum::<T>() / cn;
                for (dv, &y) in drow.iter_mut().zip(yrow) {
                    *dv = is * (*dv - gm - y * gy);
                }
            }
            vec![Some(d)]
        }))
    }

    /// Concatenates along the last axis.
    pub fn concat_lastdim(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::shape("concat", format!("{sa:?} ++ {sb:?}")));
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let mut out = Vec::with_capacity(self.value(a).len() + self.value(b).len());
        for (ra, rb) in self.value(a).data().chunks_exact(ca).zip(self.value(b).data().chunks_exact(cb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = ca + cb;
        let out = Tensor::new(&shape, out).unwrap();
        Ok(self.record(out, &[a, b], move |c| {
            let mut da = Vec::with_capacity(c.inputs[0].len());
            let mut db = Vec::with_capacity(c.inputs[1].len());
            for row in c.grad.data().chunks_exact(ca + cb) {
                da.extend_from_slice(&row[..ca]);
                db.extend_from_slice(&row[ca..]);
            }
            vec![
                Some(Tensor::new(&sa, da).unwrap()),
                Some(Tensor::new(&sb, db).unwrap()),
            ]
        }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let out = Tensor::scalar(self.value(x).sum());
        self.record(out, &[x], move |c| vec![Some(Tensor::full(&shape, c.grad.item()))])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// `Σ|p - t|` or its mean. The subgradient at zero is zero.
    pub fn l1_loss(&mut self, pred: Var, target: Var, reduction: Reduction) -> Result<Var> {
        same_shape(self, "l1_loss", pred, target)?;
        let n = self.value(pred).len();
        let k: T = reduction.factor(n);
        let total: T = neumaier_sum(
            self.value(pred)
                .data()
                .iter()
                .zip(self.value(target).data())
                .map(|(&p, &t)| (p - t).abs()),
        );
        Ok(self.record(Tensor::scalar(total * k), &[pred, target], move |c| {
            let g = c.grad.item() * k;
            let sign = zip_map(c.inputs[0], c.inputs[1], |p, t| {
                let d = p - t;
                if d > T::zero() {
                    g
                } else if d < T::zero() {
                    -g
                } else {
                    T::zero()
                }
            });
            vec![c.needs[0].then(|| sign.clone()), c.needs[1].then(|| sign.map(|v| -v))]
        }))
    }

    /// `Σ(p - t)²` or its mean.
    pub fn l2_loss(&mut self, pred: Var, target: Var, reduction: Reduction) -> Result<Var> {
        same_shape(self, "l2_loss", pred, target)?;
        let n = self.value(pred).len();
        let k: T = reduction.factor(n);
        let total: T = neumaier_sum(
            self.value(pred)
                .data()
                .iter()
                .zip(self.value(target).data())
                .map(|(&p, &t)| (p - t) * (p - t)),
        );
        Ok(self.record(Tensor::scalar(total * k), &[pred, target], move |c| {
            let g = c.grad.item() * k * T::of(2.0);
            let d = zip_map(c.inputs[0], c.inputs[1], |p, t| g * (p - t));
            vec![c.needs[0].then(|| d.clone()), c.needs[1].then(|| d.map(|v| -v))]
        }))
    }
}

/// Sinusoidal embedding of integer timesteps, shape `(len(ts), dim)`.
/// First half sines, second half cosines, frequencies `10000^(-i/(dim/2))`.
pub fn embed_timestep<T: Real>(ts: &[usize], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let mut row = vec![T::zero(); dim];
        for i in 0..half {
            let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            row[i] = T::of(arg.sin());
            row[half + i] = T::of(arg.cos());
        }
        data.extend(row);
    }
    Tensor::new(&[ts.len(), dim], data).unwrap()
}
