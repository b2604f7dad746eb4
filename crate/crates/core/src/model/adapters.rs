use serde::{Deserialize, Serialize};

use super::layers::{six, Conv, Dense, Init, MultiPatternConv};
use crate::autograd::{Bound, Graph, Real, Var};
use crate::error::{Error, Result};
use crate::lf::LayoutPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvAdapterConfig {
    /// feature channels
    pub c_d: usize,
    /// bottleneck channels, `< c_d`
    pub c_l: usize,
    /// kernel of the four pattern convolutions
    pub kernel: usize,
}

impl ConvAdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_l == 0 || self.c_l >= self.c_d {
            return Err(Error::config(format!(
                "conv adapter bottleneck c_l={} must satisfy 0 < c_l < c_d={}",
                self.c_l, self.c_d
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::config(format!("conv adapter kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpitAdapterConfig {
    pub c_d: usize,
    /// token width
    pub c_k: usize,
    pub heads: usize,
}

impl EpitAdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.c_k % self.heads != 0 {
            return Err(Error::config(format!(
                "token width c_k={} is not divisible by heads={}",
                self.c_k, self.heads
            )));
        }
        Ok(())
    }
}

/// `x + up(MP(down(x)))` with `up` zero-initialized.
#[derive(Debug, Clone)]
pub struct ConvAdapter {
    pub config: ConvAdapterConfig,
    pub down: Dense,
    pub mp: MultiPatternConv,
    pub up: Dense,
}

impl ConvAdapter {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, config: ConvAdapterConfig) -> Result<Self> {
        config.validate()?;
        Ok(ConvAdapter {
            config,
            down: Dense::new(init, &format!("{name}.down"), config.c_d, config.c_l)?,
            mp: MultiPatternConv::new(init, &format!("{name}.mp"), config.c_l, config.c_l, config.kernel)?,
            up: Dense::zeroed(init, &format!("{name}.up"), config.c_l, config.c_d)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let c = six(g, x, "conv adapter")?[5];
        if c != self.config.c_d {
            return Err(Error::shape("conv adapter", format!("{c} channels, expected {}", self.config.c_d)));
        }
        let h = self.down.forward(g, p, x)?;
        let h = self.mp.forward(g, p, h)?;
        let h = self.up.forward(g, p, h)?;
        g.add(x, h)
    }
}

/// One pre-norm transformer layer over token sequences `(N, L, c_k)`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub heads: usize,
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub fc1: Dense,
    pub fc2: Dense,
}

const LN_EPS: f64 = 1e-5;

impl TransformerLayer {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, c_k: usize, heads: usize) -> Result<Self> {
        Ok(TransformerLayer {
            heads,
            q: Dense::new(init, &format!("{name}.q"), c_k, c_k)?,
            k: Dense::new(init, &format!("{name}.k"), c_k, c_k)?,
            v: Dense::new(init, &format!("{name}.v"), c_k, c_k)?,
            o: Dense::new(init, &format!("{name}.o"), c_k, c_k)?,
            fc1: Dense::new(init, &format!("{name}.fc1"), c_k, 2 * c_k)?,
            fc2: Dense::new(init, &format!("{name}.fc2"), 2 * c_k, c_k)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (n, l, c) = (s[0], s[1], s[2]);
        let (hn, dh) = (self.heads, c / self.heads);

        let a = g.layer_norm(x, LN_EPS)?;
        let split = |g: &mut Graph<T>, t: Var, perm: &[usize], shape: &[usize]| -> Result<Var> {
            let t = g.reshape(t, &[n, l, hn, dh])?;
            let t = g.permute(t, perm)?;
            g.reshape(t, shape)
        };
        let q = self.q.forward(g, p, a)?;
        let q = split(g, q, &[0, 2, 1, 3], &[n * hn, l, dh])?;
        let k = self.k.forward(g, p, a)?;
        let kt = split(g, k, &[0, 2, 3, 1], &[n * hn, dh, l])?;
        let v = self.v.forward(g, p, a)?;
        let v = split(g, v, &[0, 2, 1, 3], &[n * hn, l, dh])?;

        let scores = g.bmm(q, kt)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.softmax(scores)?;
        let ctx = g.bmm(attn, v)?;
        let ctx = g.reshape(ctx, &[n, hn, l, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[n, l, c])?;
        let o = self.o.forward(g, p, ctx)?;
        let x = g.add(x, o)?;

        let m = g.layer_norm(x, LN_EPS)?;
        let m = self.fc1.forward(g, p, m)?;
        let m = g.gelu(m);
        let m = self.fc2.forward(g, p, m)?;
        g.add(x, m)
    }
}

/// One EPI branch: tokens along the (angular × spatial) plane of `pattern`.
#[derive(Debug, Clone)]
pub struct EpiBranch {
    pub pattern: LayoutPattern,
    pub w_in: Dense,
    pub layer: TransformerLayer,
    pub w_out: Dense,
    /// zero-initialized output projection of the branch
    pub conv: Conv,
}

impl EpiBranch {
    fn new<T: Real>(init: &mut Init<T>, name: &str, cfg: EpitAdapterConfig, pattern: LayoutPattern) -> Result<Self> {
        Ok(EpiBranch {
            pattern,
            w_in: Dense::new(init, &format!("{name}.w_in"), cfg.c_d, cfg.c_k)?,
            layer: TransformerLayer::new(init, &format!("{name}.attn"), cfg.c_k, cfg.heads)?,
            w_out: Dense::new(init, &format!("{name}.w_out"), cfg.c_k, cfg.c_d)?,
            conv: Conv::zeroed(init, &format!("{name}.conv"), cfg.c_d, cfg.c_d, 3)?,
        })
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = six(g, x, "epit adapter")?;
        let order = self.pattern.axis_order();
        let ps: Vec<usize> = order.iter().map(|&a| s[a]).collect();
        let n = ps[0] * ps[1] * ps[2];
        let xp = g.permute(x, &order)?;
        let tokens = g.reshape(xp, &[n, ps[3] * ps[4], ps[5]])?;
        let t = self.w_in.forward(g, p, tokens)?;
        let t = self.layer.forward(g, p, t)?;
        let t = self.w_out.forward(g, p, t)?;
        let t = g.reshape(t, &[n, ps[3], ps[4], ps[5]])?;
        let y = self.conv.forward(g, p, t)?;
        let y = g.reshape(y, &ps)?;
        g.permute(y, &self.pattern.inverse_order())
    }
}

/// Horizontal and vertical EPI transformer branches added onto the input.
#[derive(Debug, Clone)]
pub struct EpitAdapter {
    pub config: EpitAdapterConfig,
    pub horizontal: EpiBranch,
    pub vertical: EpiBranch,
}

impl EpitAdapter {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, config: EpitAdapterConfig) -> Result<Self> {
        config.validate()?;
        Ok(EpitAdapter {
            config,
            horizontal: EpiBranch::new(init, &format!("{name}.h"), config, LayoutPattern::EpiHorizontal)?,
            vertical: EpiBranch::new(init, &format!("{name}.v"), config, LayoutPattern::EpiVertical)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let c = six(g, x, "epit adapter")?[5];
        if c != self.config.c_d {
            return Err(Error::shape("epit adapter", format!("{c} channels, expected {}", self.config.c_d)));
        }
        let h = self.horizontal.forward(g, p, x)?;
        let v = self.vertical.forward(g, p, x)?;
        let y = g.add(x, h)?;
        g.add(y, v)
    }
}
