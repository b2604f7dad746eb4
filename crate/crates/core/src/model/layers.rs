//! Parameterized building blocks over 6-D channel-last features
//! `[b, u, v, h, w, c]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{embed_timestep, Bound, Graph, ParamGroup, ParamId, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::lf::LayoutPattern;

/// Registers parameters under a name prefix with seeded uniform init.
pub(crate) struct Init<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
    pub group: ParamGroup,
}

impl<T: Real> Init<'_, T> {
    fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..=bound)));
        self.store.add(name, self.group, t)
    }

    fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, self.group, Tensor::zeros(shape))
    }

    pub fn with_group(&mut self, group: ParamGroup) -> Init<'_, T> {
        Init {
            store: self.store,
            rng: self.rng,
            group,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Silu,
}

impl Activation {
    pub fn apply<T: Real>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Silu => g.silu(x),
        }
    }
}

/// `k×k` convolution with bias; weights `(k, k, cin, cout)`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl Conv {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, cin: usize, cout: usize, k: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::config(format!("{name}: kernel size {k} must be odd")));
        }
        let bound = 1.0 / ((k * k * cin) as f64).sqrt();
        Ok(Conv {
            weight: init.uniform(&format!("{name}.weight"), &[k, k, cin, cout], bound)?,
            bias: init.uniform(&format!("{name}.bias"), &[cout], bound)?,
            cin,
            cout,
            k,
        })
    }

    pub(crate) fn zeroed<T: Real>(init: &mut Init<T>, name: &str, cin: usize, cout: usize, k: usize) -> Result<Self> {
        Ok(Conv {
            weight: init.zeros(&format!("{name}.weight"), &[k, k, cin, cout])?,
            bias: init.zeros(&format!("{name}.bias"), &[cout])?,
            cin,
            cout,
            k,
        })
    }

    /// On a folded `(N, H, W, cin)` tensor.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p.get(self.weight))?;
        g.add_bias(y, p.get(self.bias))
    }

    /// On a 6-D feature, convolving over the plane selected by `pattern`.
    pub fn forward_pattern<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, pattern: LayoutPattern) -> Result<Var> {
        let s = six(g, x, "pattern conv")?;
        if s[5] != self.cin {
            return Err(Error::shape("pattern conv", format!("{} channels, expected {}", s[5], self.cin)));
        }
        let order = pattern.axis_order();
        let identity = pattern == LayoutPattern::Spatial;
        let xp = if identity { x } else { g.permute(x, &order)? };
        let ps: Vec<usize> = order.iter().map(|&a| s[a]).collect();
        let folded = g.reshape(xp, &[ps[0] * ps[1] * ps[2], ps[3], ps[4], ps[5]])?;
        let y = self.forward(g, p, folded)?;
        let y = g.reshape(y, &[ps[0], ps[1], ps[2], ps[3], ps[4], self.cout])?;
        if identity {
            Ok(y)
        } else {
            g.permute(y, &pattern.inverse_order())
        }
    }
}

/// Affine map on the last axis (a 1×1 convolution).
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl Dense {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let bound = 1.0 / (cin as f64).sqrt();
        Ok(Dense {
            weight: init.uniform(&format!("{name}.weight"), &[cin, cout], bound)?,
            bias: init.uniform(&format!("{name}.bias"), &[cout], bound)?,
            cin,
            cout,
        })
    }

    pub(crate) fn zeroed<T: Real>(init: &mut Init<T>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Dense {
            weight: init.zeros(&format!("{name}.weight"), &[cin, cout])?,
            bias: init.zeros(&format!("{name}.bias"), &[cout])?,
            cin,
            cout,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.linear(x, p.get(self.weight))?;
        g.add_bias(y, p.get(self.bias))
    }
}

/// Sinusoidal step features followed by a two-layer MLP; returns `(b, hidden)`.
#[derive(Debug, Clone)]
pub struct TimeEmbed {
    pub dim: usize,
    pub fc: Dense,
}

impl TimeEmbed {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        Ok(TimeEmbed {
            dim,
            fc: Dense::new(init, &format!("{name}.fc"), dim, hidden)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, t: usize, batch: usize) -> Result<Var> {
        let e = g.constant(embed_timestep(&vec![t; batch], self.dim));
        let h = self.fc.forward(g, p, e)?;
        Ok(g.silu(h))
    }
}

/// The four pattern convolutions, summed, then activated.
#[derive(Debug, Clone)]
pub struct MultiPatternConv {
    /// Spatial, Angular, EpiHorizontal, EpiVertical.
    pub convs: [Conv; 4],
    pub activation: Activation,
}

impl MultiPatternConv {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, cin: usize, cout: usize, k: usize) -> Result<Self> {
        let mut mk = |tag: &str| Conv::new(init, &format!("{name}.{tag}"), cin, cout, k);
        Ok(MultiPatternConv {
            convs: [mk("spatial")?, mk("angular")?, mk("epi_h")?, mk("epi_v")?],
            activation: Activation::Silu,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (conv, pattern) in self.convs.iter().zip(LayoutPattern::ALL) {
            let y = conv.forward_pattern(g, p, x, pattern)?;
            acc = Some(match acc {
                None => y,
                Some(a) => g.add(a, y)?,
            });
        }
        Ok(self.activation.apply(g, acc.expect("four branches")))
    }
}

/// Pre-activation residual block over the spatial plane with a per-item
/// timestep shift.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub time: Dense,
}

impl ResBlock {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, name: &str, c: usize, time_hidden: usize) -> Result<Self> {
        Ok(ResBlock {
            conv1: Conv::new(init, &format!("{name}.conv1"), c, c, 3)?,
            conv2: Conv::new(init, &format!("{name}.conv2"), c, c, 3)?,
            time: Dense::new(init, &format!("{name}.time"), time_hidden, c)?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, temb: Var) -> Result<Var> {
        let h = g.silu(x);
        let h = self.conv1.forward_pattern(g, p, h, LayoutPattern::Spatial)?;
        let shift = self.time.forward(g, p, temb)?;
        let h = g.add_per_batch(h, shift)?;
        let h = g.silu(h);
        let h = self.conv2.forward_pattern(g, p, h, LayoutPattern::Spatial)?;
        g.add(x, h)
    }
}

pub(crate) fn six<T: Real>(g: &Graph<T>, x: Var, op: &'static str) -> Result<[usize; 6]> {
    let s = g.shape(x);
    s.try_into()
        .map_err(|_| Error::shape(op, format!("expected a 6-D feature, got {s:?}")))
}

/// Halves `h` and `w` of a 6-D feature by 2×2 averaging.
pub(crate) fn pool<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let [b, u, v, h, w, c] = six(g, x, "pool")?;
    let f = g.reshape(x, &[b * u * v, h, w, c])?;
    let y = g.avg_pool2(f)?;
    g.reshape(y, &[b, u, v, h / 2, w / 2, c])
}

/// Doubles `h` and `w` of a 6-D feature by nearest-neighbour repetition.
pub(crate) fn upsample<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let [b, u, v, h, w, c] = six(g, x, "upsample")?;
    let f = g.reshape(x, &[b * u * v, h, w, c])?;
    let y = g.upsample2(f)?;
    g.reshape(y, &[b, u, v, 2 * h, 2 * w, c])
}
