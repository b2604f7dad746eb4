use super::adapters::{ConvAdapter, ConvAdapterConfig, EpitAdapter, EpitAdapterConfig};
use super::layers::{pool, six, upsample, Conv, Dense, Init, ResBlock, TimeEmbed};
use super::{ModelConfig, Prediction};
use crate::autograd::{Bound, Graph, ParamGroup, Real, Var};
use crate::error::{Error, Result};
use crate::lf::LayoutPattern;

/// Two-level encoder-decoder over the spatial plane (views folded into the
/// batch), conditioned on `y0` by channel concatenation, with conv adapters
/// after every stage and an EPI transformer adapter at the bottleneck.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub prediction: Prediction,
    pub time: TimeEmbed,
    pub input: Conv,
    pub enc: ResBlock,
    pub down: Dense,
    pub mid: ResBlock,
    pub up: Dense,
    pub dec: ResBlock,
    pub output: Conv,
    pub enc_adapter: ConvAdapter,
    pub mid_adapter: ConvAdapter,
    pub mid_epit: EpitAdapter,
    pub dec_adapter: ConvAdapter,
}

impl DenoiserModel {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, cfg: &ModelConfig) -> Result<Self> {
        let [c1, c2] = cfg.channels;
        let ci = cfg.image_channels;
        let mut bb = init.with_group(ParamGroup::Backbone);
        let time = TimeEmbed::new(&mut bb, "den.time", cfg.time_dim, cfg.time_hidden)?;
        let input = Conv::new(&mut bb, "den.in", 2 * ci, c1, 3)?;
        let enc = ResBlock::new(&mut bb, "den.enc", c1, cfg.time_hidden)?;
        let down = Dense::new(&mut bb, "den.down", c1, c2)?;
        let mid = ResBlock::new(&mut bb, "den.mid", c2, cfg.time_hidden)?;
        let up = Dense::new(&mut bb, "den.up", c2, c1)?;
        let dec = ResBlock::new(&mut bb, "den.dec", c1, cfg.time_hidden)?;
        let output = Conv::new(&mut bb, "den.out", c1, ci, 3)?;

        let mut ad = init.with_group(ParamGroup::Adapter);
        let conv_cfg = |c_d, c_l| ConvAdapterConfig {
            c_d,
            c_l,
            kernel: cfg.adapter_kernel,
        };
        let enc_adapter = ConvAdapter::new(&mut ad, "den.enc.adapter", conv_cfg(c1, cfg.adapter_bottleneck[0]))?;
        let mid_adapter = ConvAdapter::new(&mut ad, "den.mid.adapter", conv_cfg(c2, cfg.adapter_bottleneck[1]))?;
        let mid_epit = EpitAdapter::new(
            &mut ad,
            "den.mid.epit",
            EpitAdapterConfig {
                c_d: c2,
                c_k: cfg.token_width,
                heads: cfg.heads,
            },
        )?;
        let dec_adapter = ConvAdapter::new(&mut ad, "den.dec.adapter", conv_cfg(c1, cfg.adapter_bottleneck[0]))?;
        Ok(DenoiserModel {
            prediction: cfg.prediction,
            time,
            input,
            enc,
            down,
            mid,
            up,
            dec,
            output,
            enc_adapter,
            mid_adapter,
            mid_epit,
            dec_adapter,
        })
    }

    /// Raw network output before the prediction-target transform.
    fn net<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x_t: Var,
        y0: Var,
        t: usize,
        adapters: bool,
    ) -> Result<Var> {
        let s = six(g, x_t, "denoiser")?;
        if g.shape(y0) != s {
            return Err(Error::shape("denoiser", format!("x_t {:?} vs y0 {:?}", s, g.shape(y0))));
        }
        if s[3] % 2 != 0 || s[4] % 2 != 0 {
            return Err(Error::shape("denoiser", format!("spatial extent {}x{} must be even", s[3], s[4])));
        }
        let temb = self.time.forward(g, p, t, s[0])?;
        let x = g.concat_lastdim(x_t, y0)?;
        let x = self.input.forward_pattern(g, p, x, LayoutPattern::Spatial)?;

        let mut e = self.enc.forward(g, p, x, temb)?;
        if adapters {
            e = self.enc_adapter.forward(g, p, e)?;
        }
        let m = pool(g, e)?;
        let m = self.down.forward(g, p, m)?;
        let mut m = self.mid.forward(g, p, m, temb)?;
        if adapters {
            m = self.mid_adapter.forward(g, p, m)?;
            m = self.mid_epit.forward(g, p, m)?;
        }
        let d = upsample(g, m)?;
        let d = self.up.forward(g, p, d)?;
        let d = g.add(d, e)?;
        let mut d = self.dec.forward(g, p, d, temb)?;
        if adapters {
            d = self.dec_adapter.forward(g, p, d)?;
        }
        let d = g.silu(d);
        self.output.forward_pattern(g, p, d, LayoutPattern::Spatial)
    }

    fn to_eps<T: Real>(&self, g: &mut Graph<T>, x_t: Var, raw: Var, alpha_bar: f64) -> Result<Var> {
        match self.prediction {
            Prediction::Epsilon => Ok(raw),
            Prediction::Sample => {
                // ε̂ such that predict_x0(x_t, ε̂) equals the raw output
                let s = (1.0 - alpha_bar).sqrt();
                g.lincomb(&[(x_t, 1.0 / s), (raw, -alpha_bar.sqrt() / s)])
            }
        }
    }

    /// Noise estimate for `x_t` at step `t` with cumulative signal `alpha_bar`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x_t: Var,
        y0: Var,
        t: usize,
        alpha_bar: f64,
    ) -> Result<Var> {
        let raw = self.net(g, p, x_t, y0, t, true)?;
        self.to_eps(g, x_t, raw, alpha_bar)
    }

    /// Same as [`forward`](Self::forward) with every adapter bypassed.
    pub fn forward_backbone<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x_t: Var,
        y0: Var,
        t: usize,
        alpha_bar: f64,
    ) -> Result<Var> {
        let raw = self.net(g, p, x_t, y0, t, false)?;
        self.to_eps(g, x_t, raw, alpha_bar)
    }
}
