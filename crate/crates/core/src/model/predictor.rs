use super::layers::{six, Conv, Dense, Init, MultiPatternConv, TimeEmbed};
use super::ModelConfig;
use crate::autograd::{Bound, Graph, ParamGroup, Real, Var};
use crate::error::{Error, Result};
use crate::lf::LayoutPattern;

/// Maps the degraded input and a step to a noise map of the same shape.
#[derive(Debug, Clone)]
pub struct NoisePredictorModel {
    pub time: TimeEmbed,
    pub input: Conv,
    pub blocks: Vec<(MultiPatternConv, Dense)>,
    pub output: Conv,
    pub channels: usize,
}

const BLOCKS: usize = 2;

impl NoisePredictorModel {
    pub(crate) fn new<T: Real>(init: &mut Init<T>, cfg: &ModelConfig) -> Result<Self> {
        let mut init = init.with_group(ParamGroup::Predictor);
        let c = cfg.predictor_channels;
        let time = TimeEmbed::new(&mut init, "pred.time", cfg.time_dim, cfg.time_hidden)?;
        let input = Conv::new(&mut init, "pred.in", cfg.image_channels, c, 3)?;
        let mut blocks = Vec::with_capacity(BLOCKS);
        for i in 0..BLOCKS {
            let mp = MultiPatternConv::new(&mut init, &format!("pred.block{i}.mp"), c, c, 3)?;
            let shift = Dense::new(&mut init, &format!("pred.block{i}.time"), cfg.time_hidden, c)?;
            blocks.push((mp, shift));
        }
        let output = Conv::new(&mut init, "pred.out", c, cfg.image_channels, 3)?;
        Ok(NoisePredictorModel {
            time,
            input,
            blocks,
            output,
            channels: c,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, y0: Var, tau: usize) -> Result<Var> {
        let s = six(g, y0, "noise predictor")?;
        if s[5] != self.input.cin {
            return Err(Error::shape("noise predictor", format!("{} channels, expected {}", s[5], self.input.cin)));
        }
        let temb = self.time.forward(g, p, tau, s[0])?;
        let mut h = self.input.forward_pattern(g, p, y0, LayoutPattern::Spatial)?;
        for (mp, shift) in &self.blocks {
            let a = g.silu(h);
            let r = mp.forward(g, p, a)?;
            let sh = shift.forward(g, p, temb)?;
            let r = g.add_per_batch(r, sh)?;
            h = g.add(h, r)?;
        }
        let h = g.silu(h);
        self.output.forward_pattern(g, p, h, LayoutPattern::Spatial)
    }
}
