use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bind_frozen, gaussian, Backbone, Denoise, Trainer};
use crate::autograd::{Graph, Reduction};
use crate::error::{Error, Result};
use crate::lf::{LightField, RangeTag};
use crate::model::{lf_to_tensor, tensor_to_lf, Network};
use crate::schedule::Schedule;

/// One conditional DDPM step: `t ~ U{1..T}`, `ε ~ N(0, I)`, loss
/// `mean((ε − ε_θ(x_t, y0, t))²)` on the backbone alone.
pub fn ddpm_train_step(tr: &mut Trainer, x0: &LightField, y0: &LightField) -> Result<f64> {
    let den = tr.net.denoiser.clone();
    ddpm_train_step_with(tr, &Backbone(&den), x0, y0)
}

/// [`ddpm_train_step`] with a substitute denoiser.
pub fn ddpm_train_step_with(tr: &mut Trainer, den: &dyn Denoise, x0: &LightField, y0: &LightField) -> Result<f64> {
    if x0.dims() != y0.dims() {
        return Err(Error::shape("ddpm_train_step", format!("{} vs {}", x0.dims(), y0.dims())));
    }
    let t = tr.rng.random_range(1..=tr.sched.total_steps());
    let eps = gaussian(x0.dims(), &mut tr.rng);
    let (a, b) = tr.sched.marginal_coeffs(t);

    let mut g = Graph::new();
    let p = tr.net.params.bind(&mut g);
    let x0v = g.constant(lf_to_tensor(x0));
    let y = g.constant(lf_to_tensor(y0));
    let ev = g.constant(eps);
    let x_t = g.lincomb(&[(x0v, a), (ev, b)])?;
    let eps_hat = den.eps(&mut g, &p, x_t, y, t, tr.sched.alpha_bar(t))?;
    let loss = g.l2_loss(eps_hat, ev, Reduction::Mean)?;
    let value = g.value(loss).item() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("baseline loss at iteration {}", tr.iter + 1)));
    }
    if g.requires_grad(loss) {
        g.backward(loss)?;
    }
    tr.net.params.zero_grad();
    tr.net.params.collect_grads(&g, &p);
    tr.opt.step(&mut tr.net.params);
    tr.iter += 1;
    Ok(value)
}

/// Full ancestral sampling from `x_T ~ N(0, I)` down to step 0, with no
/// noise on the final step. Output is clipped to the signed range.
pub fn ddpm_sample(net: &Network<f32>, sched: &Schedule, y0: &LightField, seed: u64) -> Result<LightField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = y0.dims();
    let y_t = lf_to_tensor::<f32>(y0);
    let mut x = gaussian(dims, &mut rng);
    for t in (1..=sched.total_steps()).rev() {
        let mut g = Graph::new();
        let p = bind_frozen(&net.params, &mut g);
        let y = g.constant(y_t.clone());
        let xv = g.constant(x);
        let eps = Backbone(&net.denoiser).eps(&mut g, &p, xv, y, t, sched.alpha_bar(t))?;
        let (a, b) = sched.posterior_coeffs(t);
        let mean = g.lincomb(&[(xv, a), (eps, b)])?;
        x = g.value(mean).clone();
        if t > 1 {
            let s = sched.sigma(t) as f32;
            for (xi, zi) in x.data_mut().iter_mut().zip(gaussian(dims, &mut rng).data()) {
                *xi += s * zi;
            }
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("baseline sample at step {t}")));
        }
    }
    Ok(tensor_to_lf(&x, RangeTag::Unbounded)?.clamp_to(RangeTag::Signed))
}
