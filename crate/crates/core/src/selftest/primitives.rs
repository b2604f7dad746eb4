//! Finite-difference checks of every differentiable primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{grad_check, GradCheckOptions, Graph, Reduction, Tensor, Var};
use crate::error::Result;

/// Dyadic entries with few mantissa bits keep forward sums exact, so central
/// differences measure the gradient rather than accumulated rounding.
fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-64i32..=64) as f64 / 64.0)
}

/// Contracts an op's output with fixed random weights so every output
/// element contributes a distinct gradient.
fn probe(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, g.shape(out));
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn check(params: &[Tensor<f64>], f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) -> Result<f64> {
    // Power-of-two step keeps perturbed dyadic inputs exact. 2^-17 balances
    // rounding in the smooth ops against truncation.
    let opts = GradCheckOptions {
        eps: 2f64.powi(-17),
        ..Default::default()
    };
    Ok(grad_check(f, params, opts)?.max_rel_error)
}

/// Worst relative gradient error per primitive over `trials` random shapes.
pub fn primitive_suite(trials: u64, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for trial in 0..trials {
        let d = |rng: &mut ChaCha8Rng| rng.random_range(1..=4usize);
        let (b, h, w) = (d(&mut rng), 2 * d(&mut rng), 2 * d(&mut rng));
        let (ci, co) = (d(&mut rng), d(&mut rng));
        let x4 = rand_tensor(&mut rng, &[b, h, w, ci]);
        let seed = seed.wrapping_mul(1000) + trial;
        let mut results: Vec<(&'static str, Result<f64>)> = Vec::new();

        let k = rand_tensor(&mut rng, &[3, 3, ci, co]);
        results.push(("conv2d", check(&[x4.clone(), k], |g, v| {
            let y = g.conv2d(v[0], v[1])?;
            probe(g, y, seed)
        })));
        let k1 = rand_tensor(&mut rng, &[1, 1, ci, co]);
        results.push(("conv2d_1x1", check(&[x4.clone(), k1], |g, v| {
            let y = g.conv2d(v[0], v[1])?;
            probe(g, y, seed)
        })));
        let other = rand_tensor(&mut rng, &[b, h, w, ci]);
        results.push(("add", check(&[x4.clone(), other.clone()], |g, v| {
            let y = g.add(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("sub", check(&[x4.clone(), other.clone()], |g, v| {
            let y = g.sub(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("mul", check(&[x4.clone(), other.clone()], |g, v| {
            let y = g.mul(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("scale", check(&[x4.clone()], |g, v| {
            let y = g.scale(v[0], -1.7);
            probe(g, y, seed)
        })));
        results.push(("lincomb", check(&[x4.clone(), other.clone()], |g, v| {
            let y = g.lincomb(&[(v[0], 0.3), (v[1], -2.0)])?;
            probe(g, y, seed)
        })));
        let bias = rand_tensor(&mut rng, &[ci]);
        results.push(("add_bias", check(&[x4.clone(), bias.clone()], |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("mul_lastdim", check(&[x4.clone(), bias], |g, v| {
            let y = g.mul_lastdim(v[0], v[1])?;
            probe(g, y, seed)
        })));
        let emb = rand_tensor(&mut rng, &[b, ci]);
        results.push(("add_per_batch", check(&[x4.clone(), emb], |g, v| {
            let y = g.add_per_batch(v[0], v[1])?;
            probe(g, y, seed)
        })));
        let wl = rand_tensor(&mut rng, &[ci, co]);
        results.push(("linear", check(&[x4.clone(), wl], |g, v| {
            let y = g.linear(v[0], v[1])?;
            probe(g, y, seed)
        })));
        let ba = rand_tensor(&mut rng, &[b, h, w]);
        let bb = rand_tensor(&mut rng, &[b, w, ci]);
        results.push(("bmm", check(&[ba, bb], |g, v| {
            let y = g.bmm(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("permute", check(&[x4.clone()], |g, v| {
            let y = g.permute(v[0], &[2, 0, 3, 1])?;
            probe(g, y, seed)
        })));
        results.push(("reshape", check(&[x4.clone()], |g, v| {
            let y = g.reshape(v[0], &[b * h, w * ci])?;
            probe(g, y, seed)
        })));
        results.push(("avg_pool2", check(&[x4.clone()], |g, v| {
            let y = g.avg_pool2(v[0])?;
            probe(g, y, seed)
        })));
        results.push(("upsample2", check(&[x4.clone()], |g, v| {
            let y = g.upsample2(v[0])?;
            probe(g, y, seed)
        })));
        // keep relu inputs away from the kink
        let away = x4.map(|x| if x.abs() < 0.05 { x + 0.1 } else { x });
        results.push(("relu", check(&[away], |g, v| {
            let y = g.relu(v[0]);
            probe(g, y, seed)
        })));
        results.push(("silu", check(&[x4.clone()], |g, v| {
            let y = g.silu(v[0]);
            probe(g, y, seed)
        })));
        results.push(("gelu", check(&[x4.clone()], |g, v| {
            let y = g.gelu(v[0]);
            probe(g, y, seed)
        })));
        results.push(("softmax", check(&[x4.clone()], |g, v| {
            let y = g.softmax(v[0])?;
            probe(g, y, seed)
        })));
        let wide = rand_tensor(&mut rng, &[b, h, w, ci + 4]);
        results.push(("layer_norm", check(&[wide], |g, v| {
            let y = g.layer_norm(v[0], 1e-5)?;
            probe(g, y, seed)
        })));
        results.push(("concat", check(&[x4.clone(), rand_tensor(&mut rng, &[b, h, w, co])], |g, v| {
            let y = g.concat_lastdim(v[0], v[1])?;
            probe(g, y, seed)
        })));
        results.push(("mean", check(&[x4.clone()], |g, v| {
            let y = g.mul(v[0], v[0])?;
            Ok(g.mean(y))
        })));
        results.push(("l1_loss", check(&[x4.clone(), other.clone()], |g, v| {
            g.l1_loss(v[0], v[1], Reduction::Mean)
        })));
        results.push(("l2_loss", check(&[x4.clone(), other], |g, v| {
            g.l2_loss(v[0], v[1], Reduction::Sum)
        })));

        for (name, err) in results {
            let err = err?;
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    Ok(worst)
}

