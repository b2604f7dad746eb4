//! The invariant and oracle suite run by the `selftest` command and the
//! acceptance tests. Each check returns a one-line summary on success and a
//! description of the first violated property on failure.

pub mod oracle;
mod primitives;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::autograd::{grad_check, Bound, Coords, GradCheckOptions, GradCheckReport, Graph, ParamId, ParamStore, Reduction, Tensor};
use crate::georeg::{core_distance, geometry_loss, geometry_loss_var, tucker_hosvd, Cluster, GeoConfig, GeometryPlan};
use crate::lf::{Dims, LightField, RangeTag};
use crate::metrics::{ciede2000, reference_pairs};
use crate::model::{lf_to_tensor, ConvAdapter, EpiBranch, ModelConfig, Network};
use crate::pipeline::{infer_with, InferConfig, JumpKernel, OracleDenoiser, Pair, TrainConfig, Trainer};
use crate::schedule::{q_sample, Schedule, ScheduleConfig};
use crate::watersim::{generate_pair, WaterPreset};

pub use primitives::primitive_suite;

/// `Ok(summary)` or `Err(first failure)`.
pub type Outcome = std::result::Result<String, String>;

pub const PRIMITIVE_TOL: f64 = 1e-6;
pub const COMPOSITE_TOL: f64 = 1e-4;
pub const IDENTITY_TOL: f64 = 1e-5;
pub const RECOVERY_TOL: f64 = 1e-4;
pub const DELTA_E_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub type Check = fn() -> Outcome;

pub const CHECKS: &[(&str, Check)] = &[
    ("schedule_algebra", schedule_algebra),
    ("gradient_integrity", gradient_integrity),
    ("hosvd_suite", hosvd_suite),
    ("geometry_loss_properties", geometry_loss_properties),
    ("adapter_identity", adapter_identity),
    ("oracle_end_to_end", oracle_end_to_end),
    ("color_difference", color_difference),
];

pub fn run_check(name: &'static str, check: Check) -> CheckReport {
    let start = Instant::now();
    let outcome = check();
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckReport {
        name,
        passed,
        detail,
        seconds,
    }
}

pub fn run_all(mut on_report: impl FnMut(&CheckReport)) -> Vec<CheckReport> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let r = run_check(name, check);
            on_report(&r);
            r
        })
        .collect()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn lib(e: crate::Error) -> String {
    e.to_string()
}

fn uniform(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn uniform_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn uniform_lf(dims: Dims, seed: u64) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    LightField::new(dims, data, RangeTag::Signed).expect("in range")
}

fn randomize(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in store.iter_mut() {
        p.value = Tensor::from_fn(p.value.shape(), |_| rng.random_range(-scale..scale));
    }
}

fn zero(store: &mut ParamStore<f64>, ids: &[ParamId]) {
    for &id in ids {
        let p = store.get_mut(id);
        p.value = Tensor::zeros(p.value.shape());
    }
}

/// Configuration small enough for dense finite differences.
pub fn tiny_model(image_channels: usize) -> ModelConfig {
    ModelConfig {
        image_channels,
        channels: [8, 16],
        time_dim: 16,
        time_hidden: 16,
        adapter_bottleneck: [4, 8],
        token_width: 8,
        heads: 2,
        predictor_channels: 4,
        ..ModelConfig::default()
    }
}

// ---- schedule ----

pub fn schedule_algebra() -> Outcome {
    let sched = Schedule::new(ScheduleConfig::default()).map_err(lib)?;
    let steps = sched.total_steps();
    ensure!(steps == 1000, "default schedule has {steps} steps");

    // recovering x0 from the forward sample and its own noise, in f64
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eps: Vec<f64> = (0..512).map(|_| rng.sample(StandardNormal)).collect();
    let norm = x0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut worst = (0.0f64, 0usize);
    for t in 1..=steps {
        let (ma, mb) = sched.marginal_coeffs(t);
        let (xa, xb) = sched.x0_coeffs(t);
        let err = x0
            .iter()
            .zip(&eps)
            .map(|(&a, &n)| (xa * (ma * a + mb * n) + xb * n - a).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm;
        if err > worst.0 {
            worst = (err, t);
        }
    }
    ensure!(worst.0 <= IDENTITY_TOL, "x0 recovery error {:.3e} at t={}", worst.0, worst.1);

    ensure!(sched.alpha_bar(0) == 1.0, "alpha_bar(0) = {}", sched.alpha_bar(0));
    for t in 1..=steps {
        let (prev, cur) = (sched.alpha_bar(t - 1), sched.alpha_bar(t));
        ensure!(cur < prev && cur > 0.0, "alpha_bar not strictly decreasing at t={t}: {prev} -> {cur}");
    }

    for t in 2..=steps {
        let (a, b) = sched.posterior_coeffs(t);
        let (ja, jb, js) = sched.jump_coeffs(t, t - 1);
        ensure!(
            (a - ja).abs() < 1e-9 && (b - jb).abs() < 1e-9 && (js - sched.sigma(t)).abs() < 1e-9,
            "adjacent jump differs from the posterior step at t={t}"
        );
        let (xa, xb) = sched.x0_coeffs(t);
        let (ja, jb, js) = sched.jump_coeffs(t, 0);
        ensure!((xa - ja).abs() < 1e-9 && (xb - jb).abs() < 1e-9 && js == 0.0, "jump to 0 is not the x0 estimate at t={t}");
    }

    // sample mean within 4 standard errors, variance within 5 of its own
    let dims = Dims::new(1, 1, 1, 200, 200, 1);
    let n = dims.len() as f64;
    let clean = 0.8;
    let x0 = LightField::filled(dims, clean as f32, RangeTag::Unbounded).map_err(lib)?;
    let mut worst_z = 0.0f64;
    for (i, t) in [1usize, 100, 250, 500, 750, 1000].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + i as u64);
        let data = (0..dims.len()).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let eps = LightField::new(dims, data, RangeTag::Unbounded).map_err(lib)?;
        let xt = q_sample(&sched, &x0, t, &eps).map_err(lib)?;
        let mean = xt.data().iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = xt.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ab = sched.alpha_bar(t);
        let want_var = 1.0 - ab;
        let z_mean = (mean - ab.sqrt() * clean).abs() / (want_var / n).sqrt();
        let z_var = (var / want_var - 1.0).abs() / (2.0 / (n - 1.0)).sqrt();
        ensure!(z_mean < 4.0, "t={t}: mean {mean} is {z_mean:.1} standard errors off");
        ensure!(z_var < 5.0, "t={t}: variance {var} is {z_var:.1} standard errors off");
        worst_z = worst_z.max(z_mean).max(z_var);
    }
    Ok(format!(
        "x0 recovery worst {:.2e} (t={}); alpha_bar strictly decreasing; moments within {worst_z:.2} SE",
        worst.0, worst.1
    ))
}

// ---- gradients ----

/// Finite-difference check of the whole training objective, pixel plus
/// geometry terms through the predictor, denoiser and adapters, with every
/// parameter randomized so no branch is trivially zero.
pub fn composite_grad_check(dims: Dims, per_tensor: usize) -> crate::Result<(GradCheckReport, usize)> {
    let mut net = Network::<f64>::new(tiny_model(dims.c))?;
    randomize(&mut net.params, 6, 0.3);
    let sched = Schedule::new(ScheduleConfig::default())?;
    let geo = GeoConfig {
        p: 4,
        m: 2,
        ..GeoConfig::default()
    };
    let shape = dims.as_array();
    let x0 = uniform_tensor(&shape, 21, 1.0);
    let y0 = uniform_tensor(&shape, 22, 1.0);
    let z = uniform_tensor(&shape, 23, 1.0);
    let tau = 300;
    let params: Vec<Tensor<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
    let opts = GradCheckOptions {
        coords: Coords::PerParam {
            count: per_tensor,
            seed: 3,
        },
        ..Default::default()
    };
    let report = grad_check(
        |g, v| {
            let p = Bound::from_vars(v.to_vec());
            let y = g.constant(y0.clone());
            let noise = net.predictor.forward(g, &p, y, tau)?;
            let (ma, mb) = sched.marginal_coeffs(tau);
            let x_tau = g.lincomb(&[(y, ma), (noise, mb)])?;
            let eps = net.denoiser.forward(g, &p, x_tau, y, tau, sched.alpha_bar(tau))?;
            let (xa, xb) = sched.x0_coeffs(tau);
            let x_hat = g.lincomb(&[(x_tau, xa), (eps, xb)])?;
            let target = g.constant(x0.clone());
            let pixel = g.l1_loss(x_hat, target, Reduction::Sum)?;
            let (pa, pb) = sched.posterior_coeffs(tau);
            let zv = g.constant(z.clone());
            let x_prev = g.lincomb(&[(x_tau, pa), (eps, pb), (zv, sched.sigma(tau))])?;
            let geo = geometry_loss_var(g, x_prev, &x0, &sched, tau, geo, None)?;
            g.lincomb(&[(pixel, 1.0), (geo, 1.0)])
        },
        &params,
        opts,
    )?;
    Ok((report, params.len()))
}

pub fn gradient_integrity() -> Outcome {
    let prims = primitive_suite(8, 42).map_err(lib)?;
    let (name, err) = prims.iter().fold(("", 0.0), |w, &(n, e)| if e > w.1 { (n, e) } else { w });
    ensure!(err < PRIMITIVE_TOL, "primitive {name}: relative error {err:.3e}");
    let (r, tensors) = composite_grad_check(Dims::new(1, 2, 2, 8, 8, 2), 2).map_err(lib)?;
    ensure!(
        r.max_rel_error < COMPOSITE_TOL,
        "composite: relative error {:.3e} at {:?} (analytic {:e}, numeric {:e})",
        r.max_rel_error,
        r.worst,
        r.analytic,
        r.numeric
    );
    Ok(format!(
        "{} primitives worst {name} {err:.2e}; composite {} coordinates over {tensors} tensors worst {:.2e}",
        prims.len(),
        r.checked,
        r.max_rel_error
    ))
}

// ---- HOSVD ----

pub fn hosvd_suite() -> Outcome {
    use oracle::{frob2, oracle_core, oracle_mode};

    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut full_worst = 0.0f64;
    for trial in 0..50 {
        let d = [rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8)];
        let x = uniform(d[0] * d[1] * d[2], 300 + trial);
        let t = tucker_hosvd(&x, d, d).map_err(lib)?;
        full_worst = full_worst.max(frob2(&t.reconstruct(), &x).sqrt());
    }
    ensure!(full_worst < 1e-8, "full-rank reconstruction error {full_worst:.3e}");

    let d = [4, 6, 5];
    let ranks = [2, 3, 2];
    let mut slack = f64::INFINITY;
    for trial in 0..100 {
        let x = uniform(120, 1000 + trial);
        let t = tucker_hosvd(&x, d, ranks).map_err(lib)?;
        let err = frob2(&t.reconstruct(), &x);
        let bound: f64 = (0..3)
            .map(|m| oracle_mode(&x, d, m, 1).1[ranks[m]..].iter().map(|s| s * s).sum::<f64>())
            .sum();
        ensure!(err <= bound * (1.0 + 1e-9), "trial {trial}: truncation error {err} above bound {bound}");
        slack = slack.min(bound - err);
    }

    let (a, b, c) = (uniform(4, 1), uniform(6, 2), uniform(5, 3));
    let mut x = vec![0.0; 120];
    for i in 0..4 {
        for j in 0..6 {
            for k in 0..5 {
                x[(i * 6 + j) * 5 + k] = a[i] * b[j] * c[k];
            }
        }
    }
    let t = tucker_hosvd(&x, d, [1, 1, 1]).map_err(lib)?;
    let rank1 = frob2(&t.reconstruct(), &x).sqrt();
    ensure!(rank1 < 1e-10, "rank-1 reconstruction error {rank1:.3e}");
    let norm = |v: &[f64]| v.iter().map(|q| q * q).sum::<f64>().sqrt();
    let want = norm(&a) * norm(&b) * norm(&c);
    ensure!((t.core[0].abs() - want).abs() < 1e-10, "rank-1 core {} vs {want}", t.core[0]);

    // core distance against a dense reference decomposition
    let v_ref = uniform(120, 7);
    let v_rec: Vec<f64> = v_ref.iter().zip(uniform(120, 8)).map(|(a, b)| a + 0.3 * b).collect();
    let t = tucker_hosvd(&v_ref, d, ranks).map_err(lib)?;
    let got = core_distance(&t, &v_rec, &v_ref).map_err(lib)?;
    let factors = [oracle_mode(&v_ref, d, 0, ranks[0]).0, oracle_mode(&v_ref, d, 1, ranks[1]).0, oracle_mode(&v_ref, d, 2, ranks[2]).0];
    let (g_ref, g_rec) = (oracle_core(&v_ref, d, &factors), oracle_core(&v_rec, d, &factors));
    let want: f64 = g_ref.iter().zip(&g_rec).map(|(a, b)| (a - b).abs()).sum();
    ensure!((got - want).abs() <= 1e-9 * want, "core distance {got} vs dense {want}");
    let fixture = geometry_fixture().map_err(lib)?;
    ensure!(
        (fixture.0 - fixture.1).abs() <= 1e-6 * fixture.1,
        "fixture geometry loss {} vs dense {}",
        fixture.0,
        fixture.1
    );
    Ok(format!(
        "full-rank worst {full_worst:.1e}; 100 truncations within bound (min slack {slack:.2e}); rank-1 {rank1:.1e}; core distance {got:.6} = dense {want:.6}; fixture {:.6} = dense {:.6}",
        fixture.0, fixture.1
    ))
}

/// `(library, dense)` geometry loss on a 2×2-view, 8×8 fixture with four
/// 4×4 blocks in one cluster. The dense side stacks blocks in raster order
/// and decomposes with the Jacobi reference.
pub fn geometry_fixture() -> crate::Result<(f64, f64)> {
    use oracle::{oracle_core, oracle_mode};

    let sched = Schedule::new(ScheduleConfig::default())?;
    let dims = Dims::new(1, 2, 2, 8, 8, 3);
    let x_ref = uniform_lf(dims, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let data = x_ref.data().iter().map(|&q| q + rng.random_range(-0.3f32..0.3)).collect();
    let x_rec = LightField::new(dims, data, RangeTag::Unbounded)?;
    let cfg = GeoConfig {
        p: 4,
        k: Some(1),
        m: 4,
        r1: Some(4),
        r2: Some(48),
        r3: Some(4),
    };
    let t = 250;
    let got = geometry_loss(&x_rec, &x_ref, &sched, t, cfg)?;

    let d = [4, 48, 4];
    let stack = |lf: &LightField| {
        let mut v = vec![0.0; 4 * 48 * 4];
        for view in 0..4 {
            for (blk, (r0, c0)) in [(0, 0), (0, 4), (4, 0), (4, 4)].into_iter().enumerate() {
                for dy in 0..4 {
                    for dx in 0..4 {
                        for ch in 0..3 {
                            let j = (dy * 4 + dx) * 3 + ch;
                            v[(view * 48 + j) * 4 + blk] = lf.get(0, view / 2, view % 2, r0 + dy, c0 + dx, ch) as f64;
                        }
                    }
                }
            }
        }
        v
    };
    let (v_ref, v_rec) = (stack(&x_ref), stack(&x_rec));
    let factors = [oracle_mode(&v_ref, d, 0, 4).0, oracle_mode(&v_ref, d, 1, 48).0, oracle_mode(&v_ref, d, 2, 4).0];
    let (g_ref, g_rec) = (oracle_core(&v_ref, d, &factors), oracle_core(&v_rec, d, &factors));
    let l1: f64 = g_ref.iter().zip(&g_rec).map(|(a, b)| (a - b).abs()).sum();
    Ok((got, sched.alpha_bar(t).powi(2) * l1))
}

// ---- geometry loss ----

pub fn geometry_loss_properties() -> Outcome {
    let sched = Schedule::new(ScheduleConfig::default()).map_err(lib)?;
    let dims = Dims::new(1, 3, 3, 8, 8, 3);
    let cfg = GeoConfig {
        m: 2,
        ..GeoConfig::default()
    };
    let x = uniform_lf(dims, 11);
    for t in [2, 100, 500, 1000] {
        let l = geometry_loss(&x, &x, &sched, t, cfg).map_err(lib)?;
        ensure!(l == 0.0, "loss {l} at equality, t={t}");
    }
    let mut smallest = f64::INFINITY;
    for seed in 0..20 {
        let y = uniform_lf(dims, 100 + seed);
        let l = geometry_loss(&y, &x, &sched, 300, cfg).map_err(lib)?;
        ensure!(l >= 0.0 && l.is_finite(), "loss {l} for pair {seed}");
        smallest = smallest.min(l);
    }
    ensure!(smallest > 0.0, "distinct fields gave zero loss");

    for t in 1..=sched.total_steps() {
        let w = sched.geometry_weight(t);
        ensure!(w == sched.alpha_bar(t).powi(2), "weight at t={t} is not alpha_bar squared");
        if t > 1 {
            ensure!(w < sched.geometry_weight(t - 1), "weight not strictly decreasing at t={t}");
        }
    }
    // the unweighted distance does not depend on t
    let y = uniform_lf(dims, 99);
    let base = geometry_loss(&y, &x, &sched, 2, cfg).map_err(lib)? / sched.geometry_weight(2);
    for t in [50, 400, 900] {
        let l = geometry_loss(&y, &x, &sched, t, cfg).map_err(lib)? / sched.geometry_weight(t);
        ensure!((l - base).abs() <= 1e-9 * base, "unweighted distance varies with t: {l} vs {base}");
    }
    ensure!(geometry_loss(&y, &x, &sched, 1, cfg).is_err(), "t=1 accepted");

    // assignments come from the reference and are reused for every
    // reconstruction
    let dims = Dims::new(1, 2, 2, 8, 16, 1);
    let x_ref = uniform_lf(dims, 16);
    let cfg = GeoConfig {
        m: 4,
        ..GeoConfig::default()
    };
    let planned = GeometryPlan::new(&x_ref, cfg).map_err(lib)?.assignments();
    let ref_t: Tensor<f64> = lf_to_tensor(&x_ref);
    let mut recorded: Vec<Vec<Vec<Cluster>>> = Vec::new();
    for seed in [17, 18] {
        let x_rec = uniform_lf(dims, seed);
        let mut g = Graph::<f64>::new();
        let xv = g.leaf(lf_to_tensor(&x_rec), true);
        let mut rec = |a: &[Vec<Cluster>]| recorded.push(a.to_vec());
        let l = geometry_loss_var(&mut g, xv, &ref_t, &sched, 400, cfg, Some(&mut rec)).map_err(lib)?;
        let direct = geometry_loss(&x_rec, &x_ref, &sched, 400, cfg).map_err(lib)?;
        ensure!((g.value(l).item() - direct).abs() <= 1e-9 * direct, "graph and value paths disagree");
        let own = GeometryPlan::new(&x_rec, cfg).map_err(lib)?.assignments();
        ensure!(own != planned, "reconstruction {seed} happens to share the reference assignment");
    }
    ensure!(recorded.len() == 2 && recorded.iter().all(|a| *a == planned), "recorded assignment differs from the reference plan");
    Ok(format!(
        "zero at equality; min loss over 20 distinct pairs {smallest:.3e}; weight = alpha_bar^2 strictly decreasing; {} clusters reused",
        planned[0].len()
    ))
}

// ---- adapters ----

fn conv_adapter_up(a: &ConvAdapter) -> [ParamId; 2] {
    [a.up.weight, a.up.bias]
}

fn epi_conv(b: &EpiBranch) -> [ParamId; 2] {
    [b.conv.weight, b.conv.bias]
}

pub fn adapter_identity() -> Outcome {
    let shape = [1, 2, 3, 8, 6, 3];
    let x = uniform_tensor(&shape, 14, 1.0);
    let y = uniform_tensor(&shape, 15, 1.0);
    let run = |net: &Network<f64>, adapters: bool| -> crate::Result<Tensor<f64>> {
        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let out = if adapters {
            net.denoiser.forward(&mut g, &p, xv, yv, 300, 0.6)?
        } else {
            net.denoiser.forward_backbone(&mut g, &p, xv, yv, 300, 0.6)?
        };
        Ok(g.value(out).clone())
    };
    let same = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());

    let mut net = Network::<f64>::new(ModelConfig::default()).map_err(lib)?;
    let fresh = run(&net, true).map_err(lib)?;
    ensure!(same(&fresh, &run(&net, false).map_err(lib)?), "freshly initialized adapters change the output");

    // every adapter parameter random except the zero output projections
    randomize(&mut net.params, 5, 0.3);
    let d = net.denoiser.clone();
    let outputs: Vec<ParamId> = [conv_adapter_up(&d.enc_adapter), conv_adapter_up(&d.mid_adapter), conv_adapter_up(&d.dec_adapter), epi_conv(&d.mid_epit.horizontal), epi_conv(&d.mid_epit.vertical)]
        .concat();
    let live = run(&net, true).map_err(lib)?;
    ensure!(!same(&live, &run(&net, false).map_err(lib)?), "random adapters left the output unchanged");
    zero(&mut net.params, &outputs);
    let zeroed = run(&net, true).map_err(lib)?;
    ensure!(same(&zeroed, &run(&net, false).map_err(lib)?), "zero output projections do not reduce to the backbone");

    // residual form on each adapter in isolation: h + up(...) with up = 0
    let c = net.config.channels;
    let feature = |ch: usize| uniform_tensor(&[1, 2, 2, 4, 4, ch], 40 + ch as u64, 1.0);
    let residual_ok = |f: &dyn Fn(&mut Graph<f64>, &Bound, crate::autograd::Var) -> crate::Result<crate::autograd::Var>, ch: usize| -> crate::Result<bool> {
        let h = feature(ch);
        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let hv = g.constant(h.clone());
        let out = f(&mut g, &p, hv)?;
        Ok(same(g.value(out), &h))
    };
    ensure!(residual_ok(&|g, p, h| d.enc_adapter.forward(g, p, h), c[0]).map_err(lib)?, "encoder adapter is not the identity");
    ensure!(residual_ok(&|g, p, h| d.mid_adapter.forward(g, p, h), c[1]).map_err(lib)?, "bottleneck adapter is not the identity");
    ensure!(residual_ok(&|g, p, h| d.dec_adapter.forward(g, p, h), c[0]).map_err(lib)?, "decoder adapter is not the identity");
    ensure!(residual_ok(&|g, p, h| d.mid_epit.forward(g, p, h), c[1]).map_err(lib)?, "EPI transformer adapter is not the identity");
    Ok(format!(
        "fresh and zero-projection networks match the backbone bit for bit; {} output projections zeroed; 4 adapters reduce to the identity",
        outputs.len() / 2
    ))
}

// ---- oracle end to end ----

pub fn oracle_end_to_end() -> Outcome {
    let dims = Dims::new(1, 2, 2, 8, 8, 3);
    let (clean, degraded) = generate_pair(3, dims, WaterPreset::Greenish).map_err(lib)?;
    let pair = Pair::new("oracle", &clean, &degraded).map_err(lib)?;
    let sched = Schedule::new(ScheduleConfig::default()).map_err(lib)?;
    let net = Network::new(tiny_model(3)).map_err(lib)?;
    let cfg = TrainConfig {
        geo: GeoConfig {
            p: 4,
            m: 2,
            ..GeoConfig::default()
        },
        crop: None,
        ..TrainConfig::default()
    };
    let mut tr = Trainer::new(net.clone(), sched.clone(), cfg.clone()).map_err(lib)?;
    let oracle = OracleDenoiser::new(&pair.clean);
    let mut worst_loss = 0.0f64;
    for &tau in &cfg.start_steps {
        let s = tr.train_step_at(&oracle, &pair.clean, &pair.degraded, tau).map_err(lib)?;
        worst_loss = worst_loss.max(s.loss_pixel / dims.len() as f64);
    }
    // single precision: x_t/s − (√ᾱ/s)·x0 followed by its inverse
    ensure!(worst_loss <= 1e-5, "oracle pixel loss {worst_loss:.3e} per element");

    let max_err = |out: &LightField| out.data().iter().zip(pair.clean.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max) as f64;
    let mut worst = 0.0f64;
    for kernel in [JumpKernel::Posterior, JumpKernel::SourceStep] {
        let cfg = InferConfig {
            steps: vec![1],
            seed: 0,
            kernel,
        };
        let err = max_err(&infer_with(&net, &oracle, &sched, &pair.degraded, &cfg).map_err(lib)?);
        ensure!(err <= RECOVERY_TOL, "{kernel:?} S={{1}} recovery error {err:.3e}");
        worst = worst.max(err);
    }
    let five = max_err(&infer_with(&net, &oracle, &sched, &pair.degraded, &InferConfig::default()).map_err(lib)?);
    ensure!(five <= RECOVERY_TOL, "five-step oracle recovery error {five:.3e}");
    Ok(format!(
        "oracle pixel loss {worst_loss:.2e} per element; S={{1}} recovery {worst:.2e}; five-step recovery {five:.2e}"
    ))
}

// ---- color difference ----

pub fn color_difference() -> Outcome {
    let pairs = reference_pairs();
    ensure!(pairs.len() == 34, "expected 34 reference pairs, found {}", pairs.len());
    let mut worst = (0.0f64, 0usize);
    for (i, (a, b, want)) in pairs.iter().enumerate() {
        for (x, y) in [(a, b), (b, a)] {
            let err = (ciede2000(*x, *y) - want).abs();
            if err > worst.0 {
                worst = (err, i + 1);
            }
        }
    }
    ensure!(worst.0 <= DELTA_E_TOL, "pair {} off by {:.3e}", worst.1, worst.0);
    Ok(format!("34 reference pairs, both orders, worst error {:.2e}", worst.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        for (name, check) in [
            ("schedule_algebra", schedule_algebra as Check),
            ("adapter_identity", adapter_identity),
            ("oracle_end_to_end", oracle_end_to_end),
            ("color_difference", color_difference),
        ] {
            let r = run_check(name, check);
            assert!(r.passed, "{name}: {}", r.detail);
        }
    }

    #[test]
    fn failures_are_reported_not_raised() {
        let r = run_check("broken", || Err("boom".into()));
        assert!(!r.passed);
        assert_eq!(r.detail, "boom");
    }
}
