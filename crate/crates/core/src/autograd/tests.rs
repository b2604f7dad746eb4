use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
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

fn check(params: &[Tensor<f64>], f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) -> f64 {
    // Power-of-two step keeps perturbed dyadic inputs exact. 2^-17 balances
    // rounding in the smooth ops against truncation.
    let opts = GradCheckOptions { eps: 2f64.powi(-17), ..Default::default() };
    let r = grad_check(f, params, opts).unwrap();
    assert!(r.checked > 0);
    if r.max_rel_error >= PRIMITIVE_TOL {
        eprintln!("worst {:?}: analytic {:e} numeric {:e}", r.worst, r.analytic, r.numeric);
    }
    r.max_rel_error
}

const PRIMITIVE_TOL: f64 = 1e-6;

#[test]
fn square_derivative() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::scalar(3.0), true);
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 6.0);
}

#[test]
fn l1_subgradient_at_zero() {
    let mut g = Graph::<f64>::new();
    let p = g.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
    let t = g.constant(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
    let l = g.l1_loss(p, t, Reduction::Sum).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(p).unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn independent_parameter_has_zero_grad_and_grads_accumulate() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::full(&[2], 1.5), true);
    let b = g.leaf(Tensor::full(&[2], 4.0), true);
    let sq = g.mul(a, a).unwrap();
    let l = g.sum(sq);
    let _unused = g.add(a, b).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad(b).map_or(true, |t| t.data().iter().all(|&x| x == 0.0)));
    let first = g.grad(a).unwrap().clone();
    g.backward(l).unwrap();
    let second = g.grad(a).unwrap();
    for (x, y) in first.data().iter().zip(second.data()) {
        assert_eq!(2.0 * x, *y);
    }
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::full(&[2], 1.0), true);
    assert!(g.backward(a).is_err());
}

#[test]
fn shape_errors_name_the_op() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::zeros(&[2, 3]), true);
    let b = g.leaf(Tensor::zeros(&[2, 2]), true);
    let e = g.matmul(b, a).map(|_| ()).and_then(|_| g.add(a, b).map(|_| ()));
    assert!(e.unwrap_err().to_string().starts_with("add"));
    assert!(g.matmul(a, b).unwrap_err().to_string().starts_with("matmul"));
}

#[test]
fn grad_check_trivial_functions() {
    let p = vec![Tensor::full(&[4], 0.3)];
    let f_const = |g: &mut Graph<f64>, _: &[Var]| Ok(g.constant(Tensor::scalar(7.0)));
    let r0 = grad_check(f_const, &p, GradCheckOptions::default()).unwrap();
    assert_eq!(r0.max_rel_error, 0.0);
    let f_sum = |g: &mut Graph<f64>, v: &[Var]| Ok(g.sum(v[0]));
    let r1 = grad_check(f_sum, &p, GradCheckOptions::default()).unwrap();
    assert!(r1.max_rel_error < 1e-9);
    assert_eq!(r1.analytic, 1.0);
}

#[test]
fn matmul_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ps = vec![rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2])];
    let err = check(&ps, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        probe(g, y, 9)
    });
    assert!(err < PRIMITIVE_TOL, "{err}");
}

#[test]
fn every_primitive_passes_grad_check() {
    for (name, err) in crate::selftest::primitive_suite(8, 42).unwrap() {
        assert!(err < PRIMITIVE_TOL, "{name} rel err {err}");
    }
}

#[test]
fn backward_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_fn(&[2, 6, 6, 3], |_| rng.random_range(-1.0..1.0)), true);
        let k = g.leaf(Tensor::from_fn(&[3, 3, 3, 4], |_| rng.random_range(-1.0..1.0)), true);
        let y = g.conv2d(x, k).unwrap();
        let y = g.gelu(y);
        let s = g.softmax(y).unwrap();
        let l = g.sum(s);
        let l2 = g.mul(l, l).unwrap();
        g.backward(l2).unwrap();
        g.grad(k).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn conv_with_centered_delta_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 5, 4, 3]);
    let mut k = Tensor::zeros(&[3, 3, 3, 3]);
    for c in 0..3 {
        k.data_mut()[(4 * 3 + c) * 3 + c] = 1.0;
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let kv = g.constant(k);
    let y = g.conv2d(xv, kv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn timestep_embedding_is_distinct_per_step() {
    let e: Tensor<f64> = embed_timestep(&[0, 100, 500], 16);
    assert_eq!(e.shape(), &[3, 16]);
    assert_eq!(e.data()[0], 0.0);
    assert_eq!(e.data()[8], 1.0);
    assert_ne!(&e.data()[16..32], &e.data()[32..48]);
}

