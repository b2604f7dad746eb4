use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coords {
    All,
    /// `count` coordinates drawn uniformly over all parameters.
    Random { count: usize, seed: u64 },
    /// up to `count` coordinates drawn from every parameter tensor
    PerParam { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// central-difference step
    pub eps: f64,
    /// denominators below this are clamped, so near-zero gradients are
    /// compared absolutely
    pub floor: f64,
    pub coords: Coords,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            floor: 1e-3,
            coords: Coords::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param index, element index)` of the worst coordinate
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of a scalar `f` with central differences.
///
/// `f` receives a fresh graph and one leaf per entry of `params`.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone(), true)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let total: usize = params.iter().map(|p| p.len()).sum();
    let flat: Vec<usize> = match opts.coords {
        Coords::All => (0..total).collect(),
        Coords::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, total, count.min(total)).into_vec();
            picked.sort_unstable();
            picked
        }
        Coords::PerParam { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut start = 0;
            let mut picked = Vec::new();
            for p in params {
                let mut local = sample(&mut rng, p.len(), count.min(p.len())).into_vec();
                local.sort_unstable();
                picked.extend(local.into_iter().map(|i| start + i));
                start += p.len();
            }
            picked
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    for idx in flat {
        let (pi, ei) = locate(params, idx);
        let orig = work[pi].data()[ei];
        // the representable step, not the requested one
        let (hi, lo) = (orig + opts.eps, orig - opts.eps);
        work[pi].data_mut()[ei] = hi;
        let plus = eval(&work)?;
        work[pi].data_mut()[ei] = lo;
        let minus = eval(&work)?;
        work[pi].data_mut()[ei] = orig;

        let numeric = (plus - minus) / (hi - lo);
        let a = analytic[pi].data()[ei];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some((pi, ei));
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

fn locate(params: &[Tensor<f64>], mut idx: usize) -> (usize, usize) {
    for (i, p) in params.iter().enumerate() {
        if idx < p.len() {
            return (i, idx);
        }
        idx -= p.len();
    }
    unreachable!("coordinate beyond parameter count")
}
