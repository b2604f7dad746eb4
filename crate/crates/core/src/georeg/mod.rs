//! Geometry regularization: block matching on the clean light field, Tucker
//! cores of each cluster, and an L1 distance between the reconstruction's
//! and the reference's cores, weighted by `ᾱ_t²`.

mod blocks;
mod tucker;

use serde::{Deserialize, Serialize};

pub use blocks::{match_blocks, match_clusters, partition_blocks, partition_item, partition_raw, Block, BlockSet, Cluster, ClusterTensor};
pub use tucker::{expand, fix_signs, mode_mul, project, tucker_hosvd, unfold, TuckerFactors};

use crate::autograd::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::lf::LightField;
use crate::schedule::Schedule;

/// Block size, cluster count and cardinality, and Tucker ranks. `None`
/// selects the size-dependent default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    pub p: usize,
    /// clusters per item; default `n / m`
    pub k: Option<usize>,
    pub m: usize,
    /// default `min(u·v, 4)`
    pub r1: Option<usize>,
    /// default `min(p²·c, 8)`
    pub r2: Option<usize>,
    /// default `min(m, 4)`
    pub r3: Option<usize>,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            p: 4,
            k: None,
            m: 8,
            r1: None,
            r2: None,
            r3: None,
        }
    }
}

impl GeoConfig {
    /// Resolves `(k, ranks)` for a field with `n` blocks.
    pub fn resolve(&self, views: usize, channels: usize, n: usize) -> ([usize; 3], usize) {
        let ranks = [
            self.r1.unwrap_or(views.min(4)),
            self.r2.unwrap_or((self.p * self.p * channels).min(8)),
            self.r3.unwrap_or(self.m.min(4)),
        ];
        (ranks, self.k.unwrap_or(n / self.m.max(1)))
    }
}

/// One cluster's gather map and reference decomposition.
#[derive(Debug, Clone)]
pub struct ClusterPlan {
    pub cluster: Cluster,
    /// flat light-field offset of every element of the cluster tensor
    pub offsets: Vec<usize>,
    pub factors: TuckerFactors,
}

impl ClusterPlan {
    fn gather<T: Real>(&self, x: &[T]) -> Vec<f64> {
        self.offsets.iter().map(|&o| x[o].f64()).collect()
    }

    /// Core of the gathered `x` in the reference factors minus the
    /// reference core.
    fn core_delta<T: Real>(&self, x: &[T]) -> Vec<f64> {
        let mut g = self.factors.project(&self.gather(x));
        for (d, r) in g.iter_mut().zip(&self.factors.core) {
            *d -= r;
        }
        g
    }
}

/// Everything derived from the clean reference: the cluster assignment and
/// the shared factors, for every batch item.
#[derive(Debug, Clone)]
pub struct GeometryPlan {
    pub config: GeoConfig,
    pub ranks: [usize; 3],
    pub items: Vec<Vec<ClusterPlan>>,
    len: usize,
}

impl GeometryPlan {
    pub fn new(x_ref: &LightField, config: GeoConfig) -> Result<Self> {
        let data: Vec<f64> = x_ref.data().iter().map(|&x| x as f64).collect();
        Self::from_raw(&data, x_ref.dims().as_array(), config)
    }

    /// Plan over row-major `(b, u, v, h, w, c)` reference values.
    pub fn from_raw(x_ref: &[f64], dims: [usize; 6], config: GeoConfig) -> Result<Self> {
        let mut items = Vec::with_capacity(dims[0]);
        let mut ranks = [0; 3];
        for b in 0..dims[0] {
            let bs = partition_raw(x_ref, dims, b, config.p)?;
            let (r, k) = config.resolve(bs.views(), dims[5], bs.n());
            ranks = r;
            let clusters = match_clusters(&bs, k, config.m)?;
            let mut plans = Vec::with_capacity(clusters.len());
            for cluster in clusters {
                let tensor = ClusterTensor::gather(&bs, &cluster);
                let i3 = cluster.members.len();
                let mut offsets = vec![0; tensor.data.len()];
                for (kk, &blk) in cluster.members.iter().enumerate() {
                    for (e, o) in bs.offsets(blk, b).into_iter().enumerate() {
                        offsets[e * i3 + kk] = o;
                    }
                }
                let factors = tucker_hosvd(&tensor.data, tensor.dims, ranks)?;
                plans.push(ClusterPlan {
                    cluster,
                    offsets,
                    factors,
                });
            }
            items.push(plans);
        }
        Ok(GeometryPlan {
            config,
            ranks,
            items,
            len: x_ref.len(),
        })
    }

    pub fn assignments(&self) -> Vec<Vec<Cluster>> {
        self.items
            .iter()
            .map(|item| item.iter().map(|c| c.cluster.clone()).collect())
            .collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len {
            return Err(Error::shape("geometry_loss", format!("{n} values for a plan over {}", self.len)));
        }
        Ok(())
    }

    /// `Σ_clusters ‖G_rec − G_ref‖₁` without weighting.
    pub fn distance<T: Real>(&self, x_rec: &[T]) -> Result<f64> {
        self.check_len(x_rec.len())?;
        Ok(self
            .items
            .iter()
            .flatten()
            .map(|c| c.core_delta(x_rec).iter().map(|d| d.abs()).sum::<f64>())
            .sum())
    }

    /// Differentiable [`distance`](Self::distance) scaled by `weight`. The
    /// factors are constants of the reference.
    pub fn distance_var<T: Real>(&self, g: &mut Graph<T>, x_rec: Var, weight: f64) -> Result<Var> {
        self.check_len(g.value(x_rec).len())?;
        let x = g.value(x_rec).data();
        let mut signs = Vec::new();
        let mut total = 0.0;
        for c in self.items.iter().flatten() {
            let delta = c.core_delta(x);
            total += delta.iter().map(|d| d.abs()).sum::<f64>();
            signs.push(delta.iter().map(|&d| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 }).collect::<Vec<f64>>());
        }
        let plans: Vec<ClusterPlan> = self.items.iter().flatten().cloned().collect();
        let shape = g.shape(x_rec).to_vec();
        let out = Tensor::scalar(T::of(weight * total));
        Ok(g.record(out, &[x_rec], move |ctx| {
            let k = weight * ctx.grad.item().f64();
            let mut dx = vec![0.0f64; shape.iter().product()];
            for (c, s) in plans.iter().zip(&signs) {
                let dv = expand(s, c.factors.ranks, &c.factors.factors);
                for (&o, &v) in c.offsets.iter().zip(&dv) {
                    dx[o] += k * v;
                }
            }
            let dx = Tensor::new(&shape, dx.into_iter().map(T::of).collect()).expect("shape preserved");
            vec![Some(dx)]
        }))
    }
}

/// `Σ_j ‖G_rec^j − G_ref^j‖₁` for clusters built from `x_ref`, with the
/// reconstruction's cores taken in the reference's factors.
pub fn core_distance(factors: &TuckerFactors, v_rec: &[f64], v_ref: &[f64]) -> Result<f64> {
    let n = factors.dims.iter().product::<usize>();
    if v_rec.len() != n || v_ref.len() != n {
        return Err(Error::shape(
            "core_distance",
            format!("tensors of {} and {} values for dims {:?}", v_rec.len(), v_ref.len(), factors.dims),
        ));
    }
    let a = factors.project(v_rec);
    let b = factors.project(v_ref);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum())
}

fn check_step(sched: &Schedule, t: usize) -> Result<()> {
    sched.check_step(t)?;
    if t < 2 {
        return Err(Error::config(format!("geometry loss needs t ≥ 2, got {t}")));
    }
    Ok(())
}

fn check_pair(x_rec: &LightField, x_ref: &LightField) -> Result<()> {
    if x_rec.dims() != x_ref.dims() {
        return Err(Error::shape("geometry_loss", format!("{} vs {}", x_rec.dims(), x_ref.dims())));
    }
    Ok(())
}

/// `ᾱ_t² · Σ_j ‖G_rec^j − G_ref^j‖₁`.
pub fn geometry_loss(x_rec: &LightField, x_ref: &LightField, sched: &Schedule, t: usize, cfg: GeoConfig) -> Result<f64> {
    check_step(sched, t)?;
    check_pair(x_rec, x_ref)?;
    let plan = GeometryPlan::new(x_ref, cfg)?;
    Ok(sched.geometry_weight(t) * plan.distance(x_rec.data())?)
}

/// Graph version of [`geometry_loss`] with the reference given as a
/// tensor, so any channel count is accepted. `recorder`, if given, receives
/// the cluster assignment used to gather the reconstruction.
pub fn geometry_loss_var<T: Real>(
    g: &mut Graph<T>,
    x_rec: Var,
    x_ref: &Tensor<T>,
    sched: &Schedule,
    t: usize,
    cfg: GeoConfig,
    recorder: Option<&mut dyn FnMut(&[Vec<Cluster>])>,
) -> Result<Var> {
    check_step(sched, t)?;
    let dims: [usize; 6] = x_ref
        .shape()
        .try_into()
        .map_err(|_| Error::shape("geometry_loss", format!("expected a 6-D reference, got {:?}", x_ref.shape())))?;
    if g.shape(x_rec) != dims {
        return Err(Error::shape("geometry_loss", format!("{:?} vs {:?}", g.shape(x_rec), dims)));
    }
    let data: Vec<f64> = x_ref.data().iter().map(|x| x.f64()).collect();
    let plan = GeometryPlan::from_raw(&data, dims, cfg)?;
    if let Some(rec) = recorder {
        rec(&plan.assignments());
    }
    plan.distance_var(g, x_rec, sched.geometry_weight(t))
}

#[cfg(test)]
mod tests;
