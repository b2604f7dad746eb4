use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autograd::{grad_check, GradCheckOptions, Tensor};
use crate::selftest::oracle::{frob2, oracle_core, oracle_mode};
use crate::lf::{Dims, RangeTag};
use crate::schedule::{Schedule, ScheduleConfig, ScheduleKind, SigmaConvention};

fn random_lf(dims: Dims, seed: u64) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    LightField::new(dims, data, RangeTag::Signed).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn toy_schedule() -> Schedule {
    Schedule::new(ScheduleConfig {
        total_steps: 10,
        beta_min: 0.05,
        beta_max: 0.3,
        kind: ScheduleKind::Linear,
        sigma: SigmaConvention::Posterior,
    })
    .unwrap()
}

// ---- partition ----

#[test]
fn single_block_is_the_matricized_field() {
    let lf = random_lf(Dims::new(1, 2, 2, 4, 4, 3), 1);
    let bs = partition_blocks(&lf, 4).unwrap();
    assert_eq!(bs.n(), 1);
    let blk = &bs.blocks[0].data;
    assert_eq!(blk.len(), 4 * 48);
    // view-major then row, column, channel: exactly the storage order
    let want: Vec<f64> = lf.data().iter().map(|&x| x as f64).collect();
    assert_eq!(blk, &want);
}

#[test]
fn partition_reassembles_exactly() {
    let lf = random_lf(Dims::new(1, 2, 3, 8, 8, 3), 2);
    let bs = partition_blocks(&lf, 4).unwrap();
    assert_eq!(bs.n(), 4);
    assert_eq!(
        bs.blocks.iter().map(|b| (b.row, b.col)).collect::<Vec<_>>(),
        vec![(0, 0), (0, 4), (4, 0), (4, 4)]
    );
    assert_eq!(bs.reassemble(RangeTag::Signed).unwrap(), lf);
}

#[test]
fn partition_rejects_indivisible_size() {
    let lf = random_lf(Dims::new(1, 2, 2, 8, 8, 1), 3);
    let err = partition_blocks(&lf, 3).unwrap_err().to_string();
    assert!(err.contains("crop"), "{err}");
}

// ---- matching ----

fn blockset_from(vals: &[f64], p: usize) -> BlockSet {
    // one view, one channel, blocks laid out along a single row
    let n = vals.len();
    let lf = LightField::from_fn(Dims::new(1, 1, 1, p, p * n, 1), RangeTag::Unbounded, |_, _, _, _, w, _| {
        vals[w / p] as f32
    })
    .unwrap();
    partition_blocks(&lf, p).unwrap()
}

#[test]
fn identical_blocks_group_by_index() {
    let bs = blockset_from(&[0.5; 6], 2);
    let c = match_clusters(&bs, 2, 3).unwrap();
    // farthest-point ties resolve to the lowest index
    assert_eq!(c[0].members, vec![0, 2, 3]);
    assert_eq!(c[1].members, vec![1, 4, 5]);
    assert_eq!(c, match_clusters(&bs, 2, 3).unwrap());
}

#[test]
fn separated_populations_split_exactly() {
    let pattern = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    let bs = blockset_from(&pattern, 2);
    let c = match_clusters(&bs, 2, 4).unwrap();
    let mut zeros = c[0].members.clone();
    zeros.sort();
    let mut ones = c[1].members.clone();
    ones.sort();
    assert_eq!(zeros, vec![0, 3, 4, 7]);
    assert_eq!(ones, vec![1, 2, 5, 6]);
    assert!(c.iter().all(|c| c.overflow.is_empty()));
}

#[test]
fn single_cluster_in_seed_then_distance_order() {
    let bs = blockset_from(&[0.0, 0.9, 0.2, 0.5], 2);
    let c = match_clusters(&bs, 1, 4).unwrap();
    assert_eq!(c[0].members, vec![0, 2, 3, 1]);
}

#[test]
fn leftovers_go_to_nearest_overflow() {
    let bs = blockset_from(&[0.0, 1.0, 0.1, 0.9, 0.45, 0.8], 2);
    let c = match_clusters(&bs, 2, 2).unwrap();
    assert_eq!(c[0].members, vec![0, 2]);
    assert_eq!(c[1].members, vec![1, 3]);
    assert_eq!(c[0].overflow, vec![4]);
    assert_eq!(c[1].overflow, vec![5]);
    let tensors = match_blocks(&bs, 2, 2).unwrap();
    assert!(tensors.iter().all(|t| t.dims == [1, 4, 2]));
}

#[test]
fn too_many_clusters_is_an_error() {
    let bs = blockset_from(&[0.0; 4], 2);
    assert!(match_clusters(&bs, 2, 3).is_err());
}

// ---- HOSVD ----

#[test]
fn rank_one_tensor_is_exact() {
    let (a, b, c) = (random_vec(4, 1), random_vec(6, 2), random_vec(5, 3));
    let d = [4, 6, 5];
    let mut x = vec![0.0; 120];
    for i in 0..4 {
        for j in 0..6 {
            for k in 0..5 {
                x[(i * 6 + j) * 5 + k] = a[i] * b[j] * c[k];
            }
        }
    }
    let t = tucker_hosvd(&x, d, [1, 1, 1]).unwrap();
    assert!(frob2(&t.reconstruct(), &x).sqrt() < 1e-10);
    let norm = |v: &[f64]| v.iter().map(|q| q * q).sum::<f64>().sqrt();
    assert!((t.core[0].abs() - norm(&a) * norm(&b) * norm(&c)).abs() < 1e-10);
}

#[test]
fn factors_are_orthonormal_and_sign_normalized() {
    let x = random_vec(4 * 6 * 5, 4);
    let t = tucker_hosvd(&x, [4, 6, 5], [3, 6, 2]).unwrap();
    for f in &t.factors {
        let gram = f.transpose() * f;
        assert!((gram - DMatrix::identity(f.ncols(), f.ncols())).abs().max() < 1e-8);
        for col in f.column_iter() {
            let big = col.iter().copied().fold(0.0f64, |m, q| if q.abs() > m.abs() { q } else { m });
            assert!(big > 0.0);
        }
    }
}

#[test]
fn rank_above_mode_size_is_an_error() {
    let x = random_vec(24, 5);
    assert!(tucker_hosvd(&x, [2, 3, 4], [3, 1, 1]).is_err());
    assert!(tucker_hosvd(&x, [2, 3, 4], [0, 1, 1]).is_err());
}

#[test]
fn singular_values_match_gram_oracle() {
    let d = [4, 6, 5];
    let x = random_vec(120, 6);
    let t = tucker_hosvd(&x, d, [2, 3, 2]).unwrap();
    for mode in 0..3 {
        let (_, sv) = oracle_mode(&x, d, mode, 1);
        for (a, b) in t.mode_singular_values[mode].iter().zip(&sv) {
            assert!((a - b).abs() < 1e-8, "mode {mode}: {a} vs {b}");
        }
    }
}

#[test]
fn truncation_error_is_bounded_by_discarded_energy() {
    let d = [4, 6, 5];
    let ranks = [2, 3, 2];
    for trial in 0..100 {
        let x = random_vec(120, 1000 + trial);
        let t = tucker_hosvd(&x, d, ranks).unwrap();
        let err = frob2(&t.reconstruct(), &x);
        let bound: f64 = (0..3)
            .map(|m| oracle_mode(&x, d, m, 1).1[ranks[m]..].iter().map(|s| s * s).sum::<f64>())
            .sum();
        assert!(err <= bound * (1.0 + 1e-9), "trial {trial}: {err} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn full_rank_reconstruction_is_exact(i1 in 1usize..=8, i2 in 1usize..=8, i3 in 1usize..=8, seed in 0u64..1000) {
        let x = random_vec(i1 * i2 * i3, seed);
        let t = tucker_hosvd(&x, [i1, i2, i3], [i1, i2, i3]).unwrap();
        prop_assert!(frob2(&t.reconstruct(), &x).sqrt() < 1e-8);
    }
}

// ---- core distance ----

#[test]
fn core_distance_zero_at_equality_and_exact_in_span() {
    let d = [4, 6, 5];
    let ranks = [2, 3, 2];
    let v_ref = random_vec(120, 7);
    let t = tucker_hosvd(&v_ref, d, ranks).unwrap();
    assert_eq!(core_distance(&t, &v_ref, &v_ref).unwrap(), 0.0);

    let delta_core = random_vec(12, 8);
    let delta = expand(&delta_core, ranks, &t.factors);
    let v_rec: Vec<f64> = v_ref.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let want: f64 = delta_core.iter().map(|q| q.abs()).sum();
    assert!((core_distance(&t, &v_rec, &v_ref).unwrap() - want).abs() < 1e-10);
    assert!(core_distance(&t, &v_rec[1..], &v_ref).is_err());
}

#[test]
fn distance_gradient_matches_finite_differences() {
    let dims = Dims::new(1, 2, 2, 8, 8, 2);
    let x_ref = random_vec(dims.len(), 9);
    let plan = GeometryPlan::from_raw(&x_ref, dims.as_array(), GeoConfig { m: 2, ..GeoConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x_rec = Tensor::from_fn(&dims.as_array(), |i| x_ref[i] + rng.random_range(-0.2..0.2));
    let r = grad_check(|g, v| plan.distance_var(g, v[0], 0.7), &[x_rec], GradCheckOptions::default()).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

// ---- geometry loss ----

#[test]
fn loss_is_zero_at_equality_and_nonnegative() {
    let sched = Schedule::new(ScheduleConfig::default()).unwrap();
    let x = random_lf(Dims::new(1, 3, 3, 8, 8, 3), 11);
    let cfg = GeoConfig { m: 2, ..GeoConfig::default() };
    for t in [2, 100, 500, 1000] {
        assert_eq!(geometry_loss(&x, &x, &sched, t, cfg).unwrap(), 0.0);
    }
    for seed in 0..10 {
        let y = random_lf(Dims::new(1, 3, 3, 8, 8, 3), 100 + seed);
        assert!(geometry_loss(&y, &x, &sched, 300, cfg).unwrap() > 0.0);
    }
}

#[test]
fn loss_weight_decreases_with_step() {
    let sched = toy_schedule();
    let x_ref = random_lf(Dims::new(1, 2, 2, 8, 8, 3), 12);
    let x_rec = random_lf(Dims::new(1, 2, 2, 8, 8, 3), 13);
    let cfg = GeoConfig { m: 2, ..GeoConfig::default() };
    let losses: Vec<f64> = (2..=10).map(|t| geometry_loss(&x_rec, &x_ref, &sched, t, cfg).unwrap()).collect();
    for w in losses.windows(2) {
        assert!(w[0] >= w[1]);
    }
    let big = Schedule::new(ScheduleConfig::default()).unwrap();
    for t in 1..1000 {
        assert!(big.geometry_weight(t) > big.geometry_weight(t + 1));
    }
    assert!(geometry_loss(&x_rec, &x_ref, &sched, 1, cfg).is_err());
}

#[test]
fn loss_matches_dense_oracle_on_fixture() {
    let sched = Schedule::new(ScheduleConfig::default()).unwrap();
    let dims = Dims::new(1, 2, 2, 8, 8, 3);
    let x_ref = random_lf(dims, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let data = x_ref.data().iter().map(|&q| q + rng.random_range(-0.3f32..0.3)).collect();
    let x_rec = LightField::new(dims, data, RangeTag::Unbounded).unwrap();
    let cfg = GeoConfig {
        p: 4,
        k: Some(1),
        m: 4,
        r1: Some(4),
        r2: Some(48),
        r3: Some(4),
    };
    let t = 250;
    let got = geometry_loss(&x_rec, &x_ref, &sched, t, cfg).unwrap();

    // oracle: raster-order stacking of the four 4×4 blocks
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
    let g_ref = oracle_core(&v_ref, d, &factors);
    let g_rec = oracle_core(&v_rec, d, &factors);
    let l1: f64 = g_ref.iter().zip(&g_rec).map(|(a, b)| (a - b).abs()).sum();
    let want = sched.alpha_bar(t).powi(2) * l1;
    assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
}

#[test]
fn assignment_comes_from_the_reference() {
    let sched = Schedule::new(ScheduleConfig::default()).unwrap();
    let dims = Dims::new(1, 2, 2, 8, 16, 1);
    let x_ref = random_lf(dims, 16);
    let x_rec = random_lf(dims, 17);
    let cfg = GeoConfig { m: 4, ..GeoConfig::default() };
    let mut seen = Vec::new();
    let mut g = crate::autograd::Graph::<f64>::new();
    let xv = g.leaf(crate::model::lf_to_tensor(&x_rec), true);
    let mut rec = |a: &[Vec<Cluster>]| seen = a.to_vec();
    geometry_loss_var(&mut g, xv, &crate::model::lf_to_tensor(&x_ref), &sched, 400, cfg, Some(&mut rec)).unwrap();
    let from_ref = match_clusters(&partition_blocks(&x_ref, 4).unwrap(), 2, 4).unwrap();
    let from_rec = match_clusters(&partition_blocks(&x_rec, 4).unwrap(), 2, 4).unwrap();
    assert_eq!(seen, vec![from_ref.clone()]);
    assert_ne!(from_ref, from_rec);
}

#[test]
fn graph_and_value_paths_agree() {
    let sched = Schedule::new(ScheduleConfig::default()).unwrap();
    let dims = Dims::new(2, 2, 2, 8, 8, 3);
    let x_ref = random_lf(dims, 18);
    let x_rec = random_lf(dims, 19).map(RangeTag::Unbounded, |q| 0.5 * q).unwrap();
    let cfg = GeoConfig { m: 2, ..GeoConfig::default() };
    let v = geometry_loss(&x_rec, &x_ref, &sched, 300, cfg).unwrap();
    let mut g = crate::autograd::Graph::<f64>::new();
    let xv = g.leaf(crate::model::lf_to_tensor(&x_rec), true);
    let l = geometry_loss_var(&mut g, xv, &crate::model::lf_to_tensor(&x_ref), &sched, 300, cfg, None).unwrap();
    assert!((g.value(l).item() - v).abs() < 1e-9 * v);
    assert_eq!(GeometryPlan::new(&x_ref, cfg).unwrap().items.len(), 2);
}
