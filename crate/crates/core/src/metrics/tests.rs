use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::watersim::{gen_scene, Layer, SceneSpec, Texture};

fn pairs() -> Vec<([f64; 3], [f64; 3], f64)> {
    reference_pairs()
}

fn random_lf(dims: Dims, seed: u64) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len()).map(|_| rng.random::<f32>()).collect();
    LightField::new(dims, data, RangeTag::Unit).unwrap()
}

#[test]
fn identical_inputs_hit_exact_sentinels() {
    let a = random_lf(Dims::new(1, 2, 2, 12, 13, 3), 1);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    assert_eq!(delta_e_2000(&a, &a).unwrap(), 0.0);
}

#[test]
fn uniform_offset_psnr() {
    let d = Dims::new(1, 2, 2, 8, 8, 3);
    let a = LightField::filled(d, 0.5, RangeTag::Unit).unwrap();
    let b = LightField::filled(d, 0.6, RangeTag::Unit).unwrap();
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
}

#[test]
fn signed_inputs_are_rescaled() {
    let d = Dims::new(1, 1, 1, 4, 4, 3);
    let a = LightField::filled(d, 0.0, RangeTag::Signed).unwrap();
    let b = LightField::filled(d, 0.2, RangeTag::Signed).unwrap();
    // 0.0 and 0.2 signed are 0.5 and 0.6 in unit range
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
}

#[test]
fn metrics_are_symmetric() {
    let d = Dims::new(1, 2, 1, 14, 12, 3);
    let (a, b) = (random_lf(d, 2), random_lf(d, 3));
    assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
}

/// Direct 2-D windowed SSIM, no separable filtering.
fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let n = 11;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (y, x) = (i as f64 - 5.0, j as f64 - 5.0);
            k[i * n + j] = (-(x * x + y * y) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - n {
        for x0 in 0..=w - n {
            let (mut ma, mut mb, mut va, mut vb, mut cab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (p, q, wt) = (a[(y0 + i) * w + x0 + j], b[(y0 + i) * w + x0 + j], k[i * n + j]);
                    ma += wt * p;
                    mb += wt * q;
                    va += wt * p * p;
                    vb += wt * q * q;
                    cab += wt * p * q;
                }
            }
            let (va, vb, cab) = (va - ma * ma, vb - mb * mb, cab - ma * mb);
            total += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_window() {
    let (h, w) = (17, 15);
    let d = Dims::new(1, 1, 1, h, w, 1);
    let a = random_lf(d, 4);
    let b = a.map(RangeTag::Unit, |x| (0.7 * x + 0.1).clamp(0.0, 1.0)).unwrap();
    let to64 = |lf: &LightField| lf.data().iter().map(|&x| x as f64).collect::<Vec<_>>();
    let want = ssim_oracle(&to64(&a), &to64(&b), h, w);
    let got = ssim(&a, &b).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn mismatched_dims_are_rejected() {
    let a = random_lf(Dims::new(1, 1, 1, 4, 4, 3), 0);
    let b = random_lf(Dims::new(1, 1, 1, 4, 5, 3), 0);
    assert!(psnr(&a, &b).is_err());
    assert!(ssim(&a, &b).is_err());
    let g = random_lf(Dims::new(1, 1, 1, 4, 4, 1), 0);
    assert!(delta_e_2000(&g, &g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_is_bounded(seed in 0u64..1000, h in 4usize..16, w in 4usize..16) {
        let d = Dims::new(1, 1, 1, h, w, 3);
        let s = ssim(&random_lf(d, seed), &random_lf(d, seed + 1)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn delta_e_is_nonnegative_and_symmetric(l1 in 0.0..100.0f64, a1 in -100.0..100.0f64, b1 in -100.0..100.0f64,
                                            l2 in 0.0..100.0f64, a2 in -100.0..100.0f64, b2 in -100.0..100.0f64) {
        let (p, q) = ([l1, a1, b1], [l2, a2, b2]);
        let e = ciede2000(p, q);
        prop_assert!(e >= 0.0);
        prop_assert!((e - ciede2000(q, p)).abs() < 1e-9);
    }
}

#[test]
fn reference_color_difference_pairs() {
    let set = pairs();
    assert_eq!(set.len(), 34);
    for (i, (p, q, want)) in set.into_iter().enumerate() {
        let got = ciede2000(p, q);
        assert!((got - want).abs() < 1e-4, "pair {}: {got} vs {want}", i + 1);
    }
    assert_eq!(ciede2000([0.0; 3], [0.0; 3]), 0.0);
    assert!((ciede2000([100.0, 0.005, -0.01], [0.0; 3]) - 100.0).abs() < 1e-4);
}

#[test]
fn primaries_in_lab() {
    // published D65 values for the sRGB primaries
    let red = srgb_to_lab([1.0, 0.0, 0.0]);
    let green = srgb_to_lab([0.0, 1.0, 0.0]);
    for (got, want) in red.iter().zip([53.2408, 80.0925, 67.2032]).chain(green.iter().zip([87.7347, -86.1827, 83.1793])) {
        assert!((got - want).abs() < 2e-3, "{got} vs {want}");
    }
    let white = srgb_to_lab([1.0; 3]);
    assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-3 && white[2].abs() < 1e-3);
    let e = ciede2000(red, green);
    assert!((e - 86.6082).abs() < 1e-3, "{e}");
}

fn plane_scene(disparity: f32) -> SceneSpec {
    SceneSpec {
        seed: 0,
        layers: vec![],
        background: Layer {
            disparity,
            texture: Texture::Noise {
                scale: 4.0,
                octaves: 3,
                seed: 7,
            },
            colors: [[0.1, 0.2, 0.3], [0.9, 0.8, 0.6]],
            extent: None,
        },
    }
}

fn masked_mean(map: &DisparityMap) -> f64 {
    let idx: Vec<usize> = (0..map.disparity.len()).filter(|&i| map.disparity[i].is_finite()).collect();
    let mut mags: Vec<f32> = idx.iter().map(|&i| map.gradient[i]).collect();
    mags.sort_by(f32::total_cmp);
    let med = mags[mags.len() / 2];
    let sel: Vec<f64> = idx.into_iter().filter(|&i| map.gradient[i] > med).map(|i| map.disparity[i] as f64).collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

#[test]
fn single_plane_disparity_is_recovered() {
    for d in [1.0f32, -0.5, 0.0] {
        let (lf, _) = gen_scene(&plane_scene(d), Dims::new(1, 3, 3, 32, 32, 3)).unwrap();
        let est = masked_mean(&epi_disparity(&lf).unwrap());
        assert!((est - d as f64).abs() <= 0.15, "disparity {d}: estimate {est}");
    }
}

#[test]
fn only_views_with_angular_neighbours_are_estimated() {
    let (lf, _) = gen_scene(&plane_scene(1.0), Dims::new(1, 3, 3, 8, 8, 3)).unwrap();
    let map = epi_disparity(&lf).unwrap();
    let estimated = |u: usize, v: usize| map.disparity[(u * 3 + v) * 64].is_finite();
    assert!(estimated(1, 1) && estimated(0, 1) && estimated(1, 0));
    assert!(!estimated(0, 0) && !estimated(2, 2));
}

#[test]
fn epi_mae_edge_cases() {
    let (lf, _) = gen_scene(&plane_scene(1.0), Dims::new(1, 3, 3, 16, 16, 3)).unwrap();
    let same = epi_disparity_mae(&lf, &lf).unwrap();
    assert_eq!(same.mae, 0.0);
    assert!(!same.textureless && same.pixels > 0);

    let flat = LightField::filled(Dims::new(1, 3, 3, 8, 8, 3), 0.4, RangeTag::Unit).unwrap();
    let r = epi_disparity_mae(&flat, &flat).unwrap();
    assert!(r.textureless);
    assert_eq!(r.mae, 0.0);

    let single = random_lf(Dims::new(1, 1, 1, 8, 8, 3), 0);
    assert!(epi_disparity(&single).is_err());
}

#[test]
fn report_averages_views_and_writes_csv() {
    let d = Dims::new(1, 3, 3, 12, 12, 3);
    let (a, b) = (random_lf(d, 5), random_lf(d, 6));
    let r = evaluate("s0", &a, &b).unwrap();
    assert_eq!(r.views.len(), 9);
    let mean_psnr = r.views.iter().map(|m| m.psnr).sum::<f64>() / 9.0;
    assert!((r.psnr - mean_psnr).abs() < 1e-12);
    assert!((r.psnr - psnr(&a, &b).unwrap()).abs() < 1e-12);
    assert!((r.ssim - ssim(&a, &b).unwrap()).abs() < 1e-12);
    assert!((r.delta_e - delta_e_2000(&a, &b).unwrap()).abs() < 1e-9);
    assert!(r.epi_disparity_mae.is_some());

    let dir = tempfile::tempdir().unwrap();
    write_reports_csv(dir.path().join("r.csv"), std::slice::from_ref(&r)).unwrap();
    write_views_csv(dir.path().join("v.csv"), &[r]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(text.starts_with("scene,psnr,ssim,delta_e,epi_disparity_mae,textureless\ns0,"));
    assert_eq!(std::fs::read_to_string(dir.path().join("v.csv")).unwrap().lines().count(), 10);
}
