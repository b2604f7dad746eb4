//! Degradation must not disturb the epipolar structure of rendered scenes.

use lfdiff::lf::Dims;
use lfdiff::metrics::epi_disparity;
use lfdiff::watersim::{degrade, gen_scene, SceneSpec, WaterParams, WaterPreset};

#[test]
fn noise_free_degradation_keeps_epi_slopes() {
    let dims = Dims::new(1, 3, 3, 48, 48, 3);
    for seed in 0..3 {
        let spec = SceneSpec::random(seed, 48, 48);
        let (clean, depth) = gen_scene(&spec, dims).unwrap();
        let wp = WaterParams {
            noise_sigma: 0.0,
            ..WaterPreset::Greenish.params()
        };
        let degraded = degrade(&clean, &depth, &wp, 0).unwrap();
        let est = epi_disparity(&degraded).unwrap();
        // centre view, textured pixels away from occlusion boundaries
        let (h, w) = (48, 48);
        let centre = 4 * h * w;
        let mut mags: Vec<f32> = est.gradient[centre..centre + h * w].to_vec();
        mags.sort_by(f32::total_cmp);
        let median = mags[mags.len() / 2];
        let mut errs = Vec::new();
        for y in 3..h - 3 {
            for x in 3..w - 3 {
                let i = y * w + x;
                let truth = depth.disparity[centre + i];
                let uniform = (-3i32..=3).all(|dy| {
                    (-3i32..=3).all(|dx| depth.disparity[centre + ((y as i32 + dy) as usize) * w + (x as i32 + dx) as usize] == truth)
                });
                if uniform && est.gradient[centre + i] > median {
                    errs.push((est.disparity[centre + i] - truth).abs());
                }
            }
        }
        let mean = errs.iter().sum::<f32>() / errs.len() as f32;
        assert!(errs.len() > 100 && mean < 0.2, "seed {seed}: {} px, mean error {mean}", errs.len());
    }
}
