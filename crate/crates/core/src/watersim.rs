//! Synthetic light fields of layered fronto-parallel scenes and a
//! depth-dependent underwater degradation.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lf::{write_lf4d, Dims, LightField, RangeTag};

/// Disparity magnitude bound at desk scale, px/view.
pub const MAX_DISPARITY: f32 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Checker { period: f32 },
    /// value noise summed over octaves
    Noise { scale: f32, octaves: u32, seed: u64 },
    /// linear ramp across `period` pixels along `angle` (radians)
    Gradient { angle: f32, period: f32 },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64) -> f32 {
    let h = splitmix(seed ^ splitmix((i as u64).wrapping_mul(0x1000_0000_01B3) ^ (j as u64)));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(seed: u64, y: f32, x: f32) -> f32 {
    let (fy, fx) = (y.floor(), x.floor());
    let (ty, tx) = (y - fy, x - fx);
    let (sy, sx) = (ty * ty * (3.0 - 2.0 * ty), tx * tx * (3.0 - 2.0 * tx));
    let (i, j) = (fy as i64, fx as i64);
    let a = lattice(seed, i, j) * (1.0 - sx) + lattice(seed, i, j + 1) * sx;
    let b = lattice(seed, i + 1, j) * (1.0 - sx) + lattice(seed, i + 1, j + 1) * sx;
    a * (1.0 - sy) + b * sy
}

impl Texture {
    /// Pattern value in `[0, 1]` at continuous reference coordinates.
    pub fn sample(&self, y: f32, x: f32) -> f32 {
        match *self {
            Texture::Checker { period } => {
                let p = period.max(1e-3);
                let parity = ((y / p).floor() as i64 + (x / p).floor() as i64).rem_euclid(2);
                parity as f32
            }
            Texture::Noise { scale, octaves, seed } => {
                let (mut amp, mut freq, mut sum, mut norm) = (1.0, 1.0 / scale.max(1e-3), 0.0, 0.0);
                for o in 0..octaves.max(1) {
                    sum += amp * value_noise(seed.wrapping_add(o as u64), y * freq, x * freq);
                    norm += amp;
                    amp *= 0.5;
                    freq *= 2.0;
                }
                sum / norm
            }
            Texture::Gradient { angle, period } => {
                let s = (y * angle.sin() + x * angle.cos()) / period.max(1e-3);
                // triangle wave keeps the ramp bounded and continuous
                let f = s.rem_euclid(2.0);
                if f <= 1.0 {
                    f
                } else {
                    2.0 - f
                }
            }
        }
    }
}

/// Axis-aligned rectangle in reference-view pixels, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub top: f32,
    pub left: f32,
    pub bottom: f32,
    pub right: f32,
}

impl Extent {
    fn contains(&self, y: f32, x: f32) -> bool {
        y >= self.top && y < self.bottom && x >= self.left && x < self.right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// px/view; larger is nearer
    pub disparity: f32,
    pub texture: Texture,
    /// colors at texture values 0 and 1
    pub colors: [[f32; 3]; 2],
    /// `None` covers the whole plane
    pub extent: Option<Extent>,
}

impl Layer {
    fn covers(&self, y: f32, x: f32) -> bool {
        self.extent.is_none_or(|e| e.contains(y, x))
    }

    fn color(&self, y: f32, x: f32) -> [f32; 3] {
        let t = self.texture.sample(y, x);
        let [a, b] = self.colors;
        [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// drawn in any order; occlusion follows disparity
    pub layers: Vec<Layer>,
    /// fills everything not covered by a layer
    pub background: Layer,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let mut ds: Vec<f32> = self.layers.iter().map(|l| l.disparity).collect();
        ds.push(self.background.disparity);
        if ds.iter().any(|d| !d.is_finite() || d.abs() > MAX_DISPARITY) {
            return Err(Error::config(format!("layer disparities must lie in ±{MAX_DISPARITY}")));
        }
        ds.sort_by(f32::total_cmp);
        if ds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("layer disparities must be distinct"));
        }
        if self.layers.iter().any(|l| l.disparity < self.background.disparity) {
            return Err(Error::config("background must be the farthest layer"));
        }
        Ok(())
    }

    /// A random scene sized for an `h×w` reference view: a textured
    /// background and two to four rectangular foreground layers.
    pub fn random(seed: u64, h: usize, w: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (hf, wf) = (h as f32, w as f32);
        let texture = |rng: &mut ChaCha8Rng| match rng.random_range(0..3) {
            0 => Texture::Checker {
                period: rng.random_range(3.0..8.0),
            },
            1 => Texture::Noise {
                scale: rng.random_range(3.0..9.0),
                octaves: rng.random_range(2..=4),
                seed: rng.random(),
            },
            _ => Texture::Gradient {
                angle: rng.random_range(0.0..std::f32::consts::PI),
                period: rng.random_range(4.0..12.0),
            },
        };
        let color = |rng: &mut ChaCha8Rng| [0; 3].map(|_| rng.random_range(0.05f32..0.95));
        let background = Layer {
            disparity: rng.random_range(-1.0..-0.4),
            texture: texture(&mut rng),
            colors: [color(&mut rng), color(&mut rng)],
            extent: None,
        };
        let n = rng.random_range(2..=4);
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            // evenly separated, jittered disparities from mid-range to near
            let d = -0.2 + 1.4 * (i as f32 + rng.random_range(0.1..0.9)) / n as f32;
            let (eh, ew) = (rng.random_range(0.3..0.6) * hf, rng.random_range(0.3..0.6) * wf);
            let (top, left) = (rng.random_range(-0.1 * hf..hf - 0.5 * eh), rng.random_range(-0.1 * wf..wf - 0.5 * ew));
            layers.push(Layer {
                disparity: d,
                texture: texture(&mut rng),
                colors: [color(&mut rng), color(&mut rng)],
                extent: Some(Extent {
                    top,
                    left,
                    bottom: top + eh,
                    right: left + ew,
                }),
            });
        }
        SceneSpec {
            seed,
            layers,
            background,
        }
    }
}

/// Per-view disparity of the visible surface, `(u, v, h, w)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub u: usize,
    pub v: usize,
    pub h: usize,
    pub w: usize,
    pub disparity: Vec<f32>,
}

impl DepthMap {
    /// Metric depth `z = depth_scale / (disparity + offset)`.
    pub fn depth(&self, wp: &WaterParams) -> Vec<f32> {
        self.disparity.iter().map(|&d| wp.depth_scale / (d + wp.depth_offset)).collect()
    }
}

const SUPERSAMPLE: usize = 2;

/// Renders every view by shifting each layer by `disparity·(view − centre)`.
pub fn gen_scene(spec: &SceneSpec, dims: Dims) -> Result<(LightField, DepthMap)> {
    dims.validate()?;
    spec.validate()?;
    if dims.b != 1 || dims.c != 3 {
        return Err(Error::config(format!("scenes render to batch 1 with 3 channels, got {dims}")));
    }
    let mut order: Vec<&Layer> = spec.layers.iter().collect();
    order.sort_by(|a, b| b.disparity.total_cmp(&a.disparity));
    order.push(&spec.background);

    let (uc, vc) = ((dims.u as f32 - 1.0) / 2.0, (dims.v as f32 - 1.0) / 2.0);
    let mut data = vec![0f32; dims.len()];
    let mut disp = vec![0f32; dims.u * dims.v * dims.h * dims.w];
    let step = 1.0 / SUPERSAMPLE as f32;
    for u in 0..dims.u {
        for v in 0..dims.v {
            let (du, dv) = (u as f32 - uc, v as f32 - vc);
            for y in 0..dims.h {
                for x in 0..dims.w {
                    let mut acc = [0f32; 3];
                    for sy in 0..SUPERSAMPLE {
                        for sx in 0..SUPERSAMPLE {
                            let py = y as f32 + (sy as f32 + 0.5) * step - 0.5;
                            let px = x as f32 + (sx as f32 + 0.5) * step - 0.5;
                            let layer = order
                                .iter()
                                .find(|l| l.covers(py - l.disparity * du, px - l.disparity * dv))
                                .expect("background covers everything");
                            let c = layer.color(py - layer.disparity * du, px - layer.disparity * dv);
                            for k in 0..3 {
                                acc[k] += c[k];
                            }
                        }
                    }
                    let base = dims.offset(0, u, v, y, x, 0);
                    for k in 0..3 {
                        data[base + k] = (acc[k] / (SUPERSAMPLE * SUPERSAMPLE) as f32).clamp(0.0, 1.0);
                    }
                    // the pixel centre decides the visible surface
                    let nearest = order
                        .iter()
                        .find(|l| l.covers(y as f32 - l.disparity * du, x as f32 - l.disparity * dv))
                        .expect("background covers everything");
                    disp[((u * dims.v + v) * dims.h + y) * dims.w + x] = nearest.disparity;
                }
            }
        }
    }
    let lf = LightField::new(dims, data, RangeTag::Unit)?;
    Ok((
        lf,
        DepthMap {
            u: dims.u,
            v: dims.v,
            h: dims.h,
            w: dims.w,
            disparity: disp,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterParams {
    /// per-channel attenuation, 1/unit depth
    pub beta_att: [f32; 3],
    /// per-channel backscatter color
    pub veil: [f32; 3],
    /// per-channel backscatter coefficient
    pub beta_back: [f32; 3],
    /// `z = depth_scale / (disparity + depth_offset)`
    pub depth_scale: f32,
    pub depth_offset: f32,
    pub noise_sigma: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaterPreset {
    Greenish,
    Bluish,
}

impl WaterPreset {
    pub fn name(self) -> &'static str {
        match self {
            WaterPreset::Greenish => "greenish",
            WaterPreset::Bluish => "bluish",
        }
    }

    pub fn params(self) -> WaterParams {
        let (beta_att, veil) = match self {
            WaterPreset::Greenish => ([0.6, 0.2, 0.3], [0.1, 0.5, 0.35]),
            WaterPreset::Bluish => ([0.7, 0.3, 0.15], [0.1, 0.35, 0.55]),
        };
        WaterParams {
            beta_att,
            veil,
            beta_back: beta_att,
            depth_scale: 3.0,
            depth_offset: 3.0,
            noise_sigma: 0.01,
        }
    }
}

impl std::str::FromStr for WaterPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greenish" => Ok(WaterPreset::Greenish),
            "bluish" => Ok(WaterPreset::Bluish),
            other => Err(Error::config(format!("unknown water preset `{other}` (greenish, bluish)"))),
        }
    }
}

impl WaterParams {
    pub fn validate(&self) -> Result<()> {
        let coeffs = self.beta_att.iter().chain(&self.beta_back);
        if coeffs.clone().any(|&b| !(b >= 0.0)) || !(self.noise_sigma >= 0.0) || !(self.depth_scale >= 0.0) {
            return Err(Error::config("water coefficients must be non-negative"));
        }
        if self.veil.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::config("veil color must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Zero attenuation, zero backscatter, no noise.
    pub fn clear() -> Self {
        WaterParams {
            beta_att: [0.0; 3],
            veil: [0.0; 3],
            beta_back: [0.0; 3],
            depth_scale: 3.0,
            depth_offset: 3.0,
            noise_sigma: 0.0,
        }
    }
}

/// `Y = X·e^{−β_att·z} + veil·(1 − e^{−β_back·z}) + n`, clipped to `[0, 1]`,
/// with `z` given per view pixel as `(u, v, h, w)`.
pub fn degrade_with_depth(clean: &LightField, z: &[f32], wp: &WaterParams, seed: u64) -> Result<LightField> {
    wp.validate()?;
    let d = clean.dims();
    if z.len() != d.b * d.views() * d.h * d.w && z.len() != d.views() * d.h * d.w {
        return Err(Error::shape("degrade", format!("{} depth values for {d}", z.len())));
    }
    let unit = crate::lf::normalize(clean, RangeTag::Unit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, wp.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
    let pixels = z.len();
    let mut out = Vec::with_capacity(d.len());
    for (i, px) in unit.data().chunks_exact(d.c).enumerate() {
        let zi = z[i % pixels];
        for (c, &x) in px.iter().enumerate() {
            let k = if d.c == 3 { c } else { 1 };
            let direct = x * (-wp.beta_att[k] * zi).exp();
            let back = wp.veil[k] * (1.0 - (-wp.beta_back[k] * zi).exp());
            let n = if wp.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            out.push((direct + back + n).clamp(0.0, 1.0));
        }
    }
    LightField::new(d, out, RangeTag::Unit)
}

/// [`degrade_with_depth`] with depth derived from a disparity map.
pub fn degrade(clean: &LightField, depth: &DepthMap, wp: &WaterParams, seed: u64) -> Result<LightField> {
    let d = clean.dims();
    if (depth.u, depth.v, depth.h, depth.w) != (d.u, d.v, d.h, d.w) {
        return Err(Error::shape(
            "degrade",
            format!("depth map {}x{}x{}x{} for {d}", depth.u, depth.v, depth.h, depth.w),
        ));
    }
    degrade_with_depth(clean, &depth.depth(wp), wp, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub seed: u64,
    pub water: WaterPreset,
    pub clean: PathBuf,
    pub degraded: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// `(u, v, h, w)`
    pub dims: [usize; 4],
    pub entries: Vec<DatasetEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Scene `i` uses seed `seed + i`; the degradation noise uses a derived seed.
pub fn generate_pair(seed: u64, dims: Dims, preset: WaterPreset) -> Result<(LightField, LightField)> {
    let spec = SceneSpec::random(seed, dims.h, dims.w);
    let (clean, depth) = gen_scene(&spec, dims)?;
    let degraded = degrade(&clean, &depth, &preset.params(), splitmix(seed))?;
    Ok((clean, degraded))
}

/// Writes `clean/<id>.lf4d`, `degraded/<id>.lf4d` and `manifest.json` under
/// `dir`; paths in the manifest are relative to it.
pub fn generate_dataset(dir: &Path, scenes: usize, uvhw: [usize; 4], preset: WaterPreset, seed: u64) -> Result<DatasetManifest> {
    let [u, v, h, w] = uvhw;
    let dims = Dims::new(1, u, v, h, w, 3);
    std::fs::create_dir_all(dir.join("clean"))?;
    std::fs::create_dir_all(dir.join("degraded"))?;
    let mut entries = Vec::with_capacity(scenes);
    for i in 0..scenes {
        let s = seed.wrapping_add(i as u64);
        let (clean, degraded) = generate_pair(s, dims, preset)?;
        let id = format!("scene{i:04}");
        let entry = DatasetEntry {
            id: id.clone(),
            seed: s,
            water: preset,
            clean: PathBuf::from("clean").join(format!("{id}.lf4d")),
            degraded: PathBuf::from("degraded").join(format!("{id}.lf4d")),
        };
        write_lf4d(&clean, dir.join(&entry.clean))?;
        write_lf4d(&degraded, dir.join(&entry.degraded))?;
        entries.push(entry);
    }
    let manifest = DatasetManifest { dims: uvhw, entries };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}
