//! Full-reference quality metrics and an EPI-based disparity check.
//!
//! Inputs are normalized to `[0, 1]`. Every metric is evaluated per
//! sub-aperture image (SAI) and then averaged with equal weight.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lf::{normalize, Dims, LightField, RangeTag};

/// Reported by [`psnr`] when the images are identical.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const EPI_SIGMA: f64 = 1.0;
/// Estimates are clamped here; near-vertical orientations otherwise blow
/// up through the tangent.
pub const MAX_DISPARITY_ESTIMATE: f64 = 4.0;

fn unit_pair(op: &'static str, a: &LightField, b: &LightField) -> Result<(LightField, LightField)> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, format!("{} vs {}", a.dims(), b.dims())));
    }
    let to_unit = |lf: &LightField| match lf.range() {
        RangeTag::Unbounded => Err(Error::config(format!("{op}: inputs must be in a bounded range"))),
        _ => normalize(lf, RangeTag::Unit),
    };
    Ok((to_unit(a)?, to_unit(b)?))
}

fn sai_indices(d: Dims) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..d.b).flat_map(move |b| (0..d.u).flat_map(move |u| (0..d.v).map(move |v| (b, u, v))))
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    xs.sum::<f64>() / n as f64
}

/// PSNR of one image pair with peak 1.
pub fn psnr_image(a: &[f32], b: &[f32]) -> f64 {
    let mse = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        PSNR_IDENTICAL
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean per-SAI PSNR in dB; [`PSNR_IDENTICAL`] if any SAI pair is identical.
pub fn psnr(a: &LightField, b: &LightField) -> Result<f64> {
    let (a, b) = unit_pair("psnr", a, b)?;
    let d = a.dims();
    Ok(mean(sai_indices(d).map(|(i, u, v)| psnr_image(a.view(i, u, v), b.view(i, u, v))).collect::<Vec<_>>().into_iter()))
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|x| x / s).collect()
}

/// Separable "valid" filtering of an `h×w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// SSIM of one interleaved `h×w×c` image pair, averaged over channels.
///
/// Images smaller than the window use the largest odd window that fits.
pub fn ssim_image(a: &[f32], b: &[f32], h: usize, w: usize, c: usize) -> f64 {
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let k = gaussian_kernel(size, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for ch in 0..c {
        let plane = |src: &[f32]| -> Vec<f64> { (0..h * w).map(|i| src[i * c + ch] as f64).collect() };
        let (x, y) = (plane(a), plane(b));
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(s, t)| s * t).collect() };
        let (mx, _, _) = filter_valid(&x, h, w, &k);
        let (my, _, _) = filter_valid(&y, h, w, &k);
        let (sxx, _, _) = filter_valid(&prod(&x, &x), h, w, &k);
        let (syy, _, _) = filter_valid(&prod(&y, &y), h, w, &k);
        let (sxy, _, _) = filter_valid(&prod(&x, &y), h, w, &k);
        let n = mx.len();
        let mut acc = 0.0;
        for i in 0..n {
            // identical inputs take identical arithmetic paths, so the
            // ratio is exactly one
            let (vx, vy, cxy) = (sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i]);
            let num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
            let den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            acc += num / den;
        }
        total += acc / n as f64;
    }
    total / c as f64
}

/// Mean per-SAI SSIM.
pub fn ssim(a: &LightField, b: &LightField) -> Result<f64> {
    let (a, b) = unit_pair("ssim", a, b)?;
    let d = a.dims();
    Ok(mean(
        sai_indices(d)
            .map(|(i, u, v)| ssim_image(a.view(i, u, v), b.view(i, u, v), d.h, d.w, d.c))
            .collect::<Vec<_>>()
            .into_iter(),
    ))
}

/// sRGB in `[0, 1]` to CIE L*a*b* under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) });
    const M: [[f64; 3]; 3] = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
    let xyz: [f64; 3] = [0, 1, 2].map(|r| (0..3).map(|k| M[r][k] * lin[k]).sum::<f64>() / WHITE[r]);
    let (eps, kappa) = (216.0 / 24389.0, 24389.0 / 27.0);
    let f = xyz.map(|t| if t > eps { t.cbrt() } else { (kappa * t + 16.0) / 116.0 });
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// CIEDE2000 colour difference with unit weighting factors.
pub fn ciede2000(lab1: [f64; 3], lab2: [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    let [l1, a1, b1] = lab1;
    let [l2, a2, b2] = lab2;
    let c_bar = 0.5 * ((a1 * a1 + b1 * b1).sqrt() + (a2 * a2 + b2 * b2).sqrt());
    let c7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c7 / (c7 + 25f64.powi(7))).sqrt());
    let (a1p, a2p) = ((1.0 + g) * a1, (1.0 + g) * a2);
    let (c1p, c2p) = ((a1p * a1p + b1 * b1).sqrt(), (a2p * a2p + b2 * b2).sqrt());
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            let h = b.atan2(a);
            if h < 0.0 {
                h + 2.0 * PI
            } else {
                h
            }
        }
    };
    let (h1p, h2p) = (hue(b1, a1p), hue(b2, a2p));

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let dh = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > PI {
            d - 2.0 * PI
        } else if d < -PI {
            d + 2.0 * PI
        } else {
            d
        }
    };
    let dh_big = 2.0 * (c1p * c2p).sqrt() * (dh / 2.0).sin();

    let l_bar = 0.5 * (l1 + l2);
    let c_bar_p = 0.5 * (c1p + c2p);
    let h_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= PI {
        0.5 * (h1p + h2p)
    } else if h1p + h2p < 2.0 * PI {
        0.5 * (h1p + h2p + 2.0 * PI)
    } else {
        0.5 * (h1p + h2p - 2.0 * PI)
    };
    let t = 1.0 - 0.17 * (h_bar - PI / 6.0).cos() + 0.24 * (2.0 * h_bar).cos() + 0.32 * (3.0 * h_bar + PI / 30.0).cos()
        - 0.20 * (4.0 * h_bar - 63f64.to_radians()).cos();
    let d_theta = 30f64.to_radians() * (-((h_bar.to_degrees() - 275.0) / 25.0).powi(2)).exp();
    let cb7 = c_bar_p.powi(7);
    let r_c = 2.0 * (cb7 / (cb7 + 25f64.powi(7))).sqrt();
    let s_l = 1.0 + 0.015 * (l_bar - 50.0).powi(2) / (20.0 + (l_bar - 50.0).powi(2)).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta).sin() * r_c;
    let (tl, tc, th) = (dl / s_l, dc / s_c, dh_big / s_h);
    (tl * tl + tc * tc + th * th + r_t * tc * th).sqrt()
}

const REFERENCE_PAIRS: &str = include_str!("../data/ciede2000_pairs.txt");

/// The published CIEDE2000 test pairs `(lab1, lab2, ΔE00)` (Sharma, Wu and
/// Dalal, 2005), quoted to four decimals.
pub fn reference_pairs() -> Vec<([f64; 3], [f64; 3], f64)> {
    REFERENCE_PAIRS
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let x: Vec<f64> = l.split_whitespace().map(|t| t.parse().expect("numeric table")).collect();
            ([x[0], x[1], x[2]], [x[3], x[4], x[5]], x[6])
        })
        .collect()
}

/// Mean CIEDE2000 over the pixels of one interleaved RGB image pair.
pub fn delta_e_image(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() / 3;
    let lab = |p: &[f32]| srgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64]);
    a.chunks_exact(3).zip(b.chunks_exact(3)).map(|(p, q)| ciede2000(lab(p), lab(q))).sum::<f64>() / n as f64
}

/// Mean per-SAI CIEDE2000 of RGB light fields.
pub fn delta_e_2000(a: &LightField, b: &LightField) -> Result<f64> {
    let (a, b) = unit_pair("delta_e_2000", a, b)?;
    let d = a.dims();
    if d.c != 3 {
        return Err(Error::shape("delta_e_2000", format!("needs 3 channels, got {}", d.c)));
    }
    Ok(mean(sai_indices(d).map(|(i, u, v)| delta_e_image(a.view(i, u, v), b.view(i, u, v))).collect::<Vec<_>>().into_iter()))
}

/// Per-pixel disparity estimated from EPI structure tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    /// `c` is 1
    pub dims: Dims,
    /// px/view; NaN at views without an EPI neighbour on both sides
    pub disparity: Vec<f32>,
    /// spatial gradient magnitude of the smoothed luminance
    pub gradient: Vec<f32>,
}

/// Replicate-border Gaussian smoothing of an `h×w` image.
fn smooth(img: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k = gaussian_kernel(2 * r as usize + 1, sigma);
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r).map(|o| k[(o + r) as usize] * img[y * w + clampi(x as isize + o, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r).map(|o| k[(o + r) as usize] * tmp[clampi(y as isize + o, h) * w + x]).sum();
        }
    }
    out
}

fn central(f: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    match (i, n) {
        (_, 1) => 0.0,
        (0, _) => f(1) - f(0),
        (i, n) if i == n - 1 => f(i) - f(i - 1),
        (i, _) => 0.5 * (f(i + 1) - f(i - 1)),
    }
}

/// Disparity per pixel as the orientation of the dominant eigenvector of
/// the EPI structure tensor. Horizontal and vertical EPIs through a view
/// contribute to one tensor; angular derivatives are central, so only
/// views with neighbours on both sides along some axis are estimated.
pub fn epi_disparity(lf: &LightField) -> Result<DisparityMap> {
    let d = lf.dims();
    if d.u < 3 && d.v < 3 {
        return Err(Error::config(format!("EPI disparity needs u or v of at least 3, got {d}")));
    }
    let lf = match lf.range() {
        RangeTag::Signed => normalize(lf, RangeTag::Unit)?,
        _ => lf.clone(),
    };
    let (h, w) = (d.h, d.w);
    let luma: Vec<Vec<f64>> = sai_indices(d)
        .map(|(b, u, v)| {
            let img: Vec<f64> =
                lf.view(b, u, v).chunks_exact(d.c).map(|p| p.iter().map(|&x| x as f64).sum::<f64>() / d.c as f64).collect();
            smooth(&img, h, w, EPI_SIGMA)
        })
        .collect();
    let at = |b: usize, u: usize, v: usize| &luma[(b * d.u + u) * d.v + v];

    let pixels = h * w;
    let mut disparity = vec![f32::NAN; d.b * d.views() * pixels];
    let mut gradient = vec![0f32; d.b * d.views() * pixels];
    for (sai, (b, u, v)) in sai_indices(d).enumerate() {
        let img = at(b, u, v);
        let (horiz, vert) = (v > 0 && v + 1 < d.v, u > 0 && u + 1 < d.u);
        let mut jss = vec![0.0; pixels];
        let mut jsa = vec![0.0; pixels];
        let mut jaa = vec![0.0; pixels];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gx = central(|k| img[y * w + k], x, w);
                let gy = central(|k| img[k * w + x], y, h);
                gradient[sai * pixels + i] = (gx * gx + gy * gy).sqrt() as f32;
                if horiz {
                    let ga = 0.5 * (at(b, u, v + 1)[i] - at(b, u, v - 1)[i]);
                    jss[i] += gx * gx;
                    jsa[i] += gx * ga;
                    jaa[i] += ga * ga;
                }
                if vert {
                    let ga = 0.5 * (at(b, u + 1, v)[i] - at(b, u - 1, v)[i]);
                    jss[i] += gy * gy;
                    jsa[i] += gy * ga;
                    jaa[i] += ga * ga;
                }
            }
        }
        if !(horiz || vert) {
            continue;
        }
        let (jss, jsa, jaa) = (smooth(&jss, h, w, EPI_SIGMA), smooth(&jsa, h, w, EPI_SIGMA), smooth(&jaa, h, w, EPI_SIGMA));
        for i in 0..pixels {
            // gradient direction (cos φ, sin φ) in (spatial, angular)
            // coordinates; iso-intensity lines have slope −tan φ
            let est = if jss[i] + jaa[i] <= 1e-12 {
                0.0
            } else {
                let phi = 0.5 * (2.0 * jsa[i]).atan2(jss[i] - jaa[i]);
                (-phi.tan()).clamp(-MAX_DISPARITY_ESTIMATE, MAX_DISPARITY_ESTIMATE)
            };
            disparity[sai * pixels + i] = est as f32;
        }
    }
    Ok(DisparityMap {
        dims: Dims { c: 1, ..d },
        disparity,
        gradient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpiMae {
    /// px/view
    pub mae: f64,
    /// pixels above the gradient median of the reference
    pub pixels: usize,
    /// set when the reference has no gradient above its median
    pub textureless: bool,
}

/// Mean absolute disparity difference over textured pixels of `clean`.
///
/// Textured means spatial gradient magnitude strictly above the median
/// over all estimated pixels.
pub fn epi_disparity_mae(enh: &LightField, clean: &LightField) -> Result<EpiMae> {
    if enh.dims() != clean.dims() {
        return Err(Error::shape("epi_disparity_mae", format!("{} vs {}", enh.dims(), clean.dims())));
    }
    let (de, dc) = (epi_disparity(enh)?, epi_disparity(clean)?);
    let estimated: Vec<usize> = (0..dc.disparity.len()).filter(|&i| dc.disparity[i].is_finite()).collect();
    let mut mags: Vec<f32> = estimated.iter().map(|&i| dc.gradient[i]).collect();
    mags.sort_by(f32::total_cmp);
    let median = mags[mags.len() / 2];
    let mask: Vec<usize> = estimated.into_iter().filter(|&i| dc.gradient[i] > median).collect();
    if mask.is_empty() {
        return Ok(EpiMae {
            mae: 0.0,
            pixels: 0,
            textureless: true,
        });
    }
    let sum: f64 = mask.iter().map(|&i| (de.disparity[i] as f64 - dc.disparity[i] as f64).abs()).sum();
    Ok(EpiMae {
        mae: sum / mask.len() as f64,
        pixels: mask.len(),
        textureless: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub b: usize,
    pub u: usize,
    pub v: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub scene: String,
    pub views: Vec<ViewMetrics>,
    pub psnr: f64,
    pub ssim: f64,
    pub delta_e: f64,
    /// `None` when the grid has no EPI (u and v below 3)
    pub epi_disparity_mae: Option<f64>,
    pub textureless: bool,
}

/// All metrics of `enh` against the reference `clean`.
pub fn evaluate(scene: &str, enh: &LightField, clean: &LightField) -> Result<MetricReport> {
    let (a, b) = unit_pair("evaluate", enh, clean)?;
    let d = a.dims();
    let views: Vec<ViewMetrics> = sai_indices(d)
        .map(|(i, u, v)| {
            let (x, y) = (a.view(i, u, v), b.view(i, u, v));
            ViewMetrics {
                b: i,
                u,
                v,
                psnr: psnr_image(x, y),
                ssim: ssim_image(x, y, d.h, d.w, d.c),
                delta_e: if d.c == 3 { delta_e_image(x, y) } else { f64::NAN },
            }
        })
        .collect();
    let avg = |f: fn(&ViewMetrics) -> f64| mean(views.iter().map(f).collect::<Vec<_>>().into_iter());
    let epi = if d.u >= 3 || d.v >= 3 {
        Some(epi_disparity_mae(&a, &b)?)
    } else {
        None
    };
    Ok(MetricReport {
        scene: scene.to_string(),
        psnr: avg(|m| m.psnr),
        ssim: avg(|m| m.ssim),
        delta_e: avg(|m| m.delta_e),
        epi_disparity_mae: epi.map(|e| e.mae),
        textureless: epi.is_some_and(|e| e.textureless),
        views,
    })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scene: &'a str,
    psnr: f64,
    ssim: f64,
    delta_e: f64,
    epi_disparity_mae: Option<f64>,
    textureless: bool,
}

/// One row per report; an empty `epi_disparity_mae` cell means no EPI.
pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(SummaryRow {
            scene: &r.scene,
            psnr: r.psnr,
            ssim: r.ssim,
            delta_e: r.delta_e,
            epi_disparity_mae: r.epi_disparity_mae,
            textureless: r.textureless,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ViewRow<'a> {
    scene: &'a str,
    b: usize,
    u: usize,
    v: usize,
    psnr: f64,
    ssim: f64,
    delta_e: f64,
}

/// One row per SAI of every report.
pub fn write_views_csv(path: impl AsRef<Path>, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        for m in &r.views {
            w.serialize(ViewRow {
                scene: &r.scene,
                b: m.b,
                u: m.u,
                v: m.v,
                psnr: m.psnr,
                ssim: m.ssim,
                delta_e: m.delta_e,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
