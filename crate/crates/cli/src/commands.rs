use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use lfdiff::lf::{denormalize, export_png_grid, normalize, read_lf4d, write_lf4d, RangeTag};
use lfdiff::metrics::{evaluate, write_reports_csv, write_views_csv, MetricReport};
use lfdiff::model::{ModelConfig, Network, Prediction};
use lfdiff::pipeline::{
    ddpm_sample, ddpm_train_step, infer, load_checkpoint, load_dataset, sample_batch, save_checkpoint, InferConfig, TrainConfig, TrainLog,
    Trainer,
};
use lfdiff::selftest;
use lfdiff::watersim::{generate_dataset, MANIFEST_FILE};
use lfdiff::{LightField, Schedule, ScheduleConfig};

use crate::manifest::{beside, sha256_hex, RunRecorder};
use crate::{BaselineArgs, BaselineMode, EnhanceArgs, EvalArgs, Failure, GenDataArgs, TrainArgs};

type Outcome = Result<(), Failure>;

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("plain data serializes")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Keeps the error's exit category and names the file.
fn at_path<T>(path: &Path, r: lfdiff::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
        Failure::Data(m) => Failure::Data(format!("{}: {m}", path.display())),
        Failure::Numeric(m) => Failure::Numeric(format!("{}: {m}", path.display())),
    })
}

fn read_input(path: &Path) -> Result<LightField, Failure> {
    at_path(path, read_lf4d(path))
}

/// Model inputs live in the signed range.
fn to_signed(lf: &LightField) -> Result<LightField, Failure> {
    match lf.range() {
        RangeTag::Unbounded => Err(Failure::Data("input must be unit- or signed-range".into())),
        _ => Ok(normalize(lf, RangeTag::Signed)?),
    }
}

fn parent_dir(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p),
        _ => Ok(()),
    }
}

pub fn gen_data(a: GenDataArgs) -> Outcome {
    let run = RunRecorder::start();
    let manifest = generate_dataset(&a.out, a.scenes, a.dims, a.water, a.seed)?;
    eprintln!("wrote {} scene pairs to {}", manifest.entries.len(), a.out.display());
    let config = json(&(a.scenes, a.dims, a.water.name(), a.seed));
    let mut outputs = vec![a.out.join(MANIFEST_FILE)];
    for e in &manifest.entries {
        outputs.push(a.out.join(&e.clean));
        outputs.push(a.out.join(&e.degraded));
    }
    run.finish(&a.out.join("run.json"), &config, a.seed, vec![], outputs)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Outcome {
    let run = RunRecorder::start();
    let mut cfg: TrainConfig = a.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let mut model: ModelConfig = a.model.as_deref().map(read_json).transpose()?.unwrap_or_default();
    if let Some(s) = a.seed {
        cfg.seed = s;
        model.seed = s;
    }
    if let Some(n) = a.iters {
        cfg.max_iters = n;
    }
    let pairs = at_path(&a.data, load_dataset(&a.data))?;
    let mut inputs = vec![a.data.clone()];
    let mut tr = match &a.resume {
        Some(path) => {
            inputs.push(path.clone());
            let mut tr = at_path(path, load_checkpoint(path))?.trainer;
            tr.config.max_iters = cfg.max_iters;
            tr
        }
        None => Trainer::new(Network::new(model.clone())?, Schedule::new(ScheduleConfig::default())?, cfg.clone())?,
    };
    let channels = pairs.first().map_or(tr.net.config.image_channels, |p| p.clean.dims().c);
    if channels != tr.net.config.image_channels {
        return Err(Failure::Usage(format!(
            "data has {channels} channels, model expects {}",
            tr.net.config.image_channels
        )));
    }
    let mut log = match &a.log {
        Some(p) if a.resume.is_some() && p.exists() => Some(TrainLog::append(p)?),
        Some(p) => {
            parent_dir(p)?;
            Some(TrainLog::create(p)?)
        }
        None => None,
    };
    parent_dir(&a.out)?;
    let total = tr.config.max_iters;
    let chunk = a.save_every.filter(|&n| n > 0).unwrap_or(total.max(1));
    while (tr.iter as usize) < total {
        // train to the next save point, then checkpoint with the full target
        tr.config.max_iters = ((tr.iter as usize / chunk + 1) * chunk).min(total);
        tr.train(&pairs, |s| {
            if let Some(log) = log.as_mut() {
                log.record(s)?;
            }
            if s.iter % 100 == 0 || s.iter as usize == total {
                eprintln!("iter {}/{total} tau {} pixel {:.4} geo {:.4}", s.iter, s.tau, s.loss_pixel, s.loss_geo);
            }
            Ok(())
        })?;
        tr.config.max_iters = total;
        if (tr.iter as usize) < total {
            save_checkpoint(&a.out, &tr)?;
        }
    }
    save_checkpoint(&a.out, &tr)?;
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.log.clone());
    run.finish(&beside(&a.out), &json(&(&tr.config, &tr.net.config)), tr.config.seed, inputs, outputs)?;
    Ok(())
}

pub fn enhance(a: EnhanceArgs) -> Outcome {
    let run = RunRecorder::start();
    let ckpt = at_path(&a.ckpt, load_checkpoint(&a.ckpt))?;
    let y0 = to_signed(&read_input(&a.input)?)?;
    let cfg = InferConfig {
        steps: a.steps.0.clone(),
        seed: a.seed,
        kernel: a.kernel.into(),
    };
    let out = infer(ckpt.network(), ckpt.schedule(), &y0, &cfg)?;
    let out = denormalize(&out)?;
    parent_dir(&a.out)?;
    write_lf4d(&out, &a.out)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(png) = &a.png_grid {
        parent_dir(png)?;
        export_png_grid(&out, png)?;
        outputs.push(png.clone());
    }
    let ckpt_hash = sha256_hex(&fs::read(&a.ckpt)?);
    run.finish(&beside(&a.out), &json(&(&cfg, ckpt_hash)), a.seed, vec![a.ckpt, a.input], outputs)?;
    Ok(())
}

/// `<ref>/<name>`, or `<ref>/clean/<name>` for a generated dataset.
fn reference_for(dir: &Path, name: &std::ffi::OsStr) -> Option<PathBuf> {
    [dir.join(name), dir.join("clean").join(name)].into_iter().find(|p| p.is_file())
}

pub fn eval(a: EvalArgs) -> Outcome {
    let run = RunRecorder::start();
    let mut preds: Vec<PathBuf> = fs::read_dir(&a.pred)
        .map_err(|e| Failure::Data(format!("{}: {e}", a.pred.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lf4d"))
        .collect();
    preds.sort();
    if preds.is_empty() {
        return Err(Failure::Data(format!("no .lf4d files in {}", a.pred.display())));
    }
    let mut reports: Vec<MetricReport> = Vec::with_capacity(preds.len());
    let mut inputs = Vec::new();
    for pred in &preds {
        let name = pred.file_name().expect("listed file");
        let reference = reference_for(&a.reference, name)
            .ok_or_else(|| Failure::Data(format!("no reference for {}", name.to_string_lossy())))?;
        let scene = pred.file_stem().expect("listed file").to_string_lossy().into_owned();
        reports.push(evaluate(&scene, &read_input(pred)?, &read_input(&reference)?)?);
        inputs.push(pred.clone());
        inputs.push(reference);
    }
    parent_dir(&a.out)?;
    write_reports_csv(&a.out, &reports)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(v) = &a.views {
        parent_dir(v)?;
        write_views_csv(v, &reports)?;
        outputs.push(v.clone());
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    println!(
        "{} scenes: psnr {:.3} ssim {:.4} delta_e {:.3}",
        reports.len(),
        mean(|r| r.psnr),
        mean(|r| r.ssim),
        mean(|r| r.delta_e)
    );
    run.finish(&beside(&a.out), &json(&(&a.pred, &a.reference)), 0, inputs, outputs)?;
    Ok(())
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str, mode: &str) -> Result<&'a PathBuf, Failure> {
    value.as_ref().ok_or_else(|| Failure::Usage(format!("--{flag} is required with --mode {mode}")))
}

pub fn baseline(a: BaselineArgs) -> Outcome {
    let run = RunRecorder::start();
    match a.mode {
        BaselineMode::Train => {
            let data = require(&a.data, "data", "train")?;
            let mut cfg: TrainConfig = a.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
            let mut model: ModelConfig = match a.model.as_deref() {
                Some(p) => read_json(p)?,
                None => ModelConfig {
                    prediction: Prediction::Epsilon,
                    ..ModelConfig::default()
                },
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
                model.seed = s;
            }
            cfg.max_iters = a.iters;
            cfg.pretrain_iters = 0;
            cfg.freeze_backbone = false;
            let pairs = at_path(data, load_dataset(data))?;
            let mut tr = Trainer::new(Network::new(model)?, Schedule::new(ScheduleConfig::default())?, cfg)?;
            let mut log = match &a.log {
                Some(p) => {
                    parent_dir(p)?;
                    let mut f = fs::File::create(p)?;
                    writeln!(f, "iter,loss")?;
                    Some(f)
                }
                None => None,
            };
            while (tr.iter as usize) < a.iters {
                let (x0, y0) = sample_batch(&pairs, tr.config.batch, tr.config.crop, &mut tr.rng)?;
                let loss = ddpm_train_step(&mut tr, &x0, &y0)?;
                if let Some(f) = log.as_mut() {
                    writeln!(f, "{},{loss}", tr.iter)?;
                }
                if tr.iter % 100 == 0 {
                    eprintln!("iter {}/{} loss {loss:.5}", tr.iter, a.iters);
                }
            }
            parent_dir(&a.out)?;
            save_checkpoint(&a.out, &tr)?;
            let mut outputs = vec![a.out.clone()];
            outputs.extend(a.log.clone());
            run.finish(&beside(&a.out), &json(&(&tr.config, &tr.net.config)), tr.config.seed, vec![data.clone()], outputs)?;
        }
        BaselineMode::Sample => {
            let ckpt_path = require(&a.ckpt, "ckpt", "sample")?;
            let input = require(&a.input, "in", "sample")?;
            let seed = a.seed.unwrap_or(0);
            let ckpt = at_path(ckpt_path, load_checkpoint(ckpt_path))?;
            let y0 = to_signed(&read_input(input)?)?;
            let out = denormalize(&ddpm_sample(ckpt.network(), ckpt.schedule(), &y0, seed)?)?;
            parent_dir(&a.out)?;
            write_lf4d(&out, &a.out)?;
            let ckpt_hash = sha256_hex(&fs::read(ckpt_path)?);
            run.finish(&beside(&a.out), &json(&ckpt_hash), seed, vec![ckpt_path.clone(), input.clone()], vec![a.out.clone()])?;
        }
    }
    Ok(())
}

pub fn selftest() -> Outcome {
    let reports = selftest::run_all(|r| {
        println!(
            "{} {} ({:.1}s): {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    });
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} of {} self-checks failed", reports.len())));
    }
    println!("all {} self-checks passed", reports.len());
    Ok(())
}
