use std::fs::File;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::StepLosses;
use crate::error::{Error, Result};
use crate::lf::{augment, normalize, random_ops, read_lf4d, LightField, RangeTag};
use crate::watersim::read_manifest;

/// A clean target and its degraded observation, both signed-range.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub id: String,
    pub clean: LightField,
    pub degraded: LightField,
}

impl Pair {
    pub fn new(id: impl Into<String>, clean: &LightField, degraded: &LightField) -> Result<Self> {
        if clean.dims() != degraded.dims() || clean.dims().b != 1 {
            return Err(Error::shape("pair", format!("{} vs {} (batch must be 1)", clean.dims(), degraded.dims())));
        }
        Ok(Pair {
            id: id.into(),
            clean: normalize(clean, RangeTag::Signed)?,
            degraded: normalize(degraded, RangeTag::Signed)?,
        })
    }
}

/// Every pair listed in a generated dataset's manifest.
pub fn load_dataset(dir: &Path) -> Result<Vec<Pair>> {
    let manifest = read_manifest(dir)?;
    manifest
        .entries
        .iter()
        .map(|e| Pair::new(&e.id, &read_lf4d(dir.join(&e.clean))?, &read_lf4d(dir.join(&e.degraded))?))
        .collect()
}

/// Draws `batch` pairs with replacement and applies one shared random
/// augmentation per pair to both members. Crops larger than the views are
/// skipped.
pub fn sample_batch(pairs: &[Pair], batch: usize, crop: Option<usize>, rng: &mut ChaCha8Rng) -> Result<(LightField, LightField)> {
    if pairs.is_empty() {
        return Err(Error::config("no training pairs"));
    }
    let mut clean = Vec::with_capacity(batch);
    let mut degraded = Vec::with_capacity(batch);
    for _ in 0..batch {
        let pair = &pairs[rng.random_range(0..pairs.len())];
        let d = pair.clean.dims();
        let crop = crop.filter(|&c| c < d.h.min(d.w));
        let ops = random_ops(rng, crop);
        let seed = rng.random();
        clean.push(augment(&pair.clean, seed, &ops)?);
        degraded.push(augment(&pair.degraded, seed, &ops)?);
    }
    Ok((LightField::stack(&clean)?, LightField::stack(&degraded)?))
}

/// Per-iteration CSV log: `iter, loss_pixel, loss_geo, tau`.
pub struct TrainLog {
    writer: csv::Writer<File>,
}

impl TrainLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["iter", "loss_pixel", "loss_geo", "tau"])?;
        Ok(TrainLog { writer })
    }

    /// Appends to an existing log, e.g. when resuming.
    pub fn append(path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(TrainLog {
            writer: csv::WriterBuilder::new().has_headers(false).from_writer(file),
        })
    }

    pub fn record(&mut self, s: &StepLosses) -> Result<()> {
        self.writer
            .write_record([s.iter.to_string(), s.loss_pixel.to_string(), s.loss_geo.to_string(), s.tau.to_string()])?;
        self.writer.flush()?;
        Ok(())
    }
}
