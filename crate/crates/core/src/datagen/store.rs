use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_seed, spotter_collect_with, split, zamboni_collect_with, DatagenConfig, Example, Split, SplitIndices};
use crate::error::{Error, Result};
use crate::image_io;

const SPLIT_STREAM: u64 = 3;

/// One line of `labels.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: usize,
    pub label: u8,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub count: usize,
    pub collector: String,
    pub seed: u64,
}

impl LabelRecord {
    pub fn coords(&self) -> Option<[f64; 2]> {
        Some([self.x?, self.y?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub positives: usize,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub splits: SplitIndices,
    pub frame_width: usize,
    pub frame_height: usize,
    pub mask_width: usize,
    pub mask_height: usize,
    pub config: DatagenConfig,
}

impl DatasetManifest {
    pub fn positive_fraction(&self) -> f64 {
        self.positives as f64 / self.count.max(1) as f64
    }
}

/// Frames and labels held in memory; masks stay on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub labels: Vec<LabelRecord>,
    pub frames: Vec<Vec<u8>>,
}

impl Dataset {
    pub fn ids(&self, s: Split) -> &[usize] {
        self.manifest.splits.get(s)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Builds an in-memory dataset; ids are reassigned to `0..n`.
    pub fn from_examples(examples: Vec<Example>, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Config("cannot build a dataset from no examples".into()))?;
        let (fw, fh, mw, mh) = (first.frame_width, first.frame_height, first.mask_width, first.mask_height);
        if examples.iter().any(|e| e.frame_width != fw || e.frame_height != fh) {
            return Err(Error::Config("examples have mixed frame sizes".into()));
        }
        let count = examples.len();
        let config = DatagenConfig {
            seed,
            frame_width: fw,
            frame_height: fh,
            fractions,
            ..DatagenConfig::default()
        };
        let mut labels = Vec::with_capacity(count);
        let mut frames = Vec::with_capacity(count);
        for (id, e) in examples.into_iter().enumerate() {
            labels.push(LabelRecord {
                id,
                label: e.label,
                x: e.coords.map(|c| c[0]),
                y: e.coords.map(|c| c[1]),
                count: e.count,
                collector: e.collector,
                seed: e.seed,
            });
            frames.push(e.frame);
        }
        let manifest = DatasetManifest {
            count,
            positives: labels.iter().map(|l| l.label as usize).sum(),
            seed,
            fractions,
            splits: split(count, fractions, derive_seed(seed, SPLIT_STREAM, 0))?,
            frame_width: fw,
            frame_height: fh,
            mask_width: mw,
            mask_height: mh,
            config,
        };
        Ok(Self { manifest, labels, frames })
    }
}

fn write_example(dir: &Path, e: &Example, labels: &mut impl Write) -> Result<()> {
    let name = format!("{:06}.png", e.id);
    image_io::save_rgb(&dir.join("frames").join(&name), e.frame_width, e.frame_height, &e.frame)?;
    image_io::save_gray(&dir.join("masks").join(&name), e.mask_width, e.mask_height, &e.mask)?;
    let rec = LabelRecord {
        id: e.id,
        label: e.label,
        x: e.coords.map(|c| c[0]),
        y: e.coords.map(|c| c[1]),
        count: e.count,
        collector: e.collector.clone(),
        seed: e.seed,
    };
    serde_json::to_writer(&mut *labels, &rec)?;
    labels.write_all(b"\n").map_err(|e| Error::io(dir.join("labels.jsonl"), e))
}

/// Runs both collectors and writes the dataset layout under `dir`.
pub fn generate_dataset(dir: &Path, cfg: &DatagenConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    for sub in ["frames", "masks"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let labels_path = dir.join("labels.jsonl");
    let mut labels = BufWriter::new(File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?);
    let size = (cfg.frame_width, cfg.frame_height);
    let mut positives = 0;
    let mut sink = |e: Example| {
        positives += e.label as usize;
        write_example(dir, &e, &mut labels)
    };
    let n_z = zamboni_collect_with(&cfg.zamboni, &cfg.rink, cfg.seed, size, 0, &mut sink)?;
    let n_s = spotter_collect_with(&cfg.spotter, &cfg.rink, cfg.seed, size, n_z, &mut sink)?;
    labels.flush().map_err(|e| Error::io(&labels_path, e))?;
    let count = n_z + n_s;
    let manifest = DatasetManifest {
        count,
        positives,
        seed: cfg.seed,
        fractions: cfg.fractions,
        splits: split(count, cfg.fractions, derive_seed(cfg.seed, SPLIT_STREAM, 0))?,
        frame_width: cfg.frame_width,
        frame_height: cfg.frame_height,
        mask_width: crate::rink::SCREEN_WIDTH as usize,
        mask_height: crate::rink::SCREEN_HEIGHT as usize,
        config: cfg.clone(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let path = dir.join("labels.jsonl");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut labels = Vec::with_capacity(manifest.count);
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if !line.trim().is_empty() {
            labels.push(serde_json::from_str::<LabelRecord>(&line)?);
        }
    }
    if labels.len() != manifest.count || labels.iter().enumerate().any(|(i, l)| l.id != i) {
        return Err(Error::Config(format!("{}: labels do not match the manifest", dir.display())));
    }
    let mut frames = Vec::with_capacity(manifest.count);
    for l in &labels {
        let img = image_io::load(&dir.join("frames").join(format!("{:06}.png", l.id)))?;
        if img.channels != 3 || img.width != manifest.frame_width || img.height != manifest.frame_height {
            return Err(Error::Config(format!("frame {} has unexpected size or channels", l.id)));
        }
        frames.push(img.data);
    }
    Ok(Dataset { manifest, labels, frames })
}
