//! Two-headed encoder–decoder puck detector.
//!
//! ```text
//! image ─► down0 ─► down1 ─► down2 ─┬─► up0 ─(+)─► up1 ─(+)─► up2 ─┬─► GAP ─► linear ─► logit
//!            │        │             │          │          │        └─► 1×1 conv ─► soft-argmax ─► (x, y)
//!            │        └─────────────┼──────────┘          │
//!            └──────────────────────┼─────────────────────┘
//! ```
//!
//! Each down block is `convs_per_block` × (3×3 conv, batch norm, ReLU) with a
//! 2×2 average pool after the first conv. Each up block is a stride-2
//! transposed conv, batch norm and ReLU; its input is the previous up output
//! plus the same-resolution down output.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_checkpoint, write_checkpoint, BatchNormMode, BatchStats, Checkpoint, Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PuckNetConfig {
    pub input_channels: usize,
    pub down_channels: Vec<usize>,
    pub up_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub kernel: usize,
    pub up_kernel: usize,
    pub out_width: f64,
    pub out_height: f64,
    pub input_width: usize,
    pub input_height: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for PuckNetConfig {
    fn default() -> Self {
        Self {
            input_channels: 3,
            down_channels: vec![8, 16, 32],
            up_channels: vec![32, 16, 8],
            convs_per_block: 3,
            kernel: 3,
            up_kernel: 2,
            out_width: 400.0,
            out_height: 300.0,
            input_width: 128,
            input_height: 96,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl PuckNetConfig {
    pub fn validate(&self) -> Result<()> {
        let reversed: Vec<usize> = self.down_channels.iter().rev().copied().collect();
        if self.down_channels.is_empty() || reversed != self.up_channels {
            return Err(Error::Config(format!(
                "up_channels {:?} must be down_channels {:?} reversed",
                self.up_channels, self.down_channels
            )));
        }
        if self.convs_per_block == 0 {
            return Err(Error::Config("convs_per_block must be at least 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        if self.up_kernel < 2 || self.up_kernel % 2 != 0 {
            return Err(Error::Config(format!("up_kernel {} must be even and ≥ 2", self.up_kernel)));
        }
        if self.input_channels == 0 || self.down_channels.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(self.out_width > 0.0 && self.out_height > 0.0) {
            return Err(Error::Config("output extents must be positive".into()));
        }
        let m = 1usize << self.down_channels.len();
        if self.input_width % m != 0 || self.input_height % m != 0 {
            return Err(Error::Config(format!(
                "input {}×{} must be divisible by {m}",
                self.input_width, self.input_height
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.down_channels.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Graph handles of one forward pass.
pub struct Forward {
    /// `N×1` raw classification logits.
    pub logits: Var,
    /// `N×2` screen coordinates in `[0,out_width]×[0,out_height]`.
    pub coords: Var,
    /// Parameter leaves, in [`PuckNet::params`] order.
    pub params: Vec<Var>,
}

/// Plain-value predictions for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub coords: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PuckNet {
    config: PuckNetConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    stat_names: Vec<String>,
    stats: Vec<BatchStats>,
}

enum Stats<'a> {
    Train(&'a mut [BatchStats]),
    Eval(&'a [BatchStats]),
}

/// Packs interleaved 8-bit RGB frames into an `N×3×H×W` batch scaled to `[−0.5, 0.5]`.
pub fn encode_frames(frames: &[&[u8]], width: usize, height: usize) -> Result<Tensor> {
    let plane = width * height;
    let mut data = vec![0.0; frames.len() * 3 * plane];
    for (n, f) in frames.iter().enumerate() {
        if f.len() != 3 * plane {
            return Err(Error::shape("encode_frames", format!("frame {n} has {} bytes, expected {}", f.len(), 3 * plane)));
        }
        let out = &mut data[n * 3 * plane..(n + 1) * 3 * plane];
        for (i, px) in f.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c] as f64 / 255.0 - 0.5;
            }
        }
    }
    Tensor::new(vec![frames.len(), 3, height, width], data)
}

impl PuckNet {
    /// Fresh model: weights and biases uniform in `±√(1/fan_in)`, batch-norm
    /// scales 1 and shifts 0.
    pub fn build(config: PuckNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self {
            config: config.clone(),
            names: Vec::new(),
            params: Vec::new(),
            stat_names: Vec::new(),
            stats: Vec::new(),
        };
        let k = config.kernel;
        let mut cin = config.input_channels;
        for (b, &cout) in config.down_channels.iter().enumerate() {
            for j in 0..config.convs_per_block {
                let prefix = format!("down{b}.conv{j}");
                model.uniform(&mut rng, &prefix, &[cout, cin, k, k], cout, cin * k * k);
                model.norm(&format!("down{b}.bn{j}"), cout);
                cin = cout;
            }
        }
        let n = config.blocks();
        let uk = config.up_kernel;
        for i in 0..n {
            let cin = config.up_channels[i];
            let cout = *config.up_channels.get(i + 1).unwrap_or(&cin);
            model.uniform(&mut rng, &format!("up{i}.deconv"), &[cin, cout, uk, uk], cout, cin * uk * uk);
            model.norm(&format!("up{i}.bn"), cout);
        }
        let feat = *config.up_channels.last().expect("validated non-empty");
        model.uniform(&mut rng, "cls", &[feat, 1], 1, feat);
        model.uniform(&mut rng, "heat", &[1, feat, 1, 1], 1, feat);
        Ok(model)
    }

    fn uniform(&mut self, rng: &mut ChaCha8Rng, prefix: &str, shape: &[usize], bias_len: usize, fan_in: usize) {
        let bound = (1.0 / fan_in as f64).sqrt();
        let w = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound));
        let b = Tensor::from_fn(&[bias_len], |_| rng.gen_range(-bound..bound));
        self.push(format!("{prefix}.weight"), w);
        self.push(format!("{prefix}.bias"), b);
    }

    fn norm(&mut self, prefix: &str, channels: usize) {
        self.push(format!("{prefix}.gamma"), Tensor::full(&[channels], 1.0));
        self.push(format!("{prefix}.beta"), Tensor::zeros(&[channels]));
        self.stat_names.push(prefix.to_string());
        self.stats.push(BatchStats::new(channels));
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.names.push(name);
        self.params.push(t);
    }

    pub fn config(&self) -> &PuckNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn batch_stats(&self) -> &[BatchStats] {
        &self.stats
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn parameter_norm(&self) -> f64 {
        self.params.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    /// Forward pass; train mode folds batch statistics into the running stats.
    pub fn forward(&mut self, g: &mut Graph, images: Var, mode: Mode) -> Result<Forward> {
        match mode {
            Mode::Train => {
                let mut stats = std::mem::take(&mut self.stats);
                let out = self.run(g, images, Stats::Train(&mut stats), true);
                self.stats = stats;
                out
            }
            Mode::Eval => self.forward_eval(g, images, false),
        }
    }

    /// Eval-mode forward that leaves the model untouched. With
    /// `track_param_grads` the parameter leaves accumulate gradients.
    pub fn forward_eval(&self, g: &mut Graph, images: Var, track_param_grads: bool) -> Result<Forward> {
        self.run(g, images, Stats::Eval(&self.stats), track_param_grads)
    }

    fn run(&self, g: &mut Graph, images: Var, mut stats: Stats<'_>, track: bool) -> Result<Forward> {
        let cfg = &self.config;
        let [_, c, h, w] = g.value(images).dims4("pucknet")?;
        if c != cfg.input_channels {
            return Err(Error::shape(
                "pucknet",
                format!("expected {} input channels, got {c}", cfg.input_channels),
            ));
        }
        let m = 1usize << cfg.blocks();
        if h % m != 0 || w % m != 0 {
            return Err(Error::shape(
                "pucknet",
                format!(
                    "spatial dims {h}×{w} must be divisible by {m}; pad to {}×{}",
                    h.div_ceil(m) * m,
                    w.div_ceil(m) * m
                ),
            ));
        }
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| if track { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect();
        let mut next_param = params.iter().copied();
        let mut take = || next_param.next().expect("layout matches build order");
        let mut stat_index = 0;
        let mut norm = |g: &mut Graph, x: Var, gamma: Var, beta: Var| -> Result<Var> {
            let mode = match &mut stats {
                Stats::Train(s) => BatchNormMode::Train {
                    running: &mut s[stat_index],
                    momentum: cfg.bn_momentum,
                },
                Stats::Eval(s) => BatchNormMode::Eval {
                    running: &s[stat_index],
                },
            };
            stat_index += 1;
            let y = g.batch_norm2d(x, gamma, beta, cfg.bn_eps, mode)?;
            Ok(g.relu(y))
        };

        let pad = cfg.kernel / 2;
        let mut x = images;
        let mut skips = Vec::with_capacity(cfg.blocks());
        for _ in 0..cfg.blocks() {
            for j in 0..cfg.convs_per_block {
                let (wt, b) = (take(), take());
                x = g.conv2d(x, wt, b, 1, pad)?;
                let (gamma, beta) = (take(), take());
                x = norm(g, x, gamma, beta)?;
                if j == 0 {
                    x = g.avg_pool2(x)?;
                }
            }
            skips.push(x);
        }
        let mut u = *skips.last().expect("at least one block");
        for i in 0..cfg.blocks() {
            if i > 0 {
                u = g.add(u, skips[cfg.blocks() - 1 - i])?;
            }
            let (wt, b) = (take(), take());
            u = g.conv_transpose2d(u, wt, b, 2, (cfg.up_kernel - 2) / 2)?;
            let (gamma, beta) = (take(), take());
            u = norm(g, u, gamma, beta)?;
        }
        let pooled = g.global_avg_pool(u)?;
        let (cw, cb) = (take(), take());
        let logits = g.linear(pooled, cw, cb)?;
        let (hw, hb) = (take(), take());
        let heat = g.conv2d(u, hw, hb, 1, 0)?;
        let coords = g.spatial_soft_argmax(heat, cfg.out_width, cfg.out_height)?;
        Ok(Forward { logits, coords, params })
    }

    /// Eval-mode predictions for interleaved 8-bit RGB frames.
    pub fn predict_frames(&self, frames: &[&[u8]], width: usize, height: usize) -> Result<Prediction> {
        self.predict(&encode_frames(frames, width, height)?)
    }

    /// Eval-mode predictions for an `N×C×H×W` batch.
    pub fn predict(&self, images: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let out = self.forward_eval(&mut g, x, false)?;
        let logits = g.value(out.logits).data().to_vec();
        let coords = g.value(out.coords).data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(Prediction { logits, coords })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors: Vec<(String, Tensor)> = self.names.iter().cloned().zip(self.params.iter().cloned()).collect();
        for (name, s) in self.stat_names.iter().zip(&self.stats) {
            let c = s.mean.len();
            tensors.push((format!("{name}.running_mean"), Tensor::new(vec![c], s.mean.clone())?));
            tensors.push((format!("{name}.running_var"), Tensor::new(vec![c], s.var.clone())?));
        }
        Ok(Checkpoint {
            meta: serde_json::to_string(&self.config)?,
            tensors,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: PuckNetConfig = serde_json::from_str(&ckpt.meta)?;
        let mut model = Self::build(config, 0)?;
        for (name, p) in model.names.iter().zip(model.params.iter_mut()) {
            let t = ckpt
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != p.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    p.shape(),
                    t.shape()
                )));
            }
            *p = t.clone();
        }
        for (name, s) in model.stat_names.iter().zip(model.stats.iter_mut()) {
            for (suffix, dst) in [("running_mean", &mut s.mean), ("running_var", &mut s.var)] {
                let t = ckpt
                    .get(&format!("{name}.{suffix}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}.{suffix}")))?;
                if t.len() != dst.len() {
                    return Err(Error::Checkpoint(format!("{name}.{suffix}: wrong length")));
                }
                dst.copy_from_slice(t.data());
            }
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        write_checkpoint(out, &self.to_checkpoint()?).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(input)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_parameters() {
        let a = PuckNet::build(PuckNetConfig::default(), 9).unwrap();
        let b = PuckNet::build(PuckNetConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = PuckNet::build(PuckNetConfig::default(), 10).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn channel_mismatch_is_a_config_error() {
        let cfg = PuckNetConfig {
            up_channels: vec![32, 8, 16],
            ..PuckNetConfig::default()
        };
        assert!(matches!(PuckNet::build(cfg, 0), Err(Error::Config(_))));
        let cfg = PuckNetConfig {
            convs_per_block: 0,
            ..PuckNetConfig::default()
        };
        assert!(PuckNet::build(cfg, 0).is_err());
    }

    #[test]
    fn indivisible_input_reports_padding() {
        let model = PuckNet::build(PuckNetConfig::default(), 0).unwrap();
        let err = model.predict(&Tensor::zeros(&[1, 3, 20, 16])).unwrap_err();
        assert!(err.to_string().contains("pad to 24×16"), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut model = PuckNet::build(PuckNetConfig::default(), 4).unwrap();
        model.stats[0].mean[0] = 0.125;
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let back = PuckNet::read(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }
}
