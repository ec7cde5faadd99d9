use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io;
use crate::rink::{render_top_down, RinkConfig, Snapshot};

/// First line of a replay file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub seed: u64,
    pub red: String,
    pub blue: String,
    pub rink: RinkConfig,
}

/// JSON-lines writer: the header, then one snapshot per tick.
pub struct ReplayWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ReplayWriter {
    pub fn create(path: &Path, header: &ReplayHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(header)?;
        Ok(w)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn push(&mut self, snap: &Snapshot) -> Result<()> {
        self.line(snap)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_replay(path: &Path) -> Result<(ReplayHeader, Vec<Snapshot>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty replay", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: ReplayHeader = serde_json::from_str(&first)?;
    let mut snaps = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            snaps.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, snaps))
}

/// Writes every `every`-th snapshot as `NNNNNN.png` under `out_dir`; returns the frame count.
pub fn render_replay(path: &Path, out_dir: &Path, every: usize, scale: f64) -> Result<usize> {
    let (header, snaps) = read_replay(path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut n = 0;
    for snap in snaps.iter().step_by(every.max(1)) {
        let f = render_top_down(snap, &header.rink, scale);
        image_io::save_rgb(&out_dir.join(format!("{n:06}.png")), f.width, f.height, &f.rgb)?;
        n += 1;
    }
    Ok(n)
}
