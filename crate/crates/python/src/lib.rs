use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use pucknet::agents::compute_target as target_point;
use pucknet::cli::team_from_spec;
use pucknet::harness::{self, MatchSettings, PreparedTeam};
use pucknet::model::{PuckNet as Net, PuckNetConfig};
use pucknet::rink::{self, Action, CharacterParams, RinkConfig, View};

fn py_err(e: pucknet::Error) -> PyErr {
    match e {
        e @ pucknet::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Puck detector: per-frame logit and (x, y) screen coordinates.
#[pyclass(name = "PuckNet", module = "pucknet_py")]
struct PyPuckNet {
    inner: Net,
}

#[pymethods]
impl PyPuckNet {
    /// Fresh network for `width`×`height` inputs.
    #[new]
    #[pyo3(signature = (seed=0, width=128, height=96))]
    fn new(seed: u64, width: usize, height: usize) -> PyResult<Self> {
        let cfg = PuckNetConfig {
            input_width: width,
            input_height: height,
            ..PuckNetConfig::default()
        };
        Ok(Self {
            inner: Net::build(cfg, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Net::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        let c = self.inner.config();
        (c.input_width, c.input_height)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    fn parameter_norm(&self) -> f64 {
        self.inner.parameter_norm()
    }

    /// Runs the detector on packed RGB frames; returns `(logit, x, y)` per frame.
    fn predict(&self, frames: Vec<Vec<u8>>, width: usize, height: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let refs: Vec<&[u8]> = frames.iter().map(Vec::as_slice).collect();
        let p = self.inner.predict_frames(&refs, width, height).map_err(py_err)?;
        Ok(p.logits.iter().zip(&p.coords).map(|(&l, c)| (l, c[0], c[1])).collect())
    }

    fn __repr__(&self) -> String {
        let (w, h) = self.input_size();
        format!("PuckNet(input={w}x{h}, params={})", self.inner.parameter_count())
    }
}

/// Two-on-two rink simulation.
#[pyclass(name = "World", module = "pucknet_py")]
struct PyWorld {
    inner: rink::World,
}

#[pymethods]
impl PyWorld {
    /// Faceoff layout with the given character names; `rink_toml` overrides the default rink.
    #[new]
    #[pyo3(signature = (seed=0, red=None, blue=None, rink_toml=None))]
    fn new(seed: u64, red: Option<Vec<String>>, blue: Option<Vec<String>>, rink_toml: Option<&str>) -> PyResult<Self> {
        let cfg = match rink_toml {
            Some(t) => RinkConfig::from_toml(t).map_err(py_err)?,
            None => RinkConfig::default(),
        };
        let roster = |names: Option<Vec<String>>| -> PyResult<Vec<CharacterParams>> {
            match names {
                Some(n) => n.iter().map(|s| CharacterParams::by_name(s).map_err(py_err)).collect(),
                None => Ok(CharacterParams::roster().into_iter().take(2).collect()),
            }
        };
        let world = rink::World::faceoff(cfg, &roster(red)?, &roster(blue)?, seed).map_err(py_err)?;
        Ok(Self { inner: world })
    }

    #[getter]
    fn tick(&self) -> u64 {
        self.inner.state.tick
    }

    #[getter]
    fn score(&self) -> (u32, u32) {
        let s = self.inner.state.score;
        (s[0], s[1])
    }

    #[getter]
    fn puck(&self) -> (f64, f64) {
        let p = self.inner.state.puck.position;
        (p[0], p[1])
    }

    #[getter]
    fn karts(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .state
            .karts
            .iter()
            .map(|k| (k.position[0], k.position[1], k.heading, k.speed))
            .collect()
    }

    /// Advances one tick. `actions` holds `(throttle, steer, rescue)` per kart.
    /// Returns the scoring team ("red"/"blue") or None.
    #[pyo3(signature = (actions, dt=1.0))]
    fn step(&mut self, actions: Vec<(f64, f64, bool)>, dt: f64) -> PyResult<Option<&'static str>> {
        let acts: Vec<Action> = actions
            .into_iter()
            .map(|(throttle, steer, rescue)| Action { throttle, steer, rescue })
            .collect();
        let ev = self.inner.step(&acts, dt).map_err(py_err)?;
        Ok(ev.goal.map(|t| match t {
            rink::Team::Red => "red",
            rink::Team::Blue => "blue",
        }))
    }

    /// First-person view from `kart`: `(rgb bytes, mask bytes)`, both row-major.
    #[pyo3(signature = (kart, width=400, height=300))]
    fn render<'py>(&self, py: Python<'py>, kart: usize, width: usize, height: usize) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyBytes>)> {
        if kart >= self.inner.state.karts.len() {
            return Err(PyValueError::new_err(format!("no kart {kart}")));
        }
        let f = rink::render(&self.inner.state, &self.inner.config, kart, &View::new(width, height));
        Ok((PyBytes::new(py, &f.rgb), PyBytes::new(py, &f.mask)))
    }

    fn snapshot_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.snapshot()).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Aim point `offset` behind the puck on the goal-to-puck line.
#[pyfunction]
#[pyo3(signature = (puck, goal, offset=20.0))]
fn compute_target(puck: (f64, f64), goal: (f64, f64), offset: f64) -> PyResult<(f64, f64)> {
    let t = target_point([puck.0, puck.1], [goal.0, goal.1], offset, None).map_err(py_err)?;
    Ok((t.position[0], t.position[1]))
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    pucknet::metrics::roc_auc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn pr_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    pucknet::metrics::pr_auc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    pucknet::metrics::mae(&pred, &truth).map_err(py_err)
}

/// Plays one match and returns the report as JSON. Teams use the CLI spec syntax.
#[pyfunction]
#[pyo3(signature = (team, opponent="noop", seed=0, ticks=3000))]
fn play_match(py: Python<'_>, team: &str, opponent: &str, seed: u64, ticks: u64) -> PyResult<String> {
    let prep = |s: &str| team_from_spec(s).and_then(PreparedTeam::new).map_err(py_err);
    let (a, b) = (prep(team)?, prep(opponent)?);
    let settings = MatchSettings {
        ticks,
        ..MatchSettings::default()
    };
    let report = py
        .detach(|| harness::play_match(&a, &b, seed, &settings, None))
        .map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pucknet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPuckNet>()?;
    m.add_class::<PyWorld>()?;
    m.add_function(wrap_pyfunction!(compute_target, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(play_match, m)?)?;
    Ok(())
}
