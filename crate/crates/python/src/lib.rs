//! Python bindings: the crane environment, checkpoints, evaluation, training
//! from a run configuration and the command-line entry point.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use crane_rl::config::RunConfig;
use crane_rl::crane::CraneConfig;
use crane_rl::env::{
    scenario_by_name, CraneEnv, EnvConfig, Environment, Observation, RewardParams, Scenario,
    CANONICAL_SCENARIOS,
};
use crane_rl::eval::{self, CellReport, DEFAULT_EVAL_SEED};
use crane_rl::neural::Checkpoint;
use crane_rl::task::Task;
use crane_rl::Vec3;

fn to_py(e: crane_rl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scenario(name: &str) -> PyResult<Scenario> {
    match scenario_by_name(name) {
        Some(sc) => Ok(sc),
        None => Scenario::load(Path::new(name)).map_err(to_py),
    }
}

#[pyclass(name = "Observation", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyObservation {
    material_pos: [f64; 3],
    target_pos: [f64; 3],
    distance: f64,
    collision_warning: f64,
    rope_angle: f64,
    steps: f64,
}

impl From<Observation> for PyObservation {
    fn from(o: Observation) -> Self {
        Self {
            material_pos: o.material_pos.into(),
            target_pos: o.target_pos.into(),
            distance: o.distance,
            collision_warning: o.collision_warning,
            rope_angle: o.rope_angle,
            steps: o.steps,
        }
    }
}

impl PyObservation {
    fn inner(&self) -> Observation {
        Observation {
            material_pos: Vec3::from(self.material_pos),
            target_pos: Vec3::from(self.target_pos),
            distance: self.distance,
            collision_warning: self.collision_warning,
            rope_angle: self.rope_angle,
            steps: self.steps,
        }
    }
}

#[pymethods]
impl PyObservation {
    /// The ten raw components in network order.
    fn to_list(&self) -> Vec<f64> {
        self.inner().to_array().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Observation(distance={:.3}, warning={}, rope_angle={:.4}, steps={})",
            self.distance, self.collision_warning, self.rope_angle, self.steps
        )
    }
}

/// Crane lift environment on a canonical scenario name or a scenario file.
#[pyclass(name = "CraneEnv")]
struct PyCraneEnv {
    inner: CraneEnv,
}

#[pymethods]
impl PyCraneEnv {
    #[new]
    #[pyo3(signature = (scenario_name = "loading-free"))]
    fn new(scenario_name: &str) -> PyResult<Self> {
        let inner = CraneEnv::new(
            CraneConfig::default(),
            RewardParams::default(),
            EnvConfig::default(),
            scenario(scenario_name)?,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn reset(&mut self, seed: u64) -> PyResult<PyObservation> {
        self.inner.reset(seed).map(Into::into).map_err(to_py)
    }

    /// Returns `(observation, reward, terminated, termination_reason)`.
    fn step(&mut self, action: [f64; 3]) -> PyResult<(PyObservation, f64, bool, String)> {
        let out = self.inner.step(&Vec3::from(action)).map_err(to_py)?;
        Ok((
            out.observation.into(),
            out.reward,
            out.terminated,
            out.termination_reason.as_str().to_string(),
        ))
    }

    #[getter]
    fn action_bound(&self) -> f64 {
        self.inner.action_bound()
    }

    /// Boom tip position, `None` before the first reset.
    #[getter]
    fn tip(&self) -> Option<[f64; 3]> {
        self.inner.snapshot().map(|s| s.tip.into())
    }
}

#[pyclass(name = "Checkpoint")]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Checkpoint::load(Path::new(path))
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(to_py)
    }

    /// Deterministic (mean) world-frame tip increment for `obs`.
    fn act(&self, obs: &PyObservation) -> PyResult<[f64; 3]> {
        eval::greedy_action(&self.inner, &obs.inner())
            .map(Into::into)
            .map_err(to_py)
    }

    #[getter]
    fn env_steps(&self) -> u64 {
        self.inner.env_steps
    }

    #[getter]
    fn input_frame(&self) -> &'static str {
        self.inner.io.frame.as_str()
    }

    #[getter]
    fn log_std(&self) -> Vec<f64> {
        self.inner.policy.log_std.clone()
    }
}

#[pyclass(name = "CellReport", frozen, get_all)]
struct PyCellReport {
    scenario: String,
    n_scenarios: usize,
    n_success: usize,
    n_collisions: usize,
    n_swing_exceeded: usize,
    n_timeout: usize,
    success_rate: f64,
    mean_episode_length: f64,
    mean_peak_rope_angle: f64,
}

impl From<CellReport> for PyCellReport {
    fn from(c: CellReport) -> Self {
        Self {
            success_rate: c.success_rate(),
            scenario: c.scenario,
            n_scenarios: c.n_scenarios,
            n_success: c.n_success,
            n_collisions: c.n_collisions,
            n_swing_exceeded: c.n_swing_exceeded,
            n_timeout: c.n_timeout,
            mean_episode_length: c.mean_episode_length,
            mean_peak_rope_angle: c.mean_peak_rope_angle,
        }
    }
}

#[pymethods]
impl PyCellReport {
    fn __repr__(&self) -> String {
        format!(
            "CellReport({}: {}/{} success)",
            self.scenario, self.n_success, self.n_scenarios
        )
    }
}

#[pyfunction]
fn canonical_scenarios() -> Vec<&'static str> {
    CANONICAL_SCENARIOS.to_vec()
}

/// Deterministic evaluation of `checkpoint` on one scenario with built-in
/// crane settings and the checkpoint's reward parameters.
#[pyfunction]
#[pyo3(signature = (checkpoint, scenario_name, n = 100, seed = DEFAULT_EVAL_SEED))]
fn evaluate(checkpoint: &PyCheckpoint, scenario_name: &str, n: usize, seed: u64) -> PyResult<PyCellReport> {
    let task = Task::Crane {
        crane: CraneConfig::default(),
        reward: checkpoint.inner.reward.clone(),
        env: EnvConfig::default(),
        scenario: scenario(scenario_name)?,
    };
    eval::evaluate(&checkpoint.inner, &task, n, seed, None)
        .map(|(c, _)| c.into())
        .map_err(to_py)
}

/// Trains from a run configuration file and returns the final checkpoint.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new()))]
fn train(py: Python<'_>, config: &str, overrides: Vec<String>) -> PyResult<PyCheckpoint> {
    let cfg = RunConfig::load(Path::new(config), &overrides).map_err(to_py)?;
    let task = cfg.task().map_err(to_py)?;
    let out = cfg.output_dir.clone();
    let ppo = cfg.ppo_config();
    py.detach(|| crane_rl::ppo::train(&ppo, &task, Some(&out)))
        .map(|o| PyCheckpoint { inner: o.checkpoint })
        .map_err(to_py)
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| crane_rl::cli::run(std::iter::once("crane-rl".to_string()).chain(args)))
}

#[pymodule]
fn crane_rl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObservation>()?;
    m.add_class::<PyCraneEnv>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyCellReport>()?;
    m.add_function(wrap_pyfunction!(canonical_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
