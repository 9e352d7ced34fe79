//! Agent-environment interface for the crane lift task.
//!
//! An episode starts with the payload hanging at rest over its pick point and
//! a target drawn uniformly from the scenario's target rectangle. Each action
//! is a boom-tip increment; the reward is the sum of five terms (approach,
//! swing, time, collision, arrival).

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crane::{
    forward_kinematics, inverse_kinematics, step_dynamics, CraneConfig, CraneState, PayloadState,
};
use crate::world::{Aabb, World, DEFAULT_LIDAR_RANGE};
use crate::{Error, Result, Vec3};

pub const OBS_DIM: usize = 10;
pub const ACT_DIM: usize = 3;

/// Workspace radius used to normalize positions and distances for the networks.
pub const WORKSPACE_SCALE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Approach weight, paid as `p1 * 2^-L` every step.
    pub p1: f64,
    /// Swing weight, paid as `p2 * theta / theta_thr` every step.
    pub p2: f64,
    /// Per-step time cost.
    pub p3: f64,
    /// Collision penalty.
    pub p4: f64,
    /// Arrival bonus.
    pub p5: f64,
    pub theta_thr: f64,
    pub n_step_max: u32,
    pub success_tol: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            p1: 0.1,
            p2: -0.02,
            p3: -0.002,
            p4: -10.0,
            p5: 10.0,
            theta_thr: 0.35,
            n_step_max: 500,
            success_tol: 0.5,
        }
    }
}

impl RewardParams {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let signs: [(&'static str, f64, bool); 5] = [
            ("p1", self.p1, true),
            ("p2", self.p2, false),
            ("p3", self.p3, false),
            ("p4", self.p4, false),
            ("p5", self.p5, true),
        ];
        for (name, value, positive) in signs {
            if !value.is_finite() || (positive && value <= 0.0) || (!positive && value >= 0.0) {
                let want = if positive { "> 0" } else { "< 0" };
                return Err((name, format!("must be finite and {want} (got {value})")));
            }
        }
        if !(self.theta_thr > 0.0 && self.theta_thr < std::f64::consts::FRAC_PI_2) {
            return Err(("theta_thr", "must lie in (0, pi/2)".into()));
        }
        if self.n_step_max < 1 {
            return Err(("n_step_max", "must be >= 1".into()));
        }
        if !(self.success_tol > 0.0 && self.success_tol.is_finite()) {
            return Err(("success_tol", "must be > 0".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(k, m)| Error::Config(format!("reward.{k}: {m}")))
    }

    pub fn terms(&self, distance: f64, rope_angle: f64, collided: bool) -> RewardTerms {
        RewardTerms {
            approach: self.p1 * (-distance).exp2(),
            swing: self.p2 * rope_angle / self.theta_thr,
            time: self.p3,
            collision: if collided { self.p4 } else { 0.0 },
            arrival: if distance <= self.success_tol { self.p5 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTerms {
    pub approach: f64,
    pub swing: f64,
    pub time: f64,
    pub collision: f64,
    pub arrival: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.approach + self.swing + self.time + self.collision + self.arrival
    }
}

/// The raw (unnormalized) state vector seen by the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub material_pos: Vec3,
    pub target_pos: Vec3,
    pub distance: f64,
    pub collision_warning: f64,
    pub rope_angle: f64,
    pub steps: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let m = &self.material_pos;
        let t = &self.target_pos;
        [
            m.x,
            m.y,
            m.z,
            t.x,
            t.y,
            t.z,
            self.distance,
            self.collision_warning,
            self.rope_angle,
            self.steps,
        ]
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self {
            material_pos: Vec3::new(a[0], a[1], a[2]),
            target_pos: Vec3::new(a[3], a[4], a[5]),
            distance: a[6],
            collision_warning: a[7],
            rope_angle: a[8],
            steps: a[9],
        }
    }

    /// Elementwise division by `scale`.
    pub fn normalized(&self, scale: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        let mut a = self.to_array();
        a.iter_mut().zip(scale).for_each(|(v, s)| *v /= s);
        a
    }
}

/// Per-component divisors applied at the policy boundary.
pub fn observation_scale(reward: &RewardParams) -> [f64; OBS_DIM] {
    let w = WORKSPACE_SCALE;
    [
        w,
        w,
        w,
        w,
        w,
        w,
        w,
        1.0,
        reward.theta_thr,
        f64::from(reward.n_step_max),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Loading,
    Unloading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleMode {
    Absent,
    Present,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Loading => "loading",
            TaskKind::Unloading => "unloading",
        }
    }
}

impl ObstacleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObstacleMode::Absent => "free",
            ObstacleMode::Present => "obstacle",
        }
    }
}

/// Horizontal rectangle at fixed height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRegion {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub z: f64,
}

impl TargetRegion {
    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            self.z,
        )
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a[0], a[1], self.z),
            Vec3::new(b[0], a[1], self.z),
            Vec3::new(a[0], b[1], self.z),
            Vec3::new(b[0], b[1], self.z),
        ]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec3 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        Vec3::new(
            self.min[0] + u * (self.max[0] - self.min[0]),
            self.min[1] + v * (self.max[1] - self.min[1]),
            self.z,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub task_kind: TaskKind,
    pub world: World,
    pub material_start: Vec3,
    pub target_region: TargetRegion,
    pub crane_initial: CraneState,
}

// Canonical site layout. The crane stands at the origin; its carrier deck is
// behind and to the left of the boom pivot, the ground pick/drop area about
// 13 m away in front. The obstacle (sensor desk / fence) is a wall across
// every straight path, halfway between the two areas and more than the
// lidar range from the deck rectangle and the ground pick point.
const DECK_REGION: TargetRegion = TargetRegion {
    min: [-4.5, 2.0],
    max: [-2.5, 3.0],
    z: 1.45,
};
const GROUND_REGION: TargetRegion = TargetRegion {
    min: [8.5, 7.5],
    max: [10.5, 8.5],
    z: 0.25,
};
const GROUND_PICK: [f64; 3] = [9.5, 8.0, 0.25];
const DECK_PICK: [f64; 3] = [-3.5, 2.5, 1.45];
const BARRIER: ([f64; 3], [f64; 3]) = ([2.6, 3.0, 0.0], [3.4, 7.0, 3.75]);

pub const CANONICAL_SCENARIOS: [&str; 4] = [
    "loading-free",
    "loading-obstacle",
    "unloading-free",
    "unloading-obstacle",
];

pub fn canonical_name(kind: TaskKind, obstacles: ObstacleMode) -> String {
    format!("{}-{}", kind.as_str(), obstacles.as_str())
}

pub fn canonical_barrier() -> Aabb {
    let (lo, hi) = BARRIER;
    Aabb::new(Vec3::from(lo), Vec3::from(hi)).expect("barrier corners ordered")
}

/// Build one of the four canonical scenarios for the default crane geometry.
pub fn make_scenario(kind: TaskKind, obstacles: ObstacleMode) -> Scenario {
    let (start, region) = match kind {
        TaskKind::Loading => (Vec3::from(GROUND_PICK), DECK_REGION),
        TaskKind::Unloading => (Vec3::from(DECK_PICK), GROUND_REGION),
    };
    let world = match obstacles {
        ObstacleMode::Absent => World::empty(),
        ObstacleMode::Present => {
            let world = World::new(vec![canonical_barrier()], 0.0).expect("barrier above ground");
            let blocked = region
                .corners()
                .iter()
                .chain(std::iter::once(&region.center()))
                .all(|p| world.segment_blocked(&start, p));
            assert!(blocked, "barrier must block every straight path to the target region");
            world
        }
    };
    let cfg = CraneConfig::default();
    let tip = start + Vec3::new(0.0, 0.0, cfg.rope_length);
    Scenario {
        name: canonical_name(kind, obstacles),
        task_kind: kind,
        world,
        material_start: start,
        target_region: region,
        crane_initial: inverse_kinematics(&cfg, &tip, 0.0).state,
    }
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    let (kind, mode) = match name {
        "loading-free" => (TaskKind::Loading, ObstacleMode::Absent),
        "loading-obstacle" => (TaskKind::Loading, ObstacleMode::Present),
        "unloading-free" => (TaskKind::Unloading, ObstacleMode::Absent),
        "unloading-obstacle" => (TaskKind::Unloading, ObstacleMode::Present),
        _ => return None,
    };
    Some(make_scenario(kind, mode))
}

pub const SCENARIO_FILE_VERSION: u32 = 1;

/// Scenario document. `world` is a path relative to the scenario file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    name: String,
    task_kind: TaskKind,
    world: String,
    material_start: [f64; 3],
    target_region: TargetRegion,
    crane_initial: CraneState,
}

impl Scenario {
    /// Checks reachability of the pick point and the target rectangle.
    pub fn validate(&self, cfg: &CraneConfig) -> Result<()> {
        let lift = Vec3::new(0.0, 0.0, cfg.rope_length);
        let reachable = |p: &Vec3| !inverse_kinematics(cfg, &(p + lift), 0.0).clamped;
        if !reachable(&self.material_start) {
            return Err(Error::InvalidScenario(format!(
                "{}: material start {:?} cannot be lifted from directly above",
                self.name,
                self.material_start.as_slice()
            )));
        }
        let r = &self.target_region;
        if r.min[0] > r.max[0] || r.min[1] > r.max[1] {
            return Err(Error::InvalidScenario(format!("{}: target region inverted", self.name)));
        }
        if !r.corners().iter().all(reachable) {
            return Err(Error::InvalidScenario(format!(
                "{}: target region leaves the crane workspace",
                self.name
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
            .map_err(|e| match e {
                Error::Config(m) => Error::file(path, m),
                e => e,
            })
    }

    /// Parse a scenario document; its `world` path is resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.version != SCENARIO_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario version {}",
                file.version
            )));
        }
        Ok(Scenario {
            name: file.name,
            task_kind: file.task_kind,
            world: World::load(&base_dir.join(&file.world))?,
            material_start: Vec3::from(file.material_start),
            target_region: file.target_region,
            crane_initial: file.crane_initial,
        })
    }

    /// Serialize, referencing the world file at `world_ref` (relative to the scenario file).
    pub fn to_toml_string(&self, world_ref: &str) -> String {
        let file = ScenarioFile {
            version: SCENARIO_FILE_VERSION,
            name: self.name.clone(),
            task_kind: self.task_kind,
            world: world_ref.to_string(),
            material_start: self.material_start.into(),
            target_region: self.target_region,
            crane_initial: self.crane_initial,
        };
        toml::to_string(&file).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Per-component bound on the tip increment, meters per step.
    pub action_bound: f64,
    pub lidar_range: f64,
    /// End the episode when the rope angle exceeds `theta_thr` (otherwise only penalize).
    pub swing_terminates: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            action_bound: 0.5,
            lidar_range: DEFAULT_LIDAR_RANGE,
            swing_terminates: true,
        }
    }
}

impl EnvConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.action_bound > 0.0 && self.action_bound.is_finite()) {
            return Err(("action_bound", "must be > 0".into()));
        }
        if !(self.lidar_range > 0.0) {
            return Err(("lidar_range", "must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    None,
    Success,
    Collision,
    SwingExceeded,
    StepLimit,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::None => "none",
            TerminationReason::Success => "success",
            TerminationReason::Collision => "collision",
            TerminationReason::SwingExceeded => "swing_exceeded",
            TerminationReason::StepLimit => "step_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub terminated: bool,
    pub termination_reason: TerminationReason,
}

/// Picks the reason by priority: success, collision, swing, step limit.
pub fn termination_reason(
    params: &RewardParams,
    distance: f64,
    collided: bool,
    rope_angle: f64,
    swing_terminates: bool,
    steps: u32,
) -> TerminationReason {
    if distance <= params.success_tol {
        TerminationReason::Success
    } else if collided {
        TerminationReason::Collision
    } else if swing_terminates && rope_angle > params.theta_thr {
        TerminationReason::SwingExceeded
    } else if steps >= params.n_step_max {
        TerminationReason::StepLimit
    } else {
        TerminationReason::None
    }
}

/// Positions of interest for trajectory export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub tip: Vec3,
    pub payload: Vec3,
    pub rope_angle: f64,
}

/// Common interface of the crane task and the point-mass toy task.
pub trait Environment: Send {
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: &Vec3) -> Result<StepOutcome>;
    fn reward_params(&self) -> &RewardParams;
    fn action_bound(&self) -> f64;
    fn snapshot(&self) -> Option<Snapshot>;
    fn world(&self) -> &World;

    fn observation_scale(&self) -> [f64; OBS_DIM] {
        observation_scale(self.reward_params())
    }
}

#[derive(Debug, Clone)]
struct Episode {
    crane: CraneState,
    payload: PayloadState,
    target: Vec3,
    steps: u32,
    terminated: bool,
}

/// Crane lift environment. Cheap to clone; configuration and scenario are shared.
#[derive(Debug, Clone)]
pub struct CraneEnv {
    crane_cfg: Arc<CraneConfig>,
    reward: Arc<RewardParams>,
    env_cfg: Arc<EnvConfig>,
    scenario: Arc<Scenario>,
    episode: Option<Episode>,
}

impl CraneEnv {
    pub fn new(
        crane_cfg: CraneConfig,
        reward: RewardParams,
        env_cfg: EnvConfig,
        scenario: Scenario,
    ) -> Result<Self> {
        crane_cfg.validate()?;
        reward.validate()?;
        env_cfg
            .check()
            .map_err(|(k, m)| Error::Config(format!("env.{k}: {m}")))?;
        scenario.validate(&crane_cfg)?;
        Ok(Self {
            crane_cfg: Arc::new(crane_cfg),
            reward: Arc::new(reward),
            env_cfg: Arc::new(env_cfg),
            scenario: Arc::new(scenario),
            episode: None,
        })
    }

    /// Default crane, reward and env settings on a canonical scenario.
    pub fn canonical(kind: TaskKind, obstacles: ObstacleMode) -> Self {
        Self::new(
            CraneConfig::default(),
            RewardParams::default(),
            EnvConfig::default(),
            make_scenario(kind, obstacles),
        )
        .expect("canonical scenario is valid")
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn crane_config(&self) -> &CraneConfig {
        &self.crane_cfg
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_cfg
    }

    pub fn target(&self) -> Option<Vec3> {
        self.episode.as_ref().map(|e| e.target)
    }

    pub fn crane_state(&self) -> Option<CraneState> {
        self.episode.as_ref().map(|e| e.crane)
    }

    pub fn payload_state(&self) -> Option<PayloadState> {
        self.episode.as_ref().map(|e| e.payload)
    }

    pub fn steps(&self) -> u32 {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn is_terminated(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.terminated)
    }

    fn observe(&self, ep: &Episode) -> Observation {
        let p = ep.payload.pos;
        Observation {
            material_pos: p,
            target_pos: ep.target,
            distance: (p - ep.target).norm(),
            collision_warning: f64::from(
                self.scenario.world.lidar_flag(&p, self.env_cfg.lidar_range),
            ),
            rope_angle: ep.payload.rope_angle,
            steps: f64::from(ep.steps),
        }
    }
}

impl Environment for CraneEnv {
    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let cfg = &*self.crane_cfg;
        let sc = &*self.scenario;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = sc.target_region.sample(&mut rng);

        let lift = sc.material_start + Vec3::new(0.0, 0.0, cfg.rope_length);
        let ik = inverse_kinematics(cfg, &lift, sc.crane_initial.slew);
        if ik.clamped {
            return Err(Error::InvalidScenario(format!(
                "{}: material start is not reachable",
                sc.name
            )));
        }
        let tip = forward_kinematics(cfg, &ik.state);
        let episode = Episode {
            crane: ik.state,
            payload: PayloadState::hanging_below(&tip, cfg.rope_length),
            target,
            steps: 0,
            terminated: false,
        };
        let obs = self.observe(&episode);
        self.episode = Some(episode);
        Ok(obs)
    }

    fn step(&mut self, action: &Vec3) -> Result<StepOutcome> {
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let mut ep = match self.episode.take() {
            Some(ep) if !ep.terminated => ep,
            other => {
                self.episode = other;
                return Err(Error::EpisodeTerminated);
            }
        };
        let bound = self.env_cfg.action_bound;
        let delta = action.map(|v| v.clamp(-bound, bound));
        let before = ep.payload.pos;
        let (crane, payload) = step_dynamics(&self.crane_cfg, &ep.crane, &ep.payload, &delta);
        ep.crane = crane;
        ep.payload = payload;
        ep.steps += 1;

        let world = &self.scenario.world;
        let collided = world.collides(&before, &payload.pos, &self.crane_cfg.payload_half_extents);
        let distance = (payload.pos - ep.target).norm();
        let terms = self.reward.terms(distance, payload.rope_angle, collided);
        let reason = termination_reason(
            &self.reward,
            distance,
            collided,
            payload.rope_angle,
            self.env_cfg.swing_terminates,
            ep.steps,
        );
        ep.terminated = reason != TerminationReason::None;
        let observation = self.observe(&ep);
        self.episode = Some(ep);
        Ok(StepOutcome {
            observation,
            reward: terms.total(),
            terms,
            terminated: reason != TerminationReason::None,
            termination_reason: reason,
        })
    }

    fn reward_params(&self) -> &RewardParams {
        &self.reward
    }

    fn action_bound(&self) -> f64 {
        self.env_cfg.action_bound
    }

    fn snapshot(&self) -> Option<Snapshot> {
        self.episode.as_ref().map(|e| Snapshot {
            tip: forward_kinematics(&self.crane_cfg, &e.crane),
            payload: e.payload.pos,
            rope_angle: e.payload.rope_angle,
        })
    }

    fn world(&self) -> &World {
        &self.scenario.world
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loading(mode: ObstacleMode) -> CraneEnv {
        CraneEnv::canonical(TaskKind::Loading, mode)
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let mut a = loading(ObstacleMode::Present);
        let mut b = loading(ObstacleMode::Present);
        assert_eq!(a.reset(42).unwrap(), b.reset(42).unwrap());
        assert_eq!(a.target(), b.target());
        let other = a.reset(43).unwrap();
        assert_ne!(other.target_pos, b.target().unwrap());
    }

    #[test]
    fn initial_observation() {
        let mut env = loading(ObstacleMode::Absent);
        let obs = env.reset(1).unwrap();
        let start = env.scenario().material_start;
        assert_eq!(obs.rope_angle, 0.0);
        assert_eq!(obs.steps, 0.0);
        assert!((obs.material_pos - start).norm() < 1e-9);
        assert!((obs.distance - (start - obs.target_pos).norm()).abs() < 1e-9);
        assert_eq!(obs.collision_warning, 0.0);
    }

    #[test]
    fn target_distribution_is_uniform() {
        let mut env = loading(ObstacleMode::Absent);
        let region = env.scenario().target_region;
        let n = 10_000;
        let mut counts = [0usize; 16];
        for seed in 0..n {
            let t = env.reset(seed).unwrap().target_pos;
            let u = (t.x - region.min[0]) / (region.max[0] - region.min[0]);
            let v = (t.y - region.min[1]) / (region.max[1] - region.min[1]);
            assert!((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v));
            assert_eq!(t.z, region.z);
            let i = ((u * 4.0) as usize).min(3) * 4 + ((v * 4.0) as usize).min(3);
            counts[i] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99th percentile of chi-square with 15 degrees of freedom
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    #[test]
    fn reward_formula_values() {
        let p = RewardParams {
            p1: 1.0,
            p2: -0.5,
            p3: -0.01,
            ..RewardParams::default()
        };
        assert_eq!(p.terms(0.0, 0.0, false).approach, p.p1);
        assert_eq!(p.terms(3.0, p.theta_thr, false).swing, p.p2);
        let t = p.terms(1.0, p.theta_thr / 2.0, false);
        assert!((t.total() - 0.24).abs() < 1e-12);
        assert_eq!(p.terms(1.0, 0.0, true).collision, p.p4);
        assert_eq!(p.terms(0.5, 0.0, false).arrival, p.p5);
        assert_eq!(p.terms(0.51, 0.0, false).arrival, 0.0);
    }

    #[test]
    fn approach_term_decreases_with_distance() {
        let p = RewardParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let r = p.terms(i as f64 * 0.1, 0.0, false).approach;
            assert!(r > 0.0 && r <= p.p1 && r < prev);
            prev = r;
        }
    }

    #[test]
    fn termination_priority() {
        let p = RewardParams::default();
        let r = |d, c, a, s| termination_reason(&p, d, c, a, true, s);
        assert_eq!(r(0.1, true, 1.0, 500), TerminationReason::Success);
        assert_eq!(r(3.0, true, 1.0, 500), TerminationReason::Collision);
        assert_eq!(r(3.0, false, 1.0, 500), TerminationReason::SwingExceeded);
        assert_eq!(r(3.0, false, 0.1, 500), TerminationReason::StepLimit);
        assert_eq!(r(3.0, false, 0.1, 10), TerminationReason::None);
        assert_eq!(
            termination_reason(&p, 3.0, false, 1.0, false, 10),
            TerminationReason::None
        );
    }

    #[test]
    fn step_after_termination_is_an_error() {
        let mut env = loading(ObstacleMode::Absent);
        assert!(matches!(env.step(&Vec3::zeros()), Err(Error::EpisodeTerminated)));
        env.reset(0).unwrap();
        // drive the payload into the ground
        let mut last = None;
        for _ in 0..500 {
            let out = env.step(&Vec3::new(0.0, 0.0, -0.5)).unwrap();
            if out.terminated {
                last = Some(out);
                break;
            }
        }
        let out = last.expect("episode ends");
        assert_eq!(out.termination_reason, TerminationReason::Collision);
        assert_eq!(out.terms.collision, env.reward_params().p4);
        assert!(matches!(env.step(&Vec3::zeros()), Err(Error::EpisodeTerminated)));
    }

    #[test]
    fn idle_agent_times_out() {
        let mut env = loading(ObstacleMode::Absent);
        env.reset(9).unwrap();
        let n = env.reward_params().n_step_max;
        for i in 1..=n {
            let out = env.step(&Vec3::zeros()).unwrap();
            assert_eq!(out.terminated, i == n);
            if out.terminated {
                assert_eq!(out.termination_reason, TerminationReason::StepLimit);
                assert_eq!(out.observation.steps, f64::from(n));
            }
        }
    }

    #[test]
    fn canonical_scenarios_are_valid_and_blocked() {
        let cfg = CraneConfig::default();
        for name in CANONICAL_SCENARIOS {
            let sc = scenario_by_name(name).unwrap();
            sc.validate(&cfg).unwrap();
            assert_eq!(sc.name, name);
        }
        assert!(make_scenario(TaskKind::Loading, ObstacleMode::Absent)
            .world
            .obstacles()
            .is_empty());
        for kind in [TaskKind::Loading, TaskKind::Unloading] {
            let sc = make_scenario(kind, ObstacleMode::Present);
            let c = sc.target_region.center();
            let hits = sc
                .world
                .obstacles()
                .iter()
                .filter(|b| b.intersects_segment(&sc.material_start, &c))
                .count();
            assert!(hits >= 1);
        }
        assert!(scenario_by_name("nope").is_none());
    }

    #[test]
    fn obstacle_scenario_warns_near_barrier() {
        let mut env = loading(ObstacleMode::Present);
        // pick point and deck rectangle lie outside the lidar range
        assert_eq!(env.reset(0).unwrap().collision_warning, 0.0);
        let sc = env.scenario().clone();
        for p in sc.target_region.corners() {
            assert!(sc.world.min_distance(&p) > DEFAULT_LIDAR_RANGE);
        }
        let mut warned = false;
        for _ in 0..40 {
            let out = env.step(&Vec3::new(-0.15, -0.06, 0.0)).unwrap();
            warned |= out.observation.collision_warning == 1.0;
            if out.terminated {
                break;
            }
        }
        assert!(warned);
    }

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sc = make_scenario(TaskKind::Unloading, ObstacleMode::Present);
        std::fs::write(dir.path().join("w.toml"), sc.world.to_toml_string()).unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, sc.to_toml_string("w.toml")).unwrap();
        assert_eq!(Scenario::load(&path).unwrap(), sc);
    }

    #[test]
    fn unreachable_scenario_is_rejected() {
        let mut sc = make_scenario(TaskKind::Loading, ObstacleMode::Absent);
        sc.material_start = Vec3::new(40.0, 0.0, 0.25);
        let err = CraneEnv::new(
            CraneConfig::default(),
            RewardParams::default(),
            EnvConfig::default(),
            sc,
        );
        assert!(matches!(err, Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn reward_param_signs_enforced() {
        assert!(RewardParams::default().validate().is_ok());
        for bad in [
            RewardParams { p1: -1.0, ..Default::default() },
            RewardParams { p2: 0.5, ..Default::default() },
            RewardParams { p3: 0.0, ..Default::default() },
            RewardParams { p4: 1.0, ..Default::default() },
            RewardParams { p5: -1.0, ..Default::default() },
            RewardParams { theta_thr: 2.0, ..Default::default() },
            RewardParams { n_step_max: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
