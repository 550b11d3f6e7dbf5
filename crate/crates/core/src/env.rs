//! Episodic goal-conditioned knot environment.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gauss::{codes_equal, compute_gauss_code, GaussCode, GaussError};
use crate::geometry::{
    center_of_mass, denormalize_action, nearest_key_point, Action, KnotConfiguration, Vec3,
    Workspace, WorldState, WORKSPACE_HALF_EXTENT,
};
use crate::physics::{apply_reset_noise, step_frame, PhysicsError, RopeState, SimParams};
use crate::pool::{locate_pool, ConfigPool, PoolEntry, PoolError};
use crate::render::{render_observation, Observation};

pub const SUCCESS_REWARD: f64 = 5.0;
pub const TIMEOUT_REWARD: f64 = -5.0;
pub const DEFAULT_HORIZON: u32 = 50;
pub const RESET_NOISE_SCALE: f64 = 0.015;

/// Displacement bound for the oracle's retry perturbation (m).
pub const ORACLE_PERTURBATION: f64 = 1e-7;
pub const ORACLE_RETRIES: u32 = 5;
const RESET_TRIES: usize = 10;

/// Text recorded in place of a code when every oracle retry was degenerate.
pub const DEGENERATE_CODE_TEXT: &str = "degenerate";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("pool has no {split} configurations with {x} crossings")]
    EmptyPool { x: u32, split: Split },
    #[error("task spec has an empty crossing set")]
    EmptyCrossingSet,
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("environment has not been reset")]
    NotReset,
    #[error("goal configuration has no well-defined gauss code: {0}")]
    DegenerateGoal(GaussError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Unknot,
    Tie,
    Convert,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Unknot, Task::Tie, Task::Convert];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Unknot => "unknot",
            Task::Tie => "tie",
            Task::Convert => "convert",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unknot" => Ok(Task::Unknot),
            "tie" => Ok(Task::Tie),
            "convert" => Ok(Task::Convert),
            other => Err(format!("unknown task `{other}` (expected unknot, tie or convert)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

/// Which crossing counts the initial and goal configurations are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub task: Task,
    pub initial_x: BTreeSet<u32>,
    pub goal_x: BTreeSet<u32>,
    pub split: Split,
}

impl TaskSpec {
    /// The full crossing ranges of each task.
    pub fn full(task: Task, split: Split) -> Self {
        let (initial, goal): (&[u32], &[u32]) = match task {
            Task::Unknot => (&[2, 3, 4], &[0]),
            Task::Tie => (&[0], &[2, 3, 4]),
            Task::Convert => (&[1, 2, 3], &[2, 3, 4]),
        };
        Self::custom(task, initial, goal, split)
    }

    /// One crossing setting: unknot starts at `x` crossings, tie ends at `x`,
    /// convert goes from `x - 1` to `x`.
    pub fn for_setting(task: Task, x: u32, split: Split) -> Self {
        match task {
            Task::Unknot => Self::custom(task, &[x], &[0], split),
            Task::Tie => Self::custom(task, &[0], &[x], split),
            Task::Convert => Self::custom(task, &[x.saturating_sub(1)], &[x], split),
        }
    }

    pub fn custom(task: Task, initial: &[u32], goal: &[u32], split: Split) -> Self {
        Self {
            task,
            initial_x: initial.iter().copied().collect(),
            goal_x: goal.iter().copied().collect(),
            split,
        }
    }

    /// A goal set of exactly `{0}` behaves as untangling regardless of label.
    pub fn effective_task(&self) -> Task {
        if self.goal_x.len() == 1 && self.goal_x.contains(&0) {
            Task::Unknot
        } else {
            self.task
        }
    }
}

/// Knobs that are not part of the physics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub params: SimParams,
    pub horizon: u32,
    pub reset_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            params: SimParams::default(),
            horizon: DEFAULT_HORIZON,
            reset_noise: RESET_NOISE_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub gauss_code_current: String,
    pub gauss_code_goal: String,
    pub step_index: u32,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

fn perturbation_rng(seed: u64, attempt: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ attempt as u64)
}

/// The oracle's `attempt`-th retry input: `config` with every coordinate
/// displaced by at most [`ORACLE_PERTURBATION`].
pub fn perturbed_copy(config: &KnotConfiguration, seed: u64, attempt: u32) -> KnotConfiguration {
    let mut rng = perturbation_rng(seed, attempt);
    let s = ORACLE_PERTURBATION;
    config.map_points(|p| {
        p + Vec3::new(
            rng.random_range(-s..=s),
            rng.random_range(-s..=s),
            rng.random_range(-s..=s),
        )
    })
}

/// Gauss code of `config`; on a degenerate projection, retries on copies
/// displaced by at most [`ORACLE_PERTURBATION`] per coordinate, drawn
/// deterministically from `seed`. The input is never modified.
pub fn robust_gauss_code(config: &KnotConfiguration, seed: u64) -> Result<GaussCode, GaussError> {
    let mut err = match compute_gauss_code(config) {
        Ok(code) => return Ok(code),
        Err(e @ GaussError::DegenerateProjection { .. }) => e,
        Err(e) => return Err(e),
    };
    for attempt in 0..ORACLE_RETRIES {
        match compute_gauss_code(&perturbed_copy(config, seed, attempt)) {
            Ok(code) => return Ok(code),
            Err(e) => err = e,
        }
    }
    Err(err)
}

fn code_text(code: &Result<GaussCode, GaussError>) -> String {
    match code {
        Ok(c) => c.to_string(),
        Err(_) => DEGENERATE_CODE_TEXT.to_string(),
    }
}

fn sample_entry<'a>(
    pool: &'a ConfigPool,
    xs: &BTreeSet<u32>,
    split: Split,
    rng: &mut ChaCha8Rng,
) -> Result<&'a PoolEntry, EnvError> {
    let xs: Vec<u32> = xs.iter().copied().collect();
    let x = *xs.choose(rng).expect("crossing set checked non-empty");
    pool.entries(x, split)
        .choose(rng)
        .ok_or(EnvError::EmptyPool { x, split })
}

/// Starts an episode. Initial and goal configurations are drawn uniformly
/// (first a crossing count from the set, then a configuration); only the
/// initial one receives reset noise.
pub fn reset(
    spec: &TaskSpec,
    pool: &ConfigPool,
    config: &EnvConfig,
    seed: u64,
) -> Result<(WorldState, Observation), EnvError> {
    if spec.initial_x.is_empty() || spec.goal_x.is_empty() {
        return Err(EnvError::EmptyCrossingSet);
    }
    for &x in spec.initial_x.iter().chain(&spec.goal_x) {
        if pool.entries(x, spec.split).is_empty() {
            return Err(EnvError::EmptyPool { x, split: spec.split });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pair = None;
    for _ in 0..RESET_TRIES {
        let initial = sample_entry(pool, &spec.initial_x, spec.split, &mut rng)?;
        let goal = sample_entry(pool, &spec.goal_x, spec.split, &mut rng)?;
        pair = Some((initial, goal));
        if !codes_equal(&initial.code, &goal.code) {
            break;
        }
    }
    let (initial, goal) = pair.expect("at least one draw");

    let target = initial.code.crossing_count();
    let mut manipulated = initial.config.clone();
    for attempt in 0..RESET_TRIES {
        let noisy = apply_reset_noise(&initial.config, config.reset_noise, &mut rng);
        let same_count = robust_gauss_code(&noisy, seed ^ attempt as u64)
            .map(|c| c.crossing_count() == target)
            .unwrap_or(false);
        if same_count {
            manipulated = noisy;
            break;
        }
    }

    let state = WorldState::at_rest(manipulated, goal.config.clone());
    let observation = render_observation(&state);
    Ok((state, observation))
}

/// Applies one action: grasp the bead nearest the denormalized location,
/// advance one physics frame, then score the new configuration.
pub fn step(
    state: &WorldState,
    action: &Action,
    config: &EnvConfig,
) -> Result<(WorldState, StepResult), EnvError> {
    let goal_code = robust_gauss_code(&state.goal, u64::MAX).map_err(EnvError::DegenerateGoal)?;
    Ok(step_with_goal(state, action, config, &goal_code))
}

fn step_with_goal(
    state: &WorldState,
    action: &Action,
    config: &EnvConfig,
    goal_code: &GaussCode,
) -> (WorldState, StepResult) {
    let params = &config.params;
    let workspace = Workspace::centered(center_of_mass(&state.manipulated), WORKSPACE_HALF_EXTENT);
    let (grasp_point, force) = denormalize_action(action, &workspace, params.f_max);
    let grasp = nearest_key_point(&state.manipulated, &grasp_point);
    let rope = RopeState {
        positions: state.manipulated.clone(),
        velocities: state.velocities.clone(),
    };
    let step_index = state.step_index + 1;
    let goal_text = goal_code.to_string();

    let next = match step_frame(&rope, grasp, force, params) {
        Ok(next) => next,
        Err(_) => {
            let mut stalled = state.clone();
            stalled.step_index = step_index;
            let observation = render_observation(&stalled);
            let current = robust_gauss_code(&stalled.manipulated, step_index as u64);
            let result = StepResult {
                observation,
                reward: TIMEOUT_REWARD,
                terminated: false,
                truncated: true,
                info: StepInfo {
                    gauss_code_current: code_text(&current),
                    gauss_code_goal: goal_text,
                    step_index,
                    diverged: true,
                },
            };
            return (stalled, result);
        }
    };

    let next_state = WorldState {
        manipulated: next.positions,
        goal: state.goal.clone(),
        velocities: next.velocities,
        step_index,
    };
    let current = robust_gauss_code(&next_state.manipulated, step_index as u64);
    let success = matches!(&current, Ok(code) if codes_equal(code, goal_code));
    let (reward, terminated, truncated) = if success {
        (SUCCESS_REWARD, true, false)
    } else if step_index >= config.horizon {
        (TIMEOUT_REWARD, false, true)
    } else {
        (0.0, false, false)
    };
    let observation = render_observation(&next_state);
    let result = StepResult {
        observation,
        reward,
        terminated,
        truncated,
        info: StepInfo {
            gauss_code_current: code_text(&current),
            gauss_code_goal: goal_text,
            step_index,
            diverged: false,
        },
    };
    (next_state, result)
}

/// Stateful wrapper owning one episode at a time.
#[derive(Debug, Clone)]
pub struct KnotEnv {
    spec: TaskSpec,
    pool: Arc<ConfigPool>,
    config: EnvConfig,
    state: Option<WorldState>,
    goal_code: GaussCode,
    finished: bool,
}

impl KnotEnv {
    pub fn new(spec: TaskSpec, pool: Arc<ConfigPool>, config: EnvConfig) -> Self {
        Self {
            spec,
            pool,
            config,
            state: None,
            goal_code: GaussCode::unknot(),
            finished: false,
        }
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&WorldState> {
        self.state.as_ref()
    }

    pub fn goal_code(&self) -> &GaussCode {
        &self.goal_code
    }

    pub fn reset(&mut self, seed: u64) -> Result<(Observation, StepInfo), EnvError> {
        let (state, observation) = reset(&self.spec, &self.pool, &self.config, seed)?;
        self.goal_code = robust_gauss_code(&state.goal, u64::MAX).map_err(EnvError::DegenerateGoal)?;
        let current = robust_gauss_code(&state.manipulated, 0);
        let info = StepInfo {
            gauss_code_current: code_text(&current),
            gauss_code_goal: self.goal_code.to_string(),
            step_index: 0,
            diverged: false,
        };
        self.state = Some(state);
        self.finished = false;
        Ok((observation, info))
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let (next, result) = step_with_goal(state, action, &self.config, &self.goal_code);
        self.finished = result.done();
        self.state = Some(next);
        Ok(result)
    }
}

/// Environment for one task setting (or the task's full range when `x` is
/// `None`), with the pool found under `pool_dir` or `$KNOTSIM_DATA/pool`.
pub fn make(
    task: Task,
    x: Option<u32>,
    split: Split,
    pool_dir: Option<&std::path::Path>,
) -> Result<KnotEnv, PoolError> {
    let pool = ConfigPool::load(locate_pool(pool_dir)?)?;
    let spec = match x {
        Some(x) => TaskSpec::for_setting(task, x, split),
        None => TaskSpec::full(task, split),
    };
    Ok(KnotEnv::new(spec, Arc::new(pool), EnvConfig::default()))
}
