//! Policies, episode rollouts and seeded parallel evaluation.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, KnotEnv, Split, StepInfo, Task, TaskSpec};
use crate::geometry::Action;
use crate::pool::ConfigPool;
use crate::render::Observation;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("worker pool: {0}")]
    Workers(String),
}

pub trait Policy: Send {
    /// Called before each episode with that episode's seed.
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, observation: &Observation, info: &StepInfo) -> Action;
}

/// Uniform actions on `[-1, 1]^6`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

/// Policy stream seed for an episode, kept apart from the environment's.
fn policy_seed(seed: u64) -> u64 {
    seed ^ 0x5851_F42D_4C95_7F2D
}

impl Policy for RandomPolicy {
    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(policy_seed(seed));
    }

    fn act(&mut self, _: &Observation, _: &StepInfo) -> Action {
        Action::from_array(std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &Observation, _: &StepInfo) -> Action {
        Action::zero()
    }
}

/// Replays a fixed action sequence, then zeros.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    actions: Vec<Action>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, next: 0 }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn from_log(log: &[StepRecord]) -> Self {
        Self::new(log.iter().map(|r| Action::from_array(r.action)).collect())
    }
}

impl Policy for ReplayPolicy {
    fn reset(&mut self, _: u64) {
        self.next = 0;
    }

    fn act(&mut self, _: &Observation, _: &StepInfo) -> Action {
        let a = self.actions.get(self.next).copied().unwrap_or_else(Action::zero);
        self.next += 1;
        a
    }
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub action: [f64; 6],
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub gauss_code_current: String,
    pub gauss_code_goal: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub records: Vec<StepRecord>,
}

impl Episode {
    pub fn success(&self) -> bool {
        self.records.last().is_some_and(|r| r.terminated)
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Newline-delimited JSON, one record per step.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_ndjson(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(self.to_ndjson().as_bytes())
    }

    pub fn parse_ndjson(text: &str) -> Result<Vec<StepRecord>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

/// Runs one episode to its end. Environment errors after reset end the log
/// with a record carrying the message.
pub fn rollout(env: &mut KnotEnv, policy: &mut dyn Policy, seed: u64) -> Result<Episode, EnvError> {
    let (mut observation, mut info) = env.reset(seed)?;
    policy.reset(seed);
    let mut records = Vec::new();
    loop {
        let action = policy.act(&observation, &info);
        match env.step(&action) {
            Ok(result) => {
                records.push(StepRecord {
                    step: result.info.step_index,
                    action: action.to_array(),
                    reward: result.reward,
                    terminated: result.terminated,
                    truncated: result.truncated,
                    gauss_code_current: result.info.gauss_code_current.clone(),
                    gauss_code_goal: result.info.gauss_code_goal.clone(),
                    diverged: result.info.diverged,
                    error: None,
                });
                let done = result.done();
                observation = result.observation;
                info = result.info;
                if done {
                    break;
                }
            }
            Err(e) => {
                records.push(StepRecord {
                    step: info.step_index + 1,
                    action: action.to_array(),
                    reward: 0.0,
                    terminated: false,
                    truncated: true,
                    gauss_code_current: info.gauss_code_current.clone(),
                    gauss_code_goal: info.gauss_code_goal.clone(),
                    diverged: false,
                    error: Some(e.to_string()),
                });
                break;
            }
        }
    }
    Ok(Episode { seed, records })
}

/// Seed of episode `i` under a master seed. Episodes are consecutive from an
/// offset drawn from the master seed, so nearby masters do not share episodes.
pub fn episode_seed(master: u64, i: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(master).next_u64().wrapping_add(i)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    /// Crossing setting label; `None` for full-range specs.
    pub x: Option<u32>,
    pub split: Split,
    pub episodes: usize,
    pub success_count: usize,
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub diverged: usize,
    pub wall_time: Duration,
}

impl EvalReport {
    pub fn from_episodes(task: Task, x: Option<u32>, split: Split, episodes: &[Episode], wall_time: Duration) -> Self {
        let n = episodes.len();
        let success_count = episodes.iter().filter(|e| e.success()).count();
        let steps: usize = episodes.iter().map(Episode::len).sum();
        let diverged = episodes
            .iter()
            .filter(|e| e.records.last().is_some_and(|r| r.diverged))
            .count();
        Self {
            task,
            x,
            split,
            episodes: n,
            success_count,
            success_rate: if n == 0 { 0.0 } else { success_count as f64 / n as f64 },
            mean_episode_length: if n == 0 { 0.0 } else { steps as f64 / n as f64 },
            diverged,
            wall_time,
        }
    }

    pub fn confidence_interval(&self) -> (f64, f64) {
        wilson_interval(self.success_count, self.episodes, Z_95)
    }

    fn x_text(&self) -> String {
        self.x.map_or_else(|| "all".to_string(), |x| x.to_string())
    }

    /// One `key=value` record. Wall time is omitted when `with_time` is false
    /// so that reports can be compared across runs.
    pub fn record(&self, with_time: bool) -> String {
        let (lo, hi) = self.confidence_interval();
        let mut s = format!(
            "task={} x={} split={} n={} success_count={} success_rate={:.6} ci_low={:.6} ci_high={:.6} mean_episode_length={:.4} diverged={}",
            self.task,
            self.x_text(),
            self.split,
            self.episodes,
            self.success_count,
            self.success_rate,
            lo,
            hi,
            self.mean_episode_length,
            self.diverged,
        );
        if with_time {
            s.push_str(&format!(" wall_time={:.3}", self.wall_time.as_secs_f64()));
        }
        s
    }

    pub fn table_header() -> String {
        format!(
            "{:<8} {:>4} {:<5} {:>5} {:>7} {:>7} {:>17} {:>8} {:>8}",
            "task", "x", "split", "n", "success", "rate", "95% ci", "mean len", "time s"
        )
    }

    pub fn table_row(&self) -> String {
        let (lo, hi) = self.confidence_interval();
        format!(
            "{:<8} {:>4} {:<5} {:>5} {:>7} {:>7.3} {:>17} {:>8.2} {:>8.2}",
            self.task.to_string(),
            self.x_text(),
            self.split.to_string(),
            self.episodes,
            self.success_count,
            self.success_rate,
            format!("[{lo:.3}, {hi:.3}]"),
            self.mean_episode_length,
            self.wall_time.as_secs_f64()
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::table_header())?;
        write!(f, "{}", self.table_row())
    }
}

/// Builds a fresh policy for one episode.
pub type PolicyFactory<'a> = dyn Fn(u64) -> Box<dyn Policy> + Sync + 'a;

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs `n` episodes with seeds [`episode_seed`] on `workers` threads. Results
/// are in episode order and do not depend on `workers`.
pub fn run_episodes(
    spec: &TaskSpec,
    pool: &Arc<ConfigPool>,
    config: &EnvConfig,
    policy: &PolicyFactory<'_>,
    n: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<Episode>, HarnessError> {
    let results: Vec<Result<Episode, EnvError>> = with_workers(workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let seed = episode_seed(master_seed, i);
                let mut env = KnotEnv::new(spec.clone(), Arc::clone(pool), *config);
                let mut p = policy(seed);
                rollout(&mut env, p.as_mut(), seed)
            })
            .collect()
    })?;
    Ok(results.into_iter().collect::<Result<_, _>>()?)
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    spec: &TaskSpec,
    x: Option<u32>,
    pool: &Arc<ConfigPool>,
    config: &EnvConfig,
    policy: &PolicyFactory<'_>,
    n: usize,
    master_seed: u64,
    workers: usize,
) -> Result<EvalReport, HarnessError> {
    let start = Instant::now();
    let episodes = run_episodes(spec, pool, config, policy, n, master_seed, workers)?;
    Ok(EvalReport::from_episodes(spec.task, x, spec.split, &episodes, start.elapsed()))
}

/// Evaluation of one policy per training setting at each evaluation setting,
/// on the test split. Row `r` uses `policies(train_x[r])`.
#[allow(clippy::too_many_arguments)]
pub fn generalization_matrix(
    task: Task,
    train_x: &[u32],
    eval_x: &[u32],
    policies: &(dyn Fn(u32) -> Box<PolicyFactory<'static>> + Sync),
    pool: &Arc<ConfigPool>,
    config: &EnvConfig,
    n: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<Vec<EvalReport>>, HarnessError> {
    train_x
        .iter()
        .map(|&tx| {
            let factory = policies(tx);
            eval_x
                .iter()
                .map(|&ex| {
                    let spec = TaskSpec::for_setting(task, ex, Split::Test);
                    evaluate(&spec, Some(ex), pool, config, factory.as_ref(), n, master_seed, workers)
                })
                .collect()
        })
        .collect()
}

/// Writes the reset observation of `seed` as a PNG, plus a `.txt` sidecar
/// holding both codes.
pub fn export_observation(
    spec: &TaskSpec,
    pool: &Arc<ConfigPool>,
    config: &EnvConfig,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<StepInfo, HarnessError> {
    let path = path.as_ref();
    let mut env = KnotEnv::new(spec.clone(), Arc::clone(pool), *config);
    let (observation, info) = env.reset(seed)?;
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| HarnessError::Io { path: p, source }
    };
    observation.save_png(path).map_err(io_err(path))?;
    let sidecar = path.with_extension("txt");
    let text = format!(
        "gauss_code_current={}\ngauss_code_goal={}\n",
        info.gauss_code_current, info.gauss_code_goal
    );
    std::fs::write(&sidecar, text).map_err(io_err(&sidecar))?;
    Ok(info)
}
