//! Batched environments stepped in parallel with per-instance auto-reset.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, KnotEnv, StepInfo, TaskSpec};
use crate::geometry::Action;
use crate::pool::ConfigPool;
use crate::render::{Observation, CHANNELS, OBS_HEIGHT, OBS_WIDTH};

#[derive(Debug, Error)]
pub enum VecEnvError {
    #[error("instance {index}: {source}")]
    Instance { index: usize, source: EnvError },
    #[error("expected {expected} actions, got {got}")]
    BatchSize { expected: usize, got: usize },
    #[error("need at least one instance")]
    Empty,
    #[error("worker pool: {0}")]
    Workers(String),
}

/// Seed of instance `i`'s `k`-th episode.
pub fn instance_seed(master: u64, i: usize, episode: u64) -> u64 {
    (master ^ i as u64).wrapping_add(episode << 32)
}

#[derive(Debug, Clone)]
struct Slot {
    env: KnotEnv,
    episodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    /// Observations after the step; for finished instances, the first
    /// observation of the next episode.
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub infos: Vec<StepInfo>,
    /// Last observation of each episode that ended on this step.
    pub final_observations: Vec<Option<Observation>>,
}

impl BatchStep {
    /// Observations as one `[n, 3, 128, 256]` byte tensor.
    pub fn stacked_observations(&self) -> Vec<u8> {
        stack(&self.observations)
    }
}

pub fn stack(observations: &[Observation]) -> Vec<u8> {
    let mut out = Vec::with_capacity(observations.len() * CHANNELS * OBS_HEIGHT * OBS_WIDTH);
    for o in observations {
        out.extend_from_slice(&o.pixels);
    }
    out
}

pub struct VecEnv {
    slots: Vec<Slot>,
    master_seed: u64,
    workers: rayon::ThreadPool,
}

impl VecEnv {
    pub fn new(
        n: usize,
        spec: TaskSpec,
        pool: Arc<ConfigPool>,
        config: EnvConfig,
        master_seed: u64,
        workers: usize,
    ) -> Result<Self, VecEnvError> {
        if n == 0 {
            return Err(VecEnvError::Empty);
        }
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| VecEnvError::Workers(e.to_string()))?;
        let slots = (0..n)
            .map(|_| Slot {
                env: KnotEnv::new(spec.clone(), Arc::clone(&pool), config),
                episodes: 0,
            })
            .collect();
        Ok(Self { slots, master_seed, workers })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn observation_shape(&self) -> [usize; 4] {
        [self.len(), CHANNELS, OBS_HEIGHT, OBS_WIDTH]
    }

    pub fn envs(&self) -> impl Iterator<Item = &KnotEnv> {
        self.slots.iter().map(|s| &s.env)
    }

    /// Resets every instance; with `Some(seed)` the master seed is replaced.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<(Vec<Observation>, Vec<StepInfo>), VecEnvError> {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        let master = self.master_seed;
        let out: Vec<Result<(Observation, StepInfo), VecEnvError>> = self.workers.install(|| {
            self.slots
                .par_iter_mut()
                .enumerate()
                .map(|(i, slot)| {
                    slot.episodes = 0;
                    slot.env
                        .reset(instance_seed(master, i, 0))
                        .map_err(|source| VecEnvError::Instance { index: i, source })
                })
                .collect()
        });
        let (obs, infos) = out.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
        Ok((obs, infos))
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<BatchStep, VecEnvError> {
        if actions.len() != self.len() {
            return Err(VecEnvError::BatchSize { expected: self.len(), got: actions.len() });
        }
        let master = self.master_seed;
        type Out = (Observation, f64, bool, bool, StepInfo, Option<Observation>);
        let out: Vec<Result<Out, VecEnvError>> = self.workers.install(|| {
            self.slots
                .par_iter_mut()
                .zip(actions.par_iter())
                .enumerate()
                .map(|(i, (slot, action))| {
                    let wrap = |source| VecEnvError::Instance { index: i, source };
                    let r = slot.env.step(action).map_err(wrap)?;
                    if r.done() {
                        slot.episodes += 1;
                        let (obs, _) = slot.env.reset(instance_seed(master, i, slot.episodes)).map_err(wrap)?;
                        Ok((obs, r.reward, r.terminated, r.truncated, r.info, Some(r.observation)))
                    } else {
                        Ok((r.observation, r.reward, r.terminated, r.truncated, r.info, None))
                    }
                })
                .collect()
        });
        let mut batch = BatchStep {
            observations: Vec::with_capacity(self.len()),
            rewards: Vec::with_capacity(self.len()),
            terminated: Vec::with_capacity(self.len()),
            truncated: Vec::with_capacity(self.len()),
            infos: Vec::with_capacity(self.len()),
            final_observations: Vec::with_capacity(self.len()),
        };
        for r in out {
            let (o, rew, term, trunc, info, fin) = r?;
            batch.observations.push(o);
            batch.rewards.push(rew);
            batch.terminated.push(term);
            batch.truncated.push(trunc);
            batch.infos.push(info);
            batch.final_observations.push(fin);
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::tiny_pool;
    use crate::env::{Split, Task};

    fn spec() -> TaskSpec {
        TaskSpec::custom(Task::Tie, &[0], &[1], Split::Train)
    }

    fn config() -> EnvConfig {
        EnvConfig { horizon: 2, ..EnvConfig::default() }
    }

    #[test]
    fn shapes_and_auto_reset() {
        let mut v = VecEnv::new(4, spec(), tiny_pool(), config(), 9, 2).unwrap();
        let (obs, _) = v.reset(None).unwrap();
        assert_eq!(obs.len(), 4);
        assert_eq!(v.observation_shape(), [4, 3, 128, 256]);
        let actions = vec![Action::zero(); 4];
        let b = v.step(&actions).unwrap();
        assert!(b.final_observations.iter().all(Option::is_none));
        assert_eq!(b.stacked_observations().len(), 4 * 3 * 128 * 256);
        let b = v.step(&actions).unwrap();
        assert!(b.truncated.iter().all(|&t| t));
        assert!(b.final_observations.iter().all(Option::is_some));
        // Every instance is live again.
        let b = v.step(&actions).unwrap();
        assert!(b.infos.iter().all(|i| i.step_index == 1));
    }

    #[test]
    fn instances_match_single_envs_at_any_worker_count() {
        let run = |workers| {
            let mut v = VecEnv::new(3, spec(), tiny_pool(), config(), 17, workers).unwrap();
            let (obs, _) = v.reset(None).unwrap();
            let b = v.step(&[Action::new([0.1, 0.2, 0.0], [1.0, 0.0, 0.0]); 3]).unwrap();
            (obs, b)
        };
        let (obs1, b1) = run(1);
        let (obs4, b4) = run(4);
        assert_eq!(obs1, obs4);
        assert_eq!(b1, b4);
        let mut single = KnotEnv::new(spec(), tiny_pool(), config());
        let (o, _) = single.reset(instance_seed(17, 2, 0)).unwrap();
        assert_eq!(o, obs1[2]);
    }

    #[test]
    fn errors_carry_instance_index() {
        assert!(matches!(VecEnv::new(0, spec(), tiny_pool(), config(), 0, 1), Err(VecEnvError::Empty)));
        let bad = TaskSpec::custom(Task::Tie, &[0], &[4], Split::Train);
        let mut v = VecEnv::new(2, bad, tiny_pool(), config(), 0, 1).unwrap();
        assert!(matches!(v.reset(None), Err(VecEnvError::Instance { index: 0, .. })));
        let mut v = VecEnv::new(2, spec(), tiny_pool(), config(), 0, 1).unwrap();
        v.reset(None).unwrap();
        assert!(matches!(v.step(&[Action::zero()]), Err(VecEnvError::BatchSize { expected: 2, got: 1 })));
    }
}
