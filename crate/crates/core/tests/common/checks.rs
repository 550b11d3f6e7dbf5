//! Measurements shared by the integration tests and the acceptance suite.

use std::sync::Arc;
use std::time::Instant;

use knotsim::env::{EnvConfig, KnotEnv, Split, Task, TaskSpec};
use knotsim::harness::{evaluate, rollout, run_episodes, wilson_interval, EvalReport, Policy, PolicyFactory, RandomPolicy, Z_95};
use knotsim::physics::{min_segment_separation, step_frame, total_energy, RopeState, SimParams};
use knotsim::{ConfigPool, KnotConfiguration, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{perpendicular_strands, pool_dir, simple_loop, STRANDS_GAP};

pub fn shipped_pool() -> Arc<ConfigPool> {
    Arc::new(ConfigPool::load(pool_dir()).expect("shipped pool loads"))
}

pub fn random_factory() -> Box<PolicyFactory<'static>> {
    Box::new(|seed| Box::new(RandomPolicy::new(seed)) as Box<dyn Policy>)
}

fn pool_configs(pool: &ConfigPool) -> Vec<KnotConfiguration> {
    pool.groups().flat_map(|(_, _, es)| es.iter().map(|e| e.config.clone())).collect()
}

/// Frames where kinetic energy grew under zero applied force, starting from
/// pool configurations given random bead velocities.
pub fn kinetic_energy_increases(trials: u64, frames: usize, pool: &ConfigPool) -> usize {
    let params = SimParams::default();
    let configs = pool_configs(pool);
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let mut s = RopeState::at_rest(configs[rng.random_range(0..configs.len())].clone());
        for v in s.velocities.iter_mut() {
            *v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        }
        let mut prev = s.kinetic_energy(&params);
        for _ in 0..frames {
            s = step_frame(&s, 0, Vec3::zeros(), &params).expect("stable");
            let ke = s.kinetic_energy(&params);
            if ke > prev * (1.0 + 1e-10) {
                bad += 1;
            }
            prev = ke;
        }
    }
    bad
}

/// Frames where kinetic plus potential energy grew under zero applied force,
/// starting at rest from random smooth curves.
pub fn total_energy_increases(trials: u64, frames: usize) -> usize {
    let params = SimParams::default();
    let mut bad = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let mut s = RopeState::at_rest(KnotConfiguration::random_smooth(40, &mut rng));
        let mut prev = total_energy(&s, &params);
        for _ in 0..frames {
            s = step_frame(&s, 0, Vec3::zeros(), &params).expect("stable");
            let e = total_energy(&s, &params);
            if e > prev * (1.0 + 1e-10) {
                bad += 1;
            }
            prev = e;
        }
    }
    bad
}

/// Smallest and largest neighbor distance seen after any step of random
/// episodes across every task.
pub fn neighbor_distance_range(episodes: u64, pool: &Arc<ConfigPool>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..episodes {
        let task = Task::ALL[(i % 3) as usize];
        let mut env = KnotEnv::new(TaskSpec::full(task, Split::Train), Arc::clone(pool), EnvConfig::default());
        let (mut obs, mut info) = env.reset(i).expect("reset");
        let mut policy = RandomPolicy::new(0);
        policy.reset(i);
        loop {
            let r = env.step(&policy.act(&obs, &info)).expect("step");
            let c = &env.state().unwrap().manipulated;
            for k in 0..c.len() {
                let d = c.neighbor_distance(k);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            if r.done() {
                break;
            }
            obs = r.observation;
            info = r.info;
        }
    }
    (lo, hi)
}

/// Smallest segment separation while the strands of the crossing fixture are
/// pushed into each other at full force, alternating strands, for `steps`.
pub fn strands_min_separation(steps: usize) -> f64 {
    let params = SimParams::default();
    let config = perpendicular_strands(STRANDS_GAP);
    let pts = config.points();
    let highest = (0..pts.len()).max_by(|&a, &b| pts[a].z.total_cmp(&pts[b].z)).unwrap();
    let lowest = (0..pts.len()).min_by(|&a, &b| pts[a].z.total_cmp(&pts[b].z)).unwrap();
    let mut s = RopeState::at_rest(config);
    let mut min = min_segment_separation(s.positions.points());
    for k in 0..steps {
        let (bead, dir) = if k % 2 == 0 { (highest, -1.0) } else { (lowest, 1.0) };
        s = step_frame(&s, bead, Vec3::new(0.0, 0.0, dir * params.f_max), &params).expect("stable");
        min = min.min(min_segment_separation(s.positions.points()));
    }
    min
}

/// For a loop at rest with no force: the largest bead displacement over one
/// step, and the largest gap to the same step integrated at a tenth of dt.
pub fn relaxation_against_refinement() -> (f64, f64) {
    let params = SimParams::default();
    let fine = SimParams {
        dt: params.dt / 10.0,
        substeps_per_frame: params.substeps_per_frame * 10,
        ..params
    };
    let s = RopeState::at_rest(simple_loop());
    let coarse = step_frame(&s, 0, Vec3::zeros(), &params).unwrap();
    let refined = step_frame(&s, 0, Vec3::zeros(), &fine).unwrap();
    let mut moved = 0.0f64;
    let mut gap = 0.0f64;
    for i in 0..s.positions.len() {
        moved = moved.max((coarse.positions.points()[i] - s.positions.points()[i]).norm());
        gap = gap.max((coarse.positions.points()[i] - refined.positions.points()[i]).norm());
    }
    (moved, gap)
}

/// Episodes breaking the reward, length or goal-constancy contract.
pub fn contract_violations(task: Task, x: u32, episodes: usize, pool: &Arc<ConfigPool>) -> Vec<String> {
    let spec = TaskSpec::for_setting(task, x, Split::Train);
    let config = EnvConfig::default();
    let runs = run_episodes(&spec, pool, &config, random_factory().as_ref(), episodes, 7, 1).expect("episodes run");
    let mut bad = Vec::new();
    for ep in runs {
        let total = ep.total_reward();
        let goal = &ep.records[0].gauss_code_goal;
        let last = ep.records.last().unwrap();
        if total != 5.0 && total != -5.0 {
            bad.push(format!("seed {} total reward {total}", ep.seed));
        }
        if ep.len() > config.horizon as usize {
            bad.push(format!("seed {} length {}", ep.seed, ep.len()));
        }
        if ep.records.iter().any(|r| &r.gauss_code_goal != goal) {
            bad.push(format!("seed {} goal code changed", ep.seed));
        }
        if !(last.terminated || last.truncated) || ep.records.iter().any(|r| r.error.is_some()) {
            bad.push(format!("seed {} ended without termination", ep.seed));
        }
        if last.terminated != (total == 5.0) {
            bad.push(format!("seed {} termination and reward disagree", ep.seed));
        }
    }
    bad
}

pub struct Ordering {
    pub reports: Vec<(String, EvalReport)>,
    pub holds: bool,
}

/// Random-policy success at tie #X = 2, 3, 4 and unknot #X = 2 on the test split.
pub fn difficulty_ordering(n: usize, master: u64, pool: &Arc<ConfigPool>) -> Ordering {
    let config = EnvConfig::default();
    let cells = [(Task::Tie, 2), (Task::Tie, 3), (Task::Tie, 4), (Task::Unknot, 2)];
    let reports: Vec<(String, EvalReport)> = cells
        .iter()
        .map(|&(task, x)| {
            let spec = TaskSpec::for_setting(task, x, Split::Test);
            let r = evaluate(&spec, Some(x), pool, &config, random_factory().as_ref(), n, master, 1).expect("eval");
            (format!("{task}{x}"), r)
        })
        .collect();
    let ci = |k: usize| wilson_interval(reports[k].1.success_count, n, Z_95);
    let holds = ci(0).0 > ci(1).1 && ci(1).0 > ci(2).1 && reports[3].1.success_count > 0 && ci(3).0 > 0.0;
    Ordering { reports, holds }
}

/// Logs and time-free records from one evaluation.
pub fn evaluation_bytes(workers: usize, pool: &Arc<ConfigPool>) -> (String, String) {
    let spec = TaskSpec::for_setting(Task::Tie, 2, Split::Test);
    let config = EnvConfig::default();
    let eps = run_episodes(&spec, pool, &config, random_factory().as_ref(), 16, 99, workers).unwrap();
    let logs: String = eps.iter().map(|e| e.to_ndjson()).collect();
    let report = evaluate(&spec, Some(2), pool, &config, random_factory().as_ref(), 16, 99, workers).unwrap();
    (logs, report.record(false))
}

/// Rendered environment steps per second on the calling thread.
pub fn steps_per_second(steps: usize, pool: &Arc<ConfigPool>) -> f64 {
    let mut env = KnotEnv::new(TaskSpec::full(Task::Tie, Split::Train), Arc::clone(pool), EnvConfig::default());
    let mut policy = RandomPolicy::new(0);
    let start = Instant::now();
    let mut done = 0;
    let mut episode = 0;
    while done < steps {
        let ep = rollout(&mut env, &mut policy, episode).unwrap();
        done += ep.len();
        episode += 1;
    }
    done as f64 / start.elapsed().as_secs_f64()
}
