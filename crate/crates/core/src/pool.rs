//! Pools of settled rope configurations indexed by crossing count and split,
//! and their generation by random manipulation of a loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{robust_gauss_code, Split};
use crate::gauss::{GaussCode, GaussError};
use crate::geometry::{
    center_of_mass, denormalize_action, nearest_key_point, Action, GeometryError,
    KnotConfiguration, Vec3, Workspace, DEFAULT_BEADS, WORKSPACE_HALF_EXTENT,
};
use crate::physics::{apply_reset_noise, step_frame, PhysicsError, RopeState, SimParams};

pub const MANIFEST_FILE: &str = "manifest.txt";
/// Environment variable naming the data directory that holds `pool/`.
pub const DATA_ENV: &str = "KNOTSIM_DATA";
const MANIFEST_HEADER: &str = "# knotsim pool v1";

/// Configurations per crossing count in a standard pool.
pub const DEFAULT_COUNTS: [(u32, usize); 5] = [(0, 17), (1, 40), (2, 40), (3, 40), (4, 40)];
pub const TRAIN_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Geometry { path: PathBuf, source: GeometryError },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: manifest says {claimed} crossings, configuration has {found}")]
    CrossingMismatch { path: PathBuf, claimed: u32, found: u32 },
    #[error("configuration has no well-defined gauss code: {0}")]
    Degenerate(#[from] GaussError),
    #[error("gave up on {target_x}-crossing configurations after {steps} steps ({produced} of {wanted} found)")]
    GenerationTimeout { target_x: u32, produced: usize, wanted: usize, steps: u64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("no pool found at {0}; generate one with `knotsim gen-pool --out <dir>/pool` and set {DATA_ENV}=<dir>")]
    NotFound(PathBuf),
}

/// Pool directory: `explicit` if given, else `$KNOTSIM_DATA/pool`.
pub fn locate_pool(explicit: Option<&Path>) -> Result<PathBuf, PoolError> {
    let dir = match explicit {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os(DATA_ENV) {
            Some(d) => PathBuf::from(d).join("pool"),
            None => return Err(PoolError::NotFound(PathBuf::from(format!("${DATA_ENV}/pool")))),
        },
    };
    if dir.join(MANIFEST_FILE).is_file() {
        Ok(dir)
    } else {
        Err(PoolError::NotFound(dir))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub config: KnotConfiguration,
    pub code: GaussCode,
}

impl PoolEntry {
    pub fn new(config: KnotConfiguration) -> Result<Self, PoolError> {
        let code = robust_gauss_code(&config, 0)?;
        Ok(Self { config, code })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPool {
    groups: BTreeMap<(u32, Split), Vec<PoolEntry>>,
}

impl ConfigPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self, x: u32, split: Split) -> &[PoolEntry] {
        self.groups.get(&(x, split)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Adds a configuration whose code has `x` crossings.
    pub fn push(&mut self, x: u32, split: Split, entry: PoolEntry) {
        self.groups.entry((x, split)).or_default().push(entry);
    }

    pub fn merge(&mut self, other: ConfigPool) {
        for (key, entries) in other.groups {
            self.groups.entry(key).or_default().extend(entries);
        }
    }

    pub fn groups(&self) -> impl Iterator<Item = (u32, Split, &[PoolEntry])> {
        self.groups.iter().map(|(&(x, s), v)| (x, s, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn relative_path(x: u32, split: Split, i: usize) -> String {
        format!("x{x}/{split}_{i:03}.knot")
    }

    /// Manifest text: one `x split path code` line per configuration.
    pub fn manifest(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for (x, split, entries) in self.groups() {
            for (i, e) in entries.iter().enumerate() {
                let path = Self::relative_path(x, split, i);
                writeln!(out, "{x} {split} {path} {}", e.code).unwrap();
            }
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PoolError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PoolError::Io { path, source }
        };
        for (x, split, entries) in self.groups() {
            let sub = dir.join(format!("x{x}"));
            fs::create_dir_all(&sub).map_err(io_err(&sub))?;
            for (i, e) in entries.iter().enumerate() {
                let path = dir.join(Self::relative_path(x, split, i));
                e.config.save(&path).map_err(io_err(&path))?;
            }
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest()).map_err(io_err(&path))
    }

    /// Loads a pool, recomputing every code and checking it against the
    /// manifest's crossing count.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PoolError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|source| PoolError::Io { path: manifest_path.clone(), source })?;
        let mut pool = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| PoolError::Manifest { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(bad("expected `x split path [code]`".into()));
            }
            let x: u32 = fields[0].parse().map_err(|_| bad(format!("bad crossing count `{}`", fields[0])))?;
            let split: Split = fields[1].parse().map_err(bad)?;
            let path = dir.join(fields[2]);
            let config = KnotConfiguration::load(&path)
                .map_err(|source| PoolError::Geometry { path: path.clone(), source })?;
            let entry = PoolEntry::new(config)?;
            let found = entry.code.crossing_count() as u32;
            if found != x {
                return Err(PoolError::CrossingMismatch { path, claimed: x, found });
            }
            pool.push(x, split, entry);
        }
        Ok(pool)
    }
}

/// Splits one crossing count's configurations: the first
/// `round(len * train_fraction)` go to train, the rest to test.
pub fn split_pool(
    x: u32,
    configs: Vec<KnotConfiguration>,
    train_fraction: f64,
) -> Result<ConfigPool, PoolError> {
    let n_train = ((configs.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut pool = ConfigPool::new();
    for (i, config) in configs.into_iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        pool.push(x, split, PoolEntry::new(config)?);
    }
    Ok(pool)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationOptions {
    pub beads: usize,
    /// Total environment steps (hold frames included) before giving up.
    pub step_budget: u64,
    /// Random actions per episode before starting over from a fresh loop.
    pub episode_len: u32,
    /// Steps between snapshot attempts.
    pub check_every: u32,
    /// Zero-force frames used to let a candidate settle.
    pub hold_frames: u32,
    /// A candidate counts as settled below this bead speed (m/s).
    pub settle_speed: f64,
    /// Largest allowed ratio of the projected bounding box's sides.
    pub max_aspect: f64,
    pub noise: f64,
    /// Reset-noise draws a candidate's code must survive unchanged.
    pub noise_checks: u32,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            beads: DEFAULT_BEADS,
            step_budget: 1_000_000,
            episode_len: 100,
            check_every: 5,
            hold_frames: 24,
            settle_speed: 1e-3,
            max_aspect: 3.0,
            noise: crate::env::RESET_NOISE_SCALE,
            noise_checks: 10,
        }
    }
}

fn random_action(rng: &mut impl Rng) -> Action {
    Action::from_array(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
}

/// Side ratio of the xy bounding box, at least 1.
pub fn projected_aspect(config: &KnotConfiguration) -> f64 {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for p in config.points() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let (w, h) = (hi.x - lo.x, hi.y - lo.y);
    w.max(h) / w.min(h)
}

/// Smallest distance between beads that are not cyclic neighbours.
pub fn min_nonadjacent_separation(config: &KnotConfiguration) -> f64 {
    let pts = config.points();
    let n = pts.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            best = best.min((pts[i] - pts[j]).norm());
        }
    }
    best
}

/// Applies one random-policy step to `state`.
pub fn random_step(
    state: &RopeState,
    params: &SimParams,
    rng: &mut impl Rng,
) -> Result<RopeState, PhysicsError> {
    let action = random_action(rng);
    let workspace = Workspace::centered(center_of_mass(&state.positions), WORKSPACE_HALF_EXTENT);
    let (at, force) = denormalize_action(&action, &workspace, params.f_max);
    let grasp = nearest_key_point(&state.positions, &at);
    step_frame(state, grasp, force, params)
}

/// Holds `state` with no applied force for `frames` frames.
pub fn settle(state: &RopeState, frames: u32, params: &SimParams) -> Result<RopeState, PhysicsError> {
    let mut s = state.clone();
    for _ in 0..frames {
        s = step_frame(&s, 0, Vec3::zeros(), params)?;
    }
    Ok(s)
}

/// Drives noised loops with a uniform random policy and keeps settled
/// snapshots whose code has exactly `target_x` crossings.
pub fn generate_configurations(
    target_x: u32,
    count: usize,
    params: &SimParams,
    rng: &mut impl Rng,
    options: &GenerationOptions,
) -> Result<Vec<KnotConfiguration>, PoolError> {
    let base = KnotConfiguration::circle(options.beads, Vec3::zeros());
    let mut out = Vec::with_capacity(count);
    let mut steps: u64 = 0;
    let timeout = |produced: usize, steps: u64| PoolError::GenerationTimeout {
        target_x,
        produced,
        wanted: count,
        steps,
    };
    while out.len() < count {
        let mut state = RopeState::at_rest(apply_reset_noise(&base, options.noise, rng));
        for t in 1..=options.episode_len {
            if steps >= options.step_budget {
                return Err(timeout(out.len(), steps));
            }
            state = random_step(&state, params, rng)?;
            steps += 1;
            if t % options.check_every != 0 || !has_crossings(&state.positions, target_x) {
                continue;
            }
            let held = settle(&state, options.hold_frames, params)?;
            steps += options.hold_frames as u64;
            if accept(&held, target_x, params, options, rng) {
                out.push(held.positions);
                break;
            }
        }
    }
    Ok(out)
}

fn has_crossings(config: &KnotConfiguration, x: u32) -> bool {
    crate::gauss::compute_gauss_code(config).is_ok_and(|c| c.crossing_count() == x as usize)
}

fn accept(held: &RopeState, x: u32, params: &SimParams, options: &GenerationOptions, rng: &mut impl Rng) -> bool {
    let config = &held.positions;
    if held.max_speed() >= options.settle_speed
        || !config.is_valid()
        || projected_aspect(config) > options.max_aspect
        || min_nonadjacent_separation(config) < params.bead_radius
    {
        return false;
    }
    let Ok(code) = crate::gauss::compute_gauss_code(config) else {
        return false;
    };
    code.crossing_count() == x as usize
        && (0..options.noise_checks).all(|_| {
            let noisy = apply_reset_noise(config, options.noise, rng);
            crate::gauss::compute_gauss_code(&noisy).is_ok_and(|c| c == code)
        })
}

/// Seed of the generator for crossing count `x` under a pool seed.
pub fn stream_seed(seed: u64, x: u32) -> u64 {
    seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generates and splits a pool. Each crossing count uses its own generator,
/// so the result does not depend on thread scheduling.
pub fn generate_pool(
    counts: &[(u32, usize)],
    params: &SimParams,
    seed: u64,
    options: &GenerationOptions,
    train_fraction: f64,
) -> Result<ConfigPool, PoolError> {
    let parts: Vec<Result<ConfigPool, PoolError>> = counts
        .par_iter()
        .map(|&(x, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, x));
            let configs = generate_configurations(x, n, params, &mut rng, options)?;
            split_pool(x, configs, train_fraction)
        })
        .collect();
    let mut pool = ConfigPool::new();
    for part in parts {
        pool.merge(part?);
    }
    Ok(pool)
}
