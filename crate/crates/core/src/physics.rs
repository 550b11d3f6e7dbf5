//! Bead-chain rope dynamics in a viscous medium.
//!
//! Forces: Hookean stretch springs between cyclic neighbours, a turning-angle
//! bending term, penalty repulsion between
//! overlapping capsules around non-adjacent segments, and linear drag. Integration is
//! semi-implicit Euler. There is no gravity.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::geometry::{KnotConfiguration, Vec3, REST_LENGTH};

/// Magnitude above which a coordinate or velocity counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Collision penalty stiffness as a multiple of `k_stretch`.
pub const COLLISION_STIFFNESS_FACTOR: f64 = 10.0;

const RESET_NOISE_TRIES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("simulation diverged at bead {bead}")]
    SimulationDiverged { bead: usize },
    #[error("grasp index {index} out of range for {beads} beads")]
    GraspOutOfRange { index: usize, beads: usize },
    #[error("state has {positions} positions but {velocities} velocities")]
    LengthMismatch { positions: usize, velocities: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`")]
    BadValue { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
}

/// Integrator and material constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Substep duration (s).
    pub dt: f64,
    pub substeps_per_frame: u32,
    /// Frames advanced per environment step while the applied force is held.
    pub frame_skip: u32,
    /// N/m.
    pub k_stretch: f64,
    /// N·m.
    pub k_bend: f64,
    /// m.
    pub bead_radius: f64,
    /// N·s/m per bead.
    pub c_drag: f64,
    /// N per action component.
    pub f_max: f64,
    /// kg per bead.
    pub mass: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            substeps_per_frame: 1,
            frame_skip: 24,
            k_stretch: 500.0,
            k_bend: 1e-5,
            bead_radius: 0.02,
            c_drag: 2.0,
            f_max: 60.0,
            mass: 0.01,
        }
    }
}

const PARAM_KEYS: [&str; 9] = [
    "dt",
    "substeps_per_frame",
    "frame_skip",
    "k_stretch",
    "k_bend",
    "bead_radius",
    "c_drag",
    "f_max",
    "mass",
];

impl SimParams {
    /// Duration of one environment step (s).
    pub fn step_duration(&self) -> f64 {
        self.dt * self.substeps_per_frame as f64 * self.frame_skip as f64
    }

    pub fn substeps_per_step(&self) -> u32 {
        self.substeps_per_frame * self.frame_skip
    }

    pub fn collision_stiffness(&self) -> f64 {
        COLLISION_STIFFNESS_FACTOR * self.k_stretch
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let checks = [
            ("dt", self.dt),
            ("substeps_per_frame", self.substeps_per_frame as f64),
            ("frame_skip", self.frame_skip as f64),
            ("k_stretch", self.k_stretch),
            ("k_bend", self.k_bend),
            ("bead_radius", self.bead_radius),
            ("c_drag", self.c_drag),
            ("f_max", self.f_max),
            ("mass", self.mass),
        ];
        for (key, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamsError::NotPositive(key));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SimParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dt = {}", self.dt)?;
        writeln!(f, "substeps_per_frame = {}", self.substeps_per_frame)?;
        writeln!(f, "frame_skip = {}", self.frame_skip)?;
        writeln!(f, "k_stretch = {}", self.k_stretch)?;
        writeln!(f, "k_bend = {}", self.k_bend)?;
        writeln!(f, "bead_radius = {}", self.bead_radius)?;
        writeln!(f, "c_drag = {}", self.c_drag)?;
        writeln!(f, "f_max = {}", self.f_max)?;
        writeln!(f, "mass = {}", self.mass)
    }
}

impl FromStr for SimParams {
    type Err = ParamsError;

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; every key is required exactly once.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (idx, raw) in s.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ParamsError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = PARAM_KEYS.iter().find(|k| **k == key) else {
                return Err(ParamsError::UnknownKey { line, key: key.into() });
            };
            if values.insert(known, (line, value)).is_some() {
                return Err(ParamsError::DuplicateKey { line, key: key.into() });
            }
        }
        let float = |key: &'static str| -> Result<f64, ParamsError> {
            let (line, v) = values.get(key).ok_or(ParamsError::MissingKey(key))?;
            v.parse().map_err(|_| ParamsError::BadValue { line: *line, key: key.into() })
        };
        let int = |key: &'static str| -> Result<u32, ParamsError> {
            let (line, v) = values.get(key).ok_or(ParamsError::MissingKey(key))?;
            v.parse().map_err(|_| ParamsError::BadValue { line: *line, key: key.into() })
        };
        let params = SimParams {
            dt: float("dt")?,
            substeps_per_frame: int("substeps_per_frame")?,
            frame_skip: int("frame_skip")?,
            k_stretch: float("k_stretch")?,
            k_bend: float("k_bend")?,
            bead_radius: float("bead_radius")?,
            c_drag: float("c_drag")?,
            f_max: float("f_max")?,
            mass: float("mass")?,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Positions and velocities of one rope.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeState {
    pub positions: KnotConfiguration,
    pub velocities: Vec<Vec3>,
}

impl RopeState {
    pub fn at_rest(positions: KnotConfiguration) -> Self {
        let velocities = vec![Vec3::zeros(); positions.len()];
        Self { positions, velocities }
    }

    pub fn kinetic_energy(&self, params: &SimParams) -> f64 {
        0.5 * params.mass * self.velocities.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Force on bead `a` from a spring to bead `b` with rest length `rest`.
pub fn spring_force(a: &Vec3, b: &Vec3, k: f64, rest: f64) -> Vec3 {
    let d = b - a;
    let len = d.norm();
    if len == 0.0 {
        return Vec3::zeros();
    }
    d * (k * (len - rest) / len)
}

pub fn add_stretch_forces(points: &[Vec3], params: &SimParams, out: &mut [Vec3]) {
    let n = points.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let f = spring_force(&points[i], &points[j], params.k_stretch, REST_LENGTH);
        out[i] += f;
        out[j] -= f;
    }
}

/// Bending: each bead `i` carries energy `k_bend * (1 - cos θ_i)`, where
/// `θ_i` is the turning angle between the incoming and outgoing segments.
pub fn add_bending_forces(points: &[Vec3], params: &SimParams, out: &mut [Vec3]) {
    let n = points.len();
    let k = params.k_bend;
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let d1 = points[i] - points[prev];
        let d2 = points[next] - points[i];
        let (l1, l2) = (d1.norm(), d2.norm());
        if l1 == 0.0 || l2 == 0.0 {
            continue;
        }
        let (t1, t2) = (d1 / l1, d2 / l2);
        let c = t1.dot(&t2);
        // Gradients of t1·t2 with respect to d1 and d2.
        let g1 = (t2 - t1 * c) / l1;
        let g2 = (t1 - t2 * c) / l2;
        out[prev] -= g1 * k;
        out[i] += (g1 - g2) * k;
        out[next] += g2 * k;
    }
}

/// Parameters `(s, t)` of the closest points of segments `p0 p1` and `q0 q1`.
pub fn closest_segment_params(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> (f64, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    if a == 0.0 && e == 0.0 {
        return (0.0, 0.0);
    }
    if a == 0.0 {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e == 0.0 {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

/// Calls `f(i, j)` for every pair of segments that share no bead, where
/// segment `i` joins beads `i` and `i + 1` (cyclically).
fn for_each_segment_pair(n: usize, mut f: impl FnMut(usize, usize)) {
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            f(i, j);
        }
    }
}

/// Overlap of the capsules around segments `i` and `j`, with the closest
/// points' parameters and the unit separation direction from `j` to `i`.
fn capsule_contact(points: &[Vec3], i: usize, j: usize, contact: f64) -> Option<(f64, f64, f64, Vec3)> {
    let n = points.len();
    let (p0, p1) = (&points[i], &points[(i + 1) % n]);
    let (q0, q1) = (&points[j], &points[(j + 1) % n]);
    // Cheap reject on bounding spheres around segment midpoints.
    let reach = 0.5 * ((p1 - p0).norm() + (q1 - q0).norm()) + contact;
    if ((p0 + p1) - (q0 + q1)).norm_squared() > 4.0 * reach * reach {
        return None;
    }
    let (s, t) = closest_segment_params(p0, p1, q0, q1);
    let d = (p0 + (p1 - p0) * s) - (q0 + (q1 - q0) * t);
    let dist = d.norm();
    if dist >= contact || dist == 0.0 {
        return None;
    }
    Some((contact - dist, s, t, d / dist))
}

/// Smallest distance between segments that share no bead.
pub fn min_segment_separation(points: &[Vec3]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for_each_segment_pair(n, |i, j| {
        let (p0, p1) = (&points[i], &points[(i + 1) % n]);
        let (q0, q1) = (&points[j], &points[(j + 1) % n]);
        let (s, t) = closest_segment_params(p0, p1, q0, q1);
        best = best.min(((p0 + (p1 - p0) * s) - (q0 + (q1 - q0) * t)).norm());
    });
    best
}

/// Penalty repulsion between the capsules (radius `bead_radius`) around
/// segments that share no bead. Each contact force is split between a
/// segment's two beads by the closest point's position along it.
pub fn add_collision_forces(points: &[Vec3], params: &SimParams, out: &mut [Vec3]) {
    let n = points.len();
    let contact = 2.0 * params.bead_radius;
    let kc = params.collision_stiffness();
    for_each_segment_pair(n, |i, j| {
        if let Some((overlap, s, t, dir)) = capsule_contact(points, i, j, contact) {
            let f = dir * (kc * overlap);
            out[i] += f * (1.0 - s);
            out[(i + 1) % n] += f * s;
            out[j] -= f * (1.0 - t);
            out[(j + 1) % n] -= f * t;
        }
    });
}

/// Stretch, bending and collision forces; these sum to zero over the rope.
pub fn conservative_forces(points: &[Vec3], params: &SimParams) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); points.len()];
    add_stretch_forces(points, params, &mut out);
    add_bending_forces(points, params, &mut out);
    add_collision_forces(points, params, &mut out);
    out
}

/// All internal forces including drag.
pub fn internal_forces(state: &RopeState, params: &SimParams) -> Vec<Vec3> {
    let mut out = conservative_forces(state.positions.points(), params);
    for (f, v) in out.iter_mut().zip(&state.velocities) {
        *f -= v * params.c_drag;
    }
    out
}

/// Potential energy of the conservative terms (J).
pub fn potential_energy(points: &[Vec3], params: &SimParams) -> f64 {
    let n = points.len();
    let kc = params.collision_stiffness();
    let contact = 2.0 * params.bead_radius;
    let mut e = 0.0;
    for i in 0..n {
        let d2 = points[(i + 1) % n] - points[i];
        let stretch = d2.norm() - REST_LENGTH;
        e += 0.5 * params.k_stretch * stretch * stretch;
        let d1 = points[i] - points[(i + n - 1) % n];
        let (l1, l2) = (d1.norm(), d2.norm());
        if l1 > 0.0 && l2 > 0.0 {
            e += params.k_bend * (1.0 - d1.dot(&d2) / (l1 * l2));
        }
    }
    for_each_segment_pair(n, |i, j| {
        if let Some((overlap, ..)) = capsule_contact(points, i, j, contact) {
            e += 0.5 * kc * overlap * overlap;
        }
    });
    e
}

pub fn total_energy(state: &RopeState, params: &SimParams) -> f64 {
    state.kinetic_energy(params) + potential_energy(state.positions.points(), params)
}

/// Advances one environment step: `frame_skip * substeps_per_frame` semi-implicit
/// Euler substeps, holding `applied_force` on the grasped bead throughout.
pub fn step_frame(
    state: &RopeState,
    grasp_index: usize,
    applied_force: Vec3,
    params: &SimParams,
) -> Result<RopeState, PhysicsError> {
    let n = state.positions.len();
    if grasp_index >= n {
        return Err(PhysicsError::GraspOutOfRange { index: grasp_index, beads: n });
    }
    if state.velocities.len() != n {
        return Err(PhysicsError::LengthMismatch {
            positions: n,
            velocities: state.velocities.len(),
        });
    }
    let mut x = state.positions.points().to_vec();
    let mut v = state.velocities.clone();
    let mut f = vec![Vec3::zeros(); n];
    let inv_m = 1.0 / params.mass;
    for _ in 0..params.substeps_per_step() {
        f.iter_mut().for_each(|fi| *fi = Vec3::zeros());
        add_stretch_forces(&x, params, &mut f);
        add_bending_forces(&x, params, &mut f);
        add_collision_forces(&x, params, &mut f);
        f[grasp_index] += applied_force;
        for i in 0..n {
            let force = f[i] - v[i] * params.c_drag;
            v[i] += force * (params.dt * inv_m);
            x[i] += v[i] * params.dt;
        }
        if let Some(bead) = (0..n).find(|&i| diverged(&x[i]) || diverged(&v[i])) {
            return Err(PhysicsError::SimulationDiverged { bead });
        }
    }
    Ok(RopeState {
        positions: KnotConfiguration::from_points_unchecked(x),
        velocities: v,
    })
}

fn diverged(p: &Vec3) -> bool {
    p.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_LIMIT)
}

/// Adds i.i.d. uniform noise in `[-scale, scale]` to every coordinate. Draws
/// that break the validity bounds are retried; after the last failed try the
/// input is returned unchanged.
pub fn apply_reset_noise(config: &KnotConfiguration, scale: f64, rng: &mut impl Rng) -> KnotConfiguration {
    if scale <= 0.0 {
        return config.clone();
    }
    for _ in 0..RESET_NOISE_TRIES {
        let noisy = config.map_points(|p| {
            p + Vec3::new(
                rng.random_range(-scale..=scale),
                rng.random_range(-scale..=scale),
                rng.random_range(-scale..=scale),
            )
        });
        if noisy.is_valid() {
            return noisy;
        }
    }
    config.clone()
}
