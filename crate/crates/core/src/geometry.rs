//! Rope geometry: closed bead loops, actions and the action-to-world mapping.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Rest distance between consecutive beads, in meters.
pub const REST_LENGTH: f64 = 0.05;

/// Default number of beads in a rope.
pub const DEFAULT_BEADS: usize = 40;

/// Smallest bead count accepted for a configuration.
pub const MIN_BEADS: usize = 8;

/// Half-width of the grasp workspace cube, centered on the rope's center of mass.
pub const WORKSPACE_HALF_EXTENT: f64 = 1.0;

const MAGIC: &[u8; 4] = b"KNOT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("configuration has {0} beads, at least {MIN_BEADS} required")]
    TooFewBeads(usize),
    #[error("bead {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("distance {distance:.6} between beads {index} and its successor is outside [{min:.4}, {max:.4}]")]
    NeighborDistance {
        index: usize,
        distance: f64,
        min: f64,
        max: f64,
    },
    #[error("bad configuration file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Ordered closed loop of bead positions. Bead `len-1` connects back to bead 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotConfiguration {
    points: Vec<Vec3>,
}

impl KnotConfiguration {
    /// Builds a configuration, checking every validity bound.
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        let config = Self { points };
        config.validate()?;
        Ok(config)
    }

    /// Wraps points without validation; used for transient physics states and
    /// oracle inputs where the bounds are checked elsewhere.
    pub fn from_points_unchecked(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    /// Planar circle of `beads` beads in the z=0 plane with chord length equal to
    /// [`REST_LENGTH`], bead 0 on the +x axis, beads ordered counter-clockwise.
    pub fn circle(beads: usize, center: Vec3) -> Self {
        let radius = REST_LENGTH / (2.0 * (std::f64::consts::PI / beads as f64).sin());
        let points = (0..beads)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / beads as f64;
                center + Vec3::new(radius * theta.cos(), radius * theta.sin(), 0.0)
            })
            .collect();
        Self { points }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.points.len();
        if n < MIN_BEADS {
            return Err(GeometryError::TooFewBeads(n));
        }
        if let Some(index) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite { index });
        }
        let (min, max) = neighbor_bounds();
        for i in 0..n {
            let distance = (self.points[(i + 1) % n] - self.points[i]).norm();
            if !(min..=max).contains(&distance) {
                return Err(GeometryError::NeighborDistance {
                    index: i,
                    distance,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    /// Applies `f` to every bead position.
    pub fn map_points(&self, f: impl FnMut(&Vec3) -> Vec3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }

    /// Distance between bead `i` and bead `i+1` (cyclic).
    pub fn neighbor_distance(&self, i: usize) -> f64 {
        let n = self.points.len();
        (self.points[(i + 1) % n] - self.points[i]).norm()
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let mut buf = Vec::with_capacity(12 + self.points.len() * 24);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for p in &self.points {
            for c in p.iter() {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        w.write_all(&buf)
    }

    /// Reads one configuration in the `KNOT` little-endian binary format and
    /// validates it.
    pub fn read_from(mut r: impl Read) -> Result<Self, GeometryError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(GeometryError::Format("missing KNOT magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(GeometryError::Format(format!("unsupported version {version}")));
        }
        let count = word(8) as usize;
        let expected = 12 + count * 24;
        if bytes.len() != expected {
            return Err(GeometryError::Format(format!(
                "expected {expected} bytes for {count} beads, found {}",
                bytes.len()
            )));
        }
        let coord = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let points = (0..count)
            .map(|i| {
                let at = 12 + i * 24;
                Vec3::new(coord(at), coord(at + 8), coord(at + 16))
            })
            .collect();
        Self::new(points)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Samples a smooth random closed curve with `beads` beads spaced at
    /// [`REST_LENGTH`] along the curve. Low-order Fourier coefficients give
    /// a handful of projected self-crossings. Retries until the result is valid.
    pub fn random_smooth(beads: usize, rng: &mut impl Rng) -> Self {
        const HARMONICS: usize = 3;
        const DENSE: usize = 1024;
        loop {
            let mut coeffs = [[[0.0f64; 2]; HARMONICS]; 3];
            for axis in coeffs.iter_mut() {
                for (k, pair) in axis.iter_mut().enumerate() {
                    for c in pair.iter_mut() {
                        *c = rng.random_range(-1.0..1.0) / (k + 1) as f64;
                    }
                }
            }
            let dense: Vec<Vec3> = (0..DENSE)
                .map(|s| {
                    let theta = 2.0 * std::f64::consts::PI * s as f64 / DENSE as f64;
                    let mut p = Vec3::zeros();
                    for (axis, harmonics) in coeffs.iter().enumerate() {
                        for (k, [a, b]) in harmonics.iter().enumerate() {
                            let m = (k + 1) as f64;
                            p[axis] += a * (m * theta).cos() + b * (m * theta).sin();
                        }
                    }
                    p
                })
                .collect();
            let config = resample_closed(&dense, beads);
            if config.is_valid() {
                return config;
            }
        }
    }
}

/// Resamples a dense closed polyline to `beads` points equally spaced in arc
/// length, scaled so the total length is `beads * REST_LENGTH`. The first
/// output point is the first input point.
pub fn resample_closed(dense: &[Vec3], beads: usize) -> KnotConfiguration {
    let n = dense.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for i in 0..n {
        let step = (dense[(i + 1) % n] - dense[i]).norm();
        cumulative.push(cumulative[i] + step);
    }
    let total = cumulative[n];
    let scale = beads as f64 * REST_LENGTH / total;
    let mut points = Vec::with_capacity(beads);
    let mut seg = 0;
    for k in 0..beads {
        let target = total * k as f64 / beads as f64;
        while cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { (target - cumulative[seg]) / span } else { 0.0 };
        let p = dense[seg] + (dense[(seg + 1) % n] - dense[seg]) * t;
        points.push(p * scale);
    }
    KnotConfiguration::from_points_unchecked(points)
}

/// Allowed range for consecutive bead distances.
pub fn neighbor_bounds() -> (f64, f64) {
    (0.25 * REST_LENGTH, 4.0 * REST_LENGTH)
}

/// Normalized action: grasp location and force, both in `[-1, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub location: [f64; 3],
    pub force: [f64; 3],
}

impl Action {
    /// Builds an action, clamping every component into `[-1, 1]`. NaN maps to 0.
    pub fn new(location: [f64; 3], force: [f64; 3]) -> Self {
        Self {
            location: location.map(clamp_unit),
            force: force.map(clamp_unit),
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new([a[0], a[1], a[2]], [a[3], a[4], a[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [x, y, z] = self.location;
        let [fx, fy, fz] = self.force;
        [x, y, z, fx, fy, fz]
    }

    pub fn zero() -> Self {
        Self::new([0.0; 3], [0.0; 3])
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Workspace {
    pub fn centered(center: Vec3, half_extent: f64) -> Self {
        let h = Vec3::repeat(half_extent);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Maps a point of `[-1,1]^3` affinely onto the box.
    pub fn from_unit(&self, u: [f64; 3]) -> Vec3 {
        let half = (self.max - self.min) * 0.5;
        let c = self.center();
        Vec3::new(c.x + u[0] * half.x, c.y + u[1] * half.y, c.z + u[2] * half.z)
    }

    /// Inverse of [`Workspace::from_unit`].
    pub fn to_unit(&self, p: &Vec3) -> [f64; 3] {
        let half = (self.max - self.min) * 0.5;
        let c = self.center();
        [(p.x - c.x) / half.x, (p.y - c.y) / half.y, (p.z - c.z) / half.z]
    }
}

/// Index of the bead closest to `p`; ties go to the smallest index.
pub fn nearest_key_point(config: &KnotConfiguration, p: &Vec3) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, q) in config.points().iter().enumerate() {
        let d2 = (q - p).norm_squared();
        if d2 < best_d2 {
            best = i;
            best_d2 = d2;
        }
    }
    best
}

/// Converts a normalized action to a world grasp point (m) and force (N).
pub fn denormalize_action(action: &Action, workspace: &Workspace, f_max: f64) -> (Vec3, Vec3) {
    let grasp = workspace.from_unit(action.location);
    let [fx, fy, fz] = action.force;
    (grasp, Vec3::new(fx, fy, fz) * f_max)
}

/// Unweighted mean of the bead positions.
pub fn center_of_mass(config: &KnotConfiguration) -> Vec3 {
    let sum = config.points().iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / config.len() as f64
}

/// Pair of rope configurations plus the manipulated rope's velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub manipulated: KnotConfiguration,
    pub goal: KnotConfiguration,
    pub velocities: Vec<Vec3>,
    pub step_index: u32,
}

impl WorldState {
    pub fn at_rest(manipulated: KnotConfiguration, goal: KnotConfiguration) -> Self {
        let velocities = vec![Vec3::zeros(); manipulated.len()];
        Self {
            manipulated,
            goal,
            velocities,
            step_index: 0,
        }
    }
}
