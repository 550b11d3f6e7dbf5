//! A knot-manipulation environment: bead-chain rope physics, a Gauss-code goal
//! oracle, software-rendered image observations and goal-conditioned tasks
//! graded by crossing number.

pub mod gauss;
pub mod geometry;
pub mod harness;
pub mod env;
pub mod physics;
pub mod pool;
pub mod render;
pub mod vec_env;

pub use gauss::{GaussCode, GaussError};
pub use geometry::{Action, KnotConfiguration, Vec3, WorldState};
pub use env::{make, EnvConfig, KnotEnv, Split, StepInfo, StepResult, Task, TaskSpec};
pub use physics::{RopeState, SimParams};
pub use pool::ConfigPool;
pub use render::Observation;
pub use vec_env::VecEnv;
