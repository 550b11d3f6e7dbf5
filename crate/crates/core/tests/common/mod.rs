//! Fixture geometry shared by the integration tests and the fixture writer.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

pub mod checks;
pub mod oracle;

use knotsim::geometry::{resample_closed, KnotConfiguration, Vec3, DEFAULT_BEADS};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn pool_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("pool")
}

pub fn simple_loop() -> KnotConfiguration {
    KnotConfiguration::circle(DEFAULT_BEADS, Vec3::zeros())
}

/// 12-bead loop whose strand 2→3 passes over strand 8→9 at a right angle.
pub fn single_crossing() -> KnotConfiguration {
    let xy = [
        (0.27, 0.06),
        (0.15, 0.12),
        (0.05, 0.05),
        (-0.05, -0.05),
        (-0.15, -0.12),
        (-0.27, -0.06),
        (-0.27, 0.06),
        (-0.15, 0.12),
        (-0.05, 0.05),
        (0.05, -0.05),
        (0.15, -0.12),
        (0.27, -0.06),
    ];
    let pts = xy
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let z = match i {
                2 | 3 => 0.1,
                8 | 9 => -0.1,
                _ => 0.0,
            };
            Vec3::new(x, y, z)
        })
        .collect();
    KnotConfiguration::new(pts).unwrap()
}

/// Loop with two kinks, each entered over and left under: `[1+,1-,2+,2-]`.
///
/// The planar curve is e^{iθ} + ρ e^{3iθ}, which loops where the two terms
/// oppose (θ = π/2, 3π/2); height h·sin 2θ falls through both loops.
pub fn two_kinks() -> KnotConfiguration {
    let (rho, h) = (0.6, 0.25);
    let dense: Vec<Vec3> = (0..4096)
        .map(|k| {
            let t = TAU * k as f64 / 4096.0;
            Vec3::new(
                t.cos() + rho * (3.0 * t).cos(),
                t.sin() + rho * (3.0 * t).sin(),
                h * (2.0 * t).sin(),
            )
        })
        .collect();
    // Start away from a loop so bead 0 is on the outer arc.
    let start = dense.len() / 8;
    let rotated: Vec<Vec3> = dense[start..].iter().chain(&dense[..start]).copied().collect();
    resample_closed(&rotated, DEFAULT_BEADS)
}

/// Figure-eight (lemniscate of Gerono) whose two strands cross at right
/// angles, one above the other by `gap`.
pub fn perpendicular_strands(gap: f64) -> KnotConfiguration {
    let dense: Vec<Vec3> = (0..4096)
        .map(|k| {
            // Offset so the crossing falls between beads.
            let t = TAU * k as f64 / 4096.0 + PI / 2.0 + 0.03;
            Vec3::new(t.sin(), t.sin() * t.cos(), 0.5 * gap * t.cos())
        })
        .collect();
    resample_closed(&dense, DEFAULT_BEADS)
}

/// Vertical gap used for the shipped strands fixture.
pub const STRANDS_GAP: f64 = 0.6;

pub fn all_fixtures() -> Vec<(&'static str, KnotConfiguration)> {
    vec![
        ("loop", simple_loop()),
        ("cross1", single_crossing()),
        ("tie2_a", two_kinks()),
        ("strands", perpendicular_strands(STRANDS_GAP)),
    ]
}
