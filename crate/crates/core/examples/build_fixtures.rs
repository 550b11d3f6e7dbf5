//! Writes the test fixtures and their golden renders into tests/fixtures.
//! Golden images are frozen: rerun only when rendering changes on purpose.

#[path = "../tests/common/mod.rs"]
mod common;

use knotsim::geometry::WorldState;
use knotsim::render::render_observation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = common::fixtures_dir();
    std::fs::create_dir_all(&dir)?;
    for (name, config) in common::all_fixtures() {
        config.save(dir.join(format!("{name}.knot")))?;
        let state = WorldState::at_rest(config.clone(), config);
        render_observation(&state).save_png(dir.join(format!("{name}.png")))?;
        println!("wrote {name}");
    }
    Ok(())
}
