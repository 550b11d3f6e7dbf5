mod common;

use knotsim::gauss::compute_gauss_code;
use knotsim::geometry::WorldState;
use knotsim::render::render_observation;
use knotsim::KnotConfiguration;

#[test]
fn fixture_files_match_their_builders() {
    for (name, config) in common::all_fixtures() {
        let stored = KnotConfiguration::load(common::fixtures_dir().join(format!("{name}.knot"))).unwrap();
        assert_eq!(stored, config, "{name}");
    }
}

#[test]
fn fixtures_render_to_golden_images() {
    for (name, _) in common::all_fixtures() {
        let config = KnotConfiguration::load(common::fixtures_dir().join(format!("{name}.knot"))).unwrap();
        let obs = render_observation(&WorldState::at_rest(config.clone(), config));
        assert_eq!(obs.shape(), [3, 128, 256]);
        let golden = std::fs::read(common::fixtures_dir().join(format!("{name}.png"))).unwrap();
        assert!(obs.to_png() == golden, "{name} differs from its golden image");
    }
}

#[test]
fn fixture_codes() {
    let dir = common::fixtures_dir();
    let code = |n: &str| compute_gauss_code(&KnotConfiguration::load(dir.join(n)).unwrap()).unwrap().to_string();
    assert_eq!(code("loop.knot"), "[]");
    assert_eq!(code("cross1.knot"), "[1+,1-]");
    assert_eq!(code("tie2_a.knot"), "[1+,1-,2+,2-]");
    assert_eq!(code("strands.knot"), "[1-,1+]");
}

#[test]
fn identical_ropes_give_identical_panes() {
    let c = common::two_kinks();
    let obs = render_observation(&WorldState::at_rest(c.clone(), c));
    for ch in 0..3 {
        for r in 0..128 {
            for col in 0..128 {
                assert_eq!(obs.get(ch, r, col), obs.get(ch, r, col + 128));
            }
        }
    }
}
