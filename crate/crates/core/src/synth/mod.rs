//! Procedural fixtures: rendered tube scenes, analytic disparity maps and
//! seeded weight sets. Used by tests, the acceptance harness and the CLI's
//! self-check paths; everything is deterministic in its seed.

mod disparity;
mod scene;
mod weights;

pub use disparity::{ground_plane_disparity, tube_on_ground_disparity, world_ground_disparity};
pub use scene::{random_scene, render_tube, Scene, TubeSpec};
pub use weights::{fixture_detector_weights, random_weights, FixtureParams};

/// Seeded generator used by every fixture.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
