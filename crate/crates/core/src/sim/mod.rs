//! Headless exploration simulator: synthetic worlds, a noisy sensor and the
//! closed planning loop.

pub mod config;
pub mod env;
pub mod episode;
pub mod mapper;
pub mod scenes;
pub mod sensor;
pub mod study;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::Config;
pub use env::{generate_env, EnvProfile, Environment};
pub use episode::{run_episode, run_episode_in, Episode, MetricsRow, Outcome};
pub use mapper::{mapper_registry, MapSpec, Mapper};
pub use sensor::{sense, Pose, SensorSpec};
pub use study::{srle_study, StudyRow};

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    Sensor = 2,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
