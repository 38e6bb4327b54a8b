//! Deterministic synthetic robot: terrain courses, a crawl gait with drifting
//! odometry, and class-conditioned touchdown signals.

mod course;
mod signal;
mod walk;

use thiserror::Error;

pub use course::{
    generate_course, Course, CourseKind, CourseSpec, CHEVRON_HEIGHT, PLATFORM_HEIGHT, RAMP_DEG,
    RAMP_LENGTH, RIGHT_WALL_Y, TILE_SIZE, WALL_X,
};
pub use signal::{signal_template, synth_force_signal, SignalSpec};
pub use walk::{
    probe_scenario, read_walk_log, simulate_walk, write_walk_log, FootRecord, GaitParams,
    NoiseSpec, ProbeScript, StepRecord, WalkLog, SWING_ORDER,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("position ({x:.3}, {y:.3}) is off the map")]
    OffMap { x: f64, y: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("walk log line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Map(#[from] crate::maps::MapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
