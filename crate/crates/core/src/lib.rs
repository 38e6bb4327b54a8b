//! Proprioceptive haptic localization for a quadruped.
//!
//! A particle filter fuses leg odometry with foot contacts scored against a prior
//! map: elevation, per-cell terrain class, or a 3D point cloud. The crate also
//! carries a terrain classifier for touchdown force signals, a deterministic
//! simulator that replaces the robot, and the evaluation pipeline.

pub mod classifier;
pub mod eval;
pub mod geom;
pub mod maps;
pub mod mcl;
pub mod measurement;
pub mod sim;

pub use classifier::{BaselineModel, ClassDistribution, StepSignal, TerrainNet};
pub use eval::{ate, run_experiment, EvalReport, ExperimentConfig};
pub use geom::{FootLabel, FootOffset, Pose, PoseCovariance, Trajectory};
pub use maps::{ClassGrid, ElevationGrid, GridGeometry, KdTree, PointCloudMap};
pub use mcl::{FilterConfig, FilterState, LocalizationMode, PriorMap, StepInput};
pub use measurement::{ContactKind, ContactMeasurement, LikelihoodConfig};
pub use sim::{Course, CourseKind, NoiseSpec, WalkLog};
