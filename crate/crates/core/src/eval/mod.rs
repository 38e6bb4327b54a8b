//! Trajectory error metrics and the end-to-end experiment runner.

mod experiment;

use std::path::Path;

use thiserror::Error;

use crate::geom::Pose;
use crate::maps::{load_map, MapError, MapFile};
use crate::mcl::PriorMap;

pub use experiment::{
    build_course, class_probabilities, localize_log, run_experiment, simulate, step_inputs,
    train_signal_classifier, write_error_csv, write_report_csv, ClassifierSection, CourseSection,
    ErrorRow, EvalReport, ExperimentConfig, LocalizationRun, ReportRow, REPORT_HEADER,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectories differ in length ({truth} vs {est})")]
    LengthMismatch { truth: usize, est: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Filter(#[from] crate::mcl::FilterError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Translation of `truth^-1 * est` for one pose pair.
pub fn translation_error(truth: &Pose, est: &Pose) -> f64 {
    truth.inverse().compose(est).position.norm()
}

/// Mean absolute translation error without any trajectory alignment.
pub fn ate(truth: &[Pose], est: &[Pose]) -> Result<f64, EvalError> {
    if truth.len() != est.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            est: est.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = truth
        .iter()
        .zip(est)
        .map(|(t, e)| translation_error(t, e))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Loads `elevation.hmap` plus optional `classes.cmap` and `cloud.xyz` from a directory.
pub fn load_prior_map(dir: &Path) -> Result<PriorMap, EvalError> {
    let mut map = PriorMap::default();
    match load_map(dir.join("elevation.hmap"))? {
        MapFile::Elevation(e) => map.elevation = Some(e),
        _ => {
            return Err(EvalError::Config(
                "elevation.hmap is not an elevation map".into(),
            ))
        }
    }
    let classes = dir.join("classes.cmap");
    if classes.exists() {
        match load_map(classes)? {
            MapFile::Class(c) => {
                c.check_aligned(map.elevation.as_ref().expect("loaded above"))?;
                map.classes = Some(c);
            }
            _ => return Err(EvalError::Config("classes.cmap is not a class map".into())),
        }
    }
    let cloud = dir.join("cloud.xyz");
    if cloud.exists() {
        match load_map(cloud)? {
            MapFile::Cloud(c) => map.cloud = Some(c),
            _ => return Err(EvalError::Config("cloud.xyz is not a point cloud".into())),
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identical_trajectories_have_zero_error() {
        let t: Vec<Pose> = (0..5)
            .map(|i| Pose::from_xyz_yaw(i as f64, 0.5, 0.1, 0.3 * i as f64))
            .collect();
        assert_eq!(ate(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn world_shift_gives_shift() {
        let t: Vec<Pose> = (0..4)
            .map(|i| Pose::from_translation(i as f64, 0.0, 0.0))
            .collect();
        let e: Vec<Pose> = t
            .iter()
            .map(|p| Pose::from_translation(p.position.x + 0.1, 0.0, 0.0))
            .collect();
        assert!((ate(&t, &e).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rotated_truth_keeps_norm() {
        let t = Pose::from_xyz_yaw(1.0, 2.0, 0.0, FRAC_PI_2);
        let e = Pose::from_xyz_yaw(1.1, 2.0, 0.0, FRAC_PI_2);
        // trans(T^-1 T_hat) = R^T (0.1, 0, 0) = (0, -0.1, 0)
        let rel = t.inverse().compose(&e).position;
        assert!((rel.x).abs() < 1e-12 && (rel.y + 0.1).abs() < 1e-12);
        assert!((translation_error(&t, &e) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let t = vec![Pose::identity(); 3];
        assert!(matches!(
            ate(&t, &t[..2]),
            Err(EvalError::LengthMismatch { truth: 3, est: 2 })
        ));
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.1) + 0.1).abs() < 1e-15);
    }
}
