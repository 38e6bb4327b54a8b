use super::*;
use crate::geom::{FootLabel, FootOffset};
use crate::maps::GridGeometry;
use nalgebra::Vector2;

const NOMINAL: [(FootLabel, f64, f64); 4] = [
    (FootLabel::LF, 0.3, 0.2),
    (FootLabel::RF, 0.3, -0.2),
    (FootLabel::LH, -0.3, 0.2),
    (FootLabel::RH, -0.3, -0.2),
];

fn contacts_for(truth: &Pose, map: &ElevationGrid) -> Vec<ContactMeasurement> {
    NOMINAL
        .iter()
        .map(|&(foot, dx, dy)| {
            let planar = truth.transform_point(&Vector3::new(dx, dy, 0.0));
            let h = map
                .elevation_at(&Vector2::new(planar.x, planar.y))
                .unwrap_or(0.0);
            let world = Vector3::new(planar.x, planar.y, h);
            let local = truth.inverse().transform_point(&world);
            ContactMeasurement::new(
                FootOffset {
                    foot,
                    offset: local,
                },
                ContactKind::Elevation,
            )
        })
        .collect()
}

fn staircase() -> ElevationGrid {
    let g = GridGeometry::new(120, 120, 0.05, Vector2::zeros()).unwrap();
    ElevationGrid::from_fn(g, |x, y| {
        0.08 * (x / 0.35).floor()
            + 0.05 * (y / 0.25).floor()
            + 0.03 * ((x * 7.0).sin() > 0.3) as u8 as f64
    })
}

fn flat() -> ElevationGrid {
    let g = GridGeometry::new(200, 200, 0.05, Vector2::zeros()).unwrap();
    ElevationGrid::new(g, vec![0.0; g.len()]).unwrap()
}

fn map_of(e: ElevationGrid) -> PriorMap {
    PriorMap {
        elevation: Some(e),
        ..Default::default()
    }
}

fn cfg(n: usize) -> FilterConfig {
    FilterConfig {
        particles: n,
        ..Default::default()
    }
}

#[test]
fn init_with_zero_covariance() {
    let mean = Pose::from_xyz_yaw(1.0, 2.0, 0.5, 0.3);
    let s = FilterState::init(mean, &PoseCovariance::zeros(), cfg(50), 1).unwrap();
    assert!(s.particles().iter().all(|p| p.pose == mean));
    for w in s.weights() {
        assert!((w - 1.0 / 50.0).abs() < 1e-15);
    }
    assert_eq!(s.trajectory().len(), 1);
}

#[test]
fn init_spread_matches_prior() {
    let cov = PoseCovariance::from_std_devs([0.2, 0.2, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let s = FilterState::init(Pose::identity(), &cov, cfg(500), 9).unwrap();
    let xs: Vec<f64> = s.particles().iter().map(|p| p.pose.position.x).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((sd - 0.2).abs() < 0.02, "{sd}");
}

#[test]
fn init_is_deterministic_and_validated() {
    let cov = PoseCovariance::from_std_devs([0.2, 0.2, 0.01, 0.0, 0.0, 0.05]).unwrap();
    let a = FilterState::init(Pose::identity(), &cov, cfg(100), 4).unwrap();
    let b = FilterState::init(Pose::identity(), &cov, cfg(100), 4).unwrap();
    assert_eq!(a.particles(), b.particles());
    assert!(matches!(
        FilterState::init(Pose::identity(), &cov, cfg(0), 4),
        Err(FilterError::NoParticles)
    ));
}

#[test]
fn single_particle_follows_dead_reckoning() {
    let map = map_of(flat());
    let start = Pose::from_xyz_yaw(3.0, 3.0, 0.5, 0.2);
    let mut s = FilterState::init(start, &PoseCovariance::zeros(), cfg(1), 0).unwrap();
    let mut dr = start;
    let mut truth = start;
    for k in 0..25 {
        let inc = Pose::from_xyz_yaw(0.05, 0.01 * (k % 3) as f64, 0.0, 0.02);
        truth = truth.compose(&inc);
        dr = dr.compose(&inc);
        let input = StepInput {
            odom_increment: inc,
            odom_cov: PoseCovariance::zeros(),
            contacts: contacts_for(&truth, map.elevation.as_ref().unwrap()),
        };
        let est = s.step(&input, &map, LocalizationMode::Geometric).unwrap();
        assert_eq!(est.pose, dr);
    }
}

#[test]
fn tracks_truth_on_staircase() {
    let map = map_of(staircase());
    let mut errors = Vec::new();
    for seed in 0..5 {
        let start = Pose::from_xyz_yaw(1.5, 1.5, 0.5, 0.0);
        let prior = PoseCovariance::from_std_devs([0.1, 0.1, 0.02, 0.0, 0.0, 0.0]).unwrap();
        let mut s = FilterState::init(start, &prior, cfg(500), seed).unwrap();
        let mut truth = start;
        let inc = Pose::from_xyz_yaw(0.05, 0.03, 0.0, 0.0);
        let mut last = None;
        for _ in 0..10 {
            truth = truth.compose(&inc);
            let input = StepInput {
                odom_increment: inc,
                odom_cov: PoseCovariance::zeros(),
                contacts: contacts_for(&truth, map.elevation.as_ref().unwrap()),
            };
            last = Some(s.step(&input, &map, LocalizationMode::Geometric).unwrap());
        }
        let est = last.unwrap();
        errors.push((est.pose.position.xy() - truth.position.xy()).norm());
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(mean < 0.10, "{errors:?}");
}

#[test]
fn flat_map_constrains_only_z() {
    let map = map_of(flat());
    let start = Pose::from_xyz_yaw(5.0, 5.0, 0.5, 0.0);
    let prior = PoseCovariance::from_std_devs([0.0, 0.0, 0.02, 0.0, 0.0, 0.0]).unwrap();
    let mut s = FilterState::init(start, &prior, cfg(500), 3).unwrap();
    let noise = PoseCovariance::from_std_devs([0.01, 0.01, 0.002, 0.0, 0.0, 0.0]).unwrap();
    let mut truth = start;
    let inc = Pose::from_translation(0.05, 0.0, 0.0);
    let mut spreads = Vec::new();
    for _ in 0..40 {
        truth = truth.compose(&inc);
        let input = StepInput {
            odom_increment: inc,
            odom_cov: noise,
            contacts: contacts_for(&truth, map.elevation.as_ref().unwrap()),
        };
        let est = s.step(&input, &map, LocalizationMode::Geometric).unwrap();
        assert!((est.pose.position.z - truth.position.z).abs() < 0.02);
        spreads.push(est.std_x.hypot(est.std_y));
    }
    assert!(
        spreads[4] < spreads[14] && spreads[14] < spreads[39],
        "{spreads:?}"
    );
}

#[test]
fn weights_stay_normalized() {
    let map = map_of(staircase());
    let prior = PoseCovariance::from_std_devs([0.2, 0.2, 0.05, 0.01, 0.01, 0.05]).unwrap();
    let start = Pose::from_xyz_yaw(2.0, 2.0, 0.5, 0.1);
    let mut s = FilterState::init(start, &prior, cfg(300), 8).unwrap();
    let noise = PoseCovariance::from_std_devs([0.005, 0.005, 0.002, 0.001, 0.001, 0.003]).unwrap();
    let mut truth = start;
    for k in 0..30 {
        let inc = Pose::from_xyz_yaw(0.04, 0.0, 0.0, 0.01);
        truth = truth.compose(&inc);
        let input = StepInput {
            odom_increment: inc,
            odom_cov: noise,
            contacts: contacts_for(&truth, map.elevation.as_ref().unwrap()),
        };
        s.step(&input, &map, LocalizationMode::Geometric).unwrap();
        let sum: f64 = s.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "step {k}: {sum}");
        let ess = s.ess();
        assert!((1.0 - 1e-9..=300.0 + 1e-9).contains(&ess));
        assert_eq!(s.trajectory().len(), k + 2);
    }
}

#[test]
fn resampling_degenerate_and_uniform() {
    let mut particles: Vec<Particle> = (0..10)
        .map(|i| Particle {
            pose: Pose::from_translation(i as f64, 0.0, 0.0),
            log_weight: f64::NEG_INFINITY,
        })
        .collect();
    particles[6].log_weight = 0.0;
    let mut s = FilterState::from_particles(particles, Pose::identity(), cfg(10), 1).unwrap();
    assert_eq!(s.ess(), 1.0);
    s.resample();
    assert!(s.particles().iter().all(|p| p.pose.position.x == 6.0));
    assert!((s.ess() - 10.0).abs() < 1e-9);
}

#[test]
fn bimodal_cloud_uses_dead_reckoning() {
    let mut particles = Vec::new();
    for i in 0..100 {
        let y = if i % 2 == 0 { 0.0 } else { 1.0 };
        particles.push(Particle {
            pose: Pose::from_xyz_yaw(2.0, y, 0.42, 0.5 * (i % 2) as f64),
            log_weight: 0.0,
        });
    }
    let last = Pose::from_xyz_yaw(1.0, 0.3, 0.4, 0.1);
    let s = FilterState::from_particles(particles, last, cfg(100), 1).unwrap();
    let inc = Pose::from_xyz_yaw(0.05, 0.0, 0.0, 0.01);
    let est = s.estimate(&inc);
    assert_eq!(est.branch, EstimateBranch::ZOnly);
    assert!((est.std_y - 0.5).abs() < 1e-12);
    let dr = last.compose(&inc);
    assert!((est.pose.position.x - dr.position.x).abs() < 1e-12);
    assert!((est.pose.position.y - dr.position.y).abs() < 1e-12);
    assert!((est.pose.yaw() - dr.yaw()).abs() < 1e-12);
    assert!((est.pose.position.z - 0.42).abs() < 1e-12);
    let jump = (est.pose.position.xy() - last.position.xy()).norm();
    assert!(jump <= inc.position.norm() + 1e-12);
}

#[test]
fn tight_cloud_gives_weighted_mean() {
    let mut particles = Vec::new();
    for i in 0..20 {
        let dx = 0.01 * ((i % 5) as f64 - 2.0) / 1.414;
        particles.push(Particle {
            pose: Pose::from_xyz_yaw(1.0 + dx, 2.0 - dx, 0.5, 0.2),
            log_weight: (1.0 + i as f64).ln(),
        });
    }
    let s = FilterState::from_particles(particles.clone(), Pose::identity(), cfg(20), 1).unwrap();
    let est = s.estimate(&Pose::identity());
    assert_eq!(est.branch, EstimateBranch::Full);
    let total: f64 = (1..=20).map(|v| v as f64).sum();
    let mut mean = Vector3::zeros();
    for (i, p) in particles.iter().enumerate() {
        mean += p.pose.position * ((i + 1) as f64 / total);
    }
    assert!((est.pose.position - mean).amax() < 1e-6);
    assert!((est.pose.yaw() - 0.2).abs() < 1e-9);
}

#[test]
fn identical_particles_estimate_exactly() {
    let p = Pose::from_xyz_rpy(1.0, -1.0, 0.3, 0.01, -0.02, 2.5);
    let particles = vec![
        Particle {
            pose: p,
            log_weight: 0.0
        };
        7
    ];
    let s = FilterState::from_particles(particles, Pose::identity(), cfg(7), 1).unwrap();
    let est = s.estimate(&Pose::identity());
    assert!((est.pose.position - p.position).amax() < 1e-12);
    assert!((est.pose.orientation.coords - p.orientation.coords).amax() < 1e-12);
}

#[test]
fn full_divergence_resets_weights() {
    let map = map_of(flat());
    let start = Pose::from_xyz_yaw(5.0, 5.0, 0.5, 0.0);
    let mut s = FilterState::init(start, &PoseCovariance::zeros(), cfg(20), 1).unwrap();
    // contacts claim the ground is a metre higher than the map says
    let contacts = contacts_for(
        &Pose::from_xyz_yaw(5.0, 5.0, -0.5, 0.0),
        map.elevation.as_ref().unwrap(),
    );
    let input = StepInput {
        odom_increment: Pose::identity(),
        odom_cov: PoseCovariance::zeros(),
        contacts,
    };
    s.step(&input, &map, LocalizationMode::Geometric).unwrap();
    assert_eq!(s.divergence_events(), 1);
    assert!((s.ess() - 20.0).abs() < 1e-9);
}

#[test]
fn rejects_incompatible_inputs() {
    let map = map_of(flat());
    let mut s = FilterState::init(Pose::identity(), &PoseCovariance::zeros(), cfg(5), 1).unwrap();
    let empty = StepInput {
        odom_increment: Pose::identity(),
        odom_cov: PoseCovariance::zeros(),
        contacts: vec![],
    };
    assert!(matches!(
        s.step(&empty, &map, LocalizationMode::Geometric),
        Err(FilterError::NoContacts)
    ));
    let input = StepInput {
        contacts: contacts_for(&Pose::identity(), map.elevation.as_ref().unwrap()),
        ..empty
    };
    assert!(matches!(
        s.step(&input, &map, LocalizationMode::GeometricClass),
        Err(FilterError::MissingLayer { .. })
    ));
}

#[test]
fn stepping_is_deterministic() {
    let run = || {
        let map = map_of(staircase());
        let prior = PoseCovariance::from_std_devs([0.2, 0.2, 0.05, 0.01, 0.01, 0.05]).unwrap();
        let start = Pose::from_xyz_yaw(2.0, 2.0, 0.5, 0.1);
        let mut s = FilterState::init(start, &prior, cfg(200), 77).unwrap();
        let noise =
            PoseCovariance::from_std_devs([0.005, 0.005, 0.002, 0.001, 0.001, 0.003]).unwrap();
        let mut truth = start;
        for _ in 0..15 {
            let inc = Pose::from_xyz_yaw(0.04, 0.01, 0.0, -0.01);
            truth = truth.compose(&inc);
            let input = StepInput {
                odom_increment: inc,
                odom_cov: noise,
                contacts: contacts_for(&truth, map.elevation.as_ref().unwrap()),
            };
            s.step(&input, &map, LocalizationMode::Geometric).unwrap();
        }
        s.trajectory().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn mode_names_round_trip() {
    for m in LocalizationMode::ALL {
        assert_eq!(m.as_str().parse::<LocalizationMode>().unwrap(), m);
    }
    assert!("HL-X".parse::<LocalizationMode>().is_err());
}
