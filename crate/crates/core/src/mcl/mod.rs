//! Sequential Monte Carlo localizer driven by four-support contact phases.
//!
//! Each step propagates every particle by the odometry increment with tangent-space
//! noise, scores the contacts against the prior map, normalizes in the log domain,
//! reports an estimate, and resamples when the effective sample size drops below
//! `resample_threshold * N`.

mod resample;

pub use resample::{effective_sample_size, systematic_resample};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Pose, PoseCovariance};
use crate::maps::{ClassGrid, ElevationGrid, PointCloudMap};
use crate::measurement::{
    ContactKind, ContactMeasurement, LikelihoodConfig, LikelihoodModel, MeasurementError,
};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("particle count must be at least 1")]
    NoParticles,
    #[error("step has no contacts")]
    NoContacts,
    #[error("mode {mode} needs a {layer} layer, which the prior map lacks")]
    MissingLayer {
        mode: LocalizationMode,
        layer: &'static str,
    },
    #[error("invalid filter parameter: {0}")]
    Config(String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

/// Localization modality: which measurement channels feed the weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalizationMode {
    /// Dead-reckoned odometry; no map correction.
    #[serde(rename = "odom-only")]
    OdomOnly,
    /// Geometry only (elevation, plus point cloud for probe contacts).
    #[serde(rename = "HL-G")]
    Geometric,
    /// Geometry and terrain class.
    #[serde(rename = "HL-GC")]
    GeometricClass,
    /// Terrain class only.
    #[serde(rename = "HL-C")]
    ClassOnly,
    /// Geometry against a 3D point-cloud map.
    #[serde(rename = "HL-3D")]
    Geometric3d,
}

impl LocalizationMode {
    pub const ALL: [LocalizationMode; 5] = [
        LocalizationMode::OdomOnly,
        LocalizationMode::Geometric,
        LocalizationMode::GeometricClass,
        LocalizationMode::ClassOnly,
        LocalizationMode::Geometric3d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocalizationMode::OdomOnly => "odom-only",
            LocalizationMode::Geometric => "HL-G",
            LocalizationMode::GeometricClass => "HL-GC",
            LocalizationMode::ClassOnly => "HL-C",
            LocalizationMode::Geometric3d => "HL-3D",
        }
    }

    pub fn channels(self) -> Channels {
        match self {
            LocalizationMode::OdomOnly => Channels::default(),
            LocalizationMode::Geometric | LocalizationMode::Geometric3d => Channels {
                elevation: true,
                class: false,
                cloud: true,
            },
            LocalizationMode::GeometricClass => Channels {
                elevation: true,
                class: true,
                cloud: true,
            },
            LocalizationMode::ClassOnly => Channels {
                elevation: false,
                class: true,
                cloud: false,
            },
        }
    }
}

impl fmt::Display for LocalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocalizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LocalizationMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown mode '{s}' (expected odom-only, HL-G, HL-GC, HL-C or HL-3D)")
            })
    }
}

/// Which likelihood terms are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Channels {
    pub elevation: bool,
    pub class: bool,
    pub cloud: bool,
}

/// Map layers available to the filter.
#[derive(Clone, Debug, Default)]
pub struct PriorMap {
    pub elevation: Option<ElevationGrid>,
    pub classes: Option<ClassGrid>,
    pub cloud: Option<PointCloudMap>,
}

impl PriorMap {
    /// Errors if `mode` relies on a layer this map does not have.
    pub fn check_mode(&self, mode: LocalizationMode) -> Result<(), FilterError> {
        let missing = |layer| Err(FilterError::MissingLayer { mode, layer });
        match mode {
            LocalizationMode::OdomOnly => Ok(()),
            LocalizationMode::Geometric if self.elevation.is_none() && self.cloud.is_none() => {
                missing("elevation")
            }
            LocalizationMode::GeometricClass if self.elevation.is_none() => missing("elevation"),
            LocalizationMode::GeometricClass | LocalizationMode::ClassOnly
                if self.classes.is_none() =>
            {
                missing("class")
            }
            LocalizationMode::Geometric3d if self.cloud.is_none() => missing("point-cloud"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when ESS falls below this fraction of N.
    pub resample_threshold: f64,
    /// Weighted xy standard deviation above which only z is taken from the particles.
    pub xy_std_threshold: f64,
    pub likelihood: LikelihoodConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            resample_threshold: 0.5,
            xy_std_threshold: 0.10,
            likelihood: LikelihoodConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.particles == 0 {
            return Err(FilterError::NoParticles);
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(FilterError::Config(format!(
                "resample_threshold must be in [0, 1], got {}",
                self.resample_threshold
            )));
        }
        if self.xy_std_threshold.is_nan() || self.xy_std_threshold <= 0.0 {
            return Err(FilterError::Config(
                "xy_std_threshold must be positive".into(),
            ));
        }
        self.likelihood.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub log_weight: f64,
}

/// One four-support phase worth of filter input.
#[derive(Clone, Debug)]
pub struct StepInput {
    /// Odometry increment `prev^-1 * curr`.
    pub odom_increment: Pose,
    pub odom_cov: PoseCovariance,
    pub contacts: Vec<ContactMeasurement>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateBranch {
    Full,
    ZOnly,
}

impl EstimateBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateBranch::Full => "full",
            EstimateBranch::ZOnly => "z-only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub branch: EstimateBranch,
    pub std_x: f64,
    pub std_y: f64,
}

/// Per-step filter diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    pub ess: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub branch: EstimateBranch,
    pub estimate: Pose,
    pub resampled: bool,
    pub diverged: bool,
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, diags: &[StepDiagnostics]) -> std::io::Result<()> {
    writeln!(w, "k,ess,xy_std_x,xy_std_y,branch,x,y,z,qx,qy,qz,qw")?;
    for d in diags {
        let f = d.estimate.to_fields();
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{}",
            d.k,
            d.ess,
            d.std_x,
            d.std_y,
            d.branch.as_str(),
            f[0],
            f[1],
            f[2],
            f[3],
            f[4],
            f[5],
            f[6]
        )?;
    }
    Ok(())
}

/// Complete filter state. Owns its random source; not meant to be shared mutably.
#[derive(Clone, Debug)]
pub struct FilterState {
    particles: Vec<Particle>,
    config: FilterConfig,
    model: LikelihoodModel,
    last_estimate: Pose,
    trajectory: Vec<Pose>,
    diagnostics: Vec<StepDiagnostics>,
    divergence_events: usize,
    rng: ChaCha8Rng,
}

impl FilterState {
    /// Samples `config.particles` particles from the prior with uniform weights.
    pub fn init(
        prior_mean: Pose,
        prior_cov: &PoseCovariance,
        config: FilterConfig,
        seed: u64,
    ) -> Result<Self, FilterError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.particles;
        let sampler = prior_cov.sampler();
        let log_w = -(n as f64).ln();
        let particles = (0..n)
            .map(|_| Particle {
                pose: sampler.sample_pose(&prior_mean, &mut rng),
                log_weight: log_w,
            })
            .collect();
        Ok(Self {
            particles,
            model: config.likelihood.model(),
            config,
            last_estimate: prior_mean,
            trajectory: vec![prior_mean],
            diagnostics: Vec::new(),
            divergence_events: 0,
            rng,
        })
    }

    /// Builds a state from explicit particles; log-weights are normalized here.
    pub fn from_particles(
        particles: Vec<Particle>,
        last_estimate: Pose,
        config: FilterConfig,
        seed: u64,
    ) -> Result<Self, FilterError> {
        config.validate()?;
        if particles.is_empty() {
            return Err(FilterError::NoParticles);
        }
        let mut s = Self {
            config: FilterConfig {
                particles: particles.len(),
                ..config
            },
            model: config.likelihood.model(),
            particles,
            last_estimate,
            trajectory: vec![last_estimate],
            diagnostics: Vec::new(),
            divergence_events: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.normalize();
        Ok(s)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn last_estimate(&self) -> &Pose {
        &self.last_estimate
    }

    /// Estimates `x*_0 .. x*_k`.
    pub fn trajectory(&self) -> &[Pose] {
        &self.trajectory
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn divergence_events(&self) -> usize {
        self.divergence_events
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights())
    }

    fn normalize(&mut self) {
        let max = self
            .particles
            .iter()
            .map(|p| p.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            self.reset_weights();
            return;
        }
        let sum: f64 = self
            .particles
            .iter()
            .map(|p| (p.log_weight - max).exp())
            .sum();
        let log_norm = max + sum.ln();
        for p in &mut self.particles {
            p.log_weight -= log_norm;
        }
    }

    fn reset_weights(&mut self) {
        let log_w = -(self.particles.len() as f64).ln();
        for p in &mut self.particles {
            p.log_weight = log_w;
        }
    }

    /// Log-likelihood of all contacts for one pose, plus whether any term beat its floor.
    fn score(
        &self,
        pose: &Pose,
        contacts: &[ContactMeasurement],
        ch: Channels,
        map: &PriorMap,
    ) -> (f64, bool, bool) {
        let m = &self.model;
        let mut ll = 0.0;
        let mut informative = false;
        let mut evaluated = false;
        for c in contacts.iter().filter(|c| c.in_contact) {
            match c.kind {
                ContactKind::Cloud => {
                    if let (true, Some(cloud)) = (ch.cloud, &map.cloud) {
                        let v = m.cloud(pose, &c.foot, cloud);
                        evaluated = true;
                        informative |= v > m.log_rho();
                        ll += v;
                    }
                }
                ContactKind::Elevation | ContactKind::ElevationClass => {
                    if let (true, Some(elev)) = (ch.elevation, &map.elevation) {
                        let v = m.elevation(pose, &c.foot, elev);
                        if v != 0.0 {
                            evaluated = true;
                            informative |= v > m.log_rho();
                        }
                        ll += v;
                    }
                    if let (true, Some(classes), Some(est)) =
                        (ch.class, &map.classes, c.estimated_class())
                    {
                        // class terms are never treated as divergence evidence
                        let v = m.class(pose, &c.foot, classes, est).unwrap_or(0.0);
                        ll += v;
                    }
                }
            }
        }
        (ll, informative, evaluated)
    }

    /// One four-support phase: propagate, weight, normalize, estimate, maybe resample.
    pub fn step(
        &mut self,
        input: &StepInput,
        map: &PriorMap,
        mode: LocalizationMode,
    ) -> Result<PoseEstimate, FilterError> {
        if input.contacts.is_empty() {
            return Err(FilterError::NoContacts);
        }
        map.check_mode(mode)?;
        for c in &input.contacts {
            if let (Some(est), Some(classes)) = (c.estimated_class(), &map.classes) {
                if est >= classes.n_classes() {
                    return Err(MeasurementError::InvalidClass(est).into());
                }
            }
        }

        let sampler = input.odom_cov.sampler();
        for p in &mut self.particles {
            let predicted = p.pose.compose(&input.odom_increment);
            p.pose = sampler.sample_pose(&predicted, &mut self.rng);
        }

        let channels = mode.channels();
        let scores: Vec<(f64, bool, bool)> = self
            .particles
            .iter()
            .map(|p| self.score(&p.pose, &input.contacts, channels, map))
            .collect();
        let any_evaluated = scores.iter().any(|s| s.2);
        let any_informative = scores.iter().any(|s| s.1);
        let diverged = any_evaluated && !any_informative;
        if diverged {
            self.divergence_events += 1;
            log::warn!(
                "step {}: every particle floored on every geometric contact; resetting weights",
                self.trajectory.len()
            );
            self.reset_weights();
        } else {
            for (p, s) in self.particles.iter_mut().zip(&scores) {
                p.log_weight += s.0;
            }
            self.normalize();
        }

        let est = self.estimate(&input.odom_increment);
        self.last_estimate = est.pose;
        self.trajectory.push(est.pose);

        let ess = self.ess();
        let resampled = ess < self.config.resample_threshold * self.particles.len() as f64;
        if resampled {
            self.resample();
        }
        self.diagnostics.push(StepDiagnostics {
            k: self.trajectory.len() - 1,
            ess,
            std_x: est.std_x,
            std_y: est.std_y,
            branch: est.branch,
            estimate: est.pose,
            resampled,
            diverged,
        });
        Ok(est)
    }

    /// Systematic resampling to uniform weights.
    pub fn resample(&mut self) {
        let n = self.particles.len();
        let weights = self.weights();
        let u0: f64 = self.rng.random::<f64>();
        let idx = systematic_resample(&weights, u0);
        let log_w = -(n as f64).ln();
        self.particles = idx
            .into_iter()
            .map(|i| Particle {
                pose: self.particles[i].pose,
                log_weight: log_w,
            })
            .collect();
    }

    /// Weighted estimate; falls back to dead reckoning in x, y and yaw when the
    /// particle cloud is spread wider than `xy_std_threshold` in x or y.
    pub fn estimate(&self, odom_increment: &Pose) -> PoseEstimate {
        let weights = self.weights();
        let mut mean = Vector3::zeros();
        for (p, w) in self.particles.iter().zip(&weights) {
            mean += p.pose.position * *w;
        }
        let (mut var_x, mut var_y) = (0.0, 0.0);
        for (p, w) in self.particles.iter().zip(&weights) {
            var_x += w * (p.pose.position.x - mean.x).powi(2);
            var_y += w * (p.pose.position.y - mean.y).powi(2);
        }
        let (std_x, std_y) = (var_x.sqrt(), var_y.sqrt());

        let best = weights
            .iter()
            .enumerate()
            .fold(0, |b, (i, w)| if *w > weights[b] { i } else { b });
        let reference = self.particles[best].pose.orientation;
        let ref_inv = reference.inverse();
        let mut mean_delta = Vector3::zeros();
        for (p, w) in self.particles.iter().zip(&weights) {
            mean_delta += (ref_inv * p.pose.orientation).scaled_axis() * *w;
        }
        let orientation = if mean_delta == Vector3::zeros() {
            reference
        } else {
            reference * UnitQuaternion::from_scaled_axis(mean_delta)
        };

        let thr = self.config.xy_std_threshold;
        if std_x <= thr && std_y <= thr {
            PoseEstimate {
                pose: Pose::new(mean, orientation),
                branch: EstimateBranch::Full,
                std_x,
                std_y,
            }
        } else {
            let dr = self.last_estimate.compose(odom_increment);
            let (roll, pitch, _) = orientation.euler_angles();
            let yaw = dr.yaw();
            PoseEstimate {
                pose: Pose::new(
                    Vector3::new(dr.position.x, dr.position.y, mean.z),
                    UnitQuaternion::from_euler_angles(roll, pitch, yaw),
                ),
                branch: EstimateBranch::ZOnly,
                std_x,
                std_y,
            }
        }
    }
}

#[cfg(test)]
mod tests;
