//! Per-foot contact likelihoods against the prior maps, in the log domain.
//!
//! Geometric channels (elevation residual, point-cloud distance) are Gaussian in
//! the residual with a floor `rho` on the linear-domain density. The class channel
//! returns the Gaussian peak on a class match and the Gaussian of the distance to
//! the nearest cell of the estimated class otherwise, floored at `rho_class`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geom::{FootOffset, Pose};
use crate::maps::{ClassGrid, ClassQueryError, ElevationGrid, PointCloudMap};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal density `N(z; 0, sigma)`.
pub fn gaussian_pdf(z: f64, sigma: f64) -> f64 {
    (-0.5 * (z / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// `ln N(z; 0, sigma)`.
pub fn gaussian_log_pdf(z: f64, sigma: f64) -> f64 {
    -0.5 * (z / sigma).powi(2) - sigma.ln() - LN_SQRT_2PI
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasurementError {
    #[error("invalid likelihood config: {0}")]
    Config(String),
    #[error("class probabilities invalid: {0}")]
    ClassProbs(String),
    #[error("estimated class {0} is outside the map's class range")]
    InvalidClass(u8),
}

/// Noise and floor parameters of the measurement models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodConfig {
    /// Elevation / point-distance noise, meters.
    pub sigma_z: f64,
    /// Class-boundary distance scale, meters.
    pub sigma_c: f64,
    /// Linear-domain floor of the geometric channels.
    pub rho: f64,
    /// Linear-domain floor of the class channel.
    pub rho_class: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self::with_sigmas(0.01, 0.05)
    }
}

impl LikelihoodConfig {
    /// Floors default to the density at three standard deviations.
    pub fn with_sigmas(sigma_z: f64, sigma_c: f64) -> Self {
        Self {
            sigma_z,
            sigma_c,
            rho: gaussian_pdf(3.0 * sigma_z, sigma_z),
            rho_class: gaussian_pdf(3.0 * sigma_c, sigma_c),
        }
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        for (name, v) in [
            ("sigma_z", self.sigma_z),
            ("sigma_c", self.sigma_c),
            ("rho", self.rho),
            ("rho_class", self.rho_class),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MeasurementError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.rho >= gaussian_pdf(0.0, self.sigma_z) {
            return Err(MeasurementError::Config(
                "rho must lie below the sigma_z peak density".into(),
            ));
        }
        if self.rho_class >= gaussian_pdf(0.0, self.sigma_c) {
            return Err(MeasurementError::Config(
                "rho_class must lie below the sigma_c peak density".into(),
            ));
        }
        Ok(())
    }

    /// Precomputed constants for the hot path.
    pub fn model(&self) -> LikelihoodModel {
        LikelihoodModel {
            inv_two_var_z: 0.5 / (self.sigma_z * self.sigma_z),
            log_peak_z: -self.sigma_z.ln() - LN_SQRT_2PI,
            log_rho: self.rho.ln(),
            inv_two_var_c: 0.5 / (self.sigma_c * self.sigma_c),
            log_peak_c: -self.sigma_c.ln() - LN_SQRT_2PI,
            log_rho_class: self.rho_class.ln(),
        }
    }
}

/// Log-domain constants derived from a [`LikelihoodConfig`].
#[derive(Clone, Copy, Debug)]
pub struct LikelihoodModel {
    inv_two_var_z: f64,
    log_peak_z: f64,
    log_rho: f64,
    inv_two_var_c: f64,
    log_peak_c: f64,
    log_rho_class: f64,
}

impl LikelihoodModel {
    /// Floored geometric log-likelihood of a residual.
    #[inline]
    pub fn geometric(&self, residual: f64) -> f64 {
        (self.log_peak_z - residual * residual * self.inv_two_var_z).max(self.log_rho)
    }

    pub fn log_rho(&self) -> f64 {
        self.log_rho
    }

    pub fn log_rho_class(&self) -> f64 {
        self.log_rho_class
    }

    #[inline]
    pub fn elevation(&self, x: &Pose, d: &FootOffset, map: &ElevationGrid) -> f64 {
        let w = x.transform_point(&d.offset);
        match map.elevation_at(&Vector2::new(w.x, w.y)) {
            Some(h) => self.geometric(w.z - h),
            None => 0.0,
        }
    }

    #[inline]
    pub fn cloud(&self, x: &Pose, d: &FootOffset, map: &PointCloudMap) -> f64 {
        let w = x.transform_point(&d.offset);
        let (_, dist) = map.kd_nearest(&w);
        self.geometric(dist)
    }

    #[inline]
    pub fn class(
        &self,
        x: &Pose,
        d: &FootOffset,
        map: &ClassGrid,
        estimated: u8,
    ) -> Result<f64, MeasurementError> {
        let w = x.transform_point(&d.offset);
        let xy = Vector2::new(w.x, w.y);
        let Some(here) = map.class_at(&xy) else {
            return Ok(0.0);
        };
        if here == estimated {
            return Ok(self.log_peak_c);
        }
        match map.nearest_class_point(&xy, estimated) {
            Ok(nc) => Ok(
                (self.log_peak_c - nc.distance * nc.distance * self.inv_two_var_c)
                    .max(self.log_rho_class),
            ),
            Err(ClassQueryError::ClassNotPresent(_)) => Ok(self.log_rho_class),
            Err(ClassQueryError::OutOfBounds) => Ok(0.0),
            Err(ClassQueryError::InvalidClass(c)) => Err(MeasurementError::InvalidClass(c)),
        }
    }
}

/// Which map a contact is scored against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactKind {
    Elevation,
    Cloud,
    ElevationClass,
}

impl ContactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactKind::Elevation => "elevation",
            ContactKind::Cloud => "cloud",
            ContactKind::ElevationClass => "elevation+class",
        }
    }
}

impl std::str::FromStr for ContactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elevation" => Ok(ContactKind::Elevation),
            "cloud" => Ok(ContactKind::Cloud),
            "elevation+class" => Ok(ContactKind::ElevationClass),
            other => Err(format!("unknown contact kind '{other}'")),
        }
    }
}

/// One foot contact as seen by the filter.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactMeasurement {
    pub foot: FootOffset,
    pub kind: ContactKind,
    class_probs: Option<Vec<f64>>,
    pub in_contact: bool,
}

impl ContactMeasurement {
    pub fn new(foot: FootOffset, kind: ContactKind) -> Self {
        Self {
            foot,
            kind,
            class_probs: None,
            in_contact: true,
        }
    }

    /// Attaches a classifier distribution; entries must be non-negative and sum to 1.
    pub fn with_class_probs(mut self, probs: Vec<f64>) -> Result<Self, MeasurementError> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(MeasurementError::ClassProbs(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MeasurementError::ClassProbs(format!(
                "entries sum to {sum}"
            )));
        }
        self.class_probs = Some(probs);
        Ok(self)
    }

    pub fn class_probs(&self) -> Option<&[f64]> {
        self.class_probs.as_deref()
    }

    /// Argmax class of the attached distribution (lowest id on ties).
    pub fn estimated_class(&self) -> Option<u8> {
        let probs = self.class_probs.as_ref()?;
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        Some(best as u8)
    }
}

pub fn elevation_loglik(
    x: &Pose,
    d: &FootOffset,
    map: &ElevationGrid,
    cfg: &LikelihoodConfig,
) -> f64 {
    cfg.model().elevation(x, d, map)
}

pub fn cloud_loglik(x: &Pose, d: &FootOffset, map: &PointCloudMap, cfg: &LikelihoodConfig) -> f64 {
    cfg.model().cloud(x, d, map)
}

pub fn class_loglik(
    x: &Pose,
    d: &FootOffset,
    map: &ClassGrid,
    estimated: u8,
    cfg: &LikelihoodConfig,
) -> Result<f64, MeasurementError> {
    cfg.model().class(x, d, map, estimated)
}

/// Conditionally independent channels multiply, so their logs add.
pub fn joint_loglik(elevation: f64, class: f64) -> f64 {
    elevation + class
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::FootLabel;
    use crate::maps::{GridGeometry, NUM_CLASSES};
    use nalgebra::Vector3;

    fn foot() -> FootOffset {
        FootOffset::new(FootLabel::LF, 0.0, 0.0, 0.0)
    }

    fn flat(h: f64) -> ElevationGrid {
        let g = GridGeometry::new(40, 40, 0.05, Vector2::new(-1.0, -1.0)).unwrap();
        ElevationGrid::new(g, vec![h; g.len()]).unwrap()
    }

    #[test]
    fn density_closed_forms() {
        let peak = 1.0 / (0.01 * (2.0 * std::f64::consts::PI).sqrt());
        for k in 0..4 {
            let k = k as f64;
            let d = gaussian_pdf(k * 0.01, 0.01);
            assert!((d - peak * (-k * k / 2.0).exp()).abs() < 1e-12);
            assert!((gaussian_log_pdf(k * 0.01, 0.01) - d.ln()).abs() < 1e-12);
        }
        assert!((peak - 39.8942).abs() < 1e-4);
    }

    #[test]
    fn elevation_values() {
        let cfg = LikelihoodConfig::default();
        let map = flat(0.0);
        let at =
            |z: f64| elevation_loglik(&Pose::from_translation(0.0, 0.0, z), &foot(), &map, &cfg);
        assert!((at(0.0) - 3.6862).abs() < 1e-4);
        assert!((at(0.0) - gaussian_pdf(0.0, 0.01).ln()).abs() < 1e-12);
        let floored = at(1.0);
        assert!((floored - cfg.rho.ln()).abs() < 1e-12);
        assert!((floored - gaussian_pdf(0.03, 0.01).ln()).abs() < 1e-12);
        assert_eq!(at(1.0), at(-1.0));
        assert!((at(0.02) - at(-0.02)).abs() < 1e-15);
    }

    #[test]
    fn nodata_is_neutral() {
        let cfg = LikelihoodConfig::default();
        let g = GridGeometry::new(2, 2, 1.0, Vector2::zeros()).unwrap();
        let map = ElevationGrid::new(g, vec![f64::NAN; 4]).unwrap();
        let x = Pose::from_translation(0.5, 0.5, 3.0);
        assert_eq!(elevation_loglik(&x, &foot(), &map, &cfg), 0.0);
        let off = Pose::from_translation(-5.0, 0.5, 3.0);
        assert_eq!(elevation_loglik(&off, &foot(), &flat(0.0), &cfg), 0.0);
    }

    #[test]
    fn cloud_values() {
        let cfg = LikelihoodConfig::default();
        let cloud = PointCloudMap::new(vec![Vector3::zeros()]).unwrap();
        let at = |x: f64| cloud_loglik(&Pose::from_translation(x, 0.0, 0.0), &foot(), &cloud, &cfg);
        assert!((at(0.0) - 3.6862).abs() < 1e-4);
        assert!((at(0.01) - (at(0.0) - 0.5)).abs() < 1e-12);
        assert!((at(2.0) - cfg.rho.ln()).abs() < 1e-12);
    }

    #[test]
    fn class_values() {
        let cfg = LikelihoodConfig::default();
        let g = GridGeometry::new(40, 1, 0.05, Vector2::zeros()).unwrap();
        let mut ids = vec![0u8; 40];
        ids[1] = 1;
        let map = ClassGrid::new(g, ids, NUM_CLASSES).unwrap();
        let x0 = Pose::from_translation(0.025, 0.025, 0.0);
        let peak_c = 1.0 / (0.05 * (2.0 * std::f64::consts::PI).sqrt());
        let matched = class_loglik(&x0, &foot(), &map, 0, &cfg).unwrap();
        assert!((matched - peak_c.ln()).abs() < 1e-12);
        assert!((matched - 2.0767).abs() < 1e-4);
        let near = class_loglik(&x0, &foot(), &map, 1, &cfg).unwrap();
        assert!((near - (matched - 0.5)).abs() < 1e-12);
        // class 1 is 1 m away from the far end
        let far = Pose::from_translation(1.075, 0.025, 0.0);
        let far_ll = class_loglik(&far, &foot(), &map, 1, &cfg).unwrap();
        assert!((far_ll - cfg.rho_class.ln()).abs() < 1e-12);
        assert!(far_ll >= gaussian_log_pdf(1.0, 0.05));
        let absent = class_loglik(&x0, &foot(), &map, 5, &cfg).unwrap();
        assert!((absent - gaussian_pdf(0.15, 0.05).ln()).abs() < 1e-12);
        assert!(class_loglik(&x0, &foot(), &map, 9, &cfg).is_err());
        let off = Pose::from_translation(-1.0, 0.0, 0.0);
        assert_eq!(class_loglik(&off, &foot(), &map, 1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn joint_adds() {
        assert!((joint_loglik(3.6862, 2.0767) - 5.7629).abs() < 1e-12);
        assert_eq!(joint_loglik(1.5, 0.0), 1.5);
        assert_eq!(joint_loglik(0.0, 0.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LikelihoodConfig::default().validate().is_ok());
        let mut c = LikelihoodConfig {
            rho: 50.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = LikelihoodConfig::default();
        c.sigma_c = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn class_probs_validation_and_argmax() {
        let m = ContactMeasurement::new(foot(), ContactKind::ElevationClass);
        assert!(m.clone().with_class_probs(vec![0.5, 0.6]).is_err());
        assert!(m.clone().with_class_probs(vec![-0.1, 1.1]).is_err());
        let m = m.with_class_probs(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(m.estimated_class(), Some(1));
    }

    proptest::proptest! {
        #[test]
        fn monotone_symmetric_and_floored(a in -0.2..0.2f64, b in -0.2..0.2f64) {
            let m = LikelihoodConfig::default().model();
            let (small, big) = if a.abs() <= b.abs() { (a, b) } else { (b, a) };
            proptest::prop_assert!(m.geometric(small) >= m.geometric(big));
            proptest::prop_assert_eq!(m.geometric(a), m.geometric(-a));
            proptest::prop_assert!(m.geometric(a) >= m.log_rho());
        }
    }
}
