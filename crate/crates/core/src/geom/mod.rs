//! Rigid-body pose algebra on SE(3).
//!
//! Poses hold a position in meters and a unit quaternion (stored scalar-last,
//! `[qx, qy, qz, qw]`, as in `nalgebra`). Tangent vectors are always ordered
//! `[dx, dy, dz, droll, dpitch, dyaw]`: translation first, rotation second.

mod trajectory;

pub use trajectory::{read_trajectory, write_trajectory, Trajectory};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

/// 6-vector in the pose tangent space, `[trans; rot]`.
pub type Tangent = Vector6<f64>;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),
    #[error("covariance has non-finite entries")]
    NonFinite,
    #[error("trajectory line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// Position plus unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn renormalize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let n2 = q.norm_squared();
    if (n2 - 1.0).abs() > 1e-15 {
        UnitQuaternion::new_normalize(q)
    } else {
        UnitQuaternion::new_unchecked(q)
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalize(orientation.into_inner()),
        }
    }

    /// Builds a pose from the scalar-last field order used by the text formats.
    pub fn from_fields(x: f64, y: f64, z: f64, qx: f64, qy: f64, qz: f64, qw: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
            orientation: renormalize(Quaternion::new(qw, qx, qy, qz)),
        }
    }

    /// `[x, y, z, qx, qy, qz, qw]`
    pub fn to_fields(&self) -> [f64; 7] {
        let q = self.orientation.coords;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q[0],
            q[1],
            q[2],
            q[3],
        ]
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
            orientation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        }
    }

    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::from_xyz_rpy(x, y, z, 0.0, 0.0, yaw)
    }

    /// `(roll, pitch, yaw)` in the ZYX convention.
    pub fn rpy(&self) -> (f64, f64, f64) {
        self.orientation.euler_angles()
    }

    pub fn yaw(&self) -> f64 {
        self.rpy().2
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Rigid-body composition `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(
                self.orientation.into_inner() * other.orientation.into_inner(),
            ),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    /// Increment `prev^-1 * curr`, expressed in the frame of `prev`.
    pub fn relative_increment(prev: &Pose, curr: &Pose) -> Pose {
        prev.inverse().compose(curr)
    }

    /// Maps a point from this pose's body frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    /// Right perturbation `self * Exp(delta)`.
    pub fn retract(&self, delta: &Tangent) -> Pose {
        self.compose(&Pose::exp(delta))
    }

    /// SE(3) exponential map of `[rho; phi]`.
    pub fn exp(delta: &Tangent) -> Pose {
        let rho = Vector3::new(delta[0], delta[1], delta[2]);
        let phi = Vector3::new(delta[3], delta[4], delta[5]);
        let theta2 = phi.norm_squared();
        if theta2 == 0.0 {
            return Pose {
                position: rho,
                orientation: UnitQuaternion::identity(),
            };
        }
        let theta = theta2.sqrt();
        let k = phi.cross_matrix();
        let (a, b) = if theta < 1e-4 {
            (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
        } else {
            (
                (1.0 - theta.cos()) / theta2,
                (theta - theta.sin()) / (theta2 * theta),
            )
        };
        let v = Matrix3::identity() + k * a + k * k * b;
        Pose {
            position: v * rho,
            orientation: UnitQuaternion::from_scaled_axis(phi),
        }
    }

    /// Rotation part of the logarithm, as a scaled axis.
    pub fn log_rotation(&self) -> Vector3<f64> {
        self.orientation.scaled_axis()
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Symmetric PSD 6x6 covariance over the tangent space `[trans; rot]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseCovariance(Matrix6<f64>);

impl PoseCovariance {
    pub fn new(m: Matrix6<f64>) -> Result<Self, GeomError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let asym = (m - m.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(GeomError::NotSymmetric(asym));
        }
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(GeomError::NotPositiveSemiDefinite(min_eig));
        }
        Ok(Self(m))
    }

    pub fn zeros() -> Self {
        Self(Matrix6::zeros())
    }

    /// Diagonal covariance from variances.
    pub fn from_variances(var: [f64; 6]) -> Result<Self, GeomError> {
        Self::new(Matrix6::from_diagonal(&Vector6::from(var)))
    }

    /// Diagonal covariance from standard deviations.
    pub fn from_std_devs(std: [f64; 6]) -> Result<Self, GeomError> {
        Self::from_variances(std.map(|s| s * s))
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn diagonal(&self) -> [f64; 6] {
        let d = self.0.diagonal();
        [d[0], d[1], d[2], d[3], d[4], d[5]]
    }

    /// Precomputes a square-root factor for repeated sampling.
    pub fn sampler(&self) -> TangentSampler {
        let is_diagonal = (0..6).all(|i| (0..6).all(|j| i == j || self.0[(i, j)] == 0.0));
        let factor = if is_diagonal {
            Matrix6::from_diagonal(&self.0.diagonal().map(|v| v.max(0.0).sqrt()))
        } else {
            let eig = SymmetricEigen::new(self.0);
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            eig.eigenvectors * Matrix6::from_diagonal(&sqrt_vals)
        };
        let is_zero = factor.iter().all(|v| *v == 0.0);
        TangentSampler { factor, is_zero }
    }
}

/// Draws `delta ~ N(0, cov)` in the tangent space.
#[derive(Clone, Debug)]
pub struct TangentSampler {
    factor: Matrix6<f64>,
    is_zero: bool,
}

impl TangentSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Tangent {
        let mut white = Tangent::zeros();
        for v in white.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if self.is_zero {
            return Tangent::zeros();
        }
        self.factor * white
    }

    /// Samples a pose around `mean` by right perturbation.
    pub fn sample_pose<R: Rng + ?Sized>(&self, mean: &Pose, rng: &mut R) -> Pose {
        let delta = self.sample(rng);
        if self.is_zero {
            *mean
        } else {
            mean.retract(&delta)
        }
    }
}

/// Samples `mean * Exp(delta)` with `delta ~ N(0, cov)`.
pub fn sample_pose_gaussian<R: Rng + ?Sized>(
    mean: &Pose,
    cov: &PoseCovariance,
    rng: &mut R,
) -> Pose {
    cov.sampler().sample_pose(mean, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FootLabel {
    LF,
    RF,
    LH,
    RH,
}

impl FootLabel {
    pub const ALL: [FootLabel; 4] = [FootLabel::LF, FootLabel::RF, FootLabel::LH, FootLabel::RH];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FootLabel::LF => "LF",
            FootLabel::RF => "RF",
            FootLabel::LH => "LH",
            FootLabel::RH => "RH",
        }
    }
}

impl fmt::Display for FootLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FootLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LF" => Ok(FootLabel::LF),
            "RF" => Ok(FootLabel::RF),
            "LH" => Ok(FootLabel::LH),
            "RH" => Ok(FootLabel::RH),
            other => Err(format!("unknown foot label '{other}'")),
        }
    }
}

/// Foot position in the base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootOffset {
    pub foot: FootLabel,
    pub offset: Vector3<f64>,
}

impl FootOffset {
    pub fn new(foot: FootLabel, x: f64, y: f64, z: f64) -> Self {
        Self {
            foot,
            offset: Vector3::new(x, y, z),
        }
    }
}

/// World coordinates of a foot given the base pose.
pub fn transform_point(x: &Pose, d: &FootOffset) -> Vector3<f64> {
    x.transform_point(&d.offset)
}
