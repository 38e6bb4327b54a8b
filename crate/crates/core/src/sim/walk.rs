use std::io::{BufRead, Write};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::course::{Course, CourseKind, RIGHT_WALL_Y, WALL_X};
use super::signal::{synth_force_signal, SignalSpec};
use super::SimError;
use crate::classifier::{StepSignal, SIGNAL_CHANNELS};
use crate::geom::{FootLabel, FootOffset, Pose, PoseCovariance};
use crate::maps::UNKNOWN_CLASS;
use crate::measurement::ContactKind;

/// Crawl-gait swing order.
pub const SWING_ORDER: [FootLabel; 4] =
    [FootLabel::LF, FootLabel::RH, FootLabel::RF, FootLabel::LH];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitParams {
    pub step_length: f64,
    pub max_turn: f64,
    pub standing_height: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub dt: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            step_length: 0.04,
            max_turn: 0.15,
            standing_height: 0.5,
            half_length: 0.3,
            half_width: 0.2,
            dt: 0.5,
        }
    }
}

impl GaitParams {
    /// Nominal foot position in the base frame, on the base plane.
    pub fn nominal(&self, foot: FootLabel) -> Vector2<f64> {
        let (sx, sy) = match foot {
            FootLabel::LF => (1.0, 1.0),
            FootLabel::RF => (1.0, -1.0),
            FootLabel::LH => (-1.0, 1.0),
            FootLabel::RH => (-1.0, -1.0),
        };
        Vector2::new(sx * self.half_length, sy * self.half_width)
    }
}

/// Odometry corruption: white noise in the tangent space plus unreported bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub white_std: [f64; 6],
    pub z_bias: f64,
    pub yaw_bias: f64,
    /// Probability of corrupting a foot's measured height.
    pub outlier_rate: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            white_std: [0.003, 0.003, 0.001, 0.0005, 0.0005, 0.002],
            z_bias: 0.001,
            yaw_bias: 0.0003,
            outlier_rate: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            white_std: [0.0; 6],
            z_bias: 0.0,
            yaw_bias: 0.0,
            outlier_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = self
            .white_std
            .iter()
            .chain([&self.z_bias, &self.yaw_bias, &self.outlier_rate]);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::Config(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        if self.outlier_rate > 1.0 {
            return Err(SimError::Config("outlier_rate must not exceed 1".into()));
        }
        Ok(())
    }

    pub fn covariance(&self) -> PoseCovariance {
        PoseCovariance::from_std_devs(self.white_std).expect("validated standard deviations")
    }

    fn bias(&self) -> Pose {
        Pose::from_xyz_yaw(0.0, 0.0, self.z_bias, self.yaw_bias)
    }
}

/// One foot at a four-support phase.
#[derive(Clone, Debug, PartialEq)]
pub struct FootRecord {
    pub foot: FootLabel,
    pub kind: ContactKind,
    /// Measured position in the base frame.
    pub offset: Vector3<f64>,
    /// True world position.
    pub world: Vector3<f64>,
    /// True class under the foot, `UNKNOWN_CLASS` when the map has none.
    pub class_id: u8,
    /// Index into [`WalkLog::signals`] of the foot's latest touchdown.
    pub signal: Option<usize>,
}

impl FootRecord {
    pub fn foot_offset(&self) -> FootOffset {
        FootOffset {
            foot: self.foot,
            offset: self.offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub truth: Pose,
    /// Reported increment from the previous record; identity for the first.
    pub odom_increment: Pose,
    pub odom_cov: PoseCovariance,
    pub feet: Vec<FootRecord>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct WalkLog {
    pub steps: Vec<StepRecord>,
    pub signals: Vec<StepSignal>,
}

impl WalkLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn truth(&self) -> Vec<Pose> {
        self.steps.iter().map(|s| s.truth).collect()
    }

    pub fn stamps(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }

    /// Composes the logged increments starting from `start`.
    pub fn dead_reckoning(&self, start: Pose) -> Vec<Pose> {
        let mut pose = start;
        let mut out = Vec::with_capacity(self.steps.len());
        for (k, s) in self.steps.iter().enumerate() {
            if k > 0 {
                pose = pose.compose(&s.odom_increment);
            }
            out.push(pose);
        }
        out
    }
}

/// Planar base poses: turn in place toward each segment, then walk it.
fn plan_path(waypoints: &[Vector2<f64>], gait: &GaitParams) -> Vec<(Vector2<f64>, f64)> {
    let mut out = Vec::new();
    let mut pos = waypoints[0];
    let mut yaw = match waypoints.get(1) {
        Some(w) => (w.y - pos.y).atan2(w.x - pos.x),
        None => 0.0,
    };
    out.push((pos, yaw));
    for target in &waypoints[1..] {
        let d = target - pos;
        if d.norm() < 1e-12 {
            continue;
        }
        let heading = d.y.atan2(d.x);
        let mut turn = (heading - yaw + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
            - std::f64::consts::PI;
        while turn.abs() > 1e-12 {
            let dy = turn.clamp(-gait.max_turn, gait.max_turn);
            yaw += dy;
            turn -= dy;
            out.push((pos, yaw));
        }
        yaw = heading;
        let n = (d.norm() / gait.step_length).ceil() as usize;
        let start = pos;
        for i in 1..=n {
            pos = start + d * (i as f64 / n as f64);
            out.push((pos, yaw));
        }
        pos = *target;
    }
    out
}

struct Walker<'a> {
    course: &'a Course,
    gait: &'a GaitParams,
    noise: &'a NoiseSpec,
    signal_spec: &'a SignalSpec,
    rng: ChaCha8Rng,
    log: WalkLog,
    planted: Vec<(Vector3<f64>, u8, Option<usize>)>,
}

impl<'a> Walker<'a> {
    fn ground(&self, xy: Vector2<f64>) -> Result<f64, SimError> {
        self.course
            .elevation
            .elevation_at(&xy)
            .filter(|h| h.is_finite())
            .ok_or(SimError::OffMap { x: xy.x, y: xy.y })
    }

    fn base_pose(&self, xy: Vector2<f64>, yaw: f64) -> Result<Pose, SimError> {
        let z = self.ground(xy)? + self.gait.standing_height;
        Ok(Pose::from_xyz_yaw(xy.x, xy.y, z, yaw))
    }

    /// Places `foot` at its nominal spot under `base` and records a touchdown.
    fn touch_down(&mut self, foot: FootLabel, base: &Pose) -> Result<(), SimError> {
        let n = self.gait.nominal(foot);
        let p = base.transform_point(&Vector3::new(n.x, n.y, 0.0));
        let xy = Vector2::new(p.x, p.y);
        let world = Vector3::new(p.x, p.y, self.ground(xy)?);
        let class = self
            .course
            .classes
            .as_ref()
            .and_then(|c| c.class_at(&xy))
            .unwrap_or(UNKNOWN_CLASS);
        let signal = if class != UNKNOWN_CLASS {
            self.log
                .signals
                .push(synth_force_signal(class, self.signal_spec, &mut self.rng));
            Some(self.log.signals.len() - 1)
        } else {
            None
        };
        self.planted[foot.index()] = (world, class, signal);
        Ok(())
    }

    fn foot_record(&mut self, foot: FootLabel, base: &Pose) -> FootRecord {
        let (world, class_id, signal) = self.planted[foot.index()];
        let mut offset = base.inverse().transform_point(&world);
        if self.noise.outlier_rate > 0.0 && self.rng.random::<f64>() < self.noise.outlier_rate {
            offset.z += self.rng.random_range(-0.1..0.1);
        }
        FootRecord {
            foot,
            kind: ContactKind::Elevation,
            offset,
            world,
            class_id,
            signal,
        }
    }

    fn push(&mut self, truth: Pose, feet: Vec<FootRecord>) {
        let k = self.log.steps.len();
        let odom_increment = match self.log.steps.last() {
            None => Pose::identity(),
            Some(prev) => {
                let delta = Pose::relative_increment(&prev.truth, &truth);
                let noisy = self
                    .noise
                    .covariance()
                    .sampler()
                    .sample_pose(&delta, &mut self.rng);
                noisy.compose(&self.noise.bias())
            }
        };
        self.log.steps.push(StepRecord {
            t: k as f64 * self.gait.dt,
            truth,
            odom_increment,
            odom_cov: self.noise.covariance(),
            feet,
        });
    }

    fn stance(&mut self, base: &Pose) -> Vec<FootRecord> {
        FootLabel::ALL
            .iter()
            .map(|&f| self.foot_record(f, base))
            .collect()
    }
}

fn walker<'a>(
    course: &'a Course,
    gait: &'a GaitParams,
    noise: &'a NoiseSpec,
    signal_spec: &'a SignalSpec,
    seed: u64,
) -> Result<Walker<'a>, SimError> {
    noise.validate()?;
    if !(gait.step_length > 0.0 && gait.max_turn > 0.0 && gait.dt > 0.0) {
        return Err(SimError::Config(
            "step_length, max_turn and dt must be positive".into(),
        ));
    }
    Ok(Walker {
        course,
        gait,
        noise,
        signal_spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        log: WalkLog::default(),
        planted: vec![(Vector3::zeros(), UNKNOWN_CLASS, None); 4],
    })
}

/// Walks a statically stable crawl along `waypoints`, one record per four-support phase.
pub fn simulate_walk(
    course: &Course,
    waypoints: &[Vector2<f64>],
    gait: &GaitParams,
    noise: &NoiseSpec,
    signal_spec: &SignalSpec,
    seed: u64,
) -> Result<WalkLog, SimError> {
    if waypoints.is_empty() {
        return Err(SimError::Config("at least one waypoint is required".into()));
    }
    if let Some(w) = waypoints
        .iter()
        .find(|w| !course.elevation.geometry().contains(w))
    {
        return Err(SimError::OffMap { x: w.x, y: w.y });
    }
    let mut w = walker(course, gait, noise, signal_spec, seed)?;
    for (k, (xy, yaw)) in plan_path(waypoints, gait).into_iter().enumerate() {
        let base = w.base_pose(xy, yaw)?;
        if k == 0 {
            for f in FootLabel::ALL {
                w.touch_down(f, &base)?;
            }
        } else {
            w.touch_down(SWING_ORDER[(k - 1) % 4], &base)?;
        }
        let feet = w.stance(&base);
        w.push(base, feet);
    }
    Ok(w.log)
}

/// Scripted lateral walk with wall probes by the right front foot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeScript {
    pub start: [f64; 2],
    pub lateral_steps: usize,
    pub lateral_step: f64,
    pub reach: f64,
    pub probe_height: f64,
}

impl Default for ProbeScript {
    fn default() -> Self {
        Self {
            start: [1.4, 0.0],
            lateral_steps: 10,
            lateral_step: 0.1,
            reach: 0.8,
            probe_height: 0.3,
        }
    }
}

/// After every lateral step the right front foot touches the front wall, and the
/// right wall too once it is within reach.
pub fn probe_scenario(
    course: &Course,
    script: &ProbeScript,
    gait: &GaitParams,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<WalkLog, SimError> {
    if course.kind != CourseKind::WallRoom || course.cloud.is_none() {
        return Err(SimError::Config(
            "probe scenario needs the wall-room course".into(),
        ));
    }
    let spec = SignalSpec::default();
    let mut w = walker(course, gait, noise, &spec, seed)?;
    let mut xy = Vector2::new(script.start[0], script.start[1]);
    let base = w.base_pose(xy, 0.0)?;
    for f in FootLabel::ALL {
        w.touch_down(f, &base)?;
    }
    let feet = w.stance(&base);
    w.push(base, feet);

    for _ in 0..script.lateral_steps {
        xy.y -= script.lateral_step;
        let base = w.base_pose(xy, 0.0)?;
        for f in FootLabel::ALL {
            w.touch_down(f, &base)?;
        }
        let feet = w.stance(&base);
        w.push(base, feet);

        let rf = gait.nominal(FootLabel::RF);
        let front = Vector3::new(WALL_X, xy.y + rf.y, script.probe_height);
        let side = Vector3::new(xy.x + rf.x, RIGHT_WALL_Y, script.probe_height);
        for target in [front, side] {
            let shoulder = base.transform_point(&Vector3::new(rf.x, rf.y, 0.0));
            if (target.xy() - shoulder.xy()).norm() > script.reach {
                continue;
            }
            let mut feet = w.stance(&base);
            let probe = &mut feet[FootLabel::RF.index()];
            probe.kind = ContactKind::Cloud;
            probe.world = target;
            probe.offset = base.inverse().transform_point(&target);
            probe.class_id = UNKNOWN_CLASS;
            probe.signal = None;
            w.push(base, feet);
        }
    }
    Ok(w.log)
}

const POSE_COLS: [&str; 7] = ["x", "y", "z", "qx", "qy", "qz", "qw"];

fn header() -> String {
    let mut cols = vec!["k".to_string(), "t".to_string()];
    cols.extend(POSE_COLS.iter().map(|c| c.to_string()));
    cols.extend(POSE_COLS.iter().map(|c| format!("d{c}")));
    cols.extend((0..6).map(|i| format!("cov{i}")));
    for f in FootLabel::ALL {
        for c in [
            "kind", "ox", "oy", "oz", "wx", "wy", "wz", "class", "signal",
        ] {
            cols.push(format!("{f}_{c}"));
        }
    }
    cols.join(",")
}

/// Writes the step table and the companion signal table (`signal,fx,..,tz`).
pub fn write_walk_log<W: Write, S: Write>(
    mut w: W,
    mut signals: S,
    log: &WalkLog,
) -> std::io::Result<()> {
    writeln!(w, "{}", header())?;
    for (k, s) in log.steps.iter().enumerate() {
        let mut cells = vec![k.to_string(), s.t.to_string()];
        cells.extend(s.truth.to_fields().iter().map(|v| v.to_string()));
        cells.extend(s.odom_increment.to_fields().iter().map(|v| v.to_string()));
        cells.extend(s.odom_cov.diagonal().iter().map(|v| v.to_string()));
        for f in &s.feet {
            cells.push(f.kind.as_str().to_string());
            cells.extend(f.offset.iter().chain(f.world.iter()).map(|v| v.to_string()));
            cells.push(f.class_id.to_string());
            cells.push(f.signal.map_or("-1".to_string(), |i| i.to_string()));
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    writeln!(signals, "signal,fx,fy,fz,tx,ty,tz")?;
    for (i, sig) in log.signals.iter().enumerate() {
        for row in sig.samples() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(signals, "{i},{}", vals.join(","))?;
        }
    }
    Ok(())
}

pub fn read_walk_log<R: BufRead, S: BufRead>(r: R, signals: S) -> Result<WalkLog, SimError> {
    let mut log = WalkLog::default();
    let expected = header();
    let n_cols = expected.split(',').count();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if i == 0 {
            if line.trim() != expected {
                return Err(SimError::Parse {
                    line: 1,
                    msg: "unexpected walk-log header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(SimError::Parse {
                line: no,
                msg: format!("expected {n_cols} columns, found {}", cells.len()),
            });
        }
        let num = |j: usize| -> Result<f64, SimError> {
            cells[j].parse().map_err(|_| SimError::Parse {
                line: no,
                msg: format!("column {} is not a number: '{}'", j + 1, cells[j]),
            })
        };
        let pose = |j: usize| -> Result<Pose, SimError> {
            Ok(Pose::from_fields(
                num(j)?,
                num(j + 1)?,
                num(j + 2)?,
                num(j + 3)?,
                num(j + 4)?,
                num(j + 5)?,
                num(j + 6)?,
            ))
        };
        let truth = pose(2)?;
        let odom_increment = pose(9)?;
        let var: Vec<f64> = (16..22).map(num).collect::<Result<_, _>>()?;
        let odom_cov = PoseCovariance::from_variances(var.try_into().expect("six entries"))
            .map_err(|e| SimError::Parse {
                line: no,
                msg: e.to_string(),
            })?;
        let mut feet = Vec::with_capacity(4);
        for (fi, foot) in FootLabel::ALL.into_iter().enumerate() {
            let b = 22 + fi * 9;
            let kind = cells[b]
                .parse()
                .map_err(|m| SimError::Parse { line: no, msg: m })?;
            let class_id: u8 = cells[b + 7].parse().map_err(|_| SimError::Parse {
                line: no,
                msg: format!("bad class id '{}'", cells[b + 7]),
            })?;
            let signal: i64 = cells[b + 8].parse().map_err(|_| SimError::Parse {
                line: no,
                msg: format!("bad signal reference '{}'", cells[b + 8]),
            })?;
            feet.push(FootRecord {
                foot,
                kind,
                offset: Vector3::new(num(b + 1)?, num(b + 2)?, num(b + 3)?),
                world: Vector3::new(num(b + 4)?, num(b + 5)?, num(b + 6)?),
                class_id,
                signal: usize::try_from(signal).ok(),
            });
        }
        log.steps.push(StepRecord {
            t: num(1)?,
            truth,
            odom_increment,
            odom_cov,
            feet,
        });
    }

    let mut rows: Vec<Vec<[f64; SIGNAL_CHANNELS]>> = Vec::new();
    for (i, line) in signals.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| SimError::Parse { line: i + 1, msg };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 1 + SIGNAL_CHANNELS {
            return Err(err(format!(
                "expected 7 signal columns, found {}",
                cells.len()
            )));
        }
        let id: usize = cells[0].parse().map_err(|_| err("bad signal id".into()))?;
        if id > rows.len() {
            return Err(err(format!("signal {id} appears out of order")));
        }
        if id == rows.len() {
            rows.push(Vec::new());
        }
        let mut row = [0.0; SIGNAL_CHANNELS];
        for (c, v) in row.iter_mut().enumerate() {
            *v = cells[c + 1]
                .parse()
                .map_err(|_| err(format!("bad sample '{}'", cells[c + 1])))?;
        }
        rows[id].push(row);
    }
    log.signals = rows
        .into_iter()
        .map(|r| {
            StepSignal::new(r).map_err(|e| SimError::Parse {
                line: 0,
                msg: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    if let Some(bad) = log
        .steps
        .iter()
        .flat_map(|s| s.feet.iter())
        .filter_map(|f| f.signal)
        .find(|&i| i >= log.signals.len())
    {
        return Err(SimError::Parse {
            line: 0,
            msg: format!("signal {bad} referenced but not present"),
        });
    }
    Ok(log)
}
