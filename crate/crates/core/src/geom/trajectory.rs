use std::io::{BufRead, Write};

use super::{GeomError, Pose};

/// Time-stamped pose sequence; text form is one `t x y z qx qy qz qw` line per pose.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub stamps: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, pose: Pose) {
        self.stamps.push(t);
        self.poses.push(pose);
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> std::io::Result<()> {
    for (t, p) in traj.stamps.iter().zip(&traj.poses) {
        let f = p.to_fields();
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            t, f[0], f[1], f[2], f[3], f[4], f[5], f[6]
        )?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(r: R) -> Result<Trajectory, GeomError> {
    let mut traj = Trajectory::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GeomError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != 8 {
            return Err(GeomError::Parse {
                line: i + 1,
                msg: format!("expected 8 fields, found {}", vals.len()),
            });
        }
        traj.push(
            vals[0],
            Pose::from_fields(
                vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7],
            ),
        );
    }
    Ok(traj)
}
