use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::maps::{
    save_map, ClassGrid, ElevationGrid, GridGeometry, MapError, MapFile, PointCloudMap, NUM_CLASSES,
};
use crate::mcl::PriorMap;

/// Slope of the chevron-course ramps.
pub const RAMP_DEG: f64 = 12.0;
pub const RAMP_LENGTH: f64 = 0.8;
pub const CHEVRON_HEIGHT: f64 = 0.13;
pub const PLATFORM_HEIGHT: f64 = 0.20;
pub const TILE_SIZE: f64 = 1.0;
pub const WALL_X: f64 = 2.0;
pub const RIGHT_WALL_Y: f64 = -1.5;
pub const WALL_HEIGHT: f64 = 0.6;
pub const WALL_SPACING: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CourseKind {
    ChevronRamp,
    ClassTiles,
    WallRoom,
}

impl CourseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CourseKind::ChevronRamp => "chevron-ramp",
            CourseKind::ClassTiles => "class-tiles",
            CourseKind::WallRoom => "wall-room",
        }
    }
}

impl std::str::FromStr for CourseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chevron-ramp" => Ok(CourseKind::ChevronRamp),
            "class-tiles" => Ok(CourseKind::ClassTiles),
            "wall-room" => Ok(CourseKind::WallRoom),
            _ => Err(format!(
                "unknown course '{s}' (chevron-ramp, class-tiles, wall-room)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseSpec {
    pub kind: CourseKind,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_resolution() -> f64 {
    0.05
}

impl CourseSpec {
    pub fn new(kind: CourseKind, seed: u64) -> Self {
        Self {
            kind,
            resolution: default_resolution(),
            seed,
        }
    }
}

/// Generated maps plus the nominal walking route over them.
#[derive(Clone, Debug, PartialEq)]
pub struct Course {
    pub kind: CourseKind,
    pub elevation: ElevationGrid,
    pub classes: Option<ClassGrid>,
    pub cloud: Option<PointCloudMap>,
    pub waypoints: Vec<Vector2<f64>>,
}

impl Course {
    pub fn prior_map(&self) -> PriorMap {
        PriorMap {
            elevation: Some(self.elevation.clone()),
            classes: self.classes.clone(),
            cloud: self.cloud.clone(),
        }
    }

    /// Writes `elevation.hmap` and, when present, `classes.cmap` and `cloud.xyz`.
    pub fn save(&self, dir: &Path) -> Result<(), MapError> {
        std::fs::create_dir_all(dir)?;
        save_map(
            dir.join("elevation.hmap"),
            &MapFile::Elevation(self.elevation.clone()),
        )?;
        if let Some(c) = &self.classes {
            save_map(dir.join("classes.cmap"), &MapFile::Class(c.clone()))?;
        }
        if let Some(c) = &self.cloud {
            save_map(dir.join("cloud.xyz"), &MapFile::Cloud(c.clone()))?;
        }
        Ok(())
    }
}

fn grid(width: f64, height: f64, res: f64, origin: Vector2<f64>) -> Result<GridGeometry, MapError> {
    GridGeometry::new(
        (width / res).round() as usize,
        (height / res).round() as usize,
        res,
        origin,
    )
}

pub fn generate_course(spec: &CourseSpec) -> Result<Course, MapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        CourseKind::ChevronRamp => chevron_ramp(spec.resolution, &mut rng),
        CourseKind::ClassTiles => class_tiles(spec.resolution, &mut rng),
        CourseKind::WallRoom => wall_room(spec.resolution),
    }
}

/// Random heights on a coarse block lattice covering `[x0, x1) × [y0, y1)`.
struct Blocks {
    x0: f64,
    y0: f64,
    size: f64,
    cols: usize,
    heights: Vec<f64>,
}

impl Blocks {
    fn new(rng: &mut ChaCha8Rng, x0: f64, x1: f64, y0: f64, y1: f64, size: f64, max: f64) -> Self {
        let cols = ((x1 - x0) / size).ceil() as usize;
        let rows = ((y1 - y0) / size).ceil() as usize;
        let heights = (0..cols * rows)
            .map(|_| (rng.random_range(0.0..max) * 100.0).round() / 100.0)
            .collect();
        Self {
            x0,
            y0,
            size,
            cols,
            heights,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let c = ((x - self.x0) / self.size) as usize;
        let r = ((y - self.y0) / self.size) as usize;
        self.heights[r * self.cols + c.min(self.cols - 1)]
    }
}

/// Ramp up, a chevron platform and uneven blocks, then a ramp down along the
/// outbound leg; uneven blocks along the return leg.
fn chevron_ramp(res: f64, rng: &mut ChaCha8Rng) -> Result<Course, MapError> {
    let g = grid(7.2, 5.0, res, Vector2::zeros())?;
    let slope = RAMP_DEG.to_radians().tan();
    let top = slope * RAMP_LENGTH;
    let (up0, up1) = (1.5, 1.5 + RAMP_LENGTH);
    let chev_end = 3.5;
    let blocks_end = 4.9;
    let down_end = blocks_end + RAMP_LENGTH;
    let outbound = Blocks::new(rng, chev_end, blocks_end, 0.5, 2.0, 0.2, 0.10);
    let inbound = Blocks::new(rng, 1.0, 6.0, 3.05, 4.55, 0.3, 0.08);
    let elevation = ElevationGrid::from_fn(g, |x, y| {
        if (0.5..2.0).contains(&y) {
            if (up0..up1).contains(&x) {
                slope * (x - up0)
            } else if (up1..chev_end).contains(&x) {
                let phase = (x - up1 - 0.6 * (y - 1.25).abs()).rem_euclid(0.4);
                top + if phase < 0.2 { CHEVRON_HEIGHT } else { 0.0 }
            } else if (chev_end..blocks_end).contains(&x) {
                top + outbound.at(x, y)
            } else if (blocks_end..down_end).contains(&x) {
                top - slope * (x - blocks_end)
            } else {
                0.0
            }
        } else if (3.05..4.55).contains(&y) && (1.0..6.0).contains(&x) {
            inbound.at(x, y)
        } else {
            0.0
        }
    });
    let waypoints = [
        (0.8, 1.25),
        (6.4, 1.25),
        (6.4, 3.8),
        (0.8, 3.8),
        (0.8, 1.25),
    ]
    .iter()
    .map(|&(x, y)| Vector2::new(x, y))
    .collect();
    Ok(Course {
        kind: CourseKind::ChevronRamp,
        elevation,
        classes: None,
        cloud: None,
        waypoints,
    })
}

/// 7×4 tiles of seeded materials (no two edge-adjacent tiles alike) and a
/// platform with a ramp at each end.
fn class_tiles(res: f64, rng: &mut ChaCha8Rng) -> Result<Course, MapError> {
    let (tiles_x, tiles_y) = (7usize, 4usize);
    let g = grid(
        tiles_x as f64 * TILE_SIZE,
        tiles_y as f64 * TILE_SIZE,
        res,
        Vector2::zeros(),
    )?;
    let mut tile_class = vec![0u8; tiles_x * tiles_y];
    for r in 0..tiles_y {
        for c in 0..tiles_x {
            loop {
                let k = rng.random_range(0..NUM_CLASSES);
                let left = c > 0 && tile_class[r * tiles_x + c - 1] == k;
                let below = r > 0 && tile_class[(r - 1) * tiles_x + c] == k;
                if !left && !below {
                    tile_class[r * tiles_x + c] = k;
                    break;
                }
            }
        }
    }
    let mut ids = Vec::with_capacity(g.len());
    for row in 0..g.n_rows {
        for col in 0..g.n_cols {
            let p = g.cell_center(col, row);
            let (tc, tr) = ((p.x / TILE_SIZE) as usize, (p.y / TILE_SIZE) as usize);
            ids.push(tile_class[tr * tiles_x + tc]);
        }
    }
    let classes = ClassGrid::new(g, ids, NUM_CLASSES)?;
    let elevation = ElevationGrid::from_fn(g, |x, y| {
        if !(1.0..3.0).contains(&y) {
            0.0
        } else if (1.0..2.0).contains(&x) {
            PLATFORM_HEIGHT * (x - 1.0)
        } else if (2.0..5.0).contains(&x) {
            PLATFORM_HEIGHT
        } else if (5.0..6.0).contains(&x) {
            PLATFORM_HEIGHT * (6.0 - x)
        } else {
            0.0
        }
    });
    let mut waypoints = Vec::new();
    for (i, y) in [0.5, 1.5, 2.5, 3.5].iter().enumerate() {
        let (a, b) = if i % 2 == 0 { (0.5, 6.5) } else { (6.5, 0.5) };
        waypoints.push(Vector2::new(a, *y));
        waypoints.push(Vector2::new(b, *y));
    }
    Ok(Course {
        kind: CourseKind::ClassTiles,
        elevation,
        classes: Some(classes),
        cloud: None,
        waypoints,
    })
}

/// Flat floor with a front wall at `x = WALL_X` and a right wall at `y = RIGHT_WALL_Y`.
fn wall_room(res: f64) -> Result<Course, MapError> {
    let g = grid(2.4, 3.0, res, Vector2::new(0.0, -2.0))?;
    let elevation = ElevationGrid::new(g, vec![0.0; g.len()])?;
    let n_z = (WALL_HEIGHT / WALL_SPACING).round() as usize;
    let mut points = Vec::new();
    let front_n = ((1.0 - RIGHT_WALL_Y) / WALL_SPACING).round() as usize;
    for i in 0..=front_n {
        for k in 0..=n_z {
            points.push(Vector3::new(
                WALL_X,
                RIGHT_WALL_Y + i as f64 * WALL_SPACING,
                k as f64 * WALL_SPACING,
            ));
        }
    }
    let side_n = (WALL_X / WALL_SPACING).round() as usize;
    for i in 0..side_n {
        for k in 0..=n_z {
            points.push(Vector3::new(
                i as f64 * WALL_SPACING,
                RIGHT_WALL_Y,
                k as f64 * WALL_SPACING,
            ));
        }
    }
    Ok(Course {
        kind: CourseKind::WallRoom,
        elevation,
        classes: None,
        cloud: Some(PointCloudMap::new(points)?),
        waypoints: vec![Vector2::new(1.4, 0.0), Vector2::new(1.4, -1.0)],
    })
}
