//! Prior maps: 2.5D elevation grids, class-annotated grids and 3D point clouds.

mod class_grid;
mod cloud;
pub mod edt;
mod grid;
mod io;
mod kdtree;

pub use class_grid::{ClassGrid, ClassQueryError, NearestClass, NUM_CLASSES, UNKNOWN_CLASS};
pub use cloud::PointCloudMap;
pub use grid::{ElevationGrid, GridGeometry};
pub use io::{load_map, read_map, save_map, write_map, MapFile};
pub use kdtree::KdTree;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("invalid grid geometry: {0}")]
    Geometry(String),
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("cell (col {col}, row {row}): class id {id} not below class count {n}")]
    InvalidClass {
        col: usize,
        row: usize,
        id: u32,
        n: u8,
    },
    #[error("class layer and elevation layer disagree: {0}")]
    DimensionMismatch(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {0} has non-finite coordinates")]
    NonFinitePoint(usize),
    #[error("line {line}, field '{field}': {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
