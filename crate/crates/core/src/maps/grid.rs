use nalgebra::Vector2;

use super::MapError;

/// Regular lattice shared by elevation and class layers.
///
/// Cell `(col, row)` covers `[ox + col*res, ox + (col+1)*res) x [oy + row*res, oy + (row+1)*res)`
/// and is stored at index `row * n_cols + col`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub n_cols: usize,
    pub n_rows: usize,
    pub resolution: f64,
    pub origin: Vector2<f64>,
}

impl GridGeometry {
    pub fn new(
        n_cols: usize,
        n_rows: usize,
        resolution: f64,
        origin: Vector2<f64>,
    ) -> Result<Self, MapError> {
        if n_cols == 0 || n_rows == 0 {
            return Err(MapError::Geometry(
                "grid must have at least one cell".into(),
            ));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::Geometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(MapError::Geometry("origin must be finite".into()));
        }
        Ok(Self {
            n_cols,
            n_rows,
            resolution,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.n_cols as f64 * self.resolution
    }

    pub fn height(&self) -> f64 {
        self.n_rows as f64 * self.resolution
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.n_cols, index / self.n_cols)
    }

    /// Cell containing `xy`, or `None` outside the grid.
    #[inline]
    pub fn cell_of(&self, xy: &Vector2<f64>) -> Option<(usize, usize)> {
        let fx = (xy.x - self.origin.x) / self.resolution;
        let fy = (xy.y - self.origin.y) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (col < self.n_cols && row < self.n_rows).then_some((col, row))
    }

    #[inline]
    pub fn index_of(&self, xy: &Vector2<f64>) -> Option<usize> {
        self.cell_of(xy).map(|(c, r)| self.index(c, r))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, xy: &Vector2<f64>) -> bool {
        self.cell_of(xy).is_some()
    }
}

/// 2.5D height map; `NaN` cells are NODATA.
#[derive(Clone, Debug, PartialEq)]
pub struct ElevationGrid {
    geometry: GridGeometry,
    heights: Vec<f64>,
}

impl ElevationGrid {
    pub fn new(geometry: GridGeometry, heights: Vec<f64>) -> Result<Self, MapError> {
        if heights.len() != geometry.len() {
            return Err(MapError::CellCount {
                expected: geometry.len(),
                got: heights.len(),
            });
        }
        Ok(Self { geometry, heights })
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut heights = Vec::with_capacity(geometry.len());
        for row in 0..geometry.n_rows {
            for col in 0..geometry.n_cols {
                let c = geometry.cell_center(col, row);
                heights.push(f(c.x, c.y));
            }
        }
        Self { geometry, heights }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn height(&self, col: usize, row: usize) -> f64 {
        self.heights[self.geometry.index(col, row)]
    }

    /// Nearest-cell height under `xy`; `None` when off-map or NODATA.
    #[inline]
    pub fn elevation_at(&self, xy: &Vector2<f64>) -> Option<f64> {
        let h = self.heights[self.geometry.index_of(xy)?];
        (!h.is_nan()).then_some(h)
    }
}
