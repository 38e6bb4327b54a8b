use nalgebra::Vector2;

use super::edt::nearest_site_transform;
use super::grid::{ElevationGrid, GridGeometry};
use super::MapError;

/// Number of terrain classes the maps and classifier are built for.
pub const NUM_CLASSES: u8 = 8;
/// Cell marker for cells without a known class.
pub const UNKNOWN_CLASS: u8 = 255;

/// Nearest cell of a requested class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestClass {
    /// Center of the nearest cell holding the class.
    pub point: Vector2<f64>,
    /// Lattice distance from the query cell's center to `point`, meters.
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ClassQueryError {
    #[error("class {0} is outside the class range")]
    InvalidClass(u8),
    #[error("class {0} is not present anywhere in the map")]
    ClassNotPresent(u8),
    #[error("query point lies outside the map")]
    OutOfBounds,
}

/// 2.5D class layer with precomputed per-class nearest-cell fields.
#[derive(Clone, Debug)]
pub struct ClassGrid {
    geometry: GridGeometry,
    class_ids: Vec<u8>,
    n_classes: u8,
    // nearest_site[c][cell] is the row-major index of the nearest cell of class c
    nearest_site: Vec<Option<Vec<u32>>>,
}

impl PartialEq for ClassGrid {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.class_ids == other.class_ids
            && self.n_classes == other.n_classes
    }
}

impl ClassGrid {
    pub fn new(
        geometry: GridGeometry,
        class_ids: Vec<u8>,
        n_classes: u8,
    ) -> Result<Self, MapError> {
        if class_ids.len() != geometry.len() {
            return Err(MapError::CellCount {
                expected: geometry.len(),
                got: class_ids.len(),
            });
        }
        if n_classes == 0 || n_classes == UNKNOWN_CLASS {
            return Err(MapError::Geometry(format!(
                "invalid class count {n_classes}"
            )));
        }
        if let Some((i, &id)) = class_ids
            .iter()
            .enumerate()
            .find(|(_, &id)| id != UNKNOWN_CLASS && id >= n_classes)
        {
            let (col, row) = geometry.col_row(i);
            return Err(MapError::InvalidClass {
                col,
                row,
                id: id as u32,
                n: n_classes,
            });
        }
        let nearest_site = (0..n_classes)
            .map(|c| {
                let sites: Vec<bool> = class_ids.iter().map(|&id| id == c).collect();
                nearest_site_transform(&sites, geometry.n_cols, geometry.n_rows)
            })
            .collect();
        Ok(Self {
            geometry,
            class_ids,
            n_classes,
            nearest_site,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn class_ids(&self) -> &[u8] {
        &self.class_ids
    }

    pub fn n_classes(&self) -> u8 {
        self.n_classes
    }

    pub fn is_present(&self, class: u8) -> bool {
        self.nearest_site
            .get(class as usize)
            .is_some_and(|f| f.is_some())
    }

    /// Known class under `xy`; `None` off-map or on UNKNOWN cells.
    #[inline]
    pub fn class_at(&self, xy: &Vector2<f64>) -> Option<u8> {
        let id = self.class_ids[self.geometry.index_of(xy)?];
        (id != UNKNOWN_CLASS).then_some(id)
    }

    /// Nearest cell center of class `class` from the cell containing `xy`.
    #[inline]
    pub fn nearest_class_point(
        &self,
        xy: &Vector2<f64>,
        class: u8,
    ) -> Result<NearestClass, ClassQueryError> {
        if class >= self.n_classes {
            return Err(ClassQueryError::InvalidClass(class));
        }
        let field = self.nearest_site[class as usize]
            .as_ref()
            .ok_or(ClassQueryError::ClassNotPresent(class))?;
        let (col, row) = self
            .geometry
            .cell_of(xy)
            .ok_or(ClassQueryError::OutOfBounds)?;
        let site = field[self.geometry.index(col, row)] as usize;
        let (sc, sr) = self.geometry.col_row(site);
        let dc = sc as f64 - col as f64;
        let dr = sr as f64 - row as f64;
        Ok(NearestClass {
            point: self.geometry.cell_center(sc, sr),
            distance: (dc * dc + dr * dr).sqrt() * self.geometry.resolution,
        })
    }

    /// Distance field of one class in meters, row-major; `None` if the class is absent.
    pub fn distance_field(&self, class: u8) -> Option<Vec<f64>> {
        let field = self.nearest_site.get(class as usize)?.as_ref()?;
        Some(
            field
                .iter()
                .enumerate()
                .map(|(cell, &site)| {
                    let (c, r) = self.geometry.col_row(cell);
                    let (sc, sr) = self.geometry.col_row(site as usize);
                    let dc = sc as f64 - c as f64;
                    let dr = sr as f64 - r as f64;
                    (dc * dc + dr * dr).sqrt() * self.geometry.resolution
                })
                .collect(),
        )
    }

    /// Errors unless this layer shares the lattice of `elevation`.
    pub fn check_aligned(&self, elevation: &ElevationGrid) -> Result<(), MapError> {
        let (a, b) = (self.geometry, *elevation.geometry());
        if a != b {
            return Err(MapError::DimensionMismatch(format!(
                "class layer {}x{} @ {} origin ({}, {}) vs elevation {}x{} @ {} origin ({}, {})",
                a.n_cols,
                a.n_rows,
                a.resolution,
                a.origin.x,
                a.origin.y,
                b.n_cols,
                b.n_rows,
                b.resolution,
                b.origin.x,
                b.origin.y
            )));
        }
        Ok(())
    }
}
