//! Planar most-likely-class view of a map used for frontiers and paths.

use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::logodds::argmax;
use crate::octree::{SemanticOctree, TruncatedSemantics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NavCell {
    Unknown,
    Free,
    /// Most likely occupied class.
    Occupied(u16),
}

/// 2-D navigation grid with cells addressed as `x + nx * y`.
#[derive(Clone, Debug, PartialEq)]
pub struct NavGrid {
    pub nx: usize,
    pub ny: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    cells: Vec<NavCell>,
}

fn label(h: &[f64], unknown: bool) -> NavCell {
    if unknown {
        return NavCell::Unknown;
    }
    match argmax(h) {
        0 => NavCell::Free,
        k => NavCell::Occupied(k as u16),
    }
}

/// Combines the labels of a vertical column of voxels.
fn combine(column: impl Iterator<Item = NavCell>) -> NavCell {
    let mut out = NavCell::Free;
    for c in column {
        match c {
            NavCell::Occupied(_) => return c,
            NavCell::Unknown => out = NavCell::Unknown,
            NavCell::Free => {}
        }
    }
    out
}

impl NavGrid {
    pub fn from_cells(nx: usize, ny: usize, resolution: f64, cells: Vec<NavCell>) -> Result<Self> {
        if cells.len() != nx * ny {
            return Err(Error::BadDims(format!("{} cells for {nx}x{ny}", cells.len())));
        }
        Ok(NavGrid {
            nx,
            ny,
            resolution,
            origin: [0.0; 2],
            cells,
        })
    }

    /// Projection of the layers `z_band` of a grid; a column is free only
    /// when all its voxels are free.
    pub fn from_grid(map: &GridMap, z_band: std::ops::Range<usize>) -> Result<Self> {
        let [nx, ny, nz] = map.dims();
        if z_band.is_empty() || z_band.end > nz {
            return Err(Error::BadDims(format!("z band {z_band:?} outside depth {nz}")));
        }
        let cells = (0..nx * ny)
            .map(|i| {
                let (x, y) = ((i % nx) as i64, (i / nx) as i64);
                combine(z_band.clone().map(|z| {
                    let idx = map.index([x, y, z as i64]).expect("in bounds");
                    label(map.cell(idx), map.is_prior(idx))
                }))
            })
            .collect();
        let o = map.origin();
        Ok(NavGrid {
            nx,
            ny,
            resolution: map.resolution(),
            origin: [o[0], o[1]],
            cells,
        })
    }

    pub fn from_octree(tree: &SemanticOctree, z_band: std::ops::Range<usize>) -> Result<Self> {
        let n = tree.side();
        if z_band.is_empty() || z_band.end > n {
            return Err(Error::BadDims(format!("z band {z_band:?} outside depth {n}")));
        }
        let prior = TruncatedSemantics::from_full(tree.prior());
        let k = tree.num_classes();
        let cells = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as i64, (i / n) as i64);
                combine(z_band.clone().map(|z| {
                    let sem = tree.query_cell([x, y, z as i64]).expect("in bounds");
                    label(sem.to_full(k).values(), *sem == prior)
                }))
            })
            .collect();
        let o = tree.lattice().origin;
        Ok(NavGrid {
            nx: n,
            ny: n,
            resolution: tree.element_size(),
            origin: [o[0], o[1]],
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, idx: usize) -> NavCell {
        self.cells[idx]
    }

    pub fn set(&mut self, idx: usize, c: NavCell) {
        self.cells[idx] = c;
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.cells[idx] == NavCell::Free
    }

    pub fn index(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny)
            .then(|| x as usize + self.nx * y as usize)
    }

    pub fn coords(&self, idx: usize) -> (i64, i64) {
        ((idx % self.nx) as i64, (idx / self.nx) as i64)
    }

    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (x, y) = self.coords(idx);
        [
            self.origin[0] + (x as f64 + 0.5) * self.resolution,
            self.origin[1] + (y as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn cell_at(&self, p: [f64; 2]) -> Option<usize> {
        let x = ((p[0] - self.origin[0]) / self.resolution).floor() as i64;
        let y = ((p[1] - self.origin[1]) / self.resolution).floor() as i64;
        self.index(x, y)
    }

    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.coords(idx);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| self.index(x + dx, y + dy))
    }

    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.coords(idx);
        (-1..=1)
            .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| self.index(x + dx, y + dy))
    }
}
