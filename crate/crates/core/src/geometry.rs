//! Beams, cell lattices and the rasterized line shared by every map type.
//!
//! Both the dense grid and the octree walk the same integer Bresenham line
//! over their element lattice, so a beam touches exactly the same elements
//! in either representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Cell = [i64; 3];

/// One range-category return along a sensor ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamMeasurement {
    pub origin: Point3,
    pub direction: Point3,
    /// Measured range in meters; `range == max_range` means no return.
    pub range: f64,
    /// Reported class `1..=K` for a hit; ignored when there is no return.
    pub category: usize,
    pub max_range: f64,
}

impl BeamMeasurement {
    pub fn new(origin: Point3, direction: Point3, range: f64, category: usize, max_range: f64) -> Result<Self> {
        let norm = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("beam direction not normalized (|d|={norm})")));
        }
        if !(max_range > 0.0) || !(0.0..=max_range).contains(&range) {
            return Err(Error::Format(format!("beam range {range} outside [0, {max_range}]")));
        }
        Ok(BeamMeasurement {
            origin,
            direction,
            range,
            category,
            max_range,
        })
    }

    /// A beam with no return, used for geometry and information queries.
    pub fn probe(origin: Point3, direction: Point3, max_range: f64) -> Self {
        BeamMeasurement {
            origin,
            direction,
            range: max_range,
            category: 0,
            max_range,
        }
    }

    /// Planar beam at `heading` radians.
    pub fn planar(origin: Point3, heading: f64, max_range: f64) -> Self {
        Self::probe(origin, [heading.cos(), heading.sin(), 0.0], max_range)
    }

    pub fn is_hit(&self) -> bool {
        self.range < self.max_range
    }

    pub fn point_at(&self, t: f64) -> Point3 {
        [
            self.origin[0] + self.direction[0] * t,
            self.origin[1] + self.direction[1] * t,
            self.origin[2] + self.direction[2] * t,
        ]
    }
}

/// Regular lattice of cubic cells anchored at `origin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Point3,
    pub cell_size: f64,
    pub dims: [usize; 3],
}

impl Lattice {
    pub fn cell_of(&self, p: Point3) -> Cell {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = ((p[a] - self.origin[a]) / self.cell_size).floor() as i64;
        }
        c
    }

    pub fn contains(&self, c: Cell) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index with x varying fastest.
    pub fn linear(&self, c: Cell) -> usize {
        c[0] as usize + self.dims[0] * (c[1] as usize + self.dims[1] * c[2] as usize)
    }

    pub fn unlinear(&self, idx: usize) -> Cell {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x as i64, y as i64, z as i64]
    }

    pub fn center(&self, c: Cell) -> Point3 {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.cell_size;
        }
        p
    }

    /// Length of the segment `[a, b]` inside cell `c` (slab test).
    pub fn chord(&self, c: Cell, a: Point3, b: Point3) -> f64 {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for ax in 0..3 {
            let lo = self.origin[ax] + c[ax] as f64 * self.cell_size;
            let hi = lo + self.cell_size;
            let d = b[ax] - a[ax];
            if d.abs() < 1e-15 {
                if a[ax] < lo || a[ax] > hi {
                    return 0.0;
                }
            } else {
                let (mut ta, mut tb) = ((lo - a[ax]) / d, (hi - a[ax]) / d);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        (t1 - t0).max(0.0) * len
    }
}

/// Integer Bresenham line between two cells, evaluated in closed form.
///
/// Step `i` advances the major axis by one; each minor coordinate is
/// `round(i * |Δa| / |Δmajor|)` (half rounds up), so every coordinate is
/// monotone in `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BresenhamLine {
    start: Cell,
    delta: [i64; 3],
    sign: [i64; 3],
    major: usize,
}

impl BresenhamLine {
    pub fn new(start: Cell, end: Cell) -> Self {
        let mut delta = [0i64; 3];
        let mut sign = [0i64; 3];
        for a in 0..3 {
            let d = end[a] - start[a];
            delta[a] = d.abs();
            sign[a] = d.signum();
        }
        let mut major = 0;
        for a in 1..3 {
            if delta[a] > delta[major] {
                major = a;
            }
        }
        BresenhamLine {
            start,
            delta,
            sign,
            major,
        }
    }

    /// Number of cells on the line, endpoints included.
    pub fn len(&self) -> usize {
        self.delta[self.major] as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn major_axis(&self) -> usize {
        self.major
    }

    pub fn cell_at(&self, i: usize) -> Cell {
        let i = i as i64;
        let dm = self.delta[self.major];
        let mut c = self.start;
        for a in 0..3 {
            let off = if a == self.major {
                i
            } else if dm == 0 {
                0
            } else {
                (2 * i * self.delta[a] + dm) / (2 * dm)
            };
            c[a] += self.sign[a] * off;
        }
        c
    }

    /// Step index whose major coordinate equals `coord`, if on the line.
    pub fn step_of_major(&self, coord: i64) -> Option<usize> {
        let off = (coord - self.start[self.major]) * if self.sign[self.major] < 0 { -1 } else { 1 };
        if off < 0 || off > self.delta[self.major] {
            None
        } else {
            Some(off as usize)
        }
    }

    /// Largest `j >= i` such that steps `i..=j` all satisfy `inside`, given
    /// that `inside` holds at `i` and describes a box (an interval along the
    /// monotone line).
    pub fn last_inside(&self, i: usize, limit: usize, inside: impl Fn(Cell) -> bool) -> usize {
        let (mut lo, mut hi) = (i, limit);
        if inside(self.cell_at(hi)) {
            return hi;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if inside(self.cell_at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

const FACE_EPS: f64 = 1e-9;

/// A beam rasterized onto a lattice and truncated at the lattice boundary.
#[derive(Clone, Debug)]
pub struct LatticeRay {
    pub line: BresenhamLine,
    /// Number of in-bounds steps (a prefix of the line).
    pub len: usize,
    /// Step index of the hit cell, if the return lies within the traced part.
    pub hit: Option<usize>,
}

impl LatticeRay {
    pub fn new(lattice: &Lattice, beam: &BeamMeasurement) -> Result<Self> {
        let start = lattice.cell_of(beam.origin);
        if !lattice.contains(start) {
            return Err(Error::OriginOutOfBounds);
        }
        let end = lattice.cell_of(beam.point_at(beam.max_range));
        let line = BresenhamLine::new(start, end);
        let last = line.last_inside(0, line.len() - 1, |c| lattice.contains(c));
        let len = last + 1;
        let hit = if beam.is_hit() {
            // a return on a cell face belongs to the cell behind the face
            let hc = lattice.cell_of(beam.point_at(beam.range + FACE_EPS * lattice.cell_size));
            let major = line.major_axis();
            line.step_of_major(hc[major]).filter(|&i| i < len)
        } else {
            None
        };
        Ok(LatticeRay { line, len, hit })
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len).map(move |i| self.line.cell_at(i))
    }
}
