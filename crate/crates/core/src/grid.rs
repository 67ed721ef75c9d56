//! Dense regular-grid multi-class map.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BeamMeasurement, Cell, Lattice, LatticeRay, Point3};
use crate::io::{read_f32, read_f64, read_f64_vec, read_u16, read_u32, write_f64_vec};
use crate::logodds::{clamp_in_place, entropy_of, posterior_update_in_place, softmax, LogOdds, SensorParams};

const GRID_MAGIC: &[u8; 8] = b"SSMIGRID";
const GRID_VERSION: u16 = 1;

/// Cells traversed by one beam, in order from the sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RayTrace {
    pub cell_indices: Vec<usize>,
    /// Position of the hit cell within `cell_indices`.
    pub hit_index: Option<usize>,
    /// Chord length of the beam segment inside each cell, in meters.
    pub chords: Vec<f64>,
}

impl RayTrace {
    pub fn len(&self) -> usize {
        self.cell_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_indices.is_empty()
    }
}

/// Multi-class map over a regular grid. 2-D maps have depth 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    lattice: Lattice,
    prior: LogOdds,
    stride: usize,
    data: Vec<f64>,
}

impl GridMap {
    pub fn new(dims: [usize; 3], resolution: f64, origin: Point3, prior: LogOdds) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::BadDims(format!("{dims:?}")));
        }
        if !(resolution > 0.0) {
            return Err(Error::BadDims(format!("resolution {resolution}")));
        }
        let stride = prior.values().len();
        let n = dims[0] * dims[1] * dims[2];
        let mut data = Vec::with_capacity(n * stride);
        for _ in 0..n {
            data.extend_from_slice(prior.values());
        }
        Ok(GridMap {
            lattice: Lattice {
                origin,
                cell_size: resolution,
                dims,
            },
            prior,
            stride,
            data,
        })
    }

    pub fn new_2d(nx: usize, ny: usize, resolution: f64, prior: LogOdds) -> Result<Self> {
        Self::new([nx, ny, 1], resolution, [0.0; 3], prior)
    }

    pub fn num_classes(&self) -> usize {
        self.stride - 1
    }

    pub fn dims(&self) -> [usize; 3] {
        self.lattice.dims
    }

    pub fn resolution(&self) -> f64 {
        self.lattice.cell_size
    }

    pub fn origin(&self) -> Point3 {
        self.lattice.origin
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn prior(&self) -> &LogOdds {
        &self.prior
    }

    pub fn num_cells(&self) -> usize {
        self.lattice.len()
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.lattice.contains(c).then(|| self.lattice.linear(c))
    }

    pub fn cell_coords(&self, idx: usize) -> Cell {
        self.lattice.unlinear(idx)
    }

    pub fn cell(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.stride..(idx + 1) * self.stride]
    }

    pub fn set_cell(&mut self, idx: usize, h: &LogOdds) -> Result<()> {
        if h.values().len() != self.stride {
            return Err(Error::ClassCountMismatch {
                expected: self.num_classes(),
                got: h.num_classes(),
            });
        }
        if idx >= self.num_cells() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: self.num_cells(),
            });
        }
        self.data[idx * self.stride..(idx + 1) * self.stride].copy_from_slice(h.values());
        Ok(())
    }

    pub fn is_prior(&self, idx: usize) -> bool {
        self.cell(idx) == self.prior.values()
    }

    pub fn cast_ray(&self, beam: &BeamMeasurement) -> Result<RayTrace> {
        let ray = LatticeRay::new(&self.lattice, beam)?;
        let end = beam.point_at(beam.max_range);
        let mut cell_indices = Vec::with_capacity(ray.len);
        let mut chords = Vec::with_capacity(ray.len);
        for c in ray.cells() {
            cell_indices.push(self.lattice.linear(c));
            chords.push(self.lattice.chord(c, beam.origin, end));
        }
        Ok(RayTrace {
            cell_indices,
            hit_index: ray.hit,
            chords,
        })
    }

    /// Bayesian update of every cell the beam traverses up to its endpoint.
    pub fn integrate(&mut self, beam: &BeamMeasurement, params: &SensorParams) -> Result<()> {
        params.check_classes(self.num_classes())?;
        let trace = self.cast_ray(beam)?;
        let hit = match trace.hit_index {
            Some(i) => Some((i, params.hit_vector(beam.category)?)),
            None => None,
        };
        let free_end = hit.as_ref().map_or(trace.len(), |(i, _)| *i);
        let phi_minus = params.phi_minus().values();
        for &idx in &trace.cell_indices[..free_end] {
            self.update_cell(idx, phi_minus, params);
        }
        if let Some((i, l)) = hit {
            self.update_cell(trace.cell_indices[i], l.values(), params);
        }
        Ok(())
    }

    fn update_cell(&mut self, idx: usize, l: &[f64], params: &SensorParams) {
        let cell = &mut self.data[idx * self.stride..(idx + 1) * self.stride];
        posterior_update_in_place(cell, l, self.prior.values());
        clamp_in_place(cell, params);
    }

    /// Probability that the beam first hits at trace position `n` (1-based)
    /// with the cell holding class `y`.
    pub fn beam_likelihood(&self, trace: &RayTrace, n: usize, y: usize) -> Result<f64> {
        if n == 0 || n > trace.len() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: trace.len(),
            });
        }
        if y == 0 || y > self.num_classes() {
            return Err(Error::InvalidClass {
                class: y,
                max: self.num_classes(),
            });
        }
        let mut p = 1.0;
        for &idx in &trace.cell_indices[..n - 1] {
            p *= softmax(self.cell(idx))[0];
        }
        Ok(p * softmax(self.cell(trace.cell_indices[n - 1]))[y])
    }

    /// Sum of per-cell entropies over `region` (all cells when `None`).
    pub fn map_entropy(&self, region: Option<&[usize]>) -> f64 {
        match region {
            Some(cells) => cells.iter().map(|&i| entropy_of(self.cell(i))).sum(),
            None => (0..self.num_cells()).map(|i| entropy_of(self.cell(i))).sum(),
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&GRID_VERSION.to_le_bytes())?;
        for d in self.lattice.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.lattice.cell_size.to_le_bytes())?;
        w.write_all(&(self.num_classes() as u16).to_le_bytes())?;
        write_f64_vec(&mut w, &self.lattice.origin)?;
        write_f64_vec(&mut w, &self.prior.values()[1..])?;
        for cell in self.data.chunks(self.stride) {
            for v in &cell[1..] {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Format("not an SSMIGRID file".into()));
        }
        let version = read_u16(&mut r)?;
        if version != GRID_VERSION {
            return Err(Error::Format(format!("unsupported grid version {version}")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = read_u32(&mut r)? as usize;
        }
        let resolution = read_f64(&mut r)?;
        let k = read_u16(&mut r)? as usize;
        let o = read_f64_vec(&mut r, 3)?;
        let prior = LogOdds::from_nonfree(&read_f64_vec(&mut r, k)?)?;
        let mut map = GridMap::new(dims, resolution, [o[0], o[1], o[2]], prior)?;
        for cell in map.data.chunks_mut(k + 1) {
            cell[0] = 0.0;
            for v in &mut cell[1..] {
                *v = read_f32(&mut r)? as f64;
            }
        }
        Ok(map)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GridDoc {
            dims: self.lattice.dims,
            resolution: self.lattice.cell_size,
            origin: self.lattice.origin,
            prior: self.prior.clone(),
            cells: self.data.chunks(self.stride).map(|c| c.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GridDoc = serde_json::from_str(s)?;
        let mut map = GridMap::new(doc.dims, doc.resolution, doc.origin, doc.prior)?;
        if doc.cells.len() != map.num_cells() {
            return Err(Error::Format(format!(
                "expected {} cells, got {}",
                map.num_cells(),
                doc.cells.len()
            )));
        }
        for (i, c) in doc.cells.into_iter().enumerate() {
            map.set_cell(i, &LogOdds::new(c)?)?;
        }
        Ok(map)
    }
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    dims: [usize; 3],
    resolution: f64,
    origin: Point3,
    prior: LogOdds,
    cells: Vec<Vec<f64>>,
}
