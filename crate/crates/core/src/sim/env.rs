//! Synthetic ground-truth environments.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Lattice};
use crate::sim::{stream, Stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvProfile {
    #[default]
    Random,
    Structured,
}

/// Corridor-and-blocks layout, top row first. Digits are classes.
const STRUCTURED_LAYOUT: [&str; 32] = [
    "11111111111111111111111111111111",
    "1..............2...............1",
    "1..............2...............1",
    "1..333.........2.......3333....1",
    "1..333.........2.......3333....1",
    "1..............................1",
    "1..............................1",
    "1222222222....22222222....222221",
    "1.........................2....1",
    "1.........................2....1",
    "1...1111.........33.......2....1",
    "1...1111.........33.......2....1",
    "1.........................2....1",
    "1...........22............2....1",
    "1...........22.................1",
    "3333333....33333333333.....33331",
    "1..............................1",
    "1..............................1",
    "1...222.........1.....333......1",
    "1...222.........1.....333......1",
    "1...............1..............1",
    "1...............1..............1",
    "1.......3333333311111111.......1",
    "1..............................1",
    "1..............................1",
    "1...33.............222.........1",
    "1...33.............222.....11..1",
    "1..........1...............11..1",
    "1..........1...................1",
    "1..........1...................1",
    "1..........1...................1",
    "11111111111111111111111111111111",
];

/// Ground-truth class grid. Cell `x + nx * (y + ny * z)` holds class 0
/// (free) or `1..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    dims: [usize; 3],
    resolution: f64,
    num_classes: usize,
    classes: Vec<u8>,
    /// Free cells with a free 3×3 neighborhood; the first is the start.
    spawn: Vec<usize>,
}

impl Environment {
    /// Builds an environment from rows of `.` (free) and class digits,
    /// top row first, extruded over `nz` layers.
    pub fn from_ascii(rows: &[&str], resolution: f64, num_classes: usize, nz: usize) -> Result<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, |r| r.len());
        if nx == 0 || ny == 0 || nz == 0 || rows.iter().any(|r| r.len() != nx) {
            return Err(Error::BadDims("ragged or empty layout".into()));
        }
        check_classes(num_classes)?;
        let mut plane = vec![0u8; nx * ny];
        for (r, row) in rows.iter().enumerate() {
            let y = ny - 1 - r;
            for (x, ch) in row.chars().enumerate() {
                plane[x + nx * y] = match ch {
                    '.' => 0,
                    d @ '1'..='9' => {
                        let c = d as u8 - b'0';
                        if c as usize > num_classes {
                            return Err(Error::InvalidClass {
                                class: c as usize,
                                max: num_classes,
                            });
                        }
                        c
                    }
                    other => return Err(Error::Format(format!("unexpected layout character {other:?}"))),
                };
            }
        }
        let mut env = Environment::extrude([nx, ny, nz], resolution, num_classes, &plane);
        env.spawn = env.spawn_candidates();
        Ok(env)
    }

    /// Environment from a full class volume; it has no spawn cells.
    pub fn from_classes(dims: [usize; 3], resolution: f64, num_classes: usize, classes: Vec<u8>) -> Result<Self> {
        check_classes(num_classes)?;
        if classes.len() != dims[0] * dims[1] * dims[2] || classes.is_empty() {
            return Err(Error::BadDims(format!("{} classes for {dims:?}", classes.len())));
        }
        if let Some(&c) = classes.iter().find(|&&c| c as usize > num_classes) {
            return Err(Error::InvalidClass {
                class: c as usize,
                max: num_classes,
            });
        }
        Ok(Environment {
            dims,
            resolution,
            num_classes,
            classes,
            spawn: Vec::new(),
        })
    }

    fn extrude(dims: [usize; 3], resolution: f64, num_classes: usize, plane: &[u8]) -> Self {
        let mut classes = Vec::with_capacity(plane.len() * dims[2]);
        for _ in 0..dims[2] {
            classes.extend_from_slice(plane);
        }
        Environment {
            dims,
            resolution,
            num_classes,
            classes,
            spawn: Vec::new(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            origin: [0.0; 3],
            cell_size: self.resolution,
            dims: self.dims,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.classes.len()
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        let ok =
            c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && (c[0] as usize) < nx && (c[1] as usize) < ny && (c[2] as usize) < nz;
        ok.then(|| c[0] as usize + nx * (c[1] as usize + ny * c[2] as usize))
    }

    pub fn coords(&self, idx: usize) -> Cell {
        let [nx, ny, _] = self.dims;
        [(idx % nx) as i64, ((idx / nx) % ny) as i64, (idx / (nx * ny)) as i64]
    }

    pub fn class(&self, idx: usize) -> u8 {
        self.classes[idx]
    }

    /// Class at a cell; `None` outside the environment.
    pub fn class_at(&self, c: Cell) -> Option<u8> {
        self.index(c).map(|i| self.classes[i])
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn spawn(&self) -> &[usize] {
        &self.spawn
    }

    /// Short content hash of the geometry and classes.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for d in self.dims {
            h.update((d as u64).to_le_bytes());
        }
        h.update(self.resolution.to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        h.update(&self.classes);
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Bottom-layer cells reachable from the start plus the structure cells
    /// bordering them: the cells an exploration run can hope to observe.
    pub fn observable(&self) -> Vec<usize> {
        let [nx, ny, _] = self.dims;
        let Some(&start) = self.spawn.first() else {
            return Vec::new();
        };
        let reach = flood(&self.classes[..nx * ny], nx, ny, start);
        let mut out = Vec::new();
        for i in 0..nx * ny {
            if reach[i] {
                out.push(i);
                continue;
            }
            let (x, y) = ((i % nx) as i64, (i / nx) as i64);
            let near = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (a, b) = (x + dx, y + dy);
                    a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && reach[a as usize + nx * b as usize]
                })
            });
            if near {
                out.push(i);
            }
        }
        out
    }

    fn spawn_candidates(&self) -> Vec<usize> {
        let [nx, ny, _] = self.dims;
        (0..nx * ny)
            .filter(|&i| {
                let (x, y) = ((i % nx) as i64, (i / nx) as i64);
                (-1..=1).all(|dy| (-1..=1).all(|dx| self.class_at([x + dx, y + dy, 0]) == Some(0)))
            })
            .collect()
    }
}

fn check_classes(k: usize) -> Result<()> {
    if k == 0 || k > 9 {
        return Err(Error::InvalidParams(format!("environment classes {k} outside 1..=9")));
    }
    Ok(())
}

/// 4-connected free region containing `start`.
fn flood(plane: &[u8], nx: usize, ny: usize, start: usize) -> Vec<bool> {
    let mut seen = vec![false; nx * ny];
    if plane[start] != 0 {
        return seen;
    }
    seen[start] = true;
    let mut q = VecDeque::from([start]);
    while let Some(i) = q.pop_front() {
        let (x, y) = (i % nx, i / nx);
        let mut visit = |j: usize| {
            if !seen[j] && plane[j] == 0 {
                seen[j] = true;
                q.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < nx {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - nx);
        }
        if y + 1 < ny {
            visit(i + nx);
        }
    }
    seen
}

/// Closes diagonal gaps between structures and fills free pockets outside
/// the largest free region.
fn close_structures(plane: &mut [u8], nx: usize, ny: usize) {
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            let (a, b, c, d) = (x + nx * y, x + 1 + nx * y, x + nx * (y + 1), x + 1 + nx * (y + 1));
            if plane[a] != 0 && plane[d] != 0 && plane[b] == 0 && plane[c] == 0 {
                plane[b] = plane[a];
            } else if plane[b] != 0 && plane[c] != 0 && plane[a] == 0 && plane[d] == 0 {
                plane[a] = plane[b];
            }
        }
    }
    let mut label = vec![usize::MAX; nx * ny];
    let mut sizes = Vec::new();
    for s in 0..nx * ny {
        if plane[s] != 0 || label[s] != usize::MAX {
            continue;
        }
        let region = flood(plane, nx, ny, s);
        let id = sizes.len();
        let mut n = 0;
        for (i, r) in region.iter().enumerate() {
            if *r {
                label[i] = id;
                n += 1;
            }
        }
        sizes.push(n);
    }
    let Some(keep) = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
        return;
    };
    // pockets take the class of the first structure cell after them in scan order
    for i in 0..nx * ny {
        if plane[i] == 0 && label[i] != keep {
            let fill = (i..nx * ny)
                .chain(0..i)
                .map(|j| plane[j])
                .find(|&c| c != 0)
                .unwrap_or(1);
            plane[i] = fill;
        }
    }
}

/// Generates an environment; identical arguments give identical output.
pub fn generate_env(
    seed: u64,
    profile: EnvProfile,
    dims: [usize; 3],
    num_classes: usize,
    occupancy: f64,
) -> Result<Environment> {
    let [nx, ny, nz] = dims;
    if nx < 16 || ny < 16 || nz == 0 {
        return Err(Error::BadDims(format!("environment {nx}x{ny}x{nz} below 16x16")));
    }
    check_classes(num_classes)?;
    if !(0.0..1.0).contains(&occupancy) {
        return Err(Error::InvalidParams(format!("occupancy {occupancy} outside [0,1)")));
    }
    let mut rng = stream(seed, Stream::Env);
    let mut plane = vec![0u8; nx * ny];
    match profile {
        EnvProfile::Random => {
            for x in 0..nx {
                plane[x] = rng.random_range(1..=num_classes as u8);
                plane[x + nx * (ny - 1)] = rng.random_range(1..=num_classes as u8);
            }
            for y in 1..ny - 1 {
                plane[nx * y] = rng.random_range(1..=num_classes as u8);
                plane[nx - 1 + nx * y] = rng.random_range(1..=num_classes as u8);
            }
            let interior = ((nx - 2) * (ny - 2)) as f64;
            let mut filled = 0usize;
            let mut centers: Vec<(f64, f64)> = Vec::new();
            let min_dist = 4.0;
            // blocks keep two free cells to each other and to the border
            // walls, so no passage is a single cell wide
            for _ in 0..4000 {
                if filled as f64 >= occupancy * interior {
                    break;
                }
                let w = rng.random_range(2..=4usize);
                let h = rng.random_range(2..=4usize);
                let x0 = rng.random_range(3..nx - 3 - w);
                let y0 = rng.random_range(3..ny - 3 - h);
                let c = (x0 as f64 + w as f64 / 2.0, y0 as f64 + h as f64 / 2.0);
                if centers.iter().any(|p| (p.0 - c.0).hypot(p.1 - c.1) < min_dist) {
                    continue;
                }
                let clear = (y0 - 2..y0 + h + 2).all(|y| (x0 - 2..x0 + w + 2).all(|x| plane[x + nx * y] == 0));
                if !clear {
                    continue;
                }
                let class = rng.random_range(1..=num_classes as u8);
                for y in y0..y0 + h {
                    for x in x0..x0 + w {
                        plane[x + nx * y] = class;
                    }
                }
                centers.push(c);
                filled += w * h;
            }
        }
        EnvProfile::Structured => {
            let lh = STRUCTURED_LAYOUT.len();
            let lw = STRUCTURED_LAYOUT[0].len();
            for y in 0..ny {
                let row = STRUCTURED_LAYOUT[lh - 1 - y * lh / ny].as_bytes();
                for x in 0..nx {
                    let ch = row[x * lw / nx];
                    plane[x + nx * y] = if ch == b'.' {
                        0
                    } else {
                        (ch - b'1') % num_classes as u8 + 1
                    };
                }
            }
        }
    }
    close_structures(&mut plane, nx, ny);
    let mut env = Environment::extrude(dims, 1.0, num_classes, &plane);
    let mut spawn = env.spawn_candidates();
    if spawn.is_empty() {
        return Err(Error::BadDims("no free 3x3 spawn area".into()));
    }
    let first = spawn.remove(rng.random_range(0..spawn.len()));
    spawn.insert(0, first);
    env.spawn = spawn;
    Ok(env)
}

impl Environment {
    pub fn with_resolution(mut self, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::BadDims(format!("resolution {resolution}")));
        }
        self.resolution = resolution;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_grid() {
        let a = generate_env(7, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
        let b = generate_env(7, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let c = generate_env(8, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn binary_environment() {
        let e = generate_env(1, EnvProfile::Random, [24, 20, 1], 1, 0.2).unwrap();
        assert!(e.classes().iter().all(|&c| c <= 1));
        assert!(e.classes().contains(&1));
    }

    #[test]
    fn spawn_has_free_neighborhood() {
        for seed in 0..20 {
            for profile in [EnvProfile::Random, EnvProfile::Structured] {
                let e = generate_env(seed, profile, [32, 32, 1], 3, 0.2).unwrap();
                let s = e.coords(e.spawn()[0]);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        assert_eq!(e.class_at([s[0] + dx, s[1] + dy, 0]), Some(0));
                    }
                }
            }
        }
    }

    #[test]
    fn closed_and_connected() {
        for seed in 0..20 {
            let e = generate_env(seed, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
            let [nx, ny, _] = e.dims();
            let plane = &e.classes()[..nx * ny];
            // every free cell is reachable from the start
            let reach = flood(plane, nx, ny, e.spawn()[0]);
            assert!(plane.iter().zip(&reach).all(|(&c, &r)| c != 0 || r));
            // no diagonal-only gaps
            for y in 0..ny - 1 {
                for x in 0..nx - 1 {
                    let f = |dx: usize, dy: usize| plane[x + dx + nx * (y + dy)] != 0;
                    assert!(!(f(0, 0) && f(1, 1) && !f(1, 0) && !f(0, 1)));
                    assert!(!(f(1, 0) && f(0, 1) && !f(0, 0) && !f(1, 1)));
                }
            }
            // the border is structure
            assert!((0..nx).all(|x| plane[x] != 0 && plane[x + nx * (ny - 1)] != 0));
        }
    }

    #[test]
    fn occupancy_near_target() {
        let e = generate_env(3, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
        let inner: usize = (1..31)
            .flat_map(|y| (1..31).map(move |x| (x, y)))
            .filter(|&(x, y)| e.class_at([x, y, 0]) != Some(0))
            .count();
        let frac = inner as f64 / 900.0;
        assert!((0.1..0.4).contains(&frac), "{frac}");
    }

    #[test]
    fn structured_scales_and_maps_classes() {
        let e = generate_env(0, EnvProfile::Structured, [32, 32, 1], 3, 0.2).unwrap();
        assert_eq!(e.class_at([0, 0, 0]), Some(1));
        assert_eq!(e.class_at([4, 27, 0]), Some(3));
        let b = generate_env(0, EnvProfile::Structured, [32, 32, 1], 1, 0.2).unwrap();
        assert!(b.classes().iter().all(|&c| c <= 1));
        let big = generate_env(0, EnvProfile::Structured, [64, 64, 2], 3, 0.2).unwrap();
        assert_eq!(big.class_at([9, 55, 1]), Some(3));
    }

    #[test]
    fn ascii_and_observable() {
        let e = Environment::from_ascii(
            &["11111111", "1......1", "1......1", "1......1", "1..2...1", "11111111"],
            1.0,
            2,
            1,
        )
        .unwrap();
        assert_eq!(e.class_at([3, 1, 0]), Some(2));
        assert!(!e.spawn().is_empty());
        // the whole room: every wall cell touches the interior at least diagonally
        assert_eq!(e.observable().len(), 48);
        assert!(Environment::from_ascii(&["1x"], 1.0, 1, 1).is_err());
        assert!(generate_env(0, EnvProfile::Random, [8, 32, 1], 1, 0.2).is_err());
    }

    #[test]
    fn no_single_cell_passages() {
        for seed in 0..20 {
            let env = generate_env(seed, EnvProfile::Random, [32, 32, 1], 3, 0.2).unwrap();
            let solid = |x: i64, y: i64| env.class_at([x, y, 0]).is_none_or(|c| c != 0);
            for y in 0..32 {
                for x in 0..32 {
                    if !solid(x, y) {
                        assert!(!(solid(x - 1, y) && solid(x + 1, y)), "seed {seed} at ({x},{y})");
                        assert!(!(solid(x, y - 1) && solid(x, y + 1)), "seed {seed} at ({x},{y})");
                    }
                }
            }
        }
    }
}
