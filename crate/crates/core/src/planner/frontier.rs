use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::planner::nav::{NavCell, NavGrid};

pub const DEFAULT_MIN_FRONTIER_SIZE: usize = 3;

/// Connected cluster of known-free cells bordering unknown space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frontier {
    /// Member cells in increasing index order.
    pub cells: Vec<usize>,
    /// Member cell nearest to the cluster mean.
    pub centroid: usize,
}

impl Frontier {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn is_frontier_cell(nav: &NavGrid, idx: usize) -> bool {
    nav.is_free(idx) && nav.neighbors4(idx).any(|n| nav.get(n) == NavCell::Unknown)
}

/// Frontier clusters (8-connected), largest first, ties by lowest cell index.
pub fn find_frontiers(nav: &NavGrid, min_size: usize) -> Result<Vec<Frontier>> {
    let mut seen = vec![false; nav.len()];
    let mut out = Vec::new();
    for start in 0..nav.len() {
        if seen[start] || !is_frontier_cell(nav, start) {
            continue;
        }
        seen[start] = true;
        let mut cells = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in nav.neighbors8(c) {
                if !seen[n] && is_frontier_cell(nav, n) {
                    seen[n] = true;
                    cells.push(n);
                    queue.push_back(n);
                }
            }
        }
        if cells.len() < min_size {
            continue;
        }
        cells.sort_unstable();
        let (mut sx, mut sy) = (0.0, 0.0);
        for &c in &cells {
            let (x, y) = nav.coords(c);
            sx += x as f64;
            sy += y as f64;
        }
        let (mx, my) = (sx / cells.len() as f64, sy / cells.len() as f64);
        let dist = |c: usize| {
            let (x, y) = nav.coords(c);
            (x as f64 - mx).powi(2) + (y as f64 - my).powi(2)
        };
        let centroid = cells
            .iter()
            .copied()
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
            .expect("non-empty cluster");
        out.push(Frontier { cells, centroid });
    }
    if out.is_empty() {
        return Err(Error::NoFrontiers);
    }
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cells[0].cmp(&b.cells[0])));
    Ok(out)
}
