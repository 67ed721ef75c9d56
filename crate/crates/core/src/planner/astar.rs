use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::planner::nav::NavGrid;

/// Grid path with its metric length.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    pub cells: Vec<usize>,
    /// Length in meters; zero-length paths are charged one resolution unit.
    pub cost: f64,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected moves that do not cut obstacle corners.
pub(crate) fn moves(nav: &NavGrid, idx: usize, start: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let (x, y) = nav.coords(idx);
    let ok = move |i: usize| i == start || nav.is_free(i);
    (-1i64..=1)
        .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .filter_map(move |(dx, dy)| {
            let n = nav.index(x + dx, y + dy)?;
            if !ok(n) {
                return None;
            }
            if dx != 0 && dy != 0 {
                let a = nav.index(x + dx, y)?;
                let b = nav.index(x, y + dy)?;
                if !ok(a) || !ok(b) {
                    return None;
                }
                Some((n, std::f64::consts::SQRT_2))
            } else {
                Some((n, 1.0))
            }
        })
}

/// Cells reachable from `start` under the same moves as [`plan_path`].
pub fn reachable(nav: &NavGrid, start: usize) -> Vec<bool> {
    let mut seen = vec![false; nav.len()];
    if start >= nav.len() {
        return seen;
    }
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        for (n, _) in moves(nav, c, start) {
            if !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    seen
}

fn heuristic(nav: &NavGrid, a: usize, b: usize) -> f64 {
    let (ax, ay) = nav.coords(a);
    let (bx, by) = nav.coords(b);
    (((ax - bx).pow(2) + (ay - by).pow(2)) as f64).sqrt()
}

/// Shortest path through free cells; the start cell is always allowed.
pub fn plan_path(nav: &NavGrid, start: usize, goal: usize) -> Result<GridPath> {
    if start >= nav.len() || goal >= nav.len() {
        return Err(Error::IndexOutOfRange {
            index: start.max(goal),
            len: nav.len(),
        });
    }
    if start == goal {
        return Ok(GridPath {
            cells: vec![start],
            cost: nav.resolution,
        });
    }
    if !nav.is_free(goal) {
        return Err(Error::Unreachable);
    }
    let mut g = vec![f64::INFINITY; nav.len()];
    let mut parent = vec![usize::MAX; nav.len()];
    let mut closed = vec![false; nav.len()];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    open.push(Open {
        f: heuristic(nav, start, goal),
        g: 0.0,
        idx: start,
    });
    while let Some(Open { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal {
            let mut cells = vec![goal];
            let mut c = goal;
            while c != start {
                c = parent[c];
                cells.push(c);
            }
            cells.reverse();
            return Ok(GridPath {
                cells,
                cost: g[goal] * nav.resolution,
            });
        }
        for (n, w) in moves(nav, idx, start) {
            let cand = g[idx] + w;
            if cand < g[n] {
                g[n] = cand;
                parent[n] = idx;
                open.push(Open {
                    f: cand + heuristic(nav, n, goal),
                    g: cand,
                    idx: n,
                });
            }
        }
    }
    Err(Error::Unreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::nav::NavCell;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dijkstra(nav: &NavGrid, start: usize) -> Vec<f64> {
        let n = nav.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[start] = 0.0;
        for _ in 0..n {
            let mut best = None;
            for i in 0..n {
                if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                    best = Some(i);
                }
            }
            let Some(u) = best else { break };
            done[u] = true;
            for (v, w) in moves(nav, u, start) {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist
    }

    fn open_grid(nx: usize, ny: usize) -> NavGrid {
        NavGrid::from_cells(nx, ny, 0.5, vec![NavCell::Free; nx * ny]).unwrap()
    }

    #[test]
    fn start_equals_goal() {
        let nav = open_grid(4, 4);
        let p = plan_path(&nav, 5, 5).unwrap();
        assert_eq!(p.cells, vec![5]);
        assert_eq!(p.cost, 0.5);
    }

    #[test]
    fn straight_corridor() {
        let nav = open_grid(10, 1);
        let p = plan_path(&nav, 0, 9).unwrap();
        assert_eq!(p.cells, (0..10).collect::<Vec<_>>());
        assert!((p.cost - 4.5).abs() < 1e-12);
    }

    #[test]
    fn routes_around_wall() {
        let mut nav = open_grid(7, 7);
        for y in 0..6 {
            nav.set(3 + 7 * y, NavCell::Occupied(1));
        }
        let p = plan_path(&nav, 7, 7 + 6).unwrap();
        let d = dijkstra(&nav, 7);
        assert!((p.cost - d[13] * 0.5).abs() < 1e-9);
        assert!(p.cells.iter().all(|&c| nav.is_free(c)));
    }

    #[test]
    fn unknown_blocks() {
        let mut nav = open_grid(5, 1);
        nav.set(2, NavCell::Unknown);
        assert!(matches!(plan_path(&nav, 0, 4), Err(Error::Unreachable)));
    }

    #[test]
    fn matches_dijkstra_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let cells = (0..32 * 32)
                .map(|_| {
                    if rng.random_bool(0.25) {
                        NavCell::Occupied(1)
                    } else {
                        NavCell::Free
                    }
                })
                .collect();
            let nav = NavGrid::from_cells(32, 32, 1.0, cells).unwrap();
            let start = (0..nav.len()).find(|&i| nav.is_free(i)).unwrap();
            let d = dijkstra(&nav, start);
            for _ in 0..10 {
                let goal = rng.random_range(0..nav.len());
                match plan_path(&nav, start, goal) {
                    Ok(p) if goal != start => assert!((p.cost - d[goal]).abs() < 1e-9),
                    Ok(_) => {}
                    Err(_) => assert!(!d[goal].is_finite() || !nav.is_free(goal)),
                }
            }
        }
    }
}
