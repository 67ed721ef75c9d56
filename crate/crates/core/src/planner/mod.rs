//! Frontier extraction, grid path planning and information-per-cost selection.

mod astar;
mod frontier;
mod nav;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use astar::{plan_path, reachable, GridPath};
pub use frontier::{find_frontiers, is_frontier_cell, Frontier, DEFAULT_MIN_FRONTIER_SIZE};
pub use nav::{NavCell, NavGrid};

use crate::error::{Error, Result};
use crate::geometry::BeamMeasurement;
use crate::logodds::SensorParams;
use crate::mi::{trajectory_mi, BeliefMap, MiObjective};
use crate::registry::Registry;

/// Scores a candidate path to a frontier.
pub trait Selector: Send + Sync {
    fn name(&self) -> &'static str;
    /// Information objective to evaluate, or `None` when the score ignores it.
    fn objective(&self) -> Option<MiObjective>;
    fn score(&self, mi: f64, cost: f64, frontier_size: usize) -> f64;
}

/// Mutual information per meter over the full class belief.
pub struct SsmiSelector;

impl Selector for SsmiSelector {
    fn name(&self) -> &'static str {
        "ssmi"
    }
    fn objective(&self) -> Option<MiObjective> {
        Some(MiObjective::MultiClass)
    }
    fn score(&self, mi: f64, cost: f64, _: usize) -> f64 {
        mi / cost
    }
}

/// Largest frontier, ignoring information and distance.
pub struct FrontierSelector;

impl Selector for FrontierSelector {
    fn name(&self) -> &'static str {
        "frontier"
    }
    fn objective(&self) -> Option<MiObjective> {
        None
    }
    fn score(&self, _: f64, _: f64, frontier_size: usize) -> f64 {
        frontier_size as f64
    }
}

/// Occupancy-only mutual information per meter.
pub struct BinaryMiSelector;

impl Selector for BinaryMiSelector {
    fn name(&self) -> &'static str {
        "fsmi-binary"
    }
    fn objective(&self) -> Option<MiObjective> {
        Some(MiObjective::Binary)
    }
    fn score(&self, mi: f64, cost: f64, _: usize) -> f64 {
        mi / cost
    }
}

pub fn selector_registry() -> Registry<dyn Selector> {
    let mut r: Registry<dyn Selector> = Registry::new("selector");
    r.register("ssmi", || Box::new(SsmiSelector));
    r.register("frontier", || Box::new(FrontierSelector));
    r.register("fsmi-binary", || Box::new(BinaryMiSelector));
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub min_frontier_size: usize,
    /// Sense every `pose_stride` waypoints along a candidate path.
    pub pose_stride: usize,
    /// Beams per simulated scan when scoring.
    pub beams: usize,
    pub fov_deg: f64,
    pub max_range: f64,
    /// Height of the sensor above the map origin, in meters; set by the caller.
    #[serde(skip)]
    pub sensor_height: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            min_frontier_size: DEFAULT_MIN_FRONTIER_SIZE,
            pose_stride: 3,
            beams: 16,
            fov_deg: 360.0,
            max_range: 6.0,
            sensor_height: 0.5,
        }
    }
}

/// Beams of one scan centered on `heading`.
pub fn scan_beams(origin: [f64; 3], heading: f64, beams: usize, fov_deg: f64, max_range: f64) -> Vec<BeamMeasurement> {
    let fov = fov_deg.to_radians();
    let full = (fov_deg - 360.0).abs() < 1e-9;
    (0..beams)
        .map(|i| {
            let th = if full {
                heading + fov * i as f64 / beams as f64
            } else if beams == 1 {
                heading
            } else {
                heading - fov / 2.0 + fov * i as f64 / (beams - 1) as f64
            };
            BeamMeasurement::planar(origin, th, max_range)
        })
        .collect()
}

/// Waypoints where the robot senses along a path: every `stride`-th one
/// and the last, each with the heading of the path at that point.
pub fn sensing_poses(nav: &NavGrid, path: &GridPath, stride: usize) -> Vec<(usize, f64)> {
    let n = path.cells.len();
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx.into_iter()
        .map(|i| {
            let (a, b) = if i + 1 < n {
                (i, i + 1)
            } else {
                (i.saturating_sub(1), i)
            };
            let (ax, ay) = nav.coords(path.cells[a]);
            let (bx, by) = nav.coords(path.cells[b]);
            let heading = if a == b {
                0.0
            } else {
                ((by - ay) as f64).atan2((bx - ax) as f64)
            };
            (path.cells[i], heading)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePlan {
    pub frontier: usize,
    pub frontier_size: usize,
    pub path: GridPath,
    pub mi: f64,
    pub score: f64,
    pub poses: usize,
    pub dropped_beams: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub best: CandidatePlan,
    /// Every reachable candidate in frontier order.
    pub candidates: Vec<CandidatePlan>,
}

impl PlanOutcome {
    pub fn write_log<W: Write>(&self, mut w: W, cycle: usize) -> Result<()> {
        for c in &self.candidates {
            writeln!(
                w,
                "{cycle},{},{},{:.6},{:.9e},{:.9e},{}",
                c.frontier,
                c.frontier_size,
                c.path.cost,
                c.mi,
                c.score,
                (c.frontier == self.best.frontier) as u8
            )?;
        }
        Ok(())
    }
}

fn beats(a: &CandidatePlan, b: &CandidatePlan) -> bool {
    a.score > b.score
        || (a.score == b.score
            && (a.path.cost < b.path.cost || (a.path.cost == b.path.cost && a.frontier < b.frontier)))
}

/// Evaluates a path to every frontier and returns the best-scoring one.
/// The centroid when it can be reached, otherwise the reachable member
/// closest to it.
fn frontier_goal(nav: &NavGrid, f: &Frontier, reach: &[bool]) -> Option<usize> {
    if reach[f.centroid] {
        return Some(f.centroid);
    }
    let (cx, cy) = nav.coords(f.centroid);
    f.cells.iter().copied().filter(|&c| reach[c]).min_by_key(|&c| {
        let (x, y) = nav.coords(c);
        ((x - cx).pow(2) + (y - cy).pow(2), c)
    })
}

pub fn select_plan<M: BeliefMap + ?Sized>(
    map: &M,
    nav: &NavGrid,
    start: usize,
    params: &SensorParams,
    selector: &dyn Selector,
    cfg: &PlannerConfig,
) -> Result<PlanOutcome> {
    let frontiers = find_frontiers(nav, cfg.min_frontier_size)?;
    let reach = reachable(nav, start);
    let evaluated: Vec<Option<CandidatePlan>> = frontiers
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<Option<CandidatePlan>> {
            let Some(goal) = frontier_goal(nav, f, &reach) else {
                return Ok(None);
            };
            let path = match plan_path(nav, start, goal) {
                Ok(p) => p,
                Err(Error::Unreachable) => return Ok(None),
                Err(e) => return Err(e),
            };
            let poses = sensing_poses(nav, &path, cfg.pose_stride);
            let (mi, dropped) = match selector.objective() {
                Some(obj) => {
                    let beams: Vec<Vec<BeamMeasurement>> = poses
                        .iter()
                        .map(|&(c, th)| {
                            let [x, y] = nav.center(c);
                            scan_beams([x, y, cfg.sensor_height], th, cfg.beams, cfg.fov_deg, cfg.max_range)
                        })
                        .collect();
                    let t = trajectory_mi(map, &beams, params, obj)?;
                    (t.value, t.dropped)
                }
                None => (0.0, 0),
            };
            let score = selector.score(mi, path.cost, f.len());
            Ok(Some(CandidatePlan {
                frontier: i,
                frontier_size: f.len(),
                path,
                mi,
                score,
                poses: poses.len(),
                dropped_beams: dropped,
            }))
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<CandidatePlan> = evaluated.into_iter().flatten().collect();
    let mut best: Option<&CandidatePlan> = None;
    for c in &candidates {
        if best.is_none_or(|b| beats(c, b)) {
            best = Some(c);
        }
    }
    let best = best.ok_or(Error::AllUnreachable)?.clone();
    Ok(PlanOutcome { best, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMap;
    use crate::logodds::LogOdds;

    #[test]
    fn registry_names() {
        let r = selector_registry();
        assert_eq!(r.names(), vec!["frontier", "fsmi-binary", "ssmi"]);
        assert_eq!(r.create("ssmi").unwrap().name(), "ssmi");
        assert!(r.create("greedy").is_err());
    }

    #[test]
    fn poses_every_stride_plus_last() {
        let nav = NavGrid::from_cells(10, 1, 1.0, vec![NavCell::Free; 10]).unwrap();
        let path = plan_path(&nav, 0, 7).unwrap();
        let p = sensing_poses(&nav, &path, 3);
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 3, 6, 7]);
        assert!(p.iter().all(|x| x.1 == 0.0));
    }

    #[test]
    fn scan_fov() {
        let b = scan_beams([0.0; 3], 0.0, 3, 90.0, 5.0);
        assert!((b[0].direction[1] + (45f64).to_radians().sin()).abs() < 1e-12);
        assert!((b[2].direction[1] - (45f64).to_radians().sin()).abs() < 1e-12);
    }

    fn corridor_map() -> GridMap {
        // known free strip y in 4..7, unknown elsewhere; frontiers at both ends
        let mut g = GridMap::new_2d(30, 11, 1.0, LogOdds::uniform(2)).unwrap();
        let free = LogOdds::from_nonfree(&[-6.0, -6.0]).unwrap();
        for y in 4..7 {
            for x in 5..25 {
                g.set_cell(g.index([x, y, 0]).unwrap(), &free).unwrap();
            }
        }
        g
    }

    #[test]
    fn single_frontier_returned() {
        let mut g = corridor_map();
        let wall = LogOdds::from_nonfree(&[6.0, -6.0]).unwrap();
        for y in 3..8 {
            for x in 0..5 {
                g.set_cell(g.index([x, y, 0]).unwrap(), &wall).unwrap();
            }
        }
        for x in 0..30 {
            for y in [3, 7] {
                g.set_cell(g.index([x, y, 0]).unwrap(), &wall).unwrap();
            }
        }
        let nav = NavGrid::from_grid(&g, 0..1).unwrap();
        let params = SensorParams::default_profile(2);
        let start = nav.index(15, 5).unwrap();
        let out = select_plan(&g, &nav, start, &params, &SsmiSelector, &PlannerConfig::default()).unwrap();
        assert_eq!(out.candidates.len(), 1);
        assert!(out.best.score > 0.0);
    }

    #[test]
    fn uncertain_wall_wins_and_scaling_invariant() {
        let mut g = corridor_map();
        // shorten the corridor by one cell so both ends are nine cells from the start
        g.set_cell(g.index([24, 4, 0]).unwrap(), &LogOdds::uniform(2)).unwrap();
        g.set_cell(g.index([24, 5, 0]).unwrap(), &LogOdds::uniform(2)).unwrap();
        g.set_cell(g.index([24, 6, 0]).unwrap(), &LogOdds::uniform(2)).unwrap();
        let red = LogOdds::from_pmf(&crate::CategoricalPmf::new(vec![0.1, 0.8, 0.1]).unwrap()).unwrap();
        let green = LogOdds::from_pmf(&crate::CategoricalPmf::new(vec![0.1, 0.45, 0.45]).unwrap()).unwrap();
        let wall = LogOdds::from_nonfree(&[6.0, -6.0]).unwrap();
        // side walls close the corridor; unknown gaps lead to a wall at each end
        for x in 0..30 {
            for y in [3, 7] {
                g.set_cell(g.index([x, y, 0]).unwrap(), &wall).unwrap();
            }
        }
        for y in 4..7 {
            g.set_cell(g.index([2, y, 0]).unwrap(), &red).unwrap();
            g.set_cell(g.index([26, y, 0]).unwrap(), &green).unwrap();
        }
        let nav = NavGrid::from_grid(&g, 0..1).unwrap();
        let params = SensorParams::default_profile(2);
        // equal costs, so a tie would go to the red end at frontier 0
        let start = nav.index(14, 5).unwrap();
        let cfg = PlannerConfig {
            max_range: 6.0,
            ..Default::default()
        };
        let out = select_plan(&g, &nav, start, &params, &SsmiSelector, &cfg).unwrap();
        assert_eq!(out.candidates.len(), 2);
        assert_eq!(out.candidates[0].path.cost, out.candidates[1].path.cost);
        let best = nav.coords(out.best.path.cells[out.best.path.cells.len() - 1]);
        assert!(best.0 > 14, "chose {best:?} {:?}", out.candidates);

        struct Scaled;
        impl Selector for Scaled {
            fn name(&self) -> &'static str {
                "scaled"
            }
            fn objective(&self) -> Option<MiObjective> {
                Some(MiObjective::MultiClass)
            }
            fn score(&self, mi: f64, cost: f64, _: usize) -> f64 {
                7.5 * mi / cost
            }
        }
        let scaled = select_plan(&g, &nav, start, &params, &Scaled, &cfg).unwrap();
        assert_eq!(scaled.best.frontier, out.best.frontier);
        for c in &out.candidates {
            assert!(out.best.score >= c.score);
        }
    }

    #[test]
    fn no_frontiers_and_unreachable() {
        let g = GridMap::new_2d(6, 6, 1.0, LogOdds::from_nonfree(&[-6.0]).unwrap()).unwrap();
        let nav = NavGrid::from_grid(&g, 0..1).unwrap();
        let params = SensorParams::default_profile(1);
        // every cell equals the prior, so nothing is known-free
        assert!(matches!(
            select_plan(&g, &nav, 0, &params, &SsmiSelector, &PlannerConfig::default()),
            Err(Error::NoFrontiers)
        ));
        let mut cells = vec![NavCell::Unknown; 64];
        for i in [0, 1, 9] {
            cells[i] = NavCell::Free;
        }
        for i in 40..44 {
            cells[i] = NavCell::Free;
        }
        let mut nav2 = NavGrid::from_cells(8, 8, 1.0, cells).unwrap();
        nav2.set(10, NavCell::Occupied(1));
        nav2.set(2, NavCell::Occupied(1));
        nav2.set(17, NavCell::Occupied(1));
        nav2.set(8, NavCell::Occupied(1));
        let out = select_plan(&g, &nav2, 0, &params, &FrontierSelector, &PlannerConfig::default());
        assert!(matches!(out, Err(Error::AllUnreachable)), "{out:?}");
    }

    #[test]
    fn split_cluster_targets_reachable_member() {
        let rows = ["....#.?", "....#.?", "....#.?", "....#.?", ".....#?", "####?##"];
        let cells = rows
            .iter()
            .flat_map(|r| r.chars())
            .map(|c| match c {
                '.' => NavCell::Free,
                '#' => NavCell::Occupied(1),
                _ => NavCell::Unknown,
            })
            .collect();
        let nav = NavGrid::from_cells(7, 6, 1.0, cells).unwrap();
        let f = find_frontiers(&nav, 3).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(nav.coords(f[0].centroid), (5, 2));
        let g = GridMap::new_2d(7, 6, 1.0, LogOdds::uniform(1)).unwrap();
        let params = SensorParams::default_profile(1);
        let out = select_plan(&g, &nav, 0, &params, &FrontierSelector, &PlannerConfig::default()).unwrap();
        assert_eq!(nav.coords(*out.best.path.cells.last().unwrap()), (4, 4));
    }
}
