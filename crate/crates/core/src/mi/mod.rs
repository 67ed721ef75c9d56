//! Closed-form Shannon mutual information between range-category beams and a map.

pub mod dense;
pub mod oracle;
pub mod srle;

use std::collections::HashSet;
use std::io::Write;

pub use dense::{beam_mi_dense, beam_mi_dense_direct, beam_mi_dense_terms, BeamMi, MiTerm};
pub use oracle::{beam_mi_oracle, check_suite, CheckCase, CheckReport, MiInstance, OracleMi, SrleInstance};
pub use srle::{beam_mi_srle, beam_mi_srle_direct, beam_mi_srle_terms, SrleRay, SrleRun};

use crate::error::Result;
use crate::geometry::BeamMeasurement;
use crate::grid::GridMap;
use crate::logodds::{LogOdds, SensorParams};
use crate::octree::SemanticOctree;

/// Beliefs along one beam, excluding the sensor's own element.
#[derive(Clone, Debug, PartialEq)]
pub enum RayBelief {
    Dense(Vec<(LogOdds, LogOdds)>),
    Srle(SrleRay),
}

impl RayBelief {
    pub fn num_elements(&self) -> usize {
        match self {
            RayBelief::Dense(c) => c.len(),
            RayBelief::Srle(r) => r.num_elements(),
        }
    }

    pub fn mi(&self, params: &SensorParams) -> Result<f64> {
        if self.num_elements() == 0 {
            return Ok(0.0);
        }
        Ok(match self {
            RayBelief::Dense(c) => beam_mi_dense(dense::pairs(c), params)?.value,
            RayBelief::Srle(r) => beam_mi_srle(r, params)?.value,
        })
    }

    /// Free-versus-occupied view of the same beliefs.
    pub fn collapse_binary(self) -> RayBelief {
        match self {
            RayBelief::Dense(c) => RayBelief::Dense(
                c.into_iter()
                    .map(|(h, h0)| (h.collapse_binary(), h0.collapse_binary()))
                    .collect(),
            ),
            RayBelief::Srle(r) => RayBelief::Srle(r.map_beliefs(LogOdds::collapse_binary)),
        }
    }
}

/// Read-only map view for information queries.
pub trait BeliefMap: Sync {
    fn num_classes(&self) -> usize;

    /// Element indices traversed by the beam after the sensor's element, and
    /// the beliefs along them.
    fn cast_belief(&self, beam: &BeamMeasurement) -> Result<(Vec<usize>, RayBelief)>;
}

impl BeliefMap for GridMap {
    fn num_classes(&self) -> usize {
        GridMap::num_classes(self)
    }

    fn cast_belief(&self, beam: &BeamMeasurement) -> Result<(Vec<usize>, RayBelief)> {
        let trace = self.cast_ray(beam)?;
        let idx: Vec<usize> = trace.cell_indices[1..].to_vec();
        let cells = idx
            .iter()
            .map(|&i| {
                (
                    LogOdds::new(self.cell(i).to_vec()).expect("valid cell"),
                    self.prior().clone(),
                )
            })
            .collect();
        Ok((idx, RayBelief::Dense(cells)))
    }
}

impl BeliefMap for SemanticOctree {
    fn num_classes(&self) -> usize {
        SemanticOctree::num_classes(self)
    }

    fn cast_belief(&self, beam: &BeamMeasurement) -> Result<(Vec<usize>, RayBelief)> {
        let mut idx = self.trace_elements(beam)?;
        idx.remove(0);
        Ok((idx, RayBelief::Srle(self.raycast_srle(beam)?.skip_first())))
    }
}

/// Greedy cell-disjoint subset of traces, scanned in input order.
pub fn select_nonoverlapping<T: AsRef<[usize]>>(traces: &[T]) -> Vec<usize> {
    let mut used: HashSet<usize> = HashSet::new();
    let mut keep = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        let cells = t.as_ref();
        if cells.iter().all(|c| !used.contains(c)) {
            used.extend(cells.iter().copied());
            keep.push(i);
        }
    }
    keep
}

/// Mutual information of a set of poses, each with its beams.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrajectoryMi {
    pub value: f64,
    pub kept: usize,
    pub dropped: usize,
}

/// Which belief the objective is evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MiObjective {
    #[default]
    MultiClass,
    /// Occupancy only, with the sensor model collapsed the same way.
    Binary,
}

/// Sum of per-beam mutual information over a cell-disjoint subset of the
/// beams, chosen greedily by pose order then beam order.
pub fn trajectory_mi<M: BeliefMap + ?Sized>(
    map: &M,
    beams: &[Vec<BeamMeasurement>],
    params: &SensorParams,
    objective: MiObjective,
) -> Result<TrajectoryMi> {
    let mut traces = Vec::new();
    let mut beliefs = Vec::new();
    for pose in beams {
        for b in pose {
            let (t, belief) = map.cast_belief(b)?;
            traces.push(t);
            beliefs.push(belief);
        }
    }
    let keep = select_nonoverlapping(&traces);
    let binary_params;
    let params = match objective {
        MiObjective::MultiClass => params,
        MiObjective::Binary => {
            binary_params = params.collapse_binary();
            &binary_params
        }
    };
    let mut value = 0.0;
    for &i in &keep {
        let belief = std::mem::replace(&mut beliefs[i], RayBelief::Dense(Vec::new()));
        let belief = match objective {
            MiObjective::MultiClass => belief,
            MiObjective::Binary => belief.collapse_binary(),
        };
        value += belief.mi(params)?;
    }
    Ok(TrajectoryMi {
        value,
        kept: keep.len(),
        dropped: traces.len() - keep.len(),
    })
}

/// `count` planar beams evenly spaced over 360°, starting at heading 0.
pub fn beam_fan(origin: [f64; 3], count: usize, max_range: f64) -> Vec<BeamMeasurement> {
    (0..count)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / count as f64;
            BeamMeasurement::planar(origin, th, max_range)
        })
        .collect()
}

/// One value per cell of the bottom layer of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MiSurface {
    pub nx: usize,
    pub ny: usize,
    /// `None` for cells that were not evaluated.
    pub values: Vec<Option<f64>>,
}

impl MiSurface {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[x + self.nx * y]
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header_comments: &[String]) -> Result<()> {
        for c in header_comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "x,y,mi_nats")?;
        for y in 0..self.ny {
            for x in 0..self.nx {
                if let Some(v) = self.get(x, y) {
                    writeln!(w, "{x},{y},{v:.12e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Mutual information of a 360° fan at each selected cell center (z = 0 layer).
pub fn mi_surface(
    map: &GridMap,
    params: &SensorParams,
    fan: usize,
    max_range: f64,
    objective: MiObjective,
    select: impl Fn(usize) -> bool + Sync,
) -> Result<MiSurface> {
    use rayon::prelude::*;
    let [nx, ny, _] = map.dims();
    let values = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            if !select(idx) {
                return Ok(None);
            }
            let origin = map.lattice().center(map.cell_coords(idx));
            let beams = vec![beam_fan(origin, fan, max_range)];
            Ok(Some(trajectory_mi(map, &beams, params, objective)?.value))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MiSurface { nx, ny, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonoverlap_cases() {
        let parallel = vec![vec![1, 2, 3], vec![11, 12, 13], vec![21, 22]];
        assert_eq!(select_nonoverlapping(&parallel), vec![0, 1, 2]);
        let same = vec![vec![1, 2, 3], vec![1, 2, 3]];
        assert_eq!(select_nonoverlapping(&same), vec![0]);
    }

    #[test]
    fn fan_subset_is_disjoint() {
        let map = GridMap::new_2d(21, 21, 1.0, LogOdds::uniform(2)).unwrap();
        let fan = beam_fan([10.5, 10.5, 0.5], 8, 8.0);
        let traces: Vec<Vec<usize>> = fan.iter().map(|b| map.cast_belief(b).unwrap().0).collect();
        let keep = select_nonoverlapping(&traces);
        for (a, &i) in keep.iter().enumerate() {
            for &j in &keep[a + 1..] {
                assert!(traces[i].iter().all(|c| !traces[j].contains(c)));
            }
        }
        // every dropped beam intersects an earlier kept one
        for i in 0..traces.len() {
            if !keep.contains(&i) {
                assert!(keep
                    .iter()
                    .any(|&j| j < i && traces[j].iter().any(|c| traces[i].contains(c))));
            }
        }
    }

    #[test]
    fn single_beam_trajectory_equals_beam_mi() {
        let map = GridMap::new_2d(12, 12, 1.0, LogOdds::uniform(2)).unwrap();
        let params = SensorParams::default_profile(2);
        let beam = BeamMeasurement::planar([2.5, 2.5, 0.5], 0.3, 6.0);
        let t = trajectory_mi(&map, &[vec![beam.clone()]], &params, MiObjective::MultiClass).unwrap();
        let (_, belief) = map.cast_belief(&beam).unwrap();
        assert_eq!(t.value, belief.mi(&params).unwrap());
        assert_eq!((t.kept, t.dropped), (1, 0));
    }

    #[test]
    fn filtered_value_bounded_by_naive_sum() {
        let map = GridMap::new_2d(20, 20, 1.0, LogOdds::uniform(3)).unwrap();
        let params = SensorParams::default_profile(3);
        let poses = vec![beam_fan([5.5, 5.5, 0.5], 24, 6.0), beam_fan([7.5, 6.5, 0.5], 24, 6.0)];
        let t = trajectory_mi(&map, &poses, &params, MiObjective::MultiClass).unwrap();
        let naive: f64 = poses
            .iter()
            .flatten()
            .map(|b| map.cast_belief(b).unwrap().1.mi(&params).unwrap())
            .sum();
        assert!(t.value <= naive);
        assert!(t.dropped > 0);
    }

    #[test]
    fn octree_and_grid_agree() {
        let params = SensorParams::default_profile(2);
        let mut tree = SemanticOctree::new(4, 1.0, [0.0; 3], LogOdds::uniform(2), params.clone()).unwrap();
        let hit = BeamMeasurement::new([1.5, 1.5, 0.5], [1.0, 0.0, 0.0], 9.0, 2, 14.0).unwrap();
        tree.insert_scan(&[hit.clone(), hit]).unwrap();
        let grid = tree.to_element_grid().unwrap();
        let beams = vec![beam_fan([3.5, 2.5, 0.5], 16, 10.0)];
        let a = trajectory_mi(&tree, &beams, &params, MiObjective::MultiClass).unwrap();
        let b = trajectory_mi(&grid, &beams, &params, MiObjective::MultiClass).unwrap();
        assert_eq!((a.kept, a.dropped), (b.kept, b.dropped));
        assert!((a.value - b.value).abs() <= 1e-10 * b.value);
    }

    #[test]
    fn empty_map_surface_is_flat() {
        let map = GridMap::new_2d(30, 30, 1.0, LogOdds::uniform(2)).unwrap();
        let params = SensorParams::default_profile(2);
        let s = mi_surface(&map, &params, 12, 4.0, MiObjective::MultiClass, |i| {
            let c = map.cell_coords(i);
            (6..24).contains(&c[0]) && (6..24).contains(&c[1])
        })
        .unwrap();
        let v = s.get(10, 10).unwrap();
        for x in 6..24 {
            for y in 6..24 {
                assert_eq!(s.get(x, y).unwrap(), v);
            }
        }
        assert!(s.get(0, 0).is_none());
    }

    #[test]
    fn k1_binary_objective_is_identity() {
        let mut map = GridMap::new_2d(16, 16, 1.0, LogOdds::uniform(1)).unwrap();
        let params = SensorParams::default_profile(1);
        let b = BeamMeasurement::new([2.5, 2.5, 0.5], [1.0, 0.0, 0.0], 7.2, 1, 10.0).unwrap();
        map.integrate(&b, &params).unwrap();
        let s1 = mi_surface(&map, &params, 8, 6.0, MiObjective::MultiClass, |_| true).unwrap();
        let s2 = mi_surface(&map, &params, 8, 6.0, MiObjective::Binary, |_| true).unwrap();
        for (a, b) in s1.values.iter().zip(&s2.values) {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
