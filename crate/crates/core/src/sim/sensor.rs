//! Noisy range-category sensor over a ground-truth environment.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BeamMeasurement, Point3};
use crate::planner::scan_beams;
use crate::sim::env::Environment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub beams: usize,
    pub fov_deg: f64,
    pub max_range: f64,
    /// Standard deviation of additive range noise, meters.
    pub range_sigma: f64,
    /// Probability that a hit reports a wrong class, uniform over the others.
    pub misclassification: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            beams: 32,
            fov_deg: 360.0,
            max_range: 6.0,
            range_sigma: 0.0,
            misclassification: 0.0,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beams == 0 {
            return Err(Error::InvalidParams("sensor needs at least one beam".into()));
        }
        if !(0.0..1.0).contains(&self.misclassification) {
            return Err(Error::InvalidParams(format!(
                "misclassification {} outside [0,1)",
                self.misclassification
            )));
        }
        if !(self.range_sigma >= 0.0) || !(self.max_range > 0.0) || !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err(Error::InvalidParams(
                "sensor range, noise or field of view out of range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Point3,
    pub heading: f64,
}

/// First structure cell along a ray by exact voxel traversal: the entry
/// distance and its class. `None` when nothing is hit within `max_range`
/// or the ray leaves the environment.
pub fn cast_truth(env: &Environment, origin: Point3, dir: Point3, max_range: f64) -> Option<(f64, u8)> {
    let res = env.resolution();
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        cell[a] = (origin[a] / res).floor() as i64;
        if dir[a] > 0.0 {
            step[a] = 1;
            t_max[a] = ((cell[a] + 1) as f64 * res - origin[a]) / dir[a];
            t_delta[a] = res / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (cell[a] as f64 * res - origin[a]) / dir[a];
            t_delta[a] = -res / dir[a];
        }
    }
    loop {
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        let t = t_max[a];
        if t > max_range {
            return None;
        }
        cell[a] += step[a];
        t_max[a] += t_delta[a];
        match env.class_at(cell) {
            None => return None,
            Some(0) => {}
            Some(c) => return Some((t, c)),
        }
    }
}

/// Reported class: the true one with probability `1 − ε`, otherwise one of
/// the other classes uniformly.
pub fn report_class<R: Rng>(true_class: usize, num_classes: usize, eps: f64, rng: &mut R) -> usize {
    if eps <= 0.0 || num_classes < 2 || rng.random::<f64>() >= eps {
        return true_class;
    }
    let other = rng.random_range(1..num_classes);
    if other >= true_class {
        other + 1
    } else {
        other
    }
}

/// One scan from `pose`.
pub fn sense<R: Rng>(env: &Environment, pose: &Pose, spec: &SensorSpec, rng: &mut R) -> Result<Vec<BeamMeasurement>> {
    let cell = env.lattice().cell_of(pose.position);
    if env.class_at(cell) != Some(0) {
        return Err(Error::PoseInObstacle);
    }
    let k = env.num_classes();
    let mut out = Vec::with_capacity(spec.beams);
    for probe in scan_beams(pose.position, pose.heading, spec.beams, spec.fov_deg, spec.max_range) {
        let mut beam = probe;
        if let Some((t, class)) = cast_truth(env, beam.origin, beam.direction, spec.max_range) {
            let mut r = t;
            if spec.range_sigma > 0.0 {
                r += spec.range_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let r = r.clamp(0.0, spec.max_range);
            if r < spec.max_range {
                beam.range = r;
                beam.category = report_class(class as usize, k, spec.misclassification, rng);
            }
        }
        out.push(beam);
    }
    Ok(out)
}
