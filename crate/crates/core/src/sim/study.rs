//! Run counts versus element counts of octree rays across resolutions.

use std::io::Write;
use std::time::Instant;

use crate::error::Result;
use crate::geometry::BeamMeasurement;
use crate::logodds::{LogOdds, SensorParams};
use crate::mi::beam_mi_srle;
use crate::octree::{SemanticOctree, TruncatedSemantics};
use crate::planner::scan_beams;
use crate::sim::config::Config;
use crate::sim::env::Environment;
use crate::sim::sensor::{sense, Pose};
use crate::sim::{stream, Stream};

/// Corridor world extent in meters.
pub const CORRIDOR_EXTENT: [f64; 3] = [16.0, 4.0, 4.0];

/// A 16 m corridor with a 2 m × 2 m bore, solid walls, a floor and an end
/// wall, sampled at `per_meter` elements per meter.
pub fn corridor_env(per_meter: f64, num_classes: usize) -> Result<Environment> {
    let size = 1.0 / per_meter;
    let dims = CORRIDOR_EXTENT.map(|e| (e * per_meter).round() as usize);
    let class = |c: u8| (c - 1) % num_classes as u8 + 1;
    let mut classes = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [
                    (x as f64 + 0.5) * size,
                    (y as f64 + 0.5) * size,
                    (z as f64 + 0.5) * size,
                ];
                let c = if p[0] >= 15.0 {
                    class(2)
                } else if p[0] >= 1.0 && (1.0..3.0).contains(&p[1]) && (1.0..3.0).contains(&p[2]) {
                    0
                } else if p[2] < 1.0 {
                    class(3)
                } else {
                    class(1)
                };
                classes.push(c);
            }
        }
    }
    Environment::from_classes(dims, size, num_classes, classes)
}

fn tree_for(env: &Environment, params: &SensorParams) -> Result<SemanticOctree> {
    let side = env.dims().iter().copied().max().unwrap_or(1).next_power_of_two();
    let prior = LogOdds::uniform(env.num_classes());
    SemanticOctree::new(
        side.trailing_zeros() as u8,
        env.resolution(),
        [0.0; 3],
        prior,
        params.clone(),
    )
}

/// Octree holding the saturated truth of every environment cell; space
/// outside the environment stays at the prior.
pub fn truth_octree(env: &Environment, params: &SensorParams) -> Result<SemanticOctree> {
    let mut tree = tree_for(env, params)?;
    let (lo, hi) = (params.clamp_lo(), params.clamp_hi());
    let k = env.num_classes();
    let values: Vec<TruncatedSemantics> = (0..=k)
        .map(|c| {
            let v: Vec<f64> = (0..=k)
                .map(|j| {
                    if j == 0 {
                        0.0
                    } else if j == c {
                        hi[j]
                    } else {
                        lo[j]
                    }
                })
                .collect();
            LogOdds::new(v).map(|h| TruncatedSemantics::from_full(&h))
        })
        .collect::<Result<_>>()?;
    for idx in 0..env.num_cells() {
        tree.set_element(env.coords(idx), values[env.class(idx) as usize].clone())?;
    }
    tree.prune();
    Ok(tree)
}

/// Planar fan down the corridor from its near end, at mid height.
pub fn corridor_probes(beams: usize, spread_deg: f64, max_range: f64) -> Vec<BeamMeasurement> {
    scan_beams([1.5, 2.0, 2.0], 0.0, beams, spread_deg, max_range)
}

/// Runs `Q` and elements `N` of each beam as the planner would see it.
pub fn ray_stats(tree: &SemanticOctree, beams: &[BeamMeasurement]) -> Result<Vec<(usize, usize)>> {
    beams
        .iter()
        .map(|b| {
            let ray = tree.raycast_srle(b)?.skip_first();
            Ok((ray.num_runs(), ray.num_elements()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    /// Elements per meter.
    pub resolution: f64,
    pub rays: usize,
    pub mean_q: f64,
    pub std_q: f64,
    pub mean_n: f64,
    pub std_n: f64,
    /// Time spent evaluating mutual information, seconds.
    pub mi_seconds: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Maps the corridor at each swept resolution by walking its center line
/// `iterations` times, recording the run and element count of every
/// planning ray cast along the way.
pub fn srle_study(cfg: &Config) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let params = cfg.params()?;
    let mut rows = Vec::new();
    for &res in &cfg.sweep.resolutions {
        let env = corridor_env(res, cfg.env.classes)?;
        let mut tree = tree_for(&env, &params)?.with_fusion(cfg.model.fusion);
        let mut rng = stream(cfg.seed, Stream::Sensor);
        let (mut qs, mut ns) = (Vec::new(), Vec::new());
        let mut mi_seconds = 0.0;
        for _ in 0..cfg.sweep.iterations {
            let mut x = 1.5;
            while x < 15.0 {
                let pose = Pose {
                    position: [x, 2.0, 2.0],
                    heading: 0.0,
                };
                tree.insert_scan(&sense(&env, &pose, &cfg.sensor, &mut rng)?)?;
                let probes = scan_beams(
                    pose.position,
                    0.0,
                    cfg.planner.beams,
                    cfg.planner.fov_deg,
                    cfg.planner.max_range,
                );
                let t0 = Instant::now();
                for b in &probes {
                    let ray = tree.raycast_srle(b)?.skip_first();
                    beam_mi_srle(&ray, &params)?;
                    qs.push(ray.num_runs() as f64);
                    ns.push(ray.num_elements() as f64);
                }
                mi_seconds += t0.elapsed().as_secs_f64();
                x += 1.0;
            }
        }
        let (mean_q, std_q) = mean_std(&qs);
        let (mean_n, std_n) = mean_std(&ns);
        rows.push(StudyRow {
            resolution: res,
            rays: qs.len(),
            mean_q,
            std_q,
            mean_n,
            std_n,
            mi_seconds,
        });
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], mut w: W, config_hash: &str) -> Result<()> {
    writeln!(w, "# config-hash: {config_hash}")?;
    writeln!(w, "resolution_per_m,rays,mean_q,std_q,mean_n,std_n,mi_seconds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.6}",
            r.resolution, r.rays, r.mean_q, r.std_q, r.mean_n, r.std_n, r.mi_seconds
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_corridor_has_few_runs() {
        let params = SensorParams::default_profile(3);
        let probes = corridor_probes(9, 60.0, 12.0);
        let mut n_first = 0.0;
        let mut n_last = 0.0;
        for res in [1.0, 2.0, 4.0] {
            let env = corridor_env(res, 3).unwrap();
            let tree = truth_octree(&env, &params).unwrap();
            let stats = ray_stats(&tree, &probes).unwrap();
            for &(q, n) in &stats {
                assert!(q <= 3 && q <= n, "res {res}: q={q} n={n}");
            }
            let mean_n = stats.iter().map(|s| s.1 as f64).sum::<f64>() / stats.len() as f64;
            if res == 1.0 {
                n_first = mean_n;
            }
            n_last = mean_n;
        }
        assert!(n_last / n_first > 3.5);
    }

    #[test]
    fn fresh_tree_is_one_run() {
        let params = SensorParams::default_profile(2);
        for res in [1.0, 2.0] {
            let env = corridor_env(res, 2).unwrap();
            let tree = tree_for(&env, &params).unwrap();
            for (q, _) in ray_stats(&tree, &corridor_probes(5, 90.0, 10.0)).unwrap() {
                assert_eq!(q, 1);
            }
        }
    }

    #[test]
    fn study_rows() {
        let cfg = Config::from_toml("[sweep]\nresolutions = [1.0, 2.0]\niterations = 2\n").unwrap();
        let rows = srle_study(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].mean_n > rows[0].mean_n);
        assert!(rows.iter().all(|r| r.mean_q <= r.mean_n && r.rays > 0));
        let mut out = Vec::new();
        write_study_csv(&rows, &mut out, &cfg.hash()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
    }
}
