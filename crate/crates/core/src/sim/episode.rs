//! The closed sense, map, plan and move loop.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{Cell, Point3};
use crate::planner::{select_plan, selector_registry, NavGrid, PlanOutcome, Selector};
use crate::sim::config::Config;
use crate::sim::env::{generate_env, Environment};
use crate::sim::mapper::{mapper_registry, MapSpec, Mapper};
use crate::sim::sensor::{sense, Pose};
use crate::sim::{stream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub distance: f64,
    pub entropy: f64,
    pub explored: f64,
    pub plan_mi: f64,
    pub candidates: usize,
    /// Wall-clock planning time in seconds; kept out of the metrics file.
    pub plan_time: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPrecision {
    pub class: usize,
    /// Known cells whose most likely class is `class`.
    pub predicted: usize,
    /// Of those, cells whose true class is `class`.
    pub correct: usize,
}

impl ClassPrecision {
    pub fn precision(&self) -> Option<f64> {
        (self.predicted > 0).then(|| self.correct as f64 / self.predicted as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Reached the configured explored fraction.
    Explored,
    NoFrontiers,
    /// Frontiers remain but none can be reached.
    Unreachable,
    StepCap,
    Aborted(String),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Explored => f.write_str("explored"),
            Outcome::NoFrontiers => f.write_str("no-frontiers"),
            Outcome::Unreachable => f.write_str("unreachable"),
            Outcome::StepCap => f.write_str("step-cap"),
            Outcome::Aborted(e) => write!(f, "aborted: {e}"),
        }
    }
}

pub struct Episode {
    pub rows: Vec<MetricsRow>,
    pub precision: Vec<ClassPrecision>,
    pub outcome: Outcome,
    pub env_hash: String,
    pub config_hash: String,
    /// One line per evaluated candidate per cycle.
    pub plan_log: Vec<String>,
    pub mapper: Box<dyn Mapper>,
}

impl Episode {
    /// Distance traveled when the explored fraction first reached `frac`.
    pub fn distance_at(&self, frac: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.explored >= frac).map(|r| r.distance)
    }

    pub fn final_explored(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.explored)
    }

    pub fn write_metrics<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config-hash: {}", self.config_hash)?;
        writeln!(w, "# env-hash: {}", self.env_hash)?;
        writeln!(
            w,
            "step,distance_m,map_entropy_nats,explored_fraction,plan_mi_nats,candidates"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.9e},{}",
                r.step, r.distance, r.entropy, r.explored, r.plan_mi, r.candidates
            )?;
        }
        Ok(())
    }

    pub fn write_timing<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config-hash: {}", self.config_hash)?;
        writeln!(w, "step,plan_time_s")?;
        for r in &self.rows {
            writeln!(w, "{},{:.6}", r.step, r.plan_time)?;
        }
        Ok(())
    }

    pub fn write_precision<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config-hash: {}", self.config_hash)?;
        writeln!(w, "class,predicted,correct,precision")?;
        for p in &self.precision {
            let v = p.precision().map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
            writeln!(w, "{},{},{},{v}", p.class, p.predicted, p.correct)?;
        }
        Ok(())
    }

    pub fn write_plan_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config-hash: {}", self.config_hash)?;
        writeln!(w, "cycle,frontier,frontier_size,cost_m,mi_nats,score,chosen")?;
        for l in &self.plan_log {
            w.write_all(l.as_bytes())?;
        }
        Ok(())
    }
}

/// Generates the configured environment and explores it.
pub fn run_episode(cfg: &Config) -> Result<Episode> {
    let env = generate_env(
        cfg.seed,
        cfg.env.profile,
        cfg.env.dims,
        cfg.env.classes,
        cfg.env.occupancy,
    )?
    .with_resolution(cfg.env.resolution)?;
    run_episode_in(&env, cfg)
}

struct Loop<'a> {
    env: &'a Environment,
    cfg: &'a Config,
    observable: Vec<Cell>,
    pose: Pose,
    distance: f64,
    rng: rand_chacha::ChaCha8Rng,
    mapper: Box<dyn Mapper>,
    rows: Vec<MetricsRow>,
    plan_log: Vec<String>,
}

impl Loop<'_> {
    fn observe(&mut self) -> Result<()> {
        let beams = sense(self.env, &self.pose, &self.cfg.sensor, &mut self.rng)?;
        self.mapper.integrate(&beams)
    }

    fn explored(&self) -> Result<f64> {
        if self.observable.is_empty() {
            return Ok(1.0);
        }
        let mut known = 0usize;
        for &c in &self.observable {
            known += self.mapper.is_known(c)? as usize;
        }
        Ok(known as f64 / self.observable.len() as f64)
    }

    fn walk(&mut self, nav: &NavGrid, plan: &PlanOutcome) -> Result<()> {
        let cells = &plan.best.path.cells;
        let stride = self.cfg.planner.pose_stride.max(1);
        let z = self.pose.position[2];
        if cells.len() == 1 {
            return self.observe();
        }
        let lattice = self.env.lattice();
        for (i, &c) in cells.iter().enumerate().skip(1) {
            let [x, y] = nav.center(c);
            let next: Point3 = [x, y, z];
            if self.env.class_at(lattice.cell_of(next)) != Some(0) {
                // the map was wrong about this cell; look again from here
                return self.observe();
            }
            let (dx, dy) = (next[0] - self.pose.position[0], next[1] - self.pose.position[1]);
            self.distance += dx.hypot(dy);
            self.pose = Pose {
                position: next,
                heading: dy.atan2(dx),
            };
            if i % stride == 0 || i + 1 == cells.len() {
                self.observe()?;
            }
        }
        Ok(())
    }

    fn run(&mut self, selector: &dyn Selector) -> Result<Outcome> {
        let params = self.cfg.params()?;
        let mut pcfg = self.cfg.planner.clone();
        pcfg.sensor_height = self.pose.position[2];
        for step in 1..=self.cfg.episode.max_steps {
            if self.explored()? >= self.cfg.episode.stop_explored {
                return Ok(Outcome::Explored);
            }
            let nav = self.mapper.nav()?;
            let start = nav
                .cell_at([self.pose.position[0], self.pose.position[1]])
                .ok_or(Error::OriginOutOfBounds)?;
            let t0 = Instant::now();
            let plan = match select_plan(self.mapper.belief(), &nav, start, &params, selector, &pcfg) {
                Ok(p) => p,
                Err(Error::NoFrontiers) => return Ok(Outcome::NoFrontiers),
                Err(Error::AllUnreachable) => return Ok(Outcome::Unreachable),
                Err(e) => return Err(e),
            };
            let plan_time = t0.elapsed().as_secs_f64();
            let mut log = Vec::new();
            plan.write_log(&mut log, step)?;
            self.plan_log.push(String::from_utf8(log).expect("ascii log"));
            self.walk(&nav, &plan)?;
            log::debug!(
                "step {step}: {} candidates, frontier {} at cost {:.2} with mi {:.4}",
                plan.candidates.len(),
                plan.best.frontier,
                plan.best.path.cost,
                plan.best.mi
            );
            self.rows.push(MetricsRow {
                step,
                distance: self.distance,
                entropy: self.mapper.entropy(),
                explored: self.explored()?,
                plan_mi: plan.best.mi,
                candidates: plan.candidates.len(),
                plan_time,
            });
        }
        Ok(if self.explored()? >= self.cfg.episode.stop_explored {
            Outcome::Explored
        } else {
            Outcome::StepCap
        })
    }
}

/// Explores `env` from its first spawn cell. Failures after setup end the
/// episode early with the rows gathered so far.
pub fn run_episode_in(env: &Environment, cfg: &Config) -> Result<Episode> {
    cfg.validate()?;
    if env.num_classes() != cfg.env.classes {
        return Err(Error::ClassCountMismatch {
            expected: cfg.env.classes,
            got: env.num_classes(),
        });
    }
    let selector = selector_registry().create(&cfg.selector)?;
    let spec = MapSpec {
        dims: env.dims(),
        resolution: env.resolution(),
        prior: cfg.prior(),
        params: cfg.params()?,
        fusion: cfg.model.fusion,
        nav_band: 0..1,
    };
    let mapper = mapper_registry().create(&cfg.mapper)?.build(&spec)?;
    let spawn = *env
        .spawn()
        .first()
        .ok_or_else(|| Error::BadDims("environment has no spawn cell".into()))?;
    let lattice = env.lattice();
    let mut origin = lattice.center(env.coords(spawn));
    origin[2] = 0.5 * env.resolution();
    let mut state = Loop {
        env,
        cfg,
        observable: env.observable().into_iter().map(|i| env.coords(i)).collect(),
        pose: Pose {
            position: origin,
            heading: 0.0,
        },
        distance: 0.0,
        rng: stream(cfg.seed, Stream::Sensor),
        mapper,
        rows: Vec::new(),
        plan_log: Vec::new(),
    };
    let outcome = if cfg.episode.max_steps == 0 {
        Outcome::StepCap
    } else {
        match state.observe().and_then(|_| state.run(selector.as_ref())) {
            Ok(o) => o,
            Err(e) => Outcome::Aborted(e.to_string()),
        }
    };
    log::info!("episode ended ({outcome}) after {} steps", state.rows.len());
    let precision = class_precision(env, state.mapper.as_ref())?;
    Ok(Episode {
        rows: state.rows,
        precision,
        outcome,
        env_hash: env.hash(),
        config_hash: cfg.hash(),
        plan_log: state.plan_log,
        mapper: state.mapper,
    })
}

fn class_precision(env: &Environment, mapper: &dyn Mapper) -> Result<Vec<ClassPrecision>> {
    let k = env.num_classes();
    let mut out: Vec<ClassPrecision> = (1..=k)
        .map(|class| ClassPrecision {
            class,
            predicted: 0,
            correct: 0,
        })
        .collect();
    for idx in 0..env.num_cells() {
        let c = env.coords(idx);
        if !mapper.is_known(c)? {
            continue;
        }
        let label = mapper.belief_at(c)?.argmax();
        if label == 0 {
            continue;
        }
        out[label - 1].predicted += 1;
        if env.class(idx) as usize == label {
            out[label - 1].correct += 1;
        }
    }
    Ok(out)
}
