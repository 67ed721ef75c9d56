//! `ssmi`: exploration runs, information studies and map utilities.

mod maps;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use ssmi_core::mi::{beam_fan, check_suite, mi_surface, trajectory_mi, BeliefMap, CheckCase, MiObjective};
use ssmi_core::planner::selector_registry;
use ssmi_core::sim::scenes::TwoWallScene;
use ssmi_core::sim::study::write_study_csv;
use ssmi_core::sim::{mapper_registry, run_episode, srle_study, Config, Outcome};
use ssmi_core::{Error, SensorParams};

use crate::maps::{LoadedMap, Target};

#[derive(Parser)]
#[command(
    name = "ssmi",
    version,
    about = "Semantic occupancy mapping and information-driven exploration"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one exploration episode.
    Explore {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// ssmi | frontier | fsmi-binary
        #[arg(long)]
        selector: Option<String>,
        /// grid | octree
        #[arg(long)]
        mapper: Option<String>,
    },
    /// Mutual information of a beam fan at one cell of a saved map.
    MiEval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        x: i64,
        #[arg(long)]
        y: i64,
        #[arg(long, default_value_t = 0)]
        z: i64,
        #[arg(long, default_value_t = 16)]
        beams: usize,
        #[arg(long, default_value_t = 6.0)]
        range: f64,
        /// Evaluate occupancy-only information.
        #[arg(long)]
        binary: bool,
        /// Per-beam CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fan information at every free cell of a map's bottom layer.
    MiSurface {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
        map: Option<PathBuf>,
        /// Built-in scene: two-wall
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        beams: usize,
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        binary: bool,
    },
    /// Run and element counts of octree rays across resolutions.
    SrleStudy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "srle_study.csv")]
        out: PathBuf,
    },
    /// Compare the closed forms against brute-force references.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Directory for the summary and any failing instance.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Re-evaluate a saved failing instance against the tolerance it
        /// failed, or `--tolerance` when given explicitly.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Inspect or convert map files.
    Map {
        #[command(subcommand)]
        action: MapAction,
    },
}

#[derive(Subcommand)]
enum MapAction {
    Inspect {
        path: PathBuf,
    },
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        to: Target,
        /// Target cell or element size in meters.
        #[arg(long)]
        resolution: Option<f64>,
        /// Octree depth.
        #[arg(long)]
        depth: Option<u8>,
        #[command(flatten)]
        run: RunArgs,
    },
}

enum Failure {
    Usage(String),
    Check(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownStrategy { .. } | Error::InvalidParams(_) | Error::BadDims(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSMI_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            warn!("thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Explore {
            run,
            out,
            selector,
            mapper,
        } => explore(&run, &out, selector, mapper),
        Command::MiEval {
            run,
            map,
            x,
            y,
            z,
            beams,
            range,
            binary,
            out,
        } => mi_eval(&run, &map, [x, y, z], beams, range, binary, out.as_deref()),
        Command::MiSurface {
            run,
            map,
            scene,
            out,
            beams,
            range,
            binary,
        } => surface(&run, map.as_deref(), scene.as_deref(), &out, beams, range, binary),
        Command::SrleStudy { run, out } => study(&run, &out),
        Command::OracleCheck {
            trials,
            seed,
            tolerance,
            out,
            replay,
        } => match replay {
            Some(path) => replay_case(&path, tolerance),
            None => oracle_check(trials, seed, tolerance.unwrap_or(DEFAULT_TOLERANCE), &out),
        },
        Command::Map { action } => match action {
            MapAction::Inspect { path } => {
                let map = maps::load(&path, &Config::default())?;
                println!("{}", maps::describe(&map)?);
                Ok(())
            }
            MapAction::Convert {
                input,
                output,
                to,
                resolution,
                depth,
                run,
            } => {
                let cfg = load_config(&run)?;
                let map = maps::load(&input, &cfg)?;
                maps::convert(&map, &output, to, resolution, depth, &cfg)?;
                Ok(())
            }
        },
    }
}

fn load_config(run: &RunArgs) -> Result<Config, Failure> {
    let mut cfg = match &run.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_config(cfg: &Config) {
    println!("# resolved configuration (hash {})", cfg.hash());
    println!("{}", cfg.to_toml().trim_end());
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn explore(run: &RunArgs, out: &Path, selector: Option<String>, mapper: Option<String>) -> CmdResult {
    let mut cfg = load_config(run)?;
    if let Some(s) = selector {
        cfg.selector = s;
    }
    if let Some(m) = mapper {
        cfg.mapper = m;
    }
    cfg.validate()?;
    selector_registry().create(&cfg.selector)?;
    mapper_registry().create(&cfg.mapper)?;
    print_config(&cfg);
    fs::create_dir_all(out)?;
    let ep = run_episode(&cfg)?;
    ep.write_metrics(create(&out.join("metrics.csv"))?)?;
    ep.write_timing(create(&out.join("timing.csv"))?)?;
    ep.write_precision(create(&out.join("precision.csv"))?)?;
    ep.write_plan_log(create(&out.join("plan_log.csv"))?)?;
    let map_path = out.join(format!("final_map.{}", ep.mapper.extension()));
    let mut w = create(&map_path)?;
    ep.mapper.write_map(&mut w)?;
    w.flush()?;
    println!(
        "outcome: {}  steps: {}  distance: {:.3} m  explored: {:.4}",
        ep.outcome,
        ep.rows.len(),
        ep.rows.last().map_or(0.0, |r| r.distance),
        ep.final_explored()
    );
    info!("wrote {}", out.display());
    match ep.outcome {
        Outcome::Aborted(m) => Err(Failure::Runtime(format!("episode aborted: {m}"))),
        _ => Ok(()),
    }
}

fn objective(binary: bool) -> MiObjective {
    if binary {
        MiObjective::Binary
    } else {
        MiObjective::MultiClass
    }
}

fn mi_eval(
    run: &RunArgs,
    path: &Path,
    cell: [i64; 3],
    beams: usize,
    range: f64,
    binary: bool,
    out: Option<&Path>,
) -> CmdResult {
    if beams == 0 || !(range > 0.0) {
        return Err(Failure::Usage("--beams and --range must be positive".into()));
    }
    let cfg = load_config(run)?;
    print_config(&cfg);
    let map = maps::load(path, &cfg)?;
    let params = cfg.model.params(map.num_classes())?;
    let (belief, lattice): (&dyn BeliefMap, _) = match &map {
        LoadedMap::Grid(g) => (g, g.lattice().clone()),
        LoadedMap::Octree(t) => (t, t.lattice().clone()),
    };
    let fan = beam_fan(lattice.center(cell), beams, range);
    let total = trajectory_mi(belief, std::slice::from_ref(&fan), &params, objective(binary))?;
    let eval_params = if binary {
        params.collapse_binary()
    } else {
        params.clone()
    };
    let mut rows = Vec::new();
    for (i, b) in fan.iter().enumerate() {
        let (trace, ray) = belief.cast_belief(b)?;
        let ray = if binary { ray.collapse_binary() } else { ray };
        let heading = std::f64::consts::TAU * i as f64 / beams as f64;
        rows.push((i, heading, trace.len(), ray.mi(&eval_params)?));
    }
    if let Some(out) = out {
        let mut w = create(out)?;
        writeln!(w, "# config-hash: {}", cfg.hash())?;
        writeln!(w, "beam,heading_rad,elements,mi_nats")?;
        for (i, h, n, v) in &rows {
            writeln!(w, "{i},{h:.6},{n},{v:.12e}")?;
        }
        w.flush()?;
    }
    println!(
        "mi_nats: {:.12e}  beams_kept: {}  beams_dropped: {}",
        total.value, total.kept, total.dropped
    );
    Ok(())
}

fn surface(
    run: &RunArgs,
    path: Option<&Path>,
    scene: Option<&str>,
    out: &Path,
    beams: usize,
    range: Option<f64>,
    binary: bool,
) -> CmdResult {
    if beams == 0 {
        return Err(Failure::Usage("--beams must be positive".into()));
    }
    let cfg = load_config(run)?;
    print_config(&cfg);
    let (grid, source, default_range) = match (path, scene) {
        (Some(p), _) => (
            maps::load(p, &cfg)?.to_grid()?,
            p.display().to_string(),
            cfg.planner.max_range,
        ),
        (None, Some("two-wall")) => (
            TwoWallScene::new()?.map,
            "scene two-wall".to_string(),
            TwoWallScene::MAX_RANGE,
        ),
        (None, Some(other)) => return Err(Failure::Usage(format!("unknown scene `{other}` (available: two-wall)"))),
        (None, None) => return Err(Failure::Usage("one of --map or --scene is required".into())),
    };
    let range = range.unwrap_or(default_range);
    if !(range > 0.0) {
        return Err(Failure::Usage("--range must be positive".into()));
    }
    let params: SensorParams = cfg.model.params(grid.num_classes())?;
    let free = |idx: usize| grid.cell(idx)[1..].iter().all(|&v| v <= 0.0);
    let surf = mi_surface(&grid, &params, beams, range, objective(binary), free)?;
    let comments = vec![
        format!("config-hash: {}", cfg.hash()),
        format!("source: {source}"),
        format!(
            "beams: {beams}  range_m: {range}  objective: {}",
            if binary { "binary" } else { "multi-class" }
        ),
    ];
    let mut w = create(out)?;
    surf.write_csv(&mut w, &comments)?;
    w.flush()?;
    let evaluated = surf.values.iter().flatten().count();
    println!("evaluated {evaluated} cells -> {}", out.display());
    Ok(())
}

fn study(run: &RunArgs, out: &Path) -> CmdResult {
    let cfg = load_config(run)?;
    cfg.validate()?;
    print_config(&cfg);
    let rows = srle_study(&cfg)?;
    let mut w = create(out)?;
    write_study_csv(&rows, &mut w, &cfg.hash())?;
    w.flush()?;
    for r in &rows {
        println!(
            "res {:>5}/m  rays {:>6}  mean Q {:.3}  mean N {:.2}",
            r.resolution, r.rays, r.mean_q, r.mean_n
        );
    }
    Ok(())
}

const FAILURE_FILE: &str = "oracle_failure.json";
const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(serde::Serialize, serde::Deserialize)]
struct SavedFailure {
    tolerance: f64,
    relative_error: f64,
    case: CheckCase,
}

fn oracle_check(trials: usize, seed: u64, tolerance: f64, out: &Path) -> CmdResult {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    if !(tolerance >= 0.0) {
        return Err(Failure::Usage("--tolerance must be non-negative".into()));
    }
    println!("# oracle-check seed={seed} trials={trials} tolerance={tolerance:e}");
    let report = check_suite(seed, trials, tolerance)?;
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("oracle_check.csv"))?;
    writeln!(w, "# config-hash: seed={seed},trials={trials},tolerance={tolerance:e}")?;
    writeln!(w, "check,trials,worst_relative_error,pass")?;
    let pass = report.breach.is_none();
    writeln!(
        w,
        "dense-vs-outcome-tree,{},{:.3e},{pass}",
        report.trials, report.worst_dense
    )?;
    writeln!(w, "srle-vs-dense,{},{:.3e},{pass}", report.trials, report.worst_srle)?;
    w.flush()?;
    println!("dense vs outcome tree: worst relative error {:.3e}", report.worst_dense);
    println!("srle vs dense:         worst relative error {:.3e}", report.worst_srle);
    match report.breach {
        None => {
            println!("PASS ({} trials)", report.trials);
            Ok(())
        }
        Some((case, err)) => {
            let path = out.join(FAILURE_FILE);
            let saved = SavedFailure {
                tolerance,
                relative_error: err,
                case,
            };
            fs::write(&path, serde_json::to_string_pretty(&saved).map_err(Error::from)?)?;
            Err(Failure::Check(format!(
                "relative error {err:.3e} exceeds {tolerance:e} at trial {}; instance saved to {}",
                report.trials,
                path.display()
            )))
        }
    }
}

fn replay_case(path: &Path, tolerance: Option<f64>) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let saved: SavedFailure =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let tolerance = tolerance.unwrap_or(saved.tolerance);
    let (closed, reference) = saved.case.evaluate()?;
    let err = ssmi_core::mi::oracle::relative_error(closed, reference);
    println!("closed form: {closed:.17e}");
    println!("reference:   {reference:.17e}");
    println!(
        "relative error: {err:.3e} (saved {:.3e}, tolerance {tolerance:e})",
        saved.relative_error
    );
    if err <= tolerance {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "relative error {err:.3e} exceeds {tolerance:e}"
        )))
    }
}
