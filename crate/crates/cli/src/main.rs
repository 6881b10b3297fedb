//! Command-line front end: world generation, data collection, dataset
//! windowing, model and library training, costmap dumps, single-shot
//! planning, the comparative evaluation suite, the blend-weight sweep,
//! sensor ablations, chart rendering, and the gradient check.

mod svg;
mod util;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use offnav_core::costmap::{build_raw, normalize, write_raw_pgm};
use offnav_core::data::{
    build_library, collect, make_dataset, read_dataset, read_library, read_log, write_dataset,
    write_library, write_log, Dataset,
};
use offnav_core::density::{
    check_example, check_model_config, grad_check, read_model, train, write_model,
    ImitativeModel,
};
use offnav_core::eval::{
    ablate_channels, evaluate_methods, make_episode_specs, read_bc, sweep_phi, train_bc,
    write_bc, Method, MethodRunner,
};
use offnav_core::geometry::Vec2;
use offnav_core::pipeline::PipelineConfig;
use offnav_core::planner::plan;
use offnav_core::world::{
    generate_world, raycast_lidar, read_world, render_patch, write_world, DistributionProfile,
    Observation, RobotState, WorldSpec,
};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use util::{
    header_comments, load_config, manifest_append, out_path, parse_extent, parse_f64_list,
    parse_point, parse_pose, with_comments,
};

#[derive(Parser)]
#[command(name = "offnav", version, about = "Desk-scale off-road navigation benchmark")]
struct Cli {
    /// TOML config file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; stage seeds derive from it unless a command overrides.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    /// Run directory for outputs and the manifest.
    #[arg(long, global = true, default_value = "run")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural world file.
    GenWorld {
        #[arg(long)]
        seed: Option<u64>,
        /// Geofence size, e.g. 40x40.
        #[arg(long)]
        extent: Option<String>,
        #[arg(long, default_value = "in_distribution")]
        profile: String,
        #[arg(long, default_value = "world.txt")]
        out: PathBuf,
    },
    /// Drive sticky random actions through a world and record the log.
    Collect {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "collect.log")]
        out: PathBuf,
    },
    /// Window raw logs into a training dataset.
    MakeDataset {
        /// Repeatable input log.
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        f_tau: Option<f64>,
        #[arg(long, default_value = "data.ds")]
        out: PathBuf,
    },
    /// Train the trajectory-density learner (or the bc baseline).
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// imitative or bc.
        #[arg(long, default_value = "imitative")]
        kind: String,
        /// Patch channels the encoder sees: all, appearance, or height.
        #[arg(long, default_value = "all")]
        mask: String,
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
    },
    /// Cluster futures into the trajectory library.
    BuildLibrary {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "library.bin")]
        out: PathBuf,
    },
    /// Raycast from a pose and dump the raw cost grid as an ASCII greymap.
    Costmap {
        #[arg(long)]
        world: PathBuf,
        /// x,y,heading.
        #[arg(long)]
        pose: String,
        #[arg(long, default_value = "costmap.pgm")]
        out: PathBuf,
    },
    /// Evaluate the blended criterion once and dump per-candidate costs.
    Plan {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        pose: String,
        /// Goal x,y.
        #[arg(long)]
        goal: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long, default_value = "plan.csv")]
        out: PathBuf,
    },
    /// Run one method over seeded episodes and report success rates.
    Eval {
        #[arg(long)]
        method: String,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bc: Option<PathBuf>,
        #[arg(long)]
        library: PathBuf,
        /// Repeatable world file.
        #[arg(long = "world", required = true)]
        worlds: Vec<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Evaluate the blended planner across phi values on shared episodes.
    Sweep {
        /// Comma-separated phi values.
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        phis: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long = "world", required = true)]
        worlds: Vec<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Retrain the learner per patch-channel mode and compare learner-only
    /// success rates on shared episodes.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long = "world", required = true)]
        worlds: Vec<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "ablation.csv")]
        out: PathBuf,
    },
    /// Render a sweep or report CSV as an SVG chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.master_seed {
        cfg.master_seed = seed;
    }
    let out_dir = cli.out_dir.clone();
    let comments = header_comments(&cfg, &command_line());

    match cli.command {
        Command::GenWorld {
            seed,
            extent,
            profile,
            out,
        } => {
            let seed = seed.unwrap_or_else(|| cfg.stage_seed("world"));
            let extent = match extent {
                Some(s) => {
                    let (x, y) = parse_extent(&s)?;
                    Vec2::new(x, y)
                }
                None => cfg.extent_vec(),
            };
            let profile = DistributionProfile::parse(&profile)
                .with_context(|| format!("unknown profile `{profile}`"))?;
            let world = generate_world(seed, extent, profile, &cfg.worldgen)?;
            let path = out_path(&out_dir, &out)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            write_world(&mut w, &world, &comments)?;
            w.flush()?;
            manifest_append(&out_dir, &format!("gen-world seed={seed} -> {}", path.display()))?;
            println!(
                "world seed={seed} profile={} obstacles={} -> {}",
                world.profile.label(),
                world.obstacles.len(),
                path.display()
            );
        }
        Command::Collect {
            world,
            steps,
            seed,
            out,
        } => {
            let world = read_world_file(&world)?;
            let steps = steps.unwrap_or(cfg.collect_steps_per_world);
            let seed = seed.unwrap_or_else(|| cfg.stage_seed("collect"));
            let log = collect(&world, steps, seed, &cfg.sim, &cfg.collect)?;
            let path = out_path(&out_dir, &out)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            write_log(&mut w, &log, &comments)?;
            w.flush()?;
            manifest_append(&out_dir, &format!("collect seed={seed} -> {}", path.display()))?;
            println!(
                "collected {} steps, {} collisions -> {}",
                log.steps.len(),
                log.collisions.len(),
                path.display()
            );
        }
        Command::MakeDataset { logs, f_tau, out } => {
            let mut params = cfg.dataset.clone();
            if let Some(f) = f_tau {
                params.f_tau = f;
            }
            let mut parts = Vec::new();
            for p in &logs {
                let log = read_log(&mut BufReader::new(
                    fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
                ))?;
                parts.push(make_dataset(&log, &params, &cfg.sim));
            }
            let dataset = Dataset::merge(parts);
            let path = out_path(&out_dir, &out)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            write_dataset(&mut w, &dataset, &comments)?;
            w.flush()?;
            manifest_append(&out_dir, &format!("make-dataset -> {}", path.display()))?;
            println!(
                "dataset: {} examples ({} windows, {} dropped) -> {}",
                dataset.len(),
                dataset.meta.windows_considered,
                dataset.meta.windows_dropped,
                path.display()
            );
        }
        Command::Train {
            dataset,
            epochs,
            seed,
            kind,
            mask,
            out,
        } => {
            let ds = read_dataset_file(&dataset)?;
            let mut train_cfg = cfg.train.clone();
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            let channel_mask = parse_mask(&mask)?;
            let path = out_path(&out_dir, &out)?;
            match kind.as_str() {
                "imitative" => {
                    train_cfg.seed = seed.unwrap_or_else(|| cfg.stage_seed("train"));
                    let mut model_cfg = cfg.model.clone();
                    model_cfg.channel_mask = channel_mask;
                    let (model, losses) = train(&ds, &model_cfg, &train_cfg)?;
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    write_model(&mut w, &model, &comments)?;
                    w.flush()?;
                    println!(
                        "trained learner: {} epochs, final mean nll {:.3} -> {}",
                        losses.len(),
                        losses.last().unwrap(),
                        path.display()
                    );
                }
                "bc" => {
                    train_cfg.seed = seed.unwrap_or_else(|| cfg.stage_seed("train-bc"));
                    let mut bc_cfg = cfg.bc.clone();
                    bc_cfg.channel_mask = channel_mask;
                    let (model, losses) = train_bc(&ds, &bc_cfg, &train_cfg)?;
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    write_bc(&mut w, &model, &comments)?;
                    w.flush()?;
                    println!(
                        "trained bc baseline: {} epochs, final mse {:.5} -> {}",
                        losses.len(),
                        losses.last().unwrap(),
                        path.display()
                    );
                }
                other => bail!("unknown train kind `{other}` (imitative|bc)"),
            }
            manifest_append(&out_dir, &format!("train kind={kind} -> {}", path.display()))?;
        }
        Command::BuildLibrary {
            dataset,
            k,
            seed,
            out,
        } => {
            let ds = read_dataset_file(&dataset)?;
            let k = k.unwrap_or(cfg.library_k);
            let seed = seed.unwrap_or_else(|| cfg.stage_seed("library"));
            let library = build_library(&ds, k, seed)?;
            let path = out_path(&out_dir, &out)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            write_library(&mut w, &library, &comments)?;
            w.flush()?;
            manifest_append(&out_dir, &format!("build-library k={k} -> {}", path.display()))?;
            println!("library: {} centroids -> {}", library.len(), path.display());
        }
        Command::Costmap { world, pose, out } => {
            let world = read_world_file(&world)?;
            let (x, y, heading) = parse_pose(&pose)?;
            let state = RobotState::new(x, y, heading);
            let cloud = raycast_lidar(&world, &state, &cfg.sim);
            let raw = build_raw(&cloud, &state.pose, &cfg.grid);
            let path = out_path(&out_dir, &out)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            let mut all = comments.clone();
            all.push(format!("pose {x} {y} {heading}, {} returns", cloud.len()));
            write_raw_pgm(&mut w, &raw, &all)?;
            w.flush()?;
            manifest_append(&out_dir, &format!("costmap -> {}", path.display()))?;
            println!("costmap with {} range returns -> {}", cloud.len(), path.display());
        }
        Command::Plan {
            world,
            pose,
            goal,
            model,
            library,
            phi,
            noise_seed,
            out,
        } => {
            let world = read_world_file(&world)?;
            let model = read_model_file(&model)?;
            let library = read_library_file(&library)?;
            let (x, y, heading) = parse_pose(&pose)?;
            let (gx, gy) = parse_point(&goal)?;
            let state = RobotState::new(x, y, heading);
            let noise_seed = noise_seed.unwrap_or_else(|| cfg.stage_seed("plan-noise"));
            let observation = standstill_observation(&world, &state, noise_seed, &cfg, &model);
            let raw = build_raw(&observation.pointcloud, &state.pose, &cfg.grid);
            let costmap = normalize(&raw, cfg.alpha, cfg.normalize_mode);
            let mut planner_cfg = cfg.planner.clone();
            if let Some(p) = phi {
                planner_cfg.phi = p;
            }
            let result = plan(
                &library,
                &model,
                &costmap,
                &observation,
                Vec2::new(gx, gy),
                &planner_cfg,
            )?;
            let mut body = String::from("candidate,directive,learned,costmap_sum,total,chosen\n");
            for (i, b) in result.breakdown.iter().enumerate() {
                body.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i,
                    b.directive,
                    b.learned,
                    b.costmap_sum,
                    b.total,
                    u8::from(i == result.chosen_index)
                ));
            }
            let path = out_path(&out_dir, &out)?;
            fs::write(&path, with_comments(&comments, &body))?;
            manifest_append(&out_dir, &format!("plan -> {}", path.display()))?;
            println!(
                "plan chose candidate {} of {} -> {}",
                result.chosen_index,
                result.breakdown.len(),
                path.display()
            );
        }
        Command::Eval {
            method,
            phi,
            model,
            bc,
            library,
            worlds,
            episodes,
            seed,
            out,
        } => {
            let method = Method::parse(&method, phi.unwrap_or(cfg.planner.phi))
                .with_context(|| format!("unknown method `{method}`"))?;
            let model = read_model_file(&model)?;
            let bc_model = bc.as_deref().map(read_bc_file).transpose()?;
            if method == Method::Bc && bc_model.is_none() {
                bail!("--bc checkpoint required for method bc");
            }
            let library = read_library_file(&library)?;
            let world_specs = read_worlds(&worlds)?;
            let mut params = cfg.eval.clone();
            if let Some(e) = episodes {
                params.episodes = e;
            }
            params.seed = seed.unwrap_or_else(|| cfg.stage_seed("eval"));
            let environment = world_specs[0].profile.label().to_string();
            let specs = make_episode_specs(&world_specs, &params)?;
            let runner = MethodRunner {
                worlds: &world_specs,
                model: &model,
                bc: bc_model.as_ref(),
                library: &library,
                planner: cfg.planner.clone(),
                grid: cfg.grid.clone(),
                mode: cfg.normalize_mode,
                alpha: cfg.alpha,
                sim: &cfg.sim,
                f_tau: cfg.dataset.f_tau,
                oracle_resolution: params.oracle_resolution,
                oracle_clearance: params.oracle_clearance,
            };
            let reports = evaluate_methods(&runner, &[method], &specs, &environment);
            let body = offnav_core::eval::report_csv(&reports);
            let path = out_path(&out_dir, &out)?;
            fs::write(&path, with_comments(&comments, &body))?;
            manifest_append(
                &out_dir,
                &format!("eval method={} -> {}", method.label(), path.display()),
            )?;
            print!("{body}");
        }
        Command::Sweep {
            phis,
            model,
            library,
            worlds,
            episodes,
            seed,
            out,
        } => {
            let values = parse_f64_list(&phis)?;
            let model = read_model_file(&model)?;
            let library = read_library_file(&library)?;
            let world_specs = read_worlds(&worlds)?;
            let mut params = cfg.eval.clone();
            if let Some(e) = episodes {
                params.episodes = e;
            }
            params.seed = seed.unwrap_or_else(|| cfg.stage_seed("eval"));
            let environment = world_specs[0].profile.label().to_string();
            let specs = make_episode_specs(&world_specs, &params)?;
            let runner = MethodRunner {
                worlds: &world_specs,
                model: &model,
                bc: None,
                library: &library,
                planner: cfg.planner.clone(),
                grid: cfg.grid.clone(),
                mode: cfg.normalize_mode,
                alpha: cfg.alpha,
                sim: &cfg.sim,
                f_tau: cfg.dataset.f_tau,
                oracle_resolution: params.oracle_resolution,
                oracle_clearance: params.oracle_clearance,
            };
            let points = sweep_phi(&runner, &values, &specs, &environment, None);
            let body = offnav_core::eval::sweep_csv(&points);
            let path = out_path(&out_dir, &out)?;
            fs::write(&path, with_comments(&comments, &body))?;
            manifest_append(&out_dir, &format!("sweep -> {}", path.display()))?;
            print!("{body}");
        }
        Command::Ablate {
            dataset,
            library,
            worlds,
            episodes,
            seed,
            epochs,
            out,
        } => {
            let ds = read_dataset_file(&dataset)?;
            let library = read_library_file(&library)?;
            let world_specs = read_worlds(&worlds)?;
            let mut params = cfg.eval.clone();
            if let Some(e) = episodes {
                params.episodes = e;
            }
            params.seed = seed.unwrap_or_else(|| cfg.stage_seed("eval"));
            let mut train_cfg = cfg.train.clone();
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            train_cfg.seed = cfg.stage_seed("train");
            let environment = world_specs[0].profile.label().to_string();
            let specs = make_episode_specs(&world_specs, &params)?;
            // Placeholder model for the runner template; each mode swaps in
            // its own retrained learner.
            let template_model = ImitativeModel::new_seeded(cfg.model.clone(), 0);
            let runner = MethodRunner {
                worlds: &world_specs,
                model: &template_model,
                bc: None,
                library: &library,
                planner: cfg.planner.clone(),
                grid: cfg.grid.clone(),
                mode: cfg.normalize_mode,
                alpha: cfg.alpha,
                sim: &cfg.sim,
                f_tau: cfg.dataset.f_tau,
                oracle_resolution: params.oracle_resolution,
                oracle_clearance: params.oracle_clearance,
            };
            let ablation = ablate_channels(
                &ds,
                &cfg.model,
                &train_cfg,
                &runner,
                &specs,
                &environment,
                None,
                None,
            )?;
            let reports: Vec<_> = ablation
                .iter()
                .map(|a| {
                    let mut r = a.report.clone();
                    r.method = format!("learner_only[{}]", a.mode);
                    r
                })
                .collect();
            let body = offnav_core::eval::report_csv(&reports);
            let path = out_path(&out_dir, &out)?;
            fs::write(&path, with_comments(&comments, &body))?;
            manifest_append(&out_dir, &format!("ablate -> {}", path.display()))?;
            print!("{body}");
        }
        Command::Plot { input, out } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let svg = render_plot(&text)?;
            let path = out_path(&out_dir, &out)?;
            fs::write(&path, svg)?;
            manifest_append(&out_dir, &format!("plot {} -> {}", input.display(), path.display()))?;
            println!("chart -> {}", path.display());
        }
        Command::GradCheck { seeds } => {
            let started = std::time::Instant::now();
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                let mut model = ImitativeModel::new_seeded(check_model_config(), seed);
                let example = check_example(seed ^ 0x9e37);
                let err = grad_check(&mut model, &example);
                if err > worst {
                    worst = err;
                }
            }
            let elapsed = started.elapsed().as_secs_f64();
            println!(
                "grad-check: {seeds} seeds, max relative error {worst:.3e}, {elapsed:.2} s"
            );
            if worst >= 1e-4 {
                bail!("gradient check failed: max relative error {worst:.3e} >= 1e-4");
            }
        }
    }
    Ok(())
}

fn read_world_file(path: &Path) -> Result<WorldSpec> {
    Ok(read_world(&mut BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?)
}

fn read_worlds(paths: &[PathBuf]) -> Result<Vec<WorldSpec>> {
    paths.iter().map(|p| read_world_file(p)).collect()
}

fn read_dataset_file(path: &Path) -> Result<Dataset> {
    Ok(read_dataset(&mut BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?)
}

fn read_model_file(path: &Path) -> Result<ImitativeModel> {
    Ok(read_model(&mut BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?)
}

fn read_bc_file(path: &Path) -> Result<offnav_core::eval::BcModel> {
    Ok(read_bc(&mut BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?)
}

fn read_library_file(path: &Path) -> Result<offnav_core::data::TrajectoryLibrary> {
    Ok(read_library(&mut BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?)
}

fn parse_mask(mask: &str) -> Result<[bool; 4]> {
    Ok(match mask {
        "all" | "appearance+height" => [true, true, true, true],
        "appearance" => [true, true, true, false],
        "height" => [false, false, false, true],
        other => bail!("unknown mask `{other}` (all|appearance|height)"),
    })
}

/// Observation for single-shot planning from standstill: past positions all
/// at the origin (a robot at rest).
fn standstill_observation(
    world: &WorldSpec,
    state: &RobotState,
    noise_seed: u64,
    cfg: &PipelineConfig,
    model: &ImitativeModel,
) -> Observation {
    let pointcloud = raycast_lidar(world, state, &cfg.sim);
    let patch = render_patch(world, state, noise_seed, &cfg.sim);
    Observation {
        position: state.pose.position,
        heading: state.pose.heading,
        pointcloud,
        patch,
        past_positions: vec![Vec2::ZERO; model.config.h_past],
    }
}

/// Render a CSV as a chart: sweep CSVs become a line chart, report CSVs a
/// bar chart of raw success rates.
fn render_plot(text: &str) -> Result<String> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header = lines.next().context("empty csv")?;
    if header.starts_with("phi,") {
        let mut points = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            points.push((fields[0].parse::<f64>()?, fields[1].parse::<f64>()?));
        }
        Ok(svg::sweep_svg(&points))
    } else if header.starts_with("method,") {
        let rate_col = header
            .split(',')
            .position(|c| c == "raw_rate")
            .context("report csv missing raw_rate column")?;
        let mut rows = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            rows.push((fields[0].to_string(), fields[rate_col].parse::<f64>()?));
        }
        Ok(svg::bar_svg(&rows))
    } else {
        bail!("unrecognized csv header `{header}`");
    }
}

