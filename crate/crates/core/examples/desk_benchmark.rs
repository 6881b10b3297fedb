//! Run the full benchmark pipeline with stage timings. Useful while tuning
//! world densities and training budgets; the CLI exposes the same stages
//! as subcommands.

use offnav_core::density::{train, TrainConfig};
use offnav_core::eval::{make_episode_specs, EpisodeOutcome, EvalParams, Method};
use offnav_core::pipeline::{build_artifacts, method_runner, run_benchmark, PipelineConfig};
use std::time::Instant;

fn main() {
    let mut cfg = PipelineConfig::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--seed" => cfg.master_seed = args.next().unwrap().parse().unwrap(),
            "--episodes" => cfg.eval.episodes = args.next().unwrap().parse().unwrap(),
            "--epochs" => cfg.train.epochs = args.next().unwrap().parse().unwrap(),
            "--steps" => {
                cfg.collect_steps_per_world = args.next().unwrap().parse().unwrap()
            }
            "--worlds" => cfg.worlds_per_set = args.next().unwrap().parse().unwrap(),
            other => panic!("unknown flag {other}"),
        }
    }

    let t0 = Instant::now();
    let artifacts = if std::env::var("PROBE_STAGES").is_ok() {
        use offnav_core::data::build_library;
        use offnav_core::eval::train_bc;
        use offnav_core::pipeline::{build_dataset, generate_world_set, Artifacts};
        use offnav_core::world::DistributionProfile;
        let t = Instant::now();
        let worlds_id =
            generate_world_set(&cfg, DistributionProfile::InDistribution).unwrap();
        let worlds_ood =
            generate_world_set(&cfg, DistributionProfile::OutOfDistribution).unwrap();
        println!("stage worlds: {:.1} s", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let dataset = build_dataset(&cfg, &worlds_id).unwrap();
        println!("stage dataset: {:.1} s ({} examples)", t.elapsed().as_secs_f64(), dataset.len());
        let t = Instant::now();
        let train_cfg = TrainConfig { seed: cfg.stage_seed("train"), ..cfg.train.clone() };
        let (model, losses) = train(&dataset, &cfg.model, &train_cfg).unwrap();
        println!("stage train: {:.1} s (final nll {:.2})", t.elapsed().as_secs_f64(), losses.last().unwrap());
        let t = Instant::now();
        let bc_cfg = TrainConfig { seed: cfg.stage_seed("train-bc"), ..cfg.train.clone() };
        let (bc, _) = train_bc(&dataset, &cfg.bc, &bc_cfg).unwrap();
        println!("stage bc: {:.1} s", t.elapsed().as_secs_f64());
        let t = Instant::now();
        let library = build_library(&dataset, cfg.library_k, cfg.stage_seed("library")).unwrap();
        println!("stage library: {:.1} s", t.elapsed().as_secs_f64());
        Artifacts { worlds_id, worlds_ood, dataset, model, bc, library }
    } else {
        build_artifacts(&cfg).expect("artifact build failed")
    };
    println!(
        "artifacts: {} examples ({} windows considered, {} dropped), {} centroids, {:.1} s",
        artifacts.dataset.len(),
        artifacts.dataset.meta.windows_considered,
        artifacts.dataset.meta.windows_dropped,
        artifacts.library.len(),
        t0.elapsed().as_secs_f64()
    );

    if std::env::var("PROBE_LOSS").is_ok() {
        let train_cfg = TrainConfig {
            seed: cfg.stage_seed("train"),
            ..cfg.train.clone()
        };
        let (_, losses) = train(&artifacts.dataset, &cfg.model, &train_cfg).unwrap();
        println!("loss curve: {losses:?}");
    }

    if std::env::var("PROBE_DENSITY").is_ok() {
        use offnav_core::geometry::Vec2;
        use offnav_core::world::{
            render_patch, Footprint, Obstacle, ObstacleKind, RobotState, WorldSpec,
        };
        let speed_per_frame = 0.16;
        let past: Vec<Vec2> = (0..10)
            .map(|i| Vec2::new(speed_per_frame * (i as f64 - 9.0), 0.0))
            .collect();
        let straight: Vec<Vec2> = (1..=10)
            .map(|i| Vec2::new(speed_per_frame * i as f64, 0.0))
            .collect();
        let swerve: Vec<Vec2> = (1..=10)
            .map(|i| {
                let t = i as f64 / 10.0;
                Vec2::new(speed_per_frame * i as f64 * (1.0 - 0.3 * t * t), 1.1 * t * t)
            })
            .collect();
        let obstacle = |kind: ObstacleKind, height: f64, appearance: [f64; 3]| Obstacle {
            kind,
            center: Vec2::new(1.1, 0.0),
            footprint: Footprint::Circle { radius: 0.45 },
            height,
            appearance,
            traversable: kind == ObstacleKind::Grass,
        };
        let scenes: Vec<(&str, Vec<Obstacle>)> = vec![
            ("empty", vec![]),
            ("bush", vec![obstacle(ObstacleKind::Bush, 0.5, [0.13, 0.38, 0.12])]),
            ("grass", vec![obstacle(ObstacleKind::Grass, 0.5, [0.35, 0.72, 0.22])]),
            ("rock", vec![obstacle(ObstacleKind::Rock, 0.2, [0.46, 0.40, 0.28])]),
            ("tree", vec![obstacle(ObstacleKind::Tree, 2.0, [0.30, 0.22, 0.12])]),
        ];
        for (name, obstacles) in scenes {
            let world = WorldSpec {
                obstacles,
                ..WorldSpec::empty(Vec2::new(40.0, 40.0))
            };
            let patch = render_patch(&world, &RobotState::new(0.0, 0.0, 0.0), 7, &cfg.sim);
            let cond = artifacts.model.encode(&patch, &past).unwrap();
            let lp_straight = artifacts.model.log_prob(&cond, &straight).unwrap();
            let lp_swerve = artifacts.model.log_prob(&cond, &swerve).unwrap();
            println!(
                "density probe {name}: straight {lp_straight:.2}, swerve {lp_swerve:.2}, margin {:.2}",
                lp_straight - lp_swerve
            );
        }
    }

    if std::env::var("PROBE_CONTACT").is_ok() {
        let params = EvalParams {
            seed: cfg.stage_seed("eval-id"),
            ..cfg.eval.clone()
        };
        let specs = make_episode_specs(&artifacts.worlds_id, &params).unwrap();
        let runner = method_runner(&cfg, &artifacts, false);
        for method in [
            Method::LearnerOnly,
            Method::CostmapOnly,
            Method::Hybrid { phi: 0.75 },
        ] {
            let results = runner.run(method, &specs);
            let mut by_kind: std::collections::BTreeMap<String, usize> = Default::default();
            for (res, spec) in results.iter().zip(specs.iter()) {
                if matches!(res.outcome, EpisodeOutcome::Collision(_)) {
                    let world = &artifacts.worlds_id[spec.world_index];
                    let near = world
                        .obstacles
                        .iter()
                        .filter(|o| !o.traversable)
                        .min_by(|a, b| {
                            a.signed_distance(res.final_position)
                                .partial_cmp(&b.signed_distance(res.final_position))
                                .unwrap()
                        });
                    let label = match near {
                        Some(o) if o.signed_distance(res.final_position) < 0.5 => {
                            format!("{:?}", o.kind)
                        }
                        _ => "open/fence".to_string(),
                    };
                    *by_kind.entry(label).or_default() += 1;
                }
            }
            println!("{:?} failure contacts: {:?}", method, by_kind);
        }
    }

    let t1 = Instant::now();
    let reports = run_benchmark(&cfg, &artifacts).expect("benchmark failed");
    println!("benchmark: {:.1} s", t1.elapsed().as_secs_f64());
    for (name, csv) in reports.to_csvs() {
        println!("--- {name}");
        print!("{csv}");
    }
    println!("total: {:.1} s", t0.elapsed().as_secs_f64());
}
