//! End-to-end benchmark pipeline: procedural worlds, self-supervised
//! collection, dataset windowing, model and baseline training, the
//! trajectory library, and the comparative evaluation suite, all derived
//! from one master seed through labeled seed splits (recorded in artifact
//! headers).

use crate::costmap::{GridSpec, NormalizeMode};
use crate::data::{
    build_library, collect, make_dataset, CollectParams, Dataset, DatasetParams, TrajectoryLibrary,
};
use crate::density::{train, ImitativeModel, ModelConfig, TrainConfig};
use crate::eval::{
    ablate_channels, evaluate_methods_against, make_episode_specs, run_oracle, sweep_phi,
    train_bc, AblationReport, BcConfig, BcModel, EvalError, EvalParams, Method, MetricsReport,
    MethodRunner, SweepPoint,
};
use crate::geometry::Vec2;
use crate::planner::PlannerConfig;
use crate::rng::{split_seed, split_seed_indexed};
use crate::world::{generate_world, DistributionProfile, SimParams, WorldGenParams, WorldSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Density(#[from] crate::density::DensityError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Every stage parameter in one place. Defaults are the desk-scale
/// benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    /// Geofence side lengths in meters.
    pub extent: [f64; 2],
    /// Worlds per environment set; episodes round-robin over them.
    pub worlds_per_set: usize,
    /// Simulator steps collected in each in-distribution world.
    pub collect_steps_per_world: usize,
    pub library_k: usize,
    pub alpha: f64,
    pub normalize_mode: NormalizeMode,
    pub phi_sweep: Vec<f64>,
    pub sim: SimParams,
    pub worldgen: WorldGenParams,
    pub collect: CollectParams,
    pub dataset: DatasetParams,
    pub model: ModelConfig,
    pub bc: BcConfig,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub planner: PlannerConfig,
    pub eval: EvalParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cfg = PipelineConfig {
            master_seed: 0,
            extent: [40.0, 40.0],
            worlds_per_set: 8,
            collect_steps_per_world: 30_000,
            library_k: 200,
            alpha: 6.4,
            normalize_mode: NormalizeMode::Cellwise,
            phi_sweep: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sim: SimParams::default(),
            worldgen: WorldGenParams::default(),
            collect: CollectParams::default(),
            dataset: DatasetParams::default(),
            model: ModelConfig::default(),
            bc: BcConfig::default(),
            train: TrainConfig::default(),
            grid: GridSpec::default(),
            planner: PlannerConfig::default(),
            eval: EvalParams::default(),
        };
        // The desk benchmark gives the learner a slightly longer budget
        // than the bare training default.
        cfg.train.epochs = 30;
        cfg
    }
}

impl PipelineConfig {
    pub fn extent_vec(&self) -> Vec2 {
        Vec2::new(self.extent[0], self.extent[1])
    }

    /// Stage seed derivation; also echoed into artifact headers.
    pub fn stage_seed(&self, label: &str) -> u64 {
        split_seed(self.master_seed, label)
    }

    pub fn stage_seed_indexed(&self, label: &str, index: u64) -> u64 {
        split_seed_indexed(self.master_seed, label, index)
    }
}

/// Everything the benchmark needs, built once per master seed.
pub struct Artifacts {
    pub worlds_id: Vec<WorldSpec>,
    pub worlds_ood: Vec<WorldSpec>,
    pub dataset: Dataset,
    pub model: ImitativeModel,
    pub bc: BcModel,
    pub library: TrajectoryLibrary,
}

pub fn generate_world_set(
    cfg: &PipelineConfig,
    profile: DistributionProfile,
) -> Result<Vec<WorldSpec>, PipelineError> {
    let label = match profile {
        DistributionProfile::InDistribution => "world-id",
        DistributionProfile::OutOfDistribution => "world-ood",
    };
    (0..cfg.worlds_per_set)
        .map(|i| {
            generate_world(
                cfg.stage_seed_indexed(label, i as u64),
                cfg.extent_vec(),
                profile,
                &cfg.worldgen,
            )
            .map_err(PipelineError::from)
        })
        .collect()
}

/// Collect sticky-action logs across the in-distribution worlds and window
/// them into one dataset.
pub fn build_dataset(
    cfg: &PipelineConfig,
    worlds_id: &[WorldSpec],
) -> Result<Dataset, PipelineError> {
    let mut parts = Vec::with_capacity(worlds_id.len());
    for (i, world) in worlds_id.iter().enumerate() {
        let log = collect(
            world,
            cfg.collect_steps_per_world,
            cfg.stage_seed_indexed("collect", i as u64),
            &cfg.sim,
            &cfg.collect,
        )?;
        parts.push(make_dataset(&log, &cfg.dataset, &cfg.sim));
    }
    Ok(Dataset::merge(parts))
}

pub fn build_artifacts(cfg: &PipelineConfig) -> Result<Artifacts, PipelineError> {
    let worlds_id = generate_world_set(cfg, DistributionProfile::InDistribution)?;
    let worlds_ood = generate_world_set(cfg, DistributionProfile::OutOfDistribution)?;
    let dataset = build_dataset(cfg, &worlds_id)?;

    let train_cfg = TrainConfig {
        seed: cfg.stage_seed("train"),
        ..cfg.train.clone()
    };
    let (model, _losses) = train(&dataset, &cfg.model, &train_cfg)?;

    let bc_cfg = TrainConfig {
        seed: cfg.stage_seed("train-bc"),
        ..cfg.train.clone()
    };
    let (bc, _bc_losses) = train_bc(&dataset, &cfg.bc, &bc_cfg)?;

    let library = build_library(&dataset, cfg.library_k, cfg.stage_seed("library"))?;
    Ok(Artifacts {
        worlds_id,
        worlds_ood,
        dataset,
        model,
        bc,
        library,
    })
}

/// All comparative reports of the benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkReports {
    pub id_reports: Vec<MetricsReport>,
    pub ood_reports: Vec<MetricsReport>,
    pub sweep: Vec<SweepPoint>,
    pub ablation: Vec<AblationReport>,
}

pub fn method_runner<'a>(
    cfg: &'a PipelineConfig,
    artifacts: &'a Artifacts,
    ood: bool,
) -> MethodRunner<'a> {
    MethodRunner {
        worlds: if ood {
            &artifacts.worlds_ood
        } else {
            &artifacts.worlds_id
        },
        model: &artifacts.model,
        bc: Some(&artifacts.bc),
        library: &artifacts.library,
        planner: cfg.planner.clone(),
        grid: cfg.grid.clone(),
        mode: cfg.normalize_mode,
        alpha: cfg.alpha,
        sim: &cfg.sim,
        f_tau: cfg.dataset.f_tau,
        oracle_resolution: cfg.eval.oracle_resolution,
        oracle_clearance: cfg.eval.oracle_clearance,
    }
}

/// Run the comparative suite: all methods in both environments on shared
/// specs, the blend-weight sweep, and the channel ablation.
pub fn run_benchmark(
    cfg: &PipelineConfig,
    artifacts: &Artifacts,
) -> Result<BenchmarkReports, PipelineError> {
    let methods = [
        Method::Hybrid {
            phi: cfg.planner.phi,
        },
        Method::LearnerOnly,
        Method::CostmapOnly,
        Method::Bc,
        Method::Straight,
        Method::Random,
        Method::Oracle,
    ];

    let id_params = EvalParams {
        seed: cfg.stage_seed("eval-id"),
        ..cfg.eval.clone()
    };
    let ood_params = EvalParams {
        seed: cfg.stage_seed("eval-ood"),
        ..cfg.eval.clone()
    };
    let specs_id = make_episode_specs(&artifacts.worlds_id, &id_params)?;
    let specs_ood = make_episode_specs(&artifacts.worlds_ood, &ood_params)?;

    let runner_id = method_runner(cfg, artifacts, false);
    let runner_ood = method_runner(cfg, artifacts, true);

    let oracle_id = run_oracle(&runner_id, &specs_id);
    let oracle_ood = run_oracle(&runner_ood, &specs_ood);

    let id_reports = evaluate_methods_against(
        &runner_id,
        &methods,
        &specs_id,
        "in_distribution",
        &oracle_id,
    );
    let ood_reports = evaluate_methods_against(
        &runner_ood,
        &methods,
        &specs_ood,
        "out_of_distribution",
        &oracle_ood,
    );
    let sweep = sweep_phi(
        &runner_id,
        &cfg.phi_sweep,
        &specs_id,
        "in_distribution",
        Some(&oracle_id),
    );

    // The costmap ships two normalization modes; report the non-default one
    // alongside the main table.
    let alt_mode = match cfg.normalize_mode {
        NormalizeMode::Cellwise => NormalizeMode::GlobalSoftmax,
        NormalizeMode::GlobalSoftmax => NormalizeMode::Cellwise,
    };
    let runner_alt = MethodRunner {
        mode: alt_mode,
        ..method_runner(cfg, artifacts, false)
    };
    let alt_reports: Vec<MetricsReport> = evaluate_methods_against(
        &runner_alt,
        &[
            Method::Hybrid {
                phi: cfg.planner.phi,
            },
            Method::CostmapOnly,
        ],
        &specs_id,
        "in_distribution",
        &oracle_id,
    )
    .into_iter()
    .map(|mut r| {
        r.method = format!("{}[{}]", r.method, alt_mode.label());
        r
    })
    .collect();
    let train_cfg = TrainConfig {
        seed: cfg.stage_seed("train"),
        ..cfg.train.clone()
    };
    let ablation = ablate_channels(
        &artifacts.dataset,
        &cfg.model,
        &train_cfg,
        &runner_id,
        &specs_id,
        "in_distribution",
        Some(&oracle_id),
        Some(&artifacts.model),
    )?;

    let mut id_reports = id_reports;
    id_reports.extend(alt_reports);

    Ok(BenchmarkReports {
        id_reports,
        ood_reports,
        sweep,
        ablation,
    })
}

impl BenchmarkReports {
    /// The metric CSVs of a run; file name stem plus content.
    pub fn to_csvs(&self) -> Vec<(String, String)> {
        let mut combined = Vec::new();
        combined.extend(self.id_reports.iter().cloned());
        combined.extend(self.ood_reports.iter().cloned());
        let mut out = vec![
            ("methods.csv".to_string(), crate::eval::report_csv(&combined)),
            ("sweep.csv".to_string(), crate::eval::sweep_csv(&self.sweep)),
        ];
        let ablation_reports: Vec<MetricsReport> = self
            .ablation
            .iter()
            .map(|a| {
                let mut r = a.report.clone();
                r.method = format!("learner_only[{}]", a.mode);
                r
            })
            .collect();
        out.push((
            "ablation.csv".to_string(),
            crate::eval::report_csv(&ablation_reports),
        ));
        out
    }
}
