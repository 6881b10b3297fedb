//! Seeded episode specs, method execution, success-rate reports, the
//! blend-weight sweep, and sensor-channel ablations.

use super::bc::BcModel;
use super::episode::{
    run_episode, BcPolicy, OraclePolicy, PlannerPolicy, Policy, RandomPolicy, StraightPolicy,
};
use super::{
    EpisodeOutcome, EpisodeResult, EpisodeSpec, EvalError, EvalParams, Method, MetricsReport,
};
use crate::costmap::{GridSpec, NormalizeMode};
use crate::data::{sample_free_pose, Dataset, TrajectoryLibrary};
use crate::density::{train, ImitativeModel, ModelConfig, TrainConfig};
use crate::planner::PlannerConfig;
use crate::rng::{seeded_rng, split_seed_indexed};
use crate::world::{CollisionKind, SimParams, WorldSpec};
use rand::Rng;
use rayon::prelude::*;

/// Identical specs are shared across every method being compared: the spec
/// list is a pure function of (worlds, params).
pub fn make_episode_specs(
    worlds: &[WorldSpec],
    params: &EvalParams,
) -> Result<Vec<EpisodeSpec>, EvalError> {
    assert!(!worlds.is_empty(), "need at least one world");
    let mut specs = Vec::with_capacity(params.episodes);
    for i in 0..params.episodes {
        let world_index = i % worlds.len();
        let world = &worlds[world_index];
        let mut rng = seeded_rng(split_seed_indexed(params.seed, "episode-spec", i as u64));
        let mut start = sample_free_pose(
            world,
            &mut rng,
            params.spawn_clearance,
            params.fence_margin,
            1000,
        )?;
        let mut goal = None;
        for _ in 0..1000 {
            let candidate = sample_free_pose(
                world,
                &mut rng,
                params.spawn_clearance,
                params.fence_margin,
                1000,
            )?;
            if candidate.position.distance(start.position) >= params.min_goal_dist {
                goal = Some(candidate.position);
                break;
            }
        }
        let goal =
            goal.ok_or(EvalError::Data(crate::data::DataError::NoFreePose(1000)))?;
        // The robot is tasked facing roughly toward the goal (operator
        // convention); jitter keeps initial goal-turning in play.
        let bearing = (goal - start.position).angle();
        let jitter = rng.gen_range(-std::f64::consts::FRAC_PI_4..=std::f64::consts::FRAC_PI_4);
        start.heading = crate::geometry::wrap_angle(bearing + jitter);
        specs.push(EpisodeSpec {
            world_index,
            world_seed: world.seed,
            start,
            goal,
            timeout: params.timeout,
            goal_radius: params.goal_radius,
            episode_seed: split_seed_indexed(params.seed, "episode-run", i as u64),
        });
    }
    Ok(specs)
}

/// Shared artifacts every method draws on.
pub struct MethodRunner<'a> {
    pub worlds: &'a [WorldSpec],
    pub model: &'a ImitativeModel,
    pub bc: Option<&'a BcModel>,
    pub library: &'a TrajectoryLibrary,
    pub planner: PlannerConfig,
    pub grid: GridSpec,
    pub mode: NormalizeMode,
    pub alpha: f64,
    pub sim: &'a SimParams,
    pub f_tau: f64,
    pub oracle_resolution: f64,
    pub oracle_clearance: f64,
}

impl MethodRunner<'_> {
    /// Run one method over every spec. Episodes are independent and run in
    /// parallel; results collect in spec order so reports are deterministic
    /// regardless of thread count.
    pub fn run(&self, method: Method, specs: &[EpisodeSpec]) -> Vec<EpisodeResult> {
        specs
            .par_iter()
            .map(|spec| self.run_one(method, spec))
            .collect()
    }

    fn run_one(&self, method: Method, spec: &EpisodeSpec) -> EpisodeResult {
        let world = &self.worlds[spec.world_index];
        let h_past = self.model.config.h_past;
        let mut policy: Box<dyn Policy> = match method {
            Method::Hybrid { .. } | Method::LearnerOnly | Method::CostmapOnly => {
                let mut cfg = self.planner.clone();
                cfg.phi = method.phi(self.planner.phi).unwrap();
                Box::new(PlannerPolicy::new(
                    self.model,
                    self.library,
                    cfg,
                    self.grid.clone(),
                    self.mode,
                    self.alpha,
                ))
            }
            Method::Bc => {
                let bc = self.bc.expect("bc model required for the bc method");
                let reach = self.model.config.horizon as f64 * self.sim.v_max / self.f_tau;
                Box::new(BcPolicy::new(
                    bc,
                    self.f_tau,
                    reach,
                    self.sim.v_max,
                    self.sim.omega_max,
                ))
            }
            Method::Straight => Box::new(StraightPolicy::new(self.planner.gains.clone())),
            Method::Random => Box::new(RandomPolicy::new(
                spec.episode_seed,
                self.planner.replan_hz,
            )),
            Method::Oracle => Box::new(OraclePolicy::new(
                self.oracle_resolution,
                self.oracle_clearance,
                self.planner.gains.clone(),
            )),
        };
        run_episode(world, policy.as_mut(), spec, self.sim, self.f_tau, h_past)
    }
}

fn summarize(
    method: Method,
    default_phi: f64,
    environment: &str,
    results: &[EpisodeResult],
    oracle_rate: f64,
) -> MetricsReport {
    let episodes = results.len();
    let successes = results
        .iter()
        .filter(|r| r.outcome == EpisodeOutcome::Success)
        .count();
    let stuck = results
        .iter()
        .filter(|r| r.outcome == EpisodeOutcome::Collision(CollisionKind::Stuck))
        .count();
    let trapped = results
        .iter()
        .filter(|r| r.outcome == EpisodeOutcome::Collision(CollisionKind::Trapped))
        .count();
    let timeouts = results
        .iter()
        .filter(|r| r.outcome == EpisodeOutcome::Timeout)
        .count();
    let raw_rate = successes as f64 / episodes.max(1) as f64;
    let normalized_rate = if oracle_rate > 0.0 {
        raw_rate / oracle_rate
    } else {
        f64::NAN
    };
    MetricsReport {
        method: method.label().to_string(),
        phi: method.phi(default_phi),
        environment: environment.to_string(),
        episodes,
        successes,
        stuck,
        trapped,
        timeouts,
        raw_rate,
        oracle_rate,
        normalized_rate,
        ci_half_width: binomial_half_width(raw_rate, episodes),
    }
}

/// 95% normal-approximation half-width for a binomial rate.
pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// One evaluation of the map-privileged reference on a spec list; shared
/// across every comparative report on those specs.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub results: Vec<EpisodeResult>,
    pub rate: f64,
}

pub fn run_oracle(runner: &MethodRunner, specs: &[EpisodeSpec]) -> OracleRun {
    let results = runner.run(Method::Oracle, specs);
    let rate = results
        .iter()
        .filter(|r| r.outcome == EpisodeOutcome::Success)
        .count() as f64
        / specs.len().max(1) as f64;
    OracleRun { results, rate }
}

/// Evaluate several methods on byte-identical specs against a shared
/// reference run (the reference's own report normalizes to 1 by
/// definition).
pub fn evaluate_methods_against(
    runner: &MethodRunner,
    methods: &[Method],
    specs: &[EpisodeSpec],
    environment: &str,
    oracle: &OracleRun,
) -> Vec<MetricsReport> {
    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let results = if method == Method::Oracle {
            oracle.results.clone()
        } else {
            runner.run(method, specs)
        };
        reports.push(summarize(
            method,
            runner.planner.phi,
            environment,
            &results,
            oracle.rate,
        ));
    }
    reports
}

/// As above, running the reference internally.
pub fn evaluate_methods(
    runner: &MethodRunner,
    methods: &[Method],
    specs: &[EpisodeSpec],
    environment: &str,
) -> Vec<MetricsReport> {
    let oracle = run_oracle(runner, specs);
    evaluate_methods_against(runner, methods, specs, environment, &oracle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub phi: f64,
    pub report: MetricsReport,
}

/// Evaluate the blended planner across phi values on shared specs. A
/// precomputed reference run may be supplied to avoid repeating it.
pub fn sweep_phi(
    runner: &MethodRunner,
    values: &[f64],
    specs: &[EpisodeSpec],
    environment: &str,
    oracle: Option<&OracleRun>,
) -> Vec<SweepPoint> {
    assert!(
        values.iter().all(|v| (0.0..=1.0).contains(v)),
        "phi values must lie in [0, 1]"
    );
    let computed;
    let oracle = match oracle {
        Some(o) => o,
        None => {
            computed = run_oracle(runner, specs);
            &computed
        }
    };
    let methods: Vec<Method> = values.iter().map(|&phi| Method::Hybrid { phi }).collect();
    let reports = evaluate_methods_against(runner, &methods, specs, environment, oracle);
    values
        .iter()
        .zip(reports)
        .map(|(&phi, report)| SweepPoint { phi, report })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub mode: String,
    pub channel_mask: [bool; 4],
    pub report: MetricsReport,
}

/// Retrain the learner with masked patch channels and evaluate the
/// learner-only planner per mode on shared specs.
///
/// Modes: appearance+height (all channels), appearance only, height only.
/// When `full_model` is given it stands in for the all-channels retrain.
#[allow(clippy::too_many_arguments)]
pub fn ablate_channels(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    runner_template: &MethodRunner,
    specs: &[EpisodeSpec],
    environment: &str,
    oracle: Option<&OracleRun>,
    full_model: Option<&ImitativeModel>,
) -> Result<Vec<AblationReport>, EvalError> {
    let computed;
    let oracle = match oracle {
        Some(o) => o,
        None => {
            computed = run_oracle(runner_template, specs);
            &computed
        }
    };
    let modes: [(&str, [bool; 4]); 3] = [
        ("appearance+height", [true, true, true, true]),
        ("appearance", [true, true, true, false]),
        ("height", [false, false, false, true]),
    ];
    let mut out = Vec::with_capacity(modes.len());
    for (label, mask) in modes {
        let reuse = full_model.filter(|m| m.config.channel_mask == mask);
        let trained;
        let model: &ImitativeModel = match reuse {
            Some(m) => m,
            None => {
                let mut cfg = model_cfg.clone();
                cfg.channel_mask = mask;
                trained = train(dataset, &cfg, train_cfg)?.0;
                &trained
            }
        };
        let runner = MethodRunner {
            worlds: runner_template.worlds,
            model,
            bc: runner_template.bc,
            library: runner_template.library,
            planner: runner_template.planner.clone(),
            grid: runner_template.grid.clone(),
            mode: runner_template.mode,
            alpha: runner_template.alpha,
            sim: runner_template.sim,
            f_tau: runner_template.f_tau,
            oracle_resolution: runner_template.oracle_resolution,
            oracle_clearance: runner_template.oracle_clearance,
        };
        let reports =
            evaluate_methods_against(&runner, &[Method::LearnerOnly], specs, environment, oracle);
        out.push(AblationReport {
            mode: label.to_string(),
            channel_mask: mask,
            report: reports.into_iter().next().unwrap(),
        });
    }
    Ok(out)
}

/// CSV for metric reports; floats print in shortest round-trip form so
/// reruns are byte-identical.
pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from(
        "method,phi,environment,episodes,successes,stuck,trapped,timeouts,raw_rate,oracle_rate,normalized_rate,ci_half_width\n",
    );
    for r in reports {
        let phi = r.phi.map(|p| p.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            phi,
            r.environment,
            r.episodes,
            r.successes,
            r.stuck,
            r.trapped,
            r.timeouts,
            r.raw_rate,
            r.oracle_rate,
            r.normalized_rate,
            r.ci_half_width
        ));
    }
    s
}

/// CSV for the blend-weight sweep.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("phi,raw_rate,normalized_rate,ci_half_width\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            p.phi, p.report.raw_rate, p.report.normalized_rate, p.report.ci_half_width
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_library, DatasetMeta, Example};
    use crate::geometry::Vec2;
    use crate::world::Patch;
    use rand::Rng;

    fn empty_worlds() -> Vec<WorldSpec> {
        vec![WorldSpec::empty(Vec2::new(40.0, 40.0))]
    }

    fn quick_params(episodes: usize) -> EvalParams {
        EvalParams {
            episodes,
            timeout: 60.0,
            seed: 11,
            ..EvalParams::default()
        }
    }

    fn toy_dataset() -> Dataset {
        let mut rng = seeded_rng(5);
        let examples = (0..40)
            .map(|_| {
                let speed: f64 = rng.gen_range(0.3..1.0);
                let turn: f64 = rng.gen_range(-0.4..0.4);
                Example {
                    past_positions: (0..10)
                        .map(|i| Vec2::new(speed * 0.2 * (i as f64 - 9.0), 0.0))
                        .collect(),
                    patch: Patch {
                        cells: 2,
                        data: (0..16).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    },
                    future_positions: (1..=10)
                        .map(|i| {
                            let t = 0.2 * i as f64;
                            Vec2::new(speed * t, turn * t * t)
                        })
                        .collect(),
                }
            })
            .collect();
        Dataset {
            examples,
            meta: DatasetMeta {
                f_tau: 5.0,
                h_past: 10,
                horizon: 10,
                patch_cells: 2,
                ..DatasetMeta::default()
            },
        }
    }

    fn tiny_model_cfg() -> ModelConfig {
        ModelConfig {
            patch_input_cells: 2,
            encoder_widths: vec![8, 8],
            step_hidden: 8,
            ..ModelConfig::default()
        }
    }

    struct Artifacts {
        model: ImitativeModel,
        library: TrajectoryLibrary,
    }

    fn quick_artifacts() -> Artifacts {
        let ds = toy_dataset();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, _) = train(&ds, &tiny_model_cfg(), &cfg).unwrap();
        let library = build_library(&ds, 8, 3).unwrap();
        Artifacts { model, library }
    }

    fn runner<'a>(
        worlds: &'a [WorldSpec],
        artifacts: &'a Artifacts,
        sim: &'a SimParams,
    ) -> MethodRunner<'a> {
        MethodRunner {
            worlds,
            model: &artifacts.model,
            bc: None,
            library: &artifacts.library,
            planner: PlannerConfig::default(),
            grid: GridSpec::default(),
            mode: NormalizeMode::Cellwise,
            alpha: 6.4,
            sim,
            f_tau: 5.0,
            oracle_resolution: 0.5,
            oracle_clearance: 0.3,
        }
    }

    #[test]
    fn specs_are_deterministic_and_respect_distance() {
        let worlds = empty_worlds();
        let params = quick_params(20);
        let a = make_episode_specs(&worlds, &params).unwrap();
        let b = make_episode_specs(&worlds, &params).unwrap();
        assert_eq!(a, b);
        for spec in &a {
            assert!(spec.start.position.distance(spec.goal) >= params.min_goal_dist);
        }
    }

    #[test]
    fn straight_succeeds_in_empty_worlds_and_oracle_normalizes_to_one() {
        let worlds = empty_worlds();
        let sim = SimParams::default();
        let artifacts = quick_artifacts();
        let r = runner(&worlds, &artifacts, &sim);
        let specs = make_episode_specs(&worlds, &quick_params(12)).unwrap();
        let reports =
            evaluate_methods(&r, &[Method::Straight, Method::Oracle], &specs, "empty");
        let straight = &reports[0];
        assert_eq!(straight.successes, straight.episodes, "{straight:?}");
        // Path length of a straight run is close to the start-goal distance.
        let results = r.run(Method::Straight, &specs);
        for (res, spec) in results.iter().zip(specs.iter()) {
            let direct = spec.start.position.distance(spec.goal);
            assert!(res.path_length <= direct + 2.0, "direct {direct}, got {res:?}");
        }
        let oracle = &reports[1];
        assert_eq!(oracle.normalized_rate, 1.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let worlds = empty_worlds();
        let sim = SimParams::default();
        let artifacts = quick_artifacts();
        let r = runner(&worlds, &artifacts, &sim);
        let specs = make_episode_specs(&worlds, &quick_params(6)).unwrap();
        let a = evaluate_methods(&r, &[Method::Hybrid { phi: 0.75 }], &specs, "empty");
        let b = evaluate_methods(&r, &[Method::Hybrid { phi: 0.75 }], &specs, "empty");
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_endpoints_match_component_methods() {
        let worlds = empty_worlds();
        let sim = SimParams::default();
        let artifacts = quick_artifacts();
        let r = runner(&worlds, &artifacts, &sim);
        let specs = make_episode_specs(&worlds, &quick_params(6)).unwrap();
        let sweep = sweep_phi(&r, &[0.0, 1.0], &specs, "empty", None);
        let components = evaluate_methods(
            &r,
            &[Method::LearnerOnly, Method::CostmapOnly],
            &specs,
            "empty",
        );
        assert_eq!(sweep[0].report.raw_rate, components[0].raw_rate);
        assert_eq!(sweep[1].report.raw_rate, components[1].raw_rate);
        assert_eq!(sweep[0].report.successes, components[0].successes);
        assert_eq!(sweep[1].report.successes, components[1].successes);
    }

    #[test]
    fn csv_round_trips_the_numbers() {
        let report = MetricsReport {
            method: "hybrid".into(),
            phi: Some(0.75),
            environment: "in_distribution".into(),
            episodes: 100,
            successes: 61,
            stuck: 20,
            trapped: 9,
            timeouts: 10,
            raw_rate: 0.61,
            oracle_rate: 0.8,
            normalized_rate: 0.7625,
            ci_half_width: binomial_half_width(0.61, 100),
        };
        let csv = report_csv(&[report.clone()]);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "hybrid");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.75);
        assert_eq!(fields[8].parse::<f64>().unwrap(), report.raw_rate);
        assert_eq!(fields[10].parse::<f64>().unwrap(), report.normalized_rate);
    }
}
