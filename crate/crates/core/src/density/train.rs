//! Maximum-likelihood training of the trajectory density with per-epoch
//! Gaussian perturbation of the target trajectories.

use super::{scale_grad, whiten, DensityError, ImitativeModel, ModelConfig, LN_2PI};
use crate::data::Dataset;
use crate::geometry::Vec2;
use crate::nn::{Adam, MlpCache};
use crate::rng::{seeded_rng, split_seed_indexed, standard_normal};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Scale of the Gaussian perturbation applied to target trajectories
    /// each epoch.
    pub perturbation_sigma: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 0.001,
            perturbation_sigma: 0.01,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), DensityError> {
        if self.batch_size == 0
            || self.learning_rate <= 0.0
            || self.perturbation_sigma <= 0.0
            || self.epochs == 0
        {
            return Err(DensityError::BadConfig(
                "batch_size, learning_rate, perturbation_sigma, and epochs must be positive"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Reusable buffers for the per-example forward/backward pass.
#[derive(Debug, Default)]
pub struct TrainScratch {
    enc_cache: MlpCache,
    step_cache: MlpCache,
    step_input: Vec<f64>,
}

/// Negative log-likelihood of one example plus analytic parameter gradients.
///
/// Gradients are scaled by `grad_scale` and accumulated into `grad`, laid
/// out as encoder parameters followed by step-net parameters. Teacher
/// forcing: each step conditions on the ground-truth previous points, so no
/// gradient flows through the autoregressive inputs.
pub fn example_loss_and_grad(
    model: &ImitativeModel,
    enc_input: &[f64],
    x0: Vec2,
    xm1: Vec2,
    future: &[Vec2],
    grad: &mut [f64],
    grad_scale: f64,
    scratch: &mut TrainScratch,
) -> f64 {
    let enc_pc = model.encoder.param_count();
    debug_assert_eq!(grad.len(), enc_pc + model.step_net.param_count());
    let ctx_dim = model.config.context_dim();

    model.encoder.forward_cached(enc_input, &mut scratch.enc_cache);
    let context = scratch.enc_cache.activations.last().unwrap().clone();
    let mut dcontext = vec![0.0f64; ctx_dim];

    let mut nll = 0.0;
    let mut x1 = x0;
    let mut x2 = xm1;
    let (enc_grad, step_grad) = grad.split_at_mut(enc_pc);
    for target in future {
        scratch.step_input.clear();
        scratch.step_input.extend_from_slice(&context);
        scratch
            .step_input
            .extend_from_slice(&[x1.x, x1.y, x2.x, x2.y]);
        model
            .step_net
            .forward_cached(&scratch.step_input, &mut scratch.step_cache);
        let out = scratch.step_cache.activations.last().unwrap().clone();
        let dist = model.step_output_to_distribution(&out, x1, x2);
        let (z1, z2) = whiten(*target, &dist);
        nll += LN_2PI + dist.a.ln() + dist.c.ln() + 0.5 * (z1 * z1 + z2 * z2);

        // d(nll)/d(step outputs). The residual shifts the mean directly.
        let dmean_x = -z1 / dist.a + z2 * dist.b / (dist.a * dist.c);
        let dmean_y = -z2 / dist.c;
        let da = 1.0 / dist.a - z1 * z1 / dist.a + z1 * z2 * dist.b / (dist.a * dist.c);
        let db = -z1 * z2 / dist.c;
        let dc = 1.0 / dist.c - z2 * z2 / dist.c;
        let dout = [
            dmean_x * grad_scale,
            dmean_y * grad_scale,
            da * scale_grad(out[2]) * grad_scale,
            db * grad_scale,
            dc * scale_grad(out[4]) * grad_scale,
        ];
        let dstep_in = model
            .step_net
            .backward(&scratch.step_cache, &dout, step_grad, true)
            .unwrap();
        for (acc, d) in dcontext.iter_mut().zip(dstep_in.iter()) {
            *acc += d;
        }
        x2 = x1;
        x1 = *target;
    }
    model
        .encoder
        .backward(&scratch.enc_cache, &dcontext, enc_grad, false);
    nll
}

/// Forward-only negative log-likelihood used by the gradient checker.
pub(crate) fn example_nll(
    model: &ImitativeModel,
    enc_input: &[f64],
    x0: Vec2,
    xm1: Vec2,
    future: &[Vec2],
) -> f64 {
    let context = model.encoder.forward(enc_input);
    let mut nll = 0.0;
    let mut x1 = x0;
    let mut x2 = xm1;
    let mut step_input = Vec::with_capacity(context.len() + 4);
    for target in future {
        step_input.clear();
        step_input.extend_from_slice(&context);
        step_input.extend_from_slice(&[x1.x, x1.y, x2.x, x2.y]);
        let out = model.step_net.forward(&step_input);
        let dist = model.step_output_to_distribution(&out, x1, x2);
        let (z1, z2) = whiten(*target, &dist);
        nll += LN_2PI + dist.a.ln() + dist.c.ln() + 0.5 * (z1 * z1 + z2 * z2);
        x2 = x1;
        x1 = *target;
    }
    nll
}

/// Minibatch maximum-likelihood training. Returns the trained model and the
/// mean NLL per epoch. Deterministic in (dataset, configs).
pub fn train(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ImitativeModel, Vec<f64>), DensityError> {
    cfg.validate()?;
    if dataset.examples.is_empty() {
        return Err(DensityError::EmptyDataset);
    }
    if dataset.meta.h_past != model_cfg.h_past || dataset.meta.horizon != model_cfg.horizon {
        return Err(DensityError::BadConfig(format!(
            "dataset windows ({}, {}) do not match model ({}, {})",
            dataset.meta.h_past, dataset.meta.horizon, model_cfg.h_past, model_cfg.horizon
        )));
    }

    let mut model = ImitativeModel::new_seeded(model_cfg.clone(), cfg.seed);
    let n = dataset.examples.len();

    // Encoder inputs do not depend on the perturbation; build them once.
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut anchors: Vec<(Vec2, Vec2)> = Vec::with_capacity(n);
    for ex in &dataset.examples {
        inputs.push(model.encoder_input(&ex.patch, &ex.past_positions)?);
        let m = ex.past_positions.len();
        anchors.push((ex.past_positions[m - 1], ex.past_positions[m - 2]));
    }

    let enc_pc = model.encoder.param_count();
    let step_pc = model.step_net.param_count();
    let mut grad = vec![0.0f64; enc_pc + step_pc];
    let mut opt_enc = Adam::new(enc_pc, cfg.learning_rate);
    let mut opt_step = Adam::new(step_pc, cfg.learning_rate);
    let mut scratch = TrainScratch::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let horizon = model_cfg.horizon;

    for epoch in 0..cfg.epochs {
        // Fresh seeded perturbation of the target trajectories.
        let mut perturb_rng = seeded_rng(split_seed_indexed(
            cfg.seed,
            "train-perturb",
            epoch as u64,
        ));
        let mut perturbed: Vec<Vec2> = Vec::with_capacity(n * horizon);
        for ex in &dataset.examples {
            for p in &ex.future_positions {
                perturbed.push(Vec2::new(
                    p.x + cfg.perturbation_sigma * standard_normal(&mut perturb_rng),
                    p.y + cfg.perturbation_sigma * standard_normal(&mut perturb_rng),
                ));
            }
        }

        let mut shuffle_rng = seeded_rng(split_seed_indexed(
            cfg.seed,
            "train-shuffle",
            epoch as u64,
        ));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_nll = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let (x0, xm1) = anchors[idx];
                let future = &perturbed[idx * horizon..(idx + 1) * horizon];
                epoch_nll += example_loss_and_grad(
                    &model,
                    &inputs[idx],
                    x0,
                    xm1,
                    future,
                    &mut grad,
                    scale,
                    &mut scratch,
                );
            }
            opt_enc.step(&mut model.encoder.params, &grad[..enc_pc]);
            opt_step.step(&mut model.step_net.params, &grad[enc_pc..]);
        }
        let mean_nll = epoch_nll / n as f64;
        if !mean_nll.is_finite() {
            return Err(DensityError::Diverged {
                epoch,
                loss: mean_nll,
            });
        }
        losses.push(mean_nll);
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, DatasetMeta, Example};
    use crate::rng::seeded_rng;
    use crate::world::Patch;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            patch_input_cells: 2,
            encoder_widths: vec![8, 8],
            step_hidden: 8,
            h_past: 10,
            horizon: 10,
            eta: 64.0,
            channel_mask: [true; 4],
            ..ModelConfig::default()
        }
    }

    fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        let examples = (0..n)
            .map(|_| {
                let speed: f64 = rng.gen_range(0.2..1.0);
                let turn: f64 = rng.gen_range(-0.3..0.3);
                let past: Vec<Vec2> = (0..10)
                    .map(|i| Vec2::new(speed * 0.2 * (i as f64 - 9.0), 0.0))
                    .collect();
                let future: Vec<Vec2> = (1..=10)
                    .map(|i| {
                        let t = 0.2 * i as f64;
                        Vec2::new(speed * t, turn * t * t)
                    })
                    .collect();
                let patch = Patch {
                    cells: 2,
                    data: (0..16).map(|_| rng.gen_range(0.0..1.0)).collect(),
                };
                Example {
                    past_positions: past,
                    patch,
                    future_positions: future,
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

    #[test]
    fn loss_decreases_over_training() {
        let ds = synthetic_dataset(64, 3);
        let cfg = TrainConfig {
            epochs: 8,
            ..TrainConfig::default()
        };
        let (_, losses) = train(&ds, &tiny_config(), &cfg).unwrap();
        assert!(
            losses.last().unwrap() <= losses.first().unwrap(),
            "losses: {losses:?}"
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = synthetic_dataset(32, 4);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, la) = train(&ds, &tiny_config(), &cfg).unwrap();
        let (b, lb) = train(&ds, &tiny_config(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let empty = Dataset::default();
        assert!(train(&empty, &tiny_config(), &TrainConfig::default()).is_err());
        let ds = synthetic_dataset(4, 5);
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&ds, &tiny_config(), &bad).is_err());
    }

    /// Single-point overfit oracle: with one example and many epochs the
    /// unperturbed log-likelihood must close to within 0.5 nats of the
    /// clamp-limited maximum eta.
    #[test]
    fn single_example_overfits_to_near_eta() {
        let ds = synthetic_dataset(1, 6);
        let cfg = TrainConfig {
            batch_size: 1,
            epochs: 40_000,
            ..TrainConfig::default()
        };
        let (model, _) = train(&ds, &tiny_config(), &cfg).unwrap();
        let ex = &ds.examples[0];
        let cond = model.encode(&ex.patch, &ex.past_positions).unwrap();
        let lp = model.log_prob(&cond, &ex.future_positions).unwrap();
        assert!(lp <= model.eta);
        assert!(
            model.eta - lp <= 0.5,
            "overfit gap too large: eta - lp = {}",
            model.eta - lp
        );
    }
}
