//! Central finite-difference verification of the analytic gradients.

use super::train::{example_loss_and_grad, example_nll, TrainScratch};
use super::ImitativeModel;
use crate::data::Example;

/// Compare analytic parameter gradients of the negative log-likelihood
/// against central finite differences at the default step 1e-5. Returns the
/// maximum relative error over every parameter.
pub fn grad_check(model: &mut ImitativeModel, example: &Example) -> f64 {
    grad_check_with_step(model, example, 1e-5)
}

/// `err = |analytic - numeric| / max(|analytic| + |numeric|, 1e-4)`; the
/// floor keeps roundoff noise on near-zero gradients from dominating.
pub fn grad_check_with_step(model: &mut ImitativeModel, example: &Example, fd_step: f64) -> f64 {
    let input = model
        .encoder_input(&example.patch, &example.past_positions)
        .expect("example shapes must match the model");
    let m = example.past_positions.len();
    let x0 = example.past_positions[m - 1];
    let xm1 = example.past_positions[m - 2];
    let future = &example.future_positions;

    let mut analytic = vec![0.0f64; model.param_count()];
    let mut scratch = TrainScratch::default();
    example_loss_and_grad(
        model,
        &input,
        x0,
        xm1,
        future,
        &mut analytic,
        1.0,
        &mut scratch,
    );

    let enc_pc = model.encoder.param_count();
    let mut max_rel: f64 = 0.0;
    for i in 0..analytic.len() {
        let old = read_param(model, enc_pc, i);
        write_param(model, enc_pc, i, old + fd_step);
        let plus = example_nll(model, &input, x0, xm1, future);
        write_param(model, enc_pc, i, old - fd_step);
        let minus = example_nll(model, &input, x0, xm1, future);
        write_param(model, enc_pc, i, old);
        let numeric = (plus - minus) / (2.0 * fd_step);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-4);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

/// Analytic and numeric gradient of one flat parameter; used by edge-case
/// tests on individual weights.
#[cfg(test)]
pub(crate) fn single_param_grads(
    model: &mut ImitativeModel,
    example: &Example,
    index: usize,
    fd_step: f64,
) -> (f64, f64) {
    let input = model
        .encoder_input(&example.patch, &example.past_positions)
        .expect("example shapes must match the model");
    let m = example.past_positions.len();
    let x0 = example.past_positions[m - 1];
    let xm1 = example.past_positions[m - 2];
    let future = &example.future_positions;
    let mut analytic = vec![0.0f64; model.param_count()];
    let mut scratch = TrainScratch::default();
    example_loss_and_grad(
        model,
        &input,
        x0,
        xm1,
        future,
        &mut analytic,
        1.0,
        &mut scratch,
    );
    let enc_pc = model.encoder.param_count();
    let old = read_param(model, enc_pc, index);
    write_param(model, enc_pc, index, old + fd_step);
    let plus = example_nll(model, &input, x0, xm1, future);
    write_param(model, enc_pc, index, old - fd_step);
    let minus = example_nll(model, &input, x0, xm1, future);
    write_param(model, enc_pc, index, old);
    (analytic[index], (plus - minus) / (2.0 * fd_step))
}

/// Small architecture for fast finite-difference verification.
pub fn check_model_config() -> crate::density::ModelConfig {
    crate::density::ModelConfig {
        patch_input_cells: 2,
        encoder_widths: vec![8, 8],
        step_hidden: 8,
        ..crate::density::ModelConfig::default()
    }
}

/// Seeded random example matching [`check_model_config`] shapes.
pub fn check_example(seed: u64) -> Example {
    use rand::Rng;
    let mut rng = crate::rng::seeded_rng(seed);
    let speed: f64 = rng.gen_range(0.1..1.0);
    Example {
        past_positions: (0..10)
            .map(|i| {
                crate::geometry::Vec2::new(
                    speed * 0.2 * (i as f64 - 9.0),
                    rng.gen_range(-0.02..0.02),
                )
            })
            .collect(),
        patch: crate::world::Patch {
            cells: 2,
            data: (0..16).map(|_| rng.gen_range(0.0..1.0)).collect(),
        },
        future_positions: (1..=10)
            .map(|i| {
                crate::geometry::Vec2::new(
                    speed * 0.2 * i as f64 + rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect(),
    }
}

fn read_param(model: &ImitativeModel, enc_pc: usize, i: usize) -> f64 {
    if i < enc_pc {
        model.encoder.params[i]
    } else {
        model.step_net.params[i - enc_pc]
    }
}

fn write_param(model: &mut ImitativeModel, enc_pc: usize, i: usize, v: f64) {
    if i < enc_pc {
        model.encoder.params[i] = v;
    } else {
        model.step_net.params[i - enc_pc] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ModelConfig;
    use crate::geometry::Vec2;
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

    fn random_example(seed: u64) -> Example {
        check_example(seed)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in 0..10u64 {
            let mut model = ImitativeModel::new_seeded(tiny_config(), seed);
            let example = random_example(seed ^ 0x5a5a);
            let err = grad_check(&mut model, &example);
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn unused_weight_has_zero_gradient() {
        let mut cfg = tiny_config();
        cfg.input_offset = [0.0; 4];
        let mut model = ImitativeModel::new_seeded(cfg, 3);
        let mut example = random_example(77);
        // Zero the whole patch: every first-layer weight reading a patch
        // input sees zero input, so its gradient must vanish.
        for v in example.patch.data.iter_mut() {
            *v = 0.0;
        }
        // First-layer weight (output 0, input 0) reads patch value 0.
        let (analytic, numeric) = single_param_grads(&mut model, &example, 0, 1e-5);
        assert!(analytic.abs() < 1e-12, "analytic {analytic}");
        assert!(numeric.abs() < 1e-8, "numeric {numeric}");
    }

    #[test]
    fn finite_difference_steps_agree_to_leading_order() {
        let mut model = ImitativeModel::new_seeded(tiny_config(), 5);
        let example = random_example(11);
        let coarse = grad_check_with_step(&mut model, &example, 1e-4);
        let fine = grad_check_with_step(&mut model, &example, 1e-6);
        assert!(coarse < 1e-3, "coarse step error {coarse}");
        assert!(fine < 1e-3, "fine step error {fine}");
    }
}
