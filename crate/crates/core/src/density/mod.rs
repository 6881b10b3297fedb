//! Conditional trajectory density q(traj | observation): a feed-forward
//! encoder over the egocentric patch and past positions, followed by an
//! autoregressive Gaussian flow over future positions. A floor on the scale
//! diagonal makes the log-density analytically bounded above by `eta`, so
//! the learned cost and the geometric costmap cost share a common range.

mod gradcheck;
mod io;
mod train;

pub use gradcheck::{check_example, check_model_config, grad_check, grad_check_with_step};
pub use io::{read_model, write_model, MODEL_MAGIC};
pub use train::{example_loss_and_grad, train, TrainConfig};

use crate::geometry::Vec2;
use crate::nn::{sigmoid, softplus, Mlp};
use crate::rng::standard_normal;
use crate::world::Patch;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("model file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and bound constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Patch is cropped to the near forward window, then pooled to this
    /// side length before the encoder.
    pub patch_input_cells: usize,
    /// Fraction of the raw patch window the encoder keeps (near field).
    pub patch_crop: f64,
    /// Hidden widths of the encoder; the last width is the context size.
    pub encoder_widths: Vec<usize>,
    pub step_hidden: usize,
    pub h_past: usize,
    pub horizon: usize,
    /// Upper bound on the trajectory log-density, in nats.
    pub eta: f64,
    /// Which patch channels the encoder may see (appearance r, g, b, height).
    pub channel_mask: [bool; 4],
    /// Per-channel offsets subtracted from pooled patch values before the
    /// encoder, so open ground reads as zero and objects as deviations.
    pub input_offset: [f64; 4],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_input_cells: 25,
            patch_crop: 0.5,
            encoder_widths: vec![128, 96],
            step_hidden: 64,
            h_past: 10,
            horizon: 10,
            eta: 64.0,
            channel_mask: [true; 4],
            input_offset: [0.40, 0.32, 0.18, 0.0],
        }
    }
}

impl ModelConfig {
    pub fn encoder_input_dim(&self) -> usize {
        self.patch_input_cells * self.patch_input_cells * 4 + 2 * self.h_past
    }

    pub fn context_dim(&self) -> usize {
        *self.encoder_widths.last().expect("encoder needs a width")
    }
}

/// Fix the largest scale floor whose float-evaluated bound stays at or below
/// `eta` with margin, so the bound can never be violated numerically.
pub fn derive_sigma_floor(eta: f64, horizon: usize) -> f64 {
    let per_step = eta / horizon as f64;
    let mut s = (-(per_step + LN_2PI) / 2.0).exp();
    let bound = |s: f64| -> f64 {
        (0..horizon).fold(0.0, |acc, _| acc + (-LN_2PI - 2.0 * s.ln()))
    };
    while bound(s) > eta - 1e-12 {
        s = s.next_up();
    }
    s
}

/// Learned conditional density over future trajectories.
///
/// The step network sees (context, x_{i-1}, x_{i-2}) and emits a residual on
/// the constant-velocity mean plus a lower-triangular scale whose diagonal
/// is floored at `sigma_floor`, which caps every step's density and hence
/// the trajectory log-density at `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImitativeModel {
    pub config: ModelConfig,
    pub encoder: Mlp,
    pub step_net: Mlp,
    pub sigma_floor: f64,
    pub eta: f64,
    pub train_seed: u64,
}

/// Encoded observation: the context vector plus the two most recent past
/// positions that anchor the constant-velocity prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub context: Vec<f64>,
    /// Current position in the local frame (the origin by construction).
    pub x0: Vec2,
    /// Previous position at the trajectory framerate.
    pub xm1: Vec2,
}

/// Per-step Gaussian: mean plus lower-triangular scale [[a, 0], [b, c]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDistribution {
    pub mean: Vec2,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ImitativeModel {
    pub fn new_seeded(config: ModelConfig, seed: u64) -> ImitativeModel {
        assert!(
            config.context_dim() % 4 == 0,
            "context width must be a multiple of 4"
        );
        let enc_dims: Vec<usize> = std::iter::once(config.encoder_input_dim())
            .chain(config.encoder_widths.iter().copied())
            .collect();
        let step_dims = vec![config.context_dim() + 4, config.step_hidden, 5];
        let sigma_floor = derive_sigma_floor(config.eta, config.horizon);
        ImitativeModel {
            eta: config.eta,
            sigma_floor,
            encoder: Mlp::new_seeded(&enc_dims, true, crate::rng::split_seed(seed, "encoder")),
            step_net: Mlp::new_seeded(&step_dims, false, crate::rng::split_seed(seed, "step")),
            config,
            train_seed: seed,
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.step_net.param_count()
    }

    /// Assemble the encoder input from a patch and past positions: pooled,
    /// channel-masked patch values followed by the flattened past.
    pub fn encoder_input(
        &self,
        patch: &Patch,
        past_positions: &[Vec2],
    ) -> Result<Vec<f64>, DensityError> {
        if past_positions.len() != self.config.h_past {
            return Err(DensityError::ShapeMismatch(format!(
                "expected {} past positions, got {}",
                self.config.h_past,
                past_positions.len()
            )));
        }
        let pooled = patch
            .forward_window_pooled(self.config.patch_crop, self.config.patch_input_cells)
            .ok_or_else(|| {
                DensityError::ShapeMismatch(format!(
                    "patch side {} incompatible with crop {} to {} cells",
                    patch.cells, self.config.patch_crop, self.config.patch_input_cells
                ))
            })?;
        let mut input = Vec::with_capacity(self.config.encoder_input_dim());
        for (i, v) in pooled.iter().enumerate() {
            let ch = i % 4;
            input.push(if self.config.channel_mask[ch] {
                *v - self.config.input_offset[ch]
            } else {
                0.0
            });
        }
        for p in past_positions {
            input.push(p.x);
            input.push(p.y);
        }
        Ok(input)
    }

    /// Encode an observation into the conditioning for log_prob/sample.
    pub fn encode(
        &self,
        patch: &Patch,
        past_positions: &[Vec2],
    ) -> Result<Conditioning, DensityError> {
        let input = self.encoder_input(patch, past_positions)?;
        if input.iter().any(|v| !v.is_finite()) {
            return Err(DensityError::NonFinite);
        }
        let context = self.encoder.forward(&input);
        let n = past_positions.len();
        Ok(Conditioning {
            context,
            x0: past_positions[n - 1],
            xm1: past_positions[n - 2],
        })
    }

    /// The Gaussian for step i given the two previous points.
    pub fn step_distribution(&self, context: &[f64], x1: Vec2, x2: Vec2) -> StepDistribution {
        StepEvaluator::new(self, context).step_distribution(x1, x2)
    }

    pub(crate) fn step_output_to_distribution(
        &self,
        out: &[f64],
        x1: Vec2,
        x2: Vec2,
    ) -> StepDistribution {
        StepDistribution {
            mean: Vec2::new(2.0 * x1.x - x2.x + out[0], 2.0 * x1.y - x2.y + out[1]),
            a: self.sigma_floor + softplus(out[2]),
            b: out[3],
            c: self.sigma_floor + softplus(out[4]),
        }
    }

    /// Log-density of a trajectory of `horizon` points in the local frame.
    /// Bounded above by `eta` by construction.
    pub fn log_prob(&self, cond: &Conditioning, traj: &[Vec2]) -> Result<f64, DensityError> {
        if traj.len() != self.config.horizon {
            return Err(DensityError::ShapeMismatch(format!(
                "trajectory has {} points, model horizon is {}",
                traj.len(),
                self.config.horizon
            )));
        }
        if traj.iter().any(|p| !p.is_finite())
            || !cond.x0.is_finite()
            || !cond.xm1.is_finite()
            || cond.context.iter().any(|v| !v.is_finite())
        {
            return Err(DensityError::NonFinite);
        }
        let eval = StepEvaluator::new(self, &cond.context);
        let mut lp = 0.0;
        let mut x1 = cond.x0;
        let mut x2 = cond.xm1;
        for p in traj {
            let d = eval.step_distribution(x1, x2);
            let (z1, z2) = whiten(*p, &d);
            lp += -LN_2PI - d.a.ln() - d.c.ln() - 0.5 * (z1 * z1 + z2 * z2);
            x2 = x1;
            x1 = *p;
        }
        Ok(lp)
    }

    /// Push a fixed noise sequence through the flow. Returns the trajectory
    /// and the log-density accumulated by the change of variables during
    /// sampling (which must match `log_prob` on the result).
    pub fn sample_with_noise(&self, cond: &Conditioning, noise: &[Vec2]) -> (Vec<Vec2>, f64) {
        let eval = StepEvaluator::new(self, &cond.context);
        let mut traj = Vec::with_capacity(noise.len());
        let mut lp = 0.0;
        let mut x1 = cond.x0;
        let mut x2 = cond.xm1;
        for z in noise {
            let d = eval.step_distribution(x1, x2);
            let p = Vec2::new(
                d.mean.x + d.a * z.x,
                d.mean.y + d.b * z.x + d.c * z.y,
            );
            lp += -LN_2PI - d.a.ln() - d.c.ln() - 0.5 * (z.x * z.x + z.y * z.y);
            traj.push(p);
            x2 = x1;
            x1 = p;
        }
        (traj, lp)
    }

    /// Draw one trajectory.
    pub fn sample<R: Rng>(&self, cond: &Conditioning, rng: &mut R) -> Vec<Vec2> {
        let noise: Vec<Vec2> = (0..self.config.horizon)
            .map(|_| Vec2::new(standard_normal(rng), standard_normal(rng)))
            .collect();
        self.sample_with_noise(cond, &noise).0
    }

    /// Mean rollout (all noise zero).
    pub fn mean_rollout(&self, cond: &Conditioning) -> Vec<Vec2> {
        self.sample_with_noise(cond, &vec![Vec2::ZERO; self.config.horizon])
            .0
    }
}

/// Scores step distributions for one fixed context. The context's
/// contribution to the step net's hidden layer is folded in once, so
/// evaluating many candidate trajectories against the same observation
/// costs only the position-dependent part.
///
/// The partial-sum lanes of [`crate::nn::dot`] are preserved across the
/// context/position boundary (the context size is a multiple of four by
/// construction), so results are bit-identical to the plain forward pass.
pub struct StepEvaluator<'a> {
    model: &'a ImitativeModel,
    /// Per hidden unit: the four dot-product lanes after the context terms.
    ctx_lanes: Vec<[f64; 4]>,
}

impl<'a> StepEvaluator<'a> {
    pub fn new(model: &'a ImitativeModel, context: &[f64]) -> Self {
        let net = &model.step_net;
        let n_in = net.dims[0];
        let hidden = net.dims[1];
        let ctx_dim = context.len();
        debug_assert_eq!(n_in, ctx_dim + 4);
        debug_assert_eq!(ctx_dim % 4, 0, "context width must be a multiple of 4");
        let mut ctx_lanes = vec![[0.0f64; 4]; hidden];
        for (o, lanes) in ctx_lanes.iter_mut().enumerate() {
            let row = &net.params[o * n_in..o * n_in + ctx_dim];
            let mut i = 0;
            while i < ctx_dim {
                lanes[0] += row[i] * context[i];
                lanes[1] += row[i + 1] * context[i + 1];
                lanes[2] += row[i + 2] * context[i + 2];
                lanes[3] += row[i + 3] * context[i + 3];
                i += 4;
            }
        }
        StepEvaluator { model, ctx_lanes }
    }

    pub fn step_distribution(&self, x1: Vec2, x2: Vec2) -> StepDistribution {
        let net = &self.model.step_net;
        let n_in = net.dims[0];
        let hidden = net.dims[1];
        let ctx_dim = n_in - 4;
        let xs = [x1.x, x1.y, x2.x, x2.y];
        let mut h = vec![0.0f64; hidden];
        for (o, hv) in h.iter_mut().enumerate() {
            let row = &net.params[o * n_in + ctx_dim..(o + 1) * n_in];
            let mut s = self.ctx_lanes[o];
            s[0] += row[0] * xs[0];
            s[1] += row[1] * xs[1];
            s[2] += row[2] * xs[2];
            s[3] += row[3] * xs[3];
            let acc = net.params[n_in * hidden + o] + ((s[0] + s[1]) + (s[2] + s[3]));
            *hv = acc.tanh();
        }
        let off = n_in * hidden + hidden;
        let out_dim = net.dims[2];
        let mut out = [0.0f64; 5];
        for (o, ov) in out.iter_mut().enumerate().take(out_dim) {
            let row = &net.params[off + o * hidden..off + (o + 1) * hidden];
            *ov = net.params[off + hidden * out_dim + o] + crate::nn::dot(row, &h);
        }
        self.model.step_output_to_distribution(&out, x1, x2)
    }
}

/// Solve S z = (p - mean) by forward substitution.
#[inline]
pub(crate) fn whiten(p: Vec2, d: &StepDistribution) -> (f64, f64) {
    let dx = p.x - d.mean.x;
    let dy = p.y - d.mean.y;
    let z1 = dx / d.a;
    let z2 = (dy - d.b * z1) / d.c;
    (z1, z2)
}

/// Derivative of the scale diagonal w.r.t. the raw step-net output.
#[inline]
pub(crate) fn scale_grad(raw: f64) -> f64 {
    sigmoid(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

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

    fn random_past(rng: &mut impl rand::Rng) -> Vec<Vec2> {
        let mut past = Vec::new();
        let mut p = Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        for _ in 0..10 {
            p += Vec2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            past.push(p);
        }
        // Reference convention: final past position is the origin.
        let last = *past.last().unwrap();
        past.iter().map(|q| *q - last).collect()
    }

    fn random_patch(cells: usize, rng: &mut impl rand::Rng) -> Patch {
        Patch {
            cells,
            data: (0..cells * cells * 4).map(|_| rng.gen_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn sigma_floor_realizes_eta_exactly() {
        let s = derive_sigma_floor(64.0, 10);
        // Analytic value ~ 0.01626 m.
        assert!((s - 0.016258).abs() < 1e-5, "sigma_floor = {s}");
        let bound: f64 = (0..10).fold(0.0, |acc, _| acc + (-LN_2PI - 2.0 * s.ln()));
        assert!(bound <= 64.0);
        assert!((bound - 64.0).abs() < 1e-11);
    }

    #[test]
    fn encode_is_deterministic_and_sensitive_to_appearance() {
        let cfg = tiny_config();
        let model = ImitativeModel::new_seeded(cfg, 7);
        let mut rng = seeded_rng(1);
        let patch = random_patch(2, &mut rng);
        let past = random_past(&mut rng);
        let a = model.encode(&patch, &past).unwrap();
        let b = model.encode(&patch, &past).unwrap();
        assert_eq!(a, b);

        // Change only appearance channels.
        let mut patch2 = patch.clone();
        for i in 0..4 {
            patch2.data[i * 4] = (patch2.data[i * 4] + 0.3) % 1.0;
        }
        let c = model.encode(&patch2, &past).unwrap();
        assert_ne!(a.context, c.context);
    }

    #[test]
    fn zero_weights_give_zero_context() {
        let cfg = tiny_config();
        let mut model = ImitativeModel::new_seeded(cfg, 7);
        for p in model.encoder.params.iter_mut() {
            *p = 0.0;
        }
        let mut rng = seeded_rng(2);
        let patch = random_patch(2, &mut rng);
        let past = random_past(&mut rng);
        let cond = model.encode(&patch, &past).unwrap();
        assert!(cond.context.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_bad_shapes() {
        let model = ImitativeModel::new_seeded(tiny_config(), 7);
        let mut rng = seeded_rng(3);
        // Cropping 5 cells by half gives a 3-cell window, not poolable to 2.
        let patch = random_patch(5, &mut rng);
        let past = random_past(&mut rng);
        assert!(model.encode(&patch, &past).is_err());
        let patch = random_patch(2, &mut rng);
        assert!(model.encode(&patch, &past[..5]).is_err());
    }

    /// Force residual zero and scale to the floor: the constant-velocity
    /// continuation then scores exactly eta.
    #[test]
    fn mode_value_equals_eta() {
        let cfg = tiny_config();
        let mut model = ImitativeModel::new_seeded(cfg, 7);
        for p in model.step_net.params.iter_mut() {
            *p = 0.0;
        }
        // Bias the raw scale outputs far negative: softplus -> ~4e-18.
        let pc = model.step_net.param_count();
        // Output layer biases are the last 5 params of the step net.
        model.step_net.params[pc - 3] = -40.0; // raw a
        model.step_net.params[pc - 1] = -40.0; // raw c
        let mut rng = seeded_rng(4);
        let patch = random_patch(2, &mut rng);
        // Constant-velocity past: uniform speed along +x.
        let past: Vec<Vec2> = (0..10).map(|i| Vec2::new(0.1 * (i as f64 - 9.0), 0.0)).collect();
        let cond = model.encode(&patch, &past).unwrap();
        let traj: Vec<Vec2> = (1..=10).map(|i| Vec2::new(0.1 * i as f64, 0.0)).collect();
        let lp = model.log_prob(&cond, &traj).unwrap();
        assert!(lp <= model.eta);
        assert!((lp - model.eta).abs() < 1e-9, "lp = {lp}, eta = {}", model.eta);
    }

    #[test]
    fn single_step_standard_gaussian_density() {
        // One-step model, mean 0, unit isotropic scale, point (0, 0):
        // log N = -ln(2 pi).
        let cfg = ModelConfig {
            horizon: 1,
            ..tiny_config()
        };
        let mut model = ImitativeModel::new_seeded(cfg, 7);
        for p in model.step_net.params.iter_mut() {
            *p = 0.0;
        }
        let pc = model.step_net.param_count();
        // softplus(raw) must equal 1 - sigma_floor: raw = ln(e^t - 1).
        let t: f64 = 1.0 - model.sigma_floor;
        let raw = t.exp_m1().ln();
        model.step_net.params[pc - 3] = raw;
        model.step_net.params[pc - 1] = raw;
        let cond = Conditioning {
            context: vec![0.0; 8],
            x0: Vec2::ZERO,
            xm1: Vec2::ZERO,
        };
        let lp = model.log_prob(&cond, &[Vec2::ZERO]).unwrap();
        assert!((lp - (-LN_2PI)).abs() < 1e-12, "lp = {lp}");
        assert!((lp - (-1.8379)).abs() < 1e-4);
    }

    /// Independent closed-form oracle: evaluate each step's Gaussian via the
    /// explicit 2x2 covariance inverse instead of forward substitution.
    #[test]
    fn log_prob_matches_dense_gaussian_oracle() {
        let model = ImitativeModel::new_seeded(tiny_config(), 77);
        let mut rng = seeded_rng(5);
        let patch = random_patch(2, &mut rng);
        let past = random_past(&mut rng);
        let cond = model.encode(&patch, &past).unwrap();
        let traj: Vec<Vec2> = (0..10)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let lp = model.log_prob(&cond, &traj).unwrap();

        let mut oracle = 0.0;
        let mut x1 = cond.x0;
        let mut x2 = cond.xm1;
        for p in &traj {
            let d = model.step_distribution(&cond.context, x1, x2);
            // Sigma = S S^T for S = [[a, 0], [b, c]].
            let s11 = d.a * d.a;
            let s12 = d.a * d.b;
            let s22 = d.b * d.b + d.c * d.c;
            let det = s11 * s22 - s12 * s12;
            let inv11 = s22 / det;
            let inv12 = -s12 / det;
            let inv22 = s11 / det;
            let dx = p.x - d.mean.x;
            let dy = p.y - d.mean.y;
            let q = dx * dx * inv11 + 2.0 * dx * dy * inv12 + dy * dy * inv22;
            oracle += -LN_2PI - 0.5 * det.ln() - 0.5 * q;
            x2 = x1;
            x1 = *p;
        }
        assert!((lp - oracle).abs() < 1e-9, "lp {lp} vs oracle {oracle}");
    }

    #[test]
    fn zero_noise_sample_is_mean_rollout() {
        let model = ImitativeModel::new_seeded(tiny_config(), 8);
        let mut rng = seeded_rng(6);
        let patch = random_patch(2, &mut rng);
        let past = random_past(&mut rng);
        let cond = model.encode(&patch, &past).unwrap();
        let (traj, _) = model.sample_with_noise(&cond, &vec![Vec2::ZERO; 10]);
        let mean = model.mean_rollout(&cond);
        for (a, b) in traj.iter().zip(mean.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let model = ImitativeModel::new_seeded(tiny_config(), 8);
        let mut rng = seeded_rng(7);
        let patch = random_patch(2, &mut rng);
        let past = random_past(&mut rng);
        let cond = model.encode(&patch, &past).unwrap();
        let a = model.sample(&cond, &mut seeded_rng(42));
        let b = model.sample(&cond, &mut seeded_rng(42));
        assert_eq!(a, b);
    }

    /// Monte Carlo oracle with a linear flow: with the step net forced to a
    /// constant residual, the flow is affine so the sample mean converges to
    /// the mean rollout.
    #[test]
    fn sample_mean_matches_analytic_rollout() {
        let cfg = tiny_config();
        let mut model = ImitativeModel::new_seeded(cfg, 9);
        for p in model.step_net.params.iter_mut() {
            *p = 0.0;
        }
        let pc = model.step_net.param_count();
        model.step_net.params[pc - 5] = 0.03; // constant residual x
        model.step_net.params[pc - 4] = -0.01; // constant residual y
        model.step_net.params[pc - 3] = -3.0; // small scale a
        model.step_net.params[pc - 1] = -3.0; // small scale c
        let cond = Conditioning {
            context: vec![0.0; 8],
            x0: Vec2::ZERO,
            xm1: Vec2::new(-0.15, 0.0),
        };
        let analytic = model.mean_rollout(&cond);
        let n = 10_000;
        let mut rng = seeded_rng(1234);
        let mut sums = vec![Vec2::ZERO; 10];
        let mut sq = vec![Vec2::ZERO; 10];
        for _ in 0..n {
            let t = model.sample(&cond, &mut rng);
            for (i, p) in t.iter().enumerate() {
                sums[i] += *p;
                sq[i] += Vec2::new(p.x * p.x, p.y * p.y);
            }
        }
        for i in 0..10 {
            let mean = sums[i] / n as f64;
            let var_x = sq[i].x / n as f64 - mean.x * mean.x;
            let var_y = sq[i].y / n as f64 - mean.y * mean.y;
            let se_x = (var_x / n as f64).sqrt();
            let se_y = (var_y / n as f64).sqrt();
            assert!(
                (mean.x - analytic[i].x).abs() <= 3.0 * se_x + 1e-12,
                "step {i} x: {} vs {}",
                mean.x,
                analytic[i].x
            );
            assert!(
                (mean.y - analytic[i].y).abs() <= 3.0 * se_y + 1e-12,
                "step {i} y: {} vs {}",
                mean.y,
                analytic[i].y
            );
        }
    }

    /// The context-folding evaluator must agree bit-for-bit with a plain
    /// forward pass through the step net.
    #[test]
    fn step_evaluator_matches_plain_forward_exactly() {
        let model = ImitativeModel::new_seeded(tiny_config(), 21);
        let mut rng = seeded_rng(33);
        for _ in 0..50 {
            let context: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x1 = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let x2 = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let mut input = context.clone();
            input.extend_from_slice(&[x1.x, x1.y, x2.x, x2.y]);
            let out = model.step_net.forward(&input);
            let plain = model.step_output_to_distribution(&out, x1, x2);
            let fast = StepEvaluator::new(&model, &context).step_distribution(x1, x2);
            assert_eq!(plain, fast);
        }
    }

    /// Property: log_prob never exceeds eta, and the density path agrees
    /// with the change-of-variables value accumulated during sampling.
    #[test]
    fn bound_and_flow_consistency_hold_for_random_models() {
        for seed in 0..50u64 {
            let model = ImitativeModel::new_seeded(tiny_config(), seed);
            let mut rng = seeded_rng(seed ^ 0xabcd);
            let patch = random_patch(2, &mut rng);
            let past = random_past(&mut rng);
            let cond = model.encode(&patch, &past).unwrap();

            // Random trajectories at several magnitudes.
            for scale in [0.05, 0.5, 3.0] {
                let traj: Vec<Vec2> = (0..10)
                    .map(|_| {
                        Vec2::new(
                            rng.gen_range(-scale..scale),
                            rng.gen_range(-scale..scale),
                        )
                    })
                    .collect();
                let lp = model.log_prob(&cond, &traj).unwrap();
                assert!(lp <= model.eta, "bound violated: {lp} > {}", model.eta);
            }

            let noise: Vec<Vec2> = (0..10)
                .map(|_| Vec2::new(standard_normal(&mut rng), standard_normal(&mut rng)))
                .collect();
            let (traj, lp_flow) = model.sample_with_noise(&cond, &noise);
            let lp_density = model.log_prob(&cond, &traj).unwrap();
            assert!(
                (lp_flow - lp_density).abs() < 1e-9,
                "flow inconsistency: {lp_flow} vs {lp_density}"
            );
            assert!(lp_density <= model.eta);
        }
    }

    /// For a one-step model with fixed mean and scale, the density must
    /// integrate to one over a grid covering +-6 scales.
    #[test]
    fn one_step_density_normalizes() {
        let cfg = ModelConfig {
            horizon: 1,
            ..tiny_config()
        };
        let mut model = ImitativeModel::new_seeded(cfg, 11);
        for p in model.step_net.params.iter_mut() {
            *p = 0.0;
        }
        let pc = model.step_net.param_count();
        let t: f64 = 0.5 - model.sigma_floor;
        let raw = t.exp_m1().ln();
        model.step_net.params[pc - 5] = 0.2; // residual x
        model.step_net.params[pc - 3] = raw; // a = 0.5
        model.step_net.params[pc - 2] = 0.1; // b
        model.step_net.params[pc - 1] = raw; // c = 0.5
        let cond = Conditioning {
            context: vec![0.0; 8],
            x0: Vec2::ZERO,
            xm1: Vec2::ZERO,
        };
        let d = model.step_distribution(&cond.context, cond.x0, cond.xm1);
        let spread = 6.0 * (d.a.max(d.c) + d.b.abs());
        let n = 600;
        let hx = 2.0 * spread / n as f64;
        let mut integral = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = Vec2::new(
                    d.mean.x - spread + (i as f64 + 0.5) * hx,
                    d.mean.y - spread + (j as f64 + 0.5) * hx,
                );
                let lp = model.log_prob(&cond, &[p]).unwrap();
                integral += lp.exp() * hx * hx;
            }
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
    }
}
