//! Training loop for the dense noise predictor.
//!
//! Each step draws an image from the dataset, perturbs it with small
//! Gaussian input noise, picks a uniform step index and injected noise,
//! and takes one Adam step on the noise-prediction MSE. Every draw comes
//! from a single seeded stream in a fixed order, so a seed pins the whole
//! run.

use crate::error::{GsdError, Result};
use crate::grid::Grid;
use crate::rng::{sample_gaussian, SeededRng};
use crate::schedule::NoiseSchedule;

use super::net::TinyDenoiser;
use super::{forward_diffuse, loss_simple};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Std-dev of the Gaussian perturbation added to each training image
    /// before diffusion.
    pub input_noise_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch: 8,
            learning_rate: 1e-3,
            input_noise_std: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(GsdError::InvalidArgument(
                "steps and batch must be positive".into(),
            ));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(GsdError::InvalidArgument(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.input_noise_std < 0.0 || !self.input_noise_std.is_finite() {
            return Err(GsdError::InvalidArgument(
                "input noise std must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Loss curve sampled at fixed checkpoints (step, batch-mean loss).
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoints: Vec<(usize, f64)>,
    pub final_loss: f64,
}

impl TrainReport {
    /// Mean loss over the checkpoints that fall in `[from, to)` of the run,
    /// expressed as fractions. Used for smoothed trend checks.
    pub fn window_mean(&self, from: f64, to: f64) -> f64 {
        let n = self.checkpoints.len();
        let lo = (n as f64 * from) as usize;
        let hi = ((n as f64 * to) as usize).max(lo + 1).min(n);
        let window = &self.checkpoints[lo..hi];
        window.iter().map(|(_, l)| l).sum::<f64>() / window.len() as f64
    }
}

/// Adam with the standard moment decays (0.9, 0.999) and eps 1e-8.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0, lr }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.step as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Runs the training loop in place and returns the loss curve.
///
/// Images are expected in [-1, 1]. A non-finite batch loss aborts with
/// [`GsdError::Diverged`] and leaves the model at its last finite state.
pub fn train(
    model: &mut TinyDenoiser,
    dataset: &[Grid],
    cfg: &TrainConfig,
    schedule: &NoiseSchedule,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GsdError::InvalidArgument("dataset is empty".into()));
    }
    for img in dataset {
        if img.dims() != model.dims() {
            return Err(GsdError::DimMismatch(format!(
                "dataset image {} vs model {}",
                img.dims(),
                model.dims()
            )));
        }
    }

    let dims = model.dims();
    let t_len = schedule.len();
    let mut rng = SeededRng::new(cfg.seed);
    let mut adam = Adam::new(model.parameter_count(), cfg.learning_rate);
    let checkpoint_every = (cfg.steps / 200).max(1);
    let mut report = TrainReport { checkpoints: Vec::new(), final_loss: f64::NAN };

    let mut grad_acc = vec![0.0; model.parameter_count()];
    for step in 0..cfg.steps {
        grad_acc.iter_mut().for_each(|g| *g = 0.0);
        let mut loss_acc = 0.0;
        for _ in 0..cfg.batch {
            // Draw order is part of the reproducibility contract:
            // image index, input perturbation, step index, injected noise.
            let idx = rng.next_below(dataset.len());
            let perturb = sample_gaussian(&mut rng, dims)?;
            let x0 = dataset[idx].lin_comb(1.0, &perturb, cfg.input_noise_std)?;
            let t = 1 + rng.next_below(t_len);
            let eps = sample_gaussian(&mut rng, dims)?;
            let x_t = forward_diffuse(&x0, t, &eps, schedule)?;
            let (loss, grad) = model.loss_and_grad(&x_t, t, &eps)?;
            loss_acc += loss;
            for (acc, g) in grad_acc.iter_mut().zip(&grad) {
                *acc += g;
            }
        }
        let scale = 1.0 / cfg.batch as f64;
        let batch_loss = loss_acc * scale;
        if !batch_loss.is_finite() {
            return Err(GsdError::Diverged { step });
        }
        grad_acc.iter_mut().for_each(|g| *g *= scale);
        adam.update(model.params_mut(), &grad_acc);

        if step % checkpoint_every == 0 || step + 1 == cfg.steps {
            report.checkpoints.push((step, batch_loss));
        }
        report.final_loss = batch_loss;
    }
    Ok(report)
}

/// Compares the analytic parameter gradient of the noise-prediction loss
/// against central finite differences (step 1e-5) on a random subsample of
/// parameters, and returns the worst relative error.
pub fn gradient_check(
    model: &TinyDenoiser,
    x0: &Grid,
    t: usize,
    eps: &Grid,
    schedule: &NoiseSchedule,
    n_checks: usize,
    seed: u64,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let x_t = forward_diffuse(x0, t, eps, schedule)?;
    let (_, analytic) = model.loss_and_grad(&x_t, t, eps)?;

    let mut probe = model.clone();
    let mut rng = SeededRng::new(seed);
    let n_params = probe.parameter_count();
    let mut worst: f64 = 0.0;
    for _ in 0..n_checks.max(1) {
        let i = rng.next_below(n_params);
        let original = probe.params()[i];
        probe.params_mut()[i] = original + H;
        let up = loss_simple(&probe, x0, t, eps, schedule)?;
        probe.params_mut()[i] = original - H;
        let down = loss_simple(&probe, x0, t, eps, schedule)?;
        probe.params_mut()[i] = original;
        let numeric = (up - down) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
