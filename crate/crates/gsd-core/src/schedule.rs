//! Diffusion hyperparameter tables and the accelerated sampling
//! subsequence.

use crate::error::{GsdError, Result};

/// Per-step retention factors `alpha_t` and their running product
/// `alpha_bar_t` for `t` in `[1, T]`.
///
/// `alpha_bar(0)` is defined as exactly 1, so the terminal transition to or
/// from the clean image uses the same formulas as every interior step.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear schedule `alpha_t = 1 - 0.02 * t / T`.
    pub fn linear(t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(GsdError::InvalidArgument("schedule needs T >= 1".into()));
        }
        let alphas = (1..=t_max)
            .map(|t| 1.0 - 0.02 * t as f64 / t_max as f64)
            .collect();
        Self::from_alphas(alphas)
    }

    /// Schedule from explicit per-step factors; each must lie in (0, 1).
    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(GsdError::InvalidArgument("schedule needs T >= 1".into()));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(GsdError::InvalidArgument(
                "every alpha_t must lie in (0, 1)".into(),
            ));
        }
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        Ok(NoiseSchedule { alpha, alpha_bar })
    }

    /// Number of diffusion steps T.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `alpha_t`, 1-based.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.len(), "alpha({t}) out of [1, {}]", self.len());
        self.alpha[t - 1]
    }

    /// `alpha_bar_t`, 1-based; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.len(), "alpha_bar({t}) out of [0, {}]", self.len());
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Noise scale for the transition between two subsequence nodes:
    /// `sigma = eta * sqrt((1-abar_prev)/(1-abar_cur)) * sqrt(1 - abar_cur/abar_prev)`.
    ///
    /// Exactly zero when `eta` is zero. `t_prev = 0` is allowed and yields
    /// zero as well (`abar_0 = 1` collapses the first factor).
    pub fn sigma(&self, t_prev: usize, t_cur: usize, eta: f64) -> Result<f64> {
        if t_prev >= t_cur || t_cur > self.len() {
            return Err(GsdError::IndexRange(format!(
                "sigma needs 0 <= t_prev < t_cur <= {}, got ({t_prev}, {t_cur})",
                self.len()
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(GsdError::InvalidArgument(format!(
                "eta must lie in [0, 1], got {eta}"
            )));
        }
        if eta == 0.0 {
            return Ok(0.0);
        }
        let abar_prev = self.alpha_bar(t_prev);
        let abar_cur = self.alpha_bar(t_cur);
        let ratio = (1.0 - abar_prev) / (1.0 - abar_cur);
        Ok(eta * ratio.sqrt() * (1.0 - abar_cur / abar_prev).sqrt())
    }
}

/// Ordered subsequence `tau` of `{1, ..., T}` used for accelerated
/// sampling, plus the noise interpolation parameter `eta`.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    tau: Vec<usize>,
    eta: f64,
}

impl SamplingPlan {
    /// Uniform plan `tau = {dt, 2*dt, ..., T}` with `dt = T / S`; requires
    /// S to divide T.
    pub fn uniform(t_max: usize, s: usize) -> Result<Self> {
        if s == 0 || s > t_max {
            return Err(GsdError::InvalidArgument(format!(
                "need 1 <= S <= T, got S={s}, T={t_max}"
            )));
        }
        if t_max % s != 0 {
            return Err(GsdError::InvalidArgument(format!(
                "S must divide T for the uniform plan, got T={t_max}, S={s}"
            )));
        }
        let dt = t_max / s;
        let tau = (1..=s).map(|i| i * dt).collect();
        Ok(SamplingPlan { tau, eta: 0.0 })
    }

    /// Explicit subsequence; must be strictly increasing inside `[1, T]`.
    pub fn custom(tau: Vec<usize>, t_max: usize) -> Result<Self> {
        if tau.is_empty() {
            return Err(GsdError::InvalidArgument("plan needs at least one node".into()));
        }
        for pair in tau.windows(2) {
            if pair[0] >= pair[1] {
                return Err(GsdError::InvalidArgument(
                    "plan nodes must be strictly increasing".into(),
                ));
            }
        }
        if tau[0] < 1 || *tau.last().unwrap() > t_max {
            return Err(GsdError::IndexRange(format!(
                "plan nodes must lie in [1, {t_max}]"
            )));
        }
        Ok(SamplingPlan { tau, eta: 0.0 })
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(GsdError::InvalidArgument(format!(
                "eta must lie in [0, 1], got {eta}"
            )));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    /// Number of sampling nodes S.
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}
