//! Noise prediction: the `eps(x_t, t)` interface, closed-form oracles for
//! exact testing, and a compact trainable network.

mod net;
mod train;

pub use net::TinyDenoiser;
pub use train::{gradient_check, train, TrainConfig, TrainReport};

use crate::error::{GsdError, Result};
use crate::grid::Grid;
use crate::schedule::NoiseSchedule;

/// Predicts the noise component of a noisy grid at step `t`.
///
/// Implementations are pure: the same `(x, t)` always yields the same
/// output, with the same dims as the input and only finite values.
pub trait NoisePredictor {
    fn predict(&self, x: &Grid, t: usize) -> Result<Grid>;
}

/// Closed-form predictors with known Lipschitz constants, used to probe
/// the sampler in the regime where inversion is algebraically exact
/// (output independent of `x`) or exactly characterized (affine in `x`).
#[derive(Debug, Clone)]
pub enum AnalyticOracle {
    /// `eps(x, t) = 0`.
    Zero,
    /// `eps(x, t) = c` everywhere.
    Constant(f64),
    /// `eps(x, t) = A * flat(x) + b` over the flattened grid.
    Linear { matrix: Vec<f64>, bias: Vec<f64> },
}

impl AnalyticOracle {
    /// Affine oracle `s * x + offset`, the diagonal special case of
    /// `Linear` without the n^2 matrix.
    pub fn scaled_identity(n: usize, s: f64, offset: f64) -> Self {
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = s;
        }
        AnalyticOracle::Linear { matrix, bias: vec![offset; n] }
    }

    /// Lipschitz constant of the map `x -> eps(x, t)`: zero for the
    /// x-independent modes, the operator norm of `A` for the linear mode
    /// (largest singular value, via power iteration on `A^T A`).
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            AnalyticOracle::Zero | AnalyticOracle::Constant(_) => 0.0,
            AnalyticOracle::Linear { matrix, bias } => {
                operator_norm(matrix, bias.len())
            }
        }
    }
}

impl NoisePredictor for AnalyticOracle {
    fn predict(&self, x: &Grid, _t: usize) -> Result<Grid> {
        match self {
            AnalyticOracle::Zero => Ok(Grid::zeros(x.dims())),
            AnalyticOracle::Constant(c) => Ok(Grid::filled(x.dims(), *c)),
            AnalyticOracle::Linear { matrix, bias } => {
                let n = x.len();
                if bias.len() != n || matrix.len() != n * n {
                    return Err(GsdError::DimMismatch(format!(
                        "linear oracle built for {} elements, input has {n}",
                        bias.len()
                    )));
                }
                let src = x.data();
                let data = (0..n)
                    .map(|i| {
                        let row = &matrix[i * n..(i + 1) * n];
                        bias[i] + row.iter().zip(src).map(|(a, v)| a * v).sum::<f64>()
                    })
                    .collect();
                Grid::from_vec(x.dims(), data)
            }
        }
    }
}

/// Largest singular value of a row-major n x n matrix by power iteration
/// on `A^T A` with a fixed deterministic start vector.
fn operator_norm(matrix: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut est = 0.0;
    for _ in 0..200 {
        // w = A v, u = A^T w
        let w: Vec<f64> = (0..n)
            .map(|i| matrix[i * n..(i + 1) * n].iter().zip(&v).map(|(a, x)| a * x).sum())
            .collect();
        let mut u = vec![0.0; n];
        for i in 0..n {
            let wi = w[i];
            for (j, slot) in u.iter_mut().enumerate() {
                *slot += matrix[i * n + j] * wi;
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm.sqrt();
        for (slot, x) in v.iter_mut().zip(&u) {
            *slot = x / norm;
        }
    }
    est
}

/// Forward diffusion `x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`.
pub fn forward_diffuse(
    x0: &Grid,
    t: usize,
    eps: &Grid,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    if t < 1 || t > schedule.len() {
        return Err(GsdError::IndexRange(format!(
            "diffusion step must lie in [1, {}], got {t}",
            schedule.len()
        )));
    }
    let abar = schedule.alpha_bar(t);
    x0.lin_comb(abar.sqrt(), eps, (1.0 - abar).sqrt())
}

/// Mean squared error between the injected noise and the predictor's
/// estimate of it from the diffused sample.
pub fn loss_simple(
    pred: &dyn NoisePredictor,
    x0: &Grid,
    t: usize,
    eps: &Grid,
    schedule: &NoiseSchedule,
) -> Result<f64> {
    let x_t = forward_diffuse(x0, t, eps, schedule)?;
    let estimate = pred.predict(&x_t, t)?;
    if estimate.dims() != eps.dims() {
        return Err(GsdError::DimMismatch(format!(
            "predictor returned {}, expected {}",
            estimate.dims(),
            eps.dims()
        )));
    }
    let n = eps.len() as f64;
    let sum: f64 = estimate
        .data()
        .iter()
        .zip(eps.data())
        .map(|(p, e)| (p - e) * (p - e))
        .sum();
    Ok(sum / n)
}
