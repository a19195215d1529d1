//! End-to-end hide/reveal paths, synthetic training data and the
//! evaluation harness.
//!
//! Hiding embeds the payload into latent DCT coefficients, denoises it
//! deterministically into an image, and quantizes at the pixel boundary.
//! Revealing runs the diffusion in the opposite direction from the
//! dequantized image and reads the coefficient signs back. With eta = 0
//! and fixed seeds the whole path is bit-reproducible.

use std::str::FromStr;
use std::time::Instant;

use crate::codec::{self, BitVector, EmbedLayout, StegoImage};
use crate::denoiser::NoisePredictor;
use crate::error::{GsdError, Result};
use crate::grid::{Dims, Grid};
use crate::rng::{sample_gaussian, SeededRng};
use crate::sampler;
use crate::schedule::{NoiseSchedule, SamplingPlan};

/// Settings shared by the hide and reveal paths.
///
/// `eta` is carried for the stochastic sampler but the stego paths require
/// it to be exactly zero — anything else would not invert.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dims: Dims,
    pub t_max: usize,
    pub s: usize,
    pub eta: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(dims: Dims, t_max: usize, s: usize) -> Self {
        PipelineConfig { dims, t_max, s, eta: 0.0, amplitude: 1.0, seed: 0 }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_max)
    }

    pub fn plan(&self) -> Result<SamplingPlan> {
        SamplingPlan::uniform(self.t_max, self.s)
    }

    pub fn layout(&self) -> Result<EmbedLayout> {
        EmbedLayout::with_amplitude(self.amplitude)
    }

    /// Payload capacity in bits (1 bit per coefficient).
    pub fn capacity_bits(&self) -> usize {
        self.dims.len()
    }

    fn check_stego_path(&self) -> Result<()> {
        if self.eta != 0.0 {
            return Err(GsdError::InvalidArgument(format!(
                "the hide/reveal path requires eta = 0, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Stego latent for a payload: the deterministic first half of the hide
/// path. A throwaway latent is drawn from the seed first, mirroring the
/// sampled-then-overwritten latent of the generation algorithm, and to
/// keep hide and cover generation on the same stream.
pub fn stego_latent(d: &BitVector, cfg: &PipelineConfig) -> Result<Grid> {
    let mut rng = SeededRng::new(cfg.seed).derive(0x6c6174656e74); // "latent"
    let _z = sample_gaussian(&mut rng, cfg.dims)?;
    codec::embed(d, cfg.dims, &cfg.layout()?)
}

/// Full hide path: embed, generate, quantize.
pub fn hide(
    d: &BitVector,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<StegoImage> {
    Ok(codec::quantize(&hide_float(d, cfg, model)?))
}

/// Hide with the quantizer bypassed: returns the float image `x_0`.
pub fn hide_float(
    d: &BitVector,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<Grid> {
    cfg.check_stego_path()?;
    let z_s = stego_latent(d, cfg)?;
    sampler::generate(&z_s, &cfg.plan()?, model, &cfg.schedule()?)
}

/// Cover-image path: same generation, but the latent keeps its Gaussian
/// draw instead of carrying a payload.
pub fn generate_cover(
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<StegoImage> {
    cfg.check_stego_path()?;
    let mut rng = SeededRng::new(cfg.seed).derive(0x6c6174656e74);
    let z = sample_gaussian(&mut rng, cfg.dims)?;
    let x0 = sampler::generate(&z, &cfg.plan()?, model, &cfg.schedule()?)?;
    Ok(codec::quantize(&x0))
}

/// Payload plus the recovered latent, for callers that also want the
/// inversion residual.
#[derive(Debug, Clone)]
pub struct RevealOutput {
    pub bits: BitVector,
    pub latent: Grid,
}

/// Full reveal path: dequantize, invert, extract.
pub fn reveal(
    img: &StegoImage,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<BitVector> {
    Ok(reveal_detailed(img, cfg, model)?.bits)
}

pub fn reveal_detailed(
    img: &StegoImage,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<RevealOutput> {
    if img.dims() != cfg.dims {
        return Err(GsdError::DimMismatch(format!(
            "stego image {} vs configured {}",
            img.dims(),
            cfg.dims
        )));
    }
    reveal_float_detailed(&codec::dequantize(img), cfg, model)
}

/// Reveal from a float image (quantizer bypassed).
pub fn reveal_float(
    x0: &Grid,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<BitVector> {
    Ok(reveal_float_detailed(x0, cfg, model)?.bits)
}

pub fn reveal_float_detailed(
    x0: &Grid,
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
) -> Result<RevealOutput> {
    cfg.check_stego_path()?;
    if x0.dims() != cfg.dims {
        return Err(GsdError::DimMismatch(format!(
            "image {} vs configured {}",
            x0.dims(),
            cfg.dims
        )));
    }
    let latent = sampler::invert(x0, &cfg.plan()?, model, &cfg.schedule()?)?;
    let bits = codec::extract(&latent, &cfg.layout()?)?;
    Ok(RevealOutput { bits, latent })
}

/// Fraction of coefficient signs recovered with a clear margin: the share
/// of |coeff| >= amplitude/2. Low confidence usually means the S or the
/// checkpoint differs from the hider's.
pub fn sign_confidence(latent: &Grid, amplitude: f64) -> f64 {
    let coeff = crate::dct::dct2(latent);
    let n = coeff.len() as f64;
    let hits = coeff
        .data()
        .iter()
        .filter(|c| c.abs() >= amplitude / 2.0)
        .count();
    hits as f64 / n
}

/// XNOR match rate between two equal-length payloads.
pub fn accuracy(d: &BitVector, d_prime: &BitVector) -> Result<f64> {
    if d.len() != d_prime.len() {
        return Err(GsdError::DimMismatch(format!(
            "payload lengths differ: {} vs {}",
            d.len(),
            d_prime.len()
        )));
    }
    let matches = d.iter().zip(d_prime.iter()).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / d.len() as f64)
}

/// Hidden bits per pixel-channel: `n_bits / (C*H*W)`.
pub fn bits_per_pixel(n_bits: usize, dims: Dims) -> f64 {
    n_bits as f64 / dims.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Gradients,
    Checkers,
}

impl FromStr for DatasetKind {
    type Err = GsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DatasetKind::Blobs),
            "gradients" => Ok(DatasetKind::Gradients),
            "checkers" => Ok(DatasetKind::Checkers),
            other => Err(GsdError::InvalidArgument(format!(
                "unknown dataset kind {other:?} (blobs|gradients|checkers)"
            ))),
        }
    }
}

/// Deterministic synthetic images in [-1, 1] used as a stand-in training
/// corpus at desk scale.
pub fn synth_dataset(
    kind: DatasetKind,
    count: usize,
    dims: Dims,
    seed: u64,
) -> Result<Vec<Grid>> {
    if count == 0 {
        return Err(GsdError::InvalidArgument("dataset count must be >= 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| synth_image(kind, dims, &mut rng)).collect()
}

fn synth_image(kind: DatasetKind, dims: Dims, rng: &mut SeededRng) -> Result<Grid> {
    let (h, w) = (dims.height as f64, dims.width as f64);
    let mut out = Grid::zeros(dims);
    match kind {
        DatasetKind::Blobs => {
            for c in 0..dims.channels {
                let n_blobs = 1 + rng.next_below(3);
                let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
                    .map(|_| {
                        let cx = rng.next_f64() * w;
                        let cy = rng.next_f64() * h;
                        let radius = (0.15 + 0.25 * rng.next_f64()) * w.min(h);
                        let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                        (cx, cy, radius, sign)
                    })
                    .collect();
                let base = 0.4 * (2.0 * rng.next_f64() - 1.0);
                let plane = out.channel_mut(c);
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        let mut v = base;
                        for &(cx, cy, radius, sign) in &blobs {
                            let dx = x as f64 + 0.5 - cx;
                            let dy = y as f64 + 0.5 - cy;
                            let r2 = (dx * dx + dy * dy) / (radius * radius);
                            v += sign * 0.9 * (-r2).exp();
                        }
                        plane[y * dims.width + x] = v.clamp(-1.0, 1.0);
                    }
                }
            }
        }
        DatasetKind::Gradients => {
            for c in 0..dims.channels {
                // Slope magnitudes are bounded away from zero so every
                // image keeps non-degenerate content.
                let ax = (0.5 + 1.0 * rng.next_f64()) * pick_sign(rng);
                let ay = (0.5 + 1.0 * rng.next_f64()) * pick_sign(rng);
                let offset = 0.3 * (2.0 * rng.next_f64() - 1.0);
                let plane = out.channel_mut(c);
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        let u = (x as f64 + 0.5) / w - 0.5;
                        let v = (y as f64 + 0.5) / h - 0.5;
                        plane[y * dims.width + x] =
                            (ax * u + ay * v + offset).clamp(-1.0, 1.0);
                    }
                }
            }
        }
        DatasetKind::Checkers => {
            for c in 0..dims.channels {
                let cell = 1 + rng.next_below(dims.width.max(2) / 2);
                let phase = rng.next_below(2);
                let level = 0.5 + 0.5 * rng.next_f64();
                let plane = out.channel_mut(c);
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        let parity = (x / cell + y / cell + phase) % 2;
                        plane[y * dims.width + x] =
                            if parity == 0 { level } else { -level };
                    }
                }
            }
        }
    }
    Ok(out)
}

fn pick_sign(rng: &mut SeededRng) -> f64 {
    if rng.next_u64() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-channel first/second-moment distance between a set of generated
/// images and a reference set. A coarse sanity diagnostic only — not
/// comparable to published feature-space image-quality scores.
#[derive(Debug, Clone)]
pub struct DiagnosticStats {
    pub mean_dist: f64,
    pub var_dist: f64,
}

fn channel_moments(images: &[Grid], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0; channels];
    let mut vars = vec![0.0; channels];
    for c in 0..channels {
        let mut sum = 0.0;
        let mut count = 0usize;
        for img in images {
            sum += img.channel(c).iter().sum::<f64>();
            count += img.channel(c).len();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for img in images {
            sq += img.channel(c).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        means[c] = mean;
        vars[c] = sq / count as f64;
    }
    (means, vars)
}

pub fn diagnostic_stats(generated: &[Grid], reference: &[Grid]) -> Result<DiagnosticStats> {
    if generated.is_empty() || reference.is_empty() {
        return Err(GsdError::InvalidArgument(
            "diagnostic stats need non-empty image sets".into(),
        ));
    }
    let channels = generated[0].dims().channels;
    let (gm, gv) = channel_moments(generated, channels);
    let (rm, rv) = channel_moments(reference, channels);
    let mean_dist = gm
        .iter()
        .zip(&rm)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / channels as f64;
    let var_dist = gv
        .iter()
        .zip(&rv)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / channels as f64;
    Ok(DiagnosticStats { mean_dist, var_dist })
}

/// Aggregate metrics for one pipeline configuration.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub s: usize,
    pub bpp: f64,
    pub acc: f64,
    pub mean_abs_latent_error: f64,
    /// Mean seconds per image for the hide body (embed/generate/quantize).
    pub gen_time: f64,
    /// Mean seconds per image for the reveal body (dequantize/invert/extract).
    pub ext_time: f64,
    /// `(gen_time + ext_time) / 2`.
    pub mean_time: f64,
    pub diagnostic: Option<DiagnosticStats>,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "S,acc,mean_abs_latent_error,gen_time,ext_time,mean_time"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.s,
            self.acc,
            self.mean_abs_latent_error,
            self.gen_time,
            self.ext_time,
            self.mean_time
        )
    }
}

/// Runs `trials` random payloads end to end through one configuration,
/// timing the hide and reveal bodies and accumulating accuracy and the
/// latent reconstruction error.
pub fn evaluate(
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
    trials: usize,
    reference: Option<&[Grid]>,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(GsdError::InvalidArgument("trials must be >= 1".into()));
    }
    let n_bits = cfg.capacity_bits();
    let mut acc_sum = 0.0;
    let mut latent_err_sum = 0.0;
    let mut gen_time = 0.0;
    let mut ext_time = 0.0;
    let mut generated = Vec::new();

    for trial in 0..trials {
        let mut trial_cfg = cfg.clone();
        trial_cfg.seed = SeededRng::new(cfg.seed).derive(trial as u64).next_u64();
        let mut payload_rng = SeededRng::new(trial_cfg.seed).derive(0x70617974); // "payt"
        let d = BitVector::random(&mut payload_rng, n_bits);
        let z_s = stego_latent(&d, &trial_cfg)?;

        let start = Instant::now();
        let img = hide(&d, &trial_cfg, model)?;
        gen_time += start.elapsed().as_secs_f64();

        let start = Instant::now();
        let out = reveal_detailed(&img, &trial_cfg, model)?;
        ext_time += start.elapsed().as_secs_f64();

        acc_sum += accuracy(&d, &out.bits)?;
        latent_err_sum += out.latent.mean_abs_diff(&z_s);
        if reference.is_some() && generated.len() < 32 {
            generated.push(codec::dequantize(&img));
        }
    }

    let n = trials as f64;
    let gen_time = gen_time / n;
    let ext_time = ext_time / n;
    Ok(EvalReport {
        s: cfg.s,
        bpp: bits_per_pixel(n_bits, cfg.dims),
        acc: acc_sum / n,
        mean_abs_latent_error: latent_err_sum / n,
        gen_time,
        ext_time,
        mean_time: (gen_time + ext_time) / 2.0,
        diagnostic: match reference {
            Some(r) => Some(diagnostic_stats(&generated, r)?),
            None => None,
        },
    })
}

/// Evaluates every S in `s_list` with the same payload seeds.
pub fn sweep_steps(
    cfg: &PipelineConfig,
    model: &dyn NoisePredictor,
    s_list: &[usize],
    trials: usize,
    reference: Option<&[Grid]>,
) -> Result<Vec<EvalReport>> {
    if s_list.is_empty() {
        return Err(GsdError::InvalidArgument("sweep needs at least one S".into()));
    }
    s_list
        .iter()
        .map(|&s| {
            let mut step_cfg = cfg.clone();
            step_cfg.s = s;
            evaluate(&step_cfg, model, trials, reference)
        })
        .collect()
}
