//! Compact dense noise predictor with hand-written backprop.
//!
//! Input is the flattened grid concatenated with a sinusoidal embedding of
//! the step index; two tanh hidden layers feed a linear output of grid
//! size. Small enough that the analytic gradients stay tractable and can
//! be checked against finite differences to full double precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{GsdError, Result};
use crate::grid::{Dims, Grid};
use crate::rng::SeededRng;

use super::NoisePredictor;

const MAGIC: &[u8; 4] = b"GSDW";
const FORMAT_VERSION: u16 = 1;

pub const DEFAULT_TIME_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 256;

/// Dense eps-predictor bound to a fixed grid shape.
///
/// All parameters live in one flat buffer in checkpoint order
/// (`w1, b1, w2, b2, w3, b3`, row-major matrices), so the optimizer, the
/// finite-difference check and the serializer all walk the same layout.
#[derive(Debug, Clone)]
pub struct TinyDenoiser {
    dims: Dims,
    t_max: usize,
    time_embed_dim: usize,
    hidden_dim: usize,
    params: Vec<f64>,
}

/// Offsets of the six parameter blocks inside the flat buffer.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    input_dim: usize,
    hidden: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    fn new(n: usize, time_embed_dim: usize, hidden: usize) -> Self {
        let input_dim = n + time_embed_dim;
        let w1 = 0;
        let b1 = w1 + hidden * input_dim;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let w3 = b2 + hidden;
        let b3 = w3 + n * hidden;
        let total = b3 + n;
        Layout { n, input_dim, hidden, w1, b1, w2, b2, w3, b3, total }
    }
}

impl TinyDenoiser {
    pub fn new(dims: Dims, t_max: usize, seed: u64) -> Self {
        Self::with_sizes(dims, t_max, DEFAULT_TIME_EMBED_DIM, DEFAULT_HIDDEN_DIM, seed)
    }

    pub fn with_sizes(
        dims: Dims,
        t_max: usize,
        time_embed_dim: usize,
        hidden_dim: usize,
        seed: u64,
    ) -> Self {
        assert!(t_max >= 1, "t_max must be >= 1");
        assert!(time_embed_dim >= 2 && time_embed_dim % 2 == 0);
        assert!(hidden_dim >= 1);
        let layout = Layout::new(dims.len(), time_embed_dim, hidden_dim);
        let mut params = vec![0.0; layout.total];
        let mut rng = SeededRng::new(seed);
        // Xavier-uniform weights, zero biases.
        init_uniform(&mut params[layout.w1..layout.b1], layout.input_dim, hidden_dim, &mut rng);
        init_uniform(&mut params[layout.w2..layout.b2], hidden_dim, hidden_dim, &mut rng);
        init_uniform(&mut params[layout.w3..layout.b3], hidden_dim, layout.n, &mut rng);
        TinyDenoiser { dims, t_max, time_embed_dim, hidden_dim, params }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(self.dims.len(), self.time_embed_dim, self.hidden_dim)
    }

    /// Sinusoidal features of `t`: pairs `sin(t * w_k), cos(t * w_k)` with
    /// frequencies geometric between 1 and 1/t_max.
    fn embed_time(&self, t: usize) -> Vec<f64> {
        let half = self.time_embed_dim / 2;
        let t = t as f64;
        let mut out = Vec::with_capacity(self.time_embed_dim);
        for k in 0..half {
            let exponent = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            let freq = (self.t_max as f64).powf(-exponent);
            out.push((t * freq).sin());
            out.push((t * freq).cos());
        }
        out
    }

    fn build_input(&self, x: &Grid, t: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.layout().input_dim);
        input.extend_from_slice(x.data());
        input.extend(self.embed_time(t));
        input
    }

    fn forward(&self, input: &[f64]) -> ForwardPass {
        let l = self.layout();
        let p = &self.params;
        let a1 = affine_tanh(&p[l.w1..l.b1], &p[l.b1..l.w2], input, l.hidden);
        let a2 = affine_tanh(&p[l.w2..l.b2], &p[l.b2..l.w3], &a1, l.hidden);
        let mut out = vec![0.0; l.n];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = &p[l.w3 + i * l.hidden..l.w3 + (i + 1) * l.hidden];
            *slot = p[l.b3 + i] + dot(row, &a2);
        }
        ForwardPass { a1, a2, out }
    }

    /// Loss `mean((out - target)^2)` and its gradient with respect to every
    /// parameter, in buffer order.
    pub(super) fn loss_and_grad(
        &self,
        x_t: &Grid,
        t: usize,
        target: &Grid,
    ) -> Result<(f64, Vec<f64>)> {
        if x_t.dims() != self.dims || target.dims() != self.dims {
            return Err(GsdError::DimMismatch(format!(
                "model is bound to {}, got x_t {} / target {}",
                self.dims,
                x_t.dims(),
                target.dims()
            )));
        }
        let l = self.layout();
        let input = self.build_input(x_t, t);
        let pass = self.forward(&input);

        let n = l.n as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; l.n];
        for i in 0..l.n {
            let r = pass.out[i] - target.data()[i];
            loss += r * r;
            d_out[i] = 2.0 * r / n;
        }
        loss /= n;

        let p = &self.params;
        let mut grad = vec![0.0; l.total];

        // Output layer.
        for i in 0..l.n {
            let g = d_out[i];
            grad[l.b3 + i] = g;
            let row = &mut grad[l.w3 + i * l.hidden..l.w3 + (i + 1) * l.hidden];
            for (slot, a) in row.iter_mut().zip(&pass.a2) {
                *slot = g * a;
            }
        }
        // d a2, then through tanh.
        let mut d_z2 = vec![0.0; l.hidden];
        for i in 0..l.n {
            let g = d_out[i];
            let row = &p[l.w3 + i * l.hidden..l.w3 + (i + 1) * l.hidden];
            for (slot, w) in d_z2.iter_mut().zip(row) {
                *slot += g * w;
            }
        }
        for (slot, a) in d_z2.iter_mut().zip(&pass.a2) {
            *slot *= 1.0 - a * a;
        }
        // Second hidden layer.
        for i in 0..l.hidden {
            let g = d_z2[i];
            grad[l.b2 + i] = g;
            let row = &mut grad[l.w2 + i * l.hidden..l.w2 + (i + 1) * l.hidden];
            for (slot, a) in row.iter_mut().zip(&pass.a1) {
                *slot = g * a;
            }
        }
        let mut d_z1 = vec![0.0; l.hidden];
        for i in 0..l.hidden {
            let g = d_z2[i];
            let row = &p[l.w2 + i * l.hidden..l.w2 + (i + 1) * l.hidden];
            for (slot, w) in d_z1.iter_mut().zip(row) {
                *slot += g * w;
            }
        }
        for (slot, a) in d_z1.iter_mut().zip(&pass.a1) {
            *slot *= 1.0 - a * a;
        }
        // First hidden layer.
        for i in 0..l.hidden {
            let g = d_z1[i];
            grad[l.b1 + i] = g;
            let row = &mut grad[l.w1 + i * l.input_dim..l.w1 + (i + 1) * l.input_dim];
            for (slot, v) in row.iter_mut().zip(&input) {
                *slot = g * v;
            }
        }

        Ok((loss, grad))
    }

    /// Byte-exact checkpoint: magic, format version, dims, embed/hidden
    /// sizes, then the parameter buffer as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [self.dims.channels, self.dims.height, self.dims.width] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.time_embed_dim as u32).to_le_bytes())?;
        w.write_all(&(self.hidden_dim as u32).to_le_bytes())?;
        for v in &self.params {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint. The step count `t_max` scales the time embedding
    /// and is configuration, not part of the file; sender and receiver must
    /// agree on it (the run manifest records it).
    pub fn load(path: &Path, t_max: usize) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GsdError::CheckpointFormat(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u16(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(GsdError::CheckpointFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let channels = read_u32(&mut r)? as usize;
        let height = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let dims = Dims::new(channels, height, width)
            .map_err(|e| GsdError::CheckpointFormat(e.to_string()))?;
        let time_embed_dim = read_u32(&mut r)? as usize;
        let hidden_dim = read_u32(&mut r)? as usize;
        if time_embed_dim < 2 || time_embed_dim % 2 != 0 || hidden_dim == 0 {
            return Err(GsdError::CheckpointFormat(format!(
                "bad sizes: time_embed_dim={time_embed_dim}, hidden_dim={hidden_dim}"
            )));
        }
        let layout = Layout::new(dims.len(), time_embed_dim, hidden_dim);
        let mut params = vec![0.0; layout.total];
        let mut buf = [0u8; 8];
        for slot in params.iter_mut() {
            r.read_exact(&mut buf)?;
            *slot = f64::from_le_bytes(buf);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(GsdError::CheckpointFormat(
                "trailing bytes after parameter buffer".into(),
            ));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(GsdError::CheckpointFormat(
                "checkpoint holds non-finite weights".into(),
            ));
        }
        Ok(TinyDenoiser { dims, t_max, time_embed_dim, hidden_dim, params })
    }
}

impl NoisePredictor for TinyDenoiser {
    fn predict(&self, x: &Grid, t: usize) -> Result<Grid> {
        if x.dims() != self.dims {
            return Err(GsdError::DimMismatch(format!(
                "model is bound to {}, got {}",
                self.dims,
                x.dims()
            )));
        }
        let input = self.build_input(x, t);
        let pass = self.forward(&input);
        if !pass.out.iter().all(|v| v.is_finite()) {
            return Err(GsdError::NonFinite("denoiser forward pass".into()));
        }
        Grid::from_vec(self.dims, pass.out)
    }
}

struct ForwardPass {
    a1: Vec<f64>,
    a2: Vec<f64>,
    out: Vec<f64>,
}

fn affine_tanh(weights: &[f64], bias: &[f64], input: &[f64], rows: usize) -> Vec<f64> {
    let cols = input.len();
    (0..rows)
        .map(|i| (bias[i] + dot(&weights[i * cols..(i + 1) * cols], input)).tanh())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn init_uniform(slice: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut SeededRng) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for slot in slice.iter_mut() {
        *slot = (2.0 * rng.next_f64() - 1.0) * bound;
    }
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
