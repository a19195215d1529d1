//! Dense channel-major tensor used for images, latents and coefficient
//! planes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GsdError, Result};

/// Shape of a [`Grid`]: channels x height x width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(GsdError::InvalidDims(format!(
                "all axes must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Dims { channels, height, width })
    }

    /// Total element count `C*H*W`.
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Parses the CLI form `CxHxW`, e.g. `1x16x16` or `3x64x64`.
impl FromStr for Dims {
    type Err = GsdError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        if parts.len() != 3 {
            return Err(GsdError::InvalidDims(format!(
                "expected CxHxW, got {s:?}"
            )));
        }
        let mut axes = [0usize; 3];
        for (slot, part) in axes.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|_| {
                GsdError::InvalidDims(format!("expected CxHxW, got {s:?}"))
            })?;
        }
        Dims::new(axes[0], axes[1], axes[2])
    }
}

/// Real-valued tensor, row-major within a channel, channel-major overall.
///
/// Constructors reject non-finite data; the numeric routines in this crate
/// only combine finite values with bounded coefficients, so the invariant
/// survives every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Dims,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(dims: Dims) -> Self {
        Grid { dims, data: vec![0.0; dims.len()] }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Grid { dims, data: vec![value; dims.len()] }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(GsdError::DimMismatch(format!(
                "grid {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(GsdError::NonFinite("grid construction".into()));
        }
        Ok(Grid { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.dims.height * self.dims.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.dims.height * self.dims.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.dims.height + y) * self.dims.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.dims.height + y) * self.dims.width + x] = value;
    }

    /// Elementwise `self * a + other * b`.
    pub fn lin_comb(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        if self.dims != other.dims {
            return Err(GsdError::DimMismatch(format!(
                "{} vs {}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Grid { dims: self.dims, data })
    }

    pub fn scaled(&self, a: f64) -> Grid {
        Grid {
            dims: self.dims,
            data: self.data.iter().map(|x| x * a).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn mean_abs_diff(&self, other: &Grid) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .sum();
        sum / self.data.len() as f64
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
