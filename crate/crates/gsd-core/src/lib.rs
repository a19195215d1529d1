//! Generative steganography on a reversible diffusion sampler.
//!
//! Secret bits become the signs of a latent's DCT coefficients; a
//! deterministic denoising pass turns that latent into an ordinary-looking
//! quantized image, and running the same discretized ODE in the opposite
//! direction recovers the latent — and with it the bits. The crate
//! provides the numerics (grids, seeded sampling, orthonormal DCT), the
//! diffusion schedule, a compact trainable noise predictor with analytic
//! oracles for exact testing, the two-way sampler, the bit codec, the
//! end-to-end pipeline with its evaluation harness, and PGM/PPM image I/O.

pub mod codec;
pub mod dct;
pub mod denoiser;
pub mod error;
pub mod grid;
pub mod manifest;
pub mod pipeline;
pub mod pnm;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use codec::{BitVector, EmbedLayout, StegoImage};
pub use error::{GsdError, Result};
pub use grid::{Dims, Grid};
pub use rng::SeededRng;
pub use schedule::{NoiseSchedule, SamplingPlan};
