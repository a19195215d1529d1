//! Bits <-> latent embedding in the DCT domain, and the pixel-boundary
//! quantizer.
//!
//! Bit 1 becomes coefficient `+amplitude`, bit 0 becomes `-amplitude`; the
//! latent is the inverse DCT of that coefficient plane. Extraction reads
//! the coefficient signs back: `bit = ceil((sign(c) + 1) / 2)` with
//! `sign(0) = 0`, so an exactly-zero coefficient decodes as 1.

use crate::dct::{dct2, idct2};
use crate::error::{GsdError, Result};
use crate::grid::{Dims, Grid};
use crate::rng::SeededRng;

/// Ordered secret bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    bits: Vec<bool>,
}

impl BitVector {
    pub fn from_bools(bits: Vec<bool>) -> Self {
        BitVector { bits }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut out = Vec::with_capacity(bits.len());
        for &b in bits {
            match b {
                0 => out.push(false),
                1 => out.push(true),
                other => {
                    return Err(GsdError::InvalidArgument(format!(
                        "bit values must be 0 or 1, got {other}"
                    )))
                }
            }
        }
        Ok(BitVector { bits: out })
    }

    /// Unpacks `n_bits` from raw bytes, MSB first. Excess bytes are
    /// ignored; too few is an error that names the required count.
    pub fn from_bytes_msb(bytes: &[u8], n_bits: usize) -> Result<Self> {
        let required = n_bits.div_ceil(8);
        if bytes.len() < required {
            return Err(GsdError::SecretTooShort { required, got: bytes.len() });
        }
        let bits = (0..n_bits)
            .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1 == 1)
            .collect();
        Ok(BitVector { bits })
    }

    /// Packs back into bytes, MSB first, zero-padding the final byte.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &bit) in self.bits.iter().enumerate() {
            if bit {
                out[i / 8] |= 1 << (7 - i % 8);
            }
        }
        out
    }

    pub fn random(rng: &mut SeededRng, n: usize) -> Self {
        let bits = (0..n).map(|_| rng.next_u64() & 1 == 1).collect();
        BitVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn complement(&self) -> BitVector {
        BitVector { bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Reorders bits by `perm` (position i takes the bit at perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> Result<BitVector> {
        if perm.len() != self.bits.len() {
            return Err(GsdError::InvalidArgument(format!(
                "permutation length {} vs payload length {}",
                perm.len(),
                self.bits.len()
            )));
        }
        Ok(BitVector { bits: perm.iter().map(|&i| self.bits[i]).collect() })
    }
}

/// Bijection between bit positions and coefficient positions, plus the
/// coefficient magnitude.
///
/// The default order is channel-major, then row-major within a channel —
/// the flat `Grid` order. A permutation can be layered on top; it must be
/// a bijection and is checked at construction.
#[derive(Debug, Clone)]
pub struct EmbedLayout {
    pub amplitude: f64,
    perm: Option<Vec<usize>>,
}

impl Default for EmbedLayout {
    fn default() -> Self {
        EmbedLayout { amplitude: 1.0, perm: None }
    }
}

impl EmbedLayout {
    pub fn with_amplitude(amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(GsdError::InvalidArgument(format!(
                "amplitude must be positive and finite, got {amplitude}"
            )));
        }
        Ok(EmbedLayout { amplitude, perm: None })
    }

    pub fn with_permutation(mut self, perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(GsdError::InvalidArgument(
                    "layout permutation must be a bijection".into(),
                ));
            }
            seen[p] = true;
        }
        self.perm = Some(perm);
        Ok(self)
    }

    /// Coefficient flat index carrying bit `i`.
    fn coeff_index(&self, i: usize) -> usize {
        match &self.perm {
            Some(p) => p[i],
            None => i,
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if let Some(p) = &self.perm {
            if p.len() != n {
                return Err(GsdError::DimMismatch(format!(
                    "layout permutation covers {} positions, grid has {n}",
                    p.len()
                )));
            }
        }
        Ok(())
    }
}

/// Builds the stego latent: coefficient `+-amplitude` per bit, then
/// inverse DCT.
pub fn embed(d: &BitVector, dims: Dims, layout: &EmbedLayout) -> Result<Grid> {
    if d.len() != dims.len() {
        return Err(GsdError::DimMismatch(format!(
            "payload of {} bits vs capacity {} ({dims})",
            d.len(),
            dims.len()
        )));
    }
    layout.check_len(dims.len())?;
    let mut coeff = Grid::zeros(dims);
    for (i, bit) in d.iter().enumerate() {
        let sign = if bit { 1.0 } else { -1.0 };
        coeff.data_mut()[layout.coeff_index(i)] = layout.amplitude * sign;
    }
    Ok(idct2(&coeff))
}

/// Reads bits back from the coefficient signs of a latent.
pub fn extract(z: &Grid, layout: &EmbedLayout) -> Result<BitVector> {
    layout.check_len(z.len())?;
    let coeff = dct2(z);
    let bits = (0..z.len())
        .map(|i| {
            let c = coeff.data()[layout.coeff_index(i)];
            // ceil((sign + 1) / 2): strictly negative -> 0, otherwise 1.
            c >= 0.0
        })
        .collect();
    Ok(BitVector { bits })
}

/// Quantized 8-bit image, channel-major like [`Grid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegoImage {
    dims: Dims,
    pixels: Vec<u8>,
}

impl StegoImage {
    pub fn new(dims: Dims, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != dims.len() {
            return Err(GsdError::DimMismatch(format!(
                "image {dims} needs {} pixels, got {}",
                dims.len(),
                pixels.len()
            )));
        }
        Ok(StegoImage { dims, pixels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// `[-1, 1] -> [0, 255]`: `clamp(round((x + 1) * 127.5), 0, 255)` with
/// half-away-from-zero rounding. Out-of-range inputs clamp.
pub fn quantize(x: &Grid) -> StegoImage {
    let pixels = x
        .data()
        .iter()
        .map(|&v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
        .collect();
    StegoImage { dims: x.dims(), pixels }
}

/// `[0, 255] -> [-1, 1]`: `x = q / 127.5 - 1`.
pub fn dequantize(img: &StegoImage) -> Grid {
    let data = img.pixels.iter().map(|&q| q as f64 / 127.5 - 1.0).collect();
    Grid::from_vec(img.dims, data).expect("u8 pixels always dequantize to finite values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_gaussian;
    use proptest::prelude::*;

    #[test]
    fn bytes_round_trip_msb_first() {
        let bits = BitVector::from_bytes_msb(&[0b1010_0001, 0b1100_0000], 10).unwrap();
        let expected = [true, false, true, false, false, false, false, true, true, true];
        assert_eq!(bits.iter().collect::<Vec<_>>(), expected);
        assert_eq!(bits.to_bytes_msb(), vec![0b1010_0001, 0b1100_0000]);

        // Excess bytes ignored; short input names the required count.
        assert!(BitVector::from_bytes_msb(&[0xFF; 4], 10).is_ok());
        match BitVector::from_bytes_msb(&[0xFF; 1], 10) {
            Err(GsdError::SecretTooShort { required, got }) => {
                assert_eq!((required, got), (2, 1));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn all_ones_payload_embeds_as_positive_coefficients() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let d = BitVector::from_bits(&[1, 1, 1, 1]).unwrap();
        let layout = EmbedLayout::default();
        let z = embed(&d, dims, &layout).unwrap();
        let expected = idct2(&Grid::filled(dims, 1.0));
        assert!(z.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn payload_maps_row_major() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let d = BitVector::from_bits(&[1, 0, 1, 1]).unwrap();
        let z = embed(&d, dims, &EmbedLayout::default()).unwrap();
        let coeff = dct2(&z);
        let expected = [1.0, -1.0, 1.0, 1.0];
        for (c, e) in coeff.data().iter().zip(expected) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_sign_rules() {
        let dims = Dims::new(1, 1, 2).unwrap();
        let coeff = Grid::from_vec(dims, vec![-0.3, 0.7]).unwrap();
        let bits = extract(&idct2(&coeff), &EmbedLayout::default()).unwrap();
        assert_eq!(bits.iter().collect::<Vec<_>>(), [false, true]);

        // Exactly-zero coefficient decodes as 1.
        let zero = Grid::zeros(dims);
        let bits = extract(&zero, &EmbedLayout::default()).unwrap();
        assert_eq!(bits.iter().collect::<Vec<_>>(), [true, true]);
    }

    #[test]
    fn embed_extract_identity() {
        let dims = Dims::new(3, 16, 16).unwrap();
        let layout = EmbedLayout::default();
        let mut rng = SeededRng::new(31);
        for _ in 0..50 {
            let d = BitVector::random(&mut rng, dims.len());
            let z = embed(&d, dims, &layout).unwrap();
            assert_eq!(extract(&z, &layout).unwrap(), d);
        }
    }

    #[test]
    fn embedding_amplitude_is_exact_in_coefficient_space() {
        let dims = Dims::new(1, 8, 8).unwrap();
        let layout = EmbedLayout::with_amplitude(0.25).unwrap();
        let d = BitVector::random(&mut SeededRng::new(7), dims.len());
        let z = embed(&d, dims, &layout).unwrap();
        let coeff = dct2(&z);
        let max = coeff.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((max - 0.25).abs() < 1e-12);
    }

    #[test]
    fn wrong_payload_length_rejected() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let d = BitVector::from_bits(&[1, 0, 1]).unwrap();
        assert!(embed(&d, dims, &EmbedLayout::default()).is_err());
    }

    #[test]
    fn permuted_layout_is_a_bijection() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let layout = EmbedLayout::default()
            .with_permutation(vec![2, 0, 3, 1])
            .unwrap();
        let mut rng = SeededRng::new(13);
        for _ in 0..16 {
            let d = BitVector::random(&mut rng, 4);
            let z = embed(&d, dims, &layout).unwrap();
            assert_eq!(extract(&z, &layout).unwrap(), d);
        }
        // Exhaustive position check: bit i lands at coefficient perm[i].
        for i in 0..4 {
            let mut bits = vec![0u8; 4];
            bits[i] = 1;
            let d = BitVector::from_bits(&bits).unwrap();
            let coeff = dct2(&embed(&d, dims, &layout).unwrap());
            for (j, v) in coeff.data().iter().enumerate() {
                let expected = if j == [2, 0, 3, 1][i] { 1.0 } else { -1.0 };
                assert!((v - expected).abs() < 1e-12, "bit {i}, coeff {j}");
            }
        }

        assert!(EmbedLayout::default().with_permutation(vec![0, 0, 1, 2]).is_err());
        assert!(EmbedLayout::default().with_permutation(vec![0, 1, 4, 2]).is_err());
    }

    #[test]
    fn quantize_endpoints_and_midpoint() {
        let dims = Dims::new(1, 1, 5).unwrap();
        let x = Grid::from_vec(dims, vec![-1.0, 1.0, 0.0, -1.7, 2.3]).unwrap();
        let q = quantize(&x);
        assert_eq!(q.pixels(), &[0, 255, 128, 0, 255]);
    }

    #[test]
    fn dequantize_endpoints() {
        let dims = Dims::new(1, 1, 3).unwrap();
        let img = StegoImage::new(dims, vec![0, 255, 128]).unwrap();
        let x = dequantize(&img);
        assert_eq!(x.data()[0], -1.0);
        assert_eq!(x.data()[1], 1.0);
        assert!((x.data()[2] - (128.0 / 127.5 - 1.0)).abs() < 1e-15);
        assert!(x.data()[2] > 0.0039 && x.data()[2] < 0.0040);
    }

    #[test]
    fn quantizer_exhaustive_identity_and_idempotence() {
        let dims = Dims::new(1, 16, 16).unwrap();
        let pixels: Vec<u8> = (0..=255u8).cycle().take(256).collect();
        let img = StegoImage::new(dims, pixels.clone()).unwrap();
        let back = quantize(&dequantize(&img));
        assert_eq!(back.pixels(), &pixels[..]);

        // quantize . dequantize . quantize == quantize
        let mut rng = SeededRng::new(41);
        let x = sample_gaussian(&mut rng, dims).unwrap();
        let q1 = quantize(&x);
        let q2 = quantize(&dequantize(&q1));
        assert_eq!(q1, q2);
    }

    proptest! {
        #[test]
        fn dequantize_quantize_stays_on_grid(v in -1.5f64..1.5) {
            let dims = Dims::new(1, 1, 1).unwrap();
            let x = Grid::from_vec(dims, vec![v]).unwrap();
            let back = dequantize(&quantize(&x));
            let clamped = v.clamp(-1.0, 1.0);
            prop_assert!((back.data()[0] - clamped).abs() <= 1.0 / 255.0 + 1e-12);
        }

        #[test]
        fn codec_round_trip_property(seed in any::<u64>()) {
            let dims = Dims::new(1, 4, 4).unwrap();
            let d = BitVector::random(&mut SeededRng::new(seed), dims.len());
            let layout = EmbedLayout::default();
            let z = embed(&d, dims, &layout).unwrap();
            prop_assert_eq!(extract(&z, &layout).unwrap(), d);
        }
    }
}
