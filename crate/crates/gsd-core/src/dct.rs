//! Orthonormal 2D DCT over whole channels.
//!
//! Type-II forward, type-III inverse, applied separably (rows then
//! columns) with a precomputed transform matrix per axis length. The
//! orthonormal scaling makes the pair an exact inverse and preserves the
//! sum of squares per channel (Parseval), which is what the sign-coded
//! embedding downstream relies on.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::grid::Grid;

/// Row-major n x n orthonormal DCT-II matrix:
/// `M[k][j] = s_k * cos(pi * (j + 0.5) * k / n)` with `s_0 = sqrt(1/n)`,
/// `s_k = sqrt(2/n)` otherwise. Rows are orthonormal, so the inverse is
/// the transpose.
fn dct_matrix(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("dct matrix cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut m = vec![0.0; n * n];
            let s0 = (1.0 / n as f64).sqrt();
            let sk = (2.0 / n as f64).sqrt();
            for k in 0..n {
                let scale = if k == 0 { s0 } else { sk };
                for j in 0..n {
                    m[k * n + j] =
                        scale * (PI * (j as f64 + 0.5) * k as f64 / n as f64).cos();
                }
            }
            Arc::new(m)
        })
        .clone()
}

/// Per-channel forward transform `Y = M_h * X * M_w^T`.
pub fn dct2(x: &Grid) -> Grid {
    transform(x, false)
}

/// Per-channel inverse transform `X = M_h^T * Y * M_w`.
pub fn idct2(c: &Grid) -> Grid {
    transform(c, true)
}

fn transform(x: &Grid, inverse: bool) -> Grid {
    let dims = x.dims();
    let (h, w) = (dims.height, dims.width);
    let mh = dct_matrix(h);
    let mw = dct_matrix(w);

    let mut out = Grid::zeros(dims);
    let mut tmp = vec![0.0; h * w];
    for c in 0..dims.channels {
        let src = x.channel(c);
        // Row pass along the width axis.
        for i in 0..h {
            for k in 0..w {
                let mut acc = 0.0;
                for j in 0..w {
                    let m = if inverse { mw[j * w + k] } else { mw[k * w + j] };
                    acc += src[i * w + j] * m;
                }
                tmp[i * w + k] = acc;
            }
        }
        // Column pass along the height axis.
        let dst = out.channel_mut(c);
        for k2 in 0..h {
            for k in 0..w {
                let mut acc = 0.0;
                for i in 0..h {
                    let m = if inverse { mh[i * h + k2] } else { mh[k2 * h + i] };
                    acc += tmp[i * w + k] * m;
                }
                dst[k2 * w + k] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use crate::rng::{sample_gaussian, SeededRng};
    use proptest::prelude::*;

    #[test]
    fn constant_channel_concentrates_in_dc() {
        let dims = Dims::new(1, 4, 6).unwrap();
        let c = 2.5;
        let coeffs = dct2(&Grid::filled(dims, c));
        let expected_dc = c * ((4 * 6) as f64).sqrt();
        assert!((coeffs.get(0, 0, 0) - expected_dc).abs() < 1e-12);
        for (i, v) in coeffs.data().iter().enumerate() {
            if i != 0 {
                assert!(v.abs() < 1e-12, "coeff {i} = {v}");
            }
        }
    }

    #[test]
    fn two_point_row_hand_values() {
        // Orthonormal DCT-II of [1, 1] is [sqrt(2), 0]; the inverse maps back.
        let dims = Dims::new(1, 1, 2).unwrap();
        let x = Grid::from_vec(dims, vec![1.0, 1.0]).unwrap();
        let c = dct2(&x);
        assert!((c.data()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(c.data()[1].abs() < 1e-15);

        let back = idct2(&c);
        assert!((back.data()[0] - 1.0).abs() < 1e-15);
        assert!((back.data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_invert_to_zero() {
        let dims = Dims::new(2, 3, 3).unwrap();
        let z = idct2(&Grid::zeros(dims));
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn round_trip_and_parseval_on_random_grids() {
        let mut rng = SeededRng::new(11);
        for &(c, h, w) in &[(1, 2, 2), (3, 16, 16), (1, 5, 7), (3, 64, 64)] {
            let dims = Dims::new(c, h, w).unwrap();
            let x = sample_gaussian(&mut rng, dims).unwrap();
            let y = dct2(&x);
            assert!(idct2(&y).max_abs_diff(&x) < 1e-9);
            assert!(dct2(&idct2(&y)).max_abs_diff(&y) < 1e-9);
            for ch in 0..c {
                let sx: f64 = x.channel(ch).iter().map(|v| v * v).sum();
                let sy: f64 = y.channel(ch).iter().map(|v| v * v).sum();
                assert!((sx - sy).abs() / sx < 1e-9, "parseval {sx} vs {sy}");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_property(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
            let dims = Dims::new(1, h, w).unwrap();
            let x = sample_gaussian(&mut SeededRng::new(seed), dims).unwrap();
            let back = idct2(&dct2(&x));
            prop_assert!(back.max_abs_diff(&x) < 1e-9);
        }
    }
}
