use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;

/// Base of the sinusoid frequency ladder.
pub const SINUSOID_BASE: f64 = 10_000.0;

/// Fills `out` with interleaved `sin, cos` pairs of `pos · ω_i`,
/// `ω_i = BASE^(-2i/dim)`.
pub(crate) fn sinusoid_into<T: Scalar>(pos: f64, out: &mut [T]) {
    let dim = out.len();
    for (j, slot) in out.iter_mut().enumerate() {
        let pair = (j / 2) as f64;
        let freq = SINUSOID_BASE.powf(-2.0 * pair / dim as f64);
        let angle = pos * freq;
        *slot = T::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() });
    }
}

/// `(F, dim)` table encoding the feature index.
pub fn feature_pos_enc<T: Scalar>(features: usize, dim: usize) -> Result<Tensor<T>> {
    if dim % 2 != 0 {
        return Err(Error::Config(format!("positional encoding dim {dim} must be even")));
    }
    let mut t = Tensor::zeros(vec![features, dim]);
    for (f, row) in t.data_mut().chunks_mut(dim).enumerate() {
        sinusoid_into(f as f64, row);
    }
    Ok(t)
}

/// `(M, F, dim)` table: the first half of the channels encode the sample
/// index, the second half the feature index.
pub fn context_pos_enc_2d<T: Scalar>(samples: usize, features: usize, dim: usize) -> Result<Tensor<T>> {
    if dim % 2 != 0 {
        return Err(Error::Config(format!("positional encoding dim {dim} must be even")));
    }
    let half = dim / 2;
    let mut t = Tensor::zeros(vec![samples, features, dim]);
    for (i, cell) in t.data_mut().chunks_mut(dim).enumerate() {
        let (m, f) = (i / features.max(1), i % features.max(1));
        let (a, b) = cell.split_at_mut(half);
        sinusoid_into(m as f64, a);
        sinusoid_into(f as f64, b);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates() {
        let t: Tensor<f64> = feature_pos_enc(3, 8).unwrap();
        assert_eq!(&t.data()[..8], &[0., 1., 0., 1., 0., 1., 0., 1.]);
        assert_eq!(t, feature_pos_enc(3, 8).unwrap());
        assert!(feature_pos_enc::<f64>(3, 7).is_err());
    }

    #[test]
    fn sin_columns_differ_between_positions() {
        let t: Tensor<f64> = feature_pos_enc(2, 8).unwrap();
        for j in (0..8).step_by(2) {
            assert_ne!(t.get(&[0, j]), t.get(&[1, j]), "column {j}");
        }
        assert!((t.get(&[1, 0]) - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn two_d_layout() {
        let t: Tensor<f64> = context_pos_enc_2d(3, 2, 8).unwrap();
        assert_eq!(t.shape(), &[3, 2, 8]);
        let zero: Tensor<f64> = feature_pos_enc(1, 4).unwrap();
        let cell: Vec<f64> = (0..8).map(|c| t.get(&[0, 0, c])).collect();
        assert_eq!(&cell[..4], zero.data());
        assert_eq!(&cell[4..], zero.data());
        // fixed feature: only the sample half varies across samples
        for m in 1..3 {
            for c in 4..8 {
                assert_eq!(t.get(&[m, 1, c]), t.get(&[0, 1, c]));
            }
            assert!((0..4).any(|c| t.get(&[m, 1, c]) != t.get(&[0, 1, c])));
        }
        assert_eq!(t, context_pos_enc_2d(3, 2, 8).unwrap());
    }
}
