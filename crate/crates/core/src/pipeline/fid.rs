use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;

/// Eigenvalues below this are treated as a failed square root rather than
/// round-off.
const NEGATIVE_EIGEN_TOLERANCE: f64 = -1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentFid {
    pub value: f64,
    pub dim: usize,
    pub n_gen: usize,
    pub n_real: usize,
}

/// `(M, F, d)` latents → `(M, d)` by averaging over the feature axis.
pub fn pool_features<T: Scalar>(z: &Tensor<T>) -> Result<DMatrix<f64>> {
    if z.ndim() != 3 {
        return Err(Error::shape("pool_features", z.shape(), &[0, 0, 0]));
    }
    let (m, f, d) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let data = z.data();
    Ok(DMatrix::from_fn(m, d, |i, k| {
        (0..f).map(|j| data[(i * f + j) * d + k].as_f64()).sum::<f64>() / f as f64
    }))
}

/// Sample mean and unbiased covariance of the rows of `x`.
pub fn moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

/// Symmetric PSD square root through the eigendecomposition.
pub fn sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < NEGATIVE_EIGEN_TOLERANCE) {
        return Err(Error::Numerical(format!("matrix square root of a non-PSD matrix (eigenvalue {bad:e})")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Fréchet distance between Gaussians `N(μ₁, Σ₁)` and `N(μ₂, Σ₂)`.
pub fn frechet_distance(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let diff = mu1 - mu2;
    // tr((Σ₁Σ₂)^{1/2}) = tr((Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}); the inner product is symmetric.
    let r1 = sqrt_psd(s1)?;
    let inner = &r1 * s2 * &r1;
    let cross = sqrt_psd(&inner)?.trace();
    Ok((diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * cross).max(0.0))
}

/// Fréchet distance between feature-pooled generated and real latents.
pub fn latent_fid<T: Scalar>(gen: &Tensor<T>, real: &Tensor<T>) -> Result<LatentFid> {
    if gen.ndim() != 3 || real.ndim() != 3 || gen.shape()[1..] != real.shape()[1..] {
        return Err(Error::shape("latent_fid", gen.shape(), real.shape()));
    }
    let (n_gen, n_real) = (gen.shape()[0], real.shape()[0]);
    if n_gen < 2 || n_real < 2 {
        return Err(Error::Data(format!("latent FID needs at least 2 samples per side, got {n_gen} and {n_real}")));
    }
    let (m1, s1) = moments(&pool_features(gen)?);
    let (m2, s2) = moments(&pool_features(real)?);
    let a = frechet_distance(&m1, &s1, &m2, &s2)?;
    let b = frechet_distance(&m2, &s2, &m1, &s1)?;
    Ok(LatentFid {
        // The two orderings agree up to round-off; averaging makes the value exactly symmetric.
        value: 0.5 * (a + b),
        dim: gen.shape()[2],
        n_gen,
        n_real,
    })
}
