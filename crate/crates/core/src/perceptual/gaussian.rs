//! Gaussian fits of feature distributions and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure, Error, Result};

use super::features::FeatureSet;

/// Eigenvalues below `-NEG_EIG_TOL * spectral_norm` make a matrix indefinite.
pub const NEG_EIG_TOL: f64 = 1e-6;
/// Distances in `[-DISTANCE_TOL * scale, 0)` are rounding and clamp to zero.
pub const DISTANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianFit {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: format!("{d}x{d} covariance"),
                found: format!("{}x{}", covariance.nrows(), covariance.ncols()),
            });
        }
        ensure!(d > 0, InvalidParameter, "zero-dimensional fit");
        ensure!(
            mean.iter().chain(covariance.iter()).all(|v| v.is_finite()),
            InvalidParameter,
            "fit has non-finite entries"
        );
        let covariance = symmetrize(covariance);
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Rows of `f` minus their mean, as an N x d matrix, plus the mean.
pub(crate) fn centered(f: &FeatureSet) -> (DMatrix<f64>, DVector<f64>) {
    let (n, d) = (f.len(), f.dim());
    let x = DMatrix::from_fn(n, d, |i, j| f.row(i)[j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    (xc, mean)
}

pub(crate) fn require_samples(f: &FeatureSet, what: &str) -> Result<()> {
    ensure!(
        f.len() >= 2,
        Degenerate,
        "{what} needs at least 2 feature vectors, got {}",
        f.len()
    );
    Ok(())
}

/// Sample mean and `1/(N-1)` covariance.
pub fn fit_gaussian(f: &FeatureSet) -> Result<GaussianFit> {
    require_samples(f, "a Gaussian fit")?;
    let (xc, mean) = centered(f);
    let cov = xc.transpose() * &xc / (f.len() - 1) as f64;
    GaussianFit::new(mean, cov)
}

/// Eigenvalues of a symmetric matrix with tiny negatives clamped to zero.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new(symmetrize(m.clone()));
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !min.is_finite() && !eig.eigenvalues.is_empty() {
        return Err(Error::Numerical(format!("{what}: eigensolver produced {min}")));
    }
    if min < -NEG_EIG_TOL * norm {
        return Err(Error::Numerical(format!(
            "{what} is indefinite: eigenvalue {min:e} against norm {norm:e}"
        )));
    }
    eig.eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(eig)
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure!(m.is_square(), InvalidParameter, "square root of a non-square matrix");
    let eig = psd_eigen(m, "matrix")?;
    let root = eig.eigenvalues.map(f64::sqrt);
    let v = &eig.eigenvectors;
    Ok(symmetrize(v * DMatrix::from_diagonal(&root) * v.transpose()))
}

fn combine(mean_term: f64, tr_a: f64, tr_b: f64, tr_sqrt: f64) -> Result<f64> {
    let dist = mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
    let scale = (mean_term + tr_a + tr_b).max(1.0);
    if dist >= 0.0 {
        Ok(dist)
    } else if dist >= -DISTANCE_TOL * scale {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("negative Fréchet distance {dist:e}")))
    }
}

fn check_dims(da: usize, db: usize) -> Result<()> {
    if da != db {
        return Err(Error::DimensionMismatch {
            expected: format!("{da} features"),
            found: db.to_string(),
        });
    }
    Ok(())
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`, with the trace term taken as
/// `Tr((A S_b A)^(1/2))` for `A = S_a^(1/2)`.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let root_a = psd_sqrt(&a.covariance)?;
    let inner = &root_a * &b.covariance * &root_a;
    let eig = psd_eigen(&inner, "A S_b A")?;
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|v| v.sqrt()).sum();
    combine(
        (&a.mean - &b.mean).norm_squared(),
        a.covariance.trace(),
        b.covariance.trace(),
        tr_sqrt,
    )
}

/// Fréchet distance between the Gaussian fits of two feature sets.
///
/// When either set has no more vectors than dimensions the covariances have rank below
/// `d`. Writing `S = C C^T` with `C = X_c^T / sqrt(N-1)`, the trace term equals the
/// nuclear norm of `C_a^T C_b`, an `N_a x N_b` matrix, which avoids a `d x d` eigensolve.
pub fn frechet_distance_sets(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    require_samples(x, "a Gaussian fit")?;
    require_samples(y, "a Gaussian fit")?;
    check_dims(x.dim(), y.dim())?;
    if x.len().min(y.len()) > x.dim() {
        return frechet_distance(&fit_gaussian(x)?, &fit_gaussian(y)?);
    }
    frechet_low_rank(x, y)
}

pub(crate) fn frechet_low_rank(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    let (xc, mx) = centered(x);
    let (yc, my) = centered(y);
    let (nx, ny) = ((x.len() - 1) as f64, (y.len() - 1) as f64);
    let cross = &xc * yc.transpose() / (nx * ny).sqrt();
    let nuclear: f64 = cross.singular_values().iter().sum();
    combine(
        (mx - my).norm_squared(),
        xc.norm_squared() / nx,
        yc.norm_squared() / ny,
        nuclear,
    )
}
