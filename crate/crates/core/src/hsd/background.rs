use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Background covariance with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
    ridge_raised: bool,
}

impl BackgroundModel {
    /// Wrap an existing covariance; fails unless it is symmetric positive definite.
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        if n == 0 || covariance.ncols() != n {
            return Err(Error::param("covariance must be a non-empty square matrix"));
        }
        let scale = covariance.amax().max(1.0);
        if (&covariance - covariance.transpose()).amax() > 1e-10 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            covariance,
            chol,
            ridge: 0.0,
            ridge_raised: false,
        })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Whether the requested ridge had to be raised to reach positive definiteness.
    pub fn ridge_raised(&self) -> bool {
        self.ridge_raised
    }

    /// `r^T Sigma^-1 r`.
    pub fn mahalanobis(&self, r: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let y = l
            .solve_lower_triangular(r)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }
}

/// Sample covariance of the columns of `instances` (`d x n`, divisor `n - 1`,
/// or the zero matrix when `n = 1`) plus `ridge * I`. When the result is not
/// positive definite the ridge is raised to `1e-6 * trace / d`.
pub fn background_covariance(instances: &DMatrix<f64>, ridge: f64) -> Result<BackgroundModel> {
    let (d, n) = instances.shape();
    if n == 0 || d == 0 {
        return Err(Error::InsufficientData("background covariance needs at least one instance".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::param("ridge must be >= 0"));
    }
    let mean = instances.column_mean();
    let mut centered = instances.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let mut cov = if n > 1 {
        (&centered * centered.transpose()) / (n - 1) as f64
    } else {
        DMatrix::zeros(d, d)
    };
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let with_ridge = |r: f64| {
        let mut c = cov.clone();
        for i in 0..d {
            c[(i, i)] += r;
        }
        c
    };
    let regularized = with_ridge(ridge);
    if let Some(chol) = regularized.clone().cholesky() {
        return Ok(BackgroundModel {
            covariance: regularized,
            chol,
            ridge,
            ridge_raised: false,
        });
    }
    let trace = cov.trace();
    let mut raised = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-6 };
    raised = raised.max(ridge);
    loop {
        let c = with_ridge(raised);
        if let Some(chol) = c.clone().cholesky() {
            return Ok(BackgroundModel {
                covariance: c,
                chol,
                ridge: raised,
                ridge_raised: true,
            });
        }
        raised *= 10.0;
        if !raised.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_instance_is_ridge_identity() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let m = background_covariance(&x, 0.1).unwrap();
        assert_eq!(m.covariance(), &(DMatrix::identity(3, 3) * 0.1));
        assert!(!m.ridge_raised());
    }

    #[test]
    fn zero_ridge_single_instance_is_raised() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let m = background_covariance(&x, 0.0).unwrap();
        assert!(m.ridge_raised());
        assert!(m.ridge() > 0.0);
    }

    #[test]
    fn matches_direct_double_loop() {
        let d = 5;
        // scaled basis vectors plus a couple of generic points, enough for full rank
        let mut cols: Vec<Vec<f64>> = (0..d)
            .map(|k| (0..d).map(|i| if i == k { (k + 1) as f64 } else { 0.0 }).collect())
            .collect();
        cols.push(vec![0.3, -0.1, 0.2, 0.5, -0.4]);
        cols.push(vec![-1.0, 0.7, 0.0, 0.1, 0.9]);
        let n = cols.len();
        let x = DMatrix::from_fn(d, n, |i, j| cols[j][i]);
        let m = background_covariance(&x, 0.0).unwrap();

        let mean: Vec<f64> = (0..d).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() / n as f64).collect();
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for c in &cols {
                    s += (c[i] - mean[i]) * (c[j] - mean[j]);
                }
                s /= (n - 1) as f64;
                assert!((m.covariance()[(i, j)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ridge_adds_to_diagonal() {
        let x = DMatrix::from_fn(3, 10, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64);
        let a = background_covariance(&x, 0.0).unwrap();
        let b = background_covariance(&x, 1e-3).unwrap();
        let diff = b.covariance() - a.covariance();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1e-3 } else { 0.0 };
                assert!((diff[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mahalanobis_identity() {
        let m = BackgroundModel::from_covariance(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(m.mahalanobis(&DVector::from_vec(vec![1.0, 2.0, 2.0])), 9.0);
        assert!(BackgroundModel::from_covariance(DMatrix::from_element(2, 2, 1.0)).is_err());
    }
}
