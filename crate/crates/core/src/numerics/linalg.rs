use nalgebra::{DMatrix, DVector};

use crate::error::{DrError, Result};

/// Relative threshold on the diagonal of `R` below which a design is
/// declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Dense row-major regressor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(DrError::InvalidInput("design matrix must be non-empty".into()));
        }
        if data.len() != rows * cols {
            return Err(DrError::InvalidInput(format!(
                "design matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DrError::NonFinite("design matrix entry"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(DrError::InvalidInput("columns differ in length".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(rows, cols, data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &DesignMatrix) -> Result<DesignMatrix> {
        if self.rows != other.rows {
            return Err(DrError::InvalidInput("row counts differ in hcat".into()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(DesignMatrix { rows: self.rows, cols, data })
    }

    /// Appends extra columns given column-wise.
    pub fn with_columns(&self, extra: &[&[f64]]) -> Result<DesignMatrix> {
        if extra.iter().any(|c| c.len() != self.rows) {
            return Err(DrError::InvalidInput("appended column has wrong length".into()));
        }
        if extra.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(DrError::NonFinite("appended column"));
        }
        let cols = self.cols + extra.len();
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend(extra.iter().map(|c| c[i]));
        }
        Ok(DesignMatrix { rows: self.rows, cols, data })
    }

    /// Rows picked by index, duplicates allowed.
    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix { rows: indices.len(), cols: self.cols, data }
    }

    /// Multiplies column `j` by `factor`.
    pub fn scale_column(&mut self, j: usize, factor: f64) {
        for i in 0..self.rows {
            self.data[i * self.cols + j] *= factor;
        }
    }

    pub fn mul_vec(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), coef)).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// `(X'X)^{-1}`, from the triangular factor.
    pub unscaled_cov: DMatrix<f64>,
}

impl OlsFit {
    pub fn fitted(&self, response: &[f64]) -> Vec<f64> {
        response.iter().zip(&self.residuals).map(|(y, r)| y - r).collect()
    }

    /// Homoskedastic covariance `s² (X'X)^{-1}` with `s² = rss / (n - p)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let dof = self.residuals.len() as f64 - self.coefficients.len() as f64;
        &self.unscaled_cov * (self.rss / dof)
    }
}

/// Ordinary least squares through a Householder QR factorization.
pub fn ols(design: &DesignMatrix, response: &[f64]) -> Result<OlsFit> {
    let (n, p) = (design.nrows(), design.ncols());
    if response.len() != n {
        return Err(DrError::InvalidInput("response length differs from design rows".into()));
    }
    if n < p {
        return Err(DrError::RankDeficient);
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(DrError::NonFinite("response"));
    }
    let qr = design.to_dmatrix().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * max_diag) {
        return Err(DrError::RankDeficient);
    }
    let q = qr.q();
    let qty = q.transpose() * DVector::from_column_slice(response);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(DrError::RankDeficient)?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let residuals: Vec<f64> = (0..n)
        .map(|i| response[i] - dot(design.row(i), &coefficients))
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(DrError::RankDeficient)?;
    let unscaled_cov = &r_inv * r_inv.transpose();
    Ok(OlsFit { coefficients, residuals, rss, unscaled_cov })
}

/// Inverts a symmetric positive definite matrix, `None` if it is not SPD.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line() {
        let x = DesignMatrix::new(3, 2, vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let fit = ols(&x, &[0.0, 1.0, 2.0]).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn mean_fit() {
        let x = DesignMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let fit = ols(&x, &[1.0, 3.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.residuals[0] + 1.0).abs() < 1e-12);
        assert!((fit.residuals[1] - 1.0).abs() < 1e-12);
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix {
        let data = (0..n * p)
            .map(|k| if k % p == 0 { 1.0 } else { rng.random_range(-2.0..2.0) })
            .collect();
        DesignMatrix::new(n, p, data).unwrap()
    }

    #[test]
    fn recovers_noiseless_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_design(&mut rng, 50, 3);
        let beta = [0.3, -1.7, 2.25];
        let y = x.mul_vec(&beta);
        let fit = ols(&x, &y).unwrap();
        for (b, t) in fit.coefficients.iter().zip(beta) {
            assert!((b - t).abs() < 1e-10);
        }
    }

    #[test]
    fn residuals_orthogonal_and_projection_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_design(&mut rng, 80, 4);
        let y: Vec<f64> = (0..80).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fit = ols(&x, &y).unwrap();
        let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..4 {
            let c = x.column(j);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot(&c, &fit.residuals).abs() / (norm * scale) < 1e-8);
        }
        let fitted = fit.fitted(&y);
        for i in 0..80 {
            assert!(((fitted[i] + fit.residuals[i]) - y[i]).abs() <= 1e-10 * y[i].abs().max(1.0));
        }
        let refit = ols(&x, &fitted).unwrap();
        let rn: f64 = refit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
        assert!(rn < 1e-10);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let x = DesignMatrix::from_columns(&[
            vec![1.0; 5],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![2.0, 4.0, 6.0, 8.0, 10.0],
        ])
        .unwrap();
        assert_eq!(ols(&x, &[1.0, 2.0, 3.0, 4.0, 6.0]), Err(DrError::RankDeficient));
    }

    #[test]
    fn unscaled_covariance_is_inverse_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_design(&mut rng, 30, 3);
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit = ols(&x, &y).unwrap();
        let m = x.to_dmatrix();
        let prod = (m.transpose() * &m) * &fit.unscaled_cov;
        assert!((prod - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
    }
}
