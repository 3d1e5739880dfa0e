use crate::error::{DrError, Result};
use crate::numerics::DesignMatrix;

/// Sample `(Y, Y₂, X, Z)` for a model with one continuous endogenous regressor.
///
/// `X` always carries an intercept in its first column; `Z` holds the
/// excluded instruments only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome: Vec<f64>,
    endogenous: Vec<f64>,
    exogenous: DesignMatrix,
    instruments: DesignMatrix,
}

impl Dataset {
    /// Builds a dataset, prepending the intercept to the exogenous columns.
    pub fn from_columns(
        outcome: Vec<f64>,
        endogenous: Vec<f64>,
        exogenous: &[Vec<f64>],
        instruments: &[Vec<f64>],
    ) -> Result<Self> {
        let n = outcome.len();
        let mut cols = Vec::with_capacity(exogenous.len() + 1);
        cols.push(vec![1.0; n]);
        cols.extend(exogenous.iter().cloned());
        if instruments.is_empty() {
            return Err(DrError::InvalidInput("at least one instrument is required".into()));
        }
        let x = DesignMatrix::from_columns(&cols)?;
        let z = DesignMatrix::from_columns(instruments)?;
        Self::new(outcome, endogenous, x, z)
    }

    /// Builds a dataset from an exogenous design that already contains the
    /// intercept as its first column.
    pub fn new(
        outcome: Vec<f64>,
        endogenous: Vec<f64>,
        exogenous: DesignMatrix,
        instruments: DesignMatrix,
    ) -> Result<Self> {
        let n = outcome.len();
        if endogenous.len() != n || exogenous.nrows() != n || instruments.nrows() != n {
            return Err(DrError::InvalidInput("dataset columns differ in length".into()));
        }
        if (0..n).any(|i| exogenous.get(i, 0) != 1.0) {
            return Err(DrError::InvalidInput("first exogenous column must be the intercept".into()));
        }
        if outcome.iter().chain(&endogenous).any(|v| !v.is_finite()) {
            return Err(DrError::NonFinite("outcome or endogenous regressor"));
        }
        let (k, l) = (exogenous.ncols(), instruments.ncols());
        if n < k + l + 3 {
            return Err(DrError::InvalidInput(format!(
                "need at least k + l + 3 = {} observations, got {n}",
                k + l + 3
            )));
        }
        if endogenous.iter().all(|&v| v == endogenous[0]) {
            return Err(DrError::InvalidInput("endogenous regressor is constant".into()));
        }
        Ok(Self { outcome, endogenous, exogenous, instruments })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of exogenous regressors including the intercept.
    pub fn k(&self) -> usize {
        self.exogenous.ncols()
    }

    /// Number of excluded instruments.
    pub fn l(&self) -> usize {
        self.instruments.ncols()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn endogenous(&self) -> &[f64] {
        &self.endogenous
    }

    pub fn exogenous(&self) -> &DesignMatrix {
        &self.exogenous
    }

    pub fn instruments(&self) -> &DesignMatrix {
        &self.instruments
    }

    /// `1{Y ≤ y}` for every observation.
    pub fn indicator(&self, threshold: f64) -> Vec<bool> {
        self.outcome.iter().map(|&y| y <= threshold).collect()
    }

    /// `[X, Z]`, the first-stage design.
    pub fn first_stage_design(&self) -> DesignMatrix {
        self.exogenous.hcat(&self.instruments).expect("row counts agree by construction")
    }

    /// `[X, Y₂]`, the structural design of the exogenous probit.
    pub fn structural_design(&self) -> DesignMatrix {
        self.exogenous
            .with_columns(&[&self.endogenous])
            .expect("row counts agree by construction")
    }

    /// Rows picked by index (duplicates allowed), as drawn by the bootstrap.
    ///
    /// No re-validation: a degenerate resample surfaces later as an
    /// estimation error.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            endogenous: indices.iter().map(|&i| self.endogenous[i]).collect(),
            exogenous: self.exogenous.select_rows(indices),
            instruments: self.instruments.select_rows(indices),
        }
    }

    /// Copy with instrument column `j` multiplied by `factor`.
    pub fn with_scaled_instrument(&self, j: usize, factor: f64) -> Dataset {
        let mut out = self.clone();
        out.instruments.scale_column(j, factor);
        out
    }
}

/// Covariate values at which a conditional CDF is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// Exogenous covariates without the intercept.
    pub x: Vec<f64>,
    /// Endogenous regressor value.
    pub y2: f64,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>, y2: f64) -> Self {
        Self { x, y2 }
    }

    /// `(1, x)`, aligned with the columns of the exogenous design.
    pub fn design_row(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.x.iter().copied()).collect()
    }

    pub fn check(&self, data: &Dataset) -> Result<()> {
        if self.x.len() + 1 != data.k() {
            return Err(DrError::InvalidInput(format!(
                "evaluation point has {} covariates, dataset has {}",
                self.x.len(),
                data.k() - 1
            )));
        }
        if !self.y2.is_finite() || self.x.iter().any(|v| !v.is_finite()) {
            return Err(DrError::NonFinite("evaluation point"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_columns(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0.5, 1.5, 1.0, 2.0, 3.0, 2.5],
            &[vec![0.1, 0.4, 0.2, 0.9, 0.3, 0.7]],
            &[vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn intercept_prepended() {
        let d = small();
        assert_eq!(d.k(), 2);
        assert_eq!(d.l(), 1);
        assert!(d.exogenous().column(0).iter().all(|&v| v == 1.0));
        assert_eq!(d.structural_design().ncols(), 3);
        assert_eq!(d.first_stage_design().ncols(), 3);
    }

    #[test]
    fn rejects_constant_endogenous_and_tiny_samples() {
        let r = Dataset::from_columns(vec![1.0; 6], vec![2.0; 6], &[vec![0.0; 6]], &[vec![1.0; 6]]);
        assert!(r.is_err());
        let r = Dataset::from_columns(vec![1.0; 4], vec![1.0, 2.0, 3.0, 4.0], &[vec![0.0; 4]], &[vec![1.0; 4]]);
        assert!(r.is_err());
    }

    #[test]
    fn indicator_and_resample() {
        let d = small();
        assert_eq!(d.indicator(3.0), vec![true, true, true, false, false, false]);
        let r = d.resample(&[5, 5, 0]);
        assert_eq!(r.outcome(), &[6.0, 6.0, 1.0]);
        assert_eq!(r.instruments().column(0), vec![0.5, 0.5, 1.0]);
    }
}
