use ndarray::Array2;

use crate::error::{Error, Result};

/// Pairwise dependency probabilities; entry `(i, j)` is the probability that
/// `i` rests on `j`. The diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyProbabilities {
    rho: Array2<f64>,
}

impl DependencyProbabilities {
    pub fn new(mut rho: Array2<f64>) -> Result<Self> {
        let (r, c) = rho.dim();
        if r != c {
            return Err(Error::InvalidArgument(format!("probability matrix must be square, got {r}×{c}")));
        }
        if let Some(v) = rho.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!("probability {v} outside [0, 1]")));
        }
        for i in 0..r {
            rho[(i, i)] = 0.0;
        }
        Ok(DependencyProbabilities { rho })
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[(i, j)]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.rho
    }
}
