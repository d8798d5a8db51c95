use serde::{Deserialize, Serialize};

use super::{check_positive, KernelError, MaternNu};

/// Stationary correlation on `[0, 1]^d` with one lengthscale per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpatialKernel {
    Rbf { lengthscales: Vec<f64> },
    Matern { nu: MaternNu, lengthscales: Vec<f64> },
}

impl SpatialKernel {
    pub fn rbf(lengthscales: Vec<f64>) -> Result<Self, KernelError> {
        let k = Self::Rbf { lengthscales };
        k.validate()?;
        Ok(k)
    }

    /// Isotropic RBF on `[0, 1]^dim`.
    pub fn rbf_iso(lengthscale: f64, dim: usize) -> Result<Self, KernelError> {
        Self::rbf(vec![lengthscale; dim])
    }

    pub fn matern(nu: MaternNu, lengthscales: Vec<f64>) -> Result<Self, KernelError> {
        let k = Self::Matern { nu, lengthscales };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let ls = self.lengthscales();
        if ls.is_empty() {
            return Err(KernelError::NoDimensions);
        }
        ls.iter().try_for_each(|&l| check_positive("lengthscale", l))
    }

    pub fn lengthscales(&self) -> &[f64] {
        match self {
            Self::Rbf { lengthscales } | Self::Matern { lengthscales, .. } => lengthscales,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales().len()
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Rbf { .. } => "rbf",
            Self::Matern { .. } => "matern",
        }
    }

    /// Correlation between two points of dimension [`Self::dim`].
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(self.lengthscales())
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        match self {
            Self::Rbf { .. } => (-0.5 * r2).exp(),
            Self::Matern { nu, .. } => nu.correlation(r2.sqrt()),
        }
    }
}
