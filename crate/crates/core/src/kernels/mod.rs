//! Stationary correlation functions on time and on the unit cube.

mod lowrank;
mod spatial;
mod temporal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lowrank::{low_rank_approx, CosineTerm, LowRankApprox, LowRankKernel};
pub use spatial::SpatialKernel;
pub use temporal::{SpectralLine, SpectralValue, TemporalKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("rational quadratic alpha must exceed 0.5, got {0}")]
    AlphaTooSmall(f64),
    #[error("cosine-sum weights must be nonnegative and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },
    #[error("cosine-sum frequencies must be positive, got {0}")]
    BadFrequency(f64),
    #[error("unsupported Matern smoothness {0}; expected 0.5, 1.5 or 2.5")]
    BadNu(f64),
    #[error("spatial kernel needs at least one lengthscale")]
    NoDimensions,
    #[error("operation requires a {expected:?} kernel, got {got:?}")]
    WrongClass { expected: ClassTag, got: ClassTag },
    #[error("invalid low-rank request: {0}")]
    InvalidRequest(&'static str),
    #[error("full DCT reconstruction residual {residual:e} exceeds tolerance {tolerance:e}")]
    ToleranceUnreachable { residual: f64, tolerance: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Broadband,
    BandLimited,
    AlmostPeriodic,
    LowRank,
}

/// Class of a temporal kernel, determined by the support of its spectral density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelClass {
    pub tag: ClassTag,
    pub support_bounded: bool,
    pub support_discrete: bool,
}

impl KernelClass {
    pub fn from_support(support_bounded: bool, support_discrete: bool) -> Self {
        let tag = match (support_bounded, support_discrete) {
            (false, false) => ClassTag::Broadband,
            (true, false) => ClassTag::BandLimited,
            (false, true) => ClassTag::AlmostPeriodic,
            (true, true) => ClassTag::LowRank,
        };
        Self { tag, support_bounded, support_discrete }
    }

    pub fn is_discrete(&self) -> bool {
        self.support_discrete
    }
}

/// Matérn smoothness, restricted to the half-integer closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl TryFrom<f64> for MaternNu {
    type Error = KernelError;
    fn try_from(nu: f64) -> Result<Self, KernelError> {
        match nu {
            x if x == 0.5 => Ok(Self::Half),
            x if x == 1.5 => Ok(Self::ThreeHalves),
            x if x == 2.5 => Ok(Self::FiveHalves),
            other => Err(KernelError::BadNu(other)),
        }
    }
}

impl From<MaternNu> for f64 {
    fn from(nu: MaternNu) -> f64 {
        nu.value()
    }
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }

    /// Correlation at scaled distance `r = |u| / lengthscale`.
    pub(crate) fn correlation(self, r: f64) -> f64 {
        match self {
            Self::Half => (-r).exp(),
            Self::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Self::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// `2 sqrt(pi) Gamma(nu + 1/2) / Gamma(nu)`.
    pub(crate) fn density_constant(self) -> f64 {
        match self {
            Self::Half => 2.0,
            Self::ThreeHalves => 4.0,
            Self::FiveHalves => 16.0 / 3.0,
        }
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<(), KernelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonPositive { name, value })
    }
}

/// Separable spatio-temporal correlation `k_S(x, x') k_T(t - t')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductKernel {
    pub spatial: SpatialKernel,
    pub temporal: TemporalKernel,
}

impl ProductKernel {
    pub fn new(spatial: SpatialKernel, temporal: TemporalKernel) -> Self {
        Self { spatial, temporal }
    }

    pub fn dim(&self) -> usize {
        self.spatial.dim()
    }

    pub fn eval(&self, x: &[f64], t: f64, x2: &[f64], t2: f64) -> f64 {
        self.spatial.eval(x, x2) * self.temporal.eval(t - t2)
    }
}
