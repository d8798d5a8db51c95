use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{check_positive, ClassTag, KernelClass, KernelError, LowRankKernel, MaternNu};

/// Stationary temporal correlation function `k_T(u)` with `k_T(0) = 1`.
///
/// Spectral densities use `S(w) = ∫ k(u) exp(-2πiuw) du`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TemporalKernel {
    /// `exp(-u² / 2ℓ²)`
    Rbf { lengthscale: f64 },
    Matern { nu: MaternNu, lengthscale: f64 },
    /// `(1 + u² / 2αℓ²)^(-α)`
    RationalQuadratic { lengthscale: f64, alpha: f64 },
    /// `sin(2πτu) / 2πτu`, flat density on `[-τ, τ)`.
    Sinc { bandlimit: f64 },
    /// `(sin(πτu) / πτu)²`, triangular density on `[-τ, τ]`.
    SincSquared { bandlimit: f64 },
    /// `exp(-2 sin²(πu / r) / ℓ²)`
    Periodic { period: f64, lengthscale: f64 },
    /// `c₀ + Σ c_j cos(2π ω_j u)`
    CosineSum(LowRankKernel),
}

/// A point mass of a discrete spectral measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub frequency: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpectralValue {
    Density(f64),
    Lines(Vec<SpectralLine>),
}

impl TemporalKernel {
    pub fn rbf(lengthscale: f64) -> Result<Self, KernelError> {
        let k = Self::Rbf { lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn matern(nu: MaternNu, lengthscale: f64) -> Result<Self, KernelError> {
        let k = Self::Matern { nu, lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn rational_quadratic(lengthscale: f64, alpha: f64) -> Result<Self, KernelError> {
        let k = Self::RationalQuadratic { lengthscale, alpha };
        k.validate()?;
        Ok(k)
    }

    pub fn sinc(bandlimit: f64) -> Result<Self, KernelError> {
        let k = Self::Sinc { bandlimit };
        k.validate()?;
        Ok(k)
    }

    pub fn sinc_squared(bandlimit: f64) -> Result<Self, KernelError> {
        let k = Self::SincSquared { bandlimit };
        k.validate()?;
        Ok(k)
    }

    pub fn periodic(period: f64, lengthscale: f64) -> Result<Self, KernelError> {
        let k = Self::Periodic { period, lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn cosine_sum(kernel: LowRankKernel) -> Result<Self, KernelError> {
        kernel.validate()?;
        Ok(Self::CosineSum(kernel))
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match self {
            Self::Rbf { lengthscale } | Self::Matern { lengthscale, .. } => check_positive("lengthscale", *lengthscale),
            Self::RationalQuadratic { lengthscale, alpha } => {
                check_positive("lengthscale", *lengthscale)?;
                check_positive("alpha", *alpha)?;
                if *alpha <= 0.5 {
                    return Err(KernelError::AlphaTooSmall(*alpha));
                }
                Ok(())
            }
            Self::Sinc { bandlimit } | Self::SincSquared { bandlimit } => check_positive("bandlimit", *bandlimit),
            Self::Periodic { period, lengthscale } => {
                check_positive("period", *period)?;
                check_positive("lengthscale", *lengthscale)
            }
            Self::CosineSum(k) => k.validate(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Rbf { .. } => "rbf",
            Self::Matern { .. } => "matern",
            Self::RationalQuadratic { .. } => "rational_quadratic",
            Self::Sinc { .. } => "sinc",
            Self::SincSquared { .. } => "sinc_squared",
            Self::Periodic { .. } => "periodic",
            Self::CosineSum(_) => "cosine_sum",
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Rbf { lengthscale } => (-0.5 * (u / lengthscale).powi(2)).exp(),
            Self::Matern { nu, lengthscale } => nu.correlation(u.abs() / lengthscale),
            Self::RationalQuadratic { lengthscale, alpha } => {
                (1.0 + u * u / (2.0 * alpha * lengthscale * lengthscale)).powf(-alpha)
            }
            Self::Sinc { bandlimit } => sinc(2.0 * PI * bandlimit * u.abs()),
            Self::SincSquared { bandlimit } => sinc(PI * bandlimit * u.abs()).powi(2),
            Self::Periodic { period, lengthscale } => {
                let s = (PI * u.abs() / period).sin();
                (-2.0 * s * s / (lengthscale * lengthscale)).exp()
            }
            Self::CosineSum(k) => k.eval(u.abs()),
        }
    }

    pub fn classify(&self) -> KernelClass {
        let tag = match self {
            Self::Rbf { .. } | Self::Matern { .. } | Self::RationalQuadratic { .. } => ClassTag::Broadband,
            Self::Sinc { .. } | Self::SincSquared { .. } => ClassTag::BandLimited,
            Self::Periodic { .. } => ClassTag::AlmostPeriodic,
            Self::CosineSum(_) => ClassTag::LowRank,
        };
        let (bounded, discrete) = match tag {
            ClassTag::Broadband => (false, false),
            ClassTag::BandLimited => (true, false),
            ClassTag::AlmostPeriodic => (false, true),
            ClassTag::LowRank => (true, true),
        };
        KernelClass::from_support(bounded, discrete)
    }

    /// Density for continuous classes, full line list for discrete ones.
    pub fn spectral_density(&self, omega: f64) -> SpectralValue {
        match self.density(omega) {
            Some(s) => SpectralValue::Density(s),
            None => SpectralValue::Lines(self.spectral_lines().unwrap_or_default()),
        }
    }

    /// `S_T(ω)`, or `None` for discrete-support kernels.
    pub fn density(&self, omega: f64) -> Option<f64> {
        let w = omega.abs();
        let s = match self {
            Self::Rbf { lengthscale } => {
                lengthscale * (2.0 * PI).sqrt() * (-2.0 * (PI * lengthscale * w).powi(2)).exp()
            }
            Self::Matern { nu, lengthscale } => {
                let v = nu.value();
                let l2 = lengthscale * lengthscale;
                nu.density_constant() * (2.0 * v).powf(v) / l2.powf(v)
                    * (2.0 * v / l2 + 4.0 * PI * PI * w * w).powf(-(v + 0.5))
            }
            Self::RationalQuadratic { lengthscale, alpha } => rq_density(*lengthscale, *alpha, w),
            Self::Sinc { bandlimit } => {
                if (-bandlimit..*bandlimit).contains(&omega) {
                    0.5 / bandlimit
                } else {
                    0.0
                }
            }
            Self::SincSquared { bandlimit } => (1.0 - w / bandlimit).max(0.0) / bandlimit,
            Self::Periodic { .. } | Self::CosineSum(_) => return None,
        };
        Some(s)
    }

    /// Spectral lines `(ω_p, α_p)` for discrete-support kernels, sorted by |ω| then sign.
    pub fn spectral_lines(&self) -> Option<Vec<SpectralLine>> {
        match self {
            Self::Periodic { period, lengthscale } => {
                let weights = periodic_line_weights(1.0 / (lengthscale * lengthscale));
                let mut lines = vec![SpectralLine { frequency: 0.0, weight: weights[0] }];
                for (p, &w) in weights.iter().enumerate().skip(1) {
                    let f = p as f64 / period;
                    lines.push(SpectralLine { frequency: f, weight: w });
                    lines.push(SpectralLine { frequency: -f, weight: w });
                }
                Some(lines)
            }
            Self::CosineSum(k) => Some(k.lines()),
            _ => None,
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Scale mixture of Gaussians: precision `τ ~ Gamma(α, rate αℓ²)`, integrated in `s = ln τ`.
fn rq_density(lengthscale: f64, alpha: f64, w: f64) -> f64 {
    let beta = alpha * lengthscale * lengthscale;
    let c = 2.0 * PI * PI * w * w;
    let a = alpha - 0.5;
    let log_norm = alpha * beta.ln() - ln_gamma(alpha) + 0.5 * (2.0 * PI).ln();
    let exponent = |s: f64| log_norm + a * s - beta * s.exp() - c * (-s).exp();

    let y = (a + (a * a + 4.0 * beta * c).sqrt()) / (2.0 * beta);
    let s_star = y.ln();
    let width = 1.0 / (beta * y + c / y).sqrt();
    let lo = s_star - (12.0 * width).max(45.0 / a);
    let hi = s_star + (12.0 * width).max(8.0);
    let steps = (((hi - lo) / (width / 20.0)).ceil() as usize).clamp(2000, 200_000);
    let h = (hi - lo) / steps as f64;
    let mut sum = 0.5 * (exponent(lo).exp() + exponent(hi).exp());
    for i in 1..steps {
        sum += exponent(lo + i as f64 * h).exp();
    }
    sum * h
}

/// `α_p = (1/π) ∫₀^π exp(z (cos θ − 1)) cos(pθ) dθ` for `p = 0, 1, …` until negligible.
fn periodic_line_weights(z: f64) -> Vec<f64> {
    let p_max = ((10.0 + 4.0 * z + 8.0 * z.sqrt()).ceil() as usize).min(2000);
    let m = 2 * p_max + 128;
    let integrand: Vec<f64> = (0..=m).map(|k| (z * ((PI * k as f64 / m as f64).cos() - 1.0)).exp()).collect();
    let mut weights = Vec::new();
    for p in 0..=p_max {
        let mut sum = 0.0;
        for (k, &g) in integrand.iter().enumerate() {
            let wk = if k == 0 || k == m { 0.5 } else { 1.0 };
            sum += wk * g * (p as f64 * PI * k as f64 / m as f64).cos();
        }
        let alpha = sum / m as f64;
        if p > 0 && alpha.abs() < 1e-17 {
            break;
        }
        weights.push(alpha.max(0.0));
    }
    weights
}
