use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ClassTag, KernelError, SpectralLine, TemporalKernel};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub frequency: f64,
    pub weight: f64,
}

/// Finite cosine expansion `c₀ + Σ c_j cos(2π ω_j u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRankKernel {
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<CosineTerm>,
}

impl LowRankKernel {
    pub fn new(constant: f64, terms: Vec<CosineTerm>) -> Result<Self, KernelError> {
        let k = Self { constant, terms };
        k.validate()?;
        Ok(k)
    }

    /// Convenience constructor from `(frequency, weight)` pairs.
    pub fn from_pairs(constant: f64, pairs: &[(f64, f64)]) -> Result<Self, KernelError> {
        Self::new(constant, pairs.iter().map(|&(frequency, weight)| CosineTerm { frequency, weight }).collect())
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let sum = self.weight_sum();
        let nonneg = self.constant >= 0.0 && self.terms.iter().all(|t| t.weight >= 0.0);
        if !nonneg || !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(KernelError::BadWeights { sum });
        }
        if let Some(t) = self.terms.iter().find(|t| !(t.frequency > 0.0 && t.frequency.is_finite())) {
            return Err(KernelError::BadFrequency(t.frequency));
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.constant + self.terms.iter().map(|t| t.weight).sum::<f64>()
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.constant + self.terms.iter().map(|t| t.weight * (2.0 * PI * t.frequency * u).cos()).sum::<f64>()
    }

    /// `(0, c₀)` followed by `(±ω_j, c_j / 2)`.
    pub fn lines(&self) -> Vec<SpectralLine> {
        let mut lines = vec![SpectralLine { frequency: 0.0, weight: self.constant }];
        for t in &self.terms {
            lines.push(SpectralLine { frequency: t.frequency, weight: t.weight / 2.0 });
            lines.push(SpectralLine { frequency: -t.frequency, weight: t.weight / 2.0 });
        }
        lines
    }
}

/// Result of [`low_rank_approx`]: the truncated expansion and its sup-norm residual
/// on the sampled lags `jΔ`, `j = 0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRankApprox {
    pub kernel: LowRankKernel,
    pub residual: f64,
}

/// DCT-I cosine expansion of `k_T(jΔ)`, `j = 0..n`, truncated smallest-first while
/// the grid residual stays within `tolerance`.
///
/// Coefficients can be negative when `Δ` is not commensurate with the period, so the
/// returned kernel is not re-validated.
pub fn low_rank_approx(
    kernel: &TemporalKernel,
    delta: f64,
    n: usize,
    tolerance: f64,
) -> Result<LowRankApprox, KernelError> {
    if let TemporalKernel::CosineSum(k) = kernel {
        return Ok(LowRankApprox { kernel: k.clone(), residual: 0.0 });
    }
    let tag = kernel.classify().tag;
    if tag != ClassTag::AlmostPeriodic {
        return Err(KernelError::WrongClass { expected: ClassTag::AlmostPeriodic, got: tag });
    }
    if n < 2 {
        return Err(KernelError::InvalidRequest("n must be at least 2"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(KernelError::InvalidRequest("time step must be positive"));
    }
    if !(tolerance > 0.0) {
        return Err(KernelError::InvalidRequest("tolerance must be positive"));
    }

    let big_n = n - 1;
    let nf = big_n as f64;
    let x: Vec<f64> = (0..n).map(|j| kernel.eval(j as f64 * delta)).collect();
    let basis = |i: usize, j: usize| (PI * ((i * j) % (2 * big_n)) as f64 / nf).cos();

    let coeffs: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let inner: f64 = (1..big_n).map(|j| x[j] * basis(i, j)).sum();
            let big_x = x[0] + sign * x[big_n] + 2.0 * inner;
            if i == 0 || i == big_n {
                big_x / (2.0 * nf)
            } else {
                big_x / nf
            }
        })
        .collect();

    let mut recon: Vec<f64> = (0..n).map(|j| (0..n).map(|i| coeffs[i] * basis(i, j)).sum()).collect();
    let sup = |r: &[f64]| x.iter().zip(r).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let mut residual = sup(&recon);
    if residual > tolerance {
        return Err(KernelError::ToleranceUnreachable { residual, tolerance });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coeffs[a].abs().total_cmp(&coeffs[b].abs()).then(a.cmp(&b)));
    let mut kept = vec![true; n];
    for &i in &order {
        let candidate: Vec<f64> = recon.iter().enumerate().map(|(j, r)| r - coeffs[i] * basis(i, j)).collect();
        let r = sup(&candidate);
        if r > tolerance {
            break;
        }
        kept[i] = false;
        recon = candidate;
        residual = r;
    }

    let constant = if kept[0] { coeffs[0] } else { 0.0 };
    let terms = (1..n)
        .filter(|&i| kept[i])
        .map(|i| CosineTerm { frequency: i as f64 / (2.0 * nf * delta), weight: coeffs[i] })
        .collect();
    Ok(LowRankApprox { kernel: LowRankKernel { constant, terms }, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_one() {
        assert!(LowRankKernel::from_pairs(0.5, &[(1.0, 0.4)]).is_err());
        assert!(LowRankKernel::from_pairs(0.5, &[(0.0, 0.5)]).is_err());
        assert!(LowRankKernel::from_pairs(0.5, &[(1.0, 0.5)]).is_ok());
    }

    #[test]
    fn rejects_continuous_kernels() {
        let k = TemporalKernel::rbf(1.0).unwrap();
        assert!(matches!(low_rank_approx(&k, 0.1, 10, 1e-8), Err(KernelError::WrongClass { .. })));
    }
}
