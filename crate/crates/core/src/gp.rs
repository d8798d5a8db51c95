//! GP posteriors under a separable prior, prior path sampling and the Mercer
//! (eigenfunction) approximation of the posterior.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::ProductKernel;
use crate::linalg::{dot, Cholesky, LinalgError, Matrix};
use crate::spectral::{
    build_spatial_matrix, build_temporal_matrix, clip_negative, eig_sym, format_float, Scale, SpaceTimePoint,
    SpectralError, Spectrum, TimeGrid, POSITIVE_REL_TOL,
};

/// Diagonal regularization used in place of zero observation noise.
pub const NOISELESS_JITTER: f64 = 1e-8;
/// Diagonal added to the prior covariance when sampling paths.
pub const PRIOR_JITTER: f64 = 1e-8;
/// Default limit on `|spatial grid| × |time grid|` for prior sampling.
pub const DEFAULT_SAMPLE_CAP: usize = 1_000_000;
const STEP_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("regularized Gram matrix is singular: {0}")]
    SingularSystem(LinalgError),
    #[error("prior sample of {space} x {time} points exceeds the cap of {cap}")]
    CapExceeded { space: usize, time: usize, cap: usize },
    #[error("spectrum has no eigenvectors")]
    MissingEigenvectors,
    #[error("spectrum has {got} eigenpairs but the dataset has {expected} records")]
    SpectrumMismatch { expected: usize, got: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid noise variance {0}")]
    InvalidNoise(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: f64,
}

/// Observations on a uniform time grid with homoscedastic noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Observation>,
    noise: f64,
}

impl Dataset {
    pub fn new(noise: f64) -> Result<Self, GpError> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(GpError::InvalidNoise(noise));
        }
        Ok(Self { records: Vec::new(), noise })
    }

    pub fn from_records(noise: f64, records: Vec<Observation>) -> Result<Self, GpError> {
        let mut d = Self::new(noise)?;
        for r in records {
            d.push(r)?;
        }
        Ok(d)
    }

    /// Appends a record; rejects points outside the unit cube and irregular time steps.
    pub fn push(&mut self, obs: Observation) -> Result<(), GpError> {
        if !obs.t.is_finite() || !obs.y.is_finite() {
            return Err(GpError::InvalidRecord("non-finite time or value".into()));
        }
        if obs.x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GpError::InvalidRecord(format!("point {:?} outside the unit cube", obs.x)));
        }
        if let Some(first) = self.records.first() {
            if obs.x.len() != first.x.len() {
                return Err(GpError::InvalidRecord(format!(
                    "dimension {} differs from {}",
                    obs.x.len(),
                    first.x.len()
                )));
            }
            let last = self.records.last().map_or(first.t, |r| r.t);
            if obs.t <= last {
                return Err(GpError::InvalidRecord(format!("time {} does not increase past {last}", obs.t)));
            }
            if self.records.len() >= 2 {
                let step = self.records[1].t - first.t;
                if ((obs.t - last) - step).abs() > STEP_REL_TOL * step.abs().max(1.0) {
                    return Err(GpError::InvalidRecord(format!("time step {} differs from {step}", obs.t - last)));
                }
            }
        }
        self.records.push(obs);
        Ok(())
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn points(&self) -> Vec<SpaceTimePoint> {
        self.records.iter().map(|r| SpaceTimePoint::new(r.x.clone(), r.t)).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Columns `x_1..x_d, t, y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GpError> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.records.first().map_or(0, |r| r.x.len());
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.extend(["t".to_string(), "y".to_string()]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.x.iter().map(|v| format_float(*v)).collect();
            row.push(format_float(r.t));
            row.push(format_float(r.y));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, noise: f64) -> Result<Self, GpError> {
        let mut rd = csv::Reader::from_reader(input);
        let width = rd.headers()?.len();
        if width < 2 {
            return Err(GpError::InvalidRecord("expected columns x_1..x_d, t, y".into()));
        }
        let mut data = Self::new(noise)?;
        for row in rd.records() {
            let row = row?;
            let vals: Vec<f64> = row
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| GpError::InvalidRecord(format!("{s:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            let (x, rest) = vals.split_at(width - 2);
            data.push(Observation { x: x.to_vec(), t: rest[0], y: rest[1] })?;
        }
        Ok(data)
    }
}

/// Exact posterior, with the factor of `K + σ²I` kept for incremental updates.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    kernel: ProductKernel,
    data: Dataset,
    chol: Cholesky,
    alpha: Vec<f64>,
}

impl GpPosterior {
    pub fn new(kernel: ProductKernel, data: Dataset) -> Result<Self, GpError> {
        let mut post = Self { kernel, data: Dataset::new(data.noise)?, chol: Cholesky::default(), alpha: vec![] };
        for r in data.records {
            post.push(r)?;
        }
        Ok(post)
    }

    /// Returns a new posterior that also conditions on `obs`.
    pub fn conditioned(&self, obs: Observation) -> Result<Self, GpError> {
        let mut next = self.clone();
        next.push(obs)?;
        Ok(next)
    }

    fn push(&mut self, obs: Observation) -> Result<(), GpError> {
        let cross: Vec<f64> = self.data.records.iter().map(|r| self.kernel.eval(&r.x, r.t, &obs.x, obs.t)).collect();
        let diag = self.kernel.eval(&obs.x, obs.t, &obs.x, obs.t) + self.effective_noise();
        self.data.push(obs)?;
        self.chol.append(&cross, diag).map_err(GpError::SingularSystem)?;
        self.alpha = self.chol.solve(&self.data.targets());
        Ok(())
    }

    pub fn effective_noise(&self) -> f64 {
        self.data.noise.max(NOISELESS_JITTER)
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn cross(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.data.records.iter().map(|r| self.kernel.eval(x, t, &r.x, r.t)).collect()
    }

    /// Posterior mean and variance of the latent function at `(x, t)`.
    pub fn predict(&self, x: &[f64], t: f64) -> (f64, f64) {
        let k = self.cross(x, t);
        let mean = dot(&k, &self.alpha);
        let v = self.chol.solve_lower(&k);
        let var = self.kernel.eval(x, t, x, t) - dot(&v, &v);
        (mean, var.max(0.0))
    }

    /// Posterior means and joint covariance at the queries.
    pub fn predict_joint(&self, queries: &[SpaceTimePoint]) -> (Vec<f64>, Matrix) {
        let ks: Vec<Vec<f64>> = queries.iter().map(|q| self.cross(&q.x, q.t)).collect();
        let means = ks.iter().map(|k| dot(k, &self.alpha)).collect();
        let vs: Vec<Vec<f64>> = ks.iter().map(|k| self.chol.solve_lower(k)).collect();
        let m = queries.len();
        let mut cov = Matrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let (p, q) = (&queries[a], &queries[b]);
                let c = self.kernel.eval(&p.x, p.t, &q.x, q.t) - dot(&vs[a], &vs[b]);
                cov[(a, b)] = c;
                cov[(b, a)] = c;
            }
        }
        (means, cov)
    }
}

/// Posterior means and covariance at `queries` given `data`.
pub fn posterior(
    kernel: &ProductKernel,
    data: &Dataset,
    queries: &[SpaceTimePoint],
) -> Result<(Vec<f64>, Matrix), GpError> {
    Ok(GpPosterior::new(kernel.clone(), data.clone())?.predict_joint(queries))
}

/// One draw of the prior on `xs × grid`, returned as a (space × time) matrix.
pub fn sample_prior_path(
    kernel: &ProductKernel,
    xs: &[Vec<f64>],
    grid: TimeGrid,
    seed: u64,
    cap: usize,
) -> Result<Matrix, GpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prior_path_with(kernel, xs, grid, &mut rng, cap)
}

/// [`sample_prior_path`] drawing from a caller-supplied generator.
///
/// Uses `K_S ⊗ K_T = (Q_S ⊗ Q_T)(Λ_S ⊗ Λ_T)(Q_S ⊗ Q_T)ᵀ`, so the draw is exact for
/// `N(0, K + PRIOR_JITTER · I)`.
pub fn sample_prior_path_with<R: Rng>(
    kernel: &ProductKernel,
    xs: &[Vec<f64>],
    grid: TimeGrid,
    rng: &mut R,
    cap: usize,
) -> Result<Matrix, GpError> {
    let (m, n) = (xs.len(), grid.n);
    if m.saturating_mul(n) > cap {
        return Err(GpError::CapExceeded { space: m, time: n, cap });
    }
    let es = eig_sym(&build_spatial_matrix(&kernel.spatial, xs)?, true)?;
    let et = eig_sym(&build_temporal_matrix(&kernel.temporal, grid), true)?;
    let (ls, lt) = (clip_negative(&es.values), clip_negative(&et.values));
    let mut w = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            w[(i, j)] = (ls[i] * lt[j] + PRIOR_JITTER).sqrt() * z;
        }
    }
    let qs = es.vectors.ok_or(GpError::MissingEigenvectors)?;
    let qt = et.vectors.ok_or(GpError::MissingEigenvectors)?;
    Ok(qs.matmul(&w).matmul(&qt.transpose()))
}

/// Writes a (space × time) path with header `x` followed by one column per time;
/// each row starts with its spatial coordinates joined by `;`.
pub fn write_path_csv<W: Write>(path: &Matrix, xs: &[Vec<f64>], grid: TimeGrid, out: W) -> Result<(), GpError> {
    if path.rows() != xs.len() || path.cols() != grid.n {
        return Err(GpError::InvalidRecord(format!(
            "path is {}x{} but the grid is {}x{}",
            path.rows(),
            path.cols(),
            xs.len(),
            grid.n
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    header.extend(grid.times().into_iter().map(format_float));
    w.write_record(&header)?;
    for (i, x) in xs.iter().enumerate() {
        let mut row = vec![x.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";")];
        row.extend(path.row(i).iter().map(|v| format_float(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Operator eigenpairs estimated from a kernel-matrix eigendecomposition, with
/// Nyström extension to arbitrary inputs.
///
/// Only eigenpairs above `POSITIVE_REL_TOL · λ_max` are retained.
#[derive(Clone, Debug)]
pub struct Eigenbasis<'a> {
    kernel: &'a ProductKernel,
    points: &'a [SpaceTimePoint],
    lambda: Vec<f64>,
    vectors: Matrix,
}

impl<'a> Eigenbasis<'a> {
    pub fn new(kernel: &'a ProductKernel, points: &'a [SpaceTimePoint], spectrum: &Spectrum) -> Result<Self, GpError> {
        let q = spectrum.vectors.as_ref().ok_or(GpError::MissingEigenvectors)?;
        let n = points.len();
        if q.rows() != n || spectrum.len() != n {
            return Err(GpError::SpectrumMismatch { expected: n, got: spectrum.len() });
        }
        let scale = if spectrum.scale == Scale::Operator { n as f64 } else { 1.0 };
        let big: Vec<f64> = spectrum.values.iter().map(|v| v * scale).collect();
        let cut = POSITIVE_REL_TOL * big.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..big.len()).filter(|&i| big[i] > cut).collect();
        let lambda = keep.iter().map(|&i| big[i]).collect();
        let vectors = Matrix::from_fn(n, keep.len(), |r, c| q[(r, keep[c])]);
        Ok(Self { kernel, points, lambda, vectors })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// Operator eigenvalues `Λ_i / n`.
    pub fn operator_values(&self) -> Vec<f64> {
        let nf = self.n() as f64;
        self.lambda.iter().map(|l| l / nf).collect()
    }

    /// `φ̄_i(x_j, t_j) = √n Φ_ji`.
    pub fn phi_at(&self, j: usize) -> Vec<f64> {
        let s = (self.n() as f64).sqrt();
        self.vectors.row(j).iter().map(|v| s * v).collect()
    }

    /// Nyström extension `φ̄_i(z) = (√n / Λ_i) Σ_j Φ_ji k(z, z_j)`.
    pub fn phi(&self, x: &[f64], t: f64) -> Vec<f64> {
        let s = (self.n() as f64).sqrt();
        let k: Vec<f64> = self.points.iter().map(|p| self.kernel.eval(x, t, &p.x, p.t)).collect();
        let proj = self.project(&k);
        proj.iter().zip(&self.lambda).map(|(p, l)| s * p / l).collect()
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rank()];
        for (j, vj) in v.iter().enumerate() {
            for (o, q) in out.iter_mut().zip(self.vectors.row(j)) {
                *o += q * vj;
            }
        }
        out
    }

    /// `Σ_j φ̄_i(z_j) f_j` for each retained `i`.
    pub fn weights(&self, f: &[f64]) -> Vec<f64> {
        let s = (self.n() as f64).sqrt();
        self.project(f).into_iter().map(|p| s * p).collect()
    }

    /// `(1/n) Σ_i φ̄_i(z) w_i` with `w` from [`Self::weights`].
    pub fn mean(&self, phi: &[f64], weights: &[f64]) -> f64 {
        dot(phi, weights) / self.n() as f64
    }

    /// `1 − Σ_i λ̄_i φ̄_i(z)²`, unclipped.
    pub fn variance(&self, phi: &[f64]) -> f64 {
        let nf = self.n() as f64;
        1.0 - phi.iter().zip(&self.lambda).map(|(p, l)| l / nf * p * p).sum::<f64>()
    }

    /// `Σ_i λ̄_i φ̄_i(a) φ̄_i(b)`.
    pub fn explained_covariance(&self, phi_a: &[f64], phi_b: &[f64]) -> f64 {
        let nf = self.n() as f64;
        phi_a.iter().zip(phi_b).zip(&self.lambda).map(|((a, b), l)| l / nf * a * b).sum()
    }
}

/// Eigenfunction approximation of the posterior mean and variance at `(x, t)`.
///
/// `spectrum` must be the eigendecomposition (with vectors) of the kernel matrix of
/// `data`'s inputs. The variance is clipped to `[0, 1]`.
pub fn mercer_posterior(
    kernel: &ProductKernel,
    spectrum: &Spectrum,
    data: &Dataset,
    x: &[f64],
    t: f64,
) -> Result<(f64, f64), GpError> {
    if spectrum.vectors.is_none() {
        return Err(GpError::MissingEigenvectors);
    }
    if data.is_empty() {
        return Ok((0.0, 1.0));
    }
    let points = data.points();
    let basis = Eigenbasis::new(kernel, &points, spectrum)?;
    let phi = basis.phi(x, t);
    let mean = basis.mean(&phi, &basis.weights(&data.targets()));
    Ok((mean, basis.variance(&phi).clamp(0.0, 1.0)))
}
