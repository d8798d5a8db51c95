//! Kernel matrices, exact spectra and the spectrum approximations built on them.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{ClassTag, LowRankKernel, SpatialKernel, TemporalKernel};
use crate::linalg::{symmetric_eigen, LinalgError, Matrix};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const POSITIVE_REL_TOL: f64 = 1e-8;
/// Negative eigenvalues beyond this fraction of the largest one are logged when clipped.
pub const NEGATIVE_WARN_REL: f64 = 1e-6;
const SYMMETRY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(LinalgError),
    #[error("operation needs a continuous-support kernel, got {0:?}")]
    WrongClass(ClassTag),
    #[error("invalid time grid: n = {n}, step = {delta}")]
    InvalidGrid { n: usize, delta: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self, SpectralError> {
        if !m.is_square() {
            return Err(SpectralError::NotSquare);
        }
        if !m.is_finite() {
            return Err(SpectralError::NonFinite);
        }
        let asym = m.max_asymmetry();
        if asym > SYMMETRY_REL_TOL * m.max_abs().max(1.0) {
            return Err(SpectralError::NotSymmetric(asym));
        }
        Ok(Self(m))
    }

    fn from_upper(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        let n = self.order();
        assert_eq!(n, other.order(), "order mismatch");
        Self::from_upper(n, |i, j| self.get(i, j) * other.get(i, j))
    }

    pub fn leading(&self, k: usize) -> Self {
        Self(self.0.leading(k))
    }
}

/// Uniform time grid `t_i = iΔ`, `i = 1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n: usize,
    pub delta: f64,
}

impl TimeGrid {
    pub fn new(n: usize, delta: f64) -> Result<Self, SpectralError> {
        if n == 0 || !(delta > 0.0 && delta.is_finite()) {
            return Err(SpectralError::InvalidGrid { n, delta });
        }
        Ok(Self { n, delta })
    }

    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.delta
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Matrix,
    /// Matrix eigenvalues divided by the number of points.
    Operator,
}

/// Descending eigenvalues with optional orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Option<Matrix>,
    pub scale: Scale,
}

impl Spectrum {
    /// Sorts `values` descending; no eigenvectors.
    pub fn from_values(mut values: Vec<f64>, scale: Scale) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { values, vectors: None, scale }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Divides by `n` and marks the result operator-scaled; eigenvectors are kept.
    pub fn to_operator(&self, n: usize) -> Self {
        let nf = n as f64;
        let values = match self.scale {
            Scale::Matrix => self.values.iter().map(|v| v / nf).collect(),
            Scale::Operator => self.values.clone(),
        };
        Self { values, vectors: self.vectors.clone(), scale: Scale::Operator }
    }

    /// Number of eigenvalues above `POSITIVE_REL_TOL · λ_max`.
    pub fn positive_count(&self) -> usize {
        let cut = POSITIVE_REL_TOL * self.max();
        self.values.iter().filter(|&&v| v > cut).count()
    }

    /// Replaces negative eigenvalues by zero.
    pub fn clipped(&self) -> Self {
        Self { values: clip_negative(&self.values), vectors: self.vectors.clone(), scale: self.scale }
    }

    /// Writes `index,eigenvalue,provenance_i,provenance_j` rows (provenance empty when absent).
    pub fn write_csv<W: Write>(&self, out: W, pairs: Option<&[(usize, usize)]>) -> Result<(), SpectralError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue", "provenance_i", "provenance_j"])?;
        for (i, v) in self.values.iter().enumerate() {
            let (pi, pj) = match pairs.and_then(|p| p.get(i)) {
                Some(&(a, b)) => (a.to_string(), b.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([i.to_string(), format_float(*v), pi, pj])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Shortest round-trip representation.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Clips negative values to zero, logging a warning when one is sizeable.
pub fn clip_negative(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let worst = values.iter().fold(0.0_f64, |m, v| m.min(*v));
    if worst < -NEGATIVE_WARN_REL * max {
        log::warn!("clipping negative eigenvalue {worst:e} (largest {max:e})");
    }
    values.iter().map(|v| v.max(0.0)).collect()
}

/// Spatio-temporal input `(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }
}

/// Toeplitz matrix `k_T(Δ|i − j|)`.
pub fn build_temporal_matrix(kernel: &TemporalKernel, grid: TimeGrid) -> SymMatrix {
    let row: Vec<f64> = (0..grid.n).map(|j| kernel.eval(j as f64 * grid.delta)).collect();
    SymMatrix::from_upper(grid.n, |i, j| row[j - i])
}

pub fn build_spatial_matrix(kernel: &SpatialKernel, xs: &[Vec<f64>]) -> Result<SymMatrix, SpectralError> {
    check_dims(kernel.dim(), xs.iter().map(Vec::len))?;
    Ok(SymMatrix::from_upper(xs.len(), |i, j| if i == j { 1.0 } else { kernel.eval(&xs[i], &xs[j]) }))
}

pub fn build_spatiotemporal_matrix(
    spatial: &SpatialKernel,
    temporal: &TemporalKernel,
    points: &[SpaceTimePoint],
) -> Result<SymMatrix, SpectralError> {
    check_dims(spatial.dim(), points.iter().map(|p| p.x.len()))?;
    Ok(SymMatrix::from_upper(points.len(), |i, j| {
        let (a, b) = (&points[i], &points[j]);
        spatial.eval(&a.x, &b.x) * temporal.eval(a.t - b.t)
    }))
}

fn check_dims(expected: usize, dims: impl Iterator<Item = usize>) -> Result<(), SpectralError> {
    for (index, got) in dims.enumerate() {
        if got != expected {
            return Err(SpectralError::DimensionMismatch { index, expected, got });
        }
    }
    Ok(())
}

pub fn eig_sym(m: &SymMatrix, want_vectors: bool) -> Result<Spectrum, SpectralError> {
    let e = symmetric_eigen(m.matrix(), want_vectors).map_err(SpectralError::ConvergenceFailure)?;
    Ok(Spectrum { values: e.values, vectors: e.vectors, scale: Scale::Matrix })
}

/// First row of the circulant completion: `c₀ = k(0)`, `c_j = k(jΔ) + k((n − j)Δ)`.
pub fn circulant_embedding(kernel: &TemporalKernel, grid: TimeGrid) -> Vec<f64> {
    let n = grid.n;
    (0..n)
        .map(|j| {
            if j == 0 {
                kernel.eval(0.0)
            } else {
                kernel.eval(j as f64 * grid.delta) + kernel.eval((n - j) as f64 * grid.delta)
            }
        })
        .collect()
}

/// Eigenvalues `Σ_l c_l cos(2πjl / n)` of a symmetric circulant matrix, sorted descending.
pub fn circulant_eigenvalues(row: &[f64]) -> Vec<f64> {
    let n = row.len();
    let mut values: Vec<f64> = (0..n)
        .map(|j| {
            row.iter()
                .enumerate()
                .map(|(l, c)| c * (2.0 * std::f64::consts::PI * ((j * l) % n) as f64 / n as f64).cos())
                .sum()
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Samples of `S_T(ω)/Δ` on the centred DFT frequencies.
#[derive(Clone, Debug)]
pub struct TemporalApprox {
    /// `(i − n/2) / (nΔ)` for `i = 1..=n`.
    pub frequencies: Vec<f64>,
    /// Unsorted samples aligned with `frequencies`.
    pub samples: Vec<f64>,
    /// The samples sorted descending.
    pub spectrum: Spectrum,
}

pub fn approx_temporal_spectrum(kernel: &TemporalKernel, grid: TimeGrid) -> Result<TemporalApprox, SpectralError> {
    let class = kernel.classify();
    if class.is_discrete() {
        return Err(SpectralError::WrongClass(class.tag));
    }
    let (n, delta) = (grid.n as f64, grid.delta);
    let frequencies: Vec<f64> = (1..=grid.n).map(|i| (i as f64 - n / 2.0) / (n * delta)).collect();
    let samples: Vec<f64> = frequencies.iter().map(|&w| kernel.density(w).unwrap_or(0.0) / delta).collect();
    let spectrum = Spectrum::from_values(samples.clone(), Scale::Matrix);
    Ok(TemporalApprox { frequencies, samples, spectrum })
}

/// `[n c₀, (n/2) c_j, (n/2) c_j, …]` padded with zeros to length `n`, sorted descending.
pub fn approx_lowrank_spectrum(kernel: &LowRankKernel, n: usize) -> Spectrum {
    let nf = n as f64;
    let mut values = vec![nf * kernel.constant];
    for t in &kernel.terms {
        values.push(nf / 2.0 * t.weight);
        values.push(nf / 2.0 * t.weight);
    }
    values.resize(n.max(values.len()), 0.0);
    values.truncate(n);
    Spectrum::from_values(values, Scale::Matrix)
}

/// Largest pairwise products with the (zero-based) index pairs that produced them.
#[derive(Clone, Debug)]
pub struct ProductSpectrum {
    pub spectrum: Spectrum,
    pub pairs: Vec<(usize, usize)>,
}

impl ProductSpectrum {
    /// Number of distinct spatial indices used.
    pub fn distinct_spatial(&self) -> usize {
        self.pairs.iter().map(|p| p.0).collect::<HashSet<_>>().len()
    }
}

struct Cell {
    value: f64,
    i: usize,
    j: usize,
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    // larger value first, then smaller (i, j)
    fn cmp(&self, o: &Self) -> Ordering {
        self.value.total_cmp(&o.value).then_with(|| (o.i, o.j).cmp(&(self.i, self.j)))
    }
}

/// The `n` largest values of `λ_i(K_S) λ_j(K_T) / n`, found lazily with a max-heap.
///
/// Inputs are clipped at zero and must be sorted descending.
pub fn approx_product_spectrum(spatial: &Spectrum, temporal: &Spectrum, n: usize) -> ProductSpectrum {
    let s = clip_negative(&spatial.values);
    let t = clip_negative(&temporal.values);
    let nf = n as f64;
    let total = s.len().saturating_mul(t.len()).min(n);
    let mut values = Vec::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    if total == 0 {
        return ProductSpectrum { spectrum: Spectrum::from_values(values, Scale::Matrix), pairs };
    }
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Cell { value: s[0] * t[0] / nf, i: 0, j: 0 });
    seen.insert((0, 0));
    while values.len() < total {
        let Some(Cell { value, i, j }) = heap.pop() else { break };
        values.push(value);
        pairs.push((i, j));
        for (a, b) in [(i + 1, j), (i, j + 1)] {
            if a < s.len() && b < t.len() && seen.insert((a, b)) {
                heap.push(Cell { value: s[a] * t[b] / nf, i: a, j: b });
            }
        }
    }
    ProductSpectrum { spectrum: Spectrum { values, vectors: None, scale: Scale::Matrix }, pairs }
}

/// Number of eigenvalues in the closed interval `[a, b]`.
pub fn count_in_interval(s: &Spectrum, a: f64, b: f64) -> usize {
    s.values.iter().filter(|&&v| a <= v && v <= b).count()
}
