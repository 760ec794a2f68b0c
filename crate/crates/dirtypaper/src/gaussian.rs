//! Joint Gaussian machinery: symmetric covariance matrices, log-determinants,
//! mutual information from covariance, and seeded sampling.
//!
//! Everything downstream (closed-form capacities, Monte Carlo verification,
//! the binning simulator) is built on the joint law of the channel variables
//! `(X, S, Y, M1..Mk)` and, when an auxiliary coefficient is in play, the
//! precoding variable `U = X + alpha*M1`. This module owns that law.
//!
//! Internal logarithms are natural; mutual information is converted to bits
//! at the public boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::capacity::ChannelConfig;

/// Relative pivot tolerance for positive-definiteness checks, scaled by the
/// largest diagonal entry of the matrix under factorization.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Samples generated per deterministic RNG stream. Parallel workers fill
/// whole chunks, so the output is identical for any worker count.
const SAMPLE_CHUNK: usize = 8192;

#[derive(Debug, Error)]
pub enum GaussianError {
    /// A pivot fell below the scale-invariant tolerance where positive
    /// definiteness was required. `index` is the elimination step.
    #[error("matrix is singular or not positive definite (pivot {pivot:.3e} at step {index})")]
    SingularMatrix { index: usize, pivot: f64 },
    #[error("matrix is not positive semidefinite (residual diagonal {pivot:.3e} at step {index})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },
    #[error("label `{0}` appears on both sides; label sets must be disjoint")]
    DisjointnessViolation(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label set must not be empty")]
    EmptyLabelSet,
    #[error("covariance is {dim}x{dim} but {names} names were given")]
    DimensionMismatch { dim: usize, names: usize },
    #[error("entries ({i},{j}) and ({j},{i}) differ; matrix must be stored symmetric")]
    Asymmetric { i: usize, j: usize },
    #[error("the auxiliary variable needs exactly one transmitter observation, found {0}")]
    AuxiliaryShape(usize),
}

/// A dense symmetric matrix of variances/covariances (power units).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>, // row-major, kept exactly symmetric
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = d;
        }
        m
    }

    /// Builds from `f(i, j)`, evaluated once per unordered pair and mirrored,
    /// so the result is symmetric by construction.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.entries[i * dim + j] = v;
                m.entries[j * dim + i] = v;
            }
        }
        m
    }

    /// Builds from full rows, rejecting anything not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GaussianError> {
        let dim = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(GaussianError::DimensionMismatch { dim, names: row.len() });
            }
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(GaussianError::Asymmetric { i, j });
                }
            }
        }
        let entries = rows.iter().flatten().copied().collect();
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    /// Principal submatrix over the given coordinates, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_fn(idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    fn max_diag(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(0.0_f64, f64::max)
    }

    /// Natural log of the determinant via pivoted Cholesky.
    ///
    /// Requires positive definiteness: a pivot at or below
    /// `PIVOT_REL_TOL * max(diagonal)` raises [`GaussianError::SingularMatrix`]
    /// with the offending elimination step.
    pub fn ln_det(&self) -> Result<f64, GaussianError> {
        let f = self.pivoted_cholesky(true)?;
        Ok(f.ln_det)
    }

    /// Pivoted Cholesky factorization `P^T A P = L L^T`.
    ///
    /// With `require_pd` the factorization insists on full rank; otherwise it
    /// stops at the numerical rank and verifies the remainder is consistent
    /// with positive semidefiniteness, which is what sampling needs (the
    /// interference appears in several coordinates, so rank-deficient
    /// covariances are routine).
    pub(crate) fn pivoted_cholesky(&self, require_pd: bool) -> Result<CholeskyFactor, GaussianError> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = PIVOT_REL_TOL * self.max_diag();
        let mut ln_det = 0.0;
        let mut rank = n;

        for k in 0..n {
            let (piv, d) = (k..n)
                .map(|i| (i, a[i * n + i]))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty pivot range");
            if d <= tol {
                if require_pd {
                    return Err(GaussianError::SingularMatrix { index: k, pivot: d });
                }
                let (imin, dmin) = (k..n)
                    .map(|i| (i, a[i * n + i]))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("non-empty pivot range");
                if dmin < -tol {
                    return Err(GaussianError::NotPositiveSemidefinite { index: imin, pivot: dmin });
                }
                rank = k;
                break;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                for i in 0..n {
                    a.swap(i * n + k, i * n + piv);
                }
                perm.swap(k, piv);
            }
            ln_det += d.ln();
            let lkk = d.sqrt();
            a[k * n + k] = lkk;
            for i in k + 1..n {
                a[i * n + k] /= lkk;
            }
            // Schur complement, kept symmetric so later swaps stay valid.
            for i in k + 1..n {
                let lik = a[i * n + k];
                for j in k + 1..n {
                    a[i * n + j] -= lik * a[j * n + k];
                }
            }
        }

        let mut factor = vec![0.0; n * rank];
        for r in 0..n {
            for c in 0..rank.min(r + 1) {
                factor[r * rank + c] = a[r * n + c];
            }
        }
        Ok(CholeskyFactor { dim: n, rank, perm, factor, ln_det })
    }
}

/// Lower-triangular factor of a (possibly rank-deficient) covariance,
/// with the symmetric pivoting permutation that produced it.
pub(crate) struct CholeskyFactor {
    dim: usize,
    rank: usize,
    perm: Vec<usize>,
    factor: Vec<f64>, // dim x rank, rows in permuted order
    ln_det: f64,
}

impl CholeskyFactor {
    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    /// Maps standard-normal `z` (length `rank`) to a correlated sample,
    /// written into `out` (length `dim`) in original coordinate order.
    pub(crate) fn apply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rank);
        debug_assert_eq!(out.len(), self.dim);
        for r in 0..self.dim {
            let row = &self.factor[r * self.rank..(r + 1) * self.rank];
            let mut acc = 0.0;
            for c in 0..self.rank.min(r + 1) {
                acc += row[c] * z[c];
            }
            out[self.perm[r]] = acc;
        }
    }
}

/// A named set of jointly Gaussian, zero-mean scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussianSpec {
    names: Vec<String>,
    cov: SymMatrix,
}

impl JointGaussianSpec {
    pub fn new(names: Vec<String>, cov: SymMatrix) -> Result<Self, GaussianError> {
        if cov.dim() != names.len() {
            return Err(GaussianError::DimensionMismatch { dim: cov.dim(), names: names.len() });
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(GaussianError::DuplicateLabel(n.clone()));
            }
        }
        Ok(Self { names, cov })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn variance(&self, label: &str) -> Result<f64, GaussianError> {
        let i = self.resolve_one(label)?;
        Ok(self.cov.get(i, i))
    }

    pub fn covariance(&self, a: &str, b: &str) -> Result<f64, GaussianError> {
        let (i, j) = (self.resolve_one(a)?, self.resolve_one(b)?);
        Ok(self.cov.get(i, j))
    }

    fn resolve_one(&self, label: &str) -> Result<usize, GaussianError> {
        self.index_of(label).ok_or_else(|| GaussianError::UnknownLabel(label.to_string()))
    }

    fn resolve(&self, labels: &[&str]) -> Result<Vec<usize>, GaussianError> {
        if labels.is_empty() {
            return Err(GaussianError::EmptyLabelSet);
        }
        let mut idx = Vec::with_capacity(labels.len());
        for (k, l) in labels.iter().enumerate() {
            if labels[..k].contains(l) {
                return Err(GaussianError::DuplicateLabel(l.to_string()));
            }
            idx.push(self.resolve_one(l)?);
        }
        Ok(idx)
    }

    /// The spec restricted to a subset of its variables, preserving order of
    /// the requested labels.
    pub fn restrict(&self, labels: &[&str]) -> Result<JointGaussianSpec, GaussianError> {
        let idx = self.resolve(labels)?;
        let cov = self.cov.submatrix(&idx);
        JointGaussianSpec::new(labels.iter().map(|s| s.to_string()).collect(), cov)
    }

    /// Mutual information `I(A;B)` in bits, from the determinant identity
    /// `I(A;B) = 1/2 log( det S_A det S_B / det S_{A,B} )`.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64, GaussianError> {
        let ia = self.resolve(a)?;
        let ib = self.resolve(b)?;
        for l in a {
            if b.contains(l) {
                return Err(GaussianError::DisjointnessViolation(l.to_string()));
            }
        }
        let lda = self.cov.submatrix(&ia).ln_det()?;
        let ldb = self.cov.submatrix(&ib).ln_det()?;
        let joint: Vec<usize> = ia.iter().chain(ib.iter()).copied().collect();
        let ldab = self.cov.submatrix(&joint).ln_det()?;
        Ok(0.5 * (lda + ldb - ldab) / std::f64::consts::LN_2)
    }

    /// Conditional mutual information `I(A;B|G)` in bits, computed by the
    /// chain rule `I(A;B,G) - I(A;G)`. An empty `given` reduces to plain
    /// mutual information.
    pub fn conditional_mutual_information(
        &self,
        a: &[&str],
        b: &[&str],
        given: &[&str],
    ) -> Result<f64, GaussianError> {
        if given.is_empty() {
            return self.mutual_information(a, b);
        }
        for l in given {
            if a.contains(l) || b.contains(l) {
                return Err(GaussianError::DisjointnessViolation(l.to_string()));
            }
        }
        let bg: Vec<&str> = b.iter().chain(given.iter()).copied().collect();
        Ok(self.mutual_information(a, &bg)? - self.mutual_information(a, given)?)
    }

    /// Draws `count` samples of the joint vector.
    ///
    /// The covariance is factored with symmetric pivoting so exactly singular
    /// specs sample on their support. Work is split into fixed chunks, each
    /// on its own RNG stream; the output is bit-identical no matter how many
    /// threads participate.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleBatch, GaussianError> {
        let factor = self.cov.pivoted_cholesky(false)?;
        let dim = self.dim();
        let mut data = vec![0.0; count * dim];
        data.par_chunks_mut(SAMPLE_CHUNK * dim.max(1))
            .enumerate()
            .for_each(|(chunk, slab)| {
                let mut rng = stream_rng(seed, chunk as u64);
                let mut z = vec![0.0; factor.rank()];
                for row in slab.chunks_mut(dim) {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    factor.apply(&z, row);
                }
            });
        Ok(SampleBatch { names: self.names.clone(), count, dim, seed, data })
    }
}

/// A matrix of joint samples, `count` rows by `dim` named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub names: Vec<String>,
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
    data: Vec<f64>,
}

impl SampleBatch {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Sample variance (with mean correction) of one column.
    pub fn column_variance(&self, col: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..self.count {
            let v = self.row(i)[col];
            sum += v;
            sumsq += v * v;
        }
        let n = self.count as f64;
        (sumsq - sum * sum / n) / (n - 1.0)
    }
}

/// A deterministic RNG for the given (seed, stream) pair. All randomized
/// paths in the crate derive their streams through this single function, so
/// identical inputs reproduce identical outputs regardless of parallelism.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Labels `M1..Mk` for the observations of a config, transmitter side first,
/// matching the coordinate order used by [`build_joint_spec`].
pub fn observation_labels(cfg: &ChannelConfig) -> Vec<String> {
    (1..=cfg.tx_noise().len() + cfg.rx_noise().len()).map(|i| format!("M{i}")).collect()
}

/// Joint covariance of `(X, S, Y, M1..Mk)` for a channel configuration,
/// extended with `U = X + alpha*M1` when `alpha` is given.
///
/// `X ~ N(0,P)`, `S ~ N(0,Q)`, `Y = X + S + Z0`, and each observation is
/// `Mi = S + Zi` with the transmitter observations listed first. The
/// auxiliary variable requires exactly one transmitter observation (fuse
/// multiple observations down to one first).
pub fn build_joint_spec(
    cfg: &ChannelConfig,
    alpha: Option<f64>,
) -> Result<JointGaussianSpec, GaussianError> {
    let (p, q, n0) = (cfg.p(), cfg.q(), cfg.n0());
    let noises: Vec<f64> = cfg.tx_noise().iter().chain(cfg.rx_noise()).copied().collect();
    if alpha.is_some() && cfg.tx_noise().len() != 1 {
        return Err(GaussianError::AuxiliaryShape(cfg.tx_noise().len()));
    }

    let mut names: Vec<String> = vec!["X".into(), "S".into(), "Y".into()];
    names.extend(observation_labels(cfg));
    let base = 3; // observations start at this coordinate
    let k = noises.len();

    let mut cov = SymMatrix::from_fn(base + k, |i, j| {
        match (i.min(j), i.max(j)) {
            (0, 0) => p,                                  // Var X
            (1, 1) => q,                                  // Var S
            (2, 2) => p + q + n0,                         // Var Y
            (0, 1) => 0.0,                                // X ind. of S
            (0, 2) => p,                                  // Cov(X, Y)
            (1, 2) => q,                                  // Cov(S, Y)
            (0, _) => 0.0,                                // X ind. of observations
            (1, c) => {
                debug_assert!(c >= base);
                q // Cov(S, Mi)
            }
            (2, _) => q,                                  // Cov(Y, Mi)
            (r, c) if r == c => q + noises[r - base],     // Var Mi
            _ => q,                                       // Cov(Mi, Mj), i != j
        }
    });

    if let Some(alpha) = alpha {
        let n1 = noises[0];
        let dim = cov.dim() + 1;
        let u = dim - 1;
        let mut ext = SymMatrix::from_fn(dim, |i, j| {
            if i < u && j < u {
                cov.get(i, j)
            } else {
                0.0
            }
        });
        ext.set(u, u, p + alpha * alpha * (q + n1));
        ext.set(u, 0, p); // Cov(U, X)
        ext.set(u, 1, alpha * q); // Cov(U, S)
        ext.set(u, 2, p + alpha * q); // Cov(U, Y)
        ext.set(u, base, alpha * (q + n1)); // Cov(U, M1)
        for m in base + 1..base + k {
            ext.set(u, m, alpha * q); // Cov(U, Mj), j != 1
        }
        names.push("U".into());
        cov = ext;
    }

    JointGaussianSpec::new(names, cov)
}
