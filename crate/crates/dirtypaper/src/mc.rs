//! Monte Carlo verification layer.
//!
//! Every mutual information the closed forms rely on can be re-estimated from
//! sampled data: draw a batch from the exact joint law, form the sample
//! covariance, and evaluate the Gaussian determinant formula on it. All laws
//! here are exactly Gaussian, so this plug-in estimator is consistent and far
//! cheaper than generic nearest-neighbor estimators; it would not survive a
//! non-Gaussian extension.
//!
//! Standard errors come from a delete-block jackknife with a fixed block
//! count, which keeps the interface free of tuning knobs.

use thiserror::Error;

use crate::capacity::{CapacityError, ChannelConfig};
use crate::gaussian::{build_joint_spec, observation_labels, GaussianError, JointGaussianSpec, SymMatrix};

/// Number of delete-one jackknife blocks.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Default sample count for command-line estimation runs.
pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Default agreement tolerance between an estimate and its analytic target.
pub const DEFAULT_TOLERANCE_BITS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum McError {
    #[error("need at least {need} samples for a {dim}-dimensional spec, got {got}")]
    TooFewSamples { need: usize, got: usize, dim: usize },
    #[error("sample covariance is singular: {0}")]
    SingularSampleCovariance(GaussianError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    /// Estimated value in bits.
    pub value: f64,
    pub samples: usize,
    /// Jackknife standard error in bits.
    pub std_error: f64,
    pub seed: u64,
    /// What was estimated, e.g. `I(U;Y,M2) - I(U;M1)`.
    pub target_label: String,
}

impl McEstimate {
    /// Whether the estimate is statistically compatible with zero at `k`
    /// standard errors.
    pub fn compatible_with_zero(&self, k: f64) -> bool {
        self.value.abs() <= k * self.std_error
    }
}

/// Running second-moment statistics for one jackknife block.
struct BlockStats {
    count: usize,
    sum: Vec<f64>,
    cross: Vec<f64>, // dim x dim, row-major
}

fn block_stats(data: &[f64], dim: usize, count: usize) -> Vec<BlockStats> {
    let mut blocks = Vec::with_capacity(JACKKNIFE_BLOCKS);
    for j in 0..JACKKNIFE_BLOCKS {
        let start = j * count / JACKKNIFE_BLOCKS;
        let end = (j + 1) * count / JACKKNIFE_BLOCKS;
        let mut sum = vec![0.0; dim];
        let mut cross = vec![0.0; dim * dim];
        for row in data[start * dim..end * dim].chunks_exact(dim) {
            for a in 0..dim {
                sum[a] += row[a];
                for b in a..dim {
                    cross[a * dim + b] += row[a] * row[b];
                }
            }
        }
        blocks.push(BlockStats { count: end - start, sum, cross });
    }
    blocks
}

/// Mean-corrected sample covariance from pooled second moments.
fn covariance_of(pool: &BlockStats, dim: usize) -> SymMatrix {
    let n = pool.count as f64;
    SymMatrix::from_fn(dim, |a, b| {
        let (a, b) = (a.min(b), a.max(b));
        (pool.cross[a * dim + b] - pool.sum[a] * pool.sum[b] / n) / (n - 1.0)
    })
}

fn pool_excluding(blocks: &[BlockStats], skip: Option<usize>, dim: usize) -> BlockStats {
    let mut pool =
        BlockStats { count: 0, sum: vec![0.0; dim], cross: vec![0.0; dim * dim] };
    for (j, b) in blocks.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        pool.count += b.count;
        for i in 0..dim {
            pool.sum[i] += b.sum[i];
        }
        for i in 0..dim * dim {
            pool.cross[i] += b.cross[i];
        }
    }
    pool
}

/// Gaussian mutual information evaluated on an arbitrary covariance, the
/// plug-in core shared by every estimator. Feeding the exact covariance
/// reproduces the analytic value.
pub fn mi_of_covariance(cov: &SymMatrix, a: &[usize], b: &[usize]) -> Result<f64, GaussianError> {
    let lda = cov.submatrix(a).ln_det()?;
    let ldb = cov.submatrix(b).ln_det()?;
    let joint: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    let ldab = cov.submatrix(&joint).ln_det()?;
    Ok(0.5 * (lda + ldb - ldab) / std::f64::consts::LN_2)
}

/// Draws a batch from `spec`, then reports the plug-in value of `target`
/// (a function of the sample covariance) with a jackknife standard error.
fn estimate_functional(
    spec: &JointGaussianSpec,
    samples: usize,
    seed: u64,
    target_label: String,
    target: impl Fn(&SymMatrix) -> Result<f64, GaussianError>,
) -> Result<McEstimate, McError> {
    let dim = spec.dim();
    if samples < dim + 1 {
        return Err(McError::TooFewSamples { need: dim + 1, got: samples, dim });
    }
    let batch = spec.sample(samples, seed)?;
    let blocks = block_stats(batch.data(), dim, samples);

    let full = pool_excluding(&blocks, None, dim);
    let value = target(&covariance_of(&full, dim)).map_err(McError::SingularSampleCovariance)?;

    let mut leave_out = Vec::with_capacity(JACKKNIFE_BLOCKS);
    for j in 0..JACKKNIFE_BLOCKS {
        let pool = pool_excluding(&blocks, Some(j), dim);
        if pool.count < dim + 1 {
            return Err(McError::TooFewSamples { need: dim + 1, got: pool.count, dim });
        }
        leave_out
            .push(target(&covariance_of(&pool, dim)).map_err(McError::SingularSampleCovariance)?);
    }
    let b = JACKKNIFE_BLOCKS as f64;
    let mean = leave_out.iter().sum::<f64>() / b;
    let var = leave_out.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() * (b - 1.0) / b;
    Ok(McEstimate { value, samples, std_error: var.sqrt(), seed, target_label })
}

/// Plug-in Monte Carlo estimate of `I(a;b)` under `spec`.
pub fn estimate_mi(
    spec: &JointGaussianSpec,
    a: &[&str],
    b: &[&str],
    samples: usize,
    seed: u64,
) -> Result<McEstimate, McError> {
    let union: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
    let sub = spec.restrict(&union)?;
    // Validates disjointness and label sanity against the restricted spec.
    sub.mutual_information(a, b)?;
    let a_idx: Vec<usize> = (0..a.len()).collect();
    let b_idx: Vec<usize> = (a.len()..union.len()).collect();
    let label = format!("I({};{})", a.join(","), b.join(","));
    estimate_functional(&sub, samples, seed, label, |cov| mi_of_covariance(cov, &a_idx, &b_idx))
}

/// Monte Carlo estimate of the binning rate `I(U;Y,M2) - I(U;M1)` at the
/// given coefficient, both terms taken from one shared sample batch.
pub fn estimate_rate_gap(
    cfg: &ChannelConfig,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, McError> {
    cfg.require_single_pair()?;
    let spec = build_joint_spec(cfg, Some(alpha))?;
    let sub = spec.restrict(&["U", "Y", "M1", "M2"])?;
    estimate_functional(
        &sub,
        samples,
        seed,
        "I(U;Y,M2) - I(U;M1)".to_string(),
        |cov| Ok(mi_of_covariance(cov, &[0], &[1, 3])? - mi_of_covariance(cov, &[0], &[2])?),
    )
}

/// Estimates `I(X; M1..Mk)`, which the converse argument needs to be zero.
/// The check passes when the estimate is within four standard errors of zero
/// (see [`McEstimate::compatible_with_zero`]).
pub fn verify_tightness(
    cfg: &ChannelConfig,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, McError> {
    let obs = observation_labels(cfg);
    if obs.is_empty() {
        return Ok(McEstimate {
            value: 0.0,
            samples,
            std_error: 0.0,
            seed,
            target_label: "I(X; no observations)".to_string(),
        });
    }
    let spec = build_joint_spec(cfg, None)?;
    let obs_refs: Vec<&str> = obs.iter().map(|s| s.as_str()).collect();
    estimate_mi(&spec, &["X"], &obs_refs, samples, seed)
}
