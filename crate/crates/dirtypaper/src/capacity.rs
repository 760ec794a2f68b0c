//! Closed-form rates and capacities, the optimal precoding coefficient, and
//! maximum-likelihood fusion of multiple interference observations, together
//! with an independent determinant-path oracle and a numeric optimizer.
//!
//! Conventions: rates are reported in bits per channel use; logs are taken in
//! base 2 only at the reporting boundary. Absent side information is an empty
//! observation list, never an infinite variance, so every formula is written
//! in the `sum of Q/N_l` form where a missing observation contributes zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{build_joint_spec, observation_labels, GaussianError};
use crate::optim;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("transmit power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("interference power must be nonnegative, got {0}")]
    NegativeInterference(f64),
    #[error("channel noise variance must be positive, got {0}")]
    NonPositiveChannelNoise(f64),
    #[error("observation noise variance must be nonnegative, got {0}")]
    NegativeObservationNoise(f64),
    #[error("expected exactly one observation per side, got {tx} at the transmitter and {rx} at the receiver")]
    ObservationShape { tx: usize, rx: usize },
    #[error("no observations to fuse")]
    EmptyList,
    #[error("rate denominator is not positive ({0:.6e})")]
    DegenerateDenominator(f64),
    #[error("optimum not bracketed by the scaled search interval")]
    BracketFailure,
    #[error("search tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Channel powers and the observation-noise variances at each side.
///
/// A side with no observation has an empty list; infinite-variance sentinels
/// are never used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannelConfig")]
pub struct ChannelConfig {
    p: f64,
    q: f64,
    n0: f64,
    tx_noise: Vec<f64>,
    rx_noise: Vec<f64>,
}

#[derive(Deserialize)]
struct RawChannelConfig {
    p: f64,
    q: f64,
    n0: f64,
    #[serde(default)]
    tx_noise: Vec<f64>,
    #[serde(default)]
    rx_noise: Vec<f64>,
}

impl TryFrom<RawChannelConfig> for ChannelConfig {
    type Error = CapacityError;
    fn try_from(r: RawChannelConfig) -> Result<Self, Self::Error> {
        ChannelConfig::new(r.p, r.q, r.n0, r.tx_noise, r.rx_noise)
    }
}

impl ChannelConfig {
    pub fn new(
        p: f64,
        q: f64,
        n0: f64,
        tx_noise: Vec<f64>,
        rx_noise: Vec<f64>,
    ) -> Result<Self, CapacityError> {
        if !(p > 0.0) {
            return Err(CapacityError::NonPositivePower(p));
        }
        if !(q >= 0.0) {
            return Err(CapacityError::NegativeInterference(q));
        }
        if !(n0 > 0.0) {
            return Err(CapacityError::NonPositiveChannelNoise(n0));
        }
        for &v in tx_noise.iter().chain(rx_noise.iter()) {
            if !(v >= 0.0) {
                return Err(CapacityError::NegativeObservationNoise(v));
            }
        }
        Ok(Self { p, q, n0, tx_noise, rx_noise })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn tx_noise(&self) -> &[f64] {
        &self.tx_noise
    }

    pub fn rx_noise(&self) -> &[f64] {
        &self.rx_noise
    }

    /// All observation-noise variances, transmitter side first.
    pub fn all_noises(&self) -> impl Iterator<Item = f64> + '_ {
        self.tx_noise.iter().chain(self.rx_noise.iter()).copied()
    }

    pub fn observation_count(&self) -> usize {
        self.tx_noise.len() + self.rx_noise.len()
    }

    /// True when there is exactly one observation at each side, the shape the
    /// precoding formulas and the binning simulator work on.
    pub fn is_single_pair(&self) -> bool {
        self.tx_noise.len() == 1 && self.rx_noise.len() == 1
    }

    pub(crate) fn require_single_pair(&self) -> Result<(f64, f64), CapacityError> {
        if self.is_single_pair() {
            Ok((self.tx_noise[0], self.rx_noise[0]))
        } else {
            Err(CapacityError::ObservationShape {
                tx: self.tx_noise.len(),
                rx: self.rx_noise.len(),
            })
        }
    }
}

/// Fraction of the interference power that no observation can remove.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualFraction {
    pub mu: f64,
}

/// Which computation produced a reported rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePath {
    ClosedForm,
    Determinant,
    MonteCarlo,
    Optimizer,
}

/// A rate or capacity value together with the path that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Bits per channel use.
    pub value: f64,
    pub path: RatePath,
    pub config: ChannelConfig,
    pub detail: String,
}

/// How an optimal coefficient was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMethod {
    ClosedForm,
    Numeric,
}

/// The rate-maximizing precoding coefficient and the rate it attains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaOptimum {
    pub alpha_star: f64,
    /// Bits per channel use at `alpha_star`.
    pub rate_at_alpha_star: f64,
    pub method: AlphaMethod,
}

/// Inverse-variance fusion weights and the effective error variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    /// Per-observation weights, summing to one.
    pub weights: Vec<f64>,
    /// Variance of the fused estimation error.
    pub effective_variance: f64,
}

impl FusionResult {
    /// Applies the weights to one sample vector per observation.
    pub fn combine(&self, observations: &[&[f64]]) -> Vec<f64> {
        assert_eq!(observations.len(), self.weights.len(), "one vector per weight");
        let n = observations.first().map_or(0, |o| o.len());
        let mut out = vec![0.0; n];
        for (w, obs) in self.weights.iter().zip(observations) {
            assert_eq!(obs.len(), n, "observation vectors must share a length");
            for (o, &v) in out.iter_mut().zip(obs.iter()) {
                *o += w * v;
            }
        }
        out
    }
}

fn half_log2(ratio: f64) -> f64 {
    0.5 * ratio.log2()
}

/// Residual interference fraction `mu = 1 / (1 + sum_l Q/N_l)` over all
/// observations at both sides. Any noiseless observation drives `mu` to its
/// zero limit; with no observations `mu = 1`.
pub fn residual_fraction(cfg: &ChannelConfig) -> ResidualFraction {
    if cfg.all_noises().any(|n| n == 0.0) {
        return ResidualFraction { mu: 0.0 };
    }
    let sum: f64 = cfg.all_noises().map(|n| cfg.q / n).sum();
    ResidualFraction { mu: 1.0 / (1.0 + sum) }
}

/// Channel capacity `1/2 log2(1 + P / (mu Q + N0))`, valid for any number of
/// observations at either side.
pub fn capacity(cfg: &ChannelConfig) -> RateReport {
    let mu = residual_fraction(cfg).mu;
    let value = half_log2(1.0 + cfg.p / (mu * cfg.q + cfg.n0));
    RateReport {
        value,
        path: RatePath::ClosedForm,
        config: cfg.clone(),
        detail: format!("mu = {mu}"),
    }
}

/// Capacity with a single observation at the receiver only:
/// `1/2 log2(1 + P / (Q N2/(Q+N2) + N0))`.
pub fn capacity_rx_only(p: f64, q: f64, n0: f64, n2: f64) -> Result<RateReport, CapacityError> {
    let cfg = ChannelConfig::new(p, q, n0, vec![], vec![n2])?;
    let residual = if q + n2 > 0.0 { q * n2 / (q + n2) } else { 0.0 };
    let value = half_log2(1.0 + p / (residual + n0));
    Ok(RateReport {
        value,
        path: RatePath::ClosedForm,
        config: cfg,
        detail: format!("residual interference = {residual}"),
    })
}

/// Capacity with a single observation at the transmitter only. Statistically
/// equivalent knowledge at either side gives the same capacity, so this is
/// the receiver-only expression with `N1` in place of `N2`; at `N1 = 0` it
/// reduces to the interference-free dirty paper value.
pub fn capacity_tx_only(p: f64, q: f64, n0: f64, n1: f64) -> Result<RateReport, CapacityError> {
    let mut report = capacity_rx_only(p, q, n0, n1)?;
    report.config = ChannelConfig::new(p, q, n0, vec![n1], vec![])?;
    Ok(report)
}

/// Coefficients `(a, b, c)` of the quadratic `a x^2 - 2 b x + c` in the rate
/// denominator, plus the constant numerator `A` of the rate expression.
fn rate_quadratic(p: f64, q: f64, n0: f64, n1: f64, n2: f64) -> (f64, f64, f64, f64) {
    let a = q * (p + n0) * (n1 + n2) + (q + p + n0) * n1 * n2;
    let b = q * p * n2;
    let c = p * (q * n0 + q * n2 + n0 * n2);
    let numerator = p * ((q + p + n0) * (q + n2) - q * q);
    (a, b, c, numerator)
}

/// Binning rate `R(alpha)` for one observation at each side:
/// `1/2 log2( A / (a alpha^2 - 2 b alpha + c) )` with the coefficients of
/// [`rate_quadratic`]. Equals `I(U;Y,M2) - I(U;M1)` for `U = X + alpha*M1`.
///
/// The value is negative where the binning cost exceeds the channel
/// information; no rate is achievable there.
pub fn achievable_rate(cfg: &ChannelConfig, alpha: f64) -> Result<RateReport, CapacityError> {
    let (n1, n2) = cfg.require_single_pair()?;
    let (a, b, c, numerator) = rate_quadratic(cfg.p, cfg.q, cfg.n0, n1, n2);
    let denom = (a * alpha - 2.0 * b) * alpha + c;
    if denom <= 0.0 {
        return Err(CapacityError::DegenerateDenominator(denom));
    }
    Ok(RateReport {
        value: half_log2(numerator / denom),
        path: RatePath::ClosedForm,
        config: cfg.clone(),
        detail: format!("alpha = {alpha}"),
    })
}

/// Optimal precoding coefficient in closed form:
/// `alpha* = Q P N2 / (Q (P+N0)(N1+N2) + (Q+P+N0) N1 N2)`.
///
/// When the numerator vanishes (no interference, or a receiver that already
/// knows it) the coefficient is 0.
pub fn optimal_alpha(
    p: f64,
    q: f64,
    n0: f64,
    n1: f64,
    n2: f64,
) -> Result<AlphaOptimum, CapacityError> {
    let cfg = ChannelConfig::new(p, q, n0, vec![n1], vec![n2])?;
    let (a, b, _, _) = rate_quadratic(p, q, n0, n1, n2);
    let alpha_star = if b == 0.0 { 0.0 } else { b / a };
    Ok(AlphaOptimum {
        alpha_star,
        rate_at_alpha_star: capacity(&cfg).value,
        method: AlphaMethod::ClosedForm,
    })
}

/// Optimal coefficient by one-dimensional search, as an independent check on
/// the closed form.
///
/// The rate denominator is a positive quadratic in `alpha`, so minimizing it
/// over a bracket maximizes the rate; the search never touches the
/// closed-form optimum. The bracket is `[-10, 10]` scaled by the magnitude
/// ratio of the quadratic's linear and leading coefficients.
pub fn optimal_alpha_numeric(
    p: f64,
    q: f64,
    n0: f64,
    n1: f64,
    n2: f64,
    tol: f64,
) -> Result<AlphaOptimum, CapacityError> {
    if !(tol > 0.0) {
        return Err(CapacityError::NonPositiveTolerance(tol));
    }
    let _ = ChannelConfig::new(p, q, n0, vec![n1], vec![n2])?;
    let (a, b, c, numerator) = rate_quadratic(p, q, n0, n1, n2);
    if b == 0.0 {
        // Flat in alpha (no interference) or nothing to pre-subtract.
        return Ok(AlphaOptimum {
            alpha_star: 0.0,
            rate_at_alpha_star: half_log2(numerator / c),
            method: AlphaMethod::Numeric,
        });
    }
    let scale = (b / a).abs();
    let (lo, hi) = (-10.0 * scale, 10.0 * scale);
    let denom = |x: f64| (a * x - 2.0 * b) * x + c;
    let (bracketed, _) = optim::brent_min(denom, lo, hi, tol);
    if bracketed - lo <= tol || hi - bracketed <= tol {
        return Err(CapacityError::BracketFailure);
    }
    // The bracketed search bottoms out where rounding flattens the valley;
    // one wide-spaced parabolic fit recovers the vertex of the quadratic to
    // machine precision.
    let alpha = optim::parabolic_refine(denom, bracketed, 0.5 * scale);
    let denom_min = denom(alpha);
    if denom_min <= 0.0 {
        return Err(CapacityError::DegenerateDenominator(denom_min));
    }
    Ok(AlphaOptimum {
        alpha_star: alpha,
        rate_at_alpha_star: half_log2(numerator / denom_min),
        method: AlphaMethod::Numeric,
    })
}

/// Inverse-variance (maximum likelihood) fusion of independent observations.
///
/// Weights are `(1/N_l) / sum_k (1/N_k)` and the fused error variance is
/// `1 / sum_l (1/N_l)`. A noiseless observation short-circuits: it gets all
/// the weight and the effective variance is zero.
pub fn fuse_observations(noise_variances: &[f64]) -> Result<FusionResult, CapacityError> {
    if noise_variances.is_empty() {
        return Err(CapacityError::EmptyList);
    }
    for &v in noise_variances {
        if !(v >= 0.0) {
            return Err(CapacityError::NegativeObservationNoise(v));
        }
    }
    if let Some(zero) = noise_variances.iter().position(|&v| v == 0.0) {
        let mut weights = vec![0.0; noise_variances.len()];
        weights[zero] = 1.0;
        return Ok(FusionResult { weights, effective_variance: 0.0 });
    }
    let total: f64 = noise_variances.iter().map(|v| 1.0 / v).sum();
    Ok(FusionResult {
        weights: noise_variances.iter().map(|v| 1.0 / v / total).collect(),
        effective_variance: 1.0 / total,
    })
}

/// Replaces each side's observations with the single fused equivalent, which
/// leaves capacity unchanged. Sides without observations stay empty.
pub fn reduce_config(cfg: &ChannelConfig) -> ChannelConfig {
    let fused = |noises: &[f64]| -> Vec<f64> {
        if noises.is_empty() {
            vec![]
        } else {
            vec![fuse_observations(noises).expect("nonempty validated list").effective_variance]
        }
    };
    ChannelConfig::new(cfg.p, cfg.q, cfg.n0, fused(&cfg.tx_noise), fused(&cfg.rx_noise))
        .expect("reduction of a valid config is valid")
}

/// Capacity evaluated through the determinant ratio `I(X; Y, M1..Mk)` on the
/// exact joint covariance, with no use of the residual-fraction closed form.
///
/// Declines configurations whose joint covariance is singular (for example
/// two noiseless observations); the closed form handles those as limits.
pub fn capacity_via_determinants(cfg: &ChannelConfig) -> Result<RateReport, CapacityError> {
    let spec = build_joint_spec(cfg, None)?;
    let obs = observation_labels(cfg);
    let mut b: Vec<&str> = vec!["Y"];
    b.extend(obs.iter().map(|s| s.as_str()));
    let value = spec.mutual_information(&["X"], &b)?;
    Ok(RateReport {
        value,
        path: RatePath::Determinant,
        config: cfg.clone(),
        detail: format!("I(X; Y, {} observations)", obs.len()),
    })
}
