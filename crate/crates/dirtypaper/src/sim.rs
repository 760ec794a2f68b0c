//! Desk-scale random-binning achievability simulator.
//!
//! The scheme follows the classic binning construction: generate i.i.d.
//! codewords from the `U = X + alpha*M1` marginal, partition them into
//! equal-size bins (one per message), encode by picking a codeword in the
//! message's bin whose empirical second moments match the joint law given
//! the observed `m1`, transmit `x = u - alpha*m1`, and decode by exhaustive
//! maximum likelihood over all codewords under the nominal `(U, Y, M2)`
//! covariance.
//!
//! Exhaustive ML is affordable at desk scale and strictly stronger than a
//! threshold typicality decoder, so vanishing error is replaced here by an
//! ordering check: block error rates must grow as the rate approaches and
//! passes capacity. Encode failures (no moment-typical codeword, or a power
//! overshoot) are counted as block errors, which keeps the measured rates
//! conservative.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{CapacityError, ChannelConfig};
use crate::gaussian::{build_joint_spec, stream_rng, GaussianError};

/// Default cap on `bins * codewords_per_bin * n` scalars in one codebook.
pub const DEFAULT_SCALAR_BUDGET: usize = 100_000_000;

/// Auto-sizing refuses codebooks beyond `2^27` codewords per bin.
pub const AUTO_SIZE_CAP_BITS: f64 = 27.0;

/// Default typicality slack for the encoder's moment-matching bands.
pub const DEFAULT_EPSILON: f64 = 0.25;

/// Default fractional allowance on the average power constraint.
pub const DEFAULT_POWER_SLACK: f64 = 0.1;

/// Default block length for desk-scale runs.
pub const DEFAULT_BLOCK_LENGTH: usize = 12;

/// Default trial count for desk-scale runs.
pub const DEFAULT_TRIALS: usize = 1000;

// Codeword generation and per-trial channel draws run on disjoint RNG
// streams of the same user seed.
const CODEBOOK_STREAM_BASE: u64 = 1 << 40;
const WORDS_PER_STREAM: usize = 4096;
const DECODE_TRIAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("codebook needs {scalars} scalars, over the budget of {budget}")]
    SizeOverflow { scalars: u128, budget: usize },
    #[error("auto-sizing needs 2^{bits:.2} codewords per bin, over the 2^{cap} guardrail")]
    ExponentGuardrail { bits: f64, cap: f64 },
    #[error("decoder likelihood is not finite")]
    DecodeFailure,
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Why the encoder gave up on a trial.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EncodeFailure {
    /// No codeword in the bin fell inside the typicality bands; carries the
    /// best (smallest) moment-matching score seen.
    #[error("no codeword in the bin was jointly typical (best score {best_score:.3})")]
    NoTypicalWord { best_score: f64 },
    /// The selected codeword violated the average power constraint.
    #[error("transmit power {power:.3} exceeds the allowed slack")]
    PowerViolation { power: f64 },
}

/// Shape of one codebook: block length, rate, bin structure, and the
/// encoder's typicality and power slacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookParams {
    /// Block length (channel uses per message).
    pub n: usize,
    /// Target rate in bits per channel use; `bin_count = round(2^(n*rate))`.
    pub rate: f64,
    pub bin_count: usize,
    pub codewords_per_bin: usize,
    pub alpha: f64,
    /// Typicality slack on the encoder's normalized moment deviations.
    pub epsilon: f64,
    /// Fractional allowance on the power constraint.
    pub power_slack: f64,
}

impl CodebookParams {
    pub fn new(
        n: usize,
        rate: f64,
        bin_count: usize,
        codewords_per_bin: usize,
        alpha: f64,
        epsilon: f64,
        power_slack: f64,
    ) -> Result<Self, SimError> {
        if n == 0 {
            return Err(SimError::Config("block length must be at least 1".into()));
        }
        if bin_count == 0 || codewords_per_bin == 0 {
            return Err(SimError::Config("bins and codewords per bin must be at least 1".into()));
        }
        if !(rate >= 0.0) {
            return Err(SimError::Config(format!("rate must be nonnegative, got {rate}")));
        }
        if !(epsilon > 0.0) {
            return Err(SimError::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(power_slack >= 0.0) {
            return Err(SimError::Config(format!(
                "power slack must be nonnegative, got {power_slack}"
            )));
        }
        if !alpha.is_finite() {
            return Err(SimError::Config(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { n, rate, bin_count, codewords_per_bin, alpha, epsilon, power_slack })
    }

    /// Sizes the codebook from the configuration: `round(2^(n*rate))` bins
    /// and `ceil(2^(n*(I(U;M1)+epsilon)))` codewords per bin, the bin
    /// population the binning argument requires. Refuses exponents over
    /// [`AUTO_SIZE_CAP_BITS`].
    pub fn auto(
        cfg: &ChannelConfig,
        n: usize,
        rate: f64,
        alpha: f64,
        epsilon: f64,
        power_slack: f64,
    ) -> Result<Self, SimError> {
        cfg.require_single_pair()?;
        if n == 0 {
            return Err(SimError::Config("block length must be at least 1".into()));
        }
        if !(rate >= 0.0) {
            return Err(SimError::Config(format!("rate must be nonnegative, got {rate}")));
        }
        let spec = build_joint_spec(cfg, Some(alpha))?;
        let i_um = spec.mutual_information(&["U"], &["M1"])?;
        let bits = n as f64 * (i_um + epsilon);
        if bits > AUTO_SIZE_CAP_BITS {
            return Err(SimError::ExponentGuardrail { bits, cap: AUTO_SIZE_CAP_BITS });
        }
        let codewords_per_bin = (2.0_f64.powf(bits).ceil() as usize).max(1);
        let bin_count = (2.0_f64.powf(n as f64 * rate).round() as usize).max(1);
        Self::new(n, rate, bin_count, codewords_per_bin, alpha, epsilon, power_slack)
    }

    pub fn total_words(&self) -> usize {
        self.bin_count * self.codewords_per_bin
    }
}

/// An immutable codebook: `bin_count * codewords_per_bin` length-`n` words
/// drawn i.i.d. from the `U` marginal, in contiguous equal-size bins.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub params: CodebookParams,
    pub seed: u64,
    var_u: f64,
    words: Vec<f64>,
    norms: Vec<f64>, // squared norm per word, precomputed for the decoder
}

impl Codebook {
    pub fn word(&self, i: usize) -> &[f64] {
        &self.words[i * self.params.n..(i + 1) * self.params.n]
    }

    /// Bin owning word `i`; bins are contiguous runs of equal length.
    pub fn bin_of(&self, i: usize) -> usize {
        i / self.params.codewords_per_bin
    }

    /// Word indices belonging to bin `w`.
    pub fn bin_range(&self, w: usize) -> std::ops::Range<usize> {
        let l = self.params.codewords_per_bin;
        w * l..(w + 1) * l
    }

    /// Marginal variance of the codeword entries, `P + alpha^2 (Q + N1)`.
    pub fn var_u(&self) -> f64 {
        self.var_u
    }
}

/// One channel use of the simulator's forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub y: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

/// Outcome of one simulated block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub w_sent: usize,
    /// Decoded bin; `None` after an encode failure or a decode failure.
    pub w_decoded: Option<usize>,
    pub encode_failure: Option<EncodeFailure>,
    /// Measured `||x||^2 / n`; populated only for successful encodings.
    pub tx_power: Option<f64>,
}

impl TrialRecord {
    pub fn is_block_error(&self) -> bool {
        self.encode_failure.is_some() || self.w_decoded != Some(self.w_sent)
    }
}

/// Aggregate statistics over a batch of simulated blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: usize,
    /// Fraction of trials with a wrong message, counting encode failures.
    pub block_error_rate: f64,
    pub encode_failure_rate: f64,
    /// Mean `||x||^2 / n` over successful encodings; `None` if none succeeded.
    pub mean_tx_power: Option<f64>,
    pub params: CodebookParams,
    pub seed: u64,
}

/// Draws the codebook for `cfg` under the default scalar budget.
pub fn build_codebook(
    cfg: &ChannelConfig,
    params: &CodebookParams,
    seed: u64,
) -> Result<Codebook, SimError> {
    build_codebook_with_budget(cfg, params, seed, DEFAULT_SCALAR_BUDGET)
}

/// Draws the codebook, refusing to allocate more than `budget` scalars.
pub fn build_codebook_with_budget(
    cfg: &ChannelConfig,
    params: &CodebookParams,
    seed: u64,
    budget: usize,
) -> Result<Codebook, SimError> {
    let (n1, _) = cfg.require_single_pair()?;
    let scalars = params.bin_count as u128 * params.codewords_per_bin as u128 * params.n as u128;
    if scalars > budget as u128 {
        return Err(SimError::SizeOverflow { scalars, budget });
    }
    let var_u = cfg.p() + params.alpha * params.alpha * (cfg.q() + n1);
    let sigma = var_u.sqrt();
    let n = params.n;
    let total = params.total_words();
    let mut words = vec![0.0; total * n];
    words
        .par_chunks_mut(WORDS_PER_STREAM * n)
        .enumerate()
        .for_each(|(chunk, slab)| {
            let mut rng = stream_rng(seed, CODEBOOK_STREAM_BASE + chunk as u64);
            for v in slab.iter_mut() {
                *v = sigma * rng.sample::<f64, _>(StandardNormal);
            }
        });
    let norms = words.chunks_exact(n).map(|w| w.iter().map(|v| v * v).sum()).collect();
    Ok(Codebook { params: params.clone(), seed, var_u, words, norms })
}

/// Selects a codeword from bin `w` that is moment-typical with `m1` and
/// returns the transmit block `x = u - alpha*m1`.
///
/// Typicality is scored against the joint law conditioned on the observed
/// `m1`: with `mhat = ||m1||^2/n`, the codeword's empirical `||u||^2/n` is
/// matched to `P + alpha^2*mhat` and `u.m1/n` to `alpha*mhat`, both
/// normalized by the nominal variances. A word is typical when both
/// normalized deviations are within `epsilon`; among typical words the
/// smallest score wins, earliest index on ties.
pub fn encode(
    book: &Codebook,
    w: usize,
    m1: &[f64],
    cfg: &ChannelConfig,
) -> Result<Vec<f64>, EncodeFailure> {
    let params = &book.params;
    assert!(w < params.bin_count, "bin index {w} out of range");
    assert_eq!(m1.len(), params.n, "observation length must match the block length");
    assert!(cfg.is_single_pair(), "encode expects one observation per side; reduce first");

    let n = params.n as f64;
    let alpha = params.alpha;
    let var_m1 = cfg.q() + cfg.tx_noise()[0];
    let scale_uu = book.var_u;
    let scale_um = (book.var_u * var_m1).sqrt();
    let mhat = m1.iter().map(|v| v * v).sum::<f64>() / n;
    let target_uu = cfg.p() + alpha * alpha * mhat;
    let target_um = alpha * mhat;

    let mut best_score = f64::INFINITY;
    let mut best_typical: Option<usize> = None;
    let mut best_typical_score = f64::INFINITY;
    for i in book.bin_range(w) {
        let word = book.word(i);
        let uu = book.norms[i] / n;
        let um = word.iter().zip(m1).map(|(u, m)| u * m).sum::<f64>() / n;
        let d_uu = (uu - target_uu) / scale_uu;
        let d_um = (um - target_um) / scale_um;
        let score = d_uu * d_uu + d_um * d_um;
        if score < best_score {
            best_score = score;
        }
        if d_uu.abs() <= params.epsilon && d_um.abs() <= params.epsilon && score < best_typical_score
        {
            best_typical_score = score;
            best_typical = Some(i);
        }
    }
    let Some(chosen) = best_typical else {
        return Err(EncodeFailure::NoTypicalWord { best_score });
    };

    let x: Vec<f64> =
        book.word(chosen).iter().zip(m1).map(|(u, m)| u - alpha * m).collect();
    let power = x.iter().map(|v| v * v).sum::<f64>() / n;
    if power > cfg.p() * (1.0 + params.power_slack) {
        return Err(EncodeFailure::PowerViolation { power });
    }
    Ok(x)
}

/// Passes `x` through the channel with fresh interference and noise draws:
/// `y = x + s + z0`, `m1 = s + z1`, `m2 = s + z2`.
pub fn transmit(x: &[f64], cfg: &ChannelConfig, seed: u64) -> Result<Transmission, SimError> {
    let (n1, n2) = cfg.require_single_pair()?;
    let mut rng = stream_rng(seed, 0);
    let draws = ChannelDraws::new(&mut rng, x.len(), cfg.q(), cfg.n0(), n1, n2);
    let y = x.iter().zip(draws.s.iter().zip(&draws.z0)).map(|(x, (s, z0))| x + s + z0).collect();
    Ok(Transmission { y, m1: draws.m1(), m2: draws.m2() })
}

struct ChannelDraws {
    s: Vec<f64>,
    z0: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

impl ChannelDraws {
    fn new(rng: &mut ChaCha8Rng, n: usize, q: f64, n0: f64, n1: f64, n2: f64) -> Self {
        let mut draw = |var: f64| -> Vec<f64> {
            let sigma = var.sqrt();
            (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let s = draw(q);
        let z0 = draw(n0);
        let z1 = draw(n1);
        let z2 = draw(n2);
        Self { s, z0, z1, z2 }
    }

    fn m1(&self) -> Vec<f64> {
        self.s.iter().zip(&self.z1).map(|(s, z)| s + z).collect()
    }

    fn m2(&self) -> Vec<f64> {
        self.s.iter().zip(&self.z2).map(|(s, z)| s + z).collect()
    }
}

/// Row of the inverse nominal `(U, Y, M2)` covariance that multiplies `U`,
/// which is all the ML decoder needs: the codeword-dependent part of the
/// log-likelihood is `-1/2 kuu ||u||^2 - u.(kuy y + kum m2)`.
fn decoder_coefficients(cfg: &ChannelConfig, alpha: f64) -> Result<(f64, f64, f64), SimError> {
    let spec = build_joint_spec(cfg, Some(alpha))?;
    let cov = spec.restrict(&["U", "Y", "M2"])?.cov().clone();
    cov.ln_det()?; // positive-definiteness gate
    let (a, b, c) = (cov.get(0, 0), cov.get(0, 1), cov.get(0, 2));
    let (d, e, f) = (cov.get(1, 1), cov.get(1, 2), cov.get(2, 2));
    let det = a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d);
    let kuu = (d * f - e * e) / det;
    let kuy = (c * e - b * f) / det;
    let kum = (b * e - c * d) / det;
    Ok((kuu, kuy, kum))
}

/// Scans every codeword for the ML winner against precomputed targets
/// `t = kuy*y + kum*m2`, one target per trial. Returns `(word, score)` per
/// trial; ties go to the earliest word.
fn ml_scan(book: &Codebook, kuu: f64, targets: &[Vec<f64>]) -> Vec<(usize, f64)> {
    let n = book.params.n;
    let total = book.params.total_words();
    let count = targets.len();
    // Transposed target buffer so the per-word inner loop runs across trials.
    let mut tt = vec![0.0; n * count];
    for (j, t) in targets.iter().enumerate() {
        for s in 0..n {
            tt[s * count + j] = t[s];
        }
    }
    let mut best = vec![(0usize, f64::NEG_INFINITY); count];
    let mut acc = vec![0.0; count];
    for i in 0..total {
        let word = book.word(i);
        let bias = -0.5 * kuu * book.norms[i];
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (s, &u) in word.iter().enumerate() {
            let row = &tt[s * count..(s + 1) * count];
            for j in 0..count {
                acc[j] += u * row[j];
            }
        }
        for j in 0..count {
            let score = bias - acc[j];
            if score > best[j].1 {
                best[j] = (i, score);
            }
        }
    }
    best
}

/// Maximum-likelihood decoding of the received pair `(y, m2)` to a bin index.
pub fn decode(
    book: &Codebook,
    y: &[f64],
    m2: &[f64],
    cfg: &ChannelConfig,
) -> Result<usize, SimError> {
    assert_eq!(y.len(), book.params.n);
    assert_eq!(m2.len(), book.params.n);
    let (kuu, kuy, kum) = decoder_coefficients(cfg, book.params.alpha)?;
    let target: Vec<f64> = y.iter().zip(m2).map(|(y, m)| kuy * y + kum * m).collect();
    let (word, score) = ml_scan(book, kuu, std::slice::from_ref(&target))[0];
    if !score.is_finite() {
        return Err(SimError::DecodeFailure);
    }
    Ok(book.bin_of(word))
}

/// Runs the full loop for `trials` blocks and aggregates the outcome.
///
/// Per trial: draw `(s, z0, z1, z2)`, form `m1`, pick a uniform message,
/// encode, transmit reusing the already-drawn `s` and `z0` (the observations
/// are non-causal), form `m2`, decode, tally. Trials run on independent RNG
/// streams, so the report is identical for any worker count.
pub fn run_trials(
    cfg: &ChannelConfig,
    params: &CodebookParams,
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    run_trials_detailed(cfg, params, trials, seed).map(|(report, _)| report)
}

/// As [`run_trials`], also returning the per-trial records.
pub fn run_trials_detailed(
    cfg: &ChannelConfig,
    params: &CodebookParams,
    trials: usize,
    seed: u64,
) -> Result<(SimReport, Vec<TrialRecord>), SimError> {
    if trials == 0 {
        return Err(SimError::Config("need at least one trial".into()));
    }
    let (n1, n2) = cfg.require_single_pair()?;
    let book = build_codebook(cfg, params, seed)?;
    let (kuu, kuy, kum) = decoder_coefficients(cfg, params.alpha)?;
    let k = params.bin_count;
    let n = params.n;

    struct Prepared {
        w: usize,
        outcome: Result<(f64, Vec<f64>), EncodeFailure>, // (tx power, decode target)
    }

    let prepared: Vec<Prepared> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, trial as u64);
            let draws = ChannelDraws::new(&mut rng, n, cfg.q(), cfg.n0(), n1, n2);
            let m1 = draws.m1();
            let w = rng.random_range(0..k);
            let outcome = encode(&book, w, &m1, cfg).map(|x| {
                let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
                let target: Vec<f64> = (0..n)
                    .map(|t| {
                        let y = x[t] + draws.s[t] + draws.z0[t];
                        let m2 = draws.s[t] + draws.z2[t];
                        kuy * y + kum * m2
                    })
                    .collect();
                (power, target)
            });
            Prepared { w, outcome }
        })
        .collect();

    // Exhaustive ML over the codebook, batched so each pass over the words
    // serves many trials.
    let live: Vec<(usize, &Vec<f64>)> = prepared
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.outcome.as_ref().ok().map(|(_, t)| (i, t)))
        .collect();
    let mut decoded: Vec<Option<(usize, f64)>> = vec![None; trials];
    let scan_results: Vec<(usize, (usize, f64))> = live
        .par_chunks(DECODE_TRIAL_BATCH)
        .flat_map_iter(|chunk| {
            let targets: Vec<Vec<f64>> = chunk.iter().map(|(_, t)| (*t).clone()).collect();
            let winners = ml_scan(&book, kuu, &targets);
            chunk.iter().map(|(i, _)| *i).zip(winners).collect::<Vec<_>>()
        })
        .collect();
    for (trial, winner) in scan_results {
        decoded[trial] = Some(winner);
    }

    let records: Vec<TrialRecord> = prepared
        .iter()
        .enumerate()
        .map(|(i, p)| match &p.outcome {
            Err(e) => TrialRecord {
                w_sent: p.w,
                w_decoded: None,
                encode_failure: Some(*e),
                tx_power: None,
            },
            Ok((power, _)) => {
                let w_decoded = decoded[i].and_then(|(word, score)| {
                    score.is_finite().then(|| book.bin_of(word))
                });
                TrialRecord {
                    w_sent: p.w,
                    w_decoded,
                    encode_failure: None,
                    tx_power: Some(*power),
                }
            }
        })
        .collect();

    let errors = records.iter().filter(|r| r.is_block_error()).count();
    let encode_failures = records.iter().filter(|r| r.encode_failure.is_some()).count();
    let powers: Vec<f64> = records.iter().filter_map(|r| r.tx_power).collect();
    let mean_tx_power = if powers.is_empty() {
        None
    } else {
        Some(powers.iter().sum::<f64>() / powers.len() as f64)
    };
    let report = SimReport {
        trials,
        block_error_rate: errors as f64 / trials as f64,
        encode_failure_rate: encode_failures as f64 / trials as f64,
        mean_tx_power,
        params: params.clone(),
        seed,
    };
    Ok((report, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{self, optimal_alpha};
    use approx::assert_abs_diff_eq;

    fn nominal() -> ChannelConfig {
        ChannelConfig::new(10.0, 5.0, 1.0, vec![2.0], vec![3.0]).unwrap()
    }

    fn nominal_alpha() -> f64 {
        optimal_alpha(10.0, 5.0, 1.0, 2.0, 3.0).unwrap().alpha_star
    }

    #[test]
    fn codebook_structure() {
        let params = CodebookParams::new(8, 0.125, 2, 4, 0.3, 0.25, 0.1).unwrap();
        let book = build_codebook(&nominal(), &params, 7).unwrap();
        assert_eq!(book.params.total_words(), 8);
        for i in 0..8 {
            assert_eq!(book.word(i).len(), 8);
            assert_eq!(book.bin_of(i), i / 4);
        }
        assert_eq!(book.bin_range(1), 4..8);
    }

    #[test]
    fn auto_sizing_matches_direct_formula() {
        // L = ceil(2^(n (I(U;M1) + eps))) with I from the closed form
        // 1/2 log2((P + a^2 (Q+N1)) / P).
        let alpha = nominal_alpha();
        let params = CodebookParams::auto(&nominal(), 12, 0.5, alpha, 0.1, 0.1).unwrap();
        let i_um = 0.5 * ((10.0 + alpha * alpha * 7.0) / 10.0).log2();
        let expected = 2.0_f64.powf(12.0 * (i_um + 0.1)).ceil() as usize;
        assert_eq!(params.codewords_per_bin, expected);
        assert_eq!(params.bin_count, 2.0_f64.powf(12.0 * 0.5).round() as usize);
    }

    #[test]
    fn auto_sizing_guardrail() {
        let alpha = nominal_alpha();
        let err = CodebookParams::auto(&nominal(), 4000, 0.1, alpha, 0.25, 0.1).unwrap_err();
        assert!(matches!(err, SimError::ExponentGuardrail { .. }));
    }

    #[test]
    fn size_budget_is_enforced() {
        let params = CodebookParams::new(10, 1.0, 1 << 20, 128, 0.3, 0.25, 0.1).unwrap();
        let err = build_codebook_with_budget(&nominal(), &params, 1, 1 << 20).unwrap_err();
        assert!(matches!(err, SimError::SizeOverflow { .. }));
    }

    #[test]
    fn codebook_is_seed_deterministic() {
        let params = CodebookParams::new(6, 0.2, 3, 5, 0.4, 0.25, 0.1).unwrap();
        let a = build_codebook(&nominal(), &params, 99).unwrap();
        let b = build_codebook(&nominal(), &params, 99).unwrap();
        assert_eq!(a.words, b.words);
        let c = build_codebook(&nominal(), &params, 100).unwrap();
        assert_ne!(a.words, c.words);
    }

    #[test]
    fn encode_with_zero_alpha_returns_the_codeword() {
        let cfg = nominal();
        let params = CodebookParams::auto(&cfg, 12, 0.1, 0.0, 0.5, 0.5).unwrap();
        let book = build_codebook(&cfg, &params, 5).unwrap();
        let mut rng = stream_rng(17, 0);
        let mut found = false;
        for _ in 0..50 {
            let draws = ChannelDraws::new(&mut rng, 12, 5.0, 1.0, 2.0, 3.0);
            let m1 = draws.m1();
            if let Ok(x) = encode(&book, 0, &m1, &cfg) {
                // With alpha = 0 the transmit block is the selected word itself.
                let matches_word =
                    book.bin_range(0).any(|i| book.word(i) == x.as_slice());
                assert!(matches_word);
                found = true;
            }
        }
        assert!(found, "no trial encoded successfully");
    }

    #[test]
    fn encode_degenerates_gracefully_without_interference() {
        let cfg = ChannelConfig::new(10.0, 0.0, 1.0, vec![2.0], vec![3.0]).unwrap();
        let params = CodebookParams::auto(&cfg, 12, 0.1, 0.0, 0.25, 0.5).unwrap();
        let book = build_codebook(&cfg, &params, 5).unwrap();
        let mut rng = stream_rng(3, 0);
        let mut successes = 0;
        for _ in 0..40 {
            let draws = ChannelDraws::new(&mut rng, 12, 0.0, 1.0, 2.0, 3.0);
            if encode(&book, 0, &draws.m1(), &cfg).is_ok() {
                successes += 1;
            }
        }
        assert!(successes > 20, "only {successes}/40 encodes succeeded");
    }

    #[test]
    fn transmit_statistics() {
        let cfg = nominal();
        let x = vec![0.0; 100_000];
        let t = transmit(&x, &cfg, 31).unwrap();
        let n = x.len() as f64;
        let var_y = t.y.iter().map(|v| v * v).sum::<f64>() / n;
        // Var(y) = Q + N0 = 6, within 3 standard errors of a chi-square mean.
        let se = 6.0 * (2.0 / n).sqrt();
        assert!((var_y - 6.0).abs() < 3.0 * se, "var {var_y}");
        let cov_ym1 = t.y.iter().zip(&t.m1).map(|(a, b)| a * b).sum::<f64>() / n;
        assert!((cov_ym1 - 5.0).abs() < 0.2, "cov {cov_ym1}");

        let silent = ChannelConfig::new(1.0, 0.0, 1e-300, vec![0.0], vec![0.0]).unwrap();
        let t = transmit(&[1.0, -2.0, 3.0], &silent, 1).unwrap();
        assert!(t.y.iter().zip([1.0, -2.0, 3.0]).all(|(a, b)| (a - b).abs() < 1e-140));
    }

    #[test]
    fn near_noiseless_channel_always_recovers() {
        // The decoder's nominal covariance would be singular at exactly
        // Q = N0 = 0, so the test uses a vanishing channel noise instead.
        let cfg = ChannelConfig::new(10.0, 0.0, 1e-6, vec![2.0], vec![3.0]).unwrap();
        let params = CodebookParams::new(10, 0.2, 4, 4, 0.0, 3.0, 1.0).unwrap();
        let (report, records) = run_trials_detailed(&cfg, &params, 40, 8).unwrap();
        for r in records.iter().filter(|r| r.encode_failure.is_none()) {
            assert_eq!(r.w_decoded, Some(r.w_sent));
        }
        assert_eq!(report.block_error_rate, report.encode_failure_rate);
    }

    #[test]
    fn single_bin_codebook_never_errs_at_decode() {
        let cfg = nominal();
        let params = CodebookParams::auto(&cfg, 12, 0.0, nominal_alpha(), 0.25, 0.1).unwrap();
        assert_eq!(params.bin_count, 1);
        let report = run_trials(&cfg, &params, 100, 21).unwrap();
        assert_eq!(report.block_error_rate, report.encode_failure_rate);
    }

    #[test]
    fn rate_far_above_capacity_mostly_errs() {
        // A low-capacity configuration keeps the 2x-capacity codebook small.
        let cfg = ChannelConfig::new(1.0, 5.0, 2.0, vec![2.0], vec![3.0]).unwrap();
        let c = capacity::capacity(&cfg).value;
        let alpha = optimal_alpha(1.0, 5.0, 2.0, 2.0, 3.0).unwrap().alpha_star;
        let params = CodebookParams::auto(&cfg, 12, 2.0 * c, alpha, 0.25, 0.1).unwrap();
        let report = run_trials(&cfg, &params, 500, 9).unwrap();
        assert!(report.block_error_rate > 0.9, "rate {}", report.block_error_rate);
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = nominal();
        let params = CodebookParams::auto(&cfg, 12, 0.4, nominal_alpha(), 0.25, 0.1).unwrap();
        let (ra, recs_a) = run_trials_detailed(&cfg, &params, 200, 77).unwrap();
        let (rb, recs_b) = run_trials_detailed(&cfg, &params, 200, 77).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(recs_a, recs_b);
    }

    #[test]
    fn decode_matches_batched_path() {
        let cfg = nominal();
        let alpha = nominal_alpha();
        let params = CodebookParams::auto(&cfg, 12, 0.3, alpha, 0.25, 0.25).unwrap();
        let book = build_codebook(&cfg, &params, 13).unwrap();
        let (_, records) = run_trials_detailed(&cfg, &params, 30, 13).unwrap();
        let (n1, n2) = (2.0, 3.0);
        for (trial, rec) in records.iter().enumerate() {
            if rec.encode_failure.is_some() {
                continue;
            }
            // Re-derive this trial's channel and check the one-shot decoder.
            let mut rng = stream_rng(13, trial as u64);
            let draws = ChannelDraws::new(&mut rng, 12, cfg.q(), cfg.n0(), n1, n2);
            let m1 = draws.m1();
            let w = rng.random_range(0..params.bin_count);
            assert_eq!(w, rec.w_sent);
            let x = encode(&book, w, &m1, &cfg).unwrap();
            let y: Vec<f64> =
                x.iter().zip(draws.s.iter().zip(&draws.z0)).map(|(x, (s, z))| x + s + z).collect();
            let m2 = draws.m2();
            let bin = decode(&book, &y, &m2, &cfg).unwrap();
            assert_eq!(Some(bin), rec.w_decoded);
        }
    }

    #[test]
    fn selected_words_track_nominal_cross_moment() {
        let cfg = nominal();
        let alpha = nominal_alpha();
        let nominal_um = alpha * 7.0; // alpha (Q + N1)
        let mut mean_dev = Vec::new();
        // Tighter slack at the longer block keeps the auto-sized bins inside
        // the scalar budget.
        for (n, rate, eps) in [(16usize, 0.12, 0.25), (64usize, 0.03, 0.1)] {
            let params = CodebookParams::auto(&cfg, n, rate, alpha, eps, 0.5).unwrap();
            let book = build_codebook(&cfg, &params, 41).unwrap();
            let mut rng = stream_rng(42, 0);
            let mut devs = Vec::new();
            for _ in 0..200 {
                let draws = ChannelDraws::new(&mut rng, n, cfg.q(), cfg.n0(), 2.0, 3.0);
                let m1 = draws.m1();
                let w = rng.random_range(0..params.bin_count);
                if let Ok(x) = encode(&book, w, &m1, &cfg) {
                    // u = x + alpha m1, so u.m1 is recoverable from x.
                    let um = x
                        .iter()
                        .zip(&m1)
                        .map(|(x, m)| (x + alpha * m) * m)
                        .sum::<f64>()
                        / n as f64;
                    devs.push(um - nominal_um);
                }
            }
            assert!(devs.len() > 50);
            mean_dev.push(devs.iter().sum::<f64>() / devs.len() as f64);
            // Band shrinking as 1/sqrt(n): generous 3x the nominal scale.
            let band = 3.0 * (book.var_u() * 7.0).sqrt() / (n as f64).sqrt();
            let dev = mean_dev.last().unwrap().abs();
            assert!(dev < band, "n={n}: mean deviation {dev} vs band {band}");
        }
    }

    #[test]
    fn trial_count_must_be_positive() {
        let params = CodebookParams::auto(&nominal(), 8, 0.2, 0.3, 0.25, 0.1).unwrap();
        assert!(matches!(
            run_trials(&nominal(), &params, 0, 1),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn report_serialization_round_trips() {
        let params = CodebookParams::auto(&nominal(), 10, 0.3, nominal_alpha(), 0.25, 0.1).unwrap();
        let report = run_trials(&nominal(), &params, 50, 3).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: SimReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn power_constraint_on_successful_encodings() {
        let cfg = nominal();
        let params = CodebookParams::auto(&cfg, 12, 0.5, nominal_alpha(), 0.25, 0.1).unwrap();
        let (report, records) = run_trials_detailed(&cfg, &params, 300, 55).unwrap();
        for r in &records {
            if let Some(p) = r.tx_power {
                assert!(p <= 10.0 * 1.1 + 1e-12);
            }
        }
        if let Some(mean) = report.mean_tx_power {
            assert!(mean <= 11.0 && mean >= 6.0, "mean power {mean}");
        }
    }
}
