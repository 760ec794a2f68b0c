//! Acceptance suite: every release criterion as one test, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them all).
//!
//! The criteria pin oracle-equivalence and property checks at explicit
//! tolerances: closed forms against the determinant path, the numeric
//! optimizer against the closed-form coefficient, Monte Carlo estimates
//! against analytic targets, and the desk-scale binning simulator's
//! error-rate ordering across a rate grid.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirtypaper::capacity::{
    achievable_rate, capacity, capacity_via_determinants, optimal_alpha, optimal_alpha_numeric,
    reduce_config, ChannelConfig,
};
use dirtypaper::gaussian::{build_joint_spec, observation_labels};
use dirtypaper::mc::{estimate_rate_gap, verify_tightness};
use dirtypaper::sim::{run_trials, CodebookParams, SimReport, DEFAULT_EPSILON, DEFAULT_POWER_SLACK};

const RANDOM_CONFIG_SEED: u64 = 0xD1577;
const NOMINAL_CAPACITY_BITS: f64 = 1.302269; // 1/2 log2(371/61), frozen

fn nominal() -> ChannelConfig {
    ChannelConfig::new(10.0, 5.0, 1.0, vec![2.0], vec![3.0]).unwrap()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Random configuration with variances log-uniform in [1e-2, 1e2] and up to
/// four strictly noisy observations per side.
fn random_config(rng: &mut ChaCha8Rng, min_obs: usize) -> ChannelConfig {
    loop {
        let p = log_uniform(rng, 1e-2, 1e2);
        let q = log_uniform(rng, 1e-2, 1e2);
        let n0 = log_uniform(rng, 1e-2, 1e2);
        let n_tx = rng.random_range(0..=4usize);
        let n_rx = rng.random_range(0..=4usize);
        if n_tx + n_rx < min_obs {
            continue;
        }
        let tx = (0..n_tx).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
        let rx = (0..n_rx).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
        return ChannelConfig::new(p, q, n0, tx, rx).unwrap();
    }
}

fn report_line(id: &str, name: &str, pass: bool, detail: &str) {
    println!("acceptance {id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_01_closed_form_vs_determinant_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED);
    let mut max_gap: f64 = 0.0;
    for _ in 0..500 {
        let cfg = random_config(&mut rng, 0);
        let closed = capacity(&cfg).value;
        let det = capacity_via_determinants(&cfg).expect("noises > 0 keep the joint PD").value;
        max_gap = max_gap.max((closed - det).abs());
    }
    let elapsed = start.elapsed();
    let pass = max_gap <= 1e-9 && elapsed < Duration::from_secs(5);
    report_line(
        "01",
        "closed form vs determinant oracle",
        pass,
        &format!("max |diff| = {max_gap:.3e} bits over 500 configs, {elapsed:.2?}"),
    );
    assert!(pass, "max gap {max_gap:.3e} bits, elapsed {elapsed:?}");
}

#[test]
fn criterion_02_theorem_tightness() {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED);
    let mut max_gap: f64 = 0.0;
    for _ in 0..500 {
        let cfg = random_config(&mut rng, 0);
        let spec = build_joint_spec(&cfg, None).unwrap();
        let obs = observation_labels(&cfg);
        let obs_refs: Vec<&str> = obs.iter().map(|s| s.as_str()).collect();
        let cond = spec.conditional_mutual_information(&["X"], &["Y"], &obs_refs).unwrap();
        max_gap = max_gap.max((cond - capacity(&cfg).value).abs());
    }

    let mut tight_failures = 0;
    for seed in 0..50u64 {
        let cfg = random_config(&mut rng, 1);
        let est = verify_tightness(&cfg, 100_000, seed).unwrap();
        if !est.compatible_with_zero(4.0) {
            tight_failures += 1;
        }
    }
    let pass = max_gap <= 1e-9 && tight_failures == 0;
    report_line(
        "02",
        "Theorem-1 tightness",
        pass,
        &format!(
            "max |I(X;Y|M) - closed| = {max_gap:.3e} bits, {tight_failures}/50 tightness failures"
        ),
    );
    assert!(pass, "max gap {max_gap:.3e}, tightness failures {tight_failures}");
}

#[test]
fn criterion_03_optimal_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED + 3);
    let mut max_alpha_gap: f64 = 0.0;
    let mut max_rate_gap: f64 = 0.0;
    let mut max_grid_excess: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let p = log_uniform(&mut rng, 1e-2, 1e2);
        let q = log_uniform(&mut rng, 1e-2, 1e2);
        let n0 = log_uniform(&mut rng, 1e-2, 1e2);
        let n1 = log_uniform(&mut rng, 1e-2, 1e2);
        let n2 = log_uniform(&mut rng, 1e-2, 1e2);
        let closed = optimal_alpha(p, q, n0, n1, n2).unwrap();
        let numeric = optimal_alpha_numeric(p, q, n0, n1, n2, 1e-9).unwrap();
        max_alpha_gap = max_alpha_gap.max((closed.alpha_star - numeric.alpha_star).abs());

        let cfg = ChannelConfig::new(p, q, n0, vec![n1], vec![n2]).unwrap();
        let at_star = achievable_rate(&cfg, closed.alpha_star).unwrap().value;
        max_rate_gap = max_rate_gap.max((at_star - capacity(&cfg).value).abs());

        // No point of a dense grid may beat the closed-form optimum.
        let span = closed.alpha_star.abs().max(1.0);
        let lo = closed.alpha_star - 2.0 * span;
        let hi = closed.alpha_star + 2.0 * span;
        for k in 0..10_000 {
            let alpha = lo + (hi - lo) * k as f64 / 9_999.0;
            let r = achievable_rate(&cfg, alpha).unwrap().value;
            max_grid_excess = max_grid_excess.max(r - at_star);
        }
    }
    let pass = max_alpha_gap <= 1e-8 && max_rate_gap <= 1e-9 && max_grid_excess <= 1e-9;
    report_line(
        "03",
        "optimal coefficient",
        pass,
        &format!(
            "max |alpha gap| = {max_alpha_gap:.3e}, max |R(a*) - C| = {max_rate_gap:.3e} bits, \
             max grid excess = {max_grid_excess:.3e} bits"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_costa_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED + 4);
    let mut max_capacity_gap: f64 = 0.0;
    let mut max_alpha_gap: f64 = 0.0;
    for _ in 0..50 {
        let p = log_uniform(&mut rng, 1e-2, 1e2);
        let q = log_uniform(&mut rng, 1e-2, 1e2);
        let n0 = log_uniform(&mut rng, 1e-2, 1e2);
        let perfect = ChannelConfig::new(p, q, n0, vec![0.0], vec![]).unwrap();
        let interference_free = 0.5 * (1.0 + p / n0).log2();
        max_capacity_gap = max_capacity_gap.max((capacity(&perfect).value - interference_free).abs());

        let nearly = optimal_alpha(p, q, n0, 1e-9, q.max(1.0)).unwrap();
        max_alpha_gap = max_alpha_gap.max((nearly.alpha_star - p / (p + n0)).abs());
    }
    let pass = max_capacity_gap <= 1e-12 && max_alpha_gap <= 1e-6;
    report_line(
        "04",
        "Costa limits",
        pass,
        &format!(
            "max |C - 1/2 log2(1+P/N0)| = {max_capacity_gap:.3e} bits, \
             max |alpha* - P/(P+N0)| = {max_alpha_gap:.3e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_tx_rx_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED + 5);
    let mut max_gap: f64 = 0.0;
    for _ in 0..200 {
        let cfg = random_config(&mut rng, 1);
        let noises: Vec<f64> = cfg.all_noises().collect();
        let base = capacity(&cfg).value;
        // Every assignment of the observation multiset across the two sides.
        for mask in 0..(1u32 << noises.len()) {
            let mut tx = Vec::new();
            let mut rx = Vec::new();
            for (i, &v) in noises.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    tx.push(v);
                } else {
                    rx.push(v);
                }
            }
            let permuted =
                ChannelConfig::new(cfg.p(), cfg.q(), cfg.n0(), tx, rx).unwrap();
            max_gap = max_gap.max((capacity(&permuted).value - base).abs());
        }
    }
    let pass = max_gap <= 1e-12;
    report_line(
        "05",
        "tx/rx exchangeability",
        pass,
        &format!("max capacity change over all side assignments = {max_gap:.3e} bits"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_fusion_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_CONFIG_SEED + 6);
    let mut max_gap: f64 = 0.0;
    let mut strict_failures = 0;
    for _ in 0..200 {
        let cfg = random_config(&mut rng, 2);
        let base = capacity(&cfg).value;
        max_gap = max_gap.max((capacity(&reduce_config(&cfg)).value - base).abs());

        // One extra finite-noise observation strictly helps when Q > 0.
        let mut rx = cfg.rx_noise().to_vec();
        rx.push(log_uniform(&mut rng, 1e-2, 1e2));
        let extended =
            ChannelConfig::new(cfg.p(), cfg.q(), cfg.n0(), cfg.tx_noise().to_vec(), rx).unwrap();
        if capacity(&extended).value <= base {
            strict_failures += 1;
        }
    }
    let pass = max_gap <= 1e-12 && strict_failures == 0;
    report_line(
        "06",
        "fusion equivalence",
        pass,
        &format!(
            "max |C(reduced) - C| = {max_gap:.3e} bits, {strict_failures}/200 non-increasing appends"
        ),
    );
    assert!(pass);
}

const MC_SEED: u64 = 20_201;
const MC_SAMPLES: usize = 1_000_000;

fn nominal_alpha_star() -> f64 {
    optimal_alpha(10.0, 5.0, 1.0, 2.0, 3.0).unwrap().alpha_star
}

#[test]
fn criterion_07_monte_carlo_agreement() {
    let start = Instant::now();
    let cfg = nominal();
    let c = capacity(&cfg).value;
    assert!((c - NOMINAL_CAPACITY_BITS).abs() < 1e-6);
    let est = estimate_rate_gap(&cfg, nominal_alpha_star(), MC_SAMPLES, MC_SEED).unwrap();
    let gap = (est.value - c).abs();
    let elapsed = start.elapsed();
    let pass = gap <= 0.01 && elapsed < Duration::from_secs(30);
    report_line(
        "07",
        "Monte Carlo agreement",
        pass,
        &format!(
            "|estimate - capacity| = {gap:.5} bits at 1e6 samples (se {:.5}), {elapsed:.2?}",
            est.std_error
        ),
    );
    assert!(pass, "gap {gap}, elapsed {elapsed:?}");
}

const LADDER_SEED: u64 = 4_242;
const LADDER_FRACS: [f64; 4] = [0.5, 0.8, 0.95, 1.2];
const LADDER_TRIALS: usize = 1000;

struct Ladder {
    reports: Vec<SimReport>,
    elapsed: Duration,
}

fn ladder() -> &'static Ladder {
    static LADDER: OnceLock<Ladder> = OnceLock::new();
    LADDER.get_or_init(|| {
        let start = Instant::now();
        let reports = run_ladder();
        Ladder { reports, elapsed: start.elapsed() }
    })
}

fn run_ladder() -> Vec<SimReport> {
    let cfg = nominal();
    let c = capacity(&cfg).value;
    let alpha = nominal_alpha_star();
    LADDER_FRACS
        .iter()
        .map(|frac| {
            let params =
                CodebookParams::auto(&cfg, 12, frac * c, alpha, DEFAULT_EPSILON, DEFAULT_POWER_SLACK)
                    .unwrap();
            run_trials(&cfg, &params, LADDER_TRIALS, LADDER_SEED).unwrap()
        })
        .collect()
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn criterion_08_achievability_ordering() {
    let ladder = ladder();
    let rates: Vec<f64> = ladder.reports.iter().map(|r| r.block_error_rate).collect();
    let mut ordered = true;
    for i in 0..rates.len() - 1 {
        let slack = 2.0
            * (binomial_se(rates[i], LADDER_TRIALS).powi(2)
                + binomial_se(rates[i + 1], LADDER_TRIALS).powi(2))
            .sqrt();
        if rates[i + 1] < rates[i] - slack {
            ordered = false;
        }
    }
    let above_half = rates[3] > 0.5;
    let within_time = ladder.elapsed < Duration::from_secs(120);
    let pass = ordered && above_half && within_time;
    report_line(
        "08",
        "achievability ordering",
        pass,
        &format!(
            "block error rates {rates:?} over {LADDER_FRACS:?} x C, {:.2?}",
            ladder.elapsed
        ),
    );
    assert!(pass, "rates {rates:?}, elapsed {:?}", ladder.elapsed);
}

#[test]
fn criterion_09_power_constraint() {
    let report = &ladder().reports[1]; // the 0.8 x C run
    let mean = report.mean_tx_power.expect("some encodings succeed at the defaults");
    let pass = (8.0..=11.0).contains(&mean);
    report_line(
        "09",
        "power constraint",
        pass,
        &format!(
            "mean ||x||^2/n = {mean:.3} over successful encodings (encode failure rate {:.3})",
            report.encode_failure_rate
        ),
    );
    assert!(pass, "mean power {mean}");
}

fn assert_bits_identical(a: &SimReport, b: &SimReport) {
    assert_eq!(a.trials, b.trials);
    assert_eq!(a.block_error_rate.to_bits(), b.block_error_rate.to_bits());
    assert_eq!(a.encode_failure_rate.to_bits(), b.encode_failure_rate.to_bits());
    assert_eq!(
        a.mean_tx_power.map(f64::to_bits),
        b.mean_tx_power.map(f64::to_bits)
    );
    assert_eq!(a.seed, b.seed);
}

#[test]
fn criterion_10_determinism() {
    let cfg = nominal();
    // Monte Carlo rerun (criterion 7 inputs).
    let a = estimate_rate_gap(&cfg, nominal_alpha_star(), MC_SAMPLES, MC_SEED).unwrap();
    let b = estimate_rate_gap(&cfg, nominal_alpha_star(), MC_SAMPLES, MC_SEED).unwrap();
    let mc_identical =
        a.value.to_bits() == b.value.to_bits() && a.std_error.to_bits() == b.std_error.to_bits();

    // Full ladder rerun (criteria 8 and 9 inputs).
    let rerun = run_ladder();
    for (x, y) in ladder().reports.iter().zip(&rerun) {
        assert_bits_identical(x, y);
    }
    let pass = mc_identical;
    report_line(
        "10",
        "determinism",
        pass,
        "Monte Carlo and simulation reruns reproduce bit-identical outputs",
    );
    assert!(pass);
}
