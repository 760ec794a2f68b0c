//! Command-line front end over the library: closed-form capacities with
//! oracle cross-checks, parameter sweeps, coefficient optimization, fusion,
//! Monte Carlo estimation, and the binning simulator.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 verification
//! failure (oracles disagree beyond tolerance), 4 resource guardrail.
//! Randomized commands require an explicit `--seed`. Flags override values
//! from an optional `--config` TOML file; unknown keys in the file are
//! rejected by name.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::capacity::{
    achievable_rate, capacity, capacity_via_determinants, fuse_observations, optimal_alpha,
    optimal_alpha_numeric, reduce_config, residual_fraction, CapacityError, ChannelConfig,
};
use crate::gaussian::{build_joint_spec, observation_labels};
use crate::mc;
use crate::sim;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;
pub const EXIT_GUARDRAIL: i32 = 4;

/// Agreement tolerance between the closed form and the determinant oracle.
const DETERMINANT_TOLERANCE_BITS: f64 = 1e-9;
/// Agreement tolerance between closed forms and Monte Carlo estimates.
const MC_TOLERANCE_BITS: f64 = mc::DEFAULT_TOLERANCE_BITS;
/// Agreement tolerance between the two coefficient optimizers.
const ALPHA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "dirtypaper",
    version,
    about = "Capacity toolkit for the Gaussian channel with noisy interference knowledge",
    after_help = "Channel parameters default to the worked example P=10, Q=5, N0=1; \
                  commands that need observations default to one per side (N1=2, N2=3)."
)]
struct Cli {
    /// Output format (env: DIRTYPAPER_FORMAT)
    #[arg(long, global = true, value_enum, env = "DIRTYPAPER_FORMAT")]
    format: Option<OutputFormat>,
    /// TOML file with default parameters; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel capacity and residual interference fraction
    Capacity(CapacityCmd),
    /// CSV curve of capacity (or rate) against one swept parameter
    Sweep(SweepCmd),
    /// Optimal precoding coefficient, closed form vs numeric search
    Alpha(AlphaCmd),
    /// Fuse multiple observation noises into one effective variance
    Fuse(FuseCmd),
    /// Monte Carlo verification of the rate and the converse tightness
    Mc(McCmd),
    /// Random-binning block-error simulation at a fraction of capacity
    Simulate(SimulateCmd),
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// Transmit power P
    #[arg(long)]
    p: Option<f64>,
    /// Interference power Q
    #[arg(long)]
    q: Option<f64>,
    /// Channel noise variance N0
    #[arg(long)]
    n0: Option<f64>,
    /// Transmitter observation noise variances, comma separated
    #[arg(long, value_delimiter = ',')]
    tx_noise: Option<Vec<f64>>,
    /// Receiver observation noise variances, comma separated
    #[arg(long, value_delimiter = ',')]
    rx_noise: Option<Vec<f64>>,
}

#[derive(Args)]
struct CapacityCmd {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Cross-check the closed form against the determinant oracle
    #[arg(long)]
    verify: bool,
    /// Also cross-check against a Monte Carlo estimate (needs --seed)
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    channel: ChannelArgs,
    /// One of: p, q, n0, tx-noise[i], rx-noise[i], alpha
    #[arg(long)]
    param: Option<String>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    /// Number of grid points (1 emits a single row)
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct AlphaCmd {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n0: Option<f64>,
    /// Transmitter observation noise N1
    #[arg(long)]
    n1: Option<f64>,
    /// Receiver observation noise N2
    #[arg(long)]
    n2: Option<f64>,
    /// Argument tolerance for the numeric search
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct FuseCmd {
    /// Observation noise variances to fuse, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    noises: Vec<f64>,
}

#[derive(Args)]
struct McCmd {
    #[command(flatten)]
    channel: ChannelArgs,
    /// RNG seed (required: no hidden nondeterminism)
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    /// Precoding coefficient; defaults to the optimal one
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Block length
    #[arg(long)]
    n: Option<usize>,
    /// Simulation rate as a fraction of capacity
    #[arg(long)]
    rate_frac: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// RNG seed (required: no hidden nondeterminism)
    #[arg(long)]
    seed: u64,
    /// Precoding coefficient; defaults to the optimal one
    #[arg(long)]
    alpha: Option<f64>,
    /// Encoder typicality slack
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fractional allowance on the power constraint
    #[arg(long)]
    power_slack: Option<f64>,
}

/// Optional defaults loaded from `--config`. Unknown keys are rejected with
/// the offending key named in the error.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    p: Option<f64>,
    q: Option<f64>,
    n0: Option<f64>,
    tx_noise: Option<Vec<f64>>,
    rx_noise: Option<Vec<f64>>,
    format: Option<OutputFormat>,
    samples: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    tol: Option<f64>,
    n1: Option<f64>,
    n2: Option<f64>,
    noises: Option<Vec<f64>>,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    sim: SimSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    param: Option<String>,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    n: Option<usize>,
    rate_frac: Option<f64>,
    trials: Option<usize>,
    epsilon: Option<f64>,
    power_slack: Option<f64>,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn verification(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFICATION, message: message.into() }
    }

    fn guardrail(message: impl Into<String>) -> Self {
        Self { code: EXIT_GUARDRAIL, message: message.into() }
    }
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<crate::gaussian::GaussianError> for CliError {
    fn from(e: crate::gaussian::GaussianError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<mc::McError> for CliError {
    fn from(e: mc::McError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        match e {
            sim::SimError::SizeOverflow { .. } | sim::SimError::ExponentGuardrail { .. } => {
                CliError::guardrail(e.to_string())
            }
            other => CliError::usage(other.to_string()),
        }
    }
}

/// Parses arguments, runs one command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<RunConfigFile>(&raw)
                .map_err(|e| CliError::usage(format!("invalid config file: {e}")))?
        }
        None => RunConfigFile::default(),
    };
    let format = cli.format.or(file.format).unwrap_or(OutputFormat::Text);
    match cli.command {
        Command::Capacity(cmd) => cmd_capacity(cmd, &file, format),
        Command::Sweep(cmd) => cmd_sweep(cmd, &file),
        Command::Alpha(cmd) => cmd_alpha(cmd, &file, format),
        Command::Fuse(cmd) => cmd_fuse(cmd, &file, format),
        Command::Mc(cmd) => cmd_mc(cmd, &file, format),
        Command::Simulate(cmd) => cmd_simulate(cmd, &file, format),
    }
}

/// Merges channel flags over config-file values over the built-in defaults.
fn channel_config(
    args: &ChannelArgs,
    file: &RunConfigFile,
    default_observations: bool,
) -> Result<ChannelConfig, CliError> {
    let p = args.p.or(file.p).unwrap_or(10.0);
    let q = args.q.or(file.q).unwrap_or(5.0);
    let n0 = args.n0.or(file.n0).unwrap_or(1.0);
    let tx = args
        .tx_noise
        .clone()
        .or_else(|| file.tx_noise.clone())
        .unwrap_or_else(|| if default_observations { vec![2.0] } else { vec![] });
    let rx = args
        .rx_noise
        .clone()
        .or_else(|| file.rx_noise.clone())
        .unwrap_or_else(|| if default_observations { vec![3.0] } else { vec![] });
    Ok(ChannelConfig::new(p, q, n0, tx, rx)?)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct McSummary {
    value_bits: f64,
    std_error_bits: f64,
    samples: usize,
    seed: u64,
    target: String,
}

impl From<mc::McEstimate> for McSummary {
    fn from(e: mc::McEstimate) -> Self {
        Self {
            value_bits: e.value,
            std_error_bits: e.std_error,
            samples: e.samples,
            seed: e.seed,
            target: e.target_label,
        }
    }
}

#[derive(Serialize)]
struct VerifySection {
    closed_form_bits: f64,
    determinant_bits: Option<f64>,
    determinant_note: Option<String>,
    monte_carlo: Option<McSummary>,
    max_disagreement_bits: f64,
    tolerance_bits: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CapacityOutput {
    capacity_bits: f64,
    mu: f64,
    config: ChannelConfig,
    verify: Option<VerifySection>,
}

fn cmd_capacity(cmd: CapacityCmd, file: &RunConfigFile, format: OutputFormat) -> Result<(), CliError> {
    let cfg = channel_config(&cmd.channel, file, false)?;
    let closed = capacity(&cfg);
    let mu = residual_fraction(&cfg).mu;

    let verify = if cmd.verify {
        let mut max_gap: f64 = 0.0;
        let (det_bits, det_note) = match capacity_via_determinants(&cfg) {
            Ok(r) => {
                max_gap = max_gap.max((r.value - closed.value).abs());
                (Some(r.value), None)
            }
            // Degenerate joint covariance: the closed form stands alone.
            Err(e) => (None, Some(e.to_string())),
        };
        let monte_carlo = match cmd.mc_samples {
            Some(samples) => {
                let seed = cmd
                    .seed
                    .or(file.seed)
                    .ok_or_else(|| CliError::usage("--mc-samples requires --seed"))?;
                let spec = build_joint_spec(&cfg, None)?;
                let obs = observation_labels(&cfg);
                let mut b: Vec<&str> = vec!["Y"];
                b.extend(obs.iter().map(|s| s.as_str()));
                let est = mc::estimate_mi(&spec, &["X"], &b, samples, seed)?;
                max_gap = max_gap.max((est.value - closed.value).abs());
                Some(McSummary::from(est))
            }
            None => None,
        };
        let mc_ok = monte_carlo
            .as_ref()
            .map(|m| (m.value_bits - closed.value).abs() <= MC_TOLERANCE_BITS)
            .unwrap_or(true);
        let det_ok = det_bits
            .map(|d| (d - closed.value).abs() <= DETERMINANT_TOLERANCE_BITS)
            .unwrap_or(true);
        Some(VerifySection {
            closed_form_bits: closed.value,
            determinant_bits: det_bits,
            determinant_note: det_note,
            monte_carlo,
            max_disagreement_bits: max_gap,
            tolerance_bits: DETERMINANT_TOLERANCE_BITS,
            pass: mc_ok && det_ok,
        })
    } else {
        None
    };

    let out = CapacityOutput { capacity_bits: closed.value, mu, config: cfg.clone(), verify };
    match format {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv => {
            println!("p,q,n0,tx_noise,rx_noise,mu,capacity_bits");
            println!(
                "{},{},{},{},{},{},{}",
                cfg.p(),
                cfg.q(),
                cfg.n0(),
                join(cfg.tx_noise()),
                join(cfg.rx_noise()),
                mu,
                closed.value
            );
        }
        OutputFormat::Text => {
            println!("capacity_bits  {}", closed.value);
            println!("mu             {mu}");
            if let Some(v) = &out.verify {
                match v.determinant_bits {
                    Some(d) => println!("determinant    {d}"),
                    None => println!(
                        "determinant    unavailable ({})",
                        v.determinant_note.as_deref().unwrap_or("degenerate")
                    ),
                }
                if let Some(m) = &v.monte_carlo {
                    println!(
                        "monte_carlo    {} +/- {} ({} samples, seed {})",
                        m.value_bits, m.std_error_bits, m.samples, m.seed
                    );
                }
                println!("verify         {}", if v.pass { "PASS" } else { "FAIL" });
            }
        }
    }
    if let Some(v) = &out.verify {
        if !v.pass {
            return Err(CliError::verification(format!(
                "oracle disagreement beyond tolerance (max gap {} bits)",
                v.max_disagreement_bits
            )));
        }
    }
    Ok(())
}

enum SweepParam {
    P,
    Q,
    N0,
    TxNoise(usize),
    RxNoise(usize),
    Alpha,
}

fn parse_sweep_param(name: &str) -> Result<SweepParam, CliError> {
    let indexed = |inner: &str| -> Option<usize> { inner.parse().ok() };
    match name {
        "p" => Ok(SweepParam::P),
        "q" => Ok(SweepParam::Q),
        "n0" => Ok(SweepParam::N0),
        "alpha" => Ok(SweepParam::Alpha),
        _ => {
            if let Some(rest) = name.strip_prefix("tx-noise[").and_then(|s| s.strip_suffix(']')) {
                if let Some(i) = indexed(rest) {
                    return Ok(SweepParam::TxNoise(i));
                }
            }
            if let Some(rest) = name.strip_prefix("rx-noise[").and_then(|s| s.strip_suffix(']')) {
                if let Some(i) = indexed(rest) {
                    return Ok(SweepParam::RxNoise(i));
                }
            }
            Err(CliError::usage(format!(
                "unknown sweep parameter `{name}` (expected p, q, n0, tx-noise[i], rx-noise[i], alpha)"
            )))
        }
    }
}

fn cmd_sweep(cmd: SweepCmd, file: &RunConfigFile) -> Result<(), CliError> {
    let base = channel_config(&cmd.channel, file, false)?;
    let name = cmd
        .param
        .clone()
        .or_else(|| file.sweep.param.clone())
        .ok_or_else(|| CliError::usage("sweep needs --param"))?;
    let param = parse_sweep_param(&name)?;
    let from = cmd.from.or(file.sweep.from).ok_or_else(|| CliError::usage("sweep needs --from"))?;
    let to = cmd.to.or(file.sweep.to).ok_or_else(|| CliError::usage("sweep needs --to"))?;
    let steps =
        cmd.steps.or(file.sweep.steps).ok_or_else(|| CliError::usage("sweep needs --steps"))?;
    if steps == 0 {
        return Err(CliError::usage("sweep needs at least one step"));
    }
    if !from.is_finite() || !to.is_finite() {
        return Err(CliError::usage("sweep range must be finite"));
    }

    let with_rate = matches!(param, SweepParam::Alpha);
    if with_rate {
        // The rate column needs the single-pair precoding formula.
        base.require_single_pair().map_err(|_| {
            CliError::usage(
                "sweeping alpha needs exactly one observation per side, e.g. --tx-noise 2 --rx-noise 3",
            )
        })?;
    }

    let header = if with_rate {
        "param,value,capacity_bits,mu,rate_bits"
    } else {
        "param,value,capacity_bits,mu"
    };
    println!("{header}");
    for k in 0..steps {
        let value = if steps == 1 {
            from
        } else {
            from + (to - from) * k as f64 / (steps - 1) as f64
        };
        let cfg = match &param {
            SweepParam::P => ChannelConfig::new(
                value,
                base.q(),
                base.n0(),
                base.tx_noise().to_vec(),
                base.rx_noise().to_vec(),
            )?,
            SweepParam::Q => ChannelConfig::new(
                base.p(),
                value,
                base.n0(),
                base.tx_noise().to_vec(),
                base.rx_noise().to_vec(),
            )?,
            SweepParam::N0 => ChannelConfig::new(
                base.p(),
                base.q(),
                value,
                base.tx_noise().to_vec(),
                base.rx_noise().to_vec(),
            )?,
            SweepParam::TxNoise(i) => {
                let mut tx = base.tx_noise().to_vec();
                let slot = tx.get_mut(*i).ok_or_else(|| {
                    CliError::usage(format!("tx-noise[{i}] is out of range for this config"))
                })?;
                *slot = value;
                ChannelConfig::new(base.p(), base.q(), base.n0(), tx, base.rx_noise().to_vec())?
            }
            SweepParam::RxNoise(i) => {
                let mut rx = base.rx_noise().to_vec();
                let slot = rx.get_mut(*i).ok_or_else(|| {
                    CliError::usage(format!("rx-noise[{i}] is out of range for this config"))
                })?;
                *slot = value;
                ChannelConfig::new(base.p(), base.q(), base.n0(), base.tx_noise().to_vec(), rx)?
            }
            SweepParam::Alpha => base.clone(),
        };
        let cap = capacity(&cfg);
        let mu = residual_fraction(&cfg).mu;
        if with_rate {
            let rate = achievable_rate(&cfg, value)?;
            println!("{name},{value},{},{mu},{}", cap.value, rate.value);
        } else {
            println!("{name},{value},{},{mu}", cap.value);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AlphaOutput {
    p: f64,
    q: f64,
    n0: f64,
    n1: f64,
    n2: f64,
    alpha_closed_form: f64,
    alpha_numeric: f64,
    disagreement: f64,
    agreement_tolerance: f64,
    rate_at_alpha_star_bits: f64,
    pass: bool,
}

fn cmd_alpha(cmd: AlphaCmd, file: &RunConfigFile, format: OutputFormat) -> Result<(), CliError> {
    let p = cmd.p.or(file.p).unwrap_or(10.0);
    let q = cmd.q.or(file.q).unwrap_or(5.0);
    let n0 = cmd.n0.or(file.n0).unwrap_or(1.0);
    let n1 = cmd.n1.or(file.n1).unwrap_or(2.0);
    let n2 = cmd.n2.or(file.n2).unwrap_or(3.0);
    let tol = cmd.tol.or(file.tol).unwrap_or(1e-9);
    let closed = optimal_alpha(p, q, n0, n1, n2)?;
    let numeric = optimal_alpha_numeric(p, q, n0, n1, n2, tol)?;
    let disagreement = (closed.alpha_star - numeric.alpha_star).abs();
    let out = AlphaOutput {
        p,
        q,
        n0,
        n1,
        n2,
        alpha_closed_form: closed.alpha_star,
        alpha_numeric: numeric.alpha_star,
        disagreement,
        agreement_tolerance: ALPHA_TOLERANCE,
        rate_at_alpha_star_bits: closed.rate_at_alpha_star,
        pass: disagreement <= ALPHA_TOLERANCE,
    };
    match format {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv => {
            println!("p,q,n0,n1,n2,alpha_closed_form,alpha_numeric,disagreement,rate_bits");
            println!(
                "{p},{q},{n0},{n1},{n2},{},{},{},{}",
                out.alpha_closed_form, out.alpha_numeric, disagreement, out.rate_at_alpha_star_bits
            );
        }
        OutputFormat::Text => {
            println!("alpha_closed_form  {}", out.alpha_closed_form);
            println!("alpha_numeric      {}", out.alpha_numeric);
            println!("disagreement       {disagreement}");
            println!("rate_bits          {}", out.rate_at_alpha_star_bits);
            println!("agreement          {}", if out.pass { "PASS" } else { "FAIL" });
        }
    }
    if out.pass {
        Ok(())
    } else {
        Err(CliError::verification(format!(
            "optimizers disagree by {disagreement} (tolerance {ALPHA_TOLERANCE})"
        )))
    }
}

#[derive(Serialize)]
struct FuseOutput {
    noises: Vec<f64>,
    weights: Vec<f64>,
    effective_variance: f64,
}

fn cmd_fuse(cmd: FuseCmd, file: &RunConfigFile, format: OutputFormat) -> Result<(), CliError> {
    let noises = if cmd.noises.is_empty() {
        file.noises.clone().unwrap_or_default()
    } else {
        cmd.noises.clone()
    };
    let fused = fuse_observations(&noises)?;
    let out = FuseOutput {
        noises,
        weights: fused.weights.clone(),
        effective_variance: fused.effective_variance,
    };
    match format {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv => {
            println!("noises,weights,effective_variance");
            println!("{},{},{}", join(&out.noises), join(&out.weights), out.effective_variance);
        }
        OutputFormat::Text => {
            println!("weights             {}", join(&out.weights));
            println!("effective_variance  {}", out.effective_variance);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct McCheck {
    estimate: McSummary,
    analytic_bits: f64,
    diff_bits: f64,
    tolerance_bits: f64,
    pass: bool,
}

#[derive(Serialize)]
struct McCmdOutput {
    config: ChannelConfig,
    alpha: f64,
    rate_gap: McCheck,
    tightness: TightnessCheck,
}

#[derive(Serialize)]
struct TightnessCheck {
    estimate: McSummary,
    std_error_multiple: f64,
    pass: bool,
}

fn cmd_mc(cmd: McCmd, file: &RunConfigFile, format: OutputFormat) -> Result<(), CliError> {
    let cfg = reduce_config(&channel_config(&cmd.channel, file, true)?);
    let (n1, n2) = cfg.require_single_pair().map_err(|_| {
        CliError::usage("mc needs at least one observation on each side (defaults provide them)")
    })?;
    let samples = cmd.samples.or(file.samples).unwrap_or(mc::DEFAULT_SAMPLES);
    let seed = cmd.seed;
    let alpha = match cmd.alpha.or(file.alpha) {
        Some(a) => a,
        None => optimal_alpha(cfg.p(), cfg.q(), cfg.n0(), n1, n2)?.alpha_star,
    };

    let gap = mc::estimate_rate_gap(&cfg, alpha, samples, seed)?;
    let analytic = achievable_rate(&cfg, alpha)?.value;
    let diff = (gap.value - analytic).abs();
    let rate_gap = McCheck {
        estimate: gap.into(),
        analytic_bits: analytic,
        diff_bits: diff,
        tolerance_bits: MC_TOLERANCE_BITS,
        pass: diff <= MC_TOLERANCE_BITS,
    };

    let tight = mc::verify_tightness(&cfg, samples, seed)?;
    let tightness = TightnessCheck {
        pass: tight.compatible_with_zero(4.0),
        estimate: tight.into(),
        std_error_multiple: 4.0,
    };

    let out = McCmdOutput { config: cfg, alpha, rate_gap, tightness };
    match format {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv => {
            println!("alpha,rate_gap_bits,rate_gap_se,analytic_bits,diff_bits,tightness_bits,tightness_se,samples,seed");
            println!(
                "{},{},{},{},{},{},{},{samples},{seed}",
                out.alpha,
                out.rate_gap.estimate.value_bits,
                out.rate_gap.estimate.std_error_bits,
                out.rate_gap.analytic_bits,
                out.rate_gap.diff_bits,
                out.tightness.estimate.value_bits,
                out.tightness.estimate.std_error_bits,
            );
        }
        OutputFormat::Text => {
            println!("alpha          {}", out.alpha);
            println!(
                "rate_gap       {} +/- {} (analytic {}, diff {})",
                out.rate_gap.estimate.value_bits,
                out.rate_gap.estimate.std_error_bits,
                out.rate_gap.analytic_bits,
                out.rate_gap.diff_bits
            );
            println!(
                "tightness      {} +/- {}",
                out.tightness.estimate.value_bits, out.tightness.estimate.std_error_bits
            );
            println!(
                "checks         rate_gap={} tightness={}",
                if out.rate_gap.pass { "PASS" } else { "FAIL" },
                if out.tightness.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    if !out.rate_gap.pass {
        return Err(CliError::verification(format!(
            "Monte Carlo rate estimate differs from the closed form by {} bits",
            out.rate_gap.diff_bits
        )));
    }
    if !out.tightness.pass {
        return Err(CliError::verification(
            "I(X; observations) is not statistically compatible with zero",
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateOutput {
    config: ChannelConfig,
    capacity_bits: f64,
    rate_frac: f64,
    rate_bits: f64,
    alpha: f64,
    report: sim::SimReport,
}

fn cmd_simulate(cmd: SimulateCmd, file: &RunConfigFile, format: OutputFormat) -> Result<(), CliError> {
    let cfg = reduce_config(&channel_config(&cmd.channel, file, true)?);
    let (n1, n2) = cfg.require_single_pair().map_err(|_| {
        CliError::usage("simulate needs at least one observation on each side (defaults provide them)")
    })?;
    let n = cmd.n.or(file.sim.n).unwrap_or(sim::DEFAULT_BLOCK_LENGTH);
    let rate_frac = cmd.rate_frac.or(file.sim.rate_frac).unwrap_or(0.8);
    let trials = cmd.trials.or(file.sim.trials).unwrap_or(sim::DEFAULT_TRIALS);
    let epsilon = cmd.epsilon.or(file.sim.epsilon).unwrap_or(sim::DEFAULT_EPSILON);
    let power_slack = cmd.power_slack.or(file.sim.power_slack).unwrap_or(sim::DEFAULT_POWER_SLACK);
    if !(rate_frac >= 0.0) {
        return Err(CliError::usage("rate fraction must be nonnegative"));
    }
    let alpha = match cmd.alpha.or(file.alpha) {
        Some(a) => a,
        None => optimal_alpha(cfg.p(), cfg.q(), cfg.n0(), n1, n2)?.alpha_star,
    };
    let capacity_bits = capacity(&cfg).value;
    let rate_bits = rate_frac * capacity_bits;
    let params = sim::CodebookParams::auto(&cfg, n, rate_bits, alpha, epsilon, power_slack)?;
    let report = sim::run_trials(&cfg, &params, trials, cmd.seed)?;
    let out = SimulateOutput { config: cfg, capacity_bits, rate_frac, rate_bits, alpha, report };
    match format {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv => {
            println!(
                "n,rate_frac,rate_bits,capacity_bits,alpha,trials,block_error_rate,encode_failure_rate,mean_tx_power,seed"
            );
            println!(
                "{n},{rate_frac},{rate_bits},{capacity_bits},{alpha},{},{},{},{},{}",
                out.report.trials,
                out.report.block_error_rate,
                out.report.encode_failure_rate,
                out.report.mean_tx_power.map(|p| p.to_string()).unwrap_or_default(),
                out.report.seed
            );
        }
        OutputFormat::Text => {
            println!("capacity_bits        {capacity_bits}");
            println!("rate_bits            {rate_bits} ({rate_frac} x capacity)");
            println!("alpha                {alpha}");
            println!(
                "codebook             {} bins x {} words, n = {n}",
                out.report.params.bin_count, out.report.params.codewords_per_bin
            );
            println!("block_error_rate     {}", out.report.block_error_rate);
            println!("encode_failure_rate  {}", out.report.encode_failure_rate);
            match out.report.mean_tx_power {
                Some(p) => println!("mean_tx_power        {p}"),
                None => println!("mean_tx_power        n/a (no successful encodings)"),
            }
        }
    }
    Ok(())
}
