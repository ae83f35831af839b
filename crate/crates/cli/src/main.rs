//! Batch command-line surface of the forward-folding toolkit.
//!
//! Every subcommand reads and writes the canonical file formats, so the
//! whole pipeline — mock events, matrix building, compatibility tests,
//! likelihoods, fits, p-values, confidence scans and posterior chains —
//! can be scripted end to end. Stochastic commands require an explicit
//! `--seed` and are fully deterministic given their flags; `--threads`
//! changes only how fast the answer arrives.
//!
//! Exit codes: 0 on success, 1 on data or validation failures, 2 on usage
//! errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use foldmat::bayes;
use foldmat::binning::Binning;
use foldmat::compat::matrix_compatibility;
use foldmat::io;
use foldmat::likelihood::{CompositeHypothesis, LikelihoodMachine, LikelihoodMode};
use foldmat::mockexp::{self, MockModel};
use foldmat::pvalues::{self, FitConfig};
use foldmat::response::{ResponseBuilder, ResponseMatrixSet};

#[derive(Parser)]
#[command(
    name = "foldmat",
    version,
    about = "Forward-folding inference for binned counting experiments"
)]
struct Cli {
    /// Worker threads for replica loops (default: all cores); results do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mock-experiment event sample as CSV.
    Mock(MockArgs),
    /// Build a response-matrix set from simulated event files.
    Build(BuildArgs),
    /// Test whether two independently built matrices are compatible.
    Compat(CompatArgs),
    /// Log-likelihood of a fixed truth hypothesis given a bundle.
    Loglik(LoglikArgs),
    /// Maximum-likelihood fit of template weights.
    Fit(FitArgs),
    /// Toy-replica p-value of a fixed or fitted hypothesis.
    Pvalue(PvalueArgs),
    /// Likelihood-ratio p-value scan over one template weight.
    Scan(ScanArgs),
    /// Sample the posterior of template weights as a chain CSV.
    Posterior(PosteriorArgs),
    /// Check a publication bundle for internal consistency.
    Validate(ValidateArgs),
}

/// Truth model of the built-in mock experiment.
#[derive(Copy, Clone, ValueEnum)]
#[value(rename_all = "UPPER")]
enum ModelArg {
    /// Gaussian truth at (0.1, 0.2), uncorrelated.
    A,
    /// Gaussian truth at the origin with correlation 0.5.
    B,
}

/// How per-toy likelihoods are combined.
#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    /// Average the per-toy likelihoods.
    Marginal,
    /// Take the best toy.
    Profile,
}

impl From<ModeArg> for LikelihoodMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Marginal => LikelihoodMode::Marginal,
            ModeArg::Profile => LikelihoodMode::Profile,
        }
    }
}

/// A parsed `lo:hi:n` grid specification.
#[derive(Clone)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo:hi:n, got '{s}'"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("'{lo}' is not a number"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("'{hi}' is not a number"))?;
    let n: usize = n.parse().map_err(|_| format!("'{n}' is not a point count"))?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(format!("grid ends must be finite, got {lo}:{hi}"));
    }
    if n == 0 {
        return Err("a grid needs at least one point".into());
    }
    if n == 1 {
        if lo != hi {
            return Err("a single-point grid needs lo == hi".into());
        }
        return Ok(Grid(vec![lo]));
    }
    if hi <= lo {
        return Err(format!("grid needs hi > lo, got {lo}:{hi}"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok(Grid((0..n).map(|i| lo + step * i as f64).collect()))
}

/// Comma-separated positive proposal step scales.
#[derive(Clone)]
struct Scales(Vec<f64>);

fn parse_scales(s: &str) -> Result<Scales, String> {
    let values = s
        .split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|_| format!("'{p}' is not a number"))
        })
        .collect::<Result<Vec<f64>, String>>()?;
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(format!("step scales must be positive and finite, got {bad}"));
    }
    Ok(Scales(values))
}

#[derive(Args)]
struct MockArgs {
    /// Truth model to draw from.
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Number of truth events.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Output event CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    /// Reconstructed-space binning document.
    #[arg(long)]
    reco_binning: PathBuf,
    /// Truth-space binning document.
    #[arg(long)]
    truth_binning: PathBuf,
    /// Simulated event CSV files, filled in the order given.
    #[arg(long, num_args = 1.., required = true)]
    events: Vec<PathBuf>,
    /// Statistical toy matrices to sample per systematic toy.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stat_toys: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Output matrix-set JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompatArgs {
    /// Event CSV of the first builder.
    #[arg(long)]
    a: PathBuf,
    /// Event CSV of the second builder.
    #[arg(long)]
    b: PathBuf,
    /// Reconstructed-space binning (both sides unless overridden).
    #[arg(long)]
    reco_binning: PathBuf,
    /// Truth-space binning (both sides unless overridden).
    #[arg(long)]
    truth_binning: PathBuf,
    /// Reconstructed-space binning of the second builder, when different.
    #[arg(long)]
    reco_binning_b: Option<PathBuf>,
    /// Truth-space binning of the second builder, when different.
    #[arg(long)]
    truth_binning_b: Option<PathBuf>,
    /// Matrix-difference samples for the covariance estimate.
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    samples: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional histogram table (CSV) of the sampled squared distances.
    #[arg(long)]
    hist_out: Option<PathBuf>,
    /// Number of histogram bins.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    hist_bins: u64,
}

#[derive(Args)]
struct LoglikArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
    /// Truth hypothesis: JSON array in retained or full truth layout.
    #[arg(long)]
    truth: PathBuf,
    /// Toy-combination mode.
    #[arg(long, value_enum, default_value = "marginal")]
    mode: ModeArg,
    /// Also write a per-bin table of data vs folded prediction over toys.
    #[arg(long)]
    fold_table: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
    /// Truth-shape templates (JSON arrays), one weight parameter each.
    #[arg(long, num_args = 1.., required = true)]
    templates: Vec<PathBuf>,
    /// Toy-combination mode.
    #[arg(long, value_enum, default_value = "marginal")]
    mode: ModeArg,
    /// Add the bundle's background templates as a fixed component.
    #[arg(long)]
    include_background: bool,
    /// Optimizer start points.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    starts: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Also write the fit result as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(
    clap::ArgGroup::new("hypothesis")
        .required(true)
        .args(["truth", "templates"])
))]
struct PvalueArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
    /// Fixed truth hypothesis (JSON array) for a simple-hypothesis p-value.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Templates for a plug-in composite p-value.
    #[arg(long, num_args = 1..)]
    templates: Vec<PathBuf>,
    /// Toy-combination mode.
    #[arg(long, value_enum, default_value = "marginal")]
    mode: ModeArg,
    /// Data replicas.
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    replicas: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Optimizer start points per fit.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    starts: u64,
    /// Add the bundle's background templates as a fixed component.
    #[arg(long)]
    include_background: bool,
    /// Also write the result as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
    /// Truth-shape templates (JSON arrays), one weight parameter each.
    #[arg(long, num_args = 1.., required = true)]
    templates: Vec<PathBuf>,
    /// Toy-combination mode.
    #[arg(long, value_enum, default_value = "marginal")]
    mode: ModeArg,
    /// Index of the template weight to scan.
    #[arg(long, default_value_t = 0)]
    param: usize,
    /// Scan grid as lo:hi:n (n evenly spaced points, ends included).
    #[arg(long, value_parser = parse_grid)]
    grid: Grid,
    /// Data replicas per grid point.
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    replicas: u64,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Optimizer start points per fit.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    starts: u64,
    /// Add the bundle's background templates as a fixed component.
    #[arg(long)]
    include_background: bool,
    /// Output scan CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PosteriorArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
    /// Truth-shape templates (JSON arrays), one weight parameter each.
    #[arg(long, num_args = 1.., required = true)]
    templates: Vec<PathBuf>,
    /// Toy-combination mode.
    #[arg(long, value_enum, default_value = "marginal")]
    mode: ModeArg,
    /// Retained posterior samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Burn-in steps to discard.
    #[arg(long, default_value_t = 1000)]
    burn: u64,
    /// Comma-separated proposal step scales; calibrated automatically when
    /// omitted.
    #[arg(long, value_parser = parse_scales)]
    step_scales: Option<Scales>,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Add the bundle's background templates as a fixed component.
    #[arg(long)]
    include_background: bool,
    /// Output chain CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Publication-bundle manifest.
    #[arg(long)]
    bundle: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Mock(args) => cmd_mock(args),
        Command::Build(args) => cmd_build(args),
        Command::Compat(args) => cmd_compat(args),
        Command::Loglik(args) => cmd_loglik(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Pvalue(args) => cmd_pvalue(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Posterior(args) => cmd_posterior(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

// -------------------------------------------------------------------------
// Shared plumbing
// -------------------------------------------------------------------------

/// Variables to read from an event file: truth first, then any
/// reconstructed variables not already present.
fn joint_variables(truth: &Binning, reco: &Binning) -> Vec<String> {
    let mut variables = truth.variables().to_vec();
    for v in reco.variables() {
        if !variables.iter().any(|x| x == v) {
            variables.push(v.clone());
        }
    }
    variables
}

/// Reads event files in order and fills one response builder. The number
/// of systematic toys comes from the events' toy-weight columns (1 when
/// absent: the nominal only).
fn fill_builder(reco: &Binning, truth: &Binning, paths: &[PathBuf]) -> Result<ResponseBuilder> {
    let variables = joint_variables(truth, reco);
    let mut events = Vec::new();
    for path in paths {
        events.extend(
            io::read_events_csv(path, &variables)
                .with_context(|| format!("reading events from {}", path.display()))?,
        );
    }
    let n_sys = events
        .iter()
        .find_map(|e| e.toy_weights.as_ref().map(Vec::len))
        .unwrap_or(1);
    let mut builder = ResponseBuilder::new(reco.clone(), truth.clone(), n_sys)?;
    builder.fill_events(&events)?;
    Ok(builder)
}

/// Loads a bundle and refuses to analyze an inconsistent one.
fn load_checked_bundle(path: &Path) -> Result<io::PublicationBundle> {
    let bundle =
        io::load_bundle(path).with_context(|| format!("loading bundle {}", path.display()))?;
    let violations = io::validate_bundle(&bundle);
    if !violations.is_empty() {
        bail!(
            "inconsistent bundle {}:\n  {}",
            path.display(),
            violations.join("\n  ")
        );
    }
    Ok(bundle)
}

/// Builds the likelihood machine of a bundle.
fn machine(bundle: &io::PublicationBundle, mode: ModeArg) -> Result<LikelihoodMachine> {
    Ok(LikelihoodMachine::new(
        bundle.data.clone(),
        bundle.matrix_set.clone(),
        mode.into(),
    )?)
}

/// Accepts a truth vector in either the full or the retained layout and
/// returns the retained one.
fn to_retained(set: &ResponseMatrixSet, v: Vec<f64>) -> Result<Vec<f64>> {
    if v.len() == set.n_truth_total() && set.n_truth_total() != set.n_filled() {
        Ok(set.reduce_truth_vector(&v)?)
    } else {
        Ok(v)
    }
}

/// Reads template files and assembles the composite hypothesis, optionally
/// with the bundle's summed background templates as a fixed component.
fn build_hypothesis(
    bundle: &io::PublicationBundle,
    template_paths: &[PathBuf],
    include_background: bool,
) -> Result<CompositeHypothesis> {
    let set = &bundle.matrix_set;
    let templates = template_paths
        .iter()
        .map(|path| {
            let raw = io::read_histogram(path)
                .with_context(|| format!("reading template {}", path.display()))?;
            to_retained(set, raw)
        })
        .collect::<Result<Vec<_>>>()?;
    if include_background {
        if bundle.background_templates.is_empty() {
            bail!("--include-background requires background templates in the bundle");
        }
        let mut fixed = vec![0.0; set.n_filled()];
        for template in &bundle.background_templates {
            for (f, v) in fixed.iter_mut().zip(template) {
                *f += v;
            }
        }
        Ok(CompositeHypothesis::fixed_plus_template(fixed, templates)?)
    } else {
        Ok(CompositeHypothesis::template_linear(templates)?)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// -------------------------------------------------------------------------
// Subcommands
// -------------------------------------------------------------------------

fn cmd_mock(args: MockArgs) -> Result<()> {
    let model = match args.model {
        ModelArg::A => MockModel::model_a(),
        ModelArg::B => MockModel::model_b(),
    };
    let mut events = mockexp::generate_truth(&model, args.n as usize, args.seed)?;
    mockexp::apply_detector(&mut events, args.seed)?;
    let variables: Vec<String> = ["true_x", "true_y", "reco_x"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    io::write_events_csv(&args.out, &events, &variables)?;
    Ok(())
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    let reco = io::read_binning(&args.reco_binning)?;
    let truth = io::read_binning(&args.truth_binning)?;
    let builder = fill_builder(&reco, &truth, &args.events)?;
    let set = builder.sample_toy_matrices(args.stat_toys as usize, args.seed)?;
    io::write_matrix_set(&args.out, &set)?;
    Ok(())
}

fn cmd_compat(args: CompatArgs) -> Result<()> {
    let reco_a = io::read_binning(&args.reco_binning)?;
    let truth_a = io::read_binning(&args.truth_binning)?;
    let reco_b = match &args.reco_binning_b {
        Some(path) => io::read_binning(path)?,
        None => reco_a.clone(),
    };
    let truth_b = match &args.truth_binning_b {
        Some(path) => io::read_binning(path)?,
        None => truth_a.clone(),
    };
    let a = fill_builder(&reco_a, &truth_a, std::slice::from_ref(&args.a))?;
    let b = fill_builder(&reco_b, &truth_b, std::slice::from_ref(&args.b))?;
    let report = matrix_compatibility(&a, &b, args.samples as usize, args.seed)?;
    io::write_compat_report(&args.out, &report)?;
    if let Some(hist_path) = &args.hist_out {
        write_d2_histogram(hist_path, &report.sample_d_sq, args.hist_bins as usize)?;
    }
    Ok(())
}

/// Histogram table of sampled squared distances: `lo,hi,count` rows over
/// equal bins from zero to the sample maximum.
fn write_d2_histogram(path: &Path, samples: &[f64], n_bins: usize) -> Result<()> {
    let top = samples.iter().copied().fold(0.0_f64, f64::max).max(1e-12);
    let width = top / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &s in samples {
        let b = ((s / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let mut out = String::from("lo,hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        writeln!(out, "{},{},{c}", i as f64 * width, (i + 1) as f64 * width)
            .expect("string writes cannot fail");
    }
    write_file(path, &out)
}

fn cmd_loglik(args: LoglikArgs) -> Result<()> {
    let bundle = load_checked_bundle(&args.bundle)?;
    let raw = io::read_histogram(&args.truth)
        .with_context(|| format!("reading truth hypothesis {}", args.truth.display()))?;
    let mu = to_retained(&bundle.matrix_set, raw)?;
    let lm = machine(&bundle, args.mode)?;
    let ll = lm.log_likelihood(&mu)?;
    if let Some(table) = &args.fold_table {
        write_fold_table(table, &bundle, &mu)?;
    }
    println!("{ll}");
    Ok(())
}

/// Per-bin comparison table: observed count vs the mean and standard
/// deviation of the folded prediction over the toy matrices.
fn write_fold_table(path: &Path, bundle: &io::PublicationBundle, mu: &[f64]) -> Result<()> {
    let set = &bundle.matrix_set;
    let n_toys = set.n_matrices();
    let folded = (0..n_toys)
        .map(|t| set.fold(t, mu))
        .collect::<foldmat::Result<Vec<_>>>()?;
    let mut out = String::from("bin,data,pred_mean,pred_std\n");
    for i in 0..set.n_reco() {
        let mean = folded.iter().map(|nu| nu[i]).sum::<f64>() / n_toys as f64;
        let std = if n_toys > 1 {
            let var = folded.iter().map(|nu| (nu[i] - mean).powi(2)).sum::<f64>()
                / (n_toys - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        writeln!(out, "{i},{},{mean},{std}", bundle.data[i]).expect("string writes cannot fail");
    }
    write_file(path, &out)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let bundle = load_checked_bundle(&args.bundle)?;
    let hyp = build_hypothesis(&bundle, &args.templates, args.include_background)?;
    let lm = machine(&bundle, args.mode)?;
    let fit = lm.max_log_likelihood(&hyp, args.starts as usize, args.seed)?;
    let doc = serde_json::json!({
        "log_likelihood": fit.log_likelihood,
        "theta": fit.theta,
        "converged": fit.converged,
    });
    let text = serde_json::to_string_pretty(&doc).expect("fit serialization cannot fail");
    if let Some(out) = &args.out {
        write_file(out, &(text.clone() + "\n"))?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_pvalue(args: PvalueArgs) -> Result<()> {
    let bundle = load_checked_bundle(&args.bundle)?;
    let lm = machine(&bundle, args.mode)?;
    let result = if let Some(truth_path) = &args.truth {
        let raw = io::read_histogram(truth_path)
            .with_context(|| format!("reading truth hypothesis {}", truth_path.display()))?;
        let mu = to_retained(&bundle.matrix_set, raw)?;
        pvalues::likelihood_p_value(&lm, &mu, args.replicas as usize, args.seed)?
    } else {
        let hyp = build_hypothesis(&bundle, &args.templates, args.include_background)?;
        let config = FitConfig {
            n_starts: args.starts as usize,
        };
        pvalues::max_likelihood_p_value(&lm, &hyp, args.replicas as usize, args.seed, &config)?
    };
    if let Some(out) = &args.out {
        io::write_pvalue_json(out, &result)?;
    }
    println!("{}", result.p);
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<()> {
    let bundle = load_checked_bundle(&args.bundle)?;
    let hyp = build_hypothesis(&bundle, &args.templates, args.include_background)?;
    let lm = machine(&bundle, args.mode)?;
    let config = FitConfig {
        n_starts: args.starts as usize,
    };
    let rows = pvalues::confidence_scan(
        &lm,
        &hyp,
        args.param,
        &args.grid.0,
        args.replicas as usize,
        args.seed,
        &config,
    )?;
    io::write_scan_csv(&args.out, &rows)?;
    Ok(())
}

fn cmd_posterior(args: PosteriorArgs) -> Result<()> {
    let bundle = load_checked_bundle(&args.bundle)?;
    let hyp = build_hypothesis(&bundle, &args.templates, args.include_background)?;
    let lm = machine(&bundle, args.mode)?;
    // Flat prior over the hypothesis's own support: the sampler's bound
    // reflection provides the truncation.
    let log_prior = |_: &[f64]| 0.0;
    let scales = match &args.step_scales {
        Some(s) => s.0.clone(),
        None => bayes::calibrate_step_scales(&lm, &hyp, log_prior, args.seed)?,
    };
    let chain = bayes::sample_posterior(
        &lm,
        &hyp,
        log_prior,
        args.samples as usize,
        args.burn as usize,
        &scales,
        args.seed,
    )?;
    io::write_chain_csv(&args.out, &chain)?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let bundle = io::load_bundle(&args.bundle)
        .with_context(|| format!("loading bundle {}", args.bundle.display()))?;
    let violations = io::validate_bundle(&bundle);
    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        for v in &violations {
            eprintln!("{v}");
        }
        bail!("bundle failed {} consistency check(s)", violations.len());
    }
}
