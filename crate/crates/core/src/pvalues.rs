//! Frequentist toy-Monte-Carlo p-values and confidence scans.
//!
//! Replica datasets are drawn from the forward-folded model itself: each
//! replica picks one toy matrix uniformly at random and draws independent
//! Poisson counts from the folded means. P-values count how often a replica
//! statistic is at most the observed one, with add-one smoothing
//! `(k + 1) / (N + 1)` so the estimate is never zero and stays conservative
//! under ties. Replica fits run in parallel; every replica derives its own
//! RNG stream from the caller's seed and the replica index, so results do
//! not depend on the thread count.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{combine_toys, CompositeHypothesis, FoldedFit, LikelihoodMachine};
use crate::response::ResponseMatrixSet;
use crate::rng::{derive_seed, stream_rng};
use crate::special::ln_factorial;

/// RNG stream tag for replica data generation.
const STREAM_TOY_DATA: u64 = 0xDA7A;
/// Seed-derivation tag for the observed-data fit.
const TAG_OBSERVED_FIT: u64 = 0x0B5;
/// Seed-derivation tag for per-replica refits.
const TAG_REPLICA_FIT: u64 = 0x4EF1;
/// Seed-derivation tag for per-grid-point scans.
const TAG_SCAN_POINT: u64 = 0x5CA;
/// Seed-derivation tag for replica data within composite-hypothesis ops.
const TAG_REPLICA_DATA: u64 = 0x0DA;

/// Configuration of the maximizations inside p-value computations.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Number of cold start points per fit: one moment-matched point plus
    /// pseudo-random points. Replica refits additionally reuse the
    /// observed-data fit as a warm start.
    pub n_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { n_starts: 4 }
    }
}

/// A toy-MC p-value together with the quantities needed to report it.
#[derive(Debug, Clone, Serialize)]
pub struct PValueResult {
    /// Add-one smoothed p-value, always in (0, 1].
    pub p: f64,
    /// Number of replicas behind the estimate.
    pub n_replicas: usize,
    /// The observed value of the test statistic.
    pub statistic_obs: f64,
    /// The seed the computation was run with.
    pub seed: u64,
}

/// Outcome of one confidence-scan grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStatus {
    /// The point was tested and carries a p-value.
    Ok,
    /// The constrained best fit cannot generate replicas (it demands more
    /// truth events than the simulation provides).
    Untestable,
    /// A maximization failed at this point.
    FitFailed,
}

impl ScanStatus {
    /// Stable lower-case token for tabular output.
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanStatus::Ok => "ok",
            ScanStatus::Untestable => "untestable",
            ScanStatus::FitFailed => "fit_failed",
        }
    }
}

/// One row of a confidence scan.
#[derive(Debug, Clone)]
pub struct ScanRow {
    /// The grid value the parameter was pinned to.
    pub value: f64,
    /// Likelihood-ratio p-value of the constrained hypothesis, when the
    /// point could be tested.
    pub p_value: Option<f64>,
    /// Maximized log-likelihood of the constrained hypothesis.
    pub fit_logl: Option<f64>,
    /// What happened at this point.
    pub status: ScanStatus,
}

/// Draws replica count vectors from a forward-folded truth hypothesis. A
/// replica first picks one toy matrix uniformly, then draws each bin from a
/// Poisson distribution with the folded mean. The generator keeps a counter
/// so consecutive calls continue the replica sequence; a fresh generator
/// with the same seed reproduces it from the start.
#[derive(Debug, Clone)]
pub struct ToyDataGenerator {
    matrices: ResponseMatrixSet,
    seed: u64,
    counter: u64,
}

impl ToyDataGenerator {
    /// Creates a generator over the given matrix set.
    pub fn new(matrices: ResponseMatrixSet, seed: u64) -> Self {
        Self {
            matrices,
            seed,
            counter: 0,
        }
    }

    /// The underlying matrix set.
    pub fn matrices(&self) -> &ResponseMatrixSet {
        &self.matrices
    }

    /// Number of replicas drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Draws `count` replica data vectors from the truth hypothesis `mu`
    /// (retained or full truth layout). Errors if `mu` is untestable.
    pub fn generate(&mut self, mu: &[f64], count: usize) -> Result<Vec<Vec<u64>>> {
        let folded = folded_means(&self.matrices, mu)?;
        let start = self.counter;
        self.counter += count as u64;
        (0..count)
            .map(|i| {
                let mut rng = stream_rng(self.seed, STREAM_TOY_DATA, start + i as u64);
                sample_replica(&folded, &mut rng)
            })
            .collect()
    }
}

/// Validates testability of `mu`, reduces it to the retained layout and
/// folds it through every toy matrix.
fn folded_means(set: &ResponseMatrixSet, mu: &[f64]) -> Result<Vec<Vec<f64>>> {
    let report = set.check_testable(mu)?;
    if !report.testable {
        let worst = &report.violations[0];
        return Err(Error::Untestable(format!(
            "hypothesis demands {} truth events in bin {} but the simulation provides {} \
             ({} violating bins in total)",
            worst.mu,
            worst.bin,
            worst.available,
            report.violations.len()
        )));
    }
    let retained = if mu.len() == set.n_filled() {
        mu.to_vec()
    } else {
        set.reduce_truth_vector(mu)?
    };
    (0..set.n_matrices())
        .map(|t| set.fold(t, &retained))
        .collect()
}

/// Draws one replica: toy index uniform, then Poisson per bin.
fn sample_replica<R: Rng>(folded: &[Vec<f64>], rng: &mut R) -> Result<Vec<u64>> {
    let t = rng.random_range(0..folded.len());
    folded[t]
        .iter()
        .map(|&lambda| {
            if lambda == 0.0 {
                Ok(0)
            } else {
                let dist = Poisson::new(lambda).map_err(|e| {
                    Error::Numerical(format!("Poisson mean {lambda} rejected: {e}"))
                })?;
                Ok(dist.sample(rng) as u64)
            }
        })
        .collect()
}

/// Add-one smoothed tie-inclusive p-value estimate.
fn add_one_fraction(k_le: usize, n: usize) -> f64 {
    (k_le + 1) as f64 / (n + 1) as f64
}

fn check_replicas(n_replicas: usize) -> Result<()> {
    if n_replicas < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 replicas are required for a meaningful p-value, got {n_replicas}"
        )));
    }
    Ok(())
}

/// P-value of a fixed truth hypothesis: the probability, under the
/// hypothesis itself, of observing data with a log-likelihood at most the
/// observed one.
pub fn likelihood_p_value(
    lm: &LikelihoodMachine,
    mu: &[f64],
    n_replicas: usize,
    seed: u64,
) -> Result<PValueResult> {
    check_replicas(n_replicas)?;
    let folded = folded_means(lm.matrices(), mu)?;
    let log_likelihood = |data: &[u64]| -> f64 {
        let per_toy: Vec<f64> = folded
            .iter()
            .map(|nu| poisson_log_likelihood_unchecked(data, nu))
            .collect();
        combine_toys(&per_toy, lm.mode())
    };
    let obs = log_likelihood(lm.data());

    let replicas: Vec<Vec<u64>> = (0..n_replicas)
        .map(|i| {
            let mut rng = stream_rng(seed, STREAM_TOY_DATA, i as u64);
            sample_replica(&folded, &mut rng)
        })
        .collect::<Result<_>>()?;
    let k_le = replicas
        .par_iter()
        .filter(|data| log_likelihood(data) <= obs)
        .count();
    Ok(PValueResult {
        p: add_one_fraction(k_le, n_replicas),
        n_replicas,
        statistic_obs: obs,
        seed,
    })
}

/// Poisson log-likelihood without argument validation, for the hot replica
/// loop; the folded means were validated when they were built.
fn poisson_log_likelihood_unchecked(data: &[u64], nu: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&n, &mean) in data.iter().zip(nu) {
        if n == 0 {
            total -= mean;
        } else if mean == 0.0 {
            return f64::NEG_INFINITY;
        } else {
            total += n as f64 * mean.ln() - mean - ln_factorial(n);
        }
    }
    total
}

/// Plug-in p-value of a composite hypothesis: fit the hypothesis to the
/// observed data, generate replicas from the best fit, refit each replica
/// and count how often the replica maximum is at most the observed one.
pub fn max_likelihood_p_value(
    lm: &LikelihoodMachine,
    hyp: &CompositeHypothesis,
    n_replicas: usize,
    seed: u64,
    fit_config: &FitConfig,
) -> Result<PValueResult> {
    check_replicas(n_replicas)?;
    let folded = FoldedFit::new(lm.matrices(), hyp, lm.mode())?;
    let obs_fit = folded.maximize(
        lm.data(),
        fit_config.n_starts,
        derive_seed(seed, TAG_OBSERVED_FIT, 0),
        None,
    )?;
    if !obs_fit.log_likelihood.is_finite() {
        return Err(Error::Numerical(
            "the fit of the hypothesis to the observed data failed".into(),
        ));
    }
    let mu_hat = hyp.translate(&obs_fit.theta)?;
    let mut gen = ToyDataGenerator::new(lm.matrices().clone(), derive_seed(seed, TAG_REPLICA_DATA, 0));
    let replicas = gen.generate(&mu_hat, n_replicas)?;

    let fits: Vec<f64> = replicas
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let fit = folded.maximize(
                data,
                fit_config.n_starts,
                derive_seed(seed, TAG_REPLICA_FIT, i as u64),
                Some(&obs_fit.theta),
            )?;
            Ok(fit.log_likelihood)
        })
        .collect::<Result<_>>()?;
    let k_le = fits.iter().filter(|&&ll| ll <= obs_fit.log_likelihood).count();
    Ok(PValueResult {
        p: add_one_fraction(k_le, n_replicas),
        n_replicas,
        statistic_obs: obs_fit.log_likelihood,
        seed,
    })
}

/// Everything a likelihood-ratio p-value computation produces.
struct RatioOutcome {
    /// None when the constrained best fit cannot generate replicas.
    p: Option<f64>,
    statistic_obs: f64,
    nested_logl: f64,
}

fn ratio_p_value_impl(
    lm: &LikelihoodMachine,
    hyp0: &CompositeHypothesis,
    hyp1: &CompositeHypothesis,
    n_replicas: usize,
    seed: u64,
    fit_config: &FitConfig,
) -> Result<RatioOutcome> {
    check_replicas(n_replicas)?;
    let folded0 = FoldedFit::new(lm.matrices(), hyp0, lm.mode())?;
    let folded1 = FoldedFit::new(lm.matrices(), hyp1, lm.mode())?;
    // Both observed fits use the same derived seed, so a degenerate call
    // with hyp0 == hyp1 produces bit-identical fits and an exactly-zero
    // statistic on every replica.
    let seed_obs = derive_seed(seed, TAG_OBSERVED_FIT, 0);
    let fit0 = folded0.maximize(lm.data(), fit_config.n_starts, seed_obs, None)?;
    let fit1 = folded1.maximize(lm.data(), fit_config.n_starts, seed_obs, None)?;
    if !fit0.log_likelihood.is_finite() || !fit1.log_likelihood.is_finite() {
        return Err(Error::Numerical(
            "a fit of a hypothesis to the observed data failed".into(),
        ));
    }
    let q_obs = fit0.log_likelihood - fit1.log_likelihood;

    // Replicas come from the nested hypothesis's best fit.
    let mu0_hat = hyp0.translate(&fit0.theta)?;
    let mut gen = ToyDataGenerator::new(lm.matrices().clone(), derive_seed(seed, TAG_REPLICA_DATA, 0));
    let replicas = match gen.generate(&mu0_hat, n_replicas) {
        Ok(r) => r,
        Err(Error::Untestable(_)) => {
            return Ok(RatioOutcome {
                p: None,
                statistic_obs: q_obs,
                nested_logl: fit0.log_likelihood,
            })
        }
        Err(e) => return Err(e),
    };

    let qs: Vec<f64> = replicas
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let seed_i = derive_seed(seed, TAG_REPLICA_FIT, i as u64);
            let l0 = folded0
                .maximize(data, fit_config.n_starts, seed_i, Some(&fit0.theta))?
                .log_likelihood;
            let l1 = folded1
                .maximize(data, fit_config.n_starts, seed_i, Some(&fit1.theta))?
                .log_likelihood;
            Ok(l0 - l1)
        })
        .collect::<Result<_>>()?;
    let k_le = qs.iter().filter(|&&q| q <= q_obs).count();
    Ok(RatioOutcome {
        p: Some(add_one_fraction(k_le, n_replicas)),
        statistic_obs: q_obs,
        nested_logl: fit0.log_likelihood,
    })
}

/// P-value of a nested hypothesis against an enveloping one, using the
/// difference of maximized log-likelihoods as the statistic and generating
/// replicas from the nested best fit. The caller asserts that `hyp0`'s
/// hypothesis set is contained in `hyp1`'s.
pub fn max_likelihood_ratio_p_value(
    lm: &LikelihoodMachine,
    hyp0: &CompositeHypothesis,
    hyp1: &CompositeHypothesis,
    n_replicas: usize,
    seed: u64,
    fit_config: &FitConfig,
) -> Result<PValueResult> {
    let outcome = ratio_p_value_impl(lm, hyp0, hyp1, n_replicas, seed, fit_config)?;
    match outcome.p {
        Some(p) => Ok(PValueResult {
            p,
            n_replicas,
            statistic_obs: outcome.statistic_obs,
            seed,
        }),
        None => Err(Error::Untestable(
            "the nested best fit demands more truth events than the simulation provides"
                .into(),
        )),
    }
}

/// Scans one parameter of a composite hypothesis over a grid: each point
/// pins the parameter, computes the likelihood-ratio p-value of the
/// constrained hypothesis against the free one, and reports
/// (value, p, constrained max log-likelihood, status). Grid points whose
/// constrained fit cannot generate replicas are flagged instead of failing
/// the scan.
pub fn confidence_scan(
    lm: &LikelihoodMachine,
    hyp: &CompositeHypothesis,
    param_index: usize,
    grid: &[f64],
    n_replicas: usize,
    seed: u64,
    fit_config: &FitConfig,
) -> Result<Vec<ScanRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("the scan grid is empty".into()));
    }
    if param_index >= hyp.dim() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {param_index} out of range ({} parameters)",
            hyp.dim()
        )));
    }
    grid.iter()
        .enumerate()
        .map(|(g, &value)| {
            let constrained = hyp.fix_param(param_index, value)?;
            let point_seed = derive_seed(seed, TAG_SCAN_POINT, g as u64);
            match ratio_p_value_impl(lm, &constrained, hyp, n_replicas, point_seed, fit_config) {
                Ok(outcome) => Ok(ScanRow {
                    value,
                    p_value: outcome.p,
                    fit_logl: Some(outcome.nested_logl),
                    status: if outcome.p.is_some() {
                        ScanStatus::Ok
                    } else {
                        ScanStatus::Untestable
                    },
                }),
                Err(Error::Numerical(_)) => Ok(ScanRow {
                    value,
                    p_value: None,
                    fit_logl: None,
                    status: ScanStatus::FitFailed,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
