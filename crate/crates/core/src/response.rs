//! Accumulation of simulated events into per-toy response statistics, the
//! conjugate uncertainty model for matrix elements, and sampling of
//! statistically fluctuated toy response matrices.
//!
//! A [`ResponseBuilder`] ingests simulated events binned in reconstructed and
//! truth space and maintains, per systematic toy, the count and weight sums
//! needed to describe each matrix element. Efficiencies carry Beta posteriors,
//! per-column migration vectors carry Dirichlet posteriors, and mean weight
//! corrections carry normal posteriors with a pseudo-observation guarding the
//! unweighted limit. [`ResponseBuilder::sample_toy_matrices`] draws from those
//! posteriors to produce a [`ResponseMatrixSet`]: the portable collection of
//! fluctuated matrices that every downstream likelihood consumes.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use crate::binning::{Binning, EventRecord};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Smallest value a sampled truth-column mean weight may take; draws at or
/// below this floor are rejected and redrawn so the weight-correction ratio
/// stays finite.
const MIN_COLUMN_WEIGHT: f64 = 1e-12;

/// Bound on rejection-sampling attempts for truncated normal draws.
const MAX_REDRAWS: usize = 10_000;

/// Beta posterior parameters and Dirichlet posterior vector for one truth
/// column of one systematic toy.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    /// Beta shape for reconstructing (prior plus reconstructed count).
    pub beta_star: f64,
    /// Beta shape for not reconstructing (prior plus unreconstructed count).
    pub beta_dagger: f64,
    /// Dirichlet concentration per reconstructed bin (prior plus count).
    pub alpha: Vec<f64>,
}

/// Accumulates simulated events into per-systematic-toy response statistics.
///
/// Filling is additive, so builders for disjoint event batches can be
/// combined with [`ResponseBuilder::merge`]. Truth columns that never receive
/// an event are treated as unmeasured: they are omitted from retained
/// matrices and from sampled [`ResponseMatrixSet`]s.
#[derive(Debug, Clone)]
pub struct ResponseBuilder {
    reco_binning: Binning,
    truth_binning: Binning,
    n_sys_toys: usize,
    beta_prior: (f64, f64),
    alpha_prior: f64,
    /// Unweighted event count per truth bin (length d).
    truth_counts: Vec<u64>,
    /// Weight sum per truth bin (length d).
    truth_weight: Vec<f64>,
    /// Squared-weight sum per truth bin (length d).
    truth_weight_sq: Vec<f64>,
    /// Per toy: unweighted reconstructed count per (reco, truth) element,
    /// row-major r x d.
    elem_counts: Vec<Vec<u64>>,
    /// Per toy: weight sum per element, row-major r x d.
    elem_weight: Vec<Vec<f64>>,
    /// Per toy: squared-weight sum per element, row-major r x d.
    elem_weight_sq: Vec<Vec<f64>>,
    /// Summed weight of events whose truth coordinates fall outside the truth
    /// binning (such events enter no column).
    truth_spill: f64,
}

impl ResponseBuilder {
    /// Creates an empty builder over the given binnings with `n_sys_toys`
    /// systematic variants (toy 0 is the nominal simulation).
    ///
    /// Default priors: Beta(1, 1) for efficiencies and a flat Dirichlet
    /// concentration of `min(1, 3^v / r)` per element, where `v` is the
    /// number of reconstructed variables and `r` the number of reconstructed
    /// bins, so that a column's total prior mass does not overwhelm sparse
    /// migration counts.
    pub fn new(reco_binning: Binning, truth_binning: Binning, n_sys_toys: usize) -> Result<Self> {
        if n_sys_toys == 0 {
            return Err(Error::InvalidArgument(
                "a response builder needs at least one systematic toy (the nominal)".into(),
            ));
        }
        let r = reco_binning.n_bins();
        let d = truth_binning.n_bins();
        let v = reco_binning.n_variables() as f64;
        let alpha_prior = (3f64.powf(v) / r as f64).min(1.0);
        Ok(Self {
            reco_binning,
            truth_binning,
            n_sys_toys,
            beta_prior: (1.0, 1.0),
            alpha_prior,
            truth_counts: vec![0; d],
            truth_weight: vec![0.0; d],
            truth_weight_sq: vec![0.0; d],
            elem_counts: vec![vec![0; r * d]; n_sys_toys],
            elem_weight: vec![vec![0.0; r * d]; n_sys_toys],
            elem_weight_sq: vec![vec![0.0; r * d]; n_sys_toys],
            truth_spill: 0.0,
        })
    }

    /// Replaces the Beta prior for reconstruction efficiencies.
    pub fn with_beta_prior(mut self, prior: (f64, f64)) -> Result<Self> {
        if !(prior.0 > 0.0 && prior.1 > 0.0) || !prior.0.is_finite() || !prior.1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta prior must be positive and finite, got ({}, {})",
                prior.0, prior.1
            )));
        }
        self.beta_prior = prior;
        Ok(self)
    }

    /// Replaces the per-element Dirichlet prior concentration.
    pub fn with_alpha_prior(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dirichlet prior must be positive and finite, got {alpha}"
            )));
        }
        self.alpha_prior = alpha;
        Ok(self)
    }

    /// The reconstructed-space binning.
    pub fn reco_binning(&self) -> &Binning {
        &self.reco_binning
    }

    /// The truth-space binning.
    pub fn truth_binning(&self) -> &Binning {
        &self.truth_binning
    }

    /// Number of systematic toys (at least 1; toy 0 is nominal).
    pub fn n_sys_toys(&self) -> usize {
        self.n_sys_toys
    }

    /// The Beta prior for reconstruction efficiencies.
    pub fn beta_prior(&self) -> (f64, f64) {
        self.beta_prior
    }

    /// The per-element Dirichlet prior concentration.
    pub fn alpha_prior(&self) -> f64 {
        self.alpha_prior
    }

    /// Unweighted simulated event count in truth bin `j`.
    pub fn truth_count(&self, j: usize) -> u64 {
        self.truth_counts[j]
    }

    /// Summed weight of events falling outside the truth binning.
    pub fn truth_spill(&self) -> f64 {
        self.truth_spill
    }

    /// Indices of truth bins that received at least one event, ascending.
    pub fn filled_truth_bins(&self) -> Vec<usize> {
        (0..self.truth_counts.len())
            .filter(|&j| self.truth_counts[j] > 0)
            .collect()
    }

    /// Accumulates one simulated event given separate truth-level and
    /// (optional) reconstructed-level records.
    ///
    /// The truth record's `weight` is the event weight and its `toy_weights`
    /// are the per-systematic-toy weight factors (factor 1 when absent). An
    /// event whose truth coordinates fall outside the truth binning enters no
    /// column and is recorded as spill; an event without a reconstructable
    /// record (or whose reconstructed coordinates fall outside the
    /// reconstructed binning) counts only toward its truth column totals.
    pub fn fill(&mut self, truth: &EventRecord, reco: Option<&EventRecord>) -> Result<()> {
        let w = truth.weight;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "event weight must be finite and non-negative, got {w}"
            )));
        }
        if let Some(tw) = &truth.toy_weights {
            if tw.len() != self.n_sys_toys {
                return Err(Error::DimensionMismatch(format!(
                    "event carries {} toy weight factors but the builder has {} systematic toys",
                    tw.len(),
                    self.n_sys_toys
                )));
            }
            if let Some(bad) = tw.iter().find(|f| !(**f >= 0.0) || !f.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "toy weight factors must be finite and non-negative, got {bad}"
                )));
            }
        }

        let Some(j) = self.truth_binning.bin_index(truth) else {
            self.truth_spill += w;
            return Ok(());
        };
        self.truth_counts[j] += 1;
        self.truth_weight[j] += w;
        self.truth_weight_sq[j] += w * w;

        let Some(i) = reco.and_then(|r| self.reco_binning.bin_index(r)) else {
            return Ok(());
        };
        let d = self.truth_binning.n_bins();
        let idx = i * d + j;
        for t in 0..self.n_sys_toys {
            let factor = truth
                .toy_weights
                .as_ref()
                .map_or(1.0, |tw| tw[t]);
            let wt = w * factor;
            self.elem_counts[t][idx] += 1;
            self.elem_weight[t][idx] += wt;
            self.elem_weight_sq[t][idx] += wt * wt;
        }
        Ok(())
    }

    /// Accumulates one combined event record carrying both truth-level and
    /// reconstructed-level variables (the shape a CSV row naturally has).
    /// Reconstruction failures are encoded by leaving the reconstructed
    /// variables missing.
    pub fn fill_event(&mut self, event: &EventRecord) -> Result<()> {
        self.fill(event, Some(event))
    }

    /// Accumulates a batch of combined event records.
    pub fn fill_events<'a, I>(&mut self, events: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a EventRecord>,
    {
        for event in events {
            self.fill_event(event)?;
        }
        Ok(())
    }

    /// Adds another builder's accumulators into this one. Both builders must
    /// share binnings, toy count, and priors.
    pub fn merge(&mut self, other: &ResponseBuilder) -> Result<()> {
        if self.reco_binning != other.reco_binning || self.truth_binning != other.truth_binning {
            return Err(Error::Incompatible(
                "cannot merge response builders with different binnings".into(),
            ));
        }
        if self.n_sys_toys != other.n_sys_toys {
            return Err(Error::Incompatible(format!(
                "cannot merge response builders with {} and {} systematic toys",
                self.n_sys_toys, other.n_sys_toys
            )));
        }
        if self.beta_prior != other.beta_prior || self.alpha_prior != other.alpha_prior {
            return Err(Error::Incompatible(
                "cannot merge response builders with different priors".into(),
            ));
        }
        for j in 0..self.truth_counts.len() {
            self.truth_counts[j] += other.truth_counts[j];
            self.truth_weight[j] += other.truth_weight[j];
            self.truth_weight_sq[j] += other.truth_weight_sq[j];
        }
        for t in 0..self.n_sys_toys {
            for idx in 0..self.elem_counts[t].len() {
                self.elem_counts[t][idx] += other.elem_counts[t][idx];
                self.elem_weight[t][idx] += other.elem_weight[t][idx];
                self.elem_weight_sq[t][idx] += other.elem_weight_sq[t][idx];
            }
        }
        self.truth_spill += other.truth_spill;
        Ok(())
    }

    /// Returns a copy keeping only the nominal systematic toy's accumulators.
    pub fn clone_nominal(&self) -> ResponseBuilder {
        ResponseBuilder {
            reco_binning: self.reco_binning.clone(),
            truth_binning: self.truth_binning.clone(),
            n_sys_toys: 1,
            beta_prior: self.beta_prior,
            alpha_prior: self.alpha_prior,
            truth_counts: self.truth_counts.clone(),
            truth_weight: self.truth_weight.clone(),
            truth_weight_sq: self.truth_weight_sq.clone(),
            elem_counts: vec![self.elem_counts[0].clone()],
            elem_weight: vec![self.elem_weight[0].clone()],
            elem_weight_sq: vec![self.elem_weight_sq[0].clone()],
            truth_spill: self.truth_spill,
        }
    }

    /// Re-aggregates the truth axis onto a coarser binning whose edges are a
    /// subset of the current truth edges (same variables, same outermost
    /// edges). Accumulators of merged columns add; reconstructed bins are
    /// untouched.
    pub fn reaggregate_truth(&self, new_truth: &Binning) -> Result<ResponseBuilder> {
        if new_truth.variables() != self.truth_binning.variables() {
            return Err(Error::Incompatible(
                "re-aggregation requires the same truth variables in the same order".into(),
            ));
        }
        // Per-variable map from old axis bin to new axis bin.
        let mut axis_maps: Vec<Vec<usize>> = Vec::new();
        for (v, var) in self.truth_binning.variables().iter().enumerate() {
            let old_edges = self.truth_binning.edges(v);
            let new_edges = new_truth.edges(v);
            for e in new_edges {
                if !old_edges.contains(e) {
                    return Err(Error::Incompatible(format!(
                        "edge {e} of variable `{var}` is not part of the original truth binning"
                    )));
                }
            }
            if old_edges.first() != new_edges.first() || old_edges.last() != new_edges.last() {
                return Err(Error::Incompatible(format!(
                    "re-aggregation must preserve the outermost edges of variable `{var}`"
                )));
            }
            let map = (0..old_edges.len() - 1)
                .map(|a| {
                    let lo = old_edges[a];
                    new_edges.partition_point(|e| *e <= lo) - 1
                })
                .collect();
            axis_maps.push(map);
        }

        let mut out = ResponseBuilder::new(
            self.reco_binning.clone(),
            new_truth.clone(),
            self.n_sys_toys,
        )?;
        out.beta_prior = self.beta_prior;
        out.alpha_prior = self.alpha_prior;
        out.truth_spill = self.truth_spill;

        let d_old = self.truth_binning.n_bins();
        let d_new = new_truth.n_bins();
        let r = self.reco_binning.n_bins();
        let column_map: Vec<usize> = (0..d_old)
            .map(|j| {
                let tuple = self.truth_binning.index_to_tuple(j);
                let mapped: Vec<usize> = tuple
                    .iter()
                    .zip(&axis_maps)
                    .map(|(&a, m)| m[a])
                    .collect();
                new_truth.tuple_to_index(&mapped)
            })
            .collect();

        for j in 0..d_old {
            let jn = column_map[j];
            out.truth_counts[jn] += self.truth_counts[j];
            out.truth_weight[jn] += self.truth_weight[j];
            out.truth_weight_sq[jn] += self.truth_weight_sq[j];
        }
        for t in 0..self.n_sys_toys {
            for i in 0..r {
                for j in 0..d_old {
                    let jn = column_map[j];
                    out.elem_counts[t][i * d_new + jn] += self.elem_counts[t][i * d_old + j];
                    out.elem_weight[t][i * d_new + jn] += self.elem_weight[t][i * d_old + j];
                    out.elem_weight_sq[t][i * d_new + jn] += self.elem_weight_sq[t][i * d_old + j];
                }
            }
        }
        Ok(out)
    }

    fn check_toy(&self, t: usize) -> Result<()> {
        if t >= self.n_sys_toys {
            return Err(Error::InvalidArgument(format!(
                "systematic toy index {t} out of range (builder has {})",
                self.n_sys_toys
            )));
        }
        Ok(())
    }

    /// Beta and Dirichlet posterior parameters for truth column `j` of
    /// systematic toy `t`.
    pub fn posterior_params(&self, t: usize, j: usize) -> Result<PosteriorParams> {
        self.check_toy(t)?;
        let d = self.truth_binning.n_bins();
        if j >= d {
            return Err(Error::InvalidArgument(format!(
                "truth bin index {j} out of range (binning has {d})"
            )));
        }
        let r = self.reco_binning.n_bins();
        let reconstructed: u64 = (0..r).map(|i| self.elem_counts[t][i * d + j]).sum();
        let alpha = (0..r)
            .map(|i| self.alpha_prior + self.elem_counts[t][i * d + j] as f64)
            .collect();
        Ok(PosteriorParams {
            beta_star: self.beta_prior.0 + reconstructed as f64,
            beta_dagger: self.beta_prior.1 + (self.truth_counts[j] - reconstructed) as f64,
            alpha,
        })
    }

    /// Posterior-mean response matrix over the full truth binning (row-major
    /// r x d), including columns without any simulated event, whose values
    /// are pure prior.
    pub fn full_matrix(&self, t: usize) -> Result<Vec<f64>> {
        self.check_toy(t)?;
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();
        let mut out = vec![0.0; r * d];
        for j in 0..d {
            let col = self.column_moments(t, j)?;
            for i in 0..r {
                out[i * d + j] = col.mean[i];
            }
        }
        Ok(out)
    }

    /// Posterior variance of each matrix element over the full truth binning
    /// (row-major r x d), from the independent-factor error propagation of
    /// efficiency, migration, and weight correction.
    pub fn full_mc_stat_variance(&self, t: usize) -> Result<Vec<f64>> {
        self.check_toy(t)?;
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();
        let mut out = vec![0.0; r * d];
        for j in 0..d {
            let col = self.column_moments(t, j)?;
            for i in 0..r {
                out[i * d + j] = col.variance[i];
            }
        }
        Ok(out)
    }

    /// Posterior-mean response matrix restricted to filled truth columns
    /// (row-major r x n_filled, columns ordered as
    /// [`ResponseBuilder::filled_truth_bins`]).
    pub fn nominal_matrix(&self, t: usize) -> Result<Vec<f64>> {
        let full = self.full_matrix(t)?;
        Ok(self.retain_columns(&full))
    }

    /// Element-wise posterior variance restricted to filled truth columns.
    pub fn mc_stat_variance(&self, t: usize) -> Result<Vec<f64>> {
        let full = self.full_mc_stat_variance(t)?;
        Ok(self.retain_columns(&full))
    }

    fn retain_columns(&self, full: &[f64]) -> Vec<f64> {
        let filled = self.filled_truth_bins();
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();
        let mut out = Vec::with_capacity(r * filled.len());
        for i in 0..r {
            for &j in &filled {
                out.push(full[i * d + j]);
            }
        }
        out
    }

    /// Per-toy unweighted reconstructed counts per reconstructed bin.
    pub fn reco_counts(&self) -> Vec<Vec<u64>> {
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();
        (0..self.n_sys_toys)
            .map(|t| {
                (0..r)
                    .map(|i| (0..d).map(|j| self.elem_counts[t][i * d + j]).sum())
                    .collect()
            })
            .collect()
    }

    /// Posterior moments of one truth column: mean and variance of each
    /// element of the column, over reconstructed bins.
    fn column_moments(&self, t: usize, j: usize) -> Result<ColumnMoments> {
        let params = self.posterior_params(t, j)?;
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();

        let bs = params.beta_star;
        let bd = params.beta_dagger;
        let eff = bs / (bs + bd);
        let var_eff = bs * bd / ((bs + bd) * (bs + bd) * (bs + bd + 1.0));

        let alpha_sum: f64 = params.alpha.iter().sum();

        let n_j = self.truth_counts[j];
        let w_j = self.truth_weight[j];
        let mean_w_j = mean_weight(w_j, n_j);
        let var_w_j = pseudo_weight_variance(w_j, self.truth_weight_sq[j], n_j);

        let mut mean = Vec::with_capacity(r);
        let mut variance = Vec::with_capacity(r);
        for i in 0..r {
            let idx = i * d + j;
            let a = params.alpha[i];
            let p = a / alpha_sum;
            let var_p = a * (alpha_sum - a) / (alpha_sum * alpha_sum * (alpha_sum + 1.0));

            let n_el = self.elem_counts[t][idx];
            let w_el = self.elem_weight[t][idx];
            let mean_w_el = mean_weight(w_el, n_el);
            let var_w_el = pseudo_weight_variance(w_el, self.elem_weight_sq[t][idx], n_el);

            let m = if n_el > 0 && n_j > 0 && mean_w_j > 0.0 {
                mean_w_el / mean_w_j
            } else {
                1.0
            };
            let var_m = if mean_w_j > 0.0 {
                var_w_el / (mean_w_j * mean_w_j)
                    + (mean_w_el / (mean_w_j * mean_w_j)).powi(2) * var_w_j
            } else {
                0.0
            };

            mean.push(eff * p * m);
            variance.push(
                (eff * m).powi(2) * var_p
                    + (eff * p).powi(2) * var_m
                    + (p * m).powi(2) * var_eff,
            );
        }
        Ok(ColumnMoments { mean, variance })
    }

    /// Draws `n_stat_per_sys` statistically fluctuated matrices from each
    /// systematic toy's posteriors and collects them into a
    /// [`ResponseMatrixSet`] (toy-major order: all draws of systematic toy 0,
    /// then toy 1, ...). Draws are deterministic in `seed` and independent of
    /// thread count.
    pub fn sample_toy_matrices(&self, n_stat_per_sys: usize, seed: u64) -> Result<ResponseMatrixSet> {
        self.sample_matrices(0..self.n_sys_toys, n_stat_per_sys, seed)
    }

    /// Draws statistical fluctuations of the nominal systematic toy only.
    pub fn sample_nominal_toys(&self, n_stat: usize, seed: u64) -> Result<ResponseMatrixSet> {
        self.sample_matrices(0..1, n_stat, seed)
    }

    fn sample_matrices(
        &self,
        toys: std::ops::Range<usize>,
        n_stat_per_sys: usize,
        seed: u64,
    ) -> Result<ResponseMatrixSet> {
        if n_stat_per_sys == 0 {
            return Err(Error::InvalidArgument(
                "at least one statistical draw per systematic toy is required".into(),
            ));
        }
        let filled = self.filled_truth_bins();
        if filled.is_empty() {
            return Err(Error::Untestable(
                "no truth bin received any simulated event; nothing to sample".into(),
            ));
        }
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();
        let mut matrices = Vec::with_capacity(toys.len() * n_stat_per_sys);
        for t in toys.clone() {
            for s in 0..n_stat_per_sys {
                let mut rng = stream_rng(seed, t as u64, s as u64);
                let mut matrix = vec![0.0; r * filled.len()];
                for (col, &j) in filled.iter().enumerate() {
                    let draw = self.sample_column(t, j, &mut rng)?;
                    for i in 0..r {
                        matrix[i * filled.len() + col] = draw[i];
                    }
                }
                matrices.push(matrix);
            }
        }
        let counts = filled.iter().map(|&j| self.truth_counts[j]).collect();
        let meta = serde_json::json!({
            "n_sys_toys": toys.len(),
            "n_stat_per_sys": n_stat_per_sys,
            "seed": seed,
        });
        ResponseMatrixSet::from_parts(r, d, filled, counts, matrices, meta)
    }

    /// Draws one fluctuated truth column: Beta efficiency, Dirichlet
    /// migration, and truncated-normal weight corrections.
    fn sample_column(&self, t: usize, j: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let params = self.posterior_params(t, j)?;
        let r = self.reco_binning.n_bins();
        let d = self.truth_binning.n_bins();

        let eff = Beta::new(params.beta_star, params.beta_dagger)
            .map_err(|e| Error::Numerical(format!("beta draw setup failed: {e}")))?
            .sample(rng);
        let migration = sample_dirichlet(&params.alpha, rng)?;

        let n_j = self.truth_counts[j];
        let w_j = self.truth_weight[j];
        let mean_w_j = mean_weight(w_j, n_j);
        let var_w_j = pseudo_weight_variance(w_j, self.truth_weight_sq[j], n_j);
        let col_weight = sample_truncated_normal(mean_w_j, var_w_j.sqrt(), MIN_COLUMN_WEIGHT, rng)?;

        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            let idx = i * d + j;
            let n_el = self.elem_counts[t][idx];
            let mean_w_el = mean_weight(self.elem_weight[t][idx], n_el);
            let var_w_el =
                pseudo_weight_variance(self.elem_weight[t][idx], self.elem_weight_sq[t][idx], n_el);
            let el_weight = sample_truncated_normal(mean_w_el, var_w_el.sqrt(), 0.0, rng)?;
            out.push((el_weight / col_weight) * eff * migration[i]);
        }
        Ok(out)
    }
}

struct ColumnMoments {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

/// Mean event weight with the convention that an empty sample has mean 1
/// (the unweighted default).
fn mean_weight(sum_w: f64, n: u64) -> f64 {
    if n > 0 {
        sum_w / n as f64
    } else {
        1.0
    }
}

/// Variance of the mean event weight, stabilized by one pseudo-observation of
/// weight 1. Exactly zero for unweighted samples.
fn pseudo_weight_variance(sum_w: f64, sum_w_sq: f64, n: u64) -> f64 {
    let np1 = n as f64 + 1.0;
    let second = (sum_w_sq + 1.0) / np1;
    let first = (sum_w + 1.0) / np1;
    ((second - first * first) / np1).max(0.0)
}

/// Samples a Dirichlet vector by normalizing independent Gamma draws; a
/// one-dimensional Dirichlet is the constant 1.
fn sample_dirichlet(alpha: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    for _ in 0..MAX_REDRAWS {
        let mut draws = Vec::with_capacity(alpha.len());
        for &a in alpha {
            let g = Gamma::new(a, 1.0)
                .map_err(|e| Error::Numerical(format!("gamma draw setup failed: {e}")))?
                .sample(rng);
            draws.push(g);
        }
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            for v in &mut draws {
                *v /= total;
            }
            return Ok(draws);
        }
    }
    Err(Error::Numerical(
        "dirichlet sampling failed: gamma draws underflowed to zero".into(),
    ))
}

/// Samples a normal value truncated below at `floor` by redrawing; when the
/// standard deviation is zero the mean is returned without consuming
/// randomness.
fn sample_truncated_normal(mean: f64, sd: f64, floor: f64, rng: &mut impl Rng) -> Result<f64> {
    if sd == 0.0 {
        return Ok(mean.max(floor.max(0.0)));
    }
    let dist = Normal::new(mean, sd)
        .map_err(|e| Error::Numerical(format!("normal draw setup failed: {e}")))?;
    for _ in 0..MAX_REDRAWS {
        let v = dist.sample(rng);
        if v > floor {
            return Ok(v);
        }
    }
    Err(Error::Numerical(format!(
        "truncated normal sampling stalled at mean {mean}, sd {sd}, floor {floor}"
    )))
}

/// A portable collection of fluctuated response matrices over the filled
/// truth columns, with the simulated truth-bin counts needed for testability
/// checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrixSet {
    n_reco: usize,
    n_truth_total: usize,
    truth_bins_filled: Vec<usize>,
    sim_truth_counts: Vec<u64>,
    matrices: Vec<Vec<f64>>,
    meta: serde_json::Value,
}

/// Outcome of a testability check: whether every retained truth bin's
/// hypothesis mean stays below its simulated count, with the violations.
#[derive(Debug, Clone, PartialEq)]
pub struct TestableReport {
    /// True when the hypothesis is testable under the matrix set.
    pub testable: bool,
    /// Violating bins, by original truth-bin index.
    pub violations: Vec<TestableViolation>,
}

/// One truth bin where a hypothesis demands more events than the simulation
/// can support.
#[derive(Debug, Clone, PartialEq)]
pub struct TestableViolation {
    /// Original truth-bin index.
    pub bin: usize,
    /// Hypothesis mean in that bin.
    pub mu: f64,
    /// Simulated event count in that bin (0 for removed bins).
    pub available: u64,
}

impl ResponseMatrixSet {
    /// Assembles a matrix set from raw parts, validating every structural
    /// invariant (sorted unique filled bins, positive counts, matching
    /// lengths, non-negative finite matrix entries).
    pub fn from_parts(
        n_reco: usize,
        n_truth_total: usize,
        truth_bins_filled: Vec<usize>,
        sim_truth_counts: Vec<u64>,
        matrices: Vec<Vec<f64>>,
        meta: serde_json::Value,
    ) -> Result<Self> {
        if n_reco == 0 {
            return Err(Error::Format("n_reco must be at least 1".into()));
        }
        if truth_bins_filled.is_empty() {
            return Err(Error::Format(
                "truth_bins_filled must name at least one filled truth bin".into(),
            ));
        }
        if !truth_bins_filled.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Format(
                "truth_bins_filled must be strictly increasing".into(),
            ));
        }
        if *truth_bins_filled.last().unwrap() >= n_truth_total {
            return Err(Error::Format(format!(
                "truth_bins_filled contains index {} but n_truth_total is {}",
                truth_bins_filled.last().unwrap(),
                n_truth_total
            )));
        }
        if sim_truth_counts.len() != truth_bins_filled.len() {
            return Err(Error::Format(format!(
                "sim_truth_counts has {} entries but truth_bins_filled has {}",
                sim_truth_counts.len(),
                truth_bins_filled.len()
            )));
        }
        if let Some(pos) = sim_truth_counts.iter().position(|&c| c == 0) {
            return Err(Error::Format(format!(
                "sim_truth_counts[{pos}] is zero; filled bins must have events"
            )));
        }
        if matrices.is_empty() {
            return Err(Error::Format("matrices must contain at least one matrix".into()));
        }
        let expected = n_reco * truth_bins_filled.len();
        for (t, m) in matrices.iter().enumerate() {
            if m.len() != expected {
                return Err(Error::Format(format!(
                    "matrices[{t}] has {} values but n_reco x filled = {expected}",
                    m.len()
                )));
            }
            if let Some(pos) = m.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Format(format!(
                    "matrices[{t}][{pos}] = {} is not a finite non-negative value",
                    m[pos]
                )));
            }
        }
        Ok(Self {
            n_reco,
            n_truth_total,
            truth_bins_filled,
            sim_truth_counts,
            matrices,
            meta,
        })
    }

    /// Number of reconstructed bins.
    pub fn n_reco(&self) -> usize {
        self.n_reco
    }

    /// Number of truth bins in the full truth binning.
    pub fn n_truth_total(&self) -> usize {
        self.n_truth_total
    }

    /// Number of retained (filled) truth bins.
    pub fn n_filled(&self) -> usize {
        self.truth_bins_filled.len()
    }

    /// Original indices of the retained truth bins, ascending.
    pub fn truth_bins_filled(&self) -> &[usize] {
        &self.truth_bins_filled
    }

    /// Simulated event counts of the retained truth bins.
    pub fn sim_truth_counts(&self) -> &[u64] {
        &self.sim_truth_counts
    }

    /// Number of matrices in the set.
    pub fn n_matrices(&self) -> usize {
        self.matrices.len()
    }

    /// One matrix, row-major `n_reco x n_filled`.
    pub fn matrix(&self, t: usize) -> &[f64] {
        &self.matrices[t]
    }

    /// Free-form provenance metadata.
    pub fn meta(&self) -> &serde_json::Value {
        &self.meta
    }

    /// Folds a retained-space truth vector through matrix `t`, producing the
    /// expected reconstructed-space means.
    pub fn fold(&self, t: usize, mu: &[f64]) -> Result<Vec<f64>> {
        let f = self.n_filled();
        if mu.len() != f {
            return Err(Error::DimensionMismatch(format!(
                "truth vector has {} entries but the set retains {f} truth bins",
                mu.len()
            )));
        }
        let m = &self.matrices[t];
        let mut out = vec![0.0; self.n_reco];
        for i in 0..self.n_reco {
            let row = &m[i * f..(i + 1) * f];
            out[i] = row.iter().zip(mu).map(|(r, m)| r * m).sum();
        }
        Ok(out)
    }

    /// Reduces a full-length truth vector to the retained bins, erroring if
    /// any removed (unmeasured) bin carries a non-zero entry.
    pub fn reduce_truth_vector(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.n_truth_total {
            return Err(Error::DimensionMismatch(format!(
                "full truth vector has {} entries but the truth binning has {}",
                full.len(),
                self.n_truth_total
            )));
        }
        let mut retained_iter = self.truth_bins_filled.iter().peekable();
        let mut out = Vec::with_capacity(self.truth_bins_filled.len());
        for (j, &v) in full.iter().enumerate() {
            if retained_iter.peek() == Some(&&j) {
                retained_iter.next();
                out.push(v);
            } else if v != 0.0 {
                return Err(Error::Untestable(format!(
                    "truth bin {j} received no simulated events but the hypothesis puts {v} there"
                )));
            }
        }
        Ok(out)
    }

    /// Checks that a truth hypothesis is testable: every retained bin's mean
    /// must stay strictly below its simulated count, and (for full-length
    /// input) removed bins must carry exactly zero. Accepts retained-length
    /// or full-length vectors.
    pub fn check_testable(&self, mu: &[f64]) -> Result<TestableReport> {
        let f = self.n_filled();
        let mut violations = Vec::new();
        let retained: Vec<f64> = if mu.len() == f {
            mu.to_vec()
        } else if mu.len() == self.n_truth_total {
            let mut retained_iter = self.truth_bins_filled.iter().peekable();
            let mut out = Vec::with_capacity(f);
            for (j, &v) in mu.iter().enumerate() {
                if retained_iter.peek() == Some(&&j) {
                    retained_iter.next();
                    out.push(v);
                } else if v != 0.0 {
                    violations.push(TestableViolation {
                        bin: j,
                        mu: v,
                        available: 0,
                    });
                }
            }
            out
        } else {
            return Err(Error::DimensionMismatch(format!(
                "truth vector has {} entries; expected {} (retained) or {} (full)",
                mu.len(),
                f,
                self.n_truth_total
            )));
        };
        for (col, &v) in retained.iter().enumerate() {
            let available = self.sim_truth_counts[col];
            if !(v < available as f64) {
                violations.push(TestableViolation {
                    bin: self.truth_bins_filled[col],
                    mu: v,
                    available,
                });
            }
        }
        violations.sort_by_key(|v| v.bin);
        Ok(TestableReport {
            testable: violations.is_empty(),
            violations,
        })
    }
}

/// Truth-side coverage ratios of a hypothesis against the simulated sample:
/// how many data events the hypothesis expects per simulated event available
/// to model them. Accepts retained-length or full-length vectors; ratios over
/// empty bins are 0 for zero demand and +inf otherwise.
pub fn coverage_truth(set: &ResponseMatrixSet, mu: &[f64]) -> Result<Vec<f64>> {
    let ratio = |m: f64, n: u64| -> f64 {
        if n > 0 {
            m / n as f64
        } else if m == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    if mu.len() == set.n_filled() {
        Ok(mu
            .iter()
            .zip(set.sim_truth_counts())
            .map(|(&m, &n)| ratio(m, n))
            .collect())
    } else if mu.len() == set.n_truth_total() {
        let mut counts = vec![0u64; set.n_truth_total()];
        for (col, &j) in set.truth_bins_filled().iter().enumerate() {
            counts[j] = set.sim_truth_counts()[col];
        }
        Ok(mu
            .iter()
            .zip(&counts)
            .map(|(&m, &n)| ratio(m, n))
            .collect())
    } else {
        Err(Error::DimensionMismatch(format!(
            "truth vector has {} entries; expected {} (retained) or {} (full)",
            mu.len(),
            set.n_filled(),
            set.n_truth_total()
        )))
    }
}

/// Reconstructed-side coverage ratios: for each reconstructed bin, the worst
/// (largest) ratio of observed data count to simulated reconstructed count
/// across systematic toys. A bin with data but no simulated events is flagged
/// with +inf.
pub fn coverage_reco(
    set: &ResponseMatrixSet,
    reco_counts: &[Vec<u64>],
    data: &[u64],
) -> Result<Vec<f64>> {
    if data.len() != set.n_reco() {
        return Err(Error::DimensionMismatch(format!(
            "data vector has {} entries but the set has {} reconstructed bins",
            data.len(),
            set.n_reco()
        )));
    }
    if reco_counts.is_empty() {
        return Err(Error::InvalidArgument(
            "per-toy reconstructed counts must cover at least one toy".into(),
        ));
    }
    for (t, counts) in reco_counts.iter().enumerate() {
        if counts.len() != set.n_reco() {
            return Err(Error::DimensionMismatch(format!(
                "reconstructed counts of toy {t} have {} entries but the set has {} bins",
                counts.len(),
                set.n_reco()
            )));
        }
    }
    Ok((0..set.n_reco())
        .map(|i| {
            reco_counts
                .iter()
                .map(|counts| {
                    let n_sim = counts[i];
                    if n_sim > 0 {
                        data[i] as f64 / n_sim as f64
                    } else if data[i] == 0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0f64, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::Binning;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn simple_binnings() -> (Binning, Binning) {
        let reco = Binning::new(
            vec!["x".into()],
            vec![vec![0.0, 1.0, 2.0]],
        )
        .unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0, 2.0]],
        )
        .unwrap();
        (reco, truth)
    }

    fn event(true_x: f64, x: Option<f64>) -> EventRecord {
        let mut e = EventRecord::from_pairs([("true_x", true_x)]);
        if let Some(x) = x {
            e.values.insert("x".into(), x);
        }
        e
    }

    #[test]
    fn conjugate_counting_arithmetic() {
        // One truth bin, one reco bin; 3 events of which 2 reconstructed.
        let reco =
            Binning::new(vec!["x".into()], vec![vec![0.0, 1.0]]).unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        b.fill_event(&event(0.5, Some(0.5))).unwrap();
        b.fill_event(&event(0.5, Some(0.5))).unwrap();
        b.fill_event(&event(0.5, None)).unwrap();
        let p = b.posterior_params(0, 0).unwrap();
        assert_eq!(p.beta_star, 3.0);
        assert_eq!(p.beta_dagger, 2.0);
        let full = b.full_matrix(0).unwrap();
        assert_relative_eq!(full[0], 3.0 / 5.0 * 1.0, max_relative = 1e-14);
    }

    #[test]
    fn efficiency_posterior_none_reconstructed() {
        let reco =
            Binning::new(vec!["x".into()], vec![vec![0.0, 1.0]]).unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for _ in 0..98 {
            b.fill_event(&event(0.5, None)).unwrap();
        }
        let p = b.posterior_params(0, 0).unwrap();
        let eff = p.beta_star / (p.beta_star + p.beta_dagger);
        assert_relative_eq!(eff, 0.01, max_relative = 1e-14);
    }

    #[test]
    fn default_dirichlet_prior_scales_with_bin_count() {
        let reco = Binning::new(
            vec!["x".into()],
            vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]],
        )
        .unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let b = ResponseBuilder::new(reco, truth, 1).unwrap();
        assert_relative_eq!(b.alpha_prior(), 0.3, max_relative = 1e-14);

        // Few bins: the prior caps at 1.
        let (reco2, truth2) = simple_binnings();
        let b2 = ResponseBuilder::new(reco2, truth2, 1).unwrap();
        assert_eq!(b2.alpha_prior(), 1.0);
    }

    #[test]
    fn empty_builder_is_pure_prior() {
        // Single reco bin: efficiency prior Beta(1,1) has variance 1/12; the
        // migration vector is deterministic and the weight correction is the
        // pseudo-observation value 1 with zero variance.
        let reco =
            Binning::new(vec!["x".into()], vec![vec![0.0, 1.0]]).unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let b = ResponseBuilder::new(reco, truth, 1).unwrap();
        let full = b.full_matrix(0).unwrap();
        let var = b.full_mc_stat_variance(0).unwrap();
        // mean = 0.5 (prior efficiency) * 1 (migration) * 1 (weight)
        assert_relative_eq!(full[0], 0.5, max_relative = 1e-14);
        // variance: only the efficiency term contributes, p = 1, m = 1.
        assert_relative_eq!(var[0], 1.0 / 12.0, max_relative = 1e-14);
        assert!(b.filled_truth_bins().is_empty());
    }

    #[test]
    fn unweighted_events_have_zero_weight_variance() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for _ in 0..7 {
            b.fill_event(&event(0.5, Some(0.5))).unwrap();
        }
        // Weight sums: W = N = 7, V = 7 -> pseudo variance exactly zero.
        assert_eq!(pseudo_weight_variance(7.0, 7.0, 7), 0.0);
        // Variance of the matrix element must then carry no weight term:
        // doubling check via the identity on means.
        let full = b.full_matrix(0).unwrap();
        assert!(full[0] > 0.0);
    }

    #[test]
    fn weight_correction_ratio_and_scale_invariance() {
        let (reco, truth) = simple_binnings();
        let fill = |scale: f64| {
            let mut b = ResponseBuilder::new(reco.clone(), truth.clone(), 1).unwrap();
            let weights = [0.5, 1.5, 2.0, 0.25, 1.0, 3.0, 0.75, 1.25];
            for (k, &w) in weights.iter().enumerate() {
                // Alternate reconstructed target bin; all truth bin 0.
                let x = if k % 2 == 0 { Some(0.5) } else { Some(1.5) };
                let mut e = event(0.5, x);
                e.weight = w * scale;
                b.fill_event(&e).unwrap();
            }
            b
        };
        let b1 = fill(1.0);
        let b2 = fill(2.0);
        let m1 = b1.full_matrix(0).unwrap();
        let m2 = b2.full_matrix(0).unwrap();
        // The weight-correction ratio (and hence the matrix mean) is exactly
        // scale-invariant.
        for (a, b) in m1.iter().zip(&m2) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn relative_weight_variance_approximately_scale_invariant() {
        // The pseudo-observation of weight 1 breaks exact scale invariance of
        // the weight-mean variance at O(1/N); with many events the relative
        // variance under a doubled weight scale matches closely.
        let n = 20_000u64;
        let w = 1.3f64;
        let var1 = pseudo_weight_variance(w * n as f64, w * w * n as f64, n)
            / mean_weight(w * n as f64, n).powi(2);
        let var2 = pseudo_weight_variance(2.0 * w * n as f64, 4.0 * w * w * n as f64, n)
            / mean_weight(2.0 * w * n as f64, n).powi(2);
        // Identical weights: variance tiny but the pseudo-observation makes
        // it nonzero; ratios agree to O(1/N).
        assert_abs_diff_eq!(var1 * n as f64, var2 * n as f64, epsilon = 1e-3);
    }

    #[test]
    fn toy_weight_factors_enter_weight_sums_not_counts() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 2).unwrap();
        let mut e = event(0.5, Some(0.5));
        e.toy_weights = Some(vec![1.0, 2.0]);
        b.fill_event(&e).unwrap();
        // Toy 1 sees weight 2 and squared weight 4, but the count stays 1 and
        // the truth-side totals are toy-independent.
        assert_eq!(b.elem_counts[0][0], 1);
        assert_eq!(b.elem_counts[1][0], 1);
        assert_eq!(b.elem_weight[1][0], 2.0);
        assert_eq!(b.elem_weight_sq[1][0], 4.0);
        assert_eq!(b.truth_weight[0], 1.0);
    }

    #[test]
    fn toy_weight_length_mismatch_is_rejected() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 3).unwrap();
        let mut e = event(0.5, Some(0.5));
        e.toy_weights = Some(vec![1.0]);
        assert!(b.fill_event(&e).is_err());
    }

    #[test]
    fn truth_spill_collects_out_of_range_events() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        let mut e = event(5.0, Some(0.5));
        e.weight = 2.5;
        b.fill_event(&e).unwrap();
        assert_eq!(b.truth_spill(), 2.5);
        assert_eq!(b.truth_count(0), 0);
        assert_eq!(b.truth_count(1), 0);
    }

    #[test]
    fn merge_adds_accumulators() {
        let (reco, truth) = simple_binnings();
        let mut a = ResponseBuilder::new(reco.clone(), truth.clone(), 1).unwrap();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        a.fill_event(&event(0.5, Some(0.5))).unwrap();
        b.fill_event(&event(0.5, Some(1.5))).unwrap();
        b.fill_event(&event(1.5, None)).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.truth_count(0), 2);
        assert_eq!(a.truth_count(1), 1);
        let p = a.posterior_params(0, 0).unwrap();
        assert_eq!(p.beta_star, 3.0);
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for k in 0..50 {
            let x = if k % 3 == 0 { None } else { Some(0.5 + (k % 2) as f64) };
            b.fill_event(&event(0.5 + (k % 2) as f64, x)).unwrap();
        }
        let s1 = b.sample_toy_matrices(5, 42).unwrap();
        let s2 = b.sample_toy_matrices(5, 42).unwrap();
        assert_eq!(s1, s2);
        let s3 = b.sample_toy_matrices(5, 43).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn sampled_efficiencies_match_posterior_moments() {
        // One truth bin, one reco bin, unweighted: the sampled matrix entry
        // is exactly the Beta efficiency draw. Compare mean and variance
        // against the posterior moments within 5 standard errors.
        let reco =
            Binning::new(vec!["x".into()], vec![vec![0.0, 1.0]]).unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for k in 0..20 {
            let x = if k < 12 { Some(0.5) } else { None };
            b.fill_event(&event(0.5, x)).unwrap();
        }
        let p = b.posterior_params(0, 0).unwrap();
        let bs = p.beta_star;
        let bd = p.beta_dagger;
        let mean = bs / (bs + bd);
        let var = bs * bd / ((bs + bd).powi(2) * (bs + bd + 1.0));

        let n = 20_000;
        let set = b.sample_toy_matrices(n, 7).unwrap();
        let draws: Vec<f64> = (0..n).map(|s| set.matrix(s)[0]).collect();
        let sample_mean = draws.iter().sum::<f64>() / n as f64;
        let sample_var =
            draws.iter().map(|d| (d - sample_mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (var / n as f64).sqrt();
        assert!(
            (sample_mean - mean).abs() < 5.0 * se_mean,
            "sample mean {sample_mean} vs posterior mean {mean}"
        );
        // Standard error of the variance estimate for a Beta is of order
        // var * sqrt(2 / n); allow 5 of those.
        assert!(
            (sample_var - var).abs() < 5.0 * var * (2.0 / n as f64).sqrt(),
            "sample variance {sample_var} vs posterior variance {var}"
        );
    }

    #[test]
    fn sampled_migration_vectors_are_normalized() {
        let reco = Binning::new(
            vec!["x".into()],
            vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]],
        )
        .unwrap();
        let truth = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0]],
        )
        .unwrap();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for k in 0..40 {
            b.fill_event(&event(0.5, Some(k as f64 % 4.0 + 0.5))).unwrap();
        }
        // All 40 events reconstructed: the efficiency posterior is
        // Beta(41, 1); dividing each sampled column by its Beta draw leaves
        // the Dirichlet vector, which must sum to one.
        let set = b.sample_toy_matrices(200, 11).unwrap();
        for s in 0..set.n_matrices() {
            let m = set.matrix(s);
            let total: f64 = m.iter().sum();
            // sum_i eff * p_i = eff, and eff is in (0, 1).
            assert!(total > 0.0 && total < 1.0);
        }
    }

    #[test]
    fn mean_of_sampled_matrices_matches_posterior_mean() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for k in 0..100_000u64 {
            let tx = 0.5 + (k % 2) as f64;
            let x = match k % 10 {
                0..=5 => Some(tx),
                6 | 7 => Some(2.0 - tx + 0.5 - 0.5), // migrate to the other bin
                _ => None,
            };
            b.fill_event(&event(tx, x)).unwrap();
        }
        let n = 1_000;
        let set = b.sample_toy_matrices(n, 3).unwrap();
        let nominal = b.nominal_matrix(0).unwrap();
        let var = b.mc_stat_variance(0).unwrap();
        let f = set.n_filled();
        for idx in 0..nominal.len() {
            let mean: f64 =
                (0..n).map(|s| set.matrix(s)[idx]).sum::<f64>() / n as f64;
            let se = (var[idx] / n as f64).sqrt();
            assert!(
                (mean - nominal[idx]).abs() < 5.0 * se,
                "element {idx} of {}: sampled mean {mean}, posterior mean {} ({se})",
                f,
                nominal[idx]
            );
        }
    }

    #[test]
    fn toy_weight_factor_two_doubles_weight_sums() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 2).unwrap();
        let mut e = event(0.5, Some(0.5));
        e.toy_weights = Some(vec![1.0, 2.0]);
        b.fill_event(&e).unwrap();
        let m0 = b.full_matrix(0).unwrap();
        let m1 = b.full_matrix(1).unwrap();
        // Toy 1's element weight mean is 2 while the truth column mean stays
        // 1, so its matrix element is twice the nominal one.
        assert_relative_eq!(m1[0], 2.0 * m0[0], max_relative = 1e-12);
    }

    #[test]
    fn empty_columns_are_omitted_from_retained_matrices() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        b.fill_event(&event(1.5, Some(1.5))).unwrap();
        assert_eq!(b.filled_truth_bins(), vec![1]);
        let nominal = b.nominal_matrix(0).unwrap();
        assert_eq!(nominal.len(), 2); // 2 reco bins x 1 filled truth bin
        let set = b.sample_toy_matrices(3, 1).unwrap();
        assert_eq!(set.n_filled(), 1);
        assert_eq!(set.truth_bins_filled(), &[1]);
        assert_eq!(set.sim_truth_counts(), &[1]);
        assert_eq!(set.n_truth_total(), 2);
    }

    #[test]
    fn reduce_truth_vector_enforces_zero_on_removed_bins() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        b.fill_event(&event(1.5, Some(1.5))).unwrap();
        let set = b.sample_toy_matrices(2, 5).unwrap();
        assert_eq!(set.reduce_truth_vector(&[0.0, 0.7]).unwrap(), vec![0.7]);
        assert!(set.reduce_truth_vector(&[0.1, 0.7]).is_err());
        assert!(set.reduce_truth_vector(&[0.7]).is_err());
    }

    #[test]
    fn testability_requires_mu_strictly_below_counts() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for _ in 0..5 {
            b.fill_event(&event(0.5, Some(0.5))).unwrap();
        }
        let set = b.sample_toy_matrices(2, 5).unwrap();
        assert!(set.check_testable(&[4.9]).unwrap().testable);
        let at_limit = set.check_testable(&[5.0]).unwrap();
        assert!(!at_limit.testable);
        assert_eq!(at_limit.violations[0].bin, 0);
        assert_eq!(at_limit.violations[0].available, 5);
        // Full-length vector with mass on the removed bin 1.
        let removed = set.check_testable(&[1.0, 1.0]).unwrap();
        assert!(!removed.testable);
        assert_eq!(removed.violations[0].bin, 1);
        assert_eq!(removed.violations[0].available, 0);
    }

    #[test]
    fn coverage_ratios() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        for _ in 0..10 {
            b.fill_event(&event(0.5, Some(0.5))).unwrap();
        }
        for _ in 0..20 {
            b.fill_event(&event(1.5, Some(1.5))).unwrap();
        }
        let set = b.sample_toy_matrices(2, 9).unwrap();
        // Truth coverage: mu_j = N_j gives exactly 1.
        let cov = coverage_truth(&set, &[10.0, 20.0]).unwrap();
        assert_eq!(cov, vec![1.0, 1.0]);
        // Reco coverage: max over toys of n_i / N^t_i.
        let xi = coverage_reco(&set, &b.reco_counts(), &[5, 10]).unwrap();
        assert_eq!(xi, vec![0.5, 0.5]);
        // Division by zero flags +inf.
        let mut sparse = ResponseBuilder::new(
            b.reco_binning().clone(),
            b.truth_binning().clone(),
            1,
        )
        .unwrap();
        sparse.fill_event(&event(0.5, Some(0.5))).unwrap();
        let set2 = sparse.sample_toy_matrices(2, 9).unwrap();
        let xi2 = coverage_reco(&set2, &sparse.reco_counts(), &[1, 3]).unwrap();
        assert_eq!(xi2[0], 1.0);
        assert!(xi2[1].is_infinite());
    }

    #[test]
    fn max_coverage_over_multiple_toys() {
        // Two toys with different reconstructed counts: ratios are taken
        // against each and the worst one wins.
        let counts = vec![vec![10u64, 0], vec![20, 5]];
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        b.fill_event(&event(0.5, Some(0.5))).unwrap();
        let set = b.sample_toy_matrices(1, 1).unwrap();
        let xi = coverage_reco(&set, &counts, &[5, 0]).unwrap();
        assert_eq!(xi, vec![0.5f64.max(0.25), 0.0]);
    }

    #[test]
    fn reaggregation_matches_direct_fill() {
        let reco =
            Binning::new(vec!["x".into()], vec![vec![0.0, 2.0]]).unwrap();
        let fine = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]],
        )
        .unwrap();
        let coarse = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 2.0, 4.0]],
        )
        .unwrap();
        let mut b_fine = ResponseBuilder::new(reco.clone(), fine, 1).unwrap();
        let mut b_coarse = ResponseBuilder::new(reco, coarse.clone(), 1).unwrap();
        for k in 0..30 {
            let tx = (k % 4) as f64 + 0.5;
            let x = if k % 5 == 0 { None } else { Some(1.0) };
            let mut e = event(tx, x);
            e.weight = 1.0 + (k % 3) as f64 * 0.5;
            b_fine.fill_event(&e).unwrap();
            b_coarse.fill_event(&e).unwrap();
        }
        let re = b_fine.reaggregate_truth(&coarse).unwrap();
        assert_eq!(re.truth_counts, b_coarse.truth_counts);
        assert_eq!(re.truth_weight, b_coarse.truth_weight);
        assert_eq!(re.elem_counts, b_coarse.elem_counts);
        assert_eq!(re.elem_weight, b_coarse.elem_weight);
        assert_eq!(re.elem_weight_sq, b_coarse.elem_weight_sq);
    }

    #[test]
    fn reaggregation_rejects_foreign_edges() {
        let (reco, truth) = simple_binnings();
        let b = ResponseBuilder::new(reco, truth, 1).unwrap();
        let other = Binning::new(
            vec!["true_x".into()],
            vec![vec![0.0, 0.5, 2.0]],
        )
        .unwrap();
        assert!(b.reaggregate_truth(&other).is_err());
    }

    #[test]
    fn matrix_set_validation_catches_malformed_parts() {
        let meta = serde_json::json!({});
        // Mismatched matrix length.
        assert!(ResponseMatrixSet::from_parts(
            2,
            3,
            vec![0, 2],
            vec![4, 5],
            vec![vec![0.1; 3]],
            meta.clone()
        )
        .is_err());
        // Unsorted filled bins.
        assert!(ResponseMatrixSet::from_parts(
            2,
            3,
            vec![2, 0],
            vec![4, 5],
            vec![vec![0.1; 4]],
            meta.clone()
        )
        .is_err());
        // Negative matrix entry.
        assert!(ResponseMatrixSet::from_parts(
            2,
            3,
            vec![0, 2],
            vec![4, 5],
            vec![vec![0.1, 0.2, -0.1, 0.3]],
            meta.clone()
        )
        .is_err());
        // Zero count on a filled bin.
        assert!(ResponseMatrixSet::from_parts(
            2,
            3,
            vec![0, 2],
            vec![4, 0],
            vec![vec![0.1; 4]],
            meta.clone()
        )
        .is_err());
        // Well-formed.
        assert!(ResponseMatrixSet::from_parts(
            2,
            3,
            vec![0, 2],
            vec![4, 5],
            vec![vec![0.1; 4]],
            meta
        )
        .is_ok());
    }

    #[test]
    fn fold_applies_matrix_to_truth_vector() {
        let set = ResponseMatrixSet::from_parts(
            2,
            2,
            vec![0, 1],
            vec![10, 10],
            vec![vec![0.5, 0.1, 0.2, 0.4]],
            serde_json::json!({}),
        )
        .unwrap();
        let nu = set.fold(0, &[10.0, 20.0]).unwrap();
        assert_relative_eq!(nu[0], 0.5 * 10.0 + 0.1 * 20.0, max_relative = 1e-14);
        assert_relative_eq!(nu[1], 0.2 * 10.0 + 0.4 * 20.0, max_relative = 1e-14);
    }

    #[test]
    fn negative_event_weights_are_rejected() {
        let (reco, truth) = simple_binnings();
        let mut b = ResponseBuilder::new(reco, truth, 1).unwrap();
        let mut e = event(0.5, Some(0.5));
        e.weight = -1.0;
        assert!(b.fill_event(&e).is_err());
    }
}
