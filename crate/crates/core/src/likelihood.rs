//! Poisson likelihoods of binned data under folded truth hypotheses.
//!
//! A [`LikelihoodMachine`] owns an observed count vector and a
//! [`ResponseMatrixSet`]; the matrix-set toys express how uncertain the
//! response is. The machine combines the per-toy Poisson log-likelihoods of
//! a truth hypothesis either by averaging likelihoods over toys
//! ([`LikelihoodMode::Marginal`]) or by taking the best toy
//! ([`LikelihoodMode::Profile`]). Composite hypotheses map a small parameter
//! vector onto truth-bin means through non-negative templates and can be
//! maximized with the bounded simplex optimizer.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::optim::{maximize_bounded, FitOutcome, OptimizeOptions};
use crate::response::ResponseMatrixSet;
use crate::rng::stream_rng;
use crate::special::{ln_factorial, log_sum_exp};

/// RNG stream tag for fit start-point generation.
const STREAM_FIT_STARTS: u64 = 0xF17;

/// Log of the Poisson probability of observing `data` given per-bin means
/// `nu`, summed over bins. Bins with zero mean contribute 0 when empty and
/// drive the result to negative infinity when populated; negative or
/// non-finite means are errors.
pub fn poisson_log_likelihood(data: &[u64], nu: &[f64]) -> Result<f64> {
    if data.len() != nu.len() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} bins but the prediction has {}",
            data.len(),
            nu.len()
        )));
    }
    let mut total = 0.0;
    for (&n, &mean) in data.iter().zip(nu) {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Poisson mean must be finite and non-negative, got {mean}"
            )));
        }
        if n == 0 {
            total -= mean;
        } else if mean == 0.0 {
            return Ok(f64::NEG_INFINITY);
        } else {
            total += n as f64 * mean.ln() - mean - ln_factorial(n);
        }
    }
    Ok(total)
}

/// How per-toy likelihoods combine into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// Average the per-toy likelihoods (mean in probability space).
    Marginal,
    /// Take the likelihood of the best toy.
    Profile,
}

/// A composite hypothesis: a low-dimensional parameter vector mapped onto
/// truth-bin means through non-negative templates, with per-parameter
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeHypothesis {
    kind: HypothesisKind,
    bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
enum HypothesisKind {
    /// mu(theta) = sum_k theta_k * template_k
    TemplateLinear { templates: Vec<Vec<f64>> },
    /// mu(theta) = fixed + sum_k theta_k * template_k
    FixedPlusTemplate {
        fixed: Vec<f64>,
        templates: Vec<Vec<f64>>,
    },
}

fn validate_templates(templates: &[Vec<f64>]) -> Result<usize> {
    if templates.is_empty() {
        return Err(Error::InvalidArgument(
            "a composite hypothesis needs at least one template".into(),
        ));
    }
    let len = templates[0].len();
    if len == 0 {
        return Err(Error::InvalidArgument("templates must not be empty".into()));
    }
    for (k, t) in templates.iter().enumerate() {
        if t.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "template {k} has {} bins but template 0 has {len}",
                t.len()
            )));
        }
        if let Some(v) = t.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "template {k} contains the non-physical entry {v}"
            )));
        }
    }
    Ok(len)
}

impl CompositeHypothesis {
    /// Hypothesis whose truth means are a non-negative linear combination of
    /// templates; parameters default to the bound `[0, +inf)`.
    pub fn template_linear(templates: Vec<Vec<f64>>) -> Result<Self> {
        validate_templates(&templates)?;
        let bounds = vec![(0.0, f64::INFINITY); templates.len()];
        Ok(Self {
            kind: HypothesisKind::TemplateLinear { templates },
            bounds,
        })
    }

    /// Hypothesis with a fixed non-negative truth component plus scaled
    /// templates.
    pub fn fixed_plus_template(fixed: Vec<f64>, templates: Vec<Vec<f64>>) -> Result<Self> {
        let len = validate_templates(&templates)?;
        if fixed.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "fixed component has {} bins but the templates have {len}",
                fixed.len()
            )));
        }
        if let Some(v) = fixed.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "fixed component contains the non-physical entry {v}"
            )));
        }
        let bounds = vec![(0.0, f64::INFINITY); templates.len()];
        Ok(Self {
            kind: HypothesisKind::FixedPlusTemplate { fixed, templates },
            bounds,
        })
    }

    /// Replaces the parameter bounds. Lower bounds must be non-negative so
    /// that every reachable parameter point maps to non-negative truth
    /// means.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} bounds supplied for {} parameters",
                bounds.len(),
                self.dim()
            )));
        }
        for &(lo, hi) in &bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "invalid bound [{lo}, {hi}]"
                )));
            }
            if lo < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "template scale bounds must be non-negative, got lower bound {lo}"
                )));
            }
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// Number of parameters.
    pub fn dim(&self) -> usize {
        match &self.kind {
            HypothesisKind::TemplateLinear { templates }
            | HypothesisKind::FixedPlusTemplate { templates, .. } => templates.len(),
        }
    }

    /// Number of truth bins the hypothesis populates.
    pub fn truth_dim(&self) -> usize {
        match &self.kind {
            HypothesisKind::TemplateLinear { templates }
            | HypothesisKind::FixedPlusTemplate { templates, .. } => templates[0].len(),
        }
    }

    /// Per-parameter bounds.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Maps a parameter point to truth-bin means.
    pub fn translate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter point has {} coordinates but the hypothesis has {}",
                theta.len(),
                self.dim()
            )));
        }
        let mut mu = match &self.kind {
            HypothesisKind::TemplateLinear { templates } => vec![0.0; templates[0].len()],
            HypothesisKind::FixedPlusTemplate { fixed, .. } => fixed.clone(),
        };
        let templates = match &self.kind {
            HypothesisKind::TemplateLinear { templates }
            | HypothesisKind::FixedPlusTemplate { templates, .. } => templates,
        };
        for (t, &scale) in templates.iter().zip(theta) {
            for (m, v) in mu.iter_mut().zip(t) {
                *m += scale * v;
            }
        }
        if let Some(v) = mu.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "parameter point maps to the negative truth mean {v}"
            )));
        }
        Ok(mu)
    }

    /// Returns a copy with parameter `index` pinned to `value` (its bound
    /// collapses to a point), for profile scans over one parameter.
    pub fn fix_param(&self, index: usize, value: f64) -> Result<Self> {
        if index >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter index {index} out of range ({} parameters)",
                self.dim()
            )));
        }
        let (lo, hi) = self.bounds[index];
        if !(value >= lo && value <= hi) {
            return Err(Error::InvalidArgument(format!(
                "cannot fix parameter {index} to {value}: outside its bound [{lo}, {hi}]"
            )));
        }
        let mut out = self.clone();
        out.bounds[index] = (value, value);
        Ok(out)
    }

    fn templates(&self) -> &[Vec<f64>] {
        match &self.kind {
            HypothesisKind::TemplateLinear { templates }
            | HypothesisKind::FixedPlusTemplate { templates, .. } => templates,
        }
    }

    fn fixed_component(&self) -> Option<&[f64]> {
        match &self.kind {
            HypothesisKind::TemplateLinear { .. } => None,
            HypothesisKind::FixedPlusTemplate { fixed, .. } => Some(fixed),
        }
    }
}

/// Result of a likelihood maximization.
#[derive(Debug, Clone)]
pub struct MaxFit {
    /// Maximized log-likelihood.
    pub log_likelihood: f64,
    /// Argmax parameter point.
    pub theta: Vec<f64>,
    /// Whether the optimizer converged on every start.
    pub converged: bool,
}

/// Observed data plus a response-matrix set, with a rule for combining the
/// per-toy likelihoods.
#[derive(Debug, Clone)]
pub struct LikelihoodMachine {
    data: Vec<u64>,
    matrices: ResponseMatrixSet,
    mode: LikelihoodMode,
}

impl LikelihoodMachine {
    /// Binds an observed count vector to a matrix set.
    pub fn new(data: Vec<u64>, matrices: ResponseMatrixSet, mode: LikelihoodMode) -> Result<Self> {
        if data.len() != matrices.n_reco() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} bins but the matrices have {} reconstructed bins",
                data.len(),
                matrices.n_reco()
            )));
        }
        Ok(Self {
            data,
            matrices,
            mode,
        })
    }

    /// The observed counts.
    pub fn data(&self) -> &[u64] {
        &self.data
    }

    /// The response-matrix set.
    pub fn matrices(&self) -> &ResponseMatrixSet {
        &self.matrices
    }

    /// The toy-combination mode.
    pub fn mode(&self) -> LikelihoodMode {
        self.mode
    }

    /// Log-likelihood of a truth hypothesis given in retained truth bins.
    pub fn log_likelihood(&self, mu: &[f64]) -> Result<f64> {
        self.log_likelihood_of(&self.data, mu)
    }

    /// Log-likelihood of `mu` for an alternative data vector under the same
    /// matrices and mode (the replica loops of p-value computations).
    pub fn log_likelihood_of(&self, data: &[u64], mu: &[f64]) -> Result<f64> {
        if data.len() != self.matrices.n_reco() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} bins but the matrices have {} reconstructed bins",
                data.len(),
                self.matrices.n_reco()
            )));
        }
        if let Some(v) = mu.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "truth means must be finite and non-negative, got {v}"
            )));
        }
        let n_toys = self.matrices.n_matrices();
        let mut per_toy = Vec::with_capacity(n_toys);
        for t in 0..n_toys {
            let nu = self.matrices.fold(t, mu)?;
            per_toy.push(poisson_log_likelihood(data, &nu)?);
        }
        Ok(combine_toys(&per_toy, self.mode))
    }

    /// Log-likelihood of the saturated model: one free mean per bin, each
    /// equal to the observed count. Independent of the matrices; the
    /// reference point for likelihood ratios and goodness-of-fit.
    pub fn saturated_log_likelihood(&self) -> f64 {
        self.data
            .iter()
            .map(|&n| {
                if n == 0 {
                    0.0
                } else {
                    let nf = n as f64;
                    nf * nf.ln() - nf - ln_factorial(n)
                }
            })
            .sum()
    }

    /// Likelihood ratio of `mu` against a reference maximum, clamped into
    /// [0, 1]. A log-likelihood visibly above the reference (beyond 1e-9)
    /// indicates a failed maximization upstream and is an error.
    pub fn likelihood_ratio(&self, mu: &[f64], max_log_likelihood: f64) -> Result<f64> {
        let ll = self.log_likelihood(mu)?;
        if ll > max_log_likelihood + 1e-9 {
            return Err(Error::Numerical(format!(
                "log-likelihood {ll} exceeds the supposed maximum {max_log_likelihood}; \
                 the reference fit did not converge"
            )));
        }
        Ok((ll - max_log_likelihood).exp().clamp(0.0, 1.0))
    }

    /// Maximizes the log-likelihood of a composite hypothesis with
    /// `n_starts` deterministic pseudo-random start points derived from
    /// `seed`.
    pub fn max_log_likelihood(
        &self,
        hyp: &CompositeHypothesis,
        n_starts: usize,
        seed: u64,
    ) -> Result<MaxFit> {
        let folded = FoldedFit::new(&self.matrices, hyp, self.mode)?;
        folded.maximize(&self.data, n_starts, seed, None)
    }
}

/// Combines per-toy log-likelihoods according to the mode. The marginal
/// average is evaluated in log space with a fixed-order pairwise sum, so the
/// result is reproducible across runs and thread counts.
pub(crate) fn combine_toys(per_toy: &[f64], mode: LikelihoodMode) -> f64 {
    match mode {
        LikelihoodMode::Marginal => log_sum_exp(per_toy) - (per_toy.len() as f64).ln(),
        LikelihoodMode::Profile => per_toy.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// A composite hypothesis folded through every toy matrix once, so that each
/// objective evaluation costs one small dot product per toy instead of a
/// matrix product. Shared by the fit loops of p-value replicas.
pub(crate) struct FoldedFit<'h> {
    hyp: &'h CompositeHypothesis,
    mode: LikelihoodMode,
    /// Folded fixed component per toy (zeros for purely linear hypotheses).
    fixed: Vec<Vec<f64>>,
    /// Folded template per toy per parameter.
    templates: Vec<Vec<Vec<f64>>>,
    /// Sum over retained truth bins of each template (moment-matching).
    template_reco_totals: Vec<f64>,
    n_reco: usize,
}

impl<'h> FoldedFit<'h> {
    pub(crate) fn new(
        set: &ResponseMatrixSet,
        hyp: &'h CompositeHypothesis,
        mode: LikelihoodMode,
    ) -> Result<Self> {
        if hyp.truth_dim() != set.n_filled() {
            return Err(Error::DimensionMismatch(format!(
                "hypothesis populates {} truth bins but the matrices retain {}",
                hyp.truth_dim(),
                set.n_filled()
            )));
        }
        let n_toys = set.n_matrices();
        let zeros = vec![0.0; set.n_filled()];
        let mut fixed = Vec::with_capacity(n_toys);
        let mut templates = Vec::with_capacity(n_toys);
        for t in 0..n_toys {
            fixed.push(set.fold(t, hyp.fixed_component().unwrap_or(&zeros))?);
            templates.push(
                hyp.templates()
                    .iter()
                    .map(|tpl| set.fold(t, tpl))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        // Nominal-toy folded totals drive the moment-matched start point.
        let template_reco_totals = templates[0]
            .iter()
            .map(|folded| folded.iter().sum())
            .collect();
        Ok(Self {
            hyp,
            mode,
            fixed,
            templates,
            template_reco_totals,
            n_reco: set.n_reco(),
        })
    }

    /// Number of toy matrices the templates were folded through.
    pub(crate) fn n_toys(&self) -> usize {
        self.fixed.len()
    }

    /// Log-likelihood of the data under one specific toy matrix, with the
    /// toy index treated as a parameter rather than combined away.
    /// `sum_ln_fact` is the data-dependent constant `sum_i ln(n_i!)`,
    /// precomputed by the caller.
    pub(crate) fn log_likelihood_toy(
        &self,
        data: &[u64],
        sum_ln_fact: f64,
        theta: &[f64],
        t: usize,
    ) -> f64 {
        let mut ll = -sum_ln_fact;
        let fixed = &self.fixed[t];
        let tpls = &self.templates[t];
        for i in 0..self.n_reco {
            let mut nu = fixed[i];
            for (tpl, &scale) in tpls.iter().zip(theta) {
                nu += scale * tpl[i];
            }
            let n = data[i];
            if n == 0 {
                ll -= nu;
            } else if nu <= 0.0 {
                return f64::NEG_INFINITY;
            } else {
                ll += n as f64 * nu.ln() - nu;
            }
        }
        ll
    }

    /// Log-likelihood at a parameter point for the given data, using the
    /// folded templates. `sum_ln_fact` is the data-dependent constant
    /// `sum_i ln(n_i!)`, precomputed by the caller.
    fn log_likelihood(&self, data: &[u64], sum_ln_fact: f64, theta: &[f64]) -> f64 {
        let n_toys = self.fixed.len();
        let mut per_toy = Vec::with_capacity(n_toys);
        for t in 0..n_toys {
            per_toy.push(self.log_likelihood_toy(data, sum_ln_fact, theta, t));
        }
        combine_toys(&per_toy, self.mode)
    }

    /// Maximizes over the hypothesis bounds. Start points: an optional warm
    /// start first, then a moment-matched point (total data over total
    /// folded template), then seeded pseudo-random points. Deterministic in
    /// `seed`.
    pub(crate) fn maximize(
        &self,
        data: &[u64],
        n_starts: usize,
        seed: u64,
        warm: Option<&[f64]>,
    ) -> Result<MaxFit> {
        if n_starts == 0 {
            return Err(Error::InvalidArgument(
                "at least one start point is required".into(),
            ));
        }
        if data.len() != self.n_reco {
            return Err(Error::DimensionMismatch(format!(
                "data has {} bins but the matrices have {} reconstructed bins",
                data.len(),
                self.n_reco
            )));
        }
        let sum_ln_fact: f64 = data.iter().map(|&n| ln_factorial(n)).sum();
        let bounds = self.hyp.bounds();
        let total_data: f64 = data.iter().map(|&n| n as f64).sum();

        let clamp = |theta: Vec<f64>| -> Vec<f64> {
            theta
                .into_iter()
                .zip(bounds)
                .map(|(v, &(lo, hi))| v.clamp(lo, hi.min(f64::MAX)))
                .collect()
        };

        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(n_starts + 1);
        if let Some(w) = warm {
            if w.len() != bounds.len() {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} coordinates but the hypothesis has {}",
                    w.len(),
                    bounds.len()
                )));
            }
            starts.push(clamp(w.to_vec()));
        }
        // Moment-matched start: share the observed total among templates in
        // proportion to nothing fancier than an even split per template.
        let k = bounds.len();
        let moment: Vec<f64> = (0..k)
            .map(|p| {
                let denom = self.template_reco_totals[p].max(1e-12);
                (total_data / (k as f64) / denom).max(1e-3)
            })
            .collect();
        starts.push(clamp(moment.clone()));
        let mut rng = stream_rng(seed, STREAM_FIT_STARTS, 0);
        while starts.len() < n_starts + warm.map_or(0, |_| 1) {
            let point: Vec<f64> = (0..k)
                .map(|p| {
                    let (lo, hi) = bounds[p];
                    if lo.is_finite() && hi.is_finite() {
                        lo + (hi - lo) * rng.random::<f64>()
                    } else {
                        let z: f64 = rng.sample(StandardNormal);
                        moment[p] * (1.5 * z).exp()
                    }
                })
                .collect();
            starts.push(clamp(point));
        }

        let opts = OptimizeOptions::default();
        let outcome: FitOutcome = maximize_bounded(
            |theta| self.log_likelihood(data, sum_ln_fact, theta),
            bounds,
            &starts,
            &opts,
        )?;
        Ok(MaxFit {
            log_likelihood: outcome.f,
            theta: outcome.x,
            converged: outcome.converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_bin_set(values: &[f64]) -> ResponseMatrixSet {
        ResponseMatrixSet::from_parts(
            1,
            1,
            vec![0],
            vec![1_000_000],
            values.iter().map(|&v| vec![v]).collect(),
            serde_json::json!({}),
        )
        .unwrap()
    }

    fn identity_set(n: usize) -> ResponseMatrixSet {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        ResponseMatrixSet::from_parts(
            n,
            n,
            (0..n).collect(),
            vec![1_000_000; n],
            vec![m],
            serde_json::json!({}),
        )
        .unwrap()
    }

    #[test]
    fn poisson_log_likelihood_reference_value() {
        // ln pmf(2; 3) = 2 ln 3 - 3 - ln 2
        let ll = poisson_log_likelihood(&[2], &[3.0]).unwrap();
        assert_relative_eq!(ll, -1.4959226032237259, max_relative = 1e-14);
    }

    #[test]
    fn poisson_zero_mean_conventions() {
        assert_eq!(poisson_log_likelihood(&[0], &[0.0]).unwrap(), 0.0);
        assert_eq!(
            poisson_log_likelihood(&[3], &[0.0]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(poisson_log_likelihood(&[1], &[-0.5]).is_err());
        assert!(poisson_log_likelihood(&[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn marginal_averages_toys_profile_takes_best() {
        // Two toys folding mu = 1 to means 1 and 3, observed count 2.
        let set = single_bin_set(&[1.0, 3.0]);
        let a = poisson_log_likelihood(&[2], &[1.0]).unwrap();
        let b = poisson_log_likelihood(&[2], &[3.0]).unwrap();

        let marginal = LikelihoodMachine::new(vec![2], set.clone(), LikelihoodMode::Marginal)
            .unwrap()
            .log_likelihood(&[1.0])
            .unwrap();
        let expected = log_sum_exp(&[a, b]) - 2f64.ln();
        assert_relative_eq!(marginal, expected, max_relative = 1e-14);

        let profile = LikelihoodMachine::new(vec![2], set, LikelihoodMode::Profile)
            .unwrap()
            .log_likelihood(&[1.0])
            .unwrap();
        assert_relative_eq!(profile, a.max(b), max_relative = 1e-14);
        assert!(marginal <= profile);
    }

    #[test]
    fn marginal_never_exceeds_profile() {
        let set = ResponseMatrixSet::from_parts(
            2,
            2,
            vec![0, 1],
            vec![100, 100],
            vec![
                vec![0.7, 0.1, 0.2, 0.6],
                vec![0.6, 0.2, 0.1, 0.7],
                vec![0.5, 0.3, 0.3, 0.5],
            ],
            serde_json::json!({}),
        )
        .unwrap();
        for mu in [[3.0, 8.0], [10.0, 0.5], [0.0, 4.0]] {
            let m = LikelihoodMachine::new(vec![4, 5], set.clone(), LikelihoodMode::Marginal)
                .unwrap()
                .log_likelihood(&mu)
                .unwrap();
            let p = LikelihoodMachine::new(vec![4, 5], set.clone(), LikelihoodMode::Profile)
                .unwrap()
                .log_likelihood(&mu)
                .unwrap();
            assert!(m <= p + 1e-12, "marginal {m} > profile {p}");
        }
    }

    #[test]
    fn toy_permutation_leaves_marginal_unchanged() {
        let set_a = single_bin_set(&[1.0, 2.0, 3.0, 4.0]);
        let set_b = single_bin_set(&[4.0, 2.0, 1.0, 3.0]);
        let ll_a = LikelihoodMachine::new(vec![3], set_a, LikelihoodMode::Marginal)
            .unwrap()
            .log_likelihood(&[1.0])
            .unwrap();
        let ll_b = LikelihoodMachine::new(vec![3], set_b, LikelihoodMode::Marginal)
            .unwrap()
            .log_likelihood(&[1.0])
            .unwrap();
        assert_relative_eq!(ll_a, ll_b, max_relative = 1e-13);
    }

    #[test]
    fn saturated_log_likelihood_value_and_dominance()
    {
        let set = identity_set(1);
        let machine = LikelihoodMachine::new(vec![4], set, LikelihoodMode::Marginal).unwrap();
        // 4 ln 4 - 4 - ln 4!
        assert_relative_eq!(
            machine.saturated_log_likelihood(),
            -1.6328763858683831,
            max_relative = 1e-14
        );
        // The saturated value dominates any hypothesis.
        for mu in [0.5, 2.0, 4.0, 4.7, 9.0] {
            let ll = machine.log_likelihood(&[mu]).unwrap();
            assert!(ll <= machine.saturated_log_likelihood() + 1e-12);
        }
        // Empty bins contribute zero.
        let empty = LikelihoodMachine::new(
            vec![0, 0],
            identity_set(2),
            LikelihoodMode::Marginal,
        )
        .unwrap();
        assert_eq!(empty.saturated_log_likelihood(), 0.0);
    }

    #[test]
    fn likelihood_ratio_clamps_and_guards() {
        let set = identity_set(1);
        let machine = LikelihoodMachine::new(vec![4], set, LikelihoodMode::Marginal).unwrap();
        let at_max = machine.log_likelihood(&[4.0]).unwrap();
        // Ratio at the maximizing point is 1.
        assert_relative_eq!(
            machine.likelihood_ratio(&[4.0], at_max).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        // Away from the maximum the ratio drops below 1.
        let lambda = machine.likelihood_ratio(&[2.0], at_max).unwrap();
        assert!(lambda > 0.0 && lambda < 1.0);
        // A reference visibly below the actual value is an upstream failure.
        assert!(machine.likelihood_ratio(&[4.0], at_max - 1e-6).is_err());
        // Sub-tolerance overshoot clamps to exactly 1.
        assert_eq!(
            machine.likelihood_ratio(&[4.0], at_max - 1e-12).unwrap(),
            1.0
        );
    }

    #[test]
    fn hypothesis_construction_and_translation() {
        let hyp =
            CompositeHypothesis::template_linear(vec![vec![1.0, 2.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(hyp.dim(), 2);
        assert_eq!(hyp.truth_dim(), 2);
        assert_eq!(hyp.translate(&[2.0, 4.0]).unwrap(), vec![4.0, 4.0]);

        let hyp =
            CompositeHypothesis::fixed_plus_template(vec![1.0, 1.0], vec![vec![1.0, 0.0]])
                .unwrap();
        assert_eq!(hyp.translate(&[3.0]).unwrap(), vec![4.0, 1.0]);

        // Negative template entries are non-physical.
        assert!(CompositeHypothesis::template_linear(vec![vec![-1.0]]).is_err());
        // Mismatched template lengths.
        assert!(
            CompositeHypothesis::template_linear(vec![vec![1.0], vec![1.0, 2.0]]).is_err()
        );
        // Negative lower bounds would allow negative truth means.
        assert!(CompositeHypothesis::template_linear(vec![vec![1.0]])
            .unwrap()
            .with_bounds(vec![(-1.0, 5.0)])
            .is_err());
    }

    #[test]
    fn fix_param_collapses_one_bound() {
        let hyp = CompositeHypothesis::template_linear(vec![vec![1.0], vec![1.0]])
            .unwrap()
            .with_bounds(vec![(0.0, 10.0), (0.0, 10.0)])
            .unwrap();
        let fixed = hyp.fix_param(0, 3.0).unwrap();
        assert_eq!(fixed.bounds()[0], (3.0, 3.0));
        assert_eq!(fixed.bounds()[1], (0.0, 10.0));
        assert!(hyp.fix_param(0, 11.0).is_err());
        assert!(hyp.fix_param(2, 1.0).is_err());
    }

    #[test]
    fn fit_recovers_unit_scale_for_self_template() {
        // Template equal to the data folded through an identity response:
        // the maximum-likelihood scale is exactly 1 and the fit reaches the
        // saturated log-likelihood.
        let set = identity_set(2);
        let data = vec![5u64, 7];
        let machine = LikelihoodMachine::new(data, set, LikelihoodMode::Marginal).unwrap();
        let hyp = CompositeHypothesis::template_linear(vec![vec![5.0, 7.0]]).unwrap();
        let fit = machine.max_log_likelihood(&hyp, 4, 1).unwrap();
        assert!(
            (fit.theta[0] - 1.0).abs() < 1e-6,
            "theta = {:?}",
            fit.theta
        );
        assert_relative_eq!(
            fit.log_likelihood,
            machine.saturated_log_likelihood(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn fit_on_empty_data_sits_on_the_boundary() {
        let set = identity_set(1);
        let machine = LikelihoodMachine::new(vec![0], set, LikelihoodMode::Marginal).unwrap();
        let hyp = CompositeHypothesis::template_linear(vec![vec![1.0]]).unwrap();
        let fit = machine.max_log_likelihood(&hyp, 4, 1).unwrap();
        assert!(fit.theta[0].abs() < 1e-6, "theta = {:?}", fit.theta);
        assert!(fit.log_likelihood.abs() < 1e-6);
    }

    #[test]
    fn fit_is_deterministic_in_seed() {
        let set = ResponseMatrixSet::from_parts(
            2,
            2,
            vec![0, 1],
            vec![100_000, 100_000],
            vec![
                vec![0.7, 0.1, 0.2, 0.6],
                vec![0.65, 0.15, 0.25, 0.55],
            ],
            serde_json::json!({}),
        )
        .unwrap();
        let machine =
            LikelihoodMachine::new(vec![40, 60], set, LikelihoodMode::Marginal).unwrap();
        let hyp = CompositeHypothesis::template_linear(vec![
            vec![50.0, 10.0],
            vec![5.0, 80.0],
        ])
        .unwrap();
        let f1 = machine.max_log_likelihood(&hyp, 6, 9).unwrap();
        let f2 = machine.max_log_likelihood(&hyp, 6, 9).unwrap();
        assert_eq!(f1.theta, f2.theta);
        assert_eq!(f1.log_likelihood, f2.log_likelihood);
    }

    #[test]
    fn fixed_plus_template_fit_respects_background() {
        // Identity response, fixed background 3 in each of two bins, one
        // signal template [1, 0]; data [10, 3]: the signal scale fits the
        // excess in bin 0 (theta = 7) while bin 1 matches the background.
        let set = identity_set(2);
        let machine =
            LikelihoodMachine::new(vec![10, 3], set, LikelihoodMode::Marginal).unwrap();
        let hyp = CompositeHypothesis::fixed_plus_template(
            vec![3.0, 3.0],
            vec![vec![1.0, 0.0]],
        )
        .unwrap();
        let fit = machine.max_log_likelihood(&hyp, 4, 2).unwrap();
        assert!((fit.theta[0] - 7.0).abs() < 1e-5, "theta = {:?}", fit.theta);
    }

    #[test]
    fn machine_validates_dimensions() {
        let set = identity_set(2);
        assert!(LikelihoodMachine::new(vec![1], set.clone(), LikelihoodMode::Marginal).is_err());
        let machine = LikelihoodMachine::new(vec![1, 2], set, LikelihoodMode::Marginal).unwrap();
        assert!(machine.log_likelihood(&[1.0]).is_err());
        assert!(machine.log_likelihood(&[1.0, -2.0]).is_err());
        let hyp = CompositeHypothesis::template_linear(vec![vec![1.0]]).unwrap();
        assert!(machine.max_log_likelihood(&hyp, 2, 1).is_err());
    }
}
