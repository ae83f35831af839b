//! Rectangular multi-variable binnings, event records, histogram filling,
//! and truth-binning optimisation by merging.
//!
//! A [`Binning`] is an ordered list of named variables, each with a strictly
//! increasing edge list.  Bins are the product of per-variable intervals,
//! left-closed / right-open; an outermost edge of `-inf`/`+inf` turns the
//! first/last interval into an open-ended bin.  Bins are addressed by a
//! row-major linear index over the variables in declared order (first
//! variable slowest, last variable fastest).
//!
//! The truth-binning optimiser merges neighbouring bins (by removing edges)
//! until the mean simulated occupancy reaches a target, keeping the
//! normalised in-bin variation of the response matrix below a limit.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response::ResponseBuilder;

/// One simulated or measured event: named variable values plus weights.
///
/// A variable that is absent from `values` is "blank" (e.g. an event that
/// was not reconstructed); any binning that requires it maps the event to
/// no bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Variable name → value.  Missing key = value not available.
    pub values: IndexMap<String, f64>,
    /// Event weight; defaults to 1.
    pub weight: f64,
    /// Optional per-systematic-toy weight factors relative to nominal.
    pub toy_weights: Option<Vec<f64>>,
}

impl Default for EventRecord {
    fn default() -> Self {
        EventRecord {
            values: IndexMap::new(),
            weight: 1.0,
            toy_weights: None,
        }
    }
}

impl EventRecord {
    /// Event with the given `(name, value)` pairs and weight 1.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        EventRecord {
            values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            ..EventRecord::default()
        }
    }

    /// Same event with a different weight.
    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Same event with systematic-toy weight factors.
    pub fn with_toy_weights(mut self, toy_weights: Vec<f64>) -> Self {
        self.toy_weights = Some(toy_weights);
        self
    }
}

/// A rectangular binning over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    variables: Vec<String>,
    edges: Vec<Vec<f64>>,
    /// Row-major stride per variable (first variable slowest).
    strides: Vec<usize>,
    n_bins: usize,
}

impl Binning {
    /// Build a binning from variable names and per-variable edge lists
    /// (aligned by position), validating all invariants.
    pub fn new(variables: Vec<String>, edges: Vec<Vec<f64>>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidBinning("no variables declared".into()));
        }
        if variables.len() != edges.len() {
            return Err(Error::InvalidBinning(format!(
                "{} variables but {} edge lists",
                variables.len(),
                edges.len()
            )));
        }
        for (i, name) in variables.iter().enumerate() {
            if variables[..i].contains(name) {
                return Err(Error::InvalidBinning(format!(
                    "duplicate variable name '{name}'"
                )));
            }
        }
        for (name, list) in variables.iter().zip(&edges) {
            if list.len() < 2 {
                return Err(Error::InvalidBinning(format!(
                    "variable '{name}' has {} edge(s); at least 2 required",
                    list.len()
                )));
            }
            for pair in list.windows(2) {
                if pair[0].is_nan() || pair[1].is_nan() {
                    return Err(Error::InvalidBinning(format!(
                        "variable '{name}' has a NaN edge"
                    )));
                }
                if pair[0] >= pair[1] {
                    return Err(Error::InvalidBinning(format!(
                        "variable '{name}' edges not strictly increasing: {} >= {}",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        let mut strides = vec![0usize; variables.len()];
        let mut acc = 1usize;
        for (i, list) in edges.iter().enumerate().rev() {
            strides[i] = acc;
            acc *= list.len() - 1;
        }
        Ok(Binning {
            variables,
            edges,
            strides,
            n_bins: acc,
        })
    }

    /// Variable names in linearisation order.
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Edge list of variable `v` (by position).
    pub fn edges(&self, v: usize) -> &[f64] {
        &self.edges[v]
    }

    /// Number of variables.
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Total bin count (product over variables of interval counts).
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Bins along variable `v`.
    pub fn n_axis_bins(&self, v: usize) -> usize {
        self.edges[v].len() - 1
    }

    /// Interval index along one variable: largest `k` with
    /// `edges[k] <= value < edges[k+1]`.  `None` outside the covered range
    /// or for NaN.
    pub fn axis_bin(&self, v: usize, value: f64) -> Option<usize> {
        if value.is_nan() {
            return None;
        }
        let list = &self.edges[v];
        let pos = list.partition_point(|e| *e <= value);
        if pos == 0 || pos == list.len() {
            // Below the first edge, or at/above the last.  A last edge of
            // +inf never triggers this (any finite value sorts below it).
            None
        } else {
            Some(pos - 1)
        }
    }

    /// Linear bin index of an event, or `None` if any required variable is
    /// missing or any value falls outside the covered range.
    pub fn bin_index(&self, event: &EventRecord) -> Option<usize> {
        let mut index = 0usize;
        for (v, name) in self.variables.iter().enumerate() {
            let value = *event.values.get(name)?;
            index += self.axis_bin(v, value)? * self.strides[v];
        }
        Some(index)
    }

    /// Per-variable interval tuple of a linear index.
    pub fn index_to_tuple(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.n_bins);
        self.strides
            .iter()
            .zip(&self.edges)
            .map(|(stride, list)| (index / stride) % (list.len() - 1))
            .collect()
    }

    /// Linear index of a per-variable interval tuple.
    pub fn tuple_to_index(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.variables.len());
        tuple
            .iter()
            .zip(&self.strides)
            .map(|(t, s)| t * s)
            .sum()
    }

    /// Linear indices of the axis-adjacent neighbours of `index`: bins whose
    /// tuple differs by ±1 along exactly one variable.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let tuple = self.index_to_tuple(index);
        let mut out = Vec::with_capacity(2 * tuple.len());
        for (v, &t) in tuple.iter().enumerate() {
            if t > 0 {
                out.push(index - self.strides[v]);
            }
            if t + 1 < self.n_axis_bins(v) {
                out.push(index + self.strides[v]);
            }
        }
        out
    }

    /// Render the binning document (inverse of [`parse_binning`]).
    pub fn to_document(&self) -> String {
        let doc = BinningDoc {
            variables: self.variables.clone(),
            edges: self
                .variables
                .iter()
                .cloned()
                .zip(self.edges.clone())
                .collect(),
        };
        serde_yaml::to_string(&doc).expect("binning document serialization cannot fail")
    }
}

/// On-disk schema of a binning document.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinningDoc {
    variables: Vec<String>,
    edges: IndexMap<String, Vec<f64>>,
}

/// Parse a binning document (YAML subset: `variables` list plus per-variable
/// `edges` lists, with `-.inf`/`.inf` for open outer edges).
pub fn parse_binning(text: &str) -> Result<Binning> {
    let doc: BinningDoc = serde_yaml::from_str(text)
        .map_err(|e| Error::Format(format!("binning document: {e}")))?;
    let mut edges = Vec::with_capacity(doc.variables.len());
    for name in &doc.variables {
        match doc.edges.get(name) {
            Some(list) => edges.push(list.clone()),
            None => {
                return Err(Error::InvalidBinning(format!(
                    "variable '{name}' declared but has no edges"
                )))
            }
        }
    }
    for key in doc.edges.keys() {
        if !doc.variables.contains(key) {
            return Err(Error::InvalidBinning(format!(
                "edges given for undeclared variable '{key}'"
            )));
        }
    }
    Binning::new(doc.variables, edges)
}

/// A filled histogram: per-bin weighted counts plus the total weight of
/// events that did not land in any bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramFill {
    pub counts: Vec<f64>,
    pub spill: f64,
}

/// Sum event weights into the bins of `binning`; unbinnable events
/// accumulate in the spill counter.
pub fn fill_histogram<'a, I>(binning: &Binning, events: I) -> HistogramFill
where
    I: IntoIterator<Item = &'a EventRecord>,
{
    let mut counts = vec![0.0; binning.n_bins()];
    let mut spill = 0.0;
    for event in events {
        match binning.bin_index(event) {
            Some(i) => counts[i] += event.weight,
            None => spill += event.weight,
        }
    }
    HistogramFill { counts, spill }
}

/// Normalised in-bin variation of the nominal response matrix.
///
/// For each matrix element `(i, j)` this is the maximum over truth bins `j'`
/// adjacent to `j` of `|R_ij - R_ij'| / sqrt(σ²(R_ij) + σ²(R_ij'))`, using
/// the nominal-toy matrix and its MC-statistics variance.  A bin without
/// neighbours has variation 0.
///
/// Returned row-major with shape `(n_reco, n_truth)` over the builder's full
/// truth binning (empty truth bins carry their prior-only values).
pub fn in_bin_variation(builder: &ResponseBuilder) -> Result<Vec<f64>> {
    let d = builder.truth_binning().n_bins();
    if d == 0 {
        return Err(Error::InvalidBinning(
            "builder has zero truth bins".into(),
        ));
    }
    let r = builder.reco_binning().n_bins();
    let matrix = builder.full_matrix(0)?;
    let variance = builder.full_mc_stat_variance(0)?;
    let truth = builder.truth_binning();
    let mut out = vec![0.0; r * d];
    for j in 0..d {
        let neighbors = truth.neighbors(j);
        for i in 0..r {
            let mut best = 0.0f64;
            for &k in &neighbors {
                let denom = (variance[i * d + j] + variance[i * d + k]).sqrt();
                if denom > 0.0 {
                    let delta = (matrix[i * d + j] - matrix[i * d + k]).abs() / denom;
                    best = best.max(delta);
                }
            }
            out[i * d + j] = best;
        }
    }
    Ok(out)
}

/// Result of one candidate edge removal under consideration by the merger.
#[derive(Debug, Clone, Copy)]
struct MergeCandidate {
    variable: usize,
    /// Position of the (interior) edge to delete from the current edge list.
    edge_pos: usize,
    /// Maximum in-bin variation among the freshly merged bins, evaluated on
    /// the post-merge builder.
    merged_variation: f64,
    /// Occupancy of the neighbour bin pulled in by the merge (step-b order).
    neighbor_occupancy: f64,
}

/// Merge truth bins of a filled builder until the mean simulated occupancy
/// reaches `target_mean_events`, preferring merges that keep the normalised
/// in-bin variation of the merged bins at or below `variation_limit`.
///
/// The loop alternates two strategies: first merge around the
/// lowest-occupancy bin, then merge the pair with the lowest in-bin
/// variation; if neither admits a merge within the limit, the limit is
/// raised by ×1.5 and the loop repeats.  Merges only remove interior edges,
/// one at a time, so every output edge is an input edge.
pub fn optimize_truth_binning(
    builder: &ResponseBuilder,
    target_mean_events: f64,
    variation_limit: f64,
) -> Result<Binning> {
    if !(target_mean_events > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target_mean_events must be > 0, got {target_mean_events}"
        )));
    }
    if !(variation_limit > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variation_limit must be > 0, got {variation_limit}"
        )));
    }
    let total: f64 = (0..builder.truth_binning().n_bins())
        .map(|j| builder.truth_count(j) as f64)
        .sum();
    if total < target_mean_events {
        return Err(Error::InvalidArgument(format!(
            "target mean of {target_mean_events} events per bin is impossible: \
             only {total} events in total"
        )));
    }

    let mut current = builder.clone_nominal();
    let mut limit = variation_limit;
    loop {
        let truth = current.truth_binning();
        let mean = total / truth.n_bins() as f64;
        if mean >= target_mean_events {
            return Ok(truth.clone());
        }

        // Step (b): candidates adjacent to the lowest-occupancy bin, tried
        // in order of increasing neighbour occupancy.
        let min_bin = (0..truth.n_bins())
            .min_by(|&a, &b| {
                builder_occupancy(&current, a)
                    .partial_cmp(&builder_occupancy(&current, b))
                    .unwrap()
            })
            .expect("at least one truth bin");
        let mut around_min = candidates_around(&current, min_bin)?;
        around_min.sort_by(|a, b| {
            a.neighbor_occupancy
                .partial_cmp(&b.neighbor_occupancy)
                .unwrap()
                .then(a.variable.cmp(&b.variable))
                .then(a.edge_pos.cmp(&b.edge_pos))
        });
        if let Some(c) = around_min.iter().find(|c| c.merged_variation <= limit) {
            current = apply_merge(&current, c.variable, c.edge_pos)?;
            continue;
        }

        // Step (c): any interior edge, lowest post-merge variation first.
        let mut all = all_candidates(&current)?;
        all.sort_by(|a, b| {
            a.merged_variation
                .partial_cmp(&b.merged_variation)
                .unwrap()
                .then(a.variable.cmp(&b.variable))
                .then(a.edge_pos.cmp(&b.edge_pos))
        });
        if let Some(c) = all.first().filter(|c| c.merged_variation <= limit) {
            current = apply_merge(&current, c.variable, c.edge_pos)?;
            continue;
        }

        // Stuck: no merge satisfies the current limit.
        limit *= 1.5;
    }
}

fn builder_occupancy(builder: &ResponseBuilder, j: usize) -> f64 {
    builder.truth_count(j) as f64
}

/// All single-edge-removal candidates adjacent to bin `bin`.
fn candidates_around(
    builder: &ResponseBuilder,
    bin: usize,
) -> Result<Vec<MergeCandidate>> {
    let truth = builder.truth_binning();
    let tuple = truth.index_to_tuple(bin);
    let mut out = Vec::new();
    for (v, &t) in tuple.iter().enumerate() {
        for (neighbor_axis, edge_pos) in [(t.wrapping_sub(1), t), (t + 1, t + 1)] {
            if neighbor_axis >= truth.n_axis_bins(v) {
                continue;
            }
            let mut n_tuple = tuple.clone();
            n_tuple[v] = neighbor_axis;
            let neighbor = truth.tuple_to_index(&n_tuple);
            out.push(MergeCandidate {
                variable: v,
                edge_pos,
                merged_variation: merged_variation(builder, v, edge_pos)?,
                neighbor_occupancy: builder_occupancy(builder, neighbor),
            });
        }
    }
    Ok(out)
}

/// All interior-edge-removal candidates.
fn all_candidates(builder: &ResponseBuilder) -> Result<Vec<MergeCandidate>> {
    let truth = builder.truth_binning();
    let mut out = Vec::new();
    for v in 0..truth.n_variables() {
        for edge_pos in 1..truth.edges(v).len() - 1 {
            out.push(MergeCandidate {
                variable: v,
                edge_pos,
                merged_variation: merged_variation(builder, v, edge_pos)?,
                neighbor_occupancy: 0.0,
            });
        }
    }
    Ok(out)
}

/// In-bin variation of the bins created by removing the given edge,
/// evaluated on the merged builder.
fn merged_variation(builder: &ResponseBuilder, variable: usize, edge_pos: usize) -> Result<f64> {
    let merged = apply_merge(builder, variable, edge_pos)?;
    let truth = merged.truth_binning();
    let variation = in_bin_variation(&merged)?;
    let r = merged.reco_binning().n_bins();
    let d = truth.n_bins();
    // The freshly merged bins are those whose axis interval along `variable`
    // is the one that swallowed the removed edge, i.e. interval edge_pos - 1
    // of the merged axis.
    let merged_axis_bin = edge_pos - 1;
    let mut best = 0.0f64;
    for j in 0..d {
        if truth.index_to_tuple(j)[variable] != merged_axis_bin {
            continue;
        }
        for i in 0..r {
            best = best.max(variation[i * d + j]);
        }
    }
    Ok(best)
}

/// Rebuild the nominal-aggregate builder on the binning with one interior
/// edge removed.
fn apply_merge(
    builder: &ResponseBuilder,
    variable: usize,
    edge_pos: usize,
) -> Result<ResponseBuilder> {
    let truth = builder.truth_binning();
    debug_assert!(edge_pos >= 1 && edge_pos < truth.edges(variable).len() - 1);
    let mut new_edges: Vec<Vec<f64>> = (0..truth.n_variables())
        .map(|v| truth.edges(v).to_vec())
        .collect();
    new_edges[variable].remove(edge_pos);
    let merged_truth = Binning::new(truth.variables().to_vec(), new_edges)?;
    builder.reaggregate_truth(&merged_truth)
}
