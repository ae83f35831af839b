//! Canonical file formats binding the modules together: event CSV, binning
//! documents, matrix-set JSON, histogram JSON, result tables, and the
//! publication bundle that packages a complete analysis input.
//!
//! Every writer is deterministic: identical inputs produce byte-identical
//! files (stable key order, shortest-round-trip float formatting), so
//! archived outputs can be diffed and regenerated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bayes::PosteriorChain;
use crate::binning::{parse_binning, Binning, EventRecord};
use crate::compat::CompatibilityReport;
use crate::error::{Error, Result};
use crate::pvalues::{PValueResult, ScanRow};
use crate::response::ResponseMatrixSet;

/// Reads a text file with path context on failure.
fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a text file with path context on failure.
fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Formats a float with the shortest representation that parses back to
/// the identical bits.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// Binning documents
// ---------------------------------------------------------------------------

/// Reads and parses a binning document file.
pub fn read_binning(path: &Path) -> Result<Binning> {
    parse_binning(&read_text(path)?)
}

/// Writes a binning document file.
pub fn write_binning(path: &Path, binning: &Binning) -> Result<()> {
    write_text(path, &binning.to_document())
}

// ---------------------------------------------------------------------------
// Event CSV
// ---------------------------------------------------------------------------

/// Splits a `toyweight_k` header into its index.
fn toyweight_index(header: &str) -> Option<usize> {
    header
        .strip_prefix("toyweight_")
        .and_then(|s| s.parse().ok())
}

/// Reads an event CSV file. `variables` names the value columns to load
/// (missing ones are an error); blank cells become missing values. A
/// `weight` column and contiguous `toyweight_0..toyweight_{T-1}` columns
/// are picked up automatically, with blank cells defaulting to 1. Other
/// columns are ignored.
pub fn read_events_csv(path: &Path, variables: &[String]) -> Result<Vec<EventRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();

    let mut var_cols = Vec::with_capacity(variables.len());
    for name in variables {
        match headers.iter().position(|h| h == name) {
            Some(c) => var_cols.push(c),
            None => {
                return Err(Error::Format(format!(
                    "{}: declared column '{name}' not found in the header",
                    path.display()
                )))
            }
        }
    }
    let weight_col = headers.iter().position(|h| h == "weight");
    let mut toy_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(c, h)| toyweight_index(h).map(|k| (k, c)))
        .collect();
    toy_cols.sort_unstable();
    for (expect, &(k, _)) in toy_cols.iter().enumerate() {
        if k != expect {
            return Err(Error::Format(format!(
                "{}: toyweight columns must be contiguous from toyweight_0; \
                 found toyweight_{k} where toyweight_{expect} was expected",
                path.display()
            )));
        }
    }

    let parse_cell = |cell: &str, row: usize, column: &str| -> Result<f64> {
        let v: f64 = cell.parse().map_err(|_| {
            Error::Format(format!(
                "{}: row {row}, column {column}: '{cell}' is not a number",
                path.display()
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::Format(format!(
                "{}: row {row}, column {column}: value {v} is not finite",
                path.display()
            )));
        }
        Ok(v)
    };

    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1; // 1-based over data rows
        let record = record.map_err(|e| {
            Error::Format(format!("{}: row {row}: {e}", path.display()))
        })?;
        let mut event = EventRecord::default();
        for (&col, name) in var_cols.iter().zip(variables) {
            let cell = record.get(col).unwrap_or("").trim();
            if !cell.is_empty() {
                event
                    .values
                    .insert(name.clone(), parse_cell(cell, row, name)?);
            }
        }
        if let Some(col) = weight_col {
            let cell = record.get(col).unwrap_or("").trim();
            if !cell.is_empty() {
                let w = parse_cell(cell, row, "weight")?;
                if w < 0.0 {
                    return Err(Error::Format(format!(
                        "{}: row {row}, column weight: negative weight {w}",
                        path.display()
                    )));
                }
                event.weight = w;
            }
        }
        if !toy_cols.is_empty() {
            let mut tw = Vec::with_capacity(toy_cols.len());
            for &(k, col) in &toy_cols {
                let column = format!("toyweight_{k}");
                let cell = record.get(col).unwrap_or("").trim();
                if cell.is_empty() {
                    tw.push(1.0);
                } else {
                    let w = parse_cell(cell, row, &column)?;
                    if w < 0.0 {
                        return Err(Error::Format(format!(
                            "{}: row {row}, column {column}: negative weight {w}",
                            path.display()
                        )));
                    }
                    tw.push(w);
                }
            }
            event.toy_weights = Some(tw);
        }
        events.push(event);
    }
    Ok(events)
}

/// Writes events as CSV with the given value columns, a `weight` column,
/// and `toyweight_k` columns when the events carry systematic toy weights.
/// Missing values become blank cells. Either every event carries toy
/// weights of the same length or none does.
pub fn write_events_csv(path: &Path, events: &[EventRecord], variables: &[String]) -> Result<()> {
    let n_toys = match events.iter().find_map(|e| e.toy_weights.as_ref()) {
        Some(tw) => tw.len(),
        None => 0,
    };
    for (i, e) in events.iter().enumerate() {
        let len = e.toy_weights.as_ref().map_or(0, Vec::len);
        if len != n_toys {
            return Err(Error::Incompatible(format!(
                "event {i} carries {len} toy weights but earlier events carry {n_toys}"
            )));
        }
    }

    let mut out = String::new();
    let mut header: Vec<String> = variables.to_vec();
    header.push("weight".into());
    for k in 0..n_toys {
        header.push(format!("toyweight_{k}"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for event in events {
        let mut cells: Vec<String> = variables
            .iter()
            .map(|name| event.values.get(name).map(|&v| fmt_f64(v)).unwrap_or_default())
            .collect();
        cells.push(fmt_f64(event.weight));
        if let Some(tw) = &event.toy_weights {
            cells.extend(tw.iter().map(|&w| fmt_f64(w)));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------------------
// Matrix-set JSON
// ---------------------------------------------------------------------------

/// On-disk schema of a matrix-set file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixSetDoc {
    n_reco: usize,
    n_truth_total: usize,
    truth_bins_filled: Vec<usize>,
    sim_truth_counts: Vec<u64>,
    matrices: Vec<Vec<f64>>,
    meta: serde_json::Value,
}

/// Writes a matrix set as JSON. Numbers use shortest-round-trip decimal
/// form, so reading the file back reproduces every value bit-exactly.
pub fn write_matrix_set(path: &Path, set: &ResponseMatrixSet) -> Result<()> {
    let doc = MatrixSetDoc {
        n_reco: set.n_reco(),
        n_truth_total: set.n_truth_total(),
        truth_bins_filled: set.truth_bins_filled().to_vec(),
        sim_truth_counts: set.sim_truth_counts().to_vec(),
        matrices: (0..set.n_matrices()).map(|t| set.matrix(t).to_vec()).collect(),
        meta: set.meta().clone(),
    };
    let json =
        serde_json::to_string_pretty(&doc).expect("matrix-set serialization cannot fail");
    write_text(path, &(json + "\n"))
}

/// Reads a matrix-set JSON file, validating the schema and every structural
/// invariant; violations name the offending key.
pub fn read_matrix_set(path: &Path) -> Result<ResponseMatrixSet> {
    let doc: MatrixSetDoc = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    ResponseMatrixSet::from_parts(
        doc.n_reco,
        doc.n_truth_total,
        doc.truth_bins_filled,
        doc.sim_truth_counts,
        doc.matrices,
        doc.meta,
    )
    .map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Histogram JSON
// ---------------------------------------------------------------------------

/// Writes a histogram (or truth template) as a JSON array of reals.
pub fn write_histogram(path: &Path, values: &[f64]) -> Result<()> {
    let json = serde_json::to_string(values).expect("float array serialization cannot fail");
    write_text(path, &(json + "\n"))
}

/// Reads a JSON array of reals.
pub fn read_histogram(path: &Path) -> Result<Vec<f64>> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Reads a JSON array of event counts: every entry must be a non-negative
/// integer.
pub fn read_counts(path: &Path) -> Result<Vec<u64>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64().ok_or_else(|| {
                Error::Format(format!(
                    "{}: entry {i} ({v}) is not a non-negative integer count",
                    path.display()
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// Writes a compatibility report as JSON with keys `d_sq`, `dof`,
/// `c_chi2`, `c_numeric` and `samples`.
pub fn write_compat_report(path: &Path, report: &CompatibilityReport) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        d_sq: f64,
        dof: usize,
        c_chi2: f64,
        c_numeric: f64,
        samples: &'a [f64],
    }
    let json = serde_json::to_string_pretty(&Doc {
        d_sq: report.d_sq,
        dof: report.dof,
        c_chi2: report.c_chi2,
        c_numeric: report.c_numeric,
        samples: &report.sample_d_sq,
    })
    .expect("report serialization cannot fail");
    write_text(path, &(json + "\n"))
}

/// Writes a p-value result as JSON with keys `p`, `n_replicas`,
/// `statistic_obs` and `seed`.
pub fn write_pvalue_json(path: &Path, result: &PValueResult) -> Result<()> {
    let json =
        serde_json::to_string_pretty(result).expect("p-value serialization cannot fail");
    write_text(path, &(json + "\n"))
}

/// Writes confidence-scan rows as CSV `value,p_value,fit_logl,status`;
/// absent values become empty cells.
pub fn write_scan_csv(path: &Path, rows: &[ScanRow]) -> Result<()> {
    let mut out = String::from("value,p_value,fit_logl,status\n");
    for row in rows {
        let p = row.p_value.map(fmt_f64).unwrap_or_default();
        let l = row.fit_logl.map(fmt_f64).unwrap_or_default();
        writeln!(out, "{},{p},{l},{}", fmt_f64(row.value), row.status.as_str())
            .expect("string writes cannot fail");
    }
    write_text(path, &out)
}

/// Writes a posterior chain as CSV
/// `step,theta_0..theta_{d-1},toy_index,log_post`.
pub fn write_chain_csv(path: &Path, chain: &PosteriorChain) -> Result<()> {
    let dim = match chain.samples.first() {
        Some(s) => s.theta.len(),
        None => {
            return Err(Error::InvalidArgument(
                "cannot write an empty chain".into(),
            ))
        }
    };
    let mut out = String::from("step");
    for k in 0..dim {
        write!(out, ",theta_{k}").expect("string writes cannot fail");
    }
    out.push_str(",toy_index,log_post\n");
    for (step, s) in chain.samples.iter().enumerate() {
        write!(out, "{step}").expect("string writes cannot fail");
        for &v in &s.theta {
            write!(out, ",{}", fmt_f64(v)).expect("string writes cannot fail");
        }
        writeln!(out, ",{},{}", s.toy_index, fmt_f64(s.log_post))
            .expect("string writes cannot fail");
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------------------
// Publication bundle
// ---------------------------------------------------------------------------

/// Manifest of a publication bundle: file paths, resolved relative to the
/// manifest's own directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    /// Binning document of the reconstructed space.
    pub reco_binning: String,
    /// Binning document of the truth space.
    pub truth_binning: String,
    /// Matrix-set JSON file.
    pub matrix_set: String,
    /// Observed data: a JSON count histogram, or an event CSV (by `.csv`
    /// extension) binned on load.
    pub data: String,
    /// Optional truth-space background templates (JSON arrays in the
    /// retained-bin layout).
    #[serde(default)]
    pub background_templates: Vec<String>,
}

/// Writes a bundle manifest as JSON.
pub fn write_bundle_manifest(path: &Path, manifest: &BundleManifest) -> Result<()> {
    let json =
        serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    write_text(path, &(json + "\n"))
}

/// A fully loaded analysis input: binnings, matrix set, observed data and
/// optional background templates.
#[derive(Debug, Clone)]
pub struct PublicationBundle {
    /// Binning of the reconstructed space.
    pub reco_binning: Binning,
    /// Binning of the truth space.
    pub truth_binning: Binning,
    /// The response-matrix set.
    pub matrix_set: ResponseMatrixSet,
    /// Observed counts, one per reconstructed bin.
    pub data: Vec<u64>,
    /// Background templates in the retained truth layout.
    pub background_templates: Vec<Vec<f64>>,
}

/// Loads every part of a bundle from its manifest. Event-CSV data must be
/// unweighted; events outside the reconstructed binning are not counted.
/// Cross-checks between the parts are left to [`validate_bundle`].
pub fn load_bundle(manifest_path: &Path) -> Result<PublicationBundle> {
    let manifest: BundleManifest = serde_json::from_str(&read_text(manifest_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |rel: &str| -> PathBuf { base.join(rel) };

    let reco_binning = read_binning(&resolve(&manifest.reco_binning))?;
    let truth_binning = read_binning(&resolve(&manifest.truth_binning))?;
    let matrix_set = read_matrix_set(&resolve(&manifest.matrix_set))?;

    let data_path = resolve(&manifest.data);
    let data = if data_path.extension().is_some_and(|e| e == "csv") {
        let events = read_events_csv(&data_path, reco_binning.variables())?;
        let mut counts = vec![0u64; reco_binning.n_bins()];
        for (i, event) in events.iter().enumerate() {
            if event.weight != 1.0 {
                return Err(Error::Format(format!(
                    "{}: event {} has weight {}; observed data must be unweighted",
                    data_path.display(),
                    i + 1,
                    event.weight
                )));
            }
            if let Some(bin) = reco_binning.bin_index(event) {
                counts[bin] += 1;
            }
        }
        counts
    } else {
        read_counts(&data_path)?
    };

    let background_templates = manifest
        .background_templates
        .iter()
        .map(|rel| read_histogram(&resolve(rel)))
        .collect::<Result<Vec<_>>>()?;

    Ok(PublicationBundle {
        reco_binning,
        truth_binning,
        matrix_set,
        data,
        background_templates,
    })
}

/// Cross-checks every dimension invariant of a bundle and lists each
/// violation; an empty list means the bundle is consistent.
pub fn validate_bundle(bundle: &PublicationBundle) -> Vec<String> {
    let mut violations = Vec::new();
    let n_reco = bundle.reco_binning.n_bins();
    if bundle.data.len() != n_reco {
        violations.push(format!(
            "data has {} bins but the reconstructed binning has {n_reco}",
            bundle.data.len()
        ));
    }
    if bundle.matrix_set.n_reco() != n_reco {
        violations.push(format!(
            "matrix set has {} reconstructed bins but the binning has {n_reco}",
            bundle.matrix_set.n_reco()
        ));
    }
    let n_truth = bundle.truth_binning.n_bins();
    if bundle.matrix_set.n_truth_total() != n_truth {
        violations.push(format!(
            "matrix set declares {} truth bins but the truth binning has {n_truth}",
            bundle.matrix_set.n_truth_total()
        ));
    }
    let n_filled = bundle.matrix_set.n_filled();
    for (k, template) in bundle.background_templates.iter().enumerate() {
        if template.len() != n_filled {
            violations.push(format!(
                "background template {k} has {} bins but the matrix set retains {n_filled}",
                template.len()
            ));
        }
        if let Some(v) = template.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            violations.push(format!(
                "background template {k} contains the non-physical entry {v}"
            ));
        }
    }
    violations
}

/// Convenience: map variable names to their values for table output.
pub fn event_row(event: &EventRecord, variables: &[String]) -> IndexMap<String, Option<f64>> {
    variables
        .iter()
        .map(|name| (name.clone(), event.values.get(name).copied()))
        .collect()
}
