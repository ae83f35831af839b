//! Quantitative compatibility of two independently built response matrices.
//!
//! Two builders over identical binnings are compared by drawing statistical
//! toys of each nominal matrix, forming element-wise difference samples over
//! the truth columns filled in both, and measuring how far the zero
//! difference sits from the sampled difference cloud with a Mahalanobis
//! distance built on the sample covariance (rank-deficient directions are
//! projected out). Two tail probabilities summarize the comparison: one from
//! the chi-square survival function at the surviving rank, one from the
//! empirical distance distribution itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::response::ResponseBuilder;
use crate::rng::derive_seed;
use crate::special::gamma_q;

/// Relative eigenvalue cutoff below which a covariance direction is treated
/// as numerically null and projected out.
const EIGENVALUE_CUT: f64 = 1e-12;

/// Seed-derivation tags for the two builders' toy draws.
const TAG_DRAW_A: u64 = 0xC0;
const TAG_DRAW_B: u64 = 0xC1;

/// Survival function of the chi-square distribution with `k` degrees of
/// freedom: the probability of a value at or above `x`.
pub fn chi2_sf(x: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square survival requires x >= 0, got {x}"
        )));
    }
    Ok(gamma_q(k as f64 / 2.0, x / 2.0))
}

/// Squared Mahalanobis distance of `x` from `mean` under `cov`, together
/// with the effective rank used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MahalanobisSq {
    /// The squared distance, restricted to the surviving eigendirections.
    pub value: f64,
    /// Number of covariance eigendirections that survived the numerical cut.
    pub rank: usize,
}

/// Computes the squared Mahalanobis distance of a point from a mean under a
/// (possibly singular) covariance matrix. Directions whose eigenvalue falls
/// below a relative cutoff are projected out and do not contribute; the
/// surviving count is reported as the effective rank.
pub fn mahalanobis_sq(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> Result<MahalanobisSq> {
    let k = x.len();
    if mean.len() != k || cov.len() != k || cov.iter().any(|row| row.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "mahalanobis inputs disagree: x has {k} entries, mean {}, covariance {}x{}",
            mean.len(),
            cov.len(),
            cov.first().map_or(0, |r| r.len())
        )));
    }
    if k == 0 {
        return Ok(MahalanobisSq { value: 0.0, rank: 0 });
    }
    let cov = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    let pinv = ProjectedInverse::from_covariance(cov);
    let diff = DVector::from_fn(k, |i, _| x[i] - mean[i]);
    Ok(MahalanobisSq {
        value: pinv.d_sq(&diff),
        rank: pinv.rank(),
    })
}

/// Eigendecomposition-backed pseudo-inverse of a covariance matrix,
/// restricted to eigendirections above the numerical cut.
struct ProjectedInverse {
    /// Surviving eigenvectors, one column each.
    basis: DMatrix<f64>,
    /// Inverse eigenvalues of the surviving directions.
    inv_eigenvalues: Vec<f64>,
}

impl ProjectedInverse {
    fn from_covariance(cov: DMatrix<f64>) -> Self {
        let k = cov.nrows();
        let eigen = cov.symmetric_eigen();
        let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let cut = EIGENVALUE_CUT * max_eig;
        let mut kept = Vec::new();
        for (idx, &lambda) in eigen.eigenvalues.iter().enumerate() {
            if lambda > cut && lambda > 0.0 {
                kept.push((idx, lambda));
            }
        }
        let mut basis = DMatrix::zeros(k, kept.len());
        let mut inv_eigenvalues = Vec::with_capacity(kept.len());
        for (col, (idx, lambda)) in kept.iter().enumerate() {
            basis.set_column(col, &eigen.eigenvectors.column(*idx));
            inv_eigenvalues.push(1.0 / lambda);
        }
        Self {
            basis,
            inv_eigenvalues,
        }
    }

    fn rank(&self) -> usize {
        self.inv_eigenvalues.len()
    }

    /// Squared distance of a difference vector: sum over surviving
    /// directions of (projection)^2 / eigenvalue.
    fn d_sq(&self, diff: &DVector<f64>) -> f64 {
        let proj = self.basis.tr_mul(diff);
        proj.iter()
            .zip(&self.inv_eigenvalues)
            .map(|(p, inv_l)| p * p * inv_l)
            .sum()
    }
}

/// Outcome of a two-builder compatibility comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// Squared Mahalanobis distance of the zero difference from the sampled
    /// difference cloud.
    pub d_sq: f64,
    /// Effective rank of the difference covariance (degrees of freedom).
    pub dof: usize,
    /// Chi-square tail probability of `d_sq` at `dof` degrees of freedom.
    pub c_chi2: f64,
    /// Fraction of difference samples farther from the mean than the zero
    /// difference.
    pub c_numeric: f64,
    /// Squared distances of the individual difference samples.
    pub sample_d_sq: Vec<f64>,
    /// Truth bins filled only in the first builder (qualitative evidence of
    /// disagreement; excluded from the quantitative comparison).
    pub only_in_a: Vec<usize>,
    /// Truth bins filled only in the second builder.
    pub only_in_b: Vec<usize>,
}

/// Compares the nominal response matrices of two builders over identical
/// binnings by sampling `n_samples` statistical toys of each.
///
/// The comparison covers the truth columns filled in both builders. Columns
/// filled in exactly one are excluded from the distance and reported in the
/// `only_in_*` lists. With no common column the comparison is
/// zero-dimensional and maximally compatible (`c = 1`). Results are
/// deterministic in `seed`.
pub fn matrix_compatibility(
    a: &ResponseBuilder,
    b: &ResponseBuilder,
    n_samples: usize,
    seed: u64,
) -> Result<CompatibilityReport> {
    if n_samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "compatibility needs at least 100 samples for a stable covariance, got {n_samples}"
        )));
    }
    if a.reco_binning() != b.reco_binning() || a.truth_binning() != b.truth_binning() {
        return Err(Error::Incompatible(
            "compatibility requires identical reconstructed and truth binnings".into(),
        ));
    }
    let filled_a = a.filled_truth_bins();
    let filled_b = b.filled_truth_bins();
    let common: Vec<usize> = filled_a
        .iter()
        .copied()
        .filter(|j| filled_b.binary_search(j).is_ok())
        .collect();
    let only_in_a: Vec<usize> = filled_a
        .iter()
        .copied()
        .filter(|j| common.binary_search(j).is_err())
        .collect();
    let only_in_b: Vec<usize> = filled_b
        .iter()
        .copied()
        .filter(|j| common.binary_search(j).is_err())
        .collect();

    if common.is_empty() {
        // Zero-dimensional comparison: no quantitative evidence either way.
        return Ok(CompatibilityReport {
            d_sq: 0.0,
            dof: 0,
            c_chi2: 1.0,
            c_numeric: 1.0,
            sample_d_sq: vec![0.0; n_samples],
            only_in_a,
            only_in_b,
        });
    }

    let set_a = a.sample_nominal_toys(n_samples, derive_seed(seed, TAG_DRAW_A, 0))?;
    let set_b = b.sample_nominal_toys(n_samples, derive_seed(seed, TAG_DRAW_B, 0))?;

    // Positions of the common columns within each set's retained layout.
    let pos_a: Vec<usize> = common
        .iter()
        .map(|j| set_a.truth_bins_filled().binary_search(j).unwrap())
        .collect();
    let pos_b: Vec<usize> = common
        .iter()
        .map(|j| set_b.truth_bins_filled().binary_search(j).unwrap())
        .collect();

    let r = set_a.n_reco();
    let fa = set_a.n_filled();
    let fb = set_b.n_filled();
    let k = r * common.len();

    // Element-wise difference samples over (reco bin, common truth column).
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|s| {
            let ma = set_a.matrix(s);
            let mb = set_b.matrix(s);
            let mut x = Vec::with_capacity(k);
            for i in 0..r {
                for (ca, cb) in pos_a.iter().zip(&pos_b) {
                    x.push(ma[i * fa + ca] - mb[i * fb + cb]);
                }
            }
            x
        })
        .collect();

    let mut mean = vec![0.0; k];
    for x in &samples {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_samples as f64;
    }

    let mut cov = DMatrix::zeros(k, k);
    let mut centered = vec![0.0; k];
    for x in &samples {
        for (c, (v, m)) in centered.iter_mut().zip(x.iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..k {
            let ci = centered[i];
            for j in i..k {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let norm = 1.0 / (n_samples as f64 - 1.0);
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] * norm;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let pinv = ProjectedInverse::from_covariance(cov);
    let dof = pinv.rank();

    // Distance of the zero difference (perfect agreement) from the cloud.
    let zero_diff = DVector::from_fn(k, |i, _| 0.0 - mean[i]);
    let d_sq = pinv.d_sq(&zero_diff);

    let sample_d_sq: Vec<f64> = samples
        .iter()
        .map(|x| {
            let diff = DVector::from_fn(k, |i, _| x[i] - mean[i]);
            pinv.d_sq(&diff)
        })
        .collect();

    let c_chi2 = if dof == 0 { 1.0 } else { chi2_sf(d_sq, dof)? };
    let exceed = sample_d_sq.iter().filter(|&&v| v > d_sq).count();
    let c_numeric = exceed as f64 / n_samples as f64;

    Ok(CompatibilityReport {
        d_sq,
        dof,
        c_chi2,
        c_numeric,
        sample_d_sq,
        only_in_a,
        only_in_b,
    })
}
