//! A self-contained mock experiment for end-to-end exercises: truth events
//! from a bivariate normal in `(true_x, true_y)`, a detector that smears
//! `x` with a unit Gaussian and selects events with a `y`-dependent
//! efficiency, and a documented default binning for both spaces.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::binning::{Binning, EventRecord};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::special::normal_cdf;

/// RNG stream tag for truth generation.
const STREAM_TRUTH: u64 = 0x7237;
/// RNG stream tag for the detector simulation.
const STREAM_DETECTOR: u64 = 0xDE7E;

/// Maximum selection efficiency; the per-event efficiency is this value
/// times the standard normal CDF of `true_y`.
const MAX_EFFICIENCY: f64 = 0.9;

/// A bivariate-normal truth model in `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockModel {
    /// Mean of the `x` coordinate.
    pub mean_x: f64,
    /// Mean of the `y` coordinate.
    pub mean_y: f64,
    /// Variance of the `x` coordinate.
    pub var_x: f64,
    /// Variance of the `y` coordinate.
    pub var_y: f64,
    /// Covariance between the coordinates.
    pub cov_xy: f64,
}

impl MockModel {
    /// Builds a model, rejecting non-positive variances and covariances
    /// that would make the matrix singular or indefinite.
    pub fn new(mean_x: f64, mean_y: f64, var_x: f64, var_y: f64, cov_xy: f64) -> Result<Self> {
        for (name, v) in [("var_x", var_x), ("var_y", var_y)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !cov_xy.is_finite() || cov_xy.abs() >= (var_x * var_y).sqrt() {
            return Err(Error::InvalidArgument(format!(
                "covariance {cov_xy} incompatible with variances ({var_x}, {var_y})"
            )));
        }
        Ok(Self {
            mean_x,
            mean_y,
            var_x,
            var_y,
            cov_xy,
        })
    }

    /// Mildly shifted, uncorrelated model: means (0.1, 0.2), unit
    /// variances, zero covariance.
    pub fn model_a() -> Self {
        Self::new(0.1, 0.2, 1.0, 1.0, 0.0).expect("static model parameters are valid")
    }

    /// Centred, correlated model: zero means, unit variances,
    /// covariance 0.5.
    pub fn model_b() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0, 0.5).expect("static model parameters are valid")
    }
}

/// Draws `n` truth events (`true_x`, `true_y`) from the model,
/// deterministically in the seed.
pub fn generate_truth(model: &MockModel, n: usize, seed: u64) -> Result<Vec<EventRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "at least one truth event must be requested".into(),
        ));
    }
    let sx = model.var_x.sqrt();
    let sy = model.var_y.sqrt();
    let rho = model.cov_xy / (sx * sy);
    let ortho = (1.0 - rho * rho).sqrt();
    let mut rng = stream_rng(seed, STREAM_TRUTH, 0);
    Ok((0..n)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x = model.mean_x + sx * z1;
            let y = model.mean_y + sy * (rho * z1 + ortho * z2);
            EventRecord::from_pairs([("true_x", x), ("true_y", y)])
        })
        .collect())
}

/// Runs the mock detector over truth events in place: each event is
/// selected with probability `0.9 * Phi(true_y)` and, when selected, gains
/// `reco_x = true_x + Normal(0, 1)`. Unselected events keep `reco_x`
/// absent. One selection uniform is drawn per event and one smearing
/// normal per selected event, so the stream is reproducible event by
/// event.
pub fn apply_detector(events: &mut [EventRecord], seed: u64) -> Result<()> {
    let mut rng = stream_rng(seed, STREAM_DETECTOR, 0);
    for (i, event) in events.iter_mut().enumerate() {
        let (x, y) = match (event.values.get("true_x"), event.values.get("true_y")) {
            (Some(&x), Some(&y)) => (x, y),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "event {i} lacks true_x/true_y; the detector needs truth coordinates"
                )))
            }
        };
        let u: f64 = rng.random();
        if u < MAX_EFFICIENCY * normal_cdf(y) {
            let z: f64 = rng.sample(StandardNormal);
            event.values.insert("reco_x".into(), x + z);
        }
    }
    Ok(())
}

/// The documented default binnings of the mock experiment: reconstructed
/// space is `reco_x` with unit-width bins on [-4, 4] plus open-ended
/// underflow/overflow bins (10 bins); truth space is `true_x` with unit
/// bins on [-3, 3] plus open ends, crossed with `true_y` in unit bins on
/// [-2, 2] plus open ends.
pub fn default_binnings() -> (Binning, Binning) {
    let reco_edges: Vec<f64> = std::iter::once(f64::NEG_INFINITY)
        .chain((-4..=4).map(f64::from))
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    let true_x_edges: Vec<f64> = std::iter::once(f64::NEG_INFINITY)
        .chain((-3..=3).map(f64::from))
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    let true_y_edges: Vec<f64> = std::iter::once(f64::NEG_INFINITY)
        .chain((-2..=2).map(f64::from))
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    let reco = Binning::new(vec!["reco_x".into()], vec![reco_edges])
        .expect("static reco binning is valid");
    let truth = Binning::new(
        vec!["true_x".into(), "true_y".into()],
        vec![true_x_edges, true_y_edges],
    )
    .expect("static truth binning is valid");
    (reco, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_constructor_validates_covariance() {
        assert!(MockModel::new(0.0, 0.0, 1.0, 1.0, 0.3).is_ok());
        assert!(MockModel::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(MockModel::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(MockModel::new(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(MockModel::new(0.0, 0.0, 4.0, 1.0, 1.9).is_ok());
        assert!(MockModel::new(0.0, 0.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn truth_sample_moments_match_the_models() {
        let n = 100_000;
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();

        let a = generate_truth(&MockModel::model_a(), n, 1).unwrap();
        let mean = |events: &[EventRecord], var: &str| {
            events.iter().map(|e| e.values[var]).sum::<f64>() / events.len() as f64
        };
        // Sample means within 3 sigma/sqrt(n) of (0.1, 0.2).
        assert!((mean(&a, "true_x") - 0.1).abs() < 3.0 * inv_sqrt_n);
        assert!((mean(&a, "true_y") - 0.2).abs() < 3.0 * inv_sqrt_n);

        // Zero covariance: sample correlation within 3/sqrt(n) of 0.
        let (mx, my) = (mean(&a, "true_x"), mean(&a, "true_y"));
        let corr = a
            .iter()
            .map(|e| (e.values["true_x"] - mx) * (e.values["true_y"] - my))
            .sum::<f64>()
            / n as f64;
        assert!(corr.abs() < 3.0 * inv_sqrt_n, "correlation {corr}");

        // Correlated model: sample covariance near 0.5. The standard error
        // of a normal covariance estimate is sqrt((1 + rho^2)/n).
        let b = generate_truth(&MockModel::model_b(), n, 2).unwrap();
        let (mx, my) = (mean(&b, "true_x"), mean(&b, "true_y"));
        let cov = b
            .iter()
            .map(|e| (e.values["true_x"] - mx) * (e.values["true_y"] - my))
            .sum::<f64>()
            / (n - 1) as f64;
        let se = (1.25f64 / n as f64).sqrt();
        assert!((cov - 0.5).abs() < 3.0 * se, "covariance {cov}");

        // Marginal variances stay unit in both models.
        let var_y = b
            .iter()
            .map(|e| (e.values["true_y"] - my).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((var_y - 1.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn generation_is_deterministic_and_validates_n() {
        let a = generate_truth(&MockModel::model_a(), 50, 9).unwrap();
        let b = generate_truth(&MockModel::model_a(), 50, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_truth(&MockModel::model_a(), 50, 10).unwrap();
        assert_ne!(a, c);
        assert!(generate_truth(&MockModel::model_a(), 0, 1).is_err());
    }

    #[test]
    fn selection_fractions_follow_the_efficiency_curve() {
        let n = 100_000;
        // E[Phi(Y)] = Phi(m / sqrt(1 + s^2)) for Y ~ N(m, s^2).
        let expect_b = 0.45; // 0.9 * Phi(0) by symmetry
        let expect_a = 0.50060831220822820; // 0.9 * Phi(0.2 / sqrt(2))

        let fraction = |model: &MockModel, seed: u64| {
            let mut events = generate_truth(model, n, seed).unwrap();
            apply_detector(&mut events, seed + 1000).unwrap();
            events
                .iter()
                .filter(|e| e.values.contains_key("reco_x"))
                .count() as f64
                / n as f64
        };
        let frac_a = fraction(&MockModel::model_a(), 3);
        let frac_b = fraction(&MockModel::model_b(), 4);
        let sigma = (0.5 * 0.5 / n as f64).sqrt();
        assert!((frac_a - expect_a).abs() < 3.0 * sigma, "fraction A {frac_a}");
        assert!((frac_b - expect_b).abs() < 3.0 * sigma, "fraction B {frac_b}");
        // The efficiency difference separates the models.
        assert!(
            (0.03..=0.07).contains(&(frac_a - frac_b)),
            "fraction difference {}",
            frac_a - frac_b
        );
    }

    #[test]
    fn smearing_is_unit_gaussian_around_truth() {
        let mut events = generate_truth(&MockModel::model_b(), 100_000, 5).unwrap();
        apply_detector(&mut events, 6).unwrap();
        let residuals: Vec<f64> = events
            .iter()
            .filter_map(|e| {
                e.values
                    .get("reco_x")
                    .map(|r| r - e.values["true_x"])
            })
            .collect();
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        // SE of a normal standard deviation estimate is about 1/sqrt(2n).
        assert!(mean.abs() < 3.0 / n.sqrt(), "residual mean {mean}");
        assert!(
            (sd - 1.0).abs() < 3.0 / (2.0 * n).sqrt(),
            "residual standard deviation {sd}"
        );
    }

    #[test]
    fn selection_probability_tracks_y() {
        // Events far down in y are almost never selected; far up, almost
        // always (at rate MAX_EFFICIENCY).
        let mut low: Vec<EventRecord> = (0..2000)
            .map(|_| EventRecord::from_pairs([("true_x", 0.0), ("true_y", -4.0)]))
            .collect();
        apply_detector(&mut low, 8).unwrap();
        assert!(low.iter().filter(|e| e.values.contains_key("reco_x")).count() < 5);

        let mut high: Vec<EventRecord> = (0..2000)
            .map(|_| EventRecord::from_pairs([("true_x", 0.0), ("true_y", 4.0)]))
            .collect();
        apply_detector(&mut high, 8).unwrap();
        let selected = high
            .iter()
            .filter(|e| e.values.contains_key("reco_x"))
            .count() as f64;
        let sigma = (2000.0f64 * 0.9 * 0.1).sqrt();
        assert!((selected - 1800.0).abs() < 3.0 * sigma, "selected {selected}");
    }

    #[test]
    fn detector_requires_truth_coordinates() {
        let mut events = vec![EventRecord::from_pairs([("true_x", 0.0)])];
        assert!(apply_detector(&mut events, 1).is_err());
    }

    #[test]
    fn default_binnings_have_documented_shape() {
        let (reco, truth) = default_binnings();
        assert_eq!(reco.variables(), ["reco_x"]);
        assert_eq!(reco.n_bins(), 10);
        assert_eq!(truth.variables(), ["true_x", "true_y"]);
        // 8 open-ended x bins times 6 open-ended y bins.
        assert_eq!(truth.n_bins(), 48);

        // Every generated event lands in a truth bin (open ends), selected
        // or not.
        let mut events = generate_truth(&MockModel::model_b(), 10_000, 11).unwrap();
        apply_detector(&mut events, 12).unwrap();
        for e in &events {
            assert!(truth.bin_index(e).is_some());
        }
    }
}
