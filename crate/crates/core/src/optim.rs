//! Bounded derivative-free maximization.
//!
//! Likelihood surfaces here are cheap to evaluate, low-dimensional, and not
//! always smooth (the profile over toys has kinks where the best toy
//! changes), so a Nelder–Mead simplex with restarts is a good fit. Bounds
//! are honored by reparametrizing each axis onto an unconstrained internal
//! coordinate: a squared offset for one-sided bounds and a squared sine for
//! two-sided bounds. Axes with `lo == hi` are held fixed and excluded from
//! the search.

use crate::error::{Error, Result};

/// Convergence and effort knobs for [`maximize_bounded`].
#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    /// Iteration cap per simplex run.
    pub max_iters: usize,
    /// Relative spread of simplex function values at which a run stops.
    pub f_tol: f64,
    /// Simplex extent (internal coordinates) at which a run stops.
    pub x_tol: f64,
    /// Number of fresh-simplex restarts around the best point after a run
    /// converges.
    pub restarts: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            restarts: 1,
        }
    }
}

/// Result of a bounded maximization.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Argmax in external coordinates (within bounds).
    pub x: Vec<f64>,
    /// Function value at the argmax.
    pub f: f64,
    /// Number of objective evaluations spent.
    pub evaluations: usize,
    /// Whether every simplex run met a tolerance before its iteration cap.
    pub converged: bool,
}

/// Per-axis transform between bounded external and free internal
/// coordinates.
#[derive(Debug, Clone, Copy)]
enum Axis {
    Fixed(f64),
    Free,
    LowerBounded(f64),
    UpperBounded(f64),
    Boxed(f64, f64),
}

impl Axis {
    fn from_bounds(lo: f64, hi: f64) -> Result<Axis> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "invalid bound [{lo}, {hi}]"
            )));
        }
        Ok(match (lo.is_finite(), hi.is_finite()) {
            _ if lo == hi => Axis::Fixed(lo),
            (true, true) => Axis::Boxed(lo, hi),
            (true, false) => Axis::LowerBounded(lo),
            (false, true) => Axis::UpperBounded(hi),
            (false, false) => Axis::Free,
        })
    }

    /// External coordinate for an internal one; always within bounds.
    fn to_external(self, s: f64) -> f64 {
        match self {
            Axis::Fixed(v) => v,
            Axis::Free => s,
            Axis::LowerBounded(lo) => lo + s * s,
            Axis::UpperBounded(hi) => hi - s * s,
            Axis::Boxed(lo, hi) => {
                let t = s.sin();
                lo + (hi - lo) * t * t
            }
        }
    }

    /// Internal coordinate whose image is the (clamped) external one.
    fn to_internal(self, x: f64) -> f64 {
        match self {
            Axis::Fixed(_) => 0.0,
            Axis::Free => x,
            Axis::LowerBounded(lo) => (x - lo).max(0.0).sqrt(),
            Axis::UpperBounded(hi) => (hi - x).max(0.0).sqrt(),
            Axis::Boxed(lo, hi) => {
                let frac = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                frac.sqrt().asin()
            }
        }
    }
}

/// Maximizes `f` over the box described by `bounds`, running one simplex per
/// start point and keeping the best outcome. Start points outside the bounds
/// are clamped onto them. Fully deterministic: no internal randomness.
pub fn maximize_bounded<F>(
    f: F,
    bounds: &[(f64, f64)],
    starts: &[Vec<f64>],
    opts: &OptimizeOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    if starts.is_empty() {
        return Err(Error::InvalidArgument(
            "maximization needs at least one start point".into(),
        ));
    }
    let axes: Vec<Axis> = bounds
        .iter()
        .map(|&(lo, hi)| Axis::from_bounds(lo, hi))
        .collect::<Result<_>>()?;
    let free: Vec<usize> = axes
        .iter()
        .enumerate()
        .filter(|(_, a)| !matches!(a, Axis::Fixed(_)))
        .map(|(i, _)| i)
        .collect();

    let mut evaluations = 0usize;
    // Objective on internal coordinates (negated: the simplex minimizes).
    let mut external = vec![0.0; axes.len()];
    let eval = |s: &[f64], external: &mut Vec<f64>, evaluations: &mut usize| -> f64 {
        for (slot, axis) in external.iter_mut().zip(&axes) {
            if let Axis::Fixed(v) = axis {
                *slot = *v;
            }
        }
        for (idx, &dim) in free.iter().enumerate() {
            external[dim] = axes[dim].to_external(s[idx]);
        }
        *evaluations += 1;
        let value = f(external);
        if value.is_nan() {
            f64::INFINITY
        } else {
            -value
        }
    };

    if free.is_empty() {
        let g = eval(&[], &mut external, &mut evaluations);
        return Ok(FitOutcome {
            x: external,
            f: -g,
            evaluations,
            converged: true,
        });
    }

    let mut best_s: Option<(Vec<f64>, f64)> = None;
    let mut all_converged = true;

    for start in starts {
        if start.len() != axes.len() {
            return Err(Error::DimensionMismatch(format!(
                "start point has {} coordinates but there are {} parameters",
                start.len(),
                axes.len()
            )));
        }
        let s0: Vec<f64> = free.iter().map(|&d| axes[d].to_internal(start[d])).collect();
        let mut run_best = s0;
        let mut run_val = f64::INFINITY;
        let mut step = 0.25;
        for _round in 0..=opts.restarts {
            let (s, v, conv) = simplex_run(
                &mut |s| eval(s, &mut external, &mut evaluations),
                &run_best,
                step,
                opts,
            );
            all_converged &= conv;
            if v < run_val {
                run_val = v;
                run_best = s;
            }
            // Restart with a tighter simplex around the best point found.
            step *= 0.25;
        }
        if best_s.as_ref().is_none_or(|(_, v)| run_val < *v) {
            best_s = Some((run_best, run_val));
        }
    }

    let (s, g) = best_s.unwrap();
    let mut x = vec![0.0; axes.len()];
    for (slot, axis) in x.iter_mut().zip(&axes) {
        if let Axis::Fixed(v) = axis {
            *slot = *v;
        }
    }
    for (idx, &dim) in free.iter().enumerate() {
        x[dim] = axes[dim].to_external(s[idx]);
    }
    Ok(FitOutcome {
        x,
        f: -g,
        evaluations,
        converged: all_converged,
    })
}

/// One Nelder–Mead run minimizing `g` from `s0` with initial per-axis step
/// `step * max(1, |s0_i|)`. Returns (best point, best value, converged).
fn simplex_run<G>(g: &mut G, s0: &[f64], step: f64, opts: &OptimizeOptions) -> (Vec<f64>, f64, bool)
where
    G: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let n = s0.len();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    points.push(s0.to_vec());
    for i in 0..n {
        let mut p = s0.to_vec();
        p[i] += step * p[i].abs().max(1.0);
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| g(p)).collect();

    let mut converged = false;
    for _ in 0..opts.max_iters {
        // Order ascending by value (best first).
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = values[worst] - values[best];
        let extent = (0..n)
            .map(|d| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for p in &points {
                    lo = lo.min(p[d]);
                    hi = hi.max(p[d]);
                }
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if spread.abs() <= opts.f_tol * (1.0 + values[best].abs()) || extent <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; n];
        for (idx, p) in points.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for d in 0..n {
                centroid[d] += p[d];
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let reflect: Vec<f64> = (0..n)
            .map(|d| centroid[d] + ALPHA * (centroid[d] - points[worst][d]))
            .collect();
        let f_reflect = g(&reflect);

        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..n)
                .map(|d| centroid[d] + GAMMA * (reflect[d] - centroid[d]))
                .collect();
            let f_expand = g(&expand);
            if f_expand < f_reflect {
                points[worst] = expand;
                values[worst] = f_expand;
            } else {
                points[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            points[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let contract: Vec<f64> = if f_reflect < values[worst] {
                (0..n)
                    .map(|d| centroid[d] + RHO * (reflect[d] - centroid[d]))
                    .collect()
            } else {
                (0..n)
                    .map(|d| centroid[d] + RHO * (points[worst][d] - centroid[d]))
                    .collect()
            };
            let f_contract = g(&contract);
            if f_contract < values[worst].min(f_reflect) {
                points[worst] = contract;
                values[worst] = f_contract;
            } else {
                // Shrink everything toward the best vertex.
                let best_point = points[best].clone();
                for (idx, p) in points.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for d in 0..n {
                        p[d] = best_point[d] + SIGMA * (p[d] - best_point[d]);
                    }
                }
                for idx in 0..=n {
                    if idx != best {
                        values[idx] = g(&points[idx]);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for idx in 1..=n {
        if values[idx] < values[best] {
            best = idx;
        }
    }
    (points[best].clone(), values[best], converged)
}
