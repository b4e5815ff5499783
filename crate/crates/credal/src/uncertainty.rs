//! Upper and lower Shannon entropy over credal sets and the epistemic
//! uncertainty gap between them.
//!
//! For interval sets both bounds are computed exactly: the maximizer clamps
//! every class to a common level (entropy is Schur-concave, so the feasible
//! point closest to uniform wins) and the minimizer sits at an extreme point
//! of the box-simplex polytope, which are enumerable. Hull sets use
//! projected-gradient ascent over the combination weights for the upper
//! bound; the lower bound is the best generating point, exactly, because
//! entropy is concave. The [`numeric`] submodule keeps an independent
//! projected-gradient route for interval sets as a cross-check.

use serde::{Deserialize, Serialize};

use crate::credal_sets::{CredalSet, HullCredalSet, IntervalCredalSet};
use crate::error::{Error, Result};
use crate::prob::shannon_entropy;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Largest class count for which the interval entropy minimum is computed
/// by exact extreme-point enumeration.
pub const DEFAULT_EXACT_LIMIT: usize = 10;

/// How a bound pair was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Closed-form/enumerative interval bounds.
    ExactInterval,
    /// At least one side came from a numeric optimizer or heuristic.
    Numeric,
    /// Exhaustive reference computation (oracles and tests).
    BruteForce,
}

/// Entropy bounds of one credal set, in nats.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EntropyBounds {
    pub upper: f64,
    pub lower: f64,
    /// Epistemic uncertainty: `upper - lower`.
    pub eu: f64,
    pub method: BoundMethod,
}

impl EntropyBounds {
    fn new(upper: f64, lower: f64, method: BoundMethod) -> Self {
        debug_assert!(upper >= lower - 1e-9, "entropy bounds crossed: {lower} > {upper}");
        let upper = upper.max(lower);
        Self {
            upper,
            lower,
            eu: upper - lower,
            method,
        }
    }
}

fn check_feasible(c: &IntervalCredalSet) -> Result<()> {
    if !c.is_feasible() {
        let sl: f64 = c.lower().iter().sum();
        let su: f64 = c.upper().iter().sum();
        return Err(Error::Infeasible(format!(
            "lower bounds sum to {sl}, upper bounds to {su}"
        )));
    }
    Ok(())
}

/// Maximum Shannon entropy over an interval credal set, exactly.
///
/// The maximizer is `p_k = clamp(c, lower_k, upper_k)` with the level `c`
/// bisected until the coordinates sum to one within 1e-12.
pub fn upper_entropy_interval(c: &IntervalCredalSet) -> Result<f64> {
    check_feasible(c)?;
    let p = clamp_to_simplex(c.lower(), c.upper());
    Ok(shannon_entropy(&p))
}

fn clamp_to_simplex(lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let sum_at = |c: f64| -> f64 {
        lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| c.clamp(l, u))
            .sum()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let s = sum_at(mid);
        if (s - 1.0).abs() <= 1e-12 {
            break;
        }
        if s < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lower.iter().zip(upper).map(|(&l, &u)| mid.clamp(l, u)).collect()
}

/// Minimum Shannon entropy over an interval credal set.
///
/// Entropy is concave, so the minimum sits at an extreme point: all classes
/// pinned to a bound except at most one. Up to `exact_limit` classes every
/// extreme point is enumerated; above it a single greedy pass (saturating
/// classes by largest attainable probability first) is used and the result
/// is flagged [`BoundMethod::Numeric`].
pub fn lower_entropy_interval(c: &IntervalCredalSet, exact_limit: usize) -> Result<f64> {
    lower_entropy_interval_method(c, exact_limit).map(|(v, _)| v)
}

pub(crate) fn lower_entropy_interval_method(
    c: &IntervalCredalSet,
    exact_limit: usize,
) -> Result<(f64, BoundMethod)> {
    check_feasible(c)?;
    let k = c.n_classes();
    if k <= exact_limit.min(u32::BITS as usize - 1) {
        Ok((min_entropy_exact(c.lower(), c.upper()), BoundMethod::ExactInterval))
    } else {
        Ok((min_entropy_greedy(c.lower(), c.upper()), BoundMethod::Numeric))
    }
}

/// Enumerates the extreme points of `{l <= p <= u, sum p = 1}`.
///
/// Each extreme point saturates a subset of classes at their upper bound,
/// leaves the rest at the lower bound, and spends any remaining mass on one
/// partial class. The saturation subsets are walked depth-first with a
/// visited mask, which touches every reachable subset exactly once.
fn min_entropy_exact(lower: &[f64], upper: &[f64]) -> f64 {
    const EPS: f64 = 1e-12;
    let k = lower.len();
    let total_budget = (1.0 - lower.iter().sum::<f64>()).max(0.0);

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut visited = std::collections::HashSet::new();
    let mut stack: Vec<(u32, f64)> = vec![(0, total_budget)];
    while let Some((mask, budget)) = stack.pop() {
        if !visited.insert(mask) {
            continue;
        }
        for j in 0..k {
            if mask & (1 << j) != 0 {
                continue;
            }
            let cap = upper[j] - lower[j];
            if budget > cap + EPS {
                stack.push((mask | (1 << j), budget - cap));
            } else {
                let mut p = lower.to_vec();
                for (i, v) in p.iter_mut().enumerate() {
                    if mask & (1 << i) != 0 {
                        *v = upper[i];
                    }
                }
                p[j] = (lower[j] + budget).min(upper[j]);
                points.push(p);
            }
        }
        if mask.count_ones() as usize == k {
            points.push(upper.to_vec());
        }
    }

    // Duplicate candidates arise when the budget exhausts exactly at a
    // bound; drop them before scoring.
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));

    points
        .iter()
        .map(|p| shannon_entropy(p))
        .fold(f64::INFINITY, f64::min)
}

/// One greedy pass: saturate classes in order of their attainable maximum.
fn min_entropy_greedy(lower: &[f64], upper: &[f64]) -> f64 {
    let k = lower.len();
    let mut budget = (1.0 - lower.iter().sum::<f64>()).max(0.0);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| upper[b].partial_cmp(&upper[a]).unwrap().then(a.cmp(&b)));
    let mut p = lower.to_vec();
    for j in order {
        let add = budget.min(upper[j] - lower[j]);
        p[j] += add;
        budget -= add;
        if budget <= 0.0 {
            break;
        }
    }
    shannon_entropy(&p)
}

/// Maximum Shannon entropy over the convex hull of the generating points,
/// by projected-gradient ascent on the combination weights starting from
/// uniform weights.
pub fn upper_entropy_hull(h: &HullCredalSet, opt: &numeric::NumericOptions) -> f64 {
    let m = h.points().len();
    let k = h.n_classes();
    let mix_of = |w: &[f64]| -> Vec<f64> {
        let mut mix = vec![0.0; k];
        for (wi, q) in w.iter().zip(h.points()) {
            for (mk, qk) in mix.iter_mut().zip(q.probs()) {
                *mk += wi * qk;
            }
        }
        mix
    };

    let mut w = vec![1.0 / m as f64; m];
    let mut value = shannon_entropy(&mix_of(&w));
    let mut step = 1.0;
    for _ in 0..opt.max_iters {
        let mix = mix_of(&w);
        // d entropy / d w_i; the log is floored so empty mixture classes do
        // not poison the gradient.
        let grad: Vec<f64> = h
            .points()
            .iter()
            .map(|q| {
                q.probs()
                    .iter()
                    .zip(&mix)
                    .map(|(&qk, &mk)| -qk * (mk.max(1e-300).ln() + 1.0))
                    .sum()
            })
            .collect();

        let mut moved = false;
        while step > 1e-18 {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, g)| wi + step * g).collect();
            let cand = numeric::project_simplex(&trial);
            let cand_value = shannon_entropy(&mix_of(&cand));
            if cand_value > value + 1e-16 {
                let displacement: f64 = cand
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                w = cand;
                value = cand_value;
                moved = true;
                step = (step * 2.0).min(1e3);
                if displacement <= opt.tol {
                    return value;
                }
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    value
}

/// Minimum Shannon entropy over the hull: entropy is concave, so the
/// minimum is attained at one of the generating points.
pub fn lower_entropy_hull(h: &HullCredalSet) -> f64 {
    h.points()
        .iter()
        .map(|p| p.shannon_entropy())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct UncertaintyOptions {
    pub exact_limit: usize,
    pub numeric: numeric::NumericOptions,
}

impl Default for UncertaintyOptions {
    fn default() -> Self {
        Self {
            exact_limit: DEFAULT_EXACT_LIMIT,
            numeric: numeric::NumericOptions::default(),
        }
    }
}

/// Entropy bounds and epistemic uncertainty of a credal set.
pub fn epistemic_uncertainty(set: &CredalSet) -> Result<EntropyBounds> {
    epistemic_uncertainty_with(set, &UncertaintyOptions::default())
}

pub fn epistemic_uncertainty_with(set: &CredalSet, opts: &UncertaintyOptions) -> Result<EntropyBounds> {
    match set {
        CredalSet::Interval(c) => {
            let upper = upper_entropy_interval(c)?;
            let (lower, method) = lower_entropy_interval_method(c, opts.exact_limit)?;
            Ok(EntropyBounds::new(upper, lower, method))
        }
        CredalSet::Hull(h) => {
            let upper = upper_entropy_hull(h, &opts.numeric);
            let lower = lower_entropy_hull(h);
            Ok(EntropyBounds::new(upper, lower, BoundMethod::Numeric))
        }
    }
}

/// Per-set entropy bounds for a whole test set, in input order.
pub fn epistemic_uncertainty_batch(
    sets: &[CredalSet],
    opts: &UncertaintyOptions,
) -> Result<Vec<EntropyBounds>> {
    #[cfg(feature = "parallel")]
    {
        sets.par_iter()
            .map(|s| epistemic_uncertainty_with(s, opts))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sets.iter()
            .map(|s| epistemic_uncertainty_with(s, opts))
            .collect()
    }
}

/// Sequential twin of [`epistemic_uncertainty_batch`], kept unconditionally
/// for benchmarking the parallel path against a plain loop.
pub fn epistemic_uncertainty_batch_seq(
    sets: &[CredalSet],
    opts: &UncertaintyOptions,
) -> Result<Vec<EntropyBounds>> {
    sets.iter()
        .map(|s| epistemic_uncertainty_with(s, opts))
        .collect()
}

/// Numeric reference routes: projected-gradient entropy maximization and
/// the simplex projections it needs. These deliberately avoid the
/// bisection used by the exact interval path so the two can cross-check
/// each other.
pub mod numeric {
    use super::*;

    #[derive(Debug, Clone)]
    pub struct NumericOptions {
        pub max_iters: usize,
        /// Stop once the projected step displaces the iterate by less than
        /// this.
        pub tol: f64,
    }

    impl Default for NumericOptions {
        fn default() -> Self {
            Self {
                max_iters: 10_000,
                tol: 1e-8,
            }
        }
    }

    /// Euclidean projection onto the probability simplex (sort-based).
    ///
    /// The support of the projection is a prefix of the descending sort;
    /// the shift is fixed by the longest prefix that stays positive.
    pub fn project_simplex(x: &[f64]) -> Vec<f64> {
        let mut sorted = x.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut cumsum = 0.0;
        let mut theta = 0.0;
        for (i, &v) in sorted.iter().enumerate() {
            cumsum += v;
            let t = (cumsum - 1.0) / (i + 1) as f64;
            if v - t > 0.0 {
                theta = t;
            }
        }
        x.iter().map(|&v| (v - theta).max(0.0)).collect()
    }

    /// Euclidean projection onto `{l <= p <= u, sum p = 1}` by scanning the
    /// breakpoints of the piecewise-linear shift function.
    pub fn project_box_simplex(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
        let clamp_at = |lambda: f64| -> Vec<f64> {
            x.iter()
                .zip(lower.iter().zip(upper))
                .map(|(&xi, (&l, &u))| (xi - lambda).clamp(l, u))
                .collect()
        };
        let sum_at = |lambda: f64| -> f64 { clamp_at(lambda).iter().sum() };

        let mut bps: Vec<f64> = Vec::with_capacity(2 * x.len());
        for ((&xi, &l), &u) in x.iter().zip(lower).zip(upper) {
            bps.push(xi - u);
            bps.push(xi - l);
        }
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // sum_at is continuous and nonincreasing in lambda, from sum(upper)
        // down to sum(lower); locate the segment crossing 1 and solve the
        // linear piece.
        if sum_at(bps[0]) <= 1.0 {
            return clamp_at(bps[0]);
        }
        if sum_at(*bps.last().unwrap()) >= 1.0 {
            return clamp_at(*bps.last().unwrap());
        }
        for pair in bps.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let (sa, sb) = (sum_at(a), sum_at(b));
            if sa >= 1.0 && sb <= 1.0 {
                if (sa - sb).abs() <= f64::EPSILON {
                    return clamp_at(a);
                }
                let lambda = a + (sa - 1.0) * (b - a) / (sa - sb);
                return clamp_at(lambda);
            }
        }
        clamp_at(*bps.last().unwrap())
    }

    /// Interval-set entropy maximization by projected-gradient ascent,
    /// initialized at the projected interval midpoint.
    pub fn max_entropy_interval_pga(c: &IntervalCredalSet, opt: &NumericOptions) -> Result<f64> {
        super::check_feasible(c)?;
        let mid: Vec<f64> = c
            .lower()
            .iter()
            .zip(c.upper())
            .map(|(&l, &u)| 0.5 * (l + u))
            .collect();
        let mut p = project_box_simplex(&mid, c.lower(), c.upper());
        let mut value = shannon_entropy(&p);
        let mut step = 1.0;
        for _ in 0..opt.max_iters {
            let grad: Vec<f64> = p.iter().map(|&v| -(v.max(1e-300).ln() + 1.0)).collect();
            let mut moved = false;
            while step > 1e-18 {
                let trial: Vec<f64> = p.iter().zip(&grad).map(|(pi, g)| pi + step * g).collect();
                let cand = project_box_simplex(&trial, c.lower(), c.upper());
                let cand_value = shannon_entropy(&cand);
                if cand_value > value + 1e-16 {
                    let displacement: f64 = cand
                        .iter()
                        .zip(&p)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    p = cand;
                    value = cand_value;
                    moved = true;
                    step = (step * 2.0).min(1e3);
                    if displacement <= opt.tol {
                        return Ok(value);
                    }
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(value)
    }
}
