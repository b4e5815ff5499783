//! Credal sets over a finite class space: construction from finite
//! prediction sets, membership predicates, and the coverage/efficiency
//! metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbabilityDistribution;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default tolerance for membership predicates.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// The finite set of member predictions for one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteCredalSample {
    points: Vec<ProbabilityDistribution>,
}

impl FiniteCredalSample {
    pub fn new(points: Vec<ProbabilityDistribution>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("a credal sample needs at least one prediction".into()));
        }
        let k = points[0].n_classes();
        if points.iter().any(|p| p.n_classes() != k) {
            return Err(Error::Input("all predictions must share the class count".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ProbabilityDistribution] {
        &self.points
    }

    pub fn n_classes(&self) -> usize {
        self.points[0].n_classes()
    }
}

/// Class-wise probability intervals: the box credal set
/// `{p : lower_k <= p_k <= upper_k}` intersected with the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCredalSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl IntervalCredalSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Input("lower/upper must be nonempty and equally long".into()));
        }
        for (k, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0..=1.0 + DEFAULT_MEMBERSHIP_TOL).contains(&l) || !l.is_finite()
                || !(0.0..=1.0 + DEFAULT_MEMBERSHIP_TOL).contains(&u) || !u.is_finite()
                || l > u + DEFAULT_MEMBERSHIP_TOL
            {
                return Err(Error::Input(format!(
                    "class {k}: bounds [{l}, {u}] are not a subinterval of [0, 1]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Componentwise min/max over the sample's predictions.
    pub fn from_sample(sample: &FiniteCredalSample) -> Self {
        let k = sample.n_classes();
        let mut lower = vec![f64::INFINITY; k];
        let mut upper = vec![f64::NEG_INFINITY; k];
        for p in sample.points() {
            for (i, &v) in p.probs().iter().enumerate() {
                lower[i] = lower[i].min(v);
                upper[i] = upper[i].max(v);
            }
        }
        Self { lower, upper }
    }

    pub fn n_classes(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Mean class-interval width.
    pub fn mean_width(&self) -> f64 {
        let k = self.lower.len() as f64;
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .sum::<f64>()
            / k
    }

    /// True when the box intersects the simplex.
    pub fn is_feasible(&self) -> bool {
        let sum_lower: f64 = self.lower.iter().sum();
        let sum_upper: f64 = self.upper.iter().sum();
        sum_lower <= 1.0 + DEFAULT_MEMBERSHIP_TOL && sum_upper >= 1.0 - DEFAULT_MEMBERSHIP_TOL
    }

    /// Componentwise membership within `tol`.
    pub fn contains(&self, p: &ProbabilityDistribution, tol: f64) -> Result<bool> {
        if p.n_classes() != self.n_classes() {
            return Err(Error::Input(format!(
                "distribution has {} classes, set has {}",
                p.n_classes(),
                self.n_classes()
            )));
        }
        Ok(p.probs()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol))
    }
}

/// Convex hull of a finite set of predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullCredalSet {
    extreme_candidates: Vec<ProbabilityDistribution>,
}

impl HullCredalSet {
    pub fn from_sample(sample: FiniteCredalSample) -> Self {
        Self {
            extreme_candidates: sample.points,
        }
    }

    pub fn points(&self) -> &[ProbabilityDistribution] {
        &self.extreme_candidates
    }

    pub fn n_classes(&self) -> usize {
        self.extreme_candidates[0].n_classes()
    }

    /// Whether `p` is a convex combination of the generating points, decided
    /// by phase-1 simplex on the combination weights.
    pub fn contains(&self, p: &ProbabilityDistribution, tol: f64) -> Result<bool> {
        if p.n_classes() != self.n_classes() {
            return Err(Error::Input(format!(
                "distribution has {} classes, hull has {}",
                p.n_classes(),
                self.n_classes()
            )));
        }
        let k = self.n_classes();
        let m = self.extreme_candidates.len();
        // Equality system: sum_i w_i q_i = p plus sum_i w_i = 1, w >= 0.
        let mut rows = Vec::with_capacity(k + 1);
        for class in 0..k {
            let row: Vec<f64> = self
                .extreme_candidates
                .iter()
                .map(|q| q.probs()[class])
                .collect();
            rows.push((row, p.probs()[class]));
        }
        rows.push((vec![1.0; m], 1.0));
        let residual = phase_one_feasibility(&rows)?;
        Ok(residual <= tol.max(DEFAULT_MEMBERSHIP_TOL))
    }
}

/// Either credal-set representation, so mixed lists can be evaluated with
/// one coverage call.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredalSet {
    Interval(IntervalCredalSet),
    Hull(HullCredalSet),
}

impl CredalSet {
    pub fn contains(&self, p: &ProbabilityDistribution, tol: f64) -> Result<bool> {
        match self {
            CredalSet::Interval(c) => c.contains(p, tol),
            CredalSet::Hull(h) => h.contains(p, tol),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            CredalSet::Interval(c) => c.n_classes(),
            CredalSet::Hull(h) => h.n_classes(),
        }
    }
}

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

/// Minimal artificial-variable objective for `A w = b, w >= 0` (rows given
/// as `(coefficients, rhs)` with `rhs >= 0`); zero means feasible.
///
/// Dense phase-1 simplex with Bland's rule, capped at [`MAX_PIVOTS`]
/// pivots.
fn phase_one_feasibility(rows: &[(Vec<f64>, f64)]) -> Result<f64> {
    let r = rows.len();
    let m = rows[0].0.len();
    let cols = m + r; // original variables then one artificial per row
    debug_assert!(rows.iter().all(|(_, b)| *b >= 0.0));

    // tableau[i] = row coefficients ++ rhs
    let mut tab: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, (coef, b))| {
            let mut row = vec![0.0; cols + 1];
            row[..m].copy_from_slice(coef);
            row[m + i] = 1.0;
            row[cols] = *b;
            row
        })
        .collect();
    let mut basis: Vec<usize> = (m..cols).collect();

    // Reduced-cost row for minimizing the artificial sum: start from
    // obj[j] = sum_i tab[i][j] - cost_j, which is zero on the initial basis.
    let mut obj = vec![0.0; cols + 1];
    for j in 0..=cols {
        let mut s = 0.0;
        for row in &tab {
            s += row[j];
        }
        if (m..cols).contains(&j) {
            s -= 1.0;
        }
        obj[j] = s;
    }

    for _ in 0..MAX_PIVOTS {
        // Bland: first improving column.
        let Some(enter) = (0..cols).find(|&j| obj[j] > PIVOT_EPS) else {
            return Ok(obj[cols].max(0.0));
        };
        // Ratio test, Bland tie-break on the leaving basis variable.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..r {
            let a = tab[i][enter];
            if a > PIVOT_EPS {
                let ratio = tab[i][cols] / a;
                let better = ratio < best - PIVOT_EPS
                    || ((ratio - best).abs() <= PIVOT_EPS
                        && leave.map_or(true, |l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            // Unbounded improving direction cannot happen for this objective
            // (it is bounded below by zero); treat as solver failure.
            return Err(Error::IterationCap(MAX_PIVOTS));
        };

        let pivot = tab[leave][enter];
        for v in &mut tab[leave] {
            *v /= pivot;
        }
        for i in 0..r {
            if i != leave {
                let factor = tab[i][enter];
                if factor != 0.0 {
                    let (src, dst) = if i < leave {
                        let (a, b) = tab.split_at_mut(leave);
                        (&b[0], &mut a[i])
                    } else {
                        let (a, b) = tab.split_at_mut(i);
                        (&a[leave], &mut b[0])
                    };
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= factor * s;
                    }
                }
            }
        }
        let factor = obj[enter];
        if factor != 0.0 {
            for (o, s) in obj.iter_mut().zip(&tab[leave]) {
                *o -= factor * s;
            }
        }
        basis[leave] = enter;
    }
    Err(Error::IterationCap(MAX_PIVOTS))
}

/// Fraction of instances whose ground-truth distribution lies inside the
/// predicted credal set.
pub fn coverage(sets: &[CredalSet], truths: &[ProbabilityDistribution], tol: f64) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Input("coverage of an empty prediction list".into()));
    }
    if sets.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} credal sets but {} ground-truth distributions",
            sets.len(),
            truths.len()
        )));
    }
    #[cfg(feature = "parallel")]
    let hits: Result<Vec<bool>> = sets
        .par_iter()
        .zip(truths.par_iter())
        .map(|(s, t)| s.contains(t, tol))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let hits: Result<Vec<bool>> = sets
        .iter()
        .zip(truths.iter())
        .map(|(s, t)| s.contains(t, tol))
        .collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// One minus the mean class-interval width, averaged over instances.
pub fn efficiency(sets: &[IntervalCredalSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Input("efficiency of an empty prediction list".into()));
    }
    let k = sets[0].n_classes();
    if sets.iter().any(|s| s.n_classes() != k) {
        return Err(Error::Input("credal sets must share the class count".into()));
    }
    let mean_width = sets.iter().map(IntervalCredalSet::mean_width).sum::<f64>() / sets.len() as f64;
    Ok((1.0 - mean_width).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> ProbabilityDistribution {
        ProbabilityDistribution::new(v.to_vec()).unwrap()
    }

    fn sample(points: &[&[f64]]) -> FiniteCredalSample {
        FiniteCredalSample::new(points.iter().map(|p| dist(p)).collect()).unwrap()
    }

    #[test]
    fn interval_from_finite_takes_componentwise_bounds() {
        let s = sample(&[&[0.2, 0.8], &[0.5, 0.5]]);
        let c = IntervalCredalSet::from_sample(&s);
        assert_eq!(c.lower(), &[0.2, 0.5]);
        assert_eq!(c.upper(), &[0.5, 0.8]);
    }

    #[test]
    fn interval_from_single_point_is_degenerate() {
        let s = sample(&[&[0.3, 0.7]]);
        let c = IntervalCredalSet::from_sample(&s);
        assert_eq!(c.lower(), c.upper());
        assert_eq!(c.mean_width(), 0.0);
    }

    #[test]
    fn interval_from_vertices_is_the_full_box() {
        let s = sample(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let c = IntervalCredalSet::from_sample(&s);
        assert_eq!(c.lower(), &[0.0, 0.0, 0.0]);
        assert_eq!(c.upper(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn interval_contains_examples() {
        let full = IntervalCredalSet::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(full.contains(&dist(&[0.25, 0.75]), 1e-9).unwrap());

        let c = IntervalCredalSet::new(vec![0.2, 0.5], vec![0.5, 0.8]).unwrap();
        assert!(c.contains(&dist(&[0.3, 0.7]), 1e-9).unwrap());
        assert!(!c.contains(&dist(&[0.1, 0.9]), 1e-9).unwrap());
        assert!(c.contains(&dist(&[0.2, 0.8]), 1e-9).unwrap());
    }

    #[test]
    fn interval_contains_rejects_dimension_mismatch() {
        let c = IntervalCredalSet::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(c.contains(&dist(&[1.0 / 3.0; 3]), 1e-9).is_err());
    }

    #[test]
    fn hull_contains_barycenter_of_vertices() {
        let h = HullCredalSet::from_sample(sample(&[
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0],
        ]));
        assert!(h.contains(&dist(&[1.0 / 3.0; 3]), 1e-9).unwrap());
    }

    #[test]
    fn hull_contains_midpoint_of_segment_but_not_beyond() {
        let h = HullCredalSet::from_sample(sample(&[&[0.5, 0.5], &[0.7, 0.3]]));
        assert!(h.contains(&dist(&[0.6, 0.4]), 1e-9).unwrap());
        assert!(!h.contains(&dist(&[0.8, 0.2]), 1e-9).unwrap());
        assert!(!h.contains(&dist(&[0.4, 0.6]), 1e-9).unwrap());
        assert!(h.contains(&dist(&[0.5, 0.5]), 1e-9).unwrap());
        assert!(h.contains(&dist(&[0.7, 0.3]), 1e-9).unwrap());
    }

    #[test]
    fn hull_of_single_point_contains_only_that_point() {
        let h = HullCredalSet::from_sample(sample(&[&[0.25, 0.75]]));
        assert!(h.contains(&dist(&[0.25, 0.75]), 1e-9).unwrap());
        assert!(!h.contains(&dist(&[0.3, 0.7]), 1e-9).unwrap());
    }

    #[test]
    fn coverage_counts_hits() {
        let full = CredalSet::Interval(IntervalCredalSet::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let point = CredalSet::Interval(IntervalCredalSet::new(vec![0.9, 0.1], vec![0.9, 0.1]).unwrap());
        let truths = vec![dist(&[0.5, 0.5]); 4];
        assert_eq!(coverage(&vec![full.clone(); 4], &truths, 1e-9).unwrap(), 1.0);
        assert_eq!(coverage(&vec![point.clone(); 4], &truths, 1e-9).unwrap(), 0.0);
        let mixed = vec![full.clone(), full, point.clone(), point];
        assert_eq!(coverage(&mixed, &truths, 1e-9).unwrap(), 0.5);
    }

    #[test]
    fn efficiency_examples() {
        let point = IntervalCredalSet::new(vec![0.4, 0.6], vec![0.4, 0.6]).unwrap();
        assert_eq!(efficiency(&[point]).unwrap(), 1.0);

        let full = IntervalCredalSet::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(efficiency(&[full]).unwrap(), 0.0);

        let c = IntervalCredalSet::new(vec![0.2, 0.5], vec![0.5, 0.8]).unwrap();
        assert_relative_eq!(efficiency(&[c]).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(coverage(&[], &[], 1e-9).is_err());
        assert!(efficiency(&[]).is_err());
        assert!(FiniteCredalSample::new(vec![]).is_err());
    }

    proptest! {
        /// Adding a prediction can only widen the interval set.
        #[test]
        fn interval_monotone_under_member_addition(
            base in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..6),
            extra in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let normalize = |v: &Vec<f64>| {
                let s: f64 = v.iter().sum();
                dist(&v.iter().map(|x| x / s).collect::<Vec<_>>())
            };
            let points: Vec<_> = base.iter().map(normalize).collect();
            let small = IntervalCredalSet::from_sample(&FiniteCredalSample::new(points.clone()).unwrap());
            let mut grown = points;
            grown.push(normalize(&extra));
            let big = IntervalCredalSet::from_sample(&FiniteCredalSample::new(grown).unwrap());
            for k in 0..3 {
                prop_assert!(big.lower()[k] <= small.lower()[k] + 1e-12);
                prop_assert!(big.upper()[k] >= small.upper()[k] - 1e-12);
            }
            prop_assert!(efficiency(&[big]).unwrap() <= efficiency(&[small]).unwrap() + 1e-12);
        }

        /// Hull membership implies interval membership on the same points.
        #[test]
        fn hull_is_contained_in_box(
            raw_points in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 2..6),
            weights in proptest::collection::vec(0.01f64..1.0, 2..6),
        ) {
            let normalize = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let points: Vec<_> = raw_points.iter().map(|v| dist(&normalize(v))).collect();
            // A random convex combination of the points lies in the hull.
            let m = points.len().min(weights.len());
            let w = normalize(&weights[..m]);
            let mut combo = vec![0.0; 3];
            for (wi, p) in w.iter().zip(&points[..m]) {
                for k in 0..3 {
                    combo[k] += wi * p.probs()[k];
                }
            }
            let combo = dist(&normalize(&combo));
            let sample = FiniteCredalSample::new(points).unwrap();
            let box_set = IntervalCredalSet::from_sample(&sample);
            let hull = HullCredalSet::from_sample(sample);
            if hull.contains(&combo, 1e-9).unwrap() {
                prop_assert!(box_set.contains(&combo, 1e-9).unwrap());
            }
        }

        /// The box always intersects the simplex when built from distributions.
        #[test]
        fn interval_from_finite_is_feasible(
            raw_points in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 1..8),
        ) {
            let points: Vec<_> = raw_points.iter().map(|v| {
                let s: f64 = v.iter().sum();
                dist(&v.iter().map(|x| x / s).collect::<Vec<_>>())
            }).collect();
            let c = IntervalCredalSet::from_sample(&FiniteCredalSample::new(points).unwrap());
            prop_assert!(c.is_feasible());
            let sum_lower: f64 = c.lower().iter().sum();
            let sum_upper: f64 = c.upper().iter().sum();
            prop_assert!(sum_lower <= 1.0 + 1e-12);
            prop_assert!(sum_upper >= 1.0 - 1e-12);
        }
    }
}
