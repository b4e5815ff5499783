//! Test-set aggregation: coverage/efficiency reports, Pareto comparison,
//! AUROC, and per-instance uncertainty scores.

use serde::{Deserialize, Serialize};

use crate::credal_sets::{
    CredalSet, FiniteCredalSample, HullCredalSet, IntervalCredalSet, DEFAULT_MEMBERSHIP_TOL,
};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::prob::ProbabilityDistribution;
use crate::training::{creens_prune, CrlEnsemble};
use crate::uncertainty::{epistemic_uncertainty_with, EntropyBounds, UncertaintyOptions};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which credal-set construction a predictor is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Interval,
    Hull,
}

/// Aggregate metrics of one predictor configuration on one test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_id: String,
    pub alpha: Option<f64>,
    pub coverage: f64,
    pub efficiency: f64,
    pub mean_eu: f64,
    pub per_member_accuracy: Vec<f64>,
    pub seed: u64,
}

/// Epistemic-uncertainty scores on in-distribution and shifted data, with
/// the AUROC of separating the two.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OodReport {
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
    pub auroc: f64,
}

/// Area under the ROC curve via the rank statistic (ties count half).
///
/// `negatives` are the scores that should rank low, `positives` the scores
/// that should rank high.
pub fn auroc(negatives: &[f64], positives: &[f64]) -> Result<f64> {
    if negatives.is_empty() || positives.is_empty() {
        return Err(Error::Input("auroc needs scores on both sides".into()));
    }
    if negatives.iter().chain(positives).any(|s| s.is_nan()) {
        return Err(Error::Input("auroc scores must not be NaN".into()));
    }
    let mut pooled: Vec<(f64, bool)> = negatives
        .iter()
        .map(|&s| (s, false))
        .chain(positives.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Average the ranks inside each tie group.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0; // 1-based
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = positives.len() as f64;
    let n_neg = negatives.len() as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// True when `a` is at least as good as `b` on both axes and strictly
/// better on one.
pub fn pareto_dominates(a: &EvalReport, b: &EvalReport) -> bool {
    a.coverage >= b.coverage
        && a.efficiency >= b.efficiency
        && (a.coverage > b.coverage || a.efficiency > b.efficiency)
}

/// The subset of reports not dominated by any other, in input order.
pub fn pareto_front(reports: &[EvalReport]) -> Result<Vec<EvalReport>> {
    if reports.is_empty() {
        return Err(Error::Input("pareto front of an empty report list".into()));
    }
    Ok(reports
        .iter()
        .filter(|r| !reports.iter().any(|other| pareto_dominates(other, r)))
        .cloned()
        .collect())
}

/// Mean Shannon entropy (nats) over a list of distributions.
pub fn mean_distribution_entropy(dists: &[ProbabilityDistribution]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::Input("mean entropy of an empty list".into()));
    }
    Ok(dists.iter().map(ProbabilityDistribution::shannon_entropy).sum::<f64>() / dists.len() as f64)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub set_kind: SetKind,
    /// Membership tolerance for coverage checks.
    pub tol: f64,
    /// Whether unconverged members contribute predictions.
    pub include_unconverged: bool,
    /// When set, prune each instance's predictions to this level before
    /// building the credal set (distance-to-mean pruning).
    pub creens_alpha: Option<f64>,
    pub uncertainty: UncertaintyOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            set_kind: SetKind::Interval,
            tol: DEFAULT_MEMBERSHIP_TOL,
            include_unconverged: true,
            creens_alpha: None,
            uncertainty: UncertaintyOptions::default(),
        }
    }
}

struct InstanceEval {
    covered: bool,
    width: f64,
    eu: f64,
    member_hits: Vec<bool>,
}

fn instance_sets(
    ens: &CrlEnsemble,
    x: &[f64],
    opts: &EvalOptions,
) -> Result<(IntervalCredalSet, CredalSet)> {
    let sample = ens.member_predictions(x, opts.include_unconverged)?;
    let points = match opts.creens_alpha {
        Some(a) => creens_prune(sample.points(), a)?,
        None => sample.points().to_vec(),
    };
    let pruned = FiniteCredalSample::new(points)?;
    let interval = IntervalCredalSet::from_sample(&pruned);
    let set = match opts.set_kind {
        SetKind::Interval => CredalSet::Interval(interval.clone()),
        SetKind::Hull => CredalSet::Hull(HullCredalSet::from_sample(pruned)),
    };
    Ok((interval, set))
}

/// Coverage, efficiency, mean epistemic uncertainty, and per-member
/// accuracy of an ensemble on a test set with ground-truth distributions.
///
/// Efficiency always uses the class-interval widths; the membership
/// predicate follows `opts.set_kind`.
pub fn evaluate_predictor(
    ens: &CrlEnsemble,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if !data.has_ground_truth() {
        return Err(Error::Input(format!(
            "dataset '{}' has no ground-truth distributions; coverage is undefined",
            data.meta.name
        )));
    }
    let eval_one = |i: usize| -> Result<InstanceEval> {
        let x = data.feature_row(i);
        let truth = ProbabilityDistribution::new(data.ground_truth_row(i).unwrap().to_vec())?;
        let (interval, set) = instance_sets(ens, x, opts)?;
        let covered = set.contains(&truth, opts.tol)?;
        let eu = epistemic_uncertainty_with(&set, &opts.uncertainty)?.eu;
        let member_hits = ens
            .members
            .iter()
            .map(|m| Ok(m.model.forward(x)?.argmax() == data.label(i)))
            .collect::<Result<Vec<bool>>>()?;
        Ok(InstanceEval {
            covered,
            width: interval.mean_width(),
            eu,
            member_hits,
        })
    };
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<InstanceEval>> = (0..data.len()).into_par_iter().map(eval_one).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<InstanceEval>> = (0..data.len()).map(eval_one).collect();
    let rows = rows?;

    let n = rows.len() as f64;
    let coverage = rows.iter().filter(|r| r.covered).count() as f64 / n;
    let efficiency = (1.0 - rows.iter().map(|r| r.width).sum::<f64>() / n).clamp(0.0, 1.0);
    let mean_eu = rows.iter().map(|r| r.eu).sum::<f64>() / n;
    let n_members = ens.n_members();
    let per_member_accuracy: Vec<f64> = (0..n_members)
        .map(|m| rows.iter().filter(|r| r.member_hits[m]).count() as f64 / n)
        .collect();

    let seed = ens.provenance.config.optimizer.seed;
    let config_id = match ens.alpha {
        Some(a) => format!("{}_a{:.3}_s{}", ens.provenance.method, a, seed),
        None => format!("{}_s{}", ens.provenance.method, seed),
    };
    Ok(EvalReport {
        config_id,
        alpha: ens.alpha,
        coverage,
        efficiency,
        mean_eu,
        per_member_accuracy,
        seed,
    })
}

/// Per-instance entropy bounds of the ensemble's credal predictions.
/// Ground-truth distributions are not needed, so this also serves shifted
/// (OoD) datasets.
pub fn eu_scores(ens: &CrlEnsemble, data: &Dataset, opts: &EvalOptions) -> Result<Vec<EntropyBounds>> {
    let score_one = |i: usize| -> Result<EntropyBounds> {
        let (_, set) = instance_sets(ens, data.feature_row(i), opts)?;
        epistemic_uncertainty_with(&set, &opts.uncertainty)
    };
    #[cfg(feature = "parallel")]
    {
        (0..data.len()).into_par_iter().map(score_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..data.len()).map(score_one).collect()
    }
}

/// Sequential twin of [`eu_scores`] kept for benchmarking the parallel
/// path.
pub fn eu_scores_seq(ens: &CrlEnsemble, data: &Dataset, opts: &EvalOptions) -> Result<Vec<EntropyBounds>> {
    (0..data.len())
        .map(|i| {
            let (_, set) = instance_sets(ens, data.feature_row(i), opts)?;
            epistemic_uncertainty_with(&set, &opts.uncertainty)
        })
        .collect()
}

/// Builds an [`OodReport`] from per-instance epistemic uncertainties.
pub fn ood_report(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<OodReport> {
    let auroc = auroc(&id_scores, &ood_scores)?;
    Ok(OodReport {
        id_scores,
        ood_scores,
        auroc,
    })
}
