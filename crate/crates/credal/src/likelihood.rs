//! Log-likelihood and relative likelihood of models on a dataset.
//!
//! All likelihood arithmetic stays in the log domain; raw products of
//! per-sample probabilities underflow already for a few hundred samples.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nn::Mlp;

/// Whether relative likelihood compares total log-likelihoods or their
/// per-sample means.
///
/// `Raw` is the textbook ratio `L(h) / L(h_ml)`. For large datasets that
/// ratio collapses to 0 for any model that is not essentially the maximum
/// likelihood estimate, which makes thresholds on it degenerate, so
/// `PerSample` divides the log-gap by the sample count. Outputs record which
/// one was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    PerSample,
}

/// Relative likelihood of a model against a maximum-likelihood reference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RelativeLikelihood {
    /// `log L(h) - log L(h_ml)`, divided by the sample count under
    /// [`Normalization::PerSample`].
    pub log_gamma: f64,
    /// `exp(log_gamma)`.
    pub gamma: f64,
    pub normalization: Normalization,
    pub n_samples: usize,
}

/// Total log-likelihood `sum_i log p(y_i | x_i)` of the hard labels.
///
/// Returns negative infinity when some label receives zero probability; the
/// event is logged rather than treated as an error.
pub fn log_likelihood(model: &Mlp, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("log-likelihood of an empty dataset".into()));
    }
    let mut total = 0.0;
    for i in 0..data.len() {
        let lp = model.log_probs(data.feature_row(i))?;
        let term = lp[data.label(i)];
        if term == f64::NEG_INFINITY {
            log::warn!(
                "log-likelihood underflow: sample {i} of '{}' has zero probability",
                data.meta.name
            );
        }
        total += term;
    }
    Ok(total)
}

/// Relative likelihood `gamma(h) = L(h) / L(h_ml)` estimated against a
/// trained reference model.
///
/// Values above 1 are possible because the reference is itself only an
/// estimate; they are kept as-is and logged.
pub fn relative_likelihood(
    model: &Mlp,
    mle: &Mlp,
    data: &Dataset,
    normalization: Normalization,
) -> Result<RelativeLikelihood> {
    if model.n_classes() != mle.n_classes() {
        return Err(Error::Input(format!(
            "model predicts {} classes, reference {}",
            model.n_classes(),
            mle.n_classes()
        )));
    }
    let ll_model = log_likelihood(model, data)?;
    let ll_mle = log_likelihood(mle, data)?;
    Ok(relative_likelihood_from_lls(
        ll_model,
        ll_mle,
        data.len(),
        normalization,
    ))
}

/// Assembles a [`RelativeLikelihood`] from precomputed log-likelihoods.
pub fn relative_likelihood_from_lls(
    ll_model: f64,
    ll_mle: f64,
    n_samples: usize,
    normalization: Normalization,
) -> RelativeLikelihood {
    let mut log_gamma = ll_model - ll_mle;
    if let Normalization::PerSample = normalization {
        log_gamma /= n_samples as f64;
    }
    if log_gamma > 0.0 {
        log::debug!("relative likelihood exceeds 1 (log_gamma = {log_gamma:.3e}); reference beaten");
    }
    RelativeLikelihood {
        log_gamma,
        gamma: log_gamma.exp(),
        normalization,
        n_samples,
    }
}

/// Closed-form relative likelihood of a Bernoulli parameter given `heads`
/// successes in `n` draws, with the empirical rate as the reference.
///
/// Computed in the log domain with the convention `0^0 = 1`.
pub fn bernoulli_relative_likelihood(theta: f64, heads: u64, n: u64) -> f64 {
    assert!(n >= 1, "need at least one draw");
    assert!(heads <= n, "heads cannot exceed draws");
    assert!((0.0..=1.0).contains(&theta), "theta must lie in [0, 1]");
    let mle = heads as f64 / n as f64;
    let ll = bernoulli_log_likelihood(theta, heads, n) - bernoulli_log_likelihood(mle, heads, n);
    ll.exp()
}

fn bernoulli_log_likelihood(theta: f64, heads: u64, n: u64) -> f64 {
    let tails = n - heads;
    let head_term = if heads == 0 { 0.0 } else { heads as f64 * theta.ln() };
    let tail_term = if tails == 0 { 0.0 } else { tails as f64 * (1.0 - theta).ln() };
    head_term + tail_term
}

/// Endpoints of `{theta : gamma(theta) >= alpha}` for the Bernoulli
/// relative-likelihood curve, located by bisection on each side of the
/// empirical rate.
///
/// The curve rises monotonically up to the reference point and falls after
/// it, so the cut is a closed interval.
pub fn bernoulli_alpha_cut(alpha: f64, heads: u64, n: u64) -> (f64, f64) {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    let mle = heads as f64 / n as f64;
    let gamma = |t: f64| bernoulli_relative_likelihood(t, heads, n);
    let lo = if gamma(0.0) >= alpha {
        0.0
    } else {
        bisect_crossing(gamma, 0.0, mle, alpha, true)
    };
    let hi = if gamma(1.0) >= alpha {
        1.0
    } else {
        bisect_crossing(gamma, mle, 1.0, alpha, false)
    };
    (lo, hi)
}

/// Bisects for `gamma(t) = level` on an interval where `gamma` is monotone;
/// `rising` states whether the curve increases over `[lo, hi]`.
fn bisect_crossing(gamma: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, level: f64, rising: bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let above = gamma(mid) >= level;
        if above == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
