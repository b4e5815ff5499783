//! Ensemble training against relative-likelihood thresholds.
//!
//! The main constructor trains a maximum-likelihood reference, derives an
//! evenly spaced threshold schedule on `[alpha, 1]`, and early-stops one
//! ToBias-initialized member per threshold once its relative likelihood
//! reaches the target. A plain deep-ensemble constructor (full training,
//! standard init) and distance-based prediction pruning cover the usual
//! baselines with the same container.

use serde::{Deserialize, Serialize};

use crate::credal_sets::FiniteCredalSample;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{
    log_likelihood, relative_likelihood_from_lls, Normalization,
};
use crate::nn::{Mlp, OptimizerConfig, Trainer};
use crate::prob::ProbabilityDistribution;
use crate::rng::split_seed;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Granularity at which a member's relative likelihood is checked against
/// its stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckEvery {
    Epoch,
    Batch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrlConfig {
    /// Relative-likelihood cut level; members are spread over `[alpha, 1]`.
    pub alpha: f64,
    /// Ensemble size including the maximum-likelihood member.
    pub n_members: usize,
    /// ToBias output-bias constant.
    pub beta: f64,
    pub check_every: CheckEvery,
    /// Slack subtracted from the stopping threshold when comparing the
    /// achieved relative likelihood.
    pub gamma_tolerance: f64,
    pub optimizer: OptimizerConfig,
    pub normalization: Normalization,
    /// Hidden layer widths; input/output sizes come from the dataset.
    pub hidden_layers: Vec<usize>,
}

impl Default for CrlConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_members: 10,
            beta: 100.0,
            check_every: CheckEvery::Epoch,
            gamma_tolerance: 0.0,
            optimizer: OptimizerConfig::default(),
            normalization: Normalization::Raw,
            hidden_layers: vec![16],
        }
    }
}

impl CrlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.n_members == 0 {
            return Err(Error::Config("n_members must be at least 1".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite, got {}", self.beta)));
        }
        if !self.gamma_tolerance.is_finite() || self.gamma_tolerance < 0.0 {
            return Err(Error::Config(format!(
                "gamma_tolerance must be >= 0, got {}",
                self.gamma_tolerance
            )));
        }
        self.optimizer.validate()
    }

    fn layer_sizes_for(&self, data: &Dataset) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(data.n_features());
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(data.n_classes());
        sizes
    }
}

/// One trained ensemble member together with its stopping record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedMember {
    pub model: Mlp,
    /// Relative-likelihood level this member was trained toward.
    pub target_tau: f64,
    /// Relative likelihood of the returned model.
    pub achieved_gamma: f64,
    pub epochs_run: usize,
    /// False when the threshold was still unmet after `max_epochs`; such
    /// members are kept and flagged rather than dropped.
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub config: CrlConfig,
    pub member_seeds: Vec<u64>,
}

/// A maximum-likelihood model plus members stopped at scheduled
/// relative-likelihood levels. Slot 0 always holds the reference model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrlEnsemble {
    pub mle: Mlp,
    pub members: Vec<TrainedMember>,
    /// Cut level; `None` for ensembles without a threshold schedule.
    pub alpha: Option<f64>,
    pub provenance: Provenance,
}

impl CrlEnsemble {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_classes(&self) -> usize {
        self.mle.n_classes()
    }

    /// Member predictions for one instance, in slot order.
    pub fn member_predictions(
        &self,
        x: &[f64],
        include_unconverged: bool,
    ) -> Result<FiniteCredalSample> {
        let mut points = Vec::with_capacity(self.members.len());
        for m in &self.members {
            if include_unconverged || m.converged {
                points.push(m.model.forward(x)?);
            }
        }
        if points.is_empty() {
            return Err(Error::Input(
                "every member is unconverged and unconverged members are excluded".into(),
            ));
        }
        FiniteCredalSample::new(points)
    }
}

/// Evenly spaced stopping thresholds `alpha + i * (1 - alpha) / (M - 1)`
/// for `i = 0..M-2`; the remaining ensemble slot is the reference model at
/// level 1.
pub fn compute_thresholds(alpha: f64, n_members: usize) -> Result<Vec<f64>> {
    if n_members == 0 {
        return Err(Error::Config("n_members must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if n_members == 1 {
        return Ok(Vec::new());
    }
    let step = (1.0 - alpha) / (n_members - 1) as f64;
    Ok((0..n_members - 1).map(|i| alpha + i as f64 * step).collect())
}

const MEMBER_STREAM: u64 = 0x4D45_4D42;

fn member_seed(master: u64, slot: usize) -> u64 {
    split_seed(master, MEMBER_STREAM.wrapping_add(slot as u64))
}

/// Trains a model to `max_epochs` and returns the parameters with the best
/// training log-likelihood seen across epochs.
fn train_full_model(config: &CrlConfig, data: &Dataset, seed: u64) -> Result<Mlp> {
    let sizes = config.layer_sizes_for(data);
    let model = Mlp::new(&sizes, seed)?;
    let opt = OptimizerConfig { seed, ..config.optimizer.clone() };
    let mut trainer = Trainer::new(model, opt)?;
    let mut best = trainer.model().clone();
    let mut best_ll = log_likelihood(&best, data)?;
    for epoch in 0..config.optimizer.max_epochs {
        trainer.run_epoch(data, epoch)?;
        let ll = log_likelihood(trainer.model(), data)?;
        if ll > best_ll {
            best_ll = ll;
            best = trainer.model().clone();
        }
    }
    Ok(best)
}

/// Trains the maximum-likelihood reference model.
pub fn train_mle(config: &CrlConfig, data: &Dataset) -> Result<Mlp> {
    config.validate()?;
    train_full_model(config, data, member_seed(config.optimizer.seed, 0))
}

/// Trains one ToBias member until its relative likelihood reaches `tau`.
///
/// The member is returned unconverged (but intact) when `max_epochs` pass
/// without reaching the threshold.
pub fn train_member(
    config: &CrlConfig,
    data: &Dataset,
    mle: &Mlp,
    tau: f64,
    member_index: usize,
) -> Result<TrainedMember> {
    config.validate()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    let mle_ll = log_likelihood(mle, data)?;
    train_member_inner(
        config,
        data,
        mle_ll,
        tau,
        member_index,
        member_seed(config.optimizer.seed, member_index + 1),
    )
}

fn train_member_inner(
    config: &CrlConfig,
    data: &Dataset,
    mle_ll: f64,
    tau: f64,
    member_index: usize,
    seed: u64,
) -> Result<TrainedMember> {
    let sizes = config.layer_sizes_for(data);
    let model = Mlp::new(&sizes, seed)?.with_tobias(member_index, config.beta);
    let n = data.len();
    let gamma_of = |m: &Mlp| -> Result<f64> {
        let ll = log_likelihood(m, data)?;
        Ok(relative_likelihood_from_lls(ll, mle_ll, n, config.normalization).gamma)
    };
    let stop_level = tau - config.gamma_tolerance;

    let mut gamma = gamma_of(&model)?;
    if gamma >= stop_level {
        return Ok(TrainedMember {
            model,
            target_tau: tau,
            achieved_gamma: gamma,
            epochs_run: 0,
            converged: true,
            seed,
        });
    }

    let opt = OptimizerConfig { seed, ..config.optimizer.clone() };
    let mut trainer = Trainer::new(model, opt)?;
    let mut converged = false;
    let mut epochs_run = 0;
    for epoch in 0..config.optimizer.max_epochs {
        epochs_run = epoch + 1;
        match config.check_every {
            CheckEvery::Epoch => {
                trainer.run_epoch(data, epoch)?;
                gamma = gamma_of(trainer.model())?;
            }
            CheckEvery::Batch => {
                let report = trainer.run_epoch_with(data, epoch, |m| {
                    Ok(gamma_of(m)? >= stop_level)
                })?;
                gamma = gamma_of(trainer.model())?;
                if report.stopped_early {
                    converged = true;
                    break;
                }
            }
        }
        if gamma >= stop_level {
            converged = true;
            break;
        }
    }
    Ok(TrainedMember {
        model: trainer.into_model(),
        target_tau: tau,
        achieved_gamma: gamma,
        epochs_run,
        converged,
    seed,
    })
}

/// Trains the full ensemble: the reference model in slot 0 followed by one
/// early-stopped member per scheduled threshold. Member seeds derive from
/// the master seed, and members train independently (in parallel with the
/// `parallel` feature), so the result does not depend on scheduling.
pub fn train_crl_ensemble(config: &CrlConfig, data: &Dataset) -> Result<CrlEnsemble> {
    config.validate()?;
    let thresholds = compute_thresholds(config.alpha, config.n_members)?;
    let master = config.optimizer.seed;

    let mle = train_mle(config, data)?;
    let mle_ll = log_likelihood(&mle, data)?;

    let train_one = |(i, &tau): (usize, &f64)| -> Result<TrainedMember> {
        train_member_inner(config, data, mle_ll, tau, i, member_seed(master, i + 1))
            .map_err(Error::for_member(i + 1))
    };
    #[cfg(feature = "parallel")]
    let scheduled: Result<Vec<TrainedMember>> =
        thresholds.par_iter().enumerate().map(train_one).collect();
    #[cfg(not(feature = "parallel"))]
    let scheduled: Result<Vec<TrainedMember>> =
        thresholds.iter().enumerate().map(train_one).collect();

    let mut members = Vec::with_capacity(config.n_members);
    members.push(TrainedMember {
        model: mle.clone(),
        target_tau: 1.0,
        achieved_gamma: 1.0,
        epochs_run: config.optimizer.max_epochs,
        converged: true,
        seed: member_seed(master, 0),
    });
    members.extend(scheduled?);

    let member_seeds = (0..config.n_members).map(|s| member_seed(master, s)).collect();
    Ok(CrlEnsemble {
        mle,
        members,
        alpha: Some(config.alpha),
        provenance: Provenance {
            method: "crerl".into(),
            config: config.clone(),
            member_seeds,
        },
    })
}

/// Standard deep ensemble: `n_members` fully trained models with distinct
/// seeds and no ToBias. The container records each member's relative
/// likelihood against slot 0 and marks the cut level as not applicable.
pub fn train_deep_ensemble(config: &CrlConfig, data: &Dataset) -> Result<CrlEnsemble> {
    config.validate()?;
    let master = config.optimizer.seed;
    let train_one = |slot: usize| -> Result<Mlp> {
        train_full_model(config, data, member_seed(master, slot)).map_err(Error::for_member(slot))
    };
    #[cfg(feature = "parallel")]
    let models: Result<Vec<Mlp>> = (0..config.n_members).into_par_iter().map(train_one).collect();
    #[cfg(not(feature = "parallel"))]
    let models: Result<Vec<Mlp>> = (0..config.n_members).map(train_one).collect();
    let models = models?;

    let reference_ll = log_likelihood(&models[0], data)?;
    let mut members = Vec::with_capacity(models.len());
    for (slot, model) in models.into_iter().enumerate() {
        let ll = log_likelihood(&model, data)?;
        let gamma = relative_likelihood_from_lls(ll, reference_ll, data.len(), config.normalization).gamma;
        members.push(TrainedMember {
            model,
            target_tau: 1.0,
            achieved_gamma: gamma,
            epochs_run: config.optimizer.max_epochs,
            converged: true,
            seed: member_seed(master, slot),
        });
    }
    let member_seeds = (0..config.n_members).map(|s| member_seed(master, s)).collect();
    Ok(CrlEnsemble {
        mle: members[0].model.clone(),
        members,
        alpha: None,
        provenance: Provenance {
            method: "crewra".into(),
            config: config.clone(),
            member_seeds,
        },
    })
}

/// Keeps the `ceil((1 - alpha) * n)` predictions closest (Euclidean) to the
/// mean prediction, preserving input order among the survivors.
pub fn creens_prune(
    preds: &[ProbabilityDistribution],
    alpha: f64,
) -> Result<Vec<ProbabilityDistribution>> {
    if preds.is_empty() {
        return Err(Error::Input("cannot prune an empty prediction list".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Input(format!("prune level must lie in [0, 1), got {alpha}")));
    }
    let k = preds[0].n_classes();
    if preds.iter().any(|p| p.n_classes() != k) {
        return Err(Error::Input("predictions must share the class count".into()));
    }
    let n = preds.len();
    let mut mean = vec![0.0; k];
    for p in preds {
        for (m, &v) in mean.iter_mut().zip(p.probs()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut by_distance: Vec<(f64, usize)> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p
                .probs()
                .iter()
                .zip(&mean)
                .map(|(&v, &m)| (v - m) * (v - m))
                .sum();
            (d2, i)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let keep = ((1.0 - alpha) * n as f64).ceil() as usize;
    let keep = keep.clamp(1, n);
    let mut survivors: Vec<usize> = by_distance[..keep].iter().map(|&(_, i)| i).collect();
    survivors.sort_unstable();
    Ok(survivors.into_iter().map(|i| preds[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credal_sets::IntervalCredalSet;
    use crate::nn::OptimizerKind;
    use approx::assert_relative_eq;

    fn bernoulli_style_data() -> Dataset {
        // Six heads, four tails over a constant feature.
        let labels = vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        Dataset::from_parts("coin", 0, vec![vec![1.0]; 10], labels, None, 2).unwrap()
    }

    fn separable_data() -> Dataset {
        let features = vec![
            vec![2.0, 0.0],
            vec![2.5, 0.5],
            vec![-2.0, 0.0],
            vec![-2.5, -0.5],
        ];
        Dataset::from_parts("separable", 0, features, vec![0, 0, 1, 1], None, 2).unwrap()
    }

    fn quick_config() -> CrlConfig {
        CrlConfig {
            optimizer: OptimizerConfig {
                learning_rate: 0.05,
                batch_size: 4,
                max_epochs: 300,
                seed: 11,
                kind: OptimizerKind::AdaptiveMoment,
                ..Default::default()
            },
            hidden_layers: vec![8],
            normalization: Normalization::PerSample,
            ..Default::default()
        }
    }

    #[test]
    fn threshold_schedule_examples() {
        let t = compute_thresholds(0.8, 5).unwrap();
        assert_eq!(t.len(), 4);
        for (got, want) in t.iter().zip([0.8, 0.85, 0.9, 0.95]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(compute_thresholds(1.0, 7).unwrap().iter().all(|&t| t == 1.0));
        assert_eq!(compute_thresholds(0.0, 2).unwrap(), vec![0.0]);
        assert!(compute_thresholds(0.5, 0).is_err());
        assert!(compute_thresholds(0.5, 1).unwrap().is_empty());
    }

    #[test]
    fn thresholds_are_strictly_increasing_below_one() {
        let t = compute_thresholds(0.3, 8).unwrap();
        assert_relative_eq!(t[0], 0.3, epsilon = 1e-12);
        for w in t.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn mle_reaches_full_accuracy_on_separable_data() {
        let data = separable_data();
        let mle = train_mle(&quick_config(), &data).unwrap();
        let correct = (0..data.len())
            .filter(|&i| mle.forward(data.feature_row(i)).unwrap().argmax() == data.label(i))
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn mle_recovers_empirical_rate() {
        let data = bernoulli_style_data();
        let mle = train_mle(&quick_config(), &data).unwrap();
        let p_head = mle.forward(&[1.0]).unwrap().probs()[1];
        assert!((p_head - 0.6).abs() <= 0.02, "got {p_head}");
    }

    #[test]
    fn mle_is_rerun_deterministic() {
        let data = separable_data();
        let a = train_mle(&quick_config(), &data).unwrap();
        let b = train_mle(&quick_config(), &data).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn member_with_zero_threshold_stays_untrained() {
        let data = bernoulli_style_data();
        let config = quick_config();
        let mle = train_mle(&config, &data).unwrap();
        let m = train_member(&config, &data, &mle, 0.0, 0).unwrap();
        assert_eq!(m.epochs_run, 0);
        assert!(m.converged);
        let fresh = Mlp::new(&[1, 8, 2], m.seed).unwrap().with_tobias(0, config.beta);
        assert_eq!(m.model.params_flat(), fresh.params_flat());
    }

    #[test]
    fn member_stops_just_past_its_threshold() {
        let data = bernoulli_style_data();
        let mut config = quick_config();
        config.optimizer.learning_rate = 0.01;
        let mle = train_mle(&config, &data).unwrap();
        let m = train_member(&config, &data, &mle, 0.5, 1).unwrap();
        assert!(m.converged, "never reached 0.5: gamma {}", m.achieved_gamma);
        assert!(m.achieved_gamma >= 0.5);
        assert!(m.achieved_gamma <= 0.9, "overshoot too large: {}", m.achieved_gamma);
    }

    #[test]
    fn ensemble_slot_zero_is_the_reference() {
        let data = separable_data();
        let mut config = quick_config();
        config.alpha = 0.5;
        config.n_members = 4;
        config.optimizer.max_epochs = 50;
        let ens = train_crl_ensemble(&config, &data).unwrap();
        assert_eq!(ens.n_members(), 4);
        assert_eq!(ens.members[0].achieved_gamma, 1.0);
        assert_eq!(ens.members[0].target_tau, 1.0);
        assert_eq!(ens.members[0].model.params_flat(), ens.mle.params_flat());
        // Scheduled targets ascend from alpha.
        let taus: Vec<f64> = ens.members[1..].iter().map(|m| m.target_tau).collect();
        assert_relative_eq!(taus[0], 0.5, epsilon = 1e-12);
        assert!(taus.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_member_ensemble_is_just_the_reference() {
        let data = separable_data();
        let mut config = quick_config();
        config.n_members = 1;
        config.optimizer.max_epochs = 20;
        let ens = train_crl_ensemble(&config, &data).unwrap();
        assert_eq!(ens.n_members(), 1);
        assert_eq!(ens.members[0].model.params_flat(), ens.mle.params_flat());
    }

    #[test]
    fn ensemble_training_is_deterministic() {
        let data = separable_data();
        let mut config = quick_config();
        config.alpha = 0.6;
        config.n_members = 3;
        config.optimizer.max_epochs = 30;
        let a = train_crl_ensemble(&config, &data).unwrap();
        let b = train_crl_ensemble(&config, &data).unwrap();
        for (ma, mb) in a.members.iter().zip(&b.members) {
            assert_eq!(ma.model.params_flat(), mb.model.params_flat());
            assert_eq!(ma.achieved_gamma, mb.achieved_gamma);
        }
    }

    #[test]
    fn untrained_tobias_ensemble_spans_the_simplex() {
        let means = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]];
        let data = crate::datasets::gen_gaussian_mixture(
            40,
            &means,
            1.0,
            &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            5,
        )
        .unwrap();
        let mut config = quick_config();
        config.alpha = 0.0;
        // Slot 0 is the (untrained) reference; vertex coverage needs at
        // least K scheduled ToBias members.
        config.n_members = 5;
        config.optimizer.max_epochs = 0;
        let ens = train_crl_ensemble(&config, &data).unwrap();
        for i in 0..data.len() {
            let sample = ens.member_predictions(data.feature_row(i), true).unwrap();
            let c = IntervalCredalSet::from_sample(&sample);
            for k in 0..3 {
                assert!(c.lower()[k] <= 1e-6, "lower {k} = {}", c.lower()[k]);
                assert!(c.upper()[k] >= 1.0 - 1e-6, "upper {k} = {}", c.upper()[k]);
            }
        }
    }

    #[test]
    fn deep_ensemble_members_are_distinct_and_accurate() {
        let data = separable_data();
        let mut config = quick_config();
        config.n_members = 3;
        config.optimizer.max_epochs = 60;
        let ens = train_deep_ensemble(&config, &data).unwrap();
        assert_eq!(ens.alpha, None);
        assert_ne!(
            ens.members[0].model.params_flat(),
            ens.members[1].model.params_flat()
        );
        for m in &ens.members {
            let correct = (0..data.len())
                .filter(|&i| m.model.forward(data.feature_row(i)).unwrap().argmax() == data.label(i))
                .count();
            assert_eq!(correct, data.len());
        }
    }

    #[test]
    fn prune_keeps_everything_at_level_zero() {
        let preds: Vec<ProbabilityDistribution> = [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]]
            .iter()
            .map(|p| ProbabilityDistribution::new(p.to_vec()).unwrap())
            .collect();
        let kept = creens_prune(&preds, 0.0).unwrap();
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn prune_keeps_the_closest_half() {
        let preds: Vec<ProbabilityDistribution> =
            [[0.5, 0.5], [0.52, 0.48], [0.56, 0.44], [0.62, 0.38]]
                .iter()
                .map(|p| ProbabilityDistribution::new(p.to_vec()).unwrap())
                .collect();
        let kept = creens_prune(&preds, 0.5).unwrap();
        // Mean is (0.55, 0.45); indices 1 and 2 sit closest, input order kept.
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].probs(), &[0.52, 0.48]);
        assert_eq!(kept[1].probs(), &[0.56, 0.44]);
    }

    #[test]
    fn prune_handles_ties_and_empty_input() {
        let preds = vec![ProbabilityDistribution::new(vec![0.5, 0.5]).unwrap(); 4];
        let kept = creens_prune(&preds, 0.6).unwrap();
        assert!(!kept.is_empty());
        assert!(kept.iter().all(|p| p.probs() == [0.5, 0.5]));
        assert!(creens_prune(&[], 0.0).is_err());
    }
}
