//! Mini-batch gradient descent with momentum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rerank::model::{ScorerModel, DEFAULT_HIDDEN};
use crate::rerank::samples::{FeatureVector, RerankSample};

/// Restarts at half the learning rate allowed after a divergence.
pub const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Negatives sampled per positive.
    pub negatives: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of samples held out to track generalization loss.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            negatives: 20,
            hidden: DEFAULT_HIDDEN,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 64,
            holdout_fraction: 0.1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::input("negatives must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::input("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::input("momentum must be in [0, 1)"));
        }
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::input("hidden width, epochs and batch size must be positive"));
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return Err(Error::input("holdout fraction must be in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub holdout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ScorerModel,
    pub history: Vec<EpochLoss>,
    pub learning_rate: f64,
    pub restarts: usize,
}

struct Diverged;

fn run(
    xs: &[FeatureVector],
    ys: &[f64],
    holdout: (&[FeatureVector], &[f64]),
    config: &TrainConfig,
    lr: f64,
    attempt: u64,
    init: &ScorerModel,
) -> std::result::Result<(ScorerModel, Vec<EpochLoss>), Diverged> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(attempt + 1);
    let mut model = ScorerModel::random(config.hidden, &mut rng);
    model.mean.clone_from(&init.mean);
    model.std.clone_from(&init.std);

    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            by.extend(chunk.iter().map(|&i| ys[i]));
            let (loss, g) = model.loss_and_gradient(&bx, &by);
            if !loss.is_finite() {
                return Err(Diverged);
            }
            for ((p, v), gk) in params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = config.momentum * *v - lr * gk;
                *p += *v;
            }
            model.set_params(&params);
        }
        let train = model.loss(xs, ys);
        let held = (!holdout.0.is_empty()).then(|| model.loss(holdout.0, holdout.1));
        if !train.is_finite() || held.is_some_and(|h| !h.is_finite()) || !model.is_finite() {
            return Err(Diverged);
        }
        log::debug!("epoch {epoch}: train {train:.5} holdout {held:?}");
        history.push(EpochLoss { epoch, train, holdout: held });
    }
    Ok((model, history))
}

/// Trains a scorer on `samples`. Deterministic for a fixed seed, config
/// and sample order.
pub fn train(samples: &[RerankSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let positives = samples.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::input("training samples must contain both labels"));
    }

    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_hold = (samples.len() as f64 * config.holdout_fraction).floor() as usize;
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let pick = |ids: &[usize]| -> (Vec<FeatureVector>, Vec<f64>) {
        ids.iter()
            .map(|&i| (samples[i].features, samples[i].label as f64))
            .unzip()
    };
    let (xs, ys) = pick(train_idx);
    let (hx, hy) = pick(hold_idx);

    let mut init = ScorerModel::zeros(config.hidden);
    init.fit_standardization(&xs);

    let mut lr = config.learning_rate;
    for restart in 0..=MAX_RESTARTS {
        match run(&xs, &ys, (&hx, &hy), config, lr, restart as u64, &init) {
            Ok((model, history)) => {
                return Ok(TrainOutcome {
                    model,
                    history,
                    learning_rate: lr,
                    restarts: restart,
                })
            }
            Err(Diverged) => {
                log::warn!("training diverged at learning rate {lr}; halving");
                lr /= 2.0;
            }
        }
    }
    Err(Error::pipeline(format!(
        "training diverged after {MAX_RESTARTS} restarts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::samples::FEATURES;
    use crate::traj::{LocationId, TrajectoryId};
    use rand::Rng;

    fn sample(t: u64, features: FeatureVector, label: u8) -> RerankSample {
        RerankSample {
            trajectory: TrajectoryId(t),
            candidate: LocationId(0),
            features,
            label,
        }
    }

    /// Positives have the first law indicator set and a high score.
    fn separable(n: usize, seed: u64) -> Vec<RerankSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for t in 0..n as u64 {
            for k in 0..21 {
                let label = (k == 0) as u8;
                let mut f = [0.0; FEATURES];
                f[0] = if label == 1 { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.4) };
                f[1] = rng.gen_range(0.0..10.0);
                f[2] = label as f64;
                f[7] = rng.gen_range(0..2) as f64;
                out.push(sample(t, f, label));
            }
        }
        out
    }

    #[test]
    fn separable_data_is_learned() {
        let samples = separable(200, 1);
        let out = train(&samples, &TrainConfig::default()).unwrap();
        let xs: Vec<_> = samples.iter().map(|s| s.features).collect();
        let ys: Vec<_> = samples.iter().map(|s| s.label as f64).collect();
        let bce = out.model.loss(&xs, &ys);
        let correct = samples
            .iter()
            .filter(|s| (out.model.predict(&s.features) > 0.5) == (s.label == 1))
            .count();
        assert!(bce < 0.05, "bce {bce}");
        assert!(correct as f64 / samples.len() as f64 > 0.99);
    }

    #[test]
    fn uninformative_features_learn_base_rate() {
        let samples: Vec<_> = (0..300u64)
            .flat_map(|t| (0..21).map(move |k| sample(t, [1.0; FEATURES], (k == 0) as u8)))
            .collect();
        let out = train(&samples, &TrainConfig::default()).unwrap();
        let p = out.model.predict(&[1.0; FEATURES]);
        assert!((p - 1.0 / 21.0).abs() < 0.005, "p = {p}");
    }

    #[test]
    fn holdout_loss_decreases() {
        let out = train(&separable(100, 2), &TrainConfig::default()).unwrap();
        let first = out.history.first().unwrap().holdout.unwrap();
        let last = out.history.last().unwrap().holdout.unwrap();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn same_seed_same_weights() {
        let s = separable(50, 3);
        let c = TrainConfig { epochs: 5, ..Default::default() };
        assert_eq!(train(&s, &c).unwrap().model, train(&s, &c).unwrap().model);
        let d = TrainConfig { seed: 7, ..c.clone() };
        assert_ne!(train(&s, &c).unwrap().model, train(&s, &d).unwrap().model);
    }

    #[test]
    fn huge_learning_rate_restarts_or_fails_cleanly() {
        let mut s = separable(30, 4);
        for x in &mut s {
            x.features[1] *= 1e150;
        }
        let c = TrainConfig { learning_rate: 1e300, epochs: 2, ..Default::default() };
        match train(&s, &c) {
            Ok(o) => assert!(o.restarts > 0 && o.model.is_finite()),
            Err(e) => assert_eq!(e.exit_code(), 2),
        }
    }

    #[test]
    fn single_label_is_rejected() {
        let s = vec![sample(0, [0.0; FEATURES], 0); 10];
        assert!(train(&s, &TrainConfig::default()).is_err());
    }
}
