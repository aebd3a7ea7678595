//! SGD training of the linear scorer under the multiclass softmax objective
//! or the per-triplet binary objective, with optional per-epoch
//! augmentation.
//!
//! Training is deliberately sequential and zero-initialized: given the same
//! dataset bytes and config it produces the same weights to the last bit.

use crate::augment::{augment_epoch, raw_triplets, AugmentConfig, LabeledTriplet, TripletLabel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scorer::{featurize, FeatureVector, LinearScorer, FEATURE_LEN};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross entropy over each instance's k options.
    Multiclass,
    /// Independent logistic regression per triplet.
    Binary,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "multiclass" => Ok(LossKind::Multiclass),
            "binary" => Ok(LossKind::Binary),
            other => Err(format!(
                "unknown loss {other:?}; expected multiclass or binary"
            )),
        }
    }
}

/// Full training configuration.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
    /// First epoch (0-based) in which augmentation applies. Set to 1 to
    /// train the first epoch on raw triplets.
    pub augment_start_epoch: usize,
}

/// Default epoch counts: 4 without augmentation, 5 with one extra epoch for
/// the augmented schedule.
pub fn default_epochs(augmented: bool) -> usize {
    if augmented {
        5
    } else {
        4
    }
}

impl TrainConfig {
    pub fn new(loss: LossKind) -> Self {
        TrainConfig {
            loss,
            epochs: default_epochs(false),
            learning_rate: 0.1,
            seed: 0,
            augment: None,
            augment_start_epoch: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
            if self.loss == LossKind::Multiclass {
                return Err(Error::Config(
                    "augmentation flips labels per triplet and cannot be combined with the \
                     multiclass objective; use --loss binary"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-epoch mean losses and the final weights.
#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub epoch_losses: Vec<f64>,
    pub scorer: LinearScorer,
}

/// Numerically stable softmax: shifts by the max before exponentiating.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy loss and gradient for one instance under the current
/// weights: `loss = -ln p_gold`, `grad = sum_i (p_i - [i == gold]) f_i`.
pub fn multiclass_loss_grad(
    weights: &[f64; FEATURE_LEN],
    features: &[FeatureVector],
    gold: usize,
) -> (f64, [f64; FEATURE_LEN]) {
    let scores: Vec<f64> = features.iter().map(|f| f.dot(weights)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
    let loss = -(scores[gold] - max - log_sum);
    let probs = softmax(&scores);
    let mut grad = [0.0; FEATURE_LEN];
    for (i, f) in features.iter().enumerate() {
        let residual = probs[i] - if i == gold { 1.0 } else { 0.0 };
        for (g, x) in grad.iter_mut().zip(f.0.iter()) {
            *g += residual * x;
        }
    }
    (loss, grad)
}

/// Stable logistic sigmoid.
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss and gradient for one triplet, in the overflow-free form
/// `loss = max(s, 0) - s*y + ln(1 + exp(-|s|))`, `grad = (sigma(s) - y) f`.
pub fn binary_loss_grad(
    weights: &[f64; FEATURE_LEN],
    features: &FeatureVector,
    label: TripletLabel,
) -> (f64, [f64; FEATURE_LEN]) {
    let s = features.dot(weights);
    let y = match label {
        TripletLabel::Positive => 1.0,
        TripletLabel::Negative => 0.0,
    };
    let loss = s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
    let residual = sigmoid(s) - y;
    let mut grad = [0.0; FEATURE_LEN];
    for (g, x) in grad.iter_mut().zip(features.0.iter()) {
        *g = residual * x;
    }
    (loss, grad)
}

fn featurize_triplet(t: &LabeledTriplet) -> FeatureVector {
    featurize(&t.question, &t.option_text, &t.context)
}

/// Feature extraction for a flat triplet list; parallel when available.
/// Pure per-triplet work, so both paths agree exactly.
pub fn featurize_triplets(triplets: &[LabeledTriplet]) -> Vec<FeatureVector> {
    #[cfg(feature = "parallel")]
    {
        triplets.par_iter().map(featurize_triplet).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        triplets.iter().map(featurize_triplet).collect()
    }
}

/// Trains a linear scorer from zero weights with plain SGD.
///
/// Each epoch visits instances in a seeded shuffled order (stream
/// `derive(seed, &[epoch])`). Under the multiclass objective one update
/// consumes a whole instance; under the binary objective each of the
/// instance's triplets is one update, in option order. When augmentation is
/// configured (binary only) and `epoch >= augment_start_epoch`, the epoch's
/// triplets come from the augmentation sampler instead of the raw dataset.
pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }

    let k_profile = d.k_profile();
    let raw = raw_triplets(d);
    let raw_features = featurize_triplets(&raw);
    // offset of each instance's triplet block in the flat lists
    let mut offsets = Vec::with_capacity(d.len());
    let mut acc = 0usize;
    for &k in &k_profile {
        offsets.push(acc);
        acc += k;
    }

    let mut weights = [0.0f64; FEATURE_LEN];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let augmented: Option<(Vec<LabeledTriplet>, Vec<FeatureVector>)> = match &cfg.augment {
            Some(acfg) if epoch >= cfg.augment_start_epoch => {
                let triplets = augment_epoch(d, acfg, epoch as u64);
                let features = featurize_triplets(&triplets);
                Some((triplets, features))
            }
            _ => None,
        };
        let (triplets, features): (&[LabeledTriplet], &[FeatureVector]) = match &augmented {
            Some((t, f)) => (t, f),
            None => (&raw, &raw_features),
        };

        let mut order: Vec<usize> = (0..d.len()).collect();
        SplitMix64::derive(cfg.seed, &[epoch as u64]).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for &i in &order {
            let start = offsets[i];
            let k = k_profile[i];
            match cfg.loss {
                LossKind::Multiclass => {
                    let (loss, grad) = multiclass_loss_grad(
                        &weights,
                        &features[start..start + k],
                        d.instances[i].gold,
                    );
                    for (w, g) in weights.iter_mut().zip(grad.iter()) {
                        *w -= cfg.learning_rate * g;
                    }
                    loss_sum += loss;
                    loss_count += 1;
                }
                LossKind::Binary => {
                    for j in start..start + k {
                        let (loss, grad) =
                            binary_loss_grad(&weights, &features[j], triplets[j].label);
                        for (w, g) in weights.iter_mut().zip(grad.iter()) {
                            *w -= cfg.learning_rate * g;
                        }
                        loss_sum += loss;
                        loss_count += 1;
                    }
                }
            }
        }
        epoch_losses.push(loss_sum / loss_count as f64);
    }

    Ok(TrainRecord {
        epoch_losses,
        scorer: LinearScorer::new(weights),
    })
}
