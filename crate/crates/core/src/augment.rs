//! Unsupervised in-place augmentation of option triplets.
//!
//! During training, each instance's k triplets are re-sampled every epoch:
//! the correct option's triplet fires with probability `p_correct` (its
//! label flips to negative and exactly one of three rewrites applies), each
//! incorrect option's triplet fires with probability `p_incorrect` (one of
//! two rewrites, label stays negative). The number of triplets never
//! changes.
//!
//! Draw order is part of the reproducibility contract and is fixed per
//! option: fire?, branch, sub-choice, replacement index. The per-instance
//! stream for epoch `e` and instance `i` is
//! `SplitMix64::derive(seed, &[e, i])`, so parallel and sequential epoch
//! processing agree byte for byte.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, McqaInstance, EMPTY_SENTINEL};
use crate::rng::SplitMix64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Firing probabilities and stream seed for the sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_correct: f64,
    pub p_incorrect: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_correct: 0.2,
            p_incorrect: 0.8,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        for (name, p) in [("p_correct", self.p_correct), ("p_incorrect", self.p_incorrect)] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(crate::error::Error::Config(format!(
                    "{name} must be a probability in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Binary training target of one triplet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletLabel {
    Positive,
    Negative,
}

/// One training triplet with its label and provenance. Field order matches
/// the materialized JSONL format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTriplet {
    pub origin_id: String,
    pub origin_index: usize,
    pub question: String,
    #[serde(rename = "option")]
    pub option_text: String,
    pub context: String,
    pub label: TripletLabel,
}

/// Replacement sources for one instance: texts and contexts of its
/// incorrect options, aligned, excluding the gold index.
#[derive(Clone, Debug)]
pub struct IncorrectPool<'a> {
    pub texts: Vec<&'a str>,
    pub contexts: Vec<&'a str>,
}

impl<'a> IncorrectPool<'a> {
    pub fn of(inst: &'a McqaInstance) -> Self {
        let mut texts = Vec::with_capacity(inst.option_count() - 1);
        let mut contexts = Vec::with_capacity(inst.option_count() - 1);
        for (i, opt) in inst.options.iter().enumerate() {
            if i != inst.gold {
                texts.push(opt.text.as_str());
                contexts.push(opt.context.as_str());
            }
        }
        IncorrectPool { texts, contexts }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

/// Which field a firing rewrote.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentBranch {
    Context,
    Option,
    Question,
}

/// Record of the sampler's decisions for one option, for audit and for
/// verifying the sampler's statistical contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentTrace {
    pub option_index: usize,
    pub fired: bool,
    pub branch: Option<AugmentBranch>,
    /// True when the sub-choice picked the empty sentinel over a replacement.
    pub chose_sentinel: Option<bool>,
    /// Index into the incorrect pool, when a replacement was drawn.
    pub replacement_index: Option<usize>,
}

fn rewrite(
    triplet: &mut LabeledTriplet,
    branch: AugmentBranch,
    chose_sentinel: bool,
    pool: &IncorrectPool<'_>,
    prev_question: Option<&str>,
    rng: &mut SplitMix64,
) -> Option<usize> {
    match branch {
        AugmentBranch::Context => {
            if chose_sentinel {
                triplet.context = EMPTY_SENTINEL.to_string();
                None
            } else {
                let r = rng.next_below(pool.len() as u64) as usize;
                triplet.context = pool.contexts[r].to_string();
                Some(r)
            }
        }
        AugmentBranch::Option => {
            if chose_sentinel {
                triplet.option_text = EMPTY_SENTINEL.to_string();
                None
            } else {
                let r = rng.next_below(pool.len() as u64) as usize;
                triplet.option_text = pool.texts[r].to_string();
                Some(r)
            }
        }
        AugmentBranch::Question => {
            // No replacement-index draw: the previous question is
            // deterministic. When it is absent the replacement falls back
            // to the sentinel; the sub-choice draw was consumed either way
            // so streams stay aligned.
            triplet.question = match (chose_sentinel, prev_question) {
                (true, _) | (false, None) => EMPTY_SENTINEL.to_string(),
                (false, Some(prev)) => prev.to_string(),
            };
            None
        }
    }
}

/// Emits exactly k labeled triplets for one instance, rewriting each with
/// the configured probabilities, and returns the per-option decision trace.
pub fn augment_instance_traced(
    inst: &McqaInstance,
    prev_question: Option<&str>,
    cfg: &AugmentConfig,
    rng: &mut SplitMix64,
) -> (Vec<LabeledTriplet>, Vec<AugmentTrace>) {
    let pool = IncorrectPool::of(inst);
    let mut triplets = Vec::with_capacity(inst.option_count());
    let mut traces = Vec::with_capacity(inst.option_count());

    for (i, opt) in inst.options.iter().enumerate() {
        let is_correct = i == inst.gold;
        let mut triplet = LabeledTriplet {
            origin_id: inst.id.clone(),
            origin_index: i,
            question: inst.question.clone(),
            option_text: opt.text.clone(),
            context: opt.context.clone(),
            label: if is_correct {
                TripletLabel::Positive
            } else {
                TripletLabel::Negative
            },
        };
        let mut trace = AugmentTrace {
            option_index: i,
            fired: false,
            branch: None,
            chose_sentinel: None,
            replacement_index: None,
        };

        let p_fire = if is_correct {
            cfg.p_correct
        } else {
            cfg.p_incorrect
        };
        if rng.bernoulli(p_fire) {
            trace.fired = true;
            let branch = if is_correct {
                triplet.label = TripletLabel::Negative;
                match rng.next_below(3) {
                    0 => AugmentBranch::Context,
                    1 => AugmentBranch::Option,
                    _ => AugmentBranch::Question,
                }
            } else {
                match rng.next_below(2) {
                    0 => AugmentBranch::Context,
                    _ => AugmentBranch::Option,
                }
            };
            let chose_sentinel = rng.next_below(2) == 0;
            trace.branch = Some(branch);
            trace.chose_sentinel = Some(chose_sentinel);
            trace.replacement_index =
                rewrite(&mut triplet, branch, chose_sentinel, &pool, prev_question, rng);
        }

        triplets.push(triplet);
        traces.push(trace);
    }

    (triplets, traces)
}

/// As [`augment_instance_traced`], without the trace.
pub fn augment_instance(
    inst: &McqaInstance,
    prev_question: Option<&str>,
    cfg: &AugmentConfig,
    rng: &mut SplitMix64,
) -> Vec<LabeledTriplet> {
    augment_instance_traced(inst, prev_question, cfg, rng).0
}

fn epoch_instance(
    d: &Dataset,
    cfg: &AugmentConfig,
    epoch: u64,
    index: usize,
) -> Vec<LabeledTriplet> {
    let inst = &d.instances[index];
    // previous question in dataset order, wrapping at the first instance
    let prev = if d.is_empty() {
        None
    } else {
        let p = (index + d.len() - 1) % d.len();
        Some(d.instances[p].question.as_str())
    };
    let mut rng = SplitMix64::derive(cfg.seed, &[epoch, index as u64]);
    augment_instance(inst, prev, cfg, &mut rng)
}

/// Sequential epoch sampler; see [`augment_epoch`].
pub fn augment_epoch_seq(d: &Dataset, cfg: &AugmentConfig, epoch: u64) -> Vec<LabeledTriplet> {
    (0..d.len())
        .flat_map(|i| epoch_instance(d, cfg, epoch, i))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn augment_epoch_par(d: &Dataset, cfg: &AugmentConfig, epoch: u64) -> Vec<LabeledTriplet> {
    (0..d.len())
        .into_par_iter()
        .map(|i| epoch_instance(d, cfg, epoch, i))
        .flatten()
        .collect()
}

/// Re-samples every instance's triplets for one epoch, in dataset order.
/// The previous question of instance `i` is instance `i-1`'s question (the
/// last instance's for `i = 0`). Each epoch draws an independent but
/// reproducible stream.
pub fn augment_epoch(d: &Dataset, cfg: &AugmentConfig, epoch: u64) -> Vec<LabeledTriplet> {
    #[cfg(feature = "parallel")]
    {
        augment_epoch_par(d, cfg, epoch)
    }
    #[cfg(not(feature = "parallel"))]
    {
        augment_epoch_seq(d, cfg, epoch)
    }
}

/// The unaugmented triplets of a dataset: gold positive, the rest negative.
pub fn raw_triplets(d: &Dataset) -> Vec<LabeledTriplet> {
    d.instances
        .iter()
        .flat_map(|inst| {
            inst.options.iter().enumerate().map(|(i, opt)| LabeledTriplet {
                origin_id: inst.id.clone(),
                origin_index: i,
                question: inst.question.clone(),
                option_text: opt.text.clone(),
                context: opt.context.clone(),
                label: if i == inst.gold {
                    TripletLabel::Positive
                } else {
                    TripletLabel::Negative
                },
            })
        })
        .collect()
}
