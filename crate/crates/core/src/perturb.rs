//! The four evaluation-setting perturbations, as pure dataset transformations.
//!
//! All four preserve instance count, order, ids, option count, and gold
//! index. PIO is the only randomized one; its per-instance PRNG stream is
//! `SplitMix64::derive(seed, &[instance_index])`, which is why the parallel
//! and sequential paths produce identical bytes.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, McqaInstance, EMPTY_SENTINEL};
use crate::rng::SplitMix64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of question copies concatenated into the PIO context.
pub const PIO_CONTEXT_COPIES: usize = 10;

/// The five evaluation settings. `Original` is the identity transformation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationSetting {
    Original,
    /// Perturbed Incorrect Option: one incorrect option is rewritten to echo
    /// the question.
    Pio,
    /// No Option: every option description is emptied.
    No,
    /// No Question: the question is emptied.
    Nq,
    /// No Context: every context is emptied.
    Nc,
}

impl PerturbationSetting {
    pub const ALL: [PerturbationSetting; 5] = [
        PerturbationSetting::Original,
        PerturbationSetting::Pio,
        PerturbationSetting::No,
        PerturbationSetting::Nq,
        PerturbationSetting::Nc,
    ];

    /// Short column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PerturbationSetting::Original => "O",
            PerturbationSetting::Pio => "PIO",
            PerturbationSetting::No => "NO",
            PerturbationSetting::Nq => "NQ",
            PerturbationSetting::Nc => "NC",
        }
    }

    /// True when a higher accuracy is better under this setting.
    pub fn higher_is_better(self) -> bool {
        matches!(
            self,
            PerturbationSetting::Original | PerturbationSetting::Pio
        )
    }
}

impl std::str::FromStr for PerturbationSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "o" => Ok(PerturbationSetting::Original),
            "pio" => Ok(PerturbationSetting::Pio),
            "no" => Ok(PerturbationSetting::No),
            "nq" => Ok(PerturbationSetting::Nq),
            "nc" => Ok(PerturbationSetting::Nc),
            other => Err(format!(
                "unknown setting {other:?}; expected one of original, pio, no, nq, nc"
            )),
        }
    }
}

impl std::fmt::Display for PerturbationSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Audit record of which incorrect option PIO rewrote in one instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PioChoice {
    pub id: String,
    pub perturbed_option_index: usize,
}

fn pio_instance(inst: &McqaInstance, index: usize, seed: u64) -> (McqaInstance, PioChoice) {
    let mut rng = SplitMix64::derive(seed, &[index as u64]);
    let incorrect = inst.incorrect_indices();
    let j = incorrect[rng.next_below(incorrect.len() as u64) as usize];
    let mut out = inst.clone();
    out.options[j].text = inst.question.clone();
    out.options[j].context = [inst.question.as_str(); PIO_CONTEXT_COPIES].join(" ");
    let choice = PioChoice {
        id: inst.id.clone(),
        perturbed_option_index: j,
    };
    (out, choice)
}

/// Sequential PIO. Exposed alongside [`perturb_pio`] so the benchmark suite
/// can compare both execution paths.
pub fn perturb_pio_seq(d: &Dataset, seed: u64) -> (Dataset, Vec<PioChoice>) {
    let (instances, choices) = d
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| pio_instance(inst, i, seed))
        .unzip();
    (Dataset::new(instances), choices)
}

#[cfg(feature = "parallel")]
pub fn perturb_pio_par(d: &Dataset, seed: u64) -> (Dataset, Vec<PioChoice>) {
    let (instances, choices) = d
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| pio_instance(inst, i, seed))
        .unzip();
    (Dataset::new(instances), choices)
}

/// Rewrites exactly one uniformly chosen incorrect option per instance: its
/// text becomes the question and its context becomes ten space-joined copies
/// of the question. Returns the perturbed dataset and the per-instance
/// choices for audit.
pub fn perturb_pio(d: &Dataset, seed: u64) -> (Dataset, Vec<PioChoice>) {
    #[cfg(feature = "parallel")]
    {
        perturb_pio_par(d, seed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        perturb_pio_seq(d, seed)
    }
}

fn map_instances(d: &Dataset, f: impl Fn(&McqaInstance) -> McqaInstance + Send + Sync) -> Dataset {
    #[cfg(feature = "parallel")]
    {
        Dataset::new(d.instances.par_iter().map(f).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Dataset::new(d.instances.iter().map(f).collect())
    }
}

/// No Option: every option text becomes the empty sentinel.
pub fn perturb_no(d: &Dataset) -> Dataset {
    map_instances(d, |inst| {
        let mut out = inst.clone();
        for opt in &mut out.options {
            opt.text = EMPTY_SENTINEL.to_string();
        }
        out
    })
}

/// No Question: every question becomes the empty sentinel.
pub fn perturb_nq(d: &Dataset) -> Dataset {
    map_instances(d, |inst| {
        let mut out = inst.clone();
        out.question = EMPTY_SENTINEL.to_string();
        out
    })
}

/// No Context: every option context becomes the empty sentinel.
pub fn perturb_nc(d: &Dataset) -> Dataset {
    map_instances(d, |inst| {
        let mut out = inst.clone();
        for opt in &mut out.options {
            opt.context = EMPTY_SENTINEL.to_string();
        }
        out
    })
}

/// Applies a setting. PIO additionally returns its audit choices.
pub fn apply(
    setting: PerturbationSetting,
    d: &Dataset,
    seed: u64,
) -> (Dataset, Option<Vec<PioChoice>>) {
    match setting {
        PerturbationSetting::Original => (d.clone(), None),
        PerturbationSetting::Pio => {
            let (out, choices) = perturb_pio(d, seed);
            (out, Some(choices))
        }
        PerturbationSetting::No => (perturb_no(d), None),
        PerturbationSetting::Nq => (perturb_nq(d), None),
        PerturbationSetting::Nc => (perturb_nc(d), None),
    }
}
