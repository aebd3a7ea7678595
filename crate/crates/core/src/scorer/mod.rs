//! Triplet scoring: the lexical-feature linear scorer, the canonical
//! sequence encoding, and the client for remote model services.
//!
//! A scorer assigns one real logit to a `(question, option, context)`
//! triplet. The built-in [`LinearScorer`] is a deliberately shallow
//! lexical-overlap model: exactly the kind of model that latches onto
//! surface artifacts, which makes it a useful demonstration subject for the
//! perturbation probes.

pub mod remote;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{tokenize, Dataset};
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub use remote::{
    remote_score, score_dataset_remote, RemoteScorer, RemoteScorerConfig, ScoreItem,
    DEFAULT_TIMEOUT_MS,
};

/// Number of lexical features, including the bias.
pub const FEATURE_LEN: usize = 7;

/// Identifier written into saved model files.
pub const MODEL_FORMAT: &str = "mcqa-probe-linear-v1";

/// Fixed-length lexical feature vector for one triplet:
///
/// ```text
/// f0 = overlap(q, o) / (|o| + 1)
/// f1 = overlap(q, c) / (|q| + 1)
/// f2 = overlap(o, c) / (|o| + 1)
/// f3 = jaccard(o, c)
/// f4 = ln(1 + |o|)
/// f5 = ln(1 + |c|)
/// f6 = 1            (bias)
/// ```
///
/// where `overlap` is multiset intersection size over token bags and `|x|`
/// is the token count of `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn dot(&self, weights: &[f64; FEATURE_LEN]) -> f64 {
        self.0
            .iter()
            .zip(weights.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Extracts the lexical features for one triplet. Deterministic and pure.
pub fn featurize(question: &str, option: &str, context: &str) -> FeatureVector {
    let q = tokenize(question);
    let o = tokenize(option);
    let c = tokenize(context);
    let qo = q.overlap(&o) as f64;
    let qc = q.overlap(&c) as f64;
    let oc = o.overlap(&c) as f64;
    FeatureVector([
        qo / (o.len() as f64 + 1.0),
        qc / (q.len() as f64 + 1.0),
        oc / (o.len() as f64 + 1.0),
        o.jaccard(&c),
        (1.0 + o.len() as f64).ln(),
        (1.0 + c.len() as f64).ln(),
        1.0,
    ])
}

/// Renders the canonical transformer input sequence for one triplet, in
/// context-question-option order:
/// `[CLS] <context> [SEP] <question> [SEP] <option> [SEP]`.
pub fn format_triplet_sequence(question: &str, option: &str, context: &str) -> String {
    format!("[CLS] {context} [SEP] {question} [SEP] {option} [SEP]")
}

/// A linear model over the lexical features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearScorer {
    pub weights: [f64; FEATURE_LEN],
}

impl Default for LinearScorer {
    fn default() -> Self {
        LinearScorer {
            weights: [0.0; FEATURE_LEN],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    weights: Vec<f64>,
}

impl LinearScorer {
    pub fn new(weights: [f64; FEATURE_LEN]) -> Self {
        LinearScorer { weights }
    }

    /// Logit for one triplet: `weights . featurize(q, o, c)`.
    pub fn score_triplet(&self, question: &str, option: &str, context: &str) -> f64 {
        featurize(question, option, context).dot(&self.weights)
    }

    pub fn score_features(&self, features: &FeatureVector) -> f64 {
        features.dot(&self.weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(&display, e))?;
        let mut w = BufWriter::new(file);
        let body = ModelFile {
            format: MODEL_FORMAT.to_string(),
            weights: self.weights.to_vec(),
        };
        serde_json::to_writer(&mut w, &body).map_err(|e| Error::Validation(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(&display, e))?;
        w.flush().map_err(|e| Error::io(&display, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(&display, e))?;
        let body: ModelFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Validation(format!("model file {display}: {e}")))?;
        if body.format != MODEL_FORMAT {
            return Err(Error::Validation(format!(
                "model file {display} has format {:?}; expected {MODEL_FORMAT:?}",
                body.format
            )));
        }
        if body.weights.len() != FEATURE_LEN {
            return Err(Error::Validation(format!(
                "model file {display} has {} weights; expected {FEATURE_LEN}",
                body.weights.len()
            )));
        }
        if body.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation(format!(
                "model file {display} contains a non-finite weight"
            )));
        }
        let mut weights = [0.0; FEATURE_LEN];
        weights.copy_from_slice(&body.weights);
        Ok(LinearScorer { weights })
    }
}

/// Per-instance rows of logits, aligned with option order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub rows: Vec<Vec<f64>>,
}

/// One triplet to score, borrowed from a dataset.
#[derive(Clone, Copy, Debug)]
pub struct TripletRef<'a> {
    pub question: &'a str,
    pub option: &'a str,
    pub context: &'a str,
}

/// Anything that can score triplets in batches. Batch results align with the
/// batch order. Local scorers are infallible; remote ones can fail.
pub trait TripletScorer: Sync {
    fn score_batch(&self, batch: &[TripletRef<'_>]) -> Result<Vec<f64>>;
}

impl TripletScorer for LinearScorer {
    fn score_batch(&self, batch: &[TripletRef<'_>]) -> Result<Vec<f64>> {
        Ok(batch
            .iter()
            .map(|t| self.score_triplet(t.question, t.option, t.context))
            .collect())
    }
}

fn instance_triplets(inst: &crate::dataset::McqaInstance) -> Vec<TripletRef<'_>> {
    inst.options
        .iter()
        .map(|opt| TripletRef {
            question: &inst.question,
            option: &opt.text,
            context: &opt.context,
        })
        .collect()
}

/// Sequential scoring of a whole dataset, one row per instance.
pub fn score_dataset_seq(scorer: &impl TripletScorer, d: &Dataset) -> Result<ScoreMatrix> {
    let rows = d
        .instances
        .iter()
        .map(|inst| scorer.score_batch(&instance_triplets(inst)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix { rows })
}

#[cfg(feature = "parallel")]
pub fn score_dataset_par(scorer: &impl TripletScorer, d: &Dataset) -> Result<ScoreMatrix> {
    let rows = d
        .instances
        .par_iter()
        .map(|inst| scorer.score_batch(&instance_triplets(inst)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix { rows })
}

/// Scores every triplet of every instance. Row `i` holds instance `i`'s
/// logits in option order; sequential and parallel execution agree exactly.
pub fn score_dataset(scorer: &impl TripletScorer, d: &Dataset) -> Result<ScoreMatrix> {
    #[cfg(feature = "parallel")]
    {
        score_dataset_par(scorer, d)
    }
    #[cfg(not(feature = "parallel"))]
    {
        score_dataset_seq(scorer, d)
    }
}
