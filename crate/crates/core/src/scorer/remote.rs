//! HTTP client for external triplet-scoring services.
//!
//! Wire protocol: `POST {endpoint_url}/score` with body
//! `{"items": [{"id", "question", "option", "context", "sequence"}]}` and
//! response `{"scores": [{"id", "score"}]}`, both `application/json` UTF-8.
//! The `sequence` field carries the canonical `[CLS] ... [SEP]` encoding so
//! transformer services can consume it directly; services are free to use
//! the raw fields instead.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scorer::{format_triplet_sequence, ScoreMatrix};

/// Default request timeout, overridable via the CLI environment variable.
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Connection details for a remote scoring service.
#[derive(Clone, Debug)]
pub struct RemoteScorerConfig {
    pub endpoint_url: String,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl RemoteScorerConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        RemoteScorerConfig {
            endpoint_url: endpoint_url.into(),
            batch_size: 64,
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    fn score_url(&self) -> String {
        format!("{}/score", self.endpoint_url.trim_end_matches('/'))
    }
}

/// One item of a scoring request.
#[derive(Clone, Debug, Serialize)]
pub struct ScoreItem {
    pub id: String,
    pub question: String,
    pub option: String,
    pub context: String,
    pub sequence: String,
}

impl ScoreItem {
    pub fn new(id: impl Into<String>, question: &str, option: &str, context: &str) -> Self {
        ScoreItem {
            id: id.into(),
            question: question.to_string(),
            option: option.to_string(),
            context: context.to_string(),
            sequence: format_triplet_sequence(question, option, context),
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    items: &'a [ScoreItem],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<ScoreEntry>,
}

#[derive(Deserialize)]
struct ScoreEntry {
    id: String,
    score: f64,
}

/// A connected remote scorer. Holds one HTTP client; safe to share across
/// worker threads.
pub struct RemoteScorer {
    config: RemoteScorerConfig,
    client: reqwest::blocking::Client,
}

impl RemoteScorer {
    pub fn connect(config: RemoteScorerConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Scoring(format!("building http client: {e}")))?;
        Ok(RemoteScorer { config, client })
    }

    pub fn config(&self) -> &RemoteScorerConfig {
        &self.config
    }

    fn post_once(&self, items: &[ScoreItem]) -> std::result::Result<ScoreResponse, reqwest::Error> {
        let resp = self
            .client
            .post(self.config.score_url())
            .json(&ScoreRequest { items })
            .send()?
            .error_for_status()?;
        resp.json::<ScoreResponse>()
    }

    /// Scores one batch, returning `(id, score)` pairs aligned with the
    /// batch order. Retries once on timeout, then fails. A missing id,
    /// surplus id, or non-finite score is a hard error.
    pub fn score_batch_items(&self, items: &[ScoreItem]) -> Result<Vec<(String, f64)>> {
        if items.is_empty() {
            return Err(Error::Scoring("empty batch".into()));
        }
        if items.len() > self.config.batch_size {
            return Err(Error::Scoring(format!(
                "batch of {} exceeds batch_size {}",
                items.len(),
                self.config.batch_size
            )));
        }
        let first = items[0].id.clone();
        let batch_name = format!("batch starting at id {first:?} ({} items)", items.len());
        let response = match self.post_once(items) {
            Ok(r) => r,
            Err(e) if e.is_timeout() => self
                .post_once(items)
                .map_err(|e| Error::Scoring(format!("{batch_name}: retry failed: {e}")))?,
            Err(e) => return Err(Error::Scoring(format!("{batch_name}: {e}"))),
        };

        let mut by_id: HashMap<String, f64> = HashMap::with_capacity(response.scores.len());
        for entry in response.scores {
            if !entry.score.is_finite() {
                return Err(Error::Scoring(format!(
                    "{batch_name}: non-finite score for id {:?}",
                    entry.id
                )));
            }
            if by_id.insert(entry.id.clone(), entry.score).is_some() {
                return Err(Error::Scoring(format!(
                    "{batch_name}: duplicate id {:?} in response",
                    entry.id
                )));
            }
        }
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            let score = by_id.remove(&item.id).ok_or_else(|| {
                Error::Scoring(format!("{batch_name}: response is missing id {:?}", item.id))
            })?;
            out.push((item.id.clone(), score));
        }
        if let Some(extra) = by_id.keys().next() {
            return Err(Error::Scoring(format!(
                "{batch_name}: response contains unknown id {extra:?}"
            )));
        }
        Ok(out)
    }
}

impl crate::scorer::TripletScorer for RemoteScorer {
    fn score_batch(&self, batch: &[crate::scorer::TripletRef<'_>]) -> Result<Vec<f64>> {
        let items: Vec<ScoreItem> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| ScoreItem::new(format!("t{i}"), t.question, t.option, t.context))
            .collect();
        Ok(self
            .score_batch_items(&items)?
            .into_iter()
            .map(|(_, s)| s)
            .collect())
    }
}

/// Scores one batch against a remote service. The batch must be non-empty
/// and no larger than `cfg.batch_size`.
pub fn remote_score(
    cfg: &RemoteScorerConfig,
    batch: &[ScoreItem],
) -> Result<Vec<(String, f64)>> {
    RemoteScorer::connect(cfg.clone())?.score_batch_items(batch)
}

/// Scores a whole dataset remotely. Triplets are flattened in instance
/// order with wire ids `"{instance_id}#{option_index}"`, chunked into
/// batches of `cfg.batch_size`, and fetched by `workers` threads (each
/// issuing batches sequentially). Assembly is order-deterministic by
/// instance index regardless of worker count.
pub fn score_dataset_remote(
    cfg: &RemoteScorerConfig,
    d: &Dataset,
    workers: usize,
) -> Result<ScoreMatrix> {
    let scorer = RemoteScorer::connect(cfg.clone())?;
    let items: Vec<ScoreItem> = d
        .instances
        .iter()
        .flat_map(|inst| {
            inst.options.iter().enumerate().map(|(j, opt)| {
                ScoreItem::new(
                    format!("{}#{j}", inst.id),
                    &inst.question,
                    &opt.text,
                    &opt.context,
                )
            })
        })
        .collect();
    if items.is_empty() {
        return Ok(ScoreMatrix { rows: Vec::new() });
    }

    type BatchResult = Result<Vec<(String, f64)>>;
    let batches: Vec<&[ScoreItem]> = items.chunks(cfg.batch_size).collect();
    let workers = workers.max(1).min(batches.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<BatchResult>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= batches.len() {
                    break;
                }
                let res = scorer.score_batch_items(batches[idx]);
                results.lock().unwrap()[idx] = Some(res);
            });
        }
    });

    let mut flat: Vec<f64> = Vec::with_capacity(items.len());
    for slot in results.into_inner().unwrap() {
        let batch = slot.expect("every batch index was claimed by a worker")?;
        flat.extend(batch.into_iter().map(|(_, s)| s));
    }

    let mut rows = Vec::with_capacity(d.len());
    let mut offset = 0;
    for inst in &d.instances {
        let k = inst.option_count();
        rows.push(flat[offset..offset + k].to_vec());
        offset += k;
    }
    Ok(ScoreMatrix { rows })
}
