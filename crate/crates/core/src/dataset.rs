//! Canonical MCQA data model, line-delimited JSON I/O, and tokenization.
//!
//! One dataset file is UTF-8 with LF line endings, one JSON object per line:
//! `{"id": ..., "question": ..., "options": [{"text": ..., "context": ...}], "gold": ...}`.
//! The writer emits keys in exactly that order so that save -> load -> save
//! is byte-identical.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The literal used for an emptied question, option, or context. It is
/// treated as markup, not content: tokenizing it yields nothing.
pub const EMPTY_SENTINEL: &str = "<s>";

/// Smallest and largest supported option counts per instance.
pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 26;

/// One candidate option: its description and its supporting context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub text: String,
    pub context: String,
}

impl OptionEntry {
    pub fn new(text: impl Into<String>, context: impl Into<String>) -> Self {
        OptionEntry {
            text: text.into(),
            context: context.into(),
        }
    }
}

/// A k-way multiple-choice instance: a question, k options with their
/// contexts, and the index of the correct option.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct McqaInstance {
    pub id: String,
    pub question: String,
    pub options: Vec<OptionEntry>,
    pub gold: usize,
}

impl McqaInstance {
    /// Number of options, `k`.
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    /// Checks the per-instance invariants: 2 <= k <= 26 and 0 <= gold < k.
    pub fn validate(&self) -> Result<()> {
        let k = self.options.len();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&k) {
            return Err(Error::Validation(format!(
                "instance {:?} has {k} options; expected between {MIN_OPTIONS} and {MAX_OPTIONS}",
                self.id
            )));
        }
        if self.gold >= k {
            return Err(Error::Validation(format!(
                "instance {:?} has gold index {} out of range for {k} options",
                self.id, self.gold
            )));
        }
        Ok(())
    }

    /// Indices of the incorrect options, ascending.
    pub fn incorrect_indices(&self) -> Vec<usize> {
        (0..self.options.len()).filter(|&i| i != self.gold).collect()
    }
}

// Raw form used only while parsing, so a negative gold index surfaces as a
// validation error naming the instance instead of a serde type error.
#[derive(Deserialize)]
struct RawInstance {
    id: String,
    question: String,
    options: Vec<OptionEntry>,
    gold: i64,
}

impl RawInstance {
    fn into_instance(self) -> Result<McqaInstance> {
        if self.gold < 0 {
            return Err(Error::Validation(format!(
                "instance {:?} has negative gold index {}",
                self.id, self.gold
            )));
        }
        let inst = McqaInstance {
            id: self.id,
            question: self.question,
            options: self.options,
            gold: self.gold as usize,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// An ordered collection of instances. Order is exactly file order; the
/// augmentation sampler's "previous question" rule depends on it.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub instances: Vec<McqaInstance>,
    pub source_path: String,
}

impl Dataset {
    pub fn new(instances: Vec<McqaInstance>) -> Self {
        Dataset {
            instances,
            source_path: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Option counts per instance, in order (the dataset's k-profile).
    pub fn k_profile(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.option_count()).collect()
    }
}

/// Reads a dataset from line-delimited JSON, validating every instance and
/// rejecting duplicate ids.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut d = read_dataset(BufReader::new(file), &display)?;
    d.source_path = display;
    Ok(d)
}

/// Reads a dataset from any reader. `name` is used in error messages.
pub fn read_dataset(reader: impl Read, name: &str) -> Result<Dataset> {
    let reader = BufReader::new(reader);
    let mut instances = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let raw: RawInstance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let inst = raw.into_instance()?;
        if !seen.insert(inst.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate instance id {:?} at {name}:{}",
                inst.id,
                idx + 1
            )));
        }
        instances.push(inst);
    }
    Ok(Dataset {
        instances,
        source_path: name.to_string(),
    })
}

/// Writes a dataset in the canonical line-delimited JSON format.
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(d, &mut w, &display)?;
    w.flush().map_err(|e| Error::io(&display, e))
}

/// Writes a dataset to any writer.
pub fn write_dataset(d: &Dataset, writer: &mut impl Write, name: &str) -> Result<()> {
    for inst in &d.instances {
        let line = serde_json::to_string(inst).map_err(|e| Error::Validation(e.to_string()))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(name, e))?;
    }
    Ok(())
}

/// A multiset of lowercase tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenBag {
    counts: BTreeMap<String, usize>,
    total: usize,
}

impl TokenBag {
    /// Total token count, with multiplicity.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Multiset intersection size: sum over tokens of min(count_a, count_b).
    pub fn overlap(&self, other: &TokenBag) -> usize {
        // iterate the smaller map
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(tok, &c)| c.min(large.count(tok)))
            .sum()
    }

    /// Multiset Jaccard similarity: |min counts| / |max counts|, and 0 when
    /// both bags are empty.
    pub fn jaccard(&self, other: &TokenBag) -> f64 {
        let inter = self.overlap(other) as f64;
        let union = (self.total + other.total) as f64 - inter;
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Tokens and counts, in lexicographic token order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }
}

/// Lowercases and splits on any non-alphanumeric character, dropping empty
/// fragments. The exact string `"<s>"` is markup and yields an empty bag.
pub fn tokenize(s: &str) -> TokenBag {
    if s == EMPTY_SENTINEL {
        return TokenBag::default();
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for fragment in s.split(|c: char| !c.is_alphanumeric()) {
        if fragment.is_empty() {
            continue;
        }
        *counts.entry(fragment.to_lowercase()).or_insert(0) += 1;
        total += 1;
    }
    TokenBag { counts, total }
}
