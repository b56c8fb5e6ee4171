//! Abstract ingestion and text cleaning.
//!
//! Raw abstracts are lowercased, split on whitespace, trimmed of leading and
//! trailing non-alphanumeric characters, filtered against a stopword list and
//! mapped through a lemma dictionary.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// One labeled (or unlabeled) abstract.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub raw: String,
    pub tokens: Vec<String>,
    pub label: Option<String>,
}

/// Stopwords, lemma dictionary and the minimum token count for ingestion.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
    min_words: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: parse_word_list(DEFAULT_STOPWORDS),
            lemmas: HashMap::new(),
            min_words: 10,
        }
    }
}

impl PreprocessConfig {
    /// Builds a config, normalizing keys and values the same way tokens are
    /// normalized. Lemma chains (`a -> b`, `b -> c`) are collapsed so that a
    /// lemma is never itself rewritten again.
    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        lemmas: impl IntoIterator<Item = (String, String)>,
        min_words: usize,
    ) -> Result<Self> {
        if min_words == 0 {
            return Err(Error::Config("min_words must be at least 1".into()));
        }
        let stopwords = stopwords
            .into_iter()
            .filter_map(|w| normalize_token(&w))
            .collect();

        let mut raw_map = HashMap::new();
        for (key, value) in lemmas {
            let k = normalize_token(&key)
                .ok_or_else(|| Error::Config(format!("lemma key {key:?} has no content")))?;
            let v = normalize_single(&value).ok_or_else(|| {
                Error::Config(format!("lemma for {key:?} must be one nonempty word"))
            })?;
            raw_map.entry(k).or_insert(v);
        }

        let mut lemmas = HashMap::with_capacity(raw_map.len());
        for key in raw_map.keys() {
            let mut seen = HashSet::new();
            let mut current = key.as_str();
            seen.insert(current);
            while let Some(next) = raw_map.get(current) {
                if next == current {
                    break;
                }
                if !seen.insert(next.as_str()) {
                    return Err(Error::Config(format!("lemma cycle through {key:?}")));
                }
                current = next;
            }
            if current != key {
                lemmas.insert(key.clone(), current.to_string());
            }
        }

        Ok(PreprocessConfig {
            stopwords,
            lemmas,
            min_words,
        })
    }

    /// Loads a stopword list and an optional lemma file (`token lemma` per line).
    pub fn from_files(
        stopword_path: Option<&Path>,
        lemma_path: Option<&Path>,
        min_words: usize,
    ) -> Result<Self> {
        let stopwords = match stopword_path {
            Some(p) => parse_word_list(&read_text(p)?),
            None => parse_word_list(DEFAULT_STOPWORDS),
        };
        let lemmas = match lemma_path {
            Some(p) => parse_lemma_file(&read_text(p)?)?,
            None => Vec::new(),
        };
        Self::new(stopwords, lemmas, min_words)
    }

    pub fn min_words(&self) -> usize {
        self.min_words
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn lemma<'a>(&'a self, word: &'a str) -> &'a str {
        self.lemmas.get(word).map(String::as_str).unwrap_or(word)
    }
}

pub fn default_stopwords() -> HashSet<String> {
    parse_word_list(DEFAULT_STOPWORDS)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Lemma dictionary: one `token lemma` pair per line, tab or space separated.
pub fn parse_lemma_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) => pairs.push((k.to_string(), v.to_string())),
            _ => {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "expected `token lemma`".into(),
                })
            }
        }
    }
    Ok(pairs)
}

fn normalize_token(word: &str) -> Option<String> {
    let lower = word.to_lowercase();
    let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

fn normalize_single(word: &str) -> Option<String> {
    let n = normalize_token(word)?;
    (!n.contains(char::is_whitespace)).then_some(n)
}

/// Cleans one abstract into an ordered token list. Duplicates are kept.
pub fn preprocess_abstract(raw: &str, cfg: &PreprocessConfig) -> Vec<String> {
    raw.split_whitespace()
        .filter_map(normalize_token)
        .filter(|t| !cfg.is_stopword(t))
        .map(|t| cfg.lemma(&t).to_string())
        .filter(|t| !cfg.is_stopword(t))
        .collect()
}

/// Whether missing labels are a rejection (training) or allowed (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    Training,
    Inference,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub total_lines: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub missing_field: usize,
    pub too_short: usize,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.malformed + self.missing_field + self.too_short
    }
}

/// One corpus line. `tokens` is present in already-cleaned corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl From<&Document> for CorpusRecord {
    fn from(doc: &Document) -> Self {
        CorpusRecord {
            id: doc.id.clone(),
            abstract_text: doc.raw.clone(),
            label: doc.label.clone(),
            tokens: Some(doc.tokens.clone()),
        }
    }
}

enum LineOutcome {
    Accepted(Document),
    Malformed,
    MissingField,
    TooShort,
}

fn parse_line(line: &str, cfg: &PreprocessConfig, mode: IngestMode) -> LineOutcome {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => return LineOutcome::Malformed,
    };
    let Some(obj) = value.as_object() else {
        return LineOutcome::Malformed;
    };

    let field = |name: &str| -> std::result::Result<Option<String>, ()> {
        match obj.get(name) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(()),
        }
    };
    let (Ok(id), Ok(raw), Ok(label)) = (field("id"), field("abstract"), field("label")) else {
        return LineOutcome::Malformed;
    };
    let (Some(id), Some(raw)) = (id, raw) else {
        return LineOutcome::MissingField;
    };
    if mode == IngestMode::Training && label.is_none() {
        return LineOutcome::MissingField;
    }

    let tokens = match obj.get("tokens") {
        None | Some(serde_json::Value::Null) => preprocess_abstract(&raw, cfg),
        Some(serde_json::Value::Array(items)) => {
            let mut tokens = Vec::with_capacity(items.len());
            for item in items {
                match item.as_str() {
                    Some(s) if !s.is_empty() => tokens.push(s.to_string()),
                    _ => return LineOutcome::Malformed,
                }
            }
            tokens
        }
        Some(_) => return LineOutcome::Malformed,
    };
    if tokens.len() < cfg.min_words {
        return LineOutcome::TooShort;
    }
    LineOutcome::Accepted(Document {
        id,
        raw,
        tokens,
        label,
    })
}

/// Parses JSON-lines corpus text. Bad records are skipped and counted.
/// Output order follows input order regardless of the rayon pool size.
pub fn ingest_str(
    text: &str,
    cfg: &PreprocessConfig,
    mode: IngestMode,
) -> (Vec<Document>, RejectionReport) {
    let lines: Vec<&str> = text.lines().collect();
    let outcomes: Vec<LineOutcome> = lines
        .par_iter()
        .map(|line| parse_line(line, cfg, mode))
        .collect();

    let mut report = RejectionReport {
        total_lines: lines.len(),
        ..Default::default()
    };
    let mut docs = Vec::new();
    for outcome in outcomes {
        match outcome {
            LineOutcome::Accepted(doc) => docs.push(doc),
            LineOutcome::Malformed => report.malformed += 1,
            LineOutcome::MissingField => report.missing_field += 1,
            LineOutcome::TooShort => report.too_short += 1,
        }
    }
    report.accepted = docs.len();
    (docs, report)
}

pub fn ingest_corpus(
    path: &Path,
    cfg: &PreprocessConfig,
    mode: IngestMode,
) -> Result<(Vec<Document>, RejectionReport)> {
    let text = read_text(path)?;
    Ok(ingest_str(&text, cfg, mode))
}

/// Writes documents as JSON lines, including their cleaned tokens.
pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(&CorpusRecord::from(doc))?);
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}
