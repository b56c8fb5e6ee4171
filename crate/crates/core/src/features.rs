//! TF-IDF ranking of word types and top-d sequence selection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Default number of word types kept per abstract.
pub const DEFAULT_SEQ_LEN: usize = 80;

/// Document frequencies turned into `ln(N / df)` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    doc_count: usize,
    idf: BTreeMap<String, f64>,
}

impl IdfTable {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// Weight of `word`; words never seen in the corpus weigh 0.
    pub fn get(&self, word: &str) -> f64 {
        self.idf.get(word).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.idf.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.idf.iter().map(|(w, v)| (w.as_str(), *v))
    }

    /// `N <count>` header, then `word<TAB>idf` sorted by word.
    pub fn to_text(&self) -> String {
        let mut out = format!("N {}\n", self.doc_count);
        for (w, v) in &self.idf {
            let _ = writeln!(out, "{w}\t{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `N <doc_count>` header".into(),
        })?;
        let doc_count = header
            .strip_prefix("N ")
            .and_then(|n| n.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("bad header {header:?}"),
            })?;
        let mut idf = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.is_empty() {
                continue;
            }
            let (word, value) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `word<TAB>idf`".into(),
            })?;
            let value: f64 = value.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad idf value {value:?}"),
            })?;
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("idf must be finite and nonnegative, got {value}"),
                });
            }
            idf.insert(word.to_string(), value);
        }
        Ok(IdfTable { doc_count, idf })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the serialized table, used to bind checkpoints to it.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Unique words in order of first occurrence.
pub fn word_types(tokens: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    tokens
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .cloned()
        .collect()
}

pub fn build_idf(corpus: &[Document]) -> Result<IdfTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let df: HashMap<String, usize> = corpus
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<String, usize>, doc| {
            for w in word_types(&doc.tokens) {
                *acc.entry(w).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (w, c) in b {
                *a.entry(w).or_default() += c;
            }
            a
        });
    let n = corpus.len() as f64;
    let idf = df
        .into_iter()
        .map(|(w, c)| (w, (n / c as f64).ln()))
        .collect();
    Ok(IdfTable {
        doc_count: corpus.len(),
        idf,
    })
}

/// Word types scored by `tf * idf`, descending; ties keep first-occurrence order.
pub fn tfidf_rank(doc: &Document, idf: &IdfTable) -> Vec<(String, f64)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &doc.tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut scored: Vec<(String, f64)> = word_types(&doc.tokens)
        .into_iter()
        .map(|w| {
            let score = counts[w.as_str()] as f64 * idf.get(&w);
            (w, score)
        })
        .collect();
    // stable sort preserves first-occurrence order among equal scores
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
}

/// A selected, reordered and padded abstract. `None` slots in `selected` are PAD.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedAbstract {
    pub word_types: Vec<String>,
    pub scored: Vec<(String, f64)>,
    pub selected: Vec<Option<String>>,
    pub d: usize,
}

impl RankedAbstract {
    pub fn real_len(&self) -> usize {
        self.selected.iter().filter(|s| s.is_some()).count()
    }
}

pub fn select_and_reorder(
    ranked: &[(String, f64)],
    doc: &Document,
    d: usize,
) -> Result<RankedAbstract> {
    if d == 0 {
        return Err(Error::Config("sequence length d must be at least 1".into()));
    }
    let types = word_types(&doc.tokens);
    let position: HashMap<&str, usize> = types
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();

    let mut top: Vec<&str> = ranked.iter().take(d).map(|(w, _)| w.as_str()).collect();
    top.sort_by_key(|w| position.get(w).copied().unwrap_or(usize::MAX));

    let mut selected: Vec<Option<String>> = top.into_iter().map(|w| Some(w.to_string())).collect();
    selected.resize(d, None);

    Ok(RankedAbstract {
        word_types: types,
        scored: ranked.to_vec(),
        selected,
        d,
    })
}

/// `tfidf_rank` followed by `select_and_reorder`.
pub fn rank_abstract(doc: &Document, idf: &IdfTable, d: usize) -> Result<RankedAbstract> {
    let ranked = tfidf_rank(doc, idf);
    select_and_reorder(&ranked, doc, d)
}
