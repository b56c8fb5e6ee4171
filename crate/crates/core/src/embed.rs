//! Word-vector tables and dense feature sequences.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::RankedAbstract;
use crate::net::Matrix;

/// Word to dense vector map with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    source_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmbeddingLoadReport {
    pub entries: usize,
    pub duplicates: usize,
    pub header_skipped: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            source_name: source_name.into(),
        })
    }

    /// Inserts a vector; returns `false` (and keeps the old vector) for duplicates.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape("embedding vector", self.dim, vector.len()));
        }
        let word = word.into();
        if self.index.contains_key(&word) {
            return Ok(false);
        }
        self.index.insert(word, self.data.len() / self.dim);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Text format, one `word v1 ... vdim` line per entry in insertion order.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&str, usize)> = self.index.iter().map(|(w, &i)| (w.as_str(), i)).collect();
        rows.sort_by_key(|r| r.1);
        let mut out = String::new();
        for (word, i) in rows {
            out.push_str(word);
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn is_word2vec_header(line: &str) -> bool {
    let parts: Vec<&str> = line.split_whitespace().collect();
    parts.len() == 2 && parts.iter().all(|p| p.parse::<u64>().is_ok())
}

/// Reads the space-separated text vector format: `word f1 f2 ... fdim` per line.
pub fn read_embedding_table<R: BufRead>(
    reader: R,
    source_name: &str,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
    let mut table: Option<EmbeddingTable> = None;
    let mut report = EmbeddingLoadReport::default();
    let mut values = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 && is_word2vec_header(line) {
            report.header_skipped = true;
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let word = parts.next().unwrap_or_default();
        values.clear();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad float {p:?}"),
            })?;
            values.push(v);
        }

        let table = match table.as_mut() {
            Some(t) => t,
            None => {
                if let Some(expected) = expected_dim {
                    if values.len() != expected {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "expected {expected} components, found {}",
                                values.len()
                            ),
                        });
                    }
                }
                if values.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "vector has no components".into(),
                    });
                }
                table.insert(EmbeddingTable::new(values.len(), source_name)?)
            }
        };
        if values.len() != table.dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "vector length {} differs from dimension {}",
                    values.len(),
                    table.dim
                ),
            });
        }
        if !table.insert(word, &values)? {
            report.duplicates += 1;
        }
    }

    let table = table.ok_or(Error::Parse {
        line: 0,
        message: "embedding file has no vectors".into(),
    })?;
    report.entries = table.len();
    Ok((table, report))
}

pub fn load_embedding_table(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_embedding_table(BufReader::new(file), &name, expected_dim)
}

/// Dense `d x dim` sequence; PAD and OOV rows are zero, mask marks real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub matrix: Matrix,
    pub mask: Vec<bool>,
}

impl FeatureSequence {
    pub fn new(matrix: Matrix, mask: Vec<bool>) -> Result<Self> {
        if matrix.rows() != mask.len() {
            return Err(Error::shape("feature mask", matrix.rows(), mask.len()));
        }
        Ok(FeatureSequence { matrix, mask })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Flattened feature width, `d * dim`.
    pub fn flat_dim(&self) -> usize {
        self.len() * self.dim()
    }

    /// Number of leading rows up to and including the last real token.
    pub fn real_prefix(&self) -> usize {
        self.mask.iter().rposition(|&m| m).map_or(0, |p| p + 1)
    }

    /// Mask-true rows whose vector is all zero.
    pub fn zero_real_rows(&self) -> usize {
        (0..self.len())
            .filter(|&t| self.mask[t] && self.matrix.row(t).iter().all(|&v| v == 0.0))
            .count()
    }
}

pub fn embed_sequence(ranked: &RankedAbstract, table: &EmbeddingTable) -> FeatureSequence {
    let d = ranked.selected.len();
    let mut matrix = Matrix::zeros(d, table.dim());
    let mut mask = vec![false; d];
    for (t, slot) in ranked.selected.iter().enumerate() {
        if let Some(word) = slot {
            mask[t] = true;
            if let Some(v) = table.get(word) {
                matrix.row_mut(t).copy_from_slice(v);
            }
        }
    }
    FeatureSequence { matrix, mask }
}

/// Fraction of `corpus_vocab` covered by the table.
pub fn vocab_overlap<'a>(
    corpus_vocab: impl IntoIterator<Item = &'a str>,
    table: &EmbeddingTable,
) -> Result<f64> {
    let vocab: HashSet<&str> = corpus_vocab.into_iter().collect();
    if vocab.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hits = vocab.iter().filter(|w| table.contains(w)).count();
    Ok(hits as f64 / vocab.len() as f64)
}

/// Running OOV diagnostic: share of real rows embedded as zero vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OovStats {
    pub real_rows: usize,
    pub zero_rows: usize,
}

impl OovStats {
    pub fn add(&mut self, seq: &FeatureSequence) {
        self.real_rows += seq.mask.iter().filter(|&&m| m).count();
        self.zero_rows += seq.zero_real_rows();
    }

    pub fn rate(&self) -> f64 {
        if self.real_rows == 0 {
            0.0
        } else {
            self.zero_rows as f64 / self.real_rows as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, expected: Option<usize>) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
        read_embedding_table(text.as_bytes(), "mem", expected)
    }

    fn ranked(selected: &[Option<&str>]) -> RankedAbstract {
        RankedAbstract {
            word_types: selected.iter().flatten().map(|s| s.to_string()).collect(),
            scored: Vec::new(),
            selected: selected.iter().map(|s| s.map(str::to_string)).collect(),
            d: selected.len(),
        }
    }

    #[test]
    fn parses_vectors_and_dim() {
        let (t, r) = read("cell 0.1 0.2 -0.3\ngene 1 2 3\n", None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("cell").unwrap(), &[0.1, 0.2, -0.3]);
        assert_eq!(r.entries, 2);
        assert_eq!(r.duplicates, 0);
    }

    #[test]
    fn text_round_trip() {
        let (t, _) = read("b 0.1 2e-7\na -1 3.25\n", None).unwrap();
        assert_eq!(t.to_text(), "b 0.1 0.0000002\na -1 3.25\n");
        let (back, _) = read(&t.to_text(), Some(2)).unwrap();
        assert_eq!(back.get("b"), t.get("b"));
    }

    #[test]
    fn ragged_line_is_fatal_with_line_number() {
        let err = read("cell 0.1 0.2 -0.3\ngene 1 2 3 4\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(read("cell 0.1 0.2\n", Some(3)).is_err());
    }

    #[test]
    fn duplicates_keep_first() {
        let (t, r) = read("cell 1 1\ncell 2 2\n", None).unwrap();
        assert_eq!(t.get("cell").unwrap(), &[1.0, 1.0]);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn empty_file_and_headers() {
        assert!(read("", None).is_err());
        let (t, r) = read("2 3\na 1 2 3\nb 4 5 6\n", None).unwrap();
        assert!(r.header_skipped);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn embed_pads_and_oov() {
        let (t, _) = read("a 1 2\n", None).unwrap();
        let s = embed_sequence(&ranked(&[Some("a"), None]), &t);
        assert_eq!(s.matrix.as_slice(), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(s.mask, vec![true, false]);

        let s = embed_sequence(&ranked(&[Some("b"), Some("a")]), &t);
        assert_eq!(s.matrix.row(0), &[0.0, 0.0]);
        assert_eq!(s.mask, vec![true, true]);
        assert_eq!(s.zero_real_rows(), 1);
        let mut stats = OovStats::default();
        stats.add(&s);
        assert!((stats.rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_dim_is_d_times_dim() {
        let line = format!("w {}\n", vec!["0.5"; 50].join(" "));
        let (t, _) = read(&line, Some(50)).unwrap();
        let slots: Vec<Option<&str>> = (0..80).map(|i| (i == 0).then_some("w")).collect();
        let s = embed_sequence(&ranked(&slots), &t);
        assert_eq!(s.flat_dim(), 4000);
        assert_eq!(s.real_prefix(), 1);
    }

    #[test]
    fn overlap_fraction() {
        let (t, _) = read("a 1\nc 1\nx 1\n", None).unwrap();
        assert_eq!(vocab_overlap(["a", "b", "c", "d"], &t).unwrap(), 0.5);
        assert_eq!(vocab_overlap(["a", "c", "x"], &t).unwrap(), 1.0);
        assert_eq!(vocab_overlap(["q"], &t).unwrap(), 0.0);
        assert!(vocab_overlap(std::iter::empty(), &t).is_err());
    }

    #[test]
    fn embedding_is_repeatable() {
        let (t, _) = read("a 0.3 0.7\nb -1 2\n", None).unwrap();
        let r = ranked(&[Some("b"), Some("a"), None]);
        assert_eq!(embed_sequence(&r, &t), embed_sequence(&r, &t));
    }
}
