//! Constructed corpora with known structure, for end-to-end checks and demos.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::Document;
use crate::embed::EmbeddingTable;
use crate::error::Result;

/// Classes with disjoint keyword pools over a shared filler vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordCorpus {
    pub classes: usize,
    pub docs_per_class: usize,
    pub keywords_per_class: usize,
    pub keywords_per_doc: usize,
    pub fillers: usize,
    pub fillers_per_doc: usize,
}

impl Default for KeywordCorpus {
    fn default() -> Self {
        KeywordCorpus {
            classes: 8,
            docs_per_class: 200,
            keywords_per_class: 12,
            keywords_per_doc: 8,
            fillers: 60,
            fillers_per_doc: 16,
        }
    }
}

fn pick<R: Rng + ?Sized>(pool: &[String], n: usize, rng: &mut R, out: &mut Vec<String>) {
    for _ in 0..n {
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
}

fn make_doc<R: Rng + ?Sized>(id: String, label: String, mut tokens: Vec<String>, rng: &mut R) -> Document {
    tokens.shuffle(rng);
    Document {
        id,
        raw: tokens.join(" "),
        tokens,
        label: Some(label),
    }
}

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}w{j}")).collect()
}

impl KeywordCorpus {
    pub fn label(c: usize) -> String {
        format!("topic{c}")
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Document> {
        let fillers = pool("fill", self.fillers);
        let mut docs = Vec::with_capacity(self.classes * self.docs_per_class);
        for c in 0..self.classes {
            let keywords = pool(&format!("topic{c}"), self.keywords_per_class);
            for i in 0..self.docs_per_class {
                let mut tokens = Vec::new();
                pick(&keywords, self.keywords_per_doc, rng, &mut tokens);
                pick(&fillers, self.fillers_per_doc, rng, &mut tokens);
                docs.push(make_doc(format!("topic{c}-{i}"), Self::label(c), tokens, rng));
            }
        }
        docs
    }
}

/// A few large classes and a few small ones. Small classes draw most of their
/// keywords from a pool they all share, plus a handful of their own.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalancedCorpus {
    pub majors: usize,
    pub major_docs: usize,
    pub minors: usize,
    pub minor_docs: usize,
    pub major_keywords: usize,
    pub major_keywords_per_doc: usize,
    pub minor_shared: usize,
    pub minor_shared_per_doc: usize,
    pub minor_own: usize,
    pub minor_own_per_doc: usize,
    pub fillers: usize,
    pub fillers_per_doc: usize,
}

impl Default for ImbalancedCorpus {
    fn default() -> Self {
        ImbalancedCorpus {
            majors: 4,
            major_docs: 1_000,
            minors: 4,
            minor_docs: 40,
            major_keywords: 12,
            major_keywords_per_doc: 8,
            minor_shared: 16,
            minor_shared_per_doc: 6,
            minor_own: 6,
            minor_own_per_doc: 3,
            fillers: 60,
            fillers_per_doc: 12,
        }
    }
}

impl ImbalancedCorpus {
    pub fn major_label(c: usize) -> String {
        format!("major{c}")
    }

    pub fn minor_label(c: usize) -> String {
        format!("minor{c}")
    }

    pub fn minor_labels(&self) -> Vec<String> {
        (0..self.minors).map(Self::minor_label).collect()
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Document> {
        let fillers = pool("fill", self.fillers);
        let shared = pool("minshared", self.minor_shared);
        let mut docs = Vec::new();
        for c in 0..self.majors {
            let keywords = pool(&format!("major{c}"), self.major_keywords);
            for i in 0..self.major_docs {
                let mut tokens = Vec::new();
                pick(&keywords, self.major_keywords_per_doc, rng, &mut tokens);
                pick(&fillers, self.fillers_per_doc, rng, &mut tokens);
                docs.push(make_doc(format!("major{c}-{i}"), Self::major_label(c), tokens, rng));
            }
        }
        for c in 0..self.minors {
            let own = pool(&format!("minor{c}"), self.minor_own);
            for i in 0..self.minor_docs {
                let mut tokens = Vec::new();
                pick(&own, self.minor_own_per_doc, rng, &mut tokens);
                pick(&shared, self.minor_shared_per_doc, rng, &mut tokens);
                pick(&fillers, self.fillers_per_doc, rng, &mut tokens);
                docs.push(make_doc(format!("minor{c}-{i}"), Self::minor_label(c), tokens, rng));
            }
        }
        docs
    }
}

pub fn vocabulary(docs: &[Document]) -> BTreeSet<String> {
    docs.iter().flat_map(|d| d.tokens.iter().cloned()).collect()
}

/// Standard-normal vectors for every word, inserted in sorted order.
pub fn random_embeddings<'a, R: Rng + ?Sized>(
    words: impl IntoIterator<Item = &'a String>,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim, "synthetic-gaussian")?;
    let sorted: BTreeSet<&String> = words.into_iter().collect();
    for w in sorted {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        table.insert(w.clone(), &v)?;
    }
    Ok(table)
}
