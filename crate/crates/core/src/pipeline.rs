//! Document → feature-sequence plumbing shared by training and inference.

use rayon::prelude::*;

use crate::corpus::Document;
use crate::embed::{embed_sequence, EmbeddingTable, FeatureSequence, OovStats};
use crate::error::Result;
use crate::features::{rank_abstract, IdfTable};

#[derive(Debug, Clone, Copy)]
pub struct FeaturePipeline<'a> {
    pub idf: &'a IdfTable,
    pub table: &'a EmbeddingTable,
    pub seq_len: usize,
}

impl<'a> FeaturePipeline<'a> {
    pub fn new(idf: &'a IdfTable, table: &'a EmbeddingTable, seq_len: usize) -> Self {
        FeaturePipeline { idf, table, seq_len }
    }

    pub fn featurize(&self, doc: &Document) -> Result<FeatureSequence> {
        let ranked = rank_abstract(doc, self.idf, self.seq_len)?;
        Ok(embed_sequence(&ranked, self.table))
    }

    /// Featurizes in parallel, preserving order, and tallies OOV rows.
    pub fn featurize_all(&self, docs: &[Document]) -> Result<(Vec<FeatureSequence>, OovStats)> {
        let seqs: Vec<FeatureSequence> = docs
            .par_iter()
            .map(|d| self.featurize(d))
            .collect::<Result<_>>()?;
        let mut stats = OovStats::default();
        for s in &seqs {
            stats.add(s);
        }
        Ok((seqs, stats))
    }
}
