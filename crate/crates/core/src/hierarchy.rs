//! Two-level label schema, cascade routing, category merging and imbalance.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::embed::FeatureSequence;
use crate::error::{Error, Result};
use crate::net::{model_forward, ModelParams, ModelSpec};
use crate::train::{train_model, EpochLog, Example, TrainConfig};

pub const OTHERS: &str = "Others";
pub const DEFAULT_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub majors: Vec<String>,
    pub minors: Vec<String>,
    pub threshold: usize,
    pub others_sentinel: String,
    /// Original label → merged label. Identity entries are omitted.
    #[serde(default)]
    pub merge_map: BTreeMap<String, String>,
}

pub fn label_counts(docs: &[Document]) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for d in docs {
        let label = d
            .label
            .as_ref()
            .ok_or_else(|| Error::Config(format!("document {:?} has no label", d.id)))?;
        *counts.entry(label.clone()).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Labels with at least `threshold` documents become majors, the rest
/// minors. Both lists are sorted by name.
pub fn build_two_level_schema(counts: &BTreeMap<String, usize>, threshold: usize) -> Result<LabelSchema> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if threshold == 0 {
        return Err(Error::Config("threshold must be at least 1".into()));
    }
    let (majors, minors): (Vec<_>, Vec<_>) = counts.iter().partition(|(_, &c)| c >= threshold);
    if majors.is_empty() {
        return Err(Error::Schema(format!(
            "no label reaches the threshold of {threshold} documents"
        )));
    }
    let schema = LabelSchema {
        majors: majors.into_iter().map(|(l, _)| l.clone()).collect(),
        minors: minors.into_iter().map(|(l, _)| l.clone()).collect(),
        threshold,
        others_sentinel: OTHERS.to_string(),
        merge_map: BTreeMap::new(),
    };
    schema.validate()?;
    Ok(schema)
}

impl LabelSchema {
    pub fn validate(&self) -> Result<()> {
        if self.majors.is_empty() {
            return Err(Error::Schema("schema has no major labels".into()));
        }
        if self.threshold == 0 {
            return Err(Error::Schema("threshold must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for l in self.majors.iter().chain(&self.minors) {
            if l.is_empty() {
                return Err(Error::Schema("empty label name".into()));
            }
            if *l == self.others_sentinel {
                return Err(Error::Schema(format!(
                    "label {l:?} collides with the others sentinel"
                )));
            }
            if !seen.insert(l) {
                return Err(Error::Schema(format!("label {l:?} listed twice")));
            }
        }
        if self.merge_map.values().any(|v| *v == self.others_sentinel) {
            return Err(Error::Schema("merge target collides with the others sentinel".into()));
        }
        Ok(())
    }

    pub fn has_minors(&self) -> bool {
        !self.minors.is_empty()
    }

    /// Majors, plus the sentinel when minors exist.
    pub fn level1_classes(&self) -> Vec<String> {
        let mut classes = self.majors.clone();
        if self.has_minors() {
            classes.push(self.others_sentinel.clone());
        }
        classes
    }

    pub fn level2_classes(&self) -> &[String] {
        &self.minors
    }

    /// Every label a final prediction can take.
    pub fn universe(&self) -> Vec<String> {
        self.majors.iter().chain(&self.minors).cloned().collect()
    }

    pub fn is_minor(&self, label: &str) -> bool {
        self.minors.iter().any(|m| m == label)
    }

    /// The level-1 training target for an original label.
    pub fn level1_label<'a>(&'a self, label: &'a str) -> Result<&'a str> {
        if self.majors.iter().any(|m| m == label) {
            Ok(label)
        } else if self.is_minor(label) {
            Ok(&self.others_sentinel)
        } else {
            Err(Error::UnknownLabel(label.to_string()))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: LabelSchema =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("bad schema file: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Routed {
    pub label: String,
    /// Level-1 probability of the label, or p(Others) · p(label | Others).
    pub probability: f64,
    pub level: u8,
}

fn check_classes(m: &ModelParams, expected: &[String], which: &str) -> Result<()> {
    if m.label_names != expected {
        return Err(Error::Schema(format!(
            "{which} model classes {:?} do not match schema {:?}",
            m.label_names, expected
        )));
    }
    Ok(())
}

/// Hard routing: level-1 argmax, falling through to level 2 on the sentinel.
pub fn route_predict(
    seq: &FeatureSequence,
    level1: &ModelParams,
    level2: Option<&ModelParams>,
    schema: &LabelSchema,
) -> Result<Routed> {
    check_classes(level1, &schema.level1_classes(), "level-1")?;
    let t1 = model_forward(seq, level1, None)?;
    let k1 = t1.predicted();
    let label = &level1.label_names[k1];
    let p1 = t1.probabilities[k1];
    if *label != schema.others_sentinel {
        return Ok(Routed {
            label: label.clone(),
            probability: p1,
            level: 1,
        });
    }
    let level2 = level2.ok_or_else(|| {
        Error::Schema("level-1 predicted the others sentinel but no level-2 model is loaded".into())
    })?;
    check_classes(level2, &schema.minors, "level-2")?;
    let t2 = model_forward(seq, level2, None)?;
    let k2 = t2.predicted();
    Ok(Routed {
        label: level2.label_names[k2].clone(),
        probability: p1 * t2.probabilities[k2],
        level: 2,
    })
}

fn check_merge_map(
    map: &BTreeMap<String, String>,
    known: &BTreeSet<&str>,
    sentinel: &str,
) -> Result<()> {
    for (from, to) in map {
        if !known.contains(from.as_str()) {
            return Err(Error::UnknownLabel(from.clone()));
        }
        if to == sentinel {
            return Err(Error::Schema(format!(
                "merge target for {from:?} collides with the others sentinel"
            )));
        }
        if to.is_empty() {
            return Err(Error::Schema(format!("empty merge target for {from:?}")));
        }
    }
    Ok(())
}

/// Sums counts of labels mapped to the same target.
pub fn merge_counts(
    counts: &BTreeMap<String, usize>,
    map: &BTreeMap<String, String>,
    sentinel: &str,
) -> Result<BTreeMap<String, usize>> {
    let known: BTreeSet<&str> = counts.keys().map(String::as_str).collect();
    check_merge_map(map, &known, sentinel)?;
    let mut out = BTreeMap::new();
    for (label, &c) in counts {
        let target = map.get(label).unwrap_or(label);
        *out.entry(target.clone()).or_insert(0) += c;
    }
    Ok(out)
}

pub fn merge_corpus(
    docs: &[Document],
    map: &BTreeMap<String, String>,
    sentinel: &str,
) -> Result<Vec<Document>> {
    let known: BTreeSet<&str> = docs.iter().filter_map(|d| d.label.as_deref()).collect();
    check_merge_map(map, &known, sentinel)?;
    Ok(docs
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if let Some(target) = d.label.as_ref().and_then(|l| map.get(l)) {
                d.label = Some(target.clone());
            }
            d
        })
        .collect())
}

/// Rebuilds a schema over merged counts at the same threshold.
pub fn merge_schema(
    schema: &LabelSchema,
    counts: &BTreeMap<String, usize>,
    map: &BTreeMap<String, String>,
) -> Result<LabelSchema> {
    let merged = merge_counts(counts, map, &schema.others_sentinel)?;
    let mut out = build_two_level_schema(&merged, schema.threshold)?;
    out.others_sentinel = schema.others_sentinel.clone();
    out.merge_map = map.iter().filter(|(k, v)| k != v).map(|(k, v)| (k.clone(), v.clone())).collect();
    out.validate()?;
    Ok(out)
}

/// Largest label count over the smallest.
pub fn imbalance_ratio(counts: &BTreeMap<String, usize>) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::Config("imbalance ratio needs at least two labels".into()));
    }
    if let Some((l, _)) = counts.iter().find(|(_, &c)| c == 0) {
        return Err(Error::EmptyLabel(l.clone()));
    }
    let max = *counts.values().max().expect("nonempty");
    let min = *counts.values().min().expect("nonempty");
    Ok(max as f64 / min as f64)
}

/// A trained level-1 model plus an optional level-2 model for the minors.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub schema: LabelSchema,
    pub level1: ModelParams,
    pub level2: Option<ModelParams>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CascadeLogs {
    pub level1: Vec<EpochLog>,
    pub level2: Vec<EpochLog>,
}

impl Cascade {
    pub fn predict(&self, seq: &FeatureSequence) -> Result<Routed> {
        route_predict(seq, &self.level1, self.level2.as_ref(), &self.schema)
    }

    pub fn predict_all(&self, seqs: &[FeatureSequence]) -> Result<Vec<Routed>> {
        seqs.par_iter().map(|s| self.predict(s)).collect()
    }
}

fn class_index(classes: &[String], label: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// Level-1 examples: every document, minors relabeled to the sentinel.
pub fn level1_examples(data: &[(FeatureSequence, String)], schema: &LabelSchema) -> Result<Vec<Example>> {
    let classes = schema.level1_classes();
    data.iter()
        .map(|(seq, label)| {
            Ok(Example {
                seq: seq.clone(),
                class: class_index(&classes, schema.level1_label(label)?)?,
            })
        })
        .collect()
}

/// Level-2 examples: minor-class documents only.
pub fn level2_examples(data: &[(FeatureSequence, String)], schema: &LabelSchema) -> Result<Vec<Example>> {
    data.iter()
        .filter(|(_, l)| schema.is_minor(l))
        .map(|(seq, label)| {
            Ok(Example {
                seq: seq.clone(),
                class: class_index(&schema.minors, label)?,
            })
        })
        .collect()
}

/// Level-2 epoch count giving roughly as many optimizer steps as level 1.
pub fn matched_level2_epochs(level1_epochs: usize, level1_docs: usize, level2_docs: usize, batch: usize) -> usize {
    let batches = |n: usize| n.div_ceil(batch.max(1)).max(1);
    (level1_epochs * batches(level1_docs)).div_ceil(batches(level2_docs)).max(1)
}

/// Trains level 1 on all documents and, when minors exist, level 2 on the
/// minor documents.
pub fn train_cascade(
    train: &[(FeatureSequence, String)],
    test: &[(FeatureSequence, String)],
    schema: &LabelSchema,
    spec: &ModelSpec,
    level1_cfg: &TrainConfig,
    level2_cfg: &TrainConfig,
) -> Result<(Cascade, CascadeLogs)> {
    schema.validate()?;
    let tr1 = level1_examples(train, schema)?;
    let te1 = level1_examples(test, schema)?;
    let (level1, log1) = train_model(&tr1, &te1, level1_cfg, spec, schema.level1_classes())?;

    let mut logs = CascadeLogs {
        level1: log1,
        level2: Vec::new(),
    };
    let level2 = if schema.has_minors() {
        let tr2 = level2_examples(train, schema)?;
        let te2 = level2_examples(test, schema)?;
        let (m, log2) = train_model(&tr2, &te2, level2_cfg, spec, schema.minors.clone())?;
        logs.level2 = log2;
        Some(m)
    } else {
        None
    };
    Ok((
        Cascade {
            schema: schema.clone(),
            level1,
            level2,
        },
        logs,
    ))
}
