//! Precision, recall, F1 and confusion matrices for single-label predictions.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub micro_f1: f64,
    /// Mean F1 over classes with nonzero support.
    pub macro_f1: f64,
    /// Median F1 over classes with nonzero support.
    pub median_f1: f64,
    /// Classes left out of the macro and median averages.
    pub zero_support: Vec<String>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub normalized_confusion: Vec<Vec<f64>>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn score_predictions<S: AsRef<str>>(
    truths: &[S],
    predictions: &[S],
    classes: &[String],
) -> Result<EvalReport> {
    if truths.len() != predictions.len() {
        return Err(Error::shape("prediction count", truths.len(), predictions.len()));
    }
    if truths.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let lookup = |s: &str| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    };
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truths.iter().zip(predictions) {
        confusion[lookup(t.as_ref())?][lookup(p.as_ref())?] += 1;
    }
    Ok(report_from_confusion(classes.to_vec(), confusion))
}

pub fn report_from_confusion(classes: Vec<String>, confusion: Vec<Vec<usize>>) -> EvalReport {
    let k = classes.len();
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..k).map(|i| confusion[i][i]).sum();

    let mut per_class = Vec::with_capacity(k);
    let mut zero_support = Vec::new();
    let mut supported_f1 = Vec::new();
    for (i, label) in classes.iter().enumerate() {
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        let tp = confusion[i][i];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let score = f1(precision, recall);
        if support == 0 {
            zero_support.push(label.clone());
        } else {
            supported_f1.push(score);
        }
        per_class.push(ClassMetrics {
            label: label.clone(),
            precision,
            recall,
            f1: score,
            support,
            predicted,
        });
    }

    let normalized_confusion = confusion
        .iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            row.iter().map(|&c| ratio(c, s)).collect()
        })
        .collect();

    let macro_f1 = if supported_f1.is_empty() {
        0.0
    } else {
        supported_f1.iter().sum::<f64>() / supported_f1.len() as f64
    };
    EvalReport {
        classes,
        per_class,
        // pooled TP / FP / FN; equals accuracy for single-label predictions
        micro_f1: ratio(trace, total),
        macro_f1,
        median_f1: median(supported_f1),
        zero_support,
        confusion,
        normalized_confusion,
    }
}

impl EvalReport {
    pub fn metrics(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.label == label)
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let trace: usize = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        ratio(trace, total)
    }

    /// Mean F1 over the named classes.
    pub fn macro_f1_over(&self, labels: &[String]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::Config("empty class subset".into()));
        }
        let mut sum = 0.0;
        for l in labels {
            sum += self.metrics(l).ok_or_else(|| Error::UnknownLabel(l.clone()))?.f1;
        }
        Ok(sum / labels.len() as f64)
    }

    /// Confusion counts with a header row and column of class names.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&csv_field(c));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Row-normalized confusion restricted to a subset of classes. Rows are
/// normalized over the full prediction space; `residual[i]` is the mass of
/// row `i` predicted outside the subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubMatrix {
    pub classes: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

pub fn confusion_submatrix(report: &EvalReport, subset: &[&str]) -> Result<SubMatrix> {
    if subset.is_empty() {
        return Err(Error::Config("empty class subset".into()));
    }
    let idx: Vec<usize> = subset
        .iter()
        .map(|s| {
            report
                .classes
                .iter()
                .position(|c| c == s)
                .ok_or_else(|| Error::UnknownLabel(s.to_string()))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(idx.len());
    let mut residual = Vec::with_capacity(idx.len());
    for &r in &idx {
        let row = &report.normalized_confusion[r];
        let projected: Vec<f64> = idx.iter().map(|&c| row[c]).collect();
        let row_mass: f64 = row.iter().sum();
        residual.push((row_mass - projected.iter().sum::<f64>()).max(0.0));
        values.push(projected);
    }
    Ok(SubMatrix {
        classes: subset.iter().map(|s| s.to_string()).collect(),
        values,
        residual,
    })
}
