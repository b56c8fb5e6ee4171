use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSplit {
    pub available: usize,
    pub retained: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub per_label: BTreeMap<String, LabelSplit>,
}

impl SamplingReport {
    pub fn total_train(&self) -> usize {
        self.per_label.values().map(|s| s.train).sum()
    }

    pub fn total_test(&self) -> usize {
        self.per_label.values().map(|s| s.test).sum()
    }
}

/// Caps each label at `per_class_cap` (sampled without replacement), then
/// splits every label's pool train/test by `cfg.split`. `labels` is the class
/// universe; pass an empty slice to take it from the corpus. Both outputs keep
/// corpus order.
pub fn sample_training_set(
    corpus: &[Document],
    labels: &[String],
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<(Vec<Document>, Vec<Document>, SamplingReport)> {
    cfg.validate()?;
    let mut groups: BTreeMap<&str, Vec<usize>> =
        labels.iter().map(|l| (l.as_str(), Vec::new())).collect();
    for (i, doc) in corpus.iter().enumerate() {
        let label = doc
            .label
            .as_deref()
            .ok_or_else(|| Error::Config(format!("document {:?} has no label", doc.id)))?;
        match groups.get_mut(label) {
            Some(g) => g.push(i),
            None if labels.is_empty() => groups.entry(label).or_default().push(i),
            None => return Err(Error::UnknownLabel(label.to_string())),
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let parts = cfg.split[0] + cfg.split[1];
    let mut is_train = vec![None; corpus.len()];
    let mut report = SamplingReport::default();
    for (label, mut idx) in groups {
        if idx.is_empty() {
            return Err(Error::EmptyLabel(label.to_string()));
        }
        let available = idx.len();
        idx.shuffle(rng);
        idx.truncate(cfg.per_class_cap.unwrap_or(usize::MAX));
        let retained = idx.len();
        // rounded share of the pool held out
        let test = (retained * cfg.split[1] + parts / 2) / parts;
        for (k, &i) in idx.iter().enumerate() {
            is_train[i] = Some(k >= test);
        }
        report.per_label.insert(
            label.to_string(),
            LabelSplit {
                available,
                retained,
                train: retained - test,
                test,
            },
        );
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (doc, flag) in corpus.iter().zip(is_train) {
        match flag {
            Some(true) => train.push(doc.clone()),
            Some(false) => test.push(doc.clone()),
            None => {}
        }
    }
    Ok((train, test, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn docs(label: &str, n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document {
                id: format!("{label}{i}"),
                raw: String::new(),
                tokens: vec!["x".into()],
                label: Some(label.into()),
            })
            .collect()
    }

    #[test]
    fn caps_and_splits_per_label() {
        let mut corpus = docs("big", 2_000);
        corpus.extend(docs("small", 40));
        let cfg = TrainConfig {
            per_class_cap: Some(1_500),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, test, report) = sample_training_set(&corpus, &[], &cfg, &mut rng).unwrap();
        let big = &report.per_label["big"];
        assert_eq!((big.available, big.retained, big.train, big.test), (2_000, 1_500, 1_350, 150));
        let small = &report.per_label["small"];
        assert_eq!((small.retained, small.train, small.test), (40, 36, 4));
        assert_eq!(train.len() + test.len(), 1_540);
        assert_eq!(train.len(), report.total_train());
    }

    #[test]
    fn large_scale_cap() {
        let corpus = docs("physics", 200_000);
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, test, report) = sample_training_set(&corpus, &[], &cfg, &mut rng).unwrap();
        assert_eq!(report.per_label["physics"].retained, 150_000);
        assert_eq!(train.len() + test.len(), 150_000);
    }

    #[test]
    fn reproducible_and_uncapped() {
        let mut corpus = docs("a", 57);
        corpus.extend(docs("b", 13));
        let cfg = TrainConfig {
            per_class_cap: None,
            ..Default::default()
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_training_set(&corpus, &[], &cfg, &mut rng).unwrap()
        };
        let (a1, t1, _) = run(11);
        let (a2, t2, _) = run(11);
        assert_eq!(a1, a2);
        assert_eq!(t1, t2);
        assert_eq!(a1.len() + t1.len(), 70);
    }

    #[test]
    fn missing_or_unknown_labels_fail() {
        let corpus = docs("a", 5);
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let universe = vec!["a".to_string(), "ghost".to_string()];
        assert!(matches!(
            sample_training_set(&corpus, &universe, &cfg, &mut rng),
            Err(Error::EmptyLabel(l)) if l == "ghost"
        ));
        assert!(matches!(
            sample_training_set(&corpus, &["z".to_string()], &cfg, &mut rng),
            Err(Error::UnknownLabel(_))
        ));
        let mut unlabeled = docs("a", 1);
        unlabeled[0].label = None;
        assert!(sample_training_set(&unlabeled, &[], &cfg, &mut rng).is_err());
    }
}
