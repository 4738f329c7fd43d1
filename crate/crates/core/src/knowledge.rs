//! Knowledge base of admissible intervals and grounding extraction.
//!
//! A grounding is a fact `predicate = value` computed from one noisy label
//! sample. Sequence predicates use the sample's instance order as adjacency.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{is_positive, NoisySample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    PositiveRate,
    MeanPositiveRunLength,
    PositiveFeatureMeanGap,
    BoundaryDensity,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::PositiveRate,
        Predicate::MeanPositiveRunLength,
        Predicate::PositiveFeatureMeanGap,
        Predicate::BoundaryDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::PositiveRate => "positive_rate",
            Predicate::MeanPositiveRunLength => "mean_positive_run_length",
            Predicate::PositiveFeatureMeanGap => "positive_feature_mean_gap",
            Predicate::BoundaryDensity => "boundary_density",
        }
    }

    pub fn needs_features(self) -> bool {
        matches!(self, Predicate::PositiveFeatureMeanGap)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown predicate `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub id: u32,
    pub predicate: Predicate,
    pub admissible_lo: f64,
    pub admissible_hi: f64,
    pub weight: f64,
}

impl KnowledgeItem {
    pub fn new(id: u32, predicate: Predicate, admissible_lo: f64, admissible_hi: f64, weight: f64) -> Result<Self> {
        if !admissible_lo.is_finite() || !admissible_hi.is_finite() || admissible_lo > admissible_hi {
            return Err(Error::InvalidInput(format!(
                "knowledge item {id}: admissible interval [{admissible_lo}, {admissible_hi}] is not a finite interval"
            )));
        }
        if !weight.is_finite() || weight <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "knowledge item {id}: weight must be finite and positive, got {weight}"
            )));
        }
        Ok(Self {
            id,
            predicate,
            admissible_lo,
            admissible_hi,
            weight,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.admissible_lo..=self.admissible_hi).contains(&value)
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.admissible_lo, self.admissible_hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    items: Vec<KnowledgeItem>,
}

impl KnowledgeBase {
    pub fn new(items: Vec<KnowledgeItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidInput("knowledge base is empty".into()));
        }
        let mut ids = HashSet::new();
        let mut predicates = HashSet::new();
        for item in &items {
            if !ids.insert(item.id) {
                return Err(Error::InvalidInput(format!("duplicate knowledge item id {}", item.id)));
            }
            if !predicates.insert(item.predicate) {
                return Err(Error::InvalidInput(format!(
                    "more than one knowledge item for predicate {}",
                    item.predicate
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[KnowledgeItem] {
        &self.items
    }

    pub fn item_for(&self, predicate: Predicate) -> Option<&KnowledgeItem> {
        self.items.iter().find(|k| k.predicate == predicate)
    }

    pub fn get(&self, id: u32) -> Option<&KnowledgeItem> {
        self.items.iter().find(|k| k.id == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Asserted,
    Negated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub id: u64,
    /// Id of the noisy sample the fact was extracted from.
    pub source_sample: usize,
    pub predicate: Predicate,
    pub observed_value: f64,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundingParams {
    pub predicates: Vec<Predicate>,
    /// Positive runs shorter than this are ignored by the run-length
    /// statistic.
    pub min_run_length: usize,
}

impl Default for GroundingParams {
    fn default() -> Self {
        Self {
            predicates: Predicate::ALL.to_vec(),
            min_run_length: 1,
        }
    }
}

impl GroundingParams {
    pub fn validate(&self) -> Result<()> {
        if self.predicates.is_empty() {
            return Err(Error::Config("no grounding predicates enabled".into()));
        }
        let unique: HashSet<_> = self.predicates.iter().collect();
        if unique.len() != self.predicates.len() {
            return Err(Error::Config("grounding predicates listed more than once".into()));
        }
        if self.min_run_length == 0 {
            return Err(Error::Config("min_run_length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Groundings of one noisy sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGroundings {
    pub sample_id: usize,
    pub groundings: Vec<Grounding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingSet {
    pub samples: Vec<SampleGroundings>,
    pub params: GroundingParams,
}

impl GroundingSet {
    pub fn iter(&self) -> impl Iterator<Item = &Grounding> {
        self.samples.iter().flat_map(|s| s.groundings.iter())
    }

    pub fn len(&self) -> usize {
        self.samples.iter().map(|s| s.groundings.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find(&self, id: u64) -> Option<&Grounding> {
        self.iter().find(|g| g.id == id)
    }
}

/// Fraction of hard-positive labels.
pub fn positive_rate(labels: &[f64]) -> f64 {
    labels.iter().filter(|&&l| is_positive(l)).count() as f64 / labels.len() as f64
}

/// Average length of maximal runs of consecutive positives, counting only runs
/// of at least `min_run_length`. Zero when there is no such run.
pub fn mean_positive_run_length(labels: &[f64], min_run_length: usize) -> f64 {
    let mut runs = 0usize;
    let mut covered = 0usize;
    let mut current = 0usize;
    for &l in labels.iter().chain(std::iter::once(&0.0)) {
        if is_positive(l) {
            current += 1;
        } else {
            if current >= min_run_length && current > 0 {
                runs += 1;
                covered += current;
            }
            current = 0;
        }
    }
    if runs == 0 {
        0.0
    } else {
        covered as f64 / runs as f64
    }
}

/// `|mean feature[0] over positives - mean feature[0] over negatives|`, or 0
/// when either class is empty.
pub fn positive_feature_mean_gap(sample: &NoisySample) -> f64 {
    let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
    for (inst, &l) in sample.instances().iter().zip(sample.labels()) {
        if is_positive(l) {
            pos_sum += inst.features[0];
            pos_n += 1;
        } else {
            neg_sum += inst.features[0];
            neg_n += 1;
        }
    }
    if pos_n == 0 || neg_n == 0 {
        return 0.0;
    }
    (pos_sum / pos_n as f64 - neg_sum / neg_n as f64).abs()
}

/// Fraction of adjacent pairs whose hard labels differ; 0 for a single label.
pub fn boundary_density(labels: &[f64]) -> f64 {
    if labels.len() < 2 {
        return 0.0;
    }
    let changes = labels
        .windows(2)
        .filter(|w| is_positive(w[0]) != is_positive(w[1]))
        .count();
    changes as f64 / (labels.len() - 1) as f64
}

pub fn statistic(sample: &NoisySample, predicate: Predicate, params: &GroundingParams) -> f64 {
    match predicate {
        Predicate::PositiveRate => positive_rate(sample.labels()),
        Predicate::MeanPositiveRunLength => mean_positive_run_length(sample.labels(), params.min_run_length),
        Predicate::PositiveFeatureMeanGap => positive_feature_mean_gap(sample),
        Predicate::BoundaryDensity => boundary_density(sample.labels()),
    }
}

/// Extracts one asserted grounding per enabled predicate for every sample.
/// Ids run from 1 in (sample, predicate) order.
pub fn extract_groundings(samples: &[NoisySample], params: &GroundingParams) -> Result<GroundingSet> {
    params.validate()?;
    let mut next_id = 1u64;
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.is_empty() {
            return Err(Error::InvalidInput(format!("noisy sample {} is empty", sample.id())));
        }
        let mut groundings = Vec::with_capacity(params.predicates.len());
        for &predicate in &params.predicates {
            if predicate.needs_features() && sample.feature_dim() == 0 {
                return Err(Error::Config(format!(
                    "predicate {predicate} needs features but sample {} has none",
                    sample.id()
                )));
            }
            groundings.push(Grounding {
                id: next_id,
                source_sample: sample.id(),
                predicate,
                observed_value: statistic(sample, predicate, params),
                polarity: Polarity::Asserted,
            });
            next_id += 1;
        }
        out.push(SampleGroundings {
            sample_id: sample.id(),
            groundings,
        });
    }
    Ok(GroundingSet {
        samples: out,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(id: usize, labels: &[f64]) -> NoisySample {
        NoisySample::from_rows(
            id,
            labels.iter().enumerate().map(|(k, &l)| (100 * id as u64 + k as u64, vec![k as f64], l)),
        )
        .unwrap()
    }

    #[test]
    fn all_zero_labels() {
        let s = labelled(1, &[0.0; 6]);
        let params = GroundingParams {
            predicates: vec![Predicate::PositiveRate],
            ..Default::default()
        };
        let g = extract_groundings(std::slice::from_ref(&s), &params).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.samples[0].groundings[0].observed_value, 0.0);
        assert_eq!(mean_positive_run_length(s.labels(), 1), 0.0);
        assert_eq!(positive_feature_mean_gap(&s), 0.0);
    }

    #[test]
    fn worked_ten_label_example() {
        let labels = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        // Positives: 5 of 10. Transitions at (1,2), (3,4), (4,5), (7,8).
        assert_eq!(positive_rate(&labels), 0.5);
        assert_eq!(boundary_density(&labels), 4.0 / 9.0);
        // Runs of lengths 2, 1, 2.
        assert_eq!(mean_positive_run_length(&labels, 1), 5.0 / 3.0);
        assert_eq!(mean_positive_run_length(&labels, 2), 2.0);
        assert_eq!(mean_positive_run_length(&labels, 3), 0.0);
    }

    #[test]
    fn counts_per_sample() {
        let samples: Vec<_> = (1..=3).map(|d| labelled(d, &[1.0, 0.0, 1.0, 1.0])).collect();
        let g = extract_groundings(&samples, &GroundingParams::default()).unwrap();
        assert_eq!(g.len(), 12);
        for (s, sg) in samples.iter().zip(&g.samples) {
            assert_eq!(sg.groundings.len(), 4);
            assert!(sg.groundings.iter().all(|x| x.source_sample == s.id()));
            assert!(sg.groundings.iter().all(|x| x.polarity == Polarity::Asserted));
        }
        let ids: Vec<u64> = g.iter().map(|x| x.id).collect();
        assert_eq!(ids, (1..=12).collect::<Vec<_>>());
    }

    #[test]
    fn feature_gap() {
        // positives at features 0, 2; negatives at 1, 3
        let s = labelled(1, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(positive_feature_mean_gap(&s), 1.0);
    }

    #[test]
    fn featureless_data_rejects_feature_predicate() {
        let s = NoisySample::from_rows(1, [(1, vec![], 1.0), (2, vec![], 0.0)]).unwrap();
        let err = extract_groundings(std::slice::from_ref(&s), &GroundingParams::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let ok = GroundingParams {
            predicates: vec![Predicate::PositiveRate, Predicate::BoundaryDensity],
            ..Default::default()
        };
        assert_eq!(extract_groundings(&[s], &ok).unwrap().len(), 2);
    }

    #[test]
    fn knowledge_base_invariants() {
        let a = KnowledgeItem::new(1, Predicate::PositiveRate, 0.1, 0.4, 1.0).unwrap();
        let b = KnowledgeItem::new(1, Predicate::BoundaryDensity, 0.1, 0.4, 1.0).unwrap();
        let c = KnowledgeItem::new(2, Predicate::PositiveRate, 0.0, 1.0, 1.0).unwrap();
        assert!(KnowledgeBase::new(vec![a.clone(), b]).is_err());
        assert!(KnowledgeBase::new(vec![a, c]).is_err());
        assert!(KnowledgeBase::new(vec![]).is_err());
        assert!(KnowledgeItem::new(1, Predicate::PositiveRate, 0.5, 0.4, 1.0).is_err());
        assert!(KnowledgeItem::new(1, Predicate::PositiveRate, 0.1, 0.4, 0.0).is_err());
        assert!(KnowledgeItem::new(1, Predicate::PositiveRate, f64::NAN, 0.4, 1.0).is_err());
    }

    #[test]
    fn predicate_names_round_trip() {
        for p in Predicate::ALL {
            assert_eq!(p.name().parse::<Predicate>().unwrap(), p);
        }
        assert!("positive".parse::<Predicate>().is_err());
    }
}
