//! Instances, noisy samples and the pairwise diversity predicate.
//!
//! A noisy sample is one labeler's view: an ordered list of instances with a
//! label in `[0, 1]` for each. Two samples are *diverse* when they differ both
//! in the instances they cover and in how those instances were labelled. A
//! collection is accepted as diverse only if every pair is.

use std::collections::{BTreeMap, HashSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels at or above this value count as positive.
pub const HARD_LABEL_CUTOFF: f64 = 0.5;

#[inline]
pub fn is_positive(label: f64) -> bool {
    label >= HARD_LABEL_CUTOFF
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub features: Vec<f64>,
    /// Id of the noisy sample that owns this instance.
    pub sample_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    id: usize,
    instances: Vec<Instance>,
    labels: Vec<f64>,
}

impl NoisySample {
    pub fn new(id: usize, instances: Vec<Instance>, labels: Vec<f64>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidInput(format!("noisy sample {id} is empty")));
        }
        if instances.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "noisy sample {id} has {} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        let dim = instances[0].features.len();
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.features.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "instance {} has {} features, expected {dim}",
                    inst.id,
                    inst.features.len()
                )));
            }
            if inst.features.iter().any(|f| !f.is_finite()) {
                return Err(Error::InvalidInput(format!("instance {} has a non-finite feature", inst.id)));
            }
            if inst.sample_index != id {
                return Err(Error::InvalidInput(format!(
                    "instance {} belongs to sample {} but was placed in sample {id}",
                    inst.id, inst.sample_index
                )));
            }
            if !seen.insert(inst.id) {
                return Err(Error::InvalidInput(format!("duplicate instance id {} in sample {id}", inst.id)));
            }
        }
        if let Some(bad) = labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidInput(format!("label {bad} in sample {id} is outside [0, 1]")));
        }
        Ok(Self { id, instances, labels })
    }

    /// Builds a sample from `(instance id, features, label)` rows, stamping
    /// each instance with this sample's id.
    pub fn from_rows(id: usize, rows: impl IntoIterator<Item = (u64, Vec<f64>, f64)>) -> Result<Self> {
        let (instances, labels) = rows
            .into_iter()
            .map(|(iid, features, label)| {
                (
                    Instance {
                        id: iid,
                        features,
                        sample_index: id,
                    },
                    label,
                )
            })
            .unzip();
        Self::new(id, instances, labels)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.instances[0].features.len()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| is_positive(l)).count()
    }

    pub fn positive_rate(&self) -> f64 {
        self.positive_count() as f64 / self.len() as f64
    }

    /// Same instances, new labels.
    pub fn relabel(&self, labels: Vec<f64>) -> Result<Self> {
        Self::new(self.id, self.instances.clone(), labels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityParams {
    /// Minimum symmetric mean nearest-neighbour feature distance for two
    /// instance samples over the same ids to count as different.
    pub instance_threshold: f64,
    /// Minimum positive-rate gap (or shared-id disagreement rate) for two
    /// label samples to count as different.
    pub label_threshold: f64,
}

impl Default for DiversityParams {
    fn default() -> Self {
        Self {
            instance_threshold: 0.1,
            label_threshold: 0.05,
        }
    }
}

impl DiversityParams {
    pub fn validate(&self) -> Result<()> {
        if !self.instance_threshold.is_finite() || self.instance_threshold < 0.0 {
            return Err(Error::Config(format!(
                "instance_threshold must be finite and non-negative, got {}",
                self.instance_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.label_threshold) {
            return Err(Error::Config(format!(
                "label_threshold must lie in [0, 1], got {}",
                self.label_threshold
            )));
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_nearest_distance(from: &[Instance], to: &[Instance]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| euclidean(&a.features, &b.features))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Mean nearest-neighbour distance from `a` to `b`, averaged with the reverse
/// direction so the result is symmetric.
pub fn symmetric_nearest_distance(a: &NoisySample, b: &NoisySample) -> f64 {
    0.5 * (mean_nearest_distance(a.instances(), b.instances()) + mean_nearest_distance(b.instances(), a.instances()))
}

fn sorted_ids(s: &NoisySample) -> Vec<u64> {
    let mut ids: Vec<u64> = s.instances().iter().map(|i| i.id).collect();
    ids.sort_unstable();
    ids
}

/// 1 when the two instance samples differ, 0 otherwise.
pub fn differentiate_instances(a: &NoisySample, b: &NoisySample, params: &DiversityParams) -> Result<u8> {
    if a.feature_dim() != b.feature_dim() {
        return Err(Error::InvalidInput(format!(
            "samples {} and {} have feature dimensions {} and {}",
            a.id(),
            b.id(),
            a.feature_dim(),
            b.feature_dim()
        )));
    }
    if sorted_ids(a) != sorted_ids(b) {
        return Ok(1);
    }
    Ok(u8::from(symmetric_nearest_distance(a, b) > params.instance_threshold))
}

/// Fraction of shared instance ids whose hard labels disagree, or `None`
/// when the samples share no instance.
pub fn shared_disagreement_rate(a: &NoisySample, b: &NoisySample) -> Option<f64> {
    let b_labels: BTreeMap<u64, bool> = b
        .instances()
        .iter()
        .zip(b.labels())
        .map(|(inst, &l)| (inst.id, is_positive(l)))
        .collect();
    let (shared, disagree) = a
        .instances()
        .iter()
        .zip(a.labels())
        .filter_map(|(inst, &l)| b_labels.get(&inst.id).map(|&other| is_positive(l) != other))
        .fold((0usize, 0usize), |(s, d), differs| (s + 1, d + usize::from(differs)));
    (shared > 0).then(|| disagree as f64 / shared as f64)
}

/// 1 when the two label samples differ, 0 otherwise.
pub fn differentiate_labels(a: &NoisySample, b: &NoisySample, params: &DiversityParams) -> u8 {
    if (a.positive_rate() - b.positive_rate()).abs() > params.label_threshold {
        return 1;
    }
    match shared_disagreement_rate(a, b) {
        Some(rate) => u8::from(rate > params.label_threshold),
        None => 0,
    }
}

/// Diversity of two noisy samples: the product of the instance and label
/// differentiation results.
pub fn diversity(a: &NoisySample, b: &NoisySample, params: &DiversityParams) -> Result<u8> {
    Ok(differentiate_instances(a, b, params)? * differentiate_labels(a, b, params))
}

/// A collection of at least two noisy samples that are pairwise diverse.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiverseNoisySamples {
    samples: Vec<NoisySample>,
}

impl DiverseNoisySamples {
    pub fn samples(&self) -> &[NoisySample] {
        &self.samples
    }

    pub fn into_inner(self) -> Vec<NoisySample> {
        self.samples
    }
}

impl Deref for DiverseNoisySamples {
    type Target = [NoisySample];

    fn deref(&self) -> &[NoisySample] {
        &self.samples
    }
}

/// Checks every pair and returns the collection only if all pairs are
/// diverse. Offending pairs are reported by sample id.
pub fn validate_dns(samples: Vec<NoisySample>, params: &DiversityParams) -> Result<DiverseNoisySamples> {
    params.validate()?;
    if samples.len() < 2 {
        return Err(Error::TooFewSamples(samples.len()));
    }
    let mut ids = HashSet::new();
    for s in &samples {
        if !ids.insert(s.id()) {
            return Err(Error::InvalidInput(format!("duplicate sample id {}", s.id())));
        }
    }
    let dim = samples[0].feature_dim();
    if let Some(s) = samples.iter().find(|s| s.feature_dim() != dim) {
        return Err(Error::InvalidInput(format!(
            "sample {} has feature dimension {}, expected {dim}",
            s.id(),
            s.feature_dim()
        )));
    }
    let mut pairs = Vec::new();
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if diversity(a, b, params)? == 0 {
                pairs.push((a.id(), b.id()));
            }
        }
    }
    if !pairs.is_empty() {
        return Err(Error::DiversityViolation { pairs });
    }
    Ok(DiverseNoisySamples { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: usize, rows: &[(u64, f64, f64)]) -> NoisySample {
        NoisySample::from_rows(id, rows.iter().map(|&(i, f, l)| (i, vec![f, 0.0], l))).unwrap()
    }

    fn params(tau: f64, label: f64) -> DiversityParams {
        DiversityParams {
            instance_threshold: tau,
            label_threshold: label,
        }
    }

    fn rate_sample(id: usize, first_id: u64, n: usize, positives: usize) -> NoisySample {
        NoisySample::from_rows(
            id,
            (0..n).map(|k| (first_id + k as u64, vec![k as f64], if k < positives { 1.0 } else { 0.0 })),
        )
        .unwrap()
    }

    #[test]
    fn identical_samples_are_not_diverse() {
        let a = sample(1, &[(1, 0.0, 1.0), (2, 1.0, 0.0), (3, 2.0, 0.0)]);
        let p = params(0.1, 0.2);
        assert_eq!(differentiate_instances(&a, &a, &p).unwrap(), 0);
        assert_eq!(differentiate_labels(&a, &a, &p), 0);
        assert_eq!(diversity(&a, &a, &p).unwrap(), 0);
    }

    #[test]
    fn disjoint_ids_differ() {
        let a = sample(1, &[(1, 0.0, 1.0), (2, 1.0, 0.0)]);
        let b = sample(2, &[(3, 0.0, 1.0), (4, 1.0, 0.0)]);
        assert_eq!(differentiate_instances(&a, &b, &params(1e9, 0.2)).unwrap(), 1);
    }

    #[test]
    fn perturbed_features_exceed_threshold() {
        // Points 10 apart, each shifted by 2*tau: every nearest neighbour is
        // the shifted copy, so the symmetric mean distance is exactly 2*tau.
        let tau = 0.25;
        let rows: Vec<(u64, f64, f64)> = (0..8).map(|k| (k, 10.0 * k as f64, 0.0)).collect();
        let a = sample(1, &rows);
        let shifted: Vec<(u64, f64, f64)> = rows.iter().map(|&(i, f, l)| (i, f + 2.0 * tau, l)).collect();
        let b = sample(2, &shifted);
        let mut brute = 0.0;
        for x in a.instances() {
            let mut best = f64::INFINITY;
            for y in b.instances() {
                let d = ((x.features[0] - y.features[0]).powi(2) + (x.features[1] - y.features[1]).powi(2)).sqrt();
                best = best.min(d);
            }
            brute += best;
        }
        brute /= 8.0;
        assert!((brute - 2.0 * tau).abs() < 1e-12);
        assert!((symmetric_nearest_distance(&a, &b) - brute).abs() < 1e-12);
        assert_eq!(differentiate_instances(&a, &b, &params(tau, 0.2)).unwrap(), 1);
        assert_eq!(differentiate_instances(&a, &b, &params(3.0 * tau, 0.2)).unwrap(), 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = sample(1, &[(1, 0.0, 1.0)]);
        let b = NoisySample::from_rows(2, [(1, vec![0.0], 1.0)]).unwrap();
        assert!(matches!(
            differentiate_instances(&a, &b, &params(0.1, 0.1)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn positive_rate_gap() {
        let a = rate_sample(1, 0, 10, 1);
        let b = rate_sample(2, 100, 10, 6);
        assert_eq!(differentiate_labels(&a, &b, &params(0.1, 0.2)), 1);
    }

    #[test]
    fn shared_id_disagreement() {
        // Positive rates 0.5 vs 0.6, but labels disagree on 3 of 10 shared ids.
        let la = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let lb = [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let disagreements = la.iter().zip(&lb).filter(|(x, y)| (**x >= 0.5) != (**y >= 0.5)).count();
        assert_eq!(disagreements, 3);
        let a = NoisySample::from_rows(1, (0..10).map(|k| (k as u64, vec![k as f64], la[k]))).unwrap();
        let b = NoisySample::from_rows(2, (0..10).map(|k| (k as u64, vec![k as f64], lb[k]))).unwrap();
        assert!((a.positive_rate() - b.positive_rate()).abs() <= 0.2);
        assert_eq!(shared_disagreement_rate(&a, &b), Some(0.3));
        assert_eq!(differentiate_labels(&a, &b, &params(0.1, 0.2)), 1);
    }

    #[test]
    fn same_instances_different_labels_is_not_diverse() {
        let a = rate_sample(1, 0, 10, 1);
        let b = a.relabel(vec![1.0; 10]).unwrap();
        let p = params(0.1, 0.2);
        assert_eq!(differentiate_labels(&a, &b, &p), 1);
        assert_eq!(diversity(&a, &b, &p).unwrap(), 0);
    }

    #[test]
    fn validate_accepts_diverse_collection() {
        let samples = vec![rate_sample(1, 0, 10, 1), rate_sample(2, 100, 10, 4), rate_sample(3, 200, 10, 8)];
        let dns = validate_dns(samples, &params(0.1, 0.2)).unwrap();
        assert_eq!(dns.len(), 3);
    }

    #[test]
    fn validate_names_duplicate_pair() {
        let a = rate_sample(1, 0, 10, 1);
        let b = rate_sample(2, 100, 10, 8);
        let dup = NoisySample::from_rows(3, a.instances().iter().zip(a.labels()).map(|(i, &l)| (i.id, i.features.clone(), l)))
            .unwrap();
        match validate_dns(vec![a, b, dup], &params(0.1, 0.2)) {
            Err(Error::DiversityViolation { pairs }) => assert_eq!(pairs, vec![(1, 3)]),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn validate_needs_two_samples() {
        let a = rate_sample(1, 0, 10, 1);
        assert!(matches!(validate_dns(vec![a], &params(0.1, 0.2)), Err(Error::TooFewSamples(1))));
    }

    #[test]
    fn construction_rejects_bad_samples() {
        assert!(NoisySample::from_rows(1, Vec::new()).is_err());
        assert!(NoisySample::from_rows(1, [(1, vec![0.0], 1.5)]).is_err());
        assert!(NoisySample::from_rows(1, [(1, vec![0.0], 1.0), (1, vec![0.0], 0.0)]).is_err());
        assert!(NoisySample::from_rows(1, [(1, vec![0.0], 1.0), (2, vec![0.0, 1.0], 0.0)]).is_err());
    }
}
