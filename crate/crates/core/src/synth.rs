//! Synthetic task with known ground truth: several labelers, each flipping
//! the true labels of its own fresh instances at a different rate, plus a
//! knowledge base derived from the generative parameters with some slack.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeBase, KnowledgeItem, Predicate};
use crate::sample::{Instance, NoisySample};

/// Half-width of the knowledge intervals on rate-like predicates.
pub const RATE_SLACK: f64 = 0.05;
/// Half-width of the knowledge intervals on length and gap predicates.
pub const SCALE_SLACK: f64 = 0.25;

/// Sample id given to the clean held-out split.
pub const TEST_SAMPLE_ID: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub flip_0_to_1: f64,
    pub flip_1_to_0: f64,
}

impl NoiseProfile {
    /// Expected positive rate of labels produced under this profile.
    pub fn expected_positive_rate(&self, truth_rate: f64) -> f64 {
        truth_rate * (1.0 - self.flip_1_to_0) + (1.0 - truth_rate) * self.flip_0_to_1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub n_per_sample: Vec<usize>,
    pub feature_dim: usize,
    /// Gap between the class means of `feature[0]`.
    pub signal_separation: f64,
    pub truth_positive_rate: f64,
    pub noise_profiles: Vec<NoiseProfile>,
    /// Size of the clean test split relative to the total training size.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl TaskSpec {
    pub fn d(&self) -> usize {
        self.n_per_sample.len()
    }

    pub fn total_n(&self) -> usize {
        self.n_per_sample.iter().sum()
    }

    pub fn test_size(&self) -> usize {
        (self.test_fraction * self.total_n() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d() < 2 {
            return fail(format!("task needs at least 2 noisy samples, got {}", self.d()));
        }
        if self.noise_profiles.len() != self.d() {
            return fail(format!(
                "{} noise profiles for {} samples",
                self.noise_profiles.len(),
                self.d()
            ));
        }
        if self.n_per_sample.contains(&0) {
            return fail("every noisy sample needs at least one instance".into());
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be at least 1".into());
        }
        if !self.signal_separation.is_finite() {
            return fail("signal_separation must be finite".into());
        }
        if !(self.truth_positive_rate > 0.0 && self.truth_positive_rate < 1.0) {
            return fail(format!(
                "truth_positive_rate must lie in (0, 1), got {}",
                self.truth_positive_rate
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return fail(format!("test_fraction must lie in (0, 1], got {}", self.test_fraction));
        }
        for p in &self.noise_profiles {
            if !(0.0..1.0).contains(&p.flip_0_to_1) || !(0.0..1.0).contains(&p.flip_1_to_0) {
                return fail(format!("flip rates must lie in [0, 1): {p:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTask {
    /// Noisy training samples, ids `1..=d`.
    pub samples: Vec<NoisySample>,
    /// Clean held-out split labelled with the truth, id [`TEST_SAMPLE_ID`].
    pub test: NoisySample,
    /// True label of every generated instance, training and test.
    pub truth: BTreeMap<u64, u8>,
    pub kb: KnowledgeBase,
    pub spec: TaskSpec,
    pub seed: u64,
}

/// Knowledge base centred on the statistics the true labels would show.
pub fn derive_knowledge_base(spec: &TaskSpec) -> Result<KnowledgeBase> {
    let r = spec.truth_positive_rate;
    let around = |centre: f64, slack: f64| ((centre - slack).max(0.0), centre + slack);
    let (rate_lo, rate_hi) = around(r, RATE_SLACK);
    let (run_lo, run_hi) = around(1.0 / (1.0 - r), SCALE_SLACK);
    let (gap_lo, gap_hi) = around(spec.signal_separation.abs(), SCALE_SLACK);
    let (bd_lo, bd_hi) = around(2.0 * r * (1.0 - r), RATE_SLACK);
    KnowledgeBase::new(vec![
        KnowledgeItem::new(1, Predicate::PositiveRate, rate_lo, rate_hi.min(1.0), 1.0)?,
        KnowledgeItem::new(2, Predicate::MeanPositiveRunLength, run_lo, run_hi, 1.0)?,
        KnowledgeItem::new(3, Predicate::PositiveFeatureMeanGap, gap_lo, gap_hi, 1.0)?,
        KnowledgeItem::new(4, Predicate::BoundaryDensity, bd_lo, bd_hi.min(1.0), 1.0)?,
    ])
}

struct Generator<'a> {
    spec: &'a TaskSpec,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl Generator<'_> {
    /// Returns `(instance, true label)`.
    fn draw(&mut self, sample_index: usize) -> (Instance, u8) {
        let y = u8::from(self.rng.random::<f64>() < self.spec.truth_positive_rate);
        let half = 0.5 * self.spec.signal_separation;
        let mean = if y == 1 { half } else { -half };
        let features = (0..self.spec.feature_dim)
            .map(|k| {
                let z: f64 = self.rng.sample(StandardNormal);
                if k == 0 {
                    mean + z
                } else {
                    z
                }
            })
            .collect();
        let id = self.next_id;
        self.next_id += 1;
        (
            Instance {
                id,
                features,
                sample_index,
            },
            y,
        )
    }
}

/// Deterministic in `(spec, seed)`. Each labeler gets its own fresh
/// instances; instance ids are unique over the whole task.
pub fn generate_task(spec: &TaskSpec, seed: u64) -> Result<GeneratedTask> {
    spec.validate()?;
    let mut gen = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        next_id: 1,
    };
    let mut truth = BTreeMap::new();
    let mut samples = Vec::with_capacity(spec.d());
    for (k, (&n, profile)) in spec.n_per_sample.iter().zip(&spec.noise_profiles).enumerate() {
        let sample_id = k + 1;
        let mut instances = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (inst, y) = gen.draw(sample_id);
            let flip = if y == 1 { profile.flip_1_to_0 } else { profile.flip_0_to_1 };
            let flipped = gen.rng.random::<f64>() < flip;
            labels.push(f64::from(y ^ u8::from(flipped)));
            truth.insert(inst.id, y);
            instances.push(inst);
        }
        samples.push(NoisySample::new(sample_id, instances, labels)?);
    }
    let mut instances = Vec::with_capacity(spec.test_size());
    let mut labels = Vec::with_capacity(spec.test_size());
    for _ in 0..spec.test_size().max(1) {
        let (inst, y) = gen.draw(TEST_SAMPLE_ID);
        truth.insert(inst.id, y);
        labels.push(f64::from(y));
        instances.push(inst);
    }
    Ok(GeneratedTask {
        samples,
        test: NoisySample::new(TEST_SAMPLE_ID, instances, labels)?,
        truth,
        kb: derive_knowledge_base(spec)?,
        spec: spec.clone(),
        seed,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
}

impl Metrics {
    /// Precision and recall default to 1 when their denominator is 0; F1 is 0
    /// when both are 0.
    pub fn from_counts(counts: Confusion) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy: (counts.tp + counts.tn) as f64 / counts.total() as f64,
            precision,
            recall,
            f1,
            counts,
        }
    }
}

/// Thresholds `predicted` probabilities and scores them against `truth`.
pub fn evaluate(predicted: &[(u64, f64)], truth: &BTreeMap<u64, u8>, threshold: f64) -> Result<Metrics> {
    if predicted.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }
    let mut c = Confusion::default();
    for &(id, prob) in predicted {
        let y = *truth
            .get(&id)
            .ok_or_else(|| Error::InvalidInput(format!("no truth entry for instance {id}")))?;
        match (prob >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(profiles: &[(f64, f64)], n: usize) -> TaskSpec {
        TaskSpec {
            n_per_sample: vec![n; profiles.len()],
            feature_dim: 2,
            signal_separation: 2.0,
            truth_positive_rate: 0.3,
            noise_profiles: profiles
                .iter()
                .map(|&(a, b)| NoiseProfile {
                    flip_0_to_1: a,
                    flip_1_to_0: b,
                })
                .collect(),
            test_fraction: 0.2,
        }
    }

    #[test]
    fn no_flips_reproduce_truth() {
        let task = generate_task(&spec(&[(0.0, 0.0), (0.0, 0.0)], 200), 1).unwrap();
        for sample in &task.samples {
            for (inst, &l) in sample.instances().iter().zip(sample.labels()) {
                assert_eq!(l, f64::from(task.truth[&inst.id]));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(&[(0.3, 0.0), (0.0, 0.3)], 100);
        assert_eq!(generate_task(&s, 9).unwrap(), generate_task(&s, 9).unwrap());
        assert_ne!(generate_task(&s, 9).unwrap().samples, generate_task(&s, 10).unwrap().samples);
    }

    #[test]
    fn ids_are_unique_and_truth_is_complete() {
        let s = spec(&[(0.3, 0.0), (0.0, 0.3), (0.1, 0.1)], 50);
        let task = generate_task(&s, 4).unwrap();
        let n_train: usize = task.samples.iter().map(NoisySample::len).sum();
        assert_eq!(task.test.len(), 30);
        assert_eq!(task.truth.len(), n_train + task.test.len());
        assert_eq!(task.samples.iter().map(NoisySample::id).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn knowledge_base_brackets_truth_rate() {
        let kb = derive_knowledge_base(&spec(&[(0.3, 0.0), (0.0, 0.3)], 10)).unwrap();
        let item = kb.item_for(Predicate::PositiveRate).unwrap();
        assert!((item.admissible_lo - 0.25).abs() < 1e-12 && (item.admissible_hi - 0.35).abs() < 1e-12);
        assert_eq!(kb.items().len(), 4);
    }

    #[test]
    fn perfect_predictions() {
        let truth: BTreeMap<u64, u8> = [(1, 1), (2, 0), (3, 1)].into_iter().collect();
        let pred: Vec<(u64, f64)> = truth.iter().map(|(&k, &v)| (k, f64::from(v))).collect();
        let m = evaluate(&pred, &truth, 0.5).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_predictions() {
        let truth: BTreeMap<u64, u8> = [(1, 1), (2, 0), (3, 1)].into_iter().collect();
        let pred: Vec<(u64, f64)> = truth.keys().map(|&k| (k, 0.0)).collect();
        let m = evaluate(&pred, &truth, 0.5).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.precision, 1.0);
    }

    #[test]
    fn worked_confusion_counts() {
        let m = Metrics::from_counts(Confusion {
            tp: 3,
            fp: 1,
            tn: 0,
            fn_: 2,
        });
        let (p, r) = (3.0 / 4.0, 3.0 / 5.0);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
        assert!((m.f1 - 0.666667).abs() < 1e-6);
    }

    #[test]
    fn missing_truth_entry() {
        let truth: BTreeMap<u64, u8> = [(1, 1)].into_iter().collect();
        assert!(matches!(evaluate(&[(2, 0.9)], &truth, 0.5), Err(Error::InvalidInput(_))));
    }
}
