//! Knowledge-consistent target construction and per-instance rearrangement.
//!
//! Each noisy sample yields `targets_per_sample` relabelings whose positive
//! counts span the admissible positive-rate interval, from the lower bound
//! (`Under`) to the upper bound (`Over`). Positives are chosen by a confidence
//! ranking: noisy positives first, each group ordered by descending
//! `feature[0]`. The targets of all samples are then regrouped so every
//! instance carries exactly `p` target values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeBase, Polarity, Predicate};
use crate::learner::Example;
use crate::reasoning::RevisedGroundingSet;
use crate::sample::{is_positive, Instance, NoisySample};

/// Slack when converting rate bounds into integer counts, so that products
/// such as `0.35 * 2000` do not floor to 699.
const COUNT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    Under,
    /// Interior level `j` of `1..targets_per_sample - 1`.
    Intermediate(u32),
    Over,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbducedTarget {
    pub target_id: u64,
    pub source_sample: usize,
    pub bias: Bias,
    /// Aligned with the source sample's instance order.
    pub labels: Vec<f64>,
    pub positive_count: usize,
    /// Positive rate from the revised groundings (corrective value when the
    /// original was negated).
    pub repaired_positive_rate: f64,
    /// Revised groundings consulted for this target.
    pub revised_groundings_used: usize,
    /// Instances consulted for this target.
    pub instances_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetParams {
    pub targets_per_sample: usize,
}

impl Default for TargetParams {
    fn default() -> Self {
        Self { targets_per_sample: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub targets: Vec<AbducedTarget>,
    pub params: TargetParams,
    /// Samples too small for the count bounds to land inside the interval.
    pub degenerate_samples: Vec<usize>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn score(inst: &Instance) -> f64 {
    inst.features.first().copied().unwrap_or(0.0)
}

/// Instance positions in confidence order: noisy positives before noisy
/// negatives, each by descending `feature[0]`, ties by position.
pub fn confidence_ranking(sample: &NoisySample) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    let insts = sample.instances();
    let labels = sample.labels();
    order.sort_by(|&a, &b| {
        is_positive(labels[b])
            .cmp(&is_positive(labels[a]))
            .then_with(|| score(&insts[b]).total_cmp(&score(&insts[a])))
            .then(a.cmp(&b))
    });
    order
}

/// Positive counts `(under, over, degenerate)` for a sample of size `n`.
pub fn count_bounds(lo: f64, hi: f64, n: usize) -> (usize, usize, bool) {
    let nf = n as f64;
    let lo_count = ((lo * nf - COUNT_EPS).ceil().max(0.0) as usize).min(n);
    let hi_count = ((hi * nf + COUNT_EPS).floor().max(0.0) as usize).min(n);
    if lo_count <= hi_count {
        (lo_count, hi_count, false)
    } else {
        (hi_count, lo_count, true)
    }
}

fn level_counts(under: usize, over: usize, k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![under];
    }
    let span = (over - under) as f64;
    (0..k)
        .map(|j| under + (span * j as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

fn bias_for(j: usize, k: usize) -> Bias {
    if j == 0 {
        Bias::Under
    } else if j + 1 == k {
        Bias::Over
    } else {
        Bias::Intermediate(j as u32)
    }
}

pub fn abduce_targets(
    rg: &RevisedGroundingSet,
    samples: &[NoisySample],
    kb: &KnowledgeBase,
    params: &TargetParams,
) -> Result<TargetSet> {
    if params.targets_per_sample == 0 {
        return Err(Error::Config("targets_per_sample must be at least 1".into()));
    }
    let item = kb
        .item_for(Predicate::PositiveRate)
        .ok_or_else(|| Error::Config("knowledge base has no positive_rate item".into()))?;
    let k = params.targets_per_sample;
    let mut targets = Vec::with_capacity(samples.len() * k);
    let mut degenerate_samples = Vec::new();
    let mut next_id = 1u64;
    for sample in samples {
        let revisions = rg.for_sample(sample.id()).ok_or_else(|| {
            Error::InvalidInput(format!("no revised groundings for sample {}", sample.id()))
        })?;
        let repaired_positive_rate = revisions
            .entries
            .iter()
            .map(|r| r.grounding())
            .find(|g| g.predicate == Predicate::PositiveRate && g.polarity == Polarity::Asserted)
            .map_or_else(|| sample.positive_rate(), |g| g.observed_value);

        let n = sample.len();
        let (under, over, degenerate) = count_bounds(item.admissible_lo, item.admissible_hi, n);
        if degenerate {
            degenerate_samples.push(sample.id());
        }
        let ranking = confidence_ranking(sample);
        for (j, count) in level_counts(under, over, k).into_iter().enumerate() {
            let mut labels = vec![0.0; n];
            for &pos in &ranking[..count] {
                labels[pos] = 1.0;
            }
            targets.push(AbducedTarget {
                target_id: next_id,
                source_sample: sample.id(),
                bias: bias_for(j, k),
                labels,
                positive_count: count,
                repaired_positive_rate,
                revised_groundings_used: revisions.entries.len(),
                instances_used: n,
            });
            next_id += 1;
        }
    }
    Ok(TargetSet {
        targets,
        params: *params,
        degenerate_samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceTargets {
    pub instance: Instance,
    /// `p` target values in (bias, target id) order.
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RearrangedTargets {
    pub p: usize,
    pub entries: Vec<InstanceTargets>,
}

impl RearrangedTargets {
    /// Number of instances `n`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn examples(&self) -> Vec<Example> {
        self.entries
            .iter()
            .map(|e| Example {
                features: e.instance.features.clone(),
                targets: e.targets.clone(),
            })
            .collect()
    }
}

pub fn rearrange_targets(t: &TargetSet, samples: &[NoisySample]) -> Result<RearrangedTargets> {
    let d = samples.len();
    if d == 0 {
        return Err(Error::InvalidInput("no noisy samples to rearrange targets over".into()));
    }
    let m = t.targets.len();
    if !m.is_multiple_of(d) {
        return Err(Error::Rearrangement(format!(
            "{m} targets cannot be split evenly over {d} samples"
        )));
    }
    let p = m / d;
    if p <= 1 {
        return Err(Error::Rearrangement(format!(
            "each instance needs more than one target, got p = {p}"
        )));
    }
    if let Some(orphan) = t.targets.iter().find(|x| samples.iter().all(|s| s.id() != x.source_sample)) {
        return Err(Error::InvalidInput(format!(
            "target {} refers to unknown sample {}",
            orphan.target_id, orphan.source_sample
        )));
    }

    let mut entries = Vec::with_capacity(samples.iter().map(NoisySample::len).sum());
    for sample in samples {
        let mut group: Vec<&AbducedTarget> =
            t.targets.iter().filter(|x| x.source_sample == sample.id()).collect();
        if group.len() != p {
            return Err(Error::Rearrangement(format!(
                "sample {} has {} targets, expected {p}",
                sample.id(),
                group.len()
            )));
        }
        group.sort_by(|a, b| match a.bias.cmp(&b.bias) {
            Ordering::Equal => a.target_id.cmp(&b.target_id),
            other => other,
        });
        if let Some(bad) = group.iter().find(|x| x.labels.len() != sample.len()) {
            return Err(Error::InvalidInput(format!(
                "target {} has {} labels for a sample of {} instances",
                bad.target_id,
                bad.labels.len(),
                sample.len()
            )));
        }
        for (pos, inst) in sample.instances().iter().enumerate() {
            entries.push(InstanceTargets {
                instance: inst.clone(),
                targets: group.iter().map(|x| x.labels[pos]).collect(),
            });
        }
    }
    Ok(RearrangedTargets { p, entries })
}
