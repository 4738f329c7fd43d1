//! Brute-force oracles and random fixtures shared by the property tests and
//! the acceptance runner. Oracles are written independently of the library
//! code they check: nested loops instead of maps and sorts.

#![allow(dead_code)]

use abductive_mtl::knowledge::{
    Grounding, GroundingParams, GroundingSet, KnowledgeBase, KnowledgeItem, Polarity, Predicate, SampleGroundings,
};
use abductive_mtl::learner::{joint_loss, BaseLoss, Example, LossConfig, ModelParams};
use abductive_mtl::learner::Architecture;
use abductive_mtl::sample::{DiversityParams, NoisySample};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

// ---------------------------------------------------------------- fixtures

/// Features on a coarse grid so that ties and exact repeats are common.
fn grid_value(rng: &mut Rng8) -> f64 {
    f64::from(rng.random_range(-6i32..=6)) * 0.25
}

fn label(rng: &mut Rng8) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random::<f64>(),
        1 | 2 => f64::from(rng.random_range(0..=1u8)),
        _ => 0.5,
    }
}

pub fn sample_with_ids(rng: &mut Rng8, id: usize, ids: &[u64], dim: usize) -> NoisySample {
    let rows: Vec<(u64, Vec<f64>, f64)> = ids
        .iter()
        .map(|&i| (i, (0..dim).map(|_| grid_value(rng)).collect(), label(rng)))
        .collect();
    NoisySample::from_rows(id, rows).expect("fixture rows are valid")
}

pub fn random_sample(rng: &mut Rng8, id: usize, max_n: usize, dim: usize) -> NoisySample {
    let n = rng.random_range(1..=max_n);
    let mut pool: Vec<u64> = (1..=(2 * max_n as u64)).collect();
    pool.shuffle(rng);
    sample_with_ids(rng, id, &pool[..n], dim)
}

/// A second sample related to `a` in one of several ways: identical, same
/// instances with new labels, same instances with moved features, partly
/// overlapping ids, or unrelated.
pub fn related_sample(rng: &mut Rng8, a: &NoisySample, id: usize) -> NoisySample {
    let dim = a.feature_dim();
    let mut rows: Vec<(u64, Vec<f64>, f64)> = a
        .instances()
        .iter()
        .zip(a.labels())
        .map(|(i, &l)| (i.id, i.features.clone(), l))
        .collect();
    match rng.random_range(0..6) {
        0 => {}
        1 => {
            for r in &mut rows {
                if rng.random_bool(0.3) {
                    r.2 = 1.0 - r.2;
                }
            }
        }
        2 => {
            let shift = f64::from(rng.random_range(0..4)) * 0.1;
            for r in &mut rows {
                r.1[0] += shift;
                if rng.random_bool(0.2) {
                    r.2 = 1.0 - r.2;
                }
            }
        }
        3 => {
            rows.shuffle(rng);
            let keep = rng.random_range(1..=rows.len());
            rows.truncate(keep);
            let fresh = a.instances().iter().map(|i| i.id).max().unwrap_or(0) + 1;
            rows.push((fresh, (0..dim).map(|_| grid_value(rng)).collect(), label(rng)));
        }
        4 => {
            rows.shuffle(rng);
            for r in &mut rows {
                r.2 = label(rng);
            }
        }
        _ => return random_sample(rng, id, a.len().max(2), dim),
    }
    NoisySample::from_rows(id, rows).expect("related rows are valid")
}

pub fn random_diversity_params(rng: &mut Rng8) -> DiversityParams {
    DiversityParams {
        instance_threshold: f64::from(rng.random_range(0..4)) * 0.1,
        label_threshold: f64::from(rng.random_range(0..5)) * 0.05,
    }
}

// ---------------------------------------------------------------- diversity

pub fn is_pos(l: f64) -> bool {
    l >= 0.5
}

fn count_id(s: &NoisySample, id: u64) -> usize {
    let mut c = 0;
    for inst in s.instances() {
        if inst.id == id {
            c += 1;
        }
    }
    c
}

fn same_id_multiset(a: &NoisySample, b: &NoisySample) -> bool {
    if a.len() != b.len() {
        return false;
    }
    for inst in a.instances() {
        if count_id(a, inst.id) != count_id(b, inst.id) {
            return false;
        }
    }
    true
}

fn one_way_nn(from: &NoisySample, to: &NoisySample) -> f64 {
    let mut total = 0.0;
    for x in from.instances() {
        let mut best = f64::INFINITY;
        for y in to.instances() {
            let mut sq = 0.0;
            for k in 0..x.features.len() {
                sq += (x.features[k] - y.features[k]) * (x.features[k] - y.features[k]);
            }
            let d = sq.sqrt();
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / from.len() as f64
}

pub fn oracle_instances_differ(a: &NoisySample, b: &NoisySample, p: &DiversityParams) -> u8 {
    if !same_id_multiset(a, b) {
        return 1;
    }
    let d = 0.5 * (one_way_nn(a, b) + one_way_nn(b, a));
    u8::from(d > p.instance_threshold)
}

fn rate(s: &NoisySample) -> f64 {
    let mut c = 0usize;
    for &l in s.labels() {
        if is_pos(l) {
            c += 1;
        }
    }
    c as f64 / s.len() as f64
}

pub fn oracle_labels_differ(a: &NoisySample, b: &NoisySample, p: &DiversityParams) -> u8 {
    if (rate(a) - rate(b)).abs() > p.label_threshold {
        return 1;
    }
    let (mut shared, mut disagree) = (0usize, 0usize);
    for (i, x) in a.instances().iter().enumerate() {
        for (j, y) in b.instances().iter().enumerate() {
            if x.id == y.id {
                shared += 1;
                if is_pos(a.labels()[i]) != is_pos(b.labels()[j]) {
                    disagree += 1;
                }
            }
        }
    }
    if shared == 0 {
        return 0;
    }
    u8::from(disagree as f64 / shared as f64 > p.label_threshold)
}

pub fn oracle_diversity(a: &NoisySample, b: &NoisySample, p: &DiversityParams) -> u8 {
    oracle_instances_differ(a, b, p) * oracle_labels_differ(a, b, p)
}

/// Pairs (by sample id) that fail the diversity requirement.
pub fn oracle_failing_pairs(samples: &[NoisySample], p: &DiversityParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            if oracle_diversity(&samples[i], &samples[j], p) == 0 {
                out.push((samples[i].id(), samples[j].id()));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- statistics

pub fn oracle_positive_rate(labels: &[f64]) -> f64 {
    let mut c = 0usize;
    for &l in labels {
        c += usize::from(is_pos(l));
    }
    c as f64 / labels.len() as f64
}

/// Enumerates maximal runs by their start and end positions.
pub fn oracle_run_length(labels: &[f64], min_run: usize) -> f64 {
    let n = labels.len();
    let (mut runs, mut covered) = (0usize, 0usize);
    for start in 0..n {
        if !is_pos(labels[start]) || (start > 0 && is_pos(labels[start - 1])) {
            continue;
        }
        let mut end = start;
        while end + 1 < n && is_pos(labels[end + 1]) {
            end += 1;
        }
        let len = end - start + 1;
        if len >= min_run {
            runs += 1;
            covered += len;
        }
    }
    if runs == 0 {
        0.0
    } else {
        covered as f64 / runs as f64
    }
}

pub fn oracle_feature_gap(s: &NoisySample) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (inst, &l) in s.instances().iter().zip(s.labels()) {
        if is_pos(l) {
            pos.push(inst.features[0]);
        } else {
            neg.push(inst.features[0]);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let mut ps = 0.0;
    for v in &pos {
        ps += v;
    }
    let mut ns = 0.0;
    for v in &neg {
        ns += v;
    }
    (ps / pos.len() as f64 - ns / neg.len() as f64).abs()
}

pub fn oracle_boundary_density(labels: &[f64]) -> f64 {
    if labels.len() < 2 {
        return 0.0;
    }
    let mut changes = 0usize;
    for i in 1..labels.len() {
        if is_pos(labels[i]) != is_pos(labels[i - 1]) {
            changes += 1;
        }
    }
    changes as f64 / (labels.len() - 1) as f64
}

pub fn oracle_statistic(s: &NoisySample, p: Predicate, params: &GroundingParams) -> f64 {
    match p {
        Predicate::PositiveRate => oracle_positive_rate(s.labels()),
        Predicate::MeanPositiveRunLength => oracle_run_length(s.labels(), params.min_run_length),
        Predicate::PositiveFeatureMeanGap => oracle_feature_gap(s),
        Predicate::BoundaryDensity => oracle_boundary_density(s.labels()),
    }
}

pub fn random_grounding_params(rng: &mut Rng8) -> GroundingParams {
    let mut predicates = Predicate::ALL.to_vec();
    predicates.shuffle(rng);
    predicates.truncate(rng.random_range(1..=predicates.len()));
    GroundingParams {
        predicates,
        min_run_length: rng.random_range(1..=3),
    }
}

// ---------------------------------------------------------------- reasoning

pub fn random_kb(rng: &mut Rng8) -> KnowledgeBase {
    let mut preds = Predicate::ALL.to_vec();
    preds.shuffle(rng);
    preds.truncate(rng.random_range(1..=preds.len()));
    let items = preds
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let lo = f64::from(rng.random_range(0..8)) * 0.125;
            let hi = lo + f64::from(rng.random_range(0..5)) * 0.125;
            let w = [0.5, 1.0, 2.0, 3.0][rng.random_range(0..4)];
            KnowledgeItem::new(k as u32 + 1, p, lo, hi, w).expect("valid item")
        })
        .collect();
    KnowledgeBase::new(items).expect("valid kb")
}

/// Random asserted groundings, not tied to any data, with values from a
/// grid that straddles typical intervals.
pub fn random_grounding_set(rng: &mut Rng8) -> GroundingSet {
    let d = rng.random_range(1..=5);
    let params = random_grounding_params(rng);
    let mut next = rng.random_range(1..=50u64);
    let samples = (1..=d)
        .map(|sid| SampleGroundings {
            sample_id: sid,
            groundings: params
                .predicates
                .iter()
                .map(|&predicate| {
                    next += 1;
                    Grounding {
                        id: next,
                        source_sample: sid,
                        predicate,
                        observed_value: f64::from(rng.random_range(-4..16)) * 0.1,
                        polarity: Polarity::Asserted,
                    }
                })
                .collect(),
        })
        .collect();
    GroundingSet { samples, params }
}

pub fn oracle_violations(sg: &SampleGroundings, kb: &KnowledgeBase, tol: f64) -> usize {
    let mut c = 0;
    for g in &sg.groundings {
        for item in kb.items() {
            if item.predicate == g.predicate && g.polarity == Polarity::Asserted {
                let m = item.weight * f64::max(0.0, f64::max(item.admissible_lo - g.observed_value, g.observed_value - item.admissible_hi));
                if m > tol {
                    c += 1;
                }
            }
        }
    }
    c
}

// ---------------------------------------------------------------- targets

/// Samples with hard labels and distinct ids across the collection.
pub fn hard_samples(rng: &mut Rng8, d: usize, max_n: usize) -> Vec<NoisySample> {
    let mut next = 1u64;
    (1..=d)
        .map(|sid| {
            let n = rng.random_range(1..=max_n);
            let rows: Vec<(u64, Vec<f64>, f64)> = (0..n)
                .map(|_| {
                    next += 1;
                    (next, vec![grid_value(rng), grid_value(rng)], f64::from(rng.random_range(0..=1u8)))
                })
                .collect();
            NoisySample::from_rows(sid, rows).expect("valid rows")
        })
        .collect()
}

pub fn rate_kb(lo: f64, hi: f64) -> KnowledgeBase {
    KnowledgeBase::new(vec![KnowledgeItem::new(1, Predicate::PositiveRate, lo, hi, 1.0).expect("item")]).expect("kb")
}

/// Positions that an exhaustive comparison places in the top `k`: a
/// position belongs there iff fewer than `k` positions beat it.
pub fn oracle_top_positions(s: &NoisySample, k: usize) -> Vec<usize> {
    let beats = |i: usize, j: usize| {
        let (pi, pj) = (is_pos(s.labels()[i]), is_pos(s.labels()[j]));
        let (fi, fj) = (s.instances()[i].features[0], s.instances()[j].features[0]);
        (pi && !pj) || (pi == pj && (fi > fj || (fi == fj && i < j)))
    };
    (0..s.len())
        .filter(|&j| (0..s.len()).filter(|&i| i != j && beats(i, j)).count() < k)
        .collect()
}

// ---------------------------------------------------------------- learner

pub fn random_model(rng: &mut Rng8, arch: Architecture, dim: usize) -> ModelParams {
    let n = ModelParams::zeros(arch, dim).num_params();
    let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    ModelParams::from_flat(arch, dim, &flat).expect("flat size matches")
}

pub fn random_alphas(rng: &mut Rng8, p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut a: Vec<f64> = raw.iter().map(|v| v / sum).collect();
    // Push the rounding residue into the last weight.
    let head: f64 = a[..p - 1].iter().sum();
    a[p - 1] = 1.0 - head;
    a
}

pub fn random_batch(rng: &mut Rng8, dim: usize, p: usize, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| Example {
            features: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            targets: (0..p).map(|_| rng.random::<f64>()).collect(),
        })
        .collect()
}

/// Mean joint loss by direct summation, independent of the library's batch
/// code.
pub fn oracle_mean_loss(params: &ModelParams, batch: &[Example], loss: &LossConfig) -> f64 {
    let mut total = 0.0;
    for ex in batch {
        let t = params.predict_features(&ex.features).expect("dims match");
        total += joint_loss(t, &ex.targets, loss).expect("targets match");
    }
    total / batch.len() as f64
}

/// Central finite-difference gradient of the mean joint loss.
pub fn finite_difference(params: &ModelParams, batch: &[Example], loss: &LossConfig, step: f64) -> Vec<f64> {
    let flat = params.to_flat();
    let arch = params.architecture();
    let dim = params.input_dim();
    (0..flat.len())
        .map(|k| {
            let mut up = flat.clone();
            up[k] += step;
            let mut down = flat.clone();
            down[k] -= step;
            let lu = oracle_mean_loss(&ModelParams::from_flat(arch, dim, &up).unwrap(), batch, loss);
            let ld = oracle_mean_loss(&ModelParams::from_flat(arch, dim, &down).unwrap(), batch, loss);
            (lu - ld) / (2.0 * step)
        })
        .collect()
}

/// Below this magnitude gradients are compared absolutely, since both
/// entries are then dominated by finite-difference round-off.
pub const GRADIENT_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_FLOOR)
}

pub fn random_base_loss(rng: &mut Rng8) -> BaseLoss {
    if rng.random_bool(0.5) {
        BaseLoss::BinaryCrossEntropy
    } else {
        BaseLoss::SquaredError
    }
}
