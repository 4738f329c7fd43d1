//! End-to-end experiments: the multi-sample method against two baselines,
//! per seed, plus the file-based stages behind the command-line driver.
//!
//! Methods compared on a clean held-out split:
//!
//! * `osamtl_dns`: abduce targets from every noisy sample, train on all of
//!   them with the weighted joint loss.
//! * `osamtl_single_sample_d`: the same abduction restricted to one sample at
//!   a time; the best sample by test F1 is reported.
//! * `raw_noisy_pooled`: train on every noisy label directly.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::knowledge::{extract_groundings, GroundingSet, KnowledgeBase};
use crate::learner::{train, Example, LossConfig, ModelParams, TrainReport};
use crate::reasoning::{abduce_revisions, estimate_inconsistencies, InconsistencySet, RevisedGroundingSet};
use crate::sample::{validate_dns, NoisySample};
use crate::synth::{evaluate, generate_task, GeneratedTask, Metrics};
use crate::targets::{abduce_targets, rearrange_targets, RearrangedTargets, TargetSet};

/// Mixed into the experiment seed for model initialisation and shuffling,
/// so training draws are not the generator's stream.
const TRAIN_SEED_SALT: u64 = 0x5DEE_CE66_D1CE_5EED;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "osamtl_dns")]
    MultiSample,
    #[serde(rename = "osamtl_single_sample_d")]
    BestSingleSample,
    #[serde(rename = "raw_noisy_pooled")]
    PooledNoisy,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MultiSample, Method::BestSingleSample, Method::PooledNoisy];

    pub fn name(self) -> &'static str {
        match self {
            Method::MultiSample => "osamtl_dns",
            Method::BestSingleSample => "osamtl_single_sample_d",
            Method::PooledNoisy => "raw_noisy_pooled",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    ValidateDns,
    ExtractGroundings,
    EstimateInconsistencies,
    AbduceRevisions,
    AbduceTargets,
    RearrangeTargets,
    Train,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage names serialise");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Everything the abduction stages produce for one collection of samples.
#[derive(Clone, Debug, Serialize)]
pub struct Abduction {
    pub groundings: GroundingSet,
    pub inconsistencies: InconsistencySet,
    pub revisions: RevisedGroundingSet,
    pub targets: TargetSet,
    pub rearranged: RearrangedTargets,
}

/// Groundings through rearranged targets.
pub fn abduce(
    samples: &[NoisySample],
    kb: &KnowledgeBase,
    config: &ExperimentConfig,
) -> std::result::Result<Abduction, StageError> {
    let groundings = extract_groundings(samples, &config.grounding).at(Stage::ExtractGroundings)?;
    let inconsistencies = estimate_inconsistencies(&groundings, kb, &config.reasoning);
    let revisions = abduce_revisions(&inconsistencies, &groundings, kb).at(Stage::AbduceRevisions)?;
    let targets = abduce_targets(&revisions, samples, kb, &config.targets).at(Stage::AbduceTargets)?;
    let rearranged = rearrange_targets(&targets, samples).at(Stage::RearrangeTargets)?;
    Ok(Abduction {
        groundings,
        inconsistencies,
        revisions,
        targets,
        rearranged,
    })
}

pub fn train_seed(seed: u64) -> u64 {
    seed ^ TRAIN_SEED_SALT
}

/// Trains a freshly initialised model; initialisation depends only on the
/// seed, so every method starts from the same parameters.
pub fn fit(
    examples: &[Example],
    loss: &LossConfig,
    config: &ExperimentConfig,
    seed: u64,
) -> std::result::Result<TrainReport, StageError> {
    let dim = examples.first().map_or(0, |e| e.features.len());
    let mut init_rng = ChaCha8Rng::seed_from_u64(train_seed(seed));
    init_rng.set_stream(1);
    let initial = ModelParams::init(config.optim.architecture, dim, &mut init_rng);
    train(&initial, examples, loss, &config.optim_config(train_seed(seed))).at(Stage::Train)
}

pub fn predict_all(params: &ModelParams, sample: &NoisySample) -> Result<Vec<(u64, f64)>> {
    sample
        .instances()
        .iter()
        .map(|inst| Ok((inst.id, params.predict(inst)?)))
        .collect()
}

pub fn noisy_examples(samples: &[NoisySample]) -> Vec<Example> {
    samples
        .iter()
        .flat_map(|s| {
            s.instances().iter().zip(s.labels()).map(|(inst, &l)| Example {
                features: inst.features.clone(),
                targets: vec![l],
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Completed {
        metrics: Metrics,
        final_loss: f64,
        train_steps: usize,
        /// Sample id chosen by the best-single-sample baseline.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        best_sample: Option<usize>,
    },
    Failed {
        stage: Stage,
        exit_code: i32,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCell {
    pub seed: u64,
    pub method: Method,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl MethodCell {
    pub fn f1(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Completed { metrics, .. } => Some(metrics.f1),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// One cell per (seed, method), seeds in order.
    pub cells: Vec<MethodCell>,
    pub summary: Vec<MethodSummary>,
    /// Seeds on which the multi-sample method beats both baselines on F1.
    pub multi_sample_wins: usize,
}

impl ComparisonReport {
    pub fn cell(&self, seed: u64, method: Method) -> Option<&MethodCell> {
        self.cells.iter().find(|c| c.seed == seed && c.method == method)
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MethodCell> {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Failed { .. }))
    }
}

/// Wall-clock training time, kept apart from the report so that reports stay
/// byte-identical across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seed: u64,
    pub method: Method,
    pub train_seconds: f64,
}

struct MethodRun {
    method: Method,
    outcome: CellOutcome,
    seconds: f64,
}

fn completed(report: &TrainReport, metrics: Metrics, best_sample: Option<usize>) -> CellOutcome {
    CellOutcome::Completed {
        metrics,
        final_loss: report.loss_per_epoch.last().copied().unwrap_or(f64::NAN),
        train_steps: report.steps,
        best_sample,
    }
}

fn train_and_score(
    examples: &[Example],
    loss: &LossConfig,
    task: &GeneratedTask,
    config: &ExperimentConfig,
    seed: u64,
) -> std::result::Result<(TrainReport, Metrics), StageError> {
    let report = fit(examples, loss, config, seed)?;
    let predictions = predict_all(&report.final_params, &task.test).at(Stage::Evaluate)?;
    let metrics = evaluate(&predictions, &task.truth, config.decision_threshold).at(Stage::Evaluate)?;
    Ok((report, metrics))
}

fn try_seed(config: &ExperimentConfig, seed: u64) -> std::result::Result<Vec<MethodRun>, StageError> {
    let task = generate_task(&config.task, seed).at(Stage::Generate)?;
    let dns = validate_dns(task.samples.clone(), &config.diversity).at(Stage::ValidateDns)?;

    let abduction = abduce(&dns, &task.kb, config)?;
    let loss = config.loss_config(abduction.rearranged.p).at(Stage::Train)?;
    let (report, metrics) = train_and_score(&abduction.rearranged.examples(), &loss, &task, config, seed)?;
    let mut runs = vec![MethodRun {
        method: Method::MultiSample,
        outcome: completed(&report, metrics, None),
        seconds: report.wall_time,
    }];

    let mut best: Option<(usize, TrainReport, Metrics)> = None;
    let mut single_seconds = 0.0;
    for sample in dns.iter() {
        let single = abduce(std::slice::from_ref(sample), &task.kb, config)?;
        let loss = config.loss_config(single.rearranged.p).at(Stage::Train)?;
        let (report, metrics) = train_and_score(&single.rearranged.examples(), &loss, &task, config, seed)?;
        single_seconds += report.wall_time;
        if best.as_ref().is_none_or(|(_, _, m)| metrics.f1 > m.f1) {
            best = Some((sample.id(), report, metrics));
        }
    }
    let (best_id, report, metrics) = best.expect("validated collections are non-empty");
    runs.push(MethodRun {
        method: Method::BestSingleSample,
        outcome: completed(&report, metrics, Some(best_id)),
        seconds: single_seconds,
    });

    let pooled_loss = config.loss_config_single().at(Stage::Train)?;
    let (report, metrics) = train_and_score(&noisy_examples(&dns), &pooled_loss, &task, config, seed)?;
    runs.push(MethodRun {
        method: Method::PooledNoisy,
        outcome: completed(&report, metrics, None),
        seconds: report.wall_time,
    });
    Ok(runs)
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Vec<MethodRun> {
    match try_seed(config, seed) {
        Ok(runs) => runs,
        Err(e) => Method::ALL
            .iter()
            .map(|&method| MethodRun {
                method,
                outcome: CellOutcome::Failed {
                    stage: e.stage,
                    exit_code: e.error.exit_code(),
                    message: e.error.to_string(),
                },
                seconds: 0.0,
            })
            .collect(),
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarise(cells: &[MethodCell], method: Method) -> MethodSummary {
    let metrics: Vec<&Metrics> = cells
        .iter()
        .filter(|c| c.method == method)
        .filter_map(|c| match &c.outcome {
            CellOutcome::Completed { metrics, .. } => Some(metrics),
            CellOutcome::Failed { .. } => None,
        })
        .collect();
    let collect = |f: fn(&Metrics) -> f64| metrics.iter().map(|m| f(m)).collect::<Vec<_>>();
    let (mean_f1, std_f1) = mean_std(&collect(|m| m.f1));
    let (mean_accuracy, std_accuracy) = mean_std(&collect(|m| m.accuracy));
    MethodSummary {
        method,
        completed: metrics.len(),
        mean_f1,
        std_f1,
        mean_accuracy,
        std_accuracy,
        mean_precision: mean_std(&collect(|m| m.precision)).0,
        mean_recall: mean_std(&collect(|m| m.recall)).0,
    }
}

/// Runs every configured seed, `config.jobs` at a time. Stage failures are
/// recorded in the report; only configuration problems abort the run.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<(ComparisonReport, Vec<Timing>)> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.jobs)))?;
    let per_seed: Vec<(u64, Vec<MethodRun>)> =
        pool.install(|| config.seeds.par_iter().map(|&seed| (seed, run_seed(config, seed))).collect());

    let mut cells = Vec::with_capacity(per_seed.len() * Method::ALL.len());
    let mut timings = Vec::with_capacity(cells.capacity());
    let mut wins = 0;
    for (seed, runs) in per_seed {
        let f1 = |m: Method| {
            runs.iter().find(|r| r.method == m).and_then(|r| match &r.outcome {
                CellOutcome::Completed { metrics, .. } => Some(metrics.f1),
                CellOutcome::Failed { .. } => None,
            })
        };
        if let (Some(a), Some(b), Some(c)) = (
            f1(Method::MultiSample),
            f1(Method::BestSingleSample),
            f1(Method::PooledNoisy),
        ) {
            wins += usize::from(a > b && a > c);
        }
        for run in runs {
            timings.push(Timing {
                seed,
                method: run.method,
                train_seconds: run.seconds,
            });
            cells.push(MethodCell {
                seed,
                method: run.method,
                outcome: run.outcome,
            });
        }
    }
    let summary = Method::ALL.iter().map(|&m| summarise(&cells, m)).collect();
    Ok((
        ComparisonReport {
            config: config.echo(),
            seeds: config.seeds.clone(),
            cells,
            summary,
            multi_sample_wins: wins,
        },
        timings,
    ))
}

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn report_json(report: &ComparisonReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

/// Flat per-cell table: one row per (seed, method).
pub fn summary_csv(report: &ComparisonReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record([
        "seed",
        "method",
        "status",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "train_steps",
        "best_sample",
        "failed_stage",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        let seed = c.seed.to_string();
        let row: Vec<String> = match &c.outcome {
            CellOutcome::Completed {
                metrics,
                train_steps,
                best_sample,
                ..
            } => vec![
                seed,
                c.method.to_string(),
                "completed".into(),
                metrics.accuracy.to_string(),
                metrics.precision.to_string(),
                metrics.recall.to_string(),
                metrics.f1.to_string(),
                train_steps.to_string(),
                best_sample.map(|b| b.to_string()).unwrap_or_default(),
                String::new(),
            ],
            CellOutcome::Failed { stage, .. } => {
                let mut row = vec![seed, c.method.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(stage.to_string());
                row
            }
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn timings_csv(timings: &[Timing]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in timings {
        w.serialize(t).map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn write_report(report: &ComparisonReport, timings: &[Timing], dir: &Path) -> Result<()> {
    io::write_atomic(&dir.join(REPORT_FILE), report_json(report))?;
    io::write_atomic(&dir.join(SUMMARY_FILE), summary_csv(report)?)?;
    io::write_atomic(&dir.join(TIMINGS_FILE), timings_csv(timings)?)
}

/// File names used by the staged workflow inside one output directory.
pub mod files {
    pub const DATASET: &str = "dataset.txt";
    pub const TEST: &str = "test.txt";
    pub const TRUTH: &str = "truth.txt";
    pub const KNOWLEDGE: &str = "kb.txt";
    pub const REVISIONS: &str = "revisions.json";
    pub const TARGETS: &str = "targets.txt";
    pub const MODEL: &str = "model.txt";
    pub const TRAIN_LOG: &str = "train.json";
    pub const PREDICTIONS: &str = "predictions.txt";
    pub const METRICS: &str = "metrics.json";
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("stage output serialises");
    s.push('\n');
    s
}

/// Writes the noisy samples, clean test split, truth and knowledge base.
pub fn stage_generate(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<GeneratedTask> {
    config.validate()?;
    let task = generate_task(&config.task, seed)?;
    io::write_atomic(&path(dir, files::DATASET), io::write_dataset(&task.samples))?;
    io::write_atomic(&path(dir, files::TEST), io::write_dataset(std::slice::from_ref(&task.test)))?;
    io::write_atomic(&path(dir, files::TRUTH), io::write_truth(&task.truth))?;
    io::write_atomic(&path(dir, files::KNOWLEDGE), io::write_knowledge_base(&task.kb))?;
    Ok(task)
}

#[derive(Serialize)]
struct RevisionReport<'a> {
    groundings: &'a GroundingSet,
    inconsistencies: &'a InconsistencySet,
    revisions: &'a RevisedGroundingSet,
    target_counts: Vec<TargetSummary>,
    degenerate_samples: &'a [usize],
}

#[derive(Serialize)]
struct TargetSummary {
    target_id: u64,
    source_sample: usize,
    bias: crate::targets::Bias,
    positive_count: usize,
    repaired_positive_rate: f64,
    revised_groundings_used: usize,
    instances_used: usize,
}

/// Reads dataset and knowledge base, validates diversity, abduces and
/// rearranges targets.
pub fn stage_abduce(config: &ExperimentConfig, dir: &Path) -> Result<Abduction> {
    config.validate()?;
    let samples = io::read_with(&path(dir, files::DATASET), io::parse_dataset)?;
    let kb = io::read_with(&path(dir, files::KNOWLEDGE), io::parse_knowledge_base)?;
    let dns = validate_dns(samples, &config.diversity)?;
    let abduction = abduce(&dns, &kb, config).map_err(|e| e.error)?;
    let report = RevisionReport {
        groundings: &abduction.groundings,
        inconsistencies: &abduction.inconsistencies,
        revisions: &abduction.revisions,
        target_counts: abduction
            .targets
            .targets
            .iter()
            .map(|t| TargetSummary {
                target_id: t.target_id,
                source_sample: t.source_sample,
                bias: t.bias,
                positive_count: t.positive_count,
                repaired_positive_rate: t.repaired_positive_rate,
                revised_groundings_used: t.revised_groundings_used,
                instances_used: t.instances_used,
            })
            .collect(),
        degenerate_samples: &abduction.targets.degenerate_samples,
    };
    io::write_atomic(&path(dir, files::REVISIONS), json(&report))?;
    io::write_atomic(&path(dir, files::TARGETS), io::write_targets(&abduction.rearranged))?;
    Ok(abduction)
}

#[derive(Serialize)]
struct TrainLog<'a> {
    seed: u64,
    p: usize,
    alphas: &'a [f64],
    train_steps: usize,
    loss_per_epoch: &'a [f64],
}

/// Trains on the abduced targets and predicts the test split.
pub fn stage_train(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<TrainReport> {
    config.validate()?;
    let samples = io::read_with(&path(dir, files::DATASET), io::parse_dataset)?;
    let rows = io::read_with(&path(dir, files::TARGETS), io::parse_targets)?;
    let rearranged = io::targets_from_rows(rows, &samples)?;
    let loss = config.loss_config(rearranged.p)?;
    let report = fit(&rearranged.examples(), &loss, config, seed).map_err(|e| e.error)?;
    io::write_atomic(&path(dir, files::MODEL), io::write_checkpoint(&report.final_params))?;
    io::write_atomic(
        &path(dir, files::TRAIN_LOG),
        json(&TrainLog {
            seed,
            p: rearranged.p,
            alphas: loss.alphas(),
            train_steps: report.steps,
            loss_per_epoch: &report.loss_per_epoch,
        }),
    )?;
    let test = io::read_with(&path(dir, files::TEST), io::parse_dataset)?;
    let mut predictions = Vec::new();
    for sample in &test {
        predictions.extend(predict_all(&report.final_params, sample)?);
    }
    io::write_atomic(&path(dir, files::PREDICTIONS), io::write_predictions(&predictions))?;
    Ok(report)
}

/// Scores the predictions file against the truth file.
pub fn stage_evaluate(config: &ExperimentConfig, dir: &Path) -> Result<Metrics> {
    let predictions = io::read_with(&path(dir, files::PREDICTIONS), io::parse_predictions)?;
    let truth = io::read_with(&path(dir, files::TRUTH), io::parse_truth)?;
    let metrics = evaluate(&predictions, &truth, config.decision_threshold)?;
    io::write_atomic(&path(dir, files::METRICS), json(&metrics))?;
    Ok(metrics)
}

/// Full comparison; writes report, summary table and timings.
pub fn stage_compare(config: &ExperimentConfig, dir: &Path) -> Result<ComparisonReport> {
    let (report, timings) = run_pipeline(config)?;
    write_report(&report, &timings, dir)?;
    Ok(report)
}
