use std::path::PathBuf;
use std::process::ExitCode;

use abductive_mtl::config::ExperimentConfig;
use abductive_mtl::pipeline::{self, Method};
use abductive_mtl::Result;
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StageName {
    Generate,
    Abduce,
    Train,
    Evaluate,
    Compare,
}

/// Learning from several diverse noisy label sources through abduced
/// multi-target supervision.
#[derive(Debug, Parser)]
#[command(name = "abmtl", version)]
struct Args {
    /// Stage to run.
    #[arg(value_enum)]
    stage: Option<StageName>,
    /// Stage to run (alternative to the positional form).
    #[arg(long = "stage", value_enum, conflicts_with = "stage")]
    stage_flag: Option<StageName>,
    /// Experiment configuration (TOML). Built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed, replacing the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds evaluated concurrently by `compare`.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &Args, stage: StageName) -> Result<()> {
    let config = load(args)?;
    let dir = config.out_dir.as_path();
    let seed = config.seeds[0];
    match stage {
        StageName::Generate => {
            let task = pipeline::stage_generate(&config, seed, dir)?;
            let sizes: Vec<String> = task.samples.iter().map(|s| s.len().to_string()).collect();
            println!(
                "generated {} samples ({}) and {} test instances in {}",
                task.samples.len(),
                sizes.join(", "),
                task.test.len(),
                dir.display()
            );
        }
        StageName::Abduce => {
            let a = pipeline::stage_abduce(&config, dir)?;
            println!(
                "{} groundings, {} inconsistencies, {} targets, p = {}",
                a.groundings.len(),
                a.inconsistencies.len(),
                a.targets.targets.len(),
                a.rearranged.p
            );
        }
        StageName::Train => {
            let report = pipeline::stage_train(&config, seed, dir)?;
            println!(
                "{} steps, final loss {}",
                report.steps,
                report.loss_per_epoch.last().copied().unwrap_or(f64::NAN)
            );
        }
        StageName::Evaluate => {
            let m = pipeline::stage_evaluate(&config, dir)?;
            println!(
                "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
                m.accuracy, m.precision, m.recall, m.f1
            );
        }
        StageName::Compare => {
            let report = pipeline::stage_compare(&config, dir)?;
            for s in &report.summary {
                println!(
                    "{:<24} f1 {:.4} ± {:.4}  ({}/{} seeds)",
                    s.method.name(),
                    s.mean_f1,
                    s.std_f1,
                    s.completed,
                    report.seeds.len()
                );
            }
            println!(
                "{} beats both baselines on {}/{} seeds",
                Method::MultiSample,
                report.multi_sample_wins,
                report.seeds.len()
            );
            for cell in report.failures() {
                if let pipeline::CellOutcome::Failed { stage, message, .. } = &cell.outcome {
                    eprintln!("seed {} {}: failed at {stage}: {message}", cell.seed, cell.method);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(stage) = args.stage.or(args.stage_flag) else {
        eprintln!("error: no stage given (generate, abduce, train, evaluate, compare)");
        return ExitCode::from(2);
    };
    match run(&args, stage) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
