//! Command-line interface for the robust learning-from-demonstration
//! pipeline: dataset generation and augmentation, consistency filtering,
//! policy training, prediction, regression evaluation, grasp rollouts and
//! the filtered-vs-unfiltered comparison experiment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lfd_grasp::consistency::{filter_consistent, FilterConfig};
use lfd_grasp::eval::{
    r2_report, success_experiment, table1_experiment, RolloutPolicy, Table1Config,
};
use lfd_grasp::model::DemonstrationSet;
use lfd_grasp::policy::{
    learn_intended_policy, postprocess_action, train_policy_on, GripperLimits, VectorPolicy,
};
use lfd_grasp::synth::{generate_demos, SuccessTolerances, TeacherConfig};
use lfd_grasp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lfd",
    about = "Robust learning from demonstration for grasp policies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic demonstration dataset
    Generate(GenerateArgs),
    /// Expand a dataset with translated / gripper-flipped copies
    Augment(AugmentArgs),
    /// Remove demonstrations inconsistent with the teacher's intent
    Filter(FilterArgs),
    /// Train a grasp policy (consistency filter + per-dimension SVR)
    Train(TrainArgs),
    /// Predict executable actions for every state in a dataset
    Predict(PredictArgs),
    /// Score a policy against a dataset (per-dimension R²)
    Evaluate(EvaluateArgs),
    /// Roll a policy out on fresh scenes and report grasp success
    Rollout(RolloutArgs),
    /// Filtered-vs-unfiltered comparison over several seeds
    Table1(Table1Args),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of demonstrations
    #[arg(long, default_value_t = 525)]
    demos: usize,
    /// Probability that a demonstration deviates in intent
    #[arg(long, default_value_t = 0.015)]
    p_intent: f64,
    /// Probability that a demonstration deviates in execution
    #[arg(long, default_value_t = 28.0 / 525.0 - 0.015)]
    p_exec: f64,
    /// Disable corruption entirely (overrides the probabilities)
    #[arg(long)]
    clean: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input dataset file
    #[arg(long)]
    input: PathBuf,
    /// Augmented copies per demonstration
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Input dataset file
    #[arg(long)]
    input: PathBuf,
    /// Demonstration-space quantile parameter
    #[arg(long, default_value_t = 0.08)]
    nu_d: f64,
    /// State-space quantile parameter
    #[arg(long, default_value_t = 0.05)]
    nu_s: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file for the consistent subset (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Optional output file for the full consistency report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input dataset file
    #[arg(long)]
    input: PathBuf,
    /// Skip consistency filtering and train on every demonstration
    #[arg(long)]
    no_filter: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output policy file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained policy file
    #[arg(long)]
    policy: PathBuf,
    /// Dataset whose states to predict for
    #[arg(long)]
    input: PathBuf,
    /// Output file for (id, action) records (JSON); stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained policy file
    #[arg(long)]
    policy: PathBuf,
    /// Validation dataset file
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RolloutArgs {
    /// Trained policy file; mutually exclusive with --teacher
    #[arg(long, conflicts_with = "teacher")]
    policy: Option<PathBuf>,
    /// Roll out the analytic teacher instead of a learned policy
    #[arg(long)]
    teacher: bool,
    #[arg(long, default_value_t = 14)]
    scenes: usize,
    #[arg(long, default_value_t = 5)]
    grasps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Table1Args {
    /// Base seed; the experiment uses seeds seed..seed+runs
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeded repetitions
    #[arg(long, default_value_t = 10)]
    runs: u64,
    /// Demonstrations per repetition
    #[arg(long, default_value_t = 525)]
    demos: usize,
}

fn read_dataset(path: &Path) -> Result<DemonstrationSet> {
    let bytes = std::fs::read(path)?;
    let set: DemonstrationSet = serde_json::from_slice(&bytes)?;
    set.validate()?;
    Ok(set)
}

fn read_policy(path: &Path) -> Result<VectorPolicy> {
    let bytes = std::fs::read(path)?;
    let policy: VectorPolicy = serde_json::from_slice(&bytes)?;
    policy.validate()?;
    Ok(policy)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let table_defaults = Table1Config::default();
    match cli.command {
        Command::Generate(a) => {
            let teacher = if a.clean {
                TeacherConfig::default()
            } else {
                TeacherConfig {
                    p_intent: a.p_intent,
                    p_exec: a.p_exec,
                    ..TeacherConfig::default()
                }
            };
            let set = generate_demos(
                a.demos,
                &table_defaults.sampler,
                &table_defaults.render,
                &teacher,
                a.seed,
            )?;
            write_json(&a.out, &set)?;
            println!("wrote {} demonstrations to {}", set.len(), a.out.display());
        }
        Command::Augment(a) => {
            let set = read_dataset(&a.input)?;
            let out = lfd_grasp::synth::augment(&set, a.copies, a.seed)?;
            write_json(&a.out, &out)?;
            println!(
                "augmented {} demonstrations to {} ({})",
                set.len(),
                out.len(),
                a.out.display()
            );
        }
        Command::Filter(a) => {
            let set = read_dataset(&a.input)?;
            let cfg = FilterConfig {
                nu_d: a.nu_d,
                nu_s: a.nu_s,
                seed: a.seed,
                ..table_defaults.filter.clone()
            };
            let (kept, report) = filter_consistent(&set, &cfg)?;
            write_json(&a.out, &kept)?;
            if let Some(report_path) = &a.report {
                write_json(report_path, &report)?;
            }
            println!(
                "kept {} of {} demonstrations ({} removed) -> {}",
                kept.len(),
                set.len(),
                report.removed_ids.len(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let set = read_dataset(&a.input)?;
            let mut grid = table_defaults.grid.clone();
            grid.seed = a.seed;
            let policy = if a.no_filter {
                let rec29 = lfd_grasp::model::standardize(&set.demo_matrix()?)?.1;
                train_policy_on(&set, &rec29, &grid, None)?
            } else {
                let filter = FilterConfig { seed: a.seed, ..table_defaults.filter.clone() };
                learn_intended_policy(&set, &filter, &grid)?.0
            };
            write_json(&a.out, &policy)?;
            println!("trained policy on {} demonstrations -> {}", set.len(), a.out.display());
        }
        Command::Predict(a) => {
            let policy = read_policy(&a.policy)?;
            let set = read_dataset(&a.input)?;
            let limits = GripperLimits::default();
            let mut records = Vec::with_capacity(set.len());
            for demo in &set.demos {
                let raw = policy.predict(&demo.state)?;
                let action = postprocess_action(&raw, &limits)?;
                records.push(serde_json::json!({ "id": demo.id, "action": action }));
            }
            match &a.out {
                Some(path) => {
                    write_json(path, &records)?;
                    println!("wrote {} predictions to {}", records.len(), path.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&records)?),
            }
        }
        Command::Evaluate(a) => {
            let policy = read_policy(&a.policy)?;
            let set = read_dataset(&a.input)?;
            let report = r2_report(&policy, &set)?;
            print!("{}", report.render_text());
        }
        Command::Rollout(a) => {
            let stored;
            let rollout = if a.teacher {
                RolloutPolicy::Teacher
            } else {
                let path = a.policy.as_ref().ok_or_else(|| {
                    Error::Validation("rollout needs --policy or --teacher".into())
                })?;
                stored = read_policy(path)?;
                RolloutPolicy::Learned(&stored)
            };
            let table = success_experiment(
                &rollout,
                a.scenes,
                a.grasps,
                &table_defaults.sampler,
                &table_defaults.render,
                &SuccessTolerances::default(),
                a.seed,
            )?;
            print!("{}", table.render_text());
        }
        Command::Table1(a) => {
            if a.runs == 0 {
                return Err(Error::Validation("--runs must be at least 1".into()));
            }
            let cfg = Table1Config {
                n_demos: a.demos,
                seeds: (a.seed..a.seed + a.runs).collect(),
                ..Table1Config::default()
            };
            let result = table1_experiment(&cfg)?;
            print!("{}", result.render_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
