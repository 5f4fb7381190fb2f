use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dynprune_core::harness::{
    aggregate, read_jsonl, run_experiment, summarize_dir, sweep, write_aggregate_csv, write_outcome, DumpOptions,
    LabelRecord, RunConfig, RunStatus, SweepConfig,
};
use dynprune_core::report::{build_gap_table, hard_vs_noisy_export, write_gap_table_csv, write_hard_vs_noisy_csv, FULL_TRAINING};
use dynprune_core::{DasRecord, TrajectoryRecord};

#[derive(Parser)]
#[command(name = "dynprune", version, about = "Dynamic data pruning under label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration for each of its seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output_dir` or `runs`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dumps: DumpArgs,
    },
    /// Run every configuration of a sweep file and aggregate over seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dumps: DumpArgs,
    },
    /// Build tables from a directory of run outputs.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Accuracy gap of each policy against full training.
        #[arg(long, conflicts_with = "hard_vs_noisy")]
        gap_table: bool,
        /// Per-epoch loss and DAS of hard clean vs flipped samples.
        #[arg(long)]
        hard_vs_noisy: bool,
        #[arg(long, default_value_t = 10.0, requires = "hard_vs_noisy")]
        top_percent: f64,
        /// Run stem (`<name>__seed<k>`) for --hard-vs-noisy.
        #[arg(long, requires = "hard_vs_noisy")]
        run: Option<String>,
    },
}

#[derive(Args, Clone, Copy)]
struct DumpArgs {
    /// Write per-epoch trajectory entries to `<stem>.traj.jsonl`.
    #[arg(long)]
    dump_trajectories: bool,
    /// Write per-epoch scores to `<stem>.das.jsonl`.
    #[arg(long)]
    dump_das: bool,
}

impl From<DumpArgs> for DumpOptions {
    fn from(a: DumpArgs) -> Self {
        DumpOptions {
            trajectories: a.dump_trajectories,
            das: a.dump_das,
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out, dumps } => run(&config, seed, out, dumps.into()),
        Command::Sweep { config, out, dumps } => run_sweep(&config, out, dumps.into()),
        Command::Report {
            input,
            out,
            gap_table,
            hard_vs_noisy,
            top_percent,
            run,
        } => {
            if hard_vs_noisy {
                hard_vs_noisy_report(&input, &out, run.as_deref(), top_percent)?;
            } else if gap_table {
                gap_report(&input, &out)?;
            } else {
                let rows = aggregate(&summarize_dir(&input)?);
                write_aggregate_csv(&out, &rows)?;
                eprintln!("{} cells -> {}", rows.len(), out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, dumps: DumpOptions) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let outcomes = run_experiment(&cfg, dumps)?;
    let mut failed = 0;
    for outcome in &outcomes {
        let files = write_outcome(&dir, &cfg, outcome)?;
        match (&outcome.status, outcome.terminal()) {
            (RunStatus::Completed, Some(t)) => eprintln!(
                "seed {}: {} epochs, test acc {}, consumed {}/{} -> {}",
                outcome.seed,
                t.epoch,
                t.test_acc_true_labels,
                t.consumed_forward_passes,
                t.full_pass_budget,
                files.metrics.display()
            ),
            (RunStatus::Failed { epoch, error }, _) => {
                failed += 1;
                eprintln!("seed {}: failed at epoch {epoch}: {error}", outcome.seed);
            }
            (RunStatus::Completed, None) => bail!("seed {} completed without a terminal record", outcome.seed),
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_sweep(path: &Path, out: Option<PathBuf>, dumps: DumpOptions) -> Result<ExitCode> {
    let cfg = SweepConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("sweep"));
    let report = sweep(&cfg.runs, &dir, dumps)?;
    for row in &report.rows {
        let acc = row
            .test_acc_true_labels
            .map_or("-".to_owned(), |a| format!("{:.4} ± {:.4}", a.mean, a.std));
        eprintln!(
            "{:<16} {:<10} {:<22} rate {:<5} ratio {:<4} acc {acc} ({} runs, {} failed)",
            row.key.policy,
            row.key.score_source,
            row.key.noise_kind,
            row.key.noise_rate,
            row.key.target_prune_ratio,
            row.runs,
            row.failed
        );
    }
    eprintln!("summary -> {}", dir.join("summary.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn gap_report(input: &Path, out: &Path) -> Result<()> {
    let rows = aggregate(&summarize_dir(input)?);
    let full: Vec<_> = rows.iter().filter(|r| r.key.policy == FULL_TRAINING).cloned().collect();
    let table = build_gap_table(&rows, &full)?;
    write_gap_table_csv(out, &table)?;
    eprintln!("{} cells, {} mean-delta rows -> {}", table.cells.len(), table.mean_delta.len(), out.display());
    Ok(())
}

/// The run stem to report on: given, or the only trajectory dump present.
fn pick_stem(input: &Path, run: Option<&str>) -> Result<String> {
    if let Some(r) = run {
        return Ok(r.to_owned());
    }
    let mut stems: Vec<String> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok()?.file_name().to_str()?.strip_suffix(".traj.jsonl").map(str::to_owned))
        .collect();
    stems.sort();
    match stems.len() {
        1 => Ok(stems.remove(0)),
        0 => bail!("no trajectory dumps in {}; run with --dump-trajectories --dump-das", input.display()),
        _ => bail!("several runs in {}; pick one with --run (found {})", input.display(), stems.join(", ")),
    }
}

fn hard_vs_noisy_report(input: &Path, out: &Path, run: Option<&str>, top_percent: f64) -> Result<()> {
    let stem = pick_stem(input, run)?;
    let read = |suffix: &str| {
        let p = input.join(format!("{stem}.{suffix}.jsonl"));
        if p.exists() {
            Ok(p)
        } else {
            Err(anyhow::anyhow!("missing {}; run with --dump-trajectories --dump-das", p.display()))
        }
    };
    let traj: Vec<TrajectoryRecord> = read_jsonl(&read("traj")?)?;
    let das: Vec<DasRecord> = read_jsonl(&read("das")?)?;
    let labels: Vec<LabelRecord> = read_jsonl(&read("labels")?)?;
    let rows = hard_vs_noisy_export(&traj, &das, &labels, top_percent)?;
    write_hard_vs_noisy_csv(out, &rows)?;
    eprintln!("{} rows for {stem} -> {}", rows.len(), out.display());
    Ok(())
}
