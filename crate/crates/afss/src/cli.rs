//! Command-line entry points: the sidecar loop for external trainers
//! (`init` / `plan` / `update`) and the self-contained simulation study
//! (`simulate` / `sweep`).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{apply_setting, load_config_file};
use crate::error::{Error, Result};
use crate::scheduler::{compose_plan, SchedulerConfig};
use crate::sidecar::{
    read_ids_file, read_metrics, read_snapshot, render_report, write_manifest, write_report,
    write_snapshot,
};
use crate::simulator::{
    default_difficulty_mix, generate_dataset, parse_difficulty_mix, run_experiment, sweep,
    ExperimentReport, LearnerDynamics, RefreshScope, SamplingPolicy,
};
use crate::state::{MetricsOutcome, StateTable};

#[derive(Parser)]
#[command(
    name = "afss",
    version,
    about = "Anti-forgetting training-data scheduler: sidecar state files for external trainers, plus a synthetic-learner simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scheduler settings: built-in defaults, then an optional config file, then
/// individual flags, in increasing precedence.
#[derive(Args, Debug, Default)]
struct SchedulerArgs {
    /// Config file with `key = value` lines (same keys as these flags).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    easy_budget_fraction: Option<f64>,
    #[arg(long)]
    forced_review_cap_fraction: Option<f64>,
    /// Epochs of disuse before an easy image becomes a review candidate
    /// (integer or `inf`).
    #[arg(long)]
    review_staleness: Option<String>,
    #[arg(long)]
    moderate_fraction: Option<f64>,
    /// Epochs of disuse before a moderate image is forced back in
    /// (integer or `inf`).
    #[arg(long)]
    coverage_staleness: Option<String>,
    #[arg(long)]
    refresh_interval: Option<u64>,
    #[arg(long)]
    warmup_epochs: Option<u64>,
    #[arg(long)]
    easy_above: Option<f64>,
    #[arg(long)]
    hard_below: Option<f64>,
    /// Sufficiency metric: `min_pr` or `f1`.
    #[arg(long)]
    metric_kind: Option<String>,
    /// Forced-review draw: `uniform_random` or `staleness_priority`.
    #[arg(long)]
    forced_review_policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SchedulerArgs {
    /// Resolve the effective config on top of `base`.
    fn resolve(&self, base: SchedulerConfig) -> Result<SchedulerConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config_file(path, base)?,
            None => base,
        };
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                apply_setting(&mut cfg, key, &v)?;
            }
            Ok(())
        };
        set(
            "easy_budget_fraction",
            self.easy_budget_fraction.map(|v| v.to_string()),
        )?;
        set(
            "forced_review_cap_fraction",
            self.forced_review_cap_fraction.map(|v| v.to_string()),
        )?;
        set("review_staleness", self.review_staleness.clone())?;
        set(
            "moderate_fraction",
            self.moderate_fraction.map(|v| v.to_string()),
        )?;
        set("coverage_staleness", self.coverage_staleness.clone())?;
        set(
            "refresh_interval",
            self.refresh_interval.map(|v| v.to_string()),
        )?;
        set("warmup_epochs", self.warmup_epochs.map(|v| v.to_string()))?;
        set("easy_above", self.easy_above.map(|v| v.to_string()))?;
        set("hard_below", self.hard_below.map(|v| v.to_string()))?;
        set("metric_kind", self.metric_kind.clone())?;
        set("forced_review_policy", self.forced_review_policy.clone())?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SimulationArgs {
    /// Sampling policy: afss, full, random[:frac], prune[:thr:epoch],
    /// curriculum[:ramp].
    #[arg(long, default_value = "afss")]
    policy: String,
    /// Dataset size.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    epochs: u64,
    /// Difficulty mixture, e.g. `0.5:0.05-0.35,0.3:0.35-0.65,0.2:0.65-0.95`.
    #[arg(long)]
    mix: Option<String>,
    /// Seed for the dataset draw (defaults to the scheduler seed).
    #[arg(long)]
    dataset_seed: Option<u64>,
    #[arg(long)]
    learn_rate: Option<f64>,
    #[arg(long)]
    forget_rate: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Refresh evaluation scope: `full` or `recent`.
    #[arg(long, default_value = "full")]
    refresh_scope: String,
}

impl SimulationArgs {
    fn dynamics(&self) -> Result<LearnerDynamics> {
        let mut dynamics = LearnerDynamics::default();
        if let Some(v) = self.learn_rate {
            dynamics.learn_rate = v;
        }
        if let Some(v) = self.forget_rate {
            dynamics.forget_rate = v;
        }
        if let Some(v) = self.noise_scale {
            dynamics.noise_scale = v;
        }
        dynamics.validate()?;
        Ok(dynamics)
    }

    fn mix(&self) -> Result<Vec<crate::simulator::DifficultyBand>> {
        match &self.mix {
            Some(spec) => parse_difficulty_mix(spec),
            None => Ok(default_difficulty_mix()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create an epoch-0 snapshot from an id list (one image id per line).
    Init {
        /// Id inventory file.
        #[arg(long)]
        ids: PathBuf,
        /// Snapshot to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Compose the epoch-t training manifest and write the usage-updated
    /// snapshot.
    Plan {
        /// Input snapshot (epoch t-1).
        #[arg(long)]
        state: PathBuf,
        /// Epoch to plan; must be the snapshot's epoch + 1.
        #[arg(long)]
        epoch: u64,
        #[arg(long)]
        manifest_out: PathBuf,
        #[arg(long)]
        state_out: PathBuf,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Merge externally evaluated per-image metrics into a snapshot.
    Update {
        /// Input snapshot (epoch t).
        #[arg(long)]
        state: PathBuf,
        /// Metrics CSV: `image_id,precision,recall` rows.
        #[arg(long)]
        metrics: PathBuf,
        /// Epoch the metrics were measured at; must match the snapshot.
        #[arg(long)]
        epoch: u64,
        #[arg(long)]
        state_out: PathBuf,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Run one synthetic-learner experiment and report per-epoch usage.
    Simulate {
        #[command(flatten)]
        sim: SimulationArgs,
        /// Report CSV destination; omit to skip the file and only print the
        /// summary.
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Re-run one experiment across a list of values for one scheduler
    /// parameter, writing one report CSV per value.
    Sweep {
        /// One of: review_staleness, coverage_staleness, refresh_interval,
        /// easy_above, hard_below.
        #[arg(long)]
        param: String,
        /// Comma-separated values; `inf` is accepted for staleness knobs.
        #[arg(long)]
        values: String,
        /// Directory for the per-value report CSVs.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        sim: SimulationArgs,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
}

pub fn run() -> Result<()> {
    execute(Cli::parse())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init {
            ids,
            out,
            scheduler,
        } => cmd_init(&ids, &out, &scheduler),
        Command::Plan {
            state,
            epoch,
            manifest_out,
            state_out,
            scheduler,
        } => cmd_plan(&state, epoch, &manifest_out, &state_out, &scheduler),
        Command::Update {
            state,
            metrics,
            epoch,
            state_out,
            scheduler,
        } => cmd_update(&state, &metrics, epoch, &state_out, &scheduler),
        Command::Simulate {
            sim,
            report_out,
            scheduler,
        } => cmd_simulate(&sim, report_out.as_deref(), &scheduler),
        Command::Sweep {
            param,
            values,
            out_dir,
            sim,
            scheduler,
        } => cmd_sweep(&param, &values, &out_dir, &sim, &scheduler),
    }
}

fn cmd_init(ids_path: &Path, out: &Path, scheduler: &SchedulerArgs) -> Result<()> {
    let cfg = scheduler.resolve(SchedulerConfig::default())?;
    let ids = read_ids_file(ids_path)?;
    let count = ids.len();
    let table = StateTable::new(ids, cfg.warmup_epochs)?;
    write_snapshot(&table, &cfg, out)?;
    println!(
        "initialized {count} records at epoch 0 -> {}",
        out.display()
    );
    Ok(())
}

fn cmd_plan(
    state_in: &Path,
    epoch: u64,
    manifest_out: &Path,
    state_out: &Path,
    scheduler: &SchedulerArgs,
) -> Result<()> {
    let (mut table, stored_cfg) = read_snapshot(state_in)?;
    let cfg = scheduler.resolve(stored_cfg)?;
    let plan = compose_plan(&table, &cfg, epoch)?;
    table.apply_usage(&plan, epoch)?;
    write_manifest(&plan, manifest_out)?;
    write_snapshot(&table, &cfg, state_out)?;
    println!(
        "epoch {epoch}: selected {} of {} images (FR={} RE={} FC={} RM={} HD={})",
        plan.len(),
        table.len(),
        plan.forced_review.len(),
        plan.random_easy.len(),
        plan.forced_coverage.len(),
        plan.random_moderate.len(),
        plan.hard.len(),
    );
    Ok(())
}

fn cmd_update(
    state_in: &Path,
    metrics_path: &Path,
    epoch: u64,
    state_out: &Path,
    scheduler: &SchedulerArgs,
) -> Result<()> {
    let (mut table, stored_cfg) = read_snapshot(state_in)?;
    let cfg = scheduler.resolve(stored_cfg)?;
    let batch = read_metrics(metrics_path, epoch)?;
    let entry_count = batch.len();
    let outcome = table.apply_metrics(&batch, epoch, cfg.refresh_interval)?;
    match outcome {
        MetricsOutcome::Applied => {
            println!("epoch {epoch}: refreshed metrics for {entry_count} images");
        }
        MetricsOutcome::RetainedOffSchedule => {
            eprintln!(
                "warning: epoch {epoch} is not a refresh epoch (warmup={}, interval={}); previous metrics retained",
                cfg.warmup_epochs, cfg.refresh_interval
            );
        }
    }
    write_snapshot(&table, &cfg, state_out)?;
    Ok(())
}

fn summary_line(report: &ExperimentReport, epochs: u64) -> String {
    format!(
        "policy={} n={} epochs={} accuracy_proxy={} visit_ratio={} visits={} eval_visits={}",
        report.policy,
        report.dataset_size,
        epochs,
        report.final_accuracy_proxy,
        report.visit_ratio_vs_full,
        report.total_visits,
        report.total_eval_visits
    )
}

fn cmd_simulate(
    sim: &SimulationArgs,
    report_out: Option<&Path>,
    scheduler: &SchedulerArgs,
) -> Result<()> {
    let cfg = scheduler.resolve(SchedulerConfig::default())?;
    let policy = SamplingPolicy::parse(&sim.policy)?;
    let dynamics = sim.dynamics()?;
    let scope = RefreshScope::parse(&sim.refresh_scope)?;
    let dataset_seed = sim.dataset_seed.unwrap_or(cfg.seed);
    let dataset = generate_dataset(sim.n, &sim.mix()?, dataset_seed)?;
    let report = run_experiment(
        policy, &dataset, sim.epochs, &cfg, &dynamics, cfg.seed, scope,
    )?;
    if let Some(path) = report_out {
        write_report(&report, path)?;
    }
    println!("{}", summary_line(&report, sim.epochs));
    Ok(())
}

fn cmd_sweep(
    param: &str,
    values_arg: &str,
    out_dir: &Path,
    sim: &SimulationArgs,
    scheduler: &SchedulerArgs,
) -> Result<()> {
    // Accept the kebab-case spelling used by the rest of the flag surface.
    let param = &param.replace('-', "_");
    let cfg = scheduler.resolve(SchedulerConfig::default())?;
    let policy = SamplingPolicy::parse(&sim.policy)?;
    let dynamics = sim.dynamics()?;
    let scope = RefreshScope::parse(&sim.refresh_scope)?;
    let values: Vec<f64> = values_arg
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s == "inf" {
                Ok(f64::INFINITY)
            } else {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("bad sweep value '{s}': {e}")))
            }
        })
        .collect::<Result<_>>()?;
    let dataset_seed = sim.dataset_seed.unwrap_or(cfg.seed);
    let dataset = generate_dataset(sim.n, &sim.mix()?, dataset_seed)?;
    let reports = sweep(
        param, &values, policy, &dataset, sim.epochs, &cfg, &dynamics, cfg.seed, scope,
    )?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    for (value, report) in values.iter().zip(&reports) {
        let tag = if value.is_infinite() {
            "inf".to_string()
        } else {
            value.to_string().replace('.', "_")
        };
        let path = out_dir.join(format!("sweep_{param}_{tag}.csv"));
        std::fs::write(&path, render_report(report))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        println!("{param}={value} {}", summary_line(report, sim.epochs));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_args_precedence_flags_over_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write;
        writeln!(file, "seed = 7").unwrap();
        writeln!(file, "moderate_fraction = 0.3").unwrap();
        let args = SchedulerArgs {
            config: Some(file.path().to_path_buf()),
            seed: Some(11),
            ..SchedulerArgs::default()
        };
        let cfg = args.resolve(SchedulerConfig::default()).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.moderate_fraction, 0.3);
    }

    #[test]
    fn staleness_flag_accepts_inf() {
        let args = SchedulerArgs {
            review_staleness: Some("inf".to_string()),
            ..SchedulerArgs::default()
        };
        let cfg = args.resolve(SchedulerConfig::default()).unwrap();
        assert_eq!(cfg.review_staleness, u64::MAX);
    }
}
