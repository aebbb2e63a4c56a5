use aquasim::learner::load_checkpoint;
use clap::{Parser, Subcommand, ValueEnum};
use harness::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "aquasim", version, about = "Underwater ROV dataset factory, trainer and evaluator")]
struct Cli {
    /// TOML config file (default: $AQUASIM_CONFIG, then the built-in desk config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Task filter: comma-separated ids, family names or `all`.
    #[arg(long, global = true)]
    tasks: Option<String>,
    /// Episodes per task.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Recorded,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Scripted,
    Random,
    Model,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record scripted episodes into a new dataset directory (--out).
    Generate,
    /// Check every dataset invariant; exit 1 on any violation.
    Validate { dataset: PathBuf },
    /// Recompute normalization statistics from the train split.
    Stats { dataset: PathBuf },
    /// Re-split episodes per task into train and test.
    Split {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
    },
    /// Train the target and action heads; writes a checkpoint and loss curve to --out.
    Train { dataset: PathBuf },
    /// Score a checkpoint or a baseline on the test split.
    EvalOffline {
        dataset: PathBuf,
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Run seeded rollouts per task and tabulate success.
    EvalClosedLoop {
        #[arg(long, value_enum, default_value = "scripted")]
        policy: PolicyArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export per-episode pose and action traces as CSV into --out.
    ReplayExport { dataset: PathBuf },
}

fn require_seed(cli: &Cli) -> Result<u64, HarnessError> {
    cli.seed.ok_or_else(|| HarnessError::Usage("--seed is required for this command".into()))
}

fn require_out(cli: &Cli) -> Result<&Path, HarnessError> {
    cli.out.as_deref().ok_or_else(|| HarnessError::Usage("--out is required for this command".into()))
}

fn write_report(cli: &Cli, name: &str, table: &Table) -> Result<(), HarnessError> {
    print!("{}", table.to_text());
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out.display().to_string(), e))?;
        let path = out.join(name);
        std::fs::write(&path, table.to_tsv()).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate => {
            let req = GenerateRequest {
                seed: require_seed(cli)?,
                workers: cli.workers,
                tasks: cli.tasks.clone(),
                episodes: cli.episodes,
                out: require_out(cli)?.to_path_buf(),
            };
            let s = generate(&cfg, &req)?;
            println!(
                "wrote {} episodes, {} frames, {} successful, to {}",
                s.episodes,
                s.frames,
                s.successes,
                req.out.display()
            );
            for (id, why) in &s.failures {
                println!("episode {id}: {why}");
            }
        }
        Command::Validate { dataset } => {
            let report = validate(dataset);
            for issue in &report.issues {
                println!("{issue}");
            }
            println!(
                "{} episodes, {} frames checked, {} issues",
                report.episodes_checked,
                report.frames_checked,
                report.issues.len()
            );
            if !report.passed() {
                return Err(HarnessError::Validation(format!("{} issues in {}", report.issues.len(), dataset.display())));
            }
        }
        Command::Stats { dataset } => {
            let m = recompute_stats(dataset)?;
            let stats = m.stats.expect("just computed");
            println!("statistics over {} train frames written to the manifest", stats.frames);
        }
        Command::Split { dataset, fraction } => {
            let m = resplit(dataset, *fraction, require_seed(cli)?)?;
            println!(
                "train {} episodes, test {} episodes",
                m.count(aquasim::dataset::Split::Train),
                m.count(aquasim::dataset::Split::Test)
            );
        }
        Command::Train { dataset } => {
            let out = train_command(&cfg, dataset, require_out(cli)?, require_seed(cli)?)?;
            println!("checkpoint: {}", out.checkpoint.display());
            println!("loss curve: {}", out.curve_file.display());
            println!("total loss: first-100 mean {:.6}, last-100 mean {:.6}", out.leading_mean, out.trailing_mean);
            let mut t = Table::new(&["split", "frames", "e_action", "e_target_m", "baseline_e_action", "baseline_e_target_m"]);
            for (name, s) in [("train", Some(&out.train)), ("test", out.test.as_ref())] {
                if let Some(s) = s {
                    t.push(vec![
                        name.into(),
                        s.frames.to_string(),
                        format!("{:.6}", s.e_action),
                        format!("{:.6}", s.e_target),
                        format!("{:.6}", s.baseline_e_action),
                        format!("{:.6}", s.baseline_e_target),
                    ]);
                }
            }
            write_report(cli, "train_report.tsv", &t)?;
        }
        Command::EvalOffline {
            dataset,
            checkpoint,
            baseline,
        } => {
            let predictor = match (checkpoint, baseline) {
                (Some(path), _) => OfflinePredictor::Model(Box::new(load_checkpoint(path)?)),
                (None, Some(Baseline::Mean)) => OfflinePredictor::MeanBaseline,
                (None, Some(Baseline::Recorded)) => OfflinePredictor::Recorded,
                (None, None) => return Err(HarnessError::Usage("pass --checkpoint or --baseline".into())),
            };
            let rows = eval_offline(dataset, &predictor)?;
            write_report(cli, "offline_report.tsv", &offline_table(&rows))?;
        }
        Command::EvalClosedLoop { policy, checkpoint } => {
            let kind = match (policy, checkpoint) {
                (PolicyArg::Scripted, _) => PolicyKind::Scripted,
                (PolicyArg::Random, _) => PolicyKind::Random,
                (PolicyArg::Model, Some(path)) => PolicyKind::Learned(Box::new(load_checkpoint(path)?)),
                (PolicyArg::Model, None) => return Err(HarnessError::Usage("--policy model needs --checkpoint".into())),
            };
            let req = ClosedLoopRequest {
                tasks: cli.tasks.clone().unwrap_or_else(|| "all".into()),
                episodes: cli.episodes.unwrap_or(cfg.eval.episodes),
                seed: require_seed(cli)?,
                workers: cli.workers,
            };
            let results = eval_closed_loop(&cfg, &req, &kind)?;
            write_report(cli, "closed_loop_report.tsv", &closed_loop_table(&results))?;
        }
        Command::ReplayExport { dataset } => {
            let files = replay_export(dataset, cli.tasks.as_deref().unwrap_or("all"), require_out(cli)?)?;
            println!("wrote {} trace files", files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::from(EXIT_OK as u8),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
