use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use report_core::data::{save_dataset, Label};
use report_core::experiment::{
    attack_trained, evaluate_model, prepare_dataset, protocol_splits, run_attacks, run_early, run_eval,
    train_split, Artifact, RunConfig,
};
use report_core::model::{mix_seed, Checkpoint};

#[derive(Parser)]
#[command(name = "report", version, about = "Rumor detection with user-correlation and propagation graphs")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as instances/users JSONL.
    Synth(Common),
    /// Train on the first split's training portion and save a checkpoint.
    Train(Common),
    /// Evaluate under the configured protocol, or a saved checkpoint on its test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy as a function of the reply deadline.
    Early(Common),
    /// Greedy graph, comment and joint attacks with cost curves.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the default run configuration.
    Defaults,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, required_unless_present = "replay")]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Rerun from the config embedded in an artifact and check the result matches.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    replay: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    let (verb, common, checkpoint) = match command {
        Command::Defaults => {
            println!("{}", RunConfig::default().to_json());
            return Ok(());
        }
        Command::Synth(c) => ("synth", c, None),
        Command::Train(c) => ("train", c, None),
        Command::Eval { common, checkpoint } => ("eval", common, checkpoint),
        Command::Early(c) => ("early", c, None),
        Command::Attack { common, checkpoint } => ("attack", common, checkpoint),
    };
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;

    if let Some(path) = &common.replay {
        let stored: Artifact<Value> = serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing artifact {}", path.display()))?;
        if stored.kind != verb {
            bail!("{} holds a `{}` artifact, not `{verb}`", path.display(), stored.kind);
        }
        stored.config.validate()?;
        if stored.config.hash() != stored.config_hash {
            bail!("embedded config does not match its recorded hash");
        }
        let (result, _) = execute(verb, &stored.config, checkpoint.as_deref(), &common.out)?;
        if result != stored.result {
            bail!("replay of {} produced a different result", path.display());
        }
        println!("replay of {} matches", path.display());
        return Ok(());
    }

    let config_path = common.config.as_ref().expect("clap enforces --config");
    let mut cfg = RunConfig::from_json(&read(config_path)?)
        .with_context(|| format!("in {}", config_path.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let (result, table) = execute(verb, &cfg, checkpoint.as_deref(), &common.out)?;
    let artifact = Artifact::new(verb, &cfg, result);
    let path = common.out.join(format!("{verb}.json"));
    fs::write(&path, serde_json::to_string_pretty(&artifact)?)?;
    print!("{table}");
    println!("config {} seed {} -> {}", artifact.config_hash, artifact.seed, path.display());
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Runs one verb; returns the JSON result and a human-readable table.
fn execute(verb: &str, cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<(Value, String)> {
    let (dataset, truth) = prepare_dataset(cfg)?;
    info!("{} instances, {} users", dataset.len(), dataset.users.len());
    match verb {
        "synth" => {
            save_dataset(&dataset, out.join("instances.jsonl"), out.join("users.jsonl"))?;
            let counts: Vec<(String, usize)> = Label::ALL
                .iter()
                .map(|l| (l.to_string(), dataset.instances.iter().filter(|i| i.label == *l).count()))
                .collect();
            let mi = truth.as_ref().map(|t| t.pool_label_mutual_information(&dataset));
            let table = format!(
                "{} instances, {} users, labels {counts:?}, pool/label mutual information {mi:?}\n",
                dataset.len(),
                dataset.users.len()
            );
            Ok((
                json!({
                    "instances": dataset.len(),
                    "users": dataset.users.len(),
                    "label_counts": counts,
                    "pool_label_mutual_information": mi,
                }),
                table,
            ))
        }
        "train" => {
            let (train_idx, test) = protocol_splits(&dataset, cfg).swap_remove(0);
            let trained = train_split(&dataset, &train_idx, cfg, mix_seed(&[cfg.seed, 10, 0]))?;
            let ckpt = Checkpoint::new(
                trained.model.clone(),
                trained.optimizer.clone(),
                trained.featurizer.clone(),
                serde_json::to_value(cfg)?,
                cfg.hash(),
                cfg.seed,
            );
            let path = out.join("checkpoint.json");
            ckpt.save(&path)?;
            let test_metrics = evaluate_model(&dataset, &trained.model, &trained.featurizer, &test, cfg.train.eval_batch_size)?;
            let mut table = String::new();
            for e in &trained.outcome.history {
                table.push_str(&format!(
                    "epoch {:>4}  train loss {:.4} acc {:.3}  val loss {} acc {}\n",
                    e.epoch,
                    e.train_loss,
                    e.train_accuracy,
                    e.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
                    e.val_accuracy.map_or("-".into(), |v| format!("{v:.3}"))
                ));
            }
            table.push_str(&format!(
                "kept epoch {} ({:?}); checkpoint {}\n",
                trained.outcome.best_epoch,
                trained.outcome.stop,
                path.display()
            ));
            table.push_str(&test_metrics.to_table());
            Ok((
                json!({
                    "outcome": trained.outcome,
                    "test_metrics": test_metrics,
                    "train_size": train_idx.len(),
                    "test_size": test.len(),
                }),
                table,
            ))
        }
        "eval" => match checkpoint {
            Some(path) => {
                let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
                let (_, test) = protocol_splits(&dataset, cfg).swap_remove(0);
                let metrics = evaluate_model(&dataset, &ckpt.model, &ckpt.featurizer, &test, cfg.train.eval_batch_size)?;
                let table = metrics.to_table();
                Ok((json!({ "checkpoint_config_hash": ckpt.config_hash, "metrics": metrics }), table))
            }
            None => {
                let report = run_eval(&dataset, cfg)?;
                let table = report.to_table();
                Ok((serde_json::to_value(report)?, table))
            }
        },
        "early" => {
            let report = run_early(&dataset, cfg)?;
            let table = report.to_table();
            Ok((serde_json::to_value(report)?, table))
        }
        "attack" => {
            let report = match checkpoint {
                Some(path) => {
                    let (train_idx, test) = protocol_splits(&dataset, cfg).swap_remove(0);
                    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
                    attack_trained(&dataset, truth.as_ref(), cfg, &ckpt.model, &ckpt.featurizer, &train_idx, &test)?
                }
                None => run_attacks(&dataset, truth.as_ref(), cfg)?,
            };
            let table = report.to_table();
            Ok((serde_json::to_value(report)?, table))
        }
        _ => unreachable!("verbs are fixed by the parser"),
    }
}
