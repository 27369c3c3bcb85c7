//! Thin command-line front end over the `rewardlab` library.
//!
//! Every subcommand loads an [`ExperimentConfig`] (TOML, all fields
//! optional) and applies the common flag overrides, then calls one
//! library entry point. Exit codes: 0 success, 1 configuration error,
//! 2 runtime/divergence error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rewardlab::error::HarnessError;
use rewardlab::harness::{
    emit_plots, run_experiment, run_scripted, stage_reward_model, write_trace_csv, Condition,
    ExperimentConfig, ScriptedPolicyKind,
};
use rewardlab::reward::{EngineeredRewardConfig, RewardModel};
use rewardlab::sac::{save_policy, train_policy, write_curve_csv, RewardSource};
use rewardlab::sampler::io::{save_pairs, save_tree};
use rewardlab::sampler::{build_tree, generate_expert, sample_pairs};

#[derive(Parser)]
#[command(name = "rewardlab", version, about = "Dense-reward learning pipeline for planar insertion tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides one config field.
#[derive(Args)]
struct Common {
    /// TOML experiment config; missing fields take library defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the stage's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reward condition: drem | image_only | sparse | engineered.
    #[arg(long)]
    condition: Option<String>,
    /// Override the stage's step/iteration budget.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(name) = &self.condition {
            cfg.condition = Condition::parse(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown condition `{name}`")))?;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an observation-only expert demonstration (demo.json).
    DemoGen(Common),
    /// Build the task progress tree and pair dataset from a demonstration.
    TreeBuild(Common),
    /// Train the reward embedding; writes reward.ckpt and loss.csv.
    RewardTrain(Common),
    /// Score the four scripted policies with a trained reward model.
    ScriptedEval(Common),
    /// Train one policy with the chosen reward condition and seed.
    PolicyTrain(Common),
    /// Run the full multi-seed comparison for one condition.
    Experiment(Common),
    /// Render SVG figures from the CSVs in the output directory.
    Plot(Common),
}

fn json_write<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string(value).map_err(|e| HarnessError::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn run(command: &Command) -> Result<(), HarnessError> {
    match command {
        Command::DemoGen(common) => {
            let cfg = common.load()?;
            let seed = common.seed.unwrap_or(cfg.expert_seed);
            let max_steps = common.steps.unwrap_or(2000);
            let expert = generate_expert(&cfg.env, seed, max_steps)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("demo.json");
            json_write(&path, &expert)?;
            println!("wrote {} ({} states)", path.display(), expert.states.len());
        }
        Command::TreeBuild(common) => {
            let mut cfg = common.load()?;
            if let Some(seed) = common.seed {
                cfg.sampler.rng_seed = seed;
            }
            if let Some(depth) = common.steps {
                cfg.sampler.max_depth = depth;
            }
            let expert = generate_expert(&cfg.env, cfg.expert_seed, 2000)?;
            let tree = build_tree(&cfg.env, &expert, &cfg.sampler)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            save_tree(&cfg.output_dir, &tree)?;
            let pairs =
                sample_pairs(&tree, cfg.triplet.epsilon, cfg.pair_count, cfg.sampler.rng_seed)?;
            save_pairs(
                &cfg.output_dir.join("pairs.json"),
                &pairs,
                cfg.triplet.epsilon,
                cfg.sampler.rng_seed,
            )?;
            println!(
                "wrote tree ({} nodes, terminal depth {}) and {} pairs under {}",
                tree.nodes.len(),
                tree.terminal_depth,
                pairs.len(),
                cfg.output_dir.display()
            );
        }
        Command::RewardTrain(common) => {
            let mut cfg = common.load()?;
            if let Some(iters) = common.steps {
                cfg.iters = iters;
            }
            if let Some(seed) = common.seed {
                cfg.sampler.rng_seed = seed;
            }
            let dir = cfg.output_dir.clone();
            stage_reward_model(&cfg, &dir)?;
            println!("wrote {} and {}", dir.join("reward.ckpt").display(), dir.join("loss.csv").display());
        }
        Command::ScriptedEval(common) => {
            let cfg = common.load()?;
            let model = RewardModel::load(&cfg.output_dir.join("reward.ckpt"))?;
            let seed = common.seed.unwrap_or(cfg.expert_seed);
            let max_steps = common.steps.unwrap_or(cfg.scripted_steps);
            for kind in ScriptedPolicyKind::ALL {
                let rows = run_scripted(kind, &model, &cfg.env, seed, max_steps)?;
                let path = cfg.output_dir.join(format!("trace_{}.csv", kind.name()));
                write_trace_csv(&path, &rows)?;
                println!("wrote {} ({} rows)", path.display(), rows.len());
            }
        }
        Command::PolicyTrain(common) => {
            let cfg = common.load()?;
            let seed = common.seed.unwrap_or(cfg.seeds[0]);
            let total_steps = common.steps.unwrap_or(cfg.total_steps);
            let model;
            let engineered = EngineeredRewardConfig::defaults_for(&cfg.env);
            let source = match cfg.condition {
                Condition::Drem => {
                    model = RewardModel::load(&cfg.output_dir.join("reward.ckpt"))?;
                    RewardSource::Dense(&model)
                }
                Condition::ImageOnly => {
                    model = RewardModel::load(&cfg.output_dir.join("reward.ckpt"))?;
                    RewardSource::DenseImageOnly(&model)
                }
                Condition::Sparse => RewardSource::Sparse,
                Condition::Engineered => RewardSource::Engineered(&engineered),
            };
            let (curve, agent) = train_policy(&cfg.env, &source, &cfg.sac, total_steps, seed)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            write_curve_csv(&cfg.output_dir.join("curve.csv"), &curve)?;
            save_policy(&cfg.output_dir.join("policy.ckpt"), &agent)?;
            let last = curve.last().map(|p| p.eval_success_rate).unwrap_or(f64::NAN);
            println!(
                "wrote curve.csv and policy.ckpt under {} (final success rate {last:.2})",
                cfg.output_dir.display()
            );
        }
        Command::Experiment(common) => {
            let mut cfg = common.load()?;
            if let Some(steps) = common.steps {
                cfg.total_steps = steps;
            }
            let manifest = run_experiment(&cfg)?;
            for entry in &manifest.entries {
                println!("seed {}: {}", entry.seed, entry.status);
            }
            println!(
                "wrote {}",
                cfg.output_dir.join(cfg.condition.name()).join("manifest.json").display()
            );
        }
        Command::Plot(common) => {
            let cfg = common.load()?;
            let dir = match &common.out {
                Some(out) => out.clone(),
                None => cfg.output_dir.join(cfg.condition.name()),
            };
            for path in emit_plots(&dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
