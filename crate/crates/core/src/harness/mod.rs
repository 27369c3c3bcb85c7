//! Experiment orchestration: configs, the per-seed pipeline, manifests
//! with checksums, and figure emission.
//!
//! An experiment runs one reward condition over a list of seeds. Learned
//! conditions train the embedding once (shared across seeds, which only
//! vary the policy-learning randomness); every seed then trains a policy
//! and writes its learning curve. A `manifest.json` records configs,
//! seed statuses, and SHA-256 checksums of all artifacts.

pub mod plot;
pub mod scripted;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;
use crate::model::loss::TripletConfig;
use crate::model::NetArch;
use crate::reward::{
    train_embedding, write_loss_csv, EngineeredRewardConfig, RewardModel, TrainConfig,
};
use crate::sac::{save_policy, train_policy, write_curve_csv, CurvePoint, RewardSource, SacConfig};
use crate::sampler::{
    build_tree, generate_expert, sample_pairs, ExpertTrajectory, SamplerConfig, TaskProgressTree,
};
use crate::sim::{observe, EnvConfig};

pub use scripted::{run_scripted, scripted_states, write_trace_csv, ScriptedPolicyKind, TraceRow};

/// Reward condition under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Learned dense reward from all modalities; policy sees images + F/T.
    Drem,
    /// Learned dense reward trained on images only (F/T zeroed).
    ImageOnly,
    /// Binary success at episode end.
    Sparse,
    /// Handcrafted pose-distance reward.
    Engineered,
}

impl Condition {
    pub const ALL: [Condition; 4] =
        [Condition::Drem, Condition::ImageOnly, Condition::Sparse, Condition::Engineered];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::Drem => "drem",
            Condition::ImageOnly => "image_only",
            Condition::Sparse => "sparse",
            Condition::Engineered => "engineered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Condition::Drem | Condition::ImageOnly)
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_iters() -> usize {
    20_000
}
fn default_total_steps() -> usize {
    30_000
}
fn default_pair_count() -> usize {
    2000
}
fn default_expert_seed() -> u64 {
    12
}
fn default_latent_dim() -> usize {
    128
}
fn default_scripted_steps() -> usize {
    160
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything one experiment needs; loadable from a TOML file where every
/// field is optional and defaults to the standard desk-scale setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub sampler: SamplerConfig,
    pub triplet: TripletConfig,
    pub sac: SacConfig,
    pub condition: Condition,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Embedding-training iterations.
    pub iters: usize,
    /// SAC environment steps per seed.
    pub total_steps: usize,
    pub pair_count: usize,
    pub expert_seed: u64,
    pub latent_dim: usize,
    pub scripted_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::peg_hole();
        let sampler = SamplerConfig::defaults_for(&env);
        ExperimentConfig {
            env,
            sampler,
            triplet: TripletConfig::default(),
            sac: SacConfig::default(),
            condition: Condition::Drem,
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            iters: default_iters(),
            total_steps: default_total_steps(),
            pair_count: default_pair_count(),
            expert_seed: default_expert_seed(),
            latent_dim: default_latent_dim(),
            scripted_steps: default_scripted_steps(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        self.env.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sampler.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.triplet.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sac.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.pair_count == 0 || self.pair_count % 2 != 0 {
            return Err(HarnessError::Config("pair_count must be positive and even".into()));
        }
        Ok(())
    }

    pub fn arch(&self) -> NetArch {
        NetArch::for_observation(self.env.image_size, self.env.ft_history_len, self.latent_dim)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { triplet: self.triplet, iters: self.iters, seed, ..TrainConfig::default() }
    }
}

/// Zeroes every F/T window in the tree; used by the image-only condition.
pub fn strip_ft(tree: &mut TaskProgressTree) {
    for node in &mut tree.nodes {
        for row in node.observation.ft_history.iter_mut() {
            *row = [0.0; 3];
        }
    }
}

/// Builds the progress tree and trains the embedding for a learned
/// condition; writes `reward.ckpt` and `loss.csv` into `dir`.
pub fn stage_reward_model(
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(RewardModel, ExpertTrajectory), HarnessError> {
    fs::create_dir_all(dir)?;
    let expert = generate_expert(&cfg.env, cfg.expert_seed, 2000)?;
    let mut tree = build_tree(&cfg.env, &expert, &cfg.sampler)?;
    let mut start_obs = observe(&expert.states[0], None, &cfg.env);
    if cfg.condition == Condition::ImageOnly {
        strip_ft(&mut tree);
        for row in start_obs.ft_history.iter_mut() {
            *row = [0.0; 3];
        }
    }
    let pairs = sample_pairs(&tree, cfg.triplet.epsilon, cfg.pair_count, cfg.sampler.rng_seed)?;
    let train_cfg = cfg.train_config(cfg.sampler.rng_seed);
    let (model, log) = train_embedding(&cfg.env, &tree, &pairs, &start_obs, cfg.arch(), &train_cfg)?;
    model.save(&dir.join("reward.ckpt"))?;
    write_loss_csv(&dir.join("loss.csv"), &log)?;
    Ok((model, expert))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub status: String,
    pub files: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub condition: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub shared_files: Vec<ArtifactRecord>,
    pub entries: Vec<SeedEntry>,
}

pub fn sha256_hex(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn record(root: &Path, path: &Path) -> Result<ArtifactRecord, HarnessError> {
    Ok(ArtifactRecord {
        path: path.strip_prefix(root).unwrap_or(path).display().to_string(),
        sha256: sha256_hex(path)?,
    })
}

/// Runs the full experiment for `cfg.condition` over all seeds. Stage
/// errors mark that seed failed in the manifest; other seeds continue.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest, HarnessError> {
    cfg.validate()?;
    let root = cfg.output_dir.join(cfg.condition.name());
    fs::create_dir_all(&root)?;

    let mut shared_files = Vec::new();
    let model = if cfg.condition.is_learned() {
        let (model, _) = stage_reward_model(cfg, &root)?;
        shared_files.push(record(&root, &root.join("reward.ckpt"))?);
        shared_files.push(record(&root, &root.join("loss.csv"))?);
        Some(model)
    } else {
        None
    };
    let engineered = EngineeredRewardConfig::defaults_for(&cfg.env);

    let mut entries = Vec::new();
    let mut curves: Vec<Vec<CurvePoint>> = Vec::new();
    for &seed in &cfg.seeds {
        let seed_dir = root.join(seed.to_string());
        let result = (|| -> Result<Vec<ArtifactRecord>, HarnessError> {
            fs::create_dir_all(&seed_dir)?;
            let source = match cfg.condition {
                Condition::Drem => RewardSource::Dense(model.as_ref().unwrap()),
                Condition::ImageOnly => RewardSource::DenseImageOnly(model.as_ref().unwrap()),
                Condition::Sparse => RewardSource::Sparse,
                Condition::Engineered => RewardSource::Engineered(&engineered),
            };
            let (curve, agent) =
                train_policy(&cfg.env, &source, &cfg.sac, cfg.total_steps, seed)?;
            write_curve_csv(&seed_dir.join("curve.csv"), &curve)?;
            save_policy(&seed_dir.join("policy.ckpt"), &agent)?;
            curves.push(curve);
            Ok(vec![
                record(&root, &seed_dir.join("curve.csv"))?,
                record(&root, &seed_dir.join("policy.ckpt"))?,
            ])
        })();
        match result {
            Ok(files) => entries.push(SeedEntry { seed, status: "ok".into(), files }),
            Err(e) => {
                entries.push(SeedEntry { seed, status: format!("error: {e}"), files: vec![] })
            }
        }
    }

    if !curves.is_empty() {
        let agg = aggregate_curves(&curves);
        write_aggregate_csv(&root.join("aggregate.csv"), &agg)?;
        shared_files.push(record(&root, &root.join("aggregate.csv"))?);
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        condition: cfg.condition.name().to_string(),
        seeds: cfg.seeds.clone(),
        config: cfg.clone(),
        shared_files,
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| HarnessError::Format(e.to_string()))?;
    fs::write(root.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Across-seed success-rate statistics at each evaluation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub step: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate_curves(curves: &[Vec<CurvePoint>]) -> Vec<AggregatePoint> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let vals: Vec<f64> = curves.iter().map(|c| c[i].eval_success_rate).collect();
            AggregatePoint {
                step: curves[0][i].step,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, points: &[AggregatePoint]) -> std::io::Result<()> {
    let mut out = String::from("step,mean,min,max\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.step, p.mean, p.min, p.max));
    }
    std::fs::write(path, out)
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Format(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?);
    }
    Ok((header, rows))
}

/// Renders figures from the CSVs under `dir`: scripted traces (one line
/// per `trace_*.csv`) and learning curves (per-seed lines plus the
/// aggregate min/max band). Returns the written SVG paths.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();

    let mut trace_series = Vec::new();
    for kind in ScriptedPolicyKind::ALL {
        let path = dir.join(format!("trace_{}.csv", kind.name()));
        if path.exists() {
            let (_, rows) = parse_csv(&path)?;
            trace_series.push(plot::Series {
                name: kind.name().to_string(),
                points: rows.iter().map(|r| (r[0], r[1])).collect(),
            });
        }
    }
    if !trace_series.is_empty() {
        let out = dir.join("reward_traces.svg");
        plot::line_plot(&out, "Scripted reward traces", "step", "reward", &trace_series, None)?;
        written.push(out);
    }

    let mut curve_series = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let curve = entry.path().join("curve.csv");
        if entry.path().is_dir() && curve.exists() {
            let (_, rows) = parse_csv(&curve)?;
            curve_series.push(plot::Series {
                name: format!("seed {}", entry.file_name().to_string_lossy()),
                points: rows.iter().map(|r| (r[0], r[1])).collect(),
            });
        }
    }
    let agg_path = dir.join("aggregate.csv");
    if !curve_series.is_empty() {
        let band = if agg_path.exists() {
            let (_, rows) = parse_csv(&agg_path)?;
            Some(plot::Band {
                lower: rows.iter().map(|r| (r[0], r[2])).collect(),
                upper: rows.iter().map(|r| (r[0], r[3])).collect(),
                color: "#1f77b4",
            })
        } else {
            None
        };
        let out = dir.join("learning_curves.svg");
        plot::line_plot(
            &out,
            "Evaluation success rate",
            "environment step",
            "success rate",
            &curve_series,
            band.as_ref(),
        )?;
        written.push(out);
    }

    if written.is_empty() {
        return Err(HarnessError::Format(format!(
            "no plottable csv files under {}",
            dir.display()
        )));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.env.image_size = 8;
        cfg.sampler = SamplerConfig::defaults_for(&cfg.env);
        cfg.sampler.m = 12;
        cfg.sampler.max_depth = 120;
        cfg.condition = Condition::Sparse;
        cfg.seeds = vec![0, 1];
        cfg.output_dir = dir.to_path_buf();
        cfg.iters = 2;
        cfg.total_steps = 40;
        cfg.pair_count = 20;
        cfg.latent_dim = 16;
        cfg.sac.batch_size = 4;
        cfg.sac.start_steps = 8;
        cfg.sac.update_every = 4;
        cfg.sac.episode_limit = 10;
        cfg.sac.eval_interval = 20;
        cfg.sac.eval_episodes = 1;
        cfg
    }

    #[test]
    fn toml_round_trip_and_partial_parse() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        // A partial file only overrides what it names.
        let partial: ExperimentConfig =
            toml::from_str("condition = \"engineered\"\nseeds = [7]\n").unwrap();
        assert_eq!(partial.condition, Condition::Engineered);
        assert_eq!(partial.seeds, vec![7]);
        assert_eq!(partial.iters, 20_000);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.pair_count = 7;
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn sparse_experiment_skips_embedding_and_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let manifest = run_experiment(&cfg).unwrap();
        assert_eq!(manifest.entries.len(), 2);
        assert!(manifest.entries.iter().all(|e| e.status == "ok"));
        let root = dir.path().join("sparse");
        assert!(!root.join("reward.ckpt").exists(), "sparse must skip embedding");
        assert!(root.join("manifest.json").exists());
        assert!(root.join("aggregate.csv").exists());
        for seed in [0u64, 1] {
            assert!(root.join(seed.to_string()).join("curve.csv").exists());
            assert!(root.join(seed.to_string()).join("policy.ckpt").exists());
        }
        let plots = emit_plots(&root).unwrap();
        assert_eq!(plots.len(), 1);
    }

    #[test]
    fn rerun_reproduces_identical_curve_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        run_experiment(&cfg).unwrap();
        let curve = dir.path().join("sparse").join("0").join("curve.csv");
        let first = fs::read(&curve).unwrap();
        run_experiment(&cfg).unwrap();
        assert_eq!(first, fs::read(&curve).unwrap());
        let manifest: Manifest = serde_json::from_str(
            &fs::read_to_string(dir.path().join("sparse").join("manifest.json")).unwrap(),
        )
        .unwrap();
        let rec = manifest.entries[0].files.iter().find(|f| f.path.ends_with("curve.csv"));
        assert_eq!(rec.unwrap().sha256, sha256_hex(&curve).unwrap());
    }

    #[test]
    fn aggregate_band_bounds_are_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        run_experiment(&cfg).unwrap();
        let (_, rows) = parse_csv(&dir.path().join("sparse").join("aggregate.csv")).unwrap();
        assert!(!rows.is_empty());
        for r in rows {
            assert!(r[3] >= r[1] && r[1] >= r[2], "min <= mean <= max violated: {r:?}");
        }
    }
}
