//! Subcommand bodies: data preparation, training, evaluation, synthetic
//! generation and sampling statistics. Every artifact is written atomically.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, RunConfig};
use super::synthetic::{random_features, Manifest, SyntheticError, SyntheticSpec};
use crate::graph::{Features, GraphError, MultiRelGraph};
use crate::io::{derive_seed, stream, write_atomic};
use crate::sampler::{sample_neighborhood_with_rng, SampleStats, SamplerError};
use crate::train::{
    evaluate, fit, history_csv, Checkpoint, EvalSet, TrainConfig, TrainData, TrainError, TrainState,
};

pub const SYNTHETIC_EDGES: &str = "synthetic.tsv";
pub const SYNTHETIC_FEATURES: &str = "synthetic.features";
pub const MANIFEST: &str = "manifest.json";
pub const HISTORY: &str = "history.csv";
pub const CHECKPOINT: &str = "best.ckpt";
pub const RESOLVED: &str = "config.resolved";
pub const FINAL: &str = "final.json";
pub const EVAL: &str = "eval.json";
pub const SAMPLE_STATS: &str = "sample_stats.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl RunError {
    /// Bad input rather than a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RunError::Config(_) | RunError::Synthetic(SyntheticError::Infeasible(_)) | RunError::Train(TrainError::Config(_))
        )
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    write_atomic(path, bytes).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io {
        path: dir.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn synthetic_spec(cfg: &RunConfig) -> Result<SyntheticSpec, ConfigError> {
    Ok(SyntheticSpec {
        num_nodes: cfg.parsed("synthetic.num_nodes")?,
        num_noise_relations: cfg.parsed("synthetic.num_noise_relations")?,
        edges_per_noise_relation: cfg.parsed("synthetic.edges_per_noise_relation")?,
        informative_relation_edges: cfg.parsed("synthetic.informative_relation_edges")?,
        target_relation_edges: cfg.parsed("synthetic.target_relation_edges")?,
        seed: derive_seed(cfg.seed()?, &[stream::SYNTHETIC]),
    })
}

/// The planted task as written by [`gen_synthetic`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub graph: MultiRelGraph,
    pub manifest: Manifest,
    /// Present when `synthetic.feature_dim > 0`.
    pub features: Option<Features>,
}

/// Text form read by [`Features::load`].
fn features_text(x: &ndarray::Array2<f64>) -> String {
    let mut out = format!("{} {}\n", x.nrows(), x.ncols());
    for row in x.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Generates the planted task and writes the edges, vocabulary sidecars,
/// manifest and (optionally) node features into `run_dir`.
pub fn gen_synthetic(cfg: &RunConfig, run_dir: &Path) -> Result<Synthetic, RunError> {
    let spec = synthetic_spec(cfg)?;
    let (graph, manifest) = spec.generate()?;
    create_dir(run_dir)?;
    graph.write_tsv(&run_dir.join(SYNTHETIC_EDGES))?;
    write_json(&run_dir.join(MANIFEST), &manifest)?;
    let dim: usize = cfg.parsed("synthetic.feature_dim")?;
    let features = if dim > 0 {
        let x = random_features(graph.num_nodes(), dim, derive_seed(cfg.seed()?, &[stream::SYNTHETIC, 2]));
        write(&run_dir.join(SYNTHETIC_FEATURES), features_text(&x).as_bytes())?;
        Some(Features::Dense(x))
    } else {
        None
    };
    Ok(Synthetic {
        graph,
        manifest,
        features,
    })
}

/// Data and training configuration for one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: TrainData,
    pub config: TrainConfig,
    /// Present when the run uses the generated planted task.
    pub manifest: Option<Manifest>,
}

pub fn prepare(cfg: &RunConfig, run_dir: &Path) -> Result<Prepared, RunError> {
    let config = cfg.train_config()?;
    let seed = config.seed;
    let (graph, manifest, generated) = match cfg.optional("edges") {
        Some(path) => (MultiRelGraph::load_tsv(Path::new(path))?, None, None),
        None => {
            let s = gen_synthetic(cfg, run_dir)?;
            (s.graph, Some(s.manifest), s.features)
        }
    };
    let predict: Option<Vec<usize>> = match cfg.optional("predict_relations") {
        Some(_) => {
            let labels: Vec<String> = cfg.list("predict_relations")?;
            let ids = labels
                .iter()
                .map(|l| {
                    graph.vocab().relation_id(l).ok_or_else(|| ConfigError::Invalid {
                        key: "predict_relations".into(),
                        value: l.clone(),
                        reason: "no such relation in the edge file".into(),
                    })
                })
                .collect::<Result<_, _>>()?;
            Some(ids)
        }
        None => manifest.as_ref().map(|m| vec![m.target_relation]),
    };
    let features = match (cfg.optional("features"), generated) {
        (Some(path), _) => Features::load(Path::new(path))?,
        (None, Some(f)) => f,
        (None, None) => Features::OneHot(graph.num_nodes()),
    };
    let split = graph.split_edges(cfg.split_fractions()?, derive_seed(seed, &[stream::SPLIT]))?;
    let data = TrainData::prepare(graph, features, &split, predict.as_deref(), seed)?;
    Ok(Prepared {
        data,
        config,
        manifest,
    })
}

/// Contents of `final.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    /// Test metrics of the best-validation parameters.
    pub pr_auc: f64,
    pub roc_auc: f64,
    /// Seconds for the whole run; 0 when timing is off.
    pub wall_clock: f64,
    pub val_pr_auc: f64,
    pub val_roc_auc: f64,
    pub best_epoch: usize,
    pub epochs: usize,
    /// `l` of the best-validation parameters.
    pub relation_logits: Vec<f64>,
    /// `l` after the last epoch.
    pub final_relation_logits: Vec<f64>,
    /// Largest per-hop sampled edge count of any training batch.
    pub max_edge_touches: Vec<usize>,
    /// Per-hop caps `c_k * batch_size`.
    pub edge_caps: Vec<usize>,
    pub informative_relation: Option<usize>,
    pub noise_relations: Vec<usize>,
}

/// Trains and writes `config.resolved`, `history.csv`, `best.ckpt` and
/// `final.json` into `run_dir`.
pub fn run_train(cfg: &RunConfig, run_dir: &Path) -> Result<FinalReport, RunError> {
    let start = Instant::now();
    create_dir(run_dir)?;
    write(&run_dir.join(RESOLVED), cfg.resolved().as_bytes())?;
    let Prepared {
        data,
        config,
        manifest,
    } = prepare(cfg, run_dir)?;
    config.validate()?;
    let history_path = run_dir.join(HISTORY);
    let mut rows = Vec::new();
    let mut write_err = None;
    let outcome = fit(TrainState::init(&config, &data), &config, &data, |row| {
        rows.push(*row);
        if let Err(e) = write(&history_path, history_csv(&rows).as_bytes()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    write(&history_path, history_csv(&outcome.history).as_bytes())?;
    Checkpoint::new(&outcome.best, &config, outcome.best_val.pr_auc).save(&run_dir.join(CHECKPOINT))?;
    let test = evaluate(&outcome.best, &config, &data, EvalSet::Test)?;
    let b = config.batch_size;
    let report = FinalReport {
        pr_auc: test.pr_auc,
        roc_auc: test.roc_auc,
        wall_clock: if config.timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
        val_pr_auc: outcome.best_val.pr_auc,
        val_roc_auc: outcome.best_val.roc_auc,
        best_epoch: outcome.best_epoch,
        epochs: outcome.history.len(),
        relation_logits: outcome.best.logits.clone(),
        final_relation_logits: outcome.final_logits,
        max_edge_touches: outcome.max_edge_touches,
        edge_caps: config.plan.cap_multipliers().iter().map(|c| c * b).collect(),
        informative_relation: manifest.as_ref().map(|m| m.informative_relation),
        noise_relations: manifest.map(|m| m.noise_relations).unwrap_or_default(),
    };
    write_json(&run_dir.join(FINAL), &report)?;
    Ok(report)
}

fn checkpoint_path(cfg: &RunConfig, run_dir: &Path) -> PathBuf {
    cfg.optional("checkpoint")
        .map(PathBuf::from)
        .unwrap_or_else(|| run_dir.join(CHECKPOINT))
}

/// Training configuration with the sampler, weighting, estimator and seed
/// the checkpoint was trained with.
fn restored(cfg: &RunConfig, ck: &Checkpoint) -> Result<TrainConfig, RunError> {
    let mut config = cfg.train_config()?;
    config.sampler = ck.sampler;
    config.weighting = ck.weighting;
    config.estimator = ck.estimator;
    config.seed = ck.seed;
    Ok(config)
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub val_pr_auc: f64,
    pub val_roc_auc: f64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    /// Validation PR-AUC stored in the checkpoint at save time.
    pub checkpoint_val_pr_auc: f64,
    pub checkpoint_epoch: usize,
}

/// Scores the validation and test sets with a saved checkpoint and writes
/// `eval.json`. The data split is rebuilt from the checkpoint's seed.
pub fn run_eval(cfg: &RunConfig, run_dir: &Path) -> Result<EvalReport, RunError> {
    let ck = Checkpoint::load(&checkpoint_path(cfg, run_dir))?;
    let mut cfg = cfg.clone();
    cfg.set("seed", &ck.seed.to_string())?;
    let prepared = prepare(&cfg, run_dir)?;
    let config = restored(&cfg, &ck)?;
    let data = &prepared.data;
    if ck.model.num_relations() != data.graph.num_relations() || ck.model.input_dim() != data.features.dim() {
        return Err(RunError::Train(TrainError::Config(format!(
            "checkpoint expects {} relations and input width {}, data has {} and {}",
            ck.model.num_relations(),
            ck.model.input_dim(),
            data.graph.num_relations(),
            data.features.dim()
        ))));
    }
    let (stored, epoch) = (ck.best_val_pr_auc, ck.epoch);
    let state = ck.into_state(&config);
    let val = evaluate(&state, &config, data, EvalSet::Valid)?;
    let test = evaluate(&state, &config, data, EvalSet::Test)?;
    let report = EvalReport {
        val_pr_auc: val.pr_auc,
        val_roc_auc: val.roc_auc,
        pr_auc: test.pr_auc,
        roc_auc: test.roc_auc,
        checkpoint_val_pr_auc: stored,
        checkpoint_epoch: epoch,
    };
    create_dir(run_dir)?;
    write_json(&run_dir.join(EVAL), &report)?;
    Ok(report)
}

/// Samples `stats.batches` training batches and writes the per-relation
/// candidate and sampled totals to `sample_stats.csv`. Uses the checkpoint's
/// logits when one exists, the initial ones otherwise.
pub fn run_sample_stats(cfg: &RunConfig, run_dir: &Path) -> Result<SampleStats, RunError> {
    let path = checkpoint_path(cfg, run_dir);
    let ck = if path.exists() {
        Some(Checkpoint::load(&path)?)
    } else {
        None
    };
    let prepared = prepare(cfg, run_dir)?;
    let data = &prepared.data;
    let (config, state) = match ck {
        Some(ck) => {
            let config = restored(cfg, &ck)?;
            let state = ck.into_state(&config);
            (config, state)
        }
        None => {
            let config = prepared.config.clone();
            let state = TrainState::init(&config, data);
            (config, state)
        }
    };
    if config.sampler.is_none() {
        return Err(RunError::Config(ConfigError::Invalid {
            key: "sampler".into(),
            value: "none".into(),
            reason: "sample-stats needs a sampler".into(),
        }));
    }
    let batches: usize = cfg.parsed("stats.batches")?;
    let logits = state.sampler_logits(&config, data);
    let mut order = data.train_pos.clone();
    let mut stats = SampleStats::new(data.graph.num_relations());
    let mut i = 0u64;
    while (i as usize) < batches {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::BATCH, u64::MAX, i]));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            if i as usize == batches {
                break;
            }
            let sg = sample_neighborhood_with_rng(&data.train_graph, batch, &logits, &config.plan, batch.len(), &mut rng)?;
            stats.add(&sg);
            i += 1;
        }
    }
    create_dir(run_dir)?;
    write(&run_dir.join(SAMPLE_STATS), stats.to_csv().as_bytes())?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_overrides([
            "synthetic.num_nodes=60",
            "synthetic.num_noise_relations=2",
            "synthetic.edges_per_noise_relation=80",
            "synthetic.informative_relation_edges=40",
            "synthetic.target_relation_edges=30",
            "hidden_dim=4",
            "max_epochs=2",
            "patience=2",
            "batch_size=10",
            "timing=off",
        ])
        .unwrap();
        c
    }

    #[test]
    fn train_writes_artifacts_and_eval_matches() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.set("inference", "full").unwrap();
        let report = run_train(&cfg, dir.path()).unwrap();
        for f in [HISTORY, CHECKPOINT, RESOLVED, FINAL, SYNTHETIC_EDGES, MANIFEST] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(report.wall_clock, 0.0);
        assert_eq!(report.informative_relation, Some(0));
        let eval = run_eval(&cfg, dir.path()).unwrap();
        assert_eq!(eval.val_pr_auc, report.val_pr_auc);
        assert_eq!(eval.checkpoint_val_pr_auc, report.val_pr_auc);
    }

    #[test]
    fn sample_stats_counts_every_batch() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.set("stats.batches", "3").unwrap();
        let stats = run_sample_stats(&cfg, dir.path()).unwrap();
        assert!(stats.sampled_counts.iter().sum::<u64>() > 0);
        let csv = std::fs::read_to_string(dir.path().join(SAMPLE_STATS)).unwrap();
        assert!(csv.starts_with("relation_id,candidate_count,sampled_count,fraction\n"));
        assert_eq!(csv.lines().count(), 1 + 4);
    }

    #[test]
    fn generated_features_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.set("synthetic.feature_dim", "3").unwrap();
        let s = gen_synthetic(&cfg, dir.path()).unwrap();
        let loaded = Features::load(&dir.path().join(SYNTHETIC_FEATURES)).unwrap();
        assert_eq!(Some(loaded), s.features);
    }

    #[test]
    fn unknown_predict_label_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        gen_synthetic(&cfg, dir.path()).unwrap();
        cfg.set("edges", dir.path().join(SYNTHETIC_EDGES).to_str().unwrap()).unwrap();
        cfg.set("predict_relations", "nope").unwrap();
        let err = prepare(&cfg, dir.path()).unwrap_err();
        assert!(err.is_config());
    }
}
