//! Wall-clock comparison of full message passing against uniform and
//! learned sampling on a dense random graph.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::runner::RunError;
use super::synthetic::dense_graph;
use crate::graph::Features;
use crate::io::{derive_seed, stream, write_atomic};
use crate::sampler::{sample_neighborhood_with_rng, SamplerMode};
use crate::train::{evaluate_edges, train_epoch, TrainConfig, TrainData, TrainState};

pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_HEADER: &str = "variant,phase,ms_mean,ms_std,speedup_vs_full,max_edge_touches,edge_budget";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub phase: String,
    pub ms_mean: f64,
    pub ms_std: f64,
    /// Full-variant mean over this mean for the same phase.
    pub speedup_vs_full: Option<f64>,
    /// Largest per-hop edge count of any batch (message-passing edges per
    /// layer for the full variant).
    pub max_edge_touches: Vec<usize>,
    /// Per-hop caps `c_k * batch_size`; empty for the full variant.
    pub edge_budget: Vec<usize>,
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{},{},{}",
            self.variant,
            self.phase,
            self.ms_mean,
            self.ms_std,
            self.speedup_vs_full.map(|s| format!("{s:.4}")).unwrap_or_default(),
            join(&self.max_edge_touches),
            join(&self.edge_budget)
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Sample mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Timings {
    epoch: Vec<f64>,
    inference: Vec<f64>,
    sampling: Vec<f64>,
    touches: Vec<usize>,
}

fn time_variant(config: &TrainConfig, data: &TrainData, repetitions: usize) -> Result<Timings, RunError> {
    let mut state = TrainState::init(config, data);
    let b = config.batch_size;
    let pos = &data.valid_pos[..b.min(data.valid_pos.len())];
    let neg = &data.valid_neg[..b.min(data.valid_neg.len())];
    let mut t = Timings {
        epoch: Vec::new(),
        inference: Vec::new(),
        sampling: Vec::new(),
        touches: Vec::new(),
    };
    for rep in 0..=repetitions {
        let start = Instant::now();
        let summary = train_epoch(&mut state, config, data)?;
        let epoch_ms = ms_since(start);

        let start = Instant::now();
        evaluate_edges(&state, config, data, pos, neg, 0)?;
        let inference_ms = ms_since(start);

        let mut sampling_ms = 0.0;
        if config.sampler.is_some() {
            let logits = state.sampler_logits(config, data);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::BATCH, u64::MAX, rep as u64]));
            let mut targets = pos.to_vec();
            targets.extend_from_slice(neg);
            let start = Instant::now();
            sample_neighborhood_with_rng(&data.train_graph, &targets, &logits, &config.plan, pos.len(), &mut rng)?;
            sampling_ms = ms_since(start);
        }
        if t.touches.len() < summary.max_edge_touches.len() {
            t.touches.resize(summary.max_edge_touches.len(), 0);
        }
        for (m, &x) in t.touches.iter_mut().zip(&summary.max_edge_touches) {
            *m = (*m).max(x);
        }
        // the first repetition warms caches and is discarded
        if rep > 0 {
            t.epoch.push(epoch_ms);
            t.inference.push(inference_ms);
            t.sampling.push(sampling_ms);
        }
    }
    Ok(t)
}

/// Runs `bench.repetitions` timed repetitions (after one warmup) of each
/// variant and writes `bench.csv` into `run_dir`.
pub fn run_bench(cfg: &RunConfig, run_dir: &Path) -> Result<Vec<BenchRow>, RunError> {
    let base = cfg.train_config()?;
    let seed = base.seed;
    let graph = dense_graph(
        cfg.parsed("bench.num_nodes")?,
        cfg.parsed("bench.num_relations")?,
        cfg.parsed("bench.mean_degree")?,
        derive_seed(seed, &[stream::SYNTHETIC, 1]),
    )?;
    let repetitions: usize = cfg.parsed::<usize>("bench.repetitions")?.max(1);
    let split = graph.split_edges(cfg.split_fractions()?, derive_seed(seed, &[stream::SPLIT]))?;
    let features = Features::OneHot(graph.num_nodes());
    let data = TrainData::prepare(graph, features, &split, None, seed)?;

    let b = base.batch_size;
    let caps: Vec<usize> = base.plan.cap_multipliers().iter().map(|c| c * b).collect();
    let mut rows = Vec::new();
    let mut full: Option<(f64, f64)> = None;
    for (name, sampler) in [
        ("full", None),
        ("uniform", Some(SamplerMode::Uniform)),
        ("learned", Some(SamplerMode::Learned)),
    ] {
        let config = TrainConfig {
            sampler,
            timing: true,
            max_epochs: repetitions + 1,
            patience: base.patience.min(repetitions + 1),
            ..base.clone()
        };
        config.validate()?;
        let t = time_variant(&config, &data, repetitions)?;
        let (touches, budget) = match sampler {
            None => (vec![data.train_graph.num_edges(); config.model.num_layers], Vec::new()),
            Some(_) => (t.touches.clone(), caps.clone()),
        };
        let epoch = mean_std(&t.epoch);
        let inference = mean_std(&t.inference);
        if sampler.is_none() {
            full = Some((epoch.0, inference.0));
        }
        let (full_epoch, full_inference) = full.expect("full variant runs first");
        let row = |phase: &str, (mean, std): (f64, f64), speedup: Option<f64>| BenchRow {
            variant: name.to_string(),
            phase: phase.to_string(),
            ms_mean: mean,
            ms_std: std,
            speedup_vs_full: speedup,
            max_edge_touches: touches.clone(),
            edge_budget: budget.clone(),
        };
        rows.push(row("train_epoch", epoch, Some(full_epoch / epoch.0)));
        rows.push(row("inference_batch", inference, Some(full_inference / inference.0)));
        if sampler.is_some() {
            rows.push(row("sampling_batch", mean_std(&t.sampling), None));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| RunError::Io {
        path: run_dir.display().to_string(),
        msg: e.to_string(),
    })?;
    let path = run_dir.join(BENCH_CSV);
    write_atomic(&path, bench_csv(&rows).as_bytes()).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn csv_shape_and_caps() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_overrides([
            "bench.num_nodes=120",
            "bench.mean_degree=10",
            "bench.repetitions=1",
            "hidden_dim=4",
            "batch_size=20",
        ])
        .unwrap();
        let rows = run_bench(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 8);
        for r in rows.iter().filter(|r| r.variant != "full") {
            assert_eq!(r.edge_budget, vec![140, 60]);
            assert!(r.max_edge_touches.iter().zip(&r.edge_budget).all(|(t, c)| t <= c));
        }
        let csv = std::fs::read_to_string(dir.path().join(BENCH_CSV)).unwrap();
        assert!(csv.starts_with(BENCH_HEADER));
        assert_eq!(csv.lines().count(), 9);
    }
}
