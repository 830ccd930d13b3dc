//! Minibatch training, evaluation and early stopping.
//!
//! Tensor parameters are updated from tape gradients. The relation logits
//! `l` receive tape gradients when messages are relation-weighted and the
//! score-function estimate `(L(g) - b) * d log p_l(g) / dl` when neighborhoods
//! are sampled with learned probabilities; both land in a separate Adam
//! state with the same hyperparameters.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Adam, AdamConfig, AutodiffError, Matrix, Tape, Var};
use crate::graph::{Edge, EdgeSplit, Features, GraphError, MultiRelGraph};
use crate::io::{derive_seed, stream, write_atomic};
use crate::metrics::{pr_auc, roc_auc, MetricsError, MetricsReport, ScoredLabels};
use crate::model::{
    encode_full_excluding, encode_sampled, sampled_normalization, score_logits, BoundModel, Estimator,
    LocalIndex, Model, ModelConfig, ModelError, Normalization, WeightingMode,
};
use crate::sampler::{sample_neighborhood_with_rng, SamplePlan, SampledSubgraph, SamplerError, SamplerMode};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:.6e}, logit norm {logit_norm:.6e})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
        logit_norm: f64,
    },
    #[error("no edges to evaluate")]
    EmptyEvaluation,
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        TrainError::Model(ModelError::Autodiff(e))
    }
}

/// Control variate subtracted from the loss in the score-function estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Off,
    /// b <- decay * b + (1 - decay) * L after each batch, starting at the
    /// first batch loss.
    MovingAverage { decay: f64 },
}

/// Neighborhood used when scoring validation and test edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inference {
    /// Sample like in training (full message passing when `sampler` is none).
    Sampled,
    /// Exact expected aggregation over the whole training graph.
    Full,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// `None` trains with full message passing (R-GCN / RW-GCN).
    pub sampler: Option<SamplerMode>,
    pub weighting: WeightingMode,
    pub estimator: Estimator,
    pub plan: SamplePlan,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Step size of `l`; `None` uses `adam.lr`.
    pub logit_lr: Option<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub baseline: Baseline,
    pub inference: Inference,
    /// When false every timing column is reported as 0, which makes the
    /// history bitwise reproducible.
    pub timing: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            sampler: Some(SamplerMode::Learned),
            weighting: WeightingMode::DegreeNormalized,
            estimator: Estimator::RelationalMc,
            plan: SamplePlan::default(),
            batch_size: 100,
            adam: AdamConfig::default(),
            logit_lr: None,
            max_epochs: 300,
            patience: 100,
            baseline: Baseline::Off,
            inference: Inference::Sampled,
            timing: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if self.model.num_layers == 0 || self.model.hidden_dim == 0 || self.model.num_bases == 0 {
            return bad("num_layers, hidden_dim and num_bases must be at least 1");
        }
        if self.sampler.is_some() && self.plan.num_hops() < self.model.num_layers {
            return bad("the sample plan needs at least one hop per layer");
        }
        if let Baseline::MovingAverage { decay } = self.baseline {
            if !(0.0..1.0).contains(&decay) {
                return bad("baseline decay must be in [0, 1)");
            }
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.logit_lr.is_some_and(|lr| !(lr >= 0.0 && lr.is_finite())) {
            return bad("logit_learning_rate must be finite and non-negative");
        }
        Ok(())
    }

    /// Whether `l` is read anywhere in training.
    pub fn uses_logits(&self) -> bool {
        self.sampler == Some(SamplerMode::Learned) || self.weighting == WeightingMode::RelationWeighted
    }
}

/// Graph, features and the fixed edge lists of one experiment.
#[derive(Debug, Clone)]
pub struct TrainData {
    /// Every known edge; negatives are filtered against it.
    pub graph: MultiRelGraph,
    /// Training edges only; the message-passing graph.
    pub train_graph: MultiRelGraph,
    pub features: Features,
    pub train_pos: Vec<Edge>,
    pub valid_pos: Vec<Edge>,
    pub valid_neg: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

impl TrainData {
    /// Positives are the split edges whose relation is in `predict` (all
    /// relations when `None`). Validation and test negatives are drawn once,
    /// one per positive.
    pub fn prepare(
        graph: MultiRelGraph,
        features: Features,
        split: &EdgeSplit,
        predict: Option<&[usize]>,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if features.num_nodes() != graph.num_nodes() {
            return Err(TrainError::Model(ModelError::FeatureRows {
                expected: graph.num_nodes(),
                got: features.num_nodes(),
            }));
        }
        let keep = |edges: &[Edge]| -> Vec<Edge> {
            edges
                .iter()
                .copied()
                .filter(|e| predict.is_none_or(|p| p.contains(&e.rel)))
                .collect()
        };
        let train_pos = keep(&split.train);
        let valid_pos = keep(&split.valid);
        let test_pos = keep(&split.test);
        if train_pos.is_empty() || valid_pos.is_empty() || test_pos.is_empty() {
            return Err(TrainError::Config(
                "every split needs at least one edge of a predicted relation".into(),
            ));
        }
        let negatives = |pos: &[Edge], tag: u64| {
            graph.sample_negatives_seeded(pos, pos.len(), derive_seed(seed, &[stream::EVAL_NEGATIVES, tag]))
        };
        let valid_neg = negatives(&valid_pos, 0)?;
        let test_neg = negatives(&test_pos, 1)?;
        // relations that are never scored stay whole in the message-passing
        // graph; only predicted edges are held out
        let mut message_edges = split.train.clone();
        if let Some(p) = predict {
            message_edges.extend(
                split.valid.iter().chain(&split.test).copied().filter(|e| !p.contains(&e.rel)),
            );
        }
        let train_graph = graph.restricted_to(&message_edges)?;
        Ok(Self {
            graph,
            train_graph,
            features,
            train_pos,
            valid_pos,
            valid_neg,
            test_pos,
            test_neg,
        })
    }
}

/// Parameters plus optimizer state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    /// The relation logits `l`.
    pub logits: Vec<f64>,
    /// Epochs completed.
    pub epoch: usize,
    model_adam: Adam,
    logit_adam: Adam,
    baseline: Option<f64>,
}

impl TrainState {
    /// Fresh parameters. `l` is standard normal when it is used, zero
    /// otherwise.
    pub fn init(config: &TrainConfig, data: &TrainData) -> Self {
        let r = data.graph.num_relations();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::INIT]));
        let model = Model::init(&config.model, data.features.dim(), r, &mut rng);
        let logits = if config.uses_logits() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::LOGITS]));
            (0..r).map(|_| StandardNormal.sample(&mut rng)).collect()
        } else {
            vec![0.0; r]
        };
        Self::from_parts(config, model, logits)
    }

    pub fn from_parts(config: &TrainConfig, model: Model, logits: Vec<f64>) -> Self {
        let model_adam = Adam::new(config.adam, model.shapes());
        let logit_config = AdamConfig {
            lr: config.logit_lr.unwrap_or(config.adam.lr),
            ..config.adam
        };
        let logit_adam = Adam::new(logit_config, [(logits.len(), 1)]);
        Self {
            model,
            logits,
            epoch: 0,
            model_adam,
            logit_adam,
            baseline: None,
        }
    }

    /// Logits the sampler draws with.
    pub fn sampler_logits(&self, config: &TrainConfig, data: &TrainData) -> Vec<f64> {
        match config.sampler {
            Some(SamplerMode::Learned) => self.logits.clone(),
            Some(SamplerMode::InverseFrequency) => data.train_graph.inverse_frequency_logits(),
            _ => vec![0.0; self.logits.len()],
        }
    }

    fn param_norm(&self) -> f64 {
        self.model
            .tensors()
            .iter()
            .map(|m| m.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

fn column(values: &[f64]) -> Matrix {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

/// Message-passing neighborhood for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Neighborhood<'a> {
    /// The whole training graph, minus the listed edges.
    Full { exclude: &'a [Edge] },
    Sampled(&'a SampledSubgraph),
}

/// Coefficients of a full-graph pass. Models trained on sampled
/// neighborhoods use the expected aggregation of their sampler.
pub fn full_normalization(
    tape: &mut Tape,
    config: &TrainConfig,
    logit_var: Option<Var>,
    sampler_logits: &[f64],
) -> Normalization {
    if let (WeightingMode::RelationWeighted, Some(logits)) = (config.weighting, logit_var) {
        return Normalization::Softmax { logits };
    }
    match (config.sampler, config.estimator) {
        (Some(_), Estimator::RelationalMc) => Normalization::Softmax {
            logits: tape.constant(column(sampler_logits)),
        },
        _ => Normalization::PerRelation,
    }
}

/// Decoder logits (M x 1) for `edges`; the edge probability is their
/// sigmoid.
#[allow(clippy::too_many_arguments)]
pub fn forward_logits(
    tape: &mut Tape,
    bound: &BoundModel,
    logit_var: Option<Var>,
    config: &TrainConfig,
    data: &TrainData,
    sampler_logits: &[f64],
    neighborhood: Neighborhood<'_>,
    edges: &[Edge],
) -> Result<Var, TrainError> {
    let (h, index) = match neighborhood {
        Neighborhood::Full { exclude } => {
            let norm = full_normalization(tape, config, logit_var, sampler_logits);
            let h = encode_full_excluding(tape, bound, &data.train_graph, &data.features, &norm, exclude)?;
            (h, LocalIndex::identity(data.graph.num_nodes()))
        }
        Neighborhood::Sampled(sg) => {
            let weight_logits = match config.weighting {
                WeightingMode::RelationWeighted => logit_var,
                WeightingMode::DegreeNormalized => None,
            };
            let norm = sampled_normalization(
                config.weighting,
                config.estimator,
                data.graph.num_relations(),
                weight_logits,
            );
            encode_sampled(tape, bound, sg, &data.features, &norm)?
        }
    };
    Ok(score_logits(tape, bound, h, &index, edges)?)
}

/// Score-function estimate `(loss - baseline) * d log p_l(g) / dl`.
pub fn reinforce_gradient(loss: f64, baseline: f64, sg: &SampledSubgraph) -> Vec<f64> {
    sg.log_prob_gradient()
        .into_iter()
        .map(|g| (loss - baseline) * g)
        .collect()
}

fn labels(num_pos: usize, num_neg: usize) -> Matrix {
    Array2::from_shape_fn((num_pos + num_neg, 1), |(i, _)| if i < num_pos { 1.0 } else { 0.0 })
}

struct Stopwatch {
    enabled: bool,
    start: Instant,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
        }
    }

    /// Milliseconds since the last lap (0 when disabled).
    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let ms = now.duration_since(self.start).as_secs_f64() * 1e3;
        self.start = now;
        if self.enabled {
            ms
        } else {
            0.0
        }
    }
}

/// Loss and phase timings of one epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochSummary {
    /// Mean batch loss weighted by batch size.
    pub loss: f64,
    pub ms_sampling: f64,
    pub ms_forward: f64,
    pub ms_backward: f64,
    pub batches: usize,
    /// Largest number of sampled edge instances in any batch, per hop.
    pub max_edge_touches: Vec<usize>,
}

/// One pass over the shuffled training positives.
pub fn train_epoch(state: &mut TrainState, config: &TrainConfig, data: &TrainData) -> Result<EpochSummary, TrainError> {
    let epoch = state.epoch as u64;
    let mut order = data.train_pos.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        &[stream::SHUFFLE, epoch],
    )));
    let mut summary = EpochSummary::default();
    let mut weighted_loss = 0.0;
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::BATCH, epoch, b as u64]));
        let step = train_batch(state, config, data, batch, &mut rng).map_err(|e| match e {
            TrainError::NonFiniteLoss {
                param_norm,
                logit_norm,
                ..
            } => TrainError::NonFiniteLoss {
                epoch: state.epoch,
                batch: b,
                param_norm,
                logit_norm,
            },
            other => other,
        })?;
        weighted_loss += step.loss * batch.len() as f64;
        summary.ms_sampling += step.ms_sampling;
        summary.ms_forward += step.ms_forward;
        summary.ms_backward += step.ms_backward;
        summary.batches += 1;
        if summary.max_edge_touches.len() < step.edge_touches.len() {
            summary.max_edge_touches.resize(step.edge_touches.len(), 0);
        }
        for (m, &t) in summary.max_edge_touches.iter_mut().zip(&step.edge_touches) {
            *m = (*m).max(t);
        }
    }
    summary.loss = weighted_loss / order.len() as f64;
    state.epoch += 1;
    Ok(summary)
}

/// Outcome of one optimization step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchStep {
    pub loss: f64,
    /// Gradient applied to `l` (zeros when `l` is unused).
    pub logit_gradient: Vec<f64>,
    pub ms_sampling: f64,
    pub ms_forward: f64,
    pub ms_backward: f64,
    pub edge_touches: Vec<usize>,
}

/// Draws negatives and a neighborhood for `batch`, then updates every
/// trainable parameter once.
pub fn train_batch<R: Rng + ?Sized>(
    state: &mut TrainState,
    config: &TrainConfig,
    data: &TrainData,
    batch: &[Edge],
    rng: &mut R,
) -> Result<BatchStep, TrainError> {
    let mut clock = Stopwatch::new(config.timing);
    let negatives = data.graph.sample_negatives(batch, batch.len(), rng)?;
    let mut edges = batch.to_vec();
    edges.extend_from_slice(&negatives);
    let sampler_logits = state.sampler_logits(config, data);
    let sg = match config.sampler {
        Some(_) => Some(sample_neighborhood_with_rng(
            &data.train_graph,
            &edges,
            &sampler_logits,
            &config.plan,
            batch.len(),
            rng,
        )?),
        None => None,
    };
    let ms_sampling = clock.lap();

    let mut tape = Tape::new();
    let bound = state.model.bind(&mut tape)?;
    let logit_var = match config.weighting {
        WeightingMode::RelationWeighted => Some(tape.param(column(&state.logits))),
        WeightingMode::DegreeNormalized => None,
    };
    let neighborhood = match &sg {
        Some(sg) => Neighborhood::Sampled(sg),
        None => Neighborhood::Full { exclude: batch },
    };
    let scores = forward_logits(
        &mut tape,
        &bound,
        logit_var,
        config,
        data,
        &sampler_logits,
        neighborhood,
        &edges,
    )?;
    let loss_var = tape.bce_with_logits(scores, &labels(batch.len(), negatives.len()))?;
    let loss = tape.scalar_value(loss_var);
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            epoch: state.epoch,
            batch: 0,
            param_norm: state.param_norm(),
            logit_norm: state.logits.iter().map(|x| x * x).sum::<f64>().sqrt(),
        });
    }
    let ms_forward = clock.lap();

    let grads = tape.backward(loss_var)?;
    let shapes = state.model.shapes();
    let model_grads: Vec<Matrix> = bound
        .vars
        .iter()
        .zip(shapes)
        .map(|(&v, s)| grads.get_or_zeros(v, s))
        .collect();
    {
        let grad_refs: Vec<&Matrix> = model_grads.iter().collect();
        let mut params = state.model.tensors_mut();
        state.model_adam.step(&mut params, &grad_refs);
    }

    let r = state.logits.len();
    let mut logit_gradient = vec![0.0; r];
    if let Some(v) = logit_var {
        for (acc, g) in logit_gradient.iter_mut().zip(grads.get_or_zeros(v, (r, 1)).iter()) {
            *acc += g;
        }
    }
    if let (Some(SamplerMode::Learned), Some(sg)) = (config.sampler, &sg) {
        let b = match (config.baseline, state.baseline) {
            (Baseline::MovingAverage { .. }, Some(b)) => b,
            _ => 0.0,
        };
        for (acc, g) in logit_gradient.iter_mut().zip(reinforce_gradient(loss, b, sg)) {
            *acc += g;
        }
        if let Baseline::MovingAverage { decay } = config.baseline {
            state.baseline = Some(match state.baseline {
                Some(b) => decay * b + (1.0 - decay) * loss,
                None => loss,
            });
        }
    }
    if config.uses_logits() {
        let mut l = column(&state.logits);
        let g = column(&logit_gradient);
        state.logit_adam.step(&mut [&mut l], &[&g]);
        state.logits = l.into_raw_vec_and_offset().0;
    }
    let ms_backward = clock.lap();
    Ok(BatchStep {
        loss,
        logit_gradient,
        ms_sampling,
        ms_forward,
        ms_backward,
        edge_touches: sg.as_ref().map(|s| s.edge_touches()).unwrap_or_default(),
    })
}

/// Which fixed evaluation set to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Valid,
    Test,
}

impl EvalSet {
    fn tag(self) -> u64 {
        match self {
            EvalSet::Valid => 0,
            EvalSet::Test => 1,
        }
    }
}

/// Scores the fixed positives and negatives of `set` without updating
/// anything. Sampled inference draws from a stream that depends only on the
/// seed and the set, so re-evaluating the same parameters is reproducible.
pub fn evaluate(
    state: &TrainState,
    config: &TrainConfig,
    data: &TrainData,
    set: EvalSet,
) -> Result<MetricsReport, TrainError> {
    let (pos, neg) = match set {
        EvalSet::Valid => (&data.valid_pos, &data.valid_neg),
        EvalSet::Test => (&data.test_pos, &data.test_neg),
    };
    evaluate_edges(state, config, data, pos, neg, set.tag())
}

/// [`evaluate`] over explicit edge lists; `neg` is chunked alongside `pos`.
pub fn evaluate_edges(
    state: &TrainState,
    config: &TrainConfig,
    data: &TrainData,
    pos: &[Edge],
    neg: &[Edge],
    tag: u64,
) -> Result<MetricsReport, TrainError> {
    if pos.is_empty() && neg.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let mut clock = Stopwatch::new(config.timing);
    let sampler_logits = state.sampler_logits(config, data);
    let mut scores = Vec::with_capacity(pos.len() + neg.len());
    let mut label_vec = Vec::with_capacity(pos.len() + neg.len());
    let mut loss_sum = 0.0;
    let (mut ms_sampling, mut ms_forward) = (0.0, 0.0);

    let sampled = config.sampler.is_some() && config.inference == Inference::Sampled;
    let chunks: Vec<(&[Edge], &[Edge])> = if sampled {
        let b = config.batch_size;
        let n = pos.len().max(neg.len());
        (0..n.div_ceil(b))
            .map(|i| {
                let sl = |v: &'_ [Edge]| -> (usize, usize) { ((i * b).min(v.len()), ((i + 1) * b).min(v.len())) };
                let (a, z) = sl(pos);
                let (c, d) = sl(neg);
                (&pos[a..z], &neg[c..d])
            })
            .collect()
    } else {
        vec![(pos, neg)]
    };
    for (i, (p, n)) in chunks.iter().enumerate() {
        let mut edges = p.to_vec();
        edges.extend_from_slice(n);
        clock.lap();
        let sg = if sampled {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::EVAL, tag, i as u64]));
            Some(sample_neighborhood_with_rng(
                &data.train_graph,
                &edges,
                &sampler_logits,
                &config.plan,
                p.len().max(1),
                &mut rng,
            )?)
        } else {
            None
        };
        ms_sampling += clock.lap();
        let mut tape = Tape::new();
        let bound = state.model.bind(&mut tape)?;
        let logit_var = match config.weighting {
            WeightingMode::RelationWeighted => Some(tape.constant(column(&state.logits))),
            WeightingMode::DegreeNormalized => None,
        };
        let neighborhood = match &sg {
            Some(sg) => Neighborhood::Sampled(sg),
            None => Neighborhood::Full { exclude: &[] },
        };
        let logits = forward_logits(
            &mut tape,
            &bound,
            logit_var,
            config,
            data,
            &sampler_logits,
            neighborhood,
            &edges,
        )?;
        let loss = tape.bce_with_logits(logits, &labels(p.len(), n.len()))?;
        loss_sum += tape.scalar_value(loss) * edges.len() as f64;
        // ranked by logit: same order as the probabilities, without the
        // ties sigmoid introduces once it saturates
        scores.extend(tape.value(logits).iter().copied());
        label_vec.extend(std::iter::repeat_n(true, p.len()));
        label_vec.extend(std::iter::repeat_n(false, n.len()));
        ms_forward += clock.lap();
    }
    let total = scores.len() as f64;
    let data = ScoredLabels::new(scores, label_vec)?;
    Ok(MetricsReport {
        pr_auc: pr_auc(&data)?,
        roc_auc: roc_auc(&data)?,
        loss: loss_sum / total,
        ms_sampling,
        ms_forward,
    })
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_pr_auc: f64,
    pub val_roc_auc: f64,
    pub ms_sampling: f64,
    pub ms_forward: f64,
    pub ms_backward: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_pr_auc,val_roc_auc,ms_sampling,ms_forward,ms_backward";

impl HistoryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.val_pr_auc,
            self.val_roc_auc,
            self.ms_sampling,
            self.ms_forward,
            self.ms_backward
        )
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the epoch with the highest validation PR-AUC.
    pub best: TrainState,
    pub best_epoch: usize,
    pub best_val: MetricsReport,
    pub history: Vec<HistoryRow>,
    /// Largest per-hop edge-instance count over every training batch.
    pub max_edge_touches: Vec<usize>,
    /// `l` after the last epoch run.
    pub final_logits: Vec<f64>,
}

/// Trains until `max_epochs` or until `patience` epochs pass without a
/// strict improvement of validation PR-AUC. `on_epoch` sees every history
/// row as it is produced.
pub fn fit<F: FnMut(&HistoryRow)>(
    mut state: TrainState,
    config: &TrainConfig,
    data: &TrainData,
    mut on_epoch: F,
) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    let mut history = Vec::new();
    let mut best: Option<(TrainState, usize, MetricsReport)> = None;
    let mut since_best = 0;
    let mut touches: Vec<usize> = Vec::new();
    for _ in 0..config.max_epochs {
        let summary = train_epoch(&mut state, config, data)?;
        if touches.len() < summary.max_edge_touches.len() {
            touches.resize(summary.max_edge_touches.len(), 0);
        }
        for (m, &t) in touches.iter_mut().zip(&summary.max_edge_touches) {
            *m = (*m).max(t);
        }
        let val = evaluate(&state, config, data, EvalSet::Valid)?;
        let row = HistoryRow {
            epoch: state.epoch,
            train_loss: summary.loss,
            val_pr_auc: val.pr_auc,
            val_roc_auc: val.roc_auc,
            ms_sampling: summary.ms_sampling,
            ms_forward: summary.ms_forward,
            ms_backward: summary.ms_backward,
        };
        on_epoch(&row);
        history.push(row);
        let improved = best.as_ref().is_none_or(|(_, _, b)| val.pr_auc > b.pr_auc);
        if improved {
            best = Some((state.clone(), state.epoch, val));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (best, best_epoch, best_val) = best.ok_or_else(|| TrainError::Config("max_epochs is 0".into()))?;
    Ok(FitOutcome {
        best,
        best_epoch,
        best_val,
        history,
        max_edge_touches: touches,
        final_logits: state.logits,
    })
}

/// Everything needed to restore a trained model. Random streams are derived
/// from `(seed, epoch, batch)`, so the seed and epoch stand in for the
/// generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub model: Model,
    pub relation_logits: Vec<f64>,
    pub sampler: Option<SamplerMode>,
    pub weighting: WeightingMode,
    pub estimator: Estimator,
    pub epoch: usize,
    pub seed: u64,
    pub best_val_pr_auc: f64,
}

pub const CHECKPOINT_FORMAT: u32 = 1;

impl Checkpoint {
    pub fn new(state: &TrainState, config: &TrainConfig, best_val_pr_auc: f64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            model: state.model.clone(),
            relation_logits: state.logits.clone(),
            sampler: config.sampler,
            weighting: config.weighting,
            estimator: config.estimator,
            epoch: state.epoch,
            seed: config.seed,
            best_val_pr_auc,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let err = |msg: String| TrainError::Checkpoint {
            path: path.display().to_string(),
            msg,
        };
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        write_atomic(path, text.as_bytes()).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let err = |msg: String| TrainError::Checkpoint {
            path: path.display().to_string(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(err(format!("unsupported format {}", ck.format)));
        }
        Ok(ck)
    }

    pub fn into_state(self, config: &TrainConfig) -> TrainState {
        let mut s = TrainState::from_parts(config, self.model, self.relation_logits);
        s.epoch = self.epoch;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecoderKind;

    fn toy_data(seed: u64) -> TrainData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        while edges.len() < 40 {
            let u = rng.random_range(0..12);
            let v = rng.random_range(0..12);
            if u != v {
                edges.push(Edge::new(u, rng.random_range(0..2), v));
            }
        }
        let g = MultiRelGraph::from_edges(12, 2, edges).unwrap();
        let split = g.split_edges([0.6, 0.2, 0.2], seed).unwrap();
        TrainData::prepare(g, Features::OneHot(12), &split, None, seed).unwrap()
    }

    fn small_config(sampler: Option<SamplerMode>) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                hidden_dim: 4,
                num_layers: 2,
                num_bases: 30,
                decoder: DecoderKind::DistMult,
            },
            sampler,
            batch_size: 8,
            max_epochs: 3,
            patience: 3,
            timing: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn uniform_mode_leaves_logits_untouched() {
        let data = toy_data(1);
        let config = small_config(Some(SamplerMode::Uniform));
        let mut state = TrainState::init(&config, &data);
        let before = state.logits.clone();
        train_epoch(&mut state, &config, &data).unwrap();
        assert_eq!(state.logits, before);
    }

    #[test]
    fn learned_mode_moves_logits() {
        let data = toy_data(2);
        let config = small_config(Some(SamplerMode::Learned));
        let mut state = TrainState::init(&config, &data);
        let before = state.logits.clone();
        train_epoch(&mut state, &config, &data).unwrap();
        assert_ne!(state.logits, before);
    }

    #[test]
    fn patience_one_stops_after_first_non_improving_epoch() {
        let data = toy_data(3);
        let mut config = small_config(None);
        config.patience = 1;
        config.max_epochs = 50;
        config.adam.lr = 0.0;
        let state = TrainState::init(&config, &data);
        let out = fit(state, &config, &data, |_| {}).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn history_is_reproducible() {
        let data = toy_data(4);
        let config = small_config(Some(SamplerMode::Learned));
        let a = fit(TrainState::init(&config, &data), &config, &data, |_| {}).unwrap();
        let b = fit(TrainState::init(&config, &data), &config, &data, |_| {}).unwrap();
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(None);
        c.patience = 10;
        assert!(c.validate().is_err());
        let mut c = small_config(Some(SamplerMode::Uniform));
        c.plan = SamplePlan::new(vec![2], vec![2]).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let data = toy_data(5);
        let config = small_config(Some(SamplerMode::Learned));
        let state = TrainState::init(&config, &data);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.ckpt");
        let ck = Checkpoint::new(&state, &config, 0.123456789012345);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
