//! R-GCN encoders (full, relation-weighted, sampled) and link decoders.
//!
//! One encoder layer computes, for every local node u,
//!
//! ```text
//! h'_u = phi(W_0 h_u + sum_{messages v -> u of type r} c_i W_r h_v)
//! ```
//!
//! The message list and the coefficients `c_i` ([`Normalization`]) are what
//! distinguish the variants: the full pass uses every training edge in both
//! directions, the sampled pass uses one hop of a [`SampledSubgraph`] per
//! layer (outermost hop first).

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Matrix, Tape, Var};
use crate::graph::{Edge, Features, MultiRelGraph};
use crate::sampler::SampledSubgraph;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("features have {got} rows, graph has {expected} nodes")]
    FeatureRows { expected: usize, got: usize },
    #[error("feature dimension {got} does not match encoder input {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("unknown relation id {0}")]
    UnknownRelation(usize),
    #[error("node {0} is not part of the encoded node set")]
    UnknownNode(usize),
    #[error("subgraph has {hops} hops but the encoder has {layers} layers")]
    TooFewHops { hops: usize, layers: usize },
    #[error("{0} logits for {1} relations")]
    LogitLength(usize, usize),
}

/// How neighborhood coefficients c_{u,r} are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingMode {
    /// c_{u,r} = 1 / |N_{u,r}|.
    DegreeNormalized,
    /// c_{u,r} = exp(l_r) / sum_{r'} |N_{u,r'}| exp(l_{r'}), learned by
    /// backpropagation.
    RelationWeighted,
}

impl WeightingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "degree" | "degree-normalized" => Some(Self::DegreeNormalized),
            "relation" | "relation-weighted" => Some(Self::RelationWeighted),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DegreeNormalized => "degree-normalized",
            Self::RelationWeighted => "relation-weighted",
        }
    }
}

/// Scaling of sampled messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Average of the m_u sampled messages into u.
    RelationalMc,
    /// |R| / m_u times their sum, the estimator for a uniform relation prior.
    UniformMc,
}

impl Estimator {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relational-mc" => Some(Self::RelationalMc),
            "uniform-mc" => Some(Self::UniformMc),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RelationalMc => "relational-mc",
            Self::UniformMc => "uniform-mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    DistMult,
    Dedicom,
}

impl DecoderKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "distmult" => Some(Self::DistMult),
            "dedicom" => Some(Self::Dedicom),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DistMult => "distmult",
            Self::Dedicom => "dedicom",
        }
    }
}

/// Message coefficients for one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    /// 1 / (number of messages into u with the same relation).
    PerRelation,
    /// scale / (number of messages into u).
    PerNode { scale: f64 },
    /// exp(l_r) normalized over the messages into u; `logits` is an (R x 1)
    /// tape value, so gradients reach it when it is a parameter.
    Softmax { logits: Var },
}

/// Relation weights of one layer, stored as an (R x d_in*d_out) matrix whose
/// row r is W_r flattened row-major, or as a basis decomposition of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RelationWeights {
    Full(Matrix),
    Basis { coefficients: Matrix, bases: Matrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub d_in: usize,
    pub d_out: usize,
    pub relation: RelationWeights,
    /// W_0, (d_in x d_out).
    pub self_weight: Matrix,
}

impl LayerParams {
    /// W_r as a (d_in x d_out) matrix.
    pub fn relation_matrix(&self, r: usize) -> Matrix {
        let flat: Vec<f64> = match &self.relation {
            RelationWeights::Full(w) => w.row(r).to_vec(),
            RelationWeights::Basis {
                coefficients,
                bases,
            } => coefficients.row(r).dot(bases).to_vec(),
        };
        Array2::from_shape_vec((self.d_in, self.d_out), flat).expect("consistent shapes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgcnParams {
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub kind: DecoderKind,
    /// Per-relation diagonals (R x d): w_r for DistMult, D_r for DEDICOM.
    pub diagonals: Matrix,
    /// DEDICOM global interaction matrix R_g (d x d).
    pub global: Option<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_bases: usize,
    pub decoder: DecoderKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            num_layers: 2,
            num_bases: 30,
            decoder: DecoderKind::Dedicom,
        }
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: RgcnParams,
    pub decoder: DecoderParams,
}

impl Model {
    /// Glorot-uniform weights; basis coefficients standard normal / sqrt(B).
    /// The basis decomposition is used only when `num_bases < num_relations`.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        input_dim: usize,
        num_relations: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut d_in = input_dim;
        for _ in 0..config.num_layers {
            let d_out = config.hidden_dim;
            let flat = d_in * d_out;
            let relation = if config.num_bases >= num_relations {
                RelationWeights::Full(glorot(num_relations, flat, d_in, d_out, rng))
            } else {
                let b = config.num_bases;
                let scale = 1.0 / (b as f64).sqrt();
                let coefficients = Array2::from_shape_simple_fn((num_relations, b), || {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scale
                });
                RelationWeights::Basis {
                    coefficients,
                    bases: glorot(b, flat, d_in, d_out, rng),
                }
            };
            layers.push(LayerParams {
                d_in,
                d_out,
                relation,
                self_weight: glorot(d_in, d_out, d_in, d_out, rng),
            });
            d_in = d_out;
        }
        let d = config.hidden_dim;
        let diagonals = glorot(num_relations, d, d, d, rng).mapv(|x| 1.0 + x);
        let global = match config.decoder {
            DecoderKind::DistMult => None,
            DecoderKind::Dedicom => Some(glorot(d, d, d, d, rng)),
        };
        Self {
            encoder: RgcnParams { layers },
            decoder: DecoderParams {
                kind: config.decoder,
                diagonals,
                global,
            },
        }
    }

    pub fn num_relations(&self) -> usize {
        self.decoder.diagonals.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.layers[0].d_in
    }

    pub fn num_layers(&self) -> usize {
        self.encoder.layers.len()
    }

    /// All trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.encoder.layers {
            match &l.relation {
                RelationWeights::Full(w) => out.push(w),
                RelationWeights::Basis {
                    coefficients,
                    bases,
                } => {
                    out.push(coefficients);
                    out.push(bases);
                }
            }
            out.push(&l.self_weight);
        }
        out.push(&self.decoder.diagonals);
        if let Some(g) = &self.decoder.global {
            out.push(g);
        }
        out
    }

    /// Same order as [`Model::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.encoder.layers {
            match &mut l.relation {
                RelationWeights::Full(w) => out.push(w),
                RelationWeights::Basis {
                    coefficients,
                    bases,
                } => {
                    out.push(coefficients);
                    out.push(bases);
                }
            }
            out.push(&mut l.self_weight);
        }
        out.push(&mut self.decoder.diagonals);
        if let Some(g) = &mut self.decoder.global {
            out.push(g);
        }
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|m| (m.nrows(), m.ncols())).collect()
    }

    /// Registers every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundModel, ModelError> {
        let mut vars = Vec::new();
        let mut layers = Vec::new();
        for l in &self.encoder.layers {
            let relation = match &l.relation {
                RelationWeights::Full(w) => {
                    let v = tape.param(w.clone());
                    vars.push(v);
                    v
                }
                RelationWeights::Basis {
                    coefficients,
                    bases,
                } => {
                    let a = tape.param(coefficients.clone());
                    let b = tape.param(bases.clone());
                    vars.push(a);
                    vars.push(b);
                    tape.matmul(a, b)?
                }
            };
            let self_weight = tape.param(l.self_weight.clone());
            vars.push(self_weight);
            layers.push(BoundLayer {
                d_in: l.d_in,
                d_out: l.d_out,
                relation,
                self_weight,
            });
        }
        let diagonals = tape.param(self.decoder.diagonals.clone());
        vars.push(diagonals);
        let global = self.decoder.global.as_ref().map(|g| {
            let v = tape.param(g.clone());
            vars.push(v);
            v
        });
        Ok(BoundModel {
            layers,
            kind: self.decoder.kind,
            num_relations: self.num_relations(),
            diagonals,
            global,
            vars,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub d_in: usize,
    pub d_out: usize,
    /// (R x d_in*d_out).
    pub relation: Var,
    pub self_weight: Var,
}

/// Model parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub layers: Vec<BoundLayer>,
    pub kind: DecoderKind,
    pub num_relations: usize,
    pub diagonals: Var,
    pub global: Option<Var>,
    /// Leaves in [`Model::tensors`] order.
    pub vars: Vec<Var>,
}

/// Global node ids of the encoded rows and the inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalIndex {
    global: Vec<usize>,
    local: Vec<usize>,
}

impl LocalIndex {
    pub fn identity(num_nodes: usize) -> Self {
        Self {
            global: (0..num_nodes).collect(),
            local: (0..num_nodes).collect(),
        }
    }

    pub fn from_nodes(num_nodes: usize, nodes: &[usize]) -> Self {
        let mut local = vec![usize::MAX; num_nodes];
        for (i, &g) in nodes.iter().enumerate() {
            local[g] = i;
        }
        Self {
            global: nodes.to_vec(),
            local,
        }
    }

    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    pub fn global_ids(&self) -> &[usize] {
        &self.global
    }

    pub fn local(&self, node: usize) -> Result<usize, ModelError> {
        match self.local.get(node) {
            Some(&i) if i != usize::MAX => Ok(i),
            _ => Err(ModelError::UnknownNode(node)),
        }
    }
}

/// Directed messages `src -> dst` of a relation, in local row ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Messages {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub rel: Vec<usize>,
}

impl Messages {
    /// Both directions of every edge.
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = &'a Edge>,
        index: &LocalIndex,
    ) -> Result<Self, ModelError> {
        let mut m = Self::default();
        for e in edges {
            let (a, b) = (index.local(e.head)?, index.local(e.tail)?);
            m.src.extend([a, b]);
            m.dst.extend([b, a]);
            m.rel.extend([e.rel, e.rel]);
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Input of the first layer.
enum LayerInput<'a> {
    /// One-hot rows: projection is a row lookup by global id.
    OneHot(&'a [usize]),
    Dense(Var),
}

fn message_weights(
    tape: &mut Tape,
    msgs: &Messages,
    n_local: usize,
    num_relations: usize,
    norm: &Normalization,
) -> Result<Var, ModelError> {
    let m = msgs.len();
    match norm {
        Normalization::PerRelation => {
            let mut counts = vec![0usize; n_local * num_relations];
            for (&d, &r) in msgs.dst.iter().zip(&msgs.rel) {
                counts[d * num_relations + r] += 1;
            }
            let w = Array2::from_shape_fn((m, 1), |(i, _)| {
                1.0 / counts[msgs.dst[i] * num_relations + msgs.rel[i]] as f64
            });
            Ok(tape.constant(w))
        }
        Normalization::PerNode { scale } => {
            let mut counts = vec![0usize; n_local];
            for &d in &msgs.dst {
                counts[d] += 1;
            }
            let w = Array2::from_shape_fn((m, 1), |(i, _)| scale / counts[msgs.dst[i]] as f64);
            Ok(tape.constant(w))
        }
        Normalization::Softmax { logits } => {
            let shape = tape.shape(*logits);
            if shape != (num_relations, 1) {
                return Err(ModelError::LogitLength(shape.0, num_relations));
            }
            let max = tape.value(*logits).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let per_msg = tape.gather_rows(*logits, &msgs.rel)?;
            let shifted = tape.add_scalar(per_msg, -max);
            let e = tape.exp(shifted);
            let denom = tape.scatter_add_rows(e, &msgs.dst, n_local)?;
            let denom_msg = tape.gather_rows(denom, &msgs.dst)?;
            let inv = tape.recip(denom_msg);
            Ok(tape.mul(e, inv)?)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_forward(
    tape: &mut Tape,
    layer: &BoundLayer,
    num_relations: usize,
    input: &LayerInput<'_>,
    n_local: usize,
    msgs: &Messages,
    norm: &Normalization,
    activation: bool,
) -> Result<Var, ModelError> {
    let self_term = match input {
        LayerInput::OneHot(ids) => tape.gather_rows(layer.self_weight, ids)?,
        LayerInput::Dense(h) => tape.matmul(*h, layer.self_weight)?,
    };
    let pre = if msgs.is_empty() {
        self_term
    } else {
        let (table, idx) = match input {
            LayerInput::OneHot(ids) => {
                // row r*d_in + v of the reshaped weights is W_r[v, :]
                let table = tape.reshape(layer.relation, num_relations * layer.d_in, layer.d_out)?;
                let idx: Vec<usize> = msgs
                    .src
                    .iter()
                    .zip(&msgs.rel)
                    .map(|(&s, &r)| r * layer.d_in + ids[s])
                    .collect();
                (table, idx)
            }
            LayerInput::Dense(h) => {
                let mut present: Vec<usize> = msgs.rel.clone();
                present.sort_unstable();
                present.dedup();
                let mut slot = vec![usize::MAX; num_relations];
                let mut parts = Vec::with_capacity(present.len());
                for (k, &r) in present.iter().enumerate() {
                    slot[r] = k;
                    let row = tape.gather_rows(layer.relation, &[r])?;
                    let w_r = tape.reshape(row, layer.d_in, layer.d_out)?;
                    parts.push(tape.matmul(*h, w_r)?);
                }
                let table = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts)? };
                let idx: Vec<usize> = msgs
                    .src
                    .iter()
                    .zip(&msgs.rel)
                    .map(|(&s, &r)| slot[r] * n_local + s)
                    .collect();
                (table, idx)
            }
        };
        let gathered = tape.gather_rows(table, &idx)?;
        let weights = message_weights(tape, msgs, n_local, num_relations, norm)?;
        let scaled = tape.row_scale(gathered, weights)?;
        let agg = tape.scatter_add_rows(scaled, &msgs.dst, n_local)?;
        tape.add(self_term, agg)?
    };
    Ok(if activation { tape.relu(pre) } else { pre })
}

fn check_relations(msgs: &Messages, num_relations: usize) -> Result<(), ModelError> {
    match msgs.rel.iter().find(|&&r| r >= num_relations) {
        Some(&r) => Err(ModelError::UnknownRelation(r)),
        None => Ok(()),
    }
}

/// Runs all layers; ReLU after every layer but the last.
fn encode_layers(
    tape: &mut Tape,
    model: &BoundModel,
    features: &Features,
    index: &LocalIndex,
    per_layer: &[(Messages, Normalization)],
) -> Result<Var, ModelError> {
    let expected = model.layers[0].d_in;
    if features.dim() != expected {
        return Err(ModelError::FeatureDim {
            expected,
            got: features.dim(),
        });
    }
    let n_local = index.len();
    let dense_input;
    let mut input = match features {
        Features::OneHot(_) => LayerInput::OneHot(index.global_ids()),
        Features::Dense(x) => {
            dense_input = tape.constant(x.select(ndarray::Axis(0), index.global_ids()));
            LayerInput::Dense(dense_input)
        }
    };
    let last = model.layers.len() - 1;
    let mut h = None;
    for (j, layer) in model.layers.iter().enumerate() {
        let (msgs, norm) = &per_layer[j];
        check_relations(msgs, model.num_relations)?;
        let out = layer_forward(
            tape,
            layer,
            model.num_relations,
            &input,
            n_local,
            msgs,
            norm,
            j != last,
        )?;
        h = Some(out);
        input = LayerInput::Dense(out);
    }
    Ok(h.expect("at least one layer"))
}

/// Exact message passing over every edge of `graph` (N x d output).
pub fn encode_full(
    tape: &mut Tape,
    model: &BoundModel,
    graph: &MultiRelGraph,
    features: &Features,
    norm: &Normalization,
) -> Result<Var, ModelError> {
    encode_full_excluding(tape, model, graph, features, norm, &[])
}

/// [`encode_full`] with the edges in `exclude` removed from message passing
/// (the targets of a training batch must not carry their own label).
pub fn encode_full_excluding(
    tape: &mut Tape,
    model: &BoundModel,
    graph: &MultiRelGraph,
    features: &Features,
    norm: &Normalization,
    exclude: &[Edge],
) -> Result<Var, ModelError> {
    if features.num_nodes() != graph.num_nodes() {
        return Err(ModelError::FeatureRows {
            expected: graph.num_nodes(),
            got: features.num_nodes(),
        });
    }
    let index = LocalIndex::identity(graph.num_nodes());
    let msgs = if exclude.is_empty() {
        Messages::from_edges(graph.edges(), &index)?
    } else {
        let skip: std::collections::HashSet<Edge> = exclude.iter().map(|e| e.canonical()).collect();
        Messages::from_edges(graph.edges().iter().filter(|e| !skip.contains(e)), &index)?
    };
    let per_layer: Vec<_> = model
        .layers
        .iter()
        .map(|_| (msgs.clone(), norm.clone()))
        .collect();
    encode_layers(tape, model, features, &index, &per_layer)
}

/// Coefficients used by the sampled encoder for a weighting/estimator pair.
pub fn sampled_normalization(
    weighting: WeightingMode,
    estimator: Estimator,
    num_relations: usize,
    weight_logits: Option<Var>,
) -> Normalization {
    match (weighting, weight_logits) {
        (WeightingMode::RelationWeighted, Some(logits)) => Normalization::Softmax { logits },
        _ => match estimator {
            Estimator::RelationalMc => Normalization::PerNode { scale: 1.0 },
            Estimator::UniformMc => Normalization::PerNode {
                scale: num_relations as f64,
            },
        },
    }
}

/// Messages of one hop, both directions of every drawn instance.
pub fn hop_messages(sg: &SampledSubgraph, hop: usize, index: &LocalIndex) -> Result<Messages, ModelError> {
    Messages::from_edges(&sg.hops[hop].sampled, index)
}

/// Message passing restricted to a sampled neighborhood. Layer j of L uses
/// hop L-1-j, so the outermost hop feeds the first layer. Returns the
/// embeddings of every node in the neighborhood and their index.
pub fn encode_sampled(
    tape: &mut Tape,
    model: &BoundModel,
    sg: &SampledSubgraph,
    features: &Features,
    norm: &Normalization,
) -> Result<(Var, LocalIndex), ModelError> {
    let layers = model.layers.len();
    if sg.hops.len() < layers {
        return Err(ModelError::TooFewHops {
            hops: sg.hops.len(),
            layers,
        });
    }
    let index = LocalIndex::from_nodes(features.num_nodes(), sg.nodes());
    let mut per_layer = Vec::with_capacity(layers);
    for j in 0..layers {
        per_layer.push((hop_messages(sg, layers - 1 - j, &index)?, norm.clone()));
    }
    let h = encode_layers(tape, model, features, &index, &per_layer)?;
    Ok((h, index))
}

/// Pre-activation of a single layer over explicit messages, for checks that
/// need the raw aggregation.
pub fn layer_preactivation(
    tape: &mut Tape,
    model: &BoundModel,
    layer: usize,
    input: Var,
    msgs: &Messages,
    norm: &Normalization,
) -> Result<Var, ModelError> {
    check_relations(msgs, model.num_relations)?;
    let n_local = tape.shape(input).0;
    layer_forward(
        tape,
        &model.layers[layer],
        model.num_relations,
        &LayerInput::Dense(input),
        n_local,
        msgs,
        norm,
        false,
    )
}

/// Edge probabilities (M x 1) from node embeddings.
pub fn score_edges(
    tape: &mut Tape,
    model: &BoundModel,
    embeddings: Var,
    index: &LocalIndex,
    edges: &[Edge],
) -> Result<Var, ModelError> {
    let logits = score_logits(tape, model, embeddings, index, edges)?;
    Ok(tape.sigmoid(logits))
}

/// Decoder logits (M x 1), the pre-sigmoid edge scores. Both decoders are
/// symmetric in (u, v) by construction.
pub fn score_logits(
    tape: &mut Tape,
    model: &BoundModel,
    embeddings: Var,
    index: &LocalIndex,
    edges: &[Edge],
) -> Result<Var, ModelError> {
    let mut us = Vec::with_capacity(edges.len());
    let mut vs = Vec::with_capacity(edges.len());
    let mut rs = Vec::with_capacity(edges.len());
    for e in edges {
        if e.rel >= model.num_relations {
            return Err(ModelError::UnknownRelation(e.rel));
        }
        us.push(index.local(e.head)?);
        vs.push(index.local(e.tail)?);
        rs.push(e.rel);
    }
    let hu = tape.gather_rows(embeddings, &us)?;
    let hv = tape.gather_rows(embeddings, &vs)?;
    let dr = tape.gather_rows(model.diagonals, &rs)?;
    let logits = match (model.kind, model.global) {
        (DecoderKind::Dedicom, Some(global)) => {
            let a = tape.mul(hu, dr)?;
            let b = tape.mul(hv, dr)?;
            let ar = tape.matmul(a, global)?;
            let br = tape.matmul(b, global)?;
            let x = tape.mul(ar, b)?;
            let y = tape.mul(br, a)?;
            let x = tape.row_sum(x);
            let y = tape.row_sum(y);
            let s = tape.add(x, y)?;
            tape.mul_scalar(s, 0.5)
        }
        _ => {
            let p = tape.mul(hu, hv)?;
            let q = tape.mul(p, dr)?;
            tape.row_sum(q)
        }
    };
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_layer_identity(d: usize, num_relations: usize) -> Model {
        let mut w = Matrix::zeros((num_relations, d * d));
        for r in 0..num_relations {
            for i in 0..d {
                w[[r, i * d + i]] = 1.0;
            }
        }
        Model {
            encoder: RgcnParams {
                layers: vec![LayerParams {
                    d_in: d,
                    d_out: d,
                    relation: RelationWeights::Full(w),
                    self_weight: Matrix::zeros((d, d)),
                }],
            },
            decoder: DecoderParams {
                kind: DecoderKind::DistMult,
                diagonals: Matrix::ones((num_relations, d)),
                global: None,
            },
        }
    }

    #[test]
    fn isolated_node_with_zero_self_weight_embeds_to_zero() {
        let g = MultiRelGraph::from_edges(1, 1, []).unwrap();
        let model = one_layer_identity(2, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        let feats = Features::Dense(array![[0.3, -0.7]]);
        let h = encode_full(&mut tape, &bound, &g, &feats, &Normalization::PerRelation).unwrap();
        assert_eq!(tape.value(h), &array![[0.0, 0.0]]);
    }

    #[test]
    fn two_nodes_swap_features() {
        let g = MultiRelGraph::from_edges(2, 1, [Edge::new(0, 0, 1)]).unwrap();
        let model = one_layer_identity(3, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        let x = array![[1.0, 2.0, 3.0], [-4.0, 5.0, 0.5]];
        let h = encode_full(&mut tape, &bound, &g, &Features::Dense(x.clone()), &Normalization::PerRelation).unwrap();
        assert_eq!(tape.value(h).row(0), x.row(1));
        assert_eq!(tape.value(h).row(1), x.row(0));
    }

    #[test]
    fn one_hot_matches_dense_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = MultiRelGraph::from_edges(
            5,
            2,
            [Edge::new(0, 0, 1), Edge::new(1, 1, 2), Edge::new(2, 0, 4), Edge::new(0, 1, 3)],
        )
        .unwrap();
        let cfg = ModelConfig {
            hidden_dim: 3,
            num_layers: 2,
            num_bases: 1,
            decoder: DecoderKind::Dedicom,
        };
        let model = Model::init(&cfg, 5, 2, &mut rng);
        let run = |feats: &Features| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape).unwrap();
            let h = encode_full(&mut tape, &bound, &g, feats, &Normalization::PerRelation).unwrap();
            tape.value(h).clone()
        };
        let a = run(&Features::OneHot(5));
        let b = run(&Features::Dense(Matrix::eye(5)));
        assert!((a - b).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn distmult_unit_vectors() {
        let model = one_layer_identity(2, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        tape.value(bound.diagonals);
        let mut tape = Tape::new();
        let mut m = model.clone();
        m.decoder.diagonals = array![[1.0, 0.0]];
        let bound = m.bind(&mut tape).unwrap();
        let h = tape.constant(array![[1.0, 0.0], [1.0, 0.0]]);
        let s = score_edges(&mut tape, &bound, h, &LocalIndex::identity(2), &[Edge::new(0, 0, 1)]).unwrap();
        assert!((tape.scalar_value(s) - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn unknown_relation_and_node_rejected() {
        let model = one_layer_identity(2, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        let h = tape.constant(Matrix::zeros((2, 2)));
        let idx = LocalIndex::identity(2);
        assert_eq!(
            score_edges(&mut tape, &bound, h, &idx, &[Edge::new(0, 3, 1)]).unwrap_err(),
            ModelError::UnknownRelation(3)
        );
        assert_eq!(
            score_edges(&mut tape, &bound, h, &idx, &[Edge::new(0, 0, 5)]).unwrap_err(),
            ModelError::UnknownNode(5)
        );
    }

    #[test]
    fn feature_row_mismatch() {
        let g = MultiRelGraph::from_edges(3, 1, [Edge::new(0, 0, 1)]).unwrap();
        let model = one_layer_identity(2, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        let err = encode_full(&mut tape, &bound, &g, &Features::Dense(Matrix::zeros((2, 2))), &Normalization::PerRelation)
            .unwrap_err();
        assert_eq!(err, ModelError::FeatureRows { expected: 3, got: 2 });
    }

    #[test]
    fn basis_with_indicator_coefficients_reproduces_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let full = glorot(3, 4 * 2, 4, 2, &mut rng);
        let layer_full = LayerParams {
            d_in: 4,
            d_out: 2,
            relation: RelationWeights::Full(full.clone()),
            self_weight: Matrix::zeros((4, 2)),
        };
        let layer_basis = LayerParams {
            relation: RelationWeights::Basis {
                coefficients: Matrix::eye(3),
                bases: full,
            },
            ..layer_full.clone()
        };
        for r in 0..3 {
            assert_eq!(layer_full.relation_matrix(r), layer_basis.relation_matrix(r));
        }
    }

    #[test]
    fn basis_disabled_when_bases_cover_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::init(&ModelConfig { num_bases: 30, hidden_dim: 4, ..Default::default() }, 6, 5, &mut rng);
        assert!(matches!(m.encoder.layers[0].relation, RelationWeights::Full(_)));
        let m = Model::init(&ModelConfig { num_bases: 2, hidden_dim: 4, ..Default::default() }, 6, 5, &mut rng);
        assert!(matches!(m.encoder.layers[0].relation, RelationWeights::Basis { .. }));
        assert_eq!(m.tensors().len(), m.shapes().len());
    }
}
