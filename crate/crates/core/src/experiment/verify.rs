//! Independent oracles for the estimators, gradients and metrics.
//!
//! Each check compares the library against something computed another way:
//! central finite differences, exhaustive enumeration of every sampled
//! neighborhood of a tiny instance, closed-form expectations evaluated with
//! plain loops, chi-square goodness of fit, and brute-force metric
//! definitions.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::autodiff::{central_difference, relative_error, Matrix, Tape};
use crate::graph::{Edge, Features, MultiRelGraph};
use crate::io::derive_seed;
use crate::metrics::{pr_auc, roc_auc, ScoredLabels};
use crate::model::{
    encode_full, encode_sampled, DecoderKind, Estimator, LayerParams, Model, ModelConfig, Normalization,
    RelationWeights, WeightingMode,
};
use crate::sampler::{
    candidate_edges, hop_probabilities, replay_neighborhood, sample_neighborhood_with_rng, SamplePlan,
    SampledSubgraph, SamplerError,
};
use crate::train::{forward_logits, reinforce_gradient, Neighborhood, TrainConfig, TrainData};

/// Step of the gradient checks.
pub const GRAD_EPS: f64 = 1e-5;
/// Denominator floor of every relative error.
pub const REL_FLOOR: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;
pub const ENUM_TOL: f64 = 1e-10;
pub const HOP_NORM_TOL: f64 = 1e-12;
pub const REINFORCE_EPS: f64 = 1e-4;
pub const REINFORCE_TOL: f64 = 1e-3;
pub const LOG_PROB_GRAD_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-12;
pub const CHI_SQUARE_ALPHA: f64 = 0.01;
pub const METRIC_TOL: f64 = 1e-12;

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// `<=` or `>=`.
    pub relation: &'static str,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: value.is_finite() && value <= threshold,
            value,
            threshold,
            relation: "<=",
            detail,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: value.is_finite() && value >= threshold,
            value,
            threshold,
            relation: ">=",
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (need {} {:.1e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Verification suites selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    All,
    Gradcheck,
    Enumeration,
    Frequency,
    Oracle,
}

impl Level {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Self::All),
            "gradcheck" => Some(Self::Gradcheck),
            "enumeration" => Some(Self::Enumeration),
            "frequency" => Some(Self::Frequency),
            "oracle" => Some(Self::Oracle),
            _ => None,
        }
    }
}

/// Runs the suites of `level` with `seeds` random instances each (at least
/// 20 for the enumeration suite).
pub fn run(level: Level, seeds: usize, master_seed: u64) -> Result<Report, SamplerError> {
    let mut report = Report::default();
    let want = |l: Level| level == Level::All || level == l;
    if want(Level::Gradcheck) {
        report.checks.extend(gradcheck(seeds, master_seed));
    }
    if want(Level::Enumeration) {
        let n = seeds.max(20);
        report.checks.push(estimator_unbiasedness(n, master_seed)?);
        report.checks.extend(probability_normalization(n, master_seed)?);
        report.checks.extend(reinforce_checks(n, master_seed)?);
    }
    if want(Level::Frequency) {
        report.checks.extend(sampler_frequencies(master_seed)?);
    }
    if want(Level::Oracle) {
        report.checks.extend(full_pass_oracle(seeds, master_seed)?);
        report.checks.push(metrics_oracle(50, master_seed));
    }
    Ok(report)
}

fn rng_for(master: u64, suite: u64, i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[0x5e71f, suite, i]))
}

/// Random graph with `m` attempted distinct edges.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, r: usize, m: usize) -> MultiRelGraph {
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            edges.push(Edge::new(u, rng.random_range(0..r), v));
        }
    }
    MultiRelGraph::from_edges(n, r, edges).expect("valid random graph")
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn random_logits<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Vec<f64> {
    (0..r).map(|_| StandardNormal.sample(rng)).collect()
}

fn non_edge<R: Rng + ?Sized>(rng: &mut R, g: &MultiRelGraph) -> Edge {
    loop {
        let u = rng.random_range(0..g.num_nodes());
        let v = rng.random_range(0..g.num_nodes());
        let e = Edge::new(u, rng.random_range(0..g.num_relations()), v);
        if u != v && !g.contains(&e) {
            return e;
        }
    }
}

/// W_r materialized with explicit loops, independent of the model's own
/// helpers.
pub fn oracle_relation_weights(layer: &LayerParams, r: usize) -> Vec<Vec<f64>> {
    let (din, dout) = (layer.d_in, layer.d_out);
    let mut w = vec![vec![0.0; dout]; din];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let flat = i * dout + j;
            *x = match &layer.relation {
                RelationWeights::Full(m) => m[[r, flat]],
                RelationWeights::Basis {
                    coefficients,
                    bases,
                } => (0..coefficients.ncols())
                    .map(|b| coefficients[[r, b]] * bases[[b, flat]])
                    .sum(),
            };
        }
    }
    w
}

fn vec_mat(h: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let dout = w.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dout];
    for (i, &hi) in h.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += hi * w[i][j];
        }
    }
    out
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Direct evaluation of the layer rule over `N_{u,r}` from the adjacency
/// lists, with coefficient `coeff(u, r)`.
pub fn oracle_encode_full(
    graph: &MultiRelGraph,
    features: &Matrix,
    model: &Model,
    coeff: &dyn Fn(usize, usize) -> f64,
) -> Vec<Vec<f64>> {
    let mut h = rows_of(features);
    let last = model.encoder.layers.len() - 1;
    for (l, layer) in model.encoder.layers.iter().enumerate() {
        let w0 = rows_of(&layer.self_weight);
        let wr: Vec<Vec<Vec<f64>>> = (0..graph.num_relations())
            .map(|r| oracle_relation_weights(layer, r))
            .collect();
        let mut next = Vec::with_capacity(h.len());
        for u in 0..graph.num_nodes() {
            let mut out = vec_mat(&h[u], &w0);
            for (r, w) in wr.iter().enumerate() {
                for &v in graph.neighbors(u, r) {
                    let m = vec_mat(&h[v], w);
                    let c = coeff(u, r);
                    for (o, x) in out.iter_mut().zip(m) {
                        *o += c * x;
                    }
                }
            }
            if l != last {
                for o in out.iter_mut() {
                    *o = o.max(0.0);
                }
            }
            next.push(out);
        }
        h = next;
    }
    h
}

/// Every outcome of sampling around `targets`, each as a replayed
/// neighborhood carrying its exact log-probability.
pub fn enumerate_neighborhoods(
    graph: &MultiRelGraph,
    targets: &[Edge],
    logits: &[f64],
    plan: &SamplePlan,
    batch_size: usize,
) -> Result<Vec<SampledSubgraph>, SamplerError> {
    fn rec(
        graph: &MultiRelGraph,
        targets: &[Edge],
        logits: &[f64],
        plan: &SamplePlan,
        batch_size: usize,
        prefix: &mut Vec<Vec<Edge>>,
        out: &mut Vec<SampledSubgraph>,
    ) -> Result<(), SamplerError> {
        let k = prefix.len();
        if k == plan.num_hops() {
            out.push(replay_neighborhood(graph, targets, logits, plan, batch_size, prefix)?);
            return Ok(());
        }
        let frontier: Vec<usize> = if k == 0 {
            let mut f: Vec<usize> = targets.iter().flat_map(|e| [e.head, e.tail]).collect();
            f.sort_unstable();
            f.dedup();
            f
        } else {
            let partial = SamplePlan::new(plan.fanouts()[..k].to_vec(), plan.cap_multipliers()[..k].to_vec())?;
            replay_neighborhood(graph, targets, logits, &partial, batch_size, prefix)?
                .nodes()
                .to_vec()
        };
        let cands = candidate_edges(graph, &frontier, targets);
        if cands.is_empty() {
            prefix.push(Vec::new());
            rec(graph, targets, logits, plan, batch_size, prefix, out)?;
            prefix.pop();
            return Ok(());
        }
        let n = plan.draws(k, frontier.len(), batch_size);
        let total = cands.len().pow(n as u32);
        for mut code in 0..total {
            let mut seq = Vec::with_capacity(n);
            for _ in 0..n {
                seq.push(cands[code % cands.len()]);
                code /= cands.len();
            }
            prefix.push(seq);
            rec(graph, targets, logits, plan, batch_size, prefix, out)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(graph, targets, logits, plan, batch_size, &mut Vec::new(), &mut out)?;
    Ok(out)
}

/// A tiny graph and one target edge whose hop candidate sets, over every
/// outcome, stay within `max_candidates`.
struct TinyInstance {
    graph: MultiRelGraph,
    targets: Vec<Edge>,
    logits: Vec<f64>,
    plan: SamplePlan,
    outcomes: Vec<SampledSubgraph>,
}

fn tiny_instance<R: Rng + ?Sized>(
    rng: &mut R,
    hops: usize,
    max_draws: usize,
    max_candidates: usize,
    with_negative: bool,
) -> Result<TinyInstance, SamplerError> {
    loop {
        let r = rng.random_range(2..=3);
        let m = rng.random_range(4..=8);
        let graph = random_graph(rng, 7, r, m);
        let pos = graph.edge(rng.random_range(0..graph.num_edges()));
        let mut targets = vec![pos];
        if with_negative {
            targets.push(non_edge(rng, &graph));
        }
        let caps: Vec<usize> = (0..hops).map(|_| rng.random_range(1..=max_draws)).collect();
        let plan = SamplePlan::new(vec![1; hops], caps)?;
        let logits = random_logits(rng, r);
        let first = candidate_edges(&graph, &seeds(&targets), &targets);
        if first.is_empty() || first.len() > max_candidates {
            continue;
        }
        let outcomes = enumerate_neighborhoods(&graph, &targets, &logits, &plan, 1)?;
        if outcomes
            .iter()
            .all(|sg| sg.hops.iter().all(|h| h.num_candidates() <= max_candidates))
        {
            return Ok(TinyInstance {
                graph,
                targets,
                logits,
                plan,
                outcomes,
            });
        }
    }
}

fn seeds(targets: &[Edge]) -> Vec<usize> {
    let mut f: Vec<usize> = targets.iter().flat_map(|e| [e.head, e.tail]).collect();
    f.sort_unstable();
    f.dedup();
    f
}

fn single_layer_model<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, r: usize, bases: usize) -> Model {
    let config = ModelConfig {
        hidden_dim: d_out,
        num_layers: 1,
        num_bases: bases,
        decoder: DecoderKind::DistMult,
    };
    Model::init(&config, d_in, r, rng)
}

/// Sampled single-layer pre-activations averaged over every outcome equal
/// `W_0 h_u + P(m_u >= 1) sum_{(r,v) in N_u} c_{u,r} W_r h_v` with c from the
/// relation softmax; conditioned on `m_u >= 1` they equal the expectation
/// form exactly.
pub fn estimator_unbiasedness(instances: usize, master: u64) -> Result<Check, SamplerError> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut nodes_checked = 0;
    for i in 0..instances {
        let mut rng = rng_for(master, 1, i as u64);
        let inst = tiny_instance(&mut rng, 1, 2, 5, false)?;
        let r = inst.graph.num_relations();
        let n = inst.graph.num_nodes();
        let (d_in, d_out) = (3, 2);
        let model = single_layer_model(&mut rng, d_in, d_out, r, if i % 2 == 0 { 30 } else { 1 });
        let x = random_matrix(&mut rng, n, d_in);
        let features = Features::Dense(x.clone());
        let layer = &model.encoder.layers[0];
        let w0 = rows_of(&layer.self_weight);
        let wr: Vec<Vec<Vec<f64>>> = (0..r).map(|k| oracle_relation_weights(layer, k)).collect();
        let hx = rows_of(&x);
        let seeds = seeds(&inst.targets);

        // closed form, from the graph alone
        let cands: Vec<Edge> = inst
            .graph
            .edges()
            .iter()
            .copied()
            .filter(|e| seeds.iter().any(|&s| e.is_incident(s)) && !inst.targets.contains(e))
            .collect();
        let z: f64 = cands.iter().map(|e| inst.logits[e.rel].exp()).sum();
        let draws = inst.outcomes[0].hops[0].sampled.len();

        let mut enum_pre = vec![vec![0.0; d_out]; n];
        let mut enum_cond = vec![vec![0.0; d_out]; n];
        let mut enum_hit = vec![0.0; n];
        for sg in &inst.outcomes {
            let p = sg.log_prob.exp();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape).expect("bind");
            let (h, index) = encode_sampled(&mut tape, &bound, sg, &features, &Normalization::PerNode { scale: 1.0 })
                .expect("encode");
            for &u in &seeds {
                let row = tape.value(h).row(index.local(u).expect("seed encoded")).to_vec();
                let m_u = sg.hops[0].sampled.iter().filter(|e| e.is_incident(u)).count();
                let self_term = vec_mat(&hx[u], &w0);
                for j in 0..d_out {
                    enum_pre[u][j] += p * row[j];
                    if m_u > 0 {
                        enum_cond[u][j] += p * (row[j] - self_term[j]);
                    }
                }
                if m_u > 0 {
                    enum_hit[u] += p;
                }
            }
        }
        for &u in &seeds {
            let inc: Vec<&Edge> = cands.iter().filter(|e| e.is_incident(u)).collect();
            let q_u: f64 = inc.iter().map(|e| inst.logits[e.rel].exp() / z).sum();
            let hit = 1.0 - (1.0 - q_u).powi(draws as i32);
            // c_{u,r} = exp(l_r) / sum_{r'} |N_{u,r'}| exp(l_{r'})
            let mut per_rel = vec![0usize; r];
            for e in &inc {
                per_rel[e.rel] += 1;
            }
            let denom: f64 = (0..r).map(|k| per_rel[k] as f64 * inst.logits[k].exp()).sum();
            let mut expect_agg = vec![0.0; d_out];
            for e in &inc {
                let c = inst.logits[e.rel].exp() / denom;
                let m = vec_mat(&hx[e.other(u)], &wr[e.rel]);
                for (a, b) in expect_agg.iter_mut().zip(m) {
                    *a += c * b;
                }
            }
            let self_term = vec_mat(&hx[u], &w0);
            worst = worst.max((enum_hit[u] - hit).abs());
            for j in 0..d_out {
                let closed = self_term[j] + hit * expect_agg[j];
                worst = worst.max((enum_pre[u][j] - closed).abs());
                if enum_hit[u] > 0.0 {
                    worst = worst.max((enum_cond[u][j] / enum_hit[u] - expect_agg[j]).abs());
                }
            }
            nodes_checked += 1;
        }
    }
    Ok(Check::at_most(
        "estimator-unbiasedness",
        worst,
        ENUM_TOL,
        format!(
            "{instances} instances, {nodes_checked} seed nodes, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    ))
}

/// Outcome probabilities sum to one and every hop's candidate mass is one.
pub fn probability_normalization(instances: usize, master: u64) -> Result<Vec<Check>, SamplerError> {
    let mut worst_total: f64 = 0.0;
    let mut worst_hop: f64 = 0.0;
    let mut outcomes = 0;
    for i in 0..instances {
        let mut rng = rng_for(master, 2, i as u64);
        let inst = tiny_instance(&mut rng, 1 + i % 2, 2, 4, false)?;
        let total: f64 = inst.outcomes.iter().map(|sg| sg.log_prob.exp()).sum();
        worst_total = worst_total.max((total - 1.0).abs());
        outcomes += inst.outcomes.len();
        for sg in &inst.outcomes {
            for hop in sg.hops.iter().filter(|h| h.num_candidates() > 0) {
                let p = hop_probabilities(&inst.logits, &hop.candidate_type_counts)?;
                let mass: f64 = hop
                    .candidate_type_counts
                    .iter()
                    .zip(&p)
                    .map(|(&c, &p)| c as f64 * p)
                    .sum();
                worst_hop = worst_hop.max((mass - 1.0).abs());
            }
        }
    }
    Ok(vec![
        Check::at_most(
            "outcome-probability-sum",
            worst_total,
            ENUM_TOL,
            format!("{instances} instances, {outcomes} outcomes"),
        ),
        Check::at_most("hop-mass", worst_hop, HOP_NORM_TOL, format!("{instances} instances")),
    ])
}

fn tiny_train_data(graph: &MultiRelGraph, features: Features) -> TrainData {
    TrainData {
        graph: graph.clone(),
        train_graph: graph.clone(),
        features,
        train_pos: Vec::new(),
        valid_pos: Vec::new(),
        valid_neg: Vec::new(),
        test_pos: Vec::new(),
        test_neg: Vec::new(),
    }
}

fn batch_loss(
    model: &Model,
    logits: &[f64],
    config: &TrainConfig,
    data: &TrainData,
    neighborhood: Neighborhood<'_>,
    edges: &[Edge],
    labels: &Matrix,
) -> (f64, Vec<Matrix>, Vec<f64>) {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape).expect("bind");
    let r = logits.len();
    let logit_var = match config.weighting {
        WeightingMode::RelationWeighted => {
            Some(tape.param(Array2::from_shape_vec((r, 1), logits.to_vec()).expect("column")))
        }
        WeightingMode::DegreeNormalized => None,
    };
    let scores = forward_logits(&mut tape, &bound, logit_var, config, data, logits, neighborhood, edges)
        .expect("forward");
    let loss = tape.bce_with_logits(scores, labels).expect("bce");
    let value = tape.scalar_value(loss);
    let grads = tape.backward(loss).expect("backward");
    let model_grads = bound
        .vars
        .iter()
        .zip(model.shapes())
        .map(|(&v, s)| grads.get_or_zeros(v, s))
        .collect();
    let logit_grads = logit_var
        .map(|v| grads.get_or_zeros(v, (r, 1)).iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; r]);
    (value, model_grads, logit_grads)
}

/// REINFORCE expectation vs finite differences of the expected loss, the
/// baseline's zero expectation, and the analytic log-probability gradient.
pub fn reinforce_checks(instances: usize, master: u64) -> Result<Vec<Check>, SamplerError> {
    let mut worst_reinforce: f64 = 0.0;
    let mut worst_baseline: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng_for(master, 3, i as u64);
        let inst = tiny_instance(&mut rng, 1, 1, 4, true)?;
        let r = inst.graph.num_relations();
        let d_in = 3;
        let mut model = single_layer_model(&mut rng, d_in, 3, r, 30);
        model.decoder.diagonals = random_matrix(&mut rng, r, 3);
        let features = Features::Dense(random_matrix(&mut rng, inst.graph.num_nodes(), d_in));
        let data = tiny_train_data(&inst.graph, features);
        let config = TrainConfig {
            model: ModelConfig {
                hidden_dim: 3,
                num_layers: 1,
                num_bases: 30,
                decoder: DecoderKind::DistMult,
            },
            plan: inst.plan.clone(),
            ..TrainConfig::default()
        };
        let labels = Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).expect("labels");
        let losses: Vec<f64> = inst
            .outcomes
            .iter()
            .map(|sg| {
                batch_loss(&model, &inst.logits, &config, &data, Neighborhood::Sampled(sg), &inst.targets, &labels).0
            })
            .collect();
        let baseline: f64 = rng.random_range(0.0..2.0);
        let mut expected = vec![0.0; r];
        let mut expected_b = vec![0.0; r];
        for (sg, &loss) in inst.outcomes.iter().zip(&losses) {
            let p = sg.log_prob.exp();
            for (k, g) in reinforce_gradient(loss, 0.0, sg).into_iter().enumerate() {
                expected[k] += p * g;
            }
            for (k, g) in reinforce_gradient(loss, baseline, sg).into_iter().enumerate() {
                expected_b[k] += p * g;
            }
        }
        let expected_loss = |l: &[f64]| -> f64 {
            inst.outcomes
                .iter()
                .zip(&losses)
                .map(|(sg, &loss)| sg.log_prob_at(l).expect("log prob").exp() * loss)
                .sum()
        };
        for k in 0..r {
            let mut up = inst.logits.clone();
            up[k] += REINFORCE_EPS;
            let mut down = inst.logits.clone();
            down[k] -= REINFORCE_EPS;
            let fd = (expected_loss(&up) - expected_loss(&down)) / (2.0 * REINFORCE_EPS);
            worst_reinforce = worst_reinforce.max(relative_error(expected[k], fd, REL_FLOOR));
            worst_baseline = worst_baseline.max((expected[k] - expected_b[k]).abs());
        }
    }

    let mut worst_logp: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng_for(master, 4, i as u64);
        let r = rng.random_range(2..=5);
        let graph = random_graph(&mut rng, 30, r, 90);
        let logits = random_logits(&mut rng, r);
        let targets = vec![graph.edge(rng.random_range(0..graph.num_edges()))];
        let sg = sample_neighborhood_with_rng(&graph, &targets, &logits, &SamplePlan::default(), 4, &mut rng)?;
        let analytic = sg.log_prob_gradient();
        for k in 0..r {
            let mut up = logits.clone();
            up[k] += GRAD_EPS;
            let mut down = logits.clone();
            down[k] -= GRAD_EPS;
            let fd = (sg.log_prob_at(&up)? - sg.log_prob_at(&down)?) / (2.0 * GRAD_EPS);
            worst_logp = worst_logp.max(relative_error(analytic[k], fd, REL_FLOOR));
        }
    }
    Ok(vec![
        Check::at_most(
            "reinforce-expectation",
            worst_reinforce,
            REINFORCE_TOL,
            format!("{instances} enumerated instances, eps {REINFORCE_EPS:e}"),
        ),
        Check::at_most(
            "reinforce-baseline-zero-mean",
            worst_baseline,
            ENUM_TOL,
            format!("{instances} instances"),
        ),
        Check::at_most(
            "log-prob-gradient",
            worst_logp,
            LOG_PROB_GRAD_TOL,
            format!("{instances} sampled neighborhoods, eps {GRAD_EPS:e}"),
        ),
    ])
}

/// Central differences of the batch loss against tape gradients for every
/// parameter of a 2-layer encoder with basis decomposition, both decoders,
/// both weightings (including `l`), on full and sampled neighborhoods.
pub fn gradcheck(seeds: usize, master: u64) -> Vec<Check> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_logit: f64 = 0.0;
    let mut entries = 0usize;
    for i in 0..seeds {
        for decoder in [DecoderKind::DistMult, DecoderKind::Dedicom] {
            for weighting in [WeightingMode::DegreeNormalized, WeightingMode::RelationWeighted] {
                for sampled in [false, true] {
                    let mut rng = rng_for(master, 5, i as u64);
                    let n = 6;
                    let r = 3;
                    let graph = random_graph(&mut rng, n, r, 10);
                    let d_in = 4;
                    let model_config = ModelConfig {
                        hidden_dim: 3,
                        num_layers: 2,
                        num_bases: 2,
                        decoder,
                    };
                    let model = Model::init(&model_config, d_in, r, &mut rng);
                    let logits = random_logits(&mut rng, r);
                    let features = Features::Dense(random_matrix(&mut rng, n, d_in));
                    let data = tiny_train_data(&graph, features);
                    let pos: Vec<Edge> = (0..2).map(|_| graph.edge(rng.random_range(0..graph.num_edges()))).collect();
                    let neg: Vec<Edge> = (0..2).map(|_| non_edge(&mut rng, &graph)).collect();
                    let mut edges = pos.clone();
                    edges.extend(&neg);
                    let labels = Array2::from_shape_fn((4, 1), |(k, _)| if k < 2 { 1.0 } else { 0.0 });
                    let config = TrainConfig {
                        model: model_config,
                        sampler: if sampled {
                            Some(crate::sampler::SamplerMode::Learned)
                        } else {
                            None
                        },
                        weighting,
                        estimator: Estimator::RelationalMc,
                        ..TrainConfig::default()
                    };
                    let sg;
                    let neighborhood = if sampled {
                        sg = sample_neighborhood_with_rng(&graph, &edges, &logits, &SamplePlan::default(), 2, &mut rng)
                            .expect("sample");
                        Neighborhood::Sampled(&sg)
                    } else {
                        Neighborhood::Full { exclude: &pos }
                    };
                    let (_, grads, logit_grads) =
                        batch_loss(&model, &logits, &config, &data, neighborhood, &edges, &labels);
                    let tensors = model.tensors();
                    for (t, g) in grads.iter().enumerate() {
                        let fd = central_difference(tensors[t], GRAD_EPS, |x| {
                            let mut m = model.clone();
                            *m.tensors_mut()[t] = x.clone();
                            batch_loss(&m, &logits, &config, &data, neighborhood, &edges, &labels).0
                        });
                        for (a, b) in g.iter().zip(fd.iter()) {
                            worst = worst.max(relative_error(*a, *b, REL_FLOOR));
                            entries += 1;
                        }
                    }
                    if weighting == WeightingMode::RelationWeighted {
                        let col = Array2::from_shape_vec((r, 1), logits.clone()).expect("column");
                        let fd = central_difference(&col, GRAD_EPS, |x| {
                            let l: Vec<f64> = x.iter().copied().collect();
                            batch_loss(&model, &l, &config, &data, neighborhood, &edges, &labels).0
                        });
                        for (a, b) in logit_grads.iter().zip(fd.iter()) {
                            worst_logit = worst_logit.max(relative_error(*a, *b, REL_FLOOR));
                        }
                    }
                }
            }
        }
    }
    let detail = format!(
        "{seeds} seeds x 2 decoders x 2 weightings x full/sampled, {entries} entries, {:.2}s",
        start.elapsed().as_secs_f64()
    );
    vec![
        Check::at_most("gradcheck-parameters", worst, GRAD_TOL, detail.clone()),
        Check::at_most("gradcheck-relation-logits", worst_logit, GRAD_TOL, detail),
    ]
}

/// Library full pass against [`oracle_encode_full`] for both weightings,
/// and the sampled pass over a neighborhood that contains every edge once.
pub fn full_pass_oracle(seeds: usize, master: u64) -> Result<Vec<Check>, SamplerError> {
    let mut worst: f64 = 0.0;
    for i in 0..seeds {
        let mut rng = rng_for(master, 6, i as u64);
        let (n, r, d_in) = (6, 3, 4);
        let graph = random_graph(&mut rng, n, r, 10);
        for (bases, decoder) in [(30, DecoderKind::DistMult), (2, DecoderKind::Dedicom)] {
            let config = ModelConfig {
                hidden_dim: 3,
                num_layers: 2,
                num_bases: bases,
                decoder,
            };
            let model = Model::init(&config, d_in, r, &mut rng);
            let x = random_matrix(&mut rng, n, d_in);
            let logits = random_logits(&mut rng, r);
            for weighting in [WeightingMode::DegreeNormalized, WeightingMode::RelationWeighted] {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape).expect("bind");
                let (norm, coeff): (Normalization, Box<dyn Fn(usize, usize) -> f64>) = match weighting {
                    WeightingMode::DegreeNormalized => (
                        Normalization::PerRelation,
                        Box::new(|u, r| 1.0 / graph.neighbors(u, r).len() as f64),
                    ),
                    WeightingMode::RelationWeighted => {
                        let l = logits.clone();
                        let g = &graph;
                        let logits_var = tape.constant(Array2::from_shape_vec((r, 1), logits.clone()).expect("col"));
                        (
                            Normalization::Softmax { logits: logits_var },
                            Box::new(move |u, rr| {
                                let denom: f64 = (0..g.num_relations())
                                    .map(|k| g.neighbors(u, k).len() as f64 * l[k].exp())
                                    .sum();
                                l[rr].exp() / denom
                            }),
                        )
                    }
                };
                let h = encode_full(&mut tape, &bound, &graph, &Features::Dense(x.clone()), &norm).expect("encode");
                let oracle = oracle_encode_full(&graph, &x, &model, &*coeff);
                for (u, row) in oracle.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        worst = worst.max((tape.value(h)[[u, j]] - v).abs());
                    }
                }
            }
        }
    }

    let mut worst_reduction: f64 = 0.0;
    for i in 0..seeds {
        let mut rng = rng_for(master, 7, i as u64);
        let n = 7;
        // every edge touches node 0 or 1, and the target pair is not an edge
        let mut edges = Vec::new();
        for v in 2..n {
            if rng.random_bool(0.7) {
                edges.push(Edge::new(0, 0, v));
            }
            if rng.random_bool(0.5) {
                edges.push(Edge::new(1, 0, v));
            }
        }
        if edges.is_empty() {
            edges.push(Edge::new(0, 0, 2));
        }
        let graph = MultiRelGraph::from_edges(n, 1, edges).expect("graph");
        let e = graph.num_edges();
        let targets = [Edge::new(0, 0, 1)];
        let plan = SamplePlan::new(vec![e], vec![e])?;
        let sg = replay_neighborhood(&graph, &targets, &[0.0], &plan, 1, &[graph.edges().to_vec()])?;
        let model = single_layer_model(&mut rng, 3, 2, 1, 30);
        let x = random_matrix(&mut rng, n, 3);
        let features = Features::Dense(x);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).expect("bind");
        let full = encode_full(&mut tape, &bound, &graph, &features, &Normalization::PerRelation).expect("full");
        let (samp, index) =
            encode_sampled(&mut tape, &bound, &sg, &features, &Normalization::PerNode { scale: 1.0 }).expect("sampled");
        for &u in index.global_ids() {
            let lu = index.local(u).expect("indexed");
            for j in 0..2 {
                worst_reduction = worst_reduction.max((tape.value(full)[[u, j]] - tape.value(samp)[[lu, j]]).abs());
            }
        }
    }
    Ok(vec![
        Check::at_most(
            "full-pass-oracle",
            worst,
            ORACLE_TOL,
            format!("{seeds} graphs x 2 parameterizations x 2 weightings"),
        ),
        Check::at_most(
            "sampling-without-omission",
            worst_reduction,
            ORACLE_TOL,
            format!("{seeds} graphs"),
        ),
    ])
}

/// Chi-square fit of uniform draws and the share of the favored type under
/// logits [5, -5].
pub fn sampler_frequencies(master: u64) -> Result<Vec<Check>, SamplerError> {
    let mut rng = rng_for(master, 8, 0);
    let graph = random_graph(&mut rng, 30, 3, 80);
    let target = graph.edge(0);
    let draws = 100_000;
    let plan = SamplePlan::new(vec![draws / 2], vec![draws])?;
    let sg = sample_neighborhood_with_rng(&graph, &[target], &[0.0; 3], &plan, 1, &mut rng)?;
    let cands = candidate_edges(&graph, &seeds(&[target]), &[target]);
    let mut counts = vec![0u64; cands.len()];
    for e in &sg.hops[0].sampled {
        counts[cands.iter().position(|c| c == e).expect("sampled edge is a candidate")] += 1;
    }
    let expected = draws as f64 / cands.len() as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let df = (cands.len() - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(df).expect("positive df").cdf(stat);

    let mut rng = rng_for(master, 8, 1);
    let graph = random_graph(&mut rng, 12, 2, 30);
    let target = graph.edge(0);
    let n = 10_000;
    let plan = SamplePlan::new(vec![n / 2], vec![n])?;
    let sg = sample_neighborhood_with_rng(&graph, &[target], &[5.0, -5.0], &plan, 1, &mut rng)?;
    let hop = &sg.hops[0];
    let favored = hop.sampled.iter().filter(|e| e.rel == 0).count() as f64 / hop.sampled.len() as f64;
    Ok(vec![
        Check::at_least(
            "uniform-chi-square",
            p_value,
            CHI_SQUARE_ALPHA,
            format!("{draws} draws over {} candidates, statistic {stat:.2}", cands.len()),
        ),
        Check::at_least(
            "learned-favored-share",
            favored,
            0.99,
            format!(
                "{} draws, candidate counts {:?}",
                hop.sampled.len(),
                hop.candidate_type_counts
            ),
        ),
    ])
}

/// Pairwise ROC-AUC.
pub fn brute_force_roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Average precision from the step curve over every distinct threshold.
pub fn brute_force_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for t in thresholds {
        let predicted: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = predicted.iter().filter(|&&i| labels[i]).count() as f64;
        let recall = tp / p;
        let precision = tp / predicted.len() as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// Library metrics against the brute-force definitions on random tied
/// instances.
pub fn metrics_oracle(instances: usize, master: u64) -> Check {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng_for(master, 9, i as u64);
        let n = rng.random_range(2..60);
        let levels = rng.random_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let data = ScoredLabels::new(scores.clone(), labels.clone()).expect("valid");
        worst = worst.max((roc_auc(&data).expect("roc") - brute_force_roc_auc(&scores, &labels)).abs());
        worst = worst.max((pr_auc(&data).expect("pr") - brute_force_pr_auc(&scores, &labels)).abs());
    }
    Check::at_most("metrics-oracle", worst, METRIC_TOL, format!("{instances} tied instances"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_metrics_hand_values() {
        assert_eq!(brute_force_pr_auc(&[0.1, 0.4, 0.3, 0.2], &[true, false, false, false]), 0.25);
        assert_eq!(brute_force_roc_auc(&[0.5, 0.5], &[true, false]), 0.5);
    }

    #[test]
    fn enumeration_of_single_hop_counts_outcomes() {
        let g = MultiRelGraph::from_edges(4, 1, [Edge::new(0, 0, 1), Edge::new(0, 0, 2), Edge::new(1, 0, 3)]).unwrap();
        let plan = SamplePlan::new(vec![1], vec![2]).unwrap();
        let all = enumerate_neighborhoods(&g, &[Edge::new(0, 0, 1)], &[0.0], &plan, 1).unwrap();
        assert_eq!(all.len(), 4);
        let total: f64 = all.iter().map(|s| s.log_prob.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
