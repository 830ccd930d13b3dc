//! Relation-dependent k-hop edge sampling around a batch of target edges.
//!
//! In hop k every candidate edge of relation r is drawn with probability
//!
//! ```text
//! p_{r,k} = exp(l_r) / sum_{r'} |E_{k,r'}| exp(l_{r'})
//! ```
//!
//! where `E_{k,r}` are the type-r training edges incident to the frontier
//! `N_{k-1}`. Draws are i.i.d. with replacement, so the log-probability of a
//! sampled subgraph is the sum of `log p_{r_i,k}` over every draw, and its
//! gradient with respect to the logits has a closed form (see
//! [`SampledSubgraph::log_prob_gradient`]).

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, MultiRelGraph};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("no target edges")]
    EmptyTargets,
    #[error("hop has no candidate edges")]
    EmptyCandidates,
    #[error("invalid sample plan: {0}")]
    BadPlan(String),
    #[error("{got} logits for {expected} relations")]
    LogitLength { expected: usize, got: usize },
    #[error("hop {hop}: {edge} is not a candidate")]
    NotACandidate { hop: usize, edge: Edge },
    #[error("hop {hop}: expected {expected} draws, got {got}")]
    WrongDrawCount {
        hop: usize,
        expected: usize,
        got: usize,
    },
}

/// How relation logits are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// All logits zero: every candidate edge equally likely.
    Uniform,
    /// Frozen `-ln(count_r)` from the training graph.
    InverseFrequency,
    /// Trainable logits, initialized standard normal.
    Learned,
}

impl SamplerMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" | "random" => Some(Self::Uniform),
            "inverse-frequency" | "ifr" => Some(Self::InverseFrequency),
            "learned" => Some(Self::Learned),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::InverseFrequency => "inverse-frequency",
            Self::Learned => "learned",
        }
    }
}

/// Per-relation logits `l_r` and the mode that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationLogits {
    values: Vec<f64>,
    mode: SamplerMode,
}

impl RelationLogits {
    pub fn uniform(num_relations: usize) -> Self {
        Self {
            values: vec![0.0; num_relations],
            mode: SamplerMode::Uniform,
        }
    }

    pub fn inverse_frequency(graph: &MultiRelGraph) -> Self {
        Self {
            values: graph.inverse_frequency_logits(),
            mode: SamplerMode::InverseFrequency,
        }
    }

    /// Standard-normal initialization.
    pub fn learned<R: Rng + ?Sized>(num_relations: usize, rng: &mut R) -> Self {
        Self {
            values: (0..num_relations).map(|_| StandardNormal.sample(rng)).collect(),
            mode: SamplerMode::Learned,
        }
    }

    pub fn learned_from(values: Vec<f64>) -> Self {
        Self {
            values,
            mode: SamplerMode::Learned,
        }
    }

    pub fn for_mode<R: Rng + ?Sized>(mode: SamplerMode, graph: &MultiRelGraph, rng: &mut R) -> Self {
        match mode {
            SamplerMode::Uniform => Self::uniform(graph.num_relations()),
            SamplerMode::InverseFrequency => Self::inverse_frequency(graph),
            SamplerMode::Learned => Self::learned(graph.num_relations(), rng),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mutable access, only for learned logits.
    pub fn trainable_mut(&mut self) -> Option<&mut Vec<f64>> {
        match self.mode {
            SamplerMode::Learned => Some(&mut self.values),
            _ => None,
        }
    }
}

/// Hop count, per-hop fanout `s_k` and per-hop cap multiplier `c_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    fanouts: Vec<usize>,
    cap_multipliers: Vec<usize>,
}

impl Default for SamplePlan {
    /// Two hops, fanouts (7, 3), caps 7x and 3x the batch size.
    fn default() -> Self {
        Self {
            fanouts: vec![7, 3],
            cap_multipliers: vec![7, 3],
        }
    }
}

impl SamplePlan {
    pub fn new(fanouts: Vec<usize>, cap_multipliers: Vec<usize>) -> Result<Self, SamplerError> {
        if fanouts.is_empty() {
            return Err(SamplerError::BadPlan("at least one hop required".into()));
        }
        if fanouts.len() != cap_multipliers.len() {
            return Err(SamplerError::BadPlan(format!(
                "{} fanouts but {} caps",
                fanouts.len(),
                cap_multipliers.len()
            )));
        }
        if fanouts.iter().chain(&cap_multipliers).any(|&x| x == 0) {
            return Err(SamplerError::BadPlan("fanouts and caps must be >= 1".into()));
        }
        Ok(Self {
            fanouts,
            cap_multipliers,
        })
    }

    pub fn num_hops(&self) -> usize {
        self.fanouts.len()
    }

    pub fn fanouts(&self) -> &[usize] {
        &self.fanouts
    }

    pub fn cap_multipliers(&self) -> &[usize] {
        &self.cap_multipliers
    }

    /// n_k = min(s_k * |N_{k-1}|, c_k * batch_size).
    pub fn draws(&self, hop: usize, frontier_size: usize, batch_size: usize) -> usize {
        (self.fanouts[hop] * frontier_size).min(self.cap_multipliers[hop] * batch_size)
    }

    /// Upper bound on sampled edge instances per batch.
    pub fn edge_budget(&self, batch_size: usize) -> usize {
        self.cap_multipliers.iter().map(|c| c * batch_size).sum()
    }
}

/// Per-edge probability p_{r,k} for each relation, given the hop's
/// candidate counts |E_{k,r}|.
pub fn hop_probabilities(logits: &[f64], counts: &[usize]) -> Result<Vec<f64>, SamplerError> {
    if logits.len() != counts.len() {
        return Err(SamplerError::LogitLength {
            expected: counts.len(),
            got: logits.len(),
        });
    }
    let max = logits
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SamplerError::EmptyCandidates);
    }
    let z: f64 = logits
        .iter()
        .zip(counts)
        .map(|(&l, &c)| c as f64 * (l - max).exp())
        .sum();
    Ok(logits.iter().map(|&l| (l - max).exp() / z).collect())
}

/// One hop of a sampled neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    /// |E_{k,r}| per relation.
    pub candidate_type_counts: Vec<usize>,
    /// p_{r,k} per relation (per-edge probability).
    pub type_probabilities: Vec<f64>,
    /// Drawn edges in draw order, canonical, repeated when drawn twice.
    pub sampled: Vec<Edge>,
    /// N_k, sorted.
    pub frontier: Vec<usize>,
}

impl Hop {
    pub fn num_candidates(&self) -> usize {
        self.candidate_type_counts.iter().sum()
    }

    pub fn sampled_type_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.candidate_type_counts.len()];
        for e in &self.sampled {
            out[e.rel] += 1;
        }
        out
    }
}

/// Multiset of sampled edges per hop around a batch of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    pub targets: Vec<Edge>,
    /// N_0: endpoints of the targets, sorted.
    pub seeds: Vec<usize>,
    pub hops: Vec<Hop>,
    /// log p_l(g) = sum_k sum_i log p_{r_i,k}.
    pub log_prob: f64,
    /// True when the targets had no candidate edges at all.
    pub degenerate: bool,
}

impl SampledSubgraph {
    /// d log p_l(g) / d l_r = sum_k (count of sampled type-r edges in hop k
    /// minus n_k times the softmax mass of type r in hop k).
    pub fn log_prob_gradient(&self) -> Vec<f64> {
        let r = self.num_relations();
        let mut grad = vec![0.0; r];
        for hop in &self.hops {
            if hop.sampled.is_empty() {
                continue;
            }
            let n = hop.sampled.len() as f64;
            for (g, (&c, &p)) in grad
                .iter_mut()
                .zip(hop.candidate_type_counts.iter().zip(&hop.type_probabilities))
            {
                *g -= n * c as f64 * p;
            }
            for e in &hop.sampled {
                grad[e.rel] += 1.0;
            }
        }
        grad
    }

    /// log p_l(g) of the same draws under other logits. Candidate sets do
    /// not depend on the logits, so only the per-hop softmax changes.
    pub fn log_prob_at(&self, logits: &[f64]) -> Result<f64, SamplerError> {
        let mut total = 0.0;
        for hop in &self.hops {
            if hop.sampled.is_empty() {
                continue;
            }
            let p = hop_probabilities(logits, &hop.candidate_type_counts)?;
            total += hop.sampled.iter().map(|e| p[e.rel].ln()).sum::<f64>();
        }
        Ok(total)
    }

    pub fn num_relations(&self) -> usize {
        self.hops
            .first()
            .map(|h| h.candidate_type_counts.len())
            .unwrap_or(0)
    }

    /// Every node touched by the neighborhood (the last frontier).
    pub fn nodes(&self) -> &[usize] {
        self.hops.last().map(|h| h.frontier.as_slice()).unwrap_or(&self.seeds)
    }

    /// Sampled edge instances per hop.
    pub fn edge_touches(&self) -> Vec<usize> {
        self.hops.iter().map(|h| h.sampled.len()).collect()
    }
}

/// Candidate edges of one hop grouped by relation.
struct Candidates {
    edges: Vec<Edge>,
    by_type: Vec<Vec<usize>>,
    counts: Vec<usize>,
}

fn collect_candidates(
    graph: &MultiRelGraph,
    frontier: &[usize],
    in_frontier: &[bool],
    excluded: &HashSet<Edge>,
) -> Candidates {
    let r = graph.num_relations();
    let mut edges = Vec::new();
    let mut by_type = vec![Vec::new(); r];
    for &u in frontier {
        for &eid in graph.incident_edges(u) {
            let e = graph.edge(eid);
            let w = e.other(u);
            // an edge between two frontier nodes is listed once
            if in_frontier[w] && w < u {
                continue;
            }
            if excluded.contains(&e) {
                continue;
            }
            by_type[e.rel].push(edges.len());
            edges.push(e);
        }
    }
    let counts = by_type.iter().map(Vec::len).collect();
    Candidates {
        edges,
        by_type,
        counts,
    }
}

/// Candidate edges of a hop expanding `frontier`, in the order the sampler
/// indexes them. Target edges are left out.
pub fn candidate_edges(graph: &MultiRelGraph, frontier: &[usize], targets: &[Edge]) -> Vec<Edge> {
    let mut in_frontier = vec![false; graph.num_nodes()];
    for &u in frontier {
        in_frontier[u] = true;
    }
    let excluded: HashSet<Edge> = targets.iter().map(|e| e.canonical()).collect();
    collect_candidates(graph, frontier, &in_frontier, &excluded).edges
}

/// Source of draws for a hop: random, or replayed from a fixed list.
trait Draw {
    fn draw(
        &mut self,
        hop: usize,
        n: usize,
        cands: &Candidates,
        probs: &[f64],
    ) -> Result<Vec<Edge>, SamplerError>;
}

struct RandomDraw<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> Draw for RandomDraw<'_, R> {
    fn draw(
        &mut self,
        _hop: usize,
        n: usize,
        cands: &Candidates,
        probs: &[f64],
    ) -> Result<Vec<Edge>, SamplerError> {
        // relation first (mass |E_{k,r}| p_{r,k}), then uniform within it
        let present: Vec<usize> = (0..cands.counts.len()).filter(|&r| cands.counts[r] > 0).collect();
        let mut cumulative = Vec::with_capacity(present.len());
        let mut acc = 0.0;
        for &r in &present {
            acc += cands.counts[r] as f64 * probs[r];
            cumulative.push(acc);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = self.0.random::<f64>() * acc;
            let slot = cumulative.partition_point(|&c| c <= u).min(present.len() - 1);
            let pool = &cands.by_type[present[slot]];
            let pick = pool[self.0.random_range(0..pool.len())];
            out.push(cands.edges[pick]);
        }
        Ok(out)
    }
}

struct ReplayDraw<'a>(&'a [Vec<Edge>]);

impl Draw for ReplayDraw<'_> {
    fn draw(
        &mut self,
        hop: usize,
        n: usize,
        cands: &Candidates,
        _probs: &[f64],
    ) -> Result<Vec<Edge>, SamplerError> {
        let given = self.0.get(hop).map(Vec::as_slice).unwrap_or(&[]);
        if given.len() != n {
            return Err(SamplerError::WrongDrawCount {
                hop,
                expected: n,
                got: given.len(),
            });
        }
        given
            .iter()
            .map(|e| {
                let c = e.canonical();
                if cands.edges.contains(&c) {
                    Ok(c)
                } else {
                    Err(SamplerError::NotACandidate { hop, edge: *e })
                }
            })
            .collect()
    }
}

fn build<D: Draw>(
    graph: &MultiRelGraph,
    targets: &[Edge],
    logits: &[f64],
    plan: &SamplePlan,
    batch_size: usize,
    source: &mut D,
) -> Result<SampledSubgraph, SamplerError> {
    if targets.is_empty() {
        return Err(SamplerError::EmptyTargets);
    }
    let r = graph.num_relations();
    if logits.len() != r {
        return Err(SamplerError::LogitLength {
            expected: r,
            got: logits.len(),
        });
    }
    let excluded: HashSet<Edge> = targets.iter().map(|e| e.canonical()).collect();
    let mut in_frontier = vec![false; graph.num_nodes()];
    let mut frontier: Vec<usize> = Vec::new();
    for e in targets {
        for v in [e.head, e.tail] {
            if !in_frontier[v] {
                in_frontier[v] = true;
                frontier.push(v);
            }
        }
    }
    frontier.sort_unstable();
    let seeds = frontier.clone();

    let mut hops = Vec::with_capacity(plan.num_hops());
    let mut log_prob = 0.0;
    let mut degenerate = false;
    for k in 0..plan.num_hops() {
        let cands = collect_candidates(graph, &frontier, &in_frontier, &excluded);
        if cands.edges.is_empty() {
            if k == 0 {
                degenerate = true;
            }
            hops.push(Hop {
                candidate_type_counts: cands.counts,
                type_probabilities: vec![0.0; r],
                sampled: Vec::new(),
                frontier: frontier.clone(),
            });
            continue;
        }
        let probs = hop_probabilities(logits, &cands.counts)?;
        let n = plan.draws(k, frontier.len(), batch_size);
        let sampled = source.draw(k, n, &cands, &probs)?;
        log_prob += sampled.iter().map(|e| probs[e.rel].ln()).sum::<f64>();
        for e in &sampled {
            for v in [e.head, e.tail] {
                if !in_frontier[v] {
                    in_frontier[v] = true;
                    frontier.push(v);
                }
            }
        }
        frontier.sort_unstable();
        hops.push(Hop {
            candidate_type_counts: cands.counts,
            type_probabilities: probs,
            sampled,
            frontier: frontier.clone(),
        });
    }
    Ok(SampledSubgraph {
        targets: targets.to_vec(),
        seeds,
        hops,
        log_prob,
        degenerate,
    })
}

/// Samples a k-hop neighborhood around `targets` with a seeded generator.
///
/// `graph` should be the message-passing (training) graph; target edges are
/// never candidates of their own neighborhood.
pub fn sample_neighborhood(
    graph: &MultiRelGraph,
    targets: &[Edge],
    logits: &RelationLogits,
    plan: &SamplePlan,
    batch_size: usize,
    seed: u64,
) -> Result<SampledSubgraph, SamplerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_neighborhood_with_rng(graph, targets, logits.values(), plan, batch_size, &mut rng)
}

pub fn sample_neighborhood_with_rng<R: Rng + ?Sized>(
    graph: &MultiRelGraph,
    targets: &[Edge],
    logits: &[f64],
    plan: &SamplePlan,
    batch_size: usize,
    rng: &mut R,
) -> Result<SampledSubgraph, SamplerError> {
    build(graph, targets, logits, plan, batch_size, &mut RandomDraw(rng))
}

/// Rebuilds the neighborhood obtained when hop k draws exactly `draws[k]`.
/// Used to evaluate specific outcomes (for example when enumerating every
/// possible subgraph of a tiny instance).
pub fn replay_neighborhood(
    graph: &MultiRelGraph,
    targets: &[Edge],
    logits: &[f64],
    plan: &SamplePlan,
    batch_size: usize,
    draws: &[Vec<Edge>],
) -> Result<SampledSubgraph, SamplerError> {
    build(graph, targets, logits, plan, batch_size, &mut ReplayDraw(draws))
}

/// Per-relation candidate and sampled totals across many neighborhoods.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStats {
    pub candidate_counts: Vec<u64>,
    pub sampled_counts: Vec<u64>,
}

impl SampleStats {
    pub fn new(num_relations: usize) -> Self {
        Self {
            candidate_counts: vec![0; num_relations],
            sampled_counts: vec![0; num_relations],
        }
    }

    pub fn add(&mut self, sg: &SampledSubgraph) {
        for hop in &sg.hops {
            for (acc, &c) in self.candidate_counts.iter_mut().zip(&hop.candidate_type_counts) {
                *acc += c as u64;
            }
            for e in &hop.sampled {
                self.sampled_counts[e.rel] += 1;
            }
        }
    }

    /// `relation_id,candidate_count,sampled_count,fraction` where fraction is
    /// the share of all sampled instances.
    pub fn to_csv(&self) -> String {
        let total: u64 = self.sampled_counts.iter().sum();
        let mut out = String::from("relation_id,candidate_count,sampled_count,fraction\n");
        for (r, (&c, &s)) in self.candidate_counts.iter().zip(&self.sampled_counts).enumerate() {
            let frac = if total == 0 { 0.0 } else { s as f64 / total as f64 };
            out.push_str(&format!("{r},{c},{s},{frac}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> MultiRelGraph {
        MultiRelGraph::from_edges(leaves + 1, 1, (1..=leaves).map(|v| Edge::new(0, 0, v))).unwrap()
    }

    #[test]
    fn zero_logits_are_uniform() {
        let p = hop_probabilities(&[0.0, 0.0], &[3, 1]).unwrap();
        assert_eq!(p, vec![0.25, 0.25]);
    }

    #[test]
    fn softmax_by_hand() {
        let p = hop_probabilities(&[2f64.ln(), 0.0], &[1, 1]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_frequency_balances_type_mass() {
        let l = [-(3f64.ln()), 0.0];
        let p = hop_probabilities(&l, &[3, 1]).unwrap();
        assert!((p[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert!((3.0 * p[0] - p[1]).abs() < 1e-15);
        // two edges, counts [1, 3] in the whole graph: type 0 gets 3/4
        let p = hop_probabilities(&[0.0, -(3f64.ln())], &[1, 1]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_hop_is_an_error() {
        assert_eq!(hop_probabilities(&[0.0], &[0]), Err(SamplerError::EmptyCandidates));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = hop_probabilities(&[800.0, 0.0], &[2, 5]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn star_graph_single_type() {
        let g = star(4);
        let target = Edge::new(0, 0, 4);
        let plan = SamplePlan::new(vec![7], vec![7]).unwrap();
        let sg = sample_neighborhood(&g, &[target], &RelationLogits::uniform(1), &plan, 1, 5).unwrap();
        let hop = &sg.hops[0];
        assert_eq!(hop.candidate_type_counts, vec![3]);
        // n_1 = min(7 * |{0, 4}|, 7 * 1) = 7
        assert_eq!(hop.sampled.len(), 7);
        assert!((sg.log_prob + 7.0 * 3f64.ln()).abs() < 1e-12);
        assert!(hop.sampled.iter().all(|e| *e != target));
    }

    #[test]
    fn isolated_targets_are_degenerate() {
        let g = MultiRelGraph::from_edges(4, 1, [Edge::new(0, 0, 1)]).unwrap();
        let sg = sample_neighborhood(
            &g,
            &[Edge::new(2, 0, 3)],
            &RelationLogits::uniform(1),
            &SamplePlan::default(),
            1,
            0,
        )
        .unwrap();
        assert!(sg.degenerate);
        assert_eq!(sg.log_prob, 0.0);
        assert!(sg.hops.iter().all(|h| h.sampled.is_empty()));
        assert_eq!(sg.hops.len(), 2);
    }

    #[test]
    fn single_outcome_has_zero_gradient() {
        let g = MultiRelGraph::from_edges(3, 1, [Edge::new(0, 0, 1), Edge::new(1, 0, 2)]).unwrap();
        let plan = SamplePlan::new(vec![1], vec![1]).unwrap();
        // target (1,0,2): the only candidate is (0,0,1); n = min(1*2, 1*1) = 1
        let sg = sample_neighborhood(&g, &[Edge::new(1, 0, 2)], &RelationLogits::learned_from(vec![0.7]), &plan, 1, 3).unwrap();
        assert_eq!(sg.hops[0].sampled.len(), 1);
        assert_eq!(sg.log_prob_gradient(), vec![0.0]);
    }

    #[test]
    fn gradient_by_hand() {
        // candidates: (0,0,1) and (0,1,2); target (0,0,3)
        let g = MultiRelGraph::from_edges(
            4,
            2,
            [Edge::new(0, 0, 1), Edge::new(0, 1, 2), Edge::new(0, 0, 3)],
        )
        .unwrap();
        let plan = SamplePlan::new(vec![1], vec![1]).unwrap();
        let sg = replay_neighborhood(
            &g,
            &[Edge::new(0, 0, 3)],
            &[0.0, 0.0],
            &plan,
            1,
            &[vec![Edge::new(0, 0, 1)]],
        )
        .unwrap();
        assert_eq!(sg.log_prob_gradient(), vec![0.5, -0.5]);
        assert!((sg.log_prob - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn replay_rejects_non_candidates_and_wrong_counts() {
        let g = star(3);
        let plan = SamplePlan::new(vec![1], vec![1]).unwrap();
        let t = [Edge::new(0, 0, 1)];
        assert!(matches!(
            replay_neighborhood(&g, &t, &[0.0], &plan, 1, &[vec![Edge::new(0, 0, 1)]]),
            Err(SamplerError::NotACandidate { hop: 0, .. })
        ));
        assert!(matches!(
            replay_neighborhood(&g, &t, &[0.0], &plan, 1, &[vec![]]),
            Err(SamplerError::WrongDrawCount { hop: 0, expected: 1, got: 0 })
        ));
    }

    #[test]
    fn plan_validation_and_budget() {
        assert!(SamplePlan::new(vec![], vec![]).is_err());
        assert!(SamplePlan::new(vec![7, 3], vec![7]).is_err());
        assert!(SamplePlan::new(vec![0], vec![1]).is_err());
        let p = SamplePlan::default();
        assert_eq!(p.draws(0, 10, 1), 7);
        assert_eq!(p.draws(0, 10, 100), 70);
        assert_eq!(p.draws(1, 10, 100), 30);
        assert_eq!(p.edge_budget(100), 1000);
    }

    #[test]
    fn stats_csv() {
        let g = star(3);
        let plan = SamplePlan::new(vec![2], vec![2]).unwrap();
        let sg = sample_neighborhood(&g, &[Edge::new(0, 0, 1)], &RelationLogits::uniform(1), &plan, 1, 1).unwrap();
        let mut stats = SampleStats::new(1);
        stats.add(&sg);
        assert_eq!(stats.to_csv(), "relation_id,candidate_count,sampled_count,fraction\n0,2,2,1\n");
    }
}
