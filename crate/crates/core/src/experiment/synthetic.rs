//! Synthetic graphs: the planted-informative-relation task and a dense
//! random graph for timing.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, MultiRelGraph};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Planted task: relation 0 is rare and informative, relations
/// `1..=num_noise_relations` are abundant noise, and the last relation is
/// the target. Every target edge joins two nodes that share at least one
/// informative-relation neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_noise_relations: usize,
    pub edges_per_noise_relation: usize,
    pub informative_relation_edges: usize,
    pub target_relation_edges: usize,
    pub seed: u64,
}

/// Ground truth written next to the generated edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub informative_relation: usize,
    pub noise_relations: Vec<usize>,
    pub target_relation: usize,
    /// Node pairs sharing an informative neighbor.
    pub admissible_pairs: usize,
    pub spec: SyntheticSpec,
}

fn max_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `count` distinct unordered pairs drawn uniformly by rejection.
fn random_pairs<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let p = (u.min(v), u.max(v));
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Unordered pairs `u < v` with at least one common neighbor under `rel`.
pub fn admissible_pairs(graph: &MultiRelGraph, rel: usize) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for w in 0..graph.num_nodes() {
        let nb = graph.neighbors(w, rel);
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

impl SyntheticSpec {
    pub fn num_relations(&self) -> usize {
        self.num_noise_relations + 2
    }

    pub fn target_relation(&self) -> usize {
        self.num_noise_relations + 1
    }

    fn check(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::Infeasible(m));
        if self.num_nodes < 3 {
            return bad("need at least 3 nodes".into());
        }
        // rejection sampling stays cheap below half density
        let limit = max_pairs(self.num_nodes) / 2;
        for (what, n) in [
            ("informative_relation_edges", self.informative_relation_edges),
            ("edges_per_noise_relation", self.edges_per_noise_relation),
        ] {
            if n > limit {
                return bad(format!("{what} = {n} exceeds half of the {} node pairs", max_pairs(self.num_nodes)));
            }
        }
        if self.informative_relation_edges == 0 || self.target_relation_edges == 0 {
            return bad("informative and target relations need edges".into());
        }
        if self.num_noise_relations > 0 && self.informative_relation_edges >= self.edges_per_noise_relation {
            return bad("the informative relation must be rarer than each noise relation".into());
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<(MultiRelGraph, Manifest), SyntheticError> {
        self.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.num_nodes;
        let mut edges: Vec<Edge> = random_pairs(n, self.informative_relation_edges, &mut rng)
            .into_iter()
            .map(|(u, v)| Edge::new(u, 0, v))
            .collect();
        for r in 1..=self.num_noise_relations {
            edges.extend(
                random_pairs(n, self.edges_per_noise_relation, &mut rng)
                    .into_iter()
                    .map(|(u, v)| Edge::new(u, r, v)),
            );
        }
        let informative = MultiRelGraph::from_edges(n, 1, edges.iter().copied().filter(|e| e.rel == 0))?;
        let mut admissible: Vec<(usize, usize)> = admissible_pairs(&informative, 0).into_iter().collect();
        if self.target_relation_edges > admissible.len() {
            return Err(SyntheticError::Infeasible(format!(
                "{} target edges requested but only {} node pairs share an informative neighbor",
                self.target_relation_edges,
                admissible.len()
            )));
        }
        let count = admissible.len();
        admissible.shuffle(&mut rng);
        let t = self.target_relation();
        edges.extend(
            admissible[..self.target_relation_edges]
                .iter()
                .map(|&(u, v)| Edge::new(u, t, v)),
        );
        let graph = MultiRelGraph::from_edges(n, self.num_relations(), edges)?;
        let manifest = Manifest {
            informative_relation: 0,
            noise_relations: (1..=self.num_noise_relations).collect(),
            target_relation: t,
            admissible_pairs: count,
            spec: *self,
        };
        Ok((graph, manifest))
    }
}

/// Target edges that violate the coupling rule, found by scanning every
/// node pair for a shared informative neighbor.
pub fn coupling_violations(graph: &MultiRelGraph, manifest: &Manifest) -> Vec<Edge> {
    let n = graph.num_nodes();
    let mut informative = vec![vec![false; n]; n];
    for e in graph.edges().iter().filter(|e| e.rel == manifest.informative_relation) {
        informative[e.head][e.tail] = true;
        informative[e.tail][e.head] = true;
    }
    let mut bad = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let target = Edge::new(u, manifest.target_relation, v);
            if graph.contains(&target) && !(0..n).any(|w| informative[u][w] && informative[v][w]) {
                bad.push(target);
            }
        }
    }
    bad
}

/// Fixed standard-normal node features. Unlike one-hot inputs they give
/// the encoder no per-node parameters to memorize.
pub fn random_features(num_nodes: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((num_nodes, dim), || StandardNormal.sample(&mut rng))
}

/// Random multi-relational graph with about `mean_degree` incident edges per
/// node, relations assigned uniformly.
pub fn dense_graph(
    num_nodes: usize,
    num_relations: usize,
    mean_degree: usize,
    seed: u64,
) -> Result<MultiRelGraph, SyntheticError> {
    let count = num_nodes * mean_degree / 2;
    if num_relations == 0 || count > max_pairs(num_nodes) / 2 {
        return Err(SyntheticError::Infeasible(format!(
            "{count} edges do not fit at half density in {num_nodes} nodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<Edge> = random_pairs(num_nodes, count, &mut rng)
        .into_iter()
        .map(|(u, v)| Edge::new(u, rng.random_range(0..num_relations), v))
        .collect();
    Ok(MultiRelGraph::from_edges(num_nodes, num_relations, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            num_nodes: 60,
            num_noise_relations: 2,
            edges_per_noise_relation: 80,
            informative_relation_edges: 40,
            target_relation_edges: 20,
            seed: 3,
        }
    }

    #[test]
    fn planted_task_counts_and_coupling() {
        let (g, m) = spec().generate().unwrap();
        assert_eq!(g.relation_counts(), &[40, 80, 80, 20]);
        assert_eq!(m.target_relation, 3);
        assert!(coupling_violations(&g, &m).is_empty());
    }

    #[test]
    fn no_noise_relations() {
        let s = SyntheticSpec {
            num_noise_relations: 0,
            ..spec()
        };
        let (g, m) = s.generate().unwrap();
        assert_eq!(m.informative_relation, 0);
        assert_eq!(m.target_relation, 1);
        assert_eq!(g.num_relations(), 2);
    }

    #[test]
    fn too_many_targets_is_infeasible() {
        let s = SyntheticSpec {
            target_relation_edges: 10_000,
            ..spec()
        };
        assert!(matches!(s.generate(), Err(SyntheticError::Infeasible(_))));
    }

    #[test]
    fn informative_must_be_rare() {
        let s = SyntheticSpec {
            informative_relation_edges: 80,
            ..spec()
        };
        assert!(s.generate().is_err());
    }

    #[test]
    fn dense_graph_degree() {
        let g = dense_graph(200, 3, 20, 1).unwrap();
        assert_eq!(g.num_edges(), 2000);
        assert!((g.mean_degree() - 20.0).abs() < 1e-12);
    }
}
