//! Multi-relational undirected graph storage, edge-list I/O, splitting and
//! negative sampling.
//!
//! Edges are stored once in canonical form (`head <= tail`) and mirrored into
//! a CSR adjacency indexed by `(node, relation)`, so `neighbors(u, r)` is the
//! neighbor set N_{u,r} used by message passing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io::write_atomic;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: self-loop on node `{node}`")]
    SelfLoop { line: usize, node: String },
    #[error("self-loop on node {0}")]
    SelfLoopId(usize),
    #[error("edge ({head}, {rel}, {tail}) out of range for {num_nodes} nodes and {num_relations} relations")]
    OutOfRange {
        head: usize,
        rel: usize,
        tail: usize,
        num_nodes: usize,
        num_relations: usize,
    },
    #[error("graph must have at least one node and one relation")]
    Empty,
    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    BadFractions([f64; 3]),
    #[error("split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error("negative sampling failed for relation {rel} after {attempts} attempts")]
    NegativeSamplingExhausted { rel: usize, attempts: usize },
    #[error("negative sampling needs at least one positive edge")]
    NoPositives,
    #[error("{path}: {msg}")]
    Features { path: String, msg: String },
}

/// A typed edge `(head, rel, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

impl Edge {
    pub fn new(head: usize, rel: usize, tail: usize) -> Self {
        Self { head, rel, tail }
    }

    /// Same edge with `head <= tail`.
    pub fn canonical(self) -> Self {
        if self.head <= self.tail {
            self
        } else {
            Self::new(self.tail, self.rel, self.head)
        }
    }

    /// The endpoint opposite to `node`. `node` must be an endpoint.
    pub fn other(&self, node: usize) -> usize {
        if self.head == node {
            self.tail
        } else {
            self.head
        }
    }

    pub fn is_incident(&self, node: usize) -> bool {
        self.head == node || self.tail == node
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.rel, self.tail)
    }
}

/// String labels for node and relation ids, in interning order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub nodes: Vec<String>,
    pub relations: Vec<String>,
}

impl Vocab {
    /// Identity labels `0..n` and `0..r`.
    pub fn numeric(num_nodes: usize, num_relations: usize) -> Self {
        Self {
            nodes: (0..num_nodes).map(|i| i.to_string()).collect(),
            relations: (0..num_relations).map(|i| i.to_string()).collect(),
        }
    }

    pub fn relation_id(&self, label: &str) -> Option<usize> {
        self.relations.iter().position(|l| l == label)
    }

    /// Writes `<token>\t<id>` sidecars for nodes and relations.
    pub fn write(&self, node_path: &Path, relation_path: &Path) -> Result<(), GraphError> {
        let render = |tokens: &[String]| {
            let mut out = String::new();
            for (id, tok) in tokens.iter().enumerate() {
                out.push_str(&format!("{tok}\t{id}\n"));
            }
            out
        };
        write_atomic(node_path, render(&self.nodes).as_bytes()).map_err(|e| io_err(node_path, e))?;
        write_atomic(relation_path, render(&self.relations).as_bytes())
            .map_err(|e| io_err(relation_path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Relation-partitioned undirected graph.
#[derive(Debug, Clone)]
pub struct MultiRelGraph {
    num_nodes: usize,
    num_relations: usize,
    /// Canonical edges, sorted.
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    relation_counts: Vec<usize>,
    /// CSR over `node * num_relations + rel`.
    adj_offsets: Vec<usize>,
    adj_neighbors: Vec<usize>,
    /// Per-node incident edge ids (indices into `edges`).
    inc_offsets: Vec<usize>,
    inc_edges: Vec<usize>,
    vocab: Vocab,
}

impl MultiRelGraph {
    /// Builds a graph from typed edges. Duplicates (in either orientation)
    /// collapse; self-loops and out-of-range ids are rejected.
    pub fn from_edges<I>(num_nodes: usize, num_relations: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Edge>,
    {
        Self::with_vocab(
            num_nodes,
            num_relations,
            edges,
            Vocab::numeric(num_nodes, num_relations),
        )
    }

    pub fn with_vocab<I>(
        num_nodes: usize,
        num_relations: usize,
        edges: I,
        vocab: Vocab,
    ) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Edge>,
    {
        if num_nodes == 0 || num_relations == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = HashSet::new();
        for e in edges {
            if e.head >= num_nodes || e.tail >= num_nodes || e.rel >= num_relations {
                return Err(GraphError::OutOfRange {
                    head: e.head,
                    rel: e.rel,
                    tail: e.tail,
                    num_nodes,
                    num_relations,
                });
            }
            if e.head == e.tail {
                return Err(GraphError::SelfLoopId(e.head));
            }
            set.insert(e.canonical());
        }
        let mut edges: Vec<Edge> = set.iter().copied().collect();
        edges.sort_unstable();

        let mut relation_counts = vec![0; num_relations];
        let mut adj_counts = vec![0usize; num_nodes * num_relations];
        let mut inc_counts = vec![0usize; num_nodes];
        for e in &edges {
            relation_counts[e.rel] += 1;
            adj_counts[e.head * num_relations + e.rel] += 1;
            adj_counts[e.tail * num_relations + e.rel] += 1;
            inc_counts[e.head] += 1;
            inc_counts[e.tail] += 1;
        }
        let adj_offsets = prefix_sums(&adj_counts);
        let inc_offsets = prefix_sums(&inc_counts);
        let mut adj_neighbors = vec![0; *adj_offsets.last().unwrap()];
        let mut inc_edges = vec![0; *inc_offsets.last().unwrap()];
        let mut adj_fill = adj_offsets.clone();
        let mut inc_fill = inc_offsets.clone();
        for (id, e) in edges.iter().enumerate() {
            for (a, b) in [(e.head, e.tail), (e.tail, e.head)] {
                let slot = a * num_relations + e.rel;
                adj_neighbors[adj_fill[slot]] = b;
                adj_fill[slot] += 1;
                inc_edges[inc_fill[a]] = id;
                inc_fill[a] += 1;
            }
        }
        for slot in 0..num_nodes * num_relations {
            adj_neighbors[adj_offsets[slot]..adj_offsets[slot + 1]].sort_unstable();
        }

        Ok(Self {
            num_nodes,
            num_relations,
            edges,
            edge_set: set,
            relation_counts,
            adj_offsets,
            adj_neighbors,
            inc_offsets,
            inc_edges,
            vocab,
        })
    }

    /// A graph over the same node and relation universe holding only `edges`.
    pub fn restricted_to(&self, edges: &[Edge]) -> Result<Self, GraphError> {
        Self::with_vocab(
            self.num_nodes,
            self.num_relations,
            edges.iter().copied(),
            self.vocab.clone(),
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edges in sorted order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn relation_counts(&self) -> &[usize] {
        &self.relation_counts
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// N_{u,r}, sorted.
    pub fn neighbors(&self, node: usize, rel: usize) -> &[usize] {
        let slot = node * self.num_relations + rel;
        &self.adj_neighbors[self.adj_offsets[slot]..self.adj_offsets[slot + 1]]
    }

    /// Total degree |N_u| summed over relations.
    pub fn degree(&self, node: usize) -> usize {
        self.inc_offsets[node + 1] - self.inc_offsets[node]
    }

    /// Ids of edges incident to `node`.
    pub fn incident_edges(&self, node: usize) -> &[usize] {
        &self.inc_edges[self.inc_offsets[node]..self.inc_offsets[node + 1]]
    }

    /// Membership test, orientation-insensitive.
    pub fn contains(&self, edge: &Edge) -> bool {
        self.edge_set.contains(&edge.canonical())
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.num_nodes as f64
    }

    /// Reads a `head<TAB>relation<TAB>tail` edge list. Tokens are interned
    /// in first-seen order; `#` comments and blank lines are skipped. When
    /// vocabulary sidecars (see [`vocab_paths`]) sit next to the file, their
    /// ids are used first so that a written graph reloads with the same ids.
    pub fn load_tsv(path: &Path) -> Result<Self, GraphError> {
        let (node_vocab, rel_vocab) = vocab_paths(path);
        let mut vocab = Vocab::default();
        if node_vocab.exists() && rel_vocab.exists() {
            vocab.nodes = read_vocab(&node_vocab)?;
            vocab.relations = read_vocab(&rel_vocab)?;
        }
        let mut node_ids: HashMap<String, usize> =
            vocab.nodes.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut rel_ids: HashMap<String, usize> =
            vocab.relations.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let mut edges = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = if trimmed.contains('\t') {
                trimmed.split('\t').map(str::trim).collect()
            } else {
                trimmed.split_whitespace().collect()
            };
            if fields.len() != 3 {
                return Err(GraphError::FieldCount {
                    line: line_no,
                    found: fields.len(),
                });
            }
            if fields[0] == fields[2] {
                return Err(GraphError::SelfLoop {
                    line: line_no,
                    node: fields[0].to_string(),
                });
            }
            let head = intern(&mut node_ids, &mut vocab.nodes, fields[0]);
            let rel = intern(&mut rel_ids, &mut vocab.relations, fields[1]);
            let tail = intern(&mut node_ids, &mut vocab.nodes, fields[2]);
            edges.push(Edge::new(head, rel, tail));
        }
        let n = vocab.nodes.len();
        let r = vocab.relations.len();
        Self::with_vocab(n, r, edges, vocab)
    }

    /// Writes canonical edges as labeled TSV plus the two vocabulary
    /// sidecars.
    pub fn write_tsv(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = String::from("# head\trelation\ttail\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.vocab.nodes[e.head], self.vocab.relations[e.rel], self.vocab.nodes[e.tail]
            ));
        }
        write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))?;
        let (node_vocab, rel_vocab) = vocab_paths(path);
        self.vocab.write(&node_vocab, &rel_vocab)
    }

    /// log(1 / count_r) per relation; relations absent from the graph get 0.
    pub fn inverse_frequency_logits(&self) -> Vec<f64> {
        self.relation_counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { -(c as f64).ln() })
            .collect()
    }

    /// Random partition of the canonical edges into train/valid/test.
    pub fn split_edges(&self, fractions: [f64; 3], seed: u64) -> Result<EdgeSplit, GraphError> {
        if fractions.iter().any(|&f| !f.is_finite() || f <= 0.0)
            || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(GraphError::BadFractions(fractions));
        }
        let n = self.edges.len();
        let mut order = self.edges.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let n_valid = (fractions[1] * n as f64 + 1e-9).floor() as usize;
        let n_test = (fractions[2] * n as f64 + 1e-9).floor() as usize;
        let n_train = n - n_valid - n_test;
        if n >= 3 {
            for (name, size) in [("train", n_train), ("valid", n_valid), ("test", n_test)] {
                if size == 0 {
                    return Err(GraphError::EmptySplit(name));
                }
            }
        }
        let test = order.split_off(n_train + n_valid);
        let valid = order.split_off(n_train);
        Ok(EdgeSplit {
            train: order,
            valid,
            test,
            fractions,
        })
    }

    /// Filtered negatives: each one corrupts one endpoint of a uniformly
    /// chosen positive and is rejected if it is a known edge (or a self-loop).
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        positives: &[Edge],
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Edge>, GraphError> {
        if positives.is_empty() {
            return Err(GraphError::NoPositives);
        }
        let budget = 100 * count.max(1);
        let mut attempts = 0usize;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let pos = positives[rng.random_range(0..positives.len())];
            loop {
                if attempts >= budget {
                    return Err(GraphError::NegativeSamplingExhausted {
                        rel: pos.rel,
                        attempts,
                    });
                }
                attempts += 1;
                let replacement = rng.random_range(0..self.num_nodes);
                let cand = if rng.random_bool(0.5) {
                    Edge::new(replacement, pos.rel, pos.tail)
                } else {
                    Edge::new(pos.head, pos.rel, replacement)
                };
                if cand.head != cand.tail && !self.contains(&cand) {
                    out.push(cand);
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Seeded convenience wrapper over [`MultiRelGraph::sample_negatives`].
    pub fn sample_negatives_seeded(
        &self,
        positives: &[Edge],
        count: usize,
        seed: u64,
    ) -> Result<Vec<Edge>, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_negatives(positives, count, &mut rng)
    }
}

/// Sidecar paths for an edge file: `<file>.nodes.vocab` and
/// `<file>.relations.vocab`.
pub fn vocab_paths(edge_file: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let name = edge_file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    (
        edge_file.with_file_name(format!("{name}.nodes.vocab")),
        edge_file.with_file_name(format!("{name}.relations.vocab")),
    )
}

fn read_vocab(path: &Path) -> Result<Vec<String>, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries: Vec<(usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (tok, id) = line.rsplit_once('\t').ok_or(GraphError::FieldCount {
            line: i + 1,
            found: 1,
        })?;
        let id = id.trim().parse::<usize>().map_err(|_| GraphError::FieldCount {
            line: i + 1,
            found: 2,
        })?;
        entries.push((id, tok.to_string()));
    }
    entries.sort();
    if entries.iter().enumerate().any(|(i, (id, _))| *id != i) {
        return Err(GraphError::Features {
            path: path.display().to_string(),
            msg: "vocabulary ids must be dense from 0".into(),
        });
    }
    Ok(entries.into_iter().map(|(_, t)| t).collect())
}

fn intern(map: &mut HashMap<String, usize>, tokens: &mut Vec<String>, tok: &str) -> usize {
    if let Some(&id) = map.get(tok) {
        return id;
    }
    let id = tokens.len();
    tokens.push(tok.to_string());
    map.insert(tok.to_string(), id);
    id
}

fn prefix_sums(counts: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(counts.len() + 1);
    out.push(0);
    let mut acc = 0;
    for &c in counts {
        acc += c;
        out.push(acc);
    }
    out
}

/// Disjoint train/valid/test edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub train: Vec<Edge>,
    pub valid: Vec<Edge>,
    pub test: Vec<Edge>,
    pub fractions: [f64; 3],
}

impl EdgeSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Node input features.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Implicit N×N identity.
    OneHot(usize),
    /// Dense N×D matrix.
    Dense(ndarray::Array2<f64>),
}

impl Features {
    pub fn num_nodes(&self) -> usize {
        match self {
            Features::OneHot(n) => *n,
            Features::Dense(m) => m.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::OneHot(n) => *n,
            Features::Dense(m) => m.ncols(),
        }
    }

    /// Reads `N D` on the first line followed by N rows of D decimals.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let bad = |msg: String| GraphError::Features {
            path: path.display().to_string(),
            msg,
        };
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("header: {e}")))?;
        if dims.len() != 2 {
            return Err(bad(format!("header must be `N D`, got {header:?}")));
        }
        let (n, d) = (dims[0], dims[1]);
        let mut values = Vec::with_capacity(n * d);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if row.len() != d {
                return Err(bad(format!("row {} has {} values, expected {d}", i + 1, row.len())));
            }
            values.extend(row);
        }
        if values.len() != n * d {
            return Err(bad(format!("expected {n} rows, found {}", values.len() / d.max(1))));
        }
        let m = ndarray::Array2::from_shape_vec((n, d), values).map_err(|e| bad(e.to_string()))?;
        Ok(Features::Dense(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn duplicate_lines_collapse() {
        let f = write_tmp("a\t0\tb\nb\t0\ta\n");
        let g = MultiRelGraph::load_tsv(f.path()).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_relations(), 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn relation_counts_from_labels() {
        let f = write_tmp("# comment\na\tr0\tb\n\na\tr1\tb\nb\tr1\tc\n");
        let g = MultiRelGraph::load_tsv(f.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.relation_counts(), &[1, 2]);
        assert_eq!(g.neighbors(1, 1), &[0, 2]);
    }

    #[test]
    fn malformed_and_self_loop_lines_report_line_numbers() {
        let f = write_tmp("a\t0\tb\na\t0\n");
        match MultiRelGraph::load_tsv(f.path()) {
            Err(GraphError::FieldCount { line: 2, found: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("a\t0\tb\n\nc\t1\tc\n");
        match MultiRelGraph::load_tsv(f.path()) {
            Err(GraphError::SelfLoop { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_remainder() {
        let edges: Vec<Edge> = (0..10).map(|i| Edge::new(i, 0, i + 1)).collect();
        let g = MultiRelGraph::from_edges(12, 1, edges).unwrap();
        let s = g.split_edges([0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(s.sizes(), (6, 2, 2));
        assert_eq!(s, g.split_edges([0.6, 0.2, 0.2], 7).unwrap());

        let edges: Vec<Edge> = (0..11).map(|i| Edge::new(i, 0, i + 1)).collect();
        let g = MultiRelGraph::from_edges(12, 1, edges).unwrap();
        assert_eq!(g.split_edges([0.6, 0.2, 0.2], 1).unwrap().sizes(), (7, 2, 2));
    }

    #[test]
    fn split_rejects_bad_fractions_and_empty_parts() {
        let edges: Vec<Edge> = (0..4).map(|i| Edge::new(i, 0, i + 1)).collect();
        let g = MultiRelGraph::from_edges(5, 1, edges).unwrap();
        assert!(matches!(
            g.split_edges([0.5, 0.5, 0.1], 0),
            Err(GraphError::BadFractions(_))
        ));
        assert!(matches!(
            g.split_edges([0.9, 0.05, 0.05], 0),
            Err(GraphError::EmptySplit("valid"))
        ));
    }

    #[test]
    fn negatives_on_saturated_graph_fail() {
        let g = MultiRelGraph::from_edges(2, 1, [Edge::new(0, 0, 1)]).unwrap();
        let err = g
            .sample_negatives_seeded(&[Edge::new(0, 0, 1)], 1, 3)
            .unwrap_err();
        assert!(matches!(
            err,
            GraphError::NegativeSamplingExhausted { rel: 0, attempts: 100 }
        ));
    }

    #[test]
    fn negatives_match_batch_size_and_avoid_edges() {
        let edges: Vec<Edge> = (0..30).map(|i| Edge::new(i, i % 3, (i * 7 + 1) % 40)).filter(|e| e.head != e.tail).collect();
        let g = MultiRelGraph::from_edges(40, 3, edges.clone()).unwrap();
        let batch = &g.edges()[..8];
        let neg = g.sample_negatives_seeded(batch, batch.len(), 11).unwrap();
        assert_eq!(neg.len(), 8);
        let known: HashSet<Edge> = g.edges().iter().map(|e| e.canonical()).collect();
        for (n, p) in neg.iter().zip(batch) {
            assert!(!known.contains(&n.canonical()));
            assert_ne!(n.head, n.tail);
            let _ = p;
        }
        // relation preserved: every negative's relation occurs in the batch
        assert!(neg.iter().all(|n| batch.iter().any(|p| p.rel == n.rel)));
    }

    #[test]
    fn inverse_frequency() {
        let g = MultiRelGraph::from_edges(3, 2, [Edge::new(0, 0, 1), Edge::new(1, 1, 2)]).unwrap();
        assert_eq!(g.inverse_frequency_logits(), vec![0.0, 0.0]);

        let mut edges = vec![Edge::new(0, 0, 1)];
        edges.extend((2..12).map(|v| Edge::new(0, 1, v)));
        let g = MultiRelGraph::from_edges(12, 2, edges).unwrap();
        let l = g.inverse_frequency_logits();
        assert_eq!(l[0], 0.0);
        assert!((l[1] + 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn absent_relation_logit_is_zero() {
        let g = MultiRelGraph::from_edges(3, 3, [Edge::new(0, 0, 1), Edge::new(1, 0, 2)]).unwrap();
        assert_eq!(g.inverse_frequency_logits(), vec![-(2f64.ln()), 0.0, 0.0]);
    }

    #[test]
    fn dense_features_load() {
        let f = write_tmp("2 3\n1 2 3\n0.5 -1 2e-1\n");
        let feats = Features::load(f.path()).unwrap();
        assert_eq!(feats.num_nodes(), 2);
        assert_eq!(feats.dim(), 3);
        let f = write_tmp("2 3\n1 2 3\n");
        assert!(Features::load(f.path()).is_err());
    }
}
