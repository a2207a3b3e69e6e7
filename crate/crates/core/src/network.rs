//! Simple undirected binary networks and the block sufficient statistics
//! shared by both inference engines.
//!
//! Only the strictly upper triangle `{y_ij : i < j}` is stored. Vertices are
//! 0-based in memory and 1-based in every file format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tri::TriMatrix;

/// On-disk layout of a network file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkFormat {
    /// Whitespace-separated `i j` pairs, `#` comments. A row with a single
    /// token declares an (possibly isolated) vertex.
    #[default]
    EdgeList,
    /// Rows of whitespace-separated 0/1 entries with a zero diagonal.
    Dense,
}

impl FromStr for NetworkFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-list" | "edgelist" => Ok(NetworkFormat::EdgeList),
            "dense" | "dense-adjacency" => Ok(NetworkFormat::Dense),
            other => Err(Error::InvalidConfig(format!(
                "unknown network format {other:?} (expected edge-list or dense)"
            ))),
        }
    }
}

/// A simple undirected binary network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    bits: Vec<u64>,
    adj: Vec<Vec<usize>>,
    edge_count: usize,
    labels: Option<Vec<String>>,
}

#[inline]
fn slot(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl Network {
    /// Build from 0-based vertex pairs. Pairs are normalized to `i < j`
    /// and deduplicated; self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let dyads = n * n.saturating_sub(1) / 2;
        let mut net = Network {
            n,
            bits: vec![0; dyads.div_ceil(64)],
            adj: vec![Vec::new(); n],
            edge_count: 0,
            labels: None,
        };
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) references a vertex outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::SelfLoop {
                    row: 0,
                    vertex: (a + 1).to_string(),
                });
            }
            net.insert(a, b);
        }
        for list in &mut net.adj {
            list.sort_unstable();
        }
        Ok(net)
    }

    fn insert(&mut self, a: usize, b: usize) -> bool {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let s = slot(self.n, i, j);
        let (word, bit) = (s / 64, s % 64);
        if self.bits[word] >> bit & 1 == 1 {
            return false;
        }
        self.bits[word] |= 1 << bit;
        self.adj[i].push(j);
        self.adj[j].push(i);
        self.edge_count += 1;
        true
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Domain(format!(
                "{} labels supplied for {} vertices",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of vertices `I`.
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Number of dyads `I (I - 1) / 2`.
    pub fn dyad_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn density(&self) -> f64 {
        match self.dyad_count() {
            0 => 0.0,
            d => self.edge_count as f64 / d as f64,
        }
    }

    /// `y_{φ(i,j)}`; always false on the diagonal.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let s = slot(self.n, a, b);
        self.bits[s / 64] >> (s % 64) & 1 == 1
    }

    /// Sorted neighbours of `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display name of vertex `i` (its label, or the 1-based index).
    pub fn vertex_name(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// Upper-triangle edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Copy with vertices reordered so that new vertex `a` is old vertex `order[a]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut inverse = vec![usize::MAX; self.n];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n || inverse[old] != usize::MAX {
                return Err(Error::Domain("order is not a permutation".into()));
            }
            inverse[old] = new;
        }
        if order.len() != self.n {
            return Err(Error::Domain("order is not a permutation".into()));
        }
        let net = Network::from_edges(self.n, self.edges().map(|(i, j)| (inverse[i], inverse[j])))?;
        match &self.labels {
            Some(l) => net.with_labels(order.iter().map(|&o| l[o].clone()).collect()),
            None => Ok(net),
        }
    }

    pub fn load(path: impl AsRef<Path>, format: NetworkFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            NetworkFormat::EdgeList => parse_edge_list(&text),
            NetworkFormat::Dense => parse_dense(&text),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: NetworkFormat) -> Result<()> {
        let path = path.as_ref();
        let text = match format {
            NetworkFormat::EdgeList => self.to_edge_list(),
            NetworkFormat::Dense => self.to_dense_text(),
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Edge-list text. Vertices without edges are declared on their own row
    /// so that `I` survives a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vertices: {}", self.n);
        // labelled files pin first-appearance order by declaring every vertex up front
        if self.labels.is_some() {
            for i in 0..self.n {
                let _ = writeln!(out, "{}", self.vertex_name(i));
            }
        } else {
            for i in 0..self.n {
                if self.adj[i].is_empty() {
                    let _ = writeln!(out, "{}", i + 1);
                }
            }
        }
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{}\t{}", self.vertex_name(i), self.vertex_name(j));
        }
        out
    }

    pub fn to_dense_text(&self) -> String {
        let mut out = String::with_capacity(self.n * self.n * 2);
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(' ');
                }
                out.push(if self.has_edge(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn declared_vertices(text: &str) -> Option<usize> {
    text.lines().find_map(|l| {
        l.trim()
            .strip_prefix('#')
            .and_then(|rest| rest.trim().strip_prefix("vertices:"))
            .and_then(|n| n.trim().parse().ok())
    })
}

/// Parse edge-list text. If every token is a positive integer the file is
/// read as 1-based indices; otherwise tokens are labels, numbered in order of
/// first appearance.
pub fn parse_edge_list(text: &str) -> Result<Network> {
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (line, content) in content_lines(text) {
        let content = content.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() > 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `i j`, found {} fields", tokens.len()),
            });
        }
        rows.push((line, tokens));
    }
    let numeric = rows
        .iter()
        .flat_map(|(_, t)| t.iter())
        .all(|t| t.parse::<usize>().is_ok());

    if numeric {
        let mut max = declared_vertices(text).unwrap_or(0);
        let mut pairs = Vec::new();
        for (line, tokens) in &rows {
            let mut idx = Vec::with_capacity(2);
            for t in tokens {
                let v: usize = t.parse().expect("checked numeric");
                if v == 0 {
                    return Err(Error::Parse {
                        line: *line,
                        msg: "vertex indices are 1-based".into(),
                    });
                }
                max = max.max(v);
                idx.push(v - 1);
            }
            if idx.len() == 2 {
                if idx[0] == idx[1] {
                    return Err(Error::SelfLoop {
                        row: *line,
                        vertex: tokens[0].to_string(),
                    });
                }
                pairs.push((idx[0], idx[1]));
            }
        }
        Network::from_edges(max, pairs)
    } else {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut labels: Vec<String> = Vec::new();
        let mut pairs = Vec::new();
        for (line, tokens) in &rows {
            let mut idx = Vec::with_capacity(2);
            for &t in tokens {
                let next = labels.len();
                let id = *index.entry(t).or_insert_with(|| {
                    labels.push(t.to_string());
                    next
                });
                idx.push(id);
            }
            if idx.len() == 2 {
                if idx[0] == idx[1] {
                    return Err(Error::SelfLoop {
                        row: *line,
                        vertex: tokens[0].to_string(),
                    });
                }
                pairs.push((idx[0], idx[1]));
            }
        }
        Network::from_edges(labels.len(), pairs)?.with_labels(labels)
    }
}

/// Parse a dense 0/1 adjacency matrix with zero diagonal.
pub fn parse_dense(text: &str) -> Result<Network> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    let mut expected = None;
    for (line, content) in content_lines(text) {
        let row_idx = rows.len();
        let mut row = Vec::new();
        for (col, tok) in content.split_whitespace().enumerate() {
            match tok {
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(Error::NonBinary {
                        row: row_idx + 1,
                        col: col + 1,
                        value: other.to_string(),
                    })
                }
            }
        }
        let width = *expected.get_or_insert(row.len());
        if row.len() != width {
            return Err(Error::NotSquare {
                row: row_idx + 1,
                found: row.len(),
                expected: width,
            });
        }
        if row.get(row_idx).copied().unwrap_or(false) {
            return Err(Error::SelfLoop {
                row: line,
                vertex: (row_idx + 1).to_string(),
            });
        }
        rows.push(row);
    }
    let n = rows.len();
    if let Some(w) = expected {
        if w != n {
            return Err(Error::NotSquare {
                row: n,
                found: w,
                expected: n,
            });
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rows[i][j] != rows[j][i] {
                return Err(Error::NotSymmetric { i: i + 1, j: j + 1 });
            }
            if rows[i][j] {
                pairs.push((i, j));
            }
        }
    }
    Network::from_edges(n, pairs)
}

/// Edge and dyad counts per block pair for a fixed community assignment.
///
/// `edges(k, l) = s_kl` and `dyads(k, l) = n_kl` for `k <= l`. Empty blocks
/// are legal and simply have zero counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    s: TriMatrix<u64>,
    n: TriMatrix<u64>,
    sizes: Vec<usize>,
}

fn check_assignment(xi: &[usize], k: usize) -> Result<()> {
    match xi.iter().enumerate().find(|(_, &b)| b >= k) {
        Some((vertex, &label)) => Err(Error::InvalidAssignment { vertex, label, k }),
        None => Ok(()),
    }
}

impl BlockStats {
    /// Full recount, `O(I + E + K²)`.
    pub fn compute(net: &Network, xi: &[usize], k: usize) -> Result<Self> {
        if xi.len() != net.vertex_count() {
            return Err(Error::Domain(format!(
                "assignment has {} entries for {} vertices",
                xi.len(),
                net.vertex_count()
            )));
        }
        check_assignment(xi, k)?;
        let mut sizes = vec![0usize; k];
        for &b in xi {
            sizes[b] += 1;
        }
        let n = TriMatrix::from_fn(k, |a, b| {
            let (na, nb) = (sizes[a] as u64, sizes[b] as u64);
            if a == b {
                na * na.saturating_sub(1) / 2
            } else {
                na * nb
            }
        });
        let mut s = TriMatrix::new(k);
        for (i, j) in net.edges() {
            *s.get_mut(xi[i], xi[j]) += 1;
        }
        Ok(Self { s, n, sizes })
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn edges(&self, k: usize, l: usize) -> u64 {
        self.s.at(k, l)
    }

    #[inline]
    pub fn dyads(&self, k: usize, l: usize) -> u64 {
        self.n.at(k, l)
    }

    pub fn edge_matrix(&self) -> &TriMatrix<u64> {
        &self.s
    }

    pub fn dyad_matrix(&self) -> &TriMatrix<u64> {
        &self.n
    }

    /// Block sizes `n_k`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn occupied_blocks(&self) -> usize {
        self.sizes.iter().filter(|&&s| s > 0).count()
    }

    /// Stats after moving vertex `i` to `k_new`; `xi` is the assignment
    /// *before* the move and `self` must be consistent with it.
    pub fn moved(&self, net: &Network, xi: &[usize], i: usize, k_new: usize) -> Self {
        let mut out = self.clone();
        let mut xi = xi.to_vec();
        out.move_vertex(net, &mut xi, i, k_new);
        out
    }

    /// In-place move of vertex `i` to `k_new`, updating both the counts and `xi`.
    pub fn move_vertex(&mut self, net: &Network, xi: &mut [usize], i: usize, k_new: usize) {
        let k = self.block_count();
        let mut neigh = vec![0u64; k];
        for &j in net.neighbors(i) {
            neigh[xi[j]] += 1;
        }
        let old = xi[i];
        self.apply_move(i, old, k_new, &neigh);
        xi[i] = k_new;
        #[cfg(debug_assertions)]
        if net.vertex_count() <= 64 {
            debug_assert_eq!(*self, BlockStats::compute(net, xi, k).unwrap());
        }
    }

    /// Move a vertex from `old` to `new` given the number of its neighbours in
    /// each block. `O(K)`.
    pub(crate) fn apply_move(&mut self, _vertex: usize, old: usize, new: usize, neigh: &[u64]) {
        if old == new {
            return;
        }
        self.sizes[old] -= 1;
        // sizes now exclude the moving vertex everywhere
        for b in 0..self.sizes.len() {
            let others = self.sizes[b] as u64;
            *self.n.get_mut(old, b) -= others;
            *self.n.get_mut(new, b) += others;
            *self.s.get_mut(old, b) -= neigh[b];
            *self.s.get_mut(new, b) += neigh[b];
        }
        self.sizes[new] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four() -> Network {
        Network::from_edges(4, [(0, 1), (2, 3)]).unwrap()
    }

    #[test]
    fn edge_list_infers_vertex_count() {
        let net = parse_edge_list("1 2\n2 3").unwrap();
        assert_eq!(net.vertex_count(), 3);
        assert_eq!(net.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_normalizes_and_dedups() {
        let net = parse_edge_list("# comment\n2 1\n1\t2\n").unwrap();
        assert_eq!(net.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert!(net.has_edge(1, 0));
    }

    #[test]
    fn edge_list_rejects_self_loop_with_row() {
        match parse_edge_list("1 2\n3 3\n") {
            Err(Error::SelfLoop { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labelled_edge_list_uses_first_appearance_order() {
        let net = parse_edge_list("bob alice\nalice carol\n").unwrap();
        assert_eq!(net.labels().unwrap(), ["bob", "alice", "carol"]);
        assert!(net.has_edge(0, 1) && net.has_edge(1, 2) && !net.has_edge(0, 2));
        let again = parse_edge_list(&net.to_edge_list()).unwrap();
        assert_eq!(again, net);
    }

    #[test]
    fn isolated_vertices_survive_round_trip() {
        let net = Network::from_edges(5, [(0, 1)]).unwrap();
        let again = parse_edge_list(&net.to_edge_list()).unwrap();
        assert_eq!(again.vertex_count(), 5);
        assert_eq!(again, net);
    }

    #[test]
    fn dense_parses_single_edge() {
        let net = parse_dense("0 1 0\n1 0 0\n0 0 0\n").unwrap();
        assert_eq!(net.vertex_count(), 3);
        assert_eq!(net.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(parse_dense(&net.to_dense_text()).unwrap(), net);
    }

    #[test]
    fn dense_rejects_bad_input() {
        assert!(matches!(
            parse_dense("0 1\n0 0\n"),
            Err(Error::NotSymmetric { i: 1, j: 2 })
        ));
        assert!(matches!(
            parse_dense("0 2\n2 0\n"),
            Err(Error::NonBinary { row: 1, col: 2, .. })
        ));
        assert!(matches!(
            parse_dense("1 0\n0 0\n"),
            Err(Error::SelfLoop { .. })
        ));
        assert!(matches!(
            parse_dense("0 1 0\n1 0\n"),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn block_stats_small_example() {
        let st = BlockStats::compute(&four(), &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((st.dyads(0, 0), st.dyads(0, 1), st.dyads(1, 1)), (1, 4, 1));
        assert_eq!((st.edges(0, 0), st.edges(0, 1), st.edges(1, 1)), (1, 0, 1));
    }

    #[test]
    fn single_block_counts_everything() {
        let net = four();
        let st = BlockStats::compute(&net, &[0; 4], 1).unwrap();
        assert_eq!(st.dyads(0, 0), 6);
        assert_eq!(st.edges(0, 0), 2);
    }

    #[test]
    fn block_stats_rejects_out_of_range() {
        assert!(matches!(
            BlockStats::compute(&four(), &[0, 0, 2, 1], 2),
            Err(Error::InvalidAssignment {
                vertex: 2,
                label: 2,
                k: 2
            })
        ));
    }

    #[test]
    fn move_example_and_noop() {
        let net = four();
        let xi = [0, 0, 1, 1];
        let st = BlockStats::compute(&net, &xi, 2).unwrap();
        assert_eq!(st.moved(&net, &xi, 2, 1), st);
        let m = st.moved(&net, &xi, 2, 0);
        assert_eq!((m.dyads(0, 0), m.dyads(0, 1), m.dyads(1, 1)), (3, 3, 0));
        assert_eq!((m.edges(0, 0), m.edges(0, 1), m.edges(1, 1)), (1, 1, 0));
    }

    fn arb_instance() -> impl Strategy<Value = (Network, Vec<usize>, usize, usize, usize)> {
        (2usize..=20, 1usize..=5).prop_flat_map(|(n, k)| {
            let dyads = n * (n - 1) / 2;
            (
                proptest::collection::vec(any::<bool>(), dyads),
                proptest::collection::vec(0..k, n),
                0..n,
                0..k,
            )
                .prop_map(move |(bits, xi, v, knew)| {
                    let mut pairs = Vec::new();
                    let mut idx = 0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            if bits[idx] {
                                pairs.push((i, j));
                            }
                            idx += 1;
                        }
                    }
                    (Network::from_edges(n, pairs).unwrap(), xi, k, v, knew)
                })
        })
    }

    proptest! {
        #[test]
        fn incremental_move_matches_recount((net, xi, k, v, knew) in arb_instance()) {
            let st = BlockStats::compute(&net, &xi, k).unwrap();
            let mut moved_xi = xi.clone();
            moved_xi[v] = knew;
            prop_assert_eq!(st.moved(&net, &xi, v, knew), BlockStats::compute(&net, &moved_xi, k).unwrap());
        }

        #[test]
        fn counts_are_consistent((net, xi, k, _v, _knew) in arb_instance()) {
            let st = BlockStats::compute(&net, &xi, k).unwrap();
            let total_n: u64 = st.dyad_matrix().as_slice().iter().sum();
            let total_s: u64 = st.edge_matrix().as_slice().iter().sum();
            prop_assert_eq!(total_n as usize, net.dyad_count());
            prop_assert_eq!(total_s as usize, net.edge_count());
            for (a, b, &s) in st.edge_matrix().iter() {
                prop_assert!(s <= st.dyads(a, b));
            }
        }

        #[test]
        fn relabelling_permutes_stats((net, xi, k, _v, _knew) in arb_instance(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let relabelled: Vec<usize> = xi.iter().map(|&b| perm[b]).collect();
            let a = BlockStats::compute(&net, &xi, k).unwrap();
            let b = BlockStats::compute(&net, &relabelled, k).unwrap();
            for x in 0..k {
                for y in x..k {
                    prop_assert_eq!(a.edges(x, y), b.edges(perm[x], perm[y]));
                    prop_assert_eq!(a.dyads(x, y), b.dyads(perm[x], perm[y]));
                }
            }
        }
    }
}
