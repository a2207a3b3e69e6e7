//! Co-membership matrices, point partitions, display orderings, and
//! partition comparison.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::Trace;
use crate::network::Network;
use crate::vb::VbState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Community,
    Supercommunity,
}

impl Level {
    pub fn tag(self) -> &'static str {
        match self {
            Level::Community => "community",
            Level::Supercommunity => "supercommunity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Mcmc,
    Vb,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Mcmc => "mcmc",
            Source::Vb => "vb",
        }
    }
}

/// Symmetric `I × I` matrix of pairwise same-group probabilities, stored
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMembership {
    pub n: usize,
    pub values: Vec<f64>,
    pub level: Level,
    pub source: Source,
}

impl CoMembership {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// `{source}_{level}` for file names.
    pub fn tag(&self) -> String {
        format!("{}_{}", self.source.tag(), self.level.tag())
    }

    /// The matrix reindexed so that position `p` holds vertex `order[p]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for (p, &i) in order.iter().enumerate() {
            for (q, &j) in order.iter().enumerate() {
                values[p * n + q] = self.get(i, j);
            }
        }
        Self {
            n,
            values,
            level: self.level,
            source: self.source,
        }
    }

    /// Headerless dense CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        dense_csv(&self.values, self.n)
    }

    /// 8-bit binary PGM; probability 1 is black.
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm(
            self.n,
            self.values
                .iter()
                .map(|&v| (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8),
        )
    }
}

fn dense_csv(values: &[f64], n: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(n.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn pgm(n: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

/// Adjacency matrix with rows and columns in `order`, edges black.
pub fn adjacency_pgm(net: &Network, order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let mut pixels = vec![255u8; n * n];
    let mut pos = vec![0; net.vertex_count()];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    for (i, j) in net.edges() {
        pixels[pos[i] * n + pos[j]] = 0;
        pixels[pos[j] * n + pos[i]] = 0;
    }
    pgm(n, pixels.into_iter())
}

/// Fraction of kept iterations in which each pair shares a community
/// (or a supercommunity).
pub fn comembership_mcmc(trace: &Trace, level: Level) -> Result<CoMembership> {
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::Domain("trace has no records".into()))?;
    let n = first.xi.len();
    let mut counts = vec![0u32; n * n];
    for rec in &trace.records {
        let labels = match level {
            Level::Community => rec.xi.clone(),
            Level::Supercommunity => rec.vertex_supercommunities(),
        };
        if labels.len() != n {
            return Err(Error::Domain(format!(
                "trace record at iteration {} has {} labels, expected {n}",
                rec.iteration,
                labels.len()
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let total = trace.records.len() as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = counts[i * n + j] as f64 / total;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(CoMembership {
        n,
        values,
        level,
        source: Source::Mcmc,
    })
}

/// Mean-field plug-in: `Σ_k ϖ_ik ϖ_jk` for communities and
/// `Σ_r (Σ_k ϖ_ik ϱ_kr)(Σ_k ϖ_jk ϱ_kr)` for supercommunities. The diagonal
/// is set to one.
pub fn comembership_vb(vb: &VbState, level: Level) -> CoMembership {
    let rows: Vec<Vec<f64>> = match level {
        Level::Community => vb.resp.clone(),
        Level::Supercommunity => vb
            .resp
            .iter()
            .map(|row| {
                (0..vb.r())
                    .map(|r| row.iter().zip(&vb.super_resp).map(|(p, s)| p * s[r]).sum())
                    .collect()
            })
            .collect(),
    };
    let n = rows.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let v = v.clamp(0.0, 1.0);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    CoMembership {
        n,
        values,
        level,
        source: Source::Vb,
    }
}

/// `Σ_{i<j} |1{c_i = c_j} − cm_ij|`.
pub fn binder_loss(cm: &CoMembership, labels: &[usize]) -> f64 {
    let n = cm.n;
    let mut loss = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let same = if labels[i] == labels[j] { 1.0 } else { 0.0 };
            loss += (same - cm.get(i, j)).abs();
        }
    }
    loss
}

struct Merge {
    a: usize,
    b: usize,
    height: f64,
    /// Σ cm over pairs split between the two clusters.
    cross: f64,
    sizes: (usize, usize),
}

/// Average-linkage agglomeration over `1 − cm` by nearest-neighbour chains.
fn average_linkage(cm: &CoMembership) -> Vec<Merge> {
    let n = cm.n;
    let mut cross: Vec<f64> = cm.values.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let dist = |cross: &[f64], size: &[usize], a: usize, b: usize| {
        1.0 - cross[a * n + b] / (size[a] * size[b]) as f64
    };
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        if chain.is_empty() {
            chain.push((0..n).find(|&i| active[i]).unwrap());
        }
        let top = *chain.last().unwrap();
        let prev = chain.len().checked_sub(2).map(|p| chain[p]);
        let mut best = prev.unwrap_or(usize::MAX);
        let mut best_d = prev.map_or(f64::INFINITY, |p| dist(&cross, &size, top, p));
        for c in 0..n {
            if !active[c] || c == top {
                continue;
            }
            let d = dist(&cross, &size, top, c);
            if d < best_d || (d == best_d && c < best && Some(best) != prev) {
                best = c;
                best_d = d;
            }
        }
        if Some(best) == prev {
            chain.pop();
            chain.pop();
            let (a, b) = (top.min(best), top.max(best));
            merges.push(Merge {
                a,
                b,
                height: best_d,
                cross: cross[a * n + b],
                sizes: (size[a], size[b]),
            });
            for c in 0..n {
                if active[c] && c != a && c != b {
                    let s = cross[a * n + c] + cross[b * n + c];
                    cross[a * n + c] = s;
                    cross[c * n + a] = s;
                }
            }
            size[a] += size[b];
            active[b] = false;
            remaining -= 1;
        } else {
            chain.push(best);
        }
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Relabel so that blocks are numbered by decreasing size, ties broken by
/// smallest member.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut groups: HashMap<usize, (usize, usize)> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let e = groups.entry(l).or_insert((0, i));
        e.0 += 1;
    }
    let mut keys: Vec<(usize, (usize, usize))> = groups.into_iter().collect();
    keys.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let map: HashMap<usize, usize> = keys
        .iter()
        .enumerate()
        .map(|(new, (old, _))| (*old, new))
        .collect();
    labels.iter().map(|l| map[l]).collect()
}

/// Move single vertices between blocks (or to a new block) while that
/// lowers the Binder loss.
fn binder_local_search(cm: &CoMembership, labels: &mut [usize]) {
    let n = cm.n;
    for _ in 0..100 {
        let mut improved = false;
        for i in 0..n {
            // gain of putting i with block c: Σ_{j∈c, j≠i} (1 − 2 cm_ij)
            let mut cost: HashMap<usize, f64> = HashMap::new();
            for j in (0..n).filter(|&j| j != i) {
                *cost.entry(labels[j]).or_insert(0.0) += 1.0 - 2.0 * cm.get(i, j);
            }
            let here = cost.get(&labels[i]).copied().unwrap_or(0.0);
            let mut best = (here, labels[i]);
            let mut options: Vec<(usize, f64)> = cost.into_iter().collect();
            options.sort_by_key(|o| o.0);
            for (c, v) in options {
                if v < best.0 - 1e-12 {
                    best = (v, c);
                }
            }
            // a fresh singleton costs nothing
            if best.0 > 1e-12 {
                let fresh = labels.iter().max().map_or(0, |m| m + 1);
                best = (0.0, fresh);
            }
            if best.1 != labels[i] {
                labels[i] = best.1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Point estimate minimising Binder loss: average-linkage dendrogram over
/// `1 − cm`, cut at the level with the smallest loss, then single-vertex
/// moves. Labels are canonical (block 0 largest).
pub fn point_partition(cm: &CoMembership) -> Vec<usize> {
    point_partition_with_candidates(cm, &[])
}

/// As [`point_partition`], also considering each candidate partition after
/// local search, and returning the best of all.
pub fn point_partition_with_candidates(cm: &CoMembership, candidates: &[Vec<usize>]) -> Vec<usize> {
    let n = cm.n;
    if n == 0 {
        return Vec::new();
    }
    let merges = average_linkage(cm);
    let mut loss: f64 = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| cm.get(i, j))
        .sum();
    let (mut best_loss, mut best_step) = (loss, 0);
    for (step, m) in merges.iter().enumerate() {
        loss += (m.sizes.0 * m.sizes.1) as f64 - 2.0 * m.cross;
        if loss <= best_loss + 1e-9 {
            best_loss = loss;
            best_step = step + 1;
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for m in &merges[..best_step] {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[rb] = ra;
    }
    let mut labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    binder_local_search(cm, &mut labels);
    let mut best = (binder_loss(cm, &labels), labels);
    for cand in candidates {
        let mut c = cand.clone();
        binder_local_search(cm, &mut c);
        let l = binder_loss(cm, &c);
        if l < best.0 - 1e-9 {
            best = (l, c);
        }
    }
    canonical_labels(&best.1)
}

/// Vertices grouped by point-partition block (largest first), by degree
/// (highest first) within a block, ties by index. `order[p]` is the vertex
/// shown at position `p`.
pub fn display_order(cm: &CoMembership, degrees: &[usize]) -> Vec<usize> {
    order_by_blocks(&point_partition(cm), degrees)
}

pub fn order_by_blocks(labels: &[usize], degrees: &[usize]) -> Vec<usize> {
    let labels = canonical_labels(labels);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        labels[a]
            .cmp(&labels[b])
            .then(degrees[b].cmp(&degrees[a]))
            .then(a.cmp(&b))
    });
    order
}

/// VB co-membership shown in an ordering taken from MCMC.
pub fn cross_overlay(cm_vb: &CoMembership, order_mcmc: &[usize]) -> CoMembership {
    cm_vb.permuted(order_mcmc)
}

/// Adjusted Rand index between two labelings of the same vertices.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same vertices");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sb: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        // both partitions trivial in the same way
        return if a_equiv_b(a, b) { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

fn a_equiv_b(a: &[usize], b: &[usize]) -> bool {
    canonical_labels(a) == canonical_labels(b)
}

/// Parse 1-based labels, one per line (a trailing comma-separated field is
/// taken when lines hold `vertex,label`).
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit([',', ' ', '\t']).next().unwrap_or(line);
        match field.parse::<usize>() {
            Ok(v) if v >= 1 => out.push(v - 1),
            _ if lineno == 0 && field.parse::<f64>().is_err() => continue,
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected a positive label, found {field:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// `vertex,label` rows (both 1-based) with a header.
pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::from("vertex,label\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l + 1));
    }
    out
}
