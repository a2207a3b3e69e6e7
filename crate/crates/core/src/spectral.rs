//! Spectral warm start: leading adjacency eigenvectors, then k-means++.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::network::Network;

/// Embedding of every vertex in the `dim` eigenvectors of largest |λ|.
pub fn spectral_embedding(net: &Network, dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = net.vertex_count();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j) in net.edges() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .total_cmp(&eig.eigenvalues[x].abs())
            .then(x.cmp(&y))
    });
    order.truncate(dim.min(n));
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let rows = (0..n)
        .map(|i| order.iter().map(|&c| eig.eigenvectors[(i, c)]).collect())
        .collect();
    (values, rows)
}

/// Number of eigenvalues standing clear of the random-graph bulk, `|λ| > 2√d̄`.
pub fn detectable_groups(net: &Network, values: &[f64]) -> usize {
    let n = net.vertex_count().max(1) as f64;
    let mean_degree = 2.0 * net.edge_count() as f64 / n;
    let edge = 2.0 * mean_degree.sqrt();
    values.iter().filter(|v| v.abs() > edge).count()
}

/// k-means++ seeding followed by Lloyd iterations; best of `n_init` runs.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    n_init: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..n_init.max(1) {
        let (inertia, labels) = lloyd(points, k, rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.unwrap().1
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (inertia, labels)
}

/// Spectral clustering into at most `max_groups` groups; the group count
/// is the number of detectable eigenvalues (at least one).
pub fn spectral_partition<R: Rng + ?Sized>(
    net: &Network,
    max_groups: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = net.vertex_count();
    if n == 0 {
        return Vec::new();
    }
    let (values, rows) = spectral_embedding(net, max_groups.max(1));
    let groups = detectable_groups(net, &values).clamp(1, max_groups.max(1));
    if groups == 1 {
        return vec![0; n];
    }
    let points: Vec<Vec<f64>> = rows.into_iter().map(|r| r[..groups].to_vec()).collect();
    kmeans(&points, groups, 4, rng)
}

/// Spectral clustering into exactly `groups` groups (fewer only when there
/// are fewer vertices), embedding in as many eigenvectors.
pub fn spectral_partition_fixed<R: Rng + ?Sized>(
    net: &Network,
    groups: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = net.vertex_count();
    if n == 0 {
        return Vec::new();
    }
    let groups = groups.clamp(1, n);
    if groups == 1 {
        return vec![0; n];
    }
    let (_, rows) = spectral_embedding(net, groups);
    kmeans(&rows, groups, 4, rng)
}

/// Number of detectable groups, at least one and at most `max_groups`.
pub fn detected_group_count(net: &Network, max_groups: usize) -> usize {
    let (values, _) = spectral_embedding(net, max_groups.max(1));
    detectable_groups(net, &values).clamp(1, max_groups.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::stream_rng;

    #[test]
    fn recovers_two_cliques() {
        let mut edges = Vec::new();
        for block in 0..2 {
            for i in 0..10 {
                for j in i + 1..10 {
                    edges.push((block * 10 + i, block * 10 + j));
                }
            }
        }
        edges.push((0, 10));
        let net = Network::from_edges(20, edges).unwrap();
        let mut rng = stream_rng(1, 0);
        let labels = spectral_partition(&net, 5, &mut rng);
        assert!(labels[..10].iter().all(|&l| l == labels[0]));
        assert!(labels[10..].iter().all(|&l| l == labels[10]));
        assert_ne!(labels[0], labels[10]);
    }

    #[test]
    fn kmeans_separates_points() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let l = kmeans(&pts, 2, 3, &mut stream_rng(2, 0));
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }
}
