//! Partitions of base stations into coordination clusters: k-means on the
//! real embedding, spectral clustering with the eigengap rule, and a
//! decentralized peer-to-peer merge search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix, SymmetricEigen};
use crate::similarity::{Neighborhood, SimilarityGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    /// Every BS alone.
    None,
    KMeans,
    Spectral,
    P2p,
}

impl ClusterMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterMethod::None => "none",
            ClusterMethod::KMeans => "kmeans",
            ClusterMethod::Spectral => "spectral",
            ClusterMethod::P2p => "p2p",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted BS ids.
    pub members: Vec<usize>,
    /// Least-loaded member at formation, lowest id on ties.
    pub head: usize,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, b: usize) -> bool {
        self.members.binary_search(&b).is_ok()
    }
}

/// Disjoint cover of all base stations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    cluster_of: Vec<usize>,
    pub method: ClusterMethod,
    pub epoch: u64,
}

fn pick_head(members: &[usize], load_estimates: &[f64]) -> usize {
    let mut head = members[0];
    for &b in &members[1..] {
        if load_estimates[b] < load_estimates[head] {
            head = b;
        }
    }
    head
}

impl ClusterSet {
    /// Builds the partition from per-BS labels. Clusters are ordered by their
    /// smallest member id, so the result does not depend on label values.
    pub fn from_labels(labels: &[usize], load_estimates: &[f64], method: ClusterMethod, epoch: u64) -> Self {
        let n = labels.len();
        assert_eq!(load_estimates.len(), n);
        let mut first_seen: Vec<(usize, usize)> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (b, &label) in labels.iter().enumerate() {
            match first_seen.iter().find(|(l, _)| *l == label) {
                Some(&(_, g)) => groups[g].push(b),
                None => {
                    first_seen.push((label, groups.len()));
                    groups.push(vec![b]);
                }
            }
        }
        let mut cluster_of = vec![0; n];
        let clusters = groups
            .into_iter()
            .enumerate()
            .map(|(c, members)| {
                for &b in &members {
                    cluster_of[b] = c;
                }
                let head = pick_head(&members, load_estimates);
                Cluster { members, head }
            })
            .collect();
        Self { clusters, cluster_of, method, epoch }
    }

    pub fn singletons(load_estimates: &[f64], epoch: u64) -> Self {
        let labels: Vec<usize> = (0..load_estimates.len()).collect();
        Self::from_labels(&labels, load_estimates, ClusterMethod::None, epoch)
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, c: usize) -> &Cluster {
        &self.clusters[c]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_bs(&self) -> usize {
        self.cluster_of.len()
    }

    /// Cluster index of every BS.
    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn mean_size(&self) -> f64 {
        if self.clusters.is_empty() {
            0.0
        } else {
            self.num_bs() as f64 / self.clusters.len() as f64
        }
    }

    pub fn max_size(&self) -> usize {
        self.clusters.iter().map(Cluster::len).max().unwrap_or(0)
    }

    /// Checks that clusters are nonempty, disjoint and cover `0..num_bs`.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_bs();
        let mut seen = vec![false; n];
        for (c, cl) in self.clusters.iter().enumerate() {
            if cl.is_empty() {
                return Err(Error::InvalidState(format!("cluster {c} is empty")));
            }
            if !cl.contains(cl.head) {
                return Err(Error::InvalidState(format!("cluster {c}: head {} is not a member", cl.head)));
            }
            for &b in &cl.members {
                if b >= n || seen[b] {
                    return Err(Error::InvalidState(format!("BS {b} appears twice or is out of range")));
                }
                if self.cluster_of[b] != c {
                    return Err(Error::InvalidState(format!("BS {b}: lookup says cluster {}", self.cluster_of[b])));
                }
                seen[b] = true;
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidState(format!("BS {b} belongs to no cluster")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cent) in centroids.iter().enumerate() {
        let d = sq_dist(point, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sse(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn plus_plus_init<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn mean_centroids(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    counts
}

/// Centroid update. An emptied cluster takes over the point farthest from
/// its centroid among clusters that can spare one.
fn update_centroids(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    loop {
        let counts = mean_centroids(points, labels, centroids);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let far = (0..points.len()).filter(|&i| counts[labels[i]] > 1).max_by(|&i, &j| {
            sq_dist(&points[i], &centroids[labels[i]]).total_cmp(&sq_dist(&points[j], &centroids[labels[j]]))
        });
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let n = points.len();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        iterations += 1;
        update_centroids(points, &mut labels, &mut centroids);
        history.push(sse(points, &labels, &centroids));
    }
    let objective = sse(points, &labels, &centroids);
    if history.is_empty() {
        history.push(objective);
    }
    KMeansResult { labels, centroids, objective, iterations, history }
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k-means needs 1 ≤ k ≤ {n}, got k = {k}")));
    }
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, plus_plus_init(points, k, rng), max_iters);
        if best.as_ref().map_or(true, |b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Unnormalized Laplacian `D − S`.
pub fn laplacian(similarity: &Matrix) -> Matrix {
    let n = similarity.dim();
    let mut l = Matrix::zeros(n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                l[(i, j)] = -similarity[(i, j)];
                degree += similarity[(i, j)];
            }
        }
        l[(i, i)] = degree;
    }
    l
}

/// Position of the largest gap between consecutive ascending eigenvalues,
/// counted from 1. Ties go to the first gap.
pub fn eigengap_k(eigenvalues: &[f64]) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..eigenvalues.len() {
        let gap = (eigenvalues[i] - eigenvalues[i - 1]).abs();
        if gap > best.1 {
            best = (i, gap);
        }
    }
    best.0
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub eigen: SymmetricEigen,
}

/// Spectral clustering on the joint similarity matrix.
pub fn spectral_cluster<R: Rng + ?Sized>(
    similarity: &Matrix,
    k_override: Option<usize>,
    kmeans_restarts: usize,
    rng: &mut R,
) -> Result<SpectralResult> {
    let n = similarity.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("spectral clustering of an empty graph".into()));
    }
    let eigen = symmetric_eigen(&laplacian(similarity))?;
    let k = match k_override {
        Some(k) => k,
        None if n == 1 => 1,
        None => eigengap_k(&eigen.values),
    };
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("spectral clustering needs 1 ≤ k ≤ {n}, got {k}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|b| (0..k).map(|c| eigen.vectors[(b, c)]).collect()).collect();
    let labels = kmeans(&rows, k, 300, kmeans_restarts, rng)?.labels;
    Ok(SpectralResult { labels, k, eigen })
}

/// Decentralized agglomeration. Each round every cluster head scores the
/// clusters reachable over graph edges by average joint similarity and
/// proposes to the best one that fits under `max_size`; mutual proposals
/// merge. Stops after `rounds` or when nothing merges. `similarity` is only
/// ever called on adjacent pairs.
pub fn p2p_search_cluster(
    neighborhood: &Neighborhood,
    similarity: impl Fn(usize, usize) -> f64,
    max_size: usize,
    rounds: usize,
) -> Vec<usize> {
    let n = neighborhood.len();
    let mut groups: Vec<Vec<usize>> = (0..n).map(|b| vec![b]).collect();
    for _ in 0..rounds {
        let mut label = vec![0; n];
        for (g, members) in groups.iter().enumerate() {
            for &b in members {
                label[b] = g;
            }
        }
        let proposals: Vec<Option<usize>> = groups
            .iter()
            .enumerate()
            .map(|(g, members)| {
                let mut sums: Vec<(usize, f64)> = Vec::new();
                for &a in members {
                    for &b in neighborhood.neighbors(a) {
                        let h = label[b];
                        if h == g || members.len() + groups[h].len() > max_size {
                            continue;
                        }
                        let s = similarity(a, b);
                        match sums.iter_mut().find(|(x, _)| *x == h) {
                            Some(entry) => entry.1 += s,
                            None => sums.push((h, s)),
                        }
                    }
                }
                let mut best: Option<(usize, f64)> = None;
                for (h, total) in sums {
                    let avg = total / (members.len() * groups[h].len()) as f64;
                    if best.map_or(true, |(bh, bs)| avg > bs || (avg == bs && h < bh)) {
                        best = Some((h, avg));
                    }
                }
                best.map(|(h, _)| h)
            })
            .collect();

        let mut merged_into: Vec<Option<usize>> = vec![None; groups.len()];
        let mut any = false;
        for g in 0..groups.len() {
            if let Some(h) = proposals[g] {
                if g < h && proposals[h] == Some(g) {
                    merged_into[h] = Some(g);
                    any = true;
                }
            }
        }
        if !any {
            break;
        }
        let mut next: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; groups.len()];
        for g in 0..groups.len() {
            match merged_into[g] {
                Some(target) => {
                    let members = std::mem::take(&mut groups[g]);
                    next[slot[target]].extend(members);
                }
                None => {
                    slot[g] = next.len();
                    next.push(std::mem::take(&mut groups[g]));
                }
            }
        }
        for members in &mut next {
            members.sort_unstable();
        }
        groups = next;
    }
    let mut labels = vec![0; n];
    for (g, members) in groups.iter().enumerate() {
        for &b in members {
            labels[b] = g;
        }
    }
    labels
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub method: ClusterMethod,
    /// Fixed cluster count for k-means and spectral; eigengap rule if unset.
    pub k: Option<usize>,
    /// |C|^Max for the peer-to-peer search.
    pub max_cluster_size: usize,
    pub p2p_rounds: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            method: ClusterMethod::Spectral,
            k: None,
            max_cluster_size: 4,
            p2p_rounds: 8,
            kmeans_max_iters: 300,
            kmeans_restarts: 8,
        }
    }
}

/// Clusters the stations described by `graph`; heads are chosen by
/// `load_estimates`.
pub fn cluster<R: Rng + ?Sized>(
    graph: &SimilarityGraph,
    load_estimates: &[f64],
    config: &ClusteringConfig,
    epoch: u64,
    rng: &mut R,
) -> Result<ClusterSet> {
    let n = graph.len();
    let labels = match config.method {
        ClusterMethod::None => (0..n).collect(),
        ClusterMethod::Spectral => spectral_cluster(&graph.joint, config.k, config.kmeans_restarts, rng)?.labels,
        ClusterMethod::KMeans => {
            let k = match config.k {
                Some(k) => k,
                None if n <= 1 => 1,
                None => eigengap_k(&symmetric_eigen(&laplacian(&graph.joint))?.values),
            };
            let points: Vec<Vec<f64>> = graph.embeddings.iter().map(|e| e.as_real()).collect();
            kmeans(&points, k, config.kmeans_max_iters, config.kmeans_restarts, rng)?.labels
        }
        ClusterMethod::P2p => {
            p2p_search_cluster(&graph.neighborhood, |a, b| graph.joint[(a, b)], config.max_cluster_size, config.p2p_rounds)
        }
    };
    Ok(ClusterSet::from_labels(&labels, load_estimates, config.method, epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Point;
    use crate::similarity::build_neighborhood;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap_k(&[0.0, 0.0, 0.0, 5.0, 5.1]), 3);
        assert_eq!(eigengap_k(&[0.0, 10.0]), 1);
        assert_eq!(eigengap_k(&[0.0, 1.0, 2.0, 3.0]), 1);
    }

    #[test]
    fn heads_are_least_loaded() {
        let set = ClusterSet::from_labels(&[7, 7, 3, 7], &[0.5, 0.2, 0.9, 0.2], ClusterMethod::KMeans, 0);
        assert_eq!(set.len(), 2);
        assert_eq!(set.cluster(0).members, vec![0, 1, 3]);
        assert_eq!(set.cluster(0).head, 1);
        assert_eq!(set.cluster(1).head, 2);
        set.validate().unwrap();
    }

    #[test]
    fn kmeans_extremes() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = kmeans(&pts, 5, 100, 3, &mut rng).unwrap();
        assert_eq!(all.objective, 0.0);
        let mut labels = all.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 5);
        let one = kmeans(&pts, 1, 100, 1, &mut rng).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        assert!(kmeans(&pts, 6, 100, 1, &mut rng).is_err());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let s = Matrix::from_fn(4, |i, j| if i == j { 0.0 } else { 1.0 / (1 + i + j) as f64 });
        let l = laplacian(&s);
        for i in 0..4 {
            assert!(l.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn spectral_finds_components() {
        let mut s = Matrix::zeros(6);
        for &(a, b) in &[(0, 1), (2, 3), (4, 5)] {
            s[(a, b)] = 1.0;
            s[(b, a)] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = spectral_cluster(&s, None, 4, &mut rng).unwrap();
        assert_eq!(out.k, 3);
        let set = ClusterSet::from_labels(&out.labels, &[0.0; 6], ClusterMethod::Spectral, 0);
        let groups: Vec<Vec<usize>> = set.clusters().iter().map(|c| c.members.clone()).collect();
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
    }

    #[test]
    fn p2p_respects_cap() {
        let pts = [Point::new(0.0, 0.0), Point::new(50.0, 0.0)];
        let nb = build_neighborhood(&pts, 250.0);
        assert_eq!(p2p_search_cluster(&nb, |_, _| 1.0, 1, 8), vec![0, 1]);
        assert_eq!(p2p_search_cluster(&nb, |_, _| 1.0, 2, 8), vec![0, 0]);
    }

    #[test]
    fn p2p_never_touches_non_edges() {
        let pts: Vec<Point> = (0..8).map(|i| Point::new(120.0 * i as f64, 0.0)).collect();
        let nb = build_neighborhood(&pts, 250.0);
        let labels = p2p_search_cluster(
            &nb,
            |a, b| {
                assert!(nb.adjacent(a, b), "read similarity of non-adjacent pair ({a},{b})");
                1.0 / (1.0 + a.abs_diff(b) as f64)
            },
            4,
            8,
        );
        let set = ClusterSet::from_labels(&labels, &[0.0; 8], ClusterMethod::P2p, 0);
        set.validate().unwrap();
        assert!(set.max_size() <= 4);
    }
}
