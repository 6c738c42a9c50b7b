//! Neighborhood graph over base stations and the distance, load and joint
//! similarity weights used for clustering.
//!
//! The joint weight `s = (s^d)^θ (s^l)^(1-θ)` keeps the hard cutoff of the
//! neighborhood graph for every θ: a pair without an edge has weight 0 even
//! when θ = 0 (`0^0` is taken as 0 here). The load factor is a
//! *dissimilarity* (`exp(+Δρ²/2σ_l²) ≥ 1`), so joint weights may exceed 1.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// ε_d, neighborhood range in meters.
    pub range: f64,
    /// σ_d, meters.
    pub sigma_distance: f64,
    /// σ_l, dimensionless.
    pub sigma_load: f64,
    /// θ ∈ [0,1], weight on distance versus load.
    pub theta: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { range: 250.0, sigma_distance: 300.0, sigma_load: 1.0, theta: 0.5 }
    }
}

/// ε_d-neighborhood graph. `neighbors[b]` includes `b` itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.len() + b]
    }

    /// Self-inclusive neighbor set N_b.
    pub fn neighbors(&self, b: usize) -> &[usize] {
        &self.neighbors[b]
    }

    /// |N_b|, at least 1.
    pub fn size(&self, b: usize) -> usize {
        self.neighbors[b].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count() / 2
    }
}

/// Edge iff `0 < ‖y_b − y_b'‖ ≤ ε_d`.
pub fn build_neighborhood(positions: &[Point], range: f64) -> Neighborhood {
    let n = positions.len();
    let mut adjacency = vec![false; n * n];
    let mut neighbors: Vec<Vec<usize>> = (0..n).map(|b| vec![b]).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            let d = positions[a].distance(&positions[b]);
            if d > 0.0 && d <= range {
                adjacency[a * n + b] = true;
                adjacency[b * n + a] = true;
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Neighborhood { adjacency, neighbors }
}

/// Gaussian distance similarity, zero beyond ε_d.
pub fn distance_similarity(a: &Point, b: &Point, range: f64, sigma_distance: f64) -> f64 {
    let d = a.distance(b);
    if d <= range {
        (-d * d / (2.0 * sigma_distance * sigma_distance)).exp()
    } else {
        0.0
    }
}

/// Load dissimilarity `exp(+(ρ_b − ρ_b')² / 2σ_l²)`.
pub fn load_similarity(load_a: f64, load_b: f64, sigma_load: f64) -> f64 {
    let diff = load_a - load_b;
    (diff * diff / (2.0 * sigma_load * sigma_load)).exp()
}

/// `(s^d)^θ · (s^l)^(1−θ)`, with zero whenever `s^d` is zero.
pub fn joint_similarity(distance_sim: f64, load_sim: f64, theta: f64) -> f64 {
    if distance_sim == 0.0 {
        return 0.0;
    }
    distance_sim.powf(theta) * load_sim.powf(1.0 - theta)
}

/// Three-coordinate mapping of a BS under which the joint similarity is a
/// Gaussian kernel, with σ = 1. The third axis is imaginary: its squared
/// difference enters the kernel distance with a negative sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadEmbedding {
    pub coords: [f64; 3],
}

impl LoadEmbedding {
    pub fn new(position: &Point, load: f64, params: &SimilarityParams) -> Self {
        let spatial = params.theta.sqrt() / params.sigma_distance;
        let load_axis = (1.0 - params.theta).sqrt() / params.sigma_load;
        Self { coords: [position.x * spatial, position.y * spatial, load * load_axis] }
    }

    /// `Δζ₁² + Δζ₂² − Δζ₃²`.
    pub fn signed_sq_distance(&self, other: &Self) -> f64 {
        let d = |k: usize| self.coords[k] - other.coords[k];
        d(0) * d(0) + d(1) * d(1) - d(2) * d(2)
    }

    pub fn kernel(&self, other: &Self) -> f64 {
        (-0.5 * self.signed_sq_distance(other)).exp()
    }

    /// Real-valued point for Lloyd's algorithm. The load axis is treated as
    /// an ordinary coordinate here, so similar loads end up close.
    pub fn as_real(&self) -> Vec<f64> {
        self.coords.to_vec()
    }
}

/// All similarity matrices for one snapshot of positions and loads.
#[derive(Clone, Debug)]
pub struct SimilarityGraph {
    pub params: SimilarityParams,
    pub neighborhood: Neighborhood,
    /// S^d, unit diagonal.
    pub distance: Matrix,
    /// S^l, unit diagonal.
    pub load: Matrix,
    /// S, zero diagonal, zero off the neighborhood graph.
    pub joint: Matrix,
    pub embeddings: Vec<LoadEmbedding>,
}

impl SimilarityGraph {
    pub fn build(positions: &[Point], loads: &[f64], params: SimilarityParams) -> Self {
        assert_eq!(positions.len(), loads.len());
        let n = positions.len();
        let neighborhood = build_neighborhood(positions, params.range);
        let distance = Matrix::from_fn(n, |a, b| {
            distance_similarity(&positions[a], &positions[b], params.range, params.sigma_distance)
        });
        let load = Matrix::from_fn(n, |a, b| load_similarity(loads[a], loads[b], params.sigma_load));
        let joint = Matrix::from_fn(n, |a, b| {
            if neighborhood.adjacent(a, b) {
                joint_similarity(distance[(a, b)], load[(a, b)], params.theta)
            } else {
                0.0
            }
        });
        let embeddings = positions.iter().zip(loads).map(|(p, &r)| LoadEmbedding::new(p, r, &params)).collect();
        Self { params, neighborhood, distance, load, joint, embeddings }
    }

    pub fn len(&self) -> usize {
        self.neighborhood.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighborhood.is_empty()
    }

    /// `θ S^d + (1 − θ) S^l`. Not a valid clustering input: it is positive
    /// between stations that cannot coordinate.
    pub fn linear_combination(&self) -> Matrix {
        let th = self.params.theta;
        Matrix::from_fn(self.len(), |a, b| {
            if a == b {
                0.0
            } else {
                th * self.distance[(a, b)] + (1.0 - th) * self.load[(a, b)]
            }
        })
    }

    /// Joint similarity matrix as CSV, rows and columns in BS id order.
    pub fn joint_csv(&self) -> String {
        let n = self.len();
        let mut out = String::new();
        for a in 0..n {
            let row: Vec<String> = (0..n).map(|b| format!("{:.12e}", self.joint[(a, b)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_range_isolates_everyone() {
        let pts = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 50.0)];
        let nb = build_neighborhood(&pts, 0.0);
        assert_eq!(nb.edge_count(), 0);
        assert!((0..3).all(|b| nb.size(b) == 1));
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let nb = build_neighborhood(&[Point::new(0.0, 0.0), Point::new(250.0, 0.0)], 250.0);
        assert!(nb.adjacent(0, 1));
    }

    #[test]
    fn collinear_chain() {
        let pts = [Point::new(0.0, 0.0), Point::new(200.0, 0.0), Point::new(400.0, 0.0)];
        let nb = build_neighborhood(&pts, 250.0);
        assert!(nb.adjacent(0, 1) && nb.adjacent(1, 2));
        assert!(!nb.adjacent(0, 2));
        assert_eq!(nb.neighbors(1), &[0, 1, 2]);
    }

    #[test]
    fn distance_similarity_values() {
        let o = Point::ORIGIN;
        assert_eq!(distance_similarity(&o, &o, 250.0, 300.0), 1.0);
        let s = distance_similarity(&o, &Point::new(250.0, 0.0), 250.0, 300.0);
        assert!((s - (-62500.0f64 / 180000.0).exp()).abs() < 1e-15);
        assert!((s - 0.7066).abs() < 1e-4);
        assert_eq!(distance_similarity(&o, &Point::new(251.0, 0.0), 250.0, 300.0), 0.0);
    }

    #[test]
    fn load_similarity_values() {
        assert_eq!(load_similarity(0.4, 0.4, 1.0), 1.0);
        assert!((load_similarity(0.0, 1.0, 1.0) - 0.5f64.exp()).abs() < 1e-15);
        assert!(load_similarity(0.2, 0.9, 1.0) > load_similarity(0.2, 0.3, 1.0));
    }

    #[test]
    fn joint_similarity_values() {
        assert_eq!(joint_similarity(0.7066, 1.6487, 1.0), 0.7066);
        assert_eq!(joint_similarity(0.0, 1.6487, 0.0), 0.0);
        let s = joint_similarity(0.7066, 1.6487, 0.5);
        assert!((s - (0.7066f64 * 1.6487).sqrt()).abs() < 1e-15);
        assert!((s - 1.0794).abs() < 1e-4);
    }

    #[test]
    fn embedding_collapses_for_pure_distance() {
        let params = SimilarityParams { theta: 1.0, ..Default::default() };
        let a = LoadEmbedding::new(&Point::new(10.0, 20.0), 0.3, &params);
        let b = LoadEmbedding::new(&Point::new(110.0, -20.0), 0.9, &params);
        assert_eq!(a.coords[2], 0.0);
        let direct = distance_similarity(&Point::new(10.0, 20.0), &Point::new(110.0, -20.0), 250.0, 300.0);
        assert!((a.kernel(&b) - direct).abs() < 1e-14);
    }

    #[test]
    fn identical_stations_have_unit_kernel() {
        let params = SimilarityParams::default();
        let a = LoadEmbedding::new(&Point::new(5.0, 5.0), 0.4, &params);
        assert_eq!(a.kernel(&a), 1.0);
    }

    #[test]
    fn graph_matrices_are_symmetric_with_expected_diagonals() {
        let pts = [Point::new(0.0, 0.0), Point::new(100.0, 0.0), Point::new(600.0, 0.0)];
        let g = SimilarityGraph::build(&pts, &[0.1, 0.7, 0.2], SimilarityParams::default());
        assert!(g.distance.is_symmetric() && g.load.is_symmetric() && g.joint.is_symmetric());
        for b in 0..3 {
            assert_eq!(g.distance[(b, b)], 1.0);
            assert_eq!(g.load[(b, b)], 1.0);
            assert_eq!(g.joint[(b, b)], 0.0);
        }
        assert_eq!(g.joint[(0, 2)], 0.0);
        assert!(g.joint[(0, 1)] > 0.0);
    }

    #[test]
    fn linear_combination_leaks_across_missing_edges() {
        let pts = [Point::new(0.0, 0.0), Point::new(900.0, 0.0)];
        let g = SimilarityGraph::build(&pts, &[0.1, 0.2], SimilarityParams { theta: 0.5, ..Default::default() });
        assert!(!g.neighborhood.adjacent(0, 1));
        assert_eq!(g.joint[(0, 1)], 0.0);
        assert!(g.linear_combination()[(0, 1)] > 0.0);
    }

    #[test]
    fn csv_dump_has_one_row_per_station() {
        let pts = [Point::new(0.0, 0.0), Point::new(100.0, 0.0)];
        let g = SimilarityGraph::build(&pts, &[0.0, 0.0], SimilarityParams::default());
        let csv = g.joint_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 2);
    }
}
