//! Intra-cluster offloading of anchored users and the signaling overhead
//! paid by clustered stations.
//!
//! The scheduling LP only constrains each user's column to sum to one, so it
//! separates per user: the optimum puts all of a user's mass on its cheapest
//! row. `solve_relaxed` returns that closed form, splitting ties evenly.

/// Entry used for a (BS, UE) pair whose rate is zero.
pub const INFEASIBLE_COST: f64 = 1e3;

/// Estimated per-user loads `ρ̂_bm` for one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleProblem {
    /// ON members, one per row.
    pub rows: Vec<usize>,
    /// Users anchored inside the cluster, one per column.
    pub cols: Vec<usize>,
    /// Row-major `rows.len() × cols.len()`.
    pub cost: Vec<f64>,
}

impl ScheduleProblem {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, cost: Vec<f64>) -> Self {
        assert_eq!(cost.len(), rows.len() * cols.len());
        Self { rows, cols, cost }
    }

    /// Fills `ρ̂_bm = η_m / R_bm` from a rate callback, with the sentinel for
    /// zero rates.
    pub fn build(
        on_members: Vec<usize>,
        users: Vec<usize>,
        traffic: impl Fn(usize) -> f64,
        rate: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut cost = Vec::with_capacity(on_members.len() * users.len());
        for &b in &on_members {
            for &m in &users {
                let r = rate(b, m);
                cost.push(if r > 0.0 { traffic(m) / r } else { INFEASIBLE_COST });
            }
        }
        Self::new(on_members, users, cost)
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.cost[r * self.cols.len() + c]
    }

    /// `Σ cost · z` for a row-major plan of the same shape.
    pub fn objective(&self, z: &[f64]) -> f64 {
        self.cost.iter().zip(z).map(|(c, z)| c * z).sum()
    }
}

/// Fractional plan minimizing the relaxed objective.
pub fn solve_relaxed(problem: &ScheduleProblem) -> Vec<f64> {
    let (nr, nc) = (problem.num_rows(), problem.num_cols());
    let mut z = vec![0.0; nr * nc];
    if nr == 0 {
        return z;
    }
    for c in 0..nc {
        let min = (0..nr).map(|r| problem.at(r, c)).fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..nr).filter(|&r| problem.at(r, c) == min).collect();
        let share = 1.0 / ties.len() as f64;
        for r in ties {
            z[r * nc + c] = share;
        }
    }
    z
}

/// Binary plan: each column keeps its largest entry, lowest row on ties.
pub fn round_assignment(z: &[f64], num_rows: usize, num_cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_rows * num_cols];
    if num_rows == 0 {
        return out;
    }
    for c in 0..num_cols {
        let mut best = 0;
        for r in 1..num_rows {
            if z[r * num_cols + c] > z[best * num_cols + c] {
                best = r;
            }
        }
        out[best * num_cols + c] = 1.0;
    }
    out
}

/// Serving BS chosen for every column of the problem.
pub fn schedule(problem: &ScheduleProblem) -> Vec<(usize, usize)> {
    let (nr, nc) = (problem.num_rows(), problem.num_cols());
    if nr == 0 {
        return Vec::new();
    }
    let z = round_assignment(&solve_relaxed(problem), nr, nc);
    (0..nc)
        .map(|c| {
            let r = (0..nr).find(|&r| z[r * nc + c] == 1.0).expect("rounded column has a one");
            (problem.cols[c], problem.rows[r])
        })
        .collect()
}

/// `δP^Base = χ (|N_b| − 1) ε_d` for a self-inclusive neighborhood size.
pub fn overhead_cost(neighborhood_size: usize, range: f64, chi: f64) -> f64 {
    chi * neighborhood_size.saturating_sub(1) as f64 * range
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxed_picks_row_minima() {
        let p = ScheduleProblem::new(vec![0, 1], vec![0, 1], vec![0.2, 0.5, 0.4, 0.1]);
        let z = solve_relaxed(&p);
        assert_eq!(z, vec![1.0, 0.0, 0.0, 1.0]);
        assert!((p.objective(&z) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ties_split_then_round_low() {
        let p = ScheduleProblem::new(vec![3, 5], vec![9], vec![0.4, 0.4]);
        let z = solve_relaxed(&p);
        assert_eq!(z, vec![0.5, 0.5]);
        assert_eq!(round_assignment(&z, 2, 1), vec![1.0, 0.0]);
        assert_eq!(schedule(&p), vec![(9, 3)]);
    }

    #[test]
    fn single_row_takes_everything() {
        let p = ScheduleProblem::new(vec![2], vec![0, 1, 2], vec![0.3, 0.1, 0.9]);
        assert_eq!(solve_relaxed(&p), vec![1.0; 3]);
    }

    #[test]
    fn cost_matrix_entries() {
        let p = ScheduleProblem::build(vec![0, 1], vec![4], |_| 180e3, |b, _| if b == 0 { 1e6 } else { 0.0 });
        assert!((p.at(0, 0) - 0.18).abs() < 1e-15);
        assert_eq!(p.at(1, 0), INFEASIBLE_COST);
    }

    #[test]
    fn overhead_values() {
        assert_eq!(overhead_cost(1, 250.0, 3e-3), 0.0);
        assert!((overhead_cost(3, 250.0, 3e-3) - 1.5).abs() < 1e-12);
        assert_eq!(overhead_cost(5, 250.0, 0.0), 0.0);
    }
}
