//! Numerical checks of the learning dynamics on small finite games: Gibbs
//! stationary distributions, their behaviour in κ, coarse correlated
//! equilibrium certification and Monte-Carlo convergence of the learners.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{bg_distribution, softmax, Learner, LearningRates};

/// Largest joint action set handled here.
pub const MAX_JOINT_ACTIONS: usize = 4096;

/// Normal-form game with a complete utility tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteGame {
    action_counts: Vec<usize>,
    /// `utilities[a][i]`, joint index `a`, player `i`.
    utilities: Vec<Vec<f64>>,
}

impl FiniteGame {
    /// Joint actions are indexed in mixed radix with the last player
    /// varying fastest.
    pub fn new(action_counts: Vec<usize>, mut utility: impl FnMut(&[usize]) -> Vec<f64>) -> Result<Self> {
        if action_counts.is_empty() || action_counts.contains(&0) {
            return Err(Error::InvalidArgument("every player needs at least one action".into()));
        }
        let total = action_counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
        let total = match total {
            Some(t) if t <= MAX_JOINT_ACTIONS => t,
            _ => return Err(Error::InvalidArgument(format!("joint action set exceeds {MAX_JOINT_ACTIONS}"))),
        };
        let mut game = Self { action_counts, utilities: Vec::with_capacity(total) };
        for a in 0..total {
            let profile = game.decode(a);
            let u = utility(&profile);
            if u.len() != game.num_players() || u.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("joint action {a}: need one finite utility per player")));
            }
            game.utilities.push(u);
        }
        Ok(game)
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_joint(&self) -> usize {
        self.utilities.len()
    }

    pub fn decode(&self, mut a: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_players()];
        for i in (0..self.num_players()).rev() {
            out[i] = a % self.action_counts[i];
            a /= self.action_counts[i];
        }
        out
    }

    pub fn encode(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.action_counts).fold(0, |acc, (&p, &c)| acc * c + p)
    }

    pub fn utility(&self, a: usize, player: usize) -> f64 {
        self.utilities[a][player]
    }

    /// Sum of all players' utilities.
    pub fn system_utility(&self, a: usize) -> f64 {
        self.utilities[a].iter().sum()
    }

    pub fn system_utilities(&self) -> Vec<f64> {
        (0..self.num_joint()).map(|a| self.system_utility(a)).collect()
    }

    /// Joint regrets `Û_a − U`, with `U` the mean system utility.
    pub fn regrets(&self) -> Vec<f64> {
        let u = self.system_utilities();
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.into_iter().map(|v| v - mean).collect()
    }

    /// Largest utility difference seen by any single player.
    pub fn utility_range(&self) -> f64 {
        (0..self.num_players())
            .map(|i| {
                let (lo, hi) = self
                    .utilities
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| (lo.min(u[i]), hi.max(u[i])));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Probability of each of player `i`'s actions under a joint law.
    pub fn marginal(&self, joint: &[f64], player: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.action_counts[player]];
        for (a, &p) in joint.iter().enumerate() {
            out[self.decode(a)[player]] += p;
        }
        out
    }

    /// Joint law of independent per-player strategies.
    pub fn product(&self, strategies: &[Vec<f64>]) -> Vec<f64> {
        (0..self.num_joint())
            .map(|a| self.decode(a).iter().enumerate().map(|(i, &j)| strategies[i][j]).product())
            .collect()
    }

    /// Expected utility of each of player `i`'s actions when the others play
    /// the independent `strategies`.
    pub fn action_values(&self, strategies: &[Vec<f64>], player: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.action_counts[player]];
        for a in 0..self.num_joint() {
            let profile = self.decode(a);
            let others: f64 =
                profile.iter().enumerate().filter(|&(k, _)| k != player).map(|(k, &j)| strategies[k][j]).product();
            out[profile[player]] += others * self.utilities[a][player];
        }
        out
    }
}

/// Gibbs law `exp(κ Γ_a) / Σ exp(κ Γ_a')`.
pub fn stationary_distribution(regrets: &[f64], kappa: f64) -> Vec<f64> {
    softmax(&regrets.iter().map(|r| kappa * r).collect::<Vec<_>>())
}

/// Maximizers of `regrets` within `tol`.
pub fn optimal_set(regrets: &[f64], tol: f64) -> Vec<usize> {
    let max = regrets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..regrets.len()).filter(|&a| regrets[a] >= max - tol).collect()
}

/// κ → ∞ limit: uniform over the maximizers.
pub fn stationary_limit(regrets: &[f64], tol: f64) -> Vec<f64> {
    let star = optimal_set(regrets, tol);
    let mut out = vec![0.0; regrets.len()];
    for &a in &star {
        out[a] = 1.0 / star.len() as f64;
    }
    out
}

pub fn expectation(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub quantity: String,
    pub kappa_low: f64,
    pub kappa_high: f64,
    pub value_low: f64,
    pub value_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub optimal_actions: Vec<usize>,
    pub violations: usize,
    pub first_violation: Option<Violation>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks along an ascending κ grid that the mass of every optimal joint
/// action and the expected system utility never decrease. Differences
/// smaller than `slack` count as ties.
pub fn check_kappa_monotonicity(game: &FiniteGame, grid: &[f64], slack: f64) -> Result<MonotonicityReport> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("κ grid must hold at least 3 ascending positive values".into()));
    }
    let regrets = game.regrets();
    let utility = game.system_utilities();
    let star = optimal_set(&regrets, 0.0);
    let laws: Vec<Vec<f64>> = grid.iter().map(|&k| stationary_distribution(&regrets, k)).collect();
    let mut violations = 0;
    let mut first = None;
    let mut record = |name: String, lo: usize, hi: usize, v0: f64, v1: f64| {
        if v1 < v0 - slack {
            violations += 1;
            if first.is_none() {
                first = Some(Violation {
                    quantity: name,
                    kappa_low: grid[lo],
                    kappa_high: grid[hi],
                    value_low: v0,
                    value_high: v1,
                });
            }
        }
    };
    for w in 0..grid.len() - 1 {
        for &a in &star {
            record(format!("Π[{a}]"), w, w + 1, laws[w][a], laws[w + 1][a]);
        }
        let e0 = expectation(&laws[w], &utility);
        let e1 = expectation(&laws[w + 1], &utility);
        record("E[Û]".into(), w, w + 1, e0, e1);
    }
    Ok(MonotonicityReport { optimal_actions: star, violations, first_violation: first })
}

/// Smallest κ (to `tol`) whose Gibbs law has expected system utility above
/// `threshold`; `None` when even the κ → ∞ limit does not exceed it.
pub fn kappa_for_threshold(game: &FiniteGame, threshold: f64, tol: f64) -> Option<f64> {
    let regrets = game.regrets();
    let utility = game.system_utilities();
    let value = |k: f64| expectation(&stationary_distribution(&regrets, k), &utility);
    if expectation(&stationary_limit(&regrets, 0.0), &utility) <= threshold {
        return None;
    }
    if value(0.0) > threshold {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while value(hi) <= threshold {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if value(mid) > threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub numeric: f64,
    pub analytic: f64,
    /// `|numeric − analytic| / scale`.
    pub relative_error: f64,
}

/// `dΠ_a/dκ = Π_a (Γ_a − E_Π[Γ])` for every joint action; returns the worst
/// case. Errors are scaled by `max(|analytic|, Π_a)`.
pub fn check_gibbs_derivative(regrets: &[f64], kappa: f64) -> IdentityCheck {
    let h = 1e-3 * kappa.min(1.0);
    let law = stationary_distribution(regrets, kappa);
    let mean = expectation(&law, regrets);
    let mut worst = IdentityCheck { numeric: 0.0, analytic: 0.0, relative_error: 0.0 };
    for a in 0..regrets.len() {
        let numeric = derivative(|k| stationary_distribution(regrets, k)[a], kappa, h);
        let analytic = law[a] * (regrets[a] - mean);
        let scale = analytic.abs().max(law[a]).max(f64::MIN_POSITIVE);
        let err = (numeric - analytic).abs() / scale;
        if err > worst.relative_error {
            worst = IdentityCheck { numeric, analytic, relative_error: err };
        }
    }
    worst
}

/// `dE_Π[Γ]/dκ = Var_Π(Γ)`. The expectation is taken of `Γ − max Γ` so the
/// difference quotient does not cancel against a large constant.
pub fn check_variance_identity(regrets: &[f64], kappa: f64) -> IdentityCheck {
    let h = 1e-3 * kappa.min(1.0);
    let max = regrets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = regrets.iter().map(|r| r - max).collect();
    let numeric = derivative(|k| expectation(&stationary_distribution(regrets, k), &shifted), kappa, h);
    let law = stationary_distribution(regrets, kappa);
    let mean = expectation(&law, &shifted);
    let analytic: f64 = law.iter().zip(&shifted).map(|(p, r)| p * (r - mean) * (r - mean)).sum();
    let scale = analytic.abs().max(f64::MIN_POSITIVE);
    IdentityCheck { numeric, analytic, relative_error: (numeric - analytic).abs() / scale }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CceReport {
    pub holds: bool,
    /// Largest gain from a fixed unilateral deviation.
    pub worst_deviation: f64,
    pub worst_player: usize,
    pub worst_action: usize,
}

/// Best gain any player gets by committing to one action against the
/// others' marginal, compared with following the joint law.
pub fn check_epsilon_cce(game: &FiniteGame, joint: &[f64], epsilon: f64) -> CceReport {
    let mut worst = (f64::NEG_INFINITY, 0, 0);
    for i in 0..game.num_players() {
        let follow: f64 = (0..game.num_joint()).map(|a| game.utility(a, i) * joint[a]).sum();
        for dev in 0..game.action_counts()[i] {
            let mut value = 0.0;
            for a in 0..game.num_joint() {
                let mut profile = game.decode(a);
                profile[i] = dev;
                // Σ over a_i of Π(a_i, a_−i) is the marginal of the others
                value += game.utility(game.encode(&profile), i) * joint[a];
            }
            let gain = value - follow;
            if gain > worst.0 {
                worst = (gain, i, dev);
            }
        }
    }
    CceReport { holds: worst.0 <= epsilon, worst_deviation: worst.0, worst_player: worst.1, worst_action: worst.2 }
}

/// Stationary point of the learners: every player's strategy equals the
/// Boltzmann-Gibbs map of its own ensemble regrets `Û_i,j − U_i` given the
/// others. Found by damped iteration from uniform play.
pub fn learner_fixed_point(game: &FiniteGame, kappa: f64) -> Result<Vec<Vec<f64>>> {
    let mut strategies: Vec<Vec<f64>> = game.action_counts().iter().map(|&c| vec![1.0 / c as f64; c]).collect();
    let step = 0.05;
    for _ in 0..2_000_000 {
        let mut change: f64 = 0.0;
        let mut next = strategies.clone();
        for (i, slot) in next.iter_mut().enumerate() {
            let values = game.action_values(&strategies, i);
            let mean = expectation(&strategies[i], &values);
            let regrets: Vec<f64> = values.iter().map(|v| v - mean).collect();
            let target = bg_distribution(&regrets, kappa);
            for (p, g) in slot.iter_mut().zip(&target) {
                let moved = *p + step * (g - *p);
                change = change.max((moved - *p).abs());
                *p = moved;
            }
        }
        strategies = next;
        if change < 1e-15 {
            return Ok(strategies);
        }
    }
    Err(Error::InvalidState("learner fixed point iteration did not settle".into()))
}

/// Per-player ensemble regrets `Û_i,j − U_i` at independent strategies.
pub fn player_regrets(game: &FiniteGame, strategies: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..game.num_players())
        .map(|i| {
            let values = game.action_values(strategies, i);
            let mean = expectation(&strategies[i], &values);
            values.into_iter().map(|v| v - mean).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    /// Joint-action frequencies over the second half of the run.
    pub empirical: Vec<f64>,
    /// Product of each player's Boltzmann-Gibbs map at the learners' fixed
    /// point.
    pub stationary: Vec<f64>,
    /// Joint Gibbs law of the summed per-player regrets at the same point,
    /// without rectification.
    pub joint_gibbs: Vec<f64>,
    pub tv: f64,
    pub tv_joint_gibbs: f64,
    pub tv_uniform: f64,
}

/// Runs one learner per player for `horizon` slots with utilities read from
/// the tensor and compares the late empirical play with the stationary laws.
pub fn empirical_vs_stationary(
    game: &FiniteGame,
    kappa: f64,
    horizon: u64,
    rates: LearningRates,
    seed: u64,
) -> Result<EmpiricalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learners: Vec<Learner> = game.action_counts().iter().map(|&c| Learner::new(c, kappa, rates)).collect();
    let mut counts = vec![0u64; game.num_joint()];
    let start = horizon / 2;
    let mut profile = vec![0; game.num_players()];
    for t in 0..horizon {
        for (p, l) in profile.iter_mut().zip(&learners) {
            *p = l.sample(&mut rng);
        }
        let a = game.encode(&profile);
        for (i, l) in learners.iter_mut().enumerate() {
            l.update(profile[i], game.utility(a, i));
        }
        if t >= start {
            counts[a] += 1;
        }
    }
    let window = (horizon - start).max(1) as f64;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / window).collect();
    let fixed = learner_fixed_point(game, kappa)?;
    let stationary = game.product(&fixed);
    let per_player = player_regrets(game, &fixed);
    let summed: Vec<f64> = (0..game.num_joint())
        .map(|a| game.decode(a).iter().enumerate().map(|(i, &j)| per_player[i][j]).sum())
        .collect();
    let joint_gibbs = stationary_distribution(&summed, kappa);
    let uniform = vec![1.0 / game.num_joint() as f64; game.num_joint()];
    Ok(EmpiricalReport {
        tv: total_variation(&empirical, &stationary),
        tv_joint_gibbs: total_variation(&empirical, &joint_gibbs),
        tv_uniform: total_variation(&empirical, &uniform),
        empirical,
        stationary,
        joint_gibbs,
    })
}

/// Two players, two actions each; action 0 strictly dominates for both
/// and the profile (0, 0) maximizes the summed utility.
pub fn dominant_two_by_two() -> FiniteGame {
    let u = [[1.0, 0.2], [0.6, 0.0]];
    FiniteGame::new(vec![2, 2], |p| vec![u[p[0]][p[1]], u[p[1]][p[0]]]).expect("valid game")
}

/// Two players, three actions each; the profiles (0, 1) and (2, 2) sum to 1
/// and every other profile to 0.
pub fn two_optima_game() -> FiniteGame {
    FiniteGame::new(vec![3, 3], |p| match (p[0], p[1]) {
        (0, 1) | (2, 2) => vec![0.5, 0.5],
        _ => vec![0.0, 0.0],
    })
    .expect("valid game")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub check: String,
    pub instance: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Informational rows never fail the battery.
    pub gated: bool,
}

impl VerifyRow {
    pub fn ok(&self) -> bool {
        self.pass || !self.gated
    }
}

/// The standard battery behind the `verify` command.
pub fn verify(seed: u64) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    let mut push = |check: &str, instance: &str, measured: f64, threshold: f64, pass: bool, gated: bool| {
        rows.push(VerifyRow { check: check.into(), instance: instance.into(), measured, threshold, pass, gated });
    };
    let mut row = |check: &str, instance: &str, measured: f64, threshold: f64, pass: bool| {
        push(check, instance, measured, threshold, pass, true)
    };

    let tied = two_optima_game();
    let r = tied.regrets();
    let law = stationary_distribution(&r, 1e4);
    let star = optimal_set(&r, 0.0);
    let mass: f64 = star.iter().map(|&a| law[a]).sum();
    row("kappa-limit mass on optimal set", "3x3 game, two optima, gap 1, kappa=1e4", mass, 0.999, mass >= 0.999);
    let split = star.iter().map(|&a| (law[a] - 0.5).abs()).fold(0.0, f64::max);
    row("kappa-limit even split", "same", split, 1e-3, split <= 1e-3);

    let grid = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
    let mono = check_kappa_monotonicity(&tied, &grid, 0.0)?;
    row("kappa monotonicity", "same, 7-point grid", mono.violations as f64, 0.0, mono.holds());
    let d = check_gibbs_derivative(&r, 1.0);
    row("dPi/dkappa identity", "same, kappa=1", d.relative_error, 1e-6, d.relative_error <= 1e-6);
    let v = check_variance_identity(&r, 1.0);
    row("dE/dkappa = variance", "same, kappa=1", v.relative_error, 1e-6, v.relative_error <= 1e-6);

    let limit = expectation(&stationary_limit(&r, 0.0), &tied.system_utilities());
    let target = limit - 0.05;
    let k = kappa_for_threshold(&tied, target, 1e-9);
    let margin = k.map_or(f64::NAN, |k| expectation(&stationary_distribution(&r, k), &tied.system_utilities()) - target);
    let instance = format!("same, E[U] - (limit - 0.05) at kappa={:.4}", k.unwrap_or(f64::NAN));
    row("finite kappa reaches threshold", &instance, margin, 0.0, margin > 0.0);

    let game = dominant_two_by_two();
    let rep = empirical_vs_stationary(&game, 10.0, 200_000, LearningRates::default(), seed)?;
    row("empirical vs stationary TV", "dominant 2x2, kappa=10, T=2e5", rep.tv, 0.05, rep.tv < 0.05);
    let learned = check_epsilon_cce(&game, &rep.empirical, f64::INFINITY).worst_deviation;
    let reference = check_epsilon_cce(&game, &rep.stationary, f64::INFINITY).worst_deviation;
    let bound = reference + 2.0 * rep.tv * game.utility_range();
    row("epsilon-CCE of learned play", "same", learned, bound, learned <= bound);
    let limit = check_epsilon_cce(&game, &stationary_limit(&game.regrets(), 0.0), 0.0);
    row("CCE of kappa-limit", "dominant 2x2", limit.worst_deviation, 0.0, limit.holds);
    drop(row);
    push("empirical vs joint Gibbs TV", "dominant 2x2, kappa=10, unrectified", rep.tv_joint_gibbs, 0.05, rep.tv_joint_gibbs < 0.05, false);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let g = FiniteGame::new(vec![2, 3, 4], |_| vec![0.0; 3]).unwrap();
        for a in 0..g.num_joint() {
            assert_eq!(g.encode(&g.decode(a)), a);
        }
        assert_eq!(g.decode(5), vec![0, 1, 1]);
    }

    #[test]
    fn stationary_examples() {
        assert_eq!(stationary_distribution(&[0.3, 0.3], 7.0), vec![0.5, 0.5]);
        let p = stationary_distribution(&[1.0, 0.0], 10.0);
        let e = (-10f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-18);
        assert_eq!(stationary_limit(&[2.0, 1.0, 2.0], 0.0), vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn logistic_is_monotone() {
        let g = FiniteGame::new(vec![2], |p| vec![if p[0] == 0 { 1.0 } else { 0.0 }]).unwrap();
        assert!(check_kappa_monotonicity(&g, &[0.1, 1.0, 10.0], 0.0).unwrap().holds());
    }

    #[test]
    fn constant_game_is_flat() {
        let g = FiniteGame::new(vec![3, 2], |_| vec![0.4, 0.4]).unwrap();
        let rep = check_kappa_monotonicity(&g, &[0.1, 1.0, 10.0], 0.0).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.optimal_actions.len(), 6);
    }

    #[test]
    fn cce_bound_by_range_always_holds() {
        let g = FiniteGame::new(vec![2, 2], |p| if p[0] == p[1] { vec![1.0, -1.0] } else { vec![-1.0, 1.0] }).unwrap();
        let uniform = vec![0.25; 4];
        let rep = check_epsilon_cce(&g, &uniform, g.utility_range());
        assert!(rep.holds);
        assert_eq!(rep.worst_deviation, 0.0);
    }

    #[test]
    fn single_action_game_matches_exactly() {
        let g = FiniteGame::new(vec![1, 1], |_| vec![-0.2, -0.3]).unwrap();
        let rep = empirical_vs_stationary(&g, 10.0, 100, LearningRates::default(), 0).unwrap();
        assert_eq!(rep.tv, 0.0);
    }

    #[test]
    fn threshold_above_limit_is_unreachable() {
        let g = dominant_two_by_two();
        let best = g.system_utilities().into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert!(kappa_for_threshold(&g, best, 1e-9).is_none());
        let k = kappa_for_threshold(&g, best - 0.1, 1e-9).unwrap();
        assert!(k > 0.0 && k.is_finite());
    }
}
