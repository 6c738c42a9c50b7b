//! Per-cluster action spaces and the regret-based Boltzmann-Gibbs learner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::association::StepSchedule;

/// Largest joint action list a cluster may enumerate.
pub const MAX_ACTIONS: usize = 64;

/// Configuration of one member inside a cluster action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberAction {
    /// Transmit power, zero when OFF.
    pub power: f64,
    pub on: bool,
}

impl MemberAction {
    pub const OFF: MemberAction = MemberAction { power: 0.0, on: false };

    pub fn on(power: f64) -> Self {
        Self { power, on: true }
    }
}

/// What a member may do: fixed ON at full power, or switch among the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemberOptions {
    pub max_power: f64,
    pub controllable: bool,
}

fn member_choices(opt: &MemberOptions, levels: usize) -> Vec<MemberAction> {
    if !opt.controllable {
        return vec![MemberAction::on(opt.max_power)];
    }
    let mut out: Vec<MemberAction> =
        (1..=levels).rev().map(|l| MemberAction::on(opt.max_power * l as f64 / levels as f64)).collect();
    out.push(MemberAction::OFF);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}

/// Most simultaneous OFF switches (at most 3) that keep the list within
/// [`MAX_ACTIONS`] for `m` controllable members.
pub fn max_simultaneous_off(m: usize) -> usize {
    let mut total = 1;
    let mut k = 0;
    while k < 3.min(m) {
        let next = total + binomial(m, k + 1);
        if next > MAX_ACTIONS {
            break;
        }
        total = next;
        k += 1;
    }
    k
}

fn combinations(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for i in start..n {
        current.push(i);
        combinations(n, k, i + 1, current, out);
        current.pop();
    }
}

/// Ordered joint actions of one cluster. Action 0 is every member ON at
/// full power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    members: Vec<usize>,
    actions: Vec<Vec<MemberAction>>,
}

impl ActionSpace {
    /// Full product of per-member choices with `levels` power steps when it
    /// fits in [`MAX_ACTIONS`]; otherwise ON/OFF only, first as a full
    /// product, then limited to a few members OFF at once.
    pub fn build(members: Vec<usize>, options: &[MemberOptions], levels: usize) -> Self {
        assert_eq!(members.len(), options.len());
        let levels = levels.max(1);
        let product = |l: usize| -> usize {
            options.iter().map(|o| member_choices(o, l).len()).fold(1usize, |a, c| a.saturating_mul(c))
        };
        let actions = if product(levels) <= MAX_ACTIONS {
            Self::product_actions(options, levels)
        } else if product(1) <= MAX_ACTIONS {
            Self::product_actions(options, 1)
        } else {
            Self::limited_off_actions(options)
        };
        Self { members, actions }
    }

    fn product_actions(options: &[MemberOptions], levels: usize) -> Vec<Vec<MemberAction>> {
        let choices: Vec<Vec<MemberAction>> = options.iter().map(|o| member_choices(o, levels)).collect();
        let mut actions = vec![Vec::new()];
        for set in &choices {
            actions = actions
                .into_iter()
                .flat_map(|prefix| {
                    set.iter().map(move |c| {
                        let mut a = prefix.clone();
                        a.push(*c);
                        a
                    })
                })
                .collect();
        }
        actions
    }

    fn limited_off_actions(options: &[MemberOptions]) -> Vec<Vec<MemberAction>> {
        let controllable: Vec<usize> = (0..options.len()).filter(|&i| options[i].controllable).collect();
        let all_on: Vec<MemberAction> = options.iter().map(|o| MemberAction::on(o.max_power)).collect();
        let mut actions = Vec::new();
        for k in 0..=max_simultaneous_off(controllable.len()) {
            let mut combos = Vec::new();
            combinations(controllable.len(), k, 0, &mut Vec::new(), &mut combos);
            for combo in combos {
                let mut a = all_on.clone();
                for i in combo {
                    a[controllable[i]] = MemberAction::OFF;
                }
                actions.push(a);
            }
        }
        actions
    }

    /// A single action: every member ON at full power.
    pub fn always_on(members: Vec<usize>, options: &[MemberOptions]) -> Self {
        let fixed: Vec<MemberOptions> = options.iter().map(|o| MemberOptions { controllable: false, ..*o }).collect();
        Self::build(members, &fixed, 1)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Member configurations of action `j`, in member order.
    pub fn action(&self, j: usize) -> &[MemberAction] {
        &self.actions[j]
    }
}

/// Exponents of the three learner step sizes `1/t^φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    /// τ, utility estimates.
    pub utility: f64,
    /// ι, regret estimates.
    pub regret: f64,
    /// ε, mixed strategy.
    pub strategy: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { utility: 0.6, regret: 0.7, strategy: 0.8 }
    }
}

impl LearningRates {
    /// Same exponents reassigned so that τ/ι → 0 and τ/ε → 0.
    pub fn separated() -> Self {
        Self { utility: 0.8, regret: 0.7, strategy: 0.6 }
    }

    pub fn satisfies_timescale_separation(&self) -> bool {
        self.utility > self.regret && self.utility > self.strategy
    }
}

/// Boltzmann-Gibbs map `exp(κ r⁺) / Σ exp(κ r⁺)`.
pub fn bg_distribution(regrets: &[f64], kappa: f64) -> Vec<f64> {
    let exps: Vec<f64> = regrets.iter().map(|r| kappa * r.max(0.0)).collect();
    softmax(&exps)
}

/// Overflow-safe softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_action<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Estimates and mixed strategy of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    utility_estimates: Vec<f64>,
    regrets: Vec<f64>,
    strategy: Vec<f64>,
    kappa: f64,
    rates: LearningRates,
    step: u64,
    last_utility: f64,
}

impl Learner {
    pub fn new(num_actions: usize, kappa: f64, rates: LearningRates) -> Self {
        assert!(num_actions > 0);
        Self {
            utility_estimates: vec![0.0; num_actions],
            regrets: vec![0.0; num_actions],
            strategy: vec![1.0 / num_actions as f64; num_actions],
            kappa,
            rates,
            step: 0,
            last_utility: 0.0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.strategy.len()
    }

    pub fn strategy(&self) -> &[f64] {
        &self.strategy
    }

    pub fn utility_estimates(&self) -> &[f64] {
        &self.utility_estimates
    }

    pub fn regrets(&self) -> &[f64] {
        &self.regrets
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_action(&self.strategy, rng)
    }

    /// One update after playing `played` and receiving `utility`, with the
    /// step sizes of the learner's next local slot.
    pub fn update(&mut self, played: usize, utility: f64) {
        self.step += 1;
        let t = self.step;
        let tau = StepSchedule::new(self.rates.utility).at(t);
        let iota = StepSchedule::new(self.rates.regret).at(t);
        let eps = StepSchedule::new(self.rates.strategy).at(t);
        self.apply(played, utility, tau, iota, eps);
    }

    /// Update with explicit step sizes.
    pub fn apply(&mut self, played: usize, utility: f64, tau: f64, iota: f64, eps: f64) {
        let target = bg_distribution(&self.regrets, self.kappa);
        for j in 0..self.num_actions() {
            let prev_estimate = self.utility_estimates[j];
            self.regrets[j] += iota * (prev_estimate - self.last_utility - self.regrets[j]);
            self.strategy[j] += eps * (target[j] - self.strategy[j]);
        }
        self.utility_estimates[played] += tau * (utility - self.utility_estimates[played]);
        let total: f64 = self.strategy.iter().sum();
        for p in &mut self.strategy {
            *p /= total;
        }
        self.last_utility = utility;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sbs() -> MemberOptions {
        MemberOptions { max_power: 1.0, controllable: true }
    }

    #[test]
    fn bg_examples() {
        assert_eq!(bg_distribution(&[-1.0, 0.0, -3.0], 10.0), vec![1.0 / 3.0; 3]);
        let g = bg_distribution(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((g[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((g[0] - 0.7311).abs() < 1e-4);
        let sharp = bg_distribution(&[0.5, 0.4, 0.1], 1e4);
        assert!(sharp[0] > 1.0 - 1e-12);
    }

    #[test]
    fn degenerate_strategy_always_picks_its_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_action(&[1.0, 0.0, 0.0], &mut rng), 0);
        }
    }

    #[test]
    fn full_product_sizes() {
        let opts = vec![sbs(); 3];
        assert_eq!(ActionSpace::build(vec![0, 1, 2], &opts, 1).len(), 8);
        assert_eq!(ActionSpace::build(vec![0, 1, 2], &opts, 2).len(), 27);
        // 5^3 = 125 does not fit, drops to ON/OFF
        assert_eq!(ActionSpace::build(vec![0, 1, 2], &opts, 4).len(), 8);
        let first = ActionSpace::build(vec![0, 1, 2], &opts, 2);
        assert!(first.action(0).iter().all(|a| a.on && a.power == 1.0));
    }

    #[test]
    fn fixed_members_have_one_option() {
        let opts = [MemberOptions { max_power: 40.0, controllable: false }, sbs(), sbs()];
        let space = ActionSpace::build(vec![0, 4, 7], &opts, 1);
        assert_eq!(space.len(), 4);
        assert!((0..space.len()).all(|j| space.action(j)[0].on));
    }

    #[test]
    fn large_clusters_limit_simultaneous_off() {
        assert_eq!(max_simultaneous_off(7), 3);
        assert_eq!(max_simultaneous_off(8), 2);
        assert_eq!(max_simultaneous_off(11), 1);
        let opts = vec![sbs(); 8];
        let space = ActionSpace::build((0..8).collect(), &opts, 1);
        assert_eq!(space.len(), 1 + 8 + 28);
        assert!((0..space.len()).all(|j| space.action(j).iter().filter(|a| !a.on).count() <= 2));
    }

    #[test]
    fn unit_steps_substitute_directly() {
        let mut l = Learner::new(2, 1.0, LearningRates::default());
        l.apply(0, -0.4, 1.0, 1.0, 1.0);
        assert_eq!(l.utility_estimates(), &[-0.4, 0.0]);
        // regrets used û(0) = 0 and u(0) = 0
        assert_eq!(l.regrets(), &[0.0, 0.0]);
        l.apply(1, -0.1, 1.0, 1.0, 1.0);
        assert_eq!(l.regrets(), &[-0.4 + 0.4, 0.0 + 0.4]);
        // π took G(r̂(t−1)) = G(0, 0)
        assert_eq!(l.strategy(), &[0.5, 0.5]);
        l.apply(1, -0.1, 1.0, 1.0, 1.0);
        let g = bg_distribution(&[0.0, 0.4], 1.0);
        assert!((l.strategy()[1] - g[1]).abs() < 1e-15);
    }

    #[test]
    fn separated_rates_satisfy_limits() {
        assert!(!LearningRates::default().satisfies_timescale_separation());
        assert!(LearningRates::separated().satisfies_timescale_separation());
    }
}
