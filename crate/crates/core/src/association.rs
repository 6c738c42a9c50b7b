//! Load-aware anchor selection and the moving-average load estimator.

use serde::{Deserialize, Serialize};

use crate::network::{BaseStationState, Channel};

/// Polynomially decaying step size `1/t^φ`; `φ = 0` is a constant unit step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub exponent: f64,
}

impl StepSchedule {
    pub const fn new(exponent: f64) -> Self {
        Self { exponent }
    }

    /// Step size at slot `t ≥ 1`.
    pub fn at(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        (t.max(1) as f64).powf(-self.exponent)
    }
}

/// Where a user attaches in a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Served(usize),
    /// No ON base station reaches the user; `would_be` is the BS with the
    /// best load-weighted gain, which absorbs the outage penalty.
    Unserved { would_be: usize },
}

impl Anchor {
    pub fn bs(&self) -> usize {
        match *self {
            Anchor::Served(b) => b,
            Anchor::Unserved { would_be } => would_be,
        }
    }

    pub fn served(&self) -> Option<usize> {
        match *self {
            Anchor::Served(b) => Some(b),
            Anchor::Unserved { .. } => None,
        }
    }
}

/// Association score `(1 - ρ̂)^n · P^Rx` where `received` is `P·I·h`.
pub fn association_score(load_estimate: f64, received: f64, exponent: f64) -> f64 {
    (1.0 - load_estimate).max(0.0).powf(exponent) * received
}

fn argmax_lowest_id(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (b, s) in scores {
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((b, s)),
        }
    }
    best.map(|(b, _)| b)
}

/// Anchor selection for a single user given the gains to every BS.
pub fn associate_user(gains: &[f64], states: &[BaseStationState], exponent: f64) -> Anchor {
    let candidates = states
        .iter()
        .enumerate()
        .filter(|(b, s)| s.on && s.power > 0.0 && gains[*b] > 0.0)
        .map(|(b, s)| (b, association_score(s.load_estimate, s.power * gains[b], exponent)));
    match argmax_lowest_id(candidates) {
        Some(b) => Anchor::Served(b),
        None => {
            let would_be = argmax_lowest_id(
                states.iter().enumerate().map(|(b, s)| (b, association_score(s.load_estimate, gains[b], exponent))),
            )
            .unwrap_or(0);
            Anchor::Unserved { would_be }
        }
    }
}

/// Anchor BS for every user.
pub fn associate_ues(channel: &Channel, states: &[BaseStationState], exponent: f64) -> Vec<Anchor> {
    (0..channel.num_users()).map(|m| associate_user(channel.user(m), states, exponent)).collect()
}

/// One step of `ρ̂(t) = ν ρ(t-1) + (1 - ν) ρ̂(t-1)`.
pub fn update_load_estimate(previous: f64, actual: f64, rate: f64) -> f64 {
    rate * actual + (1.0 - rate) * previous
}

/// Per-BS moving-average load estimates advertised to users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadEstimator {
    estimates: Vec<f64>,
    schedule: StepSchedule,
    step: u64,
}

impl LoadEstimator {
    pub const DEFAULT_EXPONENT: f64 = 0.9;

    pub fn new(num_bs: usize, initial: f64, schedule: StepSchedule) -> Self {
        Self { estimates: vec![initial; num_bs], schedule, step: 0 }
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Folds in the loads observed in the slot that just ended.
    pub fn observe(&mut self, actual: &[f64]) {
        self.step += 1;
        let rate = self.schedule.at(self.step);
        for (est, &rho) in self.estimates.iter_mut().zip(actual) {
            *est = update_load_estimate(*est, rho, rate);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on(power: f64, estimate: f64) -> BaseStationState {
        BaseStationState::new(power, true, estimate)
    }

    #[test]
    fn zero_exponent_is_max_rss() {
        let states = [on(1.0, 0.9), on(1.0, 0.0)];
        // BS 0 has the stronger signal despite heavy load
        assert_eq!(associate_user(&[2.0, 1.0], &states, 0.0), Anchor::Served(0));
    }

    #[test]
    fn load_breaks_equal_power() {
        let states = [on(1.0, 0.8), on(1.0, 0.2)];
        assert_eq!(associate_user(&[1.0, 1.0], &states, 1.0), Anchor::Served(1));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let states = [on(1.0, 0.5), on(1.0, 0.5), on(1.0, 0.5)];
        assert_eq!(associate_user(&[1.0, 1.0, 1.0], &states, 1.0), Anchor::Served(0));
    }

    #[test]
    fn off_stations_are_skipped() {
        let mut states = vec![on(1.0, 0.0), on(1.0, 0.0)];
        states[0].on = false;
        assert_eq!(associate_user(&[100.0, 1e-12], &states, 1.0), Anchor::Served(1));
    }

    #[test]
    fn all_off_leaves_user_unserved() {
        let mut states = vec![on(1.0, 0.3), on(1.0, 0.3)];
        for s in &mut states {
            s.on = false;
        }
        assert_eq!(associate_user(&[1.0, 3.0], &states, 1.0), Anchor::Unserved { would_be: 1 });
    }

    #[test]
    fn full_replacement_step() {
        assert_eq!(update_load_estimate(0.3, 0.7, 1.0), 0.7);
    }

    #[test]
    fn two_step_recursion() {
        // ν(1) = 1, ν(2) = 2^-0.9
        let mut est = LoadEstimator::new(1, 0.5, StepSchedule::new(0.9));
        est.observe(&[0.4]);
        assert!((est.estimates()[0] - 0.4).abs() < 1e-15);
        est.observe(&[0.6]);
        let expect = 0.4 + (0.6 - 0.4) / 2f64.powf(0.9);
        assert!((est.estimates()[0] - expect).abs() < 1e-15);
        assert!((est.estimates()[0] - 0.5072).abs() < 1e-4);
    }

    #[test]
    fn constant_load_is_a_fixed_point() {
        let mut est = LoadEstimator::new(2, 0.1, StepSchedule::new(0.9));
        for _ in 0..2000 {
            est.observe(&[0.35, 0.35]);
        }
        for &e in est.estimates() {
            assert!((e - 0.35).abs() < 1e-12);
        }
    }
}
