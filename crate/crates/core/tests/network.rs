use cellsleep::association::{associate_user, association_score, LoadEstimator, StepSchedule};
use cellsleep::network::{
    bs_cost, bs_load, bs_power, channel_gain, dbm_to_watts, BaseStationState, BsKind, Interference, Point,
};
use cellsleep::scenario::{generate_scenario, GeometryParams, RadioConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Frozen from an independent float computation of the log-distance model:
// MBS at the origin, SBS at (100, 0), UE at (60, 30), 10 MHz, -174 dBm/Hz.
const GAIN_MBS: f64 = 3.9990835174878514e-09;
const GAIN_SBS: f64 = 6.635486710314991e-10;
const NOISE_W: f64 = 3.981071705534986e-14;
const RATE_INTERFERED: f64 = 199051.64058013912;
const RATE_ISOLATED: f64 = 140248443.6751771;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn two_station_rate_matches_reference() {
    let ue = Point::new(60.0, 30.0);
    let gm = channel_gain(BsKind::Macro, ue.norm()).unwrap();
    let gs = channel_gain(BsKind::Small, ue.distance(&Point::new(100.0, 0.0))).unwrap();
    assert!(rel(gm, GAIN_MBS) < 1e-12);
    assert!(rel(gs, GAIN_SBS) < 1e-12);
    let noise = dbm_to_watts(-174.0) * 10e6;
    assert!(rel(noise, NOISE_W) < 1e-12);

    let gains = [gm, gs];
    let work = [0.3 * dbm_to_watts(46.0), 0.0];
    let apart = Interference { lagged_work: &work, cluster_of: &[0, 1] };
    let r = cellsleep::network::ue_rate(10e6, noise, &gains, 1, 1.0, true, &apart).unwrap();
    assert!(rel(r, RATE_INTERFERED) < 1e-9, "{r}");

    // same cluster: orthogonal, noise only
    let together = Interference { lagged_work: &work, cluster_of: &[0, 0] };
    let r = cellsleep::network::ue_rate(10e6, noise, &gains, 1, 1.0, true, &together).unwrap();
    assert!(rel(r, RATE_ISOLATED) < 1e-9, "{r}");
}

#[test]
fn off_station_cannot_serve() {
    let i = Interference { lagged_work: &[0.0], cluster_of: &[0] };
    assert!(cellsleep::network::ue_rate(1e6, 1e-13, &[1e-9], 0, 1.0, false, &i).is_err());
}

#[test]
fn load_is_capped_and_flagged() {
    let out = bs_load([(180e3, 100e3), (180e3, 180e3)]);
    assert!((out.raw - 2.8).abs() < 1e-12);
    assert_eq!(out.load, 1.0);
    assert!(out.overloaded);
    let idle = bs_load(std::iter::empty());
    assert_eq!((idle.load, idle.overloaded), (0.0, false));
}

#[test]
fn power_and_cost_at_full_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sc = generate_scenario(&GeometryParams::default(), &RadioConfig::default(), 1, &mut rng).unwrap();
    let spec = &sc.base_stations[1];
    let mut st = BaseStationState::new(spec.max_power, true, 0.0);
    st.load = 1.0;
    let p = bs_power(spec, &st, 0.0);
    assert!(rel(p, spec.full_power_draw()) < 1e-12);
    // λ = μ = 0.5, full draw and full load
    assert!((bs_cost(spec, p, 1.0, 0.5, 0.5) - 1.0).abs() < 1e-12);
    let asleep = BaseStationState::new(spec.max_power, false, 0.0);
    assert!(rel(bs_power(spec, &asleep, 0.0), spec.sleep_fraction * spec.base_power) < 1e-12);
}

/// Reference anchor: exhaustive argmax, first index on ties.
fn brute_anchor(gains: &[f64], states: &[BaseStationState], n: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for b in 0..gains.len() {
        if !states[b].on || states[b].power <= 0.0 {
            continue;
        }
        let score = (1.0 - states[b].load_estimate).max(0.0).powf(n) * states[b].power * gains[b];
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((b, score));
        }
    }
    best.map(|(b, _)| b)
}

#[test]
fn association_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    use rand::Rng;
    for _ in 0..500 {
        let nb = rng.gen_range(1..8);
        let gains: Vec<f64> = (0..nb).map(|_| 10f64.powf(-rng.gen_range(8.0..14.0))).collect();
        let states: Vec<BaseStationState> = (0..nb)
            .map(|_| BaseStationState::new(rng.gen_range(0.1..40.0), rng.gen_bool(0.7), rng.gen_range(0.0..1.0)))
            .collect();
        let got = associate_user(&gains, &states, 1.0).served();
        assert_eq!(got, brute_anchor(&gains, &states, 1.0));
    }
}

#[test]
fn saturated_station_is_never_preferred() {
    let states = [BaseStationState::new(40.0, true, 1.0), BaseStationState::new(1.0, true, 0.2)];
    assert_eq!(associate_user(&[1e-8, 1e-12], &states, 1.0).served(), Some(1));
}

fn estimator_inputs() -> impl Strategy<Value = (Vec<f64>, f64, u64)> {
    (prop::collection::vec(0.0f64..1.0, 1..6), 0.0f64..1.0, 1u64..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn association_is_invariant_to_uniform_gain_scaling(
        gains in prop::collection::vec(1e-14f64..1e-6, 1..8),
        loads in prop::collection::vec(0.0f64..1.0, 8),
        powers in prop::collection::vec(0.01f64..40.0, 8),
        scale in 1e-3f64..1e3,
    ) {
        let states: Vec<BaseStationState> =
            gains.iter().enumerate().map(|(b, _)| BaseStationState::new(powers[b], true, loads[b])).collect();
        let scaled: Vec<f64> = gains.iter().map(|g| g * scale).collect();
        // ratios of scores are unchanged unless two scores tie to rounding
        let scores: Vec<f64> = (0..gains.len()).map(|b| association_score(loads[b], powers[b] * gains[b], 1.0)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted.len() < 2 || sorted[0] > sorted[1] * (1.0 + 1e-9));
        prop_assert_eq!(associate_user(&gains, &states, 1.0), associate_user(&scaled, &states, 1.0));
    }

    #[test]
    fn estimator_converges_to_a_constant_load((targets, init, exp_idx) in estimator_inputs()) {
        // ν(t) = t^-a with a ∈ {0.6, 0.8, 0.9}: the first step already lands on the target.
        let exponent = [0.6, 0.8, 0.9][exp_idx as usize - 1];
        let mut est = LoadEstimator::new(targets.len(), init, StepSchedule::new(exponent));
        for _ in 0..50 {
            est.observe(&targets);
        }
        for (e, t) in est.estimates().iter().zip(&targets) {
            prop_assert!((e - t).abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_tracks_a_stationary_mean(p in 0.05f64..0.95, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est = LoadEstimator::new(1, 0.5, StepSchedule::new(0.6));
        for _ in 0..4000 {
            let draw = if rng.gen_bool(p) { 1.0 } else { 0.0 };
            est.observe(&[draw]);
        }
        // step sizes t^-0.6 leave variance ~ t^-0.6 / 2 at the end
        prop_assert!((est.estimates()[0] - p).abs() < 0.15);
    }

    #[test]
    fn load_stays_in_unit_interval(demands in prop::collection::vec((0.0f64..1e6, 0.0f64..1e8), 0..20)) {
        let out = bs_load(demands);
        prop_assert!((0.0..=1.0).contains(&out.load));
        prop_assert_eq!(out.overloaded, out.raw > 1.0);
    }
}
