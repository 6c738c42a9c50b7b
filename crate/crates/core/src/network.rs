//! Physical network model: geometry, path loss, rates, loads, power and cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `W = 10^((dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsKind {
    Macro,
    Small,
}

impl BsKind {
    /// Path-loss intercept at 1 km.
    fn intercept_db(self) -> f64 {
        match self {
            BsKind::Macro => 128.1,
            BsKind::Small => 140.7,
        }
    }
}

/// Path loss in dB for a link of `distance` meters: `A + 37.6 log10(d_km)`.
pub fn path_loss_db(kind: BsKind, distance: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidGeometry(format!("link distance must be positive, got {distance}")));
    }
    Ok(kind.intercept_db() + 37.6 * (distance / 1000.0).log10())
}

/// Linear channel gain `h = 10^(-PL/10)`.
pub fn channel_gain(kind: BsKind, distance: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(kind, distance)? / 10.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStationSpec {
    pub id: usize,
    pub kind: BsKind,
    pub position: Point,
    /// P^Max, watts.
    pub max_power: f64,
    /// P^Base, watts.
    pub base_power: f64,
    /// Power-amplifier and supply efficiency, in (0, 1).
    pub amplifier_efficiency: f64,
    /// Fraction q of the base power still drawn while OFF, in (0, 1).
    pub sleep_fraction: f64,
    /// Coordination overhead sensitivity, watts per meter.
    pub overhead_sensitivity: f64,
}

impl BaseStationSpec {
    /// Denominator of the energy term in the cost: `P^Max/ϑ + P^Base`.
    pub fn full_power_draw(&self) -> f64 {
        self.max_power / self.amplifier_efficiency + self.base_power
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if !frac(self.amplifier_efficiency) {
            return Err(Error::Config(format!("BS {}: amplifier efficiency must lie in (0,1)", self.id)));
        }
        if !frac(self.sleep_fraction) {
            return Err(Error::Config(format!("BS {}: sleep fraction must lie in (0,1)", self.id)));
        }
        if !(self.max_power > 0.0) || !(self.base_power > 0.0) {
            return Err(Error::Config(format!("BS {}: powers must be positive", self.id)));
        }
        if !(self.overhead_sensitivity >= 0.0) {
            return Err(Error::Config(format!("BS {}: overhead sensitivity must be non-negative", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: usize,
    pub position: Point,
    /// Traffic influx η, bits/s.
    pub traffic: f64,
}

/// Minimum separations enforced when placing nodes, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinDistances {
    pub macro_small: f64,
    pub macro_user: f64,
    pub small_small: f64,
    pub small_user: f64,
}

impl Default for MinDistances {
    fn default() -> Self {
        Self { macro_small: 75.0, macro_user: 35.0, small_small: 40.0, small_user: 10.0 }
    }
}

impl MinDistances {
    pub fn between_stations(&self, a: BsKind, b: BsKind) -> f64 {
        match (a, b) {
            (BsKind::Small, BsKind::Small) => self.small_small,
            (BsKind::Macro, BsKind::Macro) => self.macro_small,
            _ => self.macro_small,
        }
    }

    pub fn to_user(&self, kind: BsKind) -> f64 {
        match kind {
            BsKind::Macro => self.macro_user,
            BsKind::Small => self.small_user,
        }
    }
}

/// Static description of one network instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub base_stations: Vec<BaseStationSpec>,
    pub users: Vec<UserSpec>,
    /// ω, Hz.
    pub bandwidth: f64,
    /// N₀, dBm/Hz.
    pub noise_density_dbm: f64,
    /// Exponent n on `(1 - ρ̂)` in association.
    pub load_exponent: f64,
    /// λ.
    pub energy_weight: f64,
    /// μ.
    pub load_weight: f64,
    /// ρ^Pref, initial load estimate.
    pub preferred_load: f64,
    /// N, slots between cluster refreshes.
    pub cluster_interval: u64,
    pub min_distances: MinDistances,
    pub seed: u64,
}

impl NetworkScenario {
    /// Total noise power N₀·ω in watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm) * self.bandwidth
    }

    pub fn num_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy_weight < 0.0 || self.load_weight < 0.0 || self.energy_weight + self.load_weight <= 0.0 {
            return Err(Error::Config("cost weights need λ ≥ 0, μ ≥ 0, λ + μ > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.preferred_load) {
            return Err(Error::Config("preferred load must lie in [0,1]".into()));
        }
        if self.cluster_interval == 0 {
            return Err(Error::Config("cluster interval must be at least one slot".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.load_exponent < 0.0 {
            return Err(Error::Config("association load exponent must be non-negative".into()));
        }
        for (i, bs) in self.base_stations.iter().enumerate() {
            if bs.id != i {
                return Err(Error::Config(format!("base station ids must be 0..n in order, found {} at {i}", bs.id)));
            }
            bs.validate()?;
        }
        for (i, ue) in self.users.iter().enumerate() {
            if ue.id != i {
                return Err(Error::Config(format!("user ids must be 0..n in order, found {} at {i}", ue.id)));
            }
            if !(ue.traffic > 0.0) {
                return Err(Error::Config(format!("user {i}: traffic must be positive")));
            }
        }
        Ok(())
    }

    /// Pairs violating the minimum separations, as human-readable strings.
    pub fn distance_violations(&self) -> Vec<String> {
        let md = &self.min_distances;
        let mut out = Vec::new();
        for (i, a) in self.base_stations.iter().enumerate() {
            for b in &self.base_stations[i + 1..] {
                let d = a.position.distance(&b.position);
                let need = md.between_stations(a.kind, b.kind);
                if d < need {
                    out.push(format!("BS {} – BS {}: {d:.2} m < {need} m", a.id, b.id));
                }
            }
            for ue in &self.users {
                let d = a.position.distance(&ue.position);
                let need = md.to_user(a.kind);
                if d < need {
                    out.push(format!("BS {} – UE {}: {d:.2} m < {need} m", a.id, ue.id));
                }
            }
        }
        out
    }

    pub fn channel(&self) -> Result<Channel> {
        Channel::new(self)
    }
}

/// Precomputed gains `h_b(x_m)`, stored per user.
#[derive(Clone, Debug)]
pub struct Channel {
    num_bs: usize,
    gains: Vec<f64>,
}

impl Channel {
    pub fn new(scenario: &NetworkScenario) -> Result<Self> {
        let num_bs = scenario.num_bs();
        let mut gains = Vec::with_capacity(num_bs * scenario.num_users());
        for ue in &scenario.users {
            for bs in &scenario.base_stations {
                gains.push(channel_gain(bs.kind, bs.position.distance(&ue.position))?);
            }
        }
        Ok(Self { num_bs, gains })
    }

    pub fn from_gains(num_bs: usize, gains: Vec<f64>) -> Self {
        assert_eq!(gains.len() % num_bs.max(1), 0);
        Self { num_bs, gains }
    }

    /// Gains from every BS to user `ue`.
    pub fn user(&self, ue: usize) -> &[f64] {
        &self.gains[ue * self.num_bs..(ue + 1) * self.num_bs]
    }

    pub fn gain(&self, bs: usize, ue: usize) -> f64 {
        self.gains[ue * self.num_bs + bs]
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        if self.num_bs == 0 {
            0
        } else {
            self.gains.len() / self.num_bs
        }
    }
}

/// Per-slot dynamic state of a base station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStationState {
    /// Transmit power P_b, watts.
    pub power: f64,
    /// ON/OFF indicator I_b.
    pub on: bool,
    /// Actual load ρ_b, clamped to [0,1].
    pub load: f64,
    /// Advertised estimate ρ̂_b.
    pub load_estimate: f64,
    pub served: Vec<usize>,
    pub overloaded: bool,
}

impl BaseStationState {
    pub fn new(power: f64, on: bool, load_estimate: f64) -> Self {
        Self { power, on, load: 0.0, load_estimate, served: Vec::new(), overloaded: false }
    }

    /// `P^Work · I`, the quantity other BSs see as interference next slot.
    pub fn effective_power(&self) -> f64 {
        if self.on {
            self.load * self.power
        } else {
            0.0
        }
    }
}

/// Interference environment for rate evaluation: last slot's effective
/// powers and the cluster label of every BS. Members of the serving BS's
/// cluster are orthogonal and do not interfere.
#[derive(Clone, Copy, Debug)]
pub struct Interference<'a> {
    pub lagged_work: &'a [f64],
    pub cluster_of: &'a [usize],
}

/// Downlink rate of a user served by `serving` at power `power`.
///
/// `gains` are the gains from every BS to this user.
pub fn ue_rate(
    bandwidth: f64,
    noise_power: f64,
    gains: &[f64],
    serving: usize,
    power: f64,
    on: bool,
    interference: &Interference<'_>,
) -> Result<f64> {
    if !on {
        return Err(Error::InvalidState(format!("BS {serving} is OFF and cannot serve")));
    }
    let own_cluster = interference.cluster_of[serving];
    let interfering: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(b, _)| b != serving && interference.cluster_of[b] != own_cluster)
        .map(|(b, h)| interference.lagged_work[b] * h)
        .sum();
    let sinr = power * gains[serving] / (interfering + noise_power);
    Ok(bandwidth * (1.0 + sinr).log2())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOutcome {
    pub load: f64,
    pub raw: f64,
    pub overloaded: bool,
}

/// Discrete fractional transfer time `Σ η/R` over `(traffic, rate)` pairs.
/// A zero rate contributes a full unit of load.
pub fn bs_load(demands: impl IntoIterator<Item = (f64, f64)>) -> LoadOutcome {
    let raw: f64 = demands
        .into_iter()
        .map(|(traffic, rate)| if rate > 0.0 { traffic / rate } else { 1.0 })
        .sum();
    LoadOutcome { load: raw.clamp(0.0, 1.0), raw, overloaded: raw > 1.0 }
}

/// Total power draw. `overhead` is the coordination increment δP^Base.
pub fn bs_power(spec: &BaseStationSpec, state: &BaseStationState, overhead: f64) -> f64 {
    let draw = if state.on {
        state.load * state.power / spec.amplifier_efficiency + spec.base_power
    } else {
        spec.sleep_fraction * spec.base_power
    };
    draw + overhead
}

/// Per-BS cost `λ P^Total / (P^Max/ϑ + P^Base) + μ ρ`.
pub fn bs_cost(spec: &BaseStationSpec, total_power: f64, load: f64, energy_weight: f64, load_weight: f64) -> f64 {
    energy_weight * total_power / spec.full_power_draw() + load_weight * load
}
