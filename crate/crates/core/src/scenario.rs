//! Random single-macrocell layouts and the radio parameters they carry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{dbm_to_watts, BaseStationSpec, BsKind, MinDistances, NetworkScenario, Point, UserSpec};

/// Placement attempts per node before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

/// Power figures of one BS class, as written in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationClass {
    pub max_power_dbm: f64,
    pub base_power_dbm: f64,
    pub amplifier_efficiency: f64,
    pub sleep_fraction: f64,
}

impl StationClass {
    pub fn macro_default() -> Self {
        Self { max_power_dbm: 46.0, base_power_dbm: 40.0, amplifier_efficiency: 0.2355, sleep_fraction: 0.5 }
    }

    pub fn small_default() -> Self {
        Self { max_power_dbm: 30.0, base_power_dbm: 33.0, amplifier_efficiency: 0.0542, sleep_fraction: 0.5 }
    }
}

/// χ = 4.78 dBm/m in W/m.
pub fn default_overhead_sensitivity() -> f64 {
    dbm_to_watts(4.78)
}

/// Radio and cost constants shared by every generated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub traffic_bps: f64,
    pub load_exponent: f64,
    pub energy_weight: f64,
    pub load_weight: f64,
    pub preferred_load: f64,
    pub cluster_interval: u64,
    /// χ in W/m.
    pub overhead_w_per_m: f64,
    /// χ in dBm/m; replaces `overhead_w_per_m` when present.
    pub overhead_dbm_per_m: Option<f64>,
    pub macro_station: StationClass,
    pub small_station: StationClass,
    pub min_distances: MinDistances,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            noise_density_dbm_per_hz: -174.0,
            traffic_bps: 180e3,
            load_exponent: 1.0,
            energy_weight: 0.5,
            load_weight: 0.5,
            preferred_load: 0.5,
            cluster_interval: 100,
            overhead_w_per_m: default_overhead_sensitivity(),
            overhead_dbm_per_m: None,
            macro_station: StationClass::macro_default(),
            small_station: StationClass::small_default(),
            min_distances: MinDistances::default(),
        }
    }
}

impl RadioConfig {
    pub fn overhead_sensitivity(&self) -> f64 {
        self.overhead_dbm_per_m.map_or(self.overhead_w_per_m, dbm_to_watts)
    }

    fn station(&self, id: usize, kind: BsKind, position: Point) -> BaseStationSpec {
        let class = match kind {
            BsKind::Macro => &self.macro_station,
            BsKind::Small => &self.small_station,
        };
        BaseStationSpec {
            id,
            kind,
            position,
            max_power: dbm_to_watts(class.max_power_dbm),
            base_power: dbm_to_watts(class.base_power_dbm),
            amplifier_efficiency: class.amplifier_efficiency,
            sleep_fraction: class.sleep_fraction,
            overhead_sensitivity: self.overhead_sensitivity(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryParams {
    pub num_sbs: usize,
    pub num_ues: usize,
    /// Macrocell disc radius, meters.
    pub radius_m: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self { num_sbs: 10, num_ues: 50, radius_m: 500.0 }
    }
}

fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    Point::new(r * phi.cos(), r * phi.sin())
}

/// One MBS at the origin, SBSs then UEs placed uniformly in the disc and
/// re-drawn until every minimum separation holds.
pub fn generate_scenario<R: Rng + ?Sized>(
    geometry: &GeometryParams,
    radio: &RadioConfig,
    seed: u64,
    rng: &mut R,
) -> Result<NetworkScenario> {
    let md = &radio.min_distances;
    let largest = md.macro_small.max(md.macro_user).max(md.small_small).max(md.small_user);
    if !(geometry.radius_m > largest) {
        return Err(Error::Generation(format!(
            "disc radius {} m must exceed the largest minimum distance {largest} m",
            geometry.radius_m
        )));
    }
    let mut stations = vec![radio.station(0, BsKind::Macro, Point::ORIGIN)];
    for id in 1..=geometry.num_sbs {
        let pos = (0..MAX_PLACEMENT_ATTEMPTS)
            .map(|_| uniform_in_disc(geometry.radius_m, rng))
            .find(|p| {
                stations.iter().all(|s: &BaseStationSpec| s.position.distance(p) >= md.between_stations(s.kind, BsKind::Small))
            })
            .ok_or_else(|| Error::Generation(format!("could not place SBS {id} after {MAX_PLACEMENT_ATTEMPTS} draws")))?;
        stations.push(radio.station(id, BsKind::Small, pos));
    }
    let mut users = Vec::with_capacity(geometry.num_ues);
    for id in 0..geometry.num_ues {
        let pos = (0..MAX_PLACEMENT_ATTEMPTS)
            .map(|_| uniform_in_disc(geometry.radius_m, rng))
            .find(|p| stations.iter().all(|s| s.position.distance(p) >= md.to_user(s.kind)))
            .ok_or_else(|| Error::Generation(format!("could not place UE {id} after {MAX_PLACEMENT_ATTEMPTS} draws")))?;
        users.push(UserSpec { id, position: pos, traffic: radio.traffic_bps });
    }
    let scenario = NetworkScenario {
        base_stations: stations,
        users,
        bandwidth: radio.bandwidth_hz,
        noise_density_dbm: radio.noise_density_dbm_per_hz,
        load_exponent: radio.load_exponent,
        energy_weight: radio.energy_weight,
        load_weight: radio.load_weight,
        preferred_load: radio.preferred_load,
        cluster_interval: radio.cluster_interval,
        min_distances: *md,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}
