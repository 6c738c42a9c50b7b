//! Run configuration, per-run metrics, sweeps and their output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::network::{BsKind, NetworkScenario};
use crate::scenario::{generate_scenario, GeometryParams, RadioConfig};
use crate::sim::{EpochRecord, SimConfig, SlotOutcome, Strategy, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub slots: u64,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { slots: 50_000, seeds: (0..20).collect(), strategies: Strategy::ALL.to_vec(), threads: 0 }
    }
}

/// Values swept on top of the base configuration. An empty axis keeps the
/// base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub num_ues: Vec<usize>,
    pub range_m: Vec<f64>,
    pub theta: Vec<f64>,
    /// χ, W/m.
    pub chi: Vec<f64>,
}

/// Everything a `simulate` or `sweep` invocation needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub radio: RadioConfig,
    pub geometry: GeometryParams,
    pub sim: SimConfig,
    pub run: RunSettings,
    pub sweep: SweepAxes,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.slots == 0 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.run.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        self.sim.validate()
    }

    /// Cross product of the sweep axes applied to this configuration.
    pub fn cells(&self) -> Vec<Cell> {
        fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &num_ues in &axis(&self.sweep.num_ues, self.geometry.num_ues) {
            for &range_m in &axis(&self.sweep.range_m, self.sim.similarity.range) {
                for &theta in &axis(&self.sweep.theta, self.sim.similarity.theta) {
                    for &chi in &axis(&self.sweep.chi, self.radio.overhead_sensitivity()) {
                        out.push(Cell { num_sbs: self.geometry.num_sbs, num_ues, range_m, theta, chi });
                    }
                }
            }
        }
        out
    }

    /// Base configuration with one cell's values substituted.
    pub fn for_cell(&self, cell: &Cell) -> RunConfig {
        let mut cfg = self.clone();
        cfg.geometry.num_ues = cell.num_ues;
        cfg.geometry.num_sbs = cell.num_sbs;
        cfg.sim.similarity.range = cell.range_m;
        cfg.sim.similarity.theta = cell.theta;
        cfg.radio.overhead_w_per_m = cell.chi;
        cfg.radio.overhead_dbm_per_m = None;
        cfg
    }

    /// Layout for `seed`; identical for every strategy.
    pub fn scenario(&self, seed: u64) -> Result<NetworkScenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_scenario(&self.geometry, &self.radio, seed, &mut rng)
    }
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub num_sbs: usize,
    pub num_ues: usize,
    pub range_m: f64,
    pub theta: f64,
    pub chi: f64,
}

impl Cell {
    fn key(&self) -> String {
        format!("sbs={} ues={} range={} theta={} chi={}", self.num_sbs, self.num_ues, self.range_m, self.theta, self.chi)
    }
}

/// Averages of one run over its measurement window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub slots: u64,
    /// First slot of the window; the final half of the run.
    pub window_start: u64,
    pub avg_cost: f64,
    /// Watts per BS.
    pub avg_energy: f64,
    pub avg_load: f64,
    /// Share of all BSs that are OFF.
    pub off_fraction: f64,
    /// Share of SBSs that are OFF.
    pub off_fraction_sbs: f64,
    pub unserved_fraction: f64,
    pub overload_fraction: f64,
    pub mean_clusters: f64,
    pub mean_cluster_size: f64,
    /// Window mean of P^Total per BS.
    pub bs_energy: Vec<f64>,
    /// Window mean of ρ per BS.
    pub bs_load: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
}

/// Accumulates slot outcomes inside the measurement window.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    window_start: u64,
    slots: u64,
    cost: f64,
    energy: Vec<f64>,
    load: Vec<f64>,
    off: f64,
    off_small: f64,
    unserved: f64,
    overloaded: f64,
    is_small: Vec<bool>,
    num_users: usize,
}

impl MetricsAccumulator {
    pub fn new(scenario: &NetworkScenario, total_slots: u64) -> Self {
        let n = scenario.num_bs();
        Self {
            window_start: total_slots / 2,
            slots: 0,
            cost: 0.0,
            energy: vec![0.0; n],
            load: vec![0.0; n],
            off: 0.0,
            off_small: 0.0,
            unserved: 0.0,
            overloaded: 0.0,
            is_small: scenario.base_stations.iter().map(|b| b.kind == BsKind::Small).collect(),
            num_users: scenario.num_users(),
        }
    }

    pub fn observe(&mut self, o: &SlotOutcome) {
        if o.slot < self.window_start {
            return;
        }
        let n = o.cost.len() as f64;
        self.slots += 1;
        self.cost += o.cost.iter().sum::<f64>() / n;
        for b in 0..o.cost.len() {
            self.energy[b] += o.power[b];
            self.load[b] += o.load[b];
        }
        let off = o.on.iter().filter(|on| !**on).count() as f64;
        self.off += off / n;
        let small = self.is_small.iter().filter(|s| **s).count();
        if small > 0 {
            let small_off = o.on.iter().zip(&self.is_small).filter(|(on, s)| **s && !**on).count();
            self.off_small += small_off as f64 / small as f64;
        }
        if self.num_users > 0 {
            self.unserved += o.unserved as f64 / self.num_users as f64;
        }
        self.overloaded += o.overloaded.iter().filter(|v| **v).count() as f64 / n;
    }

    pub fn finish(self, strategy: Strategy, seed: u64, total_slots: u64, epochs: Vec<EpochRecord>) -> MetricsRecord {
        let k = self.slots.max(1) as f64;
        let bs_energy: Vec<f64> = self.energy.iter().map(|e| e / k).collect();
        let bs_load: Vec<f64> = self.load.iter().map(|l| l / k).collect();
        let n = bs_energy.len().max(1) as f64;
        let (mean_clusters, mean_cluster_size) = if epochs.is_empty() {
            (bs_energy.len() as f64, 1.0)
        } else {
            let e = epochs.len() as f64;
            (
                epochs.iter().map(|r| r.clusters as f64).sum::<f64>() / e,
                epochs.iter().map(|r| r.mean_size).sum::<f64>() / e,
            )
        };
        MetricsRecord {
            strategy,
            seed,
            slots: total_slots,
            window_start: self.window_start,
            avg_cost: self.cost / k,
            avg_energy: bs_energy.iter().sum::<f64>() / n,
            avg_load: bs_load.iter().sum::<f64>() / n,
            off_fraction: self.off / k,
            off_fraction_sbs: self.off_small / k,
            unserved_fraction: self.unserved / k,
            overload_fraction: self.overloaded / k,
            mean_clusters,
            mean_cluster_size,
            bs_energy,
            bs_load,
            epochs,
        }
    }
}

/// Simulates one strategy on one layout. `trace` sees every slot.
pub fn run_single(
    scenario: NetworkScenario,
    sim: &SimConfig,
    strategy: Strategy,
    slots: u64,
    seed: u64,
    mut trace: impl FnMut(&SlotOutcome),
) -> Result<MetricsRecord> {
    let mut acc = MetricsAccumulator::new(&scenario, slots);
    let mut world = World::new(scenario, sim.clone(), strategy, seed ^ 0x5eed_5eed)?;
    for _ in 0..slots {
        let o = world.step()?;
        acc.observe(&o);
        trace(&o);
    }
    Ok(acc.finish(strategy, seed, slots, world.epochs().to_vec()))
}

/// Outcome of one sweep job.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub cell: Cell,
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: std::result::Result<MetricsRecord, String>,
}

/// Mean and spread of a metric over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Half-width of the two-sided 95% Student-t interval.
    pub ci95: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, ci95: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std: 0.0, ci95: f64::INFINITY, n };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
        Self { mean, std, ci95: t * std / (n as f64).sqrt(), n }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: Cell,
    pub strategy: Strategy,
    pub runs: usize,
    pub failures: usize,
    pub cost: Stat,
    pub energy: Stat,
    pub load: Stat,
    pub off_fraction_sbs: Stat,
    pub unserved_fraction: Stat,
    pub clusters: Stat,
    pub cluster_size: Stat,
}

pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        let order = Strategy::ALL.iter().position(|s| *s == r.strategy).unwrap_or(usize::MAX);
        groups.entry((r.cell.key(), order)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|runs| {
            let ok: Vec<&MetricsRecord> = runs.iter().filter_map(|r| r.metrics.as_ref().ok()).collect();
            let stat = |f: fn(&MetricsRecord) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            SummaryRow {
                cell: runs[0].cell,
                strategy: runs[0].strategy,
                runs: runs.len(),
                failures: runs.len() - ok.len(),
                cost: stat(|m| m.avg_cost),
                energy: stat(|m| m.avg_energy),
                load: stat(|m| m.avg_load),
                off_fraction_sbs: stat(|m| m.off_fraction_sbs),
                unserved_fraction: stat(|m| m.unserved_fraction),
                clusters: stat(|m| m.mean_clusters),
                cluster_size: stat(|m| m.mean_cluster_size),
            }
        })
        .collect()
}

/// Every (cell, strategy, seed) job of the configuration, run on a bounded
/// worker pool. Failures are recorded per job.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for cell in config.cells() {
        for &strategy in &config.run.strategies {
            for &seed in &config.run.seeds {
                jobs.push((cell, strategy, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, strategy, seed)| {
                let cfg = config.for_cell(&cell);
                let metrics = cfg
                    .scenario(seed)
                    .and_then(|sc| run_single(sc, &cfg.sim, strategy, cfg.run.slots, seed, |_| {}))
                    .map_err(|e| e.to_string());
                RunResult { cell, strategy, seed, metrics }
            })
            .collect()
    });
    Ok(results)
}

#[derive(Serialize)]
struct RunRow<'a> {
    strategy: &'a str,
    seed: u64,
    num_sbs: usize,
    num_ues: usize,
    range_m: f64,
    theta: f64,
    chi: f64,
    slots: u64,
    avg_cost: Option<f64>,
    avg_energy_w: Option<f64>,
    avg_load: Option<f64>,
    off_fraction: Option<f64>,
    off_fraction_sbs: Option<f64>,
    unserved_fraction: Option<f64>,
    overload_fraction: Option<f64>,
    mean_clusters: Option<f64>,
    mean_cluster_size: Option<f64>,
    error: &'a str,
}

#[derive(Serialize)]
struct SampleRow<'a> {
    strategy: &'a str,
    seed: u64,
    num_ues: usize,
    range_m: f64,
    theta: f64,
    chi: f64,
    bs: usize,
    value: f64,
}

#[derive(Serialize)]
struct ClusterRow<'a> {
    strategy: &'a str,
    seed: u64,
    num_ues: usize,
    range_m: f64,
    theta: f64,
    chi: f64,
    slot: u64,
    clusters: usize,
    mean_size: f64,
    max_size: usize,
    assignment: String,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `runs.csv`, `summary.json`, `cdf_energy.csv`, `cdf_load.csv` and
/// `clusters.csv` into `dir`.
pub fn write_outputs(dir: &Path, results: &[RunResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut runs = csv::Writer::from_path(dir.join("runs.csv")).map_err(csv_err)?;
    let mut energy = csv::Writer::from_path(dir.join("cdf_energy.csv")).map_err(csv_err)?;
    let mut load = csv::Writer::from_path(dir.join("cdf_load.csv")).map_err(csv_err)?;
    let mut clusters = csv::Writer::from_path(dir.join("clusters.csv")).map_err(csv_err)?;
    for r in results {
        let c = &r.cell;
        let m = r.metrics.as_ref().ok();
        let f = |g: fn(&MetricsRecord) -> f64| m.map(g);
        runs.serialize(RunRow {
            strategy: r.strategy.name(),
            seed: r.seed,
            num_sbs: c.num_sbs,
            num_ues: c.num_ues,
            range_m: c.range_m,
            theta: c.theta,
            chi: c.chi,
            slots: m.map_or(0, |m| m.slots),
            avg_cost: f(|m| m.avg_cost),
            avg_energy_w: f(|m| m.avg_energy),
            avg_load: f(|m| m.avg_load),
            off_fraction: f(|m| m.off_fraction),
            off_fraction_sbs: f(|m| m.off_fraction_sbs),
            unserved_fraction: f(|m| m.unserved_fraction),
            overload_fraction: f(|m| m.overload_fraction),
            mean_clusters: f(|m| m.mean_clusters),
            mean_cluster_size: f(|m| m.mean_cluster_size),
            error: r.metrics.as_ref().err().map_or("", String::as_str),
        })
        .map_err(csv_err)?;
        let Some(m) = m else { continue };
        for (writer, values) in [(&mut energy, &m.bs_energy), (&mut load, &m.bs_load)] {
            for (bs, &value) in values.iter().enumerate() {
                writer
                    .serialize(SampleRow {
                        strategy: r.strategy.name(),
                        seed: r.seed,
                        num_ues: c.num_ues,
                        range_m: c.range_m,
                        theta: c.theta,
                        chi: c.chi,
                        bs,
                        value,
                    })
                    .map_err(csv_err)?;
            }
        }
        for e in &m.epochs {
            clusters
                .serialize(ClusterRow {
                    strategy: r.strategy.name(),
                    seed: r.seed,
                    num_ues: c.num_ues,
                    range_m: c.range_m,
                    theta: c.theta,
                    chi: c.chi,
                    slot: e.slot,
                    clusters: e.clusters,
                    mean_size: e.mean_size,
                    max_size: e.max_size,
                    assignment: e.assignment.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "),
                })
                .map_err(csv_err)?;
        }
    }
    for w in [&mut runs, &mut energy, &mut load, &mut clusters] {
        w.flush()?;
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summarize(results))?)?;
    Ok(())
}
