//! Slot-by-slot simulation: action draws, association, intra-cluster
//! scheduling, measurement, learner and estimator updates, and periodic
//! re-clustering.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::{associate_ues, Anchor, LoadEstimator, StepSchedule};
use crate::clustering::{cluster, ClusterMethod, ClusterSet, ClusteringConfig};
use crate::coordination::{overhead_cost, schedule, ScheduleProblem};
use crate::error::{Error, Result};
use crate::learning::{ActionSpace, Learner, LearningRates, MemberOptions};
use crate::network::{
    bs_cost, bs_load, bs_power, ue_rate, BaseStationState, BsKind, Channel, Interference, NetworkScenario, Point,
};
use crate::similarity::{build_neighborhood, SimilarityGraph, SimilarityParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// Every BS ON at full power.
    Classical,
    /// Each controllable BS flips a fair coin every slot.
    RandomOnOff,
    /// Regret learning, one player per cluster.
    Learning(ClusterMethod),
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Classical,
        Strategy::RandomOnOff,
        Strategy::Learning(ClusterMethod::None),
        Strategy::Learning(ClusterMethod::KMeans),
        Strategy::Learning(ClusterMethod::Spectral),
        Strategy::Learning(ClusterMethod::P2p),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Classical => "classical",
            Strategy::RandomOnOff => "random-onoff",
            Strategy::Learning(ClusterMethod::None) => "learning-noclusters",
            Strategy::Learning(ClusterMethod::KMeans) => "learning-kmeans",
            Strategy::Learning(ClusterMethod::Spectral) => "learning-spectral",
            Strategy::Learning(ClusterMethod::P2p) => "learning-p2p",
        }
    }

    pub fn is_learning(&self) -> bool {
        matches!(self, Strategy::Learning(_))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.name().to_string()
    }
}

/// Which clustered stations pay the coordination overhead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverheadCharging {
    OnAndOff,
    OnOnly,
}

/// Algorithm knobs that are not part of the network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub similarity: SimilarityParams,
    pub clustering: ClusteringConfig,
    /// κ.
    pub kappa: f64,
    pub rates: LearningRates,
    /// Exponent of the load-estimator step `1/t^φ`.
    pub estimator_exponent: f64,
    /// Transmit power levels per BS, `ℓ·P^Max/L`.
    pub power_levels: usize,
    pub mbs_controllable: bool,
    pub overhead_charging: OverheadCharging,
    /// Factor applied to cluster utilities before they reach the learner.
    pub utility_scale: f64,
    /// Keep a learner when its cluster survives re-clustering unchanged.
    pub keep_unchanged_learners: bool,
    /// When false, learning clusters only have the all-ON action.
    pub allow_switching: bool,
    /// ON probability per slot for the random baseline.
    pub random_on_probability: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityParams::default(),
            clustering: ClusteringConfig::default(),
            kappa: 10.0,
            rates: LearningRates::default(),
            estimator_exponent: LoadEstimator::DEFAULT_EXPONENT,
            power_levels: 1,
            mbs_controllable: false,
            overhead_charging: OverheadCharging::OnAndOff,
            utility_scale: 1.0,
            keep_unchanged_learners: true,
            allow_switching: true,
            random_on_probability: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let sp = &self.similarity;
        if sp.range < 0.0 || !(sp.sigma_distance > 0.0) || !(sp.sigma_load > 0.0) || !(0.0..=1.0).contains(&sp.theta) {
            return Err(Error::Config("similarity needs ε_d ≥ 0, σ_d > 0, σ_l > 0, θ ∈ [0,1]".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("κ must be positive".into()));
        }
        if ![1, 2, 4].contains(&self.power_levels) {
            return Err(Error::Config("power levels must be 1, 2 or 4".into()));
        }
        if !(self.utility_scale > 0.0) {
            return Err(Error::Config("utility scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.random_on_probability) {
            return Err(Error::Config("random ON probability must lie in [0,1]".into()));
        }
        if self.clustering.max_cluster_size == 0 {
            return Err(Error::Config("maximum cluster size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Negated cluster cost, with a `μ` penalty per user left unserved.
pub fn cluster_utility(member_costs: impl IntoIterator<Item = f64>, unserved: usize, load_weight: f64) -> f64 {
    -(member_costs.into_iter().sum::<f64>() + load_weight * unserved as f64)
}

/// Everything measured in one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: u64,
    /// Action index per cluster; empty for the baselines.
    pub actions: Vec<usize>,
    /// Utility per cluster before scaling.
    pub utilities: Vec<f64>,
    pub load: Vec<f64>,
    /// P^Total per BS, watts.
    pub power: Vec<f64>,
    pub on: Vec<bool>,
    pub cost: Vec<f64>,
    pub overloaded: Vec<bool>,
    pub unserved: usize,
    pub reclustered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub slot: u64,
    pub clusters: usize,
    pub mean_size: f64,
    pub max_size: usize,
    /// Cluster index of every BS.
    pub assignment: Vec<usize>,
}

/// Full simulation state, advanced one slot at a time.
#[derive(Clone, Debug)]
pub struct World {
    scenario: NetworkScenario,
    channel: Channel,
    config: SimConfig,
    strategy: Strategy,
    positions: Vec<Point>,
    neighborhood_sizes: Vec<usize>,
    member_options: Vec<MemberOptions>,
    states: Vec<BaseStationState>,
    estimator: LoadEstimator,
    lagged_work: Vec<f64>,
    clusters: ClusterSet,
    spaces: Vec<ActionSpace>,
    learners: Vec<Learner>,
    overhead: Vec<f64>,
    epochs: Vec<EpochRecord>,
    rng: ChaCha8Rng,
    slot: u64,
}

impl World {
    pub fn new(scenario: NetworkScenario, config: SimConfig, strategy: Strategy, seed: u64) -> Result<Self> {
        scenario.validate()?;
        config.validate()?;
        let channel = scenario.channel()?;
        let n = scenario.num_bs();
        let positions: Vec<Point> = scenario.base_stations.iter().map(|b| b.position).collect();
        let nb = build_neighborhood(&positions, config.similarity.range);
        let neighborhood_sizes = (0..n).map(|b| nb.size(b)).collect();
        let member_options = scenario
            .base_stations
            .iter()
            .map(|b| MemberOptions {
                max_power: b.max_power,
                controllable: b.kind == BsKind::Small || config.mbs_controllable,
            })
            .collect();
        let rho_pref = scenario.preferred_load;
        let states = scenario.base_stations.iter().map(|b| BaseStationState::new(b.max_power, true, rho_pref)).collect();
        let lagged_work = scenario.base_stations.iter().map(|b| rho_pref * b.max_power).collect();
        let estimator = LoadEstimator::new(n, rho_pref, StepSchedule::new(config.estimator_exponent));
        let clusters = ClusterSet::singletons(&vec![rho_pref; n], 0);
        Ok(Self {
            scenario,
            channel,
            config,
            strategy,
            positions,
            neighborhood_sizes,
            member_options,
            states,
            estimator,
            lagged_work,
            clusters,
            spaces: Vec::new(),
            learners: Vec::new(),
            overhead: vec![0.0; n],
            epochs: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            slot: 0,
        })
    }

    pub fn scenario(&self) -> &NetworkScenario {
        &self.scenario
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn states(&self) -> &[BaseStationState] {
        &self.states
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn learners(&self) -> &[Learner] {
        &self.learners
    }

    pub fn action_spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn load_estimates(&self) -> &[f64] {
        self.estimator.estimates()
    }

    /// δP^Base currently charged to each BS when it pays overhead.
    pub fn overhead(&self) -> &[f64] {
        &self.overhead
    }

    fn recluster(&mut self) -> Result<()> {
        let Strategy::Learning(method) = self.strategy else {
            return Ok(());
        };
        let loads = self.estimator.estimates().to_vec();
        let next = match method {
            ClusterMethod::None => ClusterSet::singletons(&loads, self.slot),
            m => {
                let graph = SimilarityGraph::build(&self.positions, &loads, self.config.similarity);
                let cfg = ClusteringConfig { method: m, ..self.config.clustering.clone() };
                cluster(&graph, &loads, &cfg, self.slot, &mut self.rng)?
            }
        };

        let mut spaces = Vec::with_capacity(next.len());
        let mut learners = Vec::with_capacity(next.len());
        for cl in next.clusters() {
            let options: Vec<MemberOptions> = cl.members.iter().map(|&b| self.member_options[b]).collect();
            let space = if self.config.allow_switching {
                ActionSpace::build(cl.members.clone(), &options, self.config.power_levels)
            } else {
                ActionSpace::always_on(cl.members.clone(), &options)
            };
            let kept = if self.config.keep_unchanged_learners {
                self.spaces.iter().position(|s| *s == space).map(|i| self.learners[i].clone())
            } else {
                None
            };
            learners.push(kept.unwrap_or_else(|| Learner::new(space.len(), self.config.kappa, self.config.rates)));
            spaces.push(space);
        }

        for b in 0..self.overhead.len() {
            let clustered = next.cluster(next.cluster_of()[b]).len() >= 2;
            self.overhead[b] = if clustered {
                let chi = self.scenario.base_stations[b].overhead_sensitivity;
                overhead_cost(self.neighborhood_sizes[b], self.config.similarity.range, chi)
            } else {
                0.0
            };
        }
        self.epochs.push(EpochRecord {
            slot: self.slot,
            clusters: next.len(),
            mean_size: next.mean_size(),
            max_size: next.max_size(),
            assignment: next.cluster_of().to_vec(),
        });
        self.clusters = next;
        self.spaces = spaces;
        self.learners = learners;
        Ok(())
    }

    fn choose_actions(&mut self) -> Vec<usize> {
        match self.strategy {
            Strategy::Classical => {
                for (s, b) in self.states.iter_mut().zip(&self.scenario.base_stations) {
                    s.on = true;
                    s.power = b.max_power;
                }
                Vec::new()
            }
            Strategy::RandomOnOff => {
                let p = self.config.random_on_probability;
                for (b, s) in self.states.iter_mut().enumerate() {
                    s.power = self.scenario.base_stations[b].max_power;
                    s.on = !self.member_options[b].controllable || self.rng.gen::<f64>() < p;
                }
                Vec::new()
            }
            Strategy::Learning(_) => {
                let mut chosen = Vec::with_capacity(self.learners.len());
                for (space, learner) in self.spaces.iter().zip(&self.learners) {
                    let j = learner.sample(&mut self.rng);
                    for (&b, a) in space.members().iter().zip(space.action(j)) {
                        self.states[b].on = a.on;
                        self.states[b].power = a.power;
                    }
                    chosen.push(j);
                }
                chosen
            }
        }
    }

    fn rate(&self, bs: usize, ue: usize) -> Result<f64> {
        let interference = Interference { lagged_work: &self.lagged_work, cluster_of: self.clusters.cluster_of() };
        let s = &self.states[bs];
        ue_rate(
            self.scenario.bandwidth,
            self.scenario.noise_power(),
            self.channel.user(ue),
            bs,
            s.power,
            s.on,
            &interference,
        )
    }

    /// Runs one slot and returns its measurements.
    pub fn step(&mut self) -> Result<SlotOutcome> {
        let reclustered = self.slot % self.scenario.cluster_interval == 0;
        if reclustered {
            self.recluster()?;
        }
        let actions = self.choose_actions();

        for (s, &est) in self.states.iter_mut().zip(self.estimator.estimates()) {
            s.load_estimate = est;
        }
        let anchors = associate_ues(&self.channel, &self.states, self.scenario.load_exponent);

        // intra-cluster offloading
        let num_clusters = self.clusters.len();
        let mut anchored: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
        let mut unserved = vec![0usize; num_clusters];
        let mut serving: Vec<Option<usize>> = vec![None; anchors.len()];
        for (m, a) in anchors.iter().enumerate() {
            let c = self.clusters.cluster_of()[a.bs()];
            match a {
                Anchor::Served(b) => {
                    serving[m] = Some(*b);
                    anchored[c].push(m);
                }
                Anchor::Unserved { .. } => unserved[c] += 1,
            }
        }
        for (c, users) in anchored.into_iter().enumerate() {
            let on_members: Vec<usize> =
                self.clusters.cluster(c).members.iter().copied().filter(|&b| self.states[b].on).collect();
            if users.is_empty() || on_members.len() < 2 {
                continue;
            }
            // members in `on_members` are ON, so the rate is always defined
            let problem = ScheduleProblem::build(
                on_members,
                users,
                |m| self.scenario.users[m].traffic,
                |b, m| self.rate(b, m).unwrap_or(0.0),
            );
            for (m, b) in schedule(&problem) {
                serving[m] = Some(b);
            }
        }

        // measurement
        let n = self.states.len();
        let mut demands: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
        for s in &mut self.states {
            s.served.clear();
        }
        for (m, srv) in serving.iter().enumerate() {
            if let Some(b) = *srv {
                let r = self.rate(b, m)?;
                demands[b].push((self.scenario.users[m].traffic, r));
                self.states[b].served.push(m);
            }
        }
        let mut load = vec![0.0; n];
        let mut power = vec![0.0; n];
        let mut cost = vec![0.0; n];
        let mut overloaded = vec![false; n];
        let mut on = vec![false; n];
        for b in 0..n {
            let outcome = bs_load(demands[b].iter().copied());
            let spec = &self.scenario.base_stations[b];
            let s = &mut self.states[b];
            s.load = if s.on { outcome.load } else { 0.0 };
            s.overloaded = outcome.overloaded;
            let overhead = match self.config.overhead_charging {
                OverheadCharging::OnOnly if !s.on => 0.0,
                _ => self.overhead[b],
            };
            power[b] = bs_power(spec, s, overhead);
            cost[b] = bs_cost(spec, power[b], s.load, self.scenario.energy_weight, self.scenario.load_weight);
            load[b] = s.load;
            overloaded[b] = s.overloaded;
            on[b] = s.on;
        }

        let utilities: Vec<f64> = (0..num_clusters)
            .map(|c| {
                let members = &self.clusters.cluster(c).members;
                cluster_utility(members.iter().map(|&b| cost[b]), unserved[c], self.scenario.load_weight)
            })
            .collect();
        if self.strategy.is_learning() {
            for ((learner, &j), &u) in self.learners.iter_mut().zip(&actions).zip(&utilities) {
                learner.update(j, self.config.utility_scale * u);
            }
        }

        self.estimator.observe(&load);
        for (w, s) in self.lagged_work.iter_mut().zip(&self.states) {
            *w = s.effective_power();
        }
        let outcome = SlotOutcome {
            slot: self.slot,
            actions,
            utilities: if self.strategy.is_learning() { utilities } else { Vec::new() },
            load,
            power,
            on,
            cost,
            overloaded,
            unserved: unserved.iter().sum(),
            reclustered: reclustered && self.strategy.is_learning(),
        };
        self.slot += 1;
        Ok(outcome)
    }
}
