use std::fmt;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{argmax, GridPosterior};
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::network::{Envelope, Network, PayloadKind};
use crate::nystrom::{comm_phase_length, sample_inducing, BroadcastModel, InducingModel};
use crate::rng::{self, Purpose, SimRng};

use super::{check_round_inputs, personalize, ClientState, CommIntent, Decision, Policy, PolicyKind, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Communicate,
    Exploit,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Self::Explore => "explore",
            Self::Communicate => "communicate",
            Self::Exploit => "exploit",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How long the communication phase lasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommPhaseRule {
    /// `ceil(9 (1 + 1/lambda) q0 max_i gamma_i)`, clipped to the horizon.
    #[default]
    Bound,
    /// `max_i |z_i|`: exactly long enough for every client to finish.
    Realized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScepeConfig {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub horizon: u64,
    /// Length of the exploration phase.
    pub explore_rounds: u64,
    pub q0: f64,
    pub comm_rule: CommPhaseRule,
    /// Seed of the inducing-point streams.
    pub seed: u64,
}

/// Sparse CEPE: a single exploration phase without communication, a
/// communication phase broadcasting Nystrom (inducing point, weight) pairs,
/// then a fixed personalized exploitation query.
#[derive(Debug, Clone)]
pub struct Scepe {
    cfg: ScepeConfig,
    grid: Arc<Grid>,
    states: Vec<ClientState>,
    own: Vec<GridPosterior>,
    rngs: Vec<SimRng>,
    inducing: Vec<InducingModel>,
    pairs: Vec<Vec<(Vec<f64>, f64)>>,
    local_best: Vec<usize>,
    /// `received[i][j]`: client `i`'s reconstruction of client `j`'s model.
    received: Vec<Vec<BroadcastModel>>,
    comm_len: Option<u64>,
    exploit_query: Option<Vec<usize>>,
    current: Option<u64>,
}

impl Scepe {
    pub fn new(cfg: ScepeConfig, grid: Arc<Grid>, alpha: &[f64]) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("clients", "need at least one client"));
        }
        if cfg.explore_rounds == 0 {
            return Err(invalid("explore_rounds", "S-CEPE needs at least one exploration round"));
        }
        if !(cfg.q0 >= 0.0) {
            return Err(invalid("q0", format!("must be non-negative, got {}", cfg.q0)));
        }
        let k = alpha.len();
        let own = (0..k)
            .map(|_| GridPosterior::new(cfg.kernel, cfg.lambda, grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        let rngs = (0..k).map(|i| rng::stream(cfg.seed, Purpose::Inducing, i)).collect();
        let received = (0..k).map(|_| (0..k).map(|_| BroadcastModel::new(cfg.kernel)).collect()).collect();
        Ok(Self {
            states: alpha.iter().enumerate().map(|(i, &a)| ClientState::new(i, a, k)).collect(),
            own,
            rngs,
            inducing: Vec::new(),
            pairs: Vec::new(),
            local_best: Vec::new(),
            received,
            comm_len: None,
            exploit_query: None,
            current: None,
            grid,
            cfg,
        })
    }

    pub fn config(&self) -> &ScepeConfig {
        &self.cfg
    }

    pub fn client(&self, i: usize) -> &ClientState {
        &self.states[i]
    }

    /// Client `i`'s exact posterior over its exploration data.
    pub fn own_posterior(&self, i: usize) -> &GridPosterior {
        &self.own[i]
    }

    /// Inducing models, available once exploration has ended.
    pub fn inducing_models(&self) -> &[InducingModel] {
        &self.inducing
    }

    /// Communication-phase length, known once exploration has ended.
    pub fn comm_phase_len(&self) -> Option<u64> {
        self.comm_len
    }

    pub fn received_model(&self, client: usize, peer: usize) -> &BroadcastModel {
        &self.received[client][peer]
    }

    /// Phase of round `t`. Rounds after exploration are reported as
    /// communication until the phase length is known.
    pub fn phase_at(&self, t: u64) -> Phase {
        if t <= self.cfg.explore_rounds {
            Phase::Explore
        } else if t <= self.cfg.explore_rounds + self.comm_len.unwrap_or(u64::MAX - self.cfg.explore_rounds) {
            Phase::Communicate
        } else {
            Phase::Exploit
        }
    }

    /// Query of client `i` in round `t`, which must lie in `phase`.
    pub fn query(&mut self, i: usize, phase: Phase, t: u64) -> Result<Decision> {
        if i >= self.states.len() {
            return Err(Error::UnknownClient(i));
        }
        let current = self.phase_at(t);
        if phase != current {
            return Err(Error::PhaseOrder {
                requested: phase.name(),
                current: current.name(),
            });
        }
        match phase {
            Phase::Explore => Ok(Decision::silent(self.own[i].max_variance_index())),
            Phase::Communicate => {
                let s = (t - self.cfg.explore_rounds) as usize;
                let intent = match self.pairs[i].get(s - 1) {
                    Some((z, w)) => CommIntent::UploadPair {
                        point: z.clone(),
                        weight: *w,
                    },
                    None => CommIntent::Silent,
                };
                Ok(Decision {
                    query: self.local_best[i],
                    intent,
                })
            }
            Phase::Exploit => {
                if self.exploit_query.is_none() {
                    self.exploit_query = Some(self.personalized_argmax());
                }
                Ok(Decision::silent(self.exploit_query.as_ref().expect("set above")[i]))
            }
        }
    }

    /// Personalized approximate mean of client `i` at every grid point, from
    /// the pairs delivered so far.
    pub fn personalized_approx_means(&self, i: usize) -> Vec<f64> {
        let k = self.states.len();
        let alpha = self.states[i].alpha;
        let models = &self.received[i];
        self.grid
            .points()
            .map(|x| {
                let own = models[i].mean(x);
                let sum: f64 = models.iter().map(|m| m.mean(x)).sum();
                personalize(alpha, own, sum, k)
            })
            .collect()
    }

    fn personalized_argmax(&self) -> Vec<usize> {
        (0..self.states.len())
            .map(|i| argmax(self.personalized_approx_means(i)))
            .collect()
    }

    /// Samples inducing sets, fits weights and fixes the phase length.
    fn finish_exploration(&mut self) -> Result<()> {
        let mut inducing = Vec::with_capacity(self.own.len());
        for (post, rng) in self.own.iter().zip(&mut self.rngs) {
            inducing.push(sample_inducing(post.gp(), self.cfg.q0, rng)?.fit_weights()?);
        }
        self.pairs = inducing.iter().map(|m| m.broadcast_pairs()).collect::<Result<_>>()?;
        self.local_best = self.own.iter().map(|p| argmax(p.means().iter().copied())).collect();
        let longest = inducing.iter().map(|m| m.len() as u64).max().unwrap_or(0);
        let remaining = self.cfg.horizon.saturating_sub(self.cfg.explore_rounds);
        let len = match self.cfg.comm_rule {
            CommPhaseRule::Bound => {
                let gamma = self.own.iter().map(|p| p.info_gain()).fold(0.0, f64::max);
                let n = comm_phase_length(self.cfg.q0, self.cfg.lambda, gamma);
                if n > remaining {
                    warn!("communication phase of {n} rounds clipped to the {remaining} remaining rounds");
                }
                n.min(remaining)
            }
            CommPhaseRule::Realized => longest.min(remaining),
        };
        if len < longest {
            warn!("communication phase of {len} rounds is shorter than the largest inducing set ({longest}); some pairs will not be sent");
        }
        self.inducing = inducing;
        self.comm_len = Some(len);
        Ok(())
    }
}

impl Policy for Scepe {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Scepe
    }

    fn clients(&self) -> usize {
        self.states.len()
    }

    fn select(&mut self, t: u64) -> Result<Vec<Decision>> {
        let phase = self.phase_at(t);
        self.current = Some(t);
        (0..self.states.len()).map(|i| self.query(i, phase, t)).collect()
    }

    fn update(&mut self, t: u64, decisions: &[Decision], rewards: &[f64], net: &mut Network) -> Result<()> {
        check_round_inputs(self.states.len(), decisions, rewards)?;
        match self.current.take() {
            Some(round) if round == t => {}
            Some(round) => return Err(Error::OutOfOrderRound { expected: round, got: t }),
            None => return Err(invalid("round", format!("update({t}) without a preceding select"))),
        }
        let phase = self.phase_at(t);
        let provenance = if phase == Phase::Explore { Provenance::Exploration } else { Provenance::Exploitation };
        for (state, (d, &y)) in self.states.iter_mut().zip(decisions.iter().zip(rewards)) {
            state.record(t, d.query, y, provenance);
        }
        match phase {
            Phase::Explore => {
                for (post, (d, &y)) in self.own.iter_mut().zip(decisions.iter().zip(rewards)) {
                    post.append(d.query, y)?;
                }
                if t == self.cfg.explore_rounds {
                    self.finish_exploration()?;
                }
            }
            Phase::Communicate => {
                let envelopes: Vec<Envelope> = decisions
                    .iter()
                    .enumerate()
                    .filter_map(|(i, d)| match &d.intent {
                        CommIntent::UploadPair { point, weight } => {
                            Some(Envelope::new(t, i, PayloadKind::InducingPair, point.clone(), *weight))
                        }
                        _ => None,
                    })
                    .collect();
                if envelopes.is_empty() {
                    return Ok(());
                }
                let delivery = net.broadcast_round(t, envelopes)?;
                for (i, models) in self.received.iter_mut().enumerate() {
                    for env in delivery.received_by(i) {
                        models[env.sender].push(env.point.clone(), env.value);
                    }
                }
            }
            Phase::Exploit => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::CostModel;
    use crate::policy::{Cepe, EpochSchedule};

    fn cfg(horizon: u64, explore: u64, q0: f64, rule: CommPhaseRule) -> ScepeConfig {
        ScepeConfig {
            kernel: KernelSpec::squared_exponential(0.25).unwrap(),
            lambda: 0.05,
            horizon,
            explore_rounds: explore,
            q0,
            comm_rule: rule,
            seed: 3,
        }
    }

    fn h(i: usize, x: &[f64]) -> f64 {
        (2.0 * x[0] + i as f64).sin() * (1.0 + x[1]) - (x[1] - 0.3 * i as f64).powi(2)
    }

    fn run(p: &mut dyn Policy, grid: &Grid, net: &mut Network, horizon: u64) -> Vec<Vec<Decision>> {
        let mut out = Vec::new();
        for t in 1..=horizon {
            let ds = p.select(t).unwrap();
            let ys: Vec<f64> = ds.iter().enumerate().map(|(i, d)| h(i, grid.point(d.query))).collect();
            p.update(t, &ds, &ys, net).unwrap();
            out.push(ds);
        }
        out
    }

    #[test]
    fn phases_partition_the_horizon() {
        let grid = Arc::new(Grid::uniform(2, 7).unwrap());
        let alpha = [0.3, 0.6, 0.9];
        let mut p = Scepe::new(cfg(60, 12, 2.0, CommPhaseRule::Realized), grid.clone(), &alpha).unwrap();
        let mut net = Network::new(3, CostModel::Upload);
        let rounds = run(&mut p, &grid, &mut net, 60);
        let phases: Vec<Phase> = (1..=60).map(|t| p.phase_at(t)).collect();
        let count = |ph| phases.iter().filter(|&&x| x == ph).count() as u64;
        let nc = p.comm_phase_len().unwrap();
        assert_eq!(count(Phase::Explore), 12);
        assert_eq!(count(Phase::Communicate), nc);
        assert_eq!(count(Phase::Explore) + count(Phase::Communicate) + count(Phase::Exploit), 60);
        assert_eq!(nc, p.inducing_models().iter().map(|m| m.len() as u64).max().unwrap());

        let sizes: u64 = p.inducing_models().iter().map(|m| m.len() as u64).sum();
        assert_eq!(net.ledger().total(), 3 * sizes);
        assert_eq!(net.ledger().by_kind(PayloadKind::InducingPair), net.ledger().total());

        for (t, ds) in rounds.iter().enumerate() {
            let t = t as u64 + 1;
            let talks = ds.iter().any(|d| d.intent != CommIntent::Silent);
            if talks {
                assert_eq!(p.phase_at(t), Phase::Communicate);
            }
        }
        let exploit: Vec<&Vec<Decision>> = rounds.iter().skip((12 + nc) as usize).collect();
        assert!(exploit.len() > 1);
        assert!(exploit.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn bound_rule_is_clipped_to_horizon() {
        let grid = Arc::new(Grid::uniform(2, 5).unwrap());
        let mut p = Scepe::new(cfg(30, 5, 10.0, CommPhaseRule::Bound), grid.clone(), &[0.5, 0.5]).unwrap();
        let mut net = Network::new(2, CostModel::Upload);
        run(&mut p, &grid, &mut net, 30);
        assert_eq!(p.comm_phase_len(), Some(25));
        assert!((1..=30).all(|t| p.phase_at(t) != Phase::Exploit));
    }

    #[test]
    fn reconstructions_match_holders() {
        let grid = Arc::new(Grid::uniform(2, 6).unwrap());
        let alpha = [0.2, 0.7];
        let mut p = Scepe::new(cfg(40, 10, 5.0, CommPhaseRule::Realized), grid.clone(), &alpha).unwrap();
        let mut net = Network::new(2, CostModel::Upload);
        run(&mut p, &grid, &mut net, 40);
        for i in 0..2 {
            for j in 0..2 {
                for x in grid.points() {
                    let a = p.received_model(i, j).mean(x);
                    let b = p.inducing_models()[j].approx_mean(x).unwrap();
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn full_inducing_sets_reproduce_cepe_choice() {
        let grid = Arc::new(Grid::uniform(2, 8).unwrap());
        let alpha = [0.25, 0.5, 0.8];
        let explore = 9;
        let horizon = explore + explore + 3;
        let mut s = Scepe::new(cfg(horizon, explore, f64::INFINITY, CommPhaseRule::Realized), grid.clone(), &alpha).unwrap();
        let mut net = Network::new(3, CostModel::Upload);
        let rounds = run(&mut s, &grid, &mut net, horizon);
        assert!(s.inducing_models().iter().all(|m| m.len() == explore as usize));

        let c = cfg(horizon, explore, 0.0, CommPhaseRule::Realized);
        let sched = EpochSchedule::from_fn(move |t| if t <= explore { t as f64 } else { explore as f64 });
        let mut cepe = Cepe::new(c.kernel, c.lambda, grid.clone(), &alpha, sched).unwrap();
        let mut net = Network::new(3, CostModel::Upload);
        let cepe_rounds = run(&mut cepe, &grid, &mut net, explore + 1);
        for i in 0..3 {
            let sm = s.personalized_approx_means(i);
            let cm = cepe.personalized_means(i).unwrap();
            for (a, b) in sm.iter().zip(&cm) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
            assert_eq!(rounds.last().unwrap()[i].query, cepe_rounds.last().unwrap()[i].query);
        }
    }

    #[test]
    fn out_of_order_phase_is_rejected() {
        let grid = Arc::new(Grid::uniform(2, 4).unwrap());
        let mut p = Scepe::new(cfg(20, 4, 1.0, CommPhaseRule::Realized), grid, &[0.5]).unwrap();
        assert!(matches!(p.query(0, Phase::Exploit, 1), Err(Error::PhaseOrder { .. })));
        assert!(matches!(p.query(0, Phase::Communicate, 2), Err(Error::PhaseOrder { .. })));
        assert!(p.query(0, Phase::Explore, 1).is_ok());
    }

    #[test]
    fn empty_inducing_sets_exploit_prior() {
        let grid = Arc::new(Grid::uniform(2, 4).unwrap());
        let mut p = Scepe::new(cfg(12, 4, 0.0, CommPhaseRule::Realized), grid.clone(), &[0.5, 0.5]).unwrap();
        let mut net = Network::new(2, CostModel::Upload);
        let rounds = run(&mut p, &grid, &mut net, 12);
        assert_eq!(p.comm_phase_len(), Some(0));
        assert_eq!(net.ledger().total(), 0);
        assert!(rounds[4..].iter().all(|ds| ds.iter().all(|d| d.query == 0)));
    }
}
