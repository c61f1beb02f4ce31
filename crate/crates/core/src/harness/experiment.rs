use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{CommLedger, Network};
use crate::policy::{Baseline, Cepe, Policy, PolicyKind, Scepe, ScepeConfig};
use crate::problem::ProblemInstance;
use crate::rng::{self, Purpose};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRow {
    pub round: u64,
    pub client: usize,
    pub query_index: usize,
    pub reward: f64,
    pub inst_regret: f64,
}

/// Policy-specific quantities reported alongside a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunDetails {
    /// CEPE: number of exploration rounds `|A(T)|`.
    pub exploration_rounds: Option<u64>,
    /// S-CEPE: inducing-set size of every client.
    pub inducing_sizes: Option<Vec<usize>>,
    /// S-CEPE: communication-phase length.
    pub comm_phase: Option<u64>,
    /// S-CEPE: largest running information gain at the end of exploration.
    pub max_info_gain: Option<f64>,
}

/// One simulated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: PolicyKind,
    pub seed: u64,
    pub horizon: u64,
    pub clients: usize,
    /// Round-major, client-minor.
    pub rows: Vec<RoundRow>,
    /// Total regret over all clients up to the end of each round.
    pub cum_regret: Vec<f64>,
    /// Ledger total at the end of each round.
    pub comm: Vec<u64>,
    pub ledger: CommLedger,
    pub details: RunDetails,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn comm_total(&self) -> u64 {
        self.ledger.total()
    }

    /// Query trace of each client.
    pub fn traces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(self.horizon as usize); self.clients];
        for r in &self.rows {
            out[r.client].push(r.query_index);
        }
        out
    }
}

/// Monte Carlo runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub mean_curve: Vec<f64>,
    pub stderr_curve: Vec<f64>,
}

impl ExperimentRecord {
    pub fn policy(&self) -> PolicyKind {
        self.config.policy
    }

    pub fn final_regret_mean(&self) -> f64 {
        self.mean_curve.last().copied().unwrap_or(0.0)
    }

    pub fn final_regret_stderr(&self) -> f64 {
        self.stderr_curve.last().copied().unwrap_or(0.0)
    }

    /// Mean communication total across runs.
    pub fn comm_mean(&self) -> f64 {
        self.runs.iter().map(|r| r.comm_total() as f64).sum::<f64>() / self.runs.len() as f64
    }
}

/// Sample mean and standard error (`s / sqrt(n)`, zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<ProblemInstance> {
    ProblemInstance::generate(&cfg.instance_spec(), seed)
}

pub fn build_policy(cfg: &ExperimentConfig, inst: &ProblemInstance, seed: u64) -> Result<Box<dyn Policy>> {
    let kernel = cfg.kernel.build()?;
    let grid = inst.grid().clone();
    let alpha = inst.alpha();
    Ok(match cfg.policy {
        PolicyKind::Cepe => Box::new(Cepe::new(kernel, cfg.lambda, grid, alpha, cfg.epoch_schedule()?)?),
        PolicyKind::Scepe => Box::new(build_scepe(cfg, inst, seed)?),
        _ => {
            let acq = cfg.acquisition().expect("baseline policy");
            Box::new(Baseline::new(acq, kernel, cfg.lambda, grid, alpha)?)
        }
    })
}

/// Runs `policy` on `inst` for `cfg.horizon` rounds with the noise streams of
/// `seed`.
pub fn simulate(policy: &mut dyn Policy, inst: &ProblemInstance, cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let k = inst.clients();
    if policy.clients() != k {
        return Err(Error::LengthMismatch(format!(
            "policy has {} clients, instance has {k}",
            policy.clients()
        )));
    }
    let mut noise: Vec<_> = (0..k).map(|i| rng::stream(seed, Purpose::Noise, i)).collect();
    let mut net = Network::new(k, cfg.cost_model);
    let mut rows = Vec::with_capacity(cfg.horizon as usize * k);
    let mut cum_regret = Vec::with_capacity(cfg.horizon as usize);
    let mut comm = Vec::with_capacity(cfg.horizon as usize);
    let mut total = 0.0;
    for t in 1..=cfg.horizon {
        let decisions = policy.select(t)?;
        let rewards: Vec<f64> = decisions
            .iter()
            .zip(&mut noise)
            .enumerate()
            .map(|(i, (d, rng))| inst.observe_index(i, d.query, rng))
            .collect();
        for (i, (d, &y)) in decisions.iter().zip(&rewards).enumerate() {
            let r = inst.instant_regret(i, d.query);
            total += r;
            rows.push(RoundRow {
                round: t,
                client: i,
                query_index: d.query,
                reward: y,
                inst_regret: r,
            });
        }
        policy.update(t, &decisions, &rewards, &mut net)?;
        cum_regret.push(total);
        comm.push(net.ledger().total());
    }
    Ok(RunRecord {
        policy: policy.kind(),
        seed,
        horizon: cfg.horizon,
        clients: k,
        rows,
        cum_regret,
        comm,
        ledger: net.ledger().clone(),
        details: RunDetails::default(),
    })
}

/// Run `r` of an experiment: instance, noise and inducing streams all use
/// seed `cfg.seed + r`.
pub fn run_single(cfg: &ExperimentConfig, r: usize) -> Result<RunRecord> {
    let seed = cfg.seed.wrapping_add(r as u64);
    let inst = build_instance(cfg, seed)?;
    let kernel = cfg.kernel.build()?;
    let grid = inst.grid().clone();
    let mut details = RunDetails::default();
    let mut record = match cfg.policy {
        PolicyKind::Cepe => {
            let mut p = Cepe::new(kernel, cfg.lambda, grid, inst.alpha(), cfg.epoch_schedule()?)?;
            let rec = simulate(&mut p, &inst, cfg, seed)?;
            details.exploration_rounds = Some(p.schedule().explored_count() as u64);
            rec
        }
        PolicyKind::Scepe => {
            let mut p = build_scepe(cfg, &inst, seed)?;
            let rec = simulate(&mut p, &inst, cfg, seed)?;
            details.inducing_sizes = Some(p.inducing_models().iter().map(|m| m.len()).collect());
            details.comm_phase = p.comm_phase_len();
            let gamma = (0..inst.clients()).map(|i| p.own_posterior(i).info_gain()).fold(0.0, f64::max);
            details.max_info_gain = Some(gamma);
            rec
        }
        _ => {
            let mut p = build_policy(cfg, &inst, seed)?;
            simulate(p.as_mut(), &inst, cfg, seed)?
        }
    };
    record.details = details;
    Ok(record)
}

fn build_scepe(cfg: &ExperimentConfig, inst: &ProblemInstance, seed: u64) -> Result<Scepe> {
    let sc = ScepeConfig {
        kernel: cfg.kernel.build()?,
        lambda: cfg.lambda,
        horizon: cfg.horizon,
        explore_rounds: cfg.scepe_explore_rounds()?,
        q0: cfg.q0()?,
        comm_rule: cfg.scepe.comm_phase,
        seed,
    };
    Scepe::new(sc, inst.grid().clone(), inst.alpha())
}

/// All Monte Carlo runs of `cfg`, executed in parallel and collected in run
/// order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    for w in cfg.validate()? {
        warn!("{w}");
    }
    info!(
        "running {} for T = {}, K = {}, {} run(s) from seed {}",
        cfg.policy, cfg.horizon, cfg.clients, cfg.mc_runs, cfg.seed
    );
    let runs = (0..cfg.mc_runs)
        .into_par_iter()
        .map(|r| run_single(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let horizon = cfg.horizon as usize;
    let mut mean_curve = Vec::with_capacity(horizon);
    let mut stderr_curve = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let vals: Vec<f64> = runs.iter().map(|r| r.cum_regret[t]).collect();
        let (m, s) = mean_stderr(&vals);
        mean_curve.push(m);
        stderr_curve.push(s);
    }
    Ok(ExperimentRecord {
        config: cfg.clone(),
        runs,
        mean_curve,
        stderr_curve,
    })
}

/// Runs several policies on shared instances. All configurations must agree
/// on seed, horizon, clients, Monte Carlo runs and problem.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentRecord>> {
    let first = configs.first().ok_or_else(|| Error::Config("compare needs at least one configuration".into()))?;
    for c in &configs[1..] {
        if c.seed != first.seed
            || c.horizon != first.horizon
            || c.clients != first.clients
            || c.mc_runs != first.mc_runs
            || c.problem != first.problem
        {
            return Err(Error::Config(format!(
                "{} and {} do not share seed, horizon, clients, mc_runs and problem settings",
                first.policy, c.policy
            )));
        }
    }
    configs.iter().map(run_experiment).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub q0: f64,
    pub mean_inducing: f64,
    pub scepe_regret: f64,
    pub scepe_cost: f64,
    /// S-CEPE regret over CEPE regret.
    pub regret_ratio: f64,
    /// CEPE cost over S-CEPE cost; infinite when S-CEPE sends nothing.
    pub cost_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub cepe_regret: f64,
    pub cepe_cost: f64,
    pub points: Vec<SweepPoint>,
}

/// Regret and communication of S-CEPE relative to CEPE for each `q0`.
///
/// CEPE uses `cfg`'s schedule; S-CEPE explores for the same `ceil(N_T)`
/// rounds unless `cfg` overrides it.
pub fn sweep_inducing(cfg: &ExperimentConfig, q0s: &[f64]) -> Result<Sweep> {
    if q0s.is_empty() {
        return Err(Error::Config("sweep needs at least one q0 value".into()));
    }
    let mut base = cfg.clone();
    base.policy = PolicyKind::Cepe;
    let cepe = run_experiment(&base)?;
    let cepe_regret = cepe.final_regret_mean();
    let cepe_cost = cepe.comm_mean();
    let mut points = Vec::with_capacity(q0s.len());
    for &q0 in q0s {
        let mut c = cfg.clone();
        c.policy = PolicyKind::Scepe;
        c.scepe.q0 = Some(q0);
        let rec = run_experiment(&c)?;
        let sizes: Vec<f64> = rec
            .runs
            .iter()
            .flat_map(|r| r.details.inducing_sizes.clone().unwrap_or_default())
            .map(|s| s as f64)
            .collect();
        let scepe_cost = rec.comm_mean();
        if scepe_cost == 0.0 {
            warn!("q0 = {q0}: S-CEPE communicated nothing; cost ratio is infinite");
        }
        points.push(SweepPoint {
            q0,
            mean_inducing: sizes.iter().sum::<f64>() / sizes.len().max(1) as f64,
            scepe_regret: rec.final_regret_mean(),
            scepe_cost,
            regret_ratio: rec.final_regret_mean() / cepe_regret,
            cost_ratio: if scepe_cost == 0.0 { f64::INFINITY } else { cepe_cost / scepe_cost },
        });
    }
    Ok(Sweep {
        cepe_regret,
        cepe_cost,
        points,
    })
}
