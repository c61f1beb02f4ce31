use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::network::CostModel;
use crate::nystrom::default_q0;
use crate::policy::{Acquisition, CommPhaseRule, EpochSchedule, PolicyKind};
use crate::problem::{Benchmark, InstanceSpec};

/// Exponent used by the default schedule for the squared exponential kernel.
pub const SE_KAPPA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    SquaredExponential,
    Matern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelName,
    pub lengthscale: f64,
    /// Matérn smoothness (0.5, 1.5 or 2.5).
    pub nu: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelName::SquaredExponential,
            lengthscale: 0.2,
            nu: None,
        }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        match self.family {
            KernelName::SquaredExponential => KernelSpec::squared_exponential(self.lengthscale),
            KernelName::Matern => {
                let nu = self
                    .nu
                    .ok_or_else(|| Error::Config("kernel.nu is required for the matern family".into()))?;
                KernelSpec::matern(self.lengthscale, nu)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub benchmark: Benchmark,
    pub grid_side: usize,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub noise_var: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let s = InstanceSpec::desk_scale(Benchmark::Branin);
        Self {
            benchmark: s.benchmark,
            grid_side: s.grid_side,
            alpha_low: s.alpha_low,
            alpha_high: s.alpha_high,
            noise_var: s.noise_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Target `N_T`; when set, the schedule constant is derived from it.
    pub explore_target: Option<f64>,
    /// Schedule constant `c`, used when no target is given.
    pub c: f64,
    /// Information-gain exponent; defaults from the kernel.
    pub kappa: Option<f64>,
    pub delta0: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            explore_target: Some(64.0),
            c: 1.0,
            kappa: None,
            delta0: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScepeSection {
    pub epsilon: f64,
    /// Inclusion scale; defaults to the value derived from `epsilon`.
    pub q0: Option<f64>,
    pub comm_phase: CommPhaseRule,
    /// Exploration-phase length; defaults to `ceil(N_T)` of the schedule.
    pub explore_rounds: Option<u64>,
}

impl Default for ScepeSection {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            q0: None,
            comm_phase: CommPhaseRule::Bound,
            explore_rounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub b: f64,
    pub r: f64,
    pub delta: f64,
    pub ei_epsilon: f64,
    pub pi_xi: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            b: 15.0,
            r: 0.01,
            delta: 1e-3,
            ei_epsilon: 0.01,
            pi_xi: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policy: PolicyKind,
    pub horizon: u64,
    pub clients: usize,
    pub seed: u64,
    pub mc_runs: usize,
    pub lambda: f64,
    pub cost_model: CostModel,
    pub out_dir: PathBuf,
    pub kernel: KernelConfig,
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    pub scepe: ScepeSection,
    pub baselines: BaselineSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Cepe,
            horizon: 500,
            clients: 10,
            seed: 0,
            mc_runs: 5,
            lambda: 0.01,
            cost_model: CostModel::Upload,
            out_dir: PathBuf::from("out"),
            kernel: KernelConfig::default(),
            problem: ProblemConfig::default(),
            schedule: ScheduleConfig::default(),
            scepe: ScepeSection::default(),
            baselines: BaselineSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// 50 clients, 2000 rounds, 30 x 30 grid.
    pub fn apply_paper_scale(&mut self) {
        self.clients = 50;
        self.horizon = 2000;
        self.problem.grid_side = 30;
    }

    pub fn instance_spec(&self) -> InstanceSpec {
        InstanceSpec {
            clients: self.clients,
            grid_side: self.problem.grid_side,
            benchmark: self.problem.benchmark,
            alpha_low: self.problem.alpha_low,
            alpha_high: self.problem.alpha_high,
            noise_var: self.problem.noise_var,
        }
    }

    pub fn kappa(&self) -> Result<f64> {
        match self.schedule.kappa {
            Some(k) => Ok(k),
            None => Ok(self.kernel.build()?.info_gain_exponent(2).unwrap_or(SE_KAPPA)),
        }
    }

    pub fn epoch_schedule(&self) -> Result<EpochSchedule> {
        let kappa = self.kappa()?;
        match self.schedule.explore_target {
            Some(target) => EpochSchedule::with_target(target, self.horizon, kappa, self.schedule.delta0),
            None => EpochSchedule::default_rate(self.schedule.c, kappa, self.schedule.delta0),
        }
    }

    pub fn scepe_explore_rounds(&self) -> Result<u64> {
        if let Some(n) = self.scepe.explore_rounds {
            return Ok(n);
        }
        let n = self.epoch_schedule()?.n(self.horizon).ceil() as u64;
        Ok(n.clamp(1, self.horizon))
    }

    pub fn q0(&self) -> Result<f64> {
        match self.scepe.q0 {
            Some(q) => Ok(q),
            None => default_q0(self.scepe.epsilon, self.horizon, self.clients, self.schedule.delta0),
        }
    }

    pub fn acquisition(&self) -> Option<Acquisition> {
        let b = &self.baselines;
        match self.policy {
            PolicyKind::IgpUcb => Some(Acquisition::Ucb {
                b: b.b,
                r: b.r,
                delta: b.delta,
            }),
            PolicyKind::GpEi => Some(Acquisition::Ei { epsilon: b.ei_epsilon }),
            PolicyKind::GpPi => Some(Acquisition::Pi { xi: b.pi_xi }),
            PolicyKind::Cepe | PolicyKind::Scepe => None,
        }
    }

    /// Checks every parameter; returns warnings for legal but degenerate
    /// settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        if self.mc_runs == 0 {
            return bad("mc_runs must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        let p = &self.problem;
        if p.grid_side < 2 {
            return bad(format!("problem.grid_side must be at least 2, got {}", p.grid_side));
        }
        if !(p.alpha_low > 0.0 && p.alpha_low <= p.alpha_high && p.alpha_high < 1.0) {
            return bad(format!(
                "need 0 < problem.alpha_low <= problem.alpha_high < 1, got [{}, {}]",
                p.alpha_low, p.alpha_high
            ));
        }
        if !(p.noise_var >= 0.0 && p.noise_var.is_finite()) {
            return bad(format!("problem.noise_var must be non-negative, got {}", p.noise_var));
        }
        self.kernel.build()?;
        if !(self.schedule.delta0 > 0.0 && self.schedule.delta0 < 1.0) {
            return bad(format!("schedule.delta0 must lie in (0, 1), got {}", self.schedule.delta0));
        }
        let mut warnings = self.epoch_schedule()?.validate(self.horizon)?;
        if !(self.scepe.epsilon > 0.0 && self.scepe.epsilon < 1.0) {
            return bad(format!("scepe.epsilon must lie in (0, 1), got {}", self.scepe.epsilon));
        }
        let q0 = self.q0()?;
        if !(q0 >= 0.0) {
            return bad(format!("scepe.q0 must be non-negative, got {q0}"));
        }
        if self.policy == PolicyKind::Scepe {
            let n = self.scepe_explore_rounds()?;
            if n == 0 || n > self.horizon {
                return bad(format!("scepe.explore_rounds must lie in 1..={}, got {n}", self.horizon));
            }
            if n == self.horizon {
                warnings.push("S-CEPE exploration covers the whole horizon; nothing is communicated".into());
            }
            if q0 == 0.0 {
                warnings.push("q0 = 0 gives empty inducing sets; S-CEPE exploits the prior".into());
            }
        }
        let b = &self.baselines;
        if !(b.b >= 0.0 && b.r >= 0.0) {
            return bad("baselines.b and baselines.r must be non-negative".into());
        }
        if !(b.delta > 0.0 && b.delta < 1.0) {
            return bad(format!("baselines.delta must lie in (0, 1), got {}", b.delta));
        }
        Ok(warnings)
    }
}
