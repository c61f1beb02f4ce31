use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

type RateFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Deterministic exploration/exploitation interleaving.
///
/// Round `t` explores iff `|A(t)| < N_t`, where `A(t)` holds the exploration
/// rounds before `t`.
#[derive(Clone)]
pub struct EpochSchedule {
    rate: RateFn,
    explored: Vec<u64>,
    last: u64,
}

impl fmt::Debug for EpochSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EpochSchedule")
            .field("explored", &self.explored.len())
            .field("last", &self.last)
            .finish()
    }
}

/// `t^{2/(3 - kappa)} (ln(t / delta0))^{1/3}`, the default rate without its constant.
pub fn default_rate_shape(t: u64, kappa: f64, delta0: f64) -> f64 {
    let t = t as f64;
    t.powf(2.0 / (3.0 - kappa)) * (t / delta0).ln().cbrt()
}

impl EpochSchedule {
    pub fn from_fn(rate: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rate: Arc::new(rate),
            explored: Vec::new(),
            last: 0,
        }
    }

    /// `N_t = c t^{2/(3 - kappa)} (ln(t / delta0))^{1/3}`.
    pub fn default_rate(c: f64, kappa: f64, delta0: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("schedule constant", format!("must be positive, got {c}")));
        }
        if !(0.0..1.0).contains(&kappa) {
            return Err(invalid("kappa", format!("must lie in [0, 1), got {kappa}")));
        }
        if !(delta0 > 0.0 && delta0 < 1.0) {
            return Err(invalid("delta0", format!("must lie in (0, 1), got {delta0}")));
        }
        Ok(Self::from_fn(move |t| c * default_rate_shape(t, kappa, delta0)))
    }

    /// Default-shaped rate whose constant is chosen so that `N_horizon = target`.
    pub fn with_target(target: f64, horizon: u64, kappa: f64, delta0: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if !(target > 0.0) {
            return Err(invalid("exploration target", format!("must be positive, got {target}")));
        }
        let shape = default_rate_shape(horizon, kappa, delta0);
        Self::default_rate(target / shape, kappa, delta0)
    }

    pub fn n(&self, t: u64) -> f64 {
        (self.rate)(t)
    }

    /// Checks the rate over `1..=horizon`. Returns warnings for degenerate
    /// but legal schedules.
    pub fn validate(&self, horizon: u64) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for t in 1..=horizon {
            let n = self.n(t);
            if !n.is_finite() || n <= 0.0 {
                return Err(invalid("schedule", format!("N_{t} = {n} is not a positive number")));
            }
            if n < prev {
                return Err(invalid("schedule", format!("N_t decreases at t = {t} ({prev} -> {n})")));
            }
            prev = n;
        }
        if horizon >= 1 && self.n(horizon) < 1.0 {
            warnings.push(format!(
                "N_t stays below 1 up to t = {horizon}; only round 1 will explore"
            ));
        }
        Ok(warnings)
    }

    /// Decides round `t` and records it in `A` when it explores. Rounds must
    /// be consumed in order starting at 1.
    pub fn is_exploration_round(&mut self, t: u64) -> Result<bool> {
        if t != self.last + 1 {
            return Err(Error::OutOfOrderRound {
                expected: self.last + 1,
                got: t,
            });
        }
        self.last = t;
        let explore = (self.explored.len() as f64) < self.n(t);
        if explore {
            self.explored.push(t);
        }
        Ok(explore)
    }

    /// `A(t+1)` after the last consumed round `t`.
    pub fn explored(&self) -> &[u64] {
        &self.explored
    }

    pub fn explored_count(&self) -> usize {
        self.explored.len()
    }
}
