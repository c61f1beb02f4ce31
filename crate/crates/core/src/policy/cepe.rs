use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::gp::{argmax, GridPosterior};
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::network::{Envelope, Network, PayloadKind};

use super::{check_round_inputs, locate, personalize, ClientState, CommIntent, Decision, EpochSchedule, Policy, PolicyKind, Provenance};

/// Collaborative exploration with personalized exploitation.
///
/// Exploration rounds query each client's own max-variance point and
/// broadcast the sample; exploitation rounds query the argmax of the
/// personalized mean and stay silent. All clients receive identical peer
/// datasets, so one posterior per source client is kept and read by every
/// client.
#[derive(Debug, Clone)]
pub struct Cepe {
    grid: Arc<Grid>,
    schedule: EpochSchedule,
    states: Vec<ClientState>,
    posteriors: Vec<GridPosterior>,
    current: Option<(u64, bool)>,
    mean_sum: Option<Vec<f64>>,
}

impl Cepe {
    pub fn new(kernel: KernelSpec, lambda: f64, grid: Arc<Grid>, alpha: &[f64], schedule: EpochSchedule) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("clients", "need at least one client"));
        }
        let k = alpha.len();
        let posteriors = (0..k)
            .map(|_| GridPosterior::new(kernel, lambda, grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        let states = alpha.iter().enumerate().map(|(i, &a)| ClientState::new(i, a, k)).collect();
        Ok(Self {
            grid,
            schedule,
            states,
            posteriors,
            current: None,
            mean_sum: None,
        })
    }

    pub fn schedule(&self) -> &EpochSchedule {
        &self.schedule
    }

    pub fn client(&self, i: usize) -> &ClientState {
        &self.states[i]
    }

    /// Posterior of `h_j` built from the exploration samples `j` broadcast.
    pub fn posterior(&self, j: usize) -> &GridPosterior {
        &self.posteriors[j]
    }

    /// Personalized posterior mean of client `i` at every grid point.
    pub fn personalized_means(&self, i: usize) -> Result<Vec<f64>> {
        let state = self.states.get(i).ok_or(Error::UnknownClient(i))?;
        let k = self.states.len();
        let own = self.posteriors[i].means();
        Ok(self
            .mean_sum_values()
            .iter()
            .zip(own)
            .map(|(s, m)| personalize(state.alpha, *m, *s, k))
            .collect())
    }

    fn mean_sum_values(&self) -> Vec<f64> {
        if let Some(s) = &self.mean_sum {
            return s.clone();
        }
        let mut sum = vec![0.0; self.grid.len()];
        for p in &self.posteriors {
            for (s, m) in sum.iter_mut().zip(p.means()) {
                *s += m;
            }
        }
        sum
    }

    /// Query of client `i` in an exploration or exploitation round.
    pub fn query(&mut self, i: usize, explore: bool) -> Result<Decision> {
        if i >= self.states.len() {
            return Err(Error::UnknownClient(i));
        }
        if explore {
            return Ok(Decision {
                query: self.posteriors[i].max_variance_index(),
                intent: CommIntent::UploadSample,
            });
        }
        if self.mean_sum.is_none() {
            self.mean_sum = Some(self.mean_sum_values());
        }
        let sum = self.mean_sum.as_ref().expect("cached above");
        let k = self.states.len();
        let alpha = self.states[i].alpha;
        let own = self.posteriors[i].means();
        let best = argmax(sum.iter().zip(own).map(|(s, m)| personalize(alpha, *m, *s, k)));
        Ok(Decision::silent(best))
    }
}

impl Policy for Cepe {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Cepe
    }

    fn clients(&self) -> usize {
        self.states.len()
    }

    fn select(&mut self, t: u64) -> Result<Vec<Decision>> {
        let explore = self.schedule.is_exploration_round(t)?;
        self.current = Some((t, explore));
        (0..self.states.len()).map(|i| self.query(i, explore)).collect()
    }

    fn update(&mut self, t: u64, decisions: &[Decision], rewards: &[f64], net: &mut Network) -> Result<()> {
        check_round_inputs(self.states.len(), decisions, rewards)?;
        let explore = match self.current {
            Some((round, explore)) if round == t => explore,
            Some((round, _)) => return Err(Error::OutOfOrderRound { expected: round, got: t }),
            None => return Err(invalid("round", format!("update({t}) without a preceding select"))),
        };
        self.current = None;
        let provenance = if explore { Provenance::Exploration } else { Provenance::Exploitation };
        for (state, (d, &y)) in self.states.iter_mut().zip(decisions.iter().zip(rewards)) {
            state.record(t, d.query, y, provenance);
        }
        if !explore {
            return Ok(());
        }
        let envelopes = decisions
            .iter()
            .zip(rewards)
            .enumerate()
            .filter(|(_, (d, _))| d.intent == CommIntent::UploadSample)
            .map(|(i, (d, &y))| {
                Envelope::new(t, i, PayloadKind::ExplorationSample, self.grid.point(d.query).to_vec(), y)
            })
            .collect();
        let delivery = net.broadcast_round(t, envelopes)?;
        for state in &mut self.states {
            state.ingest(&delivery, &self.grid)?;
        }
        for env in delivery.envelopes() {
            let idx = locate(&self.grid, &env.point)?;
            self.posteriors[env.sender].append(idx, env.value)?;
        }
        self.mean_sum = None;
        Ok(())
    }
}
