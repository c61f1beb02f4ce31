use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::gp::{argmax, GridPosterior};
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::network::{Envelope, Network, PayloadKind};

use super::{check_round_inputs, locate, personalize, CommIntent, Decision, Policy, PolicyKind};

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ucb_acquisition(mean: f64, std: f64, beta: f64) -> f64 {
    mean + beta * std
}

/// Expected improvement over `f_star + eps`; the `std = 0` limit is the
/// positive part of the improvement.
pub fn ei_acquisition(mean: f64, std: f64, f_star: f64, eps: f64) -> f64 {
    let gap = mean - f_star - eps;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    gap * norm_cdf(z) + std * norm_pdf(z)
}

/// Probability of improving on `f_star + xi`; an indicator when `std = 0`.
pub fn pi_acquisition(mean: f64, std: f64, f_star: f64, xi: f64) -> f64 {
    let gap = mean - f_star - xi;
    if std <= 0.0 {
        return if gap > 0.0 { 1.0 } else { 0.0 };
    }
    norm_cdf(gap / std)
}

/// `B + R sqrt(2 (gamma_{t-1} + 1 + ln(1/delta)))` with `gamma_{t-1} = ln(max(t-1, 1))`.
pub fn igp_ucb_beta(b: f64, r: f64, delta: f64, t: u64) -> f64 {
    let gamma = (t.saturating_sub(1).max(1) as f64).ln();
    b + r * (2.0 * (gamma + 1.0 + (1.0 / delta).ln())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Acquisition {
    Ucb { b: f64, r: f64, delta: f64 },
    Ei { epsilon: f64 },
    Pi { xi: f64 },
}

impl Acquisition {
    pub fn igp_ucb_default() -> Self {
        Self::Ucb {
            b: 15.0,
            r: 0.01,
            delta: 1e-3,
        }
    }

    pub fn ei_default() -> Self {
        Self::Ei { epsilon: 0.01 }
    }

    pub fn pi_default() -> Self {
        Self::Pi { xi: 0.01 }
    }

    pub fn policy_kind(&self) -> PolicyKind {
        match self {
            Self::Ucb { .. } => PolicyKind::IgpUcb,
            Self::Ei { .. } => PolicyKind::GpEi,
            Self::Pi { .. } => PolicyKind::GpPi,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Ucb { b, r, delta } => {
                if !(b >= 0.0 && r >= 0.0) {
                    return Err(invalid("confidence bounds", "B and R must be non-negative"));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
                }
            }
            Self::Ei { epsilon: e } | Self::Pi { xi: e } => {
                if !e.is_finite() {
                    return Err(invalid("improvement margin", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Greedy acquisition baselines in the fully shared setting: every round,
/// every client broadcasts its sample and maximizes a personalized
/// acquisition built from all clients' exact posteriors.
///
/// The personalized width is `alpha_i sigma_i + ((1 - alpha_i) / K) sum_j sigma_j`.
/// The incumbent `f*` is the largest personalized mean over the client's
/// own past queries, or 0 before the first query.
#[derive(Debug, Clone)]
pub struct Baseline {
    acq: Acquisition,
    grid: Arc<Grid>,
    alpha: Vec<f64>,
    posteriors: Vec<GridPosterior>,
    own_queries: Vec<Vec<usize>>,
    current: Option<u64>,
}

impl Baseline {
    pub fn new(acq: Acquisition, kernel: KernelSpec, lambda: f64, grid: Arc<Grid>, alpha: &[f64]) -> Result<Self> {
        acq.validate()?;
        if alpha.is_empty() {
            return Err(invalid("clients", "need at least one client"));
        }
        let posteriors = alpha
            .iter()
            .map(|_| GridPosterior::new(kernel, lambda, grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            acq,
            grid,
            alpha: alpha.to_vec(),
            own_queries: vec![Vec::new(); alpha.len()],
            posteriors,
            current: None,
        })
    }

    pub fn acquisition(&self) -> &Acquisition {
        &self.acq
    }

    pub fn posterior(&self, j: usize) -> &GridPosterior {
        &self.posteriors[j]
    }

    /// Personalized mean and width of client `i` on the grid.
    pub fn personalized_surrogate(&self, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if i >= self.alpha.len() {
            return Err(Error::UnknownClient(i));
        }
        let (mean_sum, std_sum) = self.sums();
        Ok(self.surrogate(i, &mean_sum, &std_sum))
    }

    fn sums(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let mut m = vec![0.0; n];
        let mut s = vec![0.0; n];
        for p in &self.posteriors {
            for g in 0..n {
                m[g] += p.mean_at(g);
                s[g] += p.std_at(g);
            }
        }
        (m, s)
    }

    fn surrogate(&self, i: usize, mean_sum: &[f64], std_sum: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.alpha.len();
        let a = self.alpha[i];
        let p = &self.posteriors[i];
        let mean = (0..self.grid.len()).map(|g| personalize(a, p.mean_at(g), mean_sum[g], k)).collect();
        let std = (0..self.grid.len()).map(|g| personalize(a, p.std_at(g), std_sum[g], k)).collect();
        (mean, std)
    }

    fn choose(&self, i: usize, t: u64, mean: &[f64], std: &[f64]) -> usize {
        let f_star = || {
            self.own_queries[i]
                .iter()
                .map(|&q| mean[q])
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
                .unwrap_or(0.0)
        };
        let values = mean.iter().zip(std);
        match self.acq {
            Acquisition::Ucb { b, r, delta } => {
                let beta = igp_ucb_beta(b, r, delta, t);
                argmax(values.map(|(m, s)| ucb_acquisition(*m, *s, beta)))
            }
            Acquisition::Ei { epsilon } => {
                let f = f_star();
                argmax(values.map(|(m, s)| ei_acquisition(*m, *s, f, epsilon)))
            }
            Acquisition::Pi { xi } => {
                let f = f_star();
                argmax(values.map(|(m, s)| pi_acquisition(*m, *s, f, xi)))
            }
        }
    }
}

impl Policy for Baseline {
    fn kind(&self) -> PolicyKind {
        self.acq.policy_kind()
    }

    fn clients(&self) -> usize {
        self.alpha.len()
    }

    fn select(&mut self, t: u64) -> Result<Vec<Decision>> {
        self.current = Some(t);
        let (mean_sum, std_sum) = self.sums();
        Ok((0..self.alpha.len())
            .map(|i| {
                let (mean, std) = self.surrogate(i, &mean_sum, &std_sum);
                Decision {
                    query: self.choose(i, t, &mean, &std),
                    intent: CommIntent::UploadSample,
                }
            })
            .collect())
    }

    fn update(&mut self, t: u64, decisions: &[Decision], rewards: &[f64], net: &mut Network) -> Result<()> {
        check_round_inputs(self.alpha.len(), decisions, rewards)?;
        match self.current.take() {
            Some(round) if round == t => {}
            Some(round) => return Err(Error::OutOfOrderRound { expected: round, got: t }),
            None => return Err(invalid("round", format!("update({t}) without a preceding select"))),
        }
        let envelopes = decisions
            .iter()
            .zip(rewards)
            .enumerate()
            .map(|(i, (d, &y))| Envelope::new(t, i, PayloadKind::ExplorationSample, self.grid.point(d.query).to_vec(), y))
            .collect();
        let delivery = net.broadcast_round(t, envelopes)?;
        for env in delivery.envelopes() {
            let idx = locate(&self.grid, &env.point)?;
            self.posteriors[env.sender].append(idx, env.value)?;
            self.own_queries[env.sender].push(idx);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::CostModel;

    #[test]
    fn acquisition_examples() {
        let phi0 = 1.0 / (2.0 * PI).sqrt();
        assert!((ei_acquisition(1.01, 1.0, 1.0, 0.01) - phi0).abs() < 1e-12);
        assert!((pi_acquisition(2.5, 0.3, 2.49, 0.01) - 0.5).abs() < 1e-12);
        assert_eq!(ucb_acquisition(0.7, 3.0, 0.0), 0.7);
        assert!((ucb_acquisition(0.7, 3.0, 2.0) - 6.7).abs() < 1e-15);
    }

    #[test]
    fn zero_width_limits() {
        assert_eq!(ei_acquisition(2.0, 0.0, 1.0, 0.5), 0.5);
        assert_eq!(ei_acquisition(1.0, 0.0, 1.0, 0.5), 0.0);
        assert_eq!(pi_acquisition(2.0, 0.0, 1.0, 0.5), 1.0);
        assert_eq!(pi_acquisition(1.2, 0.0, 1.0, 0.5), 0.0);
        // The closed forms approach the limits.
        assert!((ei_acquisition(2.0, 1e-9, 1.0, 0.5) - 0.5).abs() < 1e-8);
        assert!(pi_acquisition(2.0, 1e-9, 1.0, 0.5) > 1.0 - 1e-12);
    }

    #[test]
    fn ei_matches_numeric_integral() {
        // E[max(0, Y - f* - eps)] for Y ~ N(mu, s^2), by midpoint quadrature.
        let (mu, s, f, e) = (0.3, 0.8, 0.1, 0.05);
        let n = 200_000;
        let (lo, hi) = (mu - 12.0 * s, mu + 12.0 * s);
        let h = (hi - lo) / n as f64;
        let integral: f64 = (0..n)
            .map(|k| {
                let y = lo + (k as f64 + 0.5) * h;
                (y - f - e).max(0.0) * norm_pdf((y - mu) / s) / s * h
            })
            .sum();
        assert!((ei_acquisition(mu, s, f, e) - integral).abs() < 1e-8);
    }

    #[test]
    fn beta_schedule() {
        let b = igp_ucb_beta(15.0, 0.01, 1e-3, 1);
        assert!((b - (15.0 + 0.01 * (2.0 * (1.0 + 1000f64.ln())).sqrt())).abs() < 1e-12);
        assert_eq!(igp_ucb_beta(15.0, 0.01, 1e-3, 2), b);
        let b10 = igp_ucb_beta(15.0, 0.01, 1e-3, 10);
        assert!((b10 - (15.0 + 0.01 * (2.0 * (9f64.ln() + 1.0 + 1000f64.ln())).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn personalized_surrogate_combines_peers() {
        let grid = Arc::new(Grid::uniform(2, 4).unwrap());
        let kernel = KernelSpec::squared_exponential(0.3).unwrap();
        let alpha = [0.4, 0.9];
        let mut p = Baseline::new(Acquisition::ei_default(), kernel, 0.01, grid.clone(), &alpha).unwrap();
        let mut net = Network::new(2, CostModel::Upload);
        for t in 1..=5 {
            let ds = p.select(t).unwrap();
            let ys: Vec<f64> = ds.iter().enumerate().map(|(i, d)| grid.point(d.query)[i]).collect();
            p.update(t, &ds, &ys, &mut net).unwrap();
        }
        assert_eq!(net.ledger().total(), 5 * 2 * 3);
        let (m, s) = p.personalized_surrogate(0).unwrap();
        for g in 0..grid.len() {
            let (m0, m1) = (p.posterior(0).mean_at(g), p.posterior(1).mean_at(g));
            let (s0, s1) = (p.posterior(0).std_at(g), p.posterior(1).std_at(g));
            assert!((m[g] - (0.4 * m0 + 0.3 * (m0 + m1))).abs() < 1e-12);
            assert!((s[g] - (0.4 * s0 + 0.3 * (s0 + s1))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_ucb_is_greedy() {
        let grid = Arc::new(Grid::uniform(2, 5).unwrap());
        let kernel = KernelSpec::squared_exponential(0.3).unwrap();
        let acq = Acquisition::Ucb { b: 0.0, r: 0.0, delta: 0.5 };
        let mut p = Baseline::new(acq, kernel, 0.01, grid.clone(), &[0.5]).unwrap();
        let mut net = Network::new(1, CostModel::Upload);
        let ds = p.select(1).unwrap();
        p.update(1, &ds, &[1.0], &mut net).unwrap();
        let ds = p.select(2).unwrap();
        assert_eq!(ds[0].query, argmax(p.posterior(0).means().iter().copied()));
    }
}
