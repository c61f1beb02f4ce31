//! Decision policies: CEPE, S-CEPE and the greedy acquisition baselines.
//!
//! Every policy is driven one round at a time: [`Policy::select`] returns each
//! client's grid query and communication intent, the caller observes rewards,
//! and [`Policy::update`] performs the round's uploads and ingests what the
//! server relays.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::network::{Delivery, Network};

pub mod baselines;
pub mod cepe;
pub mod scepe;
pub mod schedule;

pub use baselines::{ei_acquisition, igp_ucb_beta, pi_acquisition, ucb_acquisition, Acquisition, Baseline};
pub use cepe::Cepe;
pub use scepe::{CommPhaseRule, Phase, Scepe, ScepeConfig};
pub use schedule::EpochSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "cepe")]
    Cepe,
    #[serde(rename = "scepe")]
    Scepe,
    #[serde(rename = "igp-ucb")]
    IgpUcb,
    #[serde(rename = "gp-ei")]
    GpEi,
    #[serde(rename = "gp-pi")]
    GpPi,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [Self::Cepe, Self::Scepe, Self::IgpUcb, Self::GpEi, Self::GpPi];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cepe => "cepe",
            Self::Scepe => "scepe",
            Self::IgpUcb => "igp-ucb",
            Self::GpEi => "gp-ei",
            Self::GpPi => "gp-pi",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "cepe" => Ok(Self::Cepe),
            "scepe" => Ok(Self::Scepe),
            "igpucb" | "ucb" => Ok(Self::IgpUcb),
            "gpei" | "ei" => Ok(Self::GpEi),
            "gppi" | "pi" => Ok(Self::GpPi),
            _ => Err(Error::Config(format!(
                "unknown policy `{s}` (expected cepe, scepe, igp-ucb, gp-ei or gp-pi)"
            ))),
        }
    }
}

/// What a client does with the network in a round.
#[derive(Debug, Clone, PartialEq)]
pub enum CommIntent {
    Silent,
    /// Upload the queried point with its reward once observed.
    UploadSample,
    /// Upload an inducing point with its weight.
    UploadPair { point: Vec<f64>, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub query: usize,
    pub intent: CommIntent,
}

impl Decision {
    pub fn silent(query: usize) -> Self {
        Self {
            query,
            intent: CommIntent::Silent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Exploration,
    Exploitation,
}

/// One observation as stored by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub round: u64,
    pub source: usize,
    pub grid_index: usize,
    pub reward: f64,
    pub provenance: Provenance,
}

/// A client's local view: its personalization weight, its own query log and
/// the peer datasets received through the server.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub alpha: f64,
    history: Vec<Sample>,
    peer_data: Vec<Vec<Sample>>,
}

impl ClientState {
    pub fn new(id: usize, alpha: f64, clients: usize) -> Self {
        Self {
            id,
            alpha,
            history: Vec::new(),
            peer_data: vec![Vec::new(); clients],
        }
    }

    /// Every query this client made, tagged with the phase it was made in.
    pub fn history(&self) -> &[Sample] {
        &self.history
    }

    /// Samples received from `peer` (own uploads included).
    pub fn peer_data(&self, peer: usize) -> &[Sample] {
        &self.peer_data[peer]
    }

    pub(crate) fn record(&mut self, round: u64, grid_index: usize, reward: f64, provenance: Provenance) {
        self.history.push(Sample {
            round,
            source: self.id,
            grid_index,
            reward,
            provenance,
        });
    }

    pub(crate) fn ingest(&mut self, delivery: &Delivery, grid: &Grid) -> Result<()> {
        for env in delivery.received_by(self.id) {
            let grid_index = locate(grid, &env.point)?;
            self.peer_data[env.sender].push(Sample {
                round: env.round,
                source: env.sender,
                grid_index,
                reward: env.value,
                provenance: Provenance::Exploration,
            });
        }
        Ok(())
    }

    /// Little-endian serialization of all peer datasets.
    pub fn encode_peer_data(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (peer, samples) in self.peer_data.iter().enumerate() {
            out.extend_from_slice(&(peer as u64).to_le_bytes());
            out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
            for s in samples {
                out.extend_from_slice(&s.round.to_le_bytes());
                out.extend_from_slice(&(s.grid_index as u64).to_le_bytes());
                out.extend_from_slice(&s.reward.to_bits().to_le_bytes());
                out.push(s.provenance as u8);
            }
        }
        out
    }
}

pub(crate) fn locate(grid: &Grid, x: &[f64]) -> Result<usize> {
    grid.locate(x)
        .ok_or_else(|| invalid("broadcast point", format!("{x:?} is not a grid point")))
}

/// `alpha mu_own + ((1 - alpha) / K) sum_j mu_j`, where `means[own]` enters
/// both terms.
pub fn personalized_mean(alpha: f64, own: usize, means: &[f64]) -> Result<f64> {
    if own >= means.len() {
        return Err(Error::UnknownClient(own));
    }
    Ok(personalize(alpha, means[own], means.iter().sum(), means.len()))
}

#[inline]
pub(crate) fn personalize(alpha: f64, own: f64, sum: f64, clients: usize) -> f64 {
    alpha * own + (1.0 - alpha) / clients as f64 * sum
}

/// A round-driven multi-client policy.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn clients(&self) -> usize;

    /// Decides every client's query for round `t`.
    fn select(&mut self, t: u64) -> Result<Vec<Decision>>;

    /// Carries out the communication for round `t` and ingests the results.
    /// `decisions` are those returned by `select(t)`.
    fn update(&mut self, t: u64, decisions: &[Decision], rewards: &[f64], net: &mut Network) -> Result<()>;
}

pub(crate) fn check_round_inputs(clients: usize, decisions: &[Decision], rewards: &[f64]) -> Result<()> {
    if decisions.len() != clients || rewards.len() != clients {
        return Err(Error::LengthMismatch(format!(
            "{clients} clients but {} decisions and {} rewards",
            decisions.len(),
            rewards.len()
        )));
    }
    Ok(())
}
