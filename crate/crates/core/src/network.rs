//! Star-topology message fabric with scalar-level communication accounting.
//!
//! Clients upload at most one envelope per round to the server, which relays
//! every envelope to every client. Delivery is synchronous and lossless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    /// A raw query point and its observed reward.
    ExplorationSample,
    /// An inducing point and its weight.
    InducingPair,
}

impl PayloadKind {
    fn slot(self) -> usize {
        match self {
            Self::ExplorationSample => 0,
            Self::InducingPair => 1,
        }
    }
}

/// One upload: a `d`-dimensional point plus one real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub round: u64,
    pub sender: usize,
    pub kind: PayloadKind,
    pub point: Vec<f64>,
    pub value: f64,
}

impl Envelope {
    pub fn new(round: u64, sender: usize, kind: PayloadKind, point: Vec<f64>, value: f64) -> Self {
        Self {
            round,
            sender,
            kind,
            point,
            value,
        }
    }

    pub fn scalar_count(&self) -> u64 {
        self.point.len() as u64 + 1
    }
}

/// How relayed scalars are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// One unit per uploaded scalar, regardless of how many clients receive it.
    #[default]
    Upload,
    /// One unit per scalar per receiving client other than the sender.
    PerReceiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    cost_model: CostModel,
    per_client: Vec<u64>,
    per_kind: [u64; 2],
    total: u64,
}

impl CommLedger {
    pub fn new(clients: usize, cost_model: CostModel) -> Self {
        Self {
            cost_model,
            per_client: vec![0; clients],
            per_kind: [0; 2],
            total: 0,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        self.cost_model
    }

    /// Scalars charged to each client's uploads.
    pub fn per_client(&self) -> &[u64] {
        &self.per_client
    }

    pub fn by_kind(&self, kind: PayloadKind) -> u64 {
        self.per_kind[kind.slot()]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn charge(&mut self, env: &Envelope) {
        let receivers = match self.cost_model {
            CostModel::Upload => 1,
            CostModel::PerReceiver => self.per_client.len() as u64 - 1,
        };
        let cost = env.scalar_count() * receivers;
        self.per_client[env.sender] += cost;
        self.per_kind[env.kind.slot()] += cost;
        self.total += cost;
    }
}

pub fn total_cost(ledger: &CommLedger) -> u64 {
    ledger.total()
}

/// What every client receives in one round. All clients receive the same
/// envelopes, ordered by sender; a client's own envelope is included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delivery {
    round: u64,
    envelopes: Vec<Envelope>,
}

impl Delivery {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn envelopes(&self) -> &[Envelope] {
        &self.envelopes
    }

    pub fn is_empty(&self) -> bool {
        self.envelopes.is_empty()
    }

    /// Envelopes as seen by `client`: everything, own upload included.
    pub fn received_by(&self, _client: usize) -> &[Envelope] {
        &self.envelopes
    }
}

/// The server plus its ledger.
#[derive(Debug, Clone)]
pub struct Network {
    clients: usize,
    ledger: CommLedger,
    last_round: u64,
}

impl Network {
    pub fn new(clients: usize, cost_model: CostModel) -> Self {
        Self {
            clients,
            ledger: CommLedger::new(clients, cost_model),
            last_round: 0,
        }
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// Relays one round of uploads. Rounds start at 1 and must increase;
    /// silent rounds may be skipped.
    pub fn broadcast_round(&mut self, round: u64, mut envelopes: Vec<Envelope>) -> Result<Delivery> {
        if round <= self.last_round {
            return Err(Error::OutOfOrderRound {
                expected: self.last_round + 1,
                got: round,
            });
        }
        let mut seen = vec![false; self.clients];
        for env in &envelopes {
            if env.sender >= self.clients {
                return Err(Error::UnknownClient(env.sender));
            }
            if env.round != round {
                return Err(Error::OutOfOrderRound {
                    expected: round,
                    got: env.round,
                });
            }
            if std::mem::replace(&mut seen[env.sender], true) {
                return Err(Error::DuplicateSender(env.sender));
            }
        }
        envelopes.sort_by_key(|e| e.sender);
        for env in &envelopes {
            self.ledger.charge(env);
        }
        self.last_round = round;
        Ok(Delivery { round, envelopes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(round: u64, sender: usize) -> Envelope {
        Envelope::new(round, sender, PayloadKind::ExplorationSample, vec![0.5, 0.25], 1.0)
    }

    #[test]
    fn empty_round_costs_nothing() {
        let mut net = Network::new(3, CostModel::Upload);
        assert_eq!(total_cost(net.ledger()), 0);
        let d = net.broadcast_round(1, vec![]).unwrap();
        assert!(d.is_empty());
        assert_eq!(total_cost(net.ledger()), 0);
    }

    #[test]
    fn fifty_uploads_cost_one_fifty() {
        let mut net = Network::new(50, CostModel::Upload);
        let envs = (0..50).rev().map(|i| sample(1, i)).collect();
        let d = net.broadcast_round(1, envs).unwrap();
        assert_eq!(net.ledger().total(), 150);
        assert_eq!(net.ledger().by_kind(PayloadKind::ExplorationSample), 150);
        assert_eq!(net.ledger().by_kind(PayloadKind::InducingPair), 0);
        assert!(net.ledger().per_client().iter().all(|&c| c == 3));
        for c in 0..50 {
            let senders: Vec<usize> = d.received_by(c).iter().map(|e| e.sender).collect();
            assert_eq!(senders, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn inducing_pair_costs_three() {
        let mut net = Network::new(2, CostModel::Upload);
        let env = Envelope::new(4, 1, PayloadKind::InducingPair, vec![0.1, 0.2], -0.3);
        net.broadcast_round(4, vec![env]).unwrap();
        assert_eq!(total_cost(net.ledger()), 3);
        assert_eq!(net.ledger().per_client(), &[0, 3]);
    }

    #[test]
    fn per_receiver_model_scales_with_audience() {
        let mut net = Network::new(5, CostModel::PerReceiver);
        net.broadcast_round(1, vec![sample(1, 0), sample(1, 2)]).unwrap();
        assert_eq!(net.ledger().total(), 2 * 3 * 4);
    }

    #[test]
    fn rejects_malformed_rounds() {
        let mut net = Network::new(3, CostModel::Upload);
        assert!(matches!(
            net.broadcast_round(1, vec![sample(1, 0), sample(1, 0)]),
            Err(Error::DuplicateSender(0))
        ));
        assert!(matches!(net.broadcast_round(1, vec![sample(1, 7)]), Err(Error::UnknownClient(7))));
        assert!(net.broadcast_round(2, vec![sample(3, 0)]).is_err());
        assert_eq!(net.ledger().total(), 0);
        net.broadcast_round(2, vec![sample(2, 1)]).unwrap();
        assert!(matches!(net.broadcast_round(2, vec![]), Err(Error::OutOfOrderRound { .. })));
        net.broadcast_round(5, vec![]).unwrap();
        assert_eq!(net.ledger().total(), 3);
    }
}
