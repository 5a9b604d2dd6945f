//! Simulated exchange layer between areas.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shared-state values for one neighbor. Carries bus indices, voltages and
/// the link multiplier; measurements and model rows never leave an area.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedStates {
    pub buses: Vec<usize>,
    pub values: Vec<[f64; 2]>,
    /// Sender's multiplier for the link before this round. Only the
    /// lower-indexed area of a pair sends it; the receiver mirrors it.
    pub multiplier: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangePayload {
    pub sender: usize,
    /// `(receiver, states)` pairs in ascending receiver order.
    pub links: Vec<(usize, SharedStates)>,
}

/// Messages delivered in one round, keyed by `(sender, receiver)`.
pub type Inbox = BTreeMap<(usize, usize), SharedStates>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// A missing message aborts the run.
    Fail,
    /// A missing message is replaced by the last one delivered on that link.
    ReuseLast,
}

pub trait Transport {
    fn exchange(&mut self, iteration: usize, outgoing: Vec<ExchangePayload>) -> Inbox;
    fn policy(&self) -> MissingPolicy;
}

fn deliver_all(outgoing: Vec<ExchangePayload>, mut keep: impl FnMut() -> bool) -> Inbox {
    let mut inbox = Inbox::new();
    for p in outgoing {
        for (receiver, states) in p.links {
            if keep() {
                inbox.insert((p.sender, receiver), states);
            }
        }
    }
    inbox
}

/// Barrier exchange: every message arrives.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrictTransport;

impl Transport for StrictTransport {
    fn exchange(&mut self, _iteration: usize, outgoing: Vec<ExchangePayload>) -> Inbox {
        deliver_all(outgoing, || true)
    }

    fn policy(&self) -> MissingPolicy {
        MissingPolicy::Fail
    }
}

/// Drops each directed message independently with probability `p_drop`.
#[derive(Debug, Clone)]
pub struct LossyTransport {
    p_drop: f64,
    rng: ChaCha8Rng,
}

impl LossyTransport {
    pub fn new(p_drop: f64, seed: u64) -> Self {
        Self { p_drop: p_drop.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Transport for LossyTransport {
    fn exchange(&mut self, _iteration: usize, outgoing: Vec<ExchangePayload>) -> Inbox {
        let p = self.p_drop;
        let rng = &mut self.rng;
        deliver_all(outgoing, || rng.random::<f64>() >= p)
    }

    fn policy(&self) -> MissingPolicy {
        MissingPolicy::ReuseLast
    }
}
