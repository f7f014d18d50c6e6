use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Identifies the variate discipline recorded in sampling output.
pub const STREAM_ID: &str = "chacha8:key=seed,stream=trial,word=2*position;u53";

const REPLICATION_STREAM: u64 = 1 << 63;

/// Seed for the counter-based uniform stream.
///
/// Trial `t` reads ChaCha8 keyed by the seed (expanded through
/// `SeedableRng::seed_from_u64`) on stream `t`; the node at topological
/// position `i` consumes the `i`-th 64-bit output, whose top 53 bits become
/// a uniform in `[0, 1)`. Any trial can therefore be regenerated without
/// the ones before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub seed: u64,
}

impl SeedSpec {
    pub fn new(seed: u64) -> Self {
        SeedSpec { seed }
    }

    pub fn stream_id(&self) -> &'static str {
        STREAM_ID
    }

    pub(crate) fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(self.seed).fill_bytes(&mut key);
        key
    }

    /// Independent seed for replication `r`, drawn from a stream index no
    /// trial can reach.
    pub fn child(&self, r: u64) -> SeedSpec {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(REPLICATION_STREAM | r);
        SeedSpec {
            seed: rng.next_u64(),
        }
    }
}

/// Uniforms for one trial, in topological position order.
pub(crate) struct TrialStream(ChaCha8Rng);

impl TrialStream {
    pub(crate) fn new(key: [u8; 32], trial: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trial);
        TrialStream(rng)
    }

    pub(crate) fn next_uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
