//! Shared fixtures for the benchmarks.

use bcfeed_core::montecarlo::batch_cache;
use bcfeed_core::{GbcConfig, McPlan, SampleBatch, SymmetricDeltas};

pub const BENCH_SEED: u64 = 1;

/// A cached batch of `samples` draws for the `users`-user MISO channel at `snr_db`.
pub fn miso_batch(users: usize, snr_db: f64, samples: usize) -> (GbcConfig, SampleBatch) {
    let cfg = GbcConfig::miso(users, snr_db).expect("valid configuration");
    let batch = batch_cache(&McPlan::new(samples, BENCH_SEED).expect("valid plan"), &cfg)
        .expect("fits in memory");
    (cfg, batch)
}

/// i.i.d. erasures with probability 0.3 for `users` users.
pub fn iid_deltas(users: usize) -> SymmetricDeltas {
    SymmetricDeltas::independent(users, 0.3).expect("valid erasure probabilities")
}
