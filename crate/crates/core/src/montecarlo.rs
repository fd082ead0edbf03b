//! Reproducible Monte Carlo estimation over channel ensembles.
//!
//! Sample `i` of a batch is drawn from the counter-based stream identified by
//! `(seed, stream, i)`. Per-sample values are collected in index order and
//! reduced sequentially, so an estimate is bit-identical for any chunk size or
//! worker count, and a cached batch gives exactly the streaming result.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, ChannelSample, GbcConfig, SampleStream};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 20_190_101;
pub const DEFAULT_CHUNK: usize = 2048;
/// Default ceiling for cached batches (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Stream used for the main (search) batch.
pub const SEARCH_STREAM: u64 = 0;
/// Stream used to re-estimate selected optima without selection bias.
pub const VALIDATION_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McPlan {
    pub samples: usize,
    pub seed: u64,
    /// Samples per parallel work unit.
    pub chunk: usize,
}

impl Default for McPlan {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            chunk: DEFAULT_CHUNK,
        }
    }
}

impl McPlan {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        Self {
            samples,
            seed,
            ..Self::default()
        }
        .validated()
    }

    pub fn with_chunk(self, chunk: usize) -> Result<Self> {
        Self { chunk, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.samples == 0 || self.chunk == 0 {
            return Err(Error::InvalidConfig(
                "sample count and chunk size must be at least 1".into(),
            ));
        }
        Ok(self)
    }

    pub fn stream(&self, stream: u64) -> SampleStream {
        SampleStream::new(self.seed, stream)
    }
}

/// Sample mean with its standard error, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
}

fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    (mean, std / n.sqrt())
}

impl McEstimate {
    pub fn from_values(values: &[f64], source: SampleStream) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig(
                "an estimate needs at least 2 samples".into(),
            ));
        }
        if let Some(index) = first_non_finite(values) {
            return Err(Error::NonFinite { index });
        }
        let (mean, stderr) = mean_and_stderr(values);
        Ok(Self {
            mean,
            stderr,
            samples: values.len(),
            seed: source.seed,
            stream: source.stream,
        })
    }

    /// Estimate of `f(E[x_1], ..., E[x_p])` from per-sample columns, with the
    /// standard error from the delta method (central-difference gradient).
    pub fn functional<F>(columns: &[Vec<f64>], f: F, source: SampleStream) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension(
                "functional columns must share a length of at least 2".into(),
            ));
        }
        for col in columns {
            if let Some(index) = first_non_finite(col) {
                return Err(Error::NonFinite { index });
            }
        }
        let means: Vec<f64> = columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let value = f(&means);
        if !value.is_finite() {
            return Err(Error::Degenerate(format!(
                "functional of the sample means is {value}"
            )));
        }

        let mut grad = vec![0.0; means.len()];
        let mut probe = means.clone();
        for (j, g) in grad.iter_mut().enumerate() {
            let h = 1e-6 * means[j].abs().max(1e-3);
            probe[j] = means[j] + h;
            let up = f(&probe);
            probe[j] = means[j] - h;
            let down = f(&probe);
            probe[j] = means[j];
            *g = (up - down) / (2.0 * h);
        }
        let influence: Vec<f64> = (0..n)
            .map(|i| {
                columns
                    .iter()
                    .zip(&grad)
                    .map(|(c, g)| g * c[i])
                    .sum::<f64>()
            })
            .collect();
        let (_, stderr) = mean_and_stderr(&influence);
        Ok(Self {
            mean: value,
            stderr: if stderr.is_finite() { stderr } else { 0.0 },
            samples: n,
            seed: source.seed,
            stream: source.stream,
        })
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            stderr: self.stderr * factor.abs(),
            ..self
        }
    }

    /// `sqrt(se_a^2 + se_b^2)`, the scale for comparing two estimates.
    pub fn joint_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// A fixed set of channel draws, either held in memory or regenerated on
/// demand from its counter-based stream.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    cfg: GbcConfig,
    source: SampleStream,
    len: usize,
    chunk: usize,
    cached: Option<Vec<ChannelSample>>,
}

impl SampleBatch {
    pub fn streaming(plan: &McPlan, cfg: &GbcConfig, stream: u64) -> Self {
        Self {
            cfg: *cfg,
            source: plan.stream(stream),
            len: plan.samples,
            chunk: plan.chunk.max(1),
            cached: None,
        }
    }

    pub fn cached(plan: &McPlan, cfg: &GbcConfig, stream: u64, budget: usize) -> Result<Self> {
        let needed = Self::bytes_needed(plan, cfg);
        if needed > budget {
            return Err(Error::MemoryBudget { needed, budget });
        }
        let mut batch = Self::streaming(plan, cfg, stream);
        let samples = batch.map(|s| s.clone());
        batch.cached = Some(samples);
        Ok(batch)
    }

    /// Cached when it fits the budget, streaming otherwise.
    pub fn cached_or_streaming(plan: &McPlan, cfg: &GbcConfig, stream: u64, budget: usize) -> Self {
        Self::cached(plan, cfg, stream, budget)
            .unwrap_or_else(|_| Self::streaming(plan, cfg, stream))
    }

    pub fn bytes_needed(plan: &McPlan, cfg: &GbcConfig) -> usize {
        let per = ChannelSample::heap_bytes(cfg) + std::mem::size_of::<ChannelSample>();
        plan.samples.saturating_mul(per)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_cached(&self) -> bool {
        self.cached.is_some()
    }

    pub fn source(&self) -> SampleStream {
        self.source
    }

    /// Shape of the draws; the snr field is whatever the batch was built with.
    pub fn config(&self) -> &GbcConfig {
        &self.cfg
    }

    pub(crate) fn check_shape(&self, cfg: &GbcConfig) -> Result<()> {
        if !self.cfg.same_shape(cfg) {
            return Err(Error::Dimension(format!(
                "batch holds {}-user {}x{} draws but the configuration is {}-user {}x{}",
                self.cfg.users,
                self.cfg.rx_antennas,
                self.cfg.tx_antennas,
                cfg.users,
                cfg.rx_antennas,
                cfg.tx_antennas
            )));
        }
        Ok(())
    }

    pub fn sample(&self, index: usize) -> Cow<'_, ChannelSample> {
        match &self.cached {
            Some(v) => Cow::Borrowed(&v[index]),
            None => Cow::Owned(draw_channel(&self.cfg, self.source, index as u64)),
        }
    }

    /// Applies `f` to every sample, in parallel, returning results in index order.
    pub fn map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&ChannelSample) -> T + Sync + Send,
    {
        match &self.cached {
            Some(v) => v.par_iter().with_min_len(self.chunk).map(&f).collect(),
            None => (0..self.len)
                .into_par_iter()
                .with_min_len(self.chunk)
                .map(|i| f(&draw_channel(&self.cfg, self.source, i as u64)))
                .collect(),
        }
    }

    /// Like [`SampleBatch::map`]; the error of the lowest failing index wins.
    pub fn try_map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&ChannelSample) -> Result<T> + Sync + Send,
    {
        self.map(f).into_iter().collect()
    }
}

/// Draws and caches the search batch for `cfg` within the default memory budget.
pub fn batch_cache(plan: &McPlan, cfg: &GbcConfig) -> Result<SampleBatch> {
    batch_cache_with_budget(plan, cfg, DEFAULT_MEMORY_BUDGET)
}

pub fn batch_cache_with_budget(
    plan: &McPlan,
    cfg: &GbcConfig,
    budget: usize,
) -> Result<SampleBatch> {
    SampleBatch::cached(plan, cfg, SEARCH_STREAM, budget)
}

/// Mean of `integrand` over the batch.
pub fn estimate<F>(batch: &SampleBatch, integrand: F) -> Result<McEstimate>
where
    F: Fn(&ChannelSample) -> Result<f64> + Sync + Send,
{
    let values = batch.try_map(integrand)?;
    McEstimate::from_values(&values, batch.source())
}
