//! Grid search over the compression-noise ratios of the JSC scheme.
//!
//! `beta_t` enters only `a_t` and `b_{., t+1}`, so each grid point is composed
//! from 1-D tables of term means instead of a fresh Monte Carlo pass. The
//! tables are built from per-sample eigenvalues: with
//! `A = I + snr H_1^H H_1 = L L^H` and `W = L^-1 H^H`,
//!
//! ```text
//! a_t(beta)     = log2 det A + sum_i log2(1 + snr/beta * eig_i(W_R^H W_R)),  R = {t+1..K}
//! b_{l,t}(beta) = sum_i log2(1 + snr/beta * eig_i(W_l^H W_l))
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::GbcConfig;
use crate::error::{Error, Result};
use crate::gbc::{
    check_a_means, jsc_alphas_from_means, jsc_rate_from_means, jsc_sym_rate, AlphaVector,
    BetaVector, RatePoint, Scheme,
};
use crate::linalg::{gram, identity, log2_det_shifted, psd_eigenvalues, whiten};
use crate::montecarlo::{
    McEstimate, McPlan, SampleBatch, DEFAULT_MEMORY_BUDGET, SEARCH_STREAM, VALIDATION_STREAM,
};

/// Upper limit on the number of grid points evaluated in one search.
pub const MAX_GRID_POINTS: usize = 50_000_000;

/// Log-spaced search grid, identical in every dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub log_min: f64,
    pub log_max: f64,
    pub points_per_dim: usize,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self {
            log_min: -1.5,
            log_max: 1.5,
            points_per_dim: 60,
        }
    }
}

impl BetaGrid {
    /// `log_min` and `log_max` are base-10 exponents.
    pub fn new(log_min: f64, log_max: f64, points_per_dim: usize) -> Result<Self> {
        Self {
            log_min,
            log_max,
            points_per_dim,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.log_min.is_finite() && self.log_max.is_finite() && self.log_min < self.log_max) {
            return Err(Error::InvalidGrid(format!(
                "need finite log_min < log_max, got [{}, {}]",
                self.log_min, self.log_max
            )));
        }
        if self.points_per_dim < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points per dimension, got {}",
                self.points_per_dim
            )));
        }
        Ok(self)
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points_per_dim;
        let step = (self.log_max - self.log_min) / (n - 1) as f64;
        (0..n)
            .map(|i| 10f64.powf(self.log_min + step * i as f64))
            .collect()
    }

    /// `points_per_dim^(users - 1)`.
    pub fn size(&self, users: usize) -> Result<usize> {
        let dims = users.saturating_sub(1) as u32;
        self.points_per_dim
            .checked_pow(dims)
            .filter(|n| *n <= MAX_GRID_POINTS)
            .ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "{}^{dims} grid points exceed the limit of {MAX_GRID_POINTS}",
                    self.points_per_dim
                ))
            })
    }
}

/// One evaluated grid point, rate on the search batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub betas: Vec<f64>,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_betas: BetaVector,
    /// Rate of the argmax re-estimated on the independent validation batch.
    pub best_rate: McEstimate,
    /// Rate of the argmax on the search batch; no evaluated grid point exceeds it.
    pub search_rate: McEstimate,
    pub alphas: AlphaVector,
    pub evaluations: usize,
    pub grid: BetaGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<GridPoint>>,
}

impl OptResult {
    pub fn rate_point(&self, cfg: &GbcConfig) -> RatePoint {
        RatePoint {
            snr_db: cfg.snr_db(),
            scheme: Scheme::Jsc,
            rate: self.best_rate,
            betas: Some(self.best_betas.clone()),
            alphas: Some(self.alphas.clone()),
        }
    }
}

#[derive(Clone, Debug)]
struct SampleEigs {
    logdet_a: f64,
    /// `tail[t - 1]`: spectrum for users `t+1..K`, `t = 1..K-1`.
    tail: Vec<Vec<f64>>,
    /// `side[l - 1]`: spectrum of user `l`'s whitened block.
    side: Vec<Vec<f64>>,
}

/// Per-sample spectra from which every `a_t(beta)` and `b_{l,t}(beta)` follows
/// in closed form.
#[derive(Clone, Debug)]
pub struct JscTables {
    cfg: GbcConfig,
    source: crate::channel::SampleStream,
    samples: Vec<SampleEigs>,
}

impl JscTables {
    pub fn build(cfg: &GbcConfig, batch: &SampleBatch) -> Result<Self> {
        batch.check_shape(cfg)?;
        let k = cfg.users;
        let nr = cfg.rx_antennas;
        let samples = batch.try_map(|s| {
            let a = identity(cfg.tx_antennas)
                + gram(&s.block(1)) * num_complex::Complex64::new(cfg.snr, 0.0);
            let (w, logdet_a) = whiten(&a, &s.stacked().adjoint())?;
            let tail = (1..k)
                .map(|t| {
                    let wr = w.columns(t * nr, (k - t) * nr);
                    psd_eigenvalues(&(wr.adjoint() * wr))
                })
                .collect::<Result<Vec<_>>>()?;
            let side = (1..=k)
                .map(|l| {
                    let wl = w.columns((l - 1) * nr, nr);
                    psd_eigenvalues(&(wl.adjoint() * wl))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleEigs {
                logdet_a,
                tail,
                side,
            })
        })?;
        Ok(Self {
            cfg: *cfg,
            source: batch.source(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `a_t` integrand of sample `i`; `beta` is ignored for `t = K`.
    pub fn a_sample(&self, i: usize, t: usize, beta: f64) -> f64 {
        let s = &self.samples[i];
        if t == self.cfg.users {
            s.logdet_a
        } else {
            s.logdet_a + log2_det_shifted(&s.tail[t - 1], self.cfg.snr / beta)
        }
    }

    /// `sum_{l<=t} b_{l,t}` integrand of sample `i` with `beta_{t-1} = beta_prev`.
    pub fn b_sum_sample(&self, i: usize, t: usize, beta_prev: f64) -> f64 {
        let scale = self.cfg.snr / beta_prev;
        self.samples[i].side[..t]
            .iter()
            .map(|e| log2_det_shifted(e, scale))
            .sum()
    }

    fn mean<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(f).sum::<f64>() / self.len() as f64
    }

    /// Per-sample columns `a_1..a_K, s_2..s_K` at `betas`.
    pub fn columns(&self, betas: &BetaVector) -> Vec<Vec<f64>> {
        let k = self.cfg.users;
        let n = self.len();
        let mut cols = Vec::with_capacity(2 * k - 1);
        for t in 1..=k {
            let beta = if t < k { betas.get(t) } else { 1.0 };
            cols.push((0..n).map(|i| self.a_sample(i, t, beta)).collect());
        }
        for t in 2..=k {
            cols.push(
                (0..n)
                    .map(|i| self.b_sum_sample(i, t, betas.get(t - 1)))
                    .collect(),
            );
        }
        cols
    }

    pub fn rate(&self, betas: &BetaVector) -> Result<(McEstimate, AlphaVector)> {
        let k = self.cfg.users;
        let cols = self.columns(betas);
        let means: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        check_a_means(&means[..k])?;
        let rate = McEstimate::functional(
            &cols,
            |m| jsc_rate_from_means(&m[..k], &m[k..]),
            self.source,
        )?;
        Ok((rate, jsc_alphas_from_means(&means[..k], &means[k..])?))
    }
}

/// Exhaustive search with freshly drawn search (stream 0) and validation
/// (stream 1) batches.
pub fn optimize_beta(cfg: &GbcConfig, grid: &BetaGrid, plan: &McPlan) -> Result<OptResult> {
    let plan = plan.validated()?;
    let search = SampleBatch::cached_or_streaming(&plan, cfg, SEARCH_STREAM, DEFAULT_MEMORY_BUDGET);
    let validation =
        SampleBatch::cached_or_streaming(&plan, cfg, VALIDATION_STREAM, DEFAULT_MEMORY_BUDGET);
    optimize_beta_on(cfg, grid, &search, &validation, false)
}

/// Exhaustive search on caller-supplied batches; `keep_table` retains every
/// grid point's search-batch rate.
pub fn optimize_beta_on(
    cfg: &GbcConfig,
    grid: &BetaGrid,
    search: &SampleBatch,
    validation: &SampleBatch,
    keep_table: bool,
) -> Result<OptResult> {
    let grid = grid.validated()?;
    search.check_shape(cfg)?;
    validation.check_shape(cfg)?;
    let k = cfg.users;

    if k == 1 {
        let none = BetaVector::new(Vec::new())?;
        let (search_rate, _) = jsc_sym_rate(cfg, &none, search)?;
        let (best_rate, alphas) = jsc_sym_rate(cfg, &none, validation)?;
        let table = keep_table.then(|| {
            vec![GridPoint {
                betas: Vec::new(),
                rate: search_rate.mean,
            }]
        });
        return Ok(OptResult {
            best_betas: none,
            best_rate,
            search_rate,
            alphas,
            evaluations: 1,
            grid,
            table,
        });
    }

    let total = grid.size(k)?;
    let tables = JscTables::build(cfg, search)?;
    let values = grid.values();
    let p = values.len();

    // a_means[t-1][g] for t < K and s_means[t-2][g] for t >= 2.
    let a_k = tables.mean(|i| tables.a_sample(i, k, 1.0));
    let jobs: Vec<(bool, usize, usize)> = (1..k)
        .flat_map(|t| (0..p).map(move |g| (true, t, g)))
        .chain((2..=k).flat_map(|t| (0..p).map(move |g| (false, t, g))))
        .collect();
    let means: Vec<f64> = jobs
        .par_iter()
        .map(|&(is_a, t, g)| {
            if is_a {
                tables.mean(|i| tables.a_sample(i, t, values[g]))
            } else {
                tables.mean(|i| tables.b_sum_sample(i, t, values[g]))
            }
        })
        .collect();
    let (a_flat, s_flat) = means.split_at((k - 1) * p);
    let a_at = |t: usize, g: usize| a_flat[(t - 1) * p + g];
    let s_at = |t: usize, g: usize| s_flat[(t - 2) * p + g];

    let digits = |mut idx: usize| {
        let mut d = vec![0usize; k - 1];
        for slot in d.iter_mut().rev() {
            *slot = idx % p;
            idx /= p;
        }
        d
    };
    let rates: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let d = digits(idx);
            let mut a = Vec::with_capacity(k);
            a.extend((1..k).map(|t| a_at(t, d[t - 1])));
            a.push(a_k);
            let s: Vec<f64> = (2..=k).map(|t| s_at(t, d[t - 2])).collect();
            if a.iter().all(|v| *v > 0.0) {
                jsc_rate_from_means(&a, &s)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    // First maximum in lexicographic beta order.
    let mut best = 0;
    for (idx, r) in rates.iter().enumerate() {
        if *r > rates[best] {
            best = idx;
        }
    }
    if !rates[best].is_finite() {
        return Err(Error::Degenerate(
            "no grid point has positive a_t terms".into(),
        ));
    }
    let best_betas = BetaVector::new(digits(best).into_iter().map(|g| values[g]).collect())?;
    let (search_rate, _) = tables.rate(&best_betas)?;
    let (best_rate, alphas) = jsc_sym_rate(cfg, &best_betas, validation)?;

    let table = keep_table.then(|| {
        rates
            .iter()
            .enumerate()
            .map(|(idx, r)| GridPoint {
                betas: digits(idx).into_iter().map(|g| values[g]).collect(),
                rate: *r,
            })
            .collect()
    });
    Ok(OptResult {
        best_betas,
        best_rate,
        search_rate,
        alphas,
        evaluations: total,
        grid,
        table,
    })
}

/// JSC rate at fixed compression noise on a fresh search batch.
pub fn rate_at_fixed_beta(cfg: &GbcConfig, betas: &BetaVector, plan: &McPlan) -> Result<RatePoint> {
    let plan = plan.validated()?;
    let batch = SampleBatch::cached_or_streaming(&plan, cfg, SEARCH_STREAM, DEFAULT_MEMORY_BUDGET);
    rate_at_fixed_beta_on(cfg, betas, &batch)
}

pub fn rate_at_fixed_beta_on(
    cfg: &GbcConfig,
    betas: &BetaVector,
    batch: &SampleBatch,
) -> Result<RatePoint> {
    let (rate, alphas) = jsc_sym_rate(cfg, betas, batch)?;
    Ok(RatePoint {
        snr_db: cfg.snr_db(),
        scheme: Scheme::JscFixedBeta,
        rate,
        betas: Some(betas.clone()),
        alphas: Some(alphas),
    })
}
