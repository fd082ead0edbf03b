//! Symmetric achievable rates on the fading Gaussian broadcast channel.
//!
//! All rates are in bits per channel use. Every expectation is a Monte Carlo
//! mean over a [`SampleBatch`]; schemes evaluated on the same batch share
//! their random numbers.
//!
//! The JSC scheme is parameterized by compression-noise ratios
//! `beta_1..beta_{K-1}`. For `t = 1..K`, with `T = {1} u {t+1..K}`:
//!
//! ```text
//! a_t     = E log2 det(I + snr H_T^H diag(I, I/beta_t) H_T)
//! b_{l,t} = E log2 det(I + snr/beta_{t-1} H_l (I + snr H_1^H H_1)^-1 H_l^H)
//! R       = a_1 / (K + sum_{j=2..K} C(K,j) prod_{t=2..j} (sum_{l<=t} b_{l,t}) / a_t)
//! ```
//!
//! and the phase fractions follow from the equality chain
//! `alpha_j a_j / C(K,j) = alpha_{j-1} (sum_{l<=j} b_{l,j}) / C(K,j-1)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::channel::{binomial, ChannelSample, GbcConfig};
use crate::error::{Error, Result};
use crate::linalg::{gram, identity, log2_det_hpd};
use crate::montecarlo::{estimate, McEstimate, SampleBatch};

/// Tolerance on `sum(alpha) = 1`.
pub const ALPHA_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// JSC with compression noise optimized over a grid.
    Jsc,
    /// JSC with the quantized-MAT-equivalent compression noise.
    JscFixedBeta,
    Tdma,
    /// Two-user MAT with power-normalized retransmission.
    Mat2,
    /// Quantized MAT.
    Qmat,
    /// Genie-aided upper bound.
    Upper,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Tdma,
        Scheme::Jsc,
        Scheme::JscFixedBeta,
        Scheme::Mat2,
        Scheme::Qmat,
        Scheme::Upper,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Jsc => "JSC",
            Scheme::JscFixedBeta => "JSC_FIXED_BETA",
            Scheme::Tdma => "TDMA",
            Scheme::Mat2 => "MAT2",
            Scheme::Qmat => "QMAT",
            Scheme::Upper => "UPPER",
        }
    }

    /// Whether the scheme is defined for `cfg`.
    pub fn supports(self, cfg: &GbcConfig) -> bool {
        match self {
            Scheme::Mat2 => is_two_user_miso(cfg),
            _ => true,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme tag {s:?}")))
    }
}

/// Compression-noise ratios `beta_1..beta_{K-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BetaVector(Vec<f64>);

impl BetaVector {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0) || b.is_nan()) {
            return Err(Error::InvalidConfig(format!(
                "compression-noise ratios must be positive, got {b}"
            )));
        }
        Ok(Self(betas))
    }

    pub fn uniform(users: usize, beta: f64) -> Result<Self> {
        Self::new(vec![beta; users.saturating_sub(1)])
    }

    /// `beta_{j-1} = 1 + (j - 1)(j + 2)` for `j = 2..K`: the compression noise
    /// equivalent to quantized MAT.
    pub fn qmat_equivalent(users: usize) -> Self {
        Self((2..=users).map(qmat_noise).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `beta_t`, 1-based.
    pub fn get(&self, t: usize) -> f64 {
        self.0[t - 1]
    }

    fn check_users(&self, users: usize) -> Result<()> {
        if self.0.len() + 1 != users {
            return Err(Error::Dimension(format!(
                "{users} users need {} compression-noise ratios, got {}",
                users - 1,
                self.0.len()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for BetaVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BetaVector> for Vec<f64> {
    fn from(b: BetaVector) -> Self {
        b.0
    }
}

/// Normalized phase lengths `alpha_1..alpha_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "phase fractions must be nonnegative".into(),
            ));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > ALPHA_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "phase fractions sum to {total}, expected 1"
            )));
        }
        Ok(Self(alphas))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `alpha_j`, 1-based.
    pub fn get(&self, j: usize) -> f64 {
        self.0[j - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for AlphaVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AlphaVector> for Vec<f64> {
    fn from(a: AlphaVector) -> Self {
        a.0
    }
}

/// One point of a rate-versus-SNR curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub rate: McEstimate,
    pub betas: Option<BetaVector>,
    pub alphas: Option<AlphaVector>,
}

impl RatePoint {
    pub fn baseline(cfg: &GbcConfig, scheme: Scheme, rate: McEstimate) -> Self {
        Self {
            snr_db: cfg.snr_db(),
            scheme,
            rate,
            betas: None,
            alphas: None,
        }
    }
}

fn is_two_user_miso(cfg: &GbcConfig) -> bool {
    cfg.users == 2 && cfg.tx_antennas == 2 && cfg.rx_antennas == 1
}

fn require_two_user_miso(cfg: &GbcConfig) -> Result<()> {
    if !is_two_user_miso(cfg) {
        return Err(Error::Dimension(format!(
            "two-user closed forms need K = 2, n_t = 2, n_r = 1; got K = {}, n_t = {}, n_r = {}",
            cfg.users, cfg.tx_antennas, cfg.rx_antennas
        )));
    }
    Ok(())
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `I + snr * sum_u weight_u H_u^H H_u` over the given users.
fn weighted_gram<I>(sample: &ChannelSample, snr: f64, terms: I) -> DMatrix<Complex64>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut m = identity(sample.tx_antennas());
    for (user, weight) in terms {
        m += gram(&sample.block(user)) * real(snr * weight);
    }
    m
}

fn check_index(name: &str, value: usize, lo: usize, hi: usize) -> Result<()> {
    if value < lo || value > hi {
        return Err(Error::IndexOutOfRange(format!(
            "{name} = {value} is outside {lo}..={hi}"
        )));
    }
    Ok(())
}

/// Per-sample integrand of `a_t`.
pub fn a_integrand(
    sample: &ChannelSample,
    cfg: &GbcConfig,
    t: usize,
    beta_t: Option<f64>,
) -> Result<f64> {
    let k = cfg.users;
    let inv_beta = match (t < k, beta_t) {
        (true, Some(b)) if b > 0.0 => 1.0 / b,
        (false, None) => 0.0,
        (true, _) => {
            return Err(Error::InvalidConfig(format!(
                "a_{t} needs a positive beta_{t}"
            )))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidConfig(format!(
                "a_{k} takes no compression-noise ratio"
            )))
        }
    };
    let terms = std::iter::once((1, 1.0)).chain((t + 1..=k).map(|u| (u, inv_beta)));
    log2_det_hpd(&weighted_gram(sample, cfg.snr, terms))
}

/// Per-sample integrand of `b_{l,t}`; it depends on `t` only through `beta_{t-1}`.
pub fn b_integrand(
    sample: &ChannelSample,
    cfg: &GbcConfig,
    l: usize,
    beta_prev: f64,
) -> Result<f64> {
    let a = weighted_gram(sample, cfg.snr, [(1, 1.0)]);
    let h_l = sample.block(l).adjoint();
    let (w, _) = crate::linalg::whiten(&a, &h_l)?;
    let inner = identity(cfg.rx_antennas) + w.adjoint() * &w * real(cfg.snr / beta_prev);
    log2_det_hpd(&inner)
}

pub fn a_term(
    cfg: &GbcConfig,
    t: usize,
    beta_t: Option<f64>,
    batch: &SampleBatch,
) -> Result<McEstimate> {
    batch.check_shape(cfg)?;
    check_index("t", t, 1, cfg.users)?;
    // Validate the beta/t pairing once up front.
    if (t < cfg.users) != beta_t.is_some() {
        return Err(Error::InvalidConfig(format!(
            "beta_t is required exactly when t < K (t = {t}, K = {})",
            cfg.users
        )));
    }
    estimate(batch, |s| a_integrand(s, cfg, t, beta_t))
}

pub fn b_term(
    cfg: &GbcConfig,
    l: usize,
    t: usize,
    beta_prev: f64,
    batch: &SampleBatch,
) -> Result<McEstimate> {
    batch.check_shape(cfg)?;
    check_index("t", t, 2, cfg.users)?;
    check_index("l", l, 1, t)?;
    if !(beta_prev > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "beta_{} must be positive, got {beta_prev}",
            t - 1
        )));
    }
    estimate(batch, |s| b_integrand(s, cfg, l, beta_prev))
}

/// Per-sample JSC integrands: `a[t-1] = a_t` for `t = 1..K` and
/// `b_sums[t-2] = sum_{l<=t} b_{l,t}` for `t = 2..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct JscTerms {
    pub a: Vec<f64>,
    pub b_sums: Vec<f64>,
}

pub fn jsc_sample_terms(
    sample: &ChannelSample,
    cfg: &GbcConfig,
    betas: &BetaVector,
) -> Result<JscTerms> {
    let k = cfg.users;
    let a = (1..=k)
        .map(|t| a_integrand(sample, cfg, t, (t < k).then(|| betas.get(t))))
        .collect::<Result<Vec<_>>>()?;

    let base = weighted_gram(sample, cfg.snr, [(1, 1.0)]);
    let all = sample.stacked().adjoint();
    let (w, _) = crate::linalg::whiten(&base, &all)?;
    let nr = cfg.rx_antennas;
    let b_sums = (2..=k)
        .map(|t| {
            let scale = real(cfg.snr / betas.get(t - 1));
            (1..=t)
                .map(|l| {
                    let wl = w.columns((l - 1) * nr, nr);
                    log2_det_hpd(&(identity(nr) + wl.adjoint() * wl * scale))
                })
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JscTerms { a, b_sums })
}

/// `a_1 / (K + sum_j C(K,j) prod_{t=2..j} s_t / a_t)` from term means.
pub fn jsc_rate_from_means(a: &[f64], b_sums: &[f64]) -> f64 {
    let k = a.len();
    let mut denom = k as f64;
    let mut prod = 1.0;
    for j in 2..=k {
        prod *= b_sums[j - 2] / a[j - 1];
        denom += binomial(k, j) * prod;
    }
    a[0] / denom
}

/// Phase fractions from the equality chain, normalized to sum to one.
pub fn jsc_alphas_from_means(a: &[f64], b_sums: &[f64]) -> Result<AlphaVector> {
    let k = a.len();
    let mut raw = Vec::with_capacity(k);
    raw.push(1.0);
    for j in 2..=k {
        let prev = raw[j - 2];
        raw.push(prev * binomial(k, j) / binomial(k, j - 1) * b_sums[j - 2] / a[j - 1]);
    }
    let total: f64 = raw.iter().sum();
    AlphaVector::new(raw.into_iter().map(|x| x / total).collect())
}

pub(crate) fn check_a_means(a: &[f64]) -> Result<()> {
    if let Some((t, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Degenerate(format!(
            "a_{} = {v} is not positive",
            t + 1
        )));
    }
    Ok(())
}

/// JSC symmetric rate at fixed compression noise, with the induced phase fractions.
pub fn jsc_sym_rate(
    cfg: &GbcConfig,
    betas: &BetaVector,
    batch: &SampleBatch,
) -> Result<(McEstimate, AlphaVector)> {
    batch.check_shape(cfg)?;
    betas.check_users(cfg.users)?;
    let k = cfg.users;
    let terms = batch.try_map(|s| jsc_sample_terms(s, cfg, betas))?;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(2 * k - 1);
    for t in 0..k {
        columns.push(terms.iter().map(|x| x.a[t]).collect());
    }
    for t in 0..k - 1 {
        columns.push(terms.iter().map(|x| x.b_sums[t]).collect());
    }
    let n = batch.len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    check_a_means(&means[..k])?;

    let rate = McEstimate::functional(
        &columns,
        |m| jsc_rate_from_means(&m[..k], &m[k..]),
        batch.source(),
    )?;
    let alphas = jsc_alphas_from_means(&means[..k], &means[k..])?;
    Ok((rate, alphas))
}

/// Per-sample integrands of the two-user closed form with `r = sigma_hat^2 / sigma^2`:
/// the 2x2 determinant term, `log2(1 + snr |h_1|^2)`, and the sum of both
/// side-information terms, all evaluated by scalar formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoUserTerms {
    pub det_term: f64,
    pub a2: f64,
    pub b_sum: f64,
}

pub fn two_user_sample_terms(
    sample: &ChannelSample,
    snr: f64,
    sigma_hat_ratio: f64,
) -> TwoUserTerms {
    let h = sample.stacked();
    let (h1, h2) = (h.row(0), h.row(1));
    let n1 = h1.norm_squared();
    let n2 = h2.norm_squared();
    // h_1 h_2^H
    let cross = h1[0] * h2[0].conj() + h1[1] * h2[1].conj();
    let c2 = cross.norm_sqr();
    let r = sigma_hat_ratio;

    let det = (1.0 + snr * n1) * (1.0 + snr / r * n2) - snr * snr / r * c2;
    let q1 = n1 / (1.0 + snr * n1);
    let q2 = n2 - snr * c2 / (1.0 + snr * n1);
    TwoUserTerms {
        det_term: det.log2(),
        a2: (snr * n1).ln_1p() / std::f64::consts::LN_2,
        b_sum: (snr / r * q1).ln_1p() / std::f64::consts::LN_2
            + (snr / r * q2.max(0.0)).ln_1p() / std::f64::consts::LN_2,
    }
}

/// Two-user JSC rate `(alpha_1 / 2) E[log2 det(I + diag(1, 1/r) snr H H^H)]`
/// with `alpha_1` chosen so the side-information constraint is tight.
pub fn two_user_jsc_rate(
    cfg: &GbcConfig,
    sigma_hat_ratio: f64,
    batch: &SampleBatch,
) -> Result<(McEstimate, f64)> {
    require_two_user_miso(cfg)?;
    batch.check_shape(cfg)?;
    if !(sigma_hat_ratio > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "compression-noise ratio must be positive, got {sigma_hat_ratio}"
        )));
    }
    let terms = batch.map(|s| two_user_sample_terms(s, cfg.snr, sigma_hat_ratio));
    let columns = vec![
        terms.iter().map(|t| t.det_term).collect::<Vec<_>>(),
        terms.iter().map(|t| t.a2).collect(),
        terms.iter().map(|t| t.b_sum).collect(),
    ];
    let alpha1 = |m: &[f64]| m[1] / (m[1] + 0.5 * m[2]);
    let rate = McEstimate::functional(&columns, |m| alpha1(m) * m[0] / 2.0, batch.source())?;
    let n = batch.len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    Ok((rate, alpha1(&means)))
}

/// `log2 det(I + snr H_1^H H_1)`.
fn single_user_integrand(sample: &ChannelSample, cfg: &GbcConfig) -> Result<f64> {
    log2_det_hpd(&weighted_gram(sample, cfg.snr, [(1, 1.0)]))
}

/// TDMA: `(1/K) E log2 det(I + snr H_1^H H_1)`.
pub fn tdma_rate(cfg: &GbcConfig, batch: &SampleBatch) -> Result<McEstimate> {
    batch.check_shape(cfg)?;
    Ok(estimate(batch, |s| single_user_integrand(s, cfg))?.scaled(1.0 / cfg.users as f64))
}

/// Two-user MAT: `(1/3) E log2 det(I + diag(1, sigma^2/sigma_H^2) snr H H^H)` with
/// `sigma_H^2 = sigma^2 (1 + 2 / |h'|^2)` and `h'` the sample's auxiliary coefficient.
pub fn mat2_rate(cfg: &GbcConfig, batch: &SampleBatch) -> Result<McEstimate> {
    require_two_user_miso(cfg)?;
    batch.check_shape(cfg)?;
    let est = estimate(batch, |s| {
        let noise = 1.0 + 2.0 / s.aux().norm_sqr();
        log2_det_hpd(&weighted_gram(s, cfg.snr, [(1, 1.0), (2, 1.0 / noise)]))
    })?;
    Ok(est.scaled(1.0 / 3.0))
}

/// Quantization noise of phase `j` in quantized MAT, `1 + (j - 1)(j + 2)`.
pub fn qmat_noise(j: usize) -> f64 {
    (1 + (j - 1) * (j + 2)) as f64
}

/// Quantized MAT: `(1/K) DoF E log2 det(I + snr H^H N^-1 H)`, `N` block-diagonal
/// with `qmat_noise(j)` on user `j`'s rows.
pub fn qmat_rate(cfg: &GbcConfig, batch: &SampleBatch) -> Result<McEstimate> {
    batch.check_shape(cfg)?;
    let k = cfg.users;
    let est = estimate(batch, |s| {
        log2_det_hpd(&weighted_gram(
            s,
            cfg.snr,
            (1..=k).map(|j| (j, 1.0 / qmat_noise(j))),
        ))
    })?;
    Ok(est.scaled(dof_sym_f64(k)? / k as f64))
}

/// Genie-aided bound `DoF_sym * E log2 det(I + snr H_1^H H_1)`, i.e.
/// `DoF_sym * K * R_TDMA`.
pub fn upper_bound(cfg: &GbcConfig, batch: &SampleBatch) -> Result<McEstimate> {
    batch.check_shape(cfg)?;
    let dof = dof_sym_f64(cfg.users)?;
    Ok(estimate(batch, |s| single_user_integrand(s, cfg))?.scaled(dof))
}

/// Optimal symmetric DoF with delayed CSIT, `(sum_{j=1..K} 1/j)^-1`, exactly.
pub fn dof_sym(users: usize) -> Result<BigRational> {
    if users < 1 {
        return Err(Error::InvalidConfig("DoF needs at least one user".into()));
    }
    let harmonic = (1..=users).fold(BigRational::zero(), |acc, j| {
        acc + BigRational::new(BigInt::one(), BigInt::from(j))
    });
    Ok(harmonic.recip())
}

pub fn dof_sym_f64(users: usize) -> Result<f64> {
    let d = dof_sym(users)?;
    d.to_f64()
        .ok_or_else(|| Error::Degenerate("DoF is not representable".into()))
}

/// Measured prelog `(R(snr_2) - R(snr_1)) / log2(snr_2 / snr_1)` of the JSC rate
/// with every `beta_i = 1`.
pub fn dof_slope_check(
    cfg: &GbcConfig,
    snr_db_pair: (f64, f64),
    batch: &SampleBatch,
) -> Result<f64> {
    let (lo, hi) = snr_db_pair;
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!(
            "slope needs snr_2 > snr_1, got {lo} dB and {hi} dB"
        )));
    }
    let betas = BetaVector::uniform(cfg.users, 1.0)?;
    let c1 = cfg.with_snr_db(lo)?;
    let c2 = cfg.with_snr_db(hi)?;
    let (r1, _) = jsc_sym_rate(&c1, &betas, batch)?;
    let (r2, _) = jsc_sym_rate(&c2, &betas, batch)?;
    Ok((r2.mean - r1.mean) / (c2.snr / c1.snr).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{McPlan, DEFAULT_MEMORY_BUDGET};
    use approx::assert_abs_diff_eq;

    fn batch(cfg: &GbcConfig, samples: usize, seed: u64) -> SampleBatch {
        let plan = McPlan::new(samples, seed).unwrap();
        SampleBatch::cached(&plan, cfg, 0, DEFAULT_MEMORY_BUDGET).unwrap()
    }

    #[test]
    fn scheme_tags() {
        for s in Scheme::ALL {
            assert_eq!(s.tag().parse::<Scheme>().unwrap(), s);
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.tag())
            );
        }
        assert!("GMAT".parse::<Scheme>().is_err());
    }

    #[test]
    fn vector_validation() {
        assert!(BetaVector::new(vec![1.0, 0.0]).is_err());
        assert!(BetaVector::new(vec![f64::NAN]).is_err());
        assert_eq!(BetaVector::qmat_equivalent(3).as_slice(), &[5.0, 11.0]);
        assert!(BetaVector::qmat_equivalent(1).is_empty());
        assert!(AlphaVector::new(vec![0.5, 0.4]).is_err());
        assert!(AlphaVector::new(vec![1.2, -0.2]).is_err());
        assert!(AlphaVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn qmat_noise_diagonal() {
        let d: Vec<f64> = (1..=3).map(qmat_noise).collect();
        assert_eq!(d, vec![1.0, 5.0, 11.0]);
    }

    #[test]
    fn dof_values() {
        assert_eq!(dof_sym(1).unwrap().to_string(), "1");
        assert_eq!(dof_sym(2).unwrap().to_string(), "2/3");
        assert_eq!(dof_sym(3).unwrap().to_string(), "6/11");
        assert!(dof_sym(0).is_err());
    }

    #[test]
    fn single_user_a_term() {
        let cfg = GbcConfig::new(1, 2, 1, 10.0).unwrap();
        let b = batch(&cfg, 2000, 3);
        let a1 = a_term(&cfg, 1, None, &b).unwrap();
        let direct = estimate(&b, |s| Ok((1.0 + 10.0 * s.block(1).norm_squared()).log2())).unwrap();
        assert_abs_diff_eq!(a1.mean, direct.mean, epsilon = 1e-12);
    }

    #[test]
    fn a_term_large_beta_limit() {
        let cfg = GbcConfig::miso(3, 10.0).unwrap();
        let b = batch(&cfg, 2000, 4);
        let a1 = a_term(&cfg, 1, Some(1e8), &b).unwrap();
        let single = a_term(&cfg, 3, None, &b).unwrap();
        assert_abs_diff_eq!(a1.mean, single.mean, epsilon = 1e-3);
    }

    #[test]
    fn a_term_matches_two_user_determinant() {
        let cfg = GbcConfig::miso(2, 10.0).unwrap();
        let b = batch(&cfg, 2000, 5);
        let a1 = a_term(&cfg, 1, Some(1.0), &b).unwrap();
        // Direct 2x2 determinant of I + snr H H^H, written out by hand.
        let direct = estimate(&b, |s| {
            let h = s.stacked();
            let n1 = h.row(0).norm_squared();
            let n2 = h.row(1).norm_squared();
            let c = (h[(0, 0)] * h[(1, 0)].conj() + h[(0, 1)] * h[(1, 1)].conj()).norm_sqr();
            Ok(((1.0 + 10.0 * n1) * (1.0 + 10.0 * n2) - 100.0 * c).log2())
        })
        .unwrap();
        assert_abs_diff_eq!(a1.mean, direct.mean, epsilon = 1e-10);
    }

    #[test]
    fn a_term_argument_errors() {
        let cfg = GbcConfig::miso(2, 10.0).unwrap();
        let b = batch(&cfg, 10, 1);
        assert!(a_term(&cfg, 1, None, &b).is_err());
        assert!(a_term(&cfg, 2, Some(1.0), &b).is_err());
        assert!(a_term(&cfg, 3, None, &b).is_err());
        assert!(matches!(
            b_term(&cfg, 3, 2, 1.0, &b),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(matches!(
            b_term(&cfg, 1, 1, 1.0, &b),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(b_term(&cfg, 1, 2, 0.0, &b).is_err());
        let other = GbcConfig::miso(3, 10.0).unwrap();
        assert!(matches!(tdma_rate(&other, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn b_term_limits() {
        let cfg = GbcConfig::miso(2, 10.0).unwrap();
        let b = batch(&cfg, 2000, 6);
        assert!(b_term(&cfg, 2, 2, 1e12, &b).unwrap().mean < 1e-9);
        let low = cfg.with_snr(1e-12).unwrap();
        assert!(b_term(&low, 2, 2, 1.0, &b).unwrap().mean < 1e-9);
    }

    #[test]
    fn b_term_high_snr_slopes() {
        let cfg = GbcConfig::miso(2, 30.0).unwrap();
        let b = batch(&cfg, 20_000, 7);
        let at = |db: f64, l: usize| {
            b_term(&cfg.with_snr_db(db).unwrap(), l, 2, 1.0, &b)
                .unwrap()
                .mean
        };
        let per_decade = 10f64.log2();
        // l = 1 stays bounded.
        let own: Vec<f64> = [30.0, 40.0, 50.0].iter().map(|d| at(*d, 1)).collect();
        assert!(own.iter().all(|v| *v < 2.0));
        assert!((own[2] - own[1]).abs() < 0.05 * per_decade);
        // l != 1 grows like log2(snr).
        let other: Vec<f64> = [30.0, 40.0, 50.0].iter().map(|d| at(*d, 2)).collect();
        for w in other.windows(2) {
            let slope = (w[1] - w[0]) / per_decade;
            assert!((0.95..1.05).contains(&slope), "slope {slope}");
        }
    }

    #[test]
    fn jsc_terms_match_per_term_integrands() {
        let cfg = GbcConfig::new(3, 2, 2, 5.0).unwrap();
        let betas = BetaVector::new(vec![0.7, 3.0]).unwrap();
        let b = batch(&cfg, 50, 8);
        for i in 0..b.len() {
            let s = b.sample(i);
            let terms = jsc_sample_terms(&s, &cfg, &betas).unwrap();
            for t in 2..=3 {
                let direct: f64 = (1..=t)
                    .map(|l| b_integrand(&s, &cfg, l, betas.get(t - 1)).unwrap())
                    .sum();
                assert_abs_diff_eq!(terms.b_sums[t - 2], direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn jsc_alphas_are_valid_and_consistent() {
        let cfg = GbcConfig::miso(3, 10.0).unwrap();
        let b = batch(&cfg, 5000, 9);
        let (rate, alphas) =
            jsc_sym_rate(&cfg, &BetaVector::new(vec![2.0, 4.0]).unwrap(), &b).unwrap();
        assert_abs_diff_eq!(alphas.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(alphas.as_slice().iter().all(|a| *a >= 0.0));
        // R = alpha_1 a_1 / K
        let a1 = a_term(&cfg, 1, Some(2.0), &b).unwrap();
        assert_abs_diff_eq!(rate.mean, alphas.get(1) * a1.mean / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn jsc_single_user_is_tdma() {
        let cfg = GbcConfig::new(1, 2, 1, 10.0).unwrap();
        let b = batch(&cfg, 1000, 10);
        let (rate, alphas) = jsc_sym_rate(&cfg, &BetaVector::new(vec![]).unwrap(), &b).unwrap();
        assert_eq!(alphas.as_slice(), &[1.0]);
        assert_abs_diff_eq!(
            rate.mean,
            tdma_rate(&cfg, &b).unwrap().mean,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_user_consistency_per_sample() {
        let cfg = GbcConfig::miso(2, 10.0).unwrap();
        let b = batch(&cfg, 200, 11);
        for beta in [0.1, 1.0, 10.0] {
            let betas = BetaVector::new(vec![beta]).unwrap();
            for i in 0..b.len() {
                let s = b.sample(i);
                let j = jsc_sample_terms(&s, &cfg, &betas).unwrap();
                let t = two_user_sample_terms(&s, cfg.snr, beta);
                assert_abs_diff_eq!(j.a[0], t.det_term, epsilon = 1e-9);
                assert_abs_diff_eq!(j.a[1], t.a2, epsilon = 1e-9);
                assert_abs_diff_eq!(j.b_sums[0], t.b_sum, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn two_user_side_information_limits() {
        let b = batch(&GbcConfig::miso(2, 50.0).unwrap(), 20_000, 12);
        let (_, alpha) = two_user_jsc_rate(&GbcConfig::miso(2, 50.0).unwrap(), 1.0, &b).unwrap();
        // Tends to 2/3 as snr grows; the bounded own-user term lags behind.
        assert!((alpha - 2.0 / 3.0).abs() < 0.02, "alpha_1 = {alpha}");

        let cfg = GbcConfig::miso(2, 10.0).unwrap();
        let (rate, alpha) = two_user_jsc_rate(&cfg, 1e8, &b).unwrap();
        assert_abs_diff_eq!(alpha, 1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(rate.mean, tdma_rate(&cfg, &b).unwrap().mean, epsilon = 1e-2);

        let wrong = GbcConfig::miso(3, 10.0).unwrap();
        assert!(matches!(
            two_user_jsc_rate(&wrong, 1.0, &b),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn baselines_vanish_at_zero_snr() {
        let cfg = GbcConfig::miso(2, -120.0).unwrap();
        let b = batch(&cfg, 500, 13);
        assert!(tdma_rate(&cfg, &b).unwrap().mean < 1e-9);
        assert!(mat2_rate(&cfg, &b).unwrap().mean < 1e-9);
        assert!(qmat_rate(&cfg, &b).unwrap().mean < 1e-9);
    }

    #[test]
    fn upper_bound_is_dof_times_k_tdma() {
        let cfg = GbcConfig::miso(3, 10.0).unwrap();
        let b = batch(&cfg, 1000, 14);
        let ub = upper_bound(&cfg, &b).unwrap();
        let tdma = tdma_rate(&cfg, &b).unwrap();
        assert_abs_diff_eq!(ub.mean, 6.0 / 11.0 * 3.0 * tdma.mean, epsilon = 1e-12);
    }

    #[test]
    fn slope_of_single_user() {
        let cfg = GbcConfig::new(1, 1, 1, 1.0).unwrap();
        let b = batch(&cfg, 20_000, 15);
        let slope = dof_slope_check(&cfg, (40.0, 60.0), &b).unwrap();
        assert_abs_diff_eq!(slope, 1.0, epsilon = 0.01);
        assert!(dof_slope_check(&cfg, (60.0, 40.0), &b).is_err());
    }
}
