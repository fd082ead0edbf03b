//! Channel instances and erasure-state algebra.
//!
//! User subsets are `K`-bit masks: user `k` (1-based) is bit `k - 1`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bitmask over users; bit `k - 1` set means user `k` is in the set.
pub type Mask = u32;

/// Largest user count supported by the `2^K` subset tables.
pub const MAX_USERS: usize = 20;

/// Sum-to-one tolerance for erasure pmfs.
pub const PMF_TOLERANCE: f64 = 1e-12;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Inverse of [`db_to_linear`]. Values produced from a 0.5 dB grid map back to
/// the exact grid value.
pub fn linear_to_db(linear: f64) -> f64 {
    let db = 10.0 * linear.log10();
    let snapped = (db * 2.0).round() / 2.0;
    if db_to_linear(snapped) == linear {
        snapped
    } else {
        db
    }
}

/// Mask with the first `users` bits set.
pub fn full_mask(users: usize) -> Mask {
    if users == 0 {
        0
    } else {
        Mask::MAX >> (Mask::BITS as usize - users)
    }
}

/// Mask of a single 1-based user.
pub fn user_mask(user: usize) -> Mask {
    1 << (user - 1)
}

/// 1-based members of a mask, ascending.
pub fn members(mask: Mask) -> impl Iterator<Item = usize> {
    (0..Mask::BITS as usize)
        .filter(move |b| mask >> b & 1 == 1)
        .map(|b| b + 1)
}

/// Iterates every submask of `mask`, including `mask` itself and the empty set.
pub fn submasks(mask: Mask) -> impl Iterator<Item = Mask> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & mask)
        };
        Some(cur)
    })
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

pub(crate) fn check_users(users: usize) -> Result<()> {
    if users == 0 || users > MAX_USERS {
        return Err(Error::InvalidConfig(format!(
            "user count must be in 1..={MAX_USERS}, got {users}"
        )));
    }
    Ok(())
}

/// A symmetric fading Gaussian broadcast channel.
///
/// `snr` is linear and normalized per transmit antenna, `P / (n_t sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbcConfig {
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub snr: f64,
}

impl GbcConfig {
    pub fn new(users: usize, tx_antennas: usize, rx_antennas: usize, snr: f64) -> Result<Self> {
        check_users(users)?;
        if tx_antennas == 0 || rx_antennas == 0 {
            return Err(Error::InvalidConfig(
                "antenna counts must be at least 1".into(),
            ));
        }
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "snr must be positive and finite, got {snr}"
            )));
        }
        Ok(Self {
            users,
            tx_antennas,
            rx_antennas,
            snr,
        })
    }

    pub fn from_db(
        users: usize,
        tx_antennas: usize,
        rx_antennas: usize,
        snr_db: f64,
    ) -> Result<Self> {
        Self::new(users, tx_antennas, rx_antennas, db_to_linear(snr_db))
    }

    /// The MISO setting used throughout the figures: `n_t = K`, `n_r = 1`.
    pub fn miso(users: usize, snr_db: f64) -> Result<Self> {
        Self::from_db(users, users, 1, snr_db)
    }

    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr)
    }

    pub fn with_snr(self, snr: f64) -> Result<Self> {
        Self::new(self.users, self.tx_antennas, self.rx_antennas, snr)
    }

    pub fn with_snr_db(self, snr_db: f64) -> Result<Self> {
        self.with_snr(db_to_linear(snr_db))
    }

    /// Rows of the stacked channel matrix, `K * n_r`.
    pub fn stacked_rows(&self) -> usize {
        self.users * self.rx_antennas
    }

    /// True when two configurations draw identically shaped samples.
    pub fn same_shape(&self, other: &GbcConfig) -> bool {
        self.users == other.users
            && self.tx_antennas == other.tx_antennas
            && self.rx_antennas == other.rx_antennas
    }
}

/// Identifies one counter-based random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleStream {
    pub seed: u64,
    pub stream: u64,
}

impl SampleStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }
}

// Each sample owns a disjoint window of 2^24 ChaCha words.
const WORDS_PER_SAMPLE_LOG2: u32 = 24;

/// Squared magnitude below which the auxiliary coefficient is redrawn.
pub const AUX_REJECT_BELOW: f64 = 1e-300;

/// One fading realization: the stacked `(K n_r) x n_t` matrix `[H_1; ...; H_K]`
/// plus an independent scalar coefficient for schemes with an extra
/// retransmission slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    stacked: DMatrix<Complex64>,
    rx_antennas: usize,
    aux: Complex64,
}

impl ChannelSample {
    pub fn from_blocks(blocks: &[DMatrix<Complex64>], aux: Complex64) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Dimension("at least one block is required".into()))?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 || blocks.iter().any(|b| b.shape() != (rows, cols)) {
            return Err(Error::Dimension(
                "all blocks must share one non-empty shape".into(),
            ));
        }
        let mut stacked = DMatrix::zeros(rows * blocks.len(), cols);
        for (k, b) in blocks.iter().enumerate() {
            stacked.rows_mut(k * rows, rows).copy_from(b);
        }
        Ok(Self {
            stacked,
            rx_antennas: rows,
            aux,
        })
    }

    pub fn users(&self) -> usize {
        self.stacked.nrows() / self.rx_antennas
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.stacked.ncols()
    }

    /// `H_user`, 1-based, as an `n_r x n_t` view.
    pub fn block(&self, user: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        self.stacked
            .rows((user - 1) * self.rx_antennas, self.rx_antennas)
    }

    pub fn stacked(&self) -> &DMatrix<Complex64> {
        &self.stacked
    }

    pub fn aux(&self) -> Complex64 {
        self.aux
    }

    pub(crate) fn heap_bytes(cfg: &GbcConfig) -> usize {
        cfg.stacked_rows() * cfg.tx_antennas * std::mem::size_of::<Complex64>()
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws sample `index` of `stream`: every entry is CN(0, 1).
///
/// The result depends only on `(stream.seed, stream.stream, index)` and the
/// channel shape, never on the snr or on call order.
pub fn draw_channel(cfg: &GbcConfig, stream: SampleStream, index: u64) -> ChannelSample {
    let mut rng = ChaCha8Rng::seed_from_u64(stream.seed);
    rng.set_stream(stream.stream);
    rng.set_word_pos(u128::from(index) << WORDS_PER_SAMPLE_LOG2);

    let rows = cfg.stacked_rows();
    // Row-major draw order so that user k's block is contiguous in the stream.
    let stacked = DMatrix::from_row_iterator(
        rows,
        cfg.tx_antennas,
        (0..rows * cfg.tx_antennas).map(|_| complex_normal(&mut rng)),
    );
    let aux = loop {
        let c = complex_normal(&mut rng);
        if c.norm_sqr() >= AUX_REJECT_BELOW {
            break c;
        }
    };
    ChannelSample {
        stacked,
        rx_antennas: cfg.rx_antennas,
        aux,
    }
}

/// Joint distribution of the erasure pattern: `prob(U)` is the probability
/// that exactly the users in `U` are erased.
#[derive(Clone, Debug, PartialEq)]
pub struct ErasurePmf {
    users: usize,
    probs: Vec<f64>,
}

impl ErasurePmf {
    pub fn new(users: usize, probs: Vec<f64>) -> Result<Self> {
        check_users(users)?;
        if probs.len() != 1 << users {
            return Err(Error::Dimension(format!(
                "{users} users need {} pattern probabilities, got {}",
                1usize << users,
                probs.len()
            )));
        }
        if let Some((mask, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidDistribution(format!(
                "probs[{mask}] = {p} is outside [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "pattern probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { users, probs })
    }

    /// Users erased independently, each with probability `epsilon`.
    pub fn independent(users: usize, epsilon: f64) -> Result<Self> {
        check_users(users)?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidDistribution(format!(
                "erasure probability {epsilon} is outside [0, 1]"
            )));
        }
        let probs = (0..1u32 << users)
            .map(|m| {
                let e = m.count_ones() as i32;
                epsilon.powi(e) * (1.0 - epsilon).powi(users as i32 - e)
            })
            .collect();
        Self::new(users, probs)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn full(&self) -> Mask {
        full_mask(self.users)
    }

    pub fn prob(&self, erased: Mask) -> f64 {
        self.probs.get(erased as usize).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn check_subset(&self, mask: Mask) -> Result<()> {
        if mask & !self.full() != 0 {
            return Err(Error::SubsetOutOfRange {
                mask,
                users: self.users,
            });
        }
        Ok(())
    }

    /// Probability that every user in `set` is erased; 1 for the empty set.
    pub fn delta_of(&self, set: Mask) -> Result<f64> {
        self.check_subset(set)?;
        let rest = self.full() & !set;
        Ok(submasks(rest)
            .map(|extra| self.probs[(set | extra) as usize])
            .sum())
    }

    /// Probability that all of `erased` are erased while all of `received`
    /// get the symbol, summed directly from the pattern table.
    pub fn phi_of(&self, erased: Mask, received: Mask) -> Result<f64> {
        self.check_disjoint(erased, received)?;
        let free = self.full() & !erased & !received;
        Ok(submasks(free)
            .map(|extra| self.probs[(erased | extra) as usize])
            .sum())
    }

    /// Same quantity as [`ErasurePmf::phi_of`], by inclusion-exclusion over
    /// `delta_of`.
    pub fn phi_inclusion_exclusion(&self, erased: Mask, received: Mask) -> Result<f64> {
        self.check_disjoint(erased, received)?;
        let mut acc = 0.0;
        for u in submasks(received) {
            let d = self.delta_of(erased | u)?;
            if u.count_ones() % 2 == 0 {
                acc += d;
            } else {
                acc -= d;
            }
        }
        Ok(acc)
    }

    fn check_disjoint(&self, erased: Mask, received: Mask) -> Result<()> {
        self.check_subset(erased)?;
        self.check_subset(received)?;
        if erased & received != 0 {
            return Err(Error::OverlappingSets {
                first: erased,
                second: received,
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ErasurePmfJson {
    #[serde(rename = "K")]
    users: usize,
    probs: BTreeMap<String, f64>,
}

impl Serialize for ErasurePmf {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;

        struct Probs<'a>(&'a [f64]);
        impl Serialize for Probs<'_> {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let nonzero: Vec<_> = self
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .collect();
                let mut map = s.serialize_map(Some(nonzero.len()))?;
                for (mask, p) in nonzero {
                    map.serialize_entry(&mask.to_string(), p)?;
                }
                map.end()
            }
        }

        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("K", &self.users)?;
        map.serialize_entry("probs", &Probs(&self.probs))?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for ErasurePmf {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ErasurePmfJson::deserialize(deserializer)?;
        if raw.users == 0 || raw.users > MAX_USERS {
            return Err(D::Error::custom(format!(
                "K must be in 1..={MAX_USERS}, got {}",
                raw.users
            )));
        }
        let mut probs = vec![0.0; 1 << raw.users];
        for (key, p) in raw.probs {
            let mask: usize = key.parse().map_err(|_| {
                D::Error::custom(format!("probs key {key:?} is not an integer mask"))
            })?;
            let slot = probs
                .get_mut(mask)
                .ok_or_else(|| D::Error::custom(format!("probs key {mask} exceeds 2^K - 1")))?;
            *slot = p;
        }
        ErasurePmf::new(raw.users, probs).map_err(D::Error::custom)
    }
}

/// Erasure probabilities of a cardinality-symmetric channel: `deltas[j - 1]`
/// is the probability that any fixed set of `j` users is erased.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymmetricDeltasJson", into = "SymmetricDeltasJson")]
pub struct SymmetricDeltas {
    deltas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SymmetricDeltasJson {
    #[serde(rename = "K")]
    users: usize,
    deltas: Vec<f64>,
}

impl TryFrom<SymmetricDeltasJson> for SymmetricDeltas {
    type Error = Error;

    fn try_from(raw: SymmetricDeltasJson) -> Result<Self> {
        if raw.deltas.len() != raw.users {
            return Err(Error::Dimension(format!(
                "K = {} but {} deltas were given",
                raw.users,
                raw.deltas.len()
            )));
        }
        SymmetricDeltas::new(raw.deltas)
    }
}

impl From<SymmetricDeltas> for SymmetricDeltasJson {
    fn from(d: SymmetricDeltas) -> Self {
        Self {
            users: d.deltas.len(),
            deltas: d.deltas,
        }
    }
}

impl SymmetricDeltas {
    /// Requires `1 >= delta_1 >= delta_2 >= ... >= delta_K >= 0`.
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        check_users(deltas.len())?;
        if deltas.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::InvalidDistribution(
                "every delta must lie in [0, 1]".into(),
            ));
        }
        if let Some(j) = deltas.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidDistribution(format!(
                "delta_{} = {} exceeds delta_{} = {}",
                j + 2,
                deltas[j + 1],
                j + 1,
                deltas[j]
            )));
        }
        Ok(Self { deltas })
    }

    /// i.i.d. erasures: `delta_j = epsilon^j`.
    pub fn independent(users: usize, epsilon: f64) -> Result<Self> {
        Self::new((1..=users).map(|j| epsilon.powi(j as i32)).collect())
    }

    /// Exchangeable channel built from the distribution of the number of
    /// erased users: `counts[m]` is the probability that exactly `m` users are
    /// erased, spread uniformly over the patterns of that size.
    pub fn from_count_distribution(counts: &[f64]) -> Result<Self> {
        let users = counts.len().saturating_sub(1);
        check_users(users)?;
        let total: f64 = counts.iter().sum();
        if counts.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(
                "erased-count probabilities must lie in [0, 1] and sum to 1".into(),
            ));
        }
        let deltas = (1..=users)
            .map(|j| {
                (j..=users)
                    .map(|m| counts[m] * binomial(users - j, m - j) / binomial(users, m))
                    .sum::<f64>()
                    .min(1.0)
            })
            .collect();
        Self::new(deltas)
    }

    pub fn users(&self) -> usize {
        self.deltas.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.deltas
    }

    /// `delta_j` with the convention `delta_0 = 1`.
    pub fn delta(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.deltas[j - 1]
        }
    }

    /// `phi_{a,b}`: probability that a fixed set of `a` users is erased while a
    /// disjoint fixed set of `b` users receives.
    pub fn phi(&self, erased: usize, received: usize) -> f64 {
        (0..=received)
            .map(|u| {
                let term = binomial(received, u) * self.delta(erased + u);
                if u % 2 == 0 {
                    term
                } else {
                    -term
                }
            })
            .sum()
    }

    pub(crate) fn require_not_all_erased(&self) -> Result<()> {
        if self.delta(self.users()) >= 1.0 {
            return Err(Error::AllErased);
        }
        Ok(())
    }
}

/// Materializes the cardinality-symmetric pmf whose `delta_of(F)` equals
/// `delta_{|F|}`.
pub fn symmetric_pmf(deltas: &SymmetricDeltas) -> Result<ErasurePmf> {
    let users = deltas.users();
    let mut by_count = vec![0.0; users + 1];
    for (erased, slot) in by_count.iter_mut().enumerate() {
        *slot = deltas.phi(erased, users - erased);
    }
    let mut probs = Vec::with_capacity(1 << users);
    for mask in 0..1u32 << users {
        let p = by_count[mask.count_ones() as usize];
        if p < -PMF_TOLERANCE {
            return Err(Error::InconsistentDeltas { mask, prob: p });
        }
        probs.push(p.max(0.0));
    }
    // Renormalize away clamping residue so the sum check stays at 1e-12.
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    ErasurePmf::new(users, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pmf3() -> ErasurePmf {
        let raw = [0.05, 0.1, 0.2, 0.08, 0.12, 0.15, 0.1, 0.2];
        ErasurePmf::new(3, raw.to_vec()).unwrap()
    }

    #[test]
    fn masks() {
        assert_eq!(full_mask(3), 0b111);
        assert_eq!(full_mask(20), 0xFFFFF);
        assert_eq!(members(0b1010).collect::<Vec<_>>(), vec![2, 4]);
        let mut subs: Vec<_> = submasks(0b101).collect();
        subs.sort();
        assert_eq!(subs, vec![0, 1, 4, 5]);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(20, 10), 184756.0);
    }

    #[test]
    fn db_grid_round_trip() {
        for i in -40..=160 {
            let db = f64::from(i) * 0.5;
            assert_eq!(linear_to_db(db_to_linear(db)), db, "{db} dB");
        }
    }

    #[test]
    fn config_validation() {
        assert!(GbcConfig::new(0, 1, 1, 1.0).is_err());
        assert!(GbcConfig::new(2, 0, 1, 1.0).is_err());
        assert!(GbcConfig::new(2, 2, 1, 0.0).is_err());
        assert!(GbcConfig::new(2, 2, 1, f64::NAN).is_err());
        assert!(GbcConfig::new(21, 2, 1, 1.0).is_err());
        assert_abs_diff_eq!(GbcConfig::miso(2, 10.0).unwrap().snr, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn draw_shape_and_determinism() {
        let cfg = GbcConfig::miso(2, 0.0).unwrap();
        let s = SampleStream::new(7, 0);
        let a = draw_channel(&cfg, s, 11);
        assert_eq!(a.stacked().shape(), (2, 2));
        assert_eq!(a.block(2).shape(), (1, 2));
        assert_eq!(a, draw_channel(&cfg, s, 11));
        assert_ne!(a, draw_channel(&cfg, s, 12));
        assert_ne!(a, draw_channel(&cfg, SampleStream::new(7, 1), 11));
        // The snr does not enter the draw.
        assert_eq!(a, draw_channel(&cfg.with_snr(1e3).unwrap(), s, 11));
    }

    #[test]
    fn draw_unit_variance() {
        let cfg = GbcConfig::new(2, 3, 2, 1.0).unwrap();
        let s = SampleStream::new(3, 0);
        let n = 200_000u64;
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut real_sq = 0.0;
        for i in 0..n {
            let h = draw_channel(&cfg, s, i);
            for z in h.stacked().iter() {
                sum += z.norm_sqr();
                real_sq += z.re * z.re;
                count += 1;
            }
        }
        assert_abs_diff_eq!(sum / count as f64, 1.0, epsilon = 0.01);
        assert_abs_diff_eq!(real_sq / count as f64, 0.5, epsilon = 0.01);
    }

    #[test]
    fn from_blocks_matches_block_views() {
        let b1 = DMatrix::from_element(1, 2, Complex64::new(1.0, 0.0));
        let b2 = DMatrix::from_element(1, 2, Complex64::new(0.0, 2.0));
        let s = ChannelSample::from_blocks(&[b1.clone(), b2.clone()], Complex64::new(1.0, 0.0))
            .unwrap();
        assert_eq!(s.users(), 2);
        assert_eq!(s.block(1), b1);
        assert_eq!(s.block(2), b2);
        assert!(ChannelSample::from_blocks(&[], Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn pmf_validation() {
        assert!(ErasurePmf::new(2, vec![0.5, 0.5, 0.0]).is_err());
        assert!(ErasurePmf::new(2, vec![0.5, 0.6, -0.1, 0.0]).is_err());
        assert!(ErasurePmf::new(2, vec![0.5, 0.4, 0.0, 0.0]).is_err());
        assert!(ErasurePmf::new(2, vec![0.25; 4]).is_ok());
    }

    #[test]
    fn delta_examples() {
        let pmf = ErasurePmf::independent(2, 0.5).unwrap();
        assert_abs_diff_eq!(pmf.delta_of(0b01).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(pmf.delta_of(0).unwrap(), 1.0);
        assert!(matches!(
            pmf.delta_of(0b100),
            Err(Error::SubsetOutOfRange { .. })
        ));

        // Direct summation over the eight masks.
        let pmf = pmf3();
        let brute: f64 = (0..8u32)
            .filter(|u| u & 0b011 == 0b011)
            .map(|u| pmf.probs()[u as usize])
            .sum();
        assert_abs_diff_eq!(pmf.delta_of(0b011).unwrap(), brute, epsilon = 1e-15);
    }

    #[test]
    fn phi_examples() {
        let pmf = ErasurePmf::independent(2, 0.5).unwrap();
        assert_abs_diff_eq!(pmf.phi_of(0b01, 0b10).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(pmf.phi_of(0b01, 0).unwrap(), pmf.delta_of(0b01).unwrap());
        assert!(matches!(
            pmf.phi_of(0b11, 0b10),
            Err(Error::OverlappingSets { .. })
        ));

        // User 3 erased, users 1 and 2 received: enumerate the state space.
        let pmf = pmf3();
        let mut brute = 0.0;
        for state in 0..8u32 {
            let erased = |k: u32| state >> (k - 1) & 1 == 1;
            if erased(3) && !erased(1) && !erased(2) {
                brute += pmf.probs()[state as usize];
            }
        }
        assert_abs_diff_eq!(pmf.phi_of(0b100, 0b011).unwrap(), brute, epsilon = 1e-15);
        assert_abs_diff_eq!(
            pmf.phi_inclusion_exclusion(0b100, 0b011).unwrap(),
            brute,
            epsilon = 1e-12
        );
    }

    #[test]
    fn symmetric_pmf_examples() {
        let d = SymmetricDeltas::new(vec![0.5, 0.25]).unwrap();
        let pmf = symmetric_pmf(&d).unwrap();
        for p in pmf.probs() {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-15);
        }

        let pmf = symmetric_pmf(&SymmetricDeltas::new(vec![0.0; 3]).unwrap()).unwrap();
        assert_eq!(pmf.prob(0), 1.0);
        assert!(pmf.probs()[1..].iter().all(|p| *p == 0.0));

        let d = SymmetricDeltas::new(vec![0.5, 0.25, 0.125]).unwrap();
        let pmf = symmetric_pmf(&d).unwrap();
        for f in 1..8u32 {
            assert_abs_diff_eq!(
                pmf.delta_of(f).unwrap(),
                d.delta(f.count_ones() as usize),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn symmetric_pmf_rejects_inconsistent_deltas() {
        // Pairs erased as often as single users leaves P(exactly {1}) < 0.
        let d = SymmetricDeltas::new(vec![0.2, 0.2, 0.0]).unwrap();
        assert!(matches!(
            symmetric_pmf(&d),
            Err(Error::InconsistentDeltas { .. })
        ));
    }

    #[test]
    fn deltas_validation() {
        assert!(SymmetricDeltas::new(vec![0.2, 0.3]).is_err());
        assert!(SymmetricDeltas::new(vec![1.2]).is_err());
        assert!(SymmetricDeltas::new(vec![]).is_err());
        let d = SymmetricDeltas::from_count_distribution(&[0.25, 0.5, 0.25]).unwrap();
        assert_abs_diff_eq!(d.delta(1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.delta(2), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(d.phi(1, 1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn json_schemas() {
        let pmf: ErasurePmf = serde_json::from_str(
            r#"{"K": 2, "probs": {"0": 0.25, "1": 0.25, "2": 0.25, "3": 0.25}}"#,
        )
        .unwrap();
        assert_eq!(pmf, ErasurePmf::independent(2, 0.5).unwrap());
        let missing: ErasurePmf = serde_json::from_str(r#"{"K": 2, "probs": {"3": 1.0}}"#).unwrap();
        assert_eq!(missing.prob(0), 0.0);
        assert!(serde_json::from_str::<ErasurePmf>(r#"{"K": 2, "probs": {"4": 1.0}}"#).is_err());
        let text = serde_json::to_string(&missing).unwrap();
        assert_eq!(text, r#"{"K":2,"probs":{"3":1.0}}"#);

        let d: SymmetricDeltas =
            serde_json::from_str(r#"{"K": 2, "deltas": [0.5, 0.25]}"#).unwrap();
        assert_eq!(d.as_slice(), &[0.5, 0.25]);
        assert!(
            serde_json::from_str::<SymmetricDeltas>(r#"{"K": 3, "deltas": [0.5, 0.25]}"#).is_err()
        );
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"K":2,"deltas":[0.5,0.25]}"#
        );
    }
}
