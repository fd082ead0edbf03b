//! Erasure broadcast channel with state feedback: membership in the JSC
//! achievable region, the symmetric capacity, and the phase-length allocation
//! that achieves it.
//!
//! Rates are in bits per channel use when `alphabet_bits = log2 |X|`.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::channel::{
    binomial, full_mask, members, submasks, user_mask, ErasurePmf, Mask, SymmetricDeltas,
};
use crate::error::{Error, Result};
use crate::gbc::AlphaVector;

/// A constraint counts as satisfied when its slack is at least `-FEASIBILITY_TOLERANCE`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Tolerance on each phase distribution summing to one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-10;

/// Largest `K` for which all `K!` orderings are enumerated.
pub const MAX_ENUMERATED_USERS: usize = 8;

fn check_alphabet(bits: f64) -> Result<()> {
    if !(bits > 0.0 && bits.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "alphabet_bits must be positive, got {bits}"
        )));
    }
    Ok(())
}

fn check_rates(rates: &[f64], users: usize) -> Result<()> {
    if rates.len() != users {
        return Err(Error::Dimension(format!(
            "{users} users but {} rates",
            rates.len()
        )));
    }
    if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "rates must be finite and nonnegative, got {r}"
        )));
    }
    Ok(())
}

fn masks_by_size(users: usize, size: usize) -> impl Iterator<Item = Mask> {
    (1..=full_mask(users)).filter(move |m| m.count_ones() as usize == size)
}

/// Subset tables travel as `{"mask": value}` objects holding the nonzero entries.
fn mask_table_from_json(users: usize, raw: BTreeMap<Mask, f64>) -> Result<Vec<f64>> {
    let mut table = vec![0.0; 1 << users];
    for (mask, value) in raw {
        if mask == 0 || mask as usize >= table.len() {
            return Err(Error::SubsetOutOfRange { mask, users });
        }
        table[mask as usize] = value;
    }
    Ok(table)
}

fn mask_table_to_json(table: &[f64]) -> BTreeMap<Mask, f64> {
    table
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(m, v)| (m as Mask, *v))
        .collect()
}

/// Phase fractions and the per-phase distributions of the served subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EbcSchemeParamsJson", into = "EbcSchemeParamsJson")]
pub struct EbcSchemeParams {
    alphas: AlphaVector,
    /// `q2[J] = P(Q_2^{(|J|)} = J)`, indexed by mask.
    q2: Vec<f64>,
    alphabet_bits: f64,
}

#[derive(Serialize, Deserialize)]
struct EbcSchemeParamsJson {
    alphas: AlphaVector,
    q2: BTreeMap<Mask, f64>,
    alphabet_bits: f64,
}

impl TryFrom<EbcSchemeParamsJson> for EbcSchemeParams {
    type Error = Error;
    fn try_from(raw: EbcSchemeParamsJson) -> Result<Self> {
        let users = raw.alphas.len();
        crate::channel::check_users(users)?;
        let q2 = mask_table_from_json(users, raw.q2)?;
        EbcSchemeParams::new(raw.alphas, q2, raw.alphabet_bits)
    }
}

impl From<EbcSchemeParams> for EbcSchemeParamsJson {
    fn from(p: EbcSchemeParams) -> Self {
        Self {
            q2: mask_table_to_json(&p.q2),
            alphas: p.alphas,
            alphabet_bits: p.alphabet_bits,
        }
    }
}

impl EbcSchemeParams {
    pub fn new(alphas: AlphaVector, q2: Vec<f64>, alphabet_bits: f64) -> Result<Self> {
        let users = alphas.len();
        crate::channel::check_users(users)?;
        check_alphabet(alphabet_bits)?;
        if q2.len() != 1 << users {
            return Err(Error::Dimension(format!(
                "{users} users need a subset table of length {}, got {}",
                1usize << users,
                q2.len()
            )));
        }
        if q2[0] != 0.0 || q2.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidDistribution(
                "subset probabilities must lie in [0, 1] and the empty set has none".into(),
            ));
        }
        for j in 1..=users {
            let total: f64 = masks_by_size(users, j).map(|m| q2[m as usize]).sum();
            if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "phase-{j} subset probabilities sum to {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            alphas,
            q2,
            alphabet_bits,
        })
    }

    /// Every phase serves each subset of its size equally often.
    pub fn uniform(alphas: AlphaVector, alphabet_bits: f64) -> Result<Self> {
        let users = alphas.len();
        crate::channel::check_users(users)?;
        let mut q2 = vec![0.0; 1 << users];
        for (m, p) in q2.iter_mut().enumerate().skip(1) {
            *p = 1.0 / binomial(users, (m as Mask).count_ones() as usize);
        }
        Self::new(alphas, q2, alphabet_bits)
    }

    pub fn users(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &AlphaVector {
        &self.alphas
    }

    pub fn q2(&self, set: Mask) -> f64 {
        self.q2.get(set as usize).copied().unwrap_or(0.0)
    }

    pub fn alphabet_bits(&self) -> f64 {
        self.alphabet_bits
    }

    /// `alpha_{|J|} P(Q_2 = J)`.
    pub fn weight(&self, set: Mask) -> f64 {
        if set == 0 {
            return 0.0;
        }
        let q = self.q2(set);
        if q == 0.0 {
            0.0
        } else {
            self.alphas.get(set.count_ones() as usize) * q
        }
    }
}

/// Normalized phase lengths per served subset, `mu_J = alpha_{|J|} P(Q_2 = J)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MuAllocationJson", into = "MuAllocationJson")]
pub struct MuAllocation {
    users: usize,
    mu: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MuAllocationJson {
    #[serde(rename = "K")]
    users: usize,
    mu: BTreeMap<Mask, f64>,
}

impl TryFrom<MuAllocationJson> for MuAllocation {
    type Error = Error;
    fn try_from(raw: MuAllocationJson) -> Result<Self> {
        crate::channel::check_users(raw.users)?;
        let mu = mask_table_from_json(raw.users, raw.mu)?;
        MuAllocation::new(raw.users, mu)
    }
}

impl From<MuAllocation> for MuAllocationJson {
    fn from(m: MuAllocation) -> Self {
        Self {
            users: m.users,
            mu: mask_table_to_json(&m.mu),
        }
    }
}

impl MuAllocation {
    pub fn new(users: usize, mu: Vec<f64>) -> Result<Self> {
        crate::channel::check_users(users)?;
        if mu.len() != 1 << users {
            return Err(Error::Dimension(format!(
                "{users} users need a subset table of length {}, got {}",
                1usize << users,
                mu.len()
            )));
        }
        if mu[0] != 0.0 || mu.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "phase weights must be nonnegative and the empty set has none".into(),
            ));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "phase weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { users, mu })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, set: Mask) -> f64 {
        self.mu.get(set as usize).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    /// `mu_{k}` for a single user, 1-based.
    pub fn singleton(&self, user: usize) -> f64 {
        self.get(user_mask(user))
    }

    /// Symmetric rate the allocation supports, `min_k mu_{k} (1 - delta_K) log|X|`.
    pub fn symmetric_rate(&self, deltas: &SymmetricDeltas, alphabet_bits: f64) -> Result<f64> {
        check_same_users(self.users, deltas.users())?;
        check_alphabet(alphabet_bits)?;
        let k = self.users;
        let smallest = (1..=k)
            .map(|u| self.singleton(u))
            .fold(f64::INFINITY, f64::min);
        Ok(smallest * (1.0 - deltas.delta(k)) * alphabet_bits)
    }

    /// `alpha_j = sum_{|J| = j} mu_J` and `P(Q_2 = J) = mu_J / alpha_j`; a phase
    /// with zero length gets the uniform distribution.
    pub fn to_scheme_params(&self, alphabet_bits: f64) -> Result<EbcSchemeParams> {
        let k = self.users;
        let alphas: Vec<f64> = (1..=k)
            .map(|j| masks_by_size(k, j).map(|m| self.mu[m as usize]).sum())
            .collect();
        let total: f64 = alphas.iter().sum();
        let alphas = AlphaVector::new(alphas.into_iter().map(|a| a / total).collect())?;
        let mut q2 = vec![0.0; 1 << k];
        for (m, q) in q2.iter_mut().enumerate().skip(1) {
            let j = (m as Mask).count_ones() as usize;
            let a = alphas.get(j);
            *q = if a > 0.0 {
                self.mu[m] / total / a
            } else {
                1.0 / binomial(k, j)
            };
        }
        EbcSchemeParams::new(alphas, q2, alphabet_bits)
    }
}

fn check_same_users(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} users versus {b} users")));
    }
    Ok(())
}

/// Symmetric capacity `log|X| / sum_k 1 / (1 - delta_k)`.
pub fn sym_rate_ebc(deltas: &SymmetricDeltas, alphabet_bits: f64) -> Result<f64> {
    deltas.require_not_all_erased()?;
    check_alphabet(alphabet_bits)?;
    let denom: f64 = deltas.as_slice().iter().map(|d| 1.0 / (1.0 - d)).sum();
    Ok(alphabet_bits / denom)
}

/// Phase lengths achieving the symmetric capacity.
///
/// Singletons start equal; then, for every `J` with `|J| >= 2` in increasing
/// size and `k* = min J`,
///
/// ```text
/// mu_J = sum_{I : k* in I, I strict subset of J} phi_{K-j+1, j-|I|} / (1 - delta_{K-j+1}) * mu_I
/// ```
///
/// and the table is normalized at the end.
pub fn mu_solver_symmetric(deltas: &SymmetricDeltas) -> Result<MuAllocation> {
    deltas.require_not_all_erased()?;
    let k = deltas.users();
    let full = full_mask(k);
    let mut mu = vec![0.0; 1 << k];
    for u in 1..=k {
        mu[user_mask(u) as usize] = 1.0;
    }
    for j in 2..=k {
        let erased = k - j + 1;
        let keep = 1.0 - deltas.delta(erased);
        if !(keep > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "delta_{erased} = 1 while delta_{k} < 1 is not a valid erasure channel"
            )));
        }
        for set in masks_by_size(k, j) {
            let lead = set & set.wrapping_neg();
            let rest = set & !lead;
            let acc: f64 = submasks(rest)
                .filter(|sub| *sub != rest)
                .map(|sub| {
                    let inner = sub | lead;
                    let gap = (set & !inner).count_ones() as usize;
                    deltas.phi(erased, gap) / keep * mu[inner as usize]
                })
                .sum();
            mu[set as usize] = acc;
        }
    }
    debug_assert_eq!(mu.len(), full as usize + 1);
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|w| *w /= total);
    MuAllocation::new(k, mu)
}

/// Largest violation of
/// `sum_{I : k in I subset of W} mu_I = (1 - delta_K) mu_{k} / (1 - delta_{K - |W| + 1})`
/// over every user `k` and every `W` in `{k..K}` containing `k`.
pub fn lemma2_check(mu: &MuAllocation, deltas: &SymmetricDeltas) -> Result<f64> {
    check_same_users(mu.users(), deltas.users())?;
    let k_users = mu.users();
    let full = full_mask(k_users);
    let tail_factor = 1.0 - deltas.delta(k_users);
    let mut worst: f64 = 0.0;
    for k in 1..=k_users {
        let own = user_mask(k);
        // Users after k.
        let later = full & !((own << 1) - 1);
        for extra in submasks(later) {
            let w = own | extra;
            let lhs: f64 = submasks(extra).map(|sub| mu.get(own | sub)).sum();
            let erased = k_users - w.count_ones() as usize + 1;
            let keep = 1.0 - deltas.delta(erased);
            let rhs = tail_factor * mu.get(own) / keep;
            let gap = (lhs - rhs).abs();
            worst = if gap.is_nan() {
                f64::INFINITY
            } else {
                worst.max(gap)
            };
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMethod {
    /// All `K!` orderings, for `K <= 8`.
    Enumerate,
    /// Pair the rates in decreasing order with the weights `1 / (1 - delta_k)`,
    /// which decrease in `k`; this attains the maximum for any `K`.
    Sorted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCheck {
    pub feasible: bool,
    /// `max_pi sum_k R_{pi(k)} / (1 - delta_k)`.
    pub worst_value: f64,
    /// 1-based users in the order of the binding permutation.
    pub worst_permutation: Vec<usize>,
    /// `log|X|` minus `worst_value`.
    pub slack: f64,
}

fn weighted(rate: f64, delta: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        rate / (1.0 - delta)
    }
}

fn ordering_value(rates: &[f64], deltas: &SymmetricDeltas, order: &[usize]) -> f64 {
    order
        .iter()
        .enumerate()
        .map(|(pos, user)| weighted(rates[user - 1], deltas.delta(pos + 1)))
        .sum()
}

/// Membership in the symmetric capacity region:
/// `sum_k R_{pi(k)} / (1 - delta_k) <= log|X|` for every ordering `pi`.
pub fn sym_capacity_region_check(
    rates: &[f64],
    deltas: &SymmetricDeltas,
    alphabet_bits: f64,
    method: RegionMethod,
) -> Result<RegionCheck> {
    let k = deltas.users();
    check_rates(rates, k)?;
    check_alphabet(alphabet_bits)?;
    let (worst_value, worst_permutation) = match method {
        RegionMethod::Enumerate => {
            if k > MAX_ENUMERATED_USERS {
                return Err(Error::TooManyPermutations { users: k });
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            for order in (1..=k).permutations(k) {
                let v = ordering_value(rates, deltas, &order);
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, order));
                }
            }
            best.expect("at least one ordering")
        }
        RegionMethod::Sorted => {
            let mut order: Vec<usize> = (1..=k).collect();
            order.sort_by(|a, b| rates[b - 1].total_cmp(&rates[a - 1]));
            (ordering_value(rates, deltas, &order), order)
        }
    };
    let slack = alphabet_bits - worst_value;
    Ok(RegionCheck {
        feasible: slack >= -FEASIBILITY_TOLERANCE,
        worst_value,
        worst_permutation,
        slack,
    })
}

/// Identifies one inequality of the achievable region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintId {
    /// Rate bound of user `k`, serialized as `[k]`.
    Rate((usize,)),
    /// Phase-`j` side-information bound of user `k` on subset `J`, serialized
    /// as `[j, k, [members of J]]`.
    Phase((usize, usize, Vec<usize>)),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub constraint_id: ConstraintId,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub constraints: Vec<ConstraintSlack>,
    /// Constraints whose slack is within the feasibility tolerance of zero.
    pub binding: Vec<ConstraintId>,
}

impl FeasibilityReport {
    pub fn min_slack(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|slack|` over the phase constraints.
    pub fn max_phase_gap(&self) -> f64 {
        self.constraints
            .iter()
            .filter(|c| matches!(c.constraint_id, ConstraintId::Phase(_)))
            .map(|c| c.slack.abs())
            .fold(0.0, f64::max)
    }
}

/// Checks a rate tuple against the JSC achievable region on a general erasure
/// channel:
///
/// ```text
/// R_k <= alpha_1 P(Q_2 = {k}) (1 - delta_K) log|X|
/// alpha_j P(Q_2 = J) (1 - delta_F) >= sum_{I strict subset of J, k in I} alpha_|I| P(Q_2 = I) phi_{F, J \ I}
/// ```
///
/// for every `k`, and every `J` with `|J| >= 2` and `k in J`, where
/// `F = (K \ J) u {k}`. Zero-probability terms contribute zero.
pub fn jsc_ebc_feasible(
    rates: &[f64],
    params: &EbcSchemeParams,
    pmf: &ErasurePmf,
) -> Result<FeasibilityReport> {
    let k_users = pmf.users();
    check_same_users(params.users(), k_users)?;
    check_rates(rates, k_users)?;
    let full = full_mask(k_users);
    let delta_all = pmf.delta_of(full)?;

    let mut constraints = Vec::new();
    for k in 1..=k_users {
        let weight = params.weight(user_mask(k));
        let cap = if weight == 0.0 {
            0.0
        } else {
            weight * (1.0 - delta_all) * params.alphabet_bits()
        };
        constraints.push(ConstraintSlack {
            constraint_id: ConstraintId::Rate((k,)),
            slack: cap - rates[k - 1],
        });
    }
    for j in 2..=k_users {
        for set in masks_by_size(k_users, j) {
            for k in members(set) {
                let own = user_mask(k);
                let erased = (full & !set) | own;
                let lhs_weight = params.weight(set);
                let lhs = if lhs_weight == 0.0 {
                    0.0
                } else {
                    lhs_weight * (1.0 - pmf.delta_of(erased)?)
                };
                let mut rhs = 0.0;
                let others = set & !own;
                for sub in submasks(others).filter(|s| *s != others) {
                    let inner = sub | own;
                    let w = params.weight(inner);
                    if w != 0.0 {
                        rhs += w * pmf.phi_of(erased, set & !inner)?;
                    }
                }
                constraints.push(ConstraintSlack {
                    constraint_id: ConstraintId::Phase((j, k, members(set).collect())),
                    slack: lhs - rhs,
                });
            }
        }
    }
    let feasible = constraints
        .iter()
        .all(|c| c.slack >= -FEASIBILITY_TOLERANCE);
    let binding = constraints
        .iter()
        .filter(|c| c.slack.abs() <= FEASIBILITY_TOLERANCE)
        .map(|c| c.constraint_id.clone())
        .collect();
    Ok(FeasibilityReport {
        feasible,
        constraints,
        binding,
    })
}
