//! Set families over small ground sets `[n] = {0, .., n-1}`.
//!
//! Members are `n`-bit masks. A [`SetFamily`] keeps its members sorted and
//! deduplicated, so two families are equal iff they hold the same sets.
//! Covered here: the p-biased measure, `(i, j)`-shifts and the left-shift
//! closure, the s-wise t-intersecting predicate, the prefix witness of a
//! left-shifted intersecting family, and the intersection threshold `t(eps, s, p)`.

use crate::rational::{self, Rational};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

pub type Mask = u32;

/// Default bound on the ground-set size.
pub const DEFAULT_GROUND_CAP: usize = 24;
/// Masks are `u32`, so no configuration can exceed this.
pub const MAX_GROUND: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetFamError {
    #[error("ground set size {n} exceeds the cap {cap}")]
    GroundTooLarge { n: usize, cap: usize },
    #[error("member {member:#b} is not a subset of [{n}]")]
    NotASubset { member: Mask, n: usize },
    #[error("shift needs 0 <= i < j < n, got i={i}, j={j}, n={n}")]
    BadShift { i: usize, j: usize, n: usize },
    #[error("bias must satisfy 0 < p < 1, got {0}")]
    BadBias(Rational),
    #[error("threshold query out of domain: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, SetFamError>;

/// Bitmask of the prefix `[len] = {0, .., len-1}`.
pub fn prefix_mask(len: usize) -> Mask {
    if len >= MAX_GROUND {
        Mask::MAX
    } else {
        (1 << len) - 1
    }
}

pub fn elements(mask: Mask) -> impl Iterator<Item = usize> {
    (0..MAX_GROUND).filter(move |&e| mask & (1 << e) != 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SetFamily {
    n: usize,
    members: Vec<Mask>,
}

#[derive(Deserialize)]
struct SetFamilyRepr {
    n: usize,
    members: Vec<Mask>,
}

impl<'de> Deserialize<'de> for SetFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SetFamilyRepr::deserialize(d)?;
        SetFamily::new(repr.n, repr.members).map_err(serde::de::Error::custom)
    }
}

impl SetFamily {
    pub fn new(n: usize, members: impl IntoIterator<Item = Mask>) -> Result<Self> {
        Self::with_cap(n, members, DEFAULT_GROUND_CAP)
    }

    pub fn with_cap(n: usize, members: impl IntoIterator<Item = Mask>, cap: usize) -> Result<Self> {
        let cap = cap.min(MAX_GROUND);
        if n > cap {
            return Err(SetFamError::GroundTooLarge { n, cap });
        }
        let full = prefix_mask(n);
        let mut members: Vec<Mask> = members.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&m| m & !full != 0) {
            return Err(SetFamError::NotASubset { member: bad, n });
        }
        members.sort_unstable();
        members.dedup();
        Ok(SetFamily { n, members })
    }

    pub fn from_sets(n: usize, sets: &[&[usize]]) -> Result<Self> {
        let masks = sets
            .iter()
            .map(|set| set.iter().fold(0, |acc, &e| acc | (1u64 << e.min(63))))
            .map(|m: u64| {
                Mask::try_from(m).map_err(|_| SetFamError::GroundTooLarge { n, cap: MAX_GROUND })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, masks)
    }

    /// All `2^n` subsets of `[n]`.
    pub fn power_set(n: usize) -> Result<Self> {
        if n > DEFAULT_GROUND_CAP {
            return Err(SetFamError::GroundTooLarge { n, cap: DEFAULT_GROUND_CAP });
        }
        Self::new(n, 0..(1u32 << n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[Mask] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, set: Mask) -> bool {
        self.members.binary_search(&set).is_ok()
    }

    /// Member cardinalities, sorted.
    pub fn size_profile(&self) -> Vec<u32> {
        let mut sizes: Vec<u32> = self.members.iter().map(|m| m.count_ones()).collect();
        sizes.sort_unstable();
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasParams {
    p: Rational,
}

impl BiasParams {
    pub fn new(p: Rational) -> Result<Self> {
        if p <= Rational::zero() || p >= Rational::one() {
            return Err(SetFamError::BadBias(p));
        }
        Ok(BiasParams { p })
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }

    /// `mu_p` of a set of each possible size `0..=n`.
    pub fn weights_by_size(&self, n: usize) -> Vec<Rational> {
        let q = Rational::one() - &self.p;
        (0..=n)
            .map(|size| rational::pow(&self.p, size) * rational::pow(&q, n - size))
            .collect()
    }
}

/// `p^|F| (1-p)^(n-|F|)`.
pub fn mu_p(bias: &BiasParams, n: usize, set: Mask) -> Rational {
    debug_assert!(set & !prefix_mask(n) == 0, "set outside the ground set");
    let size = set.count_ones() as usize;
    rational::pow(bias.p(), size) * rational::pow(&(Rational::one() - bias.p()), n - size)
}

/// Sum of `mu_p` over the members of a family.
pub fn mu_p_family(bias: &BiasParams, family: &SetFamily) -> Rational {
    let by_size = bias.weights_by_size(family.n());
    family
        .members()
        .iter()
        .fold(Rational::zero(), |acc, &m| acc + &by_size[m.count_ones() as usize])
}

/// Applies the `(i, j)`-shift: every member containing `j` but not `i` whose
/// image `F - j + i` is absent from the family is replaced by that image.
pub fn ij_shift(family: &SetFamily, i: usize, j: usize) -> Result<SetFamily> {
    if i >= j || j >= family.n() {
        return Err(SetFamError::BadShift { i, j, n: family.n() });
    }
    Ok(shift_unchecked(family, i, j).unwrap_or_else(|| family.clone()))
}

/// Returns `None` when the shift changes nothing.
fn shift_unchecked(family: &SetFamily, i: usize, j: usize) -> Option<SetFamily> {
    let (bi, bj) = (1 << i, 1 << j);
    let mut changed = false;
    let members: Vec<Mask> = family
        .members
        .iter()
        .map(|&f| {
            if f & bj != 0 && f & bi == 0 {
                let image = (f & !bj) | bi;
                if !family.contains(image) {
                    changed = true;
                    return image;
                }
            }
            f
        })
        .collect();
    if !changed {
        return None;
    }
    let mut members = members;
    members.sort_unstable();
    Some(SetFamily { n: family.n, members })
}

/// Repeats ascending `(i, j)` sweeps until no shift changes the family.
///
/// Terminates because every effective shift strictly lowers the sum of
/// element values over all members.
pub fn left_shift_closure(family: &SetFamily) -> SetFamily {
    let mut current = family.clone();
    loop {
        let mut changed = false;
        for j in 1..current.n() {
            for i in 0..j {
                if let Some(next) = shift_unchecked(&current, i, j) {
                    current = next;
                    changed = true;
                }
            }
        }
        if !changed {
            return current;
        }
    }
}

pub fn is_left_shifted(family: &SetFamily) -> bool {
    (1..family.n()).all(|j| (0..j).all(|i| shift_unchecked(family, i, j).is_none()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntersectionCheck {
    pub holds: bool,
    /// A violating s-tuple (members may repeat) when `holds` is false.
    pub witness: Option<Vec<Mask>>,
}

/// Tests whether every `s` members (repetition allowed) share at least `t`
/// elements.
///
/// Repetition can only enlarge an intersection, so with at least `s` members
/// the answer coincides with the distinct-tuple reading. With fewer members
/// the repeated tuples are still checked, which in particular demands
/// `|F| >= t` for every single member.
pub fn is_s_wise_t_intersecting(family: &SetFamily, s: usize, t: usize) -> IntersectionCheck {
    let witness = if s == 0 {
        None
    } else {
        find_small_intersection_tuple(family, s, t)
    };
    IntersectionCheck {
        holds: witness.is_none(),
        witness,
    }
}

/// Lexicographically first non-decreasing index tuple `(i_1 <= .. <= i_s)`
/// whose members intersect in fewer than `t` elements.
pub fn find_small_intersection_tuple(family: &SetFamily, s: usize, t: usize) -> Option<Vec<Mask>> {
    if family.is_empty() || s == 0 || t == 0 {
        return None;
    }
    let members = family.members();
    let mut path = Vec::with_capacity(s);
    let full = prefix_mask(family.n());
    if search_tuple(members, s, t as u32, 0, full, &mut path) {
        let last = *path.last().expect("non-empty witness path");
        path.resize(s, last);
        Some(path.into_iter().map(|idx| members[idx]).collect())
    } else {
        None
    }
}

fn search_tuple(
    members: &[Mask],
    s: usize,
    t: u32,
    start: usize,
    acc: Mask,
    path: &mut Vec<usize>,
) -> bool {
    for idx in start..members.len() {
        let next = acc & members[idx];
        path.push(idx);
        // Padding a short violating prefix with its last index is the
        // smallest completion, hence the first violation in order.
        if next.count_ones() < t {
            return true;
        }
        if path.len() < s && search_tuple(members, s, t, idx, next, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// Smallest `j >= 0` with `|F ∩ [t + s*j]| >= t + (s-1)*j`, restricted to the
/// finite range `t + s*j <= n`.
///
/// Beyond that range the prefix is all of `F` while the requirement keeps
/// growing, and a short computation shows it already exceeds `|F|` at the
/// first out-of-range `j`, so no witness is lost.
pub fn prefix_witness(set: Mask, n: usize, s: usize, t: usize) -> Option<usize> {
    if t > n {
        return None;
    }
    let max_j = if s == 0 { 0 } else { (n - t) / s };
    (0..=max_j).find(|&j| {
        let len = t + s * j;
        let need = t + (s.saturating_sub(1)) * j;
        (set & prefix_mask(len)).count_ones() as usize >= need
    })
}

/// Parameters of the intersection threshold `t(eps, s, p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdQuery {
    epsilon: Rational,
    s: usize,
    p: Rational,
    delta_gap: Rational,
}

impl ThresholdQuery {
    pub fn new(epsilon: Rational, s: usize, p: Rational) -> Result<Self> {
        if epsilon <= Rational::zero() || epsilon >= Rational::one() {
            return Err(SetFamError::Domain(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if s < 2 {
            return Err(SetFamError::Domain(format!("s must be at least 2, got {s}")));
        }
        if p <= Rational::zero() || p >= Rational::one() {
            return Err(SetFamError::BadBias(p));
        }
        let delta_gap = rational::ratio(s as i64 - 1, s as i64) - &p;
        if delta_gap <= Rational::zero() {
            return Err(SetFamError::Domain(format!(
                "p = {p} must be below (s-1)/s = {}/{s}",
                s - 1
            )));
        }
        Ok(ThresholdQuery { epsilon, s, p, delta_gap })
    }

    pub fn epsilon(&self) -> &Rational {
        &self.epsilon
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }

    /// `(s-1)/s - p`.
    pub fn delta_gap(&self) -> &Rational {
        &self.delta_gap
    }

    /// `e^{-2 t d^2} / (1 - e^{-2 s d^2})`, the measure bound for an s-wise
    /// t-intersecting family.
    pub fn tail_bound(&self, t: u64) -> f64 {
        let d = rational::to_f64(&self.delta_gap);
        let d2 = d * d;
        (-2.0 * t as f64 * d2).exp() / -(-2.0 * self.s as f64 * d2).exp_m1()
    }
}

/// Numerical slack below which the strict inequality is not trusted.
pub const THRESHOLD_GUARD: f64 = 1e-12;

/// Smallest `t >= 1` whose tail bound is below `epsilon`; when the bound sits
/// within [`THRESHOLD_GUARD`] of `epsilon` the next `t` is returned instead.
pub fn intersection_threshold(q: &ThresholdQuery) -> u64 {
    let eps = rational::to_f64(q.epsilon());
    let d = rational::to_f64(q.delta_gap());
    let d2 = d * d;
    let denom = -(-2.0 * q.s() as f64 * d2).exp_m1();
    // Closed-form starting point, then settle with exact scans on either side.
    let estimate = ((-(eps * denom).ln()) / (2.0 * d2)).floor();
    let mut t = if estimate.is_finite() && estimate > 1.0 {
        estimate as u64
    } else {
        1
    };
    while t > 1 && q.tail_bound(t - 1) < eps {
        t -= 1;
    }
    while q.tail_bound(t) >= eps {
        t += 1;
    }
    if eps - q.tail_bound(t) < THRESHOLD_GUARD {
        t += 1;
    }
    t
}

/// Exact `Pr[Bin(trials, p) >= at_least]`.
pub fn binomial_tail_at_least(trials: usize, p: &Rational, at_least: usize) -> Rational {
    if at_least == 0 {
        return Rational::one();
    }
    if at_least > trials {
        return Rational::zero();
    }
    let q = Rational::one() - p;
    let mut binom = num_bigint::BigInt::one();
    let mut total = Rational::zero();
    for k in 0..=trials {
        if k > 0 {
            binom = binom * (trials - k + 1) / k;
        }
        if k >= at_least {
            total += Rational::from_integer(binom.clone())
                * rational::pow(p, k)
                * rational::pow(&q, trials - k);
        }
    }
    total
}
