//! Multi-index arithmetic: mixed-difference expansions, index sets and the
//! randomized allocation distribution over the non-negative lattice.
//!
//! A [`MultiIndex`] `α = (α_1, …, α_D)` addresses one discretization per
//! direction, with mesh diameter `2^{-α_i}` in direction `i`. Everything here
//! is expressed in *physical* indices. Index sets and allocation distributions
//! carry an explicit `offset` (the model's coarsest admissible index); the
//! mixed difference treats a direction sitting at its offset as the bottom of
//! the hierarchy, so `Δ_i φ_α = φ_α` there.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `Z_+^D`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a multi-index needs at least one direction"));
        }
        Ok(MultiIndex(components))
    }

    /// `(0, …, 0)` in `dim` directions.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "a multi-index needs at least one direction");
        MultiIndex(vec![0; dim])
    }

    /// Every component equal to `level`.
    pub fn uniform(dim: usize, level: u32) -> Self {
        assert!(dim >= 1, "a multi-index needs at least one direction");
        MultiIndex(vec![level; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, direction: usize) -> u32 {
        self.0[direction]
    }

    /// Sum of the components.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !self.dominates(other) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - e_direction`, or `None` at zero.
    pub fn decrement(&self, direction: usize) -> Option<MultiIndex> {
        let mut c = self.0.clone();
        c[direction] = c[direction].checked_sub(1)?;
        Some(MultiIndex(c))
    }

    pub fn increment(&self, direction: usize) -> MultiIndex {
        let mut c = self.0.clone();
        c[direction] += 1;
        MultiIndex(c)
    }

    /// Mesh diameter `2^{-α_i}` per direction.
    pub fn mesh_diameters(&self) -> Vec<f64> {
        self.0.iter().map(|&a| (-(a as f64)).exp2()).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v).expect("non-empty multi-index")
    }
}

impl<const D: usize> From<[u32; D]> for MultiIndex {
    fn from(v: [u32; D]) -> Self {
        MultiIndex::new(v.to_vec()).expect("non-empty multi-index")
    }
}

/// One term of the mixed difference `Δ` applied at some index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedSubIndex {
    pub index: MultiIndex,
    /// `(-1)^{|S|}` where `S` is the set of decremented directions.
    pub sign: i8,
    /// 1-based position in the expansion; the first term is always `(α, +1)`.
    pub position: usize,
}

/// Mixed-difference expansion of `α` with the boundary at zero.
///
/// ```
/// use rmismc::multiindex::{subindex_expansion, MultiIndex};
/// let terms = subindex_expansion(&MultiIndex::from([1, 1]));
/// let got: Vec<_> = terms.iter().map(|t| (t.index.components().to_vec(), t.sign)).collect();
/// assert_eq!(got, vec![(vec![1, 1], 1), (vec![0, 1], -1), (vec![1, 0], -1), (vec![0, 0], 1)]);
/// ```
pub fn subindex_expansion(alpha: &MultiIndex) -> Vec<SignedSubIndex> {
    subindex_expansion_from(alpha, &MultiIndex::zeros(alpha.dim()))
}

/// Mixed-difference expansion of `α` where direction `i` bottoms out at
/// `offset_i` instead of zero.
///
/// Subsets are enumerated by bitmask (bit `i` decrements direction `i`), so
/// the term order is `α, α-e_1, α-e_2, α-e_1-e_2, …`. Directions with
/// `α_i == offset_i` are never decremented.
pub fn subindex_expansion_from(alpha: &MultiIndex, offset: &MultiIndex) -> Vec<SignedSubIndex> {
    assert!(
        alpha.dominates(offset),
        "index {alpha} lies below offset {offset}"
    );
    let d = alpha.dim();
    let active: u32 = (0..d)
        .filter(|&i| alpha.get(i) > offset.get(i))
        .fold(0, |m, i| m | (1 << i));
    let mut out = Vec::with_capacity(1 << active.count_ones());
    for mask in 0u32..(1 << d) {
        if mask & !active != 0 {
            continue;
        }
        let comps = (0..d)
            .map(|i| alpha.get(i) - ((mask >> i) & 1))
            .collect::<Vec<_>>();
        out.push(SignedSubIndex {
            index: MultiIndex(comps),
            sign: if mask.count_ones() % 2 == 0 { 1 } else { -1 },
            position: out.len() + 1,
        });
    }
    out
}

/// Shape of an index set, relative to its offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IndexSetKind {
    /// `α_i <= L_i` for every direction.
    TensorProduct { levels: Vec<u32> },
    /// `Σ δ_i α_i <= L` with `Σ δ_i = 1`, `δ_i ∈ (0, 1]`.
    TotalDegree { level: f64, weights: Vec<f64> },
    /// An explicit, downward-closed list.
    Explicit { members: Vec<MultiIndex> },
}

/// A finite, downward-closed set of multi-indices above `offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSet {
    kind: IndexSetKind,
    offset: MultiIndex,
    members: Vec<MultiIndex>,
}

const TD_TOL: f64 = 1e-9;

impl IndexSet {
    pub fn tensor_product(levels: Vec<u32>, offset: MultiIndex) -> Result<Self> {
        Self::new(IndexSetKind::TensorProduct { levels }, offset)
    }

    pub fn total_degree(level: f64, weights: Vec<f64>, offset: MultiIndex) -> Result<Self> {
        Self::new(IndexSetKind::TotalDegree { level, weights }, offset)
    }

    /// A single index: the set `{offset}`.
    pub fn singleton(offset: MultiIndex) -> Self {
        let d = offset.dim();
        Self::new(
            IndexSetKind::TensorProduct {
                levels: vec![0; d],
            },
            offset,
        )
        .expect("singleton set is valid")
    }

    pub fn new(kind: IndexSetKind, offset: MultiIndex) -> Result<Self> {
        let d = offset.dim();
        let relative = match &kind {
            IndexSetKind::TensorProduct { levels } => {
                if levels.len() != d {
                    return Err(Error::config(
                        "index_set.levels",
                        format!("expected {d} levels, got {}", levels.len()),
                    ));
                }
                let bounds = levels.clone();
                lattice_box(&bounds)
            }
            IndexSetKind::TotalDegree { level, weights } => {
                validate_total_degree(*level, weights, d)?;
                let bounds: Vec<u32> = weights
                    .iter()
                    .map(|w| ((level / w) + TD_TOL).floor() as u32)
                    .collect();
                lattice_box(&bounds)
                    .into_iter()
                    .filter(|a| {
                        let s: f64 = a
                            .0
                            .iter()
                            .zip(weights)
                            .map(|(&ai, w)| ai as f64 * w)
                            .sum();
                        s <= level + TD_TOL
                    })
                    .collect()
            }
            IndexSetKind::Explicit { members } => {
                let mut m = members.clone();
                m.sort();
                m.dedup();
                if m.iter().any(|a| a.dim() != d) {
                    return Err(Error::config("index_set.members", "dimension mismatch"));
                }
                m
            }
        };
        let mut members: Vec<MultiIndex> = relative.iter().map(|a| a.add(&offset)).collect();
        members.sort();
        let set = IndexSet {
            kind,
            offset,
            members,
        };
        if !set.is_downward_closed() {
            return Err(Error::config(
                "index_set.members",
                "index set is not downward closed",
            ));
        }
        Ok(set)
    }

    pub fn kind(&self) -> &IndexSetKind {
        &self.kind
    }

    pub fn offset(&self) -> &MultiIndex {
        &self.offset
    }

    /// Members in lexicographic order (physical indices).
    pub fn members(&self) -> &[MultiIndex] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.members.binary_search(alpha).is_ok()
    }

    fn is_downward_closed(&self) -> bool {
        self.members.iter().all(|a| {
            if !a.dominates(&self.offset) {
                return false;
            }
            (0..a.dim()).all(|i| {
                a.get(i) == self.offset.get(i) || self.contains(&a.decrement(i).unwrap())
            })
        })
    }
}

/// Lexicographic enumeration of members of an index set.
pub fn enumerate_index_set(set: &IndexSet) -> Vec<MultiIndex> {
    set.members.clone()
}

fn validate_total_degree(level: f64, weights: &[f64], d: usize) -> Result<()> {
    if weights.len() != d {
        return Err(Error::config(
            "index_set.weights",
            format!("expected {d} weights, got {}", weights.len()),
        ));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
        return Err(Error::config(
            "index_set.weights",
            "every weight must lie in (0, 1]",
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > TD_TOL {
        return Err(Error::config(
            "index_set.weights",
            format!("weights must sum to 1, got {sum}"),
        ));
    }
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::config("index_set.level", "level must be >= 0"));
    }
    Ok(())
}

/// All `α` with `0 <= α_i <= bounds_i`, lexicographic.
fn lattice_box(bounds: &[u32]) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    for &b in bounds {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=b).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(MultiIndex).collect()
}

/// Product-geometric distribution `p_α ∝ Π_i 2^{-(α_i - o_i)(β_i + γ_i)/2}`
/// over `α >= offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationDistribution {
    beta: Vec<f64>,
    gamma: Vec<f64>,
    offset: MultiIndex,
    /// Per-direction decay exponent `(β_i + γ_i)/2`; `+∞` gives a point mass.
    decay: Vec<f64>,
}

impl AllocationDistribution {
    /// Requires `β_i > γ_i > 0`, the condition under which expected cost
    /// stays linear in `N` while the variance sum stays finite.
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>, offset: MultiIndex) -> Result<Self> {
        let d = offset.dim();
        if beta.len() != d || gamma.len() != d {
            return Err(Error::config(
                "rates",
                format!("expected {d} (beta, gamma) pairs"),
            ));
        }
        for (i, (&b, &g)) in beta.iter().zip(&gamma).enumerate() {
            if !(g > 0.0 && b.is_finite() && g.is_finite()) {
                return Err(Error::config(
                    format!("rates.gamma[{i}]"),
                    "rates must be positive and finite",
                ));
            }
            if b <= g {
                return Err(Error::config(
                    format!("rates.beta[{i}]"),
                    format!("beta ({b}) must exceed gamma ({g})"),
                ));
            }
        }
        let decay = beta.iter().zip(&gamma).map(|(b, g)| 0.5 * (b + g)).collect();
        Ok(AllocationDistribution {
            beta,
            gamma,
            offset,
            decay,
        })
    }

    /// All mass on `alpha`.
    pub fn point_mass(alpha: MultiIndex) -> Self {
        let d = alpha.dim();
        AllocationDistribution {
            beta: vec![f64::INFINITY; d],
            gamma: vec![0.0; d],
            offset: alpha,
            decay: vec![f64::INFINITY; d],
        }
    }

    pub fn offset(&self) -> &MultiIndex {
        &self.offset
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.offset.dim()
    }

    /// `Σ_{α >= offset} Π_i 2^{-(α_i-o_i) r_i} = Π_i 1/(1 - 2^{-r_i})`.
    pub fn normalizer(&self) -> f64 {
        self.decay
            .iter()
            .map(|&r| 1.0 / (1.0 - (-r).exp2()))
            .product()
    }

    /// Normalized `p_α`.
    pub fn probability(&self, alpha: &MultiIndex) -> Result<f64> {
        let rel = alpha
            .checked_sub(&self.offset)
            .ok_or_else(|| Error::BelowOffset {
                index: alpha.clone(),
                offset: self.offset.clone(),
            })?;
        Ok(rel
            .0
            .iter()
            .zip(&self.decay)
            .map(|(&a, &r)| {
                let ratio = (-r).exp2();
                if a == 0 {
                    1.0 - ratio
                } else {
                    (1.0 - ratio) * ratio.powi(a as i32)
                }
            })
            .product())
    }

    /// One draw `α ~ p`: independent geometric variables per direction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MultiIndex {
        let comps = self
            .decay
            .iter()
            .zip(&self.offset.0)
            .map(|(&r, &o)| {
                if r.is_infinite() {
                    return o;
                }
                let success = 1.0 - (-r).exp2();
                let g = Geometric::new(success).expect("success probability in (0,1]");
                o + u32::try_from(g.sample(rng)).unwrap_or(u32::MAX - o)
            })
            .collect();
        MultiIndex(comps)
    }
}

/// Free-function form of [`AllocationDistribution::probability`].
pub fn allocation_probability(dist: &AllocationDistribution, alpha: &MultiIndex) -> Result<f64> {
    dist.probability(alpha)
}

/// Draw `N / N_min` i.i.d. indices from `p` and return the scaled counts
/// `N_α = N_min · #{i : α_i = α}`.
pub fn sample_allocation<R: Rng + ?Sized>(
    dist: &AllocationDistribution,
    n: usize,
    n_min: usize,
    rng: &mut R,
) -> Result<BTreeMap<MultiIndex, usize>> {
    if n_min == 0 {
        return Err(Error::invalid("N_min must be at least 1"));
    }
    if n % n_min != 0 {
        return Err(Error::invalid(format!(
            "N = {n} is not divisible by N_min = {n_min}"
        )));
    }
    let mut counts = BTreeMap::new();
    for _ in 0..n / n_min {
        *counts.entry(dist.sample(rng)).or_insert(0) += n_min;
    }
    Ok(counts)
}
