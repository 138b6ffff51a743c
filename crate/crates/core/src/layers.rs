//! The multilayered construction over a projection game.
//!
//! Layer `i` (1-based, `1..=l`) holds every `l`-tuple whose first `i`
//! coordinates are `Z` variables and whose last `l - i` are `Y` variables; its
//! values are per-coordinate vectors in `R_Z^i x R_Y^(l-i)`. Tuples and value
//! vectors are numbered mixed-radix with coordinate 1 most significant.
//!
//! For `i < j`, `x_i` and `x_j` are constrained iff they agree outside
//! coordinates `i+1..=j` and the base game has a constraint `x_{i,k} -> x_{j,k}`
//! for every `k` in that window.

use crate::game::{seeded_rng, GameLabeling, ProjectionGame, Violation};
use crate::rational::{self, Rational};
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayersError {
    #[error("base game is invalid: {0:?}")]
    InvalidGame(Vec<Violation>),
    #[error("layer {layer} would hold {size} variables, above the cap {cap}")]
    LayerTooLarge { layer: usize, size: u128, cap: usize },
    #[error("layers {i}..{j} would carry {count} constraints, above the cap {cap}")]
    TooManyConstraints { i: usize, j: usize, count: u128, cap: usize },
    #[error("layer index {0} is outside 1..=l")]
    BadLayer(usize),
    #[error("need i < j, got i={i}, j={j}")]
    BadPair { i: usize, j: usize },
    #[error("variable {index} is outside layer {layer}")]
    BadVariable { layer: usize, index: usize },
    #[error("no constraint between x{i}[{from}] and x{j}[{to}]")]
    NoConstraint { i: usize, from: usize, j: usize, to: usize },
    #[error("value vector is malformed: {0}")]
    BadValue(String),
    #[error("labeling is malformed: {0}")]
    MalformedLabeling(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("decoding failed: {0}")]
    Decode(String),
    #[error("property violation: {0}")]
    PropertyViolation(String),
}

pub type Result<T> = std::result::Result<T, LayersError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCaps {
    pub max_layer_size: usize,
    pub max_constraints: usize,
}

impl Default for LayerCaps {
    fn default() -> Self {
        LayerCaps {
            max_layer_size: 4096,
            max_constraints: 1 << 20,
        }
    }
}

/// Shape of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    index: usize,
    var_radices: Vec<usize>,
    value_radices: Vec<usize>,
    size: usize,
    range_size: usize,
}

fn mixed_radix_digits(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radices.len()];
    for (digit, &radix) in digits.iter_mut().zip(radices).rev() {
        *digit = index % radix;
        index /= radix;
    }
    digits
}

fn mixed_radix_index(digits: impl IntoIterator<Item = usize>, radices: &[usize]) -> usize {
    digits
        .into_iter()
        .zip(radices)
        .fold(0, |acc, (d, &r)| acc * r + d)
}

impl Layer {
    fn new(index: usize, l: usize, game: &ProjectionGame) -> Self {
        let var_radices: Vec<usize> = (1..=l)
            .map(|k| if k <= index { game.z_count } else { game.y_count })
            .collect();
        let value_radices: Vec<usize> = (1..=l)
            .map(|k| if k <= index { game.rz } else { game.ry })
            .collect();
        Layer {
            index,
            size: var_radices.iter().product(),
            range_size: value_radices.iter().product(),
            var_radices,
            value_radices,
        }
    }

    /// 1-based layer number.
    pub fn index(&self) -> usize {
        self.index
    }

    /// `|X_i|`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `|R_i|`.
    pub fn range_size(&self) -> usize {
        self.range_size
    }

    pub fn tuple(&self, var: usize) -> Vec<usize> {
        mixed_radix_digits(var, &self.var_radices)
    }

    pub fn var_index(&self, tuple: &[usize]) -> usize {
        mixed_radix_index(tuple.iter().copied(), &self.var_radices)
    }

    pub fn value_vector(&self, value: usize) -> Vec<u32> {
        mixed_radix_digits(value, &self.value_radices)
            .into_iter()
            .map(|d| d as u32)
            .collect()
    }

    pub fn value_index(&self, vector: &[u32]) -> usize {
        mixed_radix_index(vector.iter().map(|&d| d as usize), &self.value_radices)
    }

    pub fn check_value(&self, vector: &[u32]) -> Result<()> {
        if vector.len() != self.value_radices.len() {
            return Err(LayersError::BadValue(format!(
                "layer {} values have {} coordinates, got {}",
                self.index,
                self.value_radices.len(),
                vector.len()
            )));
        }
        for (k, (&v, &radix)) in vector.iter().zip(&self.value_radices).enumerate() {
            if v as usize >= radix {
                return Err(LayersError::BadValue(format!(
                    "coordinate {} of a layer {} value is {v}, outside a range of size {radix}",
                    k + 1,
                    self.index
                )));
            }
        }
        Ok(())
    }
}

/// One constraint of `Phi_ij`: `via[k - i - 1]` is the base constraint used
/// on coordinate `k` for `k` in `i+1..=j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerConstraint {
    pub from: usize,
    pub to: usize,
    pub via: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LayeredInstance {
    l: usize,
    base: ProjectionGame,
    layers: Vec<Layer>,
    phi: BTreeMap<(usize, usize), Vec<LayerConstraint>>,
    pair_lookup: BTreeMap<(usize, usize), usize>,
    y_neighbors: Vec<Vec<(usize, usize)>>,
}

/// Enumerates every layer and every `Phi_ij`, failing fast when a cap would
/// be exceeded.
pub fn build_layered(game: &ProjectionGame, l: usize, caps: &LayerCaps) -> Result<LayeredInstance> {
    let violations = game.validate();
    if !violations.is_empty() {
        return Err(LayersError::InvalidGame(violations));
    }
    if l == 0 {
        return Err(LayersError::BadLayer(0));
    }
    for i in 1..=l {
        let size = (game.z_count as u128)
            .saturating_pow(i as u32)
            .saturating_mul((game.y_count as u128).saturating_pow((l - i) as u32));
        if size > caps.max_layer_size as u128 {
            return Err(LayersError::LayerTooLarge { layer: i, size, cap: caps.max_layer_size });
        }
    }
    let layers: Vec<Layer> = (1..=l).map(|i| Layer::new(i, l, game)).collect();
    let mut y_neighbors = vec![Vec::new(); game.y_count];
    for (cid, c) in game.constraints.iter().enumerate() {
        y_neighbors[c.y].push((c.z, cid));
    }
    for list in &mut y_neighbors {
        list.sort_unstable();
    }
    let degree = y_neighbors.first().map_or(0, Vec::len);
    let mut instance = LayeredInstance {
        l,
        base: game.clone(),
        layers,
        phi: BTreeMap::new(),
        pair_lookup: game.pair_index(),
        y_neighbors,
    };
    for i in 1..=l {
        for j in (i + 1)..=l {
            let count = (instance.layer(i).size() as u128)
                .saturating_mul((degree as u128).saturating_pow((j - i) as u32));
            if count > caps.max_constraints as u128 {
                return Err(LayersError::TooManyConstraints { i, j, count, cap: caps.max_constraints });
            }
            let constraints = instance.enumerate_phi(i, j);
            instance.phi.insert((i, j), constraints);
        }
    }
    Ok(instance)
}

impl LayeredInstance {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn base(&self) -> &ProjectionGame {
        &self.base
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer `i`, 1-based. Panics outside `1..=l`.
    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i - 1]
    }

    fn check_layer(&self, i: usize) -> Result<&Layer> {
        if i == 0 || i > self.l {
            Err(LayersError::BadLayer(i))
        } else {
            Ok(&self.layers[i - 1])
        }
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        self.check_layer(i)?;
        self.check_layer(j)?;
        if i >= j {
            return Err(LayersError::BadPair { i, j });
        }
        Ok(())
    }

    /// `Phi_ij`, sorted by `(from, to)`. Empty when `i >= j` or out of range.
    pub fn constraints(&self, i: usize, j: usize) -> &[LayerConstraint] {
        self.phi.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// Every `(i, j)` with `i < j`, in order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.phi.keys().copied()
    }

    pub fn total_variables(&self) -> usize {
        self.layers.iter().map(Layer::size).sum()
    }

    pub fn y_neighbors(&self, y: usize) -> &[(usize, usize)] {
        &self.y_neighbors[y]
    }

    fn enumerate_phi(&self, i: usize, j: usize) -> Vec<LayerConstraint> {
        let (from_layer, to_layer) = (self.layer(i), self.layer(j));
        let mut out = Vec::new();
        for from in 0..from_layer.size() {
            let tuple = from_layer.tuple(from);
            // Coordinates i+1..=j are Y slots of x_i; 0-based positions i..j.
            let choices: Vec<&[(usize, usize)]> =
                (i..j).map(|pos| self.y_neighbors[tuple[pos]].as_slice()).collect();
            if choices.iter().any(|c| c.is_empty()) {
                continue;
            }
            let mut pick = vec![0usize; choices.len()];
            loop {
                let mut target = tuple.clone();
                let mut via = Vec::with_capacity(choices.len());
                for (slot, (&p, options)) in pick.iter().zip(&choices).enumerate() {
                    let (z, cid) = options[p];
                    target[i + slot] = z;
                    via.push(cid);
                }
                out.push(LayerConstraint { from, to: to_layer.var_index(&target), via });
                let mut pos = pick.len();
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    pick[pos] += 1;
                    if pick[pos] < choices[pos].len() {
                        break;
                    }
                    pick[pos] = 0;
                }
                if pick.iter().all(|&p| p == 0) {
                    break;
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The base constraints linking `x_i[from]` to `x_j[to]`, if they are
    /// constrained.
    pub fn constraint_between(&self, i: usize, from: usize, j: usize, to: usize) -> Result<Option<Vec<usize>>> {
        self.check_pair(i, j)?;
        let (li, lj) = (self.layer(i), self.layer(j));
        if from >= li.size() {
            return Err(LayersError::BadVariable { layer: i, index: from });
        }
        if to >= lj.size() {
            return Err(LayersError::BadVariable { layer: j, index: to });
        }
        let (a, b) = (li.tuple(from), lj.tuple(to));
        let mut via = Vec::with_capacity(j - i);
        for pos in 0..self.l {
            let k = pos + 1;
            if k > i && k <= j {
                match self.pair_lookup.get(&(a[pos], b[pos])) {
                    Some(&cid) => via.push(cid),
                    None => return Ok(None),
                }
            } else if a[pos] != b[pos] {
                return Ok(None);
            }
        }
        Ok(Some(via))
    }

    fn project_with(&self, i: usize, via: &[usize], a: &[u32]) -> Vec<u32> {
        let mut b = a.to_vec();
        for (slot, &cid) in via.iter().enumerate() {
            let pos = i + slot;
            b[pos] = self.base.constraints[cid].project(a[pos]);
        }
        b
    }

    /// Projects value index `a` of layer `i` along a `Phi_ij` constraint.
    pub fn project_value_index(&self, i: usize, j: usize, via: &[usize], a: usize) -> usize {
        let vector = self.layer(i).value_vector(a);
        self.layer(j).value_index(&self.project_with(i, via, &vector))
    }

    /// The unique value of `x_j[to]` consistent with `x_i[from] = a`.
    pub fn project_assignment(&self, i: usize, from: usize, j: usize, to: usize, a: &[u32]) -> Result<Vec<u32>> {
        let via = self
            .constraint_between(i, from, j, to)?
            .ok_or(LayersError::NoConstraint { i, from, j, to })?;
        self.layer(i).check_value(a)?;
        Ok(self.project_with(i, &via, a))
    }

    pub fn summary(&self, with_pairs: bool) -> LayeredSummary {
        LayeredSummary {
            l: self.l,
            y_count: self.base.y_count,
            z_count: self.base.z_count,
            ry: self.base.ry,
            rz: self.base.rz,
            layers: self
                .layers
                .iter()
                .map(|layer| LayerSummary {
                    layer: layer.index(),
                    variables: layer.size(),
                    range_size: layer.range_size(),
                })
                .collect(),
            pair_counts: self
                .phi
                .iter()
                .map(|(&(i, j), list)| PairCount { i, j, constraints: list.len() })
                .collect(),
            pairs: with_pairs.then(|| {
                self.phi
                    .iter()
                    .map(|(&(i, j), list)| PairList {
                        i,
                        j,
                        constraints: list.iter().map(|c| [c.from, c.to]).collect(),
                    })
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub variables: usize,
    pub range_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub i: usize,
    pub j: usize,
    pub constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairList {
    pub i: usize,
    pub j: usize,
    pub constraints: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredSummary {
    pub l: usize,
    pub y_count: usize,
    pub z_count: usize,
    pub ry: usize,
    pub rz: usize,
    pub layers: Vec<LayerSummary>,
    pub pair_counts: Vec<PairCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairList>>,
}

/// Per-layer value vectors; `layers[i - 1][x]` is the value of `x_i[x]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredLabeling {
    pub layers: Vec<Vec<Vec<u32>>>,
}

impl LayeredLabeling {
    pub fn value(&self, i: usize, var: usize) -> &[u32] {
        &self.layers[i - 1][var]
    }

    pub fn check(&self, instance: &LayeredInstance) -> Result<()> {
        if self.layers.len() != instance.l() {
            return Err(LayersError::MalformedLabeling(format!(
                "expected {} layers, got {}",
                instance.l(),
                self.layers.len()
            )));
        }
        for (layer, values) in instance.layers().iter().zip(&self.layers) {
            if values.len() != layer.size() {
                return Err(LayersError::MalformedLabeling(format!(
                    "layer {} has {} variables, labeling has {}",
                    layer.index(),
                    layer.size(),
                    values.len()
                )));
            }
            for v in values {
                layer.check_value(v)?;
            }
        }
        Ok(())
    }
}

/// `B(x_1..x_l) = (A(x_1), .., A(x_l))`; requires `A` to satisfy the base game.
pub fn lift_labeling(instance: &LayeredInstance, labeling: &GameLabeling) -> Result<LayeredLabeling> {
    let base = instance.base();
    base.check_labeling(labeling)
        .map_err(|e| LayersError::Precondition(e.to_string()))?;
    if !base.is_satisfying(labeling) {
        return Err(LayersError::Precondition(format!(
            "labeling satisfies only {} of {} base constraints",
            base.satisfied_count(labeling),
            base.constraints.len()
        )));
    }
    Ok(lift_unchecked(instance, labeling))
}

fn lift_unchecked(instance: &LayeredInstance, labeling: &GameLabeling) -> LayeredLabeling {
    let layers = instance
        .layers()
        .iter()
        .map(|layer| {
            (0..layer.size())
                .map(|var| {
                    layer
                        .tuple(var)
                        .into_iter()
                        .enumerate()
                        .map(|(pos, v)| {
                            if pos < layer.index() {
                                labeling.z_labels[v]
                            } else {
                                labeling.y_labels[v]
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    LayeredLabeling { layers }
}

/// Exact fraction of `Phi_ij` satisfied by `B`. An empty `Phi_ij` is reported
/// as 1 with a logged warning.
pub fn satisfied_fraction_between(
    instance: &LayeredInstance,
    labeling: &LayeredLabeling,
    i: usize,
    j: usize,
) -> Result<Rational> {
    instance.check_pair(i, j)?;
    labeling.check(instance)?;
    let phi = instance.constraints(i, j);
    if phi.is_empty() {
        log::warn!("Phi_{i}{j} is empty; reporting its satisfied fraction as 1");
        return Ok(Rational::one());
    }
    let satisfied = phi
        .iter()
        .filter(|c| instance.project_with(i, &c.via, labeling.value(i, c.from)) == labeling.value(j, c.to))
        .count();
    Ok(rational::ratio(satisfied as i64, phi.len() as i64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedGame {
    pub labeling: GameLabeling,
    #[serde(with = "crate::rational::json")]
    pub fraction: Rational,
    /// Tuple of the chosen `X_i` class with coordinate `j` removed.
    pub class_i: Vec<usize>,
    /// Tuple of the chosen `X_j` class with coordinate `j` removed.
    pub class_j: Vec<usize>,
    pub class_pairs_examined: usize,
}

fn without(tuple: &[usize], pos: usize) -> Vec<usize> {
    let mut t = tuple.to_vec();
    t.remove(pos);
    t
}

fn with_inserted(class: &[usize], pos: usize, v: usize) -> Vec<usize> {
    let mut t = class.to_vec();
    t.insert(pos, v);
    t
}

/// Extracts a base-game labeling from `B` on `Phi_ij`.
///
/// Variables are grouped into classes that agree everywhere except on
/// coordinate `j`. For each class pair joined by constraints, `A(y)` is
/// coordinate `j` of `B` at the `X_i` class member carrying `y` there, and
/// `A(z)` likewise on the `X_j` side. The extraction with the best base
/// fraction wins; ties keep the smallest class pair.
pub fn decode_to_game(
    instance: &LayeredInstance,
    labeling: &LayeredLabeling,
    i: usize,
    j: usize,
) -> Result<DecodedGame> {
    instance.check_pair(i, j)?;
    labeling.check(instance)?;
    let (li, lj) = (instance.layer(i), instance.layer(j));
    let pos = j - 1;
    let class_pairs: BTreeSet<(Vec<usize>, Vec<usize>)> = instance
        .constraints(i, j)
        .iter()
        .map(|c| (without(&li.tuple(c.from), pos), without(&lj.tuple(c.to), pos)))
        .collect();
    let base = instance.base();
    let mut best: Option<DecodedGame> = None;
    for (class_i, class_j) in &class_pairs {
        let candidate = GameLabeling {
            y_labels: (0..base.y_count)
                .map(|y| labeling.value(i, li.var_index(&with_inserted(class_i, pos, y)))[pos])
                .collect(),
            z_labels: (0..base.z_count)
                .map(|z| labeling.value(j, lj.var_index(&with_inserted(class_j, pos, z)))[pos])
                .collect(),
        };
        let fraction = base
            .satisfied_fraction(&candidate)
            .map_err(|e| LayersError::Decode(e.to_string()))?;
        if best.as_ref().is_none_or(|b| fraction > b.fraction) {
            best = Some(DecodedGame {
                labeling: candidate,
                fraction,
                class_i: class_i.clone(),
                class_j: class_j.clone(),
                class_pairs_examined: 0,
            });
        }
    }
    let mut best = best.ok_or_else(|| LayersError::Decode(format!("Phi_{i}{j} has no class pair with constraints")))?;
    best.class_pairs_examined = class_pairs.len();
    Ok(best)
}

/// Layers `i_1 < .. < i_m` with a subset `S_j` of each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakDensityQuery {
    #[serde(with = "crate::rational::json")]
    pub delta: Rational,
    pub layer_indices: Vec<usize>,
    pub sets: Vec<Vec<usize>>,
}

impl WeakDensityQuery {
    /// Checks `m >= ceil(2/delta)`, `|S_j| >= delta |X_{i_j}|`, ordering and
    /// ranges.
    pub fn check(&self, instance: &LayeredInstance) -> Result<()> {
        let pre = |msg: String| Err(LayersError::Precondition(msg));
        if self.delta <= Rational::zero() || self.delta > Rational::one() {
            return pre(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        let m = self.layer_indices.len();
        let needed = rational::ceil_to_u64(&(rational::from_int(2) / &self.delta)).unwrap_or(u64::MAX);
        if (m as u64) < needed {
            return pre(format!("need at least {needed} layers, got {m}"));
        }
        if self.sets.len() != m {
            return pre(format!("{m} layers but {} sets", self.sets.len()));
        }
        if self.layer_indices.windows(2).any(|w| w[0] >= w[1]) {
            return pre("layer indices must be strictly increasing".into());
        }
        for (&i, set) in self.layer_indices.iter().zip(&self.sets) {
            let layer = instance.check_layer(i)?;
            let distinct: BTreeSet<usize> = set.iter().copied().collect();
            if let Some(&bad) = distinct.iter().find(|&&v| v >= layer.size()) {
                return Err(LayersError::BadVariable { layer: i, index: bad });
            }
            if rational::from_int(distinct.len() as i64) < &self.delta * rational::from_int(layer.size() as i64) {
                return pre(format!(
                    "set in layer {i} has {} of {} variables, below delta = {}",
                    distinct.len(),
                    layer.size(),
                    self.delta
                ));
            }
        }
        for (a, &ia) in self.layer_indices.iter().enumerate() {
            for &ib in &self.layer_indices[a + 1..] {
                if instance.constraints(ia, ib).is_empty() {
                    return pre(format!("Phi_{ia}{ib} is empty"));
                }
            }
        }
        Ok(())
    }

    fn membership(&self, instance: &LayeredInstance) -> Vec<Vec<bool>> {
        self.layer_indices
            .iter()
            .zip(&self.sets)
            .map(|(&i, set)| {
                let mut bits = vec![false; instance.layer(i).size()];
                for &v in set {
                    bits[v] = true;
                }
                bits
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDensity {
    /// Positions `(j, j')` in the query, 0-based.
    pub positions: (usize, usize),
    pub layers: (usize, usize),
    pub inside: usize,
    pub total: usize,
    #[serde(with = "crate::rational::json")]
    pub density: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakDensityReport {
    pub chosen: PairDensity,
    #[serde(with = "crate::rational::json")]
    pub target: Rational,
    pub all: Vec<PairDensity>,
}

/// Exact density of `Phi` constraints inside `S_a x S_b` for every query pair.
pub fn pair_densities(instance: &LayeredInstance, q: &WeakDensityQuery) -> Vec<PairDensity> {
    let member = q.membership(instance);
    let mut out = Vec::new();
    for a in 0..q.layer_indices.len() {
        for b in (a + 1)..q.layer_indices.len() {
            let (ia, ib) = (q.layer_indices[a], q.layer_indices[b]);
            let phi = instance.constraints(ia, ib);
            let inside = phi.iter().filter(|c| member[a][c.from] && member[b][c.to]).count();
            let density = if phi.is_empty() {
                Rational::zero()
            } else {
                rational::ratio(inside as i64, phi.len() as i64)
            };
            out.push(PairDensity {
                positions: (a, b),
                layers: (ia, ib),
                inside,
                total: phi.len(),
                density,
            });
        }
    }
    out
}

/// First query pair (in `(j, j')` order) whose constraint density inside
/// `S_j x S_j'` reaches `delta^2 / 4`.
pub fn weak_density_pair(instance: &LayeredInstance, q: &WeakDensityQuery) -> Result<WeakDensityReport> {
    q.check(instance)?;
    let target = &q.delta * &q.delta / rational::from_int(4);
    let all = pair_densities(instance, q);
    let chosen = all.iter().find(|d| d.density >= target).cloned().ok_or_else(|| {
        LayersError::PropertyViolation(format!("no layer pair reaches density {target}"))
    })?;
    Ok(WeakDensityReport { chosen, target, all })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkEstimate {
    pub positions: (usize, usize),
    pub layers: (usize, usize),
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
}

const WALK_CHUNK: u64 = 4096;

/// Monte-Carlo estimate of `Pr[E_j and E_j']` for a walk that starts uniformly
/// in `X_1` and moves to a uniformly chosen constrained neighbour in each
/// next layer. Trials run in fixed-size chunks, each with its own ChaCha
/// stream, so the result does not depend on the thread count.
pub fn random_walk_estimate(
    instance: &LayeredInstance,
    layer_indices: &[usize],
    sets: &[Vec<usize>],
    seed: u64,
    trials: u64,
) -> Result<Vec<WalkEstimate>> {
    if trials == 0 {
        return Err(LayersError::Precondition("trials must be at least 1".into()));
    }
    if layer_indices.len() != sets.len() {
        return Err(LayersError::Precondition("one set per layer index".into()));
    }
    let mut member = Vec::with_capacity(sets.len());
    for (&i, set) in layer_indices.iter().zip(sets) {
        let layer = instance.check_layer(i)?;
        let mut bits = vec![false; layer.size()];
        for &v in set {
            *bits
                .get_mut(v)
                .ok_or(LayersError::BadVariable { layer: i, index: v })? = true;
        }
        member.push(bits);
    }
    let m = layer_indices.len();
    let chunks = trials.div_ceil(WALK_CHUNK);
    let counts: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeded_rng(seed);
            rng.set_stream(chunk);
            let n = WALK_CHUNK.min(trials - chunk * WALK_CHUNK);
            let mut local = vec![0u64; m * m];
            let mut hit = vec![false; m];
            for _ in 0..n {
                walk_once(instance, layer_indices, &member, &mut rng, &mut hit);
                for a in 0..m {
                    for b in (a + 1)..m {
                        if hit[a] && hit[b] {
                            local[a * m + b] += 1;
                        }
                    }
                }
            }
            local
        })
        .reduce(|| vec![0u64; m * m], |mut acc, part| {
            acc.iter_mut().zip(part).for_each(|(x, y)| *x += y);
            acc
        });
    let mut out = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            let hits = counts[a * m + b];
            let estimate = hits as f64 / trials as f64;
            out.push(WalkEstimate {
                positions: (a, b),
                layers: (layer_indices[a], layer_indices[b]),
                hits,
                trials,
                estimate,
                std_error: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
            });
        }
    }
    Ok(out)
}

fn walk_once(
    instance: &LayeredInstance,
    layer_indices: &[usize],
    member: &[Vec<bool>],
    rng: &mut crate::game::SeededRng,
    hit: &mut [bool],
) {
    hit.iter_mut().for_each(|h| *h = false);
    let first = instance.layer(1);
    let mut tuple = first.tuple(rng.gen_range(0..first.size()));
    let mut next_query = 0;
    for i in 1..=instance.l() {
        if i > 1 {
            // Step from layer i-1 to layer i rewrites coordinate i (position i-1).
            let options = instance.y_neighbors(tuple[i - 1]);
            if options.is_empty() {
                return;
            }
            tuple[i - 1] = options[rng.gen_range(0..options.len())].0;
        }
        if next_query < layer_indices.len() && layer_indices[next_query] == i {
            hit[next_query] = member[next_query][instance.layer(i).var_index(&tuple)];
            next_query += 1;
        }
    }
}
