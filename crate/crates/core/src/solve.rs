//! Vertex-cover solvers on weighted hypergraphs.
//!
//! - [`greedy_matching_cover`]: keep a maximal family of pairwise disjoint
//!   edges and take all their vertices. Every cover must hit each kept edge
//!   separately, so with unit weights the result is within a factor `k` of
//!   optimal.
//! - [`exact_min_vc`]: branch and bound with exact weights.
//! - [`greedy_disjoint_subfamily`]: the "take the first set, drop everything
//!   meeting it" extraction used to count disjoint projections.

use crate::game::seeded_rng;
use crate::rational::{self, Rational};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid hypergraph: {0}")]
    InvalidHypergraph(String),
    #[error("invalid set collection: {0}")]
    InvalidCollection(String),
    #[error("instance has {vertices} vertices, above the solver cap {cap}")]
    TooManyVertices { vertices: usize, cap: usize },
    #[error("search budget of {nodes} nodes exhausted (best so far {best:?}, lower bound {lower_bound})")]
    BudgetExhausted {
        nodes: u64,
        best: Option<VertexSet>,
        lower_bound: Rational,
    },
    #[error("weights do not fit the solver's integer scale")]
    WeightOverflow,
}

impl SolveError {
    pub fn is_resource(&self) -> bool {
        matches!(
            self,
            SolveError::TooManyVertices { .. } | SolveError::BudgetExhausted { .. } | SolveError::WeightOverflow
        )
    }
}

pub type Result<T> = std::result::Result<T, SolveError>;

/// A sorted set of vertex ids with its exact total weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSet {
    pub vertices: Vec<u32>,
    #[serde(with = "crate::rational::json")]
    pub weight: Rational,
}

impl VertexSet {
    pub fn new(mut vertices: Vec<u32>, weight_of: impl Fn(u32) -> Rational) -> Self {
        vertices.sort_unstable();
        vertices.dedup();
        let weight = vertices.iter().fold(Rational::zero(), |acc, &v| acc + weight_of(v));
        VertexSet { vertices, weight }
    }

    pub fn empty() -> Self {
        VertexSet { vertices: Vec::new(), weight: Rational::zero() }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    /// Membership bitmap over `0..vertex_count`.
    pub fn indicator(&self, vertex_count: usize) -> Vec<bool> {
        let mut bits = vec![false; vertex_count];
        for &v in &self.vertices {
            if let Some(b) = bits.get_mut(v as usize) {
                *b = true;
            }
        }
        bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenericHypergraph {
    vertex_count: usize,
    #[serde(with = "crate::rational::json_vec")]
    weights: Vec<Rational>,
    edges: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct GenericRepr {
    vertex_count: usize,
    #[serde(with = "crate::rational::json_vec")]
    weights: Vec<Rational>,
    edges: Vec<Vec<u32>>,
}

impl<'de> Deserialize<'de> for GenericHypergraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GenericRepr::deserialize(d)?;
        GenericHypergraph::new(r.vertex_count, r.weights, r.edges).map_err(serde::de::Error::custom)
    }
}

impl GenericHypergraph {
    /// Edges are normalised to sorted lists of distinct vertices.
    pub fn new(vertex_count: usize, weights: Vec<Rational>, edges: Vec<Vec<u32>>) -> Result<Self> {
        let bad = |msg: String| Err(SolveError::InvalidHypergraph(msg));
        if weights.len() != vertex_count {
            return bad(format!("{} weights for {vertex_count} vertices", weights.len()));
        }
        if let Some(v) = weights.iter().position(|w| *w <= Rational::zero()) {
            return bad(format!("vertex {v} has non-positive weight {}", weights[v]));
        }
        let mut normalised = Vec::with_capacity(edges.len());
        for (idx, mut edge) in edges.into_iter().enumerate() {
            edge.sort_unstable();
            edge.dedup();
            if edge.is_empty() {
                return bad(format!("edge {idx} is empty"));
            }
            if let Some(&v) = edge.iter().find(|&&v| v as usize >= vertex_count) {
                return bad(format!("edge {idx} uses vertex {v} outside 0..{vertex_count}"));
            }
            normalised.push(edge);
        }
        Ok(GenericHypergraph { vertex_count, weights, edges: normalised })
    }

    pub fn unit(vertex_count: usize, edges: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(vertex_count, vec![rational::from_int(1); vertex_count], edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn edges(&self) -> &[Vec<u32>] {
        &self.edges
    }

    /// Largest edge size.
    pub fn rank(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_weight(&self) -> Rational {
        self.weights.iter().fold(Rational::zero(), |acc, w| acc + w)
    }

    pub fn vertex_set(&self, vertices: Vec<u32>) -> VertexSet {
        VertexSet::new(vertices, |v| self.weights[v as usize].clone())
    }

    /// First edge the set misses entirely, if any.
    pub fn uncovered_edge(&self, cover: &VertexSet) -> Option<&[u32]> {
        let member = cover.indicator(self.vertex_count);
        self.edges
            .iter()
            .find(|e| !e.iter().any(|&v| member[v as usize]))
            .map(Vec::as_slice)
    }

    pub fn is_cover(&self, cover: &VertexSet) -> bool {
        self.uncovered_edge(cover).is_none()
    }

    pub fn complement(&self, set: &VertexSet) -> VertexSet {
        let member = set.indicator(self.vertex_count);
        self.vertex_set((0..self.vertex_count as u32).filter(|&v| !member[v as usize]).collect())
    }
}

fn greedy_over(h: &GenericHypergraph, order: impl Iterator<Item = usize>) -> VertexSet {
    let mut used = vec![false; h.vertex_count()];
    let mut picked = Vec::new();
    for idx in order {
        let edge = &h.edges()[idx];
        if edge.iter().all(|&v| !used[v as usize]) {
            for &v in edge {
                used[v as usize] = true;
                picked.push(v);
            }
        }
    }
    h.vertex_set(picked)
}

/// Union of a maximal set of pairwise disjoint edges, scanned in input order.
///
/// With unit weights the result is at most `k` times the optimum. Weighted
/// inputs carry no such guarantee: a kept edge may hold a heavy vertex.
pub fn greedy_matching_cover(h: &GenericHypergraph) -> VertexSet {
    greedy_over(h, 0..h.edges().len())
}

/// Same procedure over a seeded random edge order.
pub fn greedy_matching_cover_shuffled(h: &GenericHypergraph, seed: u64) -> VertexSet {
    let mut order: Vec<usize> = (0..h.edges().len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    greedy_over(h, order.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverBudget {
    pub max_vertices: usize,
    pub max_nodes: u64,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget { max_vertices: 30, max_nodes: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCover {
    pub cover: VertexSet,
    pub nodes: u64,
    /// Lower bound proved at the root, before branching.
    #[serde(with = "crate::rational::json")]
    pub root_lower_bound: Rational,
    pub optimal: bool,
}

struct Search<'a> {
    h: &'a GenericHypergraph,
    weight: Vec<u128>,
    state: Vec<u8>,
    chosen: Vec<u32>,
    cost: u128,
    best: Option<(u128, Vec<u32>)>,
    nodes: u64,
    max_nodes: u64,
    exhausted: bool,
    marks: Vec<u32>,
    stamp: u32,
}

const FREE: u8 = 0;
const IN: u8 = 1;
const OUT: u8 = 2;

impl Search<'_> {
    /// Greedy disjoint lower bound over uncovered edges, plus the edge to
    /// branch on (fewest free vertices, first in order on ties). `None` means
    /// some uncovered edge has no free vertex left.
    fn bound_and_branch(&mut self) -> Option<(u128, Option<usize>)> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
        let mut bound = 0u128;
        let mut branch: Option<(usize, usize)> = None;
        for (idx, edge) in self.h.edges().iter().enumerate() {
            if edge.iter().any(|&v| self.state[v as usize] == IN) {
                continue;
            }
            let mut free = 0;
            let mut min_w = u128::MAX;
            let mut disjoint = true;
            for &v in edge {
                if self.state[v as usize] == FREE {
                    free += 1;
                    min_w = min_w.min(self.weight[v as usize]);
                    if self.marks[v as usize] == self.stamp {
                        disjoint = false;
                    }
                }
            }
            if free == 0 {
                return None;
            }
            if disjoint {
                bound += min_w;
                for &v in edge {
                    if self.state[v as usize] == FREE {
                        self.marks[v as usize] = self.stamp;
                    }
                }
            }
            if branch.is_none_or(|(_, f)| free < f) {
                branch = Some((idx, free));
            }
        }
        Some((bound, branch.map(|(idx, _)| idx)))
    }

    fn better(&self, cost: u128, set: &[u32]) -> bool {
        match &self.best {
            None => true,
            Some((best_cost, best_set)) => cost < *best_cost || (cost == *best_cost && set < best_set.as_slice()),
        }
    }

    fn run(&mut self) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            self.exhausted = true;
            return;
        }
        let Some((bound, branch)) = self.bound_and_branch() else {
            return;
        };
        if let Some((best_cost, _)) = &self.best {
            // Strict: equal-cost subtrees may still hold a lexicographically smaller cover.
            if self.cost + bound > *best_cost {
                return;
            }
        }
        let Some(edge_idx) = branch else {
            let mut set = self.chosen.clone();
            set.sort_unstable();
            if self.better(self.cost, &set) {
                self.best = Some((self.cost, set));
            }
            return;
        };
        let free: Vec<u32> = self.h.edges()[edge_idx]
            .iter()
            .copied()
            .filter(|&v| self.state[v as usize] == FREE)
            .collect();
        let mut excluded = Vec::new();
        for &v in &free {
            self.state[v as usize] = IN;
            self.chosen.push(v);
            self.cost += self.weight[v as usize];
            self.run();
            self.cost -= self.weight[v as usize];
            self.chosen.pop();
            self.state[v as usize] = OUT;
            excluded.push(v);
            if self.exhausted {
                break;
            }
        }
        for v in excluded {
            self.state[v as usize] = FREE;
        }
    }
}

fn integer_weights(h: &GenericHypergraph) -> Result<(Vec<u128>, BigInt)> {
    let scale = rational::common_denominator(h.weights());
    let weights = h
        .weights()
        .iter()
        .map(|w| {
            (w * Rational::from_integer(scale.clone()))
                .to_integer()
                .to_u128()
                .ok_or(SolveError::WeightOverflow)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: u128 = weights
        .iter()
        .try_fold(0u128, |acc, &w| acc.checked_add(w))
        .ok_or(SolveError::WeightOverflow)?;
    if total > u128::MAX / 4 {
        return Err(SolveError::WeightOverflow);
    }
    Ok((weights, scale))
}

/// Minimum-weight vertex cover by branch and bound.
///
/// Branches on the uncovered edge with the fewest free vertices: include its
/// first free vertex, or exclude it and include the next, and so on. The
/// bound is the greedy disjoint-edge bound. Among optimal covers the
/// lexicographically smallest sorted vertex list is returned.
pub fn exact_min_vc(h: &GenericHypergraph, budget: &SolverBudget) -> Result<ExactCover> {
    if h.vertex_count() > budget.max_vertices {
        return Err(SolveError::TooManyVertices { vertices: h.vertex_count(), cap: budget.max_vertices });
    }
    let (weight, scale) = integer_weights(h)?;
    let to_rational = |v: u128| Rational::new(BigInt::from(v), scale.clone());
    let mut search = Search {
        h,
        weight,
        state: vec![FREE; h.vertex_count()],
        chosen: Vec::new(),
        cost: 0,
        best: None,
        nodes: 0,
        max_nodes: budget.max_nodes,
        exhausted: false,
        marks: vec![0; h.vertex_count()],
        stamp: 0,
    };
    let root_bound = search.bound_and_branch().map_or(0, |(b, _)| b);
    let greedy = greedy_matching_cover(h);
    let greedy_cost = greedy.vertices.iter().map(|&v| search.weight[v as usize]).sum::<u128>();
    search.best = Some((greedy_cost, greedy.vertices.clone()));
    search.run();
    let (_, set) = search.best.clone().expect("greedy seeds the incumbent");
    let cover = h.vertex_set(set);
    if search.exhausted {
        return Err(SolveError::BudgetExhausted {
            nodes: search.nodes,
            best: Some(cover),
            lower_bound: to_rational(root_bound),
        });
    }
    Ok(ExactCover {
        cover,
        nodes: search.nodes,
        root_lower_bound: to_rational(root_bound),
        optimal: true,
    })
}

/// Maximum-weight independent set: the complement of [`exact_min_vc`].
pub fn exact_max_is(h: &GenericHypergraph, budget: &SolverBudget) -> Result<VertexSet> {
    let cover = exact_min_vc(h, budget)?;
    Ok(h.complement(&cover.cover))
}

/// Repeatedly keeps the first remaining set and discards every remaining set
/// meeting it. Requires `|A_i| <= max_size` and element multiplicity at most
/// `max_multiplicity`; the result then has at least
/// `n / (1 + (max_multiplicity - 1) * max_size)` sets.
pub fn greedy_disjoint_subfamily(
    sets: &[Vec<usize>],
    max_size: usize,
    max_multiplicity: usize,
) -> Result<Vec<usize>> {
    let mut normalised: Vec<Vec<usize>> = Vec::with_capacity(sets.len());
    let mut count = std::collections::BTreeMap::<usize, usize>::new();
    for (idx, set) in sets.iter().enumerate() {
        let mut s = set.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() > max_size {
            return Err(SolveError::InvalidCollection(format!(
                "set {idx} has {} elements, above m = {max_size}",
                s.len()
            )));
        }
        for &e in &s {
            *count.entry(e).or_default() += 1;
        }
        normalised.push(s);
    }
    if let Some((e, c)) = count.iter().find(|(_, &c)| c > max_multiplicity) {
        return Err(SolveError::InvalidCollection(format!(
            "element {e} lies in {c} sets, above k = {max_multiplicity}"
        )));
    }
    let mut alive = vec![true; normalised.len()];
    let mut picked = Vec::new();
    for first in 0..normalised.len() {
        if !alive[first] {
            continue;
        }
        picked.push(first);
        for other in first..normalised.len() {
            if alive[other] && intersects(&normalised[first], &normalised[other]) {
                alive[other] = false;
            }
        }
    }
    Ok(picked)
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    // Two empty sets are disjoint; an empty set meets nothing.
    false
}
