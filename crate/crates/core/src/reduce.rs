//! The p-biased long-code hypergraph over a layered instance.
//!
//! Every layered variable `x` in layer `i` gets a block `V[x]` with one vertex
//! per subset of `R_i`; vertex ids are `block offset + subset mask`. A vertex
//! `v` in `V[x]` weighs `mu_p(v) / (l |X_i|)`, so each layer weighs `1/l`.
//!
//! For every constraint `x -> y` of the layered instance, the multiset
//! `{v_1, .., v_{k-1}} ⊆ V[x]` (repetition allowed) together with `u ∈ V[y]`
//! is a hyperedge whenever the projection of `v_1 ∩ .. ∩ v_{k-1}` misses `u`.
//! The empty `u` therefore joins every such multiset.

use crate::game::GameLabeling;
use crate::layers::{self, LayeredInstance, WeakDensityQuery};
use crate::rational::{self, Rational};
use crate::setfam::{self, BiasParams, Mask, SetFamily, ThresholdQuery};
use crate::solve::{GenericHypergraph, VertexSet};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReduceError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("layer {layer} has |R_i| = {range}, above the cap {cap}")]
    RangeTooLarge { layer: usize, range: usize, cap: usize },
    #[error("explicit edge enumeration would produce up to {estimate} edges, above the cap {cap}")]
    TooManyEdges { estimate: u128, cap: u64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("decoding failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Layers(#[from] layers::LayersError),
}

impl ReduceError {
    pub fn is_resource(&self) -> bool {
        matches!(self, ReduceError::RangeTooLarge { .. } | ReduceError::TooManyEdges { .. })
    }
}

pub type Result<T> = std::result::Result<T, ReduceError>;

/// `p = 1 - 1/(k - 1 - eps)`, defined for `k >= 3` and `0 < eps < k - 2`.
pub fn bias_from_k_eps(k: usize, epsilon: &Rational) -> Result<Rational> {
    if k < 3 {
        return Err(ReduceError::Domain(format!("k must be at least 3, got {k}")));
    }
    let k_minus_2 = rational::from_int(k as i64 - 2);
    if *epsilon <= Rational::zero() || *epsilon >= k_minus_2 {
        return Err(ReduceError::Domain(format!("need 0 < eps < k - 2 = {k_minus_2}, got {epsilon}")));
    }
    Ok(Rational::one() - Rational::one() / (rational::from_int(k as i64 - 1) - epsilon))
}

/// `(1 - eps) / (1 - p)`: the ratio between a cover of weight `1 - eps` and
/// the completeness cover of weight `1 - p`.
pub fn gap_ratio(k: usize, epsilon: &Rational) -> Result<Rational> {
    let p = bias_from_k_eps(k, epsilon)?;
    Ok((Rational::one() - epsilon) / (Rational::one() - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    #[default]
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphCaps {
    pub max_range: usize,
    pub max_edges: u64,
}

impl Default for HypergraphCaps {
    fn default() -> Self {
        HypergraphCaps { max_range: 8, max_edges: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub layer: usize,
    pub var: usize,
    pub offset: u32,
    pub range_size: usize,
}

/// A constrained block pair with its value projection (`R_i` index to `R_j` index).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from_block: usize,
    pub to_block: usize,
    pub projection: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct LongCodeHypergraph {
    k: usize,
    bias: BiasParams,
    mode: EdgeMode,
    instance: LayeredInstance,
    blocks: Vec<Block>,
    layer_start: Vec<usize>,
    vertex_count: usize,
    layer_mu: Vec<Vec<Rational>>,
    layer_scale: Vec<Rational>,
    links: Vec<Link>,
    pair_links: BTreeMap<(usize, usize), usize>,
    edges: Option<Vec<Vec<u32>>>,
}

fn multiset_count(items: u128, size: u32) -> u128 {
    // C(items + size - 1, size)
    let mut acc: u128 = 1;
    for step in 0..size as u128 {
        acc = acc.saturating_mul(items + step) / (step + 1);
    }
    acc
}

pub fn build_hypergraph(
    instance: &LayeredInstance,
    k: usize,
    p: &Rational,
    caps: &HypergraphCaps,
    mode: EdgeMode,
) -> Result<LongCodeHypergraph> {
    if k < 3 {
        return Err(ReduceError::Domain(format!("k must be at least 3, got {k}")));
    }
    let bias = BiasParams::new(p.clone()).map_err(|e| ReduceError::Domain(e.to_string()))?;
    let cap = caps.max_range.min(16);
    for layer in instance.layers() {
        if layer.range_size() > cap {
            return Err(ReduceError::RangeTooLarge { layer: layer.index(), range: layer.range_size(), cap });
        }
    }
    let l = instance.l();
    let mut blocks = Vec::new();
    let mut layer_start = Vec::with_capacity(l);
    let mut offset: u64 = 0;
    for layer in instance.layers() {
        layer_start.push(blocks.len());
        for var in 0..layer.size() {
            blocks.push(Block {
                layer: layer.index(),
                var,
                offset: u32::try_from(offset).map_err(|_| ReduceError::TooManyEdges {
                    estimate: offset as u128,
                    cap: u32::MAX as u64,
                })?,
                range_size: layer.range_size(),
            });
            offset += 1u64 << layer.range_size();
        }
    }
    let vertex_count = usize::try_from(offset).expect("vertex count fits usize");
    let layer_mu = instance
        .layers()
        .iter()
        .map(|layer| bias.weights_by_size(layer.range_size()))
        .collect();
    let layer_scale = instance
        .layers()
        .iter()
        .map(|layer| rational::ratio(1, (l * layer.size()) as i64))
        .collect();
    let mut links = Vec::new();
    let mut pair_links = BTreeMap::new();
    let mut estimate: u128 = 0;
    for (i, j) in instance.pairs().collect::<Vec<_>>() {
        pair_links.insert((i, j), links.len());
        let (ri, rj) = (instance.layer(i).range_size(), instance.layer(j).range_size());
        let per_link = multiset_count(1u128 << ri, (k - 1) as u32).saturating_mul(1u128 << rj);
        for c in instance.constraints(i, j) {
            let projection = (0..ri)
                .map(|a| instance.project_value_index(i, j, &c.via, a) as u32)
                .collect();
            links.push(Link {
                from_block: layer_start[i - 1] + c.from,
                to_block: layer_start[j - 1] + c.to,
                projection,
            });
            estimate = estimate.saturating_add(per_link);
        }
    }
    let mut hg = LongCodeHypergraph {
        k,
        bias,
        mode,
        instance: instance.clone(),
        blocks,
        layer_start,
        vertex_count,
        layer_mu,
        layer_scale,
        links,
        pair_links,
        edges: None,
    };
    if mode == EdgeMode::Explicit {
        if estimate > caps.max_edges as u128 {
            return Err(ReduceError::TooManyEdges { estimate, cap: caps.max_edges });
        }
        let mut edges = Vec::new();
        hg.generate_edges(|edge| edges.push(edge.to_vec()));
        edges.sort_unstable();
        edges.dedup();
        hg.edges = Some(edges);
    }
    Ok(hg)
}

impl LongCodeHypergraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> &Rational {
        self.bias.p()
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn instance(&self) -> &LayeredInstance {
        &self.instance
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Stored edges (explicit mode only), as sorted multisets of vertex ids.
    pub fn explicit_edges(&self) -> Option<&[Vec<u32>]> {
        self.edges.as_deref()
    }

    pub fn block_id(&self, layer: usize, var: usize) -> usize {
        self.layer_start[layer - 1] + var
    }

    pub fn vertex(&self, block: usize, mask: Mask) -> u32 {
        self.blocks[block].offset + mask
    }

    /// `(block, subset mask)` of a vertex id.
    pub fn locate(&self, vertex: u32) -> (usize, Mask) {
        let block = self.blocks.partition_point(|b| b.offset <= vertex) - 1;
        (block, vertex - self.blocks[block].offset)
    }

    /// `mu_p` of a subset of the block's range, without the layer scaling.
    pub fn block_mu(&self, block: usize, mask: Mask) -> Rational {
        let b = &self.blocks[block];
        self.layer_mu[b.layer - 1][mask.count_ones() as usize].clone()
    }

    pub fn weight(&self, vertex: u32) -> Rational {
        let (block, mask) = self.locate(vertex);
        let layer = self.blocks[block].layer;
        &self.layer_mu[layer - 1][mask.count_ones() as usize] * &self.layer_scale[layer - 1]
    }

    pub fn vertex_set(&self, vertices: Vec<u32>) -> VertexSet {
        VertexSet::new(vertices, |v| self.weight(v))
    }

    pub fn total_weight(&self) -> Rational {
        (0..self.vertex_count as u32).fold(Rational::zero(), |acc, v| acc + self.weight(v))
    }

    pub fn project_mask(&self, link: &Link, mask: Mask) -> Mask {
        setfam::elements(mask).fold(0, |acc, a| acc | (1 << link.projection[a]))
    }

    /// Links of `Phi_ij`, in the instance's constraint order.
    pub fn pair_links(&self, i: usize, j: usize) -> &[Link] {
        match self.pair_links.get(&(i, j)) {
            Some(&start) => &self.links[start..start + self.instance.constraints(i, j).len()],
            None => &[],
        }
    }

    /// Streams every hyperedge (sorted multiset of ids) without storing them.
    pub fn generate_edges(&self, mut emit: impl FnMut(&[u32])) {
        let mut path = Vec::with_capacity(self.k);
        let mut edge = Vec::with_capacity(self.k);
        for link in &self.links {
            let full_from = setfam::prefix_mask(self.blocks[link.from_block].range_size);
            self.edges_from(link, 0, full_from, &mut path, &mut edge, &mut emit);
        }
    }

    fn edges_from(
        &self,
        link: &Link,
        start: Mask,
        acc: Mask,
        path: &mut Vec<Mask>,
        edge: &mut Vec<u32>,
        emit: &mut impl FnMut(&[u32]),
    ) {
        let from = &self.blocks[link.from_block];
        if path.len() == self.k - 1 {
            let to = &self.blocks[link.to_block];
            let free = !self.project_mask(link, acc) & setfam::prefix_mask(to.range_size);
            // Every submask of `free` is a valid u.
            let mut u = free;
            loop {
                edge.clear();
                edge.extend(path.iter().map(|&m| from.offset + m));
                edge.push(to.offset + u);
                edge.sort_unstable();
                emit(edge);
                if u == 0 {
                    break;
                }
                u = (u - 1) & free;
            }
            return;
        }
        for mask in start..(1 << from.range_size) {
            path.push(mask);
            self.edges_from(link, mask, acc & mask, path, edge, emit);
            path.pop();
        }
    }

    /// Solver-facing copy: edges as sets of distinct vertices.
    pub fn to_generic(&self) -> GenericHypergraph {
        let weights = (0..self.vertex_count as u32).map(|v| self.weight(v)).collect();
        let mut edges: Vec<Vec<u32>> = Vec::new();
        let mut push = |edge: &[u32]| {
            let mut e = edge.to_vec();
            e.dedup();
            edges.push(e);
        };
        match &self.edges {
            Some(stored) => stored.iter().for_each(|e| push(e)),
            None => self.generate_edges(push),
        }
        edges.sort_unstable();
        edges.dedup();
        GenericHypergraph::new(self.vertex_count, weights, edges).expect("long-code hypergraph is well formed")
    }

    pub fn export(&self) -> HypergraphExport {
        let vertices = (0..self.vertex_count as u32)
            .map(|id| {
                let (block, mask) = self.locate(id);
                let b = &self.blocks[block];
                ExportVertex { id, layer: b.layer, var: b.var, mask, weight: self.weight(id) }
            })
            .collect();
        HypergraphExport {
            k: self.k,
            p: self.p().clone(),
            l: self.instance.l(),
            mode: self.mode,
            vertex_count: self.vertex_count,
            vertices,
            edges: self.edges.clone(),
            predicate: (self.mode == EdgeMode::Implicit).then(|| ImplicitPredicate {
                rule: "edge = (v_1..v_{k-1} in V[from_block], u in V[to_block]) with project(v_1 & .. & v_{k-1}) & u == 0".into(),
                blocks: self.blocks.clone(),
                links: self.links.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportVertex {
    pub id: u32,
    pub layer: usize,
    pub var: usize,
    pub mask: Mask,
    #[serde(with = "crate::rational::json")]
    pub weight: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitPredicate {
    pub rule: String,
    pub blocks: Vec<Block>,
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphExport {
    pub k: usize,
    #[serde(with = "crate::rational::json")]
    pub p: Rational,
    pub l: usize,
    pub mode: EdgeMode,
    pub vertex_count: usize,
    pub vertices: Vec<ExportVertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<ImplicitPredicate>,
}

impl HypergraphExport {
    /// Solver view of an exported explicit hypergraph.
    pub fn to_generic(&self) -> std::result::Result<GenericHypergraph, crate::solve::SolveError> {
        let mut edges: Vec<Vec<u32>> = self
            .edges
            .as_ref()
            .ok_or_else(|| {
                crate::solve::SolveError::InvalidHypergraph("implicit export carries no edge list".into())
            })?
            .iter()
            .map(|e| {
                let mut e = e.clone();
                e.sort_unstable();
                e.dedup();
                e
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        GenericHypergraph::new(
            self.vertex_count,
            self.vertices.iter().map(|v| v.weight.clone()).collect(),
            edges,
        )
    }
}

/// `I = ∪_x { v ∈ V[x] : A(x) ∈ v }` for the lift of a satisfying labeling.
pub fn completeness_witness(hg: &LongCodeHypergraph, labeling: &GameLabeling) -> Result<VertexSet> {
    let lifted = layers::lift_labeling(hg.instance(), labeling)
        .map_err(|e| ReduceError::Precondition(e.to_string()))?;
    let mut vertices = Vec::new();
    for layer in hg.instance().layers() {
        for var in 0..layer.size() {
            let value = layer.value_index(lifted.value(layer.index(), var));
            let block = hg.block_id(layer.index(), var);
            let bit: Mask = 1 << value;
            vertices.extend((0..(1 << layer.range_size())).filter(|m| m & bit != 0).map(|m| hg.vertex(block, m)));
        }
    }
    Ok(hg.vertex_set(vertices))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependenceCheck {
    pub independent: bool,
    pub violating_edge: Option<Vec<u32>>,
}

/// True iff no hyperedge lies inside `set`. Explicit mode scans the stored
/// edges; implicit mode closes each block's members under intersection (at
/// most `k - 1` of them) and tests the projections directly.
pub fn is_independent(hg: &LongCodeHypergraph, set: &VertexSet) -> IndependenceCheck {
    let member = set.indicator(hg.vertex_count());
    let violating_edge = match hg.explicit_edges() {
        Some(edges) => edges
            .iter()
            .find(|e| e.iter().all(|&v| member[v as usize]))
            .cloned(),
        None => implicit_violation(hg, &member),
    };
    IndependenceCheck { independent: violating_edge.is_none(), violating_edge }
}

fn members_in_block(hg: &LongCodeHypergraph, member: &[bool], block: usize) -> Vec<Mask> {
    let b = &hg.blocks()[block];
    (0..(1 << b.range_size))
        .filter(|&m| member[(b.offset + m) as usize])
        .collect()
}

/// Every intersection of at most `depth` members, each with one generating
/// tuple padded to exactly `depth` entries.
fn intersection_closure(members: &[Mask], depth: usize) -> BTreeMap<Mask, Vec<Mask>> {
    let mut reach: BTreeMap<Mask, Vec<Mask>> = members.iter().map(|&m| (m, vec![m])).collect();
    let mut frontier: Vec<Mask> = reach.keys().copied().collect();
    for _ in 1..depth {
        let mut next = Vec::new();
        for &m in &frontier {
            for &a in members {
                let meet = m & a;
                if !reach.contains_key(&meet) {
                    let mut path = reach[&m].clone();
                    path.push(a);
                    reach.insert(meet, path);
                    next.push(meet);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    for path in reach.values_mut() {
        let last = *path.last().expect("non-empty path");
        path.resize(depth, last);
    }
    reach
}

fn implicit_violation(hg: &LongCodeHypergraph, member: &[bool]) -> Option<Vec<u32>> {
    for link in hg.links() {
        let us = members_in_block(hg, member, link.to_block);
        if us.is_empty() {
            continue;
        }
        let vs = members_in_block(hg, member, link.from_block);
        if vs.is_empty() {
            continue;
        }
        for (meet, path) in intersection_closure(&vs, hg.k() - 1) {
            let proj = hg.project_mask(link, meet);
            if let Some(&u) = us.iter().find(|&&u| u & proj == 0) {
                let mut edge: Vec<u32> = path.iter().map(|&m| hg.vertex(link.from_block, m)).collect();
                edge.push(hg.vertex(link.to_block, u));
                edge.sort_unstable();
                return Some(edge);
            }
        }
    }
    None
}

/// `floor(log(eps/4) / log(1 - (1-p)^t))`: how many pairwise disjoint
/// `t`-sets a family of `mu_p` weight at least `eps/4` can be forced to meet.
/// A `1e-9` slack absorbs rounding when the ratio is an exact integer.
pub fn disjointness_budget(epsilon: &Rational, p: &Rational, t: u64) -> Result<u64> {
    if *epsilon <= Rational::zero() || *epsilon >= Rational::one() {
        return Err(ReduceError::Domain(format!("eps must lie in (0,1), got {epsilon}")));
    }
    if *p <= Rational::zero() || *p >= Rational::one() {
        return Err(ReduceError::Domain(format!("p must lie in (0,1), got {p}")));
    }
    if t == 0 {
        return Err(ReduceError::Domain("t must be at least 1".into()));
    }
    let ratio = disjointness_ratio(epsilon, p, t);
    if !ratio.is_finite() || ratio >= u64::MAX as f64 {
        return Err(ReduceError::Domain(format!(
            "(1-p)^t underflows for p = {p}, t = {t}; the budget is unbounded in floating point"
        )));
    }
    Ok((ratio + 1e-9).floor() as u64)
}

fn disjointness_ratio(epsilon: &Rational, p: &Rational, t: u64) -> f64 {
    let eps = rational::to_f64(epsilon);
    let miss = (t as f64 * (1.0 - rational::to_f64(p)).ln()).exp();
    (eps / 4.0).ln() / (-miss).ln_1p()
}

/// `1 / (t^2 log(eps/4) / log(1 - (1-p)^t))`; zero once `(1-p)^t` underflows.
pub fn decoded_fraction_bound(epsilon: &Rational, p: &Rational, t: u64) -> f64 {
    let ratio = disjointness_ratio(epsilon, p, t);
    if !ratio.is_finite() {
        return 0.0;
    }
    1.0 / ((t as f64).powi(2) * ratio)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XChoice {
    pub var: usize,
    /// The `k - 1` members of `I ∩ V[x]` (as subset masks).
    pub tuple: Vec<Mask>,
    /// Their intersection `B(x)`, as value indices of `R_i`.
    pub candidates: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YChoice {
    pub var: usize,
    pub value: u32,
    /// Number of `x` whose projected `B(x)` contains `value`.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentSetDecoding {
    #[serde(with = "crate::rational::json")]
    pub epsilon: Rational,
    pub t: u64,
    pub dense_variables: usize,
    pub qualifying_layers: Vec<usize>,
    /// Whether enough layers were dense for the weak-density step to apply.
    pub hypotheses_met: bool,
    pub layers: (usize, usize),
    #[serde(with = "crate::rational::json")]
    pub density: Rational,
    #[serde(with = "crate::rational::json")]
    pub density_target: Rational,
    pub x_choices: Vec<XChoice>,
    pub y_choices: Vec<YChoice>,
    pub constraints: usize,
    #[serde(with = "crate::rational::json")]
    pub expected_fraction: Rational,
    /// Diagnostic, floating point.
    pub fraction_bound_f64: f64,
    pub disjointness_budget: Option<u64>,
    pub violations: Vec<String>,
}

/// Recovers a partial labeling of two layers from an independent set of
/// weight at least `eps`.
///
/// 1. `X'` = variables whose block keeps `mu_p` weight at least `eps/2`.
/// 2. If at least `ceil(8/eps)` layers are `eps/4`-dense in `X'`, weak density
///    picks a layer pair with `eps^2/64` of its constraints inside `X'`.
///    Otherwise the densest pair is taken and `hypotheses_met` is false.
/// 3. Each `x` in the lower layer gets `k - 1` members meeting in fewer than
///    `t(eps/2, k-1, p)` values; their intersection is `B(x)`.
/// 4. Each `y` in the upper layer takes the value lying in the most projected
///    `B(x)`, smallest value on ties.
/// 5. The returned fraction is the exact expectation over uniform picks from
///    each `B(x)`.
pub fn decode_independent_set(
    hg: &LongCodeHypergraph,
    set: &VertexSet,
    epsilon: &Rational,
) -> Result<IndependentSetDecoding> {
    if *epsilon <= Rational::zero() || *epsilon >= Rational::one() {
        return Err(ReduceError::Domain(format!("eps must lie in (0,1), got {epsilon}")));
    }
    if set.weight < *epsilon {
        return Err(ReduceError::Precondition(format!(
            "set weight {} is below eps = {epsilon}",
            set.weight
        )));
    }
    let check = is_independent(hg, set);
    if let Some(edge) = check.violating_edge {
        return Err(ReduceError::Precondition(format!("set contains hyperedge {edge:?}")));
    }
    let instance = hg.instance();
    let member = set.indicator(hg.vertex_count());
    let half_eps = epsilon / rational::from_int(2);
    let quarter_eps = epsilon / rational::from_int(4);

    // Step 1.
    let block_members: Vec<Vec<Mask>> = (0..hg.blocks().len())
        .map(|b| members_in_block(hg, &member, b))
        .collect();
    let dense: Vec<bool> = block_members
        .iter()
        .enumerate()
        .map(|(b, masks)| masks.iter().fold(Rational::zero(), |acc, &m| acc + hg.block_mu(b, m)) >= half_eps)
        .collect();
    let dense_in = |layer: usize| -> Vec<usize> {
        (0..instance.layer(layer).size())
            .filter(|&var| dense[hg.block_id(layer, var)])
            .collect()
    };

    // Step 2.
    let qualifying_layers: Vec<usize> = (1..=instance.l())
        .filter(|&i| {
            let size = instance.layer(i).size() as i64;
            rational::from_int(dense_in(i).len() as i64) >= &quarter_eps * rational::from_int(size)
        })
        .collect();
    let needed = rational::ceil_to_u64(&(rational::from_int(8) / epsilon)).unwrap_or(u64::MAX);
    let density_target = epsilon * epsilon / rational::from_int(64);
    let hypotheses_met = qualifying_layers.len() as u64 >= needed;
    let (layers_pair, density) = if hypotheses_met {
        let query = WeakDensityQuery {
            delta: quarter_eps.clone(),
            layer_indices: qualifying_layers.clone(),
            sets: qualifying_layers.iter().map(|&i| dense_in(i)).collect(),
        };
        let report = layers::weak_density_pair(instance, &query)?;
        (report.chosen.layers, report.chosen.density)
    } else {
        let mut best: Option<((usize, usize), Rational)> = None;
        for (i, j) in instance.pairs().collect::<Vec<_>>() {
            let phi = instance.constraints(i, j);
            if phi.is_empty() {
                continue;
            }
            let inside = phi
                .iter()
                .filter(|c| dense[hg.block_id(i, c.from)] && dense[hg.block_id(j, c.to)])
                .count();
            let d = rational::ratio(inside as i64, phi.len() as i64);
            if best.as_ref().is_none_or(|(_, bd)| d > *bd) {
                best = Some(((i, j), d));
            }
        }
        best.ok_or_else(|| ReduceError::Decode("no layer pair carries constraints".into()))?
    };
    let (li, lj) = layers_pair;

    // Step 3.
    let s = hg.k() - 1;
    let query = ThresholdQuery::new(half_eps.clone(), s, hg.p().clone())
        .map_err(|e| ReduceError::Domain(e.to_string()))?;
    let t = setfam::intersection_threshold(&query);
    let mut violations = Vec::new();
    let mut b_sets: BTreeMap<usize, Mask> = BTreeMap::new();
    let mut x_choices = Vec::new();
    let range_i = instance.layer(li).range_size();
    for var in dense_in(li) {
        let block = hg.block_id(li, var);
        let family = SetFamily::new(range_i, block_members[block].iter().copied())
            .map_err(|e| ReduceError::Decode(e.to_string()))?;
        let t_small = usize::try_from(t).unwrap_or(usize::MAX);
        match setfam::find_small_intersection_tuple(&family, s, t_small) {
            Some(tuple) => {
                let meet = tuple.iter().fold(setfam::prefix_mask(range_i), |acc, &m| acc & m);
                b_sets.insert(var, meet);
                x_choices.push(XChoice {
                    var,
                    tuple,
                    candidates: setfam::elements(meet).map(|a| a as u32).collect(),
                });
            }
            None => violations.push(format!(
                "x{li}[{var}]: block of weight >= eps/2 is {s}-wise {t}-intersecting"
            )),
        }
    }

    // Step 4.
    let links = hg.pair_links(li, lj);
    let phi = instance.constraints(li, lj);
    let range_j = instance.layer(lj).range_size();
    let y_vars = dense_in(lj);
    let y_dense: BTreeMap<usize, usize> = y_vars.iter().enumerate().map(|(pos, &v)| (v, pos)).collect();
    let mut counts = vec![vec![0usize; range_j]; y_vars.len()];
    for (c, link) in phi.iter().zip(links) {
        let (Some(&meet), Some(&pos)) = (b_sets.get(&c.from), y_dense.get(&c.to)) else {
            continue;
        };
        for b in setfam::elements(hg.project_mask(link, meet)) {
            counts[pos][b] += 1;
        }
    }
    let y_choices: Vec<YChoice> = y_vars
        .iter()
        .zip(&counts)
        .map(|(&var, row)| {
            let (value, support) = row
                .iter()
                .enumerate()
                .fold((0, 0), |best, (b, &n)| if n > best.1 { (b, n) } else { best });
            YChoice { var, value: value as u32, support }
        })
        .collect();

    // Step 5.
    let mut total = Rational::zero();
    let mut used = 0usize;
    for (c, link) in phi.iter().zip(links) {
        let (Some(&meet), Some(&pos)) = (b_sets.get(&c.from), y_dense.get(&c.to)) else {
            continue;
        };
        used += 1;
        let size = meet.count_ones() as i64;
        if size == 0 {
            violations.push(format!("B(x{li}[{}]) is empty under a constraint into Y", c.from));
            continue;
        }
        let target = y_choices[pos].value;
        let hits = setfam::elements(meet).filter(|&a| link.projection[a] == target).count() as i64;
        total += rational::ratio(hits, size);
    }
    if used == 0 {
        return Err(ReduceError::Decode(format!("no constraints between the dense parts of layers {li} and {lj}")));
    }
    let expected_fraction = total / rational::from_int(used as i64);
    Ok(IndependentSetDecoding {
        epsilon: epsilon.clone(),
        t,
        dense_variables: dense.iter().filter(|&&d| d).count(),
        qualifying_layers,
        hypotheses_met,
        layers: layers_pair,
        density,
        density_target,
        x_choices,
        y_choices,
        constraints: used,
        expected_fraction,
        fraction_bound_f64: decoded_fraction_bound(epsilon, hg.p(), t),
        disjointness_budget: disjointness_budget(epsilon, hg.p(), t).ok(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{gen_planted, Constraint, ProjectionGame};
    use crate::layers::{build_layered, LayerCaps};
    use crate::rational::ratio;

    fn toy_game() -> (ProjectionGame, GameLabeling) {
        // One y, one z, R_Y = {0, 1} both projecting to the single z value.
        let game = ProjectionGame {
            ry: 2,
            rz: 1,
            y_count: 1,
            z_count: 1,
            constraints: vec![Constraint { y: 0, z: 0, table: vec![0, 0] }],
        };
        (game, GameLabeling { y_labels: vec![1], z_labels: vec![0] })
    }

    fn build(game: &ProjectionGame, l: usize, k: usize, eps: Rational, mode: EdgeMode) -> LongCodeHypergraph {
        let inst = build_layered(game, l, &LayerCaps::default()).unwrap();
        let p = bias_from_k_eps(k, &eps).unwrap();
        build_hypergraph(&inst, k, &p, &HypergraphCaps::default(), mode).unwrap()
    }

    /// Definitional re-check: `{v_1..v_{k-1}} ⊆ V[x]`, `u ∈ V[x']` with a
    /// constraint `x -> x'` and `π(∩ v) ∩ u = ∅`, via the layered instance.
    fn oracle_edges(hg: &LongCodeHypergraph) -> Vec<Vec<u32>> {
        let inst = hg.instance();
        let mut out = Vec::new();
        for (i, j) in inst.pairs().collect::<Vec<_>>() {
            let (ri, rj) = (inst.layer(i).range_size(), inst.layer(j).range_size());
            for c in inst.constraints(i, j) {
                let bx = hg.block_id(i, c.from);
                let by = hg.block_id(j, c.to);
                let mut tuples: Vec<Vec<u32>> = vec![vec![]];
                for _ in 0..hg.k() - 1 {
                    tuples = tuples
                        .into_iter()
                        .flat_map(|t| {
                            let lo = t.last().copied().unwrap_or(0);
                            (lo..(1u32 << ri)).map(move |m| {
                                let mut t2 = t.clone();
                                t2.push(m);
                                t2
                            })
                        })
                        .collect();
                }
                for t in tuples {
                    let meet: Vec<usize> = (0..ri).filter(|&a| t.iter().all(|m| m & (1 << a) != 0)).collect();
                    let image: Vec<usize> = meet
                        .iter()
                        .map(|&a| {
                            let va = inst.layer(i).value_vector(a);
                            let vb = inst.project_assignment(i, c.from, j, c.to, &va).unwrap();
                            inst.layer(j).value_index(&vb)
                        })
                        .collect();
                    for u in 0..(1u32 << rj) {
                        if image.iter().all(|&b| u & (1 << b) == 0) {
                            let mut e: Vec<u32> = t.iter().map(|&m| hg.vertex(bx, m)).collect();
                            e.push(hg.vertex(by, u));
                            e.sort_unstable();
                            out.push(e);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    #[test]
    fn bias_examples() {
        assert_eq!(bias_from_k_eps(3, &ratio(1, 10)).unwrap(), ratio(9, 19));
        assert!(matches!(bias_from_k_eps(3, &ratio(1, 1)), Err(ReduceError::Domain(_))));
        assert!(bias_from_k_eps(2, &ratio(1, 10)).is_err());
        // Approaches 1 - 1/(k-1) from below as eps shrinks.
        for k in 3..7 {
            let limit = Rational::one() - ratio(1, k as i64 - 1);
            let mut prev = Rational::zero();
            for denom in [10, 100, 1000, 10_000] {
                let p = bias_from_k_eps(k, &ratio(1, denom)).unwrap();
                assert!(p < limit && p > prev);
                prev = p;
            }
            assert!(&limit - &prev < ratio(1, 1000));
        }
    }

    #[test]
    fn gap_identity_holds_exactly() {
        for k in 3..=5 {
            for eps in [ratio(1, 10), ratio(1, 100)] {
                let lhs = gap_ratio(k, &eps).unwrap();
                let rhs = (Rational::one() - &eps) * (rational::from_int(k as i64 - 1) - &eps);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn toy_blocks_weights_and_edges() {
        let (game, _) = toy_game();
        let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
        // Layer 1: one variable, |R_1| = 2 -> 4 vertices; layer 2: |R_2| = 1 -> 2.
        assert_eq!(hg.vertex_count(), 6);
        assert_eq!(hg.blocks().len(), 2);
        assert_eq!(hg.total_weight(), ratio(1, 1));
        let edges = hg.explicit_edges().unwrap().to_vec();
        assert_eq!(edges, oracle_edges(&hg));
        // u = ∅ (vertex 4) joins every 2-multiset of V[x].
        let multisets = 4 * 5 / 2;
        assert_eq!(edges.iter().filter(|e| e.contains(&4)).count(), multisets);
    }

    #[test]
    fn explicit_edges_match_oracle_on_planted_instances() {
        for seed in 0..5 {
            let (game, _) = gen_planted(2, 2, 1, 2, 1, seed).unwrap();
            for k in [3, 4] {
                let hg = build(&game, 2, k, ratio(1, 10), EdgeMode::Explicit);
                assert_eq!(hg.explicit_edges().unwrap(), oracle_edges(&hg).as_slice());
            }
        }
    }

    #[test]
    fn weights_normalise_per_layer_and_block() {
        let (game, _) = gen_planted(2, 1, 1, 2, 1, 3).unwrap();
        let hg = build(&game, 3, 3, ratio(1, 10), EdgeMode::Implicit);
        let l = hg.instance().l();
        for layer in hg.instance().layers() {
            let mut layer_total = Rational::zero();
            for var in 0..layer.size() {
                let b = hg.block_id(layer.index(), var);
                let block_total = (0..(1u32 << layer.range_size()))
                    .fold(Rational::zero(), |acc, m| acc + hg.weight(hg.vertex(b, m)));
                assert_eq!(block_total, ratio(1, (l * layer.size()) as i64));
                layer_total += block_total;
            }
            assert_eq!(layer_total, ratio(1, l as i64));
        }
        assert_eq!(hg.total_weight(), ratio(1, 1));
    }

    #[test]
    fn witness_has_weight_p_and_is_independent() {
        for seed in 0..10 {
            let (game, plant) = gen_planted(2, 2, 1, 2, 1, seed).unwrap();
            for mode in [EdgeMode::Explicit, EdgeMode::Implicit] {
                let hg = build(&game, 2, 3, ratio(1, 10), mode);
                let witness = completeness_witness(&hg, &plant).unwrap();
                assert_eq!(witness.weight, ratio(9, 19));
                assert!(is_independent(&hg, &witness).independent);
                let cover = hg.to_generic().complement(&witness);
                assert_eq!(cover.weight, ratio(10, 19));
                assert!(hg.to_generic().is_cover(&cover));
            }
        }
    }

    #[test]
    fn witness_independence_by_full_enumeration() {
        let (game, plant) = toy_game();
        let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
        let witness = completeness_witness(&hg, &plant).unwrap();
        for e in oracle_edges(&hg) {
            assert!(e.iter().any(|v| !witness.contains(*v)), "edge {e:?} inside witness");
        }
    }

    #[test]
    fn witness_rejects_unsatisfying_labeling() {
        let (game, mut plant) = gen_planted(2, 2, 1, 2, 2, 1).unwrap();
        let c = &game.constraints[0];
        plant.z_labels[c.z] = (c.project(plant.y_labels[c.y]) + 1) % 2;
        let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Implicit);
        assert!(matches!(completeness_witness(&hg, &plant), Err(ReduceError::Precondition(_))));
    }

    #[test]
    fn independence_edge_cases() {
        let (game, _) = toy_game();
        for mode in [EdgeMode::Explicit, EdgeMode::Implicit] {
            let hg = build(&game, 2, 3, ratio(1, 10), mode);
            assert!(is_independent(&hg, &VertexSet::empty()).independent);
            let all = hg.vertex_set((0..hg.vertex_count() as u32).collect());
            let check = is_independent(&hg, &all);
            assert!(!check.independent);
            let edge = check.violating_edge.unwrap();
            assert!(oracle_edges(&hg).contains(&edge));
        }
    }

    #[test]
    fn explicit_and_implicit_modes_agree() {
        use rand::Rng;
        let mut rng = crate::game::seeded_rng(31);
        for seed in 0..6 {
            let (game, _) = gen_planted(2, 2, 1, 2, 1, seed).unwrap();
            let ex = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
            let im = build(&game, 2, 3, ratio(1, 10), EdgeMode::Implicit);
            for density in [0.2, 0.5, 0.8] {
                for _ in 0..30 {
                    let set = ex.vertex_set((0..ex.vertex_count() as u32).filter(|_| rng.gen_bool(density)).collect());
                    let a = is_independent(&ex, &set);
                    let b = is_independent(&im, &set);
                    assert_eq!(a.independent, b.independent);
                    if let Some(e) = b.violating_edge {
                        assert!(ex.explicit_edges().unwrap().binary_search(&e).is_ok());
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_cap_is_enforced() {
        let (game, _) = gen_planted(2, 2, 1, 2, 2, 0).unwrap();
        let inst = build_layered(&game, 2, &LayerCaps::default()).unwrap();
        let p = bias_from_k_eps(3, &ratio(1, 10)).unwrap();
        let caps = HypergraphCaps { max_range: 8, max_edges: 10 };
        assert!(matches!(
            build_hypergraph(&inst, 3, &p, &caps, EdgeMode::Explicit),
            Err(ReduceError::TooManyEdges { .. })
        ));
        assert!(build_hypergraph(&inst, 3, &p, &caps, EdgeMode::Implicit).is_ok());
        let narrow = HypergraphCaps { max_range: 2, max_edges: 10 };
        assert!(matches!(
            build_hypergraph(&inst, 3, &p, &narrow, EdgeMode::Implicit),
            Err(ReduceError::RangeTooLarge { layer: 1, range: 4, cap: 2 })
        ));
    }

    #[test]
    fn disjointness_budget_examples() {
        assert_eq!(disjointness_budget(&ratio(1, 4), &ratio(1, 2), 1).unwrap(), 4);
        let mut prev = 0;
        for t in 1..12 {
            let q = disjointness_budget(&ratio(1, 4), &ratio(1, 2), t).unwrap();
            assert!(q >= prev);
            prev = q;
        }
        assert!(prev > 4);
        assert!(disjointness_budget(&ratio(1, 4), &ratio(9, 19), 6416).is_err());
        assert!(disjointness_budget(&ratio(0, 1), &ratio(1, 2), 1).is_err());
    }

    #[test]
    fn disjointness_budget_matches_residual_weight() {
        // The family of sets meeting q pairwise disjoint t-sets has weight
        // (1 - (1-p)^t)^q; the budget is the largest q keeping it >= eps/4.
        let n = 8;
        for (eps, p, t) in [(ratio(1, 4), ratio(1, 2), 1u64), (ratio(1, 2), ratio(1, 2), 2), (ratio(1, 3), ratio(2, 3), 2)] {
            let q = disjointness_budget(&eps, &p, t).unwrap() as usize;
            let bias = BiasParams::new(p.clone()).unwrap();
            let residual = |count: usize| -> Rational {
                let blocks: Vec<Mask> = (0..count).map(|i| setfam::prefix_mask(t as usize) << (i * t as usize)).collect();
                (0..(1u32 << n))
                    .filter(|u| blocks.iter().all(|b| u & b != 0))
                    .fold(Rational::zero(), |acc, u| acc + setfam::mu_p(&bias, n, u))
            };
            let quarter = &eps / rational::from_int(4);
            if (q + 1) * t as usize <= n {
                assert!(residual(q) >= quarter, "q = {q} should be feasible");
                assert!(residual(q + 1) < quarter, "q + 1 = {} should not be", q + 1);
            }
        }
    }

    #[test]
    fn decoding_the_witness_recovers_the_plant() {
        for seed in 0..10 {
            let (game, plant) = gen_planted(2, 2, 1, 2, 1, seed).unwrap();
            let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
            let witness = completeness_witness(&hg, &plant).unwrap();
            let d = decode_independent_set(&hg, &witness, &ratio(1, 10)).unwrap();
            assert_eq!(d.expected_fraction, ratio(1, 1));
            assert!(d.violations.is_empty());
            assert!(!d.hypotheses_met);
            assert_eq!(d.density, ratio(1, 1));
            assert!(d.x_choices.iter().all(|x| x.candidates.len() == 1));
            assert!(rational::to_f64(&d.expected_fraction) >= d.fraction_bound_f64);
        }
    }

    #[test]
    fn decoder_preconditions() {
        let (game, plant) = toy_game();
        let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
        let witness = completeness_witness(&hg, &plant).unwrap();
        assert!(matches!(
            decode_independent_set(&hg, &witness, &ratio(1, 2)),
            Err(ReduceError::Precondition(_))
        ));
        let all = hg.vertex_set((0..hg.vertex_count() as u32).collect());
        assert!(matches!(
            decode_independent_set(&hg, &all, &ratio(1, 10)),
            Err(ReduceError::Precondition(_))
        ));
    }

    #[test]
    fn export_round_trips_to_generic() {
        let (game, _) = toy_game();
        let hg = build(&game, 2, 3, ratio(1, 10), EdgeMode::Explicit);
        let text = serde_json::to_string(&hg.export()).unwrap();
        let back: HypergraphExport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_generic().unwrap(), hg.to_generic());
        let implicit = build(&game, 2, 3, ratio(1, 10), EdgeMode::Implicit).export();
        assert!(implicit.edges.is_none() && implicit.predicate.is_some());
        assert!(implicit.to_generic().is_err());
    }
}
