//! End-to-end run: game, layered instance, long-code hypergraph, witness,
//! solvers and decoder, collected into one deterministic report.

use crate::game::{self, GameError, GameLabeling, ProjectionGame};
use crate::layers::{self, LayerCaps, LayeredSummary, LayersError};
use crate::rational::{self, Rational};
use crate::reduce::{self, EdgeMode, HypergraphCaps, IndependentSetDecoding, LongCodeHypergraph, ReduceError};
use crate::solve::{self, SolveError, SolverBudget, VertexSet};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;

pub const SCALE_LABEL: &str = "desk scale, no hardness claim";

/// Games with at most this many labelings get an exhaustive optimum.
const GAME_OPTIMUM_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
        resource: bool,
    },
}

impl PipelineError {
    pub fn is_resource(&self) -> bool {
        matches!(self, PipelineError::Stage { resource: true, .. })
    }

    fn game(stage: &'static str, e: GameError) -> Self {
        let resource = matches!(e, GameError::TooLarge(_));
        PipelineError::Stage { stage, message: e.to_string(), resource }
    }

    fn layers(stage: &'static str, e: LayersError) -> Self {
        let resource = matches!(e, LayersError::LayerTooLarge { .. } | LayersError::TooManyConstraints { .. });
        PipelineError::Stage { stage, message: e.to_string(), resource }
    }

    fn reduce(stage: &'static str, e: ReduceError) -> Self {
        PipelineError::Stage { stage, resource: e.is_resource(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    #[serde(with = "crate::rational::json")]
    pub epsilon: Rational,
    pub l: usize,
    pub y_count: usize,
    pub z_count: usize,
    pub ry: usize,
    pub rz: usize,
    pub degree: usize,
    pub seed: u64,
    pub layer_caps: LayerCaps,
    pub hypergraph_caps: HypergraphCaps,
    pub solver_budget: SolverBudget,
    pub mode: EdgeMode,
    pub report_json: Option<PathBuf>,
    pub report_text: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 3,
            epsilon: rational::ratio(1, 10),
            l: 2,
            y_count: 2,
            z_count: 1,
            ry: 2,
            rz: 1,
            degree: 1,
            seed: 0,
            layer_caps: LayerCaps::default(),
            hypergraph_caps: HypergraphCaps::default(),
            solver_budget: SolverBudget::default(),
            mode: EdgeMode::Explicit,
            report_json: None,
            report_text: None,
        }
    }
}

impl PipelineConfig {
    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<Rational> {
        let p = reduce::bias_from_k_eps(self.k, &self.epsilon).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.epsilon >= Rational::one() {
            return Err(PipelineError::Config(format!("eps must be below 1, got {}", self.epsilon)));
        }
        if self.l < 2 {
            return Err(PipelineError::Config(format!("need at least 2 layers, got l = {}", self.l)));
        }
        if self.y_count == 0 || self.z_count == 0 || self.degree == 0 {
            return Err(PipelineError::Config("y_count, z_count and degree must be positive".into()));
        }
        if self.rz == 0 || self.rz > self.ry {
            return Err(PipelineError::Config(format!("need 0 < rz <= ry, got ry={}, rz={}", self.ry, self.rz)));
        }
        if self.degree > self.z_count {
            return Err(PipelineError::Config(format!(
                "degree {} exceeds z_count {}; a simple constraint graph is impossible",
                self.degree, self.z_count
            )));
        }
        if !(self.y_count * self.degree).is_multiple_of(self.z_count) {
            return Err(PipelineError::Config(format!(
                "y_count * degree = {} is not divisible by z_count = {}",
                self.y_count * self.degree,
                self.z_count
            )));
        }
        for i in 1..=self.l {
            let range = (self.rz as f64).powi(i as i32) * (self.ry as f64).powi((self.l - i) as i32);
            if range > self.hypergraph_caps.max_range as f64 {
                return Err(PipelineError::Config(format!(
                    "layer {i} has |R_i| = {range}, above max_range = {}",
                    self.hypergraph_caps.max_range
                )));
            }
        }
        Ok(p)
    }

    /// Seed of the scrambled variant, derived from the main seed.
    pub fn scrambled_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameters {
    pub k: usize,
    #[serde(with = "crate::rational::json")]
    pub epsilon: Rational,
    #[serde(with = "crate::rational::json")]
    pub p: Rational,
    #[serde(with = "crate::rational::json")]
    pub one_minus_p: Rational,
    /// `(1 - eps)(k - 1 - eps)`.
    #[serde(with = "crate::rational::json")]
    pub gap: Rational,
    /// Whether `(1 - eps)/(1 - p)` equals `gap` exactly.
    pub gap_identity: bool,
    pub l: usize,
    pub mode: EdgeMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameStats {
    pub seed: u64,
    pub constraints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub planted_fraction: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub optimum: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphStats {
    pub vertices: usize,
    pub blocks: usize,
    pub links: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessStats {
    #[serde(with = "crate::rational::json")]
    pub weight: Rational,
    pub independent: bool,
    #[serde(with = "crate::rational::json")]
    pub cover_weight: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExactOutcome {
    Solved {
        #[serde(with = "crate::rational::json")]
        cover_weight: Rational,
        #[serde(with = "crate::rational::json")]
        independent_weight: Rational,
        nodes: u64,
        /// `cover_weight / (1 - p)`.
        #[serde(with = "crate::rational::json")]
        ratio_to_completeness: Rational,
        /// `greedy weight / exact weight`.
        #[serde(with = "crate::rational::json")]
        greedy_ratio: Rational,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecoderOutcome {
    Decoded { source: String, result: Box<IndependentSetDecoding> },
    Skipped { source: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub game: GameStats,
    pub layered: LayeredSummary,
    pub hypergraph: HypergraphStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessStats>,
    #[serde(with = "crate::rational::json")]
    pub greedy_cover_weight: Rational,
    pub exact: ExactOutcome,
    pub decoder: Vec<DecoderOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scale: String,
    pub seeds: Seeds,
    pub parameters: Parameters,
    pub planted: VariantReport,
    pub scrambled: VariantReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub planted: u64,
    pub scrambled: u64,
}

mod opt_rational {
    use crate::rational::Exact;
    use crate::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        r.clone().map(Exact).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Ok(Option::<Exact>::deserialize(d)?.map(|e| e.0))
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let p = config.validate()?;
    let (base, plant) = game::gen_planted(config.y_count, config.z_count, config.degree, config.ry, config.rz, config.seed)
        .map_err(|e| PipelineError::game("game generation", e))?;
    log::info!("planted game seed {}", config.seed);
    let scrambled_seed = config.scrambled_seed();
    let scrambled = game::gen_scrambled(&base, scrambled_seed);
    log::info!("scrambled game seed {scrambled_seed}");

    let one = Rational::one();
    let k_minus_1 = rational::from_int(config.k as i64 - 1);
    let gap = (&one - &config.epsilon) * (&k_minus_1 - &config.epsilon);
    let parameters = Parameters {
        k: config.k,
        epsilon: config.epsilon.clone(),
        p: p.clone(),
        one_minus_p: &one - &p,
        gap_identity: (&one - &config.epsilon) / (&one - &p) == gap,
        gap,
        l: config.l,
        mode: config.mode,
    };
    let planted = run_variant(config, &p, &base, Some(&plant), config.seed)?;
    let scrambled = run_variant(config, &p, &scrambled, None, scrambled_seed)?;
    Ok(PipelineReport {
        scale: SCALE_LABEL.into(),
        seeds: Seeds { planted: config.seed, scrambled: scrambled_seed },
        parameters,
        planted,
        scrambled,
    })
}

fn run_variant(
    config: &PipelineConfig,
    p: &Rational,
    game: &ProjectionGame,
    plant: Option<&GameLabeling>,
    seed: u64,
) -> Result<VariantReport> {
    let game_stats = GameStats {
        seed,
        constraints: game.constraints.len(),
        planted_fraction: plant
            .map(|a| game.satisfied_fraction(a))
            .transpose()
            .map_err(|e| PipelineError::game("game evaluation", e))?,
        optimum: game::exhaustive_optimum(game, GAME_OPTIMUM_LIMIT).ok().map(|(_, v)| v),
    };
    let instance =
        layers::build_layered(game, config.l, &config.layer_caps).map_err(|e| PipelineError::layers("layered build", e))?;
    let hg = reduce::build_hypergraph(&instance, config.k, p, &config.hypergraph_caps, config.mode)
        .map_err(|e| PipelineError::reduce("hypergraph build", e))?;
    let hypergraph = HypergraphStats {
        vertices: hg.vertex_count(),
        blocks: hg.blocks().len(),
        links: hg.links().len(),
        edges: hg.explicit_edges().map(<[_]>::len),
    };

    let mut decoder = Vec::new();
    let witness = match plant {
        Some(a) => {
            let set = reduce::completeness_witness(&hg, a).map_err(|e| PipelineError::reduce("completeness witness", e))?;
            let independent = reduce::is_independent(&hg, &set).independent;
            decoder.push(decode(&hg, &set, &config.epsilon, "completeness witness"));
            Some(WitnessStats {
                cover_weight: Rational::one() - &set.weight,
                weight: set.weight,
                independent,
            })
        }
        None => None,
    };

    let generic = hg.to_generic();
    let greedy = solve::greedy_matching_cover(&generic);
    let exact = if generic.vertex_count() > config.solver_budget.max_vertices {
        ExactOutcome::Skipped {
            reason: format!(
                "{} vertices exceed the solver budget of {}",
                generic.vertex_count(),
                config.solver_budget.max_vertices
            ),
        }
    } else {
        match solve::exact_min_vc(&generic, &config.solver_budget) {
            Ok(found) => {
                let is = generic.complement(&found.cover);
                decoder.push(if is.weight >= config.epsilon {
                    decode(&hg, &is, &config.epsilon, "exact maximum independent set")
                } else {
                    DecoderOutcome::Skipped {
                        source: "exact maximum independent set".into(),
                        reason: format!("weight {} is below eps", is.weight),
                    }
                });
                ExactOutcome::Solved {
                    ratio_to_completeness: &found.cover.weight / (Rational::one() - p),
                    greedy_ratio: ratio_or_zero(&greedy.weight, &found.cover.weight),
                    independent_weight: is.weight,
                    cover_weight: found.cover.weight,
                    nodes: found.nodes,
                }
            }
            Err(e @ (SolveError::BudgetExhausted { .. } | SolveError::TooManyVertices { .. })) => {
                ExactOutcome::Skipped { reason: e.to_string() }
            }
            Err(e) => {
                return Err(PipelineError::Stage { stage: "exact solver", resource: e.is_resource(), message: e.to_string() })
            }
        }
    };
    Ok(VariantReport {
        game: game_stats,
        layered: instance.summary(false),
        hypergraph,
        witness,
        greedy_cover_weight: greedy.weight,
        exact,
        decoder,
    })
}

fn ratio_or_zero(a: &Rational, b: &Rational) -> Rational {
    if b.is_zero() {
        Rational::zero()
    } else {
        a / b
    }
}

fn decode(hg: &LongCodeHypergraph, set: &VertexSet, epsilon: &Rational, source: &str) -> DecoderOutcome {
    match reduce::decode_independent_set(hg, set, epsilon) {
        Ok(result) => DecoderOutcome::Decoded { source: source.into(), result: Box::new(result) },
        Err(e) => DecoderOutcome::Skipped { source: source.into(), reason: e.to_string() },
    }
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.parameters;
        let _ = writeln!(out, "hypergraph vertex cover pipeline ({})", self.scale);
        let _ = writeln!(out, "k = {}, eps = {}, l = {}, edges {:?}", p.k, p.epsilon, p.l, p.mode);
        let _ = writeln!(out, "p = {}, 1 - p = {}", p.p, p.one_minus_p);
        let _ = writeln!(
            out,
            "gap (1-eps)(k-1-eps) = {} (~{:.4}), identity {}",
            p.gap,
            rational::to_f64(&p.gap),
            if p.gap_identity { "holds" } else { "FAILS" }
        );
        for (name, v, seed) in [("planted", &self.planted, self.seeds.planted), ("scrambled", &self.scrambled, self.seeds.scrambled)] {
            let _ = writeln!(out, "\n[{name}] seed {seed}");
            let _ = write!(out, "  game: {} constraints", v.game.constraints);
            if let Some(f) = &v.game.planted_fraction {
                let _ = write!(out, ", planted labeling satisfies {f}");
            }
            if let Some(f) = &v.game.optimum {
                let _ = write!(out, ", optimum {f}");
            }
            let _ = writeln!(out);
            let sizes: Vec<String> = v.layered.layers.iter().map(|l| format!("{}x{}", l.variables, l.range_size)).collect();
            let _ = writeln!(out, "  layers (variables x range): {}", sizes.join(", "));
            let _ = write!(out, "  hypergraph: {} vertices, {} links", v.hypergraph.vertices, v.hypergraph.links);
            if let Some(e) = v.hypergraph.edges {
                let _ = write!(out, ", {e} edges");
            }
            let _ = writeln!(out);
            if let Some(w) = &v.witness {
                let _ = writeln!(
                    out,
                    "  witness: weight {}, independent {}, cover weight {}",
                    w.weight, w.independent, w.cover_weight
                );
            }
            let _ = writeln!(out, "  greedy cover weight {}", v.greedy_cover_weight);
            match &v.exact {
                ExactOutcome::Solved { cover_weight, independent_weight, nodes, ratio_to_completeness, greedy_ratio } => {
                    let _ = writeln!(
                        out,
                        "  exact cover weight {cover_weight} (IS {independent_weight}, {nodes} nodes); cover/(1-p) = {ratio_to_completeness}, greedy/exact = {greedy_ratio}"
                    );
                }
                ExactOutcome::Skipped { reason } => {
                    let _ = writeln!(out, "  exact solver skipped: {reason}");
                }
            }
            for d in &v.decoder {
                match d {
                    DecoderOutcome::Decoded { source, result } => {
                        let _ = writeln!(
                            out,
                            "  decoder on {source}: layers {:?}, t = {}, expected fraction {}, bound ~{:.3e}{}",
                            result.layers,
                            result.t,
                            result.expected_fraction,
                            result.fraction_bound_f64,
                            if result.hypotheses_met { "" } else { " (density hypotheses not met)" }
                        );
                    }
                    DecoderOutcome::Skipped { source, reason } => {
                        let _ = writeln!(out, "  decoder on {source} skipped: {reason}");
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn default_run_reports_completeness() {
        let report = run_pipeline(&PipelineConfig { seed: 7, ..Default::default() }).unwrap();
        let w = report.planted.witness.as_ref().unwrap();
        assert_eq!(w.weight, ratio(9, 19));
        assert!(w.independent);
        assert_eq!(w.cover_weight, ratio(10, 19));
        match &report.planted.exact {
            ExactOutcome::Solved { cover_weight, .. } => assert!(*cover_weight <= ratio(10, 19)),
            other => panic!("exact solver did not run: {other:?}"),
        }
        assert!(report.parameters.gap_identity);
        assert_eq!(report.scale, SCALE_LABEL);
        assert!(report.scrambled.witness.is_none());
    }

    #[test]
    fn reports_are_byte_identical() {
        let config = PipelineConfig { seed: 11, ..Default::default() };
        let a = run_pipeline(&config).unwrap();
        let b = run_pipeline(&config).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn invalid_configs_fail_upfront() {
        let bad = PipelineConfig { epsilon: ratio(1, 1), ..Default::default() };
        assert!(matches!(run_pipeline(&bad), Err(PipelineError::Config(_))));
        let wide = PipelineConfig { ry: 4, rz: 2, l: 3, ..Default::default() };
        assert!(matches!(wide.validate(), Err(PipelineError::Config(_))));
        let uneven = PipelineConfig { y_count: 3, z_count: 2, ..Default::default() };
        assert!(matches!(uneven.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = PipelineConfig { seed: 3, mode: EdgeMode::Implicit, ..Default::default() };
        let text = serde_json::to_string(&config).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        let partial: PipelineConfig = serde_json::from_str(r#"{"k": 4, "epsilon": {"num": 1, "den": 100}}"#).unwrap();
        assert_eq!(partial.k, 4);
        assert_eq!(partial.l, 2);
    }

    #[test]
    fn implicit_mode_gives_the_same_figures() {
        let explicit = run_pipeline(&PipelineConfig { seed: 5, ..Default::default() }).unwrap();
        let implicit = run_pipeline(&PipelineConfig { seed: 5, mode: EdgeMode::Implicit, ..Default::default() }).unwrap();
        assert_eq!(explicit.planted.witness, implicit.planted.witness);
        assert_eq!(explicit.planted.exact, implicit.planted.exact);
    }
}
