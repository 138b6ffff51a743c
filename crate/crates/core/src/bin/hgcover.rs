use clap::{Args, Parser, Subcommand};
use hgcover::game::{self, GameError, GameLabeling, ProjectionGame};
use hgcover::layers::{self, LayerCaps, LayeredInstance, LayeredLabeling, LayersError, WeakDensityQuery};
use hgcover::pipeline::{self, PipelineConfig, PipelineError};
use hgcover::rational::{parse_rational, Rational};
use hgcover::reduce::{self, EdgeMode, HypergraphCaps, HypergraphExport, LongCodeHypergraph, ReduceError};
use hgcover::setfam::{self, SetFamError, SetFamily, ThresholdQuery};
use hgcover::solve::{self, GenericHypergraph, SolveError, SolverBudget};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
struct CliError {
    resource: bool,
    message: String,
}

impl CliError {
    fn domain(message: impl Into<String>) -> Self {
        CliError { resource: false, message: message.into() }
    }
}

macro_rules! domain_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::domain(e.to_string())
            }
        }
    )*};
}

domain_error!(SetFamError);

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        CliError { resource: matches!(e, GameError::TooLarge(_)), message: e.to_string() }
    }
}

impl From<LayersError> for CliError {
    fn from(e: LayersError) -> Self {
        let resource = matches!(e, LayersError::LayerTooLarge { .. } | LayersError::TooManyConstraints { .. });
        CliError { resource, message: e.to_string() }
    }
}

impl From<ReduceError> for CliError {
    fn from(e: ReduceError) -> Self {
        CliError { resource: e.is_resource(), message: e.to_string() }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError { resource: e.is_resource(), message: e.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError { resource: e.is_resource(), message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

/// Label cover to hypergraph vertex cover, at desk scale.
#[derive(Parser)]
#[command(name = "hgcover", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Set families: shifting, intersection checks, thresholds.
    #[command(subcommand)]
    Family(FamilyCmd),
    /// Projection games: generate, validate, evaluate.
    #[command(subcommand)]
    Game(GameCmd),
    /// Layered instances built from a game.
    #[command(subcommand)]
    Layers(LayersCmd),
    /// The long-code hypergraph over a layered instance.
    #[command(subcommand)]
    Reduce(ReduceCmd),
    /// Vertex-cover solvers.
    #[command(subcommand)]
    Solve(SolveCmd),
    /// Run every stage end to end and write a report.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct Output {
    /// Write the result here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FamilyCmd {
    /// Apply one (i,j)-shift, or the full left-shift closure.
    Shift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, requires = "j", conflicts_with = "closure")]
        i: Option<usize>,
        #[arg(long, requires = "i")]
        j: Option<usize>,
        #[arg(long)]
        closure: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Is the family s-wise t-intersecting?
    Check {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        t: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Smallest t with the tail bound below eps.
    Threshold {
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
        #[arg(long)]
        s: usize,
        #[arg(long, value_parser = rational_arg)]
        p: Rational,
    },
}

#[derive(Subcommand)]
enum GameCmd {
    /// Generate a planted game (or a scrambled copy of it).
    Gen {
        #[arg(long)]
        y_count: usize,
        #[arg(long)]
        z_count: usize,
        /// Constraints per y.
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        ry: usize,
        #[arg(long)]
        rz: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Redraw every table with this seed after planting.
        #[arg(long)]
        scramble: Option<u64>,
        /// Where to write the planted labeling.
        #[arg(long)]
        labeling_out: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// List structural violations; exit 1 if there are any.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Satisfied fraction of a labeling.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labeling: PathBuf,
    },
}

#[derive(Args)]
struct LayeredArgs {
    /// Base game JSON.
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = LayerCaps::default().max_layer_size)]
    max_layer_size: usize,
    #[arg(long, default_value_t = LayerCaps::default().max_constraints)]
    max_constraints: usize,
}

impl LayeredArgs {
    fn build(&self) -> CliResult<LayeredInstance> {
        let game: ProjectionGame = read_json(&self.game)?;
        let caps = LayerCaps { max_layer_size: self.max_layer_size, max_constraints: self.max_constraints };
        Ok(layers::build_layered(&game, self.l, &caps)?)
    }
}

#[derive(Subcommand)]
enum LayersCmd {
    /// Summary of the layered instance.
    Build {
        #[command(flatten)]
        layered: LayeredArgs,
        /// Include every constraint pair.
        #[arg(long)]
        pairs: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Lift a base-game labeling to every layer.
    Lift {
        #[command(flatten)]
        layered: LayeredArgs,
        #[arg(long)]
        labeling: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Extract a base-game labeling from a layered labeling on Phi_ij.
    Decode {
        #[command(flatten)]
        layered: LayeredArgs,
        /// Layered labeling JSON.
        #[arg(long)]
        labeling: PathBuf,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Find a dense layer pair for a weak-density query.
    Density {
        #[command(flatten)]
        layered: LayeredArgs,
        #[arg(long)]
        query: PathBuf,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct HypergraphArgs {
    #[command(flatten)]
    layered: LayeredArgs,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_parser = rational_arg)]
    eps: Rational,
    #[arg(long, value_enum, default_value_t = ModeArg::Explicit)]
    mode: ModeArg,
    #[arg(long, default_value_t = HypergraphCaps::default().max_range)]
    max_range: usize,
    #[arg(long, default_value_t = HypergraphCaps::default().max_edges)]
    max_edges: u64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Explicit,
    Implicit,
}

impl From<ModeArg> for EdgeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Explicit => EdgeMode::Explicit,
            ModeArg::Implicit => EdgeMode::Implicit,
        }
    }
}

impl HypergraphArgs {
    fn build(&self) -> CliResult<LongCodeHypergraph> {
        let p = reduce::bias_from_k_eps(self.k, &self.eps)?;
        let instance = self.layered.build()?;
        let caps = HypergraphCaps { max_range: self.max_range, max_edges: self.max_edges };
        Ok(reduce::build_hypergraph(&instance, self.k, &p, &caps, self.mode.into())?)
    }
}

#[derive(Subcommand)]
enum ReduceCmd {
    /// Export the hypergraph (edges, or the predicate in implicit mode).
    Build {
        #[command(flatten)]
        hypergraph: HypergraphArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Independent set induced by a satisfying base labeling.
    Witness {
        #[command(flatten)]
        hypergraph: HypergraphArgs,
        #[arg(long)]
        labeling: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Check a vertex set for independence; with --decode also run the decoder.
    Check {
        #[command(flatten)]
        hypergraph: HypergraphArgs,
        /// JSON with a "vertices" list.
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        decode: bool,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Subcommand)]
enum SolveCmd {
    /// Maximal disjoint edges, all their vertices.
    Greedy {
        /// Hypergraph JSON (solver format or a `reduce build` export).
        #[arg(long)]
        input: PathBuf,
        /// Shuffle the edge order with this seed.
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Minimum-weight cover by branch and bound.
    Exact {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = SolverBudget::default().max_vertices)]
        max_vertices: usize,
        #[arg(long, default_value_t = SolverBudget::default().max_nodes)]
        max_nodes: u64,
        /// Report the maximum independent set instead of the cover.
        #[arg(long)]
        independent: bool,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// Base configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = rational_arg)]
    eps: Option<Rational>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    y_count: Option<usize>,
    #[arg(long)]
    z_count: Option<usize>,
    #[arg(long)]
    ry: Option<usize>,
    #[arg(long)]
    rz: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Write the JSON report here (stdout otherwise).
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Write the human-readable report here (stderr otherwise).
    #[arg(long)]
    text_out: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        CliError::domain(format!("{}: field `{field}`: {}", path.display(), e.inner()))
    })
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::domain(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit<T: Serialize>(out: &Output, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    write_text(out.output.as_deref(), &text)
}

/// Accepts both the solver format and a `reduce build` export.
fn read_hypergraph(path: &Path) -> CliResult<GenericHypergraph> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("vertices").is_some() {
        let export: HypergraphExport = read_json(path)?;
        Ok(export.to_generic()?)
    } else {
        read_json(path)
    }
}

#[derive(Deserialize)]
struct VertexIds {
    vertices: Vec<u32>,
}

#[derive(Serialize)]
struct CheckReport {
    independent: bool,
    violating_edge: Option<Vec<u32>>,
    set: solve::VertexSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    decoding: Option<reduce::IndependentSetDecoding>,
}

#[derive(Serialize)]
struct GreedyReport {
    cover: solve::VertexSet,
    edges: usize,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Family(cmd) => family(cmd),
        Command::Game(cmd) => game_cmd(cmd),
        Command::Layers(cmd) => layers_cmd(cmd),
        Command::Reduce(cmd) => reduce_cmd(cmd),
        Command::Solve(cmd) => solve_cmd(cmd),
        Command::Pipeline(args) => pipeline_cmd(args),
    }
}

fn family(cmd: FamilyCmd) -> CliResult<()> {
    match cmd {
        FamilyCmd::Shift { input, i, j, closure, out } => {
            let fam: SetFamily = read_json(&input)?;
            let shifted = match (i, j) {
                (Some(i), Some(j)) => setfam::ij_shift(&fam, i, j)?,
                _ if closure => setfam::left_shift_closure(&fam),
                _ => return Err(CliError::domain("give --i and --j, or --closure")),
            };
            emit(&out, &shifted)
        }
        FamilyCmd::Check { input, s, t, out } => {
            let fam: SetFamily = read_json(&input)?;
            emit(&out, &setfam::is_s_wise_t_intersecting(&fam, s, t))
        }
        FamilyCmd::Threshold { eps, s, p } => {
            let q = ThresholdQuery::new(eps, s, p)?;
            println!("{}", setfam::intersection_threshold(&q));
            Ok(())
        }
    }
}

fn game_cmd(cmd: GameCmd) -> CliResult<()> {
    match cmd {
        GameCmd::Gen { y_count, z_count, degree, ry, rz, seed, scramble, labeling_out, out } => {
            let (mut g, plant) = game::gen_planted(y_count, z_count, degree, ry, rz, seed)?;
            if let Some(s) = scramble {
                g = game::gen_scrambled(&g, s);
            }
            if let Some(path) = labeling_out {
                emit(&Output { output: Some(path) }, &plant)?;
            }
            emit(&out, &g)
        }
        GameCmd::Validate { input } => {
            let g: ProjectionGame = read_json(&input)?;
            let violations = g.validate();
            println!("{}", serde_json::to_string_pretty(&violations).expect("serializable"));
            if violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::domain(format!("{} violation(s)", violations.len())))
            }
        }
        GameCmd::Eval { input, labeling } => {
            let g: ProjectionGame = read_json(&input)?;
            let a: GameLabeling = read_json(&labeling)?;
            let fraction = g.satisfied_fraction(&a)?;
            println!(
                "{}",
                serde_json::json!({
                    "satisfied": g.satisfied_count(&a),
                    "constraints": g.constraints.len(),
                    "fraction": hgcover::rational::Exact(fraction),
                })
            );
            Ok(())
        }
    }
}

fn layers_cmd(cmd: LayersCmd) -> CliResult<()> {
    match cmd {
        LayersCmd::Build { layered, pairs, out } => emit(&out, &layered.build()?.summary(pairs)),
        LayersCmd::Lift { layered, labeling, out } => {
            let instance = layered.build()?;
            let a: GameLabeling = read_json(&labeling)?;
            emit(&out, &layers::lift_labeling(&instance, &a)?)
        }
        LayersCmd::Decode { layered, labeling, i, j, out } => {
            let instance = layered.build()?;
            let b: LayeredLabeling = read_json(&labeling)?;
            emit(&out, &layers::decode_to_game(&instance, &b, i, j)?)
        }
        LayersCmd::Density { layered, query, out } => {
            let instance = layered.build()?;
            let q: WeakDensityQuery = read_json(&query)?;
            emit(&out, &layers::weak_density_pair(&instance, &q)?)
        }
    }
}

fn reduce_cmd(cmd: ReduceCmd) -> CliResult<()> {
    match cmd {
        ReduceCmd::Build { hypergraph, out } => emit(&out, &hypergraph.build()?.export()),
        ReduceCmd::Witness { hypergraph, labeling, out } => {
            let hg = hypergraph.build()?;
            let a: GameLabeling = read_json(&labeling)?;
            emit(&out, &reduce::completeness_witness(&hg, &a)?)
        }
        ReduceCmd::Check { hypergraph, set, decode, out } => {
            let hg = hypergraph.build()?;
            let ids: VertexIds = read_json(&set)?;
            if let Some(&bad) = ids.vertices.iter().find(|&&v| v as usize >= hg.vertex_count()) {
                return Err(CliError::domain(format!("vertex {bad} is out of range")));
            }
            let set = hg.vertex_set(ids.vertices);
            let check = reduce::is_independent(&hg, &set);
            let decoding = if decode {
                Some(reduce::decode_independent_set(&hg, &set, &hypergraph.eps)?)
            } else {
                None
            };
            emit(
                &out,
                &CheckReport { independent: check.independent, violating_edge: check.violating_edge, set, decoding },
            )
        }
    }
}

fn solve_cmd(cmd: SolveCmd) -> CliResult<()> {
    match cmd {
        SolveCmd::Greedy { input, shuffle_seed, out } => {
            let h = read_hypergraph(&input)?;
            let cover = match shuffle_seed {
                Some(seed) => solve::greedy_matching_cover_shuffled(&h, seed),
                None => solve::greedy_matching_cover(&h),
            };
            emit(&out, &GreedyReport { cover, edges: h.edges().len() })
        }
        SolveCmd::Exact { input, max_vertices, max_nodes, independent, out } => {
            let h = read_hypergraph(&input)?;
            let budget = SolverBudget { max_vertices, max_nodes };
            let found = solve::exact_min_vc(&h, &budget)?;
            if independent {
                emit(&out, &h.complement(&found.cover))
            } else {
                emit(&out, &found)
            }
        }
    }
}

fn pipeline_cmd(args: PipelineArgs) -> CliResult<()> {
    let mut config: PipelineConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                config.$field = v;
            }
        )*};
    }
    set!(seed, k, l, y_count, z_count, ry, rz, degree);
    if let Some(eps) = args.eps {
        config.epsilon = eps;
    }
    if let Some(mode) = args.mode {
        config.mode = mode.into();
    }
    if args.json_out.is_some() {
        config.report_json = args.json_out;
    }
    if args.text_out.is_some() {
        config.report_text = args.text_out;
    }
    let report = pipeline::run_pipeline(&config)?;
    write_text(config.report_json.as_deref(), &report.to_json())?;
    match &config.report_text {
        Some(path) => write_text(Some(path), &report.to_text()),
        None => {
            eprint!("{}", report.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.resource { 2 } else { 1 })
        }
    }
}
