use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bargaining::bipartite::{check_bipartite, run_extremal, Side};
use bargaining::dynamics::{extract_pairing, run, snapshot_to_json, DynamicsConfig, Init, TraceConfig};
use bargaining::instance::{generate, GeneratorSpec, Topology, WeightScheme};
use bargaining::kt::check_fp_identities;
use bargaining::path::{
    domination_test, log_slope, mass_step, random_messages, run_simplified, sandwich_test, series_csv, Boundary,
    Injection, MassState, PathGraph, PathMessages, SandwichInit, SimplifiedPathState,
};
use bargaining::pipeline::{experiment, verify, ExperimentSpec, VerifyConfig};
use bargaining::{Error, Instance};

#[derive(Parser)]
#[command(name = "bargaining", version, about = "Bargaining dynamics on exchange networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance document.
    Generate(GenerateArgs),
    /// Run the dynamics and report earnings and pairing.
    Run(RunArgs),
    /// Full verification pipeline; exit 1 if any check fails.
    Verify(VerifyArgs),
    /// Structure decomposition of the NB solution reached by the dynamics.
    Decompose(VerifyArgs),
    /// Convergence sweep over instance sizes, written as CSV.
    Experiment(ExperimentArgs),
    /// Runs from the buyer and seller extremal vectors.
    Bipartite(DynArgs),
    /// Path comparison processes.
    Pathlab(PathlabArgs),
}

#[derive(Args)]
struct InputArg {
    /// Instance document; standard input when absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArg {
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DynArgs {
    #[command(flatten)]
    input: InputArg,
    #[command(flatten)]
    output: OutputArg,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Convergence threshold on the step change (scaled by kappa).
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
}

impl DynArgs {
    fn config(&self) -> DynamicsConfig {
        DynamicsConfig { kappa: self.kappa, eps_conv: self.eps, max_iters: self.max_iters, ..DynamicsConfig::default() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Path,
    EvenCycle,
    OddCycle,
    Blossom,
    Bicycle,
    BipartiteRandom,
    ErdosRenyi,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    output: OutputArg,
    /// Generator spec as a JSON file; replaces the topology flags.
    #[arg(long, conflicts_with = "topology")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    /// Node count for paths and cycles, stem length for blossoms, node
    /// count for random graphs, connecting path length for bicycles.
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    cycle: Option<usize>,
    #[arg(long)]
    cycle_b: Option<usize>,
    /// Side size for bipartite graphs.
    #[arg(long)]
    right: Option<usize>,
    /// Edge probability for random graphs.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Base weight pattern, cycled over edges.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Uniform weights in `lo,hi`.
    #[arg(long, value_delimiter = ',', conflicts_with = "weights")]
    uniform: Option<Vec<f64>>,
    /// Jitter half-width; 0 with `--weights` unless given.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zeros,
    Random,
    Top,
    Bot,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dynamics: DynArgs,
    #[arg(long, value_enum, default_value_t = InitArg::Zeros)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pairing margin; pairs are read off with this slack.
    #[arg(long, default_value_t = 1e-6)]
    margin: f64,
    /// CSV trace of step changes.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    trace_every: u64,
    /// Also write the final message vector as a snapshot document.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    dynamics: DynArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec as JSON.
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    output: OutputArg,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PathlabArgs {
    #[command(subcommand)]
    mode: PathMode,
}

#[derive(Args)]
struct PathShape {
    /// Edge weights along the path.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<f64>,
    /// Leave the first edge unmatched.
    #[arg(long)]
    first_unmatched: bool,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
}

impl PathShape {
    fn graph(&self) -> PathGraph {
        PathGraph::alternating(self.weights.clone(), !self.first_unmatched)
    }
}

#[derive(Subcommand)]
enum PathMode {
    /// Simplified dynamics with constant boundaries from zero messages.
    Simplified {
        #[command(flatten)]
        shape: PathShape,
        #[arg(long, default_value_t = 0.0)]
        b_left: f64,
        #[arg(long, default_value_t = 0.0)]
        b_right: f64,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Mass process from unit mass; writes total mass per step.
    Mass {
        #[command(flatten)]
        shape: PathShape,
        #[arg(long, value_enum, default_value_t = InjectionArg::None)]
        injection: InjectionArg,
        #[command(flatten)]
        output: OutputArg,
    },
    /// Mass domination of the difference of two simplified runs.
    Domination {
        #[command(flatten)]
        shape: PathShape,
        #[arg(long, default_value_t = 0.0)]
        boundary: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sandwich the real dynamics between bounding processes on a path
    /// structure of an instance.
    Sandwich {
        #[command(flatten)]
        input: InputArg,
        /// Structure index, counted from 0.
        #[arg(long, default_value_t = 0)]
        structure: usize,
        #[arg(long)]
        delta_big: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectionArg {
    None,
    Left,
    Right,
    Both,
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse(_) | Error::SizeCap { .. } | Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            Error::NonPositiveWeight { .. }
            | Error::DuplicateEdge { .. }
            | Error::SelfLoop(_)
            | Error::DanglingNode { .. }
            | Error::InvalidInstance(_)
            | Error::InvalidGenerator(_)
            | Error::DomainMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bipartite(a) => cmd_bipartite(a),
        Command::Pathlab(a) => cmd_pathlab(a.mode),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_input(arg: &InputArg) -> std::result::Result<Instance, Failure> {
    let text = match &arg.input {
        Some(p) if p.as_os_str() != "-" => {
            fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    Ok(Instance::load(&text)?)
}

fn write_output(arg: &OutputArg, text: &str) -> std::result::Result<(), Failure> {
    match &arg.output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_generate(a: GenerateArgs) -> Outcome {
    let spec = if let Some(path) = &a.spec {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str::<GeneratorSpec>(&text).map_err(|e| Failure::Usage(e.to_string()))?
    } else {
        let topology = a.topology.ok_or_else(|| Failure::Usage("--topology or --spec is required".into()))?;
        let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| Failure::Usage(format!("{flag} is required")));
        let topology = match topology {
            TopologyArg::Path => Topology::Path { len: need(a.len, "--len")? },
            TopologyArg::EvenCycle => Topology::EvenCycle { len: need(a.len, "--len")? },
            TopologyArg::OddCycle => Topology::OddCycle { len: need(a.len, "--len")? },
            TopologyArg::Blossom => Topology::Blossom { stem: need(a.len, "--len")?, cycle: need(a.cycle, "--cycle")? },
            TopologyArg::Bicycle => Topology::Bicycle {
                cycle_a: need(a.cycle, "--cycle")?,
                path: need(a.len, "--len")?,
                cycle_b: need(a.cycle_b, "--cycle-b")?,
            },
            TopologyArg::BipartiteRandom => {
                Topology::BipartiteRandom { left: need(a.len, "--len")?, right: need(a.right, "--right")?, p: a.p }
            }
            TopologyArg::ErdosRenyi => Topology::ErdosRenyi { n: need(a.len, "--len")?, p: a.p },
        };
        let weights = match (&a.weights, &a.uniform) {
            (Some(base), _) => WeightScheme::Jittered { base: base.clone(), jitter: Some(a.jitter.unwrap_or(0.0)) },
            (None, Some(r)) => match r[..] {
                [lo, hi] => WeightScheme::Uniform { lo, hi },
                _ => return Err(Failure::Usage("--uniform takes lo,hi".into())),
            },
            (None, None) => WeightScheme::Default { jitter: a.jitter },
        };
        GeneratorSpec::new(topology, weights, a.seed)
    };
    let inst = generate(&spec)?;
    write_output(&a.output, &inst.save())?;
    Ok(true)
}

fn cmd_run(a: RunArgs) -> Outcome {
    let inst = read_input(&a.dynamics.input)?;
    let init = match a.init {
        InitArg::Zeros => Init::Zeros,
        InitArg::Random => Init::UniformRandom { seed: a.seed },
        InitArg::Top => Init::Top,
        InitArg::Bot => Init::Bot,
    };
    let trace = if a.trace.is_some() { TraceConfig { every: a.trace_every, ..TraceConfig::default() } } else { TraceConfig::default() };
    let cfg = DynamicsConfig { init, trace, ..a.dynamics.config() };
    let out = run(&inst, &cfg)?;
    if let Some(p) = &a.trace {
        fs::write(p, out.trace.to_csv()).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    if let Some(p) = &a.snapshot {
        fs::write(p, snapshot_to_json(&inst, &out.state.alpha)).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    let pairing = extract_pairing(&out.state, &inst, a.margin);
    let summary = json!({
        "converged": out.converged,
        "iterations": out.iterations,
        "gamma": out.state.earnings,
        "pairing": pairing,
    });
    write_output(&a.dynamics.output, &pretty(&summary))?;
    Ok(out.converged)
}

fn verify_config(d: &DynArgs) -> VerifyConfig {
    VerifyConfig { dynamics: d.config(), ..VerifyConfig::default() }
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let inst = read_input(&a.dynamics.input)?;
    let v = verify(&inst, &verify_config(&a.dynamics))?;
    write_output(&a.dynamics.output, &pretty(&v.report))?;
    Ok(v.report.passed)
}

fn cmd_decompose(a: VerifyArgs) -> Outcome {
    let inst = read_input(&a.dynamics.input)?;
    let v = verify(&inst, &verify_config(&a.dynamics))?;
    let (Some(d), Some(fp)) = (&v.decomposition, &v.fixed_point) else {
        let reason = v.report.notes.join("; ");
        return Err(Failure::Check(if reason.is_empty() { "no certified NB solution to decompose".into() } else { reason }));
    };
    let identities = check_fp_identities(d, fp, &inst, VerifyConfig::default().tol);
    let doc = json!({ "gamma": v.solution.as_ref().map(|s| &s.gamma), "decomposition": d, "identities": identities });
    write_output(&a.dynamics.output, &pretty(&doc))?;
    Ok(identities.passed)
}

fn cmd_experiment(a: ExperimentArgs) -> Outcome {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure::Usage(format!("{}: {e}", a.spec.display())))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    spec.eps = a.eps.unwrap_or(spec.eps);
    spec.kappa = a.kappa.unwrap_or(spec.kappa);
    spec.max_iters = a.max_iters.unwrap_or(spec.max_iters);
    spec.seed = a.seed.unwrap_or(spec.seed);
    let res = experiment(&spec)?;
    write_output(&a.output, &res.to_csv())?;
    eprintln!("{}", res.summary());
    Ok(res.rows.iter().all(|r| r.converged))
}

fn cmd_bipartite(a: DynArgs) -> Outcome {
    let inst = read_input(&a.input)?;
    let part = match check_bipartite(&inst) {
        Ok(p) => p,
        Err(Error::NotBipartite(cycle)) => return Err(Failure::Check(format!("odd cycle {cycle:?}"))),
        Err(e) => return Err(e.into()),
    };
    let cfg = a.config();
    let up = run_extremal(&inst, &part, Side::Buyer, &cfg)?;
    let down = run_extremal(&inst, &part, Side::Seller, &cfg)?;
    let doc = json!({
        "buyers": part.buyers,
        "sellers": part.sellers,
        "buyer_extremal": { "gamma": up.solution.gamma, "matching": up.solution.pairs(&inst), "certified": up.solution.certified(), "iterations": up.iterations },
        "seller_extremal": { "gamma": down.solution.gamma, "matching": down.solution.pairs(&inst), "certified": down.solution.certified(), "iterations": down.iterations },
    });
    write_output(&a.output, &pretty(&doc))?;
    Ok(up.solution.certified() && down.solution.certified())
}

fn cmd_pathlab(mode: PathMode) -> Outcome {
    match mode {
        PathMode::Simplified { shape, b_left, b_right, output } => {
            let g = shape.graph();
            let l = g.len();
            let s = SimplifiedPathState::new(g, PathMessages::zeros(l), Boundary::Constant(b_left), Boundary::Constant(b_right), shape.kappa)?;
            let r = run_simplified(&s, shape.horizon)?;
            if output.output.is_some() {
                write_output(&output, &series_csv(&r.decay))?;
            }
            let doc = json!({
                "converged": r.converged,
                "steps": r.steps,
                "fixed_point": r.fixed_point,
                "final_error": r.decay.last(),
                "log_slope": log_slope(&r.decay, 1e-14),
            });
            print!("{}", pretty(&doc));
            Ok(r.converged)
        }
        PathMode::Mass { shape, injection, output } => {
            let g = shape.graph();
            let inj = match injection {
                InjectionArg::None => Injection::None,
                InjectionArg::Left => Injection::Left,
                InjectionArg::Right => Injection::Right,
                InjectionArg::Both => Injection::Both,
            };
            let mut m = MassState::uniform(g.len(), 1.0);
            let mut totals = vec![m.total()];
            for _ in 0..shape.horizon {
                m = mass_step(&m, &g, shape.kappa, inj);
                totals.push(m.total());
            }
            write_output(&output, &series_csv(&totals))?;
            Ok(true)
        }
        PathMode::Domination { shape, boundary, seed } => {
            let g = shape.graph();
            let w = g.weights.iter().copied().fold(0.0, f64::max);
            let base = random_messages(g.len(), 0.0, w, seed);
            let diff = random_messages(g.len(), -w, w, seed.wrapping_add(1));
            let r = domination_test(&g, shape.kappa, boundary, &base, &diff, shape.horizon)?;
            print!("{}", pretty(&r));
            Ok(r.holds)
        }
        PathMode::Sandwich { input, structure, delta_big, delta, horizon, kappa, seed } => {
            let inst = read_input(&input)?;
            let v = verify(&inst, &VerifyConfig::default())?;
            let (Some(d), Some(fp)) = (&v.decomposition, &v.fixed_point) else {
                return Err(Failure::Check("instance has no decomposable NB solution".into()));
            };
            let mut all = true;
            let mut reports = Vec::new();
            for (name, init) in [
                ("reference", SandwichInit::Reference),
                ("checkerboard_plus", SandwichInit::Checkerboard { s: 1, seed }),
                ("checkerboard_minus", SandwichInit::Checkerboard { s: -1, seed }),
                ("random", SandwichInit::Random { seed }),
            ] {
                let r = sandwich_test(&inst, d, fp, structure, delta_big, delta, horizon, kappa, init)?;
                all &= r.holds;
                reports.push(json!({ "init": name, "report": r }));
            }
            print!("{}", pretty(&reports));
            Ok(all)
        }
    }
}
