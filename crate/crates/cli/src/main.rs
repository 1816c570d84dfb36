use std::io::{IsTerminal, Read};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use ergocert::ergodicity::{
    analyze, auto_mode, controller_feasibility, recheck_report, AnalysisConfig, AnalysisError, Certificate,
    ControllerSpec, ErgodicityReport, Mode, RecheckError, Verdict,
};
use ergocert::network::{build_stoichiometry, classify_column, NetworkError, ReactionNetwork, UniKind};
use ergocert::par::Execution;
use ergocert::parse::{parse_document, NetworkDocument};
use ergocert::spectral::SpectralError;
use ergocert::ssa::{augment_antithetic, simulate, stationary_mean, SimulationError};

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(i32::from(exit::IO));
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(&format!($($t)*)) };
}

macro_rules! outln {
    ($($t:tt)*) => { emit(&format!("{}\n", format_args!($($t)*))) };
}

mod exit {
    pub const CERTIFIED: u8 = 0;
    pub const REFUTED: u8 = 1;
    pub const INCONCLUSIVE: u8 = 2;
    pub const PREREQUISITE: u8 = 3;
    pub const ANALYSIS: u8 = 4;
    pub const USAGE: u8 = 64;
    pub const NO_INPUT: u8 = 66;
    pub const INTERNAL: u8 = 70;
    pub const IO: u8 = 74;
}

#[derive(Parser, Debug)]
#[command(name = "ergocert", version, about = "Ergodicity certificates for stochastic reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify or refute ergodicity of a network.
    Analyze(AnalyzeArgs),
    /// Classify every reaction.
    Classify(ClassifyArgs),
    /// Check antithetic integral controller feasibility.
    Controller(ControllerArgs),
    /// Run the stochastic simulation algorithm.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Auto,
    Nominal,
    Robust,
    RobustConstv,
    Structural,
    Bimolecular,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args, Debug)]
struct Numeric {
    /// LP strictness margin.
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    #[arg(long, default_value_t = AnalysisConfig::default().seed)]
    seed: u64,
    /// Largest Handelman degree (default: max(deg p, 2)).
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long, default_value_t = 50)]
    spot_checks: usize,
    #[arg(long, default_value_t = 100)]
    recheck_samples: usize,
    #[arg(long, default_value_t = 20)]
    nilpotency_samples: usize,
    /// Multistart count of the counterexample searches.
    #[arg(long, default_value_t = 512)]
    starts: usize,
    #[arg(long, default_value_t = 20)]
    vertex_limit: usize,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

impl Numeric {
    fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            epsilon: self.epsilon,
            seed: self.seed,
            handelman_degree: self.degree,
            spot_check_samples: self.spot_checks,
            recheck_samples: self.recheck_samples,
            nilpotency_samples: self.nilpotency_samples,
            search_starts: self.starts,
            vertex_limit: self.vertex_limit,
            execution: execution(self.sequential),
        }
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Network file, or `-` for stdin.
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    numeric: Numeric,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args, Debug)]
struct ControllerArgs {
    file: PathBuf,
    /// Controlled species.
    #[arg(long)]
    target: String,
    /// Actuated species (default: the first species).
    #[arg(long)]
    actuated: Option<String>,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    numeric: Numeric,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    file: PathBuf,
    #[arg(long)]
    t_end: f64,
    /// Initial counts, comma separated (default: all zero).
    #[arg(long, value_delimiter = ',')]
    x0: Vec<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Close the loop first: `target,mu,theta,eta,k`.
    #[arg(long)]
    controller: Option<String>,
    /// Actuated species for `--controller` (default: the first species).
    #[arg(long)]
    actuated: Option<String>,
    /// Fraction of the horizon discarded before averaging.
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
    /// Write the first run's trajectory here as CSV.
    #[arg(long)]
    trajectory_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    sequential: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn analysis_failure(e: AnalysisError, doc: Option<&NetworkDocument>) -> Failure {
    let code = match &e {
        AnalysisError::PrerequisiteFailed(_) => exit::PREREQUISITE,
        AnalysisError::NumericalInconsistency(_) | AnalysisError::Spectral(SpectralError::NumericalInconsistency { .. }) => {
            exit::INTERNAL
        }
        _ => exit::ANALYSIS,
    };
    let mut message = e.to_string();
    if let (AnalysisError::Network(NetworkError::Classification { reaction, .. }), Some(doc)) = (&e, doc) {
        if let Some((line, _)) = doc.locations.reactions.get(*reaction) {
            message = format!("line {line}: {message}");
        }
    }
    Failure::new(code, message)
}

fn simulation_failure(e: SimulationError) -> Failure {
    Failure::new(exit::ANALYSIS, e.to_string())
}

fn load(path: &PathBuf) -> Result<NetworkDocument, Failure> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::new(exit::IO, format!("stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::NotFound { exit::NO_INPUT } else { exit::IO };
            Failure::new(code, format!("{}: {e}", path.display()))
        })?
    };
    parse_document(&text).map_err(|e| {
        let line = text.lines().nth(e.line.saturating_sub(1)).unwrap_or("");
        let caret = format!("{}^", " ".repeat(e.column.saturating_sub(1)));
        Failure::new(exit::USAGE, format!("{}: {e}\n  {line}\n  {caret}", path.display()))
    })
}

fn species(network: &ReactionNetwork, name: &str) -> Result<usize, Failure> {
    network
        .species_index(name)
        .ok_or_else(|| Failure::new(exit::USAGE, format!("unknown species `{name}`")))
}

fn use_color() -> bool {
    std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn paint(text: &str, code: &str) -> String {
    if use_color() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::new(exit::INTERNAL, e.to_string()))
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Nominal => "nominal",
        Mode::RobustParametric => "robust (parametric v)",
        Mode::RobustConstantV => "robust (constant v)",
        Mode::Structural => "structural",
        Mode::Bimolecular => "bimolecular",
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn render_text(report: &ErgodicityReport, recheck: &str) -> String {
    let verdict = match report.verdict {
        Verdict::Certified => paint("CERTIFIED", "32"),
        Verdict::Refuted => paint("REFUTED", "31"),
        Verdict::Inconclusive => paint("INCONCLUSIVE", "33"),
    };
    let mut out = format!("mode:    {}\nverdict: {verdict}\n", mode_name(report.mode));
    match &report.certificate {
        Some(Certificate::NumericVector(c)) | Some(Certificate::VertexCommonV(c)) => {
            out += &format!("v = {} over {} matrix(es)\n", fmt_vec(&c.v), c.matrices.len());
            if let Some(l) = &c.lifted {
                out += &format!("lifted v = {}\n", fmt_vec(l));
            }
        }
        Some(Certificate::PolynomialVector(c)) => {
            out += &format!("(-1)^d det A+ = {}\n", c.determinant);
            for (i, p) in c.v.iter().enumerate() {
                out += &format!("v[{i}] = {p}\n");
            }
        }
        Some(Certificate::Structural(w)) => {
            out += &format!("statement {}; A(1,1,0) has lambda_PF = {:.6}\n", w.statement, w.lambda_pf);
            out += &format!("coupling nilpotent: {}", w.nilpotent);
            if let Some(c) = &w.cycle {
                out += &format!(" (cycle {c:?}, spectral radius {:.6})", w.spectral_radius);
            }
            out.push('\n');
        }
        None => {}
    }
    if let Some(cx) = &report.counterexample {
        out += &format!("counterexample: {:?}\nlambda_PF(A) = {:.6}\n", cx.assignment, cx.lambda_pf);
    }
    if let Some(r) = &report.reduction {
        out += &format!("reduced to {:?}, dropped {:?}\n", r.kept_species, r.dropped_species);
    }
    for n in &report.notes {
        out += &format!("note: {n}\n");
    }
    out += &format!("recheck: {recheck}\n");
    out
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8, Failure> {
    let doc = load(&args.file)?;
    let cfg = args.numeric.config();
    let mode = match args.mode {
        ModeArg::Auto => auto_mode(&doc.network),
        ModeArg::Nominal => Mode::Nominal,
        ModeArg::Robust => Mode::RobustParametric,
        ModeArg::RobustConstv => Mode::RobustConstantV,
        ModeArg::Structural => Mode::Structural,
        ModeArg::Bimolecular => Mode::Bimolecular,
    };
    let report = analyze(&doc.network, mode, &cfg).map_err(|e| analysis_failure(e, Some(&doc)))?;
    let recheck = match recheck_report(&doc.network, &report, &cfg) {
        Ok(()) if report.verdict == Verdict::Inconclusive => "not applicable".to_string(),
        Ok(()) => "passed".to_string(),
        Err(RecheckError::Analysis(e)) => return Err(analysis_failure(e, Some(&doc))),
        Err(e) => return Err(Failure::new(exit::INTERNAL, format!("independent recheck failed: {e}"))),
    };
    match args.format {
        Format::Json => {
            let mut value = serde_json::to_value(&report).map_err(|e| Failure::new(exit::INTERNAL, e.to_string()))?;
            value["recheck"] = Value::String(recheck);
            outln!("{}", to_json(&value)?);
        }
        Format::Text => out!("{}", render_text(&report, &recheck)),
    }
    Ok(match report.verdict {
        Verdict::Certified => exit::CERTIFIED,
        Verdict::Refuted => exit::REFUTED,
        Verdict::Inconclusive => exit::INCONCLUSIVE,
    })
}

#[derive(Serialize)]
struct ClassRow {
    index: usize,
    reaction: String,
    rate: String,
    class: &'static str,
}

fn describe(network: &ReactionNetwork, k: usize) -> String {
    let r = &network.reactions[k];
    let side = |c: &[(usize, u32)]| -> String {
        if c.is_empty() {
            return "0".into();
        }
        c.iter()
            .map(|&(s, m)| if m == 1 { network.species[s].clone() } else { format!("{m} {}", network.species[s]) })
            .collect::<Vec<_>>()
            .join(" + ")
    };
    format!("{} -> {}", side(&r.reactants), side(&r.products))
}

fn cmd_classify(args: &ClassifyArgs) -> Result<u8, Failure> {
    let doc = load(&args.file)?;
    let n = &doc.network;
    build_stoichiometry(n).map_err(|e| analysis_failure(e.into(), Some(&doc)))?;
    let d = n.num_species();
    let mut rows = Vec::new();
    for (k, r) in n.reactions.iter().enumerate() {
        let class = match r.order() {
            0 => "zeroth",
            2 => "bimolecular",
            _ => match classify_column(&r.stoichiometry(d)) {
                Ok(UniKind::Degradation) => "dg",
                Ok(UniKind::Catalytic) => "ct",
                Ok(UniKind::Conversion) => "cv",
                Err(negatives) => {
                    return Err(analysis_failure(
                        NetworkError::Classification { reaction: k, negatives }.into(),
                        Some(&doc),
                    ))
                }
            },
        };
        rows.push(ClassRow { index: k, reaction: describe(n, k), rate: r.rate.clone(), class });
    }
    let mut counts = std::collections::BTreeMap::new();
    for r in &rows {
        *counts.entry(r.class).or_insert(0usize) += 1;
    }
    match args.format {
        Format::Json => outln!("{}", to_json(&json!({ "reactions": rows, "counts": counts }))?),
        Format::Text => {
            let width = rows.iter().map(|r| r.reaction.chars().count()).max().unwrap_or(8).max(8);
            outln!("{:>3}  {:<width$}  {:<8}  class", "#", "reaction", "rate");
            for r in &rows {
                outln!("{:>3}  {:<width$}  {:<8}  {}", r.index, r.reaction, r.rate, r.class);
            }
            let summary: Vec<String> = counts.iter().map(|(c, n)| format!("{n} {c}")).collect();
            outln!("{}", summary.join(", "));
        }
    }
    Ok(exit::CERTIFIED)
}

fn cmd_controller(args: &ControllerArgs) -> Result<u8, Failure> {
    let doc = load(&args.file)?;
    let n = &doc.network;
    let spec = ControllerSpec {
        controlled: species(n, &args.target)?,
        actuated: match &args.actuated {
            Some(a) => species(n, a)?,
            None => 0,
        },
        mu: args.mu,
        theta: args.theta,
        eta: args.eta,
        k: args.k,
    };
    let report = controller_feasibility(n, &spec, &args.numeric.config()).map_err(|e| analysis_failure(e, Some(&doc)))?;
    match args.format {
        Format::Json => outln!("{}", to_json(&report)?),
        Format::Text => {
            let verdict = if report.feasible { paint("FEASIBLE", "32") } else { paint("INFEASIBLE", "31") };
            outln!("verdict: {verdict}");
            outln!("output controllable: {}", report.output_controllable);
            outln!("w = {}", fmt_vec(&report.w));
            outln!("v = {}", fmt_vec(&report.v));
            outln!("c = {:.6}", report.c);
            outln!("set-point {:.6} must exceed {:.6}", report.requested_setpoint, report.setpoint_lower_bound);
            for note in &report.notes {
                outln!("note: {note}");
            }
        }
    }
    Ok(if report.feasible { exit::CERTIFIED } else { exit::REFUTED })
}

fn parse_controller(spec: &str, network: &ReactionNetwork, actuated: Option<&str>) -> Result<ControllerSpec, Failure> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [target, mu, theta, eta, k] = parts.as_slice() else {
        return Err(Failure::new(exit::USAGE, format!("--controller expects target,mu,theta,eta,k; got `{spec}`")));
    };
    let num = |s: &str, what: &str| -> Result<f64, Failure> {
        s.parse().map_err(|_| Failure::new(exit::USAGE, format!("--controller: {what} `{s}` is not a number")))
    };
    Ok(ControllerSpec {
        controlled: species(network, target)?,
        actuated: match actuated {
            Some(a) => species(network, a)?,
            None => 0,
        },
        mu: num(mu, "mu")?,
        theta: num(theta, "theta")?,
        eta: num(eta, "eta")?,
        k: num(k, "k")?,
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, Failure> {
    let doc = load(&args.file)?;
    let mut network = doc.network.clone();
    let mut notes = Vec::new();
    if let Some(c) = &args.controller {
        let spec = parse_controller(c, &network, args.actuated.as_deref())?;
        let closed = augment_antithetic(&network, &spec).map_err(simulation_failure)?;
        notes = closed.notes;
        network = closed.network;
    }
    let d = network.num_species();
    let mut x0 = args.x0.clone();
    if x0.is_empty() {
        x0 = vec![0; d];
    } else if doc.network.num_species() != d && x0.len() == doc.network.num_species() {
        // controller species start empty
        x0.resize(d, 0);
    }
    if let Some(path) = &args.trajectory_csv {
        let t = simulate(&network, &x0, args.t_end, args.seed).map_err(simulation_failure)?;
        std::fs::write(path, t.to_csv()).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))?;
    }
    let est = stationary_mean(&network, &x0, args.t_end, args.burn_in, args.runs as usize, args.seed, execution(args.sequential))
        .map_err(simulation_failure)?;
    match args.format {
        Format::Json => outln!("{}", to_json(&json!({ "estimate": est, "notes": notes }))?),
        Format::Text => {
            outln!("{:<12}  {:>14}  {:>12}", "species", "mean", "std. error");
            for i in 0..d {
                outln!("{:<12}  {:>14.6}  {:>12.6}", est.species[i], est.mean[i], est.std_error[i]);
            }
            for note in &notes {
                outln!("note: {note}");
            }
        }
    }
    Ok(exit::CERTIFIED)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Controller(a) => cmd_controller(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
