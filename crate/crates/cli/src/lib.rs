//! Command-line front end: loads problem files, runs one operation and writes
//! a JSON-lines report (or CSV) that records the configuration and seed.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use opfact::correlations::{self, CorrelationTable, PVMModel};
use opfact::factnorm::{self, FactOptions, FactProblem, NormInterval};
use opfact::groups::{self, GroupSystem};
use opfact::haagerup;
use opfact::io::{self, ProblemJson, ProductContext};
use opfact::optim::SearchOptions;
use opfact::products;
use opfact::quotients;
use opfact::spaces::{self, ConcreteOperatorSpace, MatrixElement};
use opfact::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "opfact", version, about = "Factorization norms and quotient norms on concrete operator spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Norm intervals: matrix, unital, haagerup, commuting, min, fact, group, osp, osy, product-quotient
    Norm(Args),
    /// Property checks: linf, unitality, contractivity, degeneracy
    Check(Args),
    /// Correlations: model, corner, synchronous, build-corner, trace
    Corr(Args),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Args {
    #[arg(long)]
    pub kind: String,
    /// problem file (JSON)
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// group presentation file
    #[arg(long)]
    pub pres: Option<PathBuf>,
    /// symbol-span element such as "e+a1"
    #[arg(long)]
    pub elem: Option<String>,
    /// maximal factorization or word length
    #[arg(short = 'L')]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 400)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// sample count for checks and trace tests
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// target dimension of ucp maps for osy lower bounds (default: ambient dimension)
    #[arg(long)]
    pub ucp_dim: Option<usize>,
    /// append the report here instead of printing it
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    kind: &'a str,
    input: Option<String>,
    pres: Option<String>,
    elem: Option<&'a str>,
    length: usize,
    restarts: usize,
    iters: usize,
    seed: u64,
    tol: f64,
    samples: usize,
    ucp_dim: Option<usize>,
    format: Format,
}

/// What a command produced: a JSON result, its CSV form, a one-line summary,
/// and whether a violation was found.
struct Outcome {
    result: Value,
    csv: String,
    summary: String,
    violation: bool,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Input(_) | Error::Precondition(_) => EXIT_INPUT,
            Error::Infeasible(_) | Error::EnumerationExceeded(_) => EXIT_INFEASIBLE,
            Error::Degenerate(_) => EXIT_VIOLATION,
        };
        CliError { code, message: e.to_string() }
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_INPUT, message: msg.into() }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read(path: &Option<PathBuf>, flag: &str) -> CliResult<(String, String)> {
    let p = path.as_ref().ok_or_else(|| input_err(format!("--{flag} is required for this kind")))?;
    let text = fs::read_to_string(p).map_err(|e| input_err(format!("cannot read {}: {e}", p.display())))?;
    Ok((p.display().to_string(), text))
}

fn problem(args: &Args) -> CliResult<ProblemJson> {
    let (_, text) = read(&args.input, "in")?;
    Ok(io::parse_problem(&text)?)
}

fn need<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| input_err(format!("problem file needs '{what}'")))
}

fn space_of(p: &ProblemJson) -> CliResult<ConcreteOperatorSpace> {
    Ok(need(p.space.as_ref(), "space")?.build()?)
}

fn element_of(p: &ProblemJson, dim: usize) -> CliResult<MatrixElement> {
    let v = need(p.element.clone(), "element")?;
    let e: io::ElementJson = serde_json::from_value(v).map_err(|e| input_err(format!("malformed element: {e}")))?;
    Ok(io::element_from_json(&e, dim)?)
}

fn tensor_of(p: &ProblemJson) -> CliResult<(ConcreteOperatorSpace, ConcreteOperatorSpace, MatrixElement)> {
    let s = need(p.s.as_ref(), "s")?.build()?;
    let t = need(p.t.as_ref(), "t")?.build()?;
    let v = need(p.element.clone(), "element")?;
    let e: io::TensorElementJson = serde_json::from_value(v).map_err(|e| input_err(format!("malformed tensor element: {e}")))?;
    let z = io::tensor_element_from_json(&e, s.dim(), t.dim())?;
    Ok((s, t, z))
}

fn fact_opts(args: &Args, default_len: usize) -> FactOptions {
    FactOptions {
        max_len: args.length.unwrap_or(default_len),
        restarts: args.restarts,
        iters: args.iters,
        seed: args.seed,
        ..FactOptions::default()
    }
}

fn interval_outcome(kind: &str, iv: &NormInterval) -> Outcome {
    interval_value(kind, iv.lower, iv.upper, serde_json::to_value(iv.upper_witness.summary()).unwrap_or(Value::Null), &iv.lower_witness)
}

fn interval_value(kind: &str, lower: f64, upper: f64, witness: Value, lower_witness: &str) -> Outcome {
    Outcome {
        result: json!({ "lower": lower, "upper": upper, "witness": witness, "lower_witness": lower_witness }),
        csv: format!("kind,lower,upper\n{kind},{lower},{upper}\n"),
        summary: format!("norm[{kind}]: lower = {lower}, upper = {upper}"),
        violation: false,
    }
}

fn cmd_norm(args: &Args) -> CliResult<Outcome> {
    let kind = args.kind.as_str();
    match kind {
        "matrix" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let x = element_of(&p, s.dim())?;
            let v = s.matrix_norm(&x);
            Ok(interval_value(kind, v, v, Value::Null, "realized norm"))
        }
        "unital" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let x = element_of(&p, s.dim())?;
            Ok(interval_outcome(kind, &factnorm::unital_norm(&x, &s, &fact_opts(args, 4))?))
        }
        "fact" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let m = need(p.product.as_ref(), "product")?.build(&ProductContext { space: Some(&s), ..Default::default() })?;
            let x = element_of(&p, s.dim())?;
            let base = |y: &MatrixElement| s.matrix_norm(y);
            let w = FactProblem::new(&m, &base).fact_norm_upper(&x, &fact_opts(args, 4))?;
            let witness = serde_json::to_value(w.summary()).unwrap_or(Value::Null);
            Ok(interval_value(kind, 0.0, w.value, witness, "none (upper bound only)"))
        }
        "haagerup" => {
            let p = problem(args)?;
            let (s, t, z) = tensor_of(&p)?;
            let opts = SearchOptions { restarts: args.restarts, iters: args.iters, seed: args.seed };
            let iv = haagerup::haagerup_norm(&z, &s, &t, &opts)?;
            let w = &iv.witness;
            let witness = json!({
                "factor_shapes": [w.left.shape(), w.right.shape()],
                "values": [s.matrix_norm(&w.left), t.matrix_norm(&w.right)],
            });
            Ok(interval_value(kind, iv.lower, iv.upper, witness, "minimal tensor norm"))
        }
        "commuting" => {
            let p = problem(args)?;
            let (s, t, z) = tensor_of(&p)?;
            Ok(interval_outcome(kind, &factnorm::commuting_norm(&z, &s, &t, &fact_opts(args, 4))?))
        }
        "min" => {
            let p = problem(args)?;
            let (s, t, z) = tensor_of(&p)?;
            let v = spaces::min_tensor_norm(&z, &s, &t)?;
            Ok(interval_value(kind, v, v, Value::Null, "realized norm in the ambient tensor product"))
        }
        "group" => {
            let (_, text) = read(&args.pres, "pres")?;
            let pres = groups::parse_presentation(&text)?;
            let sys = GroupSystem::new(&pres)?;
            let elem = args.elem.as_deref().ok_or_else(|| input_err("--elem is required for --kind group"))?;
            let x = MatrixElement::from_vector(&groups::parse_span_element(elem, pres.generators)?);
            Ok(interval_outcome(kind, &sys.fact_norm(&x, &fact_opts(args, 4))?))
        }
        "osp" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let k = need(p.kernel.as_ref(), "kernel")?.build(&s)?;
            let x = element_of(&p, s.dim())?;
            let q = quotients::osp_quotient_with(&x, &k, true)?;
            let mut out = interval_value(kind, q.value, q.value, Value::Null, "convex program over the coset");
            out.result["representative"] = json!(io::element_to_json(&q.representative));
            out.result["grid_value"] = json!(q.grid_value);
            Ok(out)
        }
        "osy" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let k = need(p.kernel.as_ref(), "kernel")?.build(&s)?;
            let x = element_of(&p, s.dim())?;
            let upper = quotients::osp_quotient_with(&x, &k, false)?.value;
            let d = args.ucp_dim.unwrap_or(s.ambient_dim());
            let lo = quotients::ucp_quotient_lower(&x, &k, d, args.restarts, args.seed)?;
            let mut out = interval_value(kind, lo.value, upper, Value::Null, &format!("ucp map into M_{d} killing the kernel"));
            out.result["kill_residual"] = json!(lo.kill_residual);
            Ok(out)
        }
        "product-quotient" => {
            let p = problem(args)?;
            let s = space_of(&p)?;
            let k = need(p.kernel.as_ref(), "kernel")?.build(&s)?;
            let m = need(p.product.as_ref(), "product")?.build(&ProductContext { space: Some(&s), ..Default::default() })?;
            let x = element_of(&p, s.dim())?;
            Ok(interval_outcome(kind, &quotients::product_quotient_upper(&x, &k, &m, &fact_opts(args, 3))?))
        }
        other => Err(input_err(format!("unknown norm kind '{other}'"))),
    }
}

fn check_value(kind: &str, passed: bool, worst: f64, detail: Value) -> Outcome {
    Outcome {
        result: json!({ "passed": passed, "max_violation": worst, "detail": detail }),
        csv: format!("kind,passed,max_violation\n{kind},{passed},{worst}\n"),
        summary: format!("check[{kind}]: {} (max violation {worst:.3e})", if passed { "pass" } else { "VIOLATION" }),
        violation: !passed,
    }
}

fn cmd_check(args: &Args) -> CliResult<Outcome> {
    let kind = args.kind.as_str();
    let p = problem(args)?;
    let to_value = |v: &dyn erased::ToValue| v.to_value();
    match kind {
        "linf" => {
            let s = space_of(&p)?;
            let r = spaces::check_linf_axioms(&s, args.samples, args.seed);
            Ok(check_value(kind, r.max_violation <= args.tol && !r.degenerate, r.max_violation, to_value(&r)))
        }
        "unitality" => {
            let s = space_of(&p)?;
            let r = spaces::check_unitality_tol(&s, args.samples, args.seed, args.tol)?;
            let worst = r.max_deviation.max(r.max_criterion_violation);
            Ok(check_value(kind, r.passed, worst, to_value(&r)))
        }
        "contractivity" => {
            let s = space_of(&p)?;
            let m = need(p.product.as_ref(), "product")?.build(&ProductContext { space: Some(&s), ..Default::default() })?;
            let base = |y: &MatrixElement| s.matrix_norm(y);
            let r = products::check_complete_contractivity(&m, &base, 3, args.samples, args.seed);
            Ok(check_value(kind, r.max_gap <= args.tol, r.max_gap.max(0.0), to_value(&r)))
        }
        "degeneracy" => {
            let space = match &p.space {
                Some(s) => Some(s.build()?),
                None => None,
            };
            let m = need(p.product.as_ref(), "product")?.build(&ProductContext { space: space.as_ref(), ..Default::default() })?;
            let r = products::detect_degeneracy(&m, args.length.unwrap_or(3))?;
            Ok(check_value(kind, !r.degenerate, if r.degenerate { 1.0 } else { 0.0 }, to_value(&r)))
        }
        other => Err(input_err(format!("unknown check kind '{other}'"))),
    }
}

/// Serialization behind a trait object so reports of different types share one path.
mod erased {
    pub trait ToValue {
        fn to_value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> ToValue for T {
        fn to_value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
        }
    }
}

fn table_of(args: &Args) -> CliResult<CorrelationTable> {
    let (_, text) = read(&args.input, "in")?;
    let t: CorrelationTable = serde_json::from_str(&text).map_err(|e| input_err(format!("malformed table: {e}")))?;
    t.validate(correlations::TABLE_TOL)?;
    Ok(t)
}

fn model_of(args: &Args) -> CliResult<PVMModel> {
    let (_, text) = read(&args.input, "in")?;
    serde_json::from_str(&text).map_err(|e| input_err(format!("malformed model: {e}")))
}

fn table_outcome(what: &str, t: &CorrelationTable, violation: bool) -> Outcome {
    Outcome {
        result: json!({ "table": t, "synchronous": correlations::is_synchronous(t) }),
        csv: t.to_csv(),
        summary: format!("corr[{what}]: n = {}, k = {}, synchronous = {}", t.n, t.k, correlations::is_synchronous(t)),
        violation,
    }
}

fn cmd_corr(args: &Args) -> CliResult<Outcome> {
    let kind = args.kind.as_str();
    match kind {
        "model" => Ok(table_outcome(kind, &correlations::correlation_from_model(&model_of(args)?)?, false)),
        "build-corner" => {
            let m = model_of(args)?;
            Ok(table_outcome(kind, &correlations::build_corner_model(&m.e, &m.f, None)?, false))
        }
        "corner" => Ok(table_outcome(kind, &correlations::synchronous_corner(&table_of(args)?)?, false)),
        "synchronous" => {
            let t = table_of(args)?;
            let sync = correlations::is_synchronous(&t);
            Ok(Outcome {
                result: json!({ "synchronous": sync }),
                csv: format!("synchronous\n{sync}\n"),
                summary: format!("corr[synchronous]: {sync}"),
                violation: !sync,
            })
        }
        "trace" => {
            let p = problem(args)?;
            let space = match &p.space {
                Some(s) => Some(s.build()?),
                None => None,
            };
            let m = need(p.product.as_ref(), "product")?.build(&ProductContext { space: space.as_ref(), ..Default::default() })?;
            let phi = need(p.state.clone(), "state")?;
            let base = |y: &MatrixElement| match &space {
                Some(s) => s.matrix_norm(y),
                None => groups::ell1_norm(y),
            };
            let l = args.length.unwrap_or(2);
            let v = correlations::trace_extension_feasible(&phi, &m, &base, l, args.samples, args.seed, &fact_opts(args, 2))?;
            let verdict = if v.pass { "pass" } else { "fail" };
            let certified = v.violation.as_ref().map(|w| w.certified).unwrap_or(false);
            Ok(Outcome {
                result: serde_json::to_value(&v).unwrap_or(Value::Null),
                csv: format!("verdict,length,samples,certified\n{verdict},{},{},{certified}\n", v.length, v.samples),
                summary: format!(
                    "corr[trace]: {verdict} at L = {} over {} samples{}",
                    v.length,
                    v.samples,
                    if certified { " (certified: no tracial extension)" } else { "" }
                ),
                violation: !v.pass,
            })
        }
        other => Err(input_err(format!("unknown corr kind '{other}'"))),
    }
}

fn default_length(command: &str, kind: &str) -> usize {
    match (command, kind) {
        ("check", _) => 3,
        ("corr", _) => 2,
        (_, "product-quotient") => 3,
        _ => 4,
    }
}

/// Runs one command. Returns the exit code; reports and summaries go to the
/// given writers (or to `--out`).
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let (name, args) = match &cli.command {
        Command::Norm(a) => ("norm", a),
        Command::Check(a) => ("check", a),
        Command::Corr(a) => ("corr", a),
    };
    let outcome = match name {
        "norm" => cmd_norm(args),
        "check" => cmd_check(args),
        _ => cmd_corr(args),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            return e.code;
        }
    };
    let config = RunConfig {
        command: name,
        kind: &args.kind,
        input: args.input.as_ref().map(|p| p.display().to_string()),
        pres: args.pres.as_ref().map(|p| p.display().to_string()),
        elem: args.elem.as_deref(),
        length: args.length.unwrap_or_else(|| default_length(name, &args.kind)),
        restarts: args.restarts,
        iters: args.iters,
        seed: args.seed,
        tol: args.tol,
        samples: args.samples,
        ucp_dim: args.ucp_dim,
        format: args.format,
    };
    let report = json!({
        "command": name,
        "kind": args.kind,
        "status": if outcome.violation { "violation" } else { "ok" },
        "seed": args.seed,
        "config": config,
        "versions": { "opfact": opfact::VERSION, "opfact-cli": env!("CARGO_PKG_VERSION") },
        "result": outcome.result,
    });
    let body = match args.format {
        Format::Json => format!("{report}\n"),
        Format::Csv => outcome.csv.clone(),
    };
    let written = match &args.out {
        Some(path) => {
            let file = fs::OpenOptions::new().create(true).append(args.format == Format::Json).write(true).truncate(args.format == Format::Csv).open(path);
            match file.and_then(|mut f| f.write_all(body.as_bytes())) {
                Ok(()) => writeln!(stdout, "{}", outcome.summary),
                Err(e) => {
                    let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                    return EXIT_INPUT;
                }
            }
        }
        None => stdout.write_all(body.as_bytes()).and_then(|_| writeln!(stderr, "{}", outcome.summary)),
    };
    if written.is_err() {
        return EXIT_INPUT;
    }
    if outcome.violation {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}
