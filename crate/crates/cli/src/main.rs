use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use banded_markov::factorization::{compute_pbf, normalize_chain, reconstruct, stochastic_normalize};
use banded_markov::infinite::classify_infinite;
use banded_markov::markov::{analyze_all, doob_transform};
use banded_markov::recursion::{eval_recursions, InitialConditions};
use banded_markov::simulate::{empirical_estimates, SimConfig};
use banded_markov::spectral::eigensystem;
use banded_markov::tolerances::DESCRIPTIONS;
use banded_markov::verify::verify_all;
use banded_markov::{max_abs_diff, BandedMatrix, Error, Mode, Tolerances};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const SCHEMA: &str = "banded-markov/1";

#[derive(Parser)]
#[command(name = "banded-markov", version, about = "Spectral analysis of banded Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct Common {
    /// Matrix-spec JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Truncation order, or a comma-separated list.
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    /// Comma-separated truncation orders.
    #[arg(long = "N-list", value_delimiter = ',')]
    n_list: Vec<usize>,
    /// JSON file with initial conditions {"nu": [[..]], "xi": [[..]]}.
    #[arg(long)]
    ic: Option<PathBuf>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    tol: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Positive bidiagonal factorization in raw, normalized and stochastic form.
    Factorize(Common),
    /// Eigenvalues, eigenvectors, Christoffel numbers and spectral measure.
    Spectrum(Common),
    /// Chain report: stationary state, return times, rate, classification.
    Analyze(Common),
    /// Trend diagnostics of a semi-infinite generator over several truncations.
    Classify(Common),
    /// Monte Carlo estimates on the renormalized truncation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        replicas: u32,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long = "burn-in", default_value_t = 1000)]
        burn_in: u64,
        /// Horizon of the k-step estimate.
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// Longest first-passage time tabulated.
        #[arg(long = "max-r", default_value_t = 10)]
        max_r: usize,
    },
    /// Runs every invariant suite; exit 1 if any fails.
    Verify(Common),
    /// Recursion, characteristic and determinantal polynomials at given points.
    Poly {
        #[command(flatten)]
        common: Common,
        /// Evaluation points, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
        x: Vec<f64>,
    },
}

struct Output {
    json: Value,
    csv: String,
    failed: bool,
}

enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = std::result::Result<Output, Failure>;

fn tolerance_help() -> String {
    let defaults = Tolerances::default();
    let mut s = String::from("Tolerances (override with --tol key=value):\n");
    for (key, text) in DESCRIPTIONS {
        s.push_str(&format!("  {key:<18} {:<8e} {text}\n", defaults.get(key).unwrap_or(f64::NAN)));
    }
    s
}

fn read(path: &PathBuf) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Core(Error::InvalidInput(format!("cannot read {}: {e}", path.display()))))
}

struct Setup {
    t: BandedMatrix,
    tol: Tolerances,
    ic: InitialConditions,
    overrides: BTreeMap<String, f64>,
}

fn setup(c: &Common) -> std::result::Result<Setup, Failure> {
    let mut tol = Tolerances::default();
    let mut overrides = BTreeMap::new();
    for a in &c.tol {
        tol.apply(a)?;
        let key = a.split_once('=').map(|(k, _)| k.trim().to_string()).unwrap_or_default();
        overrides.insert(key.clone(), tol.get(&key).unwrap_or(f64::NAN));
    }
    let t = BandedMatrix::from_json(&read(&c.input)?, tol.row)?;
    let ic = match &c.ic {
        Some(path) => InitialConditions::from_json(&read(path)?)?,
        None => InitialConditions::identity(t.p(), t.q()),
    };
    ic.check_shape(t.p(), t.q())?;
    Ok(Setup { t, tol, ic, overrides })
}

fn orders(c: &Common, t: &BandedMatrix) -> std::result::Result<Vec<usize>, Failure> {
    let mut list: Vec<usize> = c.n.iter().chain(&c.n_list).copied().collect();
    if list.is_empty() {
        match t.max_order() {
            Some(max) => list.push(max),
            None => return Err(Failure::Usage("a semi-infinite generator needs --N".into())),
        }
    }
    Ok(list)
}

fn single_order(c: &Common, t: &BandedMatrix) -> std::result::Result<usize, Failure> {
    match orders(c, t)?.as_slice() {
        [n] => Ok(*n),
        more => Err(Failure::Usage(format!("this command takes one truncation order, got {}", more.len()))),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable output")
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn fmt(v: f64) -> String {
    // Same shortest round-trip text as the JSON output.
    serde_json::to_string(&v).expect("float")
}

fn factorize(c: &Common) -> Outcome {
    let s = setup(c)?;
    let order = single_order(c, &s.t)?;
    let raw = compute_pbf(&s.t, order + 1, &s.tol)?;
    let normalized = normalize_chain(&raw)?;
    let is_stochastic = s.t.mode() == Mode::Stochastic && s.t.size() == Some(order + 1);
    let stochastic = stochastic_normalize(&raw, is_stochastic, &s.tol)?;
    let err = max_abs_diff(&reconstruct(&raw), &s.t.truncate(order)?);
    let mut csv = csv_line(&["form", "factor", "kind", "row", "diag", "offdiag"].map(String::from));
    for chain in [&raw, &normalized, &stochastic] {
        let form = to_value(&chain.form).as_str().unwrap_or_default().to_string();
        for (i, f) in chain.lowers.iter().chain(&chain.uppers).enumerate() {
            let kind = to_value(&f.kind).as_str().unwrap_or_default().to_string();
            for r in 0..f.diag.len() {
                let off = f.offdiag.get(r).copied().unwrap_or(0.0);
                csv.push_str(&csv_line(&[form.clone(), i.to_string(), kind.clone(), r.to_string(), fmt(f.diag[r]), fmt(off)]));
            }
        }
    }
    Ok(Output {
        json: json!({
            "N": order,
            "raw": raw,
            "normalized": normalized,
            "stochastic": stochastic,
            "reconstruction_error": err,
            "overrides": s.overrides,
        }),
        csv,
        failed: false,
    })
}

fn spectrum(c: &Common) -> Outcome {
    let s = setup(c)?;
    let order = single_order(c, &s.t)?;
    let sys = eigensystem(&s.t, order, &s.ic, &s.tol)?;
    let measure = sys.measure(&s.tol)?;
    let (mu, rho) = sys.christoffel_numbers();
    let mut header = vec!["k".to_string(), "lambda".to_string()];
    header.extend((0..sys.p).map(|a| format!("mu_{a}")));
    header.extend((0..sys.q).map(|b| format!("rho_{b}")));
    let mut csv = csv_line(&header);
    for k in 0..sys.len() {
        let mut row = vec![k.to_string(), fmt(sys.lambdas[k])];
        row.extend(mu[k].iter().chain(&rho[k]).map(|&v| fmt(v)));
        csv.push_str(&csv_line(&row));
    }
    Ok(Output {
        json: json!({
            "N": order,
            "eigenvalues": sys.lambdas,
            "right_eigenvectors": sys.right,
            "left_eigenvectors": sys.left,
            "left_paths": sys.left_paths,
            "christoffel": {"mu": mu, "rho": rho},
            "measure": measure,
            "diagnostics": sys.diagnostics,
            "overrides": s.overrides,
        }),
        csv,
        failed: false,
    })
}

fn analyze(c: &Common) -> Outcome {
    let s = setup(c)?;
    let list = orders(c, &s.t)?;
    let reports = analyze_all(&s.t, &list, &s.ic, &s.tol).into_iter().collect::<banded_markov::Result<Vec<_>>>()?;
    let mut csv = csv_line(
        &["N", "lambda0", "lambda1", "rate", "irreducible", "aperiodic", "recurrent", "ergodic"].map(String::from),
    );
    for r in &reports {
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        let cl = &r.classification;
        csv.push_str(&csv_line(&[
            r.N.to_string(),
            fmt(r.lambda0),
            opt(r.lambda1),
            opt(r.rate),
            cl.irreducible.to_string(),
            cl.aperiodic.to_string(),
            cl.recurrent.to_string(),
            cl.ergodic.to_string(),
        ]));
    }
    Ok(Output { json: json!({"reports": reports, "overrides": s.overrides}), csv, failed: false })
}

fn classify(c: &Common) -> Outcome {
    let s = setup(c)?;
    let list = orders(c, &s.t)?;
    let d = classify_infinite(&s.t, &list, &s.ic, &s.tol)?;
    let mut header = ["N", "lambda0", "gap", "mass11"].map(String::from).to_vec();
    header.extend(d.s_grid.iter().map(|s| format!("integral_estimate_at_s{s}")));
    let mut csv = csv_line(&header);
    for tr in &d.truncations {
        let mut row = vec![tr.N.to_string(), fmt(tr.lambda0), fmt(tr.gap), fmt(tr.mass11)];
        row.extend(tr.integral.iter().map(|&v| fmt(v)));
        csv.push_str(&csv_line(&row));
    }
    Ok(Output { json: json!({"diagnostics": d, "overrides": s.overrides}), csv, failed: false })
}

fn simulate(c: &Common, cfg: SimConfig, k: u32, max_r: usize) -> Outcome {
    let s = setup(c)?;
    let order = single_order(c, &s.t)?;
    let t_hat = doob_transform(&s.t, order)?;
    let e = empirical_estimates(&t_hat, &cfg, k, max_r)?;
    let values = |v: &[banded_markov::simulate::Estimate]| v.iter().map(|x| x.value).collect::<Vec<_>>();
    let errors = |v: &[banded_markov::simulate::Estimate]| v.iter().map(|x| x.se).collect::<Vec<_>>();
    let mut csv = csv_line(&["quantity", "index", "estimate", "standard_error"].map(String::from));
    for (name, list) in [("stationary", &e.stationary), ("kstep", &e.kstep), ("first_passage", &e.first_passage)] {
        for (i, x) in list.iter().enumerate() {
            let index = if name == "first_passage" { i + 1 } else { i };
            csv.push_str(&csv_line(&[name.into(), index.to_string(), fmt(x.value), fmt(x.se)]));
        }
    }
    csv.push_str(&csv_line(&["return_time".into(), cfg.start_state.to_string(), fmt(e.return_time.value), fmt(e.return_time.se)]));
    Ok(Output {
        json: json!({
            "N": order,
            "estimates": {
                "stationary": values(&e.stationary),
                "kstep": values(&e.kstep),
                "first_passage": values(&e.first_passage),
                "return_time": e.return_time.value,
            },
            "standard_errors": {
                "stationary": errors(&e.stationary),
                "kstep": errors(&e.kstep),
                "first_passage": errors(&e.first_passage),
                "return_time": e.return_time.se,
            },
            "k": k,
            "samples": e.samples,
            "censored_excursions": e.censored_excursions,
            "warnings": e.warnings,
            "config": cfg,
            "overrides": s.overrides,
        }),
        csv,
        failed: false,
    })
}

fn verify(c: &Common) -> Outcome {
    let s = setup(c)?;
    let order = single_order(c, &s.t)?;
    let r = verify_all(&s.t, order, &s.ic, &s.tol)?;
    let mut csv = csv_line(&["suite", "passed", "residual", "tol"].map(String::from));
    for suite in &r.suites {
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        csv.push_str(&csv_line(&[suite.name.clone(), suite.passed.to_string(), opt(suite.residual), opt(suite.tol)]));
    }
    let failed = !r.all_passed;
    Ok(Output { json: json!({"report": r, "overrides": s.overrides}), csv, failed })
}

fn poly(c: &Common, xs: &[f64]) -> Outcome {
    let s = setup(c)?;
    let order = single_order(c, &s.t)?;
    let (p, q) = (s.t.p(), s.t.q());
    let mut points = Vec::new();
    let mut header = vec!["x".to_string(), "n".to_string()];
    header.extend((0..p).map(|a| format!("A{a}")));
    header.extend((0..q).map(|b| format!("B{b}")));
    header.extend(["P", "Q", "R"].map(String::from));
    let mut csv = csv_line(&header);
    for &x in xs {
        let table = eval_recursions(&s.t, x, order, &s.ic)?;
        let (qs, rs): (Vec<f64>, Vec<f64>) =
            (0..=order).map(|n| table.determinantal_qr(n)).collect::<banded_markov::Result<Vec<_>>>()?.into_iter().unzip();
        for n in 0..=order {
            let mut row = vec![fmt(x), n.to_string()];
            row.extend(table.a.iter().map(|a| fmt(a[n])));
            row.extend(table.b.iter().map(|b| fmt(b[n])));
            row.extend([fmt(table.p_values[n]), fmt(qs[n]), fmt(rs[n])]);
            csv.push_str(&csv_line(&row));
        }
        points.push(json!({
            "x": x,
            "A": table.a,
            "B": table.b,
            "P": table.p_values,
            "P_prime": table.p_prime,
            "alpha": table.alpha,
            "beta": table.beta,
            "Q": qs,
            "R": rs,
        }));
    }
    Ok(Output { json: json!({"N": order, "points": points, "overrides": s.overrides}), csv, failed: false })
}

fn error_json(name: &str, message: &str, kind: &str) -> String {
    json!({"schema": SCHEMA, "error": {"name": name, "message": message, "kind": kind}}).to_string()
}

fn emit(command: &str, common: &Common, out: Output) -> ExitCode {
    let text = match common.format {
        Format::Json => {
            let mut body = out.json;
            if let Value::Object(map) = &mut body {
                map.insert("schema".into(), Value::from(SCHEMA));
                map.insert("command".into(), Value::from(command));
            }
            let mut s = serde_json::to_string(&body).expect("json");
            s.push('\n');
            s
        }
        Format::Csv => out.csv,
    };
    let written = match &common.out {
        Some(path) => fs::write(path, text.as_bytes()),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("{}", error_json("InvalidInput", &format!("cannot write output: {e}"), "validation"));
        return ExitCode::from(2);
    }
    if out.failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> ExitCode {
    let (name, common, outcome) = match &cli.command {
        Command::Factorize(c) => ("factorize", c, factorize(c)),
        Command::Spectrum(c) => ("spectrum", c, spectrum(c)),
        Command::Analyze(c) => ("analyze", c, analyze(c)),
        Command::Classify(c) => ("classify", c, classify(c)),
        Command::Simulate { common, steps, replicas, start, burn_in, k, max_r } => {
            let cfg = SimConfig { seed: common.seed, steps: *steps, replicas: *replicas, start_state: *start, burn_in: *burn_in };
            ("simulate", common, simulate(common, cfg, *k, *max_r))
        }
        Command::Verify(c) => ("verify", c, verify(c)),
        Command::Poly { common, x } => ("poly", common, poly(common, x)),
    };
    match outcome {
        Ok(out) => emit(name, common, out),
        Err(Failure::Core(e)) => {
            let kind = if e.is_validation() { "validation" } else { "numerical" };
            eprintln!("{}", error_json(e.name(), &e.to_string(), kind));
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", error_json("InvalidInput", &msg, "validation"));
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().after_long_help(tolerance_help()).try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("InvalidInput", e.to_string().trim(), "validation"));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_json("InvalidInput", e.to_string().trim(), "validation"));
            return ExitCode::from(2);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(code) => code,
        Err(_) => {
            eprintln!("{}", error_json("InternalFault", "unexpected internal error", "internal"));
            ExitCode::from(1)
        }
    }
}
