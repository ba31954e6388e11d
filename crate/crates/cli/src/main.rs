//! `afqms`: build AF-algebra truncations, evaluate Lip-norms and run
//! convergence experiments. Every command writes one JSON record whose header
//! echoes the full configuration, so identical invocations give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afqms::cfrac::{
    baire_distance, box_product, convergents, es_beta, t_weight_enclosure, tail_bound, uhf_gamma, BaireSequence,
    BetaSource, Digit, IrrationalHandle,
};
use afqms::convergence::{
    approximant_family, ball_bound_scan, constants_convergence_scan, es_certificate, lip_convergence_scan,
    same_level_shape, uhf_certificate, CertificateOptions, ScanParameter, ScanResult,
};
use afqms::fdca::AlgebraElement;
use afqms::spectral::{lip_seminorm, LipMethod, LipOptions, AUTO_DENSE_LIMIT};
use afqms::tower::{es_tower, uhf_tower, verify_tower, Tower, VERIFY_TOLERANCE};
use afqms::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Serialize)]
#[command(
    name = "afqms",
    version,
    about = "Finite AF-algebra truncations with Lip-norms and convergence checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Continued-fraction data: digits, convergents, trace weights, betas, tail bounds.
    Cf(CfArgs),
    /// Tower descriptor and structural verification.
    Tower(TowerArgs),
    /// Lip-norm of an element read from a JSON file.
    Lip(LipArgs),
    /// Gap series along an approximant family (prefix kept, suffix swapped).
    Converge(ConvergeArgs),
    /// Tail-bound certificate comparing two parameters.
    Certificate(CertificateArgs),
}

/// Exactly one parameter presentation.
#[derive(Args, Serialize, Clone, Debug)]
struct ParamArgs {
    /// Quadratic surd "(a+b*sqrt(d))/c".
    #[arg(long)]
    surd: Option<String>,
    /// Digit stream "[r1,r2,...]" or "[prefix]periodic:[period]".
    #[arg(long)]
    digits: Option<String>,
    /// Decimal literal; digits beyond its precision are not trusted.
    #[arg(long)]
    decimal: Option<String>,
    /// Absolute precision 10^-p of --decimal (defaults to its digit count).
    #[arg(long)]
    precision: Option<u32>,
    /// UHF multiplicity sequence, same syntax as --digits.
    #[arg(long)]
    baire: Option<String>,
}

/// The second parameter of a certificate.
#[derive(Args, Serialize, Clone, Debug)]
struct VsArgs {
    #[arg(long)]
    vs_surd: Option<String>,
    #[arg(long)]
    vs_digits: Option<String>,
    #[arg(long)]
    vs_decimal: Option<String>,
    #[arg(long)]
    vs_precision: Option<u32>,
    #[arg(long)]
    vs_baire: Option<String>,
}

impl From<&VsArgs> for ParamArgs {
    fn from(v: &VsArgs) -> Self {
        ParamArgs {
            surd: v.vs_surd.clone(),
            digits: v.vs_digits.clone(),
            decimal: v.vs_decimal.clone(),
            precision: v.vs_precision,
            baire: v.vs_baire.clone(),
        }
    }
}

#[derive(Args, Serialize, Clone, Debug)]
struct NumericArgs {
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Relative convergence tolerance of the power method.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Report non-convergence instead of falling back to the dense method.
    #[arg(long)]
    no_fallback: bool,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Dense,
    Power,
    Auto,
}

impl NumericArgs {
    fn lip_options(&self) -> LipOptions {
        LipOptions {
            method: match self.method {
                MethodArg::Dense => LipMethod::Dense,
                MethodArg::Power => LipMethod::Power,
                MethodArg::Auto => LipMethod::Auto,
            },
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            allow_dense_fallback: !self.no_fallback,
        }
    }
}

#[derive(Args, Serialize, Debug)]
struct CfArgs {
    #[command(flatten)]
    param: ParamArgs,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct TowerArgs {
    #[command(flatten)]
    param: ParamArgs,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct LipArgs {
    #[command(flatten)]
    param: ParamArgs,
    #[arg(long)]
    level: usize,
    /// JSON element file: {"shape": [...], "blocks": [[[re, im], ...], ...]}.
    #[arg(long)]
    element: PathBuf,
    /// Also evaluate the embedded element at this higher level.
    #[arg(long)]
    check_coherence: Option<usize>,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum Quantity {
    /// Sharp constants c_N.
    Constants,
    /// L(a) for a fixed element.
    Lip,
    /// Unit-ball Hausdorff bound between level weights.
    Ball,
}

#[derive(Args, Serialize, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    param: ParamArgs,
    #[arg(long, value_enum, default_value_t = Quantity::Constants)]
    quantity: Quantity,
    #[arg(long)]
    level: usize,
    /// First approximant index j (digits kept from the limit).
    #[arg(long, default_value_t = 1)]
    from: usize,
    #[arg(long, default_value_t = 40)]
    to: usize,
    /// Repeating suffix appended after the kept digits.
    #[arg(long, default_value = "[2]")]
    suffix: String,
    /// Element file, required for --quantity lip.
    #[arg(long)]
    element: Option<PathBuf>,
    /// Flat CSV series: step-index, parameter-label, value, gap.
    #[arg(long)]
    #[serde(skip)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct CertificateArgs {
    #[command(flatten)]
    param: ParamArgs,
    #[command(flatten)]
    vs: VsArgs,
    #[arg(long)]
    epsilon: f64,
    /// Digits (or Baire entries) used for exact tail sums.
    #[arg(long, default_value_t = 40)]
    depth: usize,
    /// Samples for the heuristic middle term.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// A failure with its exit code: 2 input, 3 precision, 4 non-convergence,
/// 5 certificate failure, 1 anything else.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::RationalInput { .. }
            | Error::InvalidDigit { .. }
            | Error::InvalidInput(_)
            | Error::Parse(_)
            | Error::ShapeMismatch { .. }
            | Error::LevelOutOfRange { .. }
            | Error::EmptyCloud(_)
            | Error::Overflow(_) => 2,
            Error::PrecisionExhausted(_) => 3,
            Error::NonConvergence { .. } => 4,
            Error::AgreementTooShallow { .. } => 5,
            Error::DegenerateBasis { .. } | Error::InternalInconsistency(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

enum Param {
    Irrational(IrrationalHandle),
    Baire(BaireSequence),
}

impl Param {
    fn scan(self) -> ScanParameter {
        match self {
            Param::Irrational(h) => ScanParameter::EffrosShen(h),
            Param::Baire(b) => ScanParameter::Uhf(b),
        }
    }
}

fn resolve(p: &ParamArgs, flag_prefix: &str) -> CliResult<Param> {
    let given = [&p.surd, &p.digits, &p.decimal, &p.baire]
        .iter()
        .filter(|x| x.is_some())
        .count();
    if given != 1 {
        return Err(input_error(format!(
            "exactly one of --{flag_prefix}surd, --{flag_prefix}digits, --{flag_prefix}decimal, --{flag_prefix}baire is required"
        )));
    }
    if p.precision.is_some() && p.decimal.is_none() {
        return Err(input_error(format!(
            "--{flag_prefix}precision applies only to --{flag_prefix}decimal"
        )));
    }
    Ok(if let Some(s) = &p.surd {
        Param::Irrational(IrrationalHandle::parse_surd(s)?)
    } else if let Some(s) = &p.digits {
        Param::Irrational(IrrationalHandle::parse_digits(s)?)
    } else if let Some(s) = &p.decimal {
        Param::Irrational(IrrationalHandle::parse_decimal(s, p.precision)?)
    } else {
        Param::Baire(BaireSequence::parse(p.baire.as_deref().expect("counted above"))?)
    })
}

fn build_tower(p: &Param, depth: usize) -> CliResult<Tower> {
    Ok(match p {
        Param::Irrational(h) => es_tower(h, depth)?,
        Param::Baire(b) => uhf_tower(b, depth)?,
    })
}

fn read_element(path: &Path) -> CliResult<AlgebraElement> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    Ok(AlgebraElement::from_json(&text)?)
}

fn header(command: &str, config: &impl Serialize, numeric: &NumericArgs) -> Value {
    json!({
        "tool": "afqms",
        "command": command,
        "versions": { "afqms": afqms::VERSION, "afqms-cli": env!("CARGO_PKG_VERSION") },
        "config": config,
        "seed": numeric.seed,
        "tolerances": {
            "power_tol": numeric.tol,
            "power_max_iter": numeric.max_iter,
            "method": numeric.method,
            "dense_fallback": !numeric.no_fallback,
            "auto_dense_limit": AUTO_DENSE_LIMIT,
            "verify_tolerance": VERIFY_TOLERANCE,
            "t_weight_width": "2^-96/(q_n q_(n-1) + 1)",
        },
    })
}

fn emit(out: Option<&Path>, record: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(record).expect("JSON values always serialize") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: 1,
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_cf(args: &CfArgs) -> CliResult<Value> {
    let h = match resolve(&args.param, "")? {
        Param::Irrational(h) => h,
        Param::Baire(_) => return Err(input_error("cf expects --surd, --digits or --decimal")),
    };
    let digits = h.cf_expand(args.depth)?;
    let table = convergents(&digits)?;
    let mut rows = Vec::with_capacity(args.depth + 1);
    for n in 0..=args.depth {
        let mut row = json!({
            "n": n,
            "p": table.p(n).to_string(),
            "q": table.q(n).to_string(),
            "convergent": format!("{}/{}", table.p(n), table.q(n)),
        });
        if n >= 1 {
            row["digit"] = json!(digits[n - 1]);
            // Levels whose weight cannot be certified from the data are null.
            row["t_weight"] = match t_weight_enclosure(&h, &table, n) {
                Ok(iv) => json!({ "mid": iv.mid_f64(), "radius": iv.radius_f64(), "exact_mid": iv.mid().to_string() }),
                Err(Error::PrecisionExhausted(_)) => Value::Null,
                Err(e) => return Err(e.into()),
            };
            row["beta"] = json!(es_beta(&table, n)?.to_string());
            let tb = tail_bound(BetaSource::EffrosShen(&table), n, args.depth)?;
            row["tail"] = json!({
                "partial": tb.partial.to_string(),
                "remainder": tb.remainder.to_string(),
                "total": tb.total_f64(),
            });
        }
        rows.push(row);
    }
    Ok(json!({
        "header": header("cf", args, &args.numeric),
        "parameter": h.label(),
        "digits": digits,
        "rows": rows,
    }))
}

fn cmd_tower(args: &TowerArgs) -> CliResult<Value> {
    let p = resolve(&args.param, "")?;
    let t = build_tower(&p, args.depth)?;
    let report = verify_tower(&t);
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({ "level": c.level, "name": c.name, "passed": c.passed, "residual": c.residual, "skipped": c.skipped }))
        .collect();
    let mut extra = json!({});
    if let Param::Baire(b) = &p {
        let boxes: CliResult<Vec<String>> = (0..=args.depth).map(|n| Ok(box_product(b, n)?.to_string())).collect();
        let gammas: CliResult<Vec<String>> = (1..=args.depth).map(|n| Ok(uhf_gamma(b, n)?.to_string())).collect();
        extra = json!({ "box_products": boxes?, "gammas": gammas? });
    }
    Ok(json!({
        "header": header("tower", args, &args.numeric),
        "tower": t.descriptor(),
        "uhf": extra,
        "verification": { "passed": report.passed(), "max_residual": report.max_residual(), "checks": checks },
    }))
}

fn cmd_lip(args: &LipArgs) -> CliResult<Value> {
    let p = resolve(&args.param, "")?;
    let depth = args.check_coherence.unwrap_or(args.level).max(args.level).max(1);
    if args.check_coherence.is_some_and(|m| m < args.level) {
        return Err(input_error("--check-coherence must not be below --level"));
    }
    let t = build_tower(&p, depth)?;
    let a = read_element(&args.element)?;
    let opts = args.numeric.lip_options();
    let est = lip_seminorm(&t, args.level, &a, &opts)?;
    let mut record = json!({
        "header": header("lip", args, &args.numeric),
        "level": args.level,
        "shape": t.shape(args.level)?.dims(),
        "gns_dim": t.shape(args.level)?.linear_dim(),
        "estimate": est,
    });
    if let Some(m) = args.check_coherence {
        let up = t.embed_through(args.level, m, &a)?;
        let high = lip_seminorm(&t, m, &up, &opts)?;
        let gap = if est.value == 0.0 {
            (high.value - est.value).abs()
        } else {
            (high.value - est.value).abs() / est.value
        };
        record["coherence"] = json!({ "level": m, "estimate": high, "relative_gap": gap });
    }
    Ok(record)
}

fn parse_suffix(s: &str) -> CliResult<Vec<Digit>> {
    let v: Vec<Digit> = serde_json::from_str(s).map_err(|e| input_error(format!("bad --suffix {s:?}: {e}")))?;
    if v.is_empty() {
        return Err(input_error("--suffix must be non-empty"));
    }
    Ok(v)
}

fn write_csv(path: &Path, header: &Value, scan: &ScanResult) -> CliResult<()> {
    let io = |e: std::io::Error| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    };
    let mut text = String::new();
    text.push_str(&format!(
        "# {}\n",
        serde_json::to_string(header).expect("JSON values always serialize")
    ));
    text.push_str(&format!(
        "# quantity={} level={} limit={} limit_value={}\n",
        scan.quantity, scan.level, scan.limit_label, scan.limit_value
    ));
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = w
        .write_record(["step-index", "parameter-label", "value", "gap"])
        .and_then(|_| {
            scan.steps.iter().try_for_each(|s| {
                w.write_record([
                    s.index.to_string(),
                    s.label.clone(),
                    format!("{:e}", s.value),
                    format!("{:e}", s.gap),
                ])
            })
        })
        .map_err(|e| io(e.into()))
        .and_then(|_| w.into_inner().map_err(|e| io(e.into_error())))?;
    text.push_str(&String::from_utf8(rows).expect("CSV of UTF-8 fields is UTF-8"));
    fs::write(path, text).map_err(io)
}

fn cmd_converge(args: &ConvergeArgs) -> CliResult<Value> {
    if args.from > args.to {
        return Err(input_error("--from must not exceed --to"));
    }
    let limit = resolve(&args.param, "")?.scan();
    let suffix = parse_suffix(&args.suffix)?;
    let family = approximant_family(&limit, args.from..=args.to, &suffix)?;
    // Approximants that diverge from the limit before the level have another
    // level shape and are left out of the series.
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (j, p) in family {
        if same_level_shape(&limit, &p, args.level)? {
            kept.push((j, p));
        } else {
            skipped.push(j);
        }
    }
    let mut head = header("converge", args, &args.numeric);
    head["skipped_indices"] = json!(skipped);
    if let ScanParameter::Uhf(b) = &limit {
        let distances: Vec<Value> = kept
            .iter()
            .map(|(j, p)| match p {
                ScanParameter::Uhf(q) => json!({ "index": j, "baire_distance": baire_distance(b, q).value }),
                ScanParameter::EffrosShen(_) => Value::Null,
            })
            .collect();
        head["baire_distances"] = json!(distances);
    }
    let scan = match args.quantity {
        Quantity::Constants => constants_convergence_scan(&limit, &kept, args.level)?,
        Quantity::Ball => ball_bound_scan(&limit, &kept, args.level)?,
        Quantity::Lip => {
            let path = args
                .element
                .as_deref()
                .ok_or_else(|| input_error("--quantity lip needs --element"))?;
            let a = read_element(path)?;
            lip_convergence_scan(&limit, &kept, args.level, &a, &args.numeric.lip_options())?
        }
    };
    if let Some(path) = &args.csv {
        write_csv(path, &head, &scan)?;
    }
    Ok(json!({ "header": head, "scan": scan }))
}

fn cmd_certificate(args: &CertificateArgs) -> CliResult<Value> {
    let a = resolve(&args.param, "")?;
    let b = resolve(&(&args.vs).into(), "vs-")?;
    let opts = CertificateOptions {
        depth: args.depth,
        samples: args.samples,
        seed: args.numeric.seed,
        ..CertificateOptions::default()
    };
    let cert = match (&a, &b) {
        (Param::Irrational(x), Param::Irrational(y)) => es_certificate(x, y, args.epsilon, &opts)?,
        (Param::Baire(x), Param::Baire(y)) => uhf_certificate(x, y, args.epsilon, &opts)?,
        _ => {
            return Err(input_error(
                "both parameters must be irrationals or both Baire sequences",
            ))
        }
    };
    let mut head = header("certificate", args, &args.numeric);
    if let Some(d) = cert.baire_distance {
        head["baire_distance"] = json!(d);
    }
    Ok(json!({
        "header": head,
        "rigorous": {
            "n1": cert.n1,
            "n2": cert.n2,
            "depth": cert.depth,
            "epsilon": cert.epsilon,
            "dominating_tail": cert.dominating_tail,
            "tails": cert.tails,
            "tails_total": cert.tails_total,
            "tail_budget": cert.tail_budget,
        },
        "heuristic": { "middle": cert.middle, "note": cert.middle_note },
        "parameters": cert.parameters,
        "kind": cert.kind,
        "status": cert.status,
    }))
}

fn run(cli: &Cli) -> CliResult<()> {
    let (record, out) = match &cli.command {
        Command::Cf(a) => (cmd_cf(a)?, &a.out),
        Command::Tower(a) => (cmd_tower(a)?, &a.out),
        Command::Lip(a) => (cmd_lip(a)?, &a.out),
        Command::Converge(a) => (cmd_converge(a)?, &a.out),
        Command::Certificate(a) => (cmd_certificate(a)?, &a.out),
    };
    emit(out.as_deref(), &record)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
