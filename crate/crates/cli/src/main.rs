use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wapprox::artifact::{self, ArtifactError};
use wapprox::config::{self, ConfigError, ExperimentConfig};
use wapprox::criterion::{self, CriterionError, DEFAULT_MAX_DEPTH, DEFAULT_TAIL_TOL};
use wapprox::dan_models::{DanError, DistributionModel};
use wapprox::empirical::{ks_distance, EmpiricalError};
use wapprox::experiments::{self, ConvergenceSpec, ExperimentError, Functional, NormKind};
use wapprox::processes::{
    self, FunctionalKind, FunctionalSpec, Normalization, PathSample, ProcessError,
};
use wapprox::seeding::Seeder;
use wapprox::weights::{WeightError, WeightFunction};
use wapprox::wiener::{self, WienerError, WienerGrid, DEFAULT_EPS_FLOOR, DEFAULT_M, DEFAULT_R};

const EXIT_VALIDATION: u8 = 2;
const EXIT_REFUSAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "wapprox",
    version,
    about = "Weighted self-normalized partial-sum processes: criteria, norming and Monte Carlo"
)]
struct Cli {
    /// Worker threads for replicate parallelism (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify a weight by its integral criterion I(q, c).
    ClassifyWeight {
        #[arg(long)]
        weight: String,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
        tail_tol: f64,
        /// Also decide finiteness of the L_p criterion for this p.
        #[arg(long)]
        lp: Option<f64>,
    },
    /// Print eta_j, l(eta_j), b_j^2 and sigma*_j as CSV.
    TabulateNorming {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "1,10,100,1000,10000")]
        js: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a Wiener limit functional and write it as an artifact.
    SimulateLimit {
        #[arg(long)]
        weight: String,
        #[arg(long, value_enum, default_value_t = Kind::Sup)]
        kind: Kind,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long, default_value_t = DEFAULT_R)]
        r: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_FLOOR)]
        eps_floor: f64,
    },
    /// Run a functional-convergence experiment.
    SimulateProcess(RunArgs),
    /// KS distance between two artifacts of the same functional.
    Compare { a: PathBuf, b: PathBuf },
    /// Window sups for the loglog weight and its contrast, plus the l-ratio check.
    Counterexample {
        #[arg(long, default_value = "1000,1000000")]
        ns: String,
        #[arg(long, default_value_t = 5000)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an L_p convergence experiment.
    LpExperiment(RunArgs),
    /// Deterministic (1/n) sum (sigma*_j / sqrt(l(eta_n)) - 1)^2 per n.
    #[command(alias = "ad188")]
    SigmaRatio {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "100,10000,1000000")]
        ns: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fraction of replicates with |V_n^2/b_n^2 - 1| <= eps.
    VnBn {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "1000,10000")]
        ns: String,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one functional on an explicit increment vector.
    EvalPath {
        /// Comma-separated increments.
        #[arg(long, allow_hyphen_values = true)]
        increments: String,
        /// `sup:<tau>` or `lp:<p>`.
        #[arg(long)]
        functional: String,
        #[arg(long, default_value = "const:1")]
        weight: String,
        /// `self`, `student` or `bn:<b_n>`.
        #[arg(long, default_value = "self")]
        normalization: String,
    },
    /// Render summary CSVs (files or run directories) as a markdown report.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sup,
    Lp,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags given on the command line override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    replicates: Option<i64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    tau_rule: Option<String>,
    #[arg(long)]
    normalization: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(m: impl fmt::Display) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: m.to_string(),
        }
    }
    fn refusal(m: impl fmt::Display) -> Self {
        Self {
            code: EXIT_REFUSAL,
            message: m.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("I/O error: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::validation(e)
    }
}

impl From<WeightError> for Failure {
    fn from(e: WeightError) -> Self {
        Self::validation(e)
    }
}

impl From<EmpiricalError> for Failure {
    fn from(e: EmpiricalError) -> Self {
        Self::validation(e)
    }
}

impl From<DanError> for Failure {
    fn from(e: DanError) -> Self {
        match e {
            DanError::NoBracket { .. } => Self::refusal(e),
            _ => Self::validation(e),
        }
    }
}

impl From<CriterionError> for Failure {
    fn from(e: CriterionError) -> Self {
        match e {
            CriterionError::Domain(_) => Self::validation(e),
            _ => Self::refusal(e),
        }
    }
}

impl From<ProcessError> for Failure {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::Domain(_) | ProcessError::EmptyPath => Self::validation(e),
            _ => Self::refusal(e),
        }
    }
}

impl From<WienerError> for Failure {
    fn from(e: WienerError) -> Self {
        match e {
            WienerError::Refused(_) => Self::refusal(e),
            WienerError::Criterion(c) => c.into(),
            _ => Self::validation(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Refused(_) => Self::refusal(e),
            ExperimentError::Invalid(_) => Self::validation(e),
            ExperimentError::Norming(d) => d.into(),
            ExperimentError::Criterion(c) => c.into(),
            ExperimentError::Wiener(w) => w.into(),
            ExperimentError::Process(p) => p.into(),
            ExperimentError::Empirical(m) => m.into(),
        }
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Io(io) => io.into(),
            other => Self::validation(other),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::ClassifyWeight {
            weight,
            max_depth,
            tail_tol,
            lp,
        } => classify_weight(&weight, max_depth, tail_tol, lp),
        Cmd::TabulateNorming { model, js, out } => {
            let model = DistributionModel::parse(&model)?;
            let table = model.norming_table(&parse_list(&js)?)?;
            emit(&table.to_csv(), out.as_deref())
        }
        Cmd::SimulateLimit {
            weight,
            kind,
            p,
            replicates,
            seed,
            out,
            m,
            r,
            eps_floor,
        } => simulate_limit(
            &weight,
            kind,
            p,
            replicates,
            seed,
            &out,
            WienerGrid::new(m, r, eps_floor)?,
        ),
        Cmd::SimulateProcess(args) => simulate_process(args, None),
        Cmd::LpExperiment(args) => simulate_process(args, Some("lp")),
        Cmd::Compare { a, b } => compare(&a, &b),
        Cmd::Counterexample {
            ns,
            replicates,
            seed,
            alpha,
            out,
        } => counterexample(&parse_list(&ns)?, replicates, seed, alpha, out.as_deref()),
        Cmd::SigmaRatio { model, ns, out } => {
            let model = DistributionModel::parse(&model)?;
            let rows = experiments::run_sigma_ratio_check(&model, &parse_list(&ns)?)?;
            let mut csv = String::from("n,value\n");
            for (n, v) in rows {
                csv.push_str(&format!("{n},{v:e}\n"));
            }
            emit(&csv, out.as_deref())
        }
        Cmd::VnBn {
            model,
            ns,
            replicates,
            seed,
            eps,
            out,
        } => {
            let model = DistributionModel::parse(&model)?;
            let rows = experiments::run_vn_bn_concentration(
                &model,
                &parse_list(&ns)?,
                replicates,
                seed,
                eps,
            )?;
            let mut csv = String::from("n,b2,fraction\n");
            for r in rows {
                csv.push_str(&format!("{},{:e},{}\n", r.n, r.b2, r.fraction));
            }
            emit(&csv, out.as_deref())
        }
        Cmd::EvalPath {
            increments,
            functional,
            weight,
            normalization,
        } => eval_path(&increments, &functional, &weight, &normalization),
        Cmd::Report { inputs, out } => report(&inputs, out.as_deref()),
    }
}

fn parse_list(s: &str) -> Result<Vec<u64>, Failure> {
    config::parse_ns(s).map_err(Failure::validation)
}

/// Writes to `out` if given, else to stdout.
fn emit(text: &str, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn classify_weight(weight: &str, max_depth: usize, tail_tol: f64, lp: Option<f64>) -> Outcome {
    let w = WeightFunction::parse(weight)?;
    let validation = w.validate_class_q(512)?;
    let verdict =
        criterion::classify_criterion(&w, &criterion::default_c_grid(), max_depth, tail_tol)?;
    let lp_verdict = lp
        .map(|p| {
            criterion::lp_criterion(&w, p, max_depth, tail_tol)
                .map(|v| json!({ "p": p, "verdict": v }))
        })
        .transpose()?;
    let out = json!({
        "weight": w.id(),
        "verdict": verdict.verdict,
        "class_q": validation.passed(),
        "tested_c": verdict.tested_c,
        "lp": lp_verdict,
    });
    print!("{}", pretty(&out));
    Ok(())
}

fn simulate_limit(
    weight: &str,
    kind: Kind,
    p: f64,
    replicates: usize,
    seed: u64,
    out: &Path,
    grid: WienerGrid,
) -> Outcome {
    let w = WeightFunction::parse(weight)?;
    let functional = match kind {
        Kind::Sup => Functional::Sup {
            tau_rule: experiments::TauRule::OneOverN,
        },
        Kind::Lp => Functional::Lp { p },
    };
    let seeder = Seeder::new(seed, "limit")
        .child(w.id())
        .child(&functional.label());
    let sample = match kind {
        Kind::Sup => wiener::limit_sup_functional(&w, &grid, &seeder, replicates)?,
        Kind::Lp => wiener::limit_lp_functional(&w, p, &grid, &seeder, replicates)?,
    };
    let cfg = json!({
        "command": "simulate-limit",
        "weight": weight,
        "functional": functional,
        "replicates": replicates,
        "seed": seed,
        "grid": { "m": grid.m(), "r": grid.r(), "eps_floor": grid.eps_floor() },
    });
    artifact::write_distribution(&sample.distribution, out, Some(&cfg))?;
    let summary = json!({
        "out": out,
        "count": sample.distribution.count(),
        "median": sample.distribution.median()?,
        "refinement": sample.diagnostic,
        "tail_bias_bound": sample.tail_bias_bound,
    });
    print!("{}", pretty(&summary));
    Ok(())
}

fn resolve_config(
    args: &RunArgs,
    force_functional: Option<&str>,
) -> Result<ExperimentConfig, Failure> {
    let mut table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| Failure::validation(format!("config parse error: {e}")))?
        }
        None => toml::Table::new(),
    };
    let mut set = |k: &str, v: Option<toml::Value>| {
        if let Some(v) = v {
            table.insert(k.to_string(), v);
        }
    };
    set("model", args.model.clone().map(toml::Value::String));
    set("weight", args.weight.clone().map(toml::Value::String));
    set("ns", args.ns.clone().map(toml::Value::String));
    set("replicates", args.replicates.map(toml::Value::Integer));
    set("p", args.p.map(toml::Value::Float));
    set("tau_rule", args.tau_rule.clone().map(toml::Value::String));
    set(
        "normalization",
        args.normalization.clone().map(toml::Value::String),
    );
    set(
        "output_dir",
        args.out
            .as_ref()
            .map(|p| toml::Value::String(p.display().to_string())),
    );
    set(
        "functional",
        force_functional.map(|f| toml::Value::String(f.to_string())),
    );
    if let Some(seed) = args.seed {
        // seeds above i64::MAX do not fit a TOML integer
        let v = i64::try_from(seed)
            .map_err(|_| Failure::validation("seed: must be at most 2^63 - 1"))?;
        table.insert("seed".into(), toml::Value::Integer(v));
    }
    let text = toml::to_string(&table).map_err(|e| Failure::validation(e.to_string()))?;
    Ok(config::parse_config(&text)?)
}

fn simulate_process(args: RunArgs, force_functional: Option<&str>) -> Outcome {
    let cfg = resolve_config(&args, force_functional)?;
    let spec = ConvergenceSpec {
        model: DistributionModel::parse(&cfg.model)?,
        weight: WeightFunction::parse(&cfg.weight)?,
        functional: cfg.functional,
        normalization: cfg.normalization,
        ns: cfg.ns.clone(),
        replicates: cfg.replicates,
        seed: cfg.seed,
        grid: WienerGrid::default(),
    };
    let run = experiments::run_functional_convergence(&spec)?;
    let provenance = json!({ "config": cfg.to_json(), "code_version": wapprox::CODE_VERSION });
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    artifact::write_distribution(&run.limit, &dir.join("limit.dist"), Some(&provenance))?;
    for (n, d) in cfg.ns.iter().zip(&run.samples) {
        artifact::write_distribution(d, &dir.join(format!("n{n}.dist")), Some(&provenance))?;
    }
    fs::write(dir.join("summary.csv"), run.report.to_csv())?;
    let rows: String = run
        .report
        .rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect();
    fs::write(dir.join("rows.jsonl"), rows)?;
    fs::write(
        dir.join("report.json"),
        pretty(&json!({ "report": run.report, "provenance": provenance })),
    )?;
    print!("{}", run.report.to_csv());
    println!("# {}", run.report.verdict_hint);
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Outcome {
    let (_, da) = artifact::read_distribution(a)?;
    let (_, db) = artifact::read_distribution(b)?;
    for (field, x, y) in [
        ("functional", &da.meta.functional, &db.meta.functional),
        ("weight", &da.meta.weight, &db.meta.weight),
    ] {
        if x != y {
            return Err(Failure::refusal(format!(
                "artifacts differ in {field}: {x:?} vs {y:?}"
            )));
        }
    }
    let (ma, mb) = (da.count() as f64, db.count() as f64);
    let out = json!({
        "ks": ks_distance(&da, &db)?,
        "count_a": da.count(),
        "count_b": db.count(),
        "noise_floor": 2.0 * ((ma + mb) / (ma * mb)).sqrt(),
        "functional": da.meta.functional,
        "weight": da.meta.weight,
    });
    print!("{}", pretty(&out));
    Ok(())
}

fn counterexample(
    ns: &[u64],
    replicates: usize,
    seed: u64,
    alpha: f64,
    out: Option<&Path>,
) -> Outcome {
    let rep = experiments::run_counterexample(ns, replicates, seed, alpha)?;
    let mut windows = String::from("n,replicates,p_loglog,p_contrast,lower_bound\n");
    for w in &rep.windows {
        windows.push_str(&format!(
            "{},{},{},{},{:e}\n",
            w.n, w.replicates, w.p_loglog, w.p_contrast, w.lower_bound
        ));
    }
    let mut ratios = String::from("n,max_ratio,bound\n");
    for r in &rep.ratios {
        ratios.push_str(&format!("{},{:e},{:e}\n", r.n, r.max_ratio, r.bound));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("windows.csv"), &windows)?;
        fs::write(dir.join("ratios.csv"), &ratios)?;
        fs::write(dir.join("counterexample.json"), pretty(&rep))?;
    }
    print!("{windows}\n{ratios}");
    Ok(())
}

fn eval_path(increments: &str, functional: &str, weight: &str, normalization: &str) -> Outcome {
    let xs = increments
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::validation(format!("increment `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = PathSample::new(xs)?;
    let (name, arg) = functional
        .split_once(':')
        .ok_or_else(|| Failure::validation("functional must be sup:<tau> or lp:<p>"))?;
    let arg: f64 = arg.trim().parse().map_err(|_| {
        Failure::validation(format!("functional parameter `{arg}` is not a number"))
    })?;
    let kind = match name {
        "sup" => FunctionalKind::WeightedSup { tau: arg },
        "lp" => FunctionalKind::WeightedLp { p: arg },
        other => return Err(Failure::validation(format!("unknown functional `{other}`"))),
    };
    let normalization = match normalization.split_once(':') {
        Some(("bn", b)) => Normalization::ByBn(
            b.parse()
                .map_err(|_| Failure::validation(format!("b_n `{b}` is not a number")))?,
        ),
        _ => match config::parse_normalization(normalization).map_err(Failure::validation)? {
            NormKind::BySelf => Normalization::BySelf,
            NormKind::ByStudent => Normalization::ByStudent,
            NormKind::ByBn => {
                return Err(Failure::validation(
                    "bn normalization needs a value: bn:<b_n>",
                ))
            }
        },
    };
    let spec = FunctionalSpec {
        kind,
        weight: WeightFunction::parse(weight)?,
        normalization,
    };
    println!("{}", processes::evaluate(&path, &spec)?);
    Ok(())
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> Outcome {
    let mut md = String::from("# wapprox report\n");
    for input in inputs {
        let csv_path = if input.is_dir() {
            input.join("summary.csv")
        } else {
            input.clone()
        };
        let text = fs::read_to_string(&csv_path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Failure::validation(format!("{} is empty", csv_path.display())))?
            .split(',')
            .collect();
        md.push_str(&format!("\n## {}\n\n", csv_path.display()));
        let hint = csv_path
            .parent()
            .map(|d| d.join("report.json"))
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["report"]["verdict_hint"].as_str().map(str::to_string));
        if let Some(h) = hint {
            md.push_str(&format!("{h}\n\n"));
        }
        md.push_str(&format!("| {} |\n", header.join(" | ")));
        md.push_str(&format!("|{}\n", "---|".repeat(header.len())));
        for line in lines {
            let cells: Vec<String> = line.split(',').map(format_cell).collect();
            if cells.len() != header.len() {
                return Err(Failure::validation(format!(
                    "{}: row `{line}` has {} cells, header has {}",
                    csv_path.display(),
                    cells.len(),
                    header.len()
                )));
            }
            md.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }
    emit(&md, out)
}

/// Integers verbatim, other numbers to four significant digits.
fn format_cell(s: &str) -> String {
    let s = s.trim();
    if s.parse::<i64>().is_ok() {
        return s.to_string();
    }
    match s.parse::<f64>() {
        Ok(v) if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) => format!("{v:.3e}"),
        Ok(v) => format!("{v:.4}"),
        Err(_) => s.to_string(),
    }
}
