use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use kmachine::bench::{self, BenchSpec};
use kmachine::generate::{generate, Distribution, GenSpec};
use kmachine::{
    Algorithm, Dataset, Error, LabelMode, Metric, PartitionPolicy, Point, PointId, QueryRequest, SimOptions,
};

#[derive(Parser)]
#[command(name = "kmachine", version, about = "k-machine model simulator for distributed selection and nearest neighbors")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Find the l nearest neighbors of one query point.
    Query(QueryArgs),
    /// Select the l smallest distance keys with no local truncation.
    Select(QueryArgs),
    /// Sweep parameters and record every trial.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(args_override_self = true)]
struct GenArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Machine count used to lay out point ids.
    #[arg(long, default_value_t = 16)]
    k: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    distribution: Distribution,
    /// Attach random labels in 0..classes.
    #[arg(long)]
    classes: Option<u32>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value file supplying defaults for any flag above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct QueryArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated query coordinates.
    #[arg(long, allow_hyphen_values = true)]
    query: String,
    #[arg(long)]
    l: u64,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value = "knn")]
    algo: Algorithm,
    #[arg(long, default_value = "uniform")]
    partition: PartitionPolicy,
    #[arg(long, default_value = "classify")]
    label_mode: LabelMode,
    /// Compare against the brute-force answer.
    #[arg(long)]
    verify: bool,
    /// Write the delivered-message log as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct BenchArgs {
    /// Comma-separated machine counts; `2^x` is accepted.
    #[arg(long, default_value = "16")]
    k: String,
    #[arg(long, default_value = "1024")]
    l: String,
    #[arg(long, default_value = "2^18")]
    n: String,
    #[arg(long, default_value = "1")]
    d: String,
    #[arg(long, default_value_t = 30)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    /// Comma-separated subset of knn, baseline, selection.
    #[arg(long, default_value = "knn,baseline")]
    algo: String,
    #[arg(long, default_value = "uniform")]
    distribution: Distribution,
    #[arg(long, default_value = "uniform")]
    partition: PartitionPolicy,
    /// Check every trial against the oracle (default: only up to 10^6 points).
    #[arg(long, conflicts_with = "no_verify")]
    verify: bool,
    #[arg(long)]
    no_verify: bool,
    /// Per-trial CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cell aggregates and the baseline/knn ratio table as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Protocol(String),
    Incorrect(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Protocol(_) => 3,
            Failure::Incorrect(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Protocol(m) | Failure::Incorrect(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Sim(_) => Failure::Protocol(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let expanded = match t.split_once('^') {
                Some((base, exp)) => {
                    let base: u64 = base.parse().map_err(|_| Failure::Usage(format!("bad number `{t}`")))?;
                    let exp: u32 = exp.parse().map_err(|_| Failure::Usage(format!("bad number `{t}`")))?;
                    base.checked_pow(exp).ok_or_else(|| Failure::Usage(format!("`{t}` overflows")))?.to_string()
                }
                None => t.to_string(),
            };
            expanded.parse().map_err(|_| Failure::Usage(format!("bad value `{t}`")))
        })
        .collect()
}

fn parse_query(s: &str) -> Result<Point, Failure> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<i64>().map_err(|_| Failure::Usage(format!("bad query coordinate `{c}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Point::new(PointId::MAX, coords))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_failure(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let spec = GenSpec { distribution: args.distribution, classes: args.classes, ..GenSpec::new(args.n, args.d, args.k, args.seed) };
    let ds = generate(&spec)?;
    match &args.out {
        Some(p) => ds.write_csv(p)?,
        None => ds.to_writer(io::stdout().lock())?,
    }
    Ok(())
}

fn query(args: QueryArgs, force: Option<Algorithm>) -> Result<(), Failure> {
    let ds = Dataset::read_csv(&args.dataset)?;
    let q = parse_query(&args.query)?;
    let req = QueryRequest {
        metric: args.metric,
        algo: force.unwrap_or(args.algo),
        partition: args.partition,
        verify: args.verify,
        label_mode: args.label_mode,
        sim: SimOptions { record_log: args.log.is_some(), ..SimOptions::default() },
        ..QueryRequest::new(args.k, args.l, args.seed)
    };
    let (result, outcome) = kmachine::run_query(&ds, &q, &req)?;
    if let Some(path) = &args.log {
        let mut w = output(Some(path))?;
        writeln!(w, "round,kind,src,dst").map_err(|e| io_failure(path, e))?;
        for m in outcome.log.iter().flatten() {
            writeln!(w, "{},{},{},{}", m.round, m.message.kind, m.src, m.dst).map_err(|e| io_failure(path, e))?;
        }
        w.flush().map_err(|e| io_failure(path, e))?;
    }
    let text = serde_json::to_string_pretty(&result).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| Failure::Usage(e.to_string()))?;
    if result.correct == Some(false) {
        return Err(Failure::Incorrect("output differs from the brute-force answer".into()));
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let spec = BenchSpec {
        ks: parse_list(&args.k)?,
        ells: parse_list(&args.l)?,
        ns: parse_list(&args.n)?,
        ds: parse_list(&args.d)?,
        trials: args.trials,
        seed: args.seed,
        metric: args.metric,
        algos: args.algo.split(',').map(|a| a.trim().parse()).collect::<Result<_, Error>>()?,
        distribution: args.distribution,
        partition: args.partition,
        verify: if args.verify {
            Some(true)
        } else if args.no_verify {
            Some(false)
        } else {
            None
        },
    };
    let reports = bench::run_bench(&spec)?;
    let mut w = output(args.out.as_deref())?;
    bench::write_csv(&reports, &mut w).map_err(|e| Failure::Usage(e.to_string()))?;
    w.flush().map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(path) = &args.summary {
        let text = serde_json::to_string_pretty(&bench::summarize(&reports)).map_err(|e| Failure::Usage(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| io_failure(path, e))?;
    }
    let bad = bench::failures(&reports);
    if let Some(first) = bad.first() {
        return Err(Failure::Incorrect(format!(
            "{} incorrect trial(s), first at k={} l={} n={} algo={} trial={}",
            bad.len(),
            first.k,
            first.l,
            first.n,
            first.algo,
            first.trial
        )));
    }
    Ok(())
}

/// Expands `--config FILE` into flags placed ahead of the real ones, so the
/// command line wins.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().ok_or_else(|| Failure::Usage("--config needs a path".into()))?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", i + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => {
                extra.push(flag);
                extra.push(v.to_string());
            }
        }
    }
    if argv.len() >= 2 {
        argv.splice(2..2, extra);
    }
    Ok(argv)
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Query(a) => query(a, None),
        Cmd::Select(a) => query(a, Some(Algorithm::Selection)),
        Cmd::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
