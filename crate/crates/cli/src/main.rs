mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "padkit", version, about = "Privacy-anomaly detection over SQL audit logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the main output here instead of stdout. `scenario` treats it
    /// as a directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct MiningArgs {
    /// JSON file with `identifiers`, `quasi_identifiers` and `sensitive`.
    #[arg(long)]
    qi_config: Option<PathBuf>,
    /// Largest quasi-identifier subset considered.
    #[arg(long, default_value_t = 3)]
    m_max: usize,
    /// Accepted k values as `lo:hi`.
    #[arg(long, default_value = "1:1000", value_parser = parse_k_range)]
    k_range: (usize, usize),
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Table as `name=path.csv`; repeatable. With tables, query logs are
    /// executed instead of reading response logs.
    #[arg(long = "table", value_parser = parse_table)]
    tables: Vec<(String, PathBuf)>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Abstract every query of a JSONL query log.
    Abstract { log: PathBuf },
    /// Mine a privacy profile from a response log (or a query log with --table).
    Mine {
        log: PathBuf,
        #[command(flatten)]
        mining: MiningArgs,
        #[command(flatten)]
        tables: TableArgs,
    },
    /// Build an n-gram profile from a query log.
    Profile {
        log: PathBuf,
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
    /// Count n-grams of `log_b` missing from `log_a` for a range of n.
    Tune {
        log_a: PathBuf,
        log_b: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_min: usize,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        /// Select the largest n with at most this many mismatches.
        #[arg(long)]
        threshold: Option<usize>,
    },
    /// Compare run-time logs with normative profiles or logs.
    Detect(DetectArgs),
    /// Execute queries, suppressing responses that violate a privacy profile.
    Enforce {
        log: PathBuf,
        #[command(flatten)]
        tables: TableArgs,
        /// Privacy profile file; without it every response is released.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        m_max: usize,
    },
    /// Replay a scripted scenario: hospital, differencing or census.
    Scenario {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        /// scenario.json with fixtures, seed, n, m_max and k_range.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long, value_parser = parse_k_range)]
        k_range: Option<(usize, usize)>,
    },
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Run-time response log (privacy side).
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Run-time query log (n-gram side).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Normative privacy profile file.
    #[arg(long)]
    privacy_profile: Option<PathBuf>,
    /// Normative response log, mined with --qi-config.
    #[arg(long)]
    norm_responses: Option<PathBuf>,
    /// Normative n-gram profile file.
    #[arg(long)]
    ngram_profile: Option<PathBuf>,
    /// Normative query log.
    #[arg(long)]
    norm_queries: Option<PathBuf>,
    /// Window size; defaults to the n-gram profile's, else 4.
    #[arg(long)]
    n: Option<usize>,
    /// Also write privacy anomalies as JSONL here.
    #[arg(long)]
    anomalies: Option<PathBuf>,
    #[command(flatten)]
    mining: MiningArgs,
}

fn parse_k_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("hi: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_table(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected name=path")?;
    if name.is_empty() {
        return Err("empty table name".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("padkit: {e}");
            ExitCode::from(e.code())
        }
    }
}
