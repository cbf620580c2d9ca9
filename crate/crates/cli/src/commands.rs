use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use padkit::engine::{load_csv, Database, EngineError, Response, ResponseLog, ResponseRecord};
use padkit::jsonl::{self, JsonlError};
use padkit::ngram::{compare, select_n, tune_n, Incident, MismatchReport, NGramProfile, TemplateLog};
use padkit::privacy::{
    detect_log, mine_profile, Guard, MiningParams, PrivacyAnomaly, ProfileFile, QiConfig,
    SuppressionReason,
};
use padkit::sqlabs::{abstract_query, RawQuery};
use padkit::workload::{run_scenario, Manifest, ScenarioResult, Summary, WorkloadError};

use crate::{Cli, Command, DetectArgs, Format, MiningArgs, TableArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ANOMALIES: u8 = 3;
pub const EXIT_ASSERTION: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::Io(_) => CliError::Io(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn workload_err(e: WorkloadError) -> CliError {
    match e {
        WorkloadError::Engine(EngineError::Io(_)) => CliError::Io(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    jsonl::read_numbered(BufReader::new(file)).map_err(|e| match e {
        JsonlError::Parse { line, source } => CliError::Input(format!("{}: line {line}: {source}", path.display())),
        JsonlError::Io(e) => io_err(path, e),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_queries(path: &Path) -> Result<Vec<RawQuery>, CliError> {
    let numbered: Vec<(usize, RawQuery)> = read_jsonl(path)?;
    for (line, q) in &numbered {
        abstract_query(q).map_err(|e| CliError::Input(format!("{}: line {line}: {e}", path.display())))?;
    }
    Ok(numbered.into_iter().map(|(_, q)| q).collect())
}

fn read_responses(path: &Path) -> Result<ResponseLog, CliError> {
    let records: Vec<(usize, ResponseRecord)> = read_jsonl(path)?;
    Ok(ResponseLog::from_records(records.into_iter().map(|(_, r)| r).collect()))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn qi_config(path: Option<&Path>) -> Result<Option<QiConfig>, CliError> {
    path.map(|p| {
        let cfg: QiConfig = read_json(p)?;
        cfg.normalized()
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    })
    .transpose()
}

fn mining_params(args: &MiningArgs) -> Result<MiningParams, CliError> {
    MiningParams::new(args.m_max, args.k_range.0, args.k_range.1).map_err(|e| CliError::Input(e.to_string()))
}

fn database(tables: &TableArgs) -> Result<Database, CliError> {
    tables.tables.iter().try_fold(Database::new(), |db, (name, path)| {
        Ok(db.with_table(load_csv(path, name).map_err(engine_err)?))
    })
}

/// Response log of `path`: executed against `--table`s when any are
/// given, otherwise read as a response log.
fn responses(path: &Path, tables: &TableArgs) -> Result<ResponseLog, CliError> {
    if tables.tables.is_empty() {
        read_responses(path)
    } else {
        database(tables)?.run_log(&read_queries(path)?).map_err(engine_err)
    }
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    let out = cli.out.as_deref();
    let format = cli.format;
    match cli.command {
        Command::Abstract { log } => cmd_abstract(&log, out, format),
        Command::Mine { log, mining, tables } => cmd_mine(&log, &mining, &tables, out, format),
        Command::Profile { log, n } => cmd_profile(&log, n, out, format),
        Command::Tune {
            log_a,
            log_b,
            n_min,
            n_max,
            threshold,
        } => cmd_tune(&log_a, &log_b, n_min, n_max, threshold, out, format),
        Command::Detect(args) => cmd_detect(&args, out, format),
        Command::Enforce {
            log,
            tables,
            profile,
            m_max,
        } => cmd_enforce(&log, &tables, profile.as_deref(), m_max, out, format),
        Command::Scenario {
            name,
            seed,
            manifest,
            n,
            m_max,
            k_range,
        } => {
            let mut m = match manifest {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    Manifest::parse(&text, path.parent().unwrap_or(Path::new("")))
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
                }
                None => Manifest::default(),
            };
            m.seed = seed.unwrap_or(m.seed);
            m.n = n.unwrap_or(m.n);
            m.m_max = m_max.unwrap_or(m.m_max);
            m.k_range = k_range.unwrap_or(m.k_range);
            cmd_scenario(&name, &m, out, format)
        }
    }
}

fn cmd_abstract(log: &Path, out: Option<&Path>, format: Format) -> Result<u8, CliError> {
    let queries: Vec<(usize, RawQuery)> = read_jsonl(log)?;
    let mut text = String::new();
    for (line, q) in &queries {
        let abs = abstract_query(q).map_err(|e| CliError::Input(format!("{}: line {line}: {e}", log.display())))?;
        match format {
            Format::Json => text.push_str(&serde_json::to_string(&abs).expect("serializable")),
            Format::Text => text.push_str(&abs.template),
        }
        text.push('\n');
    }
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_mine(
    log: &Path,
    mining: &MiningArgs,
    tables: &TableArgs,
    out: Option<&Path>,
    format: Format,
) -> Result<u8, CliError> {
    let cfg = qi_config(mining.qi_config.as_deref())?
        .ok_or_else(|| CliError::Input("mine needs --qi-config".into()))?;
    let params = mining_params(mining)?;
    let profile = mine_profile(&responses(log, tables)?, &cfg, &params);
    let text = match format {
        Format::Json => pretty(&ProfileFile::new(&cfg, &profile)),
        Format::Text => profile.limits().map(|l| format!("{l}\n")).collect(),
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn template_log(path: &Path) -> Result<TemplateLog, CliError> {
    TemplateLog::from_queries(&read_queries(path)?).map_err(|e| CliError::Input(e.to_string()))
}

fn gram_text(gram: &[String]) -> String {
    gram.join(" -> ")
}

fn cmd_profile(log: &Path, n: usize, out: Option<&Path>, format: Format) -> Result<u8, CliError> {
    let profile = template_log(log)?
        .profile(n)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let text = match format {
        Format::Json => pretty(&profile),
        Format::Text => profile.grams().iter().map(|g| format!("{}\n", gram_text(g))).collect(),
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TuneRow {
    n: usize,
    mismatches: usize,
}

#[derive(Serialize)]
struct TuneReport {
    counts: Vec<TuneRow>,
    threshold: Option<usize>,
    selected: Option<usize>,
}

fn cmd_tune(
    log_a: &Path,
    log_b: &Path,
    n_min: usize,
    n_max: usize,
    threshold: Option<usize>,
    out: Option<&Path>,
    format: Format,
) -> Result<u8, CliError> {
    if n_min == 0 || n_min > n_max {
        return Err(CliError::Input(format!("invalid n range {n_min}..={n_max}")));
    }
    let (a, b) = (template_log(log_a)?, template_log(log_b)?);
    let ns: Vec<usize> = (n_min..=n_max).collect();
    let counts = tune_n(&a, &b, &ns).map_err(|e| CliError::Input(e.to_string()))?;
    let selected = select_n(&counts, threshold);
    let report = TuneReport {
        counts: counts.iter().map(|&(n, mismatches)| TuneRow { n, mismatches }).collect(),
        threshold,
        selected,
    };
    let text = match format {
        Format::Json => pretty(&report),
        Format::Text => {
            let mut s = String::from("n\tmismatches\n");
            for r in &report.counts {
                let _ = writeln!(s, "{}\t{}", r.n, r.mismatches);
            }
            let _ = writeln!(s, "selected n: {}", selected.map_or("none".into(), |n| n.to_string()));
            s
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PrivacySection {
    anomalies: Vec<PrivacyAnomaly>,
}

#[derive(Serialize)]
struct NGramSection {
    n: usize,
    mismatches: MismatchReport,
    incidents: Vec<Incident>,
}

#[derive(Serialize)]
struct DetectReport {
    privacy: Option<PrivacySection>,
    ngram: Option<NGramSection>,
}

fn cmd_detect(args: &DetectArgs, out: Option<&Path>, format: Format) -> Result<u8, CliError> {
    if args.responses.is_none() && args.queries.is_none() {
        return Err(CliError::Input("detect needs --responses and/or --queries".into()));
    }
    let cli_cfg = qi_config(args.mining.qi_config.as_deref())?;

    let privacy = match &args.responses {
        None => None,
        Some(run_path) => {
            let (norm, cfg) = match (&args.privacy_profile, &args.norm_responses) {
                (Some(p), None) => {
                    let file: ProfileFile = read_json(p)?;
                    let cfg = file
                        .config
                        .clone()
                        .normalized()
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                    if cli_cfg.as_ref().is_some_and(|c| *c != cfg) {
                        return Err(CliError::Input(format!(
                            "--qi-config differs from the configuration stored in {}",
                            p.display()
                        )));
                    }
                    (file.profile(), cfg)
                }
                (None, Some(p)) => {
                    let cfg = cli_cfg
                        .clone()
                        .ok_or_else(|| CliError::Input("--norm-responses needs --qi-config".into()))?;
                    let norm = mine_profile(&read_responses(p)?, &cfg, &mining_params(&args.mining)?);
                    (norm, cfg)
                }
                _ => {
                    return Err(CliError::Input(
                        "--responses needs exactly one of --privacy-profile or --norm-responses".into(),
                    ))
                }
            };
            let run = read_responses(run_path)?;
            Some(PrivacySection {
                anomalies: detect_log(&run, &norm, &cfg, args.mining.m_max),
            })
        }
    };

    let ngram = match &args.queries {
        None => None,
        Some(run_path) => {
            let norm: NGramProfile = match (&args.ngram_profile, &args.norm_queries) {
                (Some(p), None) => {
                    let profile: NGramProfile = read_json(p)?;
                    if let Some(n) = args.n.filter(|&n| n != profile.n()) {
                        return Err(CliError::Input(format!(
                            "--n {n} differs from n={} stored in {}",
                            profile.n(),
                            p.display()
                        )));
                    }
                    profile
                }
                (None, Some(p)) => template_log(p)?
                    .profile(args.n.unwrap_or(4))
                    .map_err(|e| CliError::Input(e.to_string()))?,
                _ => {
                    return Err(CliError::Input(
                        "--queries needs exactly one of --ngram-profile or --norm-queries".into(),
                    ))
                }
            };
            let run = template_log(run_path)?;
            let run_profile = run.profile(norm.n()).map_err(|e| CliError::Input(e.to_string()))?;
            Some(NGramSection {
                n: norm.n(),
                mismatches: compare(&run_profile, &norm).map_err(|e| CliError::Input(e.to_string()))?,
                incidents: run.incidents(&norm),
            })
        }
    };

    if let (Some(path), Some(p)) = (&args.anomalies, &privacy) {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        jsonl::write(file, &p.anomalies).map_err(|e| io_err(path, e))?;
    }

    let found = privacy.as_ref().is_some_and(|p| !p.anomalies.is_empty())
        || ngram.as_ref().is_some_and(|g| !g.mismatches.is_empty());
    let report = DetectReport { privacy, ngram };
    let text = match format {
        Format::Json => pretty(&report),
        Format::Text => detect_text(&report),
    };
    emit(out, &text)?;
    Ok(if found { EXIT_ANOMALIES } else { EXIT_OK })
}

fn detect_text(report: &DetectReport) -> String {
    let mut s = String::new();
    if let Some(p) = &report.privacy {
        let _ = writeln!(s, "privacy anomalies: {}", p.anomalies.len());
        for a in &p.anomalies {
            let norm = a.k_norm.map_or("none".into(), |k| k.to_string());
            let _ = writeln!(
                s,
                "  {} {} k={} norm={} {:?}",
                a.query_id.as_deref().unwrap_or("-"),
                a.run_limit(),
                a.k_run,
                norm,
                a.reason
            );
        }
    }
    if let Some(g) = &report.ngram {
        let _ = writeln!(s, "n-gram mismatches (n={}): {}", g.n, g.mismatches.len());
        for (gram, first) in &g.mismatches.missing {
            let at = first.map_or("-".into(), |f| f.to_string());
            let _ = writeln!(s, "  @{at} {}", gram_text(gram));
        }
        let _ = writeln!(s, "incidents: {}", g.incidents.len());
        for i in &g.incidents {
            let _ = writeln!(s, "  {} [{}]", i.principal, i.query_ids.join(", "));
        }
    }
    s
}

fn cmd_enforce(
    log: &Path,
    tables: &TableArgs,
    profile: Option<&Path>,
    m_max: usize,
    out: Option<&Path>,
    format: Format,
) -> Result<u8, CliError> {
    if tables.tables.is_empty() {
        return Err(CliError::Input("enforce needs at least one --table".into()));
    }
    let db = database(tables)?;
    let queries = read_queries(log)?;
    let mut log_out = ResponseLog::new();
    let mut reasons: Vec<Option<SuppressionReason>> = Vec::new();
    match profile {
        Some(p) => {
            let file: ProfileFile = read_json(p)?;
            let cfg = file
                .config
                .clone()
                .normalized()
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let mut guard = Guard::new(file.profile(), cfg, m_max);
            for q in &queries {
                reasons.push(guard.submit(&db, q).map_err(engine_err)?.reason);
            }
            log_out = guard.into_log();
        }
        None => {
            for q in &queries {
                log_out.push(q.clone(), Response::Rows(db.execute(q).map_err(engine_err)?));
                reasons.push(None);
            }
        }
    }
    let suppressed = reasons.iter().filter(|r| r.is_some()).count();
    let text = match format {
        Format::Json => jsonl::to_string(&log_out.records()),
        Format::Text => {
            let mut s = String::new();
            for (e, r) in log_out.entries().iter().zip(&reasons) {
                match (&e.response, r) {
                    (Response::Rows(rel), _) => {
                        let _ = writeln!(s, "{}: released {} row(s)", e.query.id, rel.rows.len());
                    }
                    (Response::Suppressed, Some(reason)) => {
                        let _ = writeln!(s, "{}: SUPPRESSED {}", e.query.id, suppression_text(reason));
                    }
                    (Response::Suppressed, None) => {
                        let _ = writeln!(s, "{}: SUPPRESSED", e.query.id);
                    }
                }
            }
            s
        }
    };
    emit(out, &text)?;
    eprintln!("{} of {} responses suppressed", suppressed, queries.len());
    Ok(EXIT_OK)
}

fn suppression_text(reason: &SuppressionReason) -> String {
    match reason {
        SuppressionReason::IdentifierExposed { attributes } => format!("identifier exposed: {}", attributes.join(", ")),
        SuppressionReason::Anomalous { anomalies } => {
            let limits: Vec<String> = anomalies.iter().map(|a| a.run_limit().to_string()).collect();
            format!("anomalous limits: {}", limits.join(" "))
        }
    }
}

fn cmd_scenario(name: &str, manifest: &Manifest, out: Option<&Path>, format: Format) -> Result<u8, CliError> {
    let result = run_scenario(name, manifest).map_err(workload_err)?;
    let report = result.report_json();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let write = |file: &str, text: &str| -> Result<(), CliError> {
            let path: PathBuf = dir.join(file);
            std::fs::write(&path, text).map_err(|e| io_err(&path, e))
        };
        write("report.json", &report)?;
        write("normative.jsonl", &jsonl::to_string(&result.normative_log))?;
        write("run.jsonl", &jsonl::to_string(&result.run_log))?;
        write("normative.responses.jsonl", &jsonl::to_string(&result.normative_responses.records()))?;
        write("run.responses.jsonl", &jsonl::to_string(&result.run_responses.records()))?;
        write("qi_config.json", &pretty(&result.qi_config))?;
    }
    let text = match format {
        Format::Json => report,
        Format::Text => scenario_text(&result),
    };
    emit(None, &text)?;
    match result.first_failure() {
        Some(a) => {
            eprintln!("assertion failed: {}: {}", a.name, a.detail);
            Ok(EXIT_ASSERTION)
        }
        None => Ok(EXIT_OK),
    }
}

fn scenario_text(r: &ScenarioResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} seed={} n={} m_max={} k_range={}:{}",
        r.scenario, r.seed, r.n, r.m_max, r.k_range.0, r.k_range.1
    );
    let _ = writeln!(
        s,
        "normative: {} queries, {} privacy limits, {} n-grams; run: {} queries",
        r.normative_queries, r.normative_privacy_limits, r.normative_ngrams, r.run_queries
    );
    let _ = writeln!(
        s,
        "n-gram mismatches: {}; privacy anomalies: {}",
        r.mismatches.len(),
        r.privacy_anomalies.len()
    );
    match &r.summary {
        Summary::Hospital(h) => {
            for a in &h.injected {
                let _ = writeln!(
                    s,
                    "  {} cat{} ngram={} privacy={} rows={} {}",
                    a.query_id, a.category, a.ngram, a.privacy, a.rows, a.description
                );
            }
            let _ = writeln!(
                s,
                "detected: n-gram {}, privacy {}, overall {} of {}",
                h.ngram_detected,
                h.privacy_detected,
                h.overall_detected,
                h.injected.len()
            );
        }
        Summary::Differencing(d) => {
            for q in &d.queries {
                let state = if q.suppressed { "SUPPRESSED".to_string() } else { format!("{} rows", q.rows) };
                let _ = writeln!(s, "  {}: {state}", q.id);
            }
            let _ = writeln!(
                s,
                "residual {:?} attributed to {}",
                d.residual,
                d.attributed_to.as_deref().unwrap_or("nobody")
            );
        }
        Summary::Census(c) => {
            for a in &c.attacks {
                let _ = writeln!(
                    s,
                    "  attack {} ({}): length {}, mismatches {} (reference {}), revealed {}",
                    a.attack,
                    a.target,
                    a.length,
                    a.mismatches,
                    a.paper_mismatches,
                    a.revealed_salary.as_deref().unwrap_or("-")
                );
            }
        }
    }
    for a in &r.assertions {
        let _ = writeln!(s, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    s
}
