//! Command-line front end: campaigns, single-shot runs, mutation inspection,
//! analytics and coverage reports.
//!
//! Exit codes: 0 success (no bugs), 1 bugs found, 2 usage or configuration
//! error, 3 internal error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use deltafuzz_core::campaign::{self, Campaign, CampaignConfig, CampaignError, StepResult};
use deltafuzz_core::coverage::{self, CoverageSet};
use deltafuzz_core::dsl::{self, Program};
use deltafuzz_core::mutation;
use deltafuzz_core::oracle::{self, classify_symptom, cluster_key, OracleConfig};
use deltafuzz_core::registry::Registry;
use deltafuzz_core::triage::{self, Axis};
use deltafuzz_core::demo;

pub const EXIT_OK: u8 = 0;
pub const EXIT_BUGS: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// Environment variable overriding the per-test step budget.
pub const STEP_BUDGET_ENV: &str = "DELTAFUZZ_STEP_BUDGET";

#[derive(Debug, Parser)]
#[command(name = "deltafuzz", version, about = "Cross-version differential mutation fuzzing for tensor engines")]
pub struct Cli {
    /// Output style. Both carry the same information.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Run one test program on every version and judge the outcomes.
    Run(RunArgs),
    /// List or apply mutations of one test program.
    Mutate(MutateArgs),
    /// Bug-study analytics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Per-component coverage of test corpora.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct EngineArgs {
    /// Fault manifest (TOML). Defaults to the bundled demo registry.
    #[arg(long)]
    pub faults: Option<PathBuf>,
    /// Number of leading versions to use, or a comma-separated id list.
    #[arg(long)]
    pub versions: Option<String>,
    /// Per-test step budget; exceeding it counts as a hang.
    #[arg(long, env = STEP_BUDGET_ENV)]
    pub step_budget: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ToleranceArgs {
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    /// Directory of `.tft` seed files. Defaults to the bundled demo seeds.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub tol: ToleranceArgs,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Report stream: one JSON record per report, then the summary record.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration event log (JSON lines).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Write campaign state here when the run ends.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// TOML file with the same keys as the flags (snake_case); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub tol: ToleranceArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["list", "apply", "pick"])))]
pub struct MutateArgs {
    pub file: PathBuf,
    /// Print the numbered list of applicable mutation sites.
    #[arg(long)]
    pub list: bool,
    /// Apply the site with this index and print the mutant.
    #[arg(long)]
    pub apply: Option<usize>,
    /// Pick an operator and site at random and print the mutant.
    #[arg(long)]
    pub pick: bool,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Cohen's kappa between two label files (one label per line).
    Kappa { a: PathBuf, b: PathBuf },
    /// Spearman rho between two number files (whitespace separated).
    Spearman { a: PathBuf, b: PathBuf },
    /// Label distribution of a records file on one axis.
    Dist { records: PathBuf, axis: String },
    /// Joint counts of a records file on two axes.
    Crosstab { records: PathBuf, rows: String, cols: String },
    /// Pairwise framework commonality (Spearman over per-category counts).
    Commonality { records: PathBuf, axis: String },
    /// Keep the lines of a title file that look bug-fixing.
    FilterTitles { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// `LABEL=DIR`, or just `DIR` (labelled by its name). Repeatable.
    #[arg(long = "corpus", required = true)]
    pub corpora: Vec<String>,
    /// Version to execute on. Defaults to the first one.
    #[arg(long)]
    pub version: Option<String>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, conflicts_with_all = ["overlap", "export"])]
    pub table: bool,
    #[arg(long, conflicts_with = "export")]
    pub overlap: bool,
    /// Print covered element ids with their component.
    #[arg(long)]
    pub export: bool,
}

/// A failed command: bad input from the user, or something unexpected.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = Result<u8, Failure>;

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Internal(e)) => {
            let _ = writeln!(err, "internal error: {e:#}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Fuzz(a) => cmd_fuzz(a, cli.format, out),
        Command::Run(a) => cmd_run(a, cli.format, out),
        Command::Mutate(a) => cmd_mutate(a, cli.format, out, err),
        Command::Stats(s) => cmd_stats(s, cli.format, out),
        Command::Coverage(a) => cmd_coverage(a, cli.format, out),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_program(path: &Path) -> Result<Program, Failure> {
    let text = read_text(path)?;
    dsl::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_registry(engine: &EngineArgs) -> Result<Registry, Failure> {
    let registry = match &engine.faults {
        Some(p) => Registry::from_manifest(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => demo::registry(),
    };
    match engine.versions.as_deref() {
        None => Ok(registry),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) => registry.first(n),
            Err(_) => {
                let ids: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                registry.select(&ids)
            }
        }
        .map_err(|e| usage(e.to_string())),
    }
}

fn oracle_config(tol: &ToleranceArgs, base: OracleConfig) -> Result<OracleConfig, Failure> {
    let cfg = OracleConfig {
        abs_tol: tol.abs_tol.unwrap_or(base.abs_tol),
        rel_tol: tol.rel_tol.unwrap_or(base.rel_tol),
        ..base
    };
    cfg.check().map_err(usage)?;
    Ok(cfg)
}

fn step_budget(engine: &EngineArgs) -> Result<u64, Failure> {
    match engine.step_budget {
        Some(0) => Err(usage("step budget must be positive")),
        Some(n) => Ok(n),
        None => Ok(oracle::DEFAULT_STEP_BUDGET),
    }
}

fn campaign_error(e: CampaignError) -> Failure {
    usage(e.to_string())
}

// ---------------------------------------------------------------- fuzz

/// Keys accepted in a `--config` file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuzzFile {
    seeds: Option<PathBuf>,
    faults: Option<PathBuf>,
    versions: Option<toml::Value>,
    iterations: Option<u64>,
    seconds: Option<f64>,
    rng_seed: Option<u64>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    step_budget: Option<u64>,
    out: Option<PathBuf>,
    events: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

/// Flags merged over the config file.
struct FuzzPlan {
    seeds: Option<PathBuf>,
    engine: EngineArgs,
    tol: ToleranceArgs,
    iterations: Option<u64>,
    seconds: Option<f64>,
    rng_seed: Option<u64>,
    out: Option<PathBuf>,
    events: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

fn fuzz_plan(a: &FuzzArgs) -> Result<FuzzPlan, Failure> {
    let file = match &a.config {
        None => FuzzFile::default(),
        Some(p) => {
            let f: FuzzFile = toml::from_str(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let dir = p.parent().unwrap_or(Path::new("."));
            let rel = |x: Option<PathBuf>| x.map(|x| if x.is_relative() { dir.join(x) } else { x });
            FuzzFile {
                seeds: rel(f.seeds),
                faults: rel(f.faults),
                out: rel(f.out),
                events: rel(f.events),
                checkpoint: rel(f.checkpoint),
                ..f
            }
        }
    };
    let versions = match file.versions {
        None => None,
        Some(toml::Value::Integer(n)) => Some(n.to_string()),
        Some(toml::Value::String(s)) => Some(s),
        Some(toml::Value::Array(xs)) => Some(
            xs.iter()
                .map(|x| x.as_str().map(str::to_owned).ok_or_else(|| usage("config: versions must be strings")))
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
        ),
        Some(other) => return Err(usage(format!("config: bad versions value {other}"))),
    };
    let (iterations, seconds) = match (a.iterations, a.seconds) {
        (None, None) => (file.iterations, file.seconds),
        flags => flags,
    };
    Ok(FuzzPlan {
        seeds: a.seeds.clone().or(file.seeds),
        engine: EngineArgs {
            faults: a.engine.faults.clone().or(file.faults),
            versions: a.engine.versions.clone().or(versions),
            step_budget: a.engine.step_budget.or(file.step_budget),
        },
        tol: ToleranceArgs {
            abs_tol: a.tol.abs_tol.or(file.abs_tol),
            rel_tol: a.tol.rel_tol.or(file.rel_tol),
        },
        iterations,
        seconds,
        rng_seed: a.rng_seed.or(file.rng_seed),
        out: a.out.clone().or(file.out),
        events: a.events.clone().or(file.events),
        checkpoint: a.checkpoint.clone().or(file.checkpoint),
    })
}

pub fn cmd_fuzz(a: &FuzzArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let plan = fuzz_plan(a)?;
    let registry = load_registry(&plan.engine)?;
    let defaults = CampaignConfig::default();
    let resume_text = a.resume.as_deref().map(read_text).transpose()?;
    // a resumed run keeps the checkpoint's seed unless one is given
    let checkpoint_seed = resume_text
        .as_deref()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(t).ok())
        .and_then(|v| v["config"]["rng_seed"].as_u64());
    let cfg = CampaignConfig {
        rng_seed: plan.rng_seed.or(checkpoint_seed).unwrap_or(0),
        iterations: if plan.iterations.is_none() && plan.seconds.is_none() {
            defaults.iterations
        } else {
            plan.iterations
        },
        seconds: plan.seconds,
        step_budget: step_budget(&plan.engine)?,
        oracle: oracle_config(&plan.tol, defaults.oracle)?,
    };
    let mut campaign = match &resume_text {
        Some(text) => Campaign::resume(cfg, registry, text).map_err(campaign_error)?,
        None => match &plan.seeds {
            Some(dir) => Campaign::from_dir(cfg, registry, dir).map_err(campaign_error)?,
            None => Campaign::new(cfg, registry, &demo::seeds()).map_err(campaign_error)?,
        },
    };
    for l in campaign.seed_log() {
        log::info!("seed {}: {:?}", l.name, l.status);
    }

    let mut reports = plan.out.as_deref().map(create).transpose()?;
    let mut events = plan.events.as_deref().map(create).transpose()?;
    let mut io_error: Option<std::io::Error> = None;
    let mut sink = |r: &StepResult| {
        let mut write = || -> std::io::Result<()> {
            if let (Some(w), Some(rep)) = (reports.as_mut(), r.report.as_ref()) {
                serde_json::to_writer(&mut *w, rep)?;
                w.write_all(b"\n")?;
            }
            if let Some(w) = events.as_mut() {
                serde_json::to_writer(&mut *w, &r.event)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        };
        if io_error.is_none() {
            io_error = write().err();
        }
    };
    let summary = campaign.run_with(&mut sink);
    if let Some(e) = io_error {
        return Err(Failure::Internal(anyhow::Error::new(e).context("writing campaign output")));
    }
    if let Some(mut w) = reports {
        serde_json::to_writer(&mut w, &summary)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    if let Some(mut w) = events {
        w.flush()?;
    }
    if let Some(p) = &plan.checkpoint {
        fs::write(p, campaign.checkpoint()).with_context(|| format!("writing {}", p.display()))?;
    }

    match format {
        Format::Structured => {
            let doc = json!({ "seeds": campaign.seed_log(), "summary": summary });
            writeln!(out, "{}", serde_json::to_string(&doc)?)?;
        }
        Format::Human => {
            let rejected: Vec<_> = campaign
                .seed_log()
                .iter()
                .filter(|l| l.status != campaign::SeedStatus::Admitted)
                .collect();
            writeln!(out, "seeds: {} admitted, {} rejected", summary.seeds_admitted, summary.seeds_rejected)?;
            for l in rejected {
                let why = match &l.status {
                    campaign::SeedStatus::Duplicate => "duplicate".to_string(),
                    campaign::SeedStatus::Invalid { error } => format!("invalid: {error}"),
                    campaign::SeedStatus::Incompatible { verdict } => format!("incompatible ({verdict})"),
                    campaign::SeedStatus::Admitted => unreachable!(),
                };
                writeln!(out, "  {}: {why}", l.name)?;
            }
            writeln!(
                out,
                "iterations: {}  pool: {}  reports: {}  unique clusters: {}",
                summary.iterations, summary.pool_size, summary.reports, summary.unique_clusters
            )?;
            if !summary.by_symptom.is_empty() {
                let parts: Vec<String> = summary.by_symptom.iter().map(|(s, n)| format!("{s} {n}")).collect();
                writeln!(out, "symptoms: {}", parts.join(", "))?;
            }
            let parts: Vec<String> = summary.blame_counts.iter().map(|(v, n)| format!("{v} {n}")).collect();
            writeln!(out, "blamed: {}", parts.join(", "))?;
            if !summary.clusters.is_empty() {
                writeln!(out, "clusters:")?;
                for (i, c) in summary.clusters.iter().enumerate() {
                    writeln!(
                        out,
                        "  {:>3}. {}  (first report {}, {} occurrences)",
                        i + 1,
                        c.key,
                        c.first_report,
                        c.occurrences
                    )?;
                }
            }
        }
    }
    Ok(if summary.unique_clusters > 0 { EXIT_BUGS } else { EXIT_OK })
}

// ---------------------------------------------------------------- run

pub fn cmd_run(a: &RunArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let program = parse_program(&a.file)?;
    let registry = load_registry(&a.engine)?;
    if registry.len() < 2 {
        return Err(usage(format!("differential runs need at least 2 versions, got {}", registry.len())));
    }
    let cfg = oracle_config(&a.tol, OracleConfig::default())?;
    let runs = oracle::run_all(&program, &registry, step_budget(&a.engine)?);
    let verdict = oracle::compare(&runs, &cfg);
    let blame = oracle::vote(&verdict, &runs, &cfg);
    let symptom = classify_symptom(&verdict);
    let cluster = cluster_key(&verdict, &blame, &runs, &cfg);
    match format {
        Format::Structured => {
            let doc = json!({
                "program": dsl::print(&program),
                "hash": program.canonical_hash(),
                "outcomes": campaign::summarize_outcomes(&runs, &cfg),
                "verdict": verdict,
                "blame": blame,
                "symptom": symptom,
                "cluster": cluster,
            });
            writeln!(out, "{}", serde_json::to_string(&doc)?)?;
        }
        Format::Human => {
            let width = runs.iter().map(|r| r.version.len()).max().unwrap_or(0);
            for r in &runs {
                write!(out, "{:<width$}  {}", r.version, r.outcome)?;
                if !r.fired.is_empty() {
                    write!(out, "  [fired: {}]", r.fired.join(", "))?;
                }
                writeln!(out)?;
            }
            writeln!(out, "verdict: {}", verdict.name())?;
            if let oracle::Verdict::Divergence { max_abs, max_rel, .. } = &verdict {
                writeln!(out, "max diff: abs {} rel {}", dsl::format_f64(*max_abs), dsl::format_f64(*max_rel))?;
            }
            let resolution = match blame.resolution {
                oracle::Resolution::Majority => "majority",
                oracle::Resolution::Unresolved => "unresolved",
            };
            writeln!(out, "blame: [{}] ({resolution})", blame.blamed.join(", "))?;
            if let Some(s) = symptom {
                writeln!(out, "symptom: {s}")?;
            }
            if let Some(k) = &cluster {
                writeln!(out, "cluster: {k}")?;
            }
        }
    }
    Ok(if verdict.is_bug() { EXIT_BUGS } else { EXIT_OK })
}

// ---------------------------------------------------------------- mutate

pub fn cmd_mutate(a: &MutateArgs, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    use rand::SeedableRng;

    let program = parse_program(&a.file)?;
    let typed = dsl::validate(&program).map_err(|e| usage(format!("{}: {e}", a.file.display())))?;
    let sites = mutation::applicable_sites(&typed);
    let mutant = if a.list {
        match format {
            Format::Structured => {
                let doc = json!({ "sites": sites });
                writeln!(out, "{}", serde_json::to_string(&doc)?)?;
            }
            Format::Human => {
                for (i, s) in sites.iter().enumerate() {
                    writeln!(out, "{i:>4}  {s}")?;
                }
            }
        }
        return Ok(EXIT_OK);
    } else if let Some(i) = a.apply {
        let site = sites
            .get(i)
            .ok_or_else(|| usage(format!("site index {i} out of range (program has {} sites)", sites.len())))?;
        mutation::apply(&typed, site).map_err(|e| Failure::Internal(e.into()))?
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.rng_seed);
        mutation::pick_and_mutate(&typed, &mut rng).map_err(|e| usage(e.to_string()))?
    };
    let (_, site) = mutant.lineage.last().expect("a mutant has a lineage");
    let text = dsl::print(&mutant.program);
    match format {
        Format::Structured => {
            let doc = json!({
                "site": site,
                "program": text,
                "hash": mutant.program.canonical_hash(),
                "statically_ill": mutant.statically_ill.as_ref().map(|e| e.to_string()),
            });
            writeln!(out, "{}", serde_json::to_string(&doc)?)?;
        }
        Format::Human => {
            writeln!(err, "# {site}")?;
            if let Some(e) = &mutant.statically_ill {
                writeln!(err, "# statically ill: {e}")?;
            }
            write!(out, "{text}")?;
        }
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- stats

fn read_labels(path: &Path) -> Result<Vec<String>, Failure> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>, Failure> {
    read_text(path)?
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| usage(format!("{}: `{t}` is not a number", path.display())))
        })
        .collect()
}

fn read_records(path: &Path) -> Result<Vec<triage::TaxonomyRecord>, Failure> {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    triage::load_records(f).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn axis(s: &str) -> Result<Axis, Failure> {
    s.parse().map_err(usage)
}

pub fn cmd_stats(cmd: &StatsCommand, format: Format, out: &mut dyn Write) -> CmdResult {
    let structured = format == Format::Structured;
    match cmd {
        StatsCommand::Kappa { a, b } => {
            let k = triage::cohen_kappa(&read_labels(a)?, &read_labels(b)?).map_err(|e| usage(e.to_string()))?;
            if structured {
                writeln!(out, "{}", json!({ "kappa": k.value, "degenerate": k.degenerate }))?;
            } else {
                write!(out, "kappa {}", k.value)?;
                if k.degenerate {
                    write!(out, " (degenerate: chance agreement is 1)")?;
                }
                writeln!(out)?;
            }
        }
        StatsCommand::Spearman { a, b } => {
            let rho = triage::spearman(&read_numbers(a)?, &read_numbers(b)?).map_err(|e| usage(e.to_string()))?;
            let reading = triage::correlation_band(rho);
            if structured {
                writeln!(out, "{}", json!({ "rho": rho, "band": reading.band, "negative": reading.negative }))?;
            } else {
                write!(out, "rho {rho}  {}", reading.band)?;
                if reading.negative {
                    write!(out, " (negative)")?;
                }
                writeln!(out)?;
            }
        }
        StatsCommand::Dist { records, axis: ax } => {
            let ax = axis(ax)?;
            let rows = triage::distribution(&read_records(records)?, ax);
            if structured {
                let rows: Vec<_> = rows
                    .iter()
                    .map(|r| json!({ "label": r.label, "count": r.count, "percent": r.percent() }))
                    .collect();
                writeln!(out, "{}", json!({ "axis": ax, "rows": rows }))?;
            } else {
                write!(out, "{}", triage::format_distribution(ax, &rows))?;
            }
        }
        StatsCommand::Crosstab { records, rows, cols } => {
            let t = triage::crosstab(&read_records(records)?, axis(rows)?, axis(cols)?);
            if structured {
                writeln!(out, "{}", serde_json::to_string(&t)?)?;
            } else {
                write!(out, "{t}")?;
            }
        }
        StatsCommand::Commonality { records, axis: ax } => {
            let ax = axis(ax)?;
            let pairs = triage::framework_commonality(&read_records(records)?, ax);
            if structured {
                let rows: Vec<_> = pairs
                    .iter()
                    .map(|c| match &c.rho {
                        Ok(r) => json!({ "left": c.left, "right": c.right, "rho": r, "band": triage::correlation_band(*r).band }),
                        Err(e) => json!({ "left": c.left, "right": c.right, "error": e }),
                    })
                    .collect();
                writeln!(out, "{}", json!({ "axis": ax, "pairs": rows }))?;
            } else {
                for c in &pairs {
                    match &c.rho {
                        Ok(r) => writeln!(out, "{:<12} {:<12} {r:>8.4}  {}", c.left, c.right, triage::correlation_band(*r).band)?,
                        Err(e) => writeln!(out, "{:<12} {:<12} undefined: {e}", c.left, c.right)?,
                    }
                }
            }
        }
        StatsCommand::FilterTitles { file } => {
            let text = read_text(file)?;
            let kept: Vec<&str> = text.lines().filter(|l| triage::is_bug_fixing_title(l)).collect();
            if structured {
                writeln!(out, "{}", json!({ "kept": kept }))?;
            } else {
                for l in kept {
                    writeln!(out, "{l}")?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- coverage

fn corpus(spec: &str) -> Result<(String, Vec<Program>), Failure> {
    let (label, dir) = match spec.split_once('=') {
        Some((l, d)) => (l.to_string(), PathBuf::from(d)),
        None => {
            let d = PathBuf::from(spec);
            let l = d.file_name().map_or_else(|| spec.to_string(), |n| n.to_string_lossy().into_owned());
            (l, d)
        }
    };
    let files = campaign::read_seed_dir(&dir).map_err(|e| usage(e.to_string()))?;
    let programs = files
        .iter()
        .map(|(name, text)| dsl::parse(text).map_err(|e| usage(format!("{}: {e}", dir.join(name).display()))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((label, programs))
}

pub fn cmd_coverage(a: &CoverageArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    if a.overlap && !(2..=3).contains(&a.corpora.len()) {
        return Err(usage(format!("--overlap takes 2 or 3 corpora, got {}", a.corpora.len())));
    }
    let registry = load_registry(&a.engine)?;
    let version = match &a.version {
        Some(v) => v.clone(),
        None => registry.ids().first().map(|s| s.to_string()).ok_or_else(|| usage("no versions selected"))?,
    };
    let budget = step_budget(&a.engine)?;
    let mut sets: Vec<CoverageSet> = Vec::new();
    for spec in &a.corpora {
        let (label, programs) = corpus(spec)?;
        let set = coverage::collect(label, &programs, &registry, &version, budget).map_err(|e| usage(e.to_string()))?;
        sets.push(set);
    }
    let structured = format == Format::Structured;
    if a.overlap {
        let o = coverage::overlap(&sets).map_err(|e| usage(e.to_string()))?;
        if structured {
            writeln!(out, "{}", serde_json::to_string(&o)?)?;
        } else {
            write!(out, "{o}")?;
        }
    } else if a.export {
        if structured {
            writeln!(out, "{}", serde_json::to_string(&sets)?)?;
        } else {
            for s in &sets {
                writeln!(out, "# {}", s.label)?;
                write!(out, "{}", s.export())?;
            }
        }
    } else {
        let tables: Vec<_> = sets.iter().map(|s| coverage::coverage_table(s, coverage::UNIVERSE)).collect();
        if structured {
            writeln!(out, "{}", serde_json::to_string(&tables)?)?;
        } else {
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                write!(out, "{t}")?;
            }
        }
    }
    Ok(EXIT_OK)
}
