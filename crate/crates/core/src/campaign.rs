//! The fuzzing loop: seed pool filtering, select, mutate, run, judge,
//! admission of consistent mutants and bug report emission.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{self, CanonicalHash, Program, TypedProgram};
use crate::mutation::{self, MutationError, MutationSite};
use crate::oracle::{self, BlameSet, ClusterKey, OracleConfig, Outcome, Verdict, VersionRun};
use crate::registry::Registry;
use crate::triage::Symptom;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("no seed survived filtering; the pool is empty")]
    EmptyPool,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub rng_seed: u64,
    /// Stop after this many iterations.
    pub iterations: Option<u64>,
    /// Stop after this much wall-clock time.
    pub seconds: Option<f64>,
    pub step_budget: u64,
    pub oracle: OracleConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            rng_seed: 0,
            iterations: Some(1000),
            seconds: None,
            step_budget: oracle::DEFAULT_STEP_BUDGET,
            oracle: OracleConfig::default(),
        }
    }
}

impl CampaignConfig {
    fn check(&self, registry: &Registry) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if registry.len() < 2 {
            return bad(format!("need at least 2 versions, got {}", registry.len()));
        }
        if self.iterations.is_none() && self.seconds.is_none() {
            return bad("set an iteration budget, a time budget, or both".into());
        }
        if let Some(s) = self.seconds {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("time budget must be positive, got {s}"));
            }
        }
        if self.step_budget == 0 {
            return bad("step budget must be positive".into());
        }
        self.oracle.check().map_err(CampaignError::Config)
    }
}

/// What happened to one seed file during pool initialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedStatus {
    Admitted,
    Duplicate,
    Invalid { error: String },
    Incompatible { verdict: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedLog {
    pub name: String,
    #[serde(flatten)]
    pub status: SeedStatus,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub typed: TypedProgram,
    pub hash: CanonicalHash,
    pub lineage: Vec<(CanonicalHash, MutationSite)>,
}

impl PoolEntry {
    pub fn program(&self) -> &Program {
        self.typed.program()
    }

    pub fn order(&self) -> usize {
        self.lineage.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStep {
    pub parent: CanonicalHash,
    pub site: MutationSite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeSummary {
    pub version: String,
    pub kind: &'static str,
    pub digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub fired: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BugReport {
    pub record: &'static str,
    pub report_id: u64,
    pub iteration: u64,
    /// Logical clock: the iteration index.
    pub timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
    pub symptom: Symptom,
    pub verdict: Verdict,
    pub blame: BlameSet,
    pub cluster: ClusterKey,
    pub new_cluster: bool,
    pub order: usize,
    pub lineage: Vec<LineageStep>,
    pub program: String,
    pub outcomes: Vec<OutcomeSummary>,
    /// The engine is deterministic, so reports are never re-run.
    pub rerun_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Admitted,
    Duplicate,
    Reported,
    /// Not admitted: every version rejected it, or it is statically ill.
    Discarded,
    NoMutation,
}

/// Everything one iteration did, for auditing and replay checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignEvent {
    pub iteration: u64,
    pub parent: CanonicalHash,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<MutationSite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutant: Option<CanonicalHash>,
    pub statically_ill: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub key: ClusterKey,
    pub first_report: u64,
    pub occurrences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub record: &'static str,
    pub iterations: u64,
    pub pool_size: usize,
    pub seeds_admitted: usize,
    pub seeds_rejected: usize,
    pub reports: u64,
    pub unique_clusters: usize,
    pub by_symptom: BTreeMap<Symptom, u64>,
    /// Occurrences of each version among blamed sets, in registry order.
    pub blame_counts: Vec<(String, u64)>,
    pub clusters: Vec<ClusterStat>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Counters {
    iteration: u64,
    reports: u64,
    by_symptom: BTreeMap<Symptom, u64>,
    blame: BTreeMap<String, u64>,
    clusters: Vec<ClusterStat>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointEntry {
    program: String,
    lineage: Vec<LineageStep>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: CampaignConfig,
    versions: Vec<String>,
    seeds_admitted: usize,
    seeds_rejected: usize,
    pool: Vec<CheckpointEntry>,
    counters: Counters,
}

/// Reads every `*.tft` file in `dir`, sorted by file name.
pub fn read_seed_dir(dir: &Path) -> Result<Vec<(String, String)>, CampaignError> {
    let io = |source| CampaignError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tft"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|source| CampaignError::Io {
                path: p.clone(),
                source,
            })?;
            let name = p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            Ok((name, text))
        })
        .collect()
}

fn to_steps(lineage: &[(CanonicalHash, MutationSite)]) -> Vec<LineageStep> {
    lineage
        .iter()
        .map(|(parent, site)| LineageStep {
            parent: parent.clone(),
            site: site.clone(),
        })
        .collect()
}

/// Per-version outcome digests as they appear in reports.
pub fn summarize_outcomes(runs: &[VersionRun], cfg: &OracleConfig) -> Vec<OutcomeSummary> {
    runs.iter()
        .map(|r| OutcomeSummary {
            version: r.version.clone(),
            kind: r.outcome.kind(),
            digest: oracle::digest(&r.outcome, cfg),
            detail: match &r.outcome {
                Outcome::Crash { message, stmt } => Some(format!("statement {stmt}: {message}")),
                Outcome::Rejected { error, stmt } => Some(format!("statement {stmt}: {error}")),
                _ => None,
            },
            fired: r.fired.clone(),
        })
        .collect()
}

/// One step's output: the event, plus a report when the mutant exposed a
/// bug.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub event: CampaignEvent,
    pub report: Option<BugReport>,
}

pub struct Campaign {
    cfg: CampaignConfig,
    registry: Registry,
    pool: Vec<PoolEntry>,
    hashes: HashSet<CanonicalHash>,
    seed_log: Vec<SeedLog>,
    seeds_admitted: usize,
    seeds_rejected: usize,
    counters: Counters,
    started: Instant,
}

impl Campaign {
    /// Builds the initial pool from `(name, text)` seeds. Seeds that fail to
    /// parse or validate are skipped; seeds on which the versions already
    /// disagree are excluded as incompatible.
    pub fn new(cfg: CampaignConfig, registry: Registry, seeds: &[(String, String)]) -> Result<Self, CampaignError> {
        cfg.check(&registry)?;
        let mut c = Campaign {
            cfg,
            registry,
            pool: Vec::new(),
            hashes: HashSet::new(),
            seed_log: Vec::new(),
            seeds_admitted: 0,
            seeds_rejected: 0,
            counters: Counters::default(),
            started: Instant::now(),
        };
        for (name, text) in seeds {
            let status = c.consider_seed(text);
            match &status {
                SeedStatus::Invalid { error } => log::warn!("skipping seed {name}: {error}"),
                SeedStatus::Incompatible { verdict } => log::info!("incompatible seed {name}: {verdict}"),
                SeedStatus::Duplicate => log::info!("duplicate seed {name}"),
                SeedStatus::Admitted => c.seeds_admitted += 1,
            }
            if matches!(status, SeedStatus::Invalid { .. } | SeedStatus::Incompatible { .. }) {
                c.seeds_rejected += 1;
            }
            c.seed_log.push(SeedLog {
                name: name.clone(),
                status,
            });
        }
        if c.pool.is_empty() {
            return Err(CampaignError::EmptyPool);
        }
        Ok(c)
    }

    /// Like [`Campaign::new`], reading seeds from a directory.
    pub fn from_dir(cfg: CampaignConfig, registry: Registry, dir: &Path) -> Result<Self, CampaignError> {
        let seeds = read_seed_dir(dir)?;
        Campaign::new(cfg, registry, &seeds)
    }

    fn consider_seed(&mut self, text: &str) -> SeedStatus {
        let typed = match dsl::parse(text).map_err(|e| e.to_string()).and_then(|p| dsl::validate(&p).map_err(|e| e.to_string())) {
            Ok(t) => t,
            Err(error) => return SeedStatus::Invalid { error },
        };
        let runs = oracle::run_all(typed.program(), &self.registry, self.cfg.step_budget);
        let verdict = oracle::compare(&runs, &self.cfg.oracle);
        if verdict != Verdict::Consistent {
            return SeedStatus::Incompatible {
                verdict: verdict.name().to_string(),
            };
        }
        let hash = typed.program().canonical_hash();
        if !self.hashes.insert(hash.clone()) {
            return SeedStatus::Duplicate;
        }
        self.pool.push(PoolEntry {
            typed,
            hash,
            lineage: Vec::new(),
        });
        SeedStatus::Admitted
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn pool(&self) -> &[PoolEntry] {
        &self.pool
    }

    pub fn seed_log(&self) -> &[SeedLog] {
        &self.seed_log
    }

    pub fn iteration(&self) -> u64 {
        self.counters.iteration
    }

    pub fn unique_clusters(&self) -> usize {
        self.counters.clusters.len()
    }

    /// Random stream for one iteration, independent of every other
    /// iteration's.
    fn rng_for(&self, iteration: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        rng.set_stream(iteration);
        rng
    }

    pub fn step(&mut self) -> StepResult {
        let iteration = self.counters.iteration;
        self.counters.iteration += 1;
        let mut rng = self.rng_for(iteration);
        let parent = &self.pool[rng.gen_range(0..self.pool.len())];
        let mut event = CampaignEvent {
            iteration,
            parent: parent.hash.clone(),
            site: None,
            mutant: None,
            statically_ill: false,
            verdict: None,
            action: Action::NoMutation,
            report_id: None,
        };
        let mutant = match mutation::pick_and_mutate(&parent.typed, &mut rng) {
            Ok(m) => m.with_ancestry(&parent.lineage),
            Err(MutationError::NoApplicableMutation) | Err(MutationError::SiteMismatch(_)) => {
                log::debug!("iteration {iteration}: no applicable mutation");
                return StepResult { event, report: None };
            }
        };
        let hash = mutant.program.canonical_hash();
        event.site = mutant.lineage.last().map(|(_, s)| s.clone());
        event.mutant = Some(hash.clone());
        event.statically_ill = mutant.statically_ill.is_some();
        let runs = oracle::run_all(&mutant.program, &self.registry, self.cfg.step_budget);
        let verdict = oracle::compare(&runs, &self.cfg.oracle);
        event.verdict = Some(verdict.clone());
        let mut report = None;
        if verdict.is_bug() {
            let blame = oracle::vote(&verdict, &runs, &self.cfg.oracle);
            let cluster = oracle::cluster_key(&verdict, &blame, &runs, &self.cfg.oracle).expect("bug verdict has a key");
            let symptom = cluster.symptom;
            let report_id = self.counters.reports;
            self.counters.reports += 1;
            *self.counters.by_symptom.entry(symptom).or_default() += 1;
            for v in &blame.blamed {
                *self.counters.blame.entry(v.clone()).or_default() += 1;
            }
            let new_cluster = match self.counters.clusters.iter_mut().find(|c| c.key == cluster) {
                Some(c) => {
                    c.occurrences += 1;
                    false
                }
                None => {
                    self.counters.clusters.push(ClusterStat {
                        key: cluster.clone(),
                        first_report: report_id,
                        occurrences: 1,
                    });
                    true
                }
            };
            event.action = Action::Reported;
            event.report_id = Some(report_id);
            report = Some(BugReport {
                record: "report",
                report_id,
                iteration,
                timestamp: iteration,
                elapsed_ms: self.cfg.seconds.map(|_| self.started.elapsed().as_millis() as u64),
                symptom,
                verdict,
                blame,
                cluster,
                new_cluster,
                order: mutant.order(),
                lineage: to_steps(&mutant.lineage),
                program: mutant.program.to_string(),
                outcomes: summarize_outcomes(&runs, &self.cfg.oracle),
                rerun_count: 0,
            });
        } else if verdict == Verdict::Consistent && mutant.statically_ill.is_none() {
            if self.hashes.insert(hash.clone()) {
                let typed = dsl::validate(&mutant.program).expect("checked above");
                self.pool.push(PoolEntry {
                    typed,
                    hash,
                    lineage: mutant.lineage,
                });
                event.action = Action::Admitted;
            } else {
                event.action = Action::Duplicate;
            }
        } else {
            event.action = Action::Discarded;
        }
        StepResult { event, report }
    }

    fn budget_left(&self, start_iteration: u64) -> bool {
        let iters_ok = self
            .cfg
            .iterations
            .is_none_or(|n| self.counters.iteration - start_iteration < n);
        let time_ok = self
            .cfg
            .seconds
            .is_none_or(|s| self.started.elapsed() < Duration::from_secs_f64(s));
        iters_ok && time_ok
    }

    /// Steps until the budget is spent, handing each step to `on_step` in
    /// iteration order. The iteration budget counts from the current
    /// iteration, so a resumed campaign runs that many more.
    pub fn run_with(&mut self, mut on_step: impl FnMut(&StepResult)) -> CampaignSummary {
        self.started = Instant::now();
        let start = self.counters.iteration;
        while self.budget_left(start) {
            let r = self.step();
            on_step(&r);
        }
        self.summary()
    }

    pub fn run(&mut self) -> CampaignSummary {
        self.run_with(|_| {})
    }

    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            record: "summary",
            iterations: self.counters.iteration,
            pool_size: self.pool.len(),
            seeds_admitted: self.seeds_admitted,
            seeds_rejected: self.seeds_rejected,
            reports: self.counters.reports,
            unique_clusters: self.counters.clusters.len(),
            by_symptom: self.counters.by_symptom.clone(),
            blame_counts: self
                .registry
                .ids()
                .into_iter()
                .map(|v| (v.to_string(), self.counters.blame.get(v).copied().unwrap_or(0)))
                .collect(),
            clusters: self.counters.clusters.clone(),
        }
    }

    /// Serializes the pool and counters. Since each iteration draws from its
    /// own random stream, a resumed campaign continues the exact event
    /// sequence of an uninterrupted one.
    pub fn checkpoint(&self) -> String {
        let cp = Checkpoint {
            config: self.cfg.clone(),
            versions: self.registry.ids().into_iter().map(String::from).collect(),
            seeds_admitted: self.seeds_admitted,
            seeds_rejected: self.seeds_rejected,
            pool: self
                .pool
                .iter()
                .map(|e| CheckpointEntry {
                    program: e.program().to_string(),
                    lineage: to_steps(&e.lineage),
                })
                .collect(),
            counters: self.counters.clone(),
        };
        serde_json::to_string_pretty(&cp).expect("checkpoint serializes")
    }

    /// Restores a campaign from [`Campaign::checkpoint`] output. The
    /// registry must list the same versions; budgets are taken from `cfg`,
    /// everything else from the checkpoint.
    pub fn resume(cfg: CampaignConfig, registry: Registry, checkpoint: &str) -> Result<Self, CampaignError> {
        let bad = |m: String| CampaignError::Checkpoint(m);
        let cp: Checkpoint = serde_json::from_str(checkpoint).map_err(|e| bad(e.to_string()))?;
        let ids: Vec<String> = registry.ids().into_iter().map(String::from).collect();
        if cp.versions != ids {
            return Err(bad(format!("checkpoint versions {:?} differ from {:?}", cp.versions, ids)));
        }
        if cp.config.rng_seed != cfg.rng_seed {
            return Err(bad(format!(
                "checkpoint rng seed {} differs from {}",
                cp.config.rng_seed, cfg.rng_seed
            )));
        }
        cfg.check(&registry)?;
        let mut pool = Vec::with_capacity(cp.pool.len());
        let mut hashes = HashSet::new();
        for e in cp.pool {
            let program = dsl::parse(&e.program).map_err(|err| bad(err.to_string()))?;
            let typed = dsl::validate(&program).map_err(|err| bad(err.to_string()))?;
            let hash = program.canonical_hash();
            hashes.insert(hash.clone());
            pool.push(PoolEntry {
                typed,
                hash,
                lineage: e.lineage.into_iter().map(|s| (s.parent, s.site)).collect(),
            });
        }
        if pool.is_empty() {
            return Err(CampaignError::EmptyPool);
        }
        Ok(Campaign {
            cfg,
            registry,
            pool,
            hashes,
            seed_log: Vec::new(),
            seeds_admitted: cp.seeds_admitted,
            seeds_rejected: cp.seeds_rejected,
            counters: cp.counters,
            started: Instant::now(),
        })
    }

}
