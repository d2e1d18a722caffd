//! Coverage instrumentation of the engine and the reports built on it.
//!
//! Kernels, shape rules and utilities declare instrumentation points up front
//! (see [`UNIVERSE`]); evaluation reports each point it passes through to a
//! [`CoverageSink`]. A corpus's coverage is the set of points touched while
//! running all of its programs.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::arch::ArchLevel;
use crate::dsl::Program;
use crate::registry::{Registry, RegistryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    Line,
    Branch,
    Function,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::Line, ElementKind::Branch, ElementKind::Function];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageElement {
    pub id: &'static str,
    pub kind: ElementKind,
    pub component: ArchLevel,
}

const fn el(id: &'static str, kind: ElementKind, component: ArchLevel) -> CoverageElement {
    CoverageElement { id, kind, component }
}

use ArchLevel::{EnvDependentProcessing as Env, GeneralUtility as Util, GraphLevelImpl as Graph, OperationImpl as OpImpl, UserLevelAPI as Api};
use ElementKind::{Branch, Function, Line};

/// Every instrumentation point the engine declares.
pub const UNIVERSE: &[CoverageElement] = &[
    el("api.add", Function, Api),
    el("api.sub", Function, Api),
    el("api.mul", Function, Api),
    el("api.div", Function, Api),
    el("api.neg", Function, Api),
    el("api.sqrt", Function, Api),
    el("api.relu", Function, Api),
    el("api.matmul", Function, Api),
    el("api.reshape", Function, Api),
    el("api.transpose", Function, Api),
    el("api.reduce_sum", Function, Api),
    el("api.softmax", Function, Api),
    el("api.cast", Function, Api),
    el("api.adadelta_update", Function, Api),
    el("api.param.check", Line, Api),
    el("api.param.default", Branch, Api),
    el("api.arity.error", Branch, Api),
    el("graph.exec.literal", Line, Graph),
    el("graph.exec.apply", Line, Graph),
    el("graph.exec.observe", Line, Graph),
    el("graph.exec.budget_exhausted", Branch, Graph),
    el("shape.elementwise", Line, Graph),
    el("shape.elementwise.mismatch", Branch, Graph),
    el("shape.matmul", Line, Graph),
    el("shape.matmul.mismatch", Branch, Graph),
    el("shape.reshape", Line, Graph),
    el("shape.reshape.mismatch", Branch, Graph),
    el("shape.transpose", Line, Graph),
    el("shape.transpose.rank", Branch, Graph),
    el("shape.reduce.axis", Line, Graph),
    el("shape.reduce.negative_axis", Branch, Graph),
    el("shape.reduce.out_of_range", Branch, Graph),
    el("shape.softmax", Line, Graph),
    el("shape.softmax.scalar", Branch, Graph),
    el("dtype.promote", Line, Graph),
    el("dtype.promote.bool_error", Branch, Graph),
    el("dtype.numeric_required", Branch, Graph),
    el("dtype.float_required", Branch, Graph),
    el("kernel.binary.float", Line, OpImpl),
    el("kernel.binary.int", Line, OpImpl),
    el("kernel.div.int_zero", Branch, OpImpl),
    el("kernel.unary.float", Line, OpImpl),
    el("kernel.unary.int", Line, OpImpl),
    el("kernel.sqrt.negative", Branch, OpImpl),
    el("kernel.relu", Line, OpImpl),
    el("kernel.matmul.float", Line, OpImpl),
    el("kernel.matmul.int", Line, OpImpl),
    el("kernel.reshape", Line, OpImpl),
    el("kernel.transpose", Line, OpImpl),
    el("kernel.reduce.float", Line, OpImpl),
    el("kernel.reduce.int", Line, OpImpl),
    el("kernel.softmax", Line, OpImpl),
    el("kernel.softmax.nonfinite", Branch, OpImpl),
    el("kernel.cast", Line, OpImpl),
    el("kernel.adadelta", Line, OpImpl),
    el("kernel.adadelta.steps_error", Branch, OpImpl),
    el("util.cast.identity", Branch, Util),
    el("util.cast.float_to_int", Line, Util),
    el("util.cast.nan_trap", Branch, Util),
    el("util.cast.saturate", Branch, Util),
    el("util.cast.int_to_float", Line, Util),
    el("util.cast.from_bool", Line, Util),
    el("util.cast.to_bool", Line, Util),
    el("util.wrap.i32", Line, Util),
    el("util.round.f16", Line, Util),
    el("util.round.f32", Line, Util),
    el("util.densify.sparse", Function, Util),
    el("util.densify.ragged", Function, Util),
    el("env.f16.emulation", Line, Env),
    el("env.f16.overflow", Branch, Env),
    el("env.float.inf_produced", Branch, Env),
    el("env.float.nan_produced", Branch, Env),
    el("env.float.subnormal", Branch, Env),
    el("env.int.overflow_wrap", Branch, Env),
];

pub fn element(id: &str) -> Option<&'static CoverageElement> {
    UNIVERSE.iter().find(|e| e.id == id)
}

/// Receives instrumentation hits. Implementations must tolerate hits from
/// several threads.
pub trait CoverageSink: Sync {
    fn hit(&self, id: &'static str);
}

/// Discards every hit.
pub struct NoCoverage;

impl CoverageSink for NoCoverage {
    #[inline]
    fn hit(&self, _id: &'static str) {}
}

/// Accumulates hit element ids.
#[derive(Default)]
pub struct CoverageRecorder {
    hits: Mutex<BTreeSet<&'static str>>,
}

impl CoverageRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_set(self, label: impl Into<String>) -> CoverageSet {
        let hits = self.hits.into_inner().unwrap_or_else(|e| e.into_inner());
        CoverageSet {
            label: label.into(),
            covered: hits.into_iter().map(str::to_owned).collect(),
        }
    }
}

impl CoverageSink for CoverageRecorder {
    fn hit(&self, id: &'static str) {
        debug_assert!(element(id).is_some(), "undeclared coverage element {id}");
        self.hits.lock().unwrap_or_else(|e| e.into_inner()).insert(id);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSet {
    pub label: String,
    pub covered: BTreeSet<String>,
}

impl CoverageSet {
    pub fn new(label: impl Into<String>, covered: impl IntoIterator<Item = String>) -> Self {
        CoverageSet {
            label: label.into(),
            covered: covered.into_iter().collect(),
        }
    }

    /// One `id<TAB>component` line per covered element.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for id in &self.covered {
            let component = element(id).map_or("unknown", |e| e.component.name());
            out.push_str(&format!("{id}\t{component}\n"));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CoverageError {
    #[error("overlap needs at least 2 sets, got {0}")]
    TooFewSets(usize),
    #[error("overlap supports at most 3 sets, got {0}")]
    TooManySets(usize),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Executes every program on one version and returns the union of touched
/// elements.
pub fn collect(
    label: impl Into<String>,
    programs: &[Program],
    registry: &Registry,
    version_id: &str,
    step_budget: u64,
) -> Result<CoverageSet, CoverageError> {
    registry.get(version_id)?;
    let recorder = CoverageRecorder::new();
    for p in programs {
        crate::oracle::execute(p, registry, version_id, step_budget, &recorder)?;
    }
    Ok(recorder.into_set(label))
}

/// Percentage with two decimals, computed in integer hundredths (half up).
pub fn percent_hundredths(part: usize, total: usize) -> u64 {
    if total == 0 {
        return 0;
    }
    ((part as u128 * 20000 + total as u128) / (2 * total as u128)) as u64
}

pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageRow {
    /// `None` for the overall row.
    pub component: Option<ArchLevel>,
    pub covered: usize,
    pub total: usize,
    pub percent_hundredths: u64,
    /// Covered/total per element kind, in [`ElementKind::ALL`] order.
    pub by_kind: [(usize, usize); 3],
}

impl CoverageRow {
    pub fn percent(&self) -> f64 {
        self.percent_hundredths as f64 / 100.0
    }

    pub fn label(&self) -> &'static str {
        self.component.map_or("Overall", ArchLevel::name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageTable {
    pub label: String,
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn overall(&self) -> &CoverageRow {
        self.rows.last().expect("overall row")
    }
}

impl fmt::Display for CoverageTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "coverage: {}", self.label)?;
        writeln!(
            f,
            "{:<24} {:>8} {:>8} {:>8}  {:>9} {:>9} {:>9}",
            "component", "covered", "total", "percent", "line", "branch", "function"
        )?;
        for r in &self.rows {
            let kinds: Vec<String> = r.by_kind.iter().map(|(c, t)| format!("{c}/{t}")).collect();
            writeln!(
                f,
                "{:<24} {:>8} {:>8} {:>7}%  {:>9} {:>9} {:>9}",
                r.label(),
                r.covered,
                r.total,
                format_hundredths(r.percent_hundredths),
                kinds[0],
                kinds[1],
                kinds[2]
            )?;
        }
        Ok(())
    }
}

fn row(component: Option<ArchLevel>, set: &CoverageSet, elements: &[&CoverageElement]) -> CoverageRow {
    let covered = elements.iter().filter(|e| set.covered.contains(e.id)).count();
    let mut by_kind = [(0, 0); 3];
    for (slot, kind) in by_kind.iter_mut().zip(ElementKind::ALL) {
        let of_kind: Vec<_> = elements.iter().filter(|e| e.kind == kind).collect();
        *slot = (of_kind.iter().filter(|e| set.covered.contains(e.id)).count(), of_kind.len());
    }
    CoverageRow {
        component,
        covered,
        total: elements.len(),
        percent_hundredths: percent_hundredths(covered, elements.len()),
        by_kind,
    }
}

/// Per-component coverage rows followed by an overall row.
pub fn coverage_table(set: &CoverageSet, universe: &[CoverageElement]) -> CoverageTable {
    let mut rows = Vec::with_capacity(ArchLevel::ALL.len() + 1);
    for level in ArchLevel::ALL {
        let elements: Vec<_> = universe.iter().filter(|e| e.component == level).collect();
        rows.push(row(Some(level), set, &elements));
    }
    let all: Vec<_> = universe.iter().collect();
    rows.push(row(None, set, &all));
    CoverageTable {
        label: set.label.clone(),
        rows,
    }
}

/// One region of a Venn diagram: elements in exactly the member sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    /// Bit `i` set iff input set `i` is a member.
    pub mask: u8,
    pub members: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Overlap {
    pub labels: Vec<String>,
    pub regions: Vec<Region>,
}

impl Overlap {
    pub fn region(&self, mask: u8) -> usize {
        self.regions.iter().find(|r| r.mask == mask).map_or(0, |r| r.count)
    }

    pub fn union_size(&self) -> usize {
        self.regions.iter().map(|r| r.count).sum()
    }
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<40} {:>8}", "region", "count")?;
        for r in &self.regions {
            let name = if r.members.len() == 1 {
                format!("only {}", r.members[0])
            } else {
                r.members.join(" & ")
            };
            writeln!(f, "{name:<40} {:>8}", r.count)?;
        }
        writeln!(f, "{:<40} {:>8}", "union", self.union_size())
    }
}

/// Counts for each of the `2^n - 1` nonempty regions of 2 or 3 sets.
pub fn overlap(sets: &[CoverageSet]) -> Result<Overlap, CoverageError> {
    let n = sets.len();
    if n > 3 {
        return Err(CoverageError::TooManySets(n));
    }
    if n < 2 {
        return Err(CoverageError::TooFewSets(n));
    }
    let mut counts = vec![0usize; 1 << n];
    let union: BTreeSet<&String> = sets.iter().flat_map(|s| &s.covered).collect();
    for id in union {
        let mask = sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.covered.contains(id))
            .fold(0usize, |m, (i, _)| m | (1 << i));
        counts[mask] += 1;
    }
    // order: singles first, then pairs, then the triple
    let mut masks: Vec<usize> = (1..1 << n).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let regions = masks
        .into_iter()
        .map(|m| Region {
            mask: m as u8,
            members: (0..n).filter(|i| m & (1 << i) != 0).map(|i| sets[i].label.clone()).collect(),
            count: counts[m],
        })
        .collect();
    Ok(Overlap {
        labels: sets.iter().map(|s| s.label.clone()).collect(),
        regions,
    })
}
