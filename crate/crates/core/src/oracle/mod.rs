//! Runs one program on every version, compares the outcomes and assigns
//! blame by voting.

mod judge;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coverage::{CoverageSink, NoCoverage};
use crate::dsl::{Program, Stmt};
use crate::registry::{OpOutcome, Registry, RegistryError};
use crate::tensor::{self, TensorValue};

pub use judge::{
    classify_symptom, cluster_key, compare, digest, equality_classes, outcomes_equal, vote, BlameSet, ClusterKey,
    Resolution, Verdict,
};

/// Work units one program run may consume before it counts as a hang.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub nan_equal: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            abs_tol: 1e-6,
            rel_tol: 1e-5,
            nan_equal: true,
        }
    }
}

impl OracleConfig {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        Ok(())
    }
}

/// What one version did with one program.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Observed values in observation order, one entry per distinct name.
    Value(Vec<(String, TensorValue)>),
    Crash { message: String, stmt: usize },
    Hang,
    /// A static or runtime error raised by the engine itself.
    Rejected { error: String, stmt: usize },
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Value(_) => "value",
            Outcome::Crash { .. } => "crash",
            Outcome::Hang => "hang",
            Outcome::Rejected { .. } => "rejected",
        }
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Outcome::Value(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(vals) => {
                let parts: Vec<String> = vals
                    .iter()
                    .map(|(n, t)| {
                        let d = t.dense_values();
                        let xs: Vec<String> = (0..d.len()).map(|i| crate::dsl::format_f64(d.get_f64(i))).collect();
                        format!("{n}: {} {} {{{}}}", t.dtype(), t.shape(), xs.join(", "))
                    })
                    .collect();
                write!(f, "value {}", parts.join("; "))
            }
            Outcome::Crash { message, stmt } => write!(f, "crash at statement {stmt}: {message}"),
            Outcome::Hang => f.write_str("hang (step budget exhausted)"),
            Outcome::Rejected { error, stmt } => write!(f, "rejected at statement {stmt}: {error}"),
        }
    }
}

/// An outcome plus the ids of the faults that fired, in firing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub outcome: Outcome,
    pub fired: Vec<String>,
}

/// One version's execution within a cross-version run.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionRun {
    pub version: String,
    pub outcome: Outcome,
    pub fired: Vec<String>,
}

/// Interprets `program` on one version. Each application is charged its
/// cost against `step_budget`; a hang fault consumes whatever remains.
pub fn execute(
    program: &Program,
    registry: &Registry,
    version_id: &str,
    step_budget: u64,
    cov: &dyn CoverageSink,
) -> Result<Execution, RegistryError> {
    registry.get(version_id)?;
    let mut env: BTreeMap<&str, TensorValue> = BTreeMap::new();
    let mut observed: Vec<(String, TensorValue)> = Vec::new();
    let mut fired: Vec<String> = Vec::new();
    let mut used: u64 = 0;
    let done = |outcome, fired| Ok(Execution { outcome, fired });
    for (i, s) in program.statements.iter().enumerate() {
        if let Some(name) = s.binds() {
            if env.contains_key(name) {
                return done(
                    Outcome::Rejected {
                        error: format!("`{name}` is bound twice"),
                        stmt: i,
                    },
                    fired,
                );
            }
        }
        match s {
            Stmt::Let { name, value } => {
                cov.hit("graph.exec.literal");
                env.insert(name, value.clone());
            }
            Stmt::Observe { name } => {
                cov.hit("graph.exec.observe");
                let Some(v) = env.get(name.as_str()) else {
                    return done(
                        Outcome::Rejected {
                            error: format!("observed name `{name}` is unbound"),
                            stmt: i,
                        },
                        fired,
                    );
                };
                if !observed.iter().any(|(n, _)| n == name) {
                    observed.push((name.clone(), v.clone()));
                }
            }
            Stmt::Apply { name, kind, args, params } => {
                cov.hit("graph.exec.apply");
                let mut inputs = Vec::with_capacity(args.len());
                for a in args {
                    match env.get(a.as_str()) {
                        Some(v) => inputs.push(v.clone()),
                        None => {
                            return done(
                                Outcome::Rejected {
                                    error: format!("`{a}` is unbound"),
                                    stmt: i,
                                },
                                fired,
                            )
                        }
                    }
                }
                let shapes: Vec<_> = inputs.iter().map(|t| t.shape()).collect();
                used = used.saturating_add(tensor::cost(*kind, &shapes, params));
                if used > step_budget {
                    cov.hit("graph.exec.budget_exhausted");
                    return done(Outcome::Hang, fired);
                }
                let ev = registry.eval_versioned_traced(version_id, *kind, &inputs, params, cov)?;
                if let Some(f) = ev.fired {
                    if !fired.contains(&f) {
                        fired.push(f);
                    }
                }
                match ev.outcome {
                    OpOutcome::Value(v) => {
                        env.insert(name, v);
                    }
                    OpOutcome::Crash { message } => return done(Outcome::Crash { message, stmt: i }, fired),
                    OpOutcome::Hang => {
                        cov.hit("graph.exec.budget_exhausted");
                        return done(Outcome::Hang, fired);
                    }
                    OpOutcome::Error(e) => {
                        return done(
                            Outcome::Rejected {
                                error: e.to_string(),
                                stmt: i,
                            },
                            fired,
                        )
                    }
                }
            }
        }
    }
    done(Outcome::Value(observed), fired)
}

/// Executes `program` on every registered version, in registration order.
pub fn run_all(program: &Program, registry: &Registry, step_budget: u64) -> Vec<VersionRun> {
    registry
        .versions()
        .iter()
        .map(|v| {
            let ex = execute(program, registry, &v.id, step_budget, &NoCoverage).expect("version is registered");
            VersionRun {
                version: v.id.clone(),
                outcome: ex.outcome,
                fired: ex.fired,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ArchLevel;
    use crate::dsl::parse;
    use crate::registry::{EngineVersion, Fault, FaultEffect, Trigger};
    use crate::tensor::OpKind;

    const ADADELTA: &str = "let v = tensor f32 [2] {1, 2}\n\
                            let g = tensor f16 [2] {0.1, 0.1}\n\
                            let u = adadelta_update(v, g; eps=1e-8, lr=1.0, rho=0.95)\n\
                            observe u";

    fn fault(id: &str, op: OpKind, effect: FaultEffect) -> Fault {
        Fault {
            id: id.into(),
            trigger: Trigger {
                op: Some(op),
                ..Trigger::default()
            },
            effect,
            component: ArchLevel::OperationImpl,
            description: String::new(),
        }
    }

    fn registry(faulty: Option<(usize, Fault)>) -> Registry {
        let mut r = Registry::new();
        for (i, id) in ["v1", "v2", "v3", "v4"].iter().enumerate() {
            let mut v = EngineVersion::new(*id);
            if let Some((at, f)) = &faulty {
                if *at == i {
                    v = v.with_fault(f.clone());
                }
            }
            r.register(v).unwrap();
        }
        r
    }

    #[test]
    fn faultless_versions_agree() {
        let runs = run_all(&parse(ADADELTA).unwrap(), &registry(None), DEFAULT_STEP_BUDGET);
        assert_eq!(runs.len(), 4);
        assert!(runs.windows(2).all(|w| w[0].outcome == w[1].outcome));
        assert!(runs[0].outcome.is_value());
    }

    #[test]
    fn crash_fault_only_hits_its_version() {
        let f = fault(
            "c",
            OpKind::AdadeltaUpdate,
            FaultEffect::CrashTrap {
                message: "Aborted (core dumped)".into(),
            },
        );
        let runs = run_all(&parse(ADADELTA).unwrap(), &registry(Some((2, f))), DEFAULT_STEP_BUDGET);
        for (i, r) in runs.iter().enumerate() {
            assert_eq!(matches!(r.outcome, Outcome::Crash { stmt: 2, .. }), i == 2);
        }
        assert_eq!(runs[2].fired, vec!["c".to_string()]);
    }

    #[test]
    fn hang_fault_and_budget() {
        let f = fault("h", OpKind::AdadeltaUpdate, FaultEffect::HangLoop);
        let runs = run_all(&parse(ADADELTA).unwrap(), &registry(Some((0, f))), DEFAULT_STEP_BUDGET);
        assert_eq!(runs[0].outcome, Outcome::Hang);
        assert!(runs[1].outcome.is_value());
        // a budget below the program's cost exhausts on every version
        let runs = run_all(&parse(ADADELTA).unwrap(), &registry(None), 1);
        assert!(runs.iter().all(|r| r.outcome == Outcome::Hang));
    }

    #[test]
    fn runtime_traps_are_rejections() {
        let p = parse("let a = tensor i32 [1] {1}\nlet z = tensor i32 [1] {0}\nlet d = div(a, z)\nobserve d").unwrap();
        let ex = execute(&p, &registry(None), "v1", DEFAULT_STEP_BUDGET, &NoCoverage).unwrap();
        assert!(matches!(ex.outcome, Outcome::Rejected { stmt: 2, .. }));
        assert!(execute(&p, &registry(None), "v9", 10, &NoCoverage).is_err());
    }

    #[test]
    fn observed_names_are_exactly_the_observations() {
        let p = parse("let a = tensor f32 [1] {1}\nlet b = neg(a)\nobserve b\nobserve a\nobserve b").unwrap();
        let ex = execute(&p, &registry(None), "v1", DEFAULT_STEP_BUDGET, &NoCoverage).unwrap();
        match ex.outcome {
            Outcome::Value(v) => {
                let names: Vec<&str> = v.iter().map(|(n, _)| n.as_str()).collect();
                assert_eq!(names, ["b", "a"]);
            }
            o => panic!("{o}"),
        }
    }
}
