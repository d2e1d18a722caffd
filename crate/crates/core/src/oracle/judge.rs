use std::collections::BTreeSet;

use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::{OracleConfig, Outcome, VersionRun};
use crate::tensor::TensorValue;
use crate::triage::Symptom;

/// Crash messages agree when their first this-many characters agree.
pub const CRASH_PREFIX_CHARS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Divergence {
        /// (version, outcome digest) in registry order.
        digests: Vec<(String, String)>,
        #[serde(serialize_with = "lossless_f64")]
        max_abs: f64,
        #[serde(serialize_with = "lossless_f64")]
        max_rel: f64,
    },
    CrashSome { versions: Vec<String> },
    HangSome { versions: Vec<String> },
    AllReject,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Consistent => "Consistent",
            Verdict::Divergence { .. } => "Divergence",
            Verdict::CrashSome { .. } => "CrashSome",
            Verdict::HangSome { .. } => "HangSome",
            Verdict::AllReject => "AllReject",
        }
    }

    /// Whether this verdict warrants a bug report.
    pub fn is_bug(&self) -> bool {
        !matches!(self, Verdict::Consistent | Verdict::AllReject)
    }
}

fn lossless_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&crate::dsl::format_f64(*x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Majority,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlameSet {
    pub blamed: Vec<String>,
    pub resolution: Resolution,
}

/// Deduplication key for bug reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    pub blamed: Vec<String>,
    pub symptom: Symptom,
    /// Crash message prefixes, `hang`, or the diverging observed names.
    pub signature: String,
    pub faults: Vec<String>,
}

impl std::fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {} {} faults=[{}]",
            self.blamed.join(","),
            self.symptom,
            self.signature,
            self.faults.join(",")
        )
    }
}

struct Diff {
    equal: bool,
    max_abs: f64,
    max_rel: f64,
}

fn element_diff(a: f64, b: f64, cfg: &OracleConfig) -> Diff {
    let same = |equal, d| Diff {
        equal,
        max_abs: d,
        max_rel: d,
    };
    if a.is_nan() || b.is_nan() {
        return if a.is_nan() && b.is_nan() && cfg.nan_equal {
            same(true, 0.0)
        } else {
            same(false, f64::INFINITY)
        };
    }
    if a.is_infinite() || b.is_infinite() {
        return if a == b { same(true, 0.0) } else { same(false, f64::INFINITY) };
    }
    let d = (a - b).abs();
    let m = a.abs().max(b.abs());
    Diff {
        equal: d <= cfg.abs_tol + cfg.rel_tol * m,
        max_abs: d,
        max_rel: if m == 0.0 { 0.0 } else { d / m },
    }
}

fn tensor_diff(a: &TensorValue, b: &TensorValue, cfg: &OracleConfig) -> Option<Diff> {
    if a.dtype() != b.dtype() || a.shape() != b.shape() {
        return None;
    }
    let (x, y) = (a.dense_values(), b.dense_values());
    let mut out = Diff {
        equal: true,
        max_abs: 0.0,
        max_rel: 0.0,
    };
    for i in 0..x.len() {
        let d = element_diff(x.get_f64(i), y.get_f64(i), cfg);
        out.equal &= d.equal;
        out.max_abs = out.max_abs.max(d.max_abs);
        out.max_rel = out.max_rel.max(d.max_rel);
    }
    Some(out)
}

/// Elementwise comparison of two value outcomes; `None` when the observed
/// names, dtypes or shapes differ.
fn value_diff(a: &[(String, TensorValue)], b: &[(String, TensorValue)], cfg: &OracleConfig) -> Option<Diff> {
    if a.len() != b.len() {
        return None;
    }
    let mut out = Diff {
        equal: true,
        max_abs: 0.0,
        max_rel: 0.0,
    };
    for ((na, ta), (nb, tb)) in a.iter().zip(b) {
        if na != nb {
            return None;
        }
        let d = tensor_diff(ta, tb, cfg)?;
        out.equal &= d.equal;
        out.max_abs = out.max_abs.max(d.max_abs);
        out.max_rel = out.max_rel.max(d.max_rel);
    }
    Some(out)
}

fn crash_prefix(message: &str) -> String {
    message.chars().take(CRASH_PREFIX_CHARS).collect()
}

/// The tolerance predicate lifted to whole outcomes.
pub fn outcomes_equal(a: &Outcome, b: &Outcome, cfg: &OracleConfig) -> bool {
    match (a, b) {
        (Outcome::Value(x), Outcome::Value(y)) => value_diff(x, y, cfg).is_some_and(|d| d.equal),
        (Outcome::Crash { message: m1, .. }, Outcome::Crash { message: m2, .. }) => crash_prefix(m1) == crash_prefix(m2),
        (Outcome::Hang, Outcome::Hang) => true,
        (Outcome::Rejected { error: e1, stmt: s1 }, Outcome::Rejected { error: e2, stmt: s2 }) => e1 == e2 && s1 == s2,
        _ => false,
    }
}

/// Connected components of the pairwise equality relation, as lists of
/// indices into `runs`; each list ascending, lists ordered by first member.
pub fn equality_classes(runs: &[VersionRun], cfg: &OracleConfig) -> Vec<Vec<usize>> {
    let n = runs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if outcomes_equal(&runs[i].outcome, &runs[j].outcome, cfg) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match classes.iter_mut().find(|c| find(&mut parent, c[0]) == root) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

fn grid(x: f64, step: f64) -> String {
    if !x.is_finite() {
        return crate::dsl::format_f64(x);
    }
    let q = if step > 0.0 { (x / step).round() } else { x };
    // fold -0.0 into 0.0
    format!("{:?}", q + 0.0)
}

/// Short hash of an outcome; values are snapped to the `abs_tol` grid so
/// sub-tolerance noise rarely changes the digest.
pub fn digest(outcome: &Outcome, cfg: &OracleConfig) -> String {
    let mut h = Sha256::new();
    match outcome {
        Outcome::Value(vals) => {
            h.update(b"value");
            for (name, t) in vals {
                h.update(format!("|{name}:{}:{}:", t.dtype(), t.shape()).as_bytes());
                let d = t.dense_values();
                for i in 0..d.len() {
                    h.update(grid(d.get_f64(i), cfg.abs_tol).as_bytes());
                    h.update(b",");
                }
            }
        }
        Outcome::Crash { message, .. } => h.update(format!("crash|{}", crash_prefix(message)).as_bytes()),
        Outcome::Hang => h.update(b"hang"),
        Outcome::Rejected { error, stmt } => h.update(format!("rejected|{stmt}|{error}").as_bytes()),
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn ids_where(runs: &[VersionRun], pred: impl Fn(&Outcome) -> bool) -> Vec<String> {
    runs.iter().filter(|r| pred(&r.outcome)).map(|r| r.version.clone()).collect()
}

/// Judges a cross-version run. Crashes dominate hangs, which dominate value
/// and rejection differences.
pub fn compare(runs: &[VersionRun], cfg: &OracleConfig) -> Verdict {
    let crashed = ids_where(runs, |o| matches!(o, Outcome::Crash { .. }));
    if !crashed.is_empty() {
        return Verdict::CrashSome { versions: crashed };
    }
    let hung = ids_where(runs, |o| matches!(o, Outcome::Hang));
    if !hung.is_empty() {
        return Verdict::HangSome { versions: hung };
    }
    if runs.iter().all(|r| matches!(r.outcome, Outcome::Rejected { .. })) {
        return Verdict::AllReject;
    }
    if equality_classes(runs, cfg).len() <= 1 {
        return Verdict::Consistent;
    }
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            if let (Outcome::Value(x), Outcome::Value(y)) = (&a.outcome, &b.outcome) {
                if let Some(d) = value_diff(x, y, cfg) {
                    max_abs = max_abs.max(d.max_abs);
                    max_rel = max_rel.max(d.max_rel);
                }
            }
        }
    }
    Verdict::Divergence {
        digests: runs.iter().map(|r| (r.version.clone(), digest(&r.outcome, cfg))).collect(),
        max_abs,
        max_rel,
    }
}

/// Majority voting: when one equality class of values or rejections holds a
/// strict majority, every version outside it is blamed. Otherwise the
/// crashing and hanging versions (possibly none) are blamed, unresolved.
pub fn vote(verdict: &Verdict, runs: &[VersionRun], cfg: &OracleConfig) -> BlameSet {
    if matches!(verdict, Verdict::Consistent) {
        return BlameSet {
            blamed: Vec::new(),
            resolution: Resolution::Unresolved,
        };
    }
    let classes = equality_classes(runs, cfg);
    let majority = classes.iter().find(|c| {
        2 * c.len() > runs.len() && matches!(runs[c[0]].outcome, Outcome::Value(_) | Outcome::Rejected { .. })
    });
    match majority {
        Some(c) if c.len() < runs.len() => BlameSet {
            blamed: (0..runs.len())
                .filter(|i| !c.contains(i))
                .map(|i| runs[i].version.clone())
                .collect(),
            resolution: Resolution::Majority,
        },
        _ => BlameSet {
            blamed: ids_where(runs, |o| matches!(o, Outcome::Crash { .. } | Outcome::Hang)),
            resolution: Resolution::Unresolved,
        },
    }
}

pub fn classify_symptom(verdict: &Verdict) -> Option<Symptom> {
    match verdict {
        Verdict::Consistent => None,
        Verdict::CrashSome { .. } => Some(Symptom::Crash),
        Verdict::HangSome { .. } => Some(Symptom::Hang),
        Verdict::Divergence { .. } => Some(Symptom::IncorrectFunctionality),
        Verdict::AllReject => Some(Symptom::BuildFailure),
    }
}

/// Names observed by some version whose values do not all agree.
fn diverging_names(runs: &[VersionRun], cfg: &OracleConfig) -> BTreeSet<String> {
    let values: Vec<&Vec<(String, TensorValue)>> = runs
        .iter()
        .filter_map(|r| match &r.outcome {
            Outcome::Value(v) => Some(v),
            _ => None,
        })
        .collect();
    let mut out = BTreeSet::new();
    for v in &values {
        for (name, t) in v.iter() {
            let agrees = values.iter().all(|w| {
                w.iter()
                    .find(|(n, _)| n == name)
                    .and_then(|(_, u)| tensor_diff(t, u, cfg))
                    .is_some_and(|d| d.equal)
            });
            if !agrees {
                out.insert(name.clone());
            }
        }
    }
    out
}

pub fn cluster_key(verdict: &Verdict, blame: &BlameSet, runs: &[VersionRun], cfg: &OracleConfig) -> Option<ClusterKey> {
    let symptom = classify_symptom(verdict)?;
    let signature = match verdict {
        Verdict::CrashSome { .. } => {
            let prefixes: BTreeSet<String> = runs
                .iter()
                .filter_map(|r| match &r.outcome {
                    Outcome::Crash { message, .. } => Some(crash_prefix(message)),
                    _ => None,
                })
                .collect();
            format!("crash:{}", prefixes.into_iter().collect::<Vec<_>>().join("|"))
        }
        Verdict::HangSome { .. } => "hang".to_string(),
        Verdict::AllReject => "rejected".to_string(),
        _ => {
            let mut parts: Vec<String> = diverging_names(runs, cfg).into_iter().collect();
            if runs.iter().any(|r| matches!(r.outcome, Outcome::Rejected { .. })) {
                parts.push("<rejected>".into());
            }
            format!("diverges:{}", parts.join(","))
        }
    };
    let from: Vec<&VersionRun> = if blame.blamed.is_empty() {
        runs.iter().collect()
    } else {
        runs.iter().filter(|r| blame.blamed.contains(&r.version)).collect()
    };
    let faults: BTreeSet<String> = from.iter().flat_map(|r| r.fired.iter().cloned()).collect();
    Some(ClusterKey {
        blamed: blame.blamed.clone(),
        symptom,
        signature,
        faults: faults.into_iter().collect(),
    })
}
