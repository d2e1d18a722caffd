//! Named engine versions, each the base engine plus injected faults.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::ArchLevel;
use crate::coverage::{CoverageSink, NoCoverage};
use crate::tensor::{self, Buffer, DType, EngineError, OpKind, ParamValue, Params, Shape, StructureKind, TensorValue};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("version `{0}` is already registered")]
    DuplicateVersion(String),
    #[error("unknown version `{0}`")]
    UnknownVersion(String),
    #[error("fault `{fault}` is declared twice for version `{version}`")]
    DuplicateFault { version: String, fault: String },
    #[error("fault manifest: {0}")]
    Manifest(String),
}

/// Condition on a numeric parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamCondition {
    Zero,
    Negative,
    Nan,
    NonFinite,
    /// Magnitude at least 1e300 (floats) or 2^62 (integers).
    Extreme,
}

impl ParamCondition {
    fn holds(self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamCondition::Zero, ParamValue::Int(i)) => *i == 0,
            (ParamCondition::Zero, ParamValue::Float(x)) => *x == 0.0,
            (ParamCondition::Negative, ParamValue::Int(i)) => *i < 0,
            (ParamCondition::Negative, ParamValue::Float(x)) => *x < 0.0,
            (ParamCondition::Nan, ParamValue::Float(x)) => x.is_nan(),
            (ParamCondition::NonFinite, ParamValue::Float(x)) => !x.is_finite(),
            (ParamCondition::Extreme, ParamValue::Int(i)) => i.unsigned_abs() >= 1 << 62,
            (ParamCondition::Extreme, ParamValue::Float(x)) => x.abs() >= 1e300,
            _ => false,
        }
    }
}

/// Pure predicate over an op application. Every field that is set must hold.
///
/// `dtype`, `rank` and `structure` are checked together against input `arg`
/// when it is set, otherwise against at least one input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<OpKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<DType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureKind>,
    /// Inputs have differing dtypes (`true`) or all share one (`false`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed_dtypes: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_is: Option<ParamCondition>,
}

impl Trigger {
    pub fn matches(&self, kind: OpKind, inputs: &[TensorValue], params: &Params) -> bool {
        if self.op.is_some_and(|op| op != kind) {
            return false;
        }
        let input_ok = |t: &TensorValue| {
            self.dtype.is_none_or(|d| t.dtype() == d)
                && self.rank.is_none_or(|r| t.shape().rank() == r)
                && self.structure.is_none_or(|s| t.structure_kind() == s)
        };
        let inspects_input = self.dtype.is_some() || self.rank.is_some() || self.structure.is_some();
        match self.arg {
            Some(i) => {
                if !inputs.get(i).is_some_and(input_ok) {
                    return false;
                }
            }
            None if inspects_input
                && !inputs.iter().any(input_ok) => {
                    return false;
                }
            None => {}
        }
        if let Some(mixed) = self.mixed_dtypes {
            let differ = inputs.windows(2).any(|w| w[0].dtype() != w[1].dtype());
            if differ != mixed {
                return false;
            }
        }
        match (&self.param, self.param_is) {
            (Some(name), cond) => match params.get(name) {
                Some(v) => cond.is_none_or(|c| c.holds(v)),
                None => false,
            },
            (None, Some(c)) => params.values().any(|v| c.holds(v)),
            (None, None) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultEffect {
    /// Output payload becomes `x * scale + offset`, re-rounded to the dtype.
    ValuePerturb {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    CrashTrap { message: String },
    HangLoop,
    /// Output extent `dim` changes by `delta`; the flat payload is truncated
    /// or zero-padded to match.
    ShapeSkew { dim: usize, delta: i64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub id: String,
    pub trigger: Trigger,
    pub effect: FaultEffect,
    pub component: ArchLevel,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineVersion {
    pub id: String,
    pub faults: Vec<Fault>,
}

impl EngineVersion {
    pub fn new(id: impl Into<String>) -> Self {
        EngineVersion {
            id: id.into(),
            faults: Vec::new(),
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }
}

/// Result of one op evaluation on one version.
#[derive(Debug, Clone, PartialEq)]
pub enum OpOutcome {
    Value(TensorValue),
    Crash { message: String },
    Hang,
    Error(EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub outcome: OpOutcome,
    /// Id of the fault that fired, if any.
    pub fired: Option<String>,
}

/// Ordered set of engine versions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    versions: Vec<EngineVersion>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Versions with the given ids and no faults.
    pub fn faultless<S: AsRef<str>>(ids: &[S]) -> Result<Self, RegistryError> {
        let mut r = Registry::new();
        for id in ids {
            r.register(EngineVersion::new(id.as_ref()))?;
        }
        Ok(r)
    }

    pub fn register(&mut self, version: EngineVersion) -> Result<(), RegistryError> {
        if self.versions.iter().any(|v| v.id == version.id) {
            return Err(RegistryError::DuplicateVersion(version.id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &version.faults {
            if !seen.insert(&f.id) {
                return Err(RegistryError::DuplicateFault {
                    version: version.id.clone(),
                    fault: f.id.clone(),
                });
            }
        }
        self.versions.push(version);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EngineVersion, RegistryError> {
        self.versions
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| RegistryError::UnknownVersion(id.to_string()))
    }

    /// Versions in registration order.
    pub fn versions(&self) -> &[EngineVersion] {
        &self.versions
    }

    pub fn ids(&self) -> Vec<&str> {
        self.versions.iter().map(|v| v.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    /// Sub-registry with the given ids, in the given order.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Registry, RegistryError> {
        let mut r = Registry::new();
        for id in ids {
            r.register(self.get(id.as_ref())?.clone())?;
        }
        Ok(r)
    }

    /// Sub-registry with the first `n` versions.
    pub fn first(&self, n: usize) -> Result<Registry, RegistryError> {
        if n > self.versions.len() {
            return Err(RegistryError::Manifest(format!(
                "requested {n} versions but only {} are declared",
                self.versions.len()
            )));
        }
        Ok(Registry {
            versions: self.versions[..n].to_vec(),
        })
    }

    /// Version ids on which a fault id is present.
    pub fn versions_with_fault(&self, fault_id: &str) -> Vec<&str> {
        self.versions
            .iter()
            .filter(|v| v.faults.iter().any(|f| f.id == fault_id))
            .map(|v| v.id.as_str())
            .collect()
    }

    pub fn eval_versioned(
        &self,
        version_id: &str,
        kind: OpKind,
        inputs: &[TensorValue],
        params: &Params,
    ) -> Result<Evaluation, RegistryError> {
        self.eval_versioned_traced(version_id, kind, inputs, params, &NoCoverage)
    }

    /// Evaluates one op under a version's fault set. The first fault whose
    /// trigger matches fires; crash and hang faults pre-empt evaluation,
    /// value and shape faults rewrite a successful result.
    pub fn eval_versioned_traced(
        &self,
        version_id: &str,
        kind: OpKind,
        inputs: &[TensorValue],
        params: &Params,
        cov: &dyn CoverageSink,
    ) -> Result<Evaluation, RegistryError> {
        let version = self.get(version_id)?;
        let fault = version.faults.iter().find(|f| f.trigger.matches(kind, inputs, params));
        let fired = fault.map(|f| f.id.clone());
        let outcome = match fault.map(|f| &f.effect) {
            Some(FaultEffect::CrashTrap { message }) => OpOutcome::Crash { message: message.clone() },
            Some(FaultEffect::HangLoop) => OpOutcome::Hang,
            effect => match tensor::eval_traced(kind, inputs, params, cov) {
                Err(e) => OpOutcome::Error(e),
                Ok(v) => match effect {
                    Some(FaultEffect::ValuePerturb { scale, offset }) => perturb(&v, *scale, *offset),
                    Some(FaultEffect::ShapeSkew { dim, delta }) => skew(&v, *dim, *delta),
                    _ => OpOutcome::Value(v),
                },
            },
        };
        Ok(Evaluation { outcome, fired })
    }
}

fn perturb(v: &TensorValue, scale: f64, offset: f64) -> OpOutcome {
    let values = match v.values() {
        Buffer::Float(x) => Buffer::Float(x.iter().map(|x| x * scale + offset).collect()),
        Buffer::Int(x) => Buffer::Int(
            x.iter()
                .map(|x| {
                    let y = *x as f64 * scale + offset;
                    if y.is_finite() {
                        y.trunc() as i64
                    } else {
                        *x
                    }
                })
                .collect(),
        ),
        Buffer::Bool(b) => Buffer::Bool(b.clone()),
    };
    to_outcome(v.replace_dense(v.shape().clone(), values))
}

fn skew(v: &TensorValue, dim: usize, delta: i64) -> OpOutcome {
    let mut dims = v.shape().dims().to_vec();
    let Some(extent) = dims.get_mut(dim) else {
        return OpOutcome::Value(v.clone());
    };
    *extent = (*extent as i64).saturating_add(delta).max(0) as usize;
    let shape = match Shape::new(dims) {
        Ok(s) => s,
        Err(e) => return OpOutcome::Error(e),
    };
    let mut values = v.values().clone();
    values.resize(shape.element_count());
    to_outcome(v.replace_dense(shape, values))
}

fn to_outcome(r: Result<TensorValue, EngineError>) -> OpOutcome {
    match r {
        Ok(v) => OpOutcome::Value(v),
        Err(e) => OpOutcome::Error(e),
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    versions: Vec<String>,
    #[serde(default, rename = "fault")]
    faults: Vec<ManifestFault>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ManifestFault {
    id: String,
    version: String,
    component: ArchLevel,
    #[serde(default)]
    description: String,
    #[serde(default)]
    trigger: Trigger,
    effect: FaultEffect,
}

impl Registry {
    /// Loads a fault manifest (TOML): a `versions` list followed by
    /// `[[fault]]` records, one per (fault, version) pair.
    pub fn from_manifest(text: &str) -> Result<Registry, RegistryError> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| RegistryError::Manifest(e.to_string()))?;
        let mut versions: Vec<EngineVersion> = Vec::new();
        for id in &manifest.versions {
            if versions.iter().any(|v| &v.id == id) {
                return Err(RegistryError::DuplicateVersion(id.clone()));
            }
            versions.push(EngineVersion::new(id.clone()));
        }
        for f in manifest.faults {
            let Some(v) = versions.iter_mut().find(|v| v.id == f.version) else {
                return Err(RegistryError::UnknownVersion(f.version));
            };
            v.faults.push(Fault {
                id: f.id,
                trigger: f.trigger,
                effect: f.effect,
                component: f.component,
                description: f.description,
            });
        }
        let mut r = Registry::new();
        for v in versions {
            r.register(v)?;
        }
        Ok(r)
    }

    /// Serializes back to manifest form.
    pub fn to_manifest(&self) -> String {
        let manifest = Manifest {
            versions: self.versions.iter().map(|v| v.id.clone()).collect(),
            faults: self
                .versions
                .iter()
                .flat_map(|v| {
                    v.faults.iter().map(|f| ManifestFault {
                        id: f.id.clone(),
                        version: v.id.clone(),
                        component: f.component,
                        description: f.description.clone(),
                        trigger: f.trigger.clone(),
                        effect: f.effect.clone(),
                    })
                })
                .collect(),
        };
        toml::to_string(&manifest).expect("manifest serializes")
    }
}

impl fmt::Display for FaultEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultEffect::ValuePerturb { scale, offset } => write!(f, "value-perturb(x*{scale}+{offset})"),
            FaultEffect::CrashTrap { message } => write!(f, "crash({message})"),
            FaultEffect::HangLoop => f.write_str("hang"),
            FaultEffect::ShapeSkew { dim, delta } => write!(f, "shape-skew(dim {dim} {delta:+})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dtype: DType, dims: &[usize], data: &[f64]) -> TensorValue {
        TensorValue::from_f64(dtype, dims, data).unwrap()
    }

    fn fault(id: &str, trigger: Trigger, effect: FaultEffect) -> Fault {
        Fault {
            id: id.into(),
            trigger,
            effect,
            component: ArchLevel::OperationImpl,
            description: String::new(),
        }
    }

    fn value(e: Evaluation) -> TensorValue {
        match e.outcome {
            OpOutcome::Value(v) => v,
            other => panic!("expected value, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_version_rejected() {
        let mut r = Registry::new();
        r.register(EngineVersion::new("v1")).unwrap();
        assert_eq!(
            r.register(EngineVersion::new("v1")),
            Err(RegistryError::DuplicateVersion("v1".into()))
        );
        assert!(matches!(r.get("v9"), Err(RegistryError::UnknownVersion(_))));
    }

    #[test]
    fn faultless_version_matches_base_engine() {
        let r = Registry::faultless(&["v1"]).unwrap();
        let one = t(DType::F32, &[1], &[1.0]);
        let out = value(r.eval_versioned("v1", OpKind::Add, &[one.clone(), one.clone()], &Params::new()).unwrap());
        assert_eq!(out, tensor::eval(OpKind::Add, &[one.clone(), one], &Params::new()).unwrap());
        assert_eq!(out.values(), &Buffer::Float(vec![2.0]));
    }

    #[test]
    fn value_perturb_scales_payload() {
        let trig = Trigger {
            op: Some(OpKind::Matmul),
            ..Trigger::default()
        };
        let v = EngineVersion::new("v1").with_fault(fault("p", trig, FaultEffect::ValuePerturb { scale: 1.01, offset: 0.0 }));
        let mut r = Registry::new();
        r.register(v).unwrap();
        let a = t(DType::F64, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let base = tensor::eval(OpKind::Matmul, &[a.clone(), a.clone()], &Params::new()).unwrap();
        let e = r.eval_versioned("v1", OpKind::Matmul, &[a.clone(), a], &Params::new()).unwrap();
        assert_eq!(e.fired.as_deref(), Some("p"));
        let out = value(e);
        for i in 0..4 {
            assert_eq!(out.values().get_f64(i), base.values().get_f64(i) * 1.01);
        }
    }

    #[test]
    fn crash_trap_pre_empts_and_first_fault_wins() {
        let adadelta_f16 = Trigger {
            op: Some(OpKind::AdadeltaUpdate),
            arg: Some(1),
            dtype: Some(DType::F16),
            ..Trigger::default()
        };
        let any_adadelta = Trigger {
            op: Some(OpKind::AdadeltaUpdate),
            ..Trigger::default()
        };
        let v = EngineVersion::new("v1")
            .with_fault(fault("crash", adadelta_f16, FaultEffect::CrashTrap { message: "Aborted (core dumped)".into() }))
            .with_fault(fault("hang", any_adadelta, FaultEffect::HangLoop));
        let mut r = Registry::new();
        r.register(v).unwrap();
        let var = t(DType::F32, &[2], &[1.0, 2.0]);
        let p: Params = [
            ("lr".to_string(), ParamValue::Float(1.0)),
            ("rho".to_string(), ParamValue::Float(0.95)),
            ("eps".to_string(), ParamValue::Float(1e-8)),
        ]
        .into_iter()
        .collect();
        let e = r.eval_versioned("v1", OpKind::AdadeltaUpdate, &[var.clone(), t(DType::F16, &[2], &[0.1, 0.1])], &p).unwrap();
        assert_eq!(e.outcome, OpOutcome::Crash { message: "Aborted (core dumped)".into() });
        assert_eq!(e.fired.as_deref(), Some("crash"));
        let e = r.eval_versioned("v1", OpKind::AdadeltaUpdate, &[var.clone(), var], &p).unwrap();
        assert_eq!(e.outcome, OpOutcome::Hang);
        assert_eq!(e.fired.as_deref(), Some("hang"));
    }

    #[test]
    fn shape_skew_changes_extent() {
        let trig = Trigger {
            op: Some(OpKind::Softmax),
            rank: Some(3),
            ..Trigger::default()
        };
        let v = EngineVersion::new("v1").with_fault(fault("s", trig, FaultEffect::ShapeSkew { dim: 0, delta: 1 }));
        let mut r = Registry::new();
        r.register(v).unwrap();
        let x = t(DType::F32, &[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let out = value(r.eval_versioned("v1", OpKind::Softmax, &[x], &Params::new()).unwrap());
        assert_eq!(out.shape().dims(), &[2, 2, 2]);
        assert_eq!(out.values().len(), 8);
        let flat = t(DType::F32, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let e = r.eval_versioned("v1", OpKind::Softmax, &[flat], &Params::new()).unwrap();
        assert_eq!(e.fired, None);
    }

    #[test]
    fn param_conditions() {
        let trig = Trigger {
            op: Some(OpKind::ReduceSum),
            param: Some("axis".into()),
            param_is: Some(ParamCondition::Negative),
            ..Trigger::default()
        };
        let x = t(DType::F32, &[2, 2], &[1.0; 4]);
        let axis = |a| -> Params { [("axis".to_string(), ParamValue::Int(a))].into_iter().collect() };
        assert!(trig.matches(OpKind::ReduceSum, std::slice::from_ref(&x), &axis(-1)));
        assert!(!trig.matches(OpKind::ReduceSum, std::slice::from_ref(&x), &axis(1)));
        assert!(ParamCondition::Extreme.holds(&ParamValue::Int(i64::MIN)));
        assert!(ParamCondition::Nan.holds(&ParamValue::Float(f64::NAN)));
        assert!(!ParamCondition::Nan.holds(&ParamValue::Int(0)));
    }

    #[test]
    fn manifest_round_trip() {
        let text = r#"
versions = ["a", "b"]

[[fault]]
id = "f1"
version = "b"
component = "GeneralUtility"
trigger = { op = "matmul", structure = "sparse" }
effect = { kind = "value_perturb", offset = 1.0 }

[[fault]]
id = "f1"
version = "a"
component = "GeneralUtility"
trigger = { op = "matmul", structure = "sparse" }
effect = { kind = "value_perturb", offset = 1.0 }
"#;
        let r = Registry::from_manifest(text).unwrap();
        assert_eq!(r.ids(), vec!["a", "b"]);
        assert_eq!(r.versions_with_fault("f1"), vec!["a", "b"]);
        assert_eq!(
            r.get("a").unwrap().faults[0].effect,
            FaultEffect::ValuePerturb { scale: 1.0, offset: 1.0 }
        );
        assert_eq!(Registry::from_manifest(&r.to_manifest()).unwrap(), r);
        assert!(matches!(
            Registry::from_manifest("versions = [\"a\"]\n[[fault]]\nid=\"x\"\nversion=\"zz\"\ncomponent=\"OperationImpl\"\neffect={kind=\"hang_loop\"}\n"),
            Err(RegistryError::UnknownVersion(_))
        ));
        assert!(matches!(Registry::from_manifest("versions = [\"a\", \"a\"]"), Err(RegistryError::DuplicateVersion(_))));
        assert!(matches!(Registry::from_manifest("nonsense"), Err(RegistryError::Manifest(_))));
    }
}
