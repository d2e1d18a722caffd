use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dtype::promote;
use super::value::Buffer;
use super::{DType, EngineError, Shape, TensorValue, TrapKind, MAX_RANK};
use crate::coverage::{CoverageSink, NoCoverage};

/// Accepted range for the Adadelta `steps` parameter.
pub const ADADELTA_MAX_STEPS: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sqrt,
    Relu,
    Matmul,
    Reshape,
    Transpose,
    ReduceSum,
    Softmax,
    Cast,
    AdadeltaUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Int,
    Float,
    DType,
    Dims,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    pub required: bool,
}

const fn spec(name: &'static str, ty: ParamType, required: bool) -> ParamSpec {
    ParamSpec { name, ty, required }
}

const NO_PARAMS: &[ParamSpec] = &[];
const RESHAPE_PARAMS: &[ParamSpec] = &[spec("dims", ParamType::Dims, true)];
const CAST_PARAMS: &[ParamSpec] = &[spec("dtype", ParamType::DType, true)];
const REDUCE_PARAMS: &[ParamSpec] = &[spec("axis", ParamType::Int, true)];
const ADADELTA_PARAMS: &[ParamSpec] = &[
    spec("eps", ParamType::Float, true),
    spec("lr", ParamType::Float, true),
    spec("rho", ParamType::Float, true),
    spec("steps", ParamType::Int, false),
];

impl OpKind {
    pub const ALL: [OpKind; 14] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::Sqrt,
        OpKind::Relu,
        OpKind::Matmul,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::ReduceSum,
        OpKind::Softmax,
        OpKind::Cast,
        OpKind::AdadeltaUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::Sqrt => "sqrt",
            OpKind::Relu => "relu",
            OpKind::Matmul => "matmul",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::ReduceSum => "reduce_sum",
            OpKind::Softmax => "softmax",
            OpKind::Cast => "cast",
            OpKind::AdadeltaUpdate => "adadelta_update",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Matmul | OpKind::AdadeltaUpdate => 2,
            _ => 1,
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            OpKind::Reshape => RESHAPE_PARAMS,
            OpKind::Cast => CAST_PARAMS,
            OpKind::ReduceSum => REDUCE_PARAMS,
            OpKind::AdadeltaUpdate => ADADELTA_PARAMS,
            _ => NO_PARAMS,
        }
    }

    pub fn param_spec(self, name: &str) -> Option<&'static ParamSpec> {
        self.params().iter().find(|p| p.name == name)
    }

    fn api_element(self) -> &'static str {
        match self {
            OpKind::Add => "api.add",
            OpKind::Sub => "api.sub",
            OpKind::Mul => "api.mul",
            OpKind::Div => "api.div",
            OpKind::Neg => "api.neg",
            OpKind::Sqrt => "api.sqrt",
            OpKind::Relu => "api.relu",
            OpKind::Matmul => "api.matmul",
            OpKind::Reshape => "api.reshape",
            OpKind::Transpose => "api.transpose",
            OpKind::ReduceSum => "api.reduce_sum",
            OpKind::Softmax => "api.softmax",
            OpKind::Cast => "api.cast",
            OpKind::AdadeltaUpdate => "api.adadelta_update",
        }
    }

    fn is_elementwise_binary(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

/// A parameter value of an op application.
#[derive(Debug, Clone)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    DType(DType),
    Dims(Vec<usize>),
}

impl ParamValue {
    pub fn ty(&self) -> ParamType {
        match self {
            ParamValue::Int(_) => ParamType::Int,
            ParamValue::Float(_) => ParamType::Float,
            ParamValue::DType(_) => ParamType::DType,
            ParamValue::Dims(_) => ParamType::Dims,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ParamValue::Int(_) | ParamValue::Float(_))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(x) => Some(*x),
            _ => None,
        }
    }
}

impl PartialEq for ParamValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ParamValue::Int(a), ParamValue::Int(b)) => a == b,
            (ParamValue::Float(a), ParamValue::Float(b)) => a.to_bits() == b.to_bits(),
            (ParamValue::DType(a), ParamValue::DType(b)) => a == b,
            (ParamValue::Dims(a), ParamValue::Dims(b)) => a == b,
            _ => false,
        }
    }
}

/// Parameters of one op application, keyed by name.
pub type Params = BTreeMap<String, ParamValue>;

fn param_error(kind: OpKind, msg: impl fmt::Display) -> EngineError {
    EngineError::Param(format!("{kind}: {msg}"))
}

/// Checks presence, names and types of parameters against the op schema.
pub fn check_params(kind: OpKind, params: &Params) -> Result<(), EngineError> {
    for name in params.keys() {
        if kind.param_spec(name).is_none() {
            return Err(param_error(kind, format_args!("unknown parameter `{name}`")));
        }
    }
    for spec in kind.params() {
        match params.get(spec.name) {
            None if spec.required => {
                return Err(param_error(kind, format_args!("missing parameter `{}`", spec.name)));
            }
            Some(v) if v.ty() != spec.ty => {
                return Err(param_error(
                    kind,
                    format_args!("parameter `{}` has type {:?}, expected {:?}", spec.name, v.ty(), spec.ty),
                ));
            }
            _ => {}
        }
    }
    Ok(())
}

fn int_param(params: &Params, name: &str) -> Option<i64> {
    match params.get(name) {
        Some(ParamValue::Int(i)) => Some(*i),
        _ => None,
    }
}

fn float_param(params: &Params, name: &str) -> f64 {
    match params.get(name) {
        Some(ParamValue::Float(x)) => *x,
        _ => unreachable!("checked parameter `{name}`"),
    }
}

fn shape_err(rule: &'static str, shapes: &[&Shape]) -> EngineError {
    EngineError::Shape {
        rule,
        dims: shapes.iter().map(|s| s.dims().to_vec()).collect(),
    }
}

fn numeric(kind: OpKind, dtype: DType, cov: &dyn CoverageSink) -> Result<DType, EngineError> {
    if dtype.is_numeric() {
        Ok(dtype)
    } else {
        cov.hit("dtype.numeric_required");
        Err(EngineError::Type(format!("{kind} requires numeric inputs, got {dtype}")))
    }
}

fn float_only(kind: OpKind, dtype: DType, cov: &dyn CoverageSink) -> Result<DType, EngineError> {
    if dtype.is_float() {
        Ok(dtype)
    } else {
        cov.hit("dtype.float_required");
        Err(EngineError::Type(format!("{kind} requires a float input, got {dtype}")))
    }
}

fn promote_traced(a: DType, b: DType, cov: &dyn CoverageSink) -> Result<DType, EngineError> {
    cov.hit("dtype.promote");
    promote(a, b).inspect_err(|_| cov.hit("dtype.promote.bool_error"))
}

/// Resolves a possibly negative axis against a rank.
pub fn normalize_axis(axis: i64, rank: usize) -> Option<usize> {
    let r = rank as i64;
    let a = if axis < 0 { axis.checked_add(r)? } else { axis };
    (0..r).contains(&a).then_some(a as usize)
}

/// Static output dtype and shape of an op application.
pub fn infer(kind: OpKind, inputs: &[(DType, &Shape)], params: &Params) -> Result<(DType, Shape), EngineError> {
    infer_traced(kind, inputs, params, &NoCoverage)
}

/// Output shape of an op application; see [`infer`].
pub fn infer_shape(kind: OpKind, input_shapes: &[Shape], params: &Params) -> Result<Shape, EngineError> {
    // shape rules do not depend on dtype; pick one that satisfies every op
    let inputs: Vec<(DType, &Shape)> = input_shapes.iter().map(|s| (DType::F32, s)).collect();
    infer(kind, &inputs, params).map(|(_, s)| s)
}

pub fn infer_traced(
    kind: OpKind,
    inputs: &[(DType, &Shape)],
    params: &Params,
    cov: &dyn CoverageSink,
) -> Result<(DType, Shape), EngineError> {
    if inputs.len() != kind.arity() {
        cov.hit("api.arity.error");
        return Err(EngineError::Arity {
            op: kind,
            expected: kind.arity(),
            got: inputs.len(),
        });
    }
    cov.hit("api.param.check");
    check_params(kind, params)?;
    let shapes: Vec<&Shape> = inputs.iter().map(|(_, s)| *s).collect();
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            cov.hit("shape.elementwise");
            if shapes[0] != shapes[1] {
                cov.hit("shape.elementwise.mismatch");
                return Err(shape_err("elementwise operands must have identical shapes", &shapes));
            }
            numeric(kind, inputs[0].0, cov)?;
            numeric(kind, inputs[1].0, cov)?;
            let dtype = promote_traced(inputs[0].0, inputs[1].0, cov)?;
            Ok((dtype, shapes[0].clone()))
        }
        OpKind::Neg | OpKind::Relu => Ok((numeric(kind, inputs[0].0, cov)?, shapes[0].clone())),
        OpKind::Sqrt => Ok((float_only(kind, inputs[0].0, cov)?, shapes[0].clone())),
        OpKind::Matmul => {
            cov.hit("shape.matmul");
            let (a, b) = (shapes[0].dims(), shapes[1].dims());
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                cov.hit("shape.matmul.mismatch");
                return Err(shape_err("matmul needs [m,k] x [k,n]", &shapes));
            }
            numeric(kind, inputs[0].0, cov)?;
            numeric(kind, inputs[1].0, cov)?;
            let dtype = promote_traced(inputs[0].0, inputs[1].0, cov)?;
            Ok((dtype, Shape::new(vec![a[0], b[1]])?))
        }
        OpKind::Reshape => {
            cov.hit("shape.reshape");
            let dims = match &params["dims"] {
                ParamValue::Dims(d) => d.clone(),
                _ => unreachable!(),
            };
            if dims.len() > MAX_RANK {
                cov.hit("shape.reshape.mismatch");
                return Err(EngineError::Shape {
                    rule: "reshape target rank must not exceed 4",
                    dims: vec![shapes[0].dims().to_vec(), dims],
                });
            }
            let target = Shape::new(dims)?;
            if target.element_count() != shapes[0].element_count() {
                cov.hit("shape.reshape.mismatch");
                return Err(shape_err("reshape must preserve element count", &[shapes[0], &target]));
            }
            Ok((inputs[0].0, target))
        }
        OpKind::Transpose => {
            cov.hit("shape.transpose");
            let d = shapes[0].dims();
            if d.len() != 2 {
                cov.hit("shape.transpose.rank");
                return Err(shape_err("transpose needs a rank-2 input", &shapes));
            }
            Ok((inputs[0].0, Shape::new(vec![d[1], d[0]])?))
        }
        OpKind::ReduceSum => {
            cov.hit("shape.reduce.axis");
            let axis = int_param(params, "axis").expect("checked");
            if axis < 0 {
                cov.hit("shape.reduce.negative_axis");
            }
            let Some(ax) = normalize_axis(axis, shapes[0].rank()) else {
                cov.hit("shape.reduce.out_of_range");
                return Err(shape_err("reduce_sum axis out of range", &shapes));
            };
            numeric(kind, inputs[0].0, cov)?;
            let mut dims = shapes[0].dims().to_vec();
            dims.remove(ax);
            Ok((inputs[0].0, Shape::new(dims)?))
        }
        OpKind::Softmax => {
            cov.hit("shape.softmax");
            if shapes[0].rank() == 0 {
                cov.hit("shape.softmax.scalar");
                return Err(shape_err("softmax needs rank >= 1", &shapes));
            }
            Ok((float_only(kind, inputs[0].0, cov)?, shapes[0].clone()))
        }
        OpKind::Cast => match &params["dtype"] {
            ParamValue::DType(t) => Ok((*t, shapes[0].clone())),
            _ => unreachable!(),
        },
        OpKind::AdadeltaUpdate => {
            cov.hit("shape.elementwise");
            if shapes[0] != shapes[1] {
                cov.hit("shape.elementwise.mismatch");
                return Err(shape_err("adadelta variable and gradient must have identical shapes", &shapes));
            }
            numeric(kind, inputs[0].0, cov)?;
            numeric(kind, inputs[1].0, cov)?;
            Ok((promote_traced(inputs[0].0, inputs[1].0, cov)?, shapes[0].clone()))
        }
    }
}

/// Work units charged against a run's step budget for one application.
pub fn cost(kind: OpKind, input_shapes: &[&Shape], params: &Params) -> u64 {
    let n = input_shapes.first().map_or(1, |s| s.element_count()) as u64;
    let c = match kind {
        OpKind::Matmul if input_shapes.len() == 2 && input_shapes.iter().all(|s| s.rank() == 2) => {
            let (a, b) = (input_shapes[0].dims(), input_shapes[1].dims());
            (a[0] * a[1] * b[1]) as u64
        }
        OpKind::AdadeltaUpdate => n.saturating_mul(int_param(params, "steps").unwrap_or(1).clamp(1, ADADELTA_MAX_STEPS) as u64),
        _ => n,
    };
    c.max(1)
}

/// Evaluates one op on concrete inputs with the base engine semantics.
pub fn eval(kind: OpKind, inputs: &[TensorValue], params: &Params) -> Result<TensorValue, EngineError> {
    eval_traced(kind, inputs, params, &NoCoverage)
}

pub fn eval_traced(
    kind: OpKind,
    inputs: &[TensorValue],
    params: &Params,
    cov: &dyn CoverageSink,
) -> Result<TensorValue, EngineError> {
    cov.hit(kind.api_element());
    let typed: Vec<(DType, &Shape)> = inputs.iter().map(|t| (t.dtype(), t.shape())).collect();
    let (dtype, shape) = infer_traced(kind, &typed, params, cov)?;
    let dense: Vec<TensorValue> = inputs
        .iter()
        .map(|t| {
            match t.structure_kind() {
                super::StructureKind::Sparse => cov.hit("util.densify.sparse"),
                super::StructureKind::Ragged => cov.hit("util.densify.ragged"),
                super::StructureKind::Dense => {}
            }
            t.densify()
        })
        .collect();
    if dtype == DType::F16 && kind != OpKind::Cast {
        cov.hit("env.f16.emulation");
    }
    let out = match kind {
        k if k.is_elementwise_binary() => binary(k, &dense[0], &dense[1], dtype, cov)?,
        OpKind::Neg => unary(&dense[0], dtype, cov, |x| -x, |x| x.wrapping_neg()),
        OpKind::Relu => {
            cov.hit("kernel.relu");
            unary(&dense[0], dtype, cov, |x| if x > 0.0 || x.is_nan() { x } else { 0.0 }, |x| x.max(0))
        }
        OpKind::Sqrt => {
            let vals = float_vec(&dense[0]);
            if vals.iter().any(|x| *x < 0.0) {
                cov.hit("kernel.sqrt.negative");
            }
            finish_float(dtype, vals.into_iter().map(f64::sqrt).collect(), cov)
        }
        OpKind::Matmul => matmul(&dense[0], &dense[1], dtype, cov),
        OpKind::Reshape => {
            cov.hit("kernel.reshape");
            dense[0].values().clone()
        }
        OpKind::Transpose => {
            cov.hit("kernel.transpose");
            let d = dense[0].shape().dims();
            let (r, c) = (d[0], d[1]);
            dense[0].values().gather((0..r * c).map(|o| (o % r) * c + o / r))
        }
        OpKind::ReduceSum => {
            let axis = normalize_axis(int_param(params, "axis").expect("checked"), dense[0].shape().rank()).expect("checked");
            reduce_sum(&dense[0], axis, dtype, cov)
        }
        OpKind::Softmax => softmax(&dense[0], dtype, cov),
        OpKind::Cast => {
            cov.hit("kernel.cast");
            return inputs[0].densify().cast_traced(dtype, cov);
        }
        OpKind::AdadeltaUpdate => adadelta(&dense[0], &dense[1], params, dtype, cov)?,
        _ => unreachable!(),
    };
    TensorValue::dense(dtype, shape, out)
}

fn float_vec(t: &TensorValue) -> Vec<f64> {
    (0..t.values().len()).map(|i| t.values().get_f64(i)).collect()
}

fn int_vec(t: &TensorValue) -> Vec<i64> {
    match t.values() {
        Buffer::Int(v) => v.clone(),
        Buffer::Bool(v) => v.iter().map(|b| i64::from(*b)).collect(),
        Buffer::Float(_) => unreachable!("int kernel on float input"),
    }
}

/// Rounds float results to `dtype`, recording environment-dependent paths.
fn finish_float(dtype: DType, vals: Vec<f64>, cov: &dyn CoverageSink) -> Buffer {
    let mut out = Vec::with_capacity(vals.len());
    for x in vals {
        let r = dtype.round_float(x);
        if r.is_nan() {
            cov.hit("env.float.nan_produced");
        } else if r.is_infinite() {
            if x.is_finite() && dtype == DType::F16 {
                cov.hit("env.f16.overflow");
            } else {
                cov.hit("env.float.inf_produced");
            }
        } else if r != 0.0 && r.abs() < f64::MIN_POSITIVE {
            cov.hit("env.float.subnormal");
        }
        out.push(r);
    }
    match dtype {
        DType::F16 => cov.hit("util.round.f16"),
        DType::F32 => cov.hit("util.round.f32"),
        _ => {}
    }
    Buffer::Float(out)
}

fn finish_int(dtype: DType, vals: Vec<i128>, cov: &dyn CoverageSink) -> Buffer {
    let (lo, hi) = match dtype {
        DType::I32 => (i32::MIN as i128, i32::MAX as i128),
        _ => (i64::MIN as i128, i64::MAX as i128),
    };
    if vals.iter().any(|v| *v < lo || *v > hi) {
        cov.hit("env.int.overflow_wrap");
    }
    if dtype == DType::I32 {
        cov.hit("util.wrap.i32");
    }
    Buffer::Int(vals.into_iter().map(|v| dtype.wrap_int(v as i64)).collect())
}

fn binary(kind: OpKind, a: &TensorValue, b: &TensorValue, dtype: DType, cov: &dyn CoverageSink) -> Result<Buffer, EngineError> {
    if dtype.is_float() {
        cov.hit("kernel.binary.float");
        let (x, y) = (float_vec(a), float_vec(b));
        let f = match kind {
            OpKind::Add => |p: f64, q: f64| p + q,
            OpKind::Sub => |p: f64, q: f64| p - q,
            OpKind::Mul => |p: f64, q: f64| p * q,
            _ => |p: f64, q: f64| p / q,
        };
        return Ok(finish_float(dtype, x.iter().zip(&y).map(|(p, q)| f(*p, *q)).collect(), cov));
    }
    cov.hit("kernel.binary.int");
    let (x, y) = (int_vec(a), int_vec(b));
    let mut out = Vec::with_capacity(x.len());
    for (p, q) in x.into_iter().zip(y) {
        let (p, q) = (p as i128, q as i128);
        out.push(match kind {
            OpKind::Add => p + q,
            OpKind::Sub => p - q,
            OpKind::Mul => p * q,
            _ => {
                if q == 0 {
                    cov.hit("kernel.div.int_zero");
                    return Err(EngineError::Trap {
                        kind: TrapKind::IntegerDivideByZero,
                        message: "integer division by zero".into(),
                    });
                }
                p / q
            }
        });
    }
    Ok(finish_int(dtype, out, cov))
}

fn unary(
    t: &TensorValue,
    dtype: DType,
    cov: &dyn CoverageSink,
    f: impl Fn(f64) -> f64,
    g: impl Fn(i64) -> i64,
) -> Buffer {
    if dtype.is_float() {
        cov.hit("kernel.unary.float");
        finish_float(dtype, float_vec(t).into_iter().map(f).collect(), cov)
    } else {
        cov.hit("kernel.unary.int");
        finish_int(dtype, int_vec(t).into_iter().map(|x| g(x) as i128).collect(), cov)
    }
}

fn matmul(a: &TensorValue, b: &TensorValue, dtype: DType, cov: &dyn CoverageSink) -> Buffer {
    let (m, k) = (a.shape().dims()[0], a.shape().dims()[1]);
    let n = b.shape().dims()[1];
    if dtype.is_float() {
        cov.hit("kernel.matmul.float");
        let (x, y) = (float_vec(a), float_vec(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|p| x[i * k + p] * y[p * n + j]).sum();
            }
        }
        finish_float(dtype, out, cov)
    } else {
        cov.hit("kernel.matmul.int");
        let (x, y) = (int_vec(a), int_vec(b));
        let mut out = vec![0i128; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0i64;
                for p in 0..k {
                    acc = acc.wrapping_add(x[i * k + p].wrapping_mul(y[p * n + j]));
                }
                out[i * n + j] = acc as i128;
            }
        }
        finish_int(dtype, out, cov)
    }
}

fn reduce_sum(t: &TensorValue, axis: usize, dtype: DType, cov: &dyn CoverageSink) -> Buffer {
    let dims = t.shape().dims();
    let outer: usize = dims[..axis].iter().product();
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let idx = |o: usize, r: usize, i: usize| (o * len + r) * inner + i;
    if dtype.is_float() {
        cov.hit("kernel.reduce.float");
        let x = float_vec(t);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                out.push((0..len).map(|r| x[idx(o, r, i)]).sum());
            }
        }
        finish_float(dtype, out, cov)
    } else {
        cov.hit("kernel.reduce.int");
        let x = int_vec(t);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                out.push((0..len).fold(0i64, |acc, r| acc.wrapping_add(x[idx(o, r, i)])) as i128);
            }
        }
        finish_int(dtype, out, cov)
    }
}

fn softmax(t: &TensorValue, dtype: DType, cov: &dyn CoverageSink) -> Buffer {
    cov.hit("kernel.softmax");
    let x = float_vec(t);
    let width = *t.shape().dims().last().expect("rank >= 1");
    let mut out = Vec::with_capacity(x.len());
    if width > 0 {
        for row in x.chunks(width) {
            if row.iter().any(|v| !v.is_finite()) {
                cov.hit("kernel.softmax.nonfinite");
            }
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| v / s));
        }
    }
    finish_float(dtype, out, cov)
}

fn adadelta(var: &TensorValue, grad: &TensorValue, params: &Params, dtype: DType, cov: &dyn CoverageSink) -> Result<Buffer, EngineError> {
    cov.hit("kernel.adadelta");
    let steps = int_param(params, "steps").unwrap_or(1);
    if !(1..=ADADELTA_MAX_STEPS).contains(&steps) {
        cov.hit("kernel.adadelta.steps_error");
        return Err(EngineError::Trap {
            kind: TrapKind::InvalidArgument,
            message: format!("adadelta steps must be in 1..={ADADELTA_MAX_STEPS}, got {steps}"),
        });
    }
    if int_param(params, "steps").is_none() {
        cov.hit("api.param.default");
    }
    let lr = float_param(params, "lr");
    let rho = float_param(params, "rho");
    let eps = float_param(params, "eps");
    let (v, g) = (float_vec(var), float_vec(grad));
    let mut out = Vec::with_capacity(v.len());
    for (mut x, g) in v.into_iter().zip(g) {
        let (mut acc_grad, mut acc_update) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            acc_grad = rho * acc_grad + (1.0 - rho) * g * g;
            let update = -(acc_update + eps).sqrt() / (acc_grad + eps).sqrt() * g;
            acc_update = rho * acc_update + (1.0 - rho) * update * update;
            x += lr * update;
        }
        out.push(x);
    }
    if dtype.is_float() {
        Ok(finish_float(dtype, out, cov))
    } else {
        super::value::cast_buffer(&Buffer::Float(out), dtype, cov)
    }
}
