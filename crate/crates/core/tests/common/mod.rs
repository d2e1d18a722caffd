//! Proptest generators shared by the integration suites (and the CLI
//! acceptance harness, which includes this file by path).
#![allow(dead_code)]

use deltafuzz_core::dsl::{Program, Stmt};
use deltafuzz_core::tensor::{DType, OpKind, ParamType, ParamValue, Params, StructureKind, TensorValue};
use proptest::prelude::*;

pub const DTYPES: [DType; 6] = [DType::I32, DType::I64, DType::F16, DType::F32, DType::F64, DType::Bool];

pub fn dtype() -> impl Strategy<Value = DType> {
    proptest::sample::select(DTYPES.to_vec())
}

pub fn numeric_dtype() -> impl Strategy<Value = DType> {
    proptest::sample::select(DTYPES[..5].to_vec())
}

/// Raw element for `dtype`, as `f64`. Roughly a third are zeros so that the
/// sparse and ragged forms are nontrivial.
pub fn element(dtype: DType) -> BoxedStrategy<f64> {
    if dtype == DType::Bool {
        return prop_oneof![Just(0.0), Just(1.0)].boxed();
    }
    if dtype.is_int() {
        return prop_oneof![2 => Just(0.0), 4 => (-1000i64..1000).prop_map(|i| i as f64)].boxed();
    }
    prop_oneof![
        3 => Just(0.0),
        1 => Just(-0.0),
        1 => prop_oneof![Just(f64::NAN), Just(f64::INFINITY), Just(f64::NEG_INFINITY)],
        6 => (-1.0e4f64..1.0e4).prop_map(|x| (x * 64.0).round() / 64.0),
        2 => -1.0f64..1.0,
    ]
    .boxed()
}

pub fn dims(min_rank: usize, max_rank: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..=4, min_rank..=max_rank)
}

/// Dense tensor of the given dtype and dims.
pub fn dense_with(dtype: DType, dims: Vec<usize>) -> impl Strategy<Value = TensorValue> {
    let n: usize = dims.iter().product();
    proptest::collection::vec(element(dtype), n)
        .prop_map(move |xs| TensorValue::from_f64(dtype, &dims, &xs).expect("generated tensor is well formed"))
}

pub fn dense(min_rank: usize, max_rank: usize) -> impl Strategy<Value = TensorValue> {
    (dtype(), dims(min_rank, max_rank)).prop_flat_map(|(d, s)| dense_with(d, s))
}

/// Tensor in any storage structure that its rank allows.
pub fn tensor(min_rank: usize, max_rank: usize) -> impl Strategy<Value = TensorValue> {
    (dense(min_rank, max_rank), 0usize..3).prop_map(|(t, k)| {
        let kind = [StructureKind::Dense, StructureKind::Sparse, StructureKind::Ragged][k];
        t.convert_structure(kind).unwrap_or(t)
    })
}

fn param_value(ty: ParamType) -> BoxedStrategy<ParamValue> {
    match ty {
        ParamType::Int => prop_oneof![
            4 => (-5i64..6).prop_map(ParamValue::Int),
            1 => prop_oneof![Just(i64::MAX), Just(i64::MIN)].prop_map(ParamValue::Int),
        ]
        .boxed(),
        ParamType::Float => prop_oneof![
            4 => (-10.0f64..10.0).prop_map(ParamValue::Float),
            1 => prop_oneof![
                Just(0.0),
                Just(-0.0),
                Just(1e-8),
                Just(f64::NAN),
                Just(f64::INFINITY),
                Just(f64::MAX),
                Just(f64::MIN)
            ]
            .prop_map(ParamValue::Float),
        ]
        .boxed(),
        ParamType::DType => dtype().prop_map(ParamValue::DType).boxed(),
        ParamType::Dims => proptest::collection::vec(1usize..6, 0..4).prop_map(ParamValue::Dims).boxed(),
    }
}

fn params(kind: OpKind) -> BoxedStrategy<Params> {
    let specs = kind.params();
    let parts: Vec<BoxedStrategy<Option<(String, ParamValue)>>> = specs
        .iter()
        .map(|s| {
            let name = s.name.to_string();
            let value = param_value(s.ty).prop_map(move |v| (name.clone(), v));
            if s.required {
                value.prop_map(Some).boxed()
            } else {
                proptest::option::of(value).boxed()
            }
        })
        .collect();
    parts.prop_map(|kv| kv.into_iter().flatten().collect()).boxed()
}

/// Syntactically well-formed program: literals first, then applications over
/// earlier names, then observations. Programs need not validate.
pub fn program() -> impl Strategy<Value = Program> {
    let lets = proptest::collection::vec(tensor(0, 3), 1..4);
    let applies = proptest::collection::vec(
        (proptest::sample::select(OpKind::ALL.to_vec()), any::<[proptest::sample::Index; 2]>())
            .prop_flat_map(|(k, idx)| (Just(k), Just(idx), params(k))),
        0..4,
    );
    let observes = proptest::collection::vec(any::<proptest::sample::Index>(), 1..3);
    (lets, applies, observes).prop_map(|(lets, applies, observes)| {
        let mut names: Vec<String> = Vec::new();
        let mut statements = Vec::new();
        for (i, value) in lets.into_iter().enumerate() {
            let name = format!("t{i}");
            names.push(name.clone());
            statements.push(Stmt::Let { name, value });
        }
        for (i, (kind, idx, params)) in applies.into_iter().enumerate() {
            let args = (0..kind.arity()).map(|a| idx[a].get(&names).clone()).collect();
            let name = format!("r{i}");
            names.push(name.clone());
            statements.push(Stmt::Apply { name, kind, args, params });
        }
        for o in observes {
            statements.push(Stmt::Observe { name: o.get(&names).clone() });
        }
        Program::new(statements)
    })
}

/// A one-literal program observing that literal.
pub fn literal_program(t: &TensorValue) -> Program {
    Program::new(vec![
        Stmt::Let { name: "x".into(), value: t.clone() },
        Stmt::Observe { name: "x".into() },
    ])
}

/// The literal bound by statement 0.
pub fn literal(p: &Program) -> &TensorValue {
    match &p.statements[0] {
        Stmt::Let { value, .. } => value,
        other => panic!("statement 0 is not a literal: {other:?}"),
    }
}
