//! Deterministic reference tensor engine.
//!
//! Dtypes, shapes, storage structures and a fixed vocabulary of ops with pure
//! evaluation semantics. There is no broadcasting; F16 arithmetic runs in
//! `f64` and is rounded to binary16 after every op; integer overflow wraps.

mod dtype;
mod ops;
mod shape;
mod value;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dtype::{promote, DType, Scalar};
pub use ops::{
    check_params, cost, eval, eval_traced, infer, infer_shape, infer_traced, normalize_axis, OpKind, ParamSpec,
    ParamType, ParamValue, Params, ADADELTA_MAX_STEPS,
};
pub use shape::{Shape, MAX_RANK};
pub use value::{Buffer, Structure, StructureKind, TensorValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrapKind {
    IntegerDivideByZero,
    InvalidCast,
    InvalidArgument,
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrapKind::IntegerDivideByZero => "integer-divide-by-zero",
            TrapKind::InvalidCast => "invalid-cast",
            TrapKind::InvalidArgument => "invalid-argument",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("cannot promote {left} with {right}")]
    Promotion { left: DType, right: DType },
    #[error("shape error: {rule} (dims {dims:?})")]
    Shape { rule: &'static str, dims: Vec<Vec<usize>> },
    #[error("type error: {0}")]
    Type(String),
    #[error("{op} expects {expected} inputs, got {got}")]
    Arity { op: OpKind, expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("trap ({kind}): {message}")]
    Trap { kind: TrapKind, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dtype: DType, dims: &[usize], data: &[f64]) -> TensorValue {
        TensorValue::from_f64(dtype, dims, data).unwrap()
    }

    fn floats(t: &TensorValue) -> Vec<f64> {
        (0..t.values().len()).map(|i| t.values().get_f64(i)).collect()
    }

    fn params(pairs: &[(&str, ParamValue)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn infer_shape_examples() {
        let none = Params::new();
        assert_eq!(infer_shape(OpKind::Matmul, &[shape(&[2, 3]), shape(&[3, 4])], &none).unwrap(), shape(&[2, 4]));
        let p = params(&[("dims", ParamValue::Dims(vec![2, 6]))]);
        assert_eq!(infer_shape(OpKind::Reshape, &[shape(&[3, 4])], &p).unwrap(), shape(&[2, 6]));
        let err = infer_shape(OpKind::Add, &[shape(&[2, 3]), shape(&[3, 2])], &none).unwrap_err();
        match err {
            EngineError::Shape { dims, .. } => assert_eq!(dims, vec![vec![2, 3], vec![3, 2]]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(infer_shape(OpKind::Matmul, &[shape(&[2, 3]), shape(&[2, 3])], &none).is_err());
        let bad = params(&[("dims", ParamValue::Dims(vec![5, 2]))]);
        assert!(infer_shape(OpKind::Reshape, &[shape(&[3, 4])], &bad).is_err());
    }

    #[test]
    fn reduce_and_transpose_shapes() {
        let ax = |a| params(&[("axis", ParamValue::Int(a))]);
        assert_eq!(infer_shape(OpKind::ReduceSum, &[shape(&[3, 4])], &ax(1)).unwrap(), shape(&[3]));
        assert_eq!(infer_shape(OpKind::ReduceSum, &[shape(&[3, 4])], &ax(-2)).unwrap(), shape(&[4]));
        assert!(infer_shape(OpKind::ReduceSum, &[shape(&[3, 4])], &ax(2)).is_err());
        assert!(infer_shape(OpKind::ReduceSum, &[shape(&[3, 4])], &ax(i64::MIN)).is_err());
        let none = Params::new();
        assert_eq!(infer_shape(OpKind::Transpose, &[shape(&[3, 4])], &none).unwrap(), shape(&[4, 3]));
        assert!(infer_shape(OpKind::Transpose, &[shape(&[3])], &none).is_err());
        assert_eq!(infer_shape(OpKind::Softmax, &[shape(&[2, 5])], &none).unwrap(), shape(&[2, 5]));
    }

    #[test]
    fn param_schema_errors() {
        let x = t(DType::F32, &[2], &[1.0, 2.0]);
        let err = eval(OpKind::Cast, std::slice::from_ref(&x), &Params::new()).unwrap_err();
        assert!(matches!(err, EngineError::Param(_)));
        let err = eval(OpKind::Neg, std::slice::from_ref(&x), &params(&[("axis", ParamValue::Int(0))])).unwrap_err();
        assert!(matches!(err, EngineError::Param(_)));
        let err = eval(OpKind::ReduceSum, &[x], &params(&[("axis", ParamValue::Float(0.0))])).unwrap_err();
        assert!(matches!(err, EngineError::Param(_)));
    }

    #[test]
    fn eval_basic_arithmetic() {
        let a = t(DType::F32, &[2], &[1.0, 2.0]);
        let b = t(DType::F32, &[2], &[3.0, 4.0]);
        assert_eq!(floats(&eval(OpKind::Add, &[a, b], &Params::new()).unwrap()), vec![4.0, 6.0]);
        let one = t(DType::F32, &[], &[1.0]);
        let zero = t(DType::F32, &[], &[0.0]);
        let q = eval(OpKind::Div, &[one, zero], &Params::new()).unwrap();
        assert_eq!(floats(&q), vec![f64::INFINITY]);
    }

    #[test]
    fn integer_semantics() {
        let a = t(DType::I32, &[2], &[7.0, i32::MAX as f64]);
        let b = t(DType::I32, &[2], &[2.0, 1.0]);
        let s = eval(OpKind::Add, &[a.clone(), b.clone()], &Params::new()).unwrap();
        assert_eq!(s.values(), &Buffer::Int(vec![9, i32::MIN as i64]));
        let q = eval(OpKind::Div, &[a.clone(), b], &Params::new()).unwrap();
        assert_eq!(q.values(), &Buffer::Int(vec![3, i32::MAX as i64]));
        let z = t(DType::I32, &[2], &[0.0, 1.0]);
        let err = eval(OpKind::Div, &[a, z], &Params::new()).unwrap_err();
        assert!(matches!(err, EngineError::Trap { kind: TrapKind::IntegerDivideByZero, .. }));
        let m = t(DType::I64, &[1], &[i64::MIN as f64]);
        let n = t(DType::I64, &[1], &[-1.0]);
        assert_eq!(eval(OpKind::Div, &[m, n], &Params::new()).unwrap().values(), &Buffer::Int(vec![i64::MIN]));
    }

    #[test]
    fn mixed_dtypes_promote() {
        let a = t(DType::F32, &[2], &[1.5, 2.5]);
        let b = t(DType::F16, &[2], &[1.0, 1.0]);
        assert_eq!(eval(OpKind::Sub, &[a.clone(), b], &Params::new()).unwrap().dtype(), DType::F32);
        let i = t(DType::I64, &[2], &[1.0, 2.0]);
        let out = eval(OpKind::Mul, &[i, a], &Params::new()).unwrap();
        assert_eq!(out.dtype(), DType::F32);
        assert_eq!(floats(&out), vec![1.5, 5.0]);
        let flag = t(DType::Bool, &[2], &[1.0, 0.0]);
        let err = eval(OpKind::Add, &[flag.clone(), t(DType::I32, &[2], &[1.0, 1.0])], &Params::new()).unwrap_err();
        assert!(matches!(err, EngineError::Type(_) | EngineError::Promotion { .. }));
    }

    #[test]
    fn f16_rounds_after_each_op() {
        let a = t(DType::F16, &[1], &[60000.0]);
        let b = t(DType::F16, &[1], &[10000.0]);
        let s = eval(OpKind::Add, &[a, b], &Params::new()).unwrap();
        assert_eq!(floats(&s), vec![f64::INFINITY]);
    }

    #[test]
    fn matmul_transpose_reduce_values() {
        let a = t(DType::F64, &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(DType::F64, &[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let m = eval(OpKind::Matmul, &[a.clone(), b], &Params::new()).unwrap();
        assert_eq!(m.shape().dims(), &[2, 2]);
        assert_eq!(floats(&m), vec![58.0, 64.0, 139.0, 154.0]);
        let tr = eval(OpKind::Transpose, std::slice::from_ref(&a), &Params::new()).unwrap();
        assert_eq!(floats(&tr), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let back = eval(OpKind::Transpose, &[tr], &Params::new()).unwrap();
        assert_eq!(back, a);
        let r0 = eval(OpKind::ReduceSum, std::slice::from_ref(&a), &params(&[("axis", ParamValue::Int(0))])).unwrap();
        assert_eq!(floats(&r0), vec![5.0, 7.0, 9.0]);
        let r1 = eval(OpKind::ReduceSum, &[a], &params(&[("axis", ParamValue::Int(-1))])).unwrap();
        assert_eq!(floats(&r1), vec![6.0, 15.0]);
    }

    #[test]
    fn reshape_keeps_payload() {
        let a = t(DType::I32, &[3, 4], &(0..12).map(f64::from).collect::<Vec<_>>());
        let r = eval(OpKind::Reshape, std::slice::from_ref(&a), &params(&[("dims", ParamValue::Dims(vec![2, 6]))])).unwrap();
        assert_eq!(r.shape().dims(), &[2, 6]);
        assert_eq!(r.values(), a.values());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = t(DType::F32, &[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 100.0]);
        let s = eval(OpKind::Softmax, &[a], &Params::new()).unwrap();
        let v = floats(&s);
        for row in v.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sqrt_and_relu() {
        let a = t(DType::F32, &[3], &[4.0, -1.0, 0.0]);
        let s = floats(&eval(OpKind::Sqrt, std::slice::from_ref(&a), &Params::new()).unwrap());
        assert_eq!(s[0], 2.0);
        assert!(s[1].is_nan());
        let r = floats(&eval(OpKind::Relu, &[a], &Params::new()).unwrap());
        assert_eq!(r, vec![4.0, 0.0, 0.0]);
        let i = t(DType::I32, &[1], &[4.0]);
        assert!(matches!(eval(OpKind::Sqrt, &[i], &Params::new()), Err(EngineError::Type(_))));
    }

    #[test]
    fn sparse_inputs_are_densified() {
        let a = t(DType::F32, &[2, 2], &[0.0, 5.0, 0.0, 1.0]);
        let s = a.convert_structure(StructureKind::Sparse).unwrap();
        let r = a.convert_structure(StructureKind::Ragged).unwrap();
        let dense = eval(OpKind::Add, &[a.clone(), a.clone()], &Params::new()).unwrap();
        assert_eq!(eval(OpKind::Add, &[s, r], &Params::new()).unwrap(), dense);
    }

    /// Scalar-by-scalar Adadelta written independently of the kernel.
    fn adadelta_oracle(var: f64, grad: f64, lr: f64, rho: f64, eps: f64, steps: usize) -> f64 {
        let mut accum = 0.0;
        let mut accum_update = 0.0;
        let mut v = var;
        for _ in 0..steps {
            accum = accum * rho + grad * grad * (1.0 - rho);
            let update = (accum_update + eps).sqrt() * grad / (accum + eps).sqrt();
            accum_update = accum_update * rho + update * update * (1.0 - rho);
            v -= lr * update;
        }
        v
    }

    #[test]
    fn adadelta_matches_scalar_oracle() {
        let var = t(DType::F64, &[2], &[1.0, 2.0]);
        let grad = t(DType::F64, &[2], &[0.1, 0.1]);
        for steps in [1i64, 4] {
            let p = params(&[
                ("lr", ParamValue::Float(1.0)),
                ("rho", ParamValue::Float(0.95)),
                ("eps", ParamValue::Float(1e-8)),
                ("steps", ParamValue::Int(steps)),
            ]);
            let out = floats(&eval(OpKind::AdadeltaUpdate, &[var.clone(), grad.clone()], &p).unwrap());
            for (got, v0) in out.iter().zip([1.0, 2.0]) {
                let want = adadelta_oracle(v0, 0.1, 1.0, 0.95, 1e-8, steps as usize);
                assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
        // one step from zero accumulators moves by about sqrt(eps)/sqrt(0.05*g^2)*g
        let p1 = params(&[("lr", ParamValue::Float(1.0)), ("rho", ParamValue::Float(0.95)), ("eps", ParamValue::Float(1e-8))]);
        let one = floats(&eval(OpKind::AdadeltaUpdate, &[var.clone(), grad.clone()], &p1).unwrap());
        assert!((one[0] - (1.0 - 4.472_091_234_310_838e-4)).abs() < 1e-9);
        let f32_out = eval(OpKind::AdadeltaUpdate, &[var.cast(DType::F32).unwrap(), grad.cast(DType::F16).unwrap()], &p1).unwrap();
        assert_eq!(f32_out.dtype(), DType::F32);
    }

    #[test]
    fn adadelta_steps_are_bounded() {
        let var = t(DType::F32, &[1], &[1.0]);
        let p = params(&[
            ("lr", ParamValue::Float(1.0)),
            ("rho", ParamValue::Float(0.95)),
            ("eps", ParamValue::Float(1e-8)),
            ("steps", ParamValue::Int(0)),
        ]);
        let err = eval(OpKind::AdadeltaUpdate, &[var.clone(), var], &p).unwrap_err();
        assert!(matches!(err, EngineError::Trap { kind: TrapKind::InvalidArgument, .. }));
    }

    #[test]
    fn eval_is_referentially_transparent() {
        let a = t(DType::F16, &[2, 2], &[0.1, 0.2, 0.3, 0.4]);
        let first = eval(OpKind::Softmax, std::slice::from_ref(&a), &Params::new()).unwrap();
        for _ in 0..5 {
            assert!(eval(OpKind::Softmax, std::slice::from_ref(&a), &Params::new()).unwrap().values().bit_eq(first.values()));
        }
    }

    #[test]
    fn cost_scales_with_work() {
        let none = Params::new();
        assert_eq!(cost(OpKind::Matmul, &[&shape(&[2, 3]), &shape(&[3, 4])], &none), 24);
        assert_eq!(cost(OpKind::Add, &[&Shape::scalar(), &Shape::scalar()], &none), 1);
        let p = params(&[("steps", ParamValue::Int(4))]);
        assert_eq!(cost(OpKind::AdadeltaUpdate, &[&shape(&[2]), &shape(&[2])], &p), 8);
    }
}
