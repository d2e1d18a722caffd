use std::fmt::Write;

use super::{Program, Stmt};
use crate::tensor::{Buffer, DType, ParamValue, Structure, TensorValue};

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

/// Shortest text for an element of a float tensor of `dtype` that reads back
/// to the identical stored value.
pub fn format_value(dtype: DType, x: f64) -> String {
    if !x.is_finite() {
        return format_f64(x);
    }
    match dtype {
        DType::F32 => format!("{:?}", x as f32),
        DType::F16 => {
            let plain = format!("{:?}", x as f32);
            (0..17)
                .map(|p| format!("{x:.p$e}"))
                .find(|s| s.parse::<f64>().is_ok_and(|y| DType::F16.round_float(y).to_bits() == x.to_bits()))
                .filter(|s| s.len() < plain.len())
                .unwrap_or(plain)
        }
        _ => format_f64(x),
    }
}

fn element(dtype: DType, values: &Buffer, i: usize) -> String {
    match values {
        Buffer::Float(v) => format_value(dtype, v[i]),
        Buffer::Int(v) => v[i].to_string(),
        Buffer::Bool(v) => v[i].to_string(),
    }
}

fn dims(d: &[usize]) -> String {
    let parts: Vec<String> = d.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn values(t: &TensorValue) -> String {
    let parts: Vec<String> = (0..t.values().len()).map(|i| element(t.dtype(), t.values(), i)).collect();
    format!("{{{}}}", parts.join(", "))
}

fn literal(t: &TensorValue) -> String {
    let head = format!("tensor {} {}", t.dtype(), dims(t.shape().dims()));
    match t.structure() {
        Structure::Dense => format!("{head} {}", values(t)),
        Structure::Ragged { row_lengths } => format!("{head} ragged {} {}", dims(row_lengths), values(t)),
        Structure::Sparse { coords } => {
            let entries: Vec<String> = coords
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{}: {}", dims(c), element(t.dtype(), t.values(), i)))
                .collect();
            format!("{head} sparse {{{}}}", entries.join(", "))
        }
    }
}

fn param(v: &ParamValue) -> String {
    match v {
        ParamValue::Int(i) => i.to_string(),
        ParamValue::Float(x) => format_f64(*x),
        ParamValue::DType(d) => d.to_string(),
        ParamValue::Dims(d) => dims(d),
    }
}

/// Canonical text: one statement per line, single spaces, parameters in
/// name order, literals in their shortest exact form.
pub fn print(p: &Program) -> String {
    let mut out = String::new();
    for s in &p.statements {
        match s {
            Stmt::Let { name, value } => writeln!(out, "let {name} = {}", literal(value)),
            Stmt::Observe { name } => writeln!(out, "observe {name}"),
            Stmt::Apply { name, kind, args, params } => {
                let mut inner = args.join(", ");
                if !params.is_empty() {
                    let ps: Vec<String> = params.iter().map(|(k, v)| format!("{k}={}", param(v))).collect();
                    inner = format!("{inner}; {}", ps.join(", "));
                }
                writeln!(out, "let {name} = {kind}({inner})")
            }
        }
        .expect("writing to a String");
    }
    out
}
