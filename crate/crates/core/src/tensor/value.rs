use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DType, EngineError, Shape, TrapKind};
use crate::coverage::CoverageSink;

/// Flat element storage. Floats of every width are held as `f64` already
/// rounded to their dtype; `I32` values are held as `i64` within `i32` range.
#[derive(Debug, Clone)]
pub enum Buffer {
    Float(Vec<f64>),
    Int(Vec<i64>),
    Bool(Vec<bool>),
}

impl Buffer {
    pub fn zeros(dtype: DType, len: usize) -> Self {
        if dtype.is_float() {
            Buffer::Float(vec![0.0; len])
        } else if dtype.is_int() {
            Buffer::Int(vec![0; len])
        } else {
            Buffer::Bool(vec![false; len])
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::Float(v) => v.len(),
            Buffer::Int(v) => v.len(),
            Buffer::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element as `f64` (ints converted, bools as 0/1).
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            Buffer::Float(v) => v[i],
            Buffer::Int(v) => v[i] as f64,
            Buffer::Bool(v) => f64::from(u8::from(v[i])),
        }
    }

    /// True for the all-zero bit pattern only, so `-0.0` counts as nonzero.
    pub fn is_zero(&self, i: usize) -> bool {
        match self {
            Buffer::Float(v) => v[i].to_bits() == 0,
            Buffer::Int(v) => v[i] == 0,
            Buffer::Bool(v) => !v[i],
        }
    }

    pub fn gather(&self, indices: impl IntoIterator<Item = usize>) -> Buffer {
        match self {
            Buffer::Float(v) => Buffer::Float(indices.into_iter().map(|i| v[i]).collect()),
            Buffer::Int(v) => Buffer::Int(indices.into_iter().map(|i| v[i]).collect()),
            Buffer::Bool(v) => Buffer::Bool(indices.into_iter().map(|i| v[i]).collect()),
        }
    }

    /// Gather where `None` produces a zero element.
    pub fn gather_or_zero(&self, indices: impl IntoIterator<Item = Option<usize>>) -> Buffer {
        match self {
            Buffer::Float(v) => Buffer::Float(indices.into_iter().map(|i| i.map_or(0.0, |i| v[i])).collect()),
            Buffer::Int(v) => Buffer::Int(indices.into_iter().map(|i| i.map_or(0, |i| v[i])).collect()),
            Buffer::Bool(v) => Buffer::Bool(indices.into_iter().map(|i| i.is_some_and(|i| v[i])).collect()),
        }
    }

    /// Resizes in place, zero-filling new slots.
    pub fn resize(&mut self, len: usize) {
        match self {
            Buffer::Float(v) => v.resize(len, 0.0),
            Buffer::Int(v) => v.resize(len, 0),
            Buffer::Bool(v) => v.resize(len, false),
        }
    }

    fn matches(&self, dtype: DType) -> bool {
        match self {
            Buffer::Float(_) => dtype.is_float(),
            Buffer::Int(_) => dtype.is_int(),
            Buffer::Bool(_) => dtype == DType::Bool,
        }
    }

    fn normalize(&mut self, dtype: DType) {
        match self {
            Buffer::Float(v) => v.iter_mut().for_each(|x| *x = dtype.round_float(*x)),
            Buffer::Int(v) => v.iter_mut().for_each(|x| *x = dtype.wrap_int(*x)),
            Buffer::Bool(_) => {}
        }
    }

    /// Byte-level identity: floats compare by bit pattern.
    pub fn bit_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::Float(a), Buffer::Float(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::Int(a), Buffer::Int(b)) => a == b,
            (Buffer::Bool(a), Buffer::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl PartialEq for Buffer {
    fn eq(&self, other: &Self) -> bool {
        self.bit_eq(other)
    }
}

/// Storage form of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Dense,
    Sparse,
    Ragged,
}

impl StructureKind {
    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Dense => "dense",
            StructureKind::Sparse => "sparse",
            StructureKind::Ragged => "ragged",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Dense,
    /// Lexicographically sorted coordinates of the stored nonzeros.
    Sparse { coords: Vec<Vec<usize>> },
    /// Per-row prefix lengths of a rank-2 tensor; the tail of each row is zero.
    Ragged { row_lengths: Vec<usize> },
}

impl Structure {
    pub fn kind(&self) -> StructureKind {
        match self {
            Structure::Dense => StructureKind::Dense,
            Structure::Sparse { .. } => StructureKind::Sparse,
            Structure::Ragged { .. } => StructureKind::Ragged,
        }
    }
}

/// An immutable tensor: dtype, logical shape, storage structure and payload.
///
/// For dense tensors `values` is the row-major payload; for sparse tensors it
/// holds the nonzeros in coordinate order; for ragged tensors the row prefixes
/// concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    dtype: DType,
    shape: Shape,
    structure: Structure,
    values: Buffer,
}

impl TensorValue {
    pub fn dense(dtype: DType, shape: Shape, mut values: Buffer) -> Result<Self, EngineError> {
        if !values.matches(dtype) {
            return Err(EngineError::Value(format!("payload kind does not match dtype {dtype}")));
        }
        if values.len() != shape.element_count() {
            return Err(EngineError::Value(format!(
                "dense payload has {} elements, shape {shape} needs {}",
                values.len(),
                shape.element_count()
            )));
        }
        values.normalize(dtype);
        Ok(TensorValue { dtype, shape, structure: Structure::Dense, values })
    }

    /// Dense tensor from `f64` values; ints are truncated, bools are `x != 0`.
    pub fn from_f64(dtype: DType, dims: &[usize], data: &[f64]) -> Result<Self, EngineError> {
        let values = if dtype.is_float() {
            Buffer::Float(data.to_vec())
        } else if dtype.is_int() {
            Buffer::Int(data.iter().map(|x| *x as i64).collect())
        } else {
            Buffer::Bool(data.iter().map(|x| *x != 0.0).collect())
        };
        Self::dense(dtype, Shape::new(dims.to_vec())?, values)
    }

    pub fn sparse(dtype: DType, shape: Shape, coords: Vec<Vec<usize>>, mut values: Buffer) -> Result<Self, EngineError> {
        if !values.matches(dtype) {
            return Err(EngineError::Value(format!("payload kind does not match dtype {dtype}")));
        }
        if coords.len() != values.len() {
            return Err(EngineError::Structure(format!(
                "{} sparse coordinates but {} values",
                coords.len(),
                values.len()
            )));
        }
        for (i, c) in coords.iter().enumerate() {
            if shape.offset(c).is_none() {
                return Err(EngineError::Structure(format!("sparse coordinate {c:?} outside shape {shape}")));
            }
            if i > 0 && coords[i - 1] >= *c {
                return Err(EngineError::Structure(format!(
                    "sparse coordinates must be strictly increasing ({:?} then {c:?})",
                    coords[i - 1]
                )));
            }
        }
        values.normalize(dtype);
        if (0..values.len()).any(|i| values.is_zero(i)) {
            return Err(EngineError::Structure("sparse tensors store nonzero values only".into()));
        }
        Ok(TensorValue { dtype, shape, structure: Structure::Sparse { coords }, values })
    }

    pub fn ragged(dtype: DType, shape: Shape, row_lengths: Vec<usize>, mut values: Buffer) -> Result<Self, EngineError> {
        if !values.matches(dtype) {
            return Err(EngineError::Value(format!("payload kind does not match dtype {dtype}")));
        }
        if shape.rank() != 2 {
            return Err(EngineError::Structure(format!("ragged tensors must be rank 2, got shape {shape}")));
        }
        let (rows, cols) = (shape.dims()[0], shape.dims()[1]);
        if row_lengths.len() != rows {
            return Err(EngineError::Structure(format!(
                "ragged tensor has {} row lengths for {rows} rows",
                row_lengths.len()
            )));
        }
        if let Some(l) = row_lengths.iter().find(|l| **l > cols) {
            return Err(EngineError::Structure(format!("ragged row length {l} exceeds {cols} columns")));
        }
        if row_lengths.iter().sum::<usize>() != values.len() {
            return Err(EngineError::Structure("sum of ragged row lengths differs from value count".into()));
        }
        values.normalize(dtype);
        Ok(TensorValue { dtype, shape, structure: Structure::Ragged { row_lengths }, values })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn structure_kind(&self) -> StructureKind {
        self.structure.kind()
    }

    /// Stored values (see the type docs for their layout per structure).
    pub fn values(&self) -> &Buffer {
        &self.values
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.structure, Structure::Dense)
    }

    /// Row-major logical payload regardless of structure.
    pub fn dense_values(&self) -> Buffer {
        match &self.structure {
            Structure::Dense => self.values.clone(),
            Structure::Sparse { coords } => {
                let mut slots = vec![None; self.shape.element_count()];
                for (i, c) in coords.iter().enumerate() {
                    slots[self.shape.offset(c).expect("validated coordinate")] = Some(i);
                }
                self.values.gather_or_zero(slots)
            }
            Structure::Ragged { row_lengths } => {
                let cols = self.shape.dims()[1];
                let mut slots = Vec::with_capacity(self.shape.element_count());
                let mut next = 0;
                for len in row_lengths {
                    for j in 0..cols {
                        slots.push((j < *len).then_some(next + j));
                    }
                    next += len;
                }
                self.values.gather_or_zero(slots)
            }
        }
    }

    pub fn densify(&self) -> TensorValue {
        TensorValue {
            dtype: self.dtype,
            shape: self.shape.clone(),
            structure: Structure::Dense,
            values: self.dense_values(),
        }
    }

    pub fn convert_structure(&self, target: StructureKind) -> Result<TensorValue, EngineError> {
        let dense = self.densify();
        match target {
            StructureKind::Dense => Ok(dense),
            StructureKind::Sparse => {
                let nz: Vec<usize> = (0..dense.values.len()).filter(|i| !dense.values.is_zero(*i)).collect();
                let coords = nz.iter().map(|i| dense.shape.coord(*i)).collect();
                Ok(TensorValue {
                    dtype: self.dtype,
                    shape: self.shape.clone(),
                    structure: Structure::Sparse { coords },
                    values: dense.values.gather(nz),
                })
            }
            StructureKind::Ragged => {
                if self.shape.rank() != 2 {
                    return Err(EngineError::Structure(format!(
                        "ragged conversion needs a rank-2 tensor, got shape {}",
                        self.shape
                    )));
                }
                let (rows, cols) = (self.shape.dims()[0], self.shape.dims()[1]);
                let mut row_lengths = Vec::with_capacity(rows);
                let mut keep = Vec::new();
                for r in 0..rows {
                    let len = (0..cols).rev().find(|c| !dense.values.is_zero(r * cols + c)).map_or(0, |c| c + 1);
                    row_lengths.push(len);
                    keep.extend((0..len).map(|c| r * cols + c));
                }
                Ok(TensorValue {
                    dtype: self.dtype,
                    shape: self.shape.clone(),
                    structure: Structure::Ragged { row_lengths },
                    values: dense.values.gather(keep),
                })
            }
        }
    }

    /// Same logical tensor with new dims; only valid for dense tensors with an
    /// equal element count.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<TensorValue, EngineError> {
        let shape = Shape::new(dims)?;
        if shape.element_count() != self.shape.element_count() {
            return Err(EngineError::Shape {
                rule: "reshape must preserve element count",
                dims: vec![self.shape.dims().to_vec(), shape.dims().to_vec()],
            });
        }
        TensorValue::dense(self.dtype, shape, self.dense_values())
    }

    /// Dense tensor sharing dtype with `self` but with a new shape and
    /// payload. Used by kernels and fault effects.
    pub fn replace_dense(&self, shape: Shape, values: Buffer) -> Result<TensorValue, EngineError> {
        TensorValue::dense(self.dtype, shape, values)
    }

    pub fn cast(&self, target: DType) -> Result<TensorValue, EngineError> {
        self.cast_traced(target, &crate::coverage::NoCoverage)
    }

    /// Element conversion to `target`. Shape and structure are preserved.
    /// Float to integer truncates toward zero and saturates; NaN or infinite
    /// values trap. Integer narrowing wraps.
    pub fn cast_traced(&self, target: DType, cov: &dyn CoverageSink) -> Result<TensorValue, EngineError> {
        if target == self.dtype {
            cov.hit("util.cast.identity");
            return Ok(self.clone());
        }
        let values = cast_buffer(&self.values, target, cov)?;
        let mut out = TensorValue {
            dtype: target,
            shape: self.shape.clone(),
            structure: self.structure.clone(),
            values,
        };
        // a sparse tensor may acquire explicit zeros (e.g. 0.5 -> 0 as i32)
        if let Structure::Sparse { .. } = out.structure {
            if (0..out.values.len()).any(|i| out.values.is_zero(i)) {
                out = out.convert_structure(StructureKind::Sparse)?;
            }
        }
        Ok(out)
    }
}

pub(crate) fn cast_buffer(values: &Buffer, target: DType, cov: &dyn CoverageSink) -> Result<Buffer, EngineError> {
    Ok(match (values, target) {
        (Buffer::Float(v), t) if t.is_float() => {
            if t == DType::F16 {
                cov.hit("util.round.f16");
            } else if t == DType::F32 {
                cov.hit("util.round.f32");
            }
            Buffer::Float(v.iter().map(|x| t.round_float(*x)).collect())
        }
        (Buffer::Float(v), t) if t.is_int() => {
            cov.hit("util.cast.float_to_int");
            let (lo, hi) = match t {
                DType::I32 => (i32::MIN as f64, i32::MAX as f64),
                _ => (i64::MIN as f64, i64::MAX as f64),
            };
            let mut out = Vec::with_capacity(v.len());
            for x in v {
                if !x.is_finite() {
                    cov.hit("util.cast.nan_trap");
                    return Err(EngineError::Trap {
                        kind: TrapKind::InvalidCast,
                        message: format!("cannot cast {x} to {t}"),
                    });
                }
                let tr = x.trunc();
                if tr < lo || tr > hi {
                    cov.hit("util.cast.saturate");
                }
                out.push(t.wrap_int(tr.clamp(lo, hi) as i64));
            }
            Buffer::Int(out)
        }
        (Buffer::Int(v), t) if t.is_float() => {
            cov.hit("util.cast.int_to_float");
            Buffer::Float(v.iter().map(|x| t.round_float(*x as f64)).collect())
        }
        (Buffer::Int(v), t) if t.is_int() => {
            cov.hit("util.wrap.i32");
            Buffer::Int(v.iter().map(|x| t.wrap_int(*x)).collect())
        }
        (Buffer::Bool(v), t) if t.is_numeric() => {
            cov.hit("util.cast.from_bool");
            if t.is_float() {
                Buffer::Float(v.iter().map(|b| f64::from(u8::from(*b))).collect())
            } else {
                Buffer::Int(v.iter().map(|b| i64::from(*b)).collect())
            }
        }
        (b, DType::Bool) => {
            cov.hit("util.cast.to_bool");
            Buffer::Bool((0..b.len()).map(|i| b.get_f64(i) != 0.0 || b.get_f64(i).is_nan()).collect())
        }
        (b, t) => {
            // identical storage kinds not covered above: bool -> bool
            debug_assert_eq!(t, DType::Bool);
            b.clone()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dtype: DType, dims: &[usize], data: &[f64]) -> TensorValue {
        TensorValue::from_f64(dtype, dims, data).unwrap()
    }

    #[test]
    fn dense_to_sparse_extracts_nonzeros() {
        let d = t(DType::F32, &[2, 2], &[0.0, 5.0, 0.0, 0.0]);
        let s = d.convert_structure(StructureKind::Sparse).unwrap();
        assert_eq!(s.structure(), &Structure::Sparse { coords: vec![vec![0, 1]] });
        assert_eq!(s.values(), &Buffer::Float(vec![5.0]));
        assert_eq!(s.densify(), d);
        let again = s.densify().convert_structure(StructureKind::Sparse).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn negative_zero_survives_sparse_round_trip() {
        let d = t(DType::F64, &[3], &[-0.0, 0.0, 1.0]);
        let back = d.convert_structure(StructureKind::Sparse).unwrap().densify();
        assert!(back.values().bit_eq(d.values()));
    }

    #[test]
    fn ragged_round_trip_and_rank_check() {
        let d = t(DType::I32, &[3, 3], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 6.0]);
        let r = d.convert_structure(StructureKind::Ragged).unwrap();
        assert_eq!(r.structure(), &Structure::Ragged { row_lengths: vec![1, 0, 3] });
        assert_eq!(r.values(), &Buffer::Int(vec![1, 4, 0, 6]));
        assert_eq!(r.densify(), d);
        let rank3 = t(DType::F32, &[1, 2, 2], &[1.0; 4]);
        assert!(matches!(rank3.convert_structure(StructureKind::Ragged), Err(EngineError::Structure(_))));
    }

    #[test]
    fn sparse_constructor_rejects_bad_coords() {
        let s = Shape::new(vec![2, 2]).unwrap();
        let unsorted = TensorValue::sparse(DType::F32, s.clone(), vec![vec![1, 0], vec![0, 1]], Buffer::Float(vec![1.0, 2.0]));
        assert!(unsorted.is_err());
        let oob = TensorValue::sparse(DType::F32, s.clone(), vec![vec![2, 0]], Buffer::Float(vec![1.0]));
        assert!(oob.is_err());
        let zero = TensorValue::sparse(DType::F32, s, vec![vec![0, 0]], Buffer::Float(vec![0.0]));
        assert!(zero.is_err());
    }

    #[test]
    fn cast_rules() {
        let x = t(DType::F32, &[1], &[1.5]);
        assert_eq!(x.cast(DType::I32).unwrap().values(), &Buffer::Int(vec![1]));
        let big = t(DType::F32, &[1], &[65520.0]);
        assert_eq!(big.cast(DType::F16).unwrap().values(), &Buffer::Float(vec![f64::INFINITY]));
        assert_eq!(x.cast(DType::F32).unwrap(), x);
        let nan = t(DType::F64, &[1], &[f64::NAN]);
        assert!(matches!(nan.cast(DType::I64), Err(EngineError::Trap { kind: TrapKind::InvalidCast, .. })));
        let wrap = t(DType::I64, &[1], &[2147483648.0]);
        assert_eq!(wrap.cast(DType::I32).unwrap().values(), &Buffer::Int(vec![i32::MIN as i64]));
        let sat = t(DType::F64, &[1], &[1e20]);
        assert_eq!(sat.cast(DType::I32).unwrap().values(), &Buffer::Int(vec![i32::MAX as i64]));
    }

    #[test]
    fn cast_keeps_sparse_canonical() {
        let s = t(DType::F32, &[3], &[0.5, 0.0, 2.0]).convert_structure(StructureKind::Sparse).unwrap();
        let c = s.cast(DType::I32).unwrap();
        assert_eq!(c.structure(), &Structure::Sparse { coords: vec![vec![2]] });
        assert_eq!(c.densify().values(), &Buffer::Int(vec![0, 0, 2]));
    }
}
