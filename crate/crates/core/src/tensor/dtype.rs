use std::fmt;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use super::EngineError;

/// Element type of a tensor.
///
/// Declaration order is the promotion order for the numeric types:
/// `I32 < I64 < F16 < F32 < F64`. `Bool` sits outside the lattice and only
/// converts through an explicit cast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I32,
    I64,
    F16,
    F32,
    F64,
    Bool,
}

/// A single element, used for dtype limits and parameter values.
#[derive(Debug, Clone, Copy)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl DType {
    pub const ALL: [DType; 6] = [DType::I32, DType::I64, DType::F16, DType::F32, DType::F64, DType::Bool];
    pub const NUMERIC: [DType; 5] = [DType::I32, DType::I64, DType::F16, DType::F32, DType::F64];

    pub fn name(self) -> &'static str {
        match self {
            DType::I32 => "i32",
            DType::I64 => "i64",
            DType::F16 => "f16",
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::Bool => "bool",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::F16 | DType::F32 | DType::F64)
    }

    pub fn is_int(self) -> bool {
        matches!(self, DType::I32 | DType::I64)
    }

    pub fn is_numeric(self) -> bool {
        self != DType::Bool
    }

    pub fn max_value(self) -> Scalar {
        match self {
            DType::I32 => Scalar::Int(i32::MAX as i64),
            DType::I64 => Scalar::Int(i64::MAX),
            DType::F16 => Scalar::Float(f16::MAX.to_f64()),
            DType::F32 => Scalar::Float(f32::MAX as f64),
            DType::F64 => Scalar::Float(f64::MAX),
            DType::Bool => Scalar::Bool(true),
        }
    }

    pub fn min_value(self) -> Scalar {
        match self {
            DType::I32 => Scalar::Int(i32::MIN as i64),
            DType::I64 => Scalar::Int(i64::MIN),
            DType::F16 => Scalar::Float(f16::MIN.to_f64()),
            DType::F32 => Scalar::Float(f32::MIN as f64),
            DType::F64 => Scalar::Float(f64::MIN),
            DType::Bool => Scalar::Bool(false),
        }
    }

    /// NaN representative; `None` for non-float types.
    pub fn nan_value(self) -> Option<f64> {
        self.is_float().then_some(f64::NAN)
    }

    /// Rounds an `f64` to the precision of a float dtype. NaN payloads are
    /// canonicalized so bitwise comparison stays meaningful.
    pub fn round_float(self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self {
            DType::F16 => f16::from_f64(x).to_f64(),
            DType::F32 => x as f32 as f64,
            _ => x,
        }
    }

    /// Two's-complement wrap of an integer into the range of an int dtype.
    pub fn wrap_int(self, x: i64) -> i64 {
        match self {
            DType::I32 => x as i32 as i64,
            _ => x,
        }
    }
}

/// Least upper bound of two dtypes on the promotion lattice.
pub fn promote(a: DType, b: DType) -> Result<DType, EngineError> {
    match (a, b) {
        (DType::Bool, DType::Bool) => Ok(DType::Bool),
        (DType::Bool, _) | (_, DType::Bool) => Err(EngineError::Promotion { left: a, right: b }),
        _ => Ok(a.max(b)),
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DType::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dtype `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn promote_examples() {
        assert_eq!(promote(DType::F32, DType::F32).unwrap(), DType::F32);
        assert_eq!(promote(DType::F16, DType::F32).unwrap(), DType::F32);
        assert_eq!(promote(DType::I64, DType::F16).unwrap(), DType::F16);
        assert_eq!(promote(DType::Bool, DType::Bool).unwrap(), DType::Bool);
        assert!(matches!(promote(DType::Bool, DType::I32), Err(EngineError::Promotion { .. })));
        assert!(promote(DType::F64, DType::Bool).is_err());
    }

    #[test]
    fn promote_is_a_join() {
        for a in DType::NUMERIC {
            for b in DType::NUMERIC {
                let ab = promote(a, b).unwrap();
                assert_eq!(ab, promote(b, a).unwrap());
                assert_eq!(promote(a, ab).unwrap(), ab);
                assert_eq!(promote(a, a).unwrap(), a);
                for c in DType::NUMERIC {
                    let left = promote(promote(a, b).unwrap(), c).unwrap();
                    let right = promote(a, promote(b, c).unwrap()).unwrap();
                    assert_eq!(left, right);
                }
            }
        }
    }

    #[test]
    fn limits() {
        assert!(matches!(DType::F16.max_value(), Scalar::Float(x) if x == 65504.0));
        assert!(matches!(DType::I32.min_value(), Scalar::Int(x) if x == i32::MIN as i64));
        assert!(DType::I64.nan_value().is_none());
        assert!(DType::F32.nan_value().unwrap().is_nan());
    }

    #[test]
    fn wrap_and_round() {
        assert_eq!(DType::I32.wrap_int(i32::MAX as i64 + 1), i32::MIN as i64);
        assert_eq!(DType::F32.round_float(0.1), 0.1f32 as f64);
        assert_eq!(DType::F16.round_float(65520.0), f64::INFINITY);
    }
}
