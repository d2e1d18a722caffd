//! Seed-test language: AST, parser, canonical printer and static checker.
//!
//! ```text
//! # comment
//! let a = tensor f32 [2, 2] {1.0, 2.0, 3.0, 4.0}
//! let s = tensor f32 [2, 2] sparse {[0, 1]: 5.0}
//! let r = tensor f32 [2, 3] ragged [1, 2] {1.0, 2.0, 3.0}
//! let b = matmul(a, s)
//! let c = reduce_sum(b; axis=1)
//! observe c
//! ```

mod parser;
mod printer;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::{OpKind, Params, TensorValue};

pub use parser::{parse, ParseError};
pub use printer::{format_f64, format_value, print};
pub use validate::{validate, TypedProgram, ValidationError};

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let { name: String, value: TensorValue },
    Apply { name: String, kind: OpKind, args: Vec<String>, params: Params },
    Observe { name: String },
}

impl Stmt {
    /// Name bound by this statement, if any.
    pub fn binds(&self) -> Option<&str> {
        match self {
            Stmt::Let { name, .. } | Stmt::Apply { name, .. } => Some(name),
            Stmt::Observe { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub statements: Vec<Stmt>,
}

impl Program {
    pub fn new(statements: Vec<Stmt>) -> Self {
        Program { statements }
    }

    /// Observed names in statement order.
    pub fn observed(&self) -> Vec<&str> {
        self.statements
            .iter()
            .filter_map(|s| match s {
                Stmt::Observe { name } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn canonical_hash(&self) -> CanonicalHash {
        CanonicalHash::of_text(&print(self))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

/// SHA-256 of a program's canonical printed form, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalHash(String);

impl CanonicalHash {
    pub fn of_text(canonical: &str) -> Self {
        let digest = Sha256::digest(canonical.as_bytes());
        CanonicalHash(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First 12 hex digits, for display.
    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl fmt::Display for CanonicalHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
