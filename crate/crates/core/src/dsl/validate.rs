use std::collections::BTreeMap;

use super::{Program, Stmt};
use crate::tensor::{self, DType, EngineError, Shape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("statement {stmt}: {error}")]
    Engine { stmt: usize, error: EngineError },
    #[error("statement {stmt}: {message}")]
    Program { stmt: usize, message: String },
}

impl ValidationError {
    pub fn stmt(&self) -> usize {
        match self {
            ValidationError::Engine { stmt, .. } | ValidationError::Program { stmt, .. } => *stmt,
        }
    }
}

/// A program together with the static dtype and shape of every binding.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedProgram {
    program: Program,
    types: Vec<Option<(DType, Shape)>>,
}

impl TypedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn into_program(self) -> Program {
        self.program
    }

    /// Static type of the value bound by statement `stmt`.
    pub fn type_of(&self, stmt: usize) -> Option<&(DType, Shape)> {
        self.types.get(stmt).and_then(|t| t.as_ref())
    }
}

/// Checks single assignment, observation and the engine's static rules;
/// reports the first failing statement.
pub fn validate(p: &Program) -> Result<TypedProgram, ValidationError> {
    let mut env: BTreeMap<&str, (DType, Shape)> = BTreeMap::new();
    let mut types = Vec::with_capacity(p.statements.len());
    let program_err = |stmt, message: String| ValidationError::Program { stmt, message };
    for (i, s) in p.statements.iter().enumerate() {
        if let Some(name) = s.binds() {
            if env.contains_key(name) {
                return Err(program_err(i, format!("`{name}` is bound twice")));
            }
        }
        let ty = match s {
            Stmt::Let { name, value } => {
                let t = (value.dtype(), value.shape().clone());
                env.insert(name, t.clone());
                Some(t)
            }
            Stmt::Apply { name, kind, args, params } => {
                let mut inputs = Vec::with_capacity(args.len());
                for a in args {
                    let Some((d, s)) = env.get(a.as_str()) else {
                        return Err(program_err(i, format!("`{a}` is unbound")));
                    };
                    inputs.push((*d, s));
                }
                let t = tensor::infer(*kind, &inputs, params).map_err(|error| ValidationError::Engine { stmt: i, error })?;
                env.insert(name, t.clone());
                Some(t)
            }
            Stmt::Observe { name } => {
                if !env.contains_key(name.as_str()) {
                    return Err(program_err(i, format!("observed name `{name}` is unbound")));
                }
                None
            }
        };
        types.push(ty);
    }
    if !p.statements.iter().any(|s| matches!(s, Stmt::Observe { .. })) {
        return Err(program_err(p.statements.len(), "program observes nothing".into()));
    }
    Ok(TypedProgram {
        program: p.clone(),
        types,
    })
}
