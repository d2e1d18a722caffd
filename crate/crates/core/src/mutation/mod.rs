//! The five tensor mutation operators, static applicability analysis and
//! random operator/site selection.

mod rotate;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{format_f64, validate, CanonicalHash, Program, Stmt, TypedProgram, ValidationError};
use crate::tensor::{DType, ParamValue, StructureKind, TensorValue, MAX_RANK};

pub use rotate::{rotate, source_cell, ANGLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MutationOperator {
    TensorType,
    TensorShape,
    TensorStructure,
    TensorRotate,
    ParameterSpecial,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 5] = [
        MutationOperator::TensorType,
        MutationOperator::TensorShape,
        MutationOperator::TensorStructure,
        MutationOperator::TensorRotate,
        MutationOperator::ParameterSpecial,
    ];
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpecialKind {
    Negate,
    Zero,
    NaN,
    TypeMax,
    TypeMin,
}

impl SpecialKind {
    pub const ALL: [SpecialKind; 5] = [
        SpecialKind::Negate,
        SpecialKind::Zero,
        SpecialKind::NaN,
        SpecialKind::TypeMax,
        SpecialKind::TypeMin,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The tensor literal bound by the statement.
    Literal,
    /// A named parameter of the statement's op application.
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    #[serde(rename = "dtype")]
    DType(DType),
    Dims(Vec<usize>),
    Structure(StructureKind),
    Angle(u32),
    Special(SpecialKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationSite {
    pub stmt: usize,
    pub target: Target,
    pub operator: MutationOperator,
    pub operand: Operand,
}

impl fmt::Display for MutationSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = match &self.target {
            Target::Literal => "literal".to_string(),
            Target::Param(p) => format!("param {p}"),
        };
        let operand = match &self.operand {
            Operand::DType(d) => format!("-> {d}"),
            Operand::Dims(d) => format!("-> {d:?}"),
            Operand::Structure(s) => format!("-> {s}"),
            Operand::Angle(a) => format!("{a} deg"),
            Operand::Special(k) => format!("{k:?}"),
        };
        write!(f, "stmt {} {target}: {} {operand}", self.stmt, self.operator)
    }
}

/// A program derived from a seed by one or more mutations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub program: Program,
    /// (parent hash, site) for every mutation from the seed on.
    pub lineage: Vec<(CanonicalHash, MutationSite)>,
    /// Set when the mutant no longer passes static validation.
    pub statically_ill: Option<ValidationError>,
}

impl Mutant {
    pub fn order(&self) -> usize {
        self.lineage.len()
    }

    /// Prepends the lineage of the program this mutant was derived from.
    pub fn with_ancestry(mut self, ancestry: &[(CanonicalHash, MutationSite)]) -> Self {
        let mut lineage = ancestry.to_vec();
        lineage.append(&mut self.lineage);
        self.lineage = lineage;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MutationError {
    #[error("site is not applicable: {0}")]
    SiteMismatch(String),
    #[error("no applicable mutation")]
    NoApplicableMutation,
}

/// All ordered factorizations of `n` into 1 to 4 positive parts.
pub fn factorizations(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for d in (1..=n).filter(|d| n.is_multiple_of(*d)) {
            prefix.push(d);
            go(n / d, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for parts in 1..=MAX_RANK {
        go(n, parts, &mut Vec::new(), &mut out);
    }
    out
}

fn literal_sites(stmt: usize, t: &TensorValue, out: &mut Vec<MutationSite>) {
    let site = |operator, operand| MutationSite {
        stmt,
        target: Target::Literal,
        operator,
        operand,
    };
    for d in DType::ALL {
        if d != t.dtype() && t.cast(d).is_ok() {
            out.push(site(MutationOperator::TensorType, Operand::DType(d)));
        }
    }
    if t.shape().element_count() >= 2 {
        for dims in factorizations(t.shape().element_count()) {
            if dims != t.shape().dims() {
                out.push(site(MutationOperator::TensorShape, Operand::Dims(dims)));
            }
        }
    }
    if t.is_dense() {
        out.push(site(MutationOperator::TensorStructure, Operand::Structure(StructureKind::Sparse)));
        if t.shape().rank() == 2 {
            out.push(site(MutationOperator::TensorStructure, Operand::Structure(StructureKind::Ragged)));
        }
    }
    if (2..=3).contains(&t.shape().rank()) {
        for a in ANGLES {
            out.push(site(MutationOperator::TensorRotate, Operand::Angle(a)));
        }
    }
}

/// Every site at which some operator applies, in statement order, then
/// operator order, then operand order.
pub fn applicable_sites(p: &TypedProgram) -> Vec<MutationSite> {
    let mut out = Vec::new();
    for (i, s) in p.program().statements.iter().enumerate() {
        match s {
            Stmt::Let { value, .. } => literal_sites(i, value, &mut out),
            Stmt::Apply { params, .. } => {
                for (name, v) in params {
                    let kinds: &[SpecialKind] = match v {
                        ParamValue::Float(_) => &SpecialKind::ALL,
                        ParamValue::Int(_) => &[SpecialKind::Negate, SpecialKind::Zero, SpecialKind::TypeMax, SpecialKind::TypeMin],
                        _ => &[],
                    };
                    for k in kinds {
                        out.push(MutationSite {
                            stmt: i,
                            target: Target::Param(name.clone()),
                            operator: MutationOperator::ParameterSpecial,
                            operand: Operand::Special(*k),
                        });
                    }
                }
            }
            Stmt::Observe { .. } => {}
        }
    }
    out
}

fn special(v: &ParamValue, kind: SpecialKind) -> Option<ParamValue> {
    Some(match (v, kind) {
        (ParamValue::Int(i), SpecialKind::Negate) => ParamValue::Int(i.wrapping_neg()),
        (ParamValue::Int(_), SpecialKind::Zero) => ParamValue::Int(0),
        (ParamValue::Int(_), SpecialKind::TypeMax) => ParamValue::Int(i64::MAX),
        (ParamValue::Int(_), SpecialKind::TypeMin) => ParamValue::Int(i64::MIN),
        (ParamValue::Float(x), SpecialKind::Negate) => ParamValue::Float(-x),
        (ParamValue::Float(_), SpecialKind::Zero) => ParamValue::Float(0.0),
        (ParamValue::Float(_), SpecialKind::NaN) => ParamValue::Float(f64::NAN),
        (ParamValue::Float(_), SpecialKind::TypeMax) => ParamValue::Float(f64::MAX),
        (ParamValue::Float(_), SpecialKind::TypeMin) => ParamValue::Float(f64::MIN),
        _ => return None,
    })
}

fn mutate_literal(t: &TensorValue, operand: &Operand) -> Option<TensorValue> {
    match operand {
        Operand::DType(d) => t.cast(*d).ok(),
        Operand::Dims(dims) => {
            let reshaped = t.with_dims(dims.clone()).ok()?;
            Some(reshaped.convert_structure(t.structure_kind()).unwrap_or(reshaped))
        }
        Operand::Structure(k) => t.convert_structure(*k).ok(),
        Operand::Angle(a) => rotate(t, *a).ok(),
        Operand::Special(_) => None,
    }
}

fn mismatch(site: &MutationSite) -> MutationError {
    MutationError::SiteMismatch(site.to_string())
}

fn apply_unchecked(p: &TypedProgram, site: &MutationSite) -> Result<Mutant, MutationError> {
    let mut program = p.program().clone();
    let stmt = program.statements.get_mut(site.stmt).ok_or_else(|| mismatch(site))?;
    match (stmt, &site.target) {
        (Stmt::Let { value, .. }, Target::Literal) => {
            *value = mutate_literal(value, &site.operand).ok_or_else(|| mismatch(site))?;
        }
        (Stmt::Apply { params, .. }, Target::Param(name)) => {
            let Operand::Special(kind) = site.operand else {
                return Err(mismatch(site));
            };
            let slot = params.get_mut(name).ok_or_else(|| mismatch(site))?;
            *slot = special(slot, kind).ok_or_else(|| mismatch(site))?;
        }
        _ => return Err(mismatch(site)),
    }
    let statically_ill = validate(&program).err();
    Ok(Mutant {
        lineage: vec![(p.program().canonical_hash(), site.clone())],
        program,
        statically_ill,
    })
}

/// Applies one site. The result is re-validated; a mutant that fails
/// validation is still returned, flagged.
pub fn apply(p: &TypedProgram, site: &MutationSite) -> Result<Mutant, MutationError> {
    if !applicable_sites(p).contains(site) {
        return Err(mismatch(site));
    }
    apply_unchecked(p, site)
}

/// Picks an operator uniformly among those with at least one site, then
/// one of its sites uniformly, and applies it.
pub fn pick_and_mutate<R: Rng + ?Sized>(p: &TypedProgram, rng: &mut R) -> Result<Mutant, MutationError> {
    let sites = applicable_sites(p);
    let groups: Vec<Vec<&MutationSite>> = MutationOperator::ALL
        .iter()
        .map(|op| sites.iter().filter(|s| s.operator == *op).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    if groups.is_empty() {
        return Err(MutationError::NoApplicableMutation);
    }
    let group = &groups[rng.gen_range(0..groups.len())];
    let site = group[rng.gen_range(0..group.len())];
    apply_unchecked(p, site)
}

/// Human-readable one-line description of a parameter value.
pub fn describe_param(v: &ParamValue) -> String {
    match v {
        ParamValue::Int(i) => i.to_string(),
        ParamValue::Float(x) => format_f64(*x),
        ParamValue::DType(d) => d.to_string(),
        ParamValue::Dims(d) => format!("{d:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn typed(text: &str) -> TypedProgram {
        validate(&parse(text).unwrap()).unwrap()
    }

    fn count(sites: &[MutationSite], op: MutationOperator) -> usize {
        sites.iter().filter(|s| s.operator == op).count()
    }

    #[test]
    fn scalar_without_params() {
        let sites = applicable_sites(&typed("let a = tensor f32 [] {2.5}\nlet b = neg(a)\nobserve b"));
        assert_eq!(count(&sites, MutationOperator::ParameterSpecial), 0);
        assert_eq!(count(&sites, MutationOperator::TensorShape), 0);
        assert_eq!(count(&sites, MutationOperator::TensorRotate), 0);
        assert_eq!(count(&sites, MutationOperator::TensorType), 5);
        assert_eq!(count(&sites, MutationOperator::TensorStructure), 1);
    }

    #[test]
    fn type_sites_skip_trapping_casts() {
        let sites = applicable_sites(&typed("let a = tensor f32 [2] {nan, 1}\nobserve a"));
        let targets: Vec<&Operand> = sites.iter().filter(|s| s.operator == MutationOperator::TensorType).map(|s| &s.operand).collect();
        assert_eq!(
            targets,
            [&Operand::DType(DType::F16), &Operand::DType(DType::F64), &Operand::DType(DType::Bool)]
        );
    }

    #[test]
    fn shape_sites_of_three_by_four() {
        let t = typed("let a = tensor f32 [3, 4] {1,2,3,4,5,6,7,8,9,10,11,12}\nobserve a");
        let dims: Vec<Vec<usize>> = applicable_sites(&t)
            .into_iter()
            .filter_map(|s| match s.operand {
                Operand::Dims(d) => Some(d),
                _ => None,
            })
            .collect();
        for d in [vec![2, 6], vec![4, 3], vec![12], vec![1, 12], vec![6, 2], vec![2, 2, 3]] {
            assert!(dims.contains(&d), "{d:?}");
        }
        assert!(!dims.contains(&vec![3, 4]));
        let m = apply(
            &t,
            &MutationSite {
                stmt: 0,
                target: Target::Literal,
                operator: MutationOperator::TensorShape,
                operand: Operand::Dims(vec![2, 6]),
            },
        )
        .unwrap();
        match &m.program.statements[0] {
            Stmt::Let { value, .. } => {
                assert_eq!(value.shape().dims(), [2, 6]);
                assert_eq!(value.values().get_f64(11), 12.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn type_mutation_rounds_to_half() {
        let t = typed("let a = tensor f32 [2] {0.1, 1}\nobserve a");
        let site = MutationSite {
            stmt: 0,
            target: Target::Literal,
            operator: MutationOperator::TensorType,
            operand: Operand::DType(DType::F16),
        };
        let m = apply(&t, &site).unwrap();
        match &m.program.statements[0] {
            Stmt::Let { value, .. } => {
                assert_eq!(value.dtype(), DType::F16);
                assert_eq!(value.values().get_f64(0), half::f16::from_f32(0.1).to_f64());
            }
            _ => panic!(),
        }
        assert_eq!(m.order(), 1);
        assert_eq!(m.lineage[0].0, t.program().canonical_hash());
    }

    #[test]
    fn parameter_specials() {
        let t = typed(
            "let v = tensor f32 [1] {1}\nlet g = tensor f32 [1] {1}\n\
             let u = adadelta_update(v, g; eps=1e-8, lr=1.0, rho=0.95, steps=2)\nobserve u",
        );
        let sites = applicable_sites(&t);
        assert_eq!(count(&sites, MutationOperator::ParameterSpecial), 3 * 5 + 4);
        let site = MutationSite {
            stmt: 2,
            target: Target::Param("steps".into()),
            operator: MutationOperator::ParameterSpecial,
            operand: Operand::Special(SpecialKind::NaN),
        };
        assert!(matches!(apply(&t, &site), Err(MutationError::SiteMismatch(_))));
        let site = MutationSite {
            operand: Operand::Special(SpecialKind::TypeMin),
            ..site
        };
        let m = apply(&t, &site).unwrap();
        assert!(m.program.to_string().contains("steps=-9223372036854775808"));
    }

    #[test]
    fn ill_typed_mutants_are_flagged() {
        let t = typed("let a = tensor f32 [2, 3] {1,2,3,4,5,6}\nlet b = tensor f32 [2, 3] {1,2,3,4,5,6}\nlet c = add(a, b)\nobserve c");
        let site = MutationSite {
            stmt: 0,
            target: Target::Literal,
            operator: MutationOperator::TensorShape,
            operand: Operand::Dims(vec![3, 2]),
        };
        let m = apply(&t, &site).unwrap();
        assert_eq!(m.statically_ill.as_ref().map(|e| e.stmt()), Some(2));
    }

    #[test]
    fn pick_is_deterministic_and_respects_availability() {
        let t = typed("let a = tensor f32 [2, 2] {1,2,3,4}\nlet r = reduce_sum(a; axis=1)\nobserve r");
        let pick = |seed| pick_and_mutate(&t, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(pick(7), pick(7));
        let only_params = typed("let a = tensor bool [] {true}\nlet c = cast(a; dtype=bool)\nobserve c");
        // bool scalar: type and structure sites still exist
        assert!(!applicable_sites(&only_params).is_empty());
    }

    #[test]
    fn factorization_counts() {
        // ordered factorizations of 12 into at most 4 parts, by brute force
        let mut brute = 0;
        for k in 1..=4u32 {
            let mut idx = vec![1usize; k as usize];
            loop {
                if idx.iter().product::<usize>() == 12 {
                    brute += 1;
                }
                let mut i = 0;
                while i < idx.len() && idx[i] == 12 {
                    idx[i] = 1;
                    i += 1;
                }
                if i == idx.len() {
                    break;
                }
                idx[i] += 1;
            }
        }
        assert_eq!(factorizations(12).len(), brute);
        assert!(factorizations(0).is_empty());
    }
}
