mod common;

use common::{literal, literal_program};
use deltafuzz_core::dsl::validate;
use deltafuzz_core::mutation::{self, rotate, source_cell, MutationOperator, Operand};
use deltafuzz_core::tensor::{StructureKind, TensorValue};
use proptest::prelude::*;

fn mutants(t: &TensorValue, op: MutationOperator) -> Vec<(Operand, TensorValue)> {
    let typed = validate(&literal_program(t)).expect("a literal program validates");
    mutation::applicable_sites(&typed)
        .into_iter()
        .filter(|s| s.operator == op)
        .map(|s| {
            let m = mutation::apply(&typed, &s).expect("listed sites apply");
            (s.operand, literal(&m.program).clone())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn shape_mutation_keeps_count_and_payload(t in common::tensor(0, 3)) {
        for (operand, m) in mutants(&t, MutationOperator::TensorShape) {
            let Operand::Dims(d) = operand else { panic!("shape site without dims") };
            prop_assert_eq!(m.shape().dims(), d.as_slice());
            prop_assert_eq!(m.shape().element_count(), t.shape().element_count());
            prop_assert!(m.dense_values().bit_eq(&t.dense_values()));
            prop_assert_eq!(m.dtype(), t.dtype());
        }
    }

    #[test]
    fn type_mutation_keeps_shape_and_structure(t in common::tensor(0, 3)) {
        for (operand, m) in mutants(&t, MutationOperator::TensorType) {
            let Operand::DType(d) = operand else { panic!("type site without dtype") };
            prop_assert_eq!(m.dtype(), d);
            prop_assert_eq!(m.shape(), t.shape());
            prop_assert_eq!(m.structure_kind(), t.structure_kind());
        }
    }

    #[test]
    fn structure_mutation_round_trips(t in common::dense(0, 3)) {
        let ms = mutants(&t, MutationOperator::TensorStructure);
        prop_assert!(!ms.is_empty());
        for (operand, m) in ms {
            let Operand::Structure(k) = operand else { panic!("structure site without kind") };
            prop_assert_eq!(m.structure_kind(), k);
            prop_assert_eq!(m.convert_structure(StructureKind::Dense).unwrap(), t.clone());
        }
    }

    #[test]
    fn four_quarter_turns_are_identity(t in common::tensor(2, 3)) {
        let mut r = t.clone();
        for _ in 0..4 {
            r = rotate(&r, 90).unwrap();
        }
        prop_assert_eq!(r, t);
    }

    #[test]
    fn right_angle_rotations_are_bijections(h in 1usize..12, w in 1usize..12, angle in prop_oneof![Just(90u32), Just(180), Just(270)]) {
        let (oh, ow) = if angle == 180 { (h, w) } else { (w, h) };
        let mut seen = vec![false; h * w];
        for i in 0..oh {
            for j in 0..ow {
                let (r, c) = source_cell(angle, h, w, i, j).expect("right angles never fall outside");
                prop_assert!(r < h && c < w);
                prop_assert!(!seen[r * w + c], "cell ({}, {}) hit twice", r, c);
                seen[r * w + c] = true;
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn right_angle_rotation_permutes_payload(t in common::dense(2, 3), angle in prop_oneof![Just(90u32), Just(180), Just(270)]) {
        let r = rotate(&t, angle).unwrap();
        prop_assert_eq!(r.shape().element_count(), t.shape().element_count());
        let key = |v: &TensorValue| {
            let d = v.dense_values();
            let mut xs: Vec<u64> = (0..d.len()).map(|i| d.get_f64(i).to_bits()).collect();
            xs.sort_unstable();
            xs
        };
        prop_assert_eq!(key(&r), key(&t));
    }

    #[test]
    fn oblique_rotation_keeps_shape_dtype_structure(t in common::tensor(2, 3), k in 0usize..6) {
        let angle = [30u32, 60, 120, 150, 210, 240][k];
        let r = rotate(&t, angle).unwrap();
        prop_assert_eq!(r.shape(), t.shape());
        prop_assert_eq!(r.dtype(), t.dtype());
        prop_assert_eq!(r.structure_kind(), t.structure_kind());
    }

    #[test]
    fn every_listed_site_applies_and_records_lineage(p in common::program()) {
        if let Ok(typed) = validate(&p) {
            let parent = p.canonical_hash();
            for s in mutation::applicable_sites(&typed) {
                let m = mutation::apply(&typed, &s).unwrap();
                prop_assert_eq!(m.order(), 1);
                prop_assert_eq!(&m.lineage[0].0, &parent);
                prop_assert_eq!(&m.lineage[0].1, &s);
                prop_assert_eq!(m.statically_ill.is_some(), validate(&m.program).is_err());
            }
        }
    }
}

#[test]
fn scalar_literal_only_offers_type_and_structure() {
    let t = TensorValue::from_f64(deltafuzz_core::DType::F64, &[], &[2.0]).unwrap();
    let typed = validate(&literal_program(&t)).unwrap();
    let ops: std::collections::BTreeSet<_> = mutation::applicable_sites(&typed).iter().map(|s| s.operator).collect();
    assert_eq!(
        ops.into_iter().collect::<Vec<_>>(),
        vec![MutationOperator::TensorType, MutationOperator::TensorStructure]
    );
}
