//! Bundled demo data: a four-version fault registry and a seed corpus.

use std::path::PathBuf;

use crate::registry::Registry;

/// Fault manifest text of the demo registry.
pub const FAULTS_TOML: &str = include_str!("../data/demo_faults.toml");

/// Taxonomy records reconstructed from the published bug-study tables.
pub const STUDY_RECORDS_CSV: &str = include_str!("../data/study_records.csv");

macro_rules! seeds {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../data/seeds/", $name)))),*]
    };
}

/// Demo seed files as `(file name, text)`, sorted by name.
pub const SEEDS: &[(&str, &str)] = seeds![
    "01_adadelta_figure.tft",
    "02_adadelta_matrix.tft",
    "03_matmul.tft",
    "04_gram.tft",
    "05_softmax_rows.tft",
    "06_softmax_vector.tft",
    "07_reduce_rows.tft",
    "08_reduce_cols.tft",
    "09_sub.tft",
    "10_sub_mul.tft",
    "11_relu.tft",
    "12_relu_i64.tft",
    "13_cast_int.tft",
    "14_cast_bool.tft",
    "15_div.tft",
    "16_reshape_transpose.tft",
    "17_sqrt.tft",
    "18_neg_add.tft",
    "19_int_arith.tft",
    "20_sparse_add.tft",
    "21_ragged_neg.tft",
    "22_dense_layer.tft",
    "23_scalar.tft",
    "90_adadelta_f16_grad.tft",
    "91_relu_i32.tft",
];

/// The demo registry (v2.5.0, v2.6.0, v2.7.0, v2.8.0).
pub fn registry() -> Registry {
    Registry::from_manifest(FAULTS_TOML).expect("bundled manifest is valid")
}

/// Owned copies of [`SEEDS`], in the form campaigns take.
pub fn seeds() -> Vec<(String, String)> {
    SEEDS.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect()
}

/// Directory holding the seed files in a source checkout.
pub fn seed_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("seeds")
}

/// Path of the manifest in a source checkout.
pub fn faults_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("demo_faults.toml")
}
