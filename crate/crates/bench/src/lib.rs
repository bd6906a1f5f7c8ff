//! Fixtures shared by the benchmarks.

use ids_core::synth::{generate, SynthSpec};
use ids_core::transform::{encode_labels, fit_label_encoder};
use ids_core::FeatureMatrix;

/// Imbalanced blob data with integer class codes.
pub fn blobs(rows: usize, dims: usize, seed: u64) -> (FeatureMatrix, Vec<usize>, usize) {
    let table = generate(&SynthSpec::new(vec![100.0, 10.0, 1.0], rows, dims, seed))
        .expect("valid synthetic spec");
    let map = fit_label_encoder(&table.labels).expect("non-empty labels");
    let y = encode_labels(&map, &table.labels).expect("labels from the same table");
    (table.features, y, map.n_classes())
}
