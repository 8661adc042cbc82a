//! Shared fixtures for the benchmarks.

use codedopt::problem::gen_dataset_scaled;
use codedopt::{
    gen_sparse_signal, radius_from_truth, DesignScaling, EncodedDataset, EncoderKind, EncoderSpec, GroundTruth,
    RegularizerKind, RegularizerSpec,
};

pub struct Fixture {
    pub truth: GroundTruth,
    pub encoded: EncodedDataset,
    pub spec: RegularizerSpec,
}

/// A noiseless ℓ1-constrained instance encoded with `kind` at load `m`.
pub fn fixture(n: usize, d: usize, k: usize, m: usize, kind: EncoderKind) -> Fixture {
    let truth = gen_sparse_signal(d, k, 1).expect("valid sparsity");
    let data = gen_dataset_scaled(&truth, n, 0.0, DesignScaling::Normalized, 2).expect("valid sizes");
    let encoded = EncodedDataset::new(&data, EncoderSpec::new(kind, m, n, 3), 10).expect("valid encoder");
    let spec = radius_from_truth(RegularizerKind::L1Ball, &truth);
    Fixture { truth, encoded, spec }
}
