//! Encoding matrices `A` (m × n) and the encoded, worker-partitioned data.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::problem::Dataset;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gaussian,
    #[serde(rename = "dct")]
    RandomizedDct,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Computational load: the number of encoded rows.
    pub m: usize,
    /// Number of data rows being encoded.
    pub n: usize,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind, m: usize, n: usize, seed: u64) -> Self {
        Self { kind, m, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Shape(format!("encoder needs m, n >= 1 (m = {}, n = {})", self.m, self.n)));
        }
        match self.kind {
            EncoderKind::Identity if self.m != self.n => {
                Err(Error::Shape(format!("identity encoder needs m = n (m = {}, n = {})", self.m, self.n)))
            }
            EncoderKind::RandomizedDct if self.m > self.n => {
                Err(Error::Shape(format!("randomized DCT needs m <= n (m = {}, n = {})", self.m, self.n)))
            }
            _ => Ok(()),
        }
    }
}

/// A materialized encoder. The identity is kept implicit so that encoding by
/// it copies the data bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodingMatrix {
    Identity(usize),
    Dense(Array2<f64>),
}

impl EncodingMatrix {
    pub fn rows(&self) -> usize {
        match self {
            EncodingMatrix::Identity(n) => *n,
            EncodingMatrix::Dense(a) => a.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            EncodingMatrix::Identity(n) => *n,
            EncodingMatrix::Dense(a) => a.ncols(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            EncodingMatrix::Identity(n) => Array2::eye(*n),
            EncodingMatrix::Dense(a) => a.clone(),
        }
    }

    pub fn apply_matrix(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            EncodingMatrix::Identity(_) => x.to_owned(),
            EncodingMatrix::Dense(a) => a.dot(&x),
        }
    }

    pub fn apply_vector(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            EncodingMatrix::Identity(_) => v.to_owned(),
            EncodingMatrix::Dense(a) => a.dot(&v),
        }
    }
}

/// Orthonormal DCT-II matrix: `C[k, j] = c_k cos(π (2j + 1) k / 2n)`.
pub fn dct2_matrix(n: usize) -> Array2<f64> {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(k, j)| {
        let c = if k == 0 { scale0 } else { scale };
        c * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

pub fn build_encoder(spec: &EncoderSpec) -> Result<EncodingMatrix> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    Ok(match spec.kind {
        EncoderKind::Identity => EncodingMatrix::Identity(spec.n),
        EncoderKind::Gaussian => EncodingMatrix::Dense(gaussian_matrix(spec.m, spec.n, &mut rng)),
        EncoderKind::RandomizedDct => {
            // A = H D: m distinct DCT rows (kept in ascending order) times random signs.
            let mut rows = rand::seq::index::sample(&mut rng, spec.n, spec.m).into_vec();
            rows.sort_unstable();
            let signs: Vec<f64> = (0..spec.n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let n = spec.n as f64;
            let scale0 = (1.0 / n).sqrt();
            let scale = (2.0 / n).sqrt();
            let a = Array2::from_shape_fn((spec.m, spec.n), |(r, j)| {
                let k = rows[r];
                let c = if k == 0 { scale0 } else { scale };
                c * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n)).cos() * signs[j]
            });
            EncodingMatrix::Dense(a)
        }
    })
}

/// `(AX, Ay)` for a dataset with `n` rows.
pub fn encode(dataset: &Dataset, spec: &EncoderSpec) -> Result<(Array2<f64>, Array1<f64>)> {
    if spec.n != dataset.n() {
        return Err(Error::Shape(format!("encoder has n = {} columns, dataset has {} rows", spec.n, dataset.n())));
    }
    let a = build_encoder(spec)?;
    Ok((a.apply_matrix(dataset.x.view()), a.apply_vector(dataset.y.view())))
}

/// `L` contiguous blocks whose sizes differ by at most one; larger blocks first.
pub fn partition_rows(m: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 || workers > m {
        return Err(Error::InvalidPartition { rows: m, workers });
    }
    let base = m / workers;
    let extra = m % workers;
    let mut start = 0;
    Ok((0..workers)
        .map(|l| {
            let len = base + usize::from(l < extra);
            let block = start..start + len;
            start += len;
            block
        })
        .collect())
}

/// Encoded data `(AX, Ay)` split across workers by row blocks `W_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub encoder: EncoderSpec,
    pub ax: Array2<f64>,
    pub ay: Array1<f64>,
    pub partitions: Vec<Range<usize>>,
}

impl EncodedDataset {
    pub fn new(dataset: &Dataset, encoder: EncoderSpec, workers: usize) -> Result<Self> {
        let (ax, ay) = encode(dataset, &encoder)?;
        let partitions = partition_rows(encoder.m, workers)?;
        Ok(Self { encoder, ax, ay, partitions })
    }

    pub fn m(&self) -> usize {
        self.ax.nrows()
    }

    pub fn workers(&self) -> usize {
        self.partitions.len()
    }
}
