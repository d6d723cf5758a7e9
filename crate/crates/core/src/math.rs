//! Dense linear algebra, activations, loss, and seeded randomness for the
//! online-learning path.
//!
//! Everything on the OL path is `f32`. Dot products accumulate in `f64` and
//! round once at the end, which keeps results stable across summation order
//! without changing the storage type.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking `ln`.
pub const PROB_FLOOR: f32 = 1e-7;

/// Row-major dense matrix of `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix",
                format!("{rows}x{cols}"),
                "data",
                format!("len {}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(
                    "row 0",
                    format!("len {cols}"),
                    if i == 0 { "row 0" } else { "later row" },
                    format!("row {i} len {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    /// Appends one zero-filled row.
    pub fn push_zero_row(&mut self) {
        self.data.resize(self.data.len() + self.cols, 0.0);
        self.rows += 1;
    }

    pub fn fill(&mut self, v: f32) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Dot product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum::<f64>() as f32
}

/// `w · x + b`.
pub fn affine(w: &Matrix, x: &[f32], b: &[f32]) -> Result<Vec<f32>> {
    if w.cols() != x.len() {
        return Err(Error::shape(
            "weights",
            w.shape_str(),
            "input",
            format!("len {}", x.len()),
        ));
    }
    if w.rows() != b.len() {
        return Err(Error::shape(
            "weights",
            w.shape_str(),
            "bias",
            format!("len {}", b.len()),
        ));
    }
    Ok((0..w.rows())
        .map(|i| {
            let acc: f64 = w
                .row(i)
                .iter()
                .zip(x)
                .map(|(&wij, &xj)| f64::from(wij) * f64::from(xj))
                .sum();
            (acc + f64::from(b[i])) as f32
        })
        .collect())
}

/// Numerically stable softmax (max subtraction, `f64` internally).
///
/// An empty input gives an empty output.
pub fn softmax(v: &[f32]) -> Vec<f32> {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = v.iter().map(|&x| f64::from(x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

/// `-Σ target[i] · ln(clamp(pred[i]))`. The target may be one-hot or soft.
pub fn cross_entropy(pred: &[f32], target: &[f32]) -> Result<f32> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "prediction",
            format!("len {}", pred.len()),
            "target",
            format!("len {}", target.len()),
        ));
    }
    let loss: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| -f64::from(t) * f64::from(p.clamp(PROB_FLOOR, 1.0)).ln())
        .sum();
    Ok(loss as f32)
}

/// Index of the largest entry; ties go to the lowest index.
///
/// # Panics
/// If `v` is empty.
pub fn argmax(v: &[f32]) -> usize {
    assert!(!v.is_empty(), "argmax of an empty vector");
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One-hot vector of length `n` with a 1 at `hot`.
pub fn one_hot(n: usize, hot: usize) -> Vec<f32> {
    let mut t = vec![0.0; n];
    t[hot] = 1.0;
    t
}

/// The project-wide PRNG: ChaCha8 seeded through `SeedableRng::seed_from_u64`.
///
/// ChaCha8's output stream is specified independently of platform and word
/// size, so a seed pins every shuffle and every synthetic sample.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform index in `0..=upper`, sampled through `u64` so 32- and 64-bit
    /// targets agree.
    pub fn index_inclusive(&mut self, upper: usize) -> usize {
        self.inner.random_range(0..=upper as u64) as usize
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// In-place Fisher–Yates shuffle driven only by `rng`.
pub fn shuffle<T>(items: &mut [T], rng: &mut SeededRng) {
    for i in (1..items.len()).rev() {
        let j = rng.index_inclusive(i);
        items.swap(i, j);
    }
}
