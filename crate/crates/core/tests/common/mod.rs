//! Helpers shared by the integration tests and the acceptance runner. The
//! oracles here work in f64 and do not call into the crate's math.

#![allow(dead_code)]

use olbench::harness::{gen_synthetic, warmup_head, Dataset, SyntheticSpec, Warmup};
use olbench::math::{Matrix, SeededRng};
use olbench::HeadSeed;
use rand::Rng;

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f32) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_vec(rng: &mut SeededRng, len: usize, scale: f32) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn random_head(rng: &mut SeededRng, n: usize, m: usize) -> HeadSeed {
    HeadSeed {
        weights: random_matrix(rng, n, m, 0.5),
        biases: random_vec(rng, n, 0.5),
        labels: labels("k", n),
    }
}

/// Random (features, label) events over `total` labels `k0..`; the first
/// `known` of them are the seed labels.
pub fn random_stream(rng: &mut SeededRng, steps: usize, m: usize, total: usize) -> Vec<(Vec<f32>, String)> {
    (0..steps)
        .map(|_| (random_vec(rng, m, 1.0), format!("k{}", rng.random_range(0..total))))
        .collect()
}

pub fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn softmax64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn logits64(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bi)
        .collect()
}

pub fn to64(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| v as f64).collect())
        .collect()
}

pub fn vec64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Cross-entropy of `softmax(W x + b)` against each target distribution,
/// combined as `Σ weight_k · CE(y, target_k)`.
pub fn mixed_ce(w: &[Vec<f64>], b: &[f64], x: &[f64], targets: &[(f64, &[f64])]) -> f64 {
    let y = softmax64(&logits64(w, b, x));
    targets
        .iter()
        .map(|(weight, t)| weight * -t.iter().zip(&y).map(|(ti, yi)| ti * yi.ln()).sum::<f64>())
        .sum()
}

/// Central-difference gradient of `loss` with respect to every weight and
/// bias, step `h`.
pub fn fd_gradient(
    w: &[Vec<f64>],
    b: &[f64],
    h: f64,
    loss: impl Fn(&[Vec<f64>], &[f64]) -> f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut gw = vec![vec![0.0; w[0].len()]; w.len()];
    let mut gb = vec![0.0; b.len()];
    let mut wp = w.to_vec();
    for i in 0..w.len() {
        for j in 0..w[0].len() {
            let orig = wp[i][j];
            wp[i][j] = orig + h;
            let up = loss(&wp, b);
            wp[i][j] = orig - h;
            let down = loss(&wp, b);
            wp[i][j] = orig;
            gw[i][j] = (up - down) / (2.0 * h);
        }
    }
    let mut bp = b.to_vec();
    for i in 0..b.len() {
        let orig = bp[i];
        bp[i] = orig + h;
        let up = loss(w, &bp);
        bp[i] = orig - h;
        let down = loss(w, &bp);
        bp[i] = orig;
        gb[i] = (up - down) / (2.0 * h);
    }
    (gw, gb)
}

/// `‖a − b‖ / ‖b‖` over flattened values.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// Straight-line f64 TinyOL over a stream, scoring argmax predictions from
/// `start` on. Returns accuracy over the scored region.
pub fn reference_tinyol_accuracy(seed: &HeadSeed, data: &Dataset, order: &[usize], start: usize, alpha: f64) -> f64 {
    let mut w = to64(&seed.weights);
    let mut b = vec64(&seed.biases);
    let mut names = seed.labels.clone();
    let mut correct = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        let s = &data.samples[idx];
        let x = vec64(&s.input);
        let row = match names.iter().position(|l| *l == s.label) {
            Some(r) => r,
            None => {
                names.push(s.label.clone());
                w.push(vec![0.0; x.len()]);
                b.push(0.0);
                names.len() - 1
            }
        };
        let y = softmax64(&logits64(&w, &b, &x));
        if pos >= start {
            let mut best = 0;
            for i in 1..y.len() {
                if y[i] > y[best] {
                    best = i;
                }
            }
            if best == row {
                correct += 1;
            }
        }
        for i in 0..w.len() {
            let g = y[i] - if i == row { 1.0 } else { 0.0 };
            for j in 0..x.len() {
                w[i][j] -= alpha * g * x[j];
            }
            b[i] -= alpha * g;
        }
    }
    correct as f64 / (order.len() - start) as f64
}

/// Eight Gaussian classes in 128 dimensions, 500 samples each.
pub fn nic_spec() -> SyntheticSpec {
    SyntheticSpec::with_random_means(SyntheticSpec::default_labels(8), 128, 1.0, 2.5, 500, 11, 12)
}

pub fn nic_warmup() -> Warmup {
    Warmup {
        classes: 5,
        samples_per_class: 200,
        learning_rate: 0.005,
        seed: 13,
    }
}

/// The stream dataset and a head pre-fit on its first five classes.
pub fn nic_setup() -> (Dataset, HeadSeed) {
    let spec = nic_spec();
    (
        gen_synthetic(&spec).unwrap(),
        warmup_head(&spec, &nic_warmup()).unwrap(),
    )
}
