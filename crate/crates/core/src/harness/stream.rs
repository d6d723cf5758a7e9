//! Stream order and the pseudo-test boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{shuffle, SeededRng};

/// Where online scoring starts: a fraction of the stream (floored) or an
/// explicit sample index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PseudoTest {
    Index(usize),
    Fraction(f64),
}

impl std::str::FromStr for PseudoTest {
    type Err = Error;

    /// `"0.8"` is a fraction, `"4000"` an index.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("pseudo-test boundary {s:?} is neither a fraction nor an index"));
        if s.contains(['.', 'e', 'E']) {
            s.parse().map(PseudoTest::Fraction).map_err(|_| bad())
        } else {
            s.parse().map(PseudoTest::Index).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub order: Vec<usize>,
    pub pseudo_test_start: usize,
    pub seed: u64,
}

impl StreamPlan {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn scored(&self) -> usize {
        self.order.len() - self.pseudo_test_start
    }
}

/// Resolves the boundary against a stream of `len` samples.
pub fn resolve_boundary(len: usize, boundary: PseudoTest) -> Result<usize> {
    let start = match boundary {
        PseudoTest::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "pseudo-test fraction must be in (0, 1), got {f}"
                )));
            }
            // The epsilon absorbs representation error such as 0.7 * 10 = 6.9999...
            (f * len as f64 + 1e-9).floor() as usize
        }
        PseudoTest::Index(i) => i,
    };
    if start >= len {
        return Err(Error::Config(format!(
            "pseudo-test start {start} is outside a stream of {len} samples"
        )));
    }
    Ok(start)
}

/// Shuffles `0..len` with `seed` and fixes the pseudo-test start.
pub fn build_stream(len: usize, seed: u64, boundary: PseudoTest) -> Result<StreamPlan> {
    let pseudo_test_start = resolve_boundary(len, boundary)?;
    let mut order: Vec<usize> = (0..len).collect();
    shuffle(&mut order, &mut SeededRng::new(seed));
    Ok(StreamPlan {
        order,
        pseudo_test_start,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_examples() {
        assert_eq!(
            build_stream(4249, 1, PseudoTest::Fraction(0.8))
                .unwrap()
                .pseudo_test_start,
            3399
        );
        assert_eq!(
            build_stream(5000, 1, PseudoTest::Index(4000))
                .unwrap()
                .pseudo_test_start,
            4000
        );
        assert_eq!(resolve_boundary(10, PseudoTest::Fraction(0.7)).unwrap(), 7);
        assert!(build_stream(10, 1, PseudoTest::Fraction(0.0)).is_err());
        assert!(build_stream(10, 1, PseudoTest::Fraction(1.0)).is_err());
        assert!(build_stream(10, 1, PseudoTest::Index(10)).is_err());
    }

    #[test]
    fn order_is_a_seeded_permutation() {
        let a = build_stream(100, 9, PseudoTest::Fraction(0.5)).unwrap();
        let b = build_stream(100, 9, PseudoTest::Fraction(0.5)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_eq!(a.scored(), 50);
    }

    #[test]
    fn parse_boundary() {
        assert_eq!("0.8".parse::<PseudoTest>().unwrap(), PseudoTest::Fraction(0.8));
        assert_eq!("4000".parse::<PseudoTest>().unwrap(), PseudoTest::Index(4000));
        assert!("eighty".parse::<PseudoTest>().is_err());
    }
}
