//! Random banded stochastic matrices built as products of positive stochastic
//! bidiagonal factors, so a positive bidiagonal factorization exists.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::banded::{BandedMatrix, DenseMatrix, Mode};
use crate::error::Result;
use crate::scalar::{with_precision, Mp, Scalar};

/// Product `L_1 .. L_p U_q .. U_1` of random stochastic bidiagonal factors of
/// the given size. Diagonal entries are drawn from `[lo, 1)`.
pub fn random_stochastic_product(p: usize, q: usize, size: usize, seed: u64, lo: f64) -> Result<BandedMatrix> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut prod = DenseMatrix::identity(size, size);
    for _ in 0..p {
        let mut l = DenseMatrix::zeros(size, size);
        l[(0, 0)] = 1.0;
        for r in 1..size {
            let a: f64 = rng.gen_range(lo..1.0);
            l[(r, r)] = a;
            l[(r, r - 1)] = 1.0 - a;
        }
        prod *= l;
    }
    for _ in 0..q {
        let mut u = DenseMatrix::zeros(size, size);
        u[(size - 1, size - 1)] = 1.0;
        for r in 0..size - 1 {
            let a: f64 = rng.gen_range(lo..1.0);
            u[(r, r)] = a;
            u[(r, r + 1)] = 1.0 - a;
        }
        prod *= u;
    }
    let mut rows: Vec<Vec<f64>> = (0..size).map(|i| prod.row(i).iter().copied().collect()).collect();
    for row in &mut rows {
        round_down_to_stochastic(row);
    }
    BandedMatrix::from_rows(p, q, &rows, Mode::Stochastic, 1e-12)
}

/// Lowers the largest entry by single ulps until the exact sum of the stored
/// row is at most 1, so truncations are substochastic as stored.
fn round_down_to_stochastic(row: &mut [f64]) {
    let exceeds = |row: &[f64]| {
        with_precision(256, || row.iter().fold(Mp::zero(), |acc, &v| acc + Mp::from_f64(v)) > Mp::one())
    };
    let Some(big) = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])) else { return };
    while exceeds(row) {
        row[big] = f64::from_bits(row[big].to_bits() - 1);
    }
}

/// The fixed corpus: `count` matrices cycling through `p, q` in `{1, 2, 3}`
/// with sizes between 52 and 101.
pub fn standard_corpus(count: usize, seed: u64) -> Result<Vec<BandedMatrix>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let p = 1 + i % 3;
            let q = 1 + (i / 3) % 3;
            let size = rng.gen_range(52..=101);
            random_stochastic_product(p, q, size, seed.wrapping_add(i as u64 + 1), 0.3)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_banded_and_stochastic() {
        let t = random_stochastic_product(2, 3, 10, 7, 0.3).unwrap();
        assert_eq!((t.p(), t.q(), t.size()), (2, 3, Some(10)));
        for s in t.row_sums(9).unwrap() {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!(t.entry(5, 3) > 0.0 && t.entry(5, 8) > 0.0);
    }

    #[test]
    fn stored_rows_never_exceed_one() {
        let t = random_stochastic_product(3, 2, 30, 11, 0.3).unwrap();
        with_precision(256, || {
            for n in 0..30 {
                let exact = t.row(n).1.iter().fold(Mp::zero(), |acc, &v| acc + Mp::from_f64(v));
                assert!(exact <= Mp::one());
            }
        });
    }
}
