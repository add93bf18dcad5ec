use banded_markov::corpus::random_stochastic_product;
use banded_markov::factorization::{compute_pbf, reconstruct, stochastic_normalize};
use banded_markov::infinite::reflecting_walk;
use banded_markov::markov::{doob_from, first_passage_gf, transition_gf};
use banded_markov::recursion::InitialConditions;
use banded_markov::simulate::{empirical_estimates, Sampler, SimConfig};
use banded_markov::spectral::{eigensystem, EigenSystem};
use banded_markov::{max_abs_diff, BandedMatrix, DenseMatrix, Tolerances};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn truncated_system(order: usize) -> (BandedMatrix, EigenSystem, DenseMatrix) {
    let t = random_stochastic_product(2, 1, 30, 17, 0.3).unwrap();
    let sys = eigensystem(&t, order, &InitialConditions::identity(2, 1), &Tolerances::default()).unwrap();
    let t_hat = doob_from(&t, &sys).unwrap();
    (t, sys, t_hat)
}

fn series(t_hat: &DenseMatrix, n: usize, m: usize, s: f64, terms: u32) -> f64 {
    let mut power = DenseMatrix::identity(t_hat.nrows(), t_hat.ncols());
    let mut sum = 0.0;
    for k in 0..=terms {
        sum += s.powi(k as i32) * power[(n, m)];
        power = &power * t_hat;
    }
    sum
}

#[test]
fn gf_orientation_matches_the_kstep_series() {
    // Lazy symmetric walk: the truncation loses mass at the far end only,
    // so the Perron vector is far from constant.
    let t = reflecting_walk(0.25, 0.5, 0.25, 1e-12).unwrap();
    let sys = eigensystem(&t, 8, &InitialConditions::identity(1, 1), &Tolerances::default()).unwrap();
    let t_hat = doob_from(&t, &sys).unwrap();
    let u0 = &sys.right[0];
    let (n, m, s) = (1, 6, 0.5);
    // Truncation makes the Perron vector non-constant, so the orientation matters.
    assert!((u0[n] / u0[m] - 1.0).abs() > 0.05);
    let expected = series(&t_hat, n, m, s, 80);
    let got = transition_gf(&sys, n, m, s).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    let swapped = got * (u0[n] / u0[m]).powi(2);
    assert!((swapped - expected).abs() > 1e-3 * expected);
}

#[test]
fn diagonal_first_return_is_one_minus_reciprocal() {
    let (_, sys, t_hat) = truncated_system(8);
    let s = 0.7;
    let p = series(&t_hat, 3, 3, s, 150);
    let f = first_passage_gf(&sys, 3, 3, s).unwrap();
    assert!((f - (1.0 - 1.0 / p)).abs() < 1e-12);
}

/// `E[s^tau]` for the first visit to `m` from `n`, as a killed walk.
fn killed_walk(t_hat: &DenseMatrix, n: usize, m: usize, s: f64, trials: u64, seed: u64) -> (f64, f64) {
    let sampler = Sampler::new(t_hat, 1e-12).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut y = n;
        while rng.gen::<f64>() < s {
            y = sampler.step(y, &mut rng);
            if y == m {
                hits += 1;
                break;
            }
        }
    }
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[test]
fn off_diagonal_first_passage_matches_monte_carlo() {
    let (_, sys, t_hat) = truncated_system(8);
    let s = 0.9;
    for (n, m) in [(0, 4), (6, 2)] {
        let f = first_passage_gf(&sys, n, m, s).unwrap();
        let (mc, se) = killed_walk(&t_hat, n, m, s, 200_000, 5 + n as u64);
        assert!((f - mc).abs() < 3.0 * se, "F_{n}->{m}: {f} vs {mc} +- {se}");
    }
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let (_, _, t_hat) = truncated_system(6);
    let run = |steps| {
        let cfg = SimConfig { seed: 3, steps, ..SimConfig::default() };
        empirical_estimates(&t_hat, &cfg, 2, 3).unwrap()
    };
    let (a, b) = (run(200_000), run(400_000));
    for (x, y) in a.kstep.iter().zip(&b.kstep).filter(|(x, _)| x.value > 0.01) {
        let ratio = y.se / x.se;
        assert!((0.6..=0.82).contains(&ratio), "ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factor_products_round_trip(p in 1usize..=3, q in 1usize..=3, size in 6usize..=30, seed in 0u64..1000) {
        let t = random_stochastic_product(p, q, size, seed, 0.2).unwrap();
        let tol = Tolerances::default();
        let chain = compute_pbf(&t, size, &tol).unwrap();
        let err = max_abs_diff(&reconstruct(&chain), &t.truncate(size - 1).unwrap());
        prop_assert!(err <= 1e-10 * size as f64);
        let sc = stochastic_normalize(&chain, true, &tol).unwrap();
        for f in sc.lowers.iter().chain(&sc.uppers) {
            for r in f.row_sums() {
                prop_assert!((r - 1.0).abs() <= 1e-12);
            }
        }
    }
}
