//! Trend diagnostics for semi-infinite chains, read off a sequence of
//! truncations. The verdicts are estimates and never proofs.

use serde::Serialize;

use crate::banded::{BandedMatrix, Mode, Tail};
use crate::error::{Error, Result};
use crate::markov::S_GRID;
use crate::recursion::{recursion_a, recursion_b, BandCache, InitialConditions};
use crate::scalar::{with_precision, Mp, Scalar};
use crate::spectral::{eigensystem_with, SpectralOptions};
use crate::tolerances::Tolerances;

pub const MIN_TRUNCATIONS: usize = 4;

/// Birth-death walk on `0, 1, 2, ...` with tail row `[down, hold, up]` and
/// the downward move at state 0 folded into holding.
pub fn reflecting_walk(down: f64, hold: f64, up: f64, tol_row: f64) -> Result<BandedMatrix> {
    BandedMatrix::generator(
        1,
        1,
        vec![vec![down + hold, up]],
        Tail { period: 1, coeffs: vec![down, hold, up] },
        Mode::Stochastic,
        tol_row,
    )
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct TruncationDiagnostics {
    pub N: usize,
    pub lambda0: f64,
    pub gap: f64,
    /// `rho_{0,1} mu_{0,1}`, the mass of the top eigenvalue in the (1,1) entry.
    pub mass11: f64,
    /// `sum_k M_k(1,1) / (1 - s lambda_k)` on the s grid.
    pub integral: Vec<f64>,
    /// Same with `lambda_k / lambda_0` in place of `lambda_k`.
    pub integral_rescaled: Vec<f64>,
    pub mass_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    RecurrentLeaning,
    TransientLeaning,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfiniteDiagnostics {
    pub s_grid: Vec<f64>,
    pub truncations: Vec<TruncationDiagnostics>,
    /// Ratio of the last to the first integral estimate at the largest s.
    pub integral_growth: f64,
    /// Relative change of the same pair.
    pub integral_change: f64,
    pub integral_monotone: bool,
    pub verdict: Verdict,
    /// Intercept of a least-squares fit of `mass11` against `1/N`, clamped at zero.
    pub mass_at_one: f64,
    pub ergodic_leaning: bool,
    /// `sum_{a,b} B^(b)_n(1) m_{b,a} A^(a)_n(1)` on the largest truncation,
    /// with `m` the mass of its top eigenvalue. States counted from 0.
    pub stationary_estimate: Option<Vec<f64>>,
}

/// Diagnostics over an increasing list of truncation orders.
pub fn classify_infinite(
    t: &BandedMatrix,
    n_list: &[usize],
    ic: &InitialConditions,
    tol: &Tolerances,
) -> Result<InfiniteDiagnostics> {
    if n_list.len() < MIN_TRUNCATIONS {
        return Err(Error::InsufficientTruncations { got: n_list.len(), min: MIN_TRUNCATIONS });
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("truncation orders must increase strictly".into()));
    }
    let opts = SpectralOptions { oscillatory: false, verify: false };
    let mut truncations = Vec::with_capacity(n_list.len());
    let mut last = None;
    for &order in n_list {
        let sys = eigensystem_with(t, order, ic, tol, opts)?;
        let measure = sys.measure(tol)?;
        let l0 = sys.lambdas[0];
        let m11: Vec<f64> = measure.masses.iter().map(|m| m[0][0]).collect();
        let integral = S_GRID
            .iter()
            .map(|&s| m11.iter().zip(&sys.lambdas).map(|(m, l)| m / (1.0 - s * l)).sum())
            .collect();
        let integral_rescaled = S_GRID
            .iter()
            .map(|&s| m11.iter().zip(&sys.lambdas).map(|(m, l)| m / (1.0 - s * l / l0)).sum())
            .collect();
        truncations.push(TruncationDiagnostics {
            N: order,
            lambda0: l0,
            gap: 1.0 - l0,
            mass11: m11[0],
            integral,
            integral_rescaled,
            mass_residual: measure.mass_residual,
        });
        last = Some((sys, measure));
    }
    let top = S_GRID.len() - 1;
    let first = truncations[0].integral[top];
    let final_ = truncations[truncations.len() - 1].integral[top];
    let integral_growth = final_ / first;
    let integral_change = (final_ - first).abs() / first;
    let integral_monotone = truncations.windows(2).all(|w| w[1].integral[top] >= w[0].integral[top]);
    let verdict = if integral_growth >= tol.recurrent_growth {
        Verdict::RecurrentLeaning
    } else if integral_change <= tol.transient_change {
        Verdict::TransientLeaning
    } else {
        Verdict::Inconclusive
    };

    let xs: Vec<f64> = truncations.iter().map(|d| 1.0 / d.N.max(1) as f64).collect();
    let ys: Vec<f64> = truncations.iter().map(|d| d.mass11).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let mass_at_one = (my - mx * sxy / sxx).max(0.0);
    let ergodic_leaning = mass_at_one > tol.theta_mass;

    let stationary_estimate = match (&last, ergodic_leaning) {
        (Some((sys, measure)), true) => {
            let (p, q) = (sys.p, sys.q);
            let n1 = sys.order + 1;
            let m0 = &measure.masses[0];
            Some(with_precision(sys.bits(), || -> Result<Vec<f64>> {
                let band = BandCache::<Mp>::new(t, sys.order + p + q + 1);
                let a = recursion_a(&band, &Mp::one(), n1, &ic.nu)?;
                let b = recursion_b(&band, &Mp::one(), n1, &ic.xi)?;
                Ok((0..n1)
                    .map(|k| {
                        let mut s = Mp::zero();
                        for (bi, row) in m0.iter().enumerate() {
                            for (ai, &m) in row.iter().enumerate() {
                                s = s + b[bi][k].clone() * Mp::from_f64(m) * a[ai][k].clone();
                            }
                        }
                        s.to_f64()
                    })
                    .collect())
            })?)
        }
        _ => None,
    };

    Ok(InfiniteDiagnostics {
        s_grid: S_GRID.to_vec(),
        truncations,
        integral_growth,
        integral_change,
        integral_monotone,
        verdict,
        mass_at_one,
        ergodic_leaning,
        stationary_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_four_truncations() {
        let t = reflecting_walk(0.1, 0.2, 0.7, 1e-12).unwrap();
        let err = classify_infinite(&t, &[5, 10, 20], &InitialConditions::identity(1, 1), &Tolerances::default());
        assert!(matches!(err, Err(Error::InsufficientTruncations { got: 3, min: 4 })));
    }

    #[test]
    fn downward_drift_is_ergodic_leaning() {
        let t = reflecting_walk(0.6, 0.2, 0.2, 1e-12).unwrap();
        let d = classify_infinite(&t, &[8, 12, 16, 24], &InitialConditions::identity(1, 1), &Tolerances::default()).unwrap();
        // Geometric stationary law with ratio 1/3: pi_0 = 2/3.
        assert!((d.mass_at_one - 2.0 / 3.0).abs() < 1e-3, "{}", d.mass_at_one);
        let pi = d.stationary_estimate.unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-3 && (pi[1] - 2.0 / 9.0).abs() < 1e-3);
    }
}
