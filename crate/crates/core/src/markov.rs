//! Probabilistic quantities of the renormalized truncations: the Doob
//! transform, k-step probabilities and generating functions from the
//! spectral representation, stationary states, convergence rates, time
//! reversal and the constructive classification of finite chains.

use serde::Serialize;

use crate::banded::{matrix_power, BandedMatrix, DenseMatrix};
use crate::error::{Error, Result};
use crate::recursion::{recursion_a, recursion_b, BandCache, InitialConditions};
use crate::scalar::{with_precision, Mp, Scalar};
use crate::spectral::{eigensystem, perron_pair, EigenSystem};
use crate::tolerances::Tolerances;

/// Grid on which `s -> 1-` limits are approached.
pub const S_GRID: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];

/// `T^ = (1/lambda_0) D(u_0)^-1 T^[N] D(u_0)`.
pub fn doob_transform(t: &BandedMatrix, order: usize) -> Result<DenseMatrix> {
    let (lambda0, u0) = perron_pair(t, order)?;
    doob_with(t, order, lambda0, &u0)
}

/// Doob transform from an already computed eigensystem.
pub fn doob_from(t: &BandedMatrix, sys: &EigenSystem) -> Result<DenseMatrix> {
    doob_with(t, sys.order, sys.lambdas[0], &sys.right[0])
}

fn doob_with(t: &BandedMatrix, order: usize, lambda0: f64, u0: &[f64]) -> Result<DenseMatrix> {
    if let Some((i, &v)) = u0.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositivePerronVector { index: i, value: v });
    }
    let mut out = t.truncate(order)?;
    for i in 0..=order {
        for j in 0..=order {
            out[(i, j)] *= u0[j] / (lambda0 * u0[i]);
        }
    }
    Ok(out)
}

fn check_state(sys: &EigenSystem, n: usize) -> Result<()> {
    if n > sys.order {
        return Err(Error::StateOutOfRange { state: n, max: sys.order });
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(s.abs() < 1.0) {
        return Err(Error::SOutOfRange { s });
    }
    Ok(())
}

/// `(u_{0,m}/u_{0,n}) sum_j u_{j,n} c_j w_{j,m}` in the eigensystem's precision.
fn spectral_sum(sys: &EigenSystem, n: usize, m: usize, weight: impl Fn(&Mp) -> Mp) -> f64 {
    with_precision(sys.bits(), || {
        let modes = &sys.modes;
        let l0 = modes[0].lambda.clone();
        let s = modes.iter().fold(Mp::zero(), |acc, md| {
            acc + md.u[n].clone() * weight(&(md.lambda.clone() / l0.clone())) * md.w[m].clone()
        });
        (s * modes[0].u[m].clone() / modes[0].u[n].clone()).to_f64()
    })
}

/// `(T^^k)_{n,m}` from the spectral representation
/// `(u_{0,m}/u_{0,n}) sum_j (lambda_j/lambda_0)^k u_{j,n} w_{j,m}`, which is
/// the integral of `B_n x^k A_m` against the spectral measure.
pub fn kstep_prob(sys: &EigenSystem, n: usize, m: usize, k: u32) -> Result<f64> {
    check_state(sys, n)?;
    check_state(sys, m)?;
    Ok(spectral_sum(sys, n, m, |x| x.powi(k)))
}

/// Every entry of `T^^k` from the spectral representation.
pub fn kstep_matrix(sys: &EigenSystem, k: u32) -> DenseMatrix {
    let n1 = sys.order + 1;
    let vals = with_precision(sys.bits(), || {
        let modes = &sys.modes;
        let l0 = modes[0].lambda.clone();
        let c: Vec<Mp> = modes.iter().map(|md| (md.lambda.clone() / l0.clone()).powi(k)).collect();
        let mut out = vec![0.0; n1 * n1];
        for n in 0..n1 {
            let scaled: Vec<Mp> = modes.iter().zip(&c).map(|(md, c)| md.u[n].clone() * c.clone()).collect();
            for m in 0..n1 {
                let s = modes.iter().zip(&scaled).fold(Mp::zero(), |acc, (md, x)| acc + x.clone() * md.w[m].clone());
                out[n * n1 + m] = (s * modes[0].u[m].clone() / modes[0].u[n].clone()).to_f64();
            }
        }
        out
    });
    DenseMatrix::from_row_slice(n1, n1, &vals)
}

/// `P_{n,m}(s) = sum_k s^k (T^^k)_{n,m}`.
pub fn transition_gf(sys: &EigenSystem, n: usize, m: usize, s: f64) -> Result<f64> {
    check_state(sys, n)?;
    check_state(sys, m)?;
    check_s(s)?;
    let sm = Mp::from_f64(s);
    Ok(spectral_sum(sys, n, m, |x| Mp::one() / (Mp::one() - sm.clone() * x.clone())))
}

/// First-passage generating function: `1 - 1/P_{m,m}(s)` on the diagonal,
/// `P_{n,m}(s)/P_{m,m}(s)` for the passage from `n` to `m`.
pub fn first_passage_gf(sys: &EigenSystem, n: usize, m: usize, s: f64) -> Result<f64> {
    let pmm = transition_gf(sys, m, m, s)?;
    if n == m {
        Ok(1.0 - 1.0 / pmm)
    } else {
        Ok(transition_gf(sys, n, m, s)? / pmm)
    }
}

/// The three expressions of the stationary distribution.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryForms {
    /// `u_{0,m} w_{0,m}`.
    pub product: Vec<f64>,
    /// `sum_{a,b} B^(b)_m(lambda_0) rho_{0,b} mu_{0,a} A^(a)_m(lambda_0)`.
    pub christoffel: Vec<f64>,
    /// `alpha_N beta_N Q_m R_m / (P_N P'_{N+1})` at `lambda_0`.
    pub determinantal: Vec<f64>,
}

impl StationaryForms {
    /// Largest pairwise disagreement.
    pub fn spread(&self) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        d(&self.product, &self.christoffel)
            .max(d(&self.product, &self.determinantal))
            .max(d(&self.christoffel, &self.determinantal))
    }
}

pub fn stationary_forms(t: &BandedMatrix, sys: &EigenSystem) -> Result<StationaryForms> {
    let n1 = sys.order + 1;
    let (p, q) = (sys.p, sys.q);
    let ic = &sys.ic;
    with_precision(sys.bits(), || {
        let m0 = &sys.modes[0];
        let band = BandCache::<Mp>::new(t, sys.order + p + q + 1);
        let a = recursion_a(&band, &m0.lambda, n1, &ic.nu)?;
        let b = recursion_b(&band, &m0.lambda, n1, &ic.xi)?;
        let christoffel = (0..n1)
            .map(|m| {
                let left = (0..q).fold(Mp::zero(), |s, j| s + b[j][m].clone() * m0.rho[j].clone());
                let right = (0..p).fold(Mp::zero(), |s, j| s + a[j][m].clone() * m0.mu[j].clone());
                (left * right).to_f64()
            })
            .collect();
        Ok(StationaryForms {
            product: (0..n1).map(|m| (m0.u[m].clone() * m0.w[m].clone()).to_f64()).collect(),
            christoffel,
            determinantal: m0.qr_ratio.iter().map(Scalar::to_f64).collect(),
        })
    })
}

/// Stationary distribution `pi_m = u_{0,m} w_{0,m}`.
pub fn stationary(t: &BandedMatrix, order: usize) -> Result<Vec<f64>> {
    let ic = InitialConditions::identity(t.p(), t.q());
    let sys = eigensystem(t, order, &ic, &Tolerances::default())?;
    Ok(stationary_forms(t, &sys)?.product)
}

/// `max_j |(pi T^)_j - pi_j|`.
pub fn stationarity_residual(pi: &[f64], t_hat: &DenseMatrix) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * t_hat[(i, j)]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRate {
    /// `lambda_1 / lambda_0`.
    pub rate: f64,
    /// `u_{1,m} w_{1,m}`, the coefficient of `rate^k` in `(T^^k)_{m,m} - pi_m`.
    pub second_term: Vec<f64>,
}

pub fn convergence_rate(sys: &EigenSystem) -> Result<ConvergenceRate> {
    if sys.order < 1 {
        return Err(Error::InvalidInput("convergence rate needs N >= 1".into()));
    }
    Ok(ConvergenceRate {
        rate: sys.lambdas[1] / sys.lambdas[0],
        second_term: sys.right[1].iter().zip(&sys.left[1]).map(|(u, w)| u * w).collect(),
    })
}

/// `||T^^k - 1 pi^T||_max` for `k0 <= k <= k1`.
pub fn deviation_norms(t_hat: &DenseMatrix, pi: &[f64], k0: u32, k1: u32) -> Result<Vec<f64>> {
    let n = pi.len();
    let mut power = matrix_power(t_hat, k0)?;
    let mut out = Vec::new();
    for k in k0..=k1 {
        if k > k0 {
            power = &power * t_hat;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((power[(i, j)] - pi[j]).abs());
            }
        }
        out.push(worst);
    }
    Ok(out)
}

/// Exponential of the least-squares slope of `log ||T^^k - 1 pi^T||_max`.
pub fn fitted_decay_rate(t_hat: &DenseMatrix, pi: &[f64], k0: u32, k1: u32) -> Result<f64> {
    let norms = deviation_norms(t_hat, pi, k0, k1)?;
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| ((k0 as usize + i) as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput("deviation vanished before the fit window".into()));
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok((num / den).exp())
}

/// `T~ = (1/lambda_0) D(w_0)^-1 (T^[N])^T D(w_0)`.
pub fn time_reversal(t: &BandedMatrix, sys: &EigenSystem) -> Result<DenseMatrix> {
    let w0 = &sys.left[0];
    if let Some((i, &v)) = w0.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositivePerronVector { index: i, value: v });
    }
    let dense = t.truncate(sys.order)?;
    let n1 = sys.order + 1;
    let l0 = sys.lambdas[0];
    Ok(DenseMatrix::from_fn(n1, n1, |i, j| dense[(j, i)] * w0[j] / (l0 * w0[i])))
}

/// `max_{i,j} |pi_i T^_{i,j} - pi_j T~_{j,i}|`.
pub fn detailed_balance_residual(pi: &[f64], t_hat: &DenseMatrix, t_rev: &DenseMatrix) -> f64 {
    let n = pi.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((pi[i] * t_hat[(i, j)] - pi[j] * t_rev[(j, i)]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Classification {
    pub irreducible: bool,
    pub aperiodic: bool,
    pub recurrent: bool,
    pub ergodic: bool,
}

/// Splits `P_{m,m}(s) = c_0/(1-s) + R(s)`: `c_0 = u_{0,m} w_{0,m}` is the
/// weight of the pole contributed by the Perron eigenvalue and `R` collects
/// the remaining eigenvalues, whose poles lie beyond `s = 1`.
pub fn transition_gf_split(sys: &EigenSystem, m: usize, s: f64) -> Result<(f64, f64)> {
    check_state(sys, m)?;
    check_s(s)?;
    Ok(with_precision(sys.bits(), || {
        let modes = &sys.modes;
        let l0 = modes[0].lambda.clone();
        let sm = Mp::from_f64(s);
        let pole = modes[0].u[m].clone() * modes[0].w[m].clone();
        let regular = modes[1..].iter().fold(Mp::zero(), |acc, md| {
            acc + md.u[m].clone() * md.w[m].clone() / (Mp::one() - sm.clone() * md.lambda.clone() / l0.clone())
        });
        (pole.to_f64(), regular.to_f64())
    }))
}

/// Evidence behind a finite classification.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteEvidence {
    /// Smallest power of `T^` found entrywise positive.
    pub positive_power: Option<u32>,
    pub min_diagonal: f64,
    /// `F_{m,m}(s)` on [`S_GRID`] for every state.
    pub return_gf: Vec<Vec<f64>>,
    /// `lim (1-s) P_{m,m}(s)`; positive means `F_{m,m}(1-) = 1`.
    pub pole_weight: Vec<f64>,
    /// Regular part `R(s)` on the grid; it must settle to a finite value.
    pub regular_part: Vec<Vec<f64>>,
}

/// Irreducibility, aperiodicity and recurrence checked constructively.
pub fn classify_finite(t: &BandedMatrix, sys: &EigenSystem) -> Result<(Classification, FiniteEvidence)> {
    let t_hat = doob_from(t, sys)?;
    let n1 = sys.order + 1;
    let max_power = n1.div_ceil(sys.p.min(sys.q)) as u32 + 1;
    let mut pattern: Vec<Vec<bool>> = (0..n1).map(|i| (0..n1).map(|j| t_hat[(i, j)] > 0.0).collect()).collect();
    let base = pattern.clone();
    let mut positive_power = None;
    for k in 1..=max_power {
        if pattern.iter().all(|r| r.iter().all(|&b| b)) {
            positive_power = Some(k);
            break;
        }
        pattern = (0..n1)
            .map(|i| (0..n1).map(|j| (0..n1).any(|l| pattern[i][l] && base[l][j])).collect())
            .collect();
    }
    let min_diagonal = (0..n1).map(|i| t_hat[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut return_gf = Vec::with_capacity(n1);
    let mut pole_weight = Vec::with_capacity(n1);
    let mut regular_part = Vec::with_capacity(n1);
    let mut recurrent = true;
    for m in 0..n1 {
        let split: Vec<(f64, f64)> = S_GRID.iter().map(|&s| transition_gf_split(sys, m, s)).collect::<Result<_>>()?;
        let f: Vec<f64> = split.iter().zip(S_GRID).map(|(&(c, r), s)| 1.0 - 1.0 / (c / (1.0 - s) + r)).collect();
        let regular: Vec<f64> = split.iter().map(|&(_, r)| r).collect();
        recurrent &= split[0].0 > 0.0 && f.windows(2).all(|w| w[1] > w[0]) && regular.iter().all(|r| r.is_finite());
        pole_weight.push(split[0].0);
        return_gf.push(f);
        regular_part.push(regular);
    }
    let irreducible = positive_power.is_some();
    let aperiodic = min_diagonal > 0.0;
    let class = Classification { irreducible, aperiodic, recurrent, ergodic: irreducible && aperiodic && recurrent };
    let evidence = FiniteEvidence { positive_power, min_diagonal, return_gf, pole_weight, regular_part };
    if !(irreducible && aperiodic && recurrent) {
        return Err(Error::ClassificationMismatch(format!(
            "irreducible={irreducible} aperiodic={aperiodic} recurrent={recurrent}"
        )));
    }
    Ok((class, evidence))
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct ChainReport {
    pub N: usize,
    pub lambda0: f64,
    pub lambda1: Option<f64>,
    pub pi: Vec<f64>,
    pub return_times: Vec<f64>,
    pub rate: Option<f64>,
    pub classification: Classification,
    pub stationary_spread: f64,
    pub stationarity_residual: f64,
    pub infinite_diagnostics: Option<crate::infinite::InfiniteDiagnostics>,
}

/// Full report for one truncation.
pub fn analyze(t: &BandedMatrix, order: usize, ic: &InitialConditions, tol: &Tolerances) -> Result<ChainReport> {
    let sys = eigensystem(t, order, ic, tol)?;
    report_from(t, &sys, tol)
}

/// Reports for several truncation orders, computed in parallel.
pub fn analyze_all(t: &BandedMatrix, orders: &[usize], ic: &InitialConditions, tol: &Tolerances) -> Vec<Result<ChainReport>> {
    use rayon::prelude::*;
    orders.par_iter().map(|&n| analyze(t, n, ic, tol)).collect()
}

pub fn report_from(t: &BandedMatrix, sys: &EigenSystem, tol: &Tolerances) -> Result<ChainReport> {
    let forms = stationary_forms(t, sys)?;
    let t_hat = doob_from(t, sys)?;
    let pi = forms.product.clone();
    let residual = stationarity_residual(&pi, &t_hat);
    let n1 = sys.order + 1;
    if !(residual <= tol.stat * n1 as f64) {
        return Err(Error::ClassificationMismatch(format!("pi T^ = pi fails by {residual:e}")));
    }
    let (classification, _) = classify_finite(t, sys)?;
    Ok(ChainReport {
        N: sys.order,
        lambda0: sys.lambdas[0],
        lambda1: sys.lambdas.get(1).copied(),
        return_times: pi.iter().map(|x| 1.0 / x).collect(),
        pi,
        rate: sys.lambdas.get(1).map(|l| l / sys.lambdas[0]),
        classification,
        stationary_spread: forms.spread(),
        stationarity_residual: residual,
        infinite_diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banded::Mode;

    fn fixture() -> (BandedMatrix, EigenSystem) {
        let t = BandedMatrix::from_rows(1, 1, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]], Mode::Stochastic, 1e-12)
            .unwrap();
        let sys = eigensystem(&t, 1, &InitialConditions::identity(1, 1), &Tolerances::default()).unwrap();
        (t, sys)
    }

    #[test]
    fn two_by_two_values() {
        let (t, sys) = fixture();
        assert!((kstep_prob(&sys, 0, 0, 2).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        assert!((kstep_prob(&sys, 0, 1, 0).unwrap()).abs() < 1e-15);
        assert!((transition_gf(&sys, 0, 0, 0.5).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(first_passage_gf(&sys, 0, 0, 0.0).unwrap(), 0.0);
        assert!(first_passage_gf(&sys, 0, 0, 0.999).unwrap() >= 0.99);
        let forms = stationary_forms(&t, &sys).unwrap();
        for v in forms.product.iter().chain(&forms.christoffel).chain(&forms.determinantal) {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let r = convergence_rate(&sys).unwrap();
        assert!((r.rate - 1.0 / 3.0).abs() < 1e-15);
        let t_hat = doob_from(&t, &sys).unwrap();
        let rev = time_reversal(&t, &sys).unwrap();
        assert!(crate::banded::max_abs_diff(&t_hat, &rev) < 1e-15);
        let (c, _) = classify_finite(&t, &sys).unwrap();
        assert!(c.irreducible && c.aperiodic && c.recurrent && c.ergodic);
        assert!(matches!(kstep_prob(&sys, 2, 0, 1), Err(Error::StateOutOfRange { .. })));
        assert!(matches!(transition_gf(&sys, 0, 0, 1.0), Err(Error::SOutOfRange { .. })));
    }

    #[test]
    fn substochastic_doob_is_stochastic() {
        let t = BandedMatrix::from_rows(1, 1, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 1.0 / 3.0]], Mode::Substochastic, 1e-12)
            .unwrap();
        let t_hat = doob_transform(&t, 1).unwrap();
        for i in 0..2 {
            assert!((t_hat.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }
}
