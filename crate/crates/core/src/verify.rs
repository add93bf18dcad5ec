//! Invariant suites run against one truncation.

use serde::Serialize;

use crate::banded::{matrix_power, max_abs_diff, BandedMatrix, Mode};
use crate::error::Result;
use crate::factorization::{compute_pbf, reconstruct, stochastic_normalize};
use crate::markov::{
    classify_finite, detailed_balance_residual, doob_from, kstep_matrix, stationarity_residual, stationary_forms,
    time_reversal, transition_gf,
};
use crate::recursion::InitialConditions;
use crate::spectral::{biorthogonality_residual, eigensystem, interlacing_margin, EigenSystem};
use crate::tolerances::Tolerances;

/// Largest k checked against matrix powers.
pub const KM_STEPS: u32 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub residual: Option<f64>,
    pub tol: Option<f64>,
    pub detail: String,
}

impl SuiteResult {
    fn bound(name: &str, residual: f64, tol: f64) -> Self {
        SuiteResult {
            name: name.into(),
            passed: residual <= tol,
            residual: Some(residual),
            tol: Some(tol),
            detail: String::new(),
        }
    }

    fn flag(name: &str, passed: bool, detail: String) -> Self {
        SuiteResult { name: name.into(), passed, residual: None, tol: None, detail }
    }

    fn failed(name: &str, err: &crate::Error) -> Self {
        SuiteResult::flag(name, false, format!("{}: {err}", err.name()))
    }
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct VerifyReport {
    pub N: usize,
    pub suites: Vec<SuiteResult>,
    pub all_passed: bool,
}

fn factorization_suites(t: &BandedMatrix, order: usize, tol: &Tolerances, out: &mut Vec<SuiteResult>) {
    let depth = order + 1;
    let chain = match compute_pbf(t, depth, tol) {
        Ok(c) => c,
        Err(e) => {
            out.push(SuiteResult::failed("factorization", &e));
            return;
        }
    };
    let target = t.truncate(order).expect("order checked");
    let err = max_abs_diff(&reconstruct(&chain), &target);
    out.push(SuiteResult::bound("factorization", err, tol.recon * depth as f64));
    let stochastic = t.mode() == Mode::Stochastic && t.size() == Some(depth);
    match stochastic_normalize(&chain, stochastic, tol) {
        Ok(sc) => {
            let rows = sc
                .lowers
                .iter()
                .chain(&sc.uppers)
                .flat_map(|f| f.row_sums())
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max);
            out.push(SuiteResult::bound("stochastic_factors", rows, tol.row));
            if stochastic {
                let dev = sc.delta.as_ref().map_or(0.0, |d| d.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
                out.push(SuiteResult::bound("stochastic_residual", dev, tol.row * 10.0));
            }
        }
        Err(e) => out.push(SuiteResult::failed("stochastic_factors", &e)),
    }
}

fn spectral_suites(t: &BandedMatrix, sys: &EigenSystem, tol: &Tolerances, out: &mut Vec<SuiteResult>) {
    let n1 = sys.order + 1;
    let in_range = sys.lambdas.iter().all(|&l| l > 0.0 && l <= 1.0 + tol.row);
    let mut bad_signs = Vec::new();
    for k in 0..n1 {
        let ((u_min, u_max), (w_min, w_max)) = sys.sign_variations(k);
        if u_min != k || u_max != k || w_min != k || w_max != k {
            bad_signs.push(k);
        }
    }
    out.push(SuiteResult::flag(
        "oscillatory_spectrum",
        in_range && bad_signs.is_empty(),
        format!("min gap {:e}; eigenvalues in (0,1]: {in_range}; sign-pattern failures at {bad_signs:?}", sys.diagnostics.min_gap),
    ));
    if sys.order >= 1 {
        let detail = match interlacing_margin(t, sys) {
            Ok(margin) => (margin > 0.0, format!("smallest separation {margin:e} relative to lambda_0")),
            Err(e) => (false, e.to_string()),
        };
        out.push(SuiteResult::flag("interlacing", detail.0, detail.1));
    }
    out.push(SuiteResult::bound("biorthogonality", biorthogonality_residual(sys), tol.bio * n1 as f64));
    match sys.measure(tol) {
        Ok(m) => out.push(SuiteResult::bound("mass_sum", m.mass_residual, tol.meas * n1 as f64)),
        Err(e) => out.push(SuiteResult::failed("mass_sum", &e)),
    }
    out.push(SuiteResult::bound("mixed_orthogonality", sys.mixed_orthogonality_residual(), tol.bio * n1 as f64));
    out.push(SuiteResult::bound("spectral_reconstruction", sys.reconstruction_residual(t), tol.spec * n1 as f64));
}

fn markov_suites(t: &BandedMatrix, sys: &EigenSystem, tol: &Tolerances, out: &mut Vec<SuiteResult>) -> Result<()> {
    let n1 = sys.order + 1;
    let t_hat = doob_from(t, sys)?;
    let rows = (0..n1).map(|i| (t_hat.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
    out.push(SuiteResult::bound("doob_stochastic", rows, tol.row * n1 as f64));

    let mut km = 0.0f64;
    for k in 0..=KM_STEPS {
        km = km.max(max_abs_diff(&kstep_matrix(sys, k), &matrix_power(&t_hat, k)?));
    }
    out.push(SuiteResult::bound("karlin_mcgregor", km, tol.km));

    // Positive coefficients bound the tail of the series by s^{K+1}/(1-s).
    let s = 0.5f64;
    let terms = 60u32;
    let mut gf = 0.0f64;
    for n in 0..n1.min(8) {
        let mut partial = 0.0;
        let mut power = matrix_power(&t_hat, 0)?;
        for k in 0..=terms {
            partial += s.powi(k as i32) * power[(n, n)];
            power = &power * &t_hat;
        }
        gf = gf.max((transition_gf(sys, n, n, s)? - partial).abs());
    }
    out.push(SuiteResult::bound("generating_function", gf, s.powi(terms as i32 + 1) / (1.0 - s) + tol.km));

    let forms = stationary_forms(t, sys)?;
    out.push(SuiteResult::bound("stationary_forms", forms.spread(), tol.bio));
    out.push(SuiteResult::bound("stationarity", stationarity_residual(&forms.product, &t_hat), tol.stat * n1 as f64));

    let rev = time_reversal(t, sys)?;
    let rev_rows = (0..n1).map(|i| (rev.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
    out.push(SuiteResult::bound("time_reversal_stochastic", rev_rows, tol.row * n1 as f64));
    out.push(SuiteResult::bound(
        "detailed_balance",
        detailed_balance_residual(&forms.product, &t_hat, &rev),
        tol.stat * n1 as f64,
    ));
    match classify_finite(t, sys) {
        Ok((c, ev)) => out.push(SuiteResult::flag(
            "classification",
            c.ergodic,
            format!("positive power {:?}, min diagonal {:e}", ev.positive_power, ev.min_diagonal),
        )),
        Err(e) => out.push(SuiteResult::failed("classification", &e)),
    }
    Ok(())
}

/// Runs every suite; a failing step marks its suite and the ones that
/// depend on it as failed instead of aborting.
pub fn verify_all(t: &BandedMatrix, order: usize, ic: &InitialConditions, tol: &Tolerances) -> Result<VerifyReport> {
    if let Some(max) = t.max_order() {
        if order > max {
            return Err(crate::Error::SizeExceeded { requested: order, needed: order + 1, available: max + 1 });
        }
    }
    ic.check_shape(t.p(), t.q())?;
    let mut suites = Vec::new();
    factorization_suites(t, order, tol, &mut suites);
    match eigensystem(t, order, ic, tol) {
        Ok(sys) => {
            spectral_suites(t, &sys, tol, &mut suites);
            if let Err(e) = markov_suites(t, &sys, tol, &mut suites) {
                suites.push(SuiteResult::failed("markov", &e));
            }
        }
        Err(e) => suites.push(SuiteResult::failed("spectrum", &e)),
    }
    let all_passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport { N: order, suites, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_passes_every_suite() {
        let t = BandedMatrix::from_rows(1, 1, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]], Mode::Stochastic, 1e-12)
            .unwrap();
        let r = verify_all(&t, 1, &InitialConditions::identity(1, 1), &Tolerances::default()).unwrap();
        for s in &r.suites {
            assert!(s.passed, "{s:?}");
        }
        assert!(r.all_passed && r.suites.len() >= 15);
    }
}
