//! Eigenvalues, biorthogonal eigenvectors, Christoffel numbers and the
//! discrete matrix-valued spectral measure of a truncation `T^[N]`.
//!
//! Eigenvalues start from a dense Schur decomposition and are polished by
//! Newton's method on `P_{N+1}` in multiprecision. Eigenvectors come from the
//! determinantal polynomials, whose forward recursions lose digits quickly
//! when `p, q > 1`, so they are recomputed at doubled precision until two
//! consecutive precisions agree entrywise.

use serde::Serialize;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::recursion::{
    alpha, beta, char_lu, first_row_cofactors, recursion_a, recursion_b, unit_lower_solve, BandCache, BandLu, Dual,
    InitialConditions,
};
use crate::scalar::{with_precision, Mp, Scalar};
use crate::tolerances::Tolerances;

/// First precision tried, in bits.
pub const START_BITS: usize = 256;
/// Precision at which the search for agreement stops.
pub const MAX_BITS: usize = 4096;
/// Relative agreement demanded between consecutive precisions.
const AGREEMENT: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralOptions {
    /// Require the oscillatory picture: positive eigenvalues and positive Perron vectors.
    pub oscillatory: bool,
    /// Run the O(N^3) biorthogonality and measure checks.
    pub verify: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { oscillatory: true, verify: true }
    }
}

/// How a left eigenvector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftPath {
    /// `alpha_N Q(lambda_k) / (P_N(lambda_k) P'_{N+1}(lambda_k))`.
    Determinantal,
    /// Inverse iteration with the transposed shifted matrix.
    InverseIteration,
}

/// Multiprecision data for one eigenvalue.
#[derive(Debug, Clone)]
pub(crate) struct Mode {
    pub lambda: Mp,
    pub u: Vec<Mp>,
    pub w: Vec<Mp>,
    pub rho: Vec<Mp>,
    pub mu: Vec<Mp>,
    /// `alpha_N beta_N Q_n R_n / (P_N P'_{N+1})`, entrywise.
    pub qr_ratio: Vec<Mp>,
    pub path: LeftPath,
}

/// Eigen-decomposition of `T^[N]` with `w_k . u_l = delta_kl`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub order: usize,
    pub p: usize,
    pub q: usize,
    /// Strictly decreasing.
    pub lambdas: Vec<f64>,
    /// `right[k]` is `u_k`.
    pub right: Vec<Vec<f64>>,
    /// `left[k]` is `w_k`.
    pub left: Vec<Vec<f64>>,
    pub left_paths: Vec<LeftPath>,
    pub ic: InitialConditions,
    pub diagnostics: SpectralDiagnostics,
    pub(crate) modes: Vec<Mode>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SpectralDiagnostics {
    /// Precision of the accepted eigen-data.
    pub bits: usize,
    /// Whether two consecutive precisions agreed entrywise.
    pub certified: bool,
    pub min_gap: f64,
    /// `|sum lambda_k - trace T^[N]|`.
    pub trace_residual: f64,
    pub biorthogonality: Option<f64>,
    pub mass_residual: Option<f64>,
    pub christoffel_positive: bool,
}

/// Discrete matrix-valued measure: `masses[k][b][a] = rho_{k,b} mu_{k,a}` at `lambdas[k]`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    pub lambdas: Vec<f64>,
    pub masses: Vec<Vec<Vec<f64>>>,
    pub nu: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub christoffel_positive: bool,
    pub mass_residual: f64,
}

fn check_order(t: &BandedMatrix, order: usize) -> Result<()> {
    match t.max_order() {
        Some(max) if order > max => Err(Error::SizeExceeded { requested: order, needed: order + 1, available: max + 1 }),
        _ => Ok(()),
    }
}

/// Real parts of the dense eigenvalues, decreasing.
/// Real starting points from the dense eigenvalues. Rounding on a strongly
/// nonnormal truncation can split close real eigenvalues into a conjugate
/// pair; both ends of the pair, `re -+ |im|`, are then used as starts and the
/// pair is remembered in case refinement fails.
fn dense_guesses(t: &BandedMatrix, order: usize) -> Result<(Vec<f64>, Option<(f64, f64)>)> {
    let dense = t.truncate(order)?;
    let eig = dense.complex_eigenvalues();
    let mut out = Vec::with_capacity(eig.len());
    let mut complex = None;
    for z in eig.iter() {
        if z.im == 0.0 {
            out.push(z.re);
        } else {
            complex.get_or_insert((z.re, z.im.abs()));
            out.push(if z.im > 0.0 { z.re + z.im } else { z.re - z.im.abs() });
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("dense eigenvalue estimates are not finite".into()));
    }
    out.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok((out, complex))
}

/// A refinement failure after complex dense estimates means the spectrum is
/// not real.
fn blame_complex<T>(r: Result<T>, complex: Option<(f64, f64)>) -> Result<T> {
    match (r, complex) {
        (Err(Error::NotSimpleSpectrum { .. }), Some((re, im))) => Err(Error::ComplexEigenvalue { re, im }),
        (r, _) => r,
    }
}

/// Newton's method on `P_{N+1}` with implicit deflation of the roots already
/// found, so that clustered eigenvalues cannot collapse onto one root.
fn refine_roots(band: &BandCache<Mp>, n: usize, guesses: &[Mp], bits: usize) -> Result<Vec<Mp>> {
    let stop = Mp::pow2(-((bits / 2 + 8) as i32));
    let floor = Mp::pow2(-(bits as i32));
    let mut found: Vec<Mp> = Vec::with_capacity(guesses.len());
    for (k, g) in guesses.iter().enumerate() {
        let mut x = g.clone();
        let mut converged = false;
        for _ in 0..200 {
            let lu = char_lu(band, &x, n);
            let Some(ld) = lu.log_derivative() else {
                converged = true;
                break;
            };
            let mut corr = ld;
            for r in &found {
                let diff = x.clone() - r.clone();
                if diff.is_zero() {
                    break;
                }
                corr = corr - Mp::one() / diff;
            }
            if corr.is_zero() {
                break;
            }
            let dx = Mp::one() / corr;
            x = x - dx.clone();
            let scale = Mp::max_of(x.abs(), floor.clone());
            if dx.abs() <= stop.clone() * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotSimpleSpectrum { k, next: k, gap: 0.0, tol: 0.0 });
        }
        found.push(x);
    }
    found.sort_by(|a, b| b.partial_cmp(a).expect("finite roots"));
    Ok(found)
}

/// Deflated Newton runs that land on the same root mean a root was missed.
fn check_distinct(roots: &[Mp]) -> Result<()> {
    for k in 1..roots.len() {
        if roots[k - 1] == roots[k] {
            return Err(Error::NotSimpleSpectrum { k: k - 1, next: k, gap: 0.0, tol: 0.0 });
        }
    }
    Ok(())
}

/// Left and right eigenvectors at one eigenvalue.
fn mode_at(band: &BandCache<Mp>, lambda: &Mp, order: usize, ic: &InitialConditions) -> Result<Mode> {
    let (p, q) = (band.p(), band.q());
    let n1 = order + 1;
    let a = recursion_a(band, lambda, order + p, &ic.nu)?;
    let b = recursion_b(band, lambda, order + q, &ic.xi)?;
    let fixed_a: Vec<Vec<Mp>> = (1..p).map(|r| (0..p).map(|i| a[i][order + r].clone()).collect()).collect();
    let fixed_b: Vec<Vec<Mp>> = (1..q).map(|r| (0..q).map(|i| b[i][order + r].clone()).collect()).collect();
    let ca = first_row_cofactors(&fixed_a);
    let cb = first_row_cofactors(&fixed_b);
    let qv: Vec<Mp> = (0..n1).map(|n| (0..p).fold(Mp::zero(), |s, i| s + a[i][n].clone() * ca[i].clone())).collect();
    let rv: Vec<Mp> = (0..n1).map(|n| (0..q).fold(Mp::zero(), |s, i| s + b[i][n].clone() * cb[i].clone())).collect();
    let alpha_n = alpha(band, order);
    let beta_n = beta(band, order);

    let mut u: Vec<Mp> = rv.iter().map(|r| beta_n.clone() * r.clone()).collect();
    let mut rho: Vec<Mp> = cb.iter().map(|c| beta_n.clone() * c.clone()).collect();
    if u.iter().all(Scalar::is_zero) {
        u = inverse_iteration(band, lambda, n1, false);
        rho = unit_lower_solve(&ic.xi, &u[..q.min(n1)]);
    }

    let p_n = if order == 0 { Mp::one() } else { char_lu(band, lambda, order).det().v };
    let p_prime = char_lu(band, lambda, n1).det().d;
    let denom = p_n * p_prime;
    let mut path = LeftPath::Determinantal;
    let mut w: Vec<Mp> = Vec::new();
    let mut mu: Vec<Mp> = Vec::new();
    let mut qr_ratio: Vec<Mp> = vec![Mp::zero(); n1];
    if !denom.is_zero() {
        let scale = alpha_n.clone() / denom;
        w = qv.iter().map(|x| scale.clone() * x.clone()).collect();
        mu = ca.iter().map(|x| scale.clone() * x.clone()).collect();
        qr_ratio = (0..n1).map(|n| scale.clone() * beta_n.clone() * qv[n].clone() * rv[n].clone()).collect();
        let s = dot(&w, &u);
        let tol = Mp::pow2(-((crate::scalar::working_bits() / 4) as i32));
        if (s - Mp::one()).abs() > tol {
            path = LeftPath::InverseIteration;
        }
    } else {
        path = LeftPath::InverseIteration;
    }
    if path == LeftPath::InverseIteration {
        let y = inverse_iteration(band, lambda, n1, true);
        let s = dot(&y, &u);
        w = y.into_iter().map(|v| v / s.clone()).collect();
        mu = unit_lower_solve(&ic.nu, &w[..p.min(n1)]);
    }
    if u[0].is_negative() {
        for v in u.iter_mut().chain(w.iter_mut()).chain(rho.iter_mut()).chain(mu.iter_mut()) {
            *v = -v.clone();
        }
    }
    Ok(Mode { lambda: lambda.clone(), u, w, rho, mu, qr_ratio, path })
}

fn dot(a: &[Mp], b: &[Mp]) -> Mp {
    a.iter().zip(b).fold(Mp::zero(), |s, (x, y)| s + x.clone() * y.clone())
}

/// One step of inverse iteration on `lambda I - T^[n-1]` (or its transpose).
fn inverse_iteration(band: &BandCache<Mp>, lambda: &Mp, n: usize, transpose: bool) -> Vec<Mp> {
    let (p, q) = (band.p(), band.q());
    let lower = if transpose { q } else { p };
    let upper = if transpose { p } else { q };
    let entry = |i: usize, m: usize| -> Mp {
        let (r, c) = if transpose { (m, i) } else { (i, m) };
        let t = band.get(r, c).clone();
        if r == c {
            lambda.clone() - t
        } else {
            -t
        }
    };
    let lu: BandLu<Mp> = BandLu::factor(n, lower, |i| {
        let lo = i.saturating_sub(lower);
        let hi = (i + upper).min(n - 1);
        (lo, (lo..=hi).map(|m| Dual::constant(entry(i, m))).collect())
    });
    let floor = Mp::pow2(-(crate::scalar::working_bits() as i32));
    let rhs: Vec<Mp> = (0..n).map(|i| Mp::from_f64(1.0 + (i % 7) as f64 / 13.0)).collect();
    let y = lu.solve(&rhs, &floor);
    let norm = y.iter().fold(Mp::zero(), |m, v| Mp::max_of(m, v.abs()));
    y.into_iter().map(|v| v / norm.clone()).collect()
}

/// `|a - b| <= 2^-40 max(|a|, |b|, floor)`.
fn agrees(a: &Mp, b: &Mp, floor: &Mp) -> bool {
    let diff = (a.clone() - b.clone()).abs();
    let scale = Mp::max_of(Mp::max_of(a.abs(), b.abs()), floor.clone());
    diff <= scale * Mp::from_f64(AGREEMENT)
}

/// Entries below `2^-(old_bits/2)` of the vector's largest entry are
/// compared in absolute terms: they sit at nodes where cancellation is
/// exact and their relative value carries no information.
fn vectors_agree(a: &[Mp], b: &[Mp], old_bits: usize) -> bool {
    let norm = a.iter().fold(Mp::zero(), |m, x| Mp::max_of(m, x.abs()));
    let floor = norm * Mp::pow2(-((old_bits / 2) as i32));
    a.iter().zip(b).all(|(x, y)| agrees(x, y, &floor))
}

fn modes_agree(old: &[Mode], new: &[Mode], old_bits: usize) -> bool {
    old.len() == new.len()
        && old.iter().zip(new).all(|(o, n)| {
            agrees(&o.lambda, &n.lambda, &Mp::pow2(-((old_bits / 2) as i32)))
                && vectors_agree(&o.u, &n.u, old_bits)
                && vectors_agree(&o.w, &n.w, old_bits)
        })
}

/// Computes the modes selected by `which` (indices into the decreasing
/// spectrum), escalating precision until two consecutive precisions agree.
fn certified_modes(
    t: &BandedMatrix,
    order: usize,
    ic: &InitialConditions,
    which: Option<usize>,
) -> Result<(Vec<Mode>, usize, bool)> {
    let (guesses, complex) = dense_guesses(t, order)?;
    let n1 = order + 1;
    let rows = order + t.p() + t.q() + 1;
    let mut previous: Option<Vec<Mode>> = None;
    let mut bits = START_BITS;
    loop {
        let modes = blame_complex(with_precision(bits, || -> Result<Vec<Mode>> {
            let band = BandCache::<Mp>::new(t, rows);
            let starts: Vec<Mp> = match &previous {
                Some(prev) => prev.iter().map(|m| m.lambda.rescaled()).collect(),
                None => match which {
                    Some(k) => vec![Mp::from_f64(guesses[k])],
                    None => guesses.iter().map(|&g| Mp::from_f64(g)).collect(),
                },
            };
            let roots = match (which, &previous) {
                (Some(_), _) => refine_single(&band, n1, &starts[0], bits)?,
                (None, _) => refine_roots(&band, n1, &starts, bits)?,
            };
            check_distinct(&roots)?;
            roots.iter().map(|r| mode_at(&band, r, order, ic)).collect()
        }), complex)?;
        if let Some(prev) = &previous {
            if modes_agree(prev, &modes, bits / 2) {
                return Ok((modes, bits, true));
            }
        }
        if bits >= MAX_BITS {
            return Ok((modes, bits, false));
        }
        previous = Some(modes);
        bits *= 2;
    }
}

fn refine_single(band: &BandCache<Mp>, n: usize, start: &Mp, bits: usize) -> Result<Vec<Mp>> {
    refine_roots(band, n, std::slice::from_ref(start), bits)
}

/// Eigenvalues of `T^[N]`, decreasing.
pub fn eigenvalues(t: &BandedMatrix, order: usize, tol: &Tolerances) -> Result<Vec<f64>> {
    check_order(t, order)?;
    let (guesses, complex) = dense_guesses(t, order)?;
    let roots = blame_complex(
        with_precision(START_BITS, || -> Result<Vec<f64>> {
            let band = BandCache::<Mp>::new(t, order + t.p() + t.q() + 1);
            let starts: Vec<Mp> = guesses.iter().map(|&g| Mp::from_f64(g)).collect();
            let roots = refine_roots(&band, order + 1, &starts, START_BITS)?;
            check_distinct(&roots)?;
            Ok(roots.iter().map(Scalar::to_f64).collect())
        }),
        complex,
    )?;
    check_gaps(&roots, tol)?;
    Ok(roots)
}

fn check_gaps(lambdas: &[f64], tol: &Tolerances) -> Result<f64> {
    let scale = lambdas.first().map(|l| l.abs()).unwrap_or(1.0);
    let mut min_gap = f64::INFINITY;
    for k in 1..lambdas.len() {
        let gap = lambdas[k - 1] - lambdas[k];
        min_gap = min_gap.min(gap);
        if gap <= tol.sep * scale {
            return Err(Error::NotSimpleSpectrum { k: k - 1, next: k, gap, tol: tol.sep * scale });
        }
    }
    Ok(min_gap)
}

/// Dominant eigenvalue and right Perron vector, normalized with the left one
/// so that `w_0 . u_0 = 1`.
pub fn perron_pair(t: &BandedMatrix, order: usize) -> Result<(f64, Vec<f64>)> {
    check_order(t, order)?;
    let ic = InitialConditions::identity(t.p(), t.q());
    let (modes, _, _) = certified_modes(t, order, &ic, Some(0))?;
    let m = &modes[0];
    let u: Vec<f64> = m.u.iter().map(Scalar::to_f64).collect();
    if let Some((i, &v)) = u.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositivePerronVector { index: i, value: v });
    }
    Ok((m.lambda.to_f64(), u))
}

/// Full biorthogonal eigensystem of `T^[N]`.
pub fn eigensystem(t: &BandedMatrix, order: usize, ic: &InitialConditions, tol: &Tolerances) -> Result<EigenSystem> {
    eigensystem_with(t, order, ic, tol, SpectralOptions::default())
}

pub fn eigensystem_with(
    t: &BandedMatrix,
    order: usize,
    ic: &InitialConditions,
    tol: &Tolerances,
    opts: SpectralOptions,
) -> Result<EigenSystem> {
    check_order(t, order)?;
    ic.check_shape(t.p(), t.q())?;
    let (modes, bits, certified) = certified_modes(t, order, ic, None)?;
    let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda.to_f64()).collect();
    let min_gap = check_gaps(&lambdas, tol)?;
    let n1 = order + 1;
    let trace: f64 = (0..n1).map(|i| t.entry(i, i)).sum();
    let trace_residual = (lambdas.iter().sum::<f64>() - trace).abs();
    let christoffel_positive = modes
        .iter()
        .all(|m| m.rho.iter().chain(&m.mu).all(|v| !v.is_negative() && !v.is_zero()));
    let mut sys = EigenSystem {
        order,
        p: t.p(),
        q: t.q(),
        right: modes.iter().map(|m| m.u.iter().map(Scalar::to_f64).collect()).collect(),
        left: modes.iter().map(|m| m.w.iter().map(Scalar::to_f64).collect()).collect(),
        left_paths: modes.iter().map(|m| m.path).collect(),
        lambdas,
        ic: ic.clone(),
        diagnostics: SpectralDiagnostics { bits, certified, min_gap, trace_residual, christoffel_positive, ..Default::default() },
        modes,
    };
    if opts.oscillatory {
        if let Some(&l) = sys.lambdas.iter().find(|&&l| !(l > 0.0)) {
            return Err(Error::NotSimpleSpectrum { k: sys.lambdas.len() - 1, next: sys.lambdas.len() - 1, gap: l, tol: 0.0 });
        }
        for (i, (&u, &w)) in sys.right[0].iter().zip(&sys.left[0]).enumerate() {
            if !(u > 0.0) {
                return Err(Error::NonPositivePerronVector { index: i, value: u });
            }
            if !(w > 0.0) {
                return Err(Error::NonPositivePerronVector { index: i, value: w });
            }
        }
    }
    if opts.verify {
        let bio = biorthogonality_residual(&sys);
        sys.diagnostics.biorthogonality = Some(bio);
        let limit = tol.bio * n1 as f64;
        if !(bio <= limit) {
            return Err(Error::BiorthogonalityFailure { residual: bio, tol: limit });
        }
    }
    Ok(sys)
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.diagnostics.bits
    }

    /// `1 - lambda_0` at working precision. Positive on a substochastic
    /// truncation even when `lambdas[0]` rounds to 1.
    pub fn perron_deficit(&self) -> f64 {
        with_precision(self.bits(), || (Mp::one() - self.modes[0].lambda.rescaled()).to_f64())
    }

    /// Sign variations `(v_m, v_M)` of `u_k` and of `w_k`, with entries below
    /// the certified resolution counted as zeros.
    pub fn sign_variations(&self, k: usize) -> ((usize, usize), (usize, usize)) {
        let m = &self.modes[k];
        with_precision(self.bits(), || {
            let rel = Mp::pow2(32 - self.bits() as i32);
            (sign_variation_mp(&m.u, &rel), sign_variation_mp(&m.w, &rel))
        })
    }

    /// `max |sum_k lambda_k u_k w_k^T - T^[N]|` entrywise.
    pub fn reconstruction_residual(&self, t: &BandedMatrix) -> f64 {
        let n1 = self.order + 1;
        with_precision(self.bits(), || {
            let mut worst = 0.0f64;
            for i in 0..n1 {
                for j in 0..n1 {
                    let s = self
                        .modes
                        .iter()
                        .fold(Mp::zero(), |s, m| s + m.lambda.clone() * m.u[i].clone() * m.w[j].clone());
                    worst = worst.max((s.to_f64() - t.entry(i, j)).abs());
                }
            }
            worst
        })
    }

    /// Christoffel numbers: `mu[k]` (length p) and `rho[k]` (length q).
    pub fn christoffel_numbers(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mu = self.modes.iter().map(|m| m.mu.iter().map(Scalar::to_f64).collect()).collect();
        let rho = self.modes.iter().map(|m| m.rho.iter().map(Scalar::to_f64).collect()).collect();
        (mu, rho)
    }

    /// Spectral measure with its mass-sum check.
    pub fn measure(&self, tol: &Tolerances) -> Result<SpectralMeasure> {
        let (p, q) = (self.p, self.q);
        let n1 = self.order + 1;
        let (masses, residual) = with_precision(self.bits(), || {
            let masses: Vec<Vec<Vec<Mp>>> = self
                .modes
                .iter()
                .map(|m| (0..q).map(|b| (0..p).map(|a| m.rho[b].clone() * m.mu[a].clone()).collect()).collect())
                .collect();
            let total = self.ic.mass_total();
            let mut residual = 0.0f64;
            for b in 0..q {
                for a in 0..p {
                    let s = masses.iter().fold(Mp::zero(), |s, mk| s + mk[b][a].clone());
                    residual = residual.max((s - Mp::from_f64(total[b][a])).abs().to_f64());
                }
            }
            let masses = masses
                .iter()
                .map(|mk| mk.iter().map(|row| row.iter().map(Scalar::to_f64).collect()).collect())
                .collect::<Vec<Vec<Vec<f64>>>>();
            (masses, residual)
        });
        let limit = tol.meas * n1 as f64;
        if !(residual <= limit) {
            return Err(Error::MassBoundViolation { residual, tol: limit });
        }
        Ok(SpectralMeasure {
            lambdas: self.lambdas.clone(),
            masses,
            nu: self.ic.nu.clone(),
            xi: self.ic.xi.clone(),
            christoffel_positive: self.diagnostics.christoffel_positive,
            mass_residual: residual,
        })
    }

    /// Largest violation of the mixed orthogonality relations
    /// `sum_k lambda_k^n rho_{k,b} w_{k,m} = 0` for `n < ceil((m+1-b)/q)` and
    /// `sum_k lambda_k^n u_{k,m} mu_{k,a} = 0` for `n < ceil((m+1-a)/p)`,
    /// with `a, b` counted from one and `1 <= m <= N`.
    pub fn mixed_orthogonality_residual(&self) -> f64 {
        let n1 = self.order + 1;
        let (p, q) = (self.p, self.q);
        with_precision(self.bits(), || {
            let mut worst = 0.0f64;
            let mut powers: Vec<Mp> = vec![Mp::one(); n1];
            let max_n = (n1 + q.max(p)) / p.min(q) + 1;
            for n in 0..max_n {
                for m in 1..n1 {
                    for b in 1..=q {
                        if m + 1 > b && n < (m + 1 - b).div_ceil(q) {
                            let s = (0..n1).fold(Mp::zero(), |s, k| {
                                s + powers[k].clone() * self.modes[k].rho[b - 1].clone() * self.modes[k].w[m].clone()
                            });
                            worst = worst.max(s.abs().to_f64());
                        }
                    }
                    for a in 1..=p {
                        if m + 1 > a && n < (m + 1 - a).div_ceil(p) {
                            let s = (0..n1).fold(Mp::zero(), |s, k| {
                                s + powers[k].clone() * self.modes[k].u[m].clone() * self.modes[k].mu[a - 1].clone()
                            });
                            worst = worst.max(s.abs().to_f64());
                        }
                    }
                }
                for (k, pw) in powers.iter_mut().enumerate() {
                    *pw = pw.clone() * self.modes[k].lambda.clone();
                }
            }
            worst
        })
    }
}

/// `max |W U - I|` evaluated in the eigen-data's own precision.
pub fn biorthogonality_residual(sys: &EigenSystem) -> f64 {
    let n1 = sys.order + 1;
    with_precision(sys.bits(), || {
        let mut worst = 0.0f64;
        for k in 0..n1 {
            for l in 0..n1 {
                let s = dot(&sys.modes[k].w, &sys.modes[l].u);
                let target = if k == l { Mp::one() } else { Mp::zero() };
                worst = worst.max((s - target).abs().to_f64());
            }
        }
        worst
    })
}

/// Spectral measure of `T^[N]`.
pub fn spectral_measure(t: &BandedMatrix, order: usize, ic: &InitialConditions, tol: &Tolerances) -> Result<SpectralMeasure> {
    eigensystem(t, order, ic, tol)?.measure(tol)
}

/// Interlacing of the spectrum of `T^[N-1]` with that of `fine`, decided at
/// twice the working precision of `fine`: eigenvalues of neighbouring
/// truncations can agree to far below `f64` resolution. Returns the smallest
/// of `fine_k - coarse_k` and `coarse_k - fine_{k+1}` relative to
/// `lambda_0`, so interlacing is strict iff the result is positive.
pub fn interlacing_margin(t: &BandedMatrix, fine: &EigenSystem) -> Result<f64> {
    if fine.order == 0 {
        return Err(Error::InvalidInput("interlacing needs N >= 1".into()));
    }
    let bits = 2 * fine.bits();
    blame_complex(
        with_precision(bits, || -> Result<f64> {
            let band = BandCache::<Mp>::new(t, fine.order + t.p() + t.q());
            let lam: Vec<Mp> = fine.modes.iter().map(|m| m.lambda.rescaled()).collect();
            let half = Mp::pow2(-1);
            let starts: Vec<Mp> = lam.windows(2).map(|w| (w[0].clone() + w[1].clone()) * half.clone()).collect();
            let coarse = refine_roots(&band, fine.order, &starts, bits)?;
            check_distinct(&coarse)?;
            let mut margin: Option<Mp> = None;
            for (k, c) in coarse.iter().enumerate() {
                for d in [lam[k].clone() - c.clone(), c.clone() - lam[k + 1].clone()] {
                    margin = match margin {
                        Some(m) if m < d => Some(m),
                        _ => Some(d),
                    };
                }
            }
            Ok((margin.expect("N >= 1") / lam[0].clone()).to_f64())
        }),
        None,
    )
}

/// Strict interlacing `fine_k > coarse_k > fine_{k+1}` of the spectra of
/// consecutive truncations, both decreasing.
pub fn interlaces(coarse: &[f64], fine: &[f64]) -> bool {
    fine.len() == coarse.len() + 1 && coarse.iter().enumerate().all(|(k, &c)| fine[k] > c && c > fine[k + 1])
}

/// Sign variations `(v_m, v_M)`: `v_m` skips zeros, `v_M` chooses their
/// signs to maximize the count. Entries below `rel * max|v|` are zeros.
pub fn sign_variation(v: &[f64], rel: f64) -> (usize, usize) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let signs: Vec<i8> = v
        .iter()
        .map(|&x| if x.abs() <= rel * scale { 0 } else if x > 0.0 { 1 } else { -1 })
        .collect();
    count_variations(&signs)
}

fn sign_variation_mp(v: &[Mp], rel: &Mp) -> (usize, usize) {
    let scale = v.iter().fold(Mp::zero(), |m, x| Mp::max_of(m, x.abs()));
    let thr = scale * rel.clone();
    let signs: Vec<i8> = v
        .iter()
        .map(|x| if x.abs() <= thr { 0 } else if x.is_negative() { -1 } else { 1 })
        .collect();
    count_variations(&signs)
}

fn count_variations(signs: &[i8]) -> (usize, usize) {
    let nz: Vec<i8> = signs.iter().copied().filter(|&s| s != 0).collect();
    let v_min = nz.windows(2).filter(|w| w[0] != w[1]).count();
    // best[s] = most variations of a prefix ending with sign s (0: +, 1: -).
    let mut best: [Option<usize>; 2] = [None, None];
    for &s in signs {
        let allowed: &[usize] = match s {
            1 => &[0],
            -1 => &[1],
            _ => &[0, 1],
        };
        let mut next = [None, None];
        for &c in allowed {
            let stay = best[c];
            let flip = best[1 - c].map(|v| v + 1);
            next[c] = match (stay, flip) {
                (None, None) => Some(0),
                (a, b) => a.max(b),
            };
        }
        best = next;
    }
    let v_max = best[0].max(best[1]).unwrap_or(0);
    (v_min, v_max)
}
