//! Left/right recursion polynomials, characteristic polynomials of the
//! truncations, the `alpha`/`beta` products and the determinantal
//! polynomials `Q`, `R`. Everything is evaluated pointwise.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unit lower-triangular initial-condition matrices. Row `j`, column `a`
/// of `nu` is the value of `A^(a)_j` for `j < p`; likewise `xi` for `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub nu: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
}

impl InitialConditions {
    pub fn identity(p: usize, q: usize) -> Self {
        let eye = |n: usize| (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        InitialConditions { nu: eye(p), xi: eye(q) }
    }

    pub fn new(nu: Vec<Vec<f64>>, xi: Vec<Vec<f64>>) -> Result<Self> {
        for (name, m) in [("nu", &nu), ("xi", &xi)] {
            let n = m.len();
            for (i, row) in m.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::SingularInitialConditions(format!("{name} is not square")));
                }
                for (j, &v) in row.iter().enumerate() {
                    let ok = match i.cmp(&j) {
                        std::cmp::Ordering::Equal => v == 1.0,
                        std::cmp::Ordering::Less => v == 0.0,
                        std::cmp::Ordering::Greater => v.is_finite(),
                    };
                    if !ok {
                        return Err(Error::SingularInitialConditions(format!(
                            "{name}[{i}][{j}] = {v} breaks the unit lower-triangular shape"
                        )));
                    }
                }
            }
        }
        Ok(InitialConditions { nu, xi })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ic: InitialConditions = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        InitialConditions::new(ic.nu, ic.xi)
    }

    pub fn p(&self) -> usize {
        self.nu.len()
    }

    pub fn q(&self) -> usize {
        self.xi.len()
    }

    pub fn check_shape(&self, p: usize, q: usize) -> Result<()> {
        if self.p() != p || self.q() != q {
            return Err(Error::SingularInitialConditions(format!(
                "initial conditions are {}x{} / {}x{}, matrix has p={p}, q={q}",
                self.p(),
                self.p(),
                self.q(),
                self.q()
            )));
        }
        Ok(())
    }

    /// `xi^{-1} I_{q,p} nu^{-T}`, the total mass of the spectral measure.
    pub fn mass_total(&self) -> Vec<Vec<f64>> {
        let xi_inv = unit_lower_inverse(&self.xi);
        let nu_inv = unit_lower_inverse(&self.nu);
        let (p, q) = (self.p(), self.q());
        (0..q)
            .map(|b| (0..p).map(|a| (0..p.min(q)).map(|k| xi_inv[b][k] * nu_inv[a][k]).sum()).collect())
            .collect()
    }
}

/// Inverse of a unit lower-triangular matrix.
pub fn unit_lower_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        for r in c..n {
            let mut v = if r == c { 1.0 } else { 0.0 };
            for k in c..r {
                v -= m[r][k] * inv[k][c];
            }
            inv[r][c] = v;
        }
    }
    inv
}

/// Solves `L y = b` for unit lower-triangular `L` given in binary64.
pub fn unit_lower_solve<S: Scalar>(l: &[Vec<f64>], b: &[S]) -> Vec<S> {
    let mut y: Vec<S> = Vec::with_capacity(b.len());
    for r in 0..b.len() {
        let mut v = b[r].clone();
        for (k, yk) in y.iter().enumerate() {
            if l[r][k] != 0.0 {
                v = v - S::from_f64(l[r][k]) * yk.clone();
            }
        }
        y.push(v);
    }
    y
}

/// Value and first derivative carried together.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub d: S,
}

impl<S: Scalar> Dual<S> {
    pub fn constant(v: S) -> Self {
        Dual { v, d: S::zero() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { d: self.v.clone() * o.d + self.d * o.v.clone(), v: self.v * o.v }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v.clone();
        Dual { d: (self.d - q.clone() * o.d) / o.v, v: q }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: -self.d }
    }
}

/// Band entries of `T` converted once to the working scalar type.
///
/// Positions inside the band but outside a finite matrix read as one: they
/// only enter the recursion values beyond the truncation, which rescale the
/// determinantal polynomials and the `alpha`/`beta` products by the same
/// factor, so eigenvectors and measures do not depend on them.
#[derive(Debug, Clone)]
pub struct BandCache<S> {
    p: usize,
    q: usize,
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> BandCache<S> {
    /// Caches rows `0..rows`.
    pub fn new(t: &BandedMatrix, rows: usize) -> Self {
        let (p, q) = (t.p(), t.q());
        let size = t.size();
        let data = (0..rows)
            .map(|n| {
                (0..=p + q)
                    .map(|k| {
                        let m = n as isize + k as isize - p as isize;
                        if m < 0 {
                            S::zero()
                        } else {
                            let m = m as usize;
                            match size {
                                Some(s) if n >= s || m >= s => S::one(),
                                _ => S::from_f64(t.entry(n, m)),
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        BandCache { p, q, rows: data }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `T[n, m]` for `m - n` inside the band.
    #[inline]
    pub fn get(&self, n: usize, m: usize) -> &S {
        &self.rows[n][m + self.p - n]
    }
}

/// Values `A^(a)_n` for `n < len` (row `a`), seeded by `nu`.
pub fn recursion_a<S: Scalar>(band: &BandCache<S>, x: &S, len: usize, nu: &[Vec<f64>]) -> Result<Vec<Vec<S>>> {
    let (p, q) = (band.p(), band.q());
    let mut out = Vec::with_capacity(p);
    for a in 0..p {
        let mut v: Vec<S> = (0..p.min(len)).map(|j| S::from_f64(nu[j][a])).collect();
        for n in 0..len.saturating_sub(p) {
            let mut s = x.clone() * v[n].clone();
            for j in n.saturating_sub(q)..n + p {
                s = s - v[j].clone() * band.get(j, n).clone();
            }
            let pivot = band.get(n + p, n);
            if pivot.is_zero() {
                return Err(Error::ZeroExtremeDiagonal { index: n });
            }
            v.push(s / pivot.clone());
        }
        out.push(v);
    }
    Ok(out)
}

/// Values `B^(b)_n` for `n < len` (row `b`), seeded by `xi`.
pub fn recursion_b<S: Scalar>(band: &BandCache<S>, x: &S, len: usize, xi: &[Vec<f64>]) -> Result<Vec<Vec<S>>> {
    let (p, q) = (band.p(), band.q());
    let mut out = Vec::with_capacity(q);
    for b in 0..q {
        let mut v: Vec<S> = (0..q.min(len)).map(|j| S::from_f64(xi[j][b])).collect();
        for n in 0..len.saturating_sub(q) {
            let mut s = x.clone() * v[n].clone();
            for j in n.saturating_sub(p)..n + q {
                s = s - band.get(n, j).clone() * v[j].clone();
            }
            let pivot = band.get(n, n + q);
            if pivot.is_zero() {
                return Err(Error::ZeroExtremeDiagonal { index: n });
            }
            v.push(s / pivot.clone());
        }
        out.push(v);
    }
    Ok(out)
}

/// `alpha_N = (-1)^{(p-1)N} T[p,0] ... T[N+p-1,N-1]`.
pub fn alpha<S: Scalar>(band: &BandCache<S>, order: usize) -> S {
    let p = band.p();
    let mut v = S::one();
    for j in 0..order {
        v = v * band.get(j + p, j).clone();
    }
    if (p - 1) * order % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `beta_N = (-1)^{(q-1)N} T[0,q] ... T[N-1,N+q-1]`.
pub fn beta<S: Scalar>(band: &BandCache<S>, order: usize) -> S {
    let q = band.q();
    let mut v = S::one();
    for j in 0..order {
        v = v * band.get(j, j + q).clone();
    }
    if (q - 1) * order % 2 == 1 {
        -v
    } else {
        v
    }
}

/// LU factorization with partial pivoting of a banded matrix, stored by
/// rows that start at the first not-yet-eliminated column.
pub struct BandLu<S> {
    pivots: Vec<Dual<S>>,
    /// Row used at step `j`, as (first column, values).
    rows: Vec<(usize, Vec<Dual<S>>)>,
    /// Multipliers applied at step `j`: (row index, factor), and the swap.
    steps: Vec<(usize, Vec<(usize, Dual<S>)>)>,
    swaps: usize,
    n: usize,
}

impl<S: Scalar> BandLu<S> {
    /// Factors the `n x n` matrix whose row `i` is given by `row(i)` as
    /// (first column, values); entries outside that window are zero and the
    /// first column must be at least `i - lower`.
    pub fn factor(n: usize, lower: usize, mut row: impl FnMut(usize) -> (usize, Vec<Dual<S>>)) -> Self {
        let mut active: Vec<(usize, usize, Vec<Dual<S>>)> = Vec::new();
        let mut next = 0;
        let mut pivots = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        let mut steps = Vec::with_capacity(n);
        for j in 0..n {
            while next < n && next <= j + lower {
                let (start, vals) = row(next);
                active.push((next, start, vals));
                next += 1;
            }
            // Rows whose window starts at column j take part in this step.
            let mut best: Option<usize> = None;
            for (idx, (_, start, vals)) in active.iter().enumerate() {
                if *start == j {
                    let better = match best {
                        None => true,
                        Some(b) => vals[0].v.abs() > active[b].2[0].v.abs(),
                    };
                    if better {
                        best = Some(idx);
                    }
                }
            }
            let b = best.expect("banded LU lost its pivot row");
            let (orig, start, prow) = active.remove(b);
            let pivot = prow[0].clone();
            let mut mults = Vec::new();
            for (id, rstart, vals) in active.iter_mut() {
                if *rstart != j {
                    continue;
                }
                let lead = vals.remove(0);
                *rstart = j + 1;
                let f = if pivot.v.is_zero() { Dual::constant(S::zero()) } else { lead / pivot.clone() };
                if vals.len() < prow.len() - 1 {
                    vals.resize(prow.len() - 1, Dual::constant(S::zero()));
                }
                for (k, pv) in prow.iter().enumerate().skip(1) {
                    let cur = vals[k - 1].clone();
                    vals[k - 1] = cur - f.clone() * pv.clone();
                }
                mults.push((*id, f));
            }
            pivots.push(pivot);
            steps.push((orig, mults));
            rows.push((start, prow));
        }
        let perm: Vec<usize> = steps.iter().map(|(orig, _)| *orig).collect();
        let swaps = permutation_parity(&perm);
        BandLu { pivots, rows, steps, swaps, n }
    }

    /// Determinant with its derivative.
    pub fn det(&self) -> Dual<S> {
        let mut d = Dual::constant(S::one());
        for p in &self.pivots {
            d = d * p.clone();
        }
        if self.swaps % 2 == 1 {
            -d
        } else {
            d
        }
    }

    /// `det'/det` as the sum of pivot log-derivatives; `None` on a zero pivot.
    pub fn log_derivative(&self) -> Option<S> {
        let mut s = S::zero();
        for p in &self.pivots {
            if p.v.is_zero() {
                return None;
            }
            s = s + p.d.clone() / p.v.clone();
        }
        Some(s)
    }

    pub fn min_abs_pivot(&self) -> S {
        let mut m: Option<S> = None;
        for p in &self.pivots {
            let a = p.v.abs();
            m = Some(match m {
                None => a,
                Some(b) => if a < b { a } else { b },
            });
        }
        m.unwrap_or_else(S::one)
    }

    /// Solves `M y = rhs` using the value parts; zero pivots are replaced
    /// by `floor` (inverse iteration at an exact eigenvalue).
    pub fn solve(&self, rhs: &[S], floor: &S) -> Vec<S> {
        let n = self.n;
        let mut b: Vec<S> = rhs.to_vec();
        // Forward elimination replays the row operations in original row ids.
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut current: Vec<S> = Vec::with_capacity(n);
        let mut pending: std::collections::HashMap<usize, S> = std::collections::HashMap::new();
        for (id, v) in b.drain(..).enumerate() {
            pending.insert(id, v);
        }
        for (orig, mults) in &self.steps {
            let pv = pending.remove(orig).expect("row consumed twice");
            for (id, f) in mults {
                let cur = pending.remove(id).expect("missing row");
                pending.insert(*id, cur - f.v.clone() * pv.clone());
            }
            order.push(*orig);
            current.push(pv);
        }
        let mut y: Vec<S> = vec![S::zero(); n];
        for j in (0..n).rev() {
            let (start, vals) = &self.rows[j];
            debug_assert_eq!(*start, j);
            let mut s = current[j].clone();
            for (k, v) in vals.iter().enumerate().skip(1) {
                if j + k < n {
                    s = s - v.v.clone() * y[j + k].clone();
                }
            }
            let piv = if vals[0].v.is_zero() { floor.clone() } else { vals[0].v.clone() };
            y[j] = s / piv;
        }
        y
    }
}

/// 0 for an even permutation, 1 for an odd one.
fn permutation_parity(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut parity = 0;
    for start in 0..perm.len() {
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        if len > 0 {
            parity ^= (len - 1) & 1;
        }
    }
    parity
}

/// `(P_{N+1}(x), P'_{N+1}(x))` with `P_{N+1}(x) = det(x I - T^[N])`.
pub fn char_poly_in<S: Scalar>(band: &BandCache<S>, x: &S, order: usize) -> (S, S) {
    let lu = char_lu(band, x, order + 1);
    let d = lu.det();
    (d.v, d.d)
}

/// Pivoted LU of `x I - T^[n-1]` carrying derivatives in `x`.
pub fn char_lu<S: Scalar>(band: &BandCache<S>, x: &S, n: usize) -> BandLu<S> {
    let (p, q) = (band.p(), band.q());
    BandLu::factor(n, p, |i| {
        let lo = i.saturating_sub(p);
        let hi = (i + q).min(n - 1);
        let vals = (lo..=hi)
            .map(|m| {
                let t = band.get(i, m).clone();
                if m == i {
                    Dual { v: x.clone() - t, d: S::one() }
                } else {
                    Dual { v: -t, d: S::zero() }
                }
            })
            .collect();
        (lo, vals)
    })
}

/// Binary64 characteristic polynomial value and derivative.
pub fn char_poly(t: &BandedMatrix, x: f64, order: usize) -> Result<(f64, f64)> {
    if let Some(max) = t.max_order() {
        if order > max {
            return Err(Error::SizeExceeded { requested: order, needed: order + 1, available: max + 1 });
        }
    }
    let band = BandCache::<f64>::new(t, order + 1);
    Ok(char_poly_in(&band, &x, order))
}

/// Determinant of a small dense matrix by Gaussian elimination with partial pivoting.
pub fn det_small<S: Scalar>(mut m: Vec<Vec<S>>) -> S {
    let n = m.len();
    let mut det = S::one();
    for c in 0..n {
        let mut best = c;
        for r in c + 1..n {
            if m[r][c].abs() > m[best][c].abs() {
                best = r;
            }
        }
        if m[best][c].is_zero() {
            return S::zero();
        }
        if best != c {
            m.swap(best, c);
            det = -det;
        }
        let piv = m[c][c].clone();
        det = det * piv.clone();
        for r in c + 1..n {
            let f = m[r][c].clone() / piv.clone();
            for k in c..n {
                let v = m[c][k].clone();
                m[r][k] = m[r][k].clone() - f.clone() * v;
            }
        }
    }
    det
}

/// Cofactors `c_a` of the first row of the determinant whose remaining rows
/// are `fixed` (each of length `fixed.len() + 1`), so that the determinant
/// with first row `v` equals `sum_a v_a c_a`.
pub fn first_row_cofactors<S: Scalar>(fixed: &[Vec<S>]) -> Vec<S> {
    let dim = fixed.len() + 1;
    (0..dim)
        .map(|a| {
            let minor: Vec<Vec<S>> = fixed
                .iter()
                .map(|row| row.iter().enumerate().filter(|(k, _)| *k != a).map(|(_, v)| v.clone()).collect())
                .collect();
            let d = det_small(minor);
            if a % 2 == 1 {
                -d
            } else {
                d
            }
        })
        .collect()
}

/// Pointwise values of every polynomial attached to `T` at one point `x`.
#[derive(Debug, Clone)]
pub struct PolynomialTable<S> {
    pub x: S,
    pub order: usize,
    /// `a[a][n] = A^(a)_n`, `n < N + p`.
    pub a: Vec<Vec<S>>,
    /// `b[b][n] = B^(b)_n`, `n < N + q`.
    pub b: Vec<Vec<S>>,
    /// `P_0 ... P_{N+1}`.
    pub p_values: Vec<S>,
    /// `P'_{N+1}(x)`.
    pub p_prime: S,
    /// `alpha_0 ... alpha_{N+1}`.
    pub alpha: Vec<S>,
    pub beta: Vec<S>,
}

/// Binary64 table.
pub fn eval_recursions(t: &BandedMatrix, x: f64, order: usize, ic: &InitialConditions) -> Result<PolynomialTable<f64>> {
    eval_recursions_in(t, &x, order, ic)
}

/// Table in any scalar type.
pub fn eval_recursions_in<S: Scalar>(t: &BandedMatrix, x: &S, order: usize, ic: &InitialConditions) -> Result<PolynomialTable<S>> {
    let (p, q) = (t.p(), t.q());
    ic.check_shape(p, q)?;
    if let Some(max) = t.max_order() {
        if order > max {
            return Err(Error::SizeExceeded { requested: order, needed: order + 1, available: max + 1 });
        }
    }
    let rows = order + p + q + 1;
    let band = BandCache::<S>::new(t, rows);
    let a = recursion_a(&band, x, order + p, &ic.nu)?;
    let b = recursion_b(&band, x, order + q, &ic.xi)?;
    let p_values = leading_minors(&band, x, order + 1);
    let (_, p_prime) = char_poly_in(&band, x, order);
    let alpha = (0..=order + 1).map(|n| alpha(&band, n)).collect();
    let beta = (0..=order + 1).map(|n| beta(&band, n)).collect();
    Ok(PolynomialTable { x: x.clone(), order, a, b, p_values, p_prime, alpha, beta })
}

/// `P_0 ... P_n` from the pivots of non-pivoted elimination of `x I - T`;
/// a vanishing pivot falls back to independent pivoted determinants.
pub fn leading_minors<S: Scalar>(band: &BandCache<S>, x: &S, n: usize) -> Vec<S> {
    let (p, q) = (band.p(), band.q());
    let mut out = vec![S::one()];
    // Rows kept as dense windows [i - p, i + q] of the partially eliminated matrix.
    let width = p + q + 1;
    let mut w: Vec<Vec<S>> = Vec::with_capacity(n);
    let mut acc = S::one();
    for i in 0..n {
        let mut row: Vec<S> = (0..width)
            .map(|k| {
                let m = i as isize + k as isize - p as isize;
                if m < 0 {
                    S::zero()
                } else {
                    let t = band.get(i, m as usize).clone();
                    if m as usize == i {
                        x.clone() - t
                    } else {
                        -t
                    }
                }
            })
            .collect();
        // Eliminate columns i-p .. i-1 using earlier pivot rows.
        let mut broken = false;
        for j in i.saturating_sub(p)..i {
            let piv = w[j][p].clone();
            if piv.is_zero() {
                broken = true;
                break;
            }
            let kj = j + p - i;
            let f = row[kj].clone() / piv;
            if f.is_zero() {
                continue;
            }
            for k in kj..width {
                // Column of row[k] is i - p + k; in row j that is index k + i - j.
                let idx = k + i - j;
                if idx < width {
                    let v = w[j][idx].clone();
                    row[k] = row[k].clone() - f.clone() * v;
                }
            }
        }
        if broken {
            for m in i + 1..=n {
                let lu = char_lu(band, x, m);
                out.push(lu.det().v);
            }
            return out;
        }
        acc = acc * row[p].clone();
        out.push(acc.clone());
        w.push(row);
    }
    out
}

impl<S: Scalar> PolynomialTable<S> {
    fn dims(&self) -> (usize, usize) {
        (self.a.len(), self.b.len())
    }

    /// `(Q_{n,N}, R_{n,N})` at the table's point and order.
    pub fn determinantal_qr(&self, n: usize) -> Result<(S, S)> {
        let (p, q) = self.dims();
        let order = self.order;
        if n > order {
            return Err(Error::IndexOutOfTable { index: n, max: order });
        }
        let fixed_a: Vec<Vec<S>> = (1..p).map(|r| (0..p).map(|a| self.a[a][order + r].clone()).collect()).collect();
        let fixed_b: Vec<Vec<S>> = (1..q).map(|r| (0..q).map(|b| self.b[b][order + r].clone()).collect()).collect();
        let ca = first_row_cofactors(&fixed_a);
        let cb = first_row_cofactors(&fixed_b);
        let qv = (0..p).fold(S::zero(), |s, a| s + self.a[a][n].clone() * ca[a].clone());
        let rv = (0..q).fold(S::zero(), |s, b| s + self.b[b][n].clone() * cb[b].clone());
        Ok((qv, rv))
    }

    /// `det A_N` (rows `a`, columns `N .. N+p-1`).
    pub fn det_a_block(&self) -> S {
        let (p, _) = self.dims();
        let m = (0..p).map(|a| (0..p).map(|c| self.a[a][self.order + c].clone()).collect()).collect();
        det_small(m)
    }

    /// `det B_N` (rows `N .. N+q-1`, columns `b`).
    pub fn det_b_block(&self) -> S {
        let (_, q) = self.dims();
        let m = (0..q).map(|r| (0..q).map(|b| self.b[b][self.order + r].clone()).collect()).collect();
        det_small(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banded::Mode;
    use crate::scalar::{with_precision, Mp};

    fn two_by_two() -> BandedMatrix {
        BandedMatrix::from_rows(1, 1, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]], Mode::Stochastic, 1e-12).unwrap()
    }

    #[test]
    fn hand_values_of_two_by_two() {
        let t = two_by_two();
        let ic = InitialConditions::identity(1, 1);
        let x = 0.3;
        let tab = eval_recursions(&t, x, 1, &ic).unwrap();
        assert_eq!(tab.b[0][0], 1.0);
        assert!((tab.b[0][1] - (3.0 * x - 2.0)).abs() < 1e-15);
        assert!((tab.p_values[1] - (x - 2.0 / 3.0)).abs() < 1e-15);
        assert!((tab.p_values[2] - (x * x - 4.0 / 3.0 * x + 1.0 / 3.0)).abs() < 1e-15);
        let (v, d) = char_poly(&t, 1.0, 1).unwrap();
        assert!(v.abs() < 1e-15);
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_determinants() {
        let t = two_by_two();
        let tab = eval_recursions(&t, 0.4, 1, &InitialConditions::identity(1, 1)).unwrap();
        let (qv, rv) = tab.determinantal_qr(1).unwrap();
        assert_eq!(qv, tab.a[0][1]);
        assert_eq!(rv, tab.b[0][1]);
        assert_eq!(tab.determinantal_qr(2).unwrap_err().name(), "IndexOutOfTable");
        let eye: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(det_small(eye), 1.0);
        let c = first_row_cofactors(&[vec![0.0, 1.0]]);
        assert_eq!(c, vec![1.0, -0.0]);
    }

    #[test]
    fn pivoted_lu_matches_minors_in_multiprecision() {
        let t = BandedMatrix::from_rows(
            2,
            1,
            &[
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.25, 0.5, 0.25, 0.0],
                vec![0.2, 0.3, 0.3, 0.2],
                vec![0.0, 0.4, 0.4, 0.2],
            ],
            Mode::Stochastic,
            1e-12,
        )
        .unwrap();
        with_precision(256, || {
            let band = BandCache::<Mp>::new(&t, 8);
            let x = Mp::from_f64(0.37);
            let minors = leading_minors(&band, &x, 4);
            for n in 1..=4 {
                let (v, _) = char_poly_in(&band, &x, n - 1);
                assert!((v - minors[n].clone()).abs().to_f64() < 1e-60);
            }
        });
    }

    #[test]
    fn initial_conditions_are_validated() {
        assert!(InitialConditions::new(vec![vec![1.0, 0.5], vec![0.0, 1.0]], vec![vec![1.0]]).is_err());
        let ic = InitialConditions::new(vec![vec![1.0, 0.0], vec![0.5, 1.0]], vec![vec![1.0]]).unwrap();
        assert_eq!(unit_lower_inverse(&ic.nu), vec![vec![1.0, 0.0], vec![-0.5, 1.0]]);
        assert_eq!(ic.mass_total(), vec![vec![1.0, -0.5]]);
    }
}
