//! Positive bidiagonal factorization `T = L_1 ... L_p U_q ... U_1` by
//! adjacent-row (Neville) elimination, its unit-diagonal normalization and
//! the renormalization into stochastic bidiagonal factors.

use serde::{Deserialize, Serialize};

use crate::banded::{BandedMatrix, DenseMatrix};
use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Lower,
    Upper,
}

/// Lower factors carry `(r, r-1)` in `offdiag[r-1]`; upper factors carry
/// `(r, r+1)` in `offdiag[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidiagonalFactor {
    pub kind: FactorKind,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl BidiagonalFactor {
    pub fn identity(kind: FactorKind, n: usize) -> Self {
        BidiagonalFactor { kind, diag: vec![1.0; n], offdiag: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.size();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &d) in self.diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        for (i, &o) in self.offdiag.iter().enumerate() {
            match self.kind {
                FactorKind::Lower => m[(i + 1, i)] = o,
                FactorKind::Upper => m[(i, i + 1)] = o,
            }
        }
        m
    }

    /// Row sums on the materialized block.
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|r| {
                self.diag[r]
                    + match self.kind {
                        FactorKind::Lower if r > 0 => self.offdiag[r - 1],
                        FactorKind::Upper if r + 1 < n => self.offdiag[r],
                        _ => 0.0,
                    }
            })
            .collect()
    }

    /// `a * F * b` for diagonal `a`, `b` given as vectors.
    fn scaled(&self, left: &[f64], right: &[f64]) -> Self {
        let diag = (0..self.size()).map(|r| left[r] * self.diag[r] * right[r]).collect();
        let offdiag = (0..self.offdiag.len())
            .map(|i| match self.kind {
                FactorKind::Lower => left[i + 1] * self.offdiag[i] * right[i],
                FactorKind::Upper => left[i] * self.offdiag[i] * right[i + 1],
            })
            .collect();
        BidiagonalFactor { kind: self.kind, diag, offdiag }
    }

    /// `F * v` restricted to the block.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|r| {
                self.diag[r] * v[r]
                    + match self.kind {
                        FactorKind::Lower if r > 0 => self.offdiag[r - 1] * v[r - 1],
                        FactorKind::Upper if r + 1 < n => self.offdiag[r] * v[r + 1],
                        _ => 0.0,
                    }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Raw,
    Normalized,
    Stochastic,
}

/// Ordered factors `L_1 ... L_p` and `U_q ... U_1` of a materialized block.
///
/// `delta` is the middle diagonal `Delta` in normalized form and the residual
/// `delta_{q+p}` (leftmost) in stochastic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationChain {
    pub form: Form,
    pub lowers: Vec<BidiagonalFactor>,
    pub uppers: Vec<BidiagonalFactor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    pub depth: usize,
    /// Trailing rows whose values depend on rows beyond the block.
    pub provisional: usize,
}

impl FactorizationChain {
    pub fn p(&self) -> usize {
        self.lowers.len()
    }

    pub fn q(&self) -> usize {
        self.uppers.len()
    }

    /// Rows whose entries are exact for the underlying (possibly infinite) matrix.
    pub fn settled(&self) -> usize {
        self.depth - self.provisional
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let chain: FactorizationChain = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let n = chain.depth;
        let ok = chain
            .lowers
            .iter()
            .chain(&chain.uppers)
            .all(|f| f.diag.len() == n && f.offdiag.len() == n.saturating_sub(1))
            && chain.delta.as_ref().map_or(true, |d| d.len() == n)
            && chain.lowers.iter().all(|f| f.kind == FactorKind::Lower)
            && chain.uppers.iter().all(|f| f.kind == FactorKind::Upper);
        if !ok || chain.provisional > n {
            return Err(Error::DimensionMismatch("factor sizes or kinds inconsistent with depth".into()));
        }
        Ok(chain)
    }
}

/// Raw factorization of the leading `depth x depth` block. Lower factors have
/// unit diagonal; the final pivots sit on the diagonal of the leftmost upper
/// factor `U_q`.
///
/// Because lower factors are lower triangular and upper factors upper
/// triangular, the factors of the block are the leading blocks of the factors
/// of the whole matrix. Offdiagonal entries whose defining band entry lies at
/// a negative index are zero (Neville's choice).
pub fn compute_pbf(t: &BandedMatrix, depth: usize, tol: &Tolerances) -> Result<FactorizationChain> {
    let (p, q) = (t.p(), t.q());
    if depth < p + q {
        return Err(Error::DepthTooSmall { depth, min: p + q });
    }
    let mut w = t.truncate(depth - 1)?;
    let d = depth;
    let scale = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let pivot_tol = tol.pivot * scale.max(1.0);
    let mut lowers = Vec::with_capacity(p);
    for i in 0..p {
        let band = p - i;
        let mut off = vec![0.0; d - 1];
        for r in band..d {
            let col = r - band;
            let pivot = w[(r - 1, col)];
            if !(pivot > pivot_tol) {
                return Err(Error::PbfDoesNotExist(format!("lower pass {}: pivot {pivot:e} at ({}, {col})", i + 1, r - 1)));
            }
            let l = w[(r, col)] / pivot;
            if !(l > 0.0) {
                return Err(Error::PbfDoesNotExist(format!("lower pass {}: multiplier {l:e} at row {r}", i + 1)));
            }
            let hi = (r - 1 + q).min(d - 1);
            for c in col..=hi {
                let v = w[(r - 1, c)];
                w[(r, c)] -= l * v;
            }
            if w[(r, col)].abs() > tol.fill * scale.max(1.0) {
                return Err(Error::PbfDoesNotExist(format!("fill-in {:e} at ({r}, {col})", w[(r, col)])));
            }
            w[(r, col)] = 0.0;
            off[r - 1] = l;
        }
        lowers.push(BidiagonalFactor { kind: FactorKind::Lower, diag: vec![1.0; d], offdiag: off });
    }
    let mut peeled = Vec::with_capacity(q);
    for j in 0..q {
        let band = q - j;
        let mut off = vec![0.0; d - 1];
        for c in band..d {
            let row = c - band;
            let pivot = w[(row, c - 1)];
            if !(pivot > pivot_tol) {
                return Err(Error::PbfDoesNotExist(format!("upper pass {}: pivot {pivot:e} at ({row}, {})", j + 1, c - 1)));
            }
            let u = w[(row, c)] / pivot;
            if !(u > 0.0) {
                return Err(Error::PbfDoesNotExist(format!("upper pass {}: multiplier {u:e} at column {c}", j + 1)));
            }
            for r in row..c {
                let v = w[(r, c - 1)];
                w[(r, c)] -= u * v;
            }
            if w[(row, c)].abs() > tol.fill * scale.max(1.0) {
                return Err(Error::PbfDoesNotExist(format!("fill-in {:e} at ({row}, {c})", w[(row, c)])));
            }
            w[(row, c)] = 0.0;
            off[c - 1] = u;
        }
        peeled.push(BidiagonalFactor { kind: FactorKind::Upper, diag: vec![1.0; d], offdiag: off });
    }
    let pivots: Vec<f64> = (0..d).map(|r| w[(r, r)]).collect();
    if let Some((r, &v)) = pivots.iter().enumerate().find(|(_, &v)| !(v > pivot_tol)) {
        return Err(Error::PbfDoesNotExist(format!("diagonal pivot {v:e} at row {r}")));
    }
    // Peeling produced U_1 first; the written order is U_q ... U_1.
    peeled.reverse();
    let ones = vec![1.0; d];
    peeled[0] = peeled[0].scaled(&pivots, &ones);
    let provisional = if t.size() == Some(depth) { 0 } else { p + q };
    Ok(FactorizationChain { form: Form::Raw, lowers, uppers: peeled, delta: None, depth, provisional })
}

/// Unit-diagonal factors and the aggregated diagonal `Delta`, with
/// `T = L_1 ... L_p Delta U_q ... U_1`.
pub fn normalize_chain(chain: &FactorizationChain) -> Result<FactorizationChain> {
    if chain.form != Form::Raw {
        return Err(Error::NotRawForm { found: format!("{:?}", chain.form).to_lowercase() });
    }
    let n = chain.depth;
    // L-script_i = L~_i Delta_i; moving Delta_1 ... Delta_{i-1} to the right
    // conjugates L~_i.
    let mut acc = vec![1.0; n];
    let mut lowers = Vec::with_capacity(chain.p());
    for f in &chain.lowers {
        let off = (0..n.saturating_sub(1)).map(|i| acc[i + 1] * f.offdiag[i] / f.diag[i] / acc[i]).collect();
        lowers.push(BidiagonalFactor { kind: FactorKind::Lower, diag: vec![1.0; n], offdiag: off });
        for r in 0..n {
            acc[r] *= f.diag[r];
        }
    }
    let delta_lower = acc;
    // U-script_j = Nabla_j U~_j, walked from U_1 outward.
    let mut acc = vec![1.0; n];
    let mut uppers = vec![BidiagonalFactor::identity(FactorKind::Upper, n); chain.q()];
    for (slot, f) in chain.uppers.iter().enumerate().rev() {
        let off = (0..n.saturating_sub(1)).map(|i| f.offdiag[i] / f.diag[i] * acc[i + 1] / acc[i]).collect();
        uppers[slot] = BidiagonalFactor { kind: FactorKind::Upper, diag: vec![1.0; n], offdiag: off };
        for r in 0..n {
            acc[r] *= f.diag[r];
        }
    }
    let delta = (0..n).map(|r| delta_lower[r] * acc[r]).collect();
    Ok(FactorizationChain { form: Form::Normalized, lowers, uppers, delta: Some(delta), depth: n, provisional: chain.provisional })
}

/// Renormalizes into stochastic bidiagonal factors through the positive
/// diagonals `delta_j = diag(U_j delta_{j-1} e)`, `delta_{q+i} = diag(L_{p+1-i} delta_{q+i-1} e)`.
///
/// The residual `delta_{q+p}` is returned in `delta`; when the matrix is
/// declared stochastic it must equal the identity on the settled rows.
pub fn stochastic_normalize(chain: &FactorizationChain, t_is_stochastic: bool, tol: &Tolerances) -> Result<FactorizationChain> {
    let raw = match chain.form {
        Form::Raw => chain.clone(),
        Form::Normalized => absorb_delta(chain),
        Form::Stochastic => return Ok(chain.clone()),
    };
    let n = raw.depth;
    let (p, q) = (raw.p(), raw.q());
    let mut deltas: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for j in 1..=q {
        let f = &raw.uppers[q - j];
        deltas.push(f.apply(&deltas[j - 1]));
    }
    for i in 1..=p {
        let f = &raw.lowers[p - i];
        deltas.push(f.apply(&deltas[q + i - 1]));
    }
    for (j, d) in deltas.iter().enumerate() {
        if let Some(r) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::PbfDoesNotExist(format!("delta_{j} has non-positive entry {} at row {r}", d[r])));
        }
    }
    let inv = |v: &[f64]| v.iter().map(|x| 1.0 / x).collect::<Vec<_>>();
    let uppers = (1..=q)
        .map(|j| raw.uppers[q - j].scaled(&inv(&deltas[j]), &deltas[j - 1]))
        .rev()
        .collect::<Vec<_>>();
    let lowers = (1..=p)
        .map(|i| raw.lowers[i - 1].scaled(&inv(&deltas[q + p - i + 1]), &deltas[q + p - i]))
        .collect::<Vec<_>>();
    let residual = deltas[q + p].clone();
    if t_is_stochastic {
        let settled = n - raw.provisional;
        let deviation = residual[..settled].iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        if deviation > tol.row * (p + q) as f64 {
            return Err(Error::ResidualNotIdentity { deviation });
        }
    }
    Ok(FactorizationChain { form: Form::Stochastic, lowers, uppers, delta: Some(residual), depth: n, provisional: raw.provisional })
}

/// Folds `Delta` of a normalized chain into `U_q`, giving an equivalent raw chain.
fn absorb_delta(chain: &FactorizationChain) -> FactorizationChain {
    let mut raw = chain.clone();
    if let Some(delta) = &chain.delta {
        let ones = vec![1.0; chain.depth];
        if raw.uppers.is_empty() {
            let last = raw.lowers.len() - 1;
            raw.lowers[last] = raw.lowers[last].scaled(&ones, delta);
        } else {
            raw.uppers[0] = raw.uppers[0].scaled(delta, &ones);
        }
    }
    raw.form = Form::Raw;
    raw.delta = None;
    raw
}

/// Ordered product of the factors on the materialized block.
pub fn reconstruct(chain: &FactorizationChain) -> DenseMatrix {
    let n = chain.depth;
    let mut m = DenseMatrix::identity(n, n);
    if chain.form == Form::Stochastic {
        if let Some(d) = &chain.delta {
            m = DenseMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
        }
    }
    for f in &chain.lowers {
        m = mul_bidiagonal(&m, f);
    }
    if chain.form == Form::Normalized {
        if let Some(d) = &chain.delta {
            for c in 0..n {
                for r in 0..n {
                    m[(r, c)] *= d[c];
                }
            }
        }
    }
    for f in &chain.uppers {
        m = mul_bidiagonal(&m, f);
    }
    m
}

fn mul_bidiagonal(m: &DenseMatrix, f: &BidiagonalFactor) -> DenseMatrix {
    let n = f.size();
    let mut out = DenseMatrix::zeros(m.nrows(), n);
    for c in 0..n {
        for r in 0..m.nrows() {
            let mut v = m[(r, c)] * f.diag[c];
            match f.kind {
                FactorKind::Lower if c + 1 < n => v += m[(r, c + 1)] * f.offdiag[c],
                FactorKind::Upper if c > 0 => v += m[(r, c - 1)] * f.offdiag[c - 1],
                _ => {}
            }
            out[(r, c)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banded::{max_abs_diff, Mode};

    fn two_by_two() -> BandedMatrix {
        BandedMatrix::from_rows(1, 1, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]], Mode::Stochastic, 1e-12).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn hand_factorization_of_two_by_two() {
        let tol = Tolerances::default();
        let raw = compute_pbf(&two_by_two(), 2, &tol).unwrap();
        assert!(close(&raw.lowers[0].offdiag, &[0.5]));
        assert!(close(&raw.uppers[0].diag, &[2.0 / 3.0, 0.5]));
        assert!(close(&raw.uppers[0].offdiag, &[1.0 / 3.0]));

        let norm = normalize_chain(&raw).unwrap();
        assert!(close(norm.delta.as_ref().unwrap(), &[2.0 / 3.0, 0.5]));
        assert!(close(&norm.uppers[0].offdiag, &[0.5]));
        assert!(close(&norm.lowers[0].offdiag, &[0.5]));

        let st = stochastic_normalize(&raw, true, &tol).unwrap();
        assert!(close(&st.uppers[0].diag, &[2.0 / 3.0, 1.0]));
        assert!(close(&st.uppers[0].offdiag, &[1.0 / 3.0]));
        assert!(close(&st.lowers[0].diag, &[1.0, 0.5]));
        assert!(close(&st.lowers[0].offdiag, &[0.5]));
        assert!(close(st.delta.as_ref().unwrap(), &[1.0, 1.0]));
        for c in [&raw, &norm, &st] {
            assert!(max_abs_diff(&reconstruct(c), &two_by_two().truncate(1).unwrap()) < 1e-15);
        }
    }

    #[test]
    fn substochastic_block_keeps_a_residual() {
        let tol = Tolerances::default();
        let third = 1.0 / 3.0;
        let t = BandedMatrix::from_rows(1, 1, &[vec![2.0 * third, third], vec![third, third]], Mode::Substochastic, 1e-12).unwrap();
        let raw = compute_pbf(&t, 2, &tol).unwrap();
        let st = stochastic_normalize(&raw, false, &tol).unwrap();
        let residual = st.delta.as_ref().unwrap();
        assert!((residual[1] - 1.0).abs() > 0.1);
        for f in st.lowers.iter().chain(&st.uppers) {
            for s in f.row_sums() {
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
        assert!(max_abs_diff(&reconstruct(&st), &t.truncate(1).unwrap()) < 1e-15);
        assert_eq!(stochastic_normalize(&raw, true, &tol).unwrap_err().name(), "ResidualNotIdentity");
    }

    #[test]
    fn symmetric_walk_has_no_factorization() {
        let g = BandedMatrix::from_json(r#"{"head":[[0.6666666666666666,0.3333333333333333]],"tail":{"period":1,"coeffs":[0.3333333333333333,0.3333333333333333,0.33333333333333337]}}"#, 1e-12)
            .unwrap();
        assert_eq!(compute_pbf(&g, 10, &Tolerances::default()).unwrap_err().name(), "PbfDoesNotExist");
    }

    #[test]
    fn normalize_requires_raw_form() {
        let tol = Tolerances::default();
        let raw = compute_pbf(&two_by_two(), 2, &tol).unwrap();
        let norm = normalize_chain(&raw).unwrap();
        assert_eq!(normalize_chain(&norm).unwrap_err().name(), "NotRawForm");
        let st = stochastic_normalize(&norm, true, &tol).unwrap();
        assert!(max_abs_diff(&reconstruct(&st), &reconstruct(&raw)) < 1e-15);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let raw = compute_pbf(&two_by_two(), 2, &Tolerances::default()).unwrap();
        let back = FactorizationChain::from_json(&raw.to_json()).unwrap();
        assert_eq!(back, raw);
    }

    #[test]
    fn depth_must_cover_the_band() {
        assert_eq!(compute_pbf(&two_by_two(), 1, &Tolerances::default()).unwrap_err().name(), "DepthTooSmall");
    }
}
