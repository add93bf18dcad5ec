//! Banded (sub)stochastic matrices, their truncations and the JSON matrix spec.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square matrix used for truncations and oracles.
pub type DenseMatrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stochastic,
    Substochastic,
}

/// Periodic row rule of a semi-infinite matrix: row `r` of the period lists
/// the entries at offsets `-p..=q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tail {
    pub period: usize,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// `diagonals[d + p][n] = T[n, n + d]`, zero where the column falls outside.
    Finite { size: usize, diagonals: Vec<Vec<f64>> },
    /// Head rows in compact form (columns `max(0, n - p)..=n + q`), then the tail.
    Generator { head: Vec<Vec<f64>>, tail: Tail },
}

/// Banded matrix with `p` subdiagonals and `q` superdiagonals, every in-band
/// entry strictly positive. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    p: usize,
    q: usize,
    mode: Mode,
    storage: Storage,
}

impl BandedMatrix {
    /// Builds a finite matrix from its diagonals, listed for offsets
    /// `-p..=q`. Diagonal `d` holds `T[n, n + d]` for increasing `n` and has
    /// `size - |d|` entries.
    pub fn new_banded(p: usize, q: usize, diagonals: Vec<Vec<f64>>, mode: Mode, tol_row: f64) -> Result<Self> {
        check_bandwidths(p, q)?;
        if diagonals.len() != p + q + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} diagonals, got {}",
                p + q + 1,
                diagonals.len()
            )));
        }
        let size = diagonals[p].len();
        let mut stored = vec![vec![0.0; size]; p + q + 1];
        for (idx, diag) in diagonals.iter().enumerate() {
            let d = idx as isize - p as isize;
            let expected = size.saturating_sub(d.unsigned_abs());
            if diag.len() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "diagonal at offset {d} has {} entries, expected {expected}",
                    diag.len()
                )));
            }
            for (i, &v) in diag.iter().enumerate() {
                let row = if d < 0 { i + d.unsigned_abs() } else { i };
                stored[idx][row] = v;
            }
        }
        let m = BandedMatrix { p, q, mode, storage: Storage::Finite { size, diagonals: stored } };
        m.validate(tol_row)?;
        Ok(m)
    }

    /// Builds a finite matrix from rows, either dense (every row as long as
    /// the matrix) or compact (row `n` lists columns `max(0, n-p)..=min(size-1, n+q)`).
    pub fn from_rows(p: usize, q: usize, rows: &[Vec<f64>], mode: Mode, tol_row: f64) -> Result<Self> {
        check_bandwidths(p, q)?;
        let size = rows.len();
        if size == 0 {
            return Err(Error::DimensionMismatch("matrix has no rows".into()));
        }
        let dense = rows.iter().all(|r| r.len() == size);
        let mut diagonals = vec![vec![0.0; size]; p + q + 1];
        for (n, row) in rows.iter().enumerate() {
            let lo = n.saturating_sub(p);
            let hi = (n + q).min(size - 1);
            if dense {
                for (m, &v) in row.iter().enumerate() {
                    if (m < lo || m > hi) && v != 0.0 {
                        return Err(Error::DimensionMismatch(format!(
                            "entry T[{n},{m}] = {v} lies outside the band (p={p}, q={q})"
                        )));
                    }
                }
            } else if row.len() != hi - lo + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "row {n} has {} entries, expected {} in compact form",
                    row.len(),
                    hi - lo + 1
                )));
            }
            for m in lo..=hi {
                let v = if dense { row[m] } else { row[m - lo] };
                diagonals[m + p - n][n] = v;
            }
        }
        let m = BandedMatrix { p, q, mode, storage: Storage::Finite { size, diagonals } };
        m.validate(tol_row)?;
        Ok(m)
    }

    /// Semi-infinite matrix: explicit compact head rows followed by a
    /// periodic tail. The head must cover the first `p` rows.
    pub fn generator(p: usize, q: usize, head: Vec<Vec<f64>>, tail: Tail, mode: Mode, tol_row: f64) -> Result<Self> {
        check_bandwidths(p, q)?;
        if head.len() < p {
            return Err(Error::DimensionMismatch(format!("generator head needs at least {p} rows, got {}", head.len())));
        }
        for (n, row) in head.iter().enumerate() {
            let expected = n.min(p) + q + 1;
            if row.len() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "head row {n} has {} entries, expected {expected}",
                    row.len()
                )));
            }
        }
        if tail.period == 0 || tail.coeffs.len() != tail.period * (p + q + 1) {
            return Err(Error::DimensionMismatch(format!(
                "tail needs period * (p + q + 1) = {} coefficients, got {}",
                tail.period * (p + q + 1),
                tail.coeffs.len()
            )));
        }
        let m = BandedMatrix { p, q, mode, storage: Storage::Generator { head, tail } };
        m.validate(tol_row)?;
        Ok(m)
    }

    fn validate(&self, tol_row: f64) -> Result<()> {
        let rows = match &self.storage {
            Storage::Finite { size, .. } => *size,
            Storage::Generator { head, tail } => head.len() + tail.period,
        };
        for n in 0..rows {
            let (lo, vals) = self.row(n);
            let mut sum = 0.0;
            for (i, &v) in vals.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositiveInBandEntry { row: n, col: lo + i, value: v });
                }
                sum += v;
            }
            let bad = match self.mode {
                Mode::Stochastic => (sum - 1.0).abs() > tol_row,
                Mode::Substochastic => sum > 1.0 + tol_row,
            };
            if bad {
                return Err(Error::RowSumViolation { row: n, sum, tol: tol_row });
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of rows, `None` for a generator.
    pub fn size(&self) -> Option<usize> {
        match &self.storage {
            Storage::Finite { size, .. } => Some(*size),
            Storage::Generator { .. } => None,
        }
    }

    pub fn is_generator(&self) -> bool {
        matches!(self.storage, Storage::Generator { .. })
    }

    /// Largest truncation order available.
    pub fn max_order(&self) -> Option<usize> {
        self.size().map(|s| s - 1)
    }

    /// `T[n, m]`; zero outside the band or the matrix.
    pub fn entry(&self, n: usize, m: usize) -> f64 {
        if m + self.p < n || m > n + self.q {
            return 0.0;
        }
        match &self.storage {
            Storage::Finite { size, diagonals } => {
                if n >= *size || m >= *size {
                    0.0
                } else {
                    diagonals[m + self.p - n][n]
                }
            }
            Storage::Generator { head, tail } => {
                if n < head.len() {
                    head[n][m - n.saturating_sub(self.p)]
                } else {
                    let r = (n - head.len()) % tail.period;
                    tail.coeffs[r * (self.p + self.q + 1) + (m + self.p - n)]
                }
            }
        }
    }

    /// First column and in-band entries of row `n`.
    pub fn row(&self, n: usize) -> (usize, Vec<f64>) {
        let lo = n.saturating_sub(self.p);
        let hi = match self.size() {
            Some(s) => (n + self.q).min(s - 1),
            None => n + self.q,
        };
        (lo, (lo..=hi).map(|m| self.entry(n, m)).collect())
    }

    fn check_order(&self, order: usize) -> Result<()> {
        match self.size() {
            Some(s) if order + 1 > s => Err(Error::SizeExceeded { requested: order, needed: order + 1, available: s }),
            _ => Ok(()),
        }
    }

    /// Leading `(N+1) x (N+1)` block `T^[N]`.
    pub fn truncate(&self, order: usize) -> Result<DenseMatrix> {
        self.check_order(order)?;
        let n1 = order + 1;
        let mut out = DenseMatrix::zeros(n1, n1);
        for n in 0..n1 {
            let lo = n.saturating_sub(self.p);
            let hi = (n + self.q).min(order);
            for m in lo..=hi {
                out[(n, m)] = self.entry(n, m);
            }
        }
        Ok(out)
    }

    /// Leading block as a finite banded matrix (substochastic unless the
    /// block is the whole finite matrix).
    pub fn truncated(&self, order: usize) -> Result<BandedMatrix> {
        self.check_order(order)?;
        if self.size() == Some(order + 1) {
            return Ok(self.clone());
        }
        let n1 = order + 1;
        let mut diagonals = vec![vec![0.0; n1]; self.p + self.q + 1];
        for n in 0..n1 {
            for m in n.saturating_sub(self.p)..=(n + self.q).min(order) {
                diagonals[m + self.p - n][n] = self.entry(n, m);
            }
        }
        Ok(BandedMatrix { p: self.p, q: self.q, mode: Mode::Substochastic, storage: Storage::Finite { size: n1, diagonals } })
    }

    /// Stochastic finite matrix of order `N` whose last rows keep the mass
    /// that would leave the block on their diagonal (holding at the wall).
    pub fn reflecting_truncation(&self, order: usize) -> Result<BandedMatrix> {
        let mut t = self.truncated(order)?;
        if let Storage::Finite { diagonals, .. } = &mut t.storage {
            for n in 0..=order {
                let lost: f64 = (order + 1..=n + self.q).map(|m| self.entry(n, m)).sum();
                diagonals[self.p][n] += lost;
            }
        }
        t.mode = Mode::Stochastic;
        Ok(t)
    }

    /// `T^[len-1] v` for a finite vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if let Some(s) = self.size() {
            if v.len() != s {
                return Err(Error::DimensionMismatch(format!("vector of length {} against {s} rows", v.len())));
            }
        }
        if v.is_empty() {
            return Err(Error::DimensionMismatch("empty vector".into()));
        }
        let last = v.len() - 1;
        Ok((0..v.len())
            .map(|n| {
                (n.saturating_sub(self.p)..=(n + self.q).min(last))
                    .map(|m| self.entry(n, m) * v[m])
                    .sum()
            })
            .collect())
    }

    /// Row sums of the truncation of order `N`.
    pub fn row_sums(&self, order: usize) -> Result<Vec<f64>> {
        self.matvec(&vec![1.0; order + 1]).or_else(|_| {
            let t = self.truncated(order)?;
            t.matvec(&vec![1.0; order + 1])
        })
    }

    /// Parses the JSON matrix spec.
    pub fn from_json(text: &str, tol_row: f64) -> Result<Self> {
        let spec: MatrixSpec = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        spec.build(tol_row)
    }

    /// Spec describing this matrix (compact rows for finite matrices).
    pub fn to_spec(&self) -> MatrixSpec {
        match &self.storage {
            Storage::Finite { size, .. } => MatrixSpec {
                p: Some(self.p),
                q: Some(self.q),
                mode: Some(self.mode),
                rows: Some((0..*size).map(|n| self.row(n).1).collect()),
                head: None,
                tail: None,
            },
            Storage::Generator { head, tail } => MatrixSpec {
                p: Some(self.p),
                q: Some(self.q),
                mode: Some(self.mode),
                rows: None,
                head: Some(head.clone()),
                tail: Some(tail.clone()),
            },
        }
    }
}

fn check_bandwidths(p: usize, q: usize) -> Result<()> {
    if p == 0 || q == 0 {
        return Err(Error::DimensionMismatch(format!("bandwidths must be at least 1, got p={p}, q={q}")));
    }
    Ok(())
}

/// JSON form of a matrix: either `rows` (finite) or `head` + `tail` (generator).
/// Bandwidths are inferred when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<Tail>,
}

impl MatrixSpec {
    pub fn build(&self, tol_row: f64) -> Result<BandedMatrix> {
        let mode = self.mode.unwrap_or(Mode::Stochastic);
        match (&self.rows, &self.head, &self.tail) {
            (Some(rows), None, None) => {
                let (p, q) = match (self.p, self.q) {
                    (Some(p), Some(q)) => (p, q),
                    _ => {
                        let (ip, iq) = infer_dense_band(rows)?;
                        (self.p.unwrap_or(ip), self.q.unwrap_or(iq))
                    }
                };
                BandedMatrix::from_rows(p, q, rows, mode, tol_row)
            }
            (None, Some(head), Some(tail)) => {
                let q = match self.q {
                    Some(q) => q,
                    None => head
                        .first()
                        .map(|r| r.len().saturating_sub(1))
                        .ok_or_else(|| Error::InvalidInput("generator head is empty".into()))?,
                };
                let p = match self.p {
                    Some(p) => p,
                    None => {
                        let width = tail.coeffs.len() / tail.period.max(1);
                        width
                            .checked_sub(q + 1)
                            .ok_or_else(|| Error::InvalidInput("tail row narrower than the head".into()))?
                    }
                };
                BandedMatrix::generator(p, q, head.clone(), tail.clone(), mode, tol_row)
            }
            _ => Err(Error::InvalidInput("matrix spec needs either `rows` or both `head` and `tail`".into())),
        }
    }
}

fn infer_dense_band(rows: &[Vec<f64>]) -> Result<(usize, usize)> {
    let size = rows.len();
    if size == 0 || rows.iter().any(|r| r.len() != size) {
        return Err(Error::InvalidInput("bandwidths can only be inferred from dense square rows".into()));
    }
    let (mut p, mut q) = (0, 0);
    for (n, row) in rows.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            if v != 0.0 {
                p = p.max(n.saturating_sub(m));
                q = q.max(m.saturating_sub(n));
            }
        }
    }
    Ok((p, q))
}

/// Dense matrix-vector product.
pub fn matvec_dense(a: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if a.ncols() != v.len() {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix against vector of length {}", a.nrows(), a.ncols(), v.len())));
    }
    Ok((0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect())
}

/// `A^k` by repeated squaring; `A^0` is the identity.
pub fn matrix_power(a: &DenseMatrix, k: u32) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("matrix power of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    let mut result = DenseMatrix::identity(a.nrows(), a.ncols());
    let mut base = a.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    Ok(result)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
