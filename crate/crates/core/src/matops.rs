//! Small dense linear-algebra kernels.
//!
//! Everything here works on a row-major [`Matrix`] of `f64` and is
//! deterministic: no randomized algorithms, so reruns are bit-identical.
//! Dimensions in this crate are tiny (state dimension times mode count, or
//! its square for Kronecker lifts), so the routines favour robustness over
//! asymptotic speed.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;
const HQR_MAX_ITERS: usize = 60;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Matrix::zeros(u.len(), v.len());
        for (i, &ui) in u.iter().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                m[(i, j)] = ui * vj;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product. Panics on a length mismatch; callers validate
    /// dimensions at construction time.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// In-place `self += s · u vᵀ`.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let su = s * ui;
            if su == 0.0 {
                continue;
            }
            for (j, &vj) in v.iter().enumerate() {
                self.data[i * self.cols + j] += su * vj;
            }
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Average with the transpose; removes rounding asymmetry from
    /// accumulated updates.
    pub fn symmetrize(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = max_abs_entry(self).max(f64::MIN_POSITIVE);
        let n = self.rows;
        (0..n).all(|i| {
            ((i + 1)..n).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= SYMMETRY_TOL * scale)
        })
    }

    fn require_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("matrix has non-finite entries"))
        }
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    fn require_symmetric(&self) -> Result<()> {
        self.require_square()?;
        self.require_finite()?;
        if self.is_symmetric() {
            Ok(())
        } else {
            Err(Error::invalid("matrix is not symmetric"))
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

/// Matrix entry as it may appear in JSON: a number or a decimal string.
#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Num(f64),
    Text(String),
}

impl Entry {
    fn value(self) -> std::result::Result<f64, String> {
        match self {
            Entry::Num(v) => Ok(v),
            Entry::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("bad matrix entry {s:?}: {e}")),
        }
    }
}

/// Parses a vector of reals that may be written as numbers or decimal strings.
pub(crate) fn deserialize_reals<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Entry>::deserialize(d)?
        .into_iter()
        .map(|e| e.value().map_err(serde::de::Error::custom))
        .collect()
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Entry>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(Entry::value).collect())
            .collect::<std::result::Result<Vec<Vec<f64>>, String>>()
            .map_err(serde::de::Error::custom)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Largest absolute entry (`‖M‖_∞` in the element-wise sense).
pub fn max_abs_entry(m: &Matrix) -> f64 {
    m.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest singular value, from the top eigenvalue of `MᵀM`.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    m.require_finite()?;
    let scale = max_abs_entry(m);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Rescale so that MᵀM neither overflows nor underflows.
    let scaled = m.scale(1.0 / scale);
    let gram = scaled.transpose().matmul(&scaled)?;
    let eig = jacobi_eigen(&gram, false).values;
    let top = eig.iter().cloned().fold(0.0_f64, f64::max);
    Ok(scale * top.max(0.0).sqrt())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &Matrix) -> Result<(f64, f64)> {
    let values = sym_eigenvalues(m)?;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    m.require_symmetric()?;
    let mut values = jacobi_eigen(m, false).values;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigen-decomposition of a symmetric matrix: `(values, vectors)` with
/// eigenvectors stored as columns.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    m.require_symmetric()?;
    let SymEigen { values, vectors } = jacobi_eigen(m, true);
    Ok((values, vectors.expect("vectors requested")))
}

struct SymEigen {
    values: Vec<f64>,
    vectors: Option<Matrix>,
}

/// Cyclic Jacobi rotations. Input assumed symmetric.
fn jacobi_eigen(m: &Matrix, want_vectors: bool) -> SymEigen {
    let n = m.rows;
    let mut a = m.clone();
    a.symmetrize();
    let mut v = want_vectors.then(|| Matrix::identity(n));

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = a[(i, j)] * a[(i, j)];
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off == 0.0 || off.sqrt() <= 1e-17 * total.sqrt() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Element already negligible next to both diagonal entries.
                let g = 100.0 * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    SymEigen {
        values: (0..n).map(|i| a[(i, i)]).collect(),
        vectors: v,
    }
}

/// Spectral radius: the largest modulus among the (possibly complex)
/// eigenvalues.
pub fn max_abs_eig(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Eigenvalues of a general real square matrix as `(re, im)` pairs.
///
/// Gaussian reduction to upper Hessenberg form followed by the shifted
/// double-step QR iteration.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    m.require_square()?;
    m.require_finite()?;
    let n = m.rows;
    // 1-based working copy; row/column 0 unused.
    let mut a = vec![vec![0.0_f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    to_hessenberg(&mut a, n);
    hessenberg_qr(&mut a, n)
}

fn to_hessenberg(a: &mut [Vec<f64>], n: usize) {
    for mm in 2..n {
        let mut x = 0.0_f64;
        let mut piv = mm;
        for j in mm..=n {
            if a[j][mm - 1].abs() > x.abs() {
                x = a[j][mm - 1];
                piv = j;
            }
        }
        if piv != mm {
            for j in (mm - 1)..=n {
                let tmp = a[piv][j];
                a[piv][j] = a[mm][j];
                a[mm][j] = tmp;
            }
            for row in a.iter_mut().skip(1) {
                row.swap(piv, mm);
            }
        }
        if x != 0.0 {
            for i in (mm + 1)..=n {
                let mut y = a[i][mm - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][mm - 1] = y;
                    for j in mm..=n {
                        a[i][j] -= y * a[mm][j];
                    }
                    for row in a.iter_mut().skip(1) {
                        row[mm] += y * row[i];
                    }
                }
            }
        }
    }
    // Drop the stored multipliers below the subdiagonal.
    for i in 3..=n {
        for j in 1..(i - 1) {
            a[i][j] = 0.0;
        }
    }
}

fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<(f64, f64)>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            // Look for a single small subdiagonal element.
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nn - 1][nn - 1];
            let mut w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if its == HQR_MAX_ITERS {
                return Err(Error::NumericalFailure(
                    "QR iteration did not converge".into(),
                ));
            }
            if its == 10 || its == 20 {
                // Exceptional shift.
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let (mut p, mut q, mut r): (f64, f64, f64);
            let mut m = nn - 2;
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nn - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = nn.min(k + 3);
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nn - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.require_finite()?;
    b.require_finite()?;
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Given `inv = X⁻¹` (symmetric positive definite), returns `(X + v vᵀ)⁻¹`.
pub fn sherman_morrison_inv_update(inv: &Matrix, v: &[f64]) -> Result<Matrix> {
    inv.require_square()?;
    if v.len() != inv.rows {
        return Err(Error::invalid(format!(
            "update vector has length {}, expected {}",
            v.len(),
            inv.rows
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("update vector has non-finite entries"));
    }
    let inv_v = inv.mul_vec(v);
    let denom = 1.0 + v.iter().zip(&inv_v).map(|(a, b)| a * b).sum::<f64>();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "Sherman-Morrison denominator {denom} is not positive"
        )));
    }
    let mut out = inv.clone();
    out.add_outer(-1.0 / denom, &inv_v, &inv_v);
    out.symmetrize();
    Ok(out)
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    m.require_symmetric()?;
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NumericalFailure(
                "matrix is not positive definite".into(),
            ));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    let n = m.rows;
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for c in 0..n {
        // L y = e_c
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
        for i in 0..n {
            inv[(i, c)] = col[i];
        }
    }
    inv.symmetrize();
    Ok(inv)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues
/// at or below `rel_tol · λ_max` are treated as zero. Also returns the
/// numerical rank.
pub fn psd_pseudo_inverse(m: &Matrix, rel_tol: f64) -> Result<(Matrix, usize)> {
    let (values, vectors) = sym_eigen(m)?;
    let n = m.rows;
    let top = values.iter().cloned().fold(0.0_f64, f64::max);
    let mut pinv = Matrix::zeros(n, n);
    let mut rank = 0;
    for (idx, &lam) in values.iter().enumerate() {
        if top > 0.0 && lam > rel_tol * top {
            rank += 1;
            let v: Vec<f64> = (0..n).map(|i| vectors[(i, idx)]).collect();
            pinv.add_outer(1.0 / lam, &v, &v);
        }
    }
    pinv.symmetrize();
    Ok((pinv, rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&Matrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((spectral_norm(&Matrix::diag(&[1.5, 0.2])).unwrap() - 1.5).abs() < 1e-14);
        // symmetric: σ_max = max |eig| = 0.055 + sqrt(0.055² + 0.009)
        let oracle = 0.055 + (0.055_f64 * 0.055 + 0.009).sqrt();
        let got = spectral_norm(&m(&[&[0.01, 0.1], &[0.1, 0.1]])).unwrap();
        assert!((got - oracle).abs() < 1e-14, "{got} vs {oracle}");
        assert!((got - 0.16466).abs() < 1e-5);
        assert_eq!(spectral_norm(&Matrix::zeros(2, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_rectangular() {
        // [[3,0],[4,0]] has singular values 5 and 0
        let got = spectral_norm(&m(&[&[3.0, 0.0], &[4.0, 0.0]])).unwrap();
        assert!((got - 5.0).abs() < 1e-13);
    }

    #[test]
    fn sym_eig_examples() {
        assert_eq!(sym_eig_extremes(&Matrix::identity(2)).unwrap(), (1.0, 1.0));
        let (lo, hi) = sym_eig_extremes(&Matrix::diag(&[2.25, 0.30, 0.30, 0.04])).unwrap();
        assert_eq!((lo, hi), (0.04, 2.25));
        let (lo, hi) = sym_eig_extremes(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let err = sym_eig_extremes(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        // within relative tolerance is accepted
        assert!(sym_eig_extremes(&m(&[&[1.0, 0.5], &[0.5 + 1e-12, 1.0]])).is_ok());
    }

    #[test]
    fn spectral_radius_examples() {
        assert!(max_abs_eig(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap().abs() < 1e-15);
        assert!((max_abs_eig(&Matrix::diag(&[0.5, -0.9])).unwrap() - 0.9).abs() < 1e-15);
        assert!((max_abs_eig(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            max_abs_eig(&Matrix::zeros(2, 3)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // roots of (λ-1)(λ-2)(λ-3)(λ+4) = λ⁴ - 2λ³ - 13λ² + 38λ - 24
        let c = m(&[
            &[2.0, 13.0, -38.0, 24.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let mut re: Vec<f64> = eigenvalues(&c).unwrap().iter().map(|e| e.0).collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([-4.0, 1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn kron_examples() {
        assert_eq!(
            kron(&Matrix::identity(2), &Matrix::identity(2)).unwrap(),
            Matrix::identity(4)
        );
        assert_eq!(kron(&m(&[&[2.0]]), &m(&[&[3.0]])).unwrap(), m(&[&[6.0]]));
        let d = Matrix::diag(&[1.5, 0.2]);
        let k = kron(&d, &d).unwrap();
        let want = Matrix::diag(&[2.25, 0.30, 0.30, 0.04]);
        for i in 0..4 {
            for j in 0..4 {
                assert!((k[(i, j)] - want[(i, j)]).abs() < 1e-15);
            }
        }
        let r = kron(&Matrix::zeros(2, 3), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!((r.rows(), r.cols()), (2, 6));
    }

    #[test]
    fn sherman_morrison_examples() {
        let id = Matrix::identity(2);
        assert_eq!(sherman_morrison_inv_update(&id, &[0.0, 0.0]).unwrap(), id);
        assert_eq!(
            sherman_morrison_inv_update(&m(&[&[1.0]]), &[1.0]).unwrap(),
            m(&[&[0.5]])
        );
        assert_eq!(
            sherman_morrison_inv_update(&id, &[1.0, 0.0]).unwrap(),
            Matrix::diag(&[0.5, 1.0])
        );
    }

    #[test]
    fn sherman_morrison_broken_inverse() {
        let err = sherman_morrison_inv_update(&m(&[&[-1.0]]), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure(_)));
    }

    #[test]
    fn max_abs_entry_examples() {
        assert_eq!(max_abs_entry(&Matrix::zeros(2, 2)), 0.0);
        assert_eq!(max_abs_entry(&m(&[&[1.0, -3.0], &[2.0, 0.0]])), 3.0);
        assert_eq!(max_abs_entry(&m(&[&[0.01, 0.1], &[0.1, 0.1]])), 0.1);
    }

    #[test]
    fn cholesky_and_inverse() {
        let a = m(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(max_abs_entry(&back.sub(&a).unwrap()) < 1e-15);
        let inv = spd_inverse(&a).unwrap();
        let prod = a.matmul(&inv).unwrap();
        assert!(max_abs_entry(&prod.sub(&Matrix::identity(2)).unwrap()) < 1e-15);
        assert!(cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).is_err());
    }

    #[test]
    fn pseudo_inverse_of_rank_one() {
        // X = v vᵀ with v = (1, 1): X⁺ = v vᵀ / ‖v‖⁴
        let x = Matrix::outer(&[1.0, 1.0], &[1.0, 1.0]);
        let (p, rank) = psd_pseudo_inverse(&x, 1e-12).unwrap();
        assert_eq!(rank, 1);
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[(i, j)] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn serde_rows_and_decimal_strings() {
        let a: Matrix = serde_json::from_str(r#"[[1, "0.25"], ["-1e-3", 2.5]]"#).unwrap();
        assert_eq!(a, m(&[&[1.0, 0.25], &[-1e-3, 2.5]]));
        assert_eq!(serde_json::to_string(&a).unwrap(), "[[1.0,0.25],[-0.001,2.5]]");
        assert!(serde_json::from_str::<Matrix>("[[1, 2], [3]]").is_err());
    }

    fn square(max_n: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(-2.0..2.0_f64, n * n)
                .prop_map(move |d| Matrix::new(n, n, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn spectral_norm_dominates_spectral_radius(a in square(6)) {
            let norm = spectral_norm(&a).unwrap();
            let rho = max_abs_eig(&a).unwrap();
            prop_assert!(norm >= rho * (1.0 - 1e-10) - 1e-12, "{norm} < {rho}");
        }

        #[test]
        fn gram_matrices_have_nonnegative_spectrum(
            n in 1usize..5,
            vs in proptest::collection::vec(proptest::collection::vec(-3.0..3.0_f64, 4), 1..8),
        ) {
            let mut x = Matrix::zeros(n, n);
            for v in &vs {
                x.add_outer(1.0, &v[..n], &v[..n]);
            }
            let (lo, hi) = sym_eig_extremes(&x).unwrap();
            prop_assert!(lo <= hi);
            prop_assert!(lo >= -1e-12 * hi.max(1.0), "lambda_min {lo}");
        }

        #[test]
        fn sherman_morrison_inverts_rank_one_update(
            n in 1usize..5,
            vs in proptest::collection::vec(proptest::collection::vec(-3.0..3.0_f64, 4), 6..10),
            u in proptest::collection::vec(-3.0..3.0_f64, 4),
        ) {
            let mut x = Matrix::identity(n).scale(0.5);
            for v in &vs {
                x.add_outer(1.0, &v[..n], &v[..n]);
            }
            let inv = spd_inverse(&x).unwrap();
            let updated = sherman_morrison_inv_update(&inv, &u[..n]).unwrap();
            let mut x2 = x.clone();
            x2.add_outer(1.0, &u[..n], &u[..n]);
            let prod = updated.matmul(&x2).unwrap();
            let err = max_abs_entry(&prod.sub(&Matrix::identity(n)).unwrap());
            prop_assert!(err < 1e-8, "residual {err}");
        }

        #[test]
        fn kron_of_diagonals_multiplies_eigenvalues(
            a in proptest::collection::vec(-2.0..2.0_f64, 1..4),
            b in proptest::collection::vec(-2.0..2.0_f64, 1..4),
        ) {
            let k = kron(&Matrix::diag(&a), &Matrix::diag(&b)).unwrap();
            let mut got: Vec<f64> = eigenvalues(&k).unwrap().iter().map(|e| e.0).collect();
            let mut want: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12);
            }
        }
    }
}
