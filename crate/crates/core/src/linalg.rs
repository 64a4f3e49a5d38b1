//! Dense real linear algebra for tall least-squares problems.
//!
//! Everything here goes through a Householder QR factorization. Hat-matrix
//! quantities are evaluated as `||Q^T v||^2` splits and the hat matrix itself
//! is never formed.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold used by the rank test.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::BadShape(
                "vector must have at least one entry".into(),
            ));
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(entries))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::BadShape(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                let out = &mut data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm_sq(&self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// First `m` columns.
    pub fn leading_columns(&self, m: usize) -> Result<Matrix> {
        if m == 0 || m > self.cols {
            return Err(Error::BadShape(format!(
                "cannot take {m} leading columns of a {}-column matrix",
                self.cols
            )));
        }
        Matrix::from_fn(self.rows, m, |i, j| self.get(i, j))
    }
}

/// Thin QR factors: `q` is `rows x cols` with orthonormal columns and `r` is
/// `cols x cols` upper triangular with a non-negative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: Matrix,
    pub r: Matrix,
}

/// Compact Householder factorization of a tall matrix.
///
/// Reflector `k` only touches rows `k..`, so the factors of the leading `m`
/// columns are a prefix of the factors of the full matrix. Nested order
/// scans rely on this: one factorization of `A_M` serves every `A_m`, `m <= M`.
#[derive(Debug, Clone)]
pub struct Householder {
    rows: usize,
    cols: usize,
    /// Column-major working storage: reflector `k` lives in rows `k..` of
    /// column `k`, the strict upper triangle of `R` above the diagonal.
    work: Vec<f64>,
    beta: Vec<f64>,
    diag: Vec<f64>,
    /// Column norms divided out before factoring, all ones when unscaled.
    scale: Vec<f64>,
    tolerance: f64,
}

impl Householder {
    /// Factors `a` as given.
    pub fn factor(a: &Matrix) -> Result<Self> {
        Self::factor_impl(a, false)
    }

    /// Normalizes every column to unit 2-norm before factoring. Solutions
    /// returned by [`Householder::solve_prefix`] are mapped back to the
    /// original column scale; projections are unaffected by the scaling.
    pub fn factor_scaled(a: &Matrix) -> Result<Self> {
        Self::factor_impl(a, true)
    }

    fn factor_impl(a: &Matrix, scaled: bool) -> Result<Self> {
        let (n, m) = (a.rows(), a.cols());
        if n < m {
            return Err(Error::BadShape(format!(
                "QR needs rows >= cols, got {n}x{m}"
            )));
        }
        let mut work = vec![0.0; n * m];
        let mut scale = vec![1.0; m];
        for j in 0..m {
            let col = &mut work[j * n..(j + 1) * n];
            for (i, c) in col.iter_mut().enumerate() {
                *c = a.get(i, j);
            }
            if scaled {
                let norm = norm_sq(col).sqrt();
                if norm > 0.0 {
                    col.iter_mut().for_each(|c| *c /= norm);
                    scale[j] = norm;
                }
            }
        }
        let max_abs = work.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let tolerance = RANK_TOLERANCE * max_abs * n as f64;

        let mut beta = vec![0.0; m];
        let mut diag = vec![0.0; m];
        for k in 0..m {
            let (head, tail) = work.split_at_mut((k + 1) * n);
            let v = &mut head[k * n + k..];
            let x0 = v[0];
            let tail_sq = norm_sq(&v[1..]);
            if tail_sq == 0.0 {
                // Already upper triangular in this column.
                diag[k] = x0;
                v[0] = 0.0;
                continue;
            }
            let norm = (x0 * x0 + tail_sq).sqrt();
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            v[0] = x0 - alpha;
            let b = 2.0 / norm_sq(v);
            beta[k] = b;
            diag[k] = alpha;
            for j in (k + 1)..m {
                let target = &mut tail[(j - k - 1) * n + k..(j - k) * n];
                let s = b * dot(v, target);
                for (t, vi) in target.iter_mut().zip(v.iter()) {
                    *t -= s * vi;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            work,
            beta,
            diag,
            scale,
            tolerance,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Diagonal of `R` (signs follow the reflector convention).
    pub fn r_diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Number of leading columns whose pivots all clear the rank tolerance.
    pub fn full_rank_prefix(&self) -> usize {
        self.diag
            .iter()
            .position(|d| d.abs() < self.tolerance || d.abs() == 0.0)
            .unwrap_or(self.cols)
    }

    /// Errors unless the leading `m` columns have full column rank.
    pub fn check_rank(&self, m: usize) -> Result<()> {
        let prefix = self.full_rank_prefix();
        if prefix < m {
            return Err(Error::RankDeficient {
                column: prefix,
                pivot: self.diag[prefix].abs(),
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }

    fn reflector(&self, k: usize) -> &[f64] {
        &self.work[k * self.rows + k..(k + 1) * self.rows]
    }

    /// Overwrites `v` with `Q^T v` (full length).
    pub fn apply_qt(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for k in 0..self.cols {
            self.reflect(k, v);
        }
    }

    /// Overwrites `v` with `Q_m v`, the product of the first `m` reflectors.
    pub fn apply_q_prefix(&self, m: usize, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for k in (0..m).rev() {
            self.reflect(k, v);
        }
    }

    fn reflect(&self, k: usize, v: &mut [f64]) {
        let b = self.beta[k];
        if b == 0.0 {
            return;
        }
        let h = self.reflector(k);
        let target = &mut v[k..];
        let s = b * dot(h, target);
        for (t, hi) in target.iter_mut().zip(h) {
            *t -= s * hi;
        }
    }

    /// Projection of `v` onto the span of the leading `m` columns, given
    /// `qtv = Q^T v`.
    pub fn project_prefix(&self, m: usize, qtv: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        out[..m].copy_from_slice(&qtv[..m]);
        self.apply_q_prefix(m, &mut out);
        out
    }

    /// Solves `R_m theta = qtv[..m]` by back substitution and undoes column
    /// scaling. Caller is responsible for the rank check.
    pub fn solve_prefix(&self, m: usize, qtv: &[f64]) -> Vec<f64> {
        let n = self.rows;
        let mut theta = qtv[..m].to_vec();
        for i in (0..m).rev() {
            let acc = theta[i]
                - ((i + 1)..m)
                    .map(|j| self.work[j * n + i] * theta[j])
                    .sum::<f64>();
            theta[i] = acc / self.diag[i];
        }
        for (t, s) in theta.iter_mut().zip(&self.scale) {
            *t /= s;
        }
        theta
    }

    /// Upper-triangular `R` of the (possibly scaled) matrix.
    pub fn r_matrix(&self) -> Matrix {
        let n = self.rows;
        let data = (0..self.cols)
            .flat_map(|i| {
                (0..self.cols).map(move |j| match i.cmp(&j) {
                    std::cmp::Ordering::Less => self.work[j * n + i],
                    std::cmp::Ordering::Equal => self.diag[i],
                    std::cmp::Ordering::Greater => 0.0,
                })
            })
            .collect();
        Matrix {
            rows: self.cols,
            cols: self.cols,
            data,
        }
    }

    /// Explicit thin `Q`, `rows x cols`.
    pub fn thin_q(&self) -> Matrix {
        let (n, m) = (self.rows, self.cols);
        let mut data = vec![0.0; n * m];
        let mut e = vec![0.0; n];
        for j in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.apply_q_prefix(m, &mut e);
            for i in 0..n {
                data[i * m + j] = e[i];
            }
        }
        Matrix {
            rows: n,
            cols: m,
            data,
        }
    }
}

/// Householder QR with thin factors and a non-negative `R` diagonal.
pub fn qr_decompose(a: &Matrix) -> Result<QrFactors> {
    let h = Householder::factor(a)?;
    h.check_rank(a.cols())?;
    let mut q = h.thin_q();
    let mut r = h.r_matrix();
    let m = a.cols();
    for k in 0..m {
        if r.get(k, k) < 0.0 {
            for j in k..m {
                r.data[k * m + j] = -r.data[k * m + j];
            }
            for i in 0..q.rows {
                q.data[i * m + k] = -q.data[i * m + k];
            }
        }
    }
    Ok(QrFactors { q, r })
}

/// Minimizes `||a theta - y||_2` through column-scaled QR.
pub fn solve_least_squares(a: &Matrix, y: &Vector) -> Result<Vector> {
    if a.rows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: a.rows(),
            found: y.len(),
        });
    }
    let h = Householder::factor_scaled(a)?;
    h.check_rank(a.cols())?;
    let mut qty = y.as_slice().to_vec();
    h.apply_qt(&mut qty);
    Vector::new(h.solve_prefix(a.cols(), &qty))
}

/// Returns `(||H v||^2, ||(I - H) v||^2)` for the hat matrix `H` of `a`.
pub fn residual_quadratic_form(a: &Matrix, v: &Vector) -> Result<(f64, f64)> {
    if a.rows() != v.len() {
        return Err(Error::LengthMismatch {
            expected: a.rows(),
            found: v.len(),
        });
    }
    let h = Householder::factor_scaled(a)?;
    h.check_rank(a.cols())?;
    let mut qtv = v.as_slice().to_vec();
    h.apply_qt(&mut qtv);
    let m = a.cols();
    Ok((norm_sq(&qtv[..m]), norm_sq(&qtv[m..])))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
        Vector::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Dense Gauss-Jordan inverse with partial pivoting, test-only.
    fn invert(a: &Matrix) -> Matrix {
        let n = a.rows();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = a.row(i).to_vec();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| aug[x][c].abs().total_cmp(&aug[y][c].abs()))
                .unwrap();
            aug.swap(c, p);
            let piv = aug[c][c];
            aug[c].iter_mut().for_each(|v| *v /= piv);
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let pivot_row = aug[c].clone();
                    aug[r]
                        .iter_mut()
                        .zip(&pivot_row)
                        .for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        Matrix::from_rows(&aug.iter().map(|r| r[n..].to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn normal_equation_solution(a: &Matrix, y: &[f64]) -> Vec<f64> {
        let at = a.transpose();
        let ata_inv = invert(&at.matmul(a).unwrap());
        ata_inv.mul_vec(&at.mul_vec(y).unwrap()).unwrap()
    }

    #[test]
    fn identity_factors_to_identity() {
        let eye = Matrix::identity(3).unwrap();
        let qr = qr_decompose(&eye).unwrap();
        assert_eq!(qr.q, eye);
        assert_eq!(qr.r, eye);
    }

    #[test]
    fn leading_pivot_is_column_norm() {
        let a = Matrix::from_rows(&[[3.0, 0.0], [4.0, 0.1]]).unwrap();
        let qr = qr_decompose(&a).unwrap();
        assert!((qr.r.get(0, 0) - 5.0).abs() < 1e-14);
        assert!(qr.r.get(1, 1) > 0.0);
    }

    #[test]
    fn random_tall_matrix_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 50, 6);
        let qr = qr_decompose(&a).unwrap();
        let qa = qr.q.matmul(&qr.r).unwrap();
        let diff: f64 = qa
            .as_slice()
            .iter()
            .zip(a.as_slice())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10, "reconstruction error {diff}");
        let qtq = qr.q.transpose().matmul(&qr.q).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq.get(i, j) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wide_matrix_is_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(qr_decompose(&a), Err(Error::BadShape(_))));
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        assert!(matches!(
            qr_decompose(&a),
            Err(Error::RankDeficient { column: 1, .. })
        ));
        let y = Vector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            solve_least_squares(&a, &y),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn zero_column_is_rank_deficient() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]).unwrap();
        let h = Householder::factor_scaled(&a).unwrap();
        assert_eq!(h.full_rank_prefix(), 1);
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            Vector::new(vec![f64::INFINITY]),
            Err(Error::NonFinite { index: 0 })
        ));
        assert!(Vector::new(vec![]).is_err());
        assert!(serde_json::from_str::<Vector>("[]").is_err());
    }

    #[test]
    fn identity_design_returns_targets() {
        let a = Matrix::identity(4).unwrap();
        let y = Vector::new(vec![1.5, -2.0, 0.25, 8.0]).unwrap();
        let theta = solve_least_squares(&a, &y).unwrap();
        for (t, v) in theta.iter().zip(y.iter()) {
            assert!((t - v).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_column_gives_sample_mean() {
        let a = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let y = Vector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let theta = solve_least_squares(&a, &y).unwrap();
        assert!((theta[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matches_normal_equations_on_well_conditioned_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 40, 5);
        let y = random_vector(&mut rng, 40);
        let theta = solve_least_squares(&a, &y).unwrap();
        let oracle = normal_equation_solution(&a, &y);
        for (t, o) in theta.iter().zip(&oracle) {
            assert!((t - o).abs() < 1e-8, "{t} vs {o}");
        }
    }

    #[test]
    fn vector_in_column_space_has_no_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 20, 3);
        let v = Vector::new(a.mul_vec(&[1.0, -2.0, 0.5]).unwrap()).unwrap();
        let (p, r) = residual_quadratic_form(&a, &v).unwrap();
        assert!(r < 1e-10 * v.norm_sq());
        assert!((p - v.norm_sq()).abs() < 1e-10 * v.norm_sq());
    }

    #[test]
    fn orthogonal_vector_has_no_projection() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        let v = Vector::new(vec![0.0, 0.0, 3.0, -1.0]).unwrap();
        let (p, r) = residual_quadratic_form(&a, &v).unwrap();
        assert_eq!(p, 0.0);
        assert!((r - 10.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_form_matches_explicit_hat_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 30, 4);
        let v = random_vector(&mut rng, 30);
        let at = a.transpose();
        let hat = a
            .matmul(&invert(&at.matmul(&a).unwrap()))
            .unwrap()
            .matmul(&at)
            .unwrap();
        let hv = hat.mul_vec(&v).unwrap();
        let oracle_p = norm_sq(&hv);
        let oracle_r: f64 = v.iter().zip(&hv).map(|(a, b)| (a - b).powi(2)).sum();
        let (p, r) = residual_quadratic_form(&a, &v).unwrap();
        assert!((p - oracle_p).abs() < 1e-9);
        assert!((r - oracle_r).abs() < 1e-9);
    }

    #[test]
    fn prefix_factors_match_factoring_the_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 25, 6);
        let full = Householder::factor_scaled(&a).unwrap();
        let y = random_vector(&mut rng, 25);
        let mut qty = y.as_slice().to_vec();
        full.apply_qt(&mut qty);
        for m in 1..=6 {
            let sub = a.leading_columns(m).unwrap();
            let direct = solve_least_squares(&sub, &y).unwrap();
            let via_prefix = full.solve_prefix(m, &qty);
            for (d, p) in direct.iter().zip(&via_prefix) {
                assert!((d - p).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn pythagoras_and_idempotence(seed in any::<u64>(), rows in 3usize..40, cols in 1usize..6) {
            prop_assume!(rows >= cols);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, rows, cols);
            let v = random_vector(&mut rng, rows);
            let (p, r) = residual_quadratic_form(&a, &v).unwrap();
            let total = v.norm_sq();
            prop_assert!((p + r - total).abs() <= 1e-10 * total);

            let h = Householder::factor_scaled(&a).unwrap();
            let mut qtv = v.as_slice().to_vec();
            h.apply_qt(&mut qtv);
            let hv = Vector::new(h.project_prefix(cols, &qtv)).unwrap();
            let (p2, r2) = residual_quadratic_form(&a, &hv).unwrap();
            prop_assert!((p2 - p).abs() <= 1e-10 * total.max(1e-300));
            prop_assert!(r2 <= 1e-10 * total);
        }

        #[test]
        fn qr_orthogonality_and_reconstruction(seed in any::<u64>(), rows in 2usize..30, cols in 1usize..6) {
            prop_assume!(rows >= cols);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, rows, cols);
            let qr = qr_decompose(&a).unwrap();
            let qtq = qr.q.transpose().matmul(&qr.q).unwrap();
            for i in 0..cols {
                for j in 0..cols {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((qtq.get(i, j) - expect).abs() < 1e-10);
                }
            }
            let recon = qr.q.matmul(&qr.r).unwrap();
            let err: f64 = recon.as_slice().iter().zip(a.as_slice())
                .map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-10 * a.frobenius_norm());
        }
    }
}
