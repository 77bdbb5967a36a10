//! Dense row-major matrices, deterministic reductions and a symmetric
//! eigen-solver.
//!
//! Every reduction here has a fixed summation order that does not depend on
//! the number of rayon workers, so results are bitwise reproducible.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows summed sequentially before partial sums are combined pairwise.
pub(crate) const ROW_BLOCK: usize = 64;

/// Matrices up to this order are diagonalized with cyclic Jacobi rotations.
pub const JACOBI_MAX_ORDER: usize = 64;

/// Iteration cap for the tridiagonal QL solver (total over all eigenvalues).
pub const QL_MAX_ITERATIONS: usize = 1_000_000;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows} x {cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        Matrix::new(rows, cols, data.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · selfᵀ`, an `rows × rows` matrix.
    pub fn gram(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        out.data
            .par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, out_row)| {
                let ri = self.row(i);
                for (j, o) in out_row.iter_mut().enumerate().take(i + 1) {
                    *o = dot(ri, self.row(j));
                }
            });
        for i in 0..n {
            for j in 0..i {
                out.data[j * n + i] = out.data[i * n + j];
            }
        }
        out
    }

    /// `selfᵀ · self`, a `cols × cols` matrix.
    pub fn cross(&self) -> Matrix {
        self.transpose().gram()
    }

    /// `self · otherᵀ`.
    pub fn mul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let m = other.rows;
        let mut out = Matrix::zeros(self.rows, m);
        if m > 0 {
            out.data.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                let a = self.row(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o = dot(a, other.row(j));
                }
            });
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.mul_transpose(&other.transpose())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        pairwise_sum_by(&self.data, |v| v * v).sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four interleaved accumulators, combined in a fixed order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs, |v| v)
}

pub fn pairwise_sum_by(xs: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().map(|&v| f(v)).sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum_by(a, f) + pairwise_sum_by(b, f)
}

/// Deterministic blocked reduction over `n` items into a `width`-vector.
///
/// `add_block(range, acc)` must add the contributions of the items in `range`
/// to `acc` in increasing order. Blocks of [`ROW_BLOCK`] items are evaluated
/// in parallel and their partials merged with a balanced pairwise tree, so the
/// result is independent of the worker count.
pub(crate) fn tree_accumulate<F>(n: usize, width: usize, add_block: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
{
    let n_blocks = n.div_ceil(ROW_BLOCK);
    if n_blocks == 0 {
        return vec![0.0; width];
    }
    let partials: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; width];
            add_block(b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(n), &mut acc);
            acc
        })
        .collect();
    tree_merge(partials)
}

fn tree_merge(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Column means with the blocked pairwise reduction.
pub fn column_means(m: &Matrix) -> Vec<f64> {
    let mut s = tree_accumulate(m.rows(), m.cols(), |range, acc| {
        for r in range {
            acc.iter_mut().zip(m.row(r)).for_each(|(a, v)| *a += v);
        }
    });
    let n = m.rows().max(1) as f64;
    s.iter_mut().for_each(|v| *v /= n);
    s
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Row `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

/// Diagonalizes a symmetric matrix. Orders up to [`JACOBI_MAX_ORDER`] use
/// cyclic Jacobi; larger ones Householder tridiagonalization followed by
/// implicit QL. Only the lower triangle is read.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!(
            "{}x{} matrix is not square",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() <= JACOBI_MAX_ORDER {
        jacobi_eigen(a)
    } else {
        ql_eigen(a)
    }
}

fn sorted_desc(values: Vec<f64>, vectors_as_rows: Matrix) -> SymmetricEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut v = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.row_mut(dst).copy_from_slice(vectors_as_rows.row(src));
    }
    SymmetricEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: v,
    }
}

/// Cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            m[(i, j)] = a[(i, j)];
            m[(j, i)] = a[(i, j)];
        }
    }
    // columns of `v` are eigenvectors
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let mut sweep = 0;
    if n >= 2 && scale > 0.0 {
        loop {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
            if off == 0.0 || off.sqrt() <= 1e-3 * f64::EPSILON * scale {
                break;
            }
            if sweep == JACOBI_MAX_SWEEPS {
                return Err(Error::Convergence {
                    iterations: sweep * n * (n - 1) / 2,
                });
            }
            sweep += 1;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
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
    let values = (0..n).map(|i| m[(i, i)]).collect();
    Ok(sorted_desc(values, v.transpose()))
}

/// Householder tridiagonalization + implicit QL with Wilkinson-style shifts.
pub fn ql_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            v[(i, j)] = a[(i, j)];
            v[(j, i)] = a[(i, j)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    // after tridiagonalize the columns of v hold the transform; QL works on rows
    let mut z = v.transpose();
    tridiagonal_ql(&mut z, &mut d, &mut e)?;
    Ok(sorted_desc(d, z))
}

fn tridiagonalize(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e.iter_mut().take(i).for_each(|x| *x = 0.0);
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e). Row `i` of `z` is rotated along with
/// eigenvalue `i`.
fn tridiagonal_ql(z: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let mut iterations = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] == 0 so m < n here
        if m > l {
            loop {
                iterations += 1;
                if iterations > QL_MAX_ITERATIONS {
                    return Err(Error::Convergence { iterations });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.data_mut().split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
