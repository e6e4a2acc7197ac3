//! Dense symmetric eigensolvers and classical-MDS double centering.
//!
//! `sym_eigen` runs Householder tridiagonalization followed by the implicit
//! QL algorithm with Wilkinson-style shifts (the EISPACK `tred2`/`tql2` pair).
//! The orthogonal accumulator is kept transposed so that every inner loop
//! walks contiguous memory.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major dense f64 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::shape("matrix", format!("expected rank 2, got {:?}", t.shape())));
        }
        Ok(Matrix::from_vec(t.shape()[0], t.shape()[1], t.to_f64()))
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::matrix_from_f64(self.rows, self.cols, &self.data)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    fn symmetrized(&self) -> Matrix {
        let n = self.rows;
        let mut s = self.clone();
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

/// Eigenpairs in ascending order of value; column `j` of `vectors` pairs
/// with `values[j]`.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenResult {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j)
    }
}

const QL_ITERATION_FACTOR: usize = 30;

/// Householder reduction of the symmetric matrix held in `w` to tridiagonal
/// form. On return `w` holds the transpose of the orthogonal transform,
/// `d` the diagonal and `e[1..]` the sub-diagonal.
fn tridiagonalize(w: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = w[j * n + (n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + (i - 1)];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                w[i * n + j] = f;
                let row = &w[j * n..j * n + i];
                g = e[j] + row[j] * f;
                for k in j + 1..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                let row = &mut w[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[j * n + (i - 1)];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        w[i * n + (n - 1)] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            let (head, tail) = w.split_at_mut((i + 1) * n);
            let pivot = &tail[..i + 1];
            for k in 0..=i {
                d[k] = pivot[k] / h;
            }
            for j in 0..=i {
                let row = &mut head[j * n..j * n + i + 1];
                let g: f64 = pivot.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                for k in 0..=i {
                    row[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[j * n + (n - 1)];
        w[j * n + (n - 1)] = 0.0;
    }
    w[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`, rotating the rows of `w`.
fn tridiagonal_ql(w: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let cap = QL_ITERATION_FACTOR * n.max(1);
    let mut total = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total += 1;
                if total > cap {
                    return Err(Error::Convergence {
                        residual: e[l].abs() / tst1.max(f64::MIN_POSITIVE),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let ri = &mut lo[i * n..];
                    let ri1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = ri1[k];
                        ri1[k] = s * ri[k] + c * hk;
                        ri[k] = c * ri[k] - s * hk;
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

/// Largest-magnitude component made positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full decomposition: ascending values and eigenvectors as rows.
fn full_eigen(a: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.rows;
    let mut w = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 1 {
        return Ok((vec![a.data[0]], vec![1.0]));
    }
    tridiagonalize(&mut w, n, &mut d, &mut e);
    tridiagonal_ql(&mut w, n, &mut d, &mut e)?;
    Ok((d, w))
}

/// The `m` algebraically smallest or largest eigenpairs of a symmetric
/// matrix, returned in ascending order of eigenvalue.
///
/// The input is symmetrized as `(A + A^T) / 2`. Each returned pair is checked
/// against `|A v - lambda v| <= 1e-8 |A|_F`.
pub fn sym_eigen(a: &Matrix, which: Which, m: usize) -> Result<EigenResult> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::shape("sym_eigen", format!("matrix is {}x{}", a.rows, a.cols)));
    }
    if m == 0 || m > n {
        return Err(Error::Parameter(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    let asym = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (a.get(i, j) - a.get(j, i)).abs())
        .fold(0.0, f64::max);
    let norm = a.frobenius_norm();
    if asym > 1e-6 * norm.max(1.0) {
        return Err(Error::Parameter(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    let s = a.symmetrized();
    let (vals, vecs) = full_eigen(&s)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
    let picked: Vec<usize> = match which {
        Which::Smallest => order[..m].to_vec(),
        Which::Largest => order[n - m..].to_vec(),
    };
    let mut values = Vec::with_capacity(m);
    let mut vectors = Matrix::zeros(n, m);
    let tol = 1e-8 * norm;
    for (col, &idx) in picked.iter().enumerate() {
        let mut v = vecs[idx * n..(idx + 1) * n].to_vec();
        fix_sign(&mut v);
        let av = s.mul_vec(&v);
        let lambda = vals[idx];
        let res = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > tol && res > f64::MIN_POSITIVE {
            return Err(Error::Convergence { residual: res });
        }
        values.push(lambda);
        for (i, &x) in v.iter().enumerate() {
            vectors.set(i, col, x);
        }
    }
    Ok(EigenResult { values, vectors })
}

/// Smallest eigenpairs of `A v = lambda B v` for diagonal positive `B`,
/// solved through the congruence `B^{-1/2} A B^{-1/2}`. Returned vectors are
/// `B`-orthonormal.
pub fn generalized_sym_eigen(a: &Matrix, b_diag: &[f64], m: usize) -> Result<EigenResult> {
    let n = a.rows;
    if b_diag.len() != n {
        return Err(Error::shape(
            "generalized_sym_eigen",
            format!("B has {} entries for an {n}x{n} matrix", b_diag.len()),
        ));
    }
    if let Some((i, &b)) = b_diag.iter().enumerate().find(|(_, &b)| !(b > 0.0)) {
        return Err(Error::Parameter(format!("B[{i}] = {b} is not strictly positive")));
    }
    let inv_sqrt: Vec<f64> = b_diag.iter().map(|b| 1.0 / b.sqrt()).collect();
    let mut c = a.clone();
    for i in 0..n {
        for j in 0..n {
            c.data[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let mut r = sym_eigen(&c, Which::Smallest, m)?;
    for j in 0..m {
        let mut v: Vec<f64> = (0..n).map(|i| r.vectors.get(i, j) * inv_sqrt[i]).collect();
        fix_sign(&mut v);
        for (i, x) in v.into_iter().enumerate() {
            r.vectors.set(i, j, x);
        }
    }
    Ok(r)
}

/// `B = -1/2 J D2 J` with `J = I - 11^T / n`.
pub fn double_center(d2: &Matrix) -> Result<Matrix> {
    let n = d2.rows;
    if d2.cols != n {
        return Err(Error::shape("double_center", format!("matrix is {}x{}", d2.rows, d2.cols)));
    }
    if n == 0 {
        return Ok(d2.clone());
    }
    let nf = n as f64;
    let row_mean: Vec<f64> = (0..n).map(|i| d2.row(i).iter().sum::<f64>() / nf).collect();
    let mut col_mean = vec![0.0; n];
    for i in 0..n {
        for (c, v) in col_mean.iter_mut().zip(d2.row(i)) {
            *c += v;
        }
    }
    col_mean.iter_mut().for_each(|c| *c /= nf);
    let grand = row_mean.iter().sum::<f64>() / nf;
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b.data[i * n + j] = -0.5 * (d2.get(i, j) - row_mean[i] - col_mean[j] + grand);
        }
    }
    Ok(b)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    /// Cyclic Jacobi rotations until the off-diagonal mass falls below
    /// `1e-12 |A|_F`. Independent of the Householder/QL path.
    pub(crate) fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows;
        let mut m = a.clone();
        let norm = a.frobenius_norm().max(1e-300);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j).powi(2))
                .sum::<f64>()
                .sqrt();
            if off < 1e-12 * norm {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m.get(p, q);
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                        m.set(k, p, c * mkp - s * mkq);
                        m.set(k, q, s * mkp + c * mkq);
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                        m.set(p, k, c * mpk - s * mqk);
                        m.set(q, k, s * mpk + c * mqk);
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub(crate) fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    fn check_contract(a: &Matrix, r: &EigenResult) {
        let norm = a.frobenius_norm();
        let m = r.values.len();
        for j in 0..m {
            let v = r.vector(j);
            let av = a.mul_vec(&v);
            let res: f64 = av.iter().zip(&v).map(|(x, y)| (x - r.values[j] * y).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * norm, "residual {res}");
            for k in 0..m {
                let dot: f64 = v.iter().zip(r.vector(k)).map(|(x, y)| x * y).sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-6);
            }
        }
        assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_smallest_two() {
        let a = Matrix::from_vec(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let r = sym_eigen(&a, Which::Smallest, 2).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-14 && (r.values[1] - 2.0).abs() < 1e-14);
        check_contract(&a, &r);
    }

    #[test]
    fn identity_all_ones() {
        let a = Matrix::identity(5);
        let r = sym_eigen(&a, Which::Largest, 5).unwrap();
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        check_contract(&a, &r);
    }

    #[test]
    fn random_30_matches_jacobi() {
        let a = random_symmetric(30, 17);
        let r = sym_eigen(&a, Which::Smallest, 30).unwrap();
        let oracle = jacobi_eigenvalues(&a);
        for (x, y) in r.values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        check_contract(&a, &r);
    }

    #[test]
    fn reconstruction_from_full_decomposition() {
        let a = random_symmetric(12, 3);
        let r = sym_eigen(&a, Which::Smallest, 12).unwrap();
        let norm = a.frobenius_norm();
        for i in 0..12 {
            for j in 0..12 {
                let v: f64 = (0..12).map(|k| r.vectors.get(i, k) * r.values[k] * r.vectors.get(j, k)).sum();
                assert!((v - a.get(i, j)).abs() < 1e-6 * norm);
            }
        }
    }

    #[test]
    fn largest_selection_and_sign() {
        let a = random_symmetric(8, 5);
        let all = sym_eigen(&a, Which::Smallest, 8).unwrap();
        let top = sym_eigen(&a, Which::Largest, 3).unwrap();
        assert_eq!(&all.values[5..], top.values.as_slice());
        for j in 0..3 {
            let v = top.vector(j);
            let big = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rejects_bad_m_and_asymmetry() {
        let a = Matrix::identity(3);
        assert!(sym_eigen(&a, Which::Smallest, 0).is_err());
        assert!(sym_eigen(&a, Which::Smallest, 4).is_err());
        let b = Matrix::from_vec(2, 2, vec![1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&b, Which::Smallest, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn generalized_two_node_laplacian() {
        let l = Matrix::from_vec(2, 2, vec![1.0, -1.0, -1.0, 1.0]);
        let r = generalized_sym_eigen(&l, &[1.0, 1.0], 2).unwrap();
        assert!(r.values[0].abs() < 1e-12);
        assert!((r.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_rejects_nonpositive_b() {
        let l = Matrix::identity(2);
        assert!(matches!(generalized_sym_eigen(&l, &[1.0, 0.0], 1), Err(Error::Parameter(_))));
    }

    fn random_laplacian(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = seeded(seed);
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.4 {
                    let w = rng.random::<f64>();
                    l.set(i, j, -w);
                    l.set(j, i, -w);
                }
            }
        }
        let mut deg = vec![0.0; n];
        for i in 0..n {
            deg[i] = -(0..n).map(|j| l.get(i, j)).sum::<f64>() + 1e-3;
            l.set(i, i, deg[i] - 1e-3);
        }
        (l, deg)
    }

    #[test]
    fn generalized_matches_congruence_oracle() {
        let (l, deg) = random_laplacian(20, 8);
        let r = generalized_sym_eigen(&l, &deg, 20).unwrap();
        let mut c = l.clone();
        for i in 0..20 {
            for j in 0..20 {
                c.data[i * 20 + j] /= (deg[i] * deg[j]).sqrt();
            }
        }
        let oracle = jacobi_eigenvalues(&c);
        for (x, y) in r.values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8);
        }
        // constant vector is the null vector; residual and B-orthonormality
        assert!(r.values[0].abs() < 1e-10);
        let v0 = r.vector(0);
        assert!(v0.iter().all(|x| (x - v0[0]).abs() < 1e-8));
        for j in 0..20 {
            let v = r.vector(j);
            let lv = l.mul_vec(&v);
            let res: f64 = lv.iter().zip(&v).zip(&deg).map(|((a, x), d)| (a - r.values[j] * d * x).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-8 * l.frobenius_norm());
            let dn: f64 = v.iter().zip(&deg).map(|(x, d)| x * x * d).sum();
            assert!((dn - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn double_center_collinear() {
        let d2 = Matrix::from_vec(3, 3, vec![0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
        let b = double_center(&d2).unwrap();
        let r = sym_eigen(&b, Which::Largest, 3).unwrap();
        assert!((r.values[2] - 2.0).abs() < 1e-12);
        assert!(r.values[0].abs() < 1e-12 && r.values[1].abs() < 1e-12);
        let v = r.vector(2);
        assert!((v[0] + v[2]).abs() < 1e-12 && v[1].abs() < 1e-12);
        assert!((v[2].abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn double_center_zero_and_row_sums() {
        let z = double_center(&Matrix::zeros(4, 4)).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
        let mut rng = seeded(2);
        let n = 15;
        let mut d2 = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random::<f64>() * 10.0;
                d2.set(i, j, v);
                d2.set(j, i, v);
            }
        }
        let b = double_center(&d2).unwrap();
        let maxd = d2.data.iter().cloned().fold(0.0, f64::max);
        for i in 0..n {
            assert!(b.row(i).iter().sum::<f64>().abs() < 1e-9 * n as f64 * maxd);
        }
    }

    #[test]
    fn classical_mds_recovers_distances() {
        let mut rng = seeded(4);
        let n = 10;
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let dist = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
        let d2 = Matrix::from_vec(n, n, (0..n * n).map(|k| dist(&pts[k / n], &pts[k % n])).collect());
        let b = double_center(&d2).unwrap();
        let r = sym_eigen(&b, Which::Largest, 3).unwrap();
        let y: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..3).map(|j| r.vectors.get(i, j) * r.values[j].max(0.0).sqrt()).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                let e: f64 = (0..3).map(|k| (y[i][k] - y[j][k]).powi(2)).sum::<f64>().sqrt();
                assert!((e - d2.get(i, j).sqrt()).abs() < 1e-6);
            }
        }
    }
}
