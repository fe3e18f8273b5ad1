//! Tridiagonal storage, products and an LU factorization with partial
//! pivoting that can be reused for many right-hand sides.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FirnError, Result};

/// Square tridiagonal matrix held as three bands.
///
/// `sub[i]` is entry `(i + 1, i)`, `diag[i]` is `(i, i)` and `sup[i]` is `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalMatrix {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sub: vec![0.0; dim.saturating_sub(1)],
            diag: vec![0.0; dim],
            sup: vec![0.0; dim.saturating_sub(1)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.diag.fill(1.0);
        m
    }

    /// Builds a matrix from bands, checking their lengths.
    pub fn from_bands(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(FirnError::InvalidParameter(
                "empty tridiagonal matrix".into(),
            ));
        }
        for (band, context) in [(&sub, "sub-diagonal"), (&sup, "super-diagonal")] {
            if band.len() != n - 1 {
                return Err(FirnError::DimensionMismatch {
                    expected: n - 1,
                    actual: band.len(),
                    context,
                });
            }
        }
        Ok(Self { sub, diag, sup })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.sup[i]
        } else if i == j + 1 {
            self.sub[j]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n, "matvec operand length");
        assert_eq!(y.len(), n, "matvec output length");
        if n == 1 {
            y[0] = self.diag[0] * x[0];
            return;
        }
        y[0] = self.diag[0] * x[0] + self.sup[0] * x[1];
        for i in 1..n - 1 {
            y[i] = self.sub[i - 1] * x[i - 1] + self.diag[i] * x[i] + self.sup[i] * x[i + 1];
        }
        y[n - 1] = self.sub[n - 2] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    /// `Y = self * X` for a row-major block with `cols` columns.
    pub fn matmul_block_into(&self, x: &[f64], cols: usize, y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n * cols, "block operand size");
        assert_eq!(y.len(), n * cols, "block output size");
        for i in 0..n {
            let out = &mut y[i * cols..(i + 1) * cols];
            let d = self.diag[i];
            let mid = &x[i * cols..(i + 1) * cols];
            for (o, &v) in out.iter_mut().zip(mid) {
                *o = d * v;
            }
            if i > 0 {
                let s = self.sub[i - 1];
                let above = &x[(i - 1) * cols..i * cols];
                for (o, &v) in out.iter_mut().zip(above) {
                    *o += s * v;
                }
            }
            if i + 1 < n {
                let s = self.sup[i];
                let below = &x[(i + 1) * cols..(i + 2) * cols];
                for (o, &v) in out.iter_mut().zip(below) {
                    *o += s * v;
                }
            }
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &TridiagonalMatrix) {
        assert_eq!(self.dim(), other.dim(), "add_scaled dimension");
        for (a, b) in self.sub.iter_mut().zip(&other.sub) {
            *a += alpha * b;
        }
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += alpha * b;
        }
        for (a, b) in self.sup.iter_mut().zip(&other.sup) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let f = |v: &Vec<f64>| v.iter().map(|x| alpha * x).collect();
        Self {
            sub: f(&self.sub),
            diag: f(&self.diag),
            sup: f(&self.sup),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
        }
    }

    /// `(A + A^T) / 2`.
    pub fn symmetric_part(&self) -> Self {
        let off: Vec<f64> = self
            .sub
            .iter()
            .zip(&self.sup)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Self {
            sub: off.clone(),
            diag: self.diag.clone(),
            sup: off,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.sub == self.sup
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Max row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.sub[i - 1].abs();
                }
                if i + 1 < self.dim() {
                    s += self.sup[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.sub
            .iter()
            .chain(&self.diag)
            .chain(&self.sup)
            .all(|v| v.is_finite())
    }
}

/// LU factors of a tridiagonal matrix with row interchanges.
///
/// `U` has up to two super-diagonals (`du`, `du2`); `dl` holds the
/// elimination multipliers and `ipiv[i]` the row swapped with row `i`.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<usize>,
}

impl TridiagonalLu {
    pub fn factorize(a: &TridiagonalMatrix) -> Result<Self> {
        let n = a.dim();
        let mut dl = a.sub.clone();
        let mut d = a.diag.clone();
        let mut du = a.sup.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv: Vec<usize> = (0..n).collect();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(FirnError::Singular {
                        pivot: i,
                        diagnostic: None,
                    });
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                ipiv[i] = i + 1;
            }
        }
        if n > 0 && (d[n - 1] == 0.0 || !d[n - 1].is_finite()) {
            return Err(FirnError::Singular {
                pivot: n - 1,
                diagnostic: None,
            });
        }
        if let Some(i) = d.iter().position(|v| !v.is_finite()) {
            return Err(FirnError::Singular {
                pivot: i,
                diagnostic: Some("non-finite pivot".into()),
            });
        }
        Ok(Self {
            dl,
            d,
            du,
            du2,
            ipiv,
        })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "solve right-hand side length");
        for i in 0..n.saturating_sub(1) {
            if self.ipiv[i] == i {
                b[i + 1] -= self.dl[i] * b[i];
            } else {
                let bi = b[i];
                b[i] = b[i + 1];
                b[i + 1] = bi - self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A X = B` in place for a row-major block with `cols` columns.
    ///
    /// Every column goes through the same arithmetic as [`Self::solve_in_place`].
    pub fn solve_block_in_place(&self, b: &mut [f64], cols: usize) {
        let n = self.dim();
        assert_eq!(b.len(), n * cols, "block right-hand side size");
        if cols == 0 {
            return;
        }
        for i in 0..n.saturating_sub(1) {
            let f = self.dl[i];
            let (head, tail) = b.split_at_mut((i + 1) * cols);
            let ri = &mut head[i * cols..];
            let rn = &mut tail[..cols];
            if self.ipiv[i] == i {
                for (y, &x) in rn.iter_mut().zip(ri.iter()) {
                    *y -= f * x;
                }
            } else {
                for (x, y) in ri.iter_mut().zip(rn.iter_mut()) {
                    let bi = *x;
                    *x = *y;
                    *y = bi - f * *x;
                }
            }
        }
        let last = n - 1;
        let dn = self.d[last];
        for v in &mut b[last * cols..] {
            *v /= dn;
        }
        if n > 1 {
            let (head, tail) = b.split_at_mut(last * cols);
            let r = &mut head[(last - 1) * cols..];
            let (u, dd) = (self.du[last - 1], self.d[last - 1]);
            for (x, &y) in r.iter_mut().zip(tail.iter()) {
                *x = (*x - u * y) / dd;
            }
        }
        for i in (0..n.saturating_sub(2)).rev() {
            let (head, tail) = b.split_at_mut((i + 1) * cols);
            let r = &mut head[i * cols..];
            let (r1, r2) = tail.split_at(cols);
            let (u, u2, dd) = (self.du[i], self.du2[i], self.d[i]);
            for ((x, &y1), &y2) in r.iter_mut().zip(r1).zip(&r2[..cols]) {
                *x = (*x - u * y1 - u2 * y2) / dd;
            }
        }
    }

    /// Rebuilds `P L U` from the factors and returns `||P L U - A||_inf / ||A||_inf`.
    pub fn reconstruction_error(&self, a: &TridiagonalMatrix) -> f64 {
        let n = self.dim();
        let mut x = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            x[(i, i)] = self.d[i];
            if i + 1 < n {
                x[(i, i + 1)] = self.du[i];
            }
            if i + 2 < n {
                x[(i, i + 2)] = self.du2[i];
            }
        }
        for i in (0..n.saturating_sub(1)).rev() {
            for c in 0..n {
                let v = x[(i, c)];
                x[(i + 1, c)] += self.dl[i] * v;
            }
            if self.ipiv[i] != i {
                x.swap_rows(i, i + 1);
            }
        }
        let diff = x - a.to_dense();
        let err = (0..n)
            .map(|i| diff.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let scale = a.norm_inf();
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }

    /// Number of row interchanges performed.
    pub fn interchanges(&self) -> usize {
        self.ipiv
            .iter()
            .enumerate()
            .filter(|(i, &p)| p != *i)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tridiagonal(n: usize, dominant: bool, rng: &mut ChaCha8Rng) -> TridiagonalMatrix {
        let sub: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sup: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let diag = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(-1.0..1.0);
                if dominant {
                    v.signum() * (2.5 + v.abs())
                } else {
                    v
                }
            })
            .collect();
        TridiagonalMatrix::from_bands(sub, diag, sup).unwrap()
    }

    #[test]
    fn identity_solve_returns_input() {
        let lu = TridiagonalLu::factorize(&TridiagonalMatrix::identity(5)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(lu.solve(&b), b);
    }

    #[test]
    fn dominant_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tridiagonal(10, true, &mut rng);
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = TridiagonalLu::factorize(&a).unwrap().solve(&b);
        let r = a.matvec(&x);
        let res = r
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(res <= 1e-12, "residual {res}");
    }

    #[test]
    fn pivoting_reconstruction_and_block_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 8, 33] {
            let a = random_tridiagonal(n, false, &mut rng);
            let lu = TridiagonalLu::factorize(&a).unwrap();
            assert!(lu.reconstruction_error(&a) <= 1e-12);
            let cols = 4;
            let block: Vec<f64> = (0..n * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut solved = block.clone();
            lu.solve_block_in_place(&mut solved, cols);
            for c in 0..cols {
                let col: Vec<f64> = (0..n).map(|i| block[i * cols + c]).collect();
                let x = lu.solve(&col);
                for i in 0..n {
                    assert_eq!(x[i], solved[i * cols + c]);
                }
            }
        }
    }

    #[test]
    fn pivoting_is_exercised() {
        let a = TridiagonalMatrix::from_bands(vec![1.0, 1.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0])
            .unwrap();
        let lu = TridiagonalLu::factorize(&a).unwrap();
        assert!(lu.interchanges() > 0);
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let r = a.matvec(&x);
        for (p, q) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let a = TridiagonalMatrix::from_bands(vec![0.0], vec![1.0, 0.0], vec![0.0]).unwrap();
        match TridiagonalLu::factorize(&a) {
            Err(FirnError::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn block_matmul_matches_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tridiagonal(6, false, &mut rng);
        let cols = 3;
        let x: Vec<f64> = (0..6 * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 6 * cols];
        a.matmul_block_into(&x, cols, &mut y);
        for c in 0..cols {
            let col: Vec<f64> = (0..6).map(|i| x[i * cols + c]).collect();
            let yc = a.matvec(&col);
            for i in 0..6 {
                assert!((yc[i] - y[i * cols + c]).abs() < 1e-15);
            }
        }
    }
}
