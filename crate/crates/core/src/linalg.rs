//! Small dense square matrices: products, LU solves and the real
//! nonsymmetric eigenvalue problem (balance, Hessenberg reduction, shifted QR).
//!
//! Everything here is sized for the 3x3 and 4x4 systems of the model; no
//! attempt is made at blocking or cache efficiency.

#![allow(clippy::needless_range_loop)]

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    /// Builds a matrix from rows; panics if the rows do not form a square.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n, "matrix rows must have length {n}");
            data.extend_from_slice(r);
        }
        Matrix { n, data }
    }

    /// Wraps a row-major buffer of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n);
        Matrix { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_row_major(self) -> Vec<T> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Solves `self * x = b` by LU factorisation with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.max_abs();
        let tiny = T::epsilon() * scale * T::from_usize_lossy(n);
        for col in 0..n {
            let (pivot, pmax) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tiny || pmax == T::zero() {
                return Err(Error::SingularMatrix);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                x.swap(pivot, col);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] = a[r * n + j] - f * v;
                }
                x[r] = x[r] - f * x[col];
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in r + 1..n {
                s = s - a[r * n + j] * x[j];
            }
            x[r] = s / a[r * n + r];
        }
        Ok(x)
    }

    /// All eigenvalues, unordered. Complex pairs appear as conjugates.
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        let n = self.n;
        if n == 0 {
            return Vec::new();
        }
        let mut a: Vec<Vec<T>> = (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].to_vec())
            .collect();
        balance(&mut a);
        to_hessenberg(&mut a);
        hessenberg_qr(&mut a)
    }

    /// Maximum eigenvalue modulus.
    pub fn spectral_radius(&self) -> T {
        self.eigenvalues()
            .iter()
            .fold(T::zero(), |m, z| m.max(z.norm()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                write!(f, "{:?} ", self.data[i * self.n + j])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Sorts eigenvalues by modulus, largest first. Ties keep the real part order.
pub fn sort_by_modulus_desc<T: Real>(values: &mut [Complex<T>]) {
    values.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

// Diagonal similarity scaling by powers of two so row and column norms match.
fn balance<T: Real>(a: &mut [Vec<T>]) {
    let n = a.len();
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c = c + a[j][i].abs();
                    r = r + a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f = f * radix;
                    c = c * sqrdx;
                }
                g = r * radix;
                while c > g {
                    f = f / radix;
                    c = c / sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 0..n {
                        a[i][j] = a[i][j] * g;
                    }
                    for row in a.iter_mut() {
                        row[i] = row[i] * f;
                    }
                }
            }
        }
    }
}

// Gaussian elimination with pivoting to upper Hessenberg form; entries below
// the subdiagonal are zeroed on exit.
fn to_hessenberg<T: Real>(a: &mut [Vec<T>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut piv = m;
        for (j, row) in a.iter().enumerate().skip(m) {
            if row[m - 1].abs() > x.abs() {
                x = row[m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y = y / x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        let v = a[m][j];
                        a[i][j] = a[i][j] - y * v;
                    }
                    for row in a.iter_mut() {
                        let v = row[i];
                        row[m] = row[m] + y * v;
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = T::zero();
        }
    }
}

const MAX_QR_SWEEPS: usize = 60;

// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
fn hessenberg_qr<T: Real>(a: &mut [Vec<T>]) -> Vec<Complex<T>> {
    let n = a.len() as isize;
    let eps = T::epsilon();
    let half = T::lit(0.5);
    let mut wri = vec![Complex::new(T::zero(), T::zero()); n as usize];
    let mut anorm = T::zero();
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm = anorm + at(a, i, j).abs();
        }
    }
    let mut nn = n - 1;
    let mut t = T::zero();
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == T::zero() {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    set(a, l, l - 1, T::zero());
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                wri[nn as usize] = Complex::new(x + t, T::zero());
                nn -= 1;
                break;
            }
            let mut y = at(a, nn - 1, nn - 1);
            let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
            if l == nn - 1 {
                let p = half * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x = x + t;
                if q >= T::zero() {
                    z = p + if p >= T::zero() { z } else { -z };
                    let first = x + z;
                    let second = if z != T::zero() { x - w / z } else { first };
                    wri[(nn - 1) as usize] = Complex::new(first, T::zero());
                    wri[nn as usize] = Complex::new(second, T::zero());
                } else {
                    wri[nn as usize] = Complex::new(x + p, -z);
                    wri[(nn - 1) as usize] = Complex::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_QR_SWEEPS {
                // Unconverged block: report its diagonal as the best estimate.
                for i in l..=nn {
                    wri[i as usize] = Complex::new(at(a, i, i) + t, T::zero());
                }
                nn = l - 1;
                break;
            }
            if its > 0 && its.is_multiple_of(10) {
                // Exceptional shift.
                t = t + x;
                for i in 0..=nn {
                    let v = at(a, i, i);
                    set(a, i, i, v - x);
                }
                let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            its += 1;

            let (mut p, mut q, mut r, mut z);
            let mut m = nn - 2;
            loop {
                z = at(a, m, m);
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - r - s0;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..nn - 1 {
                set(a, i + 2, i, T::zero());
                if i != m {
                    set(a, i + 2, i - 1, T::zero());
                }
            }
            for k in m..nn {
                let mut xk = T::zero();
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = if k + 1 != nn { at(a, k + 2, k - 1) } else { T::zero() };
                    xk = p.abs() + q.abs() + r.abs();
                    if xk != T::zero() {
                        p = p / xk;
                        q = q / xk;
                        r = r / xk;
                    }
                }
                let norm = (p * p + q * q + r * r).sqrt();
                let s = if p >= T::zero() { norm } else { -norm };
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            let v = at(a, k, k - 1);
                            set(a, k, k - 1, -v);
                        }
                    } else {
                        set(a, k, k - 1, -s * xk);
                    }
                    p = p + s;
                    let xs = p / s;
                    let ys = q / s;
                    let zs = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..=nn {
                        let mut pp = at(a, k, j) + q * at(a, k + 1, j);
                        if k + 1 != nn {
                            pp = pp + r * at(a, k + 2, j);
                            let v = at(a, k + 2, j);
                            set(a, k + 2, j, v - pp * zs);
                        }
                        let v1 = at(a, k + 1, j);
                        set(a, k + 1, j, v1 - pp * ys);
                        let v0 = at(a, k, j);
                        set(a, k, j, v0 - pp * xs);
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = xs * at(a, i, k) + ys * at(a, i, k + 1);
                        if k + 1 != nn {
                            pp = pp + zs * at(a, i, k + 2);
                            let v = at(a, i, k + 2);
                            set(a, i, k + 2, v - pp * r);
                        }
                        let v1 = at(a, i, k + 1);
                        set(a, i, k + 1, v1 - pp * q);
                        let v0 = at(a, i, k);
                        set(a, i, k, v0 - pp);
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    wri
}

#[inline]
fn at<T: Copy>(a: &[Vec<T>], i: isize, j: isize) -> T {
    a[i as usize][j as usize]
}

#[inline]
fn set<T>(a: &mut [Vec<T>], i: isize, j: isize, v: T) {
    a[i as usize][j as usize] = v;
}
