//! Dense helpers: small complex matrices, a symmetric tridiagonal eigensolver
//! (implicit QL) and a complex Jacobi eigensolver for Hermitian matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds from row-major data; `data.len()` must be a perfect square.
    pub fn from_row_major(data: Vec<C64>) -> Result<Self> {
        let n = (data.len() as f64).sqrt().round() as usize;
        if n * n != data.len() {
            return Err(Error::ShapeMismatch("matrix data is not square"));
        }
        Ok(CMat { n, data })
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch("matrix data length"));
        }
        Ok(CMat { n, data: data.iter().map(|&x| C64::new(x, 0.0)).collect() })
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.data[i * d.len() + i] = x;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                row.iter().zip(x).map(|(&a, &b)| a * b).sum()
            })
            .collect()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.n, other.n);
        let n = a * b;
        let mut out = Self::zeros(n);
        for i in 0..a {
            for j in 0..a {
                let s = self.data[i * a + j];
                if s == ZERO {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        out.data[(i * b + k) * n + j * b + l] = s * other.data[k * b + l];
                    }
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Spectral norm, via the eigenvalues of `A†A`.
    pub fn op_norm(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let g = &self.adjoint() * self;
        match hermitian_eigen(&g, false) {
            Ok((vals, _)) => vals.iter().fold(0.0f64, |m, &v| m.max(v)).max(0.0).sqrt(),
            Err(_) => self.frobenius(),
        }
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        let n = self.n;
        assert_eq!(n, rhs.n, "dimension mismatch in matrix product");
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.n, rhs.n, "dimension mismatch in matrix sum");
        CMat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.n, rhs.n, "dimension mismatch in matrix difference");
        CMat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// Eigen-decomposition of the real symmetric tridiagonal matrix with
/// diagonal `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`).
///
/// Returns ascending eigenvalues and, if requested, the orthonormal
/// eigenvectors as columns of a row-major `n × n` array.
pub fn symmetric_tridiagonal_eigen(diag: &[f64], off: &[f64], vectors: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if off.len() + 1 != n {
        return Err(Error::ShapeMismatch("tridiagonal off-diagonal length"));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = if vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        z
    } else {
        Vec::new()
    };

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if vectors {
                    for k in 0..n {
                        let zk = &mut z[k * n..(k + 1) * n];
                        let t = zk[i + 1];
                        zk[i + 1] = s * zk[i] + c * t;
                        zk[i] = c * zk[i] - s * t;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&k| d[k]).collect();
    let vecs = if vectors {
        let mut out = vec![0.0; n * n];
        for (col, &k) in order.iter().enumerate() {
            for row in 0..n {
                out[row * n + col] = z[row * n + k];
            }
        }
        out
    } else {
        Vec::new()
    };
    Ok((vals, vecs))
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Returns ascending eigenvalues and (optionally) eigenvectors as the columns
/// of a [`CMat`]. Accurate to roughly machine precision times `‖A‖_F`.
pub fn hermitian_eigen(a: &CMat, vectors: bool) -> Result<(Vec<f64>, Option<CMat>)> {
    let n = a.dim();
    let mut m = a.clone();
    for i in 0..n {
        let d = m.get(i, i).re;
        m.set(i, i, C64::new(d, 0.0));
    }
    let mut v = if vectors { Some(CMat::identity(n)) } else { None };
    let scale = m.frobenius().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).norm_sqr();
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                let b = apq.norm();
                if b <= 1e-300 || b <= 1e-18 * scale {
                    continue;
                }
                let phase = apq / b;
                let (app, aqq) = (m.get(p, p).re, m.get(q, q).re);
                let theta = (aqq - app) / (2.0 * b);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                for k in 0..n {
                    let (x, y) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, x * gpp + y * gqp);
                    m.set(k, q, x * gpq + y * gqq);
                }
                for k in 0..n {
                    let (x, y) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, gpp.conj() * x + gqp.conj() * y);
                    m.set(q, k, gpq.conj() * x + gqq.conj() * y);
                }
                m.set(p, q, ZERO);
                m.set(q, p, ZERO);
                let (dp, dq) = (m.get(p, p).re, m.get(q, q).re);
                m.set(p, p, C64::new(dp, 0.0));
                m.set(q, q, C64::new(dq, 0.0));
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let (x, y) = (v.get(k, p), v.get(k, q));
                        v.set(k, p, x * gpp + y * gqp);
                        v.set(k, q, x * gpq + y * gqq);
                    }
                }
            }
        }
    }

    let mut off = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            off += m.get(i, j).norm_sqr();
        }
    }
    if off.sqrt() > 1e-12 * scale {
        return Err(Error::NoConvergence);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m.get(x, x).re.total_cmp(&m.get(y, y).re));
    let vals = order.iter().map(|&k| m.get(k, k).re).collect();
    let vecs = v.map(|v| {
        let mut out = CMat::zeros(n);
        for (col, &k) in order.iter().enumerate() {
            for row in 0..n {
                out.set(row, col, v.get(row, k));
            }
        }
        out
    });
    Ok((vals, vecs))
}

/// Trace distance `½‖ρ − σ‖₁` of two Hermitian matrices.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> Result<f64> {
    let d = rho - sigma;
    let (vals, _) = hermitian_eigen(&d, false)?;
    Ok(0.5 * vals.iter().map(|x| x.abs()).sum::<f64>())
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨x, y⟩`, conjugate-linear in `x`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn distance(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}
