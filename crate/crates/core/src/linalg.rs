//! Dense complex Hermitian matrices and a cyclic Jacobi eigensolver.
//!
//! Matrices here are tiny (a handful of levels), so a dense row-major layout
//! and Jacobi rotations are both accurate to roundoff and fast enough to
//! diagonalize once per time step.

use std::ops::{Mul, Sub};

use num_complex::Complex64;

use crate::error::{QslError, Result};

pub type C64 = Complex64;

const MAX_SWEEPS: usize = 64;

/// Square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    /// Builds a matrix from row-major entries, rejecting non-Hermitian input.
    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(QslError::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let m = Self { dim, entries };
        if !m.is_hermitian(1e-12) {
            return Err(QslError::InvalidParameter(
                "matrix is not Hermitian".into(),
            ));
        }
        Ok(m)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = C64::new(d, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim + col]
    }

    /// Sets a symmetric pair of entries, keeping the matrix Hermitian.
    pub fn set_pair(&mut self, row: usize, col: usize, value: C64) {
        if row == col {
            self.entries[row * self.dim + row] = C64::new(value.re, 0.0);
        } else {
            self.entries[row * self.dim + col] = value;
            self.entries[col * self.dim + row] = value.conj();
        }
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hermiticity check, `tol` relative to the largest entry magnitude.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.dim).all(|i| {
            (i..self.dim).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol * scale)
        })
    }

    /// Bandwidth-1 check.
    pub fn is_tridiagonal(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| i.abs_diff(j) <= 1 || self.get(i, j) == C64::new(0.0, 0.0))
        })
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim)
            .map(|i| {
                self.entries[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `<u|A|v>`.
    pub fn braket(&self, u: &[C64], v: &[C64]) -> C64 {
        u.iter()
            .zip(self.apply(v))
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn eigh(&self) -> Eigh {
        jacobi_eigh(self)
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim, rhs.dim);
        HermitianMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn mul(self, rhs: f64) -> HermitianMatrix {
        HermitianMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|a| a * rhs).collect(),
        }
    }
}

/// Eigendecomposition `A = V diag(values) V^†`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Column-major: eigenvector `k` occupies `vectors[k*n..(k+1)*n]`.
    pub vectors: Vec<C64>,
}

impl Eigh {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> &[C64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Writes `exp(-i A t) psi` into `out`.
    pub fn evolve_into(&self, psi: &[C64], t: f64, out: &mut [C64]) {
        let n = self.dim();
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for k in 0..n {
            let v = self.vector(k);
            let mut c: C64 = v.iter().zip(psi).map(|(a, b)| a.conj() * b).sum();
            c *= C64::from_polar(1.0, -self.values[k] * t);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
    }

    pub fn evolve(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        self.evolve_into(psi, t, &mut out);
        out
    }
}

fn jacobi_eigh(m: &HermitianMatrix) -> Eigh {
    let n = m.dim;
    let mut a = m.entries.clone();
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = C64::new(1.0, 0.0);
    }
    let scale = m.max_abs();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].norm_sqr())
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r <= f64::EPSILON * 1e-3 * scale {
                    continue;
                }
                let phase = apq / r;
                let theta = (a[q * n + q].re - a[p * n + p].re) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = D R, D = diag(.., e^{-i phi} at q), R a real Givens rotation.
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = -phase.conj() * s;
                let u_qq = phase.conj() * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * u_pp + akq * u_qp;
                    a[k * n + q] = akp * u_pq + akq * u_qq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[q * n + k] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[p * n + q] = C64::new(0.0, 0.0);
                a[q * n + p] = C64::new(0.0, 0.0);
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * u_pp + vkq * u_qp;
                    v[k * n + q] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&k| a[k * n + k].re).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        vectors.extend((0..n).map(|i| v[i * n + k]));
    }
    Eigh { values, vectors }
}
