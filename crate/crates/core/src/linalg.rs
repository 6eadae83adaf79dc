//! Dense real/complex matrix services.
//!
//! nalgebra supplies storage, LU, SVD, Hessenberg reduction and the symmetric
//! eigensolver. The complex Schur form with eigenvalue reordering is written
//! here because invariant subspaces must come from an ordered Schur basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;
pub type RealVector = DVector<f64>;

/// Absolute floor applied to every norm-relative tolerance.
pub const ABS_FLOOR: f64 = 1e-14;

const SCHUR_MAX_SWEEPS_PER_EIG: usize = 60;

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn symmetrize(m: &RealMatrix) -> RealMatrix {
    (m + m.transpose()) * 0.5
}

/// Solve `M X = rhs` by partially pivoted LU.
pub fn solve_linear(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "solve: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if rhs.nrows() != m.nrows() {
        return Err(Error::dim(format!(
            "solve: rhs has {} rows, matrix has {}",
            rhs.nrows(),
            m.nrows()
        )));
    }
    let threshold = (1e-14 * m.norm()).max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let u = lu.u();
    let pivot = (0..u.nrows())
        .map(|i| u[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if m.nrows() > 0 && pivot <= threshold {
        return Err(Error::SingularMatrix { pivot, threshold });
    }
    lu.solve(rhs)
        .ok_or(Error::SingularMatrix { pivot, threshold })
}

pub fn solve_real(m: &RealMatrix, rhs: &RealMatrix) -> Result<RealMatrix> {
    Ok(solve_linear(&to_complex(m), &to_complex(rhs))?.map(|z| z.re))
}

pub fn inverse(m: &RealMatrix) -> Result<RealMatrix> {
    solve_real(m, &RealMatrix::identity(m.nrows(), m.nrows()))
}

/// Largest singular value.
// Singular values come from the Hermitian eigenproblem of the smaller Gram
// matrix; nalgebra's ordered SVD is unreliable on rank-deficient input.
fn gram_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let g = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    g.symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0))
        .collect()
}

/// Largest singular value.
pub fn operator_norm2(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    gram_eigenvalues(m)
        .into_iter()
        .fold(0.0_f64, f64::max)
        .sqrt()
}

pub fn operator_norm2_real(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    symmetrize(&g)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |a, &l| a.max(l))
        .sqrt()
}

/// Smallest singular value of a tall or square matrix.
pub fn min_singular_value(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(&(m.transpose() * m))
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l))
        .max(0.0)
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub eigenvalues: RealVector,
    pub eigenvectors: RealMatrix,
}

impl SymmetricEigen {
    pub fn count_negative(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < -tol).count()
    }

    pub fn count_positive(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn symmetric_eigen(m: &RealMatrix) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::dim("symmetric_eigen: matrix is not square"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            eigenvalues: RealVector::zeros(0),
            eigenvectors: RealMatrix::zeros(0, 0),
        });
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = RealVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = RealMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        eigenvectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Complex Schur form `M = Z T Zᴴ` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub t: ComplexMatrix,
    pub z: ComplexMatrix,
}

struct Givens {
    c: f64,
    s: Complex64,
}

impl Givens {
    /// Rotation with `G [a; b] = [r; 0]`.
    fn zeroing(a: Complex64, b: Complex64) -> Option<Self> {
        let nb = b.norm();
        if nb == 0.0 {
            return None;
        }
        let na = a.norm();
        let r = na.hypot(nb);
        if na == 0.0 {
            return Some(Givens {
                c: 0.0,
                s: b.conj() / nb,
            });
        }
        Some(Givens {
            c: na / r,
            s: (a / na) * b.conj() / r,
        })
    }

    fn rows(&self, m: &mut ComplexMatrix, k: usize, cols: std::ops::Range<usize>) {
        for j in cols {
            let x = m[(k, j)];
            let y = m[(k + 1, j)];
            m[(k, j)] = x * self.c + self.s * y;
            m[(k + 1, j)] = -self.s.conj() * x + y * self.c;
        }
    }

    /// Right multiplication by `Gᴴ` on columns `k, k+1`.
    fn cols(&self, m: &mut ComplexMatrix, k: usize, rows: std::ops::Range<usize>) {
        for i in rows {
            let x = m[(i, k)];
            let y = m[(i, k + 1)];
            m[(i, k)] = x * self.c + y * self.s.conj();
            m[(i, k + 1)] = -x * self.s + y * self.c;
        }
    }
}

impl ComplexSchur {
    pub fn new(m: &RealMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("schur: matrix is not square"));
        }
        let n = m.nrows();
        if n == 0 {
            return Ok(ComplexSchur {
                t: ComplexMatrix::zeros(0, 0),
                z: ComplexMatrix::zeros(0, 0),
            });
        }
        let hess = m.clone().hessenberg();
        let mut t = to_complex(&hess.h());
        let mut z = to_complex(&hess.q());
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }

        let scale = m.norm().max(ABS_FLOOR);
        let eps = f64::EPSILON;
        let mut hi = n - 1;
        let mut its = 0usize;
        let mut total = 0usize;
        let cap = SCHUR_MAX_SWEEPS_PER_EIG * n.max(1);
        while hi > 0 {
            let mut lo = hi;
            while lo > 0 {
                let sub = t[(lo, lo - 1)].norm();
                let diag = t[(lo, lo)].norm() + t[(lo - 1, lo - 1)].norm();
                if sub <= eps * diag || sub <= eps * 1e-3 * scale {
                    t[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                    break;
                }
                lo -= 1;
            }
            if lo == hi {
                hi -= 1;
                its = 0;
                continue;
            }
            its += 1;
            total += 1;
            if total > cap {
                return Err(Error::NoConvergence { iterations: total });
            }

            let a = t[(hi - 1, hi - 1)];
            let b = t[(hi - 1, hi)];
            let c = t[(hi, hi - 1)];
            let d = t[(hi, hi)];
            let mu = if its % 11 == 10 {
                // exceptional shift to break cycles
                d + Complex64::new(0.75 * c.norm(), 0.5 * c.norm())
            } else {
                let half = (a - d) * 0.5;
                let disc = (half * half + b * c).sqrt();
                let l1 = (a + d) * 0.5 + disc;
                let l2 = (a + d) * 0.5 - disc;
                if (l1 - d).norm() <= (l2 - d).norm() {
                    l1
                } else {
                    l2
                }
            };

            for k in lo..=hi {
                t[(k, k)] -= mu;
            }
            let mut rots = Vec::with_capacity(hi - lo);
            for k in lo..hi {
                let g = Givens::zeroing(t[(k, k)], t[(k + 1, k)]);
                if let Some(g) = &g {
                    g.rows(&mut t, k, k..n);
                    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
                }
                rots.push(g);
            }
            for (off, g) in rots.iter().enumerate() {
                if let Some(g) = g {
                    let k = lo + off;
                    g.cols(&mut t, k, 0..(k + 2).min(hi + 1));
                    g.cols(&mut z, k, 0..n);
                }
            }
            for k in lo..=hi {
                t[(k, k)] += mu;
            }
        }
        Ok(ComplexSchur { t, z })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    fn swap(&mut self, p: usize) {
        let n = self.t.nrows();
        let a = self.t[(p, p)];
        let b = self.t[(p + 1, p + 1)];
        let x = self.t[(p, p + 1)];
        let y = b - a;
        // (x, y) is the eigenvector of the 2x2 block for b
        let Some(g) = Givens::zeroing(x, y) else {
            return;
        };
        g.rows(&mut self.t, p, p..n);
        g.cols(&mut self.t, p, 0..p + 2);
        g.cols(&mut self.z, p, 0..n);
        self.t[(p + 1, p)] = Complex64::new(0.0, 0.0);
    }

    /// Move every eigenvalue accepted by `select` to the leading block.
    /// Returns the size of that block.
    pub fn reorder<F: Fn(Complex64) -> bool>(&mut self, select: F) -> usize {
        let n = self.t.nrows();
        let mut placed = 0;
        for i in 0..n {
            if select(self.t[(i, i)]) {
                for p in (placed..i).rev() {
                    self.swap(p);
                }
                placed += 1;
            }
        }
        placed
    }
}

pub fn eig_general(m: &RealMatrix) -> Result<Vec<Complex64>> {
    Ok(ComplexSchur::new(m)?.eigenvalues())
}

/// Orthonormal real basis of the invariant subspace belonging to the selected
/// eigenvalues. The selection must be closed under conjugation.
pub fn invariant_subspace<F: Fn(Complex64) -> bool>(
    m: &RealMatrix,
    select: F,
) -> Result<RealMatrix> {
    let n = m.nrows();
    let mut schur = ComplexSchur::new(m)?;
    let k = schur.reorder(&select);
    if k == 0 {
        return Ok(RealMatrix::zeros(n, 0));
    }
    if k == n {
        return Ok(RealMatrix::identity(n, n));
    }
    // span(Z_k) is conjugation-closed exactly when its orthogonal projector is real
    let zk = schur.z.columns(0, k);
    let proj = &zk * zk.adjoint();
    let imag = proj.map(|z| z.im.abs()).max();
    if imag > 1e-6 {
        return Err(Error::dim(format!(
            "eigenvalue selection is not closed under conjugation (imaginary part {imag:.3e})"
        )));
    }
    let eig = symmetric_eigen(&proj.map(|z| z.re))?;
    let mut basis = RealMatrix::zeros(n, k);
    for c in 0..k {
        basis.set_column(c, &eig.eigenvectors.column(n - k + c));
    }
    Ok(canonical_signs(basis))
}

/// Flip column signs so the largest-magnitude entry of each column is positive.
pub fn canonical_signs(mut q: RealMatrix) -> RealMatrix {
    for mut col in q.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best + 1e-12 {
                best = x.abs();
                sign = x.signum();
            }
        }
        col *= sign;
    }
    q
}

/// Orthonormal basis of the column space, dropping directions with singular
/// value below `rel_tol` times the largest one.
pub fn orthonormal_basis(m: &RealMatrix, rel_tol: f64) -> RealMatrix {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return RealMatrix::zeros(n, 0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols()))
        .map(|i| r[(i, i)].abs())
        .collect();
    let top = diag.first().copied().unwrap_or(0.0);
    if top <= ABS_FLOOR {
        return RealMatrix::zeros(n, 0);
    }
    let rank = diag.iter().take_while(|&&d| d > rel_tol * top).count();
    qr.q().columns(0, rank).into_owned()
}

/// Orthonormal basis of the orthogonal complement of span(q), `q` orthonormal.
pub fn orthogonal_complement(q: &RealMatrix) -> Result<RealMatrix> {
    let n = q.nrows();
    let k = q.ncols();
    let proj = RealMatrix::identity(n, n) - q * q.transpose();
    let eig = symmetric_eigen(&proj)?;
    let mut out = RealMatrix::zeros(n, n - k);
    for c in 0..(n - k) {
        out.set_column(c, &eig.eigenvectors.column(k + c));
    }
    Ok(canonical_signs(out))
}

/// Largest principal angle between the column spaces of `a` and `b`.
pub fn max_principal_angle(a: &RealMatrix, b: &RealMatrix) -> f64 {
    let qa = orthonormal_basis(a, 1e-12);
    let qb = orthonormal_basis(b, 1e-12);
    if qa.ncols() != qb.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let resid = &qb - &qa * (qa.transpose() * &qb);
    operator_norm2_real(&resid).clamp(0.0, 1.0).asin()
}

/// Residual `‖M S − S (Sᵀ M S)‖` of a claimed invariant subspace.
pub fn invariance_residual(m: &RealMatrix, s: &RealMatrix) -> f64 {
    let ms = m * s;
    operator_norm2_real(&(&ms - s * (s.transpose() * &ms)))
}
