//! Cholesky factorization, cyclic Jacobi eigenvalues and Gram-based singular
//! values.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::matrix::{axpy, dot, Matrix};

const SYMMETRY_TOL: f64 = 1e-10;

fn check_symmetric(s: &Matrix, what: &str) -> Result<()> {
    let asym = s
        .asymmetry()
        .ok_or_else(|| Error::Contract(format!("{what} needs a square matrix, got {}x{}", s.rows(), s.cols())))?;
    let scale = s.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    ensure!(
        asym <= SYMMETRY_TOL * scale,
        Error::Contract(format!("{what} needs a symmetric matrix (asymmetry {asym:e})"))
    );
    Ok(())
}

/// Lower Cholesky factor `L` with `L·Lᵀ = S`, and `ln det S`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
    logdet: f64,
}

impl Cholesky {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn into_parts(self) -> (Matrix, f64) {
        (self.lower, self.logdet)
    }

    /// Solves `X·S = B` (equivalently `S·Xᵀ = Bᵀ`), returning `X = B·S⁻¹`.
    pub fn solve_right(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lower.rows();
        ensure!(
            b.cols() == n,
            Error::DimensionMismatch(format!("solve_right with {}x{} rhs for order {n}", b.rows(), b.cols()))
        );
        // Work on the transposed right-hand side: row i holds component i of
        // every system, so both substitutions become row axpys.
        let m = b.rows();
        let mut y = b.transpose();
        let l = &self.lower;
        {
            let buf = y.as_mut_slice();
            // forward: L·Y = Bᵀ
            for i in 0..n {
                let (done, rest) = buf.split_at_mut(i * m);
                let row = &mut rest[..m];
                for (k, &lik) in l.row(i)[..i].iter().enumerate() {
                    if lik != 0.0 {
                        axpy(-lik, &done[k * m..(k + 1) * m], row);
                    }
                }
                let inv = 1.0 / l.get(i, i);
                row.iter_mut().for_each(|v| *v *= inv);
            }
            // backward: Lᵀ·X = Y
            for i in (0..n).rev() {
                let inv = 1.0 / l.get(i, i);
                let (head, rest) = buf.split_at_mut(i * m);
                let row = &mut rest[..m];
                row.iter_mut().for_each(|v| *v *= inv);
                for (k, &lik) in l.row(i)[..i].iter().enumerate() {
                    if lik != 0.0 {
                        axpy(-lik, row, &mut head[k * m..(k + 1) * m]);
                    }
                }
            }
        }
        let x = y.transpose();
        Matrix::from_raw_checked(x.rows(), x.cols(), x.into_vec(), "Cholesky::solve_right")
    }

    /// `S⁻¹`.
    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_right(&Matrix::identity(self.lower.rows()))
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix and its
/// log-determinant `2·Σ ln Lᵢᵢ`.
///
/// A zero or negative pivot yields [`Error::NotPositiveDefinite`] carrying the
/// pivot index.
pub fn cholesky_logdet(s: &Matrix) -> Result<Cholesky> {
    check_symmetric(s, "cholesky_logdet")?;
    let n = s.rows();
    let mut a = s.as_slice().to_vec();
    factor_lower_in_place(&mut a, n)?;
    // upper triangle still holds the input
    for i in 0..n {
        a[i * n + i + 1..(i + 1) * n].iter_mut().for_each(|v| *v = 0.0);
    }
    let logdet = (0..n).map(|i| 2.0 * libm::log(a[i * n + i])).sum();
    Ok(Cholesky {
        lower: Matrix::from_raw_checked(n, n, a, "cholesky_logdet")?,
        logdet,
    })
}

const BLOCK: usize = 64;

/// Right-looking blocked factorization on the lower triangle of a row-major
/// `n×n` buffer. The trailing update reads a packed copy of each panel.
fn factor_lower_in_place(a: &mut [f64], n: usize) -> Result<()> {
    let mut panel = Vec::new();
    for k0 in (0..n).step_by(BLOCK) {
        let k1 = (k0 + BLOCK).min(n);
        let kb = k1 - k0;
        // diagonal block
        for i in k0..k1 {
            for j in k0..=i {
                let (ri, rj) = (i * n, j * n);
                let partial = dot(&a[ri + k0..ri + j], &a[rj + k0..rj + j]);
                let v = a[ri + j] - partial;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                    }
                    a[ri + i] = libm::sqrt(v);
                } else {
                    a[ri + j] = v / a[rj + j];
                }
            }
        }
        if k1 == n {
            break;
        }
        // panel rows below the diagonal block
        for i in k1..n {
            for j in k0..k1 {
                let (ri, rj) = (i * n, j * n);
                let partial = dot(&a[ri + k0..ri + j], &a[rj + k0..rj + j]);
                a[ri + j] = (a[ri + j] - partial) / a[rj + j];
            }
        }
        let rows = n - k1;
        panel.clear();
        panel.reserve(rows * kb);
        for i in k1..n {
            panel.extend_from_slice(&a[i * n + k0..i * n + k1]);
        }
        trailing_update(a, n, k1, &panel, kb);
    }
    Ok(())
}

/// `A[i][j] -= P_i · P_j` for `k1 ≤ j ≤ i < n`.
fn trailing_update(a: &mut [f64], n: usize, k1: usize, panel: &[f64], kb: usize) {
    let rows = n - k1;
    let prow = |r: usize| &panel[r * kb..(r + 1) * kb];
    for jt in (0..rows).step_by(BLOCK) {
        let jt_end = (jt + BLOCK).min(rows);
        let mut i = jt;
        while i < rows {
            let group = (rows - i).min(4);
            if group == 4 {
                let (p0, p1, p2, p3) = (prow(i), prow(i + 1), prow(i + 2), prow(i + 3));
                let j_end = jt_end.min(i + 4);
                for j in jt..j_end {
                    let d = dot4(p0, p1, p2, p3, prow(j));
                    for (r, dr) in d.iter().enumerate() {
                        if j <= i + r {
                            a[(k1 + i + r) * n + k1 + j] -= dr;
                        }
                    }
                }
            } else {
                for r in i..i + group {
                    for j in jt..jt_end.min(r + 1) {
                        a[(k1 + r) * n + k1 + j] -= dot(prow(r), prow(j));
                    }
                }
            }
            i += group;
        }
    }
}

#[inline(always)]
fn dot4(p0: &[f64], p1: &[f64], p2: &[f64], p3: &[f64], q: &[f64]) -> [f64; 4] {
    let n = q.len();
    let (p0, p1, p2, p3) = (&p0[..n], &p1[..n], &p2[..n], &p3[..n]);
    let mut acc = [[0.0f64; 4]; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let b = c * 4;
        for l in 0..4 {
            let qv = q[b + l];
            acc[0][l] += p0[b + l] * qv;
            acc[1][l] += p1[b + l] * qv;
            acc[2][l] += p2[b + l] * qv;
            acc[3][l] += p3[b + l] * qv;
        }
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        out[r] = (acc[r][0] + acc[r][2]) + (acc[r][1] + acc[r][3]);
    }
    for k in chunks * 4..n {
        out[0] += p0[k] * q[k];
        out[1] += p1[k] * q[k];
        out[2] += p2[k] * q[k];
        out[3] += p3[k] * q[k];
    }
    out
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-12·‖S‖_F`.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(s, "sym_eigenvalues")?;
    let n = s.rows();
    let mut a = s.clone();
    let target = 1e-12 * s.frobenius_norm();
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        return Err(Error::Numeric(format!(
            "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.get(i, j) * a.get(i, j);
            }
        }
    }
    libm::sqrt(sum)
}

fn rotate(a: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let (app, aqq) = (a.get(p, p), a.get(q, q));
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_finite() {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + libm::sqrt(theta * theta + 1.0))
    } else {
        0.0
    };
    if t == 0.0 {
        a.set(p, q, 0.0);
        a.set(q, p, 0.0);
        return;
    }
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    let s = t * c;
    let n = a.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
}

/// Singular values, descending, from the eigenvalues of the smaller Gram
/// matrix. Negative eigenvalues (round-off) are clamped to zero.
pub fn singular_values(z: &Matrix) -> Vec<f64> {
    if z.rows() == 0 || z.cols() == 0 {
        return Vec::new();
    }
    let gram = if z.rows() >= z.cols() {
        z.gram()
    } else {
        z.transpose().gram()
    };
    let gram = gram.expect("Gram of a finite matrix");
    let eig = sym_eigenvalues(&gram).expect("Gram matrix is symmetric");
    eig.iter().rev().map(|&l| libm::sqrt(l.max(0.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn symmetrize(m: &Matrix) -> Matrix {
        let n = m.rows();
        let mut out = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }
    use crate::rng::{gaussian_matrix, SeededRng};

    fn random_spd(seed: u64, n: usize) -> Matrix {
        let g = gaussian_matrix(&mut SeededRng::new(seed), n + 3, n);
        let mut s = g.t_matmul(&g).unwrap();
        for i in 0..n {
            s.set(i, i, s.get(i, i) + 0.5);
        }
        symmetrize(&s)
    }

    #[test]
    fn identity_logdet_zero() {
        let c = cholesky_logdet(&Matrix::identity(3)).unwrap();
        assert_eq!(c.logdet(), 0.0);
        assert_eq!(c.lower(), &Matrix::identity(3));
    }

    #[test]
    fn two_by_two_logdet() {
        let s = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let c = cholesky_logdet(&s).unwrap();
        assert!((c.logdet() - 8f64.ln()).abs() < 1e-14);
        assert!((c.logdet() - 2.0794415).abs() < 1e-7);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        match cholesky_logdet(&s) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let s = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(cholesky_logdet(&s), Err(Error::Contract(_))));
        assert!(matches!(sym_eigenvalues(&s), Err(Error::Contract(_))));
        assert!(sym_eigenvalues(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn factor_reconstructs() {
        for seed in 0..10 {
            let s = random_spd(seed, 12);
            let c = cholesky_logdet(&s).unwrap();
            let back = c.lower().matmul_t(c.lower()).unwrap();
            let rel = back.sub(&s).unwrap().frobenius_norm() / s.frobenius_norm();
            assert!(rel < 1e-8, "{rel}");
        }
    }

    #[test]
    fn solve_right_inverts() {
        let s = random_spd(3, 9);
        let c = cholesky_logdet(&s).unwrap();
        let inv = c.inverse().unwrap();
        let eye = inv.matmul(&s).unwrap();
        assert!(eye.sub(&Matrix::identity(9)).unwrap().frobenius_norm() < 1e-9);
        let b = gaussian_matrix(&mut SeededRng::new(4), 5, 9);
        let x = c.solve_right(&b).unwrap();
        assert!(x.matmul(&s).unwrap().sub(&b).unwrap().frobenius_norm() < 1e-9);
    }

    #[test]
    fn eigenvalue_fixtures() {
        let d = Matrix::diag(&[3.0, 2.0]).unwrap();
        assert_eq!(sym_eigenvalues(&d).unwrap(), vec![2.0, 3.0]);
        let swap = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let e = sym_eigenvalues(&swap).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
        assert_eq!(sym_eigenvalues(&Matrix::identity(4)).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn eigenvalues_match_trace_and_logdet() {
        let s = random_spd(9, 20);
        let e = sym_eigenvalues(&s).unwrap();
        let trace: f64 = (0..20).map(|i| s.get(i, i)).sum();
        assert!((e.iter().sum::<f64>() - trace).abs() < 1e-9 * trace);
        let logdet: f64 = e.iter().map(|l| l.ln()).sum();
        assert!((logdet - cholesky_logdet(&s).unwrap().logdet()).abs() < 1e-8);
    }

    #[test]
    fn singular_value_fixtures() {
        assert_eq!(singular_values(&Matrix::zeros(3, 2)), vec![0.0, 0.0]);
        let d = Matrix::diag(&[3.0, 4.0]).unwrap();
        assert_eq!(singular_values(&d), vec![4.0, 3.0]);
        let col = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        let sv = singular_values(&col);
        assert_eq!(sv.len(), 1);
        assert!((sv[0] - 5.0).abs() < 1e-14);
        assert!(singular_values(&Matrix::zeros(0, 3)).is_empty());
    }
}
