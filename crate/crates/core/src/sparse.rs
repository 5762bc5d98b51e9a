//! Compressed-row matrices and the Krylov/Uzawa solvers built on them.
//!
//! All loops run in a fixed order, so a solve is bitwise reproducible on one
//! platform.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};

/// Guard added to reference norms so a zero right-hand side counts as solved.
const NORM_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Anything that can apply `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal for Jacobi scaling, when cheaply available.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that end up exactly zero are dropped.
    pub fn assemble(triplets: &[(usize, usize, f64)], n_rows: usize, n_cols: usize) -> Result<Self> {
        for &(row, col, value) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(HomogError::Assembly {
                    row,
                    col,
                    value,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        // bucket by row, keeping input order inside a row
        let mut cursor = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[cursor[r]] = (c, v);
            cursor[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..n_rows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_indices.push(c);
                    values.push(sum);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Like [`CsrMatrix::assemble`] but rejects any asymmetry (exact compare).
    pub fn assemble_symmetric(triplets: &[(usize, usize, f64)], n: usize) -> Result<Self> {
        let m = Self::assemble(triplets, n, n)?;
        m.check_symmetric()?;
        Ok(m)
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let t = self.transpose();
        if t.row_offsets == self.row_offsets && t.col_indices == self.col_indices && t.values == self.values {
            return Ok(());
        }
        for r in 0..self.n_rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                let diff = (self.values[k] - self.get(c, r)).abs();
                if diff > 0.0 {
                    return Err(HomogError::NotSymmetric { row: r, col: c, diff });
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut cursor = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                col_indices[cursor[c]] = r;
                values[cursor[c]] = v;
                cursor[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut sum = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                sum += self.values[k] * x[self.col_indices[k]];
            }
            *out = sum;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// `y = A^T x` without forming the transpose.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            let xr = x[r];
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                y[self.col_indices[k]] += self.values[k] * xr;
            }
        }
        y
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, residual {:e}",
            if self.converged { "converged" } else { "not converged" },
            self.iterations,
            self.final_residual_norm
        )
    }
}

impl SolveReport {
    pub fn into_result(self, what: &str) -> Result<SolveReport> {
        if self.converged {
            Ok(self)
        } else {
            Err(HomogError::NotConverged {
                what: what.to_string(),
                report: self,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative tolerance on `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
    /// Restrict the solve to mean-zero vectors (constant null space).
    pub mean_zero: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-12,
            max_iter: 20_000,
            jacobi: false,
            mean_zero: false,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Subtracts the weighted mean: the result has `sum w_i v_i = 0`.
pub fn project_mean_zero(v: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if v.len() != weights.len() {
        return Err(HomogError::Shape(format!(
            "{} values vs {} weights",
            v.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(HomogError::ZeroWeight);
    }
    let mean = dot(v, weights) / total;
    Ok(v.iter().map(|x| x - mean).collect())
}

fn residual(a: &dyn LinearOperator, b: &[f64], x: &[f64], mean_zero: bool) -> Vec<f64> {
    let mut r = vec![0.0; b.len()];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if mean_zero {
        remove_mean(&mut r);
    }
    r
}

/// Conjugate gradient from a zero initial guess.
pub fn cg_solve(a: &dyn LinearOperator, b: &[f64], opts: &CgOptions) -> (Vec<f64>, SolveReport) {
    cg_solve_from(a, b, vec![0.0; b.len()], opts)
}

/// Conjugate gradient from `x0`. Convergence is measured against `||b||`
/// (the initial residual of the zero guess) and always confirmed on a
/// freshly computed residual; if the recursive residual has drifted the
/// iteration restarts from the true one.
pub fn cg_solve_from(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Vec<f64>,
    opts: &CgOptions,
) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    assert_eq!(a.dim(), n, "operator/rhs size mismatch");
    let mut b = b.to_vec();
    let mut x = x0;
    if opts.mean_zero {
        remove_mean(&mut b);
        remove_mean(&mut x);
    }
    let target = opts.tol * (norm2(&b) + NORM_GUARD);
    let inv_diag: Option<Vec<f64>> = if opts.jacobi {
        a.diagonal()
            .map(|d| d.iter().map(|&v| if v != 0.0 { 1.0 / v } else { 1.0 }).collect())
    } else {
        None
    };
    let precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        match &inv_diag {
            Some(inv) => z.extend(r.iter().zip(inv).map(|(ri, di)| ri * di)),
            None => z.extend_from_slice(r),
        }
        if opts.mean_zero && inv_diag.is_some() {
            remove_mean(z);
        }
    };

    let mut iterations = 0;
    let mut r = residual(a, &b, &x, opts.mean_zero);
    let mut z = Vec::with_capacity(n);
    let mut q = vec![0.0; n];
    'outer: loop {
        let mut rnorm = norm2(&r);
        if rnorm <= target {
            break;
        }
        precond(&r, &mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            if iterations >= opts.max_iter {
                break 'outer;
            }
            a.apply(&d, &mut q);
            let dq = dot(&d, &q);
            if dq <= 0.0 || !dq.is_finite() {
                break 'outer;
            }
            let alpha = rz / dq;
            for k in 0..n {
                x[k] += alpha * d[k];
                r[k] -= alpha * q[k];
            }
            if opts.mean_zero {
                remove_mean(&mut r);
            }
            iterations += 1;
            rnorm = norm2(&r);
            if rnorm <= target {
                r = residual(a, &b, &x, opts.mean_zero);
                continue 'outer;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                d[k] = z[k] + beta * d[k];
            }
        }
    }
    if opts.mean_zero {
        remove_mean(&mut x);
    }
    let final_residual_norm = norm2(&residual(a, &b, &x, opts.mean_zero));
    let report = SolveReport {
        iterations,
        final_residual_norm,
        converged: final_residual_norm <= target,
    };
    (x, report)
}

/// MINRES for symmetric (possibly indefinite) operators, zero initial guess.
pub fn minres_solve(a: &dyn LinearOperator, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    assert_eq!(a.dim(), n, "operator/rhs size mismatch");
    let target = tol * (norm2(b) + NORM_GUARD);
    let mut x = vec![0.0; n];
    let mut iterations = 0;

    'restart: loop {
        let mut r1 = residual(a, b, &x, false);
        let beta1 = norm2(&r1);
        if beta1 <= target || iterations >= max_iter {
            break;
        }
        let mut y = r1.clone();
        let mut r2 = r1.clone();
        let mut oldb = 0.0;
        let mut beta = beta1;
        let mut dbar = 0.0;
        let mut epsln = 0.0;
        let mut phibar = beta1;
        let mut cs = -1.0;
        let mut sn = 0.0;
        let mut w = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut local = 0;
        loop {
            if iterations >= max_iter {
                break 'restart;
            }
            let s = 1.0 / beta;
            for k in 0..n {
                v[k] = s * y[k];
            }
            a.apply(&v, &mut y);
            if local >= 1 {
                let c = beta / oldb;
                for k in 0..n {
                    y[k] -= c * r1[k];
                }
            }
            let alfa = dot(&v, &y);
            let c = alfa / beta;
            for k in 0..n {
                y[k] -= c * r2[k];
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            oldb = beta;
            beta = norm2(&y);
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            for k in 0..n {
                let w1 = w2[k];
                w2[k] = w[k];
                w[k] = (v[k] - oldeps * w1 - delta * w2[k]) / gamma;
                x[k] += phi * w[k];
            }
            iterations += 1;
            local += 1;
            if phibar <= target || beta == 0.0 {
                continue 'restart;
            }
        }
    }
    let final_residual_norm = norm2(&residual(a, b, &x, false));
    let report = SolveReport {
        iterations,
        final_residual_norm,
        converged: final_residual_norm <= target,
    };
    (x, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UzawaMethod {
    /// Conjugate gradient on the pressure Schur complement.
    ConjugateGradient,
    /// Classical Uzawa: `p <- p + step * B u` after every velocity solve.
    FixedStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UzawaOptions {
    /// Absolute bound on `||B u||` and bound on the momentum residual
    /// relative to `max(||f||, 1)`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: UzawaMethod,
    pub inner: CgOptions,
}

impl Default for UzawaOptions {
    fn default() -> Self {
        UzawaOptions {
            tol: 1e-9,
            max_iter: 2_000,
            method: UzawaMethod::ConjugateGradient,
            inner: CgOptions {
                tol: 1e-13,
                ..CgOptions::default()
            },
        }
    }
}

/// Saddle-point solve of `A u + B^T p = f`, `B u = 0` with `A` SPD and the
/// pressure defined up to constants (returned with zero mean).
pub fn uzawa_solve(a: &CsrMatrix, b: &CsrMatrix, f: &[f64], opts: &UzawaOptions) -> (Vec<f64>, Vec<f64>, SolveReport) {
    uzawa_solve_from(a, b, f, vec![0.0; b.n_rows()], opts)
}

/// [`uzawa_solve`] warm-started from the pressure `p0`.
pub fn uzawa_solve_from(
    a: &CsrMatrix,
    b: &CsrMatrix,
    f: &[f64],
    p0: Vec<f64>,
    opts: &UzawaOptions,
) -> (Vec<f64>, Vec<f64>, SolveReport) {
    let nu = a.n_rows();
    let np = b.n_rows();
    assert_eq!(b.n_cols(), nu, "B columns must match velocity size");
    assert_eq!(f.len(), nu, "forcing size mismatch");
    assert_eq!(p0.len(), np, "pressure size mismatch");
    let scale = norm2(f).max(1.0);
    let inner = CgOptions {
        mean_zero: false,
        ..opts.inner
    };
    let mut p = p0;
    remove_mean(&mut p);
    if norm2(f) == 0.0 && p.iter().all(|&v| v == 0.0) {
        return (
            vec![0.0; nu],
            p,
            SolveReport {
                iterations: 0,
                final_residual_norm: 0.0,
                converged: true,
            },
        );
    }

    let velocity = |p: &[f64], u0: Vec<f64>| -> Vec<f64> {
        let bt = b.transpose_mul_vec(p);
        let rhs: Vec<f64> = f.iter().zip(&bt).map(|(fi, gi)| fi - gi).collect();
        cg_solve_from(a, &rhs, u0, &inner).0
    };
    let measure = |u: &[f64], p: &[f64]| -> (f64, f64) {
        let div = norm2(&b.mul_vec(u));
        let au = a.mul_vec(u);
        let bt = b.transpose_mul_vec(p);
        let mom: Vec<f64> = au.iter().zip(&bt).zip(f).map(|((x, y), z)| x + y - z).collect();
        (div, norm2(&mom) / scale)
    };

    let mut u = velocity(&p, vec![0.0; nu]);
    let mut iterations = 0;
    match opts.method {
        UzawaMethod::ConjugateGradient => {
            let mut r = b.mul_vec(&u);
            remove_mean(&mut r);
            let mut d = r.clone();
            let mut rr = dot(&r, &r);
            while iterations < opts.max_iter {
                if rr.sqrt() <= opts.tol {
                    let (div, mom) = measure(&u, &p);
                    if div <= opts.tol && mom <= opts.tol {
                        break;
                    }
                    // recursive residual drifted: refresh and restart directions
                    u = velocity(&p, u);
                    r = b.mul_vec(&u);
                    remove_mean(&mut r);
                    rr = dot(&r, &r);
                    d = r.clone();
                    if rr.sqrt() <= opts.tol {
                        break;
                    }
                }
                let z = cg_solve(a, &b.transpose_mul_vec(&d), &inner).0;
                let q = b.mul_vec(&z);
                let dq = dot(&d, &q);
                if dq <= 0.0 || !dq.is_finite() {
                    break;
                }
                let alpha = rr / dq;
                for k in 0..np {
                    p[k] += alpha * d[k];
                    r[k] -= alpha * q[k];
                }
                for k in 0..nu {
                    u[k] -= alpha * z[k];
                }
                remove_mean(&mut r);
                iterations += 1;
                let rr_new = dot(&r, &r);
                let beta = rr_new / rr;
                rr = rr_new;
                for k in 0..np {
                    d[k] = r[k] + beta * d[k];
                }
            }
        }
        UzawaMethod::FixedStep(step) => {
            while iterations < opts.max_iter {
                let r = b.mul_vec(&u);
                if norm2(&r) <= opts.tol {
                    break;
                }
                for k in 0..np {
                    p[k] += step * r[k];
                }
                remove_mean(&mut p);
                u = velocity(&p, u);
                iterations += 1;
            }
        }
    }
    remove_mean(&mut p);
    let (div, mom) = measure(&u, &p);
    let final_residual_norm = div.max(mom);
    let report = SolveReport {
        iterations,
        final_residual_norm,
        converged: final_residual_norm <= opts.tol,
    };
    (u, p, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn dense(m: &CsrMatrix) -> DMatrix<f64> {
        let d = m.to_dense();
        DMatrix::from_fn(m.n_rows(), m.n_cols(), |r, c| d[r][c])
    }

    fn periodic_laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        CsrMatrix::assemble_symmetric(&t, n).unwrap()
    }

    #[test]
    fn assemble_identity_and_duplicates() {
        let id = CsrMatrix::assemble(&[(0, 0, 1.0), (1, 1, 1.0)], 2, 2).unwrap();
        assert_eq!(id.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let five = CsrMatrix::assemble(&[(0, 0, 2.0), (0, 0, 3.0)], 1, 1).unwrap();
        assert_eq!(five.nnz(), 1);
        assert_eq!(five.get(0, 0), 5.0);
        let sym = CsrMatrix::assemble_symmetric(&[(0, 1, 1.0), (0, 0, 4.0), (1, 0, 1.0), (1, 1, 3.0)], 2);
        assert!(sym.is_ok());
    }

    #[test]
    fn assemble_drops_zeros_and_sorts() {
        let m = CsrMatrix::assemble(&[(0, 2, 1.0), (0, 1, 1.0), (0, 2, -1.0)], 1, 3).unwrap();
        assert_eq!(m.col_indices(), &[1]);
    }

    #[test]
    fn assemble_errors() {
        let err = CsrMatrix::assemble(&[(0, 0, 1.0), (2, 0, 7.0)], 2, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 0, 7)"), "{msg}");
        let asym = CsrMatrix::assemble_symmetric(&[(0, 1, 1.0), (1, 0, 2.0)], 2);
        assert!(matches!(asym, Err(HomogError::NotSymmetric { .. })));
    }

    #[test]
    fn cg_identity() {
        let id = CsrMatrix::assemble(&[(0, 0, 1.0), (1, 1, 1.0)], 2, 2).unwrap();
        let (x, rep) = cg_solve(&id, &[1.0, 2.0], &CgOptions::default());
        assert!(rep.converged && rep.iterations <= 1);
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn cg_two_by_two() {
        // Gaussian elimination: x = (1/11, 7/11)
        let a = CsrMatrix::assemble_symmetric(&[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)], 2).unwrap();
        let (x, rep) = cg_solve(&a, &[1.0, 2.0], &CgOptions::default());
        assert!(rep.converged);
        assert_abs_diff_eq!(x[0], 1.0 / 11.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 7.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn cg_periodic_laplacian_matches_pseudoinverse() {
        for n in [8usize, 33, 64] {
            let a = periodic_laplacian_1d(n);
            let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64) - 2.0 + (i as f64 * 0.3).sin()).collect();
            let b = project_mean_zero(&b, &vec![1.0; n]).unwrap();
            let opts = CgOptions {
                mean_zero: true,
                tol: 1e-14,
                ..CgOptions::default()
            };
            let (x, rep) = cg_solve(&a, &b, &opts);
            assert!(rep.converged, "{rep}");
            let eig = dense(&a).symmetric_eigen();
            let mut pinv = DMatrix::zeros(n, n);
            for k in 0..n {
                let lam = eig.eigenvalues[k];
                if lam.abs() > 1e-10 {
                    let v = eig.eigenvectors.column(k);
                    pinv += (v * v.transpose()) / lam;
                }
            }
            let oracle = pinv * DVector::from_vec(b.clone());
            for k in 0..n {
                assert_abs_diff_eq!(x[k], oracle[k], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let a = periodic_laplacian_1d(64);
        let b: Vec<f64> = (0..64).map(|i| if i < 32 { 1.0 } else { -1.0 }).collect();
        let opts = CgOptions {
            max_iter: 3,
            mean_zero: true,
            ..CgOptions::default()
        };
        let (_, rep) = cg_solve(&a, &b, &opts);
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert!(rep.into_result("test").is_err());
    }

    #[test]
    fn cg_jacobi_agrees() {
        let mut t = Vec::new();
        let n = 30;
        for i in 0..n {
            t.push((i, i, 2.0 + i as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::assemble_symmetric(&t, n).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let (x1, _) = cg_solve(&a, &b, &CgOptions::default());
        let (x2, r2) = cg_solve(
            &a,
            &b,
            &CgOptions {
                jacobi: true,
                ..CgOptions::default()
            },
        );
        assert!(r2.converged);
        for k in 0..n {
            assert_abs_diff_eq!(x1[k], x2[k], epsilon = 1e-11);
        }
    }

    #[test]
    fn minres_indefinite() {
        let a = CsrMatrix::assemble_symmetric(
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, -3.0), (2, 2, -0.5), (1, 2, 1.0), (2, 1, 1.0)],
            3,
        )
        .unwrap();
        let b = [1.0, -1.0, 2.0];
        let (x, rep) = minres_solve(&a, &b, 1e-13, 100);
        assert!(rep.converged, "{rep}");
        let oracle = dense(&a).lu().solve(&DVector::from_row_slice(&b)).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(x[k], oracle[k], epsilon = 1e-11);
        }
    }

    #[test]
    fn mean_projection() {
        assert_eq!(project_mean_zero(&[1.0, 1.0, 1.0], &[1.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(project_mean_zero(&[1.0, 2.0, 3.0], &[1.0; 3]).unwrap(), vec![-1.0, 0.0, 1.0]);
        let v = project_mean_zero(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 2.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(project_mean_zero(&[1.0], &[0.0]), Err(HomogError::ZeroWeight)));
    }

    /// 1D channel saddle system: 3 velocities on interior faces, 4 pressures.
    fn tiny_saddle() -> (CsrMatrix, CsrMatrix) {
        let a = CsrMatrix::assemble_symmetric(
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
            3,
        )
        .unwrap();
        // B = -div: face k separates cells k and k+1
        let mut t = Vec::new();
        for k in 0..3 {
            t.push((k, k, 1.0));
            t.push((k + 1, k, -1.0));
        }
        let b = CsrMatrix::assemble(&t, 4, 3).unwrap();
        (a, b)
    }

    #[test]
    fn uzawa_zero_forcing() {
        let (a, b) = tiny_saddle();
        let (u, p, rep) = uzawa_solve(&a, &b, &[0.0; 3], &UzawaOptions::default());
        assert!(rep.converged);
        assert!(u.iter().all(|&x| x == 0.0) && p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uzawa_gradient_forcing() {
        let (a, b) = tiny_saddle();
        let q = [3.0, -1.0, 0.5, 2.0];
        let f = b.transpose_mul_vec(&q);
        let mean = q.iter().sum::<f64>() / 4.0;
        for method in [UzawaMethod::ConjugateGradient, UzawaMethod::FixedStep(1.0)] {
            let opts = UzawaOptions {
                method,
                ..UzawaOptions::default()
            };
            let (u, p, rep) = uzawa_solve(&a, &b, &f, &opts);
            assert!(rep.converged, "{method:?}: {rep}");
            for k in 0..3 {
                assert_abs_diff_eq!(u[k], 0.0, epsilon = 1e-9);
            }
            for k in 0..4 {
                assert_abs_diff_eq!(p[k], q[k] - mean, epsilon = 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn assembled_symmetric_is_exactly_symmetric(entries in prop::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..30)) {
            let mut t = Vec::new();
            for &(r, c, v) in &entries {
                t.push((r, c, v));
                t.push((c, r, v));
            }
            let m = CsrMatrix::assemble(&t, 6, 6).unwrap();
            let mt = m.transpose();
            for r in 0..6 {
                for c in 0..6 {
                    prop_assert_eq!(m.get(r, c), mt.get(r, c));
                }
            }
        }

        #[test]
        fn cg_is_deterministic_and_residual_is_honest(seed in 0u64..1000) {
            let n = 20;
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 3.0 + ((seed + i as u64) % 7) as f64));
                if i + 1 < n {
                    t.push((i, i + 1, -1.0));
                    t.push((i + 1, i, -1.0));
                }
            }
            let a = CsrMatrix::assemble_symmetric(&t, n).unwrap();
            let b: Vec<f64> = (0..n).map(|i| ((seed as f64) * 0.37 + i as f64).sin()).collect();
            let (x1, r1) = cg_solve(&a, &b, &CgOptions::default());
            let (x2, r2) = cg_solve(&a, &b, &CgOptions::default());
            prop_assert_eq!(&x1, &x2);
            prop_assert_eq!(r1, r2);
            prop_assert!(r1.converged);
            let ax = a.mul_vec(&x1);
            let res: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let fresh = norm2(&res);
            prop_assert!((fresh - r1.final_residual_norm).abs() <= 1e-12 * fresh.max(1e-300));
        }
    }
}
