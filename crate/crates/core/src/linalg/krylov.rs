//! Conjugate gradients and BiCGStab with optional Jacobi preconditioning and
//! optional single-vector deflation.
//!
//! Deflation solves `P A x̃ = P b` with `P = I - A z zᵀ / (zᵀ A z)` and then
//! adds the exact coarse correction along `z`. The bidomain step matrix has a
//! near-null vector (equal shifts of both potentials) whose eigenvalue is of
//! order of the regularization weight; deflating it keeps the Krylov iteration
//! well conditioned and makes the residual exactly orthogonal to `z`.

use super::sparse::{axpy, dot, norm2, CsrMatrix};
use super::LinalgError;

/// Residual floor below which a system counts as solved regardless of `‖b‖`.
pub const ABSOLUTE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `‖Ax - b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
    /// Verify structural symmetry (to 1e-12) before running CG.
    pub check_symmetry: bool,
    pub deflation: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 5000, jacobi: true, check_symmetry: false, deflation: None }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true residual norm `‖Ax - b‖₂`.
    pub residual: f64,
}

fn check_square(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>) -> Result<(), LinalgError> {
    if a.n_rows() != a.n_cols() {
        return Err(LinalgError::DimensionMismatch { expected: a.n_rows(), found: a.n_cols() });
    }
    if b.len() != a.n_rows() {
        return Err(LinalgError::DimensionMismatch { expected: a.n_rows(), found: b.len() });
    }
    if let Some(x0) = x0 {
        if x0.len() != a.n_rows() {
            return Err(LinalgError::DimensionMismatch { expected: a.n_rows(), found: x0.len() });
        }
    }
    Ok(())
}

fn jacobi_inverse(a: &CsrMatrix, enabled: bool) -> Result<Option<Vec<f64>>, LinalgError> {
    if !enabled {
        return Ok(None);
    }
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
        return Err(LinalgError::ZeroDiagonal { row });
    }
    Ok(Some(diag.iter().map(|d| 1.0 / d).collect()))
}

fn precondition(inv_diag: &Option<Vec<f64>>, r: &[f64], z: &mut [f64]) {
    match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    }
}

/// The operator `v ↦ P A v` and the coarse correction for one deflation vector.
struct Deflated<'a> {
    a: &'a CsrMatrix,
    z: Option<(&'a [f64], Vec<f64>, f64)>,
}

impl<'a> Deflated<'a> {
    fn new(a: &'a CsrMatrix, z: Option<&'a [f64]>) -> Result<Self, LinalgError> {
        let z = match z {
            None => None,
            Some(z) => {
                if z.len() != a.n_rows() {
                    return Err(LinalgError::DimensionMismatch { expected: a.n_rows(), found: z.len() });
                }
                let az = a.spmv(z)?;
                let coarse = dot(z, &az);
                if !(coarse.abs() > 0.0) {
                    return Err(LinalgError::InvalidStructure("deflation vector lies in the kernel".into()));
                }
                Some((z, az, coarse))
            }
        };
        Ok(Deflated { a, z })
    }

    /// `P v` in place.
    fn project(&self, v: &mut [f64]) {
        if let Some((z, az, coarse)) = &self.z {
            let c = dot(z, v) / coarse;
            axpy(-c, az, v);
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.a.spmv_into(v, out);
        self.project(out);
    }

    /// Maps the deflated iterate back to a solution of `A x = b`.
    fn finish(&self, b: &[f64], mut x: Vec<f64>) -> (Vec<f64>, f64) {
        let mut r = vec![0.0; b.len()];
        self.a.spmv_into(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        if let Some((z, az, coarse)) = &self.z {
            let c = dot(z, &r) / coarse;
            axpy(c, z, &mut x);
            axpy(-c, az, &mut r);
        }
        (x, norm2(&r))
    }
}

/// Restart rounds from the true residual.
const RESTARTS: usize = 4;

fn true_residual(op: &Deflated, pb: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    r.iter_mut().zip(pb).for_each(|(ri, bi)| *ri = bi - *ri);
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite systems.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolverOptions) -> Result<Solution, LinalgError> {
    check_square(a, b, x0)?;
    if !(opts.tol > 0.0) {
        return Err(LinalgError::InvalidTolerance(opts.tol));
    }
    if opts.check_symmetry {
        let defect = a.symmetry_defect();
        if defect > 1e-12 {
            return Err(LinalgError::NotSymmetric { defect });
        }
    }
    let n = b.len();
    let target = (opts.tol * norm2(b)).max(ABSOLUTE_FLOOR);
    if norm2(b) <= ABSOLUTE_FLOOR && x0.map_or(true, |x| x.iter().all(|&v| v == 0.0)) {
        return Ok(Solution { x: vec![0.0; n], iterations: 0, residual: norm2(b) });
    }
    let inv_diag = jacobi_inverse(a, opts.jacobi)?;
    let op = Deflated::new(a, opts.deflation.as_deref())?;

    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut pb = b.to_vec();
    op.project(&mut pb);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // The recurrence residual drifts from the true one near machine precision;
    // each round restarts from the true residual.
    for _ in 0..RESTARTS {
        true_residual(&op, &pb, &x, &mut r);
        if norm2(&r) <= target || iterations >= opts.max_iter {
            break;
        }
        precondition(&inv_diag, &r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while norm2(&r) > target && iterations < opts.max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            precondition(&inv_diag, &r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            iterations += 1;
        }
    }
    let (x, residual) = op.finish(b, x);
    if residual <= target {
        Ok(Solution { x, iterations, residual })
    } else {
        Err(LinalgError::NotConverged { best: x, iterations, residual })
    }
}

/// Jacobi-preconditioned BiCGStab for general nonsingular systems.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Solution, LinalgError> {
    check_square(a, b, x0)?;
    if !(opts.tol > 0.0) {
        return Err(LinalgError::InvalidTolerance(opts.tol));
    }
    let n = b.len();
    let target = (opts.tol * norm2(b)).max(ABSOLUTE_FLOOR);
    let inv_diag = jacobi_inverse(a, opts.jacobi)?;
    if norm2(b) <= ABSOLUTE_FLOOR && x0.map_or(true, |x| x.iter().all(|&v| v == 0.0)) {
        return Ok(Solution { x: vec![0.0; n], iterations: 0, residual: norm2(b) });
    }
    let op = Deflated::new(a, opts.deflation.as_deref())?;

    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut pb = b.to_vec();
    op.project(&mut pb);
    let mut r = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;
    true_residual(&op, &pb, &x, &mut r);
    let mut best = (norm2(&r), x.clone());

    for _ in 0..RESTARTS {
        true_residual(&op, &pb, &x, &mut r);
        if norm2(&r) <= target || iterations >= opts.max_iter {
            break;
        }
        let mut r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        while norm2(&r) > target && iterations < opts.max_iter {
            let rho_next = dot(&r_hat, &r);
            if rho_next.abs() < 1e-300 || omega == 0.0 {
                // Breakdown: restart the shadow residual.
                r_hat.copy_from_slice(&r);
                rho = 1.0;
                alpha = 1.0;
                omega = 1.0;
                v.iter_mut().for_each(|e| *e = 0.0);
                p.iter_mut().for_each(|e| *e = 0.0);
                iterations += 1;
                continue;
            }
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            p.iter_mut().zip(r.iter().zip(&v)).for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
            precondition(&inv_diag, &p, &mut y);
            op.apply(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                r_hat.copy_from_slice(&r);
                rho = 1.0;
                alpha = 1.0;
                omega = 1.0;
                iterations += 1;
                continue;
            }
            alpha = rho / rv;
            s.iter_mut().zip(r.iter().zip(&v)).for_each(|(si, (ri, vi))| *si = ri - alpha * vi);
            axpy(alpha, &y, &mut x);
            iterations += 1;
            if norm2(&s) <= target {
                r.copy_from_slice(&s);
                break;
            }
            precondition(&inv_diag, &s, &mut zs);
            op.apply(&zs, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            axpy(omega, &zs, &mut x);
            r.iter_mut().zip(s.iter().zip(&t)).for_each(|(ri, (si, ti))| *ri = si - omega * ti);
            let rn = norm2(&r);
            if rn < best.0 {
                best = (rn, x.clone());
            }
        }
    }
    let (x, residual) = op.finish(b, x);
    if residual <= target {
        return Ok(Solution { x, iterations, residual });
    }
    let (best_x, best_res) = op.finish(b, best.1);
    let (x, residual) = if best_res < residual { (best_x, best_res) } else { (x, residual) };
    Err(LinalgError::NotConverged { best: x, iterations, residual })
}
