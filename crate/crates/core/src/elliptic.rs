//! Linear solves for the finite-volume operator.
//!
//! [`solve_reaction_diffusion`] is the discrete form of the elliptic
//! comparison lemma: with `a ≥ a0 > 0`, `b ≥ b0 > 0` and `f ≥ 0` the
//! solution of `-div(a∇u) + b u = f` obeys `0 ≤ u ≤ sup f / b0`, and
//! `f ≥ λ b` forces `u ≥ λ`. Both conclusions are checked on every call.

use crate::error::{Error, Result};
use crate::grid::{assemble_operator_with, DiscreteOperator, FaceAveraging, Field, Mesh};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Postconditions are checked with slack `POSTCONDITION_SLACK · tol` relative
/// to `sup f / b0`.
pub const POSTCONDITION_SLACK: f64 = 10.0;

const MAX_RESTARTS: usize = 4;

/// Extremes seen by a maximum-principle solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsCertificate {
    pub min_u: f64,
    pub max_u: f64,
    pub b0: f64,
    pub sup_f: f64,
    /// Largest `λ` with `f ≥ λ b` cellwise.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual of the returned iterate, in the norm the solve stopped on.
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub certificate: Option<BoundsCertificate>,
}

pub fn default_max_iter(rows: usize) -> usize {
    (10 * rows).max(50)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(op: &DiscreteOperator, x: &[f64], rhs: &[f64], r: &mut [f64], norm: ResidualNorm) -> f64 {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    norm.of(r)
}

/// Norm in which the residual is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ResidualNorm {
    Euclidean,
    Max,
}

impl ResidualNorm {
    fn of(self, v: &[f64]) -> f64 {
        match self {
            ResidualNorm::Euclidean => dot(v, v).sqrt(),
            ResidualNorm::Max => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Jacobi-preconditioned CG from a zero start, stopping on the Euclidean
/// residual. Returns the last iterate whether or not the tolerance was met;
/// the report says which.
pub(crate) fn conjugate_gradient(
    op: &DiscreteOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    conjugate_gradient_in(op, rhs, tol, max_iter, ResidualNorm::Euclidean)
}

pub(crate) fn conjugate_gradient_in(
    op: &DiscreteOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    norm: ResidualNorm,
) -> (Vec<f64>, SolveReport) {
    let n = op.rows();
    let rhs_norm = norm.of(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            residual_norm: 0.0,
            relative_residual: 0.0,
            certificate: None,
        };
        return (x, report);
    }
    let target = tol * rhs_norm;
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = rhs_norm;

    'restart: for _ in 0..=MAX_RESTARTS {
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break;
            }
            let step = rz / pq;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * q[i];
            }
            iterations += 1;
            if norm.of(&r) <= target {
                // the recursive residual drifts; confirm against the real one
                residual = true_residual(op, &x, rhs, &mut r, norm);
                if residual <= target {
                    break 'restart;
                }
                continue 'restart;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        residual = true_residual(op, &x, rhs, &mut r, norm);
        if residual <= target || iterations >= max_iter {
            break;
        }
    }
    let report = SolveReport {
        iterations,
        residual_norm: residual,
        relative_residual: residual / rhs_norm,
        certificate: None,
    };
    (x, report)
}

/// Solves `op · u = rhs` to `‖op·u - rhs‖₂ ≤ tol·‖rhs‖₂`.
pub fn solve_spd(
    op: &DiscreteOperator,
    rhs: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, SolveReport)> {
    if rhs.len() != op.rows() {
        return Err(Error::FieldSize { expected: op.rows(), got: rhs.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("solver tolerance must be positive, got {tol}")));
    }
    let (x, report) = conjugate_gradient(op, rhs.values(), tol, max_iter);
    if report.relative_residual > tol {
        return Err(Error::NonConvergence { report });
    }
    Ok((Field::from_vec(x), report))
}

/// Solves to `‖op·u - rhs‖∞ ≤ tol·‖rhs‖∞`. Row sums of the operator are at
/// least `b0·vol`, so `‖op⁻¹‖∞ ≤ 1/(b0·vol)` and the error obeys
/// `‖u - u*‖∞ ≤ tol · sup|rhs/vol| / b0`.
pub(crate) fn solve_sup_accurate(
    op: &DiscreteOperator,
    rhs: &Field,
    tol: f64,
) -> Result<(Field, SolveReport)> {
    let n = op.rows();
    let (x, report) = conjugate_gradient_in(op, rhs.values(), tol, default_max_iter(n), ResidualNorm::Max);
    if report.relative_residual > tol {
        return Err(Error::NonConvergence { report });
    }
    Ok((Field::from_vec(x), report))
}

pub fn solve_reaction_diffusion(
    mesh: &Mesh,
    a: &Field,
    b: &Field,
    f: &Field,
    tol: f64,
) -> Result<(Field, SolveReport)> {
    solve_reaction_diffusion_with(mesh, a, b, f, tol, FaceAveraging::Harmonic)
}

/// Discrete `∫a∇u·∇v + ∫b u v = ∫f v` with zero-flux boundaries.
pub fn solve_reaction_diffusion_with(
    mesh: &Mesh,
    a: &Field,
    b: &Field,
    f: &Field,
    tol: f64,
    averaging: FaceAveraging,
) -> Result<(Field, SolveReport)> {
    f.check_len(mesh)?;
    if let Some(c) = f.values().iter().position(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::invalid(format!(
            "source must be nonnegative, got {} at cell {c}",
            f.values()[c]
        )));
    }
    let op = assemble_operator_with(mesh, a, b, averaging)?;
    let vol = mesh.cell_volume();
    let rhs = f.map(|v| v * vol);
    let (u, mut report) = solve_sup_accurate(&op, &rhs, tol)?;

    let b0 = b.min();
    let sup_f = f.max();
    let lambda = f
        .values()
        .iter()
        .zip(b.values())
        .map(|(fv, bv)| fv / bv)
        .fold(f64::INFINITY, f64::min);
    let cert = BoundsCertificate { min_u: u.min(), max_u: u.max(), b0, sup_f, lambda };
    report.certificate = Some(cert);

    let slack = POSTCONDITION_SLACK * tol * (sup_f / b0);
    if cert.min_u < lambda - slack {
        return Err(Error::invariant(format!(
            "maximum principle: min u = {:e} below lower bound {:e}",
            cert.min_u, lambda
        )));
    }
    if cert.max_u > sup_f / b0 + slack {
        return Err(Error::invariant(format!(
            "maximum principle: max u = {:e} above sup f / b0 = {:e}",
            cert.max_u,
            sup_f / b0
        )));
    }
    Ok((u, report))
}
