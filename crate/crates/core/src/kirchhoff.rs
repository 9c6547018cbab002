//! Kirchhoff transform `K(y) = ∫₀ʸ κ̃(z) dz` and the nonlinear population step.
//!
//! With `u = K(n)` the quasilinear flux `κ̃(n)∇n` becomes `∇u`, so the implicit
//! population update reads `λ K⁻¹(u) - Δu = n_k / τ` with the cellwise
//! multiplier `λ = 1/τ + φ_d i_k - α + μ`. The discrete system is the
//! gradient of the strictly convex energy
//!
//! ```text
//! J(u) = ½ uᵀ L u + Σ vol λ 𝒦(u) - (1/τ) Σ vol n_k u,    𝒦' = K⁻¹
//! ```
//!
//! and is solved by damped Newton with an Armijo test on `J`.

use crate::elliptic::{conjugate_gradient, default_max_iter};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, assemble_unchecked, FaceAveraging, Field, Mesh};
use crate::model::{validate_tau, ModelParams, TauCheck, TruncatedNonlinearity};

/// Piecewise closed form of `K` for the affine-type presets: linear with
/// slope `κ(lower)` below the clamp interval, quadratic inside, linear with
/// slope `κ(upper)` above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirchhoffMap {
    tnl: TruncatedNonlinearity,
    lower: f64,
    upper: f64,
    slope: f64,
    kappa_lower: f64,
    kappa_upper: f64,
    k_lower: f64,
    k_upper: f64,
    prim_lower: f64,
    prim_upper: f64,
}

impl KirchhoffMap {
    pub fn new(tnl: TruncatedNonlinearity) -> Self {
        let (slope, offset) = tnl.base.diffusivity.affine_form();
        let lower = tnl.lower();
        let upper = tnl.upper();
        let kappa_lower = slope * lower + offset;
        let kappa_upper = slope * upper + offset;
        let k_lower = kappa_lower * lower;
        let prim_lower = 0.5 * kappa_lower * lower * lower;
        let (k_upper, prim_upper) = if upper.is_finite() {
            let d = upper - lower;
            let k = k_lower + kappa_lower * d + 0.5 * slope * d * d;
            let p = prim_lower
                + slope * (upper.powi(3) - lower.powi(3)) / 3.0
                + offset * (upper * upper - lower * lower) / 2.0;
            (k, p)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        KirchhoffMap {
            tnl,
            lower,
            upper,
            slope,
            kappa_lower,
            kappa_upper,
            k_lower,
            k_upper,
            prim_lower,
            prim_upper,
        }
    }

    pub fn nonlinearity(&self) -> &TruncatedNonlinearity {
        &self.tnl
    }

    /// `K(y)`
    pub fn eval(&self, y: f64) -> f64 {
        if y <= self.lower {
            self.kappa_lower * y
        } else if y <= self.upper {
            let d = y - self.lower;
            self.k_lower + self.kappa_lower * d + 0.5 * self.slope * d * d
        } else {
            self.k_upper + self.kappa_upper * (y - self.upper)
        }
    }

    /// `K⁻¹(u)`, in closed form on each piece.
    pub fn invert(&self, u: f64) -> f64 {
        if u <= self.k_lower {
            u / self.kappa_lower
        } else if u <= self.k_upper {
            let w = u - self.k_lower;
            // root of slope/2·d² + κ(lower)·d - w = 0 without cancellation
            let d = 2.0 * w
                / (self.kappa_lower + (self.kappa_lower * self.kappa_lower + 2.0 * self.slope * w).sqrt());
            (self.lower + d).min(self.upper)
        } else {
            self.upper + (u - self.k_upper) / self.kappa_upper
        }
    }

    /// `κ̃(K⁻¹(u))`, the reciprocal of `(K⁻¹)'(u)`.
    pub fn kappa_at(&self, u: f64) -> f64 {
        self.tnl.diffusivity(self.invert(u))
    }

    /// `𝒦(u) = ∫₀ᵘ K⁻¹(s) ds = ∫₀^{K⁻¹(u)} z κ̃(z) dz`.
    pub fn inverse_primitive(&self, u: f64) -> f64 {
        let y = self.invert(u);
        if y <= self.lower {
            0.5 * self.kappa_lower * y * y
        } else if y <= self.upper {
            let offset = self.kappa_lower - self.slope * self.lower;
            self.prim_lower
                + self.slope * (y.powi(3) - self.lower.powi(3)) / 3.0
                + offset * (y * y - self.lower * self.lower) / 2.0
        } else {
            self.prim_upper + 0.5 * self.kappa_upper * (y * y - self.upper * self.upper)
        }
    }
}

pub fn kirchhoff_eval(map: &KirchhoffMap, y: f64) -> f64 {
    map.eval(y)
}

pub fn kirchhoff_invert(map: &KirchhoffMap, u: f64) -> f64 {
    map.invert(u)
}

const MAX_NEWTON: usize = 50;
const MAX_BACKTRACK: usize = 40;
const ARMIJO_C: f64 = 1e-4;
const LINEAR_TOL: f64 = 1e-12;
const LINEAR_ACCEPT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual H-norm (per unit volume) at each iterate, starting from the guess.
    pub residuals: Vec<f64>,
    /// `J` at each iterate.
    pub energies: Vec<f64>,
    pub linear_iterations: usize,
    pub backtracks: usize,
}

/// The discrete population step for fixed `(n_k, i_k)`.
#[derive(Debug, Clone)]
pub struct PopulationStep<'a> {
    mesh: &'a Mesh,
    map: &'a KirchhoffMap,
    lambda: Vec<f64>,
    source: Vec<f64>,
    tau: f64,
    sup_n_prev: f64,
    norm_n_prev: f64,
}

impl<'a> PopulationStep<'a> {
    pub fn new(
        mesh: &'a Mesh,
        n_prev: &Field,
        i_prev: &Field,
        params: &ModelParams,
        map: &'a KirchhoffMap,
        tau: f64,
    ) -> Result<Self> {
        n_prev.check_len(mesh)?;
        i_prev.check_len(mesh)?;
        if let TauCheck::Rejected(why) = validate_tau(params, tau) {
            return Err(Error::invalid(format!("inadmissible time step {tau}: {why}")));
        }
        if n_prev.min() < 0.0 {
            return Err(Error::invalid(format!("n_k must be nonnegative, min is {}", n_prev.min())));
        }
        if i_prev.min() < 0.0 {
            return Err(Error::invalid(format!("i_k must be nonnegative, min is {}", i_prev.min())));
        }
        let base = 1.0 / tau - params.alpha + params.mu;
        let lambda: Vec<f64> = i_prev.values().iter().map(|i| base + params.death() * i).collect();
        if let Some(c) = lambda.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::invalid(format!("multiplier lambda not positive at cell {c}")));
        }
        let source = n_prev.values().iter().map(|n| n / tau).collect();
        Ok(PopulationStep {
            mesh,
            map,
            lambda,
            source,
            tau,
            sup_n_prev: n_prev.max(),
            norm_n_prev: crate::grid::norm_h_squared(mesh, n_prev.values()).sqrt(),
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `J(u)`
    pub fn energy(&self, u: &[f64]) -> f64 {
        let vol = self.mesh.cell_volume();
        let mut lu = vec![0.0; u.len()];
        apply_laplacian(self.mesh, u, &mut lu);
        let stiff: f64 = 0.5 * u.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>();
        let local: f64 = u
            .iter()
            .zip(&self.lambda)
            .zip(&self.source)
            .map(|((&uc, &l), &s)| l * self.map.inverse_primitive(uc) - s * uc)
            .sum();
        stiff + vol * local
    }

    /// Gradient of `J` (the volume-weighted residual).
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let vol = self.mesh.cell_volume();
        let mut g = vec![0.0; u.len()];
        apply_laplacian(self.mesh, u, &mut g);
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += vol * (self.lambda[c] * self.map.invert(u[c]) - self.source[c]);
        }
        g
    }

    /// H-norm and max-norm of the residual per unit volume.
    fn residual_norms(&self, grad: &[f64]) -> (f64, f64) {
        let vol = self.mesh.cell_volume();
        let h = (grad.iter().map(|g| g * g).sum::<f64>() / vol).sqrt();
        let sup = grad.iter().map(|g| g.abs()).fold(0.0, f64::max) / vol;
        (h, sup)
    }

    /// Runs Newton from `u = K(n_k)`; returns `u` and the iteration record.
    pub fn solve(&self, tol: f64) -> Result<(Vec<f64>, NewtonReport)> {
        let n = self.lambda.len();
        let mut u: Vec<f64> = self.source.iter().map(|s| self.map.eval(s * self.tau)).collect();
        let target_h = tol * self.norm_n_prev / self.tau;
        let target_sup = tol * self.sup_n_prev / self.tau;

        let mut grad = self.gradient(&u);
        let mut energy = self.energy(&u);
        let (mut res_h, mut res_sup) = self.residual_norms(&grad);
        let mut report = NewtonReport {
            iterations: 0,
            residuals: vec![res_h],
            energies: vec![energy],
            linear_iterations: 0,
            backtracks: 0,
        };
        let ones = vec![1.0; n];

        while res_h > target_h || res_sup > target_sup {
            if report.iterations == MAX_NEWTON {
                return Err(Error::Newton(format!(
                    "no convergence in {MAX_NEWTON} iterations (residual {res_h:.3e}, target {target_h:.3e})"
                )));
            }
            // Jacobian: diag(vol λ / κ̃(K⁻¹(u))) + L
            let reaction: Vec<f64> =
                u.iter().zip(&self.lambda).map(|(&uc, &l)| l / self.map.kappa_at(uc)).collect();
            let jac = assemble_unchecked(self.mesh, &ones, &reaction, FaceAveraging::Harmonic);
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let (step, lin) = conjugate_gradient(&jac, &rhs, LINEAR_TOL, default_max_iter(n));
            report.linear_iterations += lin.iterations;
            if !(lin.relative_residual <= LINEAR_ACCEPT) {
                return Err(Error::NonConvergence { report: lin });
            }
            let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_BACKTRACK {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                let trial_energy = self.energy(&trial);
                let trial_grad = self.gradient(&trial);
                let (trial_h, trial_sup) = self.residual_norms(&trial_grad);
                let armijo = trial_energy <= energy + ARMIJO_C * t * slope;
                // near the minimizer J stalls at rounding level; a full step
                // that shrinks the residual is then accepted as well
                let residual_drop = t == 1.0 && trial_h < res_h;
                if armijo || residual_drop {
                    accepted = Some((trial, trial_energy, trial_grad, trial_h, trial_sup));
                    break;
                }
                t *= 0.5;
                report.backtracks += 1;
            }
            let Some((next, next_energy, next_grad, next_h, next_sup)) = accepted else {
                return Err(Error::Newton(format!(
                    "line search failed at iteration {} (residual {res_h:.3e})",
                    report.iterations
                )));
            };
            u = next;
            energy = next_energy;
            grad = next_grad;
            res_h = next_h;
            res_sup = next_sup;
            report.iterations += 1;
            report.residuals.push(res_h);
            report.energies.push(energy);
        }
        Ok((u, report))
    }
}

/// Result of one population step.
#[derive(Debug, Clone)]
pub struct PopulationUpdate {
    pub n_next: Field,
    pub report: NewtonReport,
}

/// Advances `n_k → n_{k+1}` and checks the per-step max/min bounds
/// `sup n_{k+1} ≤ sup n_k / (1 - τ(α-μ)^+)` and
/// `inf n_{k+1} ≥ inf n_k / (1 + τ(φ_d sup i_k + (μ-α)^+))`.
pub fn solve_n_step(
    mesh: &Mesh,
    n_prev: &Field,
    i_prev: &Field,
    params: &ModelParams,
    map: &KirchhoffMap,
    tau: f64,
    tol: f64,
) -> Result<PopulationUpdate> {
    let problem = PopulationStep::new(mesh, n_prev, i_prev, params, map, tau)?;
    let (u, report) = problem.solve(tol)?;
    let n_next = Field::from_vec(u.iter().map(|&v| map.invert(v)).collect());

    let slack = crate::elliptic::POSTCONDITION_SLACK * tol * n_prev.max().max(f64::MIN_POSITIVE);
    let upper = n_prev.max() / (1.0 - tau * params.net_growth());
    let lower = n_prev.min() / (1.0 + tau * (params.death() * i_prev.max() + params.net_decay()));
    if n_next.max() > upper + slack {
        return Err(Error::invariant(format!(
            "population step: max n = {:e} exceeds {:e}",
            n_next.max(),
            upper
        )));
    }
    if n_next.min() < lower - slack {
        return Err(Error::invariant(format!(
            "population step: min n = {:e} below {:e}",
            n_next.min(),
            lower
        )));
    }
    Ok(PopulationUpdate { n_next, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;
    use crate::model::{
        truncate_nonlinearity, BoundsLedger, ContactModulation, Diffusivity, Nonlinearity,
    };

    fn map_for(diffusivity: Diffusivity, n_low: f64, n_up: f64) -> KirchhoffMap {
        let nl = Nonlinearity::new(ContactModulation::Constant(1.0), diffusivity).unwrap();
        let ledger = BoundsLedger {
            n_up,
            s_up: 1.0,
            h_up: 1.0,
            i_up: 1.0,
            n_low,
            kappa_low: diffusivity.eval(n_low),
            kappa_up: diffusivity.eval(n_up),
        };
        KirchhoffMap::new(truncate_nonlinearity(nl, &ledger))
    }

    #[test]
    fn constant_kappa_is_linear() {
        let m = map_for(Diffusivity::Constant(2.5), 0.1, 10.0);
        for y in [-3.0, 0.0, 0.05, 1.0, 7.0, 42.0] {
            assert!((m.eval(y) - 2.5 * y).abs() < 1e-13);
            assert!((m.invert(2.5 * y) - y).abs() < 1e-13);
        }
    }

    #[test]
    fn linear_kappa_reference_value() {
        let m = map_for(Diffusivity::Linear, 0.5, 2.0);
        // 0.5·0.5 below the clamp plus ∫_{0.5}^{1} z dz
        assert!((m.eval(1.0) - 0.625).abs() < 1e-15);
        assert!((m.eval(0.25) - 0.125).abs() < 1e-15);
        // above: K(2) + 2·(y - 2)
        let k2 = 0.25 + (2.0 - 0.125);
        assert!((m.eval(3.0) - (k2 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn inverse_primitive_derivative_is_inverse() {
        let m = map_for(Diffusivity::Affine { slope: 1.5, offset: 0.2 }, 0.3, 4.0);
        for u in [-1.0, 0.0, 0.1, 0.5, 2.0, 9.0, 20.0] {
            let h = 1e-5;
            let fd = (m.inverse_primitive(u + h) - m.inverse_primitive(u - h)) / (2.0 * h);
            assert!((fd - m.invert(u)).abs() < 1e-7, "u = {u}: {fd} vs {}", m.invert(u));
        }
    }

    #[test]
    fn homogeneous_step_without_infection() {
        let mesh = build_mesh(2, &[4, 3], &[1.0, 1.0]).unwrap();
        let params = ModelParams::normalized(0.7, 0.3);
        let map = map_for(Diffusivity::Linear, 0.1, 10.0);
        let (c, tau) = (1.3, 0.05);
        let out = solve_n_step(
            &mesh,
            &Field::constant(&mesh, c),
            &Field::zeros(&mesh),
            &params,
            &map,
            tau,
            1e-10,
        )
        .unwrap();
        let expect = c / (1.0 + tau * (params.mu - params.alpha));
        assert!(out.n_next.max_abs_diff(&Field::constant(&mesh, expect)) < 1e-12);
    }

    #[test]
    fn homogeneous_step_with_infection() {
        let mesh = build_mesh(1, &[8], &[1.0]).unwrap();
        let params = ModelParams::normalized(0.2, 0.5);
        let map = map_for(Diffusivity::Affine { slope: 1.0, offset: 0.1 }, 0.1, 10.0);
        let (c, gamma, tau) = (2.0, 0.4, 0.1);
        let out = solve_n_step(
            &mesh,
            &Field::constant(&mesh, c),
            &Field::constant(&mesh, gamma),
            &params,
            &map,
            tau,
            1e-13,
        )
        .unwrap();
        let expect = c / (1.0 + tau * (gamma + params.mu - params.alpha));
        let err = out.n_next.max_abs_diff(&Field::constant(&mesh, expect));
        assert!(err < 1e-12, "{err:e}");
    }

    #[test]
    fn rejects_inadmissible_tau_and_negative_data() {
        let mesh = build_mesh(1, &[4], &[1.0]).unwrap();
        let map = map_for(Diffusivity::Linear, 0.1, 10.0);
        let one = Field::constant(&mesh, 1.0);
        let params = ModelParams::normalized(3.0, 1.0);
        assert!(solve_n_step(&mesh, &one, &one, &params, &map, 0.3, 1e-10).is_err());
        let params = ModelParams::normalized(1.0, 1.0);
        let neg = Field::new(&mesh, vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        assert!(solve_n_step(&mesh, &neg, &one, &params, &map, 0.1, 1e-10).is_err());
        assert!(solve_n_step(&mesh, &one, &neg, &params, &map, 0.1, 1e-10).is_err());
    }

    #[test]
    fn energy_decreases_along_newton() {
        let mesh = build_mesh(1, &[32], &[1.0]).unwrap();
        let params = ModelParams::normalized(0.5, 0.4);
        let map = map_for(Diffusivity::Linear, 0.05, 5.0);
        let n = Field::from_fn(&mesh, |p| 0.2 + 2.0 * (-(p[0] - 0.3f64).powi(2) / 0.01).exp());
        let i = Field::from_fn(&mesh, |p| p[0]);
        let step = PopulationStep::new(&mesh, &n, &i, &params, &map, 0.2).unwrap();
        let (_, report) = step.solve(1e-12).unwrap();
        assert!(report.iterations >= 1);
        for w in report.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
        }
    }
}
