//! Trajectory-wide checks: the bounds ledger, the energy quantities of the
//! a-priori estimates, the zero-flux population balance, and a two-run
//! stability probe for constant diffusivity.

use std::fmt;

use crate::elliptic::POSTCONDITION_SLACK;
use crate::error::{Error, Result};
use crate::grid::{norm_h_squared, norm_v_squared, Field, Mesh, RieszMap};
use crate::model::BoundsLedger;
use crate::stepper::{run_simulation, Simulation, State, Trajectory, Unknown};

/// Absolute slack for invariant checks: `10·tol` times the ledger scale.
pub fn invariant_slack(tol: f64, ledger: &BoundsLedger) -> f64 {
    POSTCONDITION_SLACK * tol * ledger.scale()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    NLower,
    NUpper,
    SNonnegative,
    SUpper,
    HUpper,
    /// `h - s ≥ 0`
    Ordering,
    INonnegative,
    IUpper,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Quantity::NLower => "n >= n_low",
            Quantity::NUpper => "n <= n_up",
            Quantity::SNonnegative => "s >= 0",
            Quantity::SUpper => "s <= s_up",
            Quantity::HUpper => "h <= h_up",
            Quantity::Ordering => "h - s >= 0",
            Quantity::INonnegative => "i >= 0",
            Quantity::IUpper => "i <= i_up",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub k: usize,
    pub cell: usize,
    pub quantity: Quantity,
    pub value: f64,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} cell {}: {} fails (value {:e}, bound {:e})",
            self.k, self.cell, self.quantity, self.value, self.bound
        )
    }
}

/// Checks one state against the ledger; returns every failing (cell, quantity).
pub fn check_state(state: &State, ledger: &BoundsLedger, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |cell, quantity, value, bound| {
        out.push(Violation { k: state.k, cell, quantity, value, bound })
    };
    for c in 0..state.n.len() {
        let n = state.n.values()[c];
        let s = state.s.values()[c];
        let i = state.i.values()[c];
        let h = state.h.values()[c];
        if n < ledger.n_low - slack {
            push(c, Quantity::NLower, n, ledger.n_low);
        }
        if n > ledger.n_up + slack {
            push(c, Quantity::NUpper, n, ledger.n_up);
        }
        if s < -slack {
            push(c, Quantity::SNonnegative, s, 0.0);
        }
        if s > ledger.s_up + slack {
            push(c, Quantity::SUpper, s, ledger.s_up);
        }
        if h > ledger.h_up + slack {
            push(c, Quantity::HUpper, h, ledger.h_up);
        }
        if h - s < -slack {
            push(c, Quantity::Ordering, h - s, 0.0);
        }
        if i < -slack {
            push(c, Quantity::INonnegative, i, 0.0);
        }
        if i > ledger.i_up + slack {
            push(c, Quantity::IUpper, i, ledger.i_up);
        }
    }
    out
}

pub fn verify_bounds(traj: &Trajectory, ledger: &BoundsLedger) -> Vec<Violation> {
    let slack = invariant_slack(traj.tol, ledger);
    traj.states.iter().flat_map(|st| check_state(st, ledger, slack)).collect()
}

/// Relative residual of the population balance obtained by testing the
/// discrete population equation with `v ≡ 1`:
/// `∫n_{k+1}(1 + τφ_d i_k) - ∫n_k - τ(α-μ)∫n_{k+1}`, divided by `∫n_k`.
pub fn population_balance_residuals(traj: &Trajectory) -> Vec<f64> {
    let mesh = &traj.mesh;
    let p = &traj.params;
    let tau = traj.tau;
    traj.states
        .windows(2)
        .map(|w| {
            let (prev, next) = (&w[0], &w[1]);
            let i_prev = prev.i.map(|v| v.max(0.0));
            let weighted = next.n.zip_map(&i_prev, |n, i| n * (1.0 + tau * p.death() * i));
            let lhs = weighted.integral(mesh);
            let rhs = prev.n.integral(mesh) + tau * (p.alpha - p.mu) * next.n.integral(mesh);
            (lhs - rhs).abs() / prev.n.integral(mesh)
        })
        .collect()
}

/// Estimate quantities for one unknown `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub unknown: Unknown,
    /// `max_k ‖z_k‖_H²`
    pub max_h_sq: f64,
    /// `τ Σ_{k=1}^{N} ‖z_k‖_V²`
    pub tau_sum_v_sq: f64,
    /// `Σ_{k=0}^{N-1} ‖z_{k+1} - z_k‖_H²`
    pub increment_sum: f64,
    /// `τ Σ_{k=0}^{N-1} ‖(z_{k+1} - z_k)/τ‖_{V*}²`
    pub dual_derivative_sum: f64,
}

impl EnergyRow {
    pub fn entries(&self) -> [f64; 4] {
        [self.max_h_sq, self.tau_sum_v_sq, self.increment_sum, self.dual_derivative_sum]
    }
}

pub const ENERGY_ENTRY_NAMES: [&str; 4] =
    ["max_h_sq", "tau_sum_v_sq", "increment_sum", "dual_derivative_sum"];

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn row(&self, which: Unknown) -> &EnergyRow {
        self.rows.iter().find(|r| r.unknown == which).expect("all unknowns present")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("unknown,{}\n", ENERGY_ENTRY_NAMES.join(","));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.unknown.name(),
                r.max_h_sq,
                r.tau_sum_v_sq,
                r.increment_sum,
                r.dual_derivative_sum
            ));
        }
        out
    }
}

pub fn monitor_energy(traj: &Trajectory) -> EnergyReport {
    let mesh = &traj.mesh;
    let riesz = RieszMap::new(mesh);
    let tau = traj.tau;
    let rows = Unknown::ALL
        .iter()
        .map(|&u| {
            let samples = traj.samples(u);
            let max_h_sq = samples
                .iter()
                .map(|z| norm_h_squared(mesh, z.values()))
                .fold(0.0, f64::max);
            let tau_sum_v_sq =
                tau * samples.iter().skip(1).map(|z| norm_v_squared(mesh, z.values())).sum::<f64>();
            let mut increment_sum = 0.0;
            let mut dual_derivative_sum = 0.0;
            for w in samples.windows(2) {
                let diff = w[1].sub(w[0]);
                increment_sum += norm_h_squared(mesh, diff.values());
                let rate = diff.scale(1.0 / tau);
                dual_derivative_sum += tau * riesz.dual_norm(rate.values()).powi(2);
            }
            EnergyRow { unknown: u, max_h_sq, tau_sum_v_sq, increment_sum, dual_derivative_sum }
        })
        .collect();
    EnergyReport { rows }
}

/// Which initial fields the stability probe perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    /// Shift `n`, `s`, `i`, `h` by the same bump (keeps `h - s` fixed).
    All,
    /// Shift one unknown, upwards if admissible, else downwards.
    Only(Unknown),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub delta: f64,
    pub target: PerturbTarget,
    /// Declared growth constant `C`; the factor must not exceed `exp(C·T)`.
    pub growth_constant: f64,
    /// Maximum relative disagreement between the factors at `δ` and `δ/2`.
    pub linearity_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            delta: 1e-6,
            target: PerturbTarget::All,
            growth_constant: 10.0,
            linearity_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    /// `max_k (Σ_z ‖z¹_k - z²_k‖_H²)^{1/2}` over the initial difference.
    pub factor: f64,
    /// The same with `δ/2`.
    pub half_delta_factor: f64,
    pub bound: f64,
}

impl ProbeReport {
    pub fn linearity_gap(&self) -> f64 {
        if self.factor == 0.0 {
            return 0.0;
        }
        (self.factor - self.half_delta_factor).abs() / self.factor
    }
}

/// Smooth nonnegative bump centered in the domain with peak 1.
pub fn probe_bump(mesh: &Mesh) -> Field {
    let center: Vec<f64> = mesh.lengths().iter().map(|l| 0.5 * l).collect();
    let width = 0.15 * mesh.lengths().iter().copied().fold(f64::INFINITY, f64::min);
    Field::from_fn(mesh, |p| {
        let r2: f64 = center.iter().enumerate().map(|(a, c)| (p[a] - c).powi(2)).sum();
        (-r2 / (2.0 * width * width)).exp()
    })
}

fn perturbed(sim: &Simulation, delta: f64, target: PerturbTarget) -> Result<Simulation> {
    let bump = probe_bump(&sim.mesh).scale(delta);
    let mut out = sim.clone();
    let init = &mut out.initial;
    match target {
        PerturbTarget::All => {
            init.n = init.n.add(&bump);
            init.s = init.s.add(&bump);
            init.i = init.i.add(&bump);
            init.h = init.h.add(&bump);
        }
        PerturbTarget::Only(u) => {
            let field = |d: &crate::stepper::InitialData| match u {
                Unknown::N => d.n.clone(),
                Unknown::S => d.s.clone(),
                Unknown::I => d.i.clone(),
                Unknown::H => d.h.clone(),
            };
            let base = field(init);
            let mut chosen = None;
            for sign in [1.0, -1.0] {
                let mut trial = init.clone();
                let shifted = base.add(&bump.scale(sign));
                match u {
                    Unknown::N => trial.n = shifted,
                    Unknown::S => trial.s = shifted,
                    Unknown::I => trial.i = shifted,
                    Unknown::H => trial.h = shifted,
                }
                if trial.validate(&sim.mesh).is_ok() {
                    chosen = Some(trial);
                    break;
                }
            }
            *init = chosen.ok_or_else(|| {
                Error::invalid(format!("no admissible perturbation of {} of size {delta:e}", u.name()))
            })?;
        }
    }
    out.initial.validate(&out.mesh)?;
    Ok(out)
}

fn distance(mesh: &Mesh, a: &State, b: &State) -> f64 {
    Unknown::ALL
        .iter()
        .map(|&u| norm_h_squared(mesh, a.field(u).sub(b.field(u)).values()))
        .sum::<f64>()
        .sqrt()
}

fn amplification(base: &Trajectory, sim: &Simulation, delta: f64, target: PerturbTarget) -> Result<f64> {
    if delta == 0.0 {
        return Ok(0.0);
    }
    let other = run_simulation(&perturbed(sim, delta, target)?).map_err(|f| f.error)?;
    let mesh = &base.mesh;
    let initial = distance(mesh, &base.states[0], &other.states[0]);
    if initial == 0.0 {
        return Ok(0.0);
    }
    let worst = base
        .states
        .iter()
        .zip(&other.states)
        .map(|(a, b)| distance(mesh, a, b))
        .fold(0.0, f64::max);
    Ok(worst / initial)
}

/// Runs the base configuration and perturbed copies at `δ` and `δ/2`.
///
/// Requires a constant diffusivity. Fails if the factor exceeds
/// `exp(C·T)` or the two factors disagree by more than `linearity_tol`.
pub fn stability_probe(sim: &Simulation, opts: &ProbeOptions) -> Result<ProbeReport> {
    if !sim.nonlinearity.diffusivity.is_constant() {
        return Err(Error::invalid("stability probe requires a constant diffusivity"));
    }
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) {
        return Err(Error::invalid(format!("probe delta must be nonnegative, got {}", opts.delta)));
    }
    let bound = (opts.growth_constant * sim.time.horizon).exp();
    if opts.delta == 0.0 {
        return Ok(ProbeReport { factor: 0.0, half_delta_factor: 0.0, bound });
    }
    let base = run_simulation(sim).map_err(|f| f.error)?;
    let factor = amplification(&base, sim, opts.delta, opts.target)?;
    let half_delta_factor = amplification(&base, sim, 0.5 * opts.delta, opts.target)?;
    let report = ProbeReport { factor, half_delta_factor, bound };
    if !factor.is_finite() || factor > bound {
        return Err(Error::invariant(format!("amplification {factor:e} exceeds exp(C T) = {bound:e}")));
    }
    if report.linearity_gap() > opts.linearity_tol {
        return Err(Error::invariant(format!(
            "amplification not linear in delta: {factor:e} vs {half_delta_factor:e}"
        )));
    }
    Ok(report)
}
