//! One semi-implicit time step solves, in order,
//!
//! 1. `n_{k+1}` from the nonlinear population equation (Kirchhoff/Newton),
//! 2. `s_{k+1}` with the contact terms lagged at `i_k` and `h_k - s_k`,
//! 3. `h_{k+1}` (it consumes `s_{k+1}`),
//! 4. `i_{k+1}` (it consumes `h_{k+1} - s_{k+1}`),
//!
//! each a linear reaction-diffusion solve with diffusivity `κ̃(n_{k+1})`.

use thiserror::Error;

use crate::diagnostics::{check_state, invariant_slack};
use crate::elliptic::{solve_reaction_diffusion_with, solve_sup_accurate, SolveReport, POSTCONDITION_SLACK};
use crate::error::{Error, Result};
use crate::grid::{assemble_unchecked, norm_h_squared, FaceAveraging, Field, Mesh};
use crate::kirchhoff::{solve_n_step, KirchhoffMap, NewtonReport};
use crate::model::{
    compute_bounds, truncate_nonlinearity, validate_tau, BoundsLedger, InitialExtrema, ModelParams,
    Nonlinearity, TauCheck, TruncatedNonlinearity,
};

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub k: usize,
    pub t: f64,
    pub n: Field,
    pub s: Field,
    pub i: Field,
    pub h: Field,
}

impl State {
    pub fn field(&self, which: Unknown) -> &Field {
        match which {
            Unknown::N => &self.n,
            Unknown::S => &self.s,
            Unknown::I => &self.i,
            Unknown::H => &self.h,
        }
    }
}

/// The four unknowns the scheme advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unknown {
    N,
    S,
    I,
    H,
}

impl Unknown {
    pub const ALL: [Unknown; 4] = [Unknown::N, Unknown::S, Unknown::I, Unknown::H];

    pub fn name(self) -> &'static str {
        match self {
            Unknown::N => "n",
            Unknown::S => "s",
            Unknown::I => "i",
            Unknown::H => "h",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, params: &ModelParams) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("step count must be positive"));
        }
        let grid = TimeGrid { horizon, steps };
        if let TauCheck::Rejected(why) = validate_tau(params, grid.tau()) {
            return Err(Error::invalid(format!("time step {}: {why}", grid.tau())));
        }
        Ok(grid)
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Everything one step needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub mesh: &'a Mesh,
    pub params: &'a ModelParams,
    pub map: &'a KirchhoffMap,
    pub tau: f64,
    pub tol: f64,
    pub averaging: FaceAveraging,
    /// Slack for the ordering and cross-check assertions.
    pub slack: f64,
}

impl StepContext<'_> {
    pub fn nonlinearity(&self) -> &TruncatedNonlinearity {
        self.map.nonlinearity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub newton: NewtonReport,
    pub s: SolveReport,
    pub h: SolveReport,
    pub i: SolveReport,
    /// `max |(h_{k+1} - s_{k+1}) - e_{k+1}|` against a direct solve for `e`.
    pub exposed_gap: f64,
}

fn positive_part(f: &Field) -> Field {
    f.map(|v| v.max(0.0))
}

/// Advances `(n, s, i, h)` by one step.
///
/// Sources are formed from the nonnegative parts of the previous iterates,
/// which differ from the iterates only at solver-tolerance level.
pub fn advance_step(ctx: &StepContext<'_>, state: &State) -> Result<(State, StepReport)> {
    let StepContext { mesh, params, map, tau, tol, averaging, slack } = *ctx;
    let tnl = ctx.nonlinearity();
    let inv_tau = 1.0 / tau;

    let s_k = positive_part(&state.s);
    let h_k = positive_part(&state.h);
    let i_k = positive_part(&state.i);
    let e_k = positive_part(&state.h.sub(&state.s));

    let pop = solve_n_step(mesh, &state.n, &i_k, params, map, tau, tol)?;
    let n = pop.n_next;

    let kappa = n.map(|v| tnl.diffusivity(v));
    let contact = n.map(|v| tnl.contact(v));
    // contact pressure Ã(n_{k+1})·(β_i i_k + β_e e_k)
    let pressure = Field::from_vec(
        (0..n.len())
            .map(|c| {
                contact.values()[c]
                    * (params.contact_infected() * i_k.values()[c]
                        + params.contact_exposed() * e_k.values()[c])
            })
            .collect(),
    );

    let b_s = pressure.map(|p| inv_tau + p + params.mu);
    let f_s = s_k.zip_map(&n, |s, nv| s * inv_tau + params.alpha * nv);
    let (s, rep_s) = solve_reaction_diffusion_with(mesh, &kappa, &b_s, &f_s, tol, averaging)?;

    let outflow = params.exposed_outflow();
    let b_h = Field::constant(mesh, inv_tau + params.mu + outflow);
    let f_h = Field::from_vec(
        (0..n.len())
            .map(|c| {
                h_k.values()[c] * inv_tau
                    + params.alpha * n.values()[c]
                    + outflow * s.values()[c].max(0.0)
            })
            .collect(),
    );
    let (h, rep_h) = solve_reaction_diffusion_with(mesh, &kappa, &b_h, &f_h, tol, averaging)?;

    // the exposed class solves the same operator with a nonnegative source
    let f_e = Field::from_vec(
        (0..n.len())
            .map(|c| e_k.values()[c] * inv_tau + s.values()[c].max(0.0) * pressure.values()[c])
            .collect(),
    );
    let (e, _) = solve_reaction_diffusion_with(mesh, &kappa, &b_h, &f_e, tol, averaging)?;
    let diff = h.sub(&s);
    let exposed_gap = diff.max_abs_diff(&e);
    if exposed_gap > slack {
        return Err(Error::invariant(format!(
            "h - s disagrees with the exposed-class solve by {exposed_gap:e} at step {}",
            state.k + 1
        )));
    }
    if diff.min() < -slack {
        return Err(Error::invariant(format!(
            "ordering h >= s violated by {:e} at step {}",
            -diff.min(),
            state.k + 1
        )));
    }

    let b_i = n.map(|nv| inv_tau + params.death() * nv + params.recovery() + params.mu);
    let f_i = i_k.zip_map(&e, |iv, ev| iv * inv_tau + params.incubation() * ev.max(0.0));
    let (i, rep_i) = solve_reaction_diffusion_with(mesh, &kappa, &b_i, &f_i, tol, averaging)?;

    // h is carried as s + e so that a vanishing exposed class stays exactly zero
    let h = s.zip_map(&e, |sv, ev| sv + ev.max(0.0));

    let next = State { k: state.k + 1, t: (state.k + 1) as f64 * tau, n, s, i, h };
    let report = StepReport { newton: pop.report, s: rep_s, h: rep_h, i: rep_i, exposed_gap };
    Ok((next, report))
}

/// Smooths `u` by solving `(I - τΔ_h) u_τ = u` with zero-flux boundaries.
pub fn mollify_initial(mesh: &Mesh, u: &Field, tau: f64, tol: f64) -> Result<Field> {
    u.check_len(mesh)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("mollifier parameter must lie in (0, 1), got {tau}")));
    }
    let n = mesh.cell_count();
    let op = assemble_unchecked(mesh, &vec![tau; n], &vec![1.0; n], FaceAveraging::Harmonic);
    let rhs = u.scale(mesh.cell_volume());
    let (smooth, _) = solve_sup_accurate(&op, &rhs, tol)?;

    let scale = u.max().abs().max(u.min().abs());
    let slack = POSTCONDITION_SLACK * tol * scale;
    if smooth.min() < u.min() - slack || smooth.max() > u.max() + slack {
        return Err(Error::invariant(format!(
            "mollified field [{:e}, {:e}] leaves [{:e}, {:e}]",
            smooth.min(),
            smooth.max(),
            u.min(),
            u.max()
        )));
    }
    let before = norm_h_squared(mesh, u.values()).sqrt();
    let after = norm_h_squared(mesh, smooth.values()).sqrt();
    if after > before * (1.0 + POSTCONDITION_SLACK * tol) + f64::MIN_POSITIVE {
        return Err(Error::invariant(format!("mollifier expanded the H-norm: {after:e} > {before:e}")));
    }
    Ok(smooth)
}

/// Initial fields for `(n, s, i, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub n: Field,
    pub s: Field,
    pub i: Field,
    pub h: Field,
}

impl InitialData {
    /// Checks `inf n > 0`, `0 ≤ s ≤ h`, `i ≥ 0` cellwise.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for f in [&self.n, &self.s, &self.i, &self.h] {
            f.check_len(mesh)?;
        }
        if !(self.n.min() > 0.0) {
            return Err(Error::invalid(format!("initial n must be strictly positive, min is {}", self.n.min())));
        }
        if self.s.min() < 0.0 {
            return Err(Error::invalid(format!("initial s must be nonnegative, min is {}", self.s.min())));
        }
        if self.i.min() < 0.0 {
            return Err(Error::invalid(format!("initial i must be nonnegative, min is {}", self.i.min())));
        }
        if let Some(c) = (0..self.h.len()).find(|&c| self.h.values()[c] < self.s.values()[c]) {
            return Err(Error::invalid(format!("initial data need h >= s, violated at cell {c}")));
        }
        Ok(())
    }

    pub fn extrema(&self) -> InitialExtrema {
        InitialExtrema::from_fields(&self.n, &self.s, &self.i, &self.h)
    }
}

/// Which clamp the nonlinearities use during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Clamp to `[n_low, n_up]` from the bounds ledger.
    #[default]
    Ledger,
    /// Only clamp at zero (presets with `κ(0) > 0`).
    Off,
}

/// Library-level description of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub mesh: Mesh,
    pub params: ModelParams,
    pub nonlinearity: Nonlinearity,
    pub time: TimeGrid,
    pub initial: InitialData,
    pub mollify: bool,
    pub tol: f64,
    pub averaging: FaceAveraging,
    pub truncation: Truncation,
    pub initial_deceased: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub params: ModelParams,
    pub tau: f64,
    pub tol: f64,
    pub ledger: BoundsLedger,
    pub states: Vec<State>,
    pub reports: Vec<StepReport>,
    pub deceased: Vec<Field>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn samples(&self, which: Unknown) -> Vec<&Field> {
        self.states.iter().map(|s| s.field(which)).collect()
    }
}

/// A failed run, with whatever was computed before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SimulationFailure {
    #[source]
    pub error: Error,
    pub partial: Option<Box<Trajectory>>,
}

impl From<Error> for SimulationFailure {
    fn from(error: Error) -> Self {
        SimulationFailure { error, partial: None }
    }
}

pub fn run_simulation(sim: &Simulation) -> std::result::Result<Trajectory, SimulationFailure> {
    let mesh = &sim.mesh;
    sim.params.validate()?;
    sim.initial.validate(mesh)?;
    if !(sim.tol > 0.0 && sim.tol < 1.0) {
        return Err(Error::invalid(format!("tolerance must lie in (0, 1), got {}", sim.tol)).into());
    }
    let time = TimeGrid::new(sim.time.horizon, sim.time.steps, &sim.params)?;
    let tau = time.tau();
    let ledger = compute_bounds(&sim.params, &sim.nonlinearity, time.horizon, &sim.initial.extrema())?;
    let tnl = match sim.truncation {
        Truncation::Ledger => truncate_nonlinearity(sim.nonlinearity, &ledger),
        Truncation::Off => TruncatedNonlinearity::untruncated(sim.nonlinearity)?,
    };
    let map = KirchhoffMap::new(tnl);
    let slack = invariant_slack(sim.tol, &ledger);

    let init = &sim.initial;
    let first = if sim.mollify {
        // smoothing s and h - s separately keeps the ordering h >= s
        let s = mollify_initial(mesh, &init.s, tau, sim.tol)?;
        let e = mollify_initial(mesh, &init.h.sub(&init.s), tau, sim.tol)?;
        State {
            k: 0,
            t: 0.0,
            n: mollify_initial(mesh, &init.n, tau, sim.tol)?,
            i: mollify_initial(mesh, &init.i, tau, sim.tol)?,
            h: s.add(&e),
            s,
        }
    } else {
        State { k: 0, t: 0.0, n: init.n.clone(), s: init.s.clone(), i: init.i.clone(), h: init.h.clone() }
    };

    let mut traj = Trajectory {
        mesh: mesh.clone(),
        params: sim.params,
        tau,
        tol: sim.tol,
        ledger,
        states: Vec::with_capacity(time.steps + 1),
        reports: Vec::with_capacity(time.steps),
        deceased: Vec::new(),
    };
    let fail = |error: Error, traj: Trajectory| SimulationFailure { error, partial: Some(Box::new(traj)) };

    if let Some(v) = check_state(&first, &ledger, slack).into_iter().next() {
        return Err(fail(Error::invariant(v.to_string()), traj));
    }
    traj.states.push(first);

    let ctx = StepContext {
        mesh,
        params: &sim.params,
        map: &map,
        tau,
        tol: sim.tol,
        averaging: sim.averaging,
        slack,
    };
    for _ in 0..time.steps {
        let current = traj.states.last().expect("at least the initial state");
        let (next, report) = match advance_step(&ctx, current) {
            Ok(out) => out,
            Err(e) => return Err(fail(e, traj)),
        };
        let violations = check_state(&next, &ledger, slack);
        traj.states.push(next);
        traj.reports.push(report);
        if let Some(v) = violations.into_iter().next() {
            return Err(fail(Error::invariant(v.to_string()), traj));
        }
    }
    traj.deceased = integrate_deceased(&traj, sim.params.death(), sim.initial_deceased);
    Ok(traj)
}

/// Classical compartments recovered from `(n, s, i, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compartments {
    pub s: Field,
    pub e: Field,
    pub r: Field,
    /// Most negative recovered density (zero if none); not an error.
    pub min_r: f64,
}

pub fn reconstruct_compartments(state: &State) -> Compartments {
    let e = state.h.sub(&state.s);
    let r = Field::from_vec(
        (0..state.n.len())
            .map(|c| state.n.values()[c] - state.h.values()[c] - state.i.values()[c])
            .collect(),
    );
    let min_r = r.min().min(0.0);
    Compartments { s: state.s.clone(), e, r, min_r }
}

/// `d_{k+1} = d_k + τ φ_d i_{k+1} n_{k+1}`, cellwise, starting from `d0`.
pub fn integrate_deceased(traj: &Trajectory, phi_d: f64, d0: f64) -> Vec<Field> {
    let mut out = Vec::with_capacity(traj.states.len());
    let mut d = Field::constant(&traj.mesh, d0);
    out.push(d.clone());
    for state in traj.states.iter().skip(1) {
        let increment = state.i.zip_map(&state.n, |i, n| (traj.tau * phi_d * i * n).max(0.0));
        d = d.add(&increment);
        out.push(d.clone());
    }
    out
}
