//! Piecewise-constant and piecewise-linear reconstructions of time-sampled
//! sequences, checks of their norm identities, and the τ-refinement study.
//!
//! For samples `z_0, …, z_N` with step `τ` and `I_k = ((k-1)τ, kτ]`:
//! the forward-constant interpolant is `z_k` on `I_k`, the backward-constant
//! one is `z_{k-1}` on `I_k`, and the linear one joins `z_{k-1}` to `z_k`.
//! Time integrals are evaluated with Simpson's rule on each `I_k`, which is
//! exact for the degree-two integrands that occur here.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{norm_h_squared, norm_v_squared, Field, Mesh};
use crate::stepper::{run_simulation, Simulation, Trajectory, Unknown};

/// The space in which samples are measured.
#[derive(Debug, Clone, Copy)]
pub enum SampleSpace<'a> {
    Scalar,
    H(&'a Mesh),
    V(&'a Mesh),
}

impl SampleSpace<'_> {
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        match self {
            SampleSpace::Scalar => v.iter().map(|x| x * x).sum(),
            SampleSpace::H(mesh) => norm_h_squared(mesh, v),
            SampleSpace::V(mesh) => norm_v_squared(mesh, v),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.norm_sq(v).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantSet {
    samples: Vec<Vec<f64>>,
    tau: f64,
}

pub fn build_interpolants(samples: Vec<Vec<f64>>, tau: f64) -> Result<InterpolantSet> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!("need at least two samples, got {}", samples.len())));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("sample spacing must be positive, got {tau}")));
    }
    let width = samples[0].len();
    if samples.iter().any(|s| s.len() != width) {
        return Err(Error::invalid("samples have differing lengths"));
    }
    Ok(InterpolantSet { samples, tau })
}

fn lerp(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl InterpolantSet {
    pub fn from_scalars(values: &[f64], tau: f64) -> Result<Self> {
        build_interpolants(values.iter().map(|&v| vec![v]).collect(), tau)
    }

    pub fn from_fields(fields: &[&Field], tau: f64) -> Result<Self> {
        build_interpolants(fields.iter().map(|f| f.values().to_vec()).collect(), tau)
    }

    pub fn from_trajectory(traj: &Trajectory, which: Unknown) -> Self {
        let samples = traj.samples(which).iter().map(|f| f.values().to_vec()).collect();
        InterpolantSet { samples, tau: traj.tau }
    }

    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps() as f64
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Interval index `k ∈ 1..=N` and local coordinate `θ ∈ [0, 1]` of `t`;
    /// `t = 0` maps to the start of `I_1`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let r = (t / self.tau).clamp(0.0, self.steps() as f64);
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-12 * nearest.max(1.0) {
            let k = nearest as usize;
            return if k == 0 { (1, 0.0) } else { (k, 1.0) };
        }
        let k = (r.ceil() as usize).clamp(1, self.steps());
        (k, r - (k - 1) as f64)
    }

    pub fn forward(&self, t: f64) -> Vec<f64> {
        self.samples[self.locate(t).0].clone()
    }

    pub fn backward(&self, t: f64) -> Vec<f64> {
        self.samples[self.locate(t).0 - 1].clone()
    }

    pub fn linear(&self, t: f64) -> Vec<f64> {
        let (k, theta) = self.locate(t);
        if theta == 1.0 {
            return self.samples[k].clone();
        }
        if theta == 0.0 {
            return self.samples[k - 1].clone();
        }
        lerp(&self.samples[k - 1], &self.samples[k], theta)
    }

    /// Slope of the linear interpolant on the interval containing `t`.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let k = self.locate(t).0;
        self.slope(k)
    }

    fn slope(&self, k: usize) -> Vec<f64> {
        diff(&self.samples[k], &self.samples[k - 1]).iter().map(|d| d / self.tau).collect()
    }

    /// `∫_{I_k} g(θ) dt` by Simpson's rule from values at `θ = 0, ½, 1`.
    fn simpson(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.tau / 6.0 * (g(0.0) + 4.0 * g(0.5) + g(1.0))
    }

    fn pieces(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.steps()
    }

    /// `‖z‖²_{L²(0,T;Z)}` of the linear interpolant.
    pub fn linear_l2_sq(&self, space: SampleSpace<'_>) -> f64 {
        self.pieces()
            .map(|k| {
                let (a, b) = (&self.samples[k - 1], &self.samples[k]);
                self.simpson(|th| space.norm_sq(&lerp(a, b, th)))
            })
            .sum()
    }

    /// `‖∂_t ẑ‖²_{L²(0,T;Z)}`
    pub fn derivative_l2_sq(&self, space: SampleSpace<'_>) -> f64 {
        self.pieces()
            .map(|k| {
                let d = self.slope(k);
                self.simpson(|_| space.norm_sq(&d))
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Equal,
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Equalities hold to `rel_tol` relative; inequalities to the same slack.
    pub fn holds(&self, rel_tol: f64) -> bool {
        let scale = self.lhs.abs().max(self.rhs.abs());
        match self.relation {
            Relation::Equal => self.gap() <= rel_tol * scale,
            Relation::AtMost => self.lhs <= self.rhs + rel_tol * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_hold(&self, rel_tol: f64) -> bool {
        self.checks.iter().all(|c| c.holds(rel_tol))
    }

    pub fn failures(&self, rel_tol: f64) -> Vec<&IdentityCheck> {
        self.checks.iter().filter(|c| !c.holds(rel_tol)).collect()
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates both sides of each interpolant identity: the left side from the
/// interpolating functions, the right side from the raw samples.
///
/// `finer`, when given, must be a trajectory sampled on a refinement of the
/// same time partition; it enables the derivative comparison against a
/// function whose knot values are the coarse samples.
pub fn verify_interpolant_identities(
    set: &InterpolantSet,
    space: SampleSpace<'_>,
    finer: Option<&InterpolantSet>,
) -> Result<IdentityReport> {
    let z = &set.samples;
    let n = set.steps();
    let tau = set.tau;
    let nz: Vec<f64> = z.iter().map(|v| space.norm(v)).collect();
    let nz_sq: Vec<f64> = z.iter().map(|v| space.norm_sq(v)).collect();
    let incr_sq: Vec<f64> = (0..n).map(|k| space.norm_sq(&diff(&z[k + 1], &z[k]))).collect();
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);

    let mut checks = Vec::new();
    let mut push = |name, relation, lhs, rhs| checks.push(IdentityCheck { name, relation, lhs, rhs });

    // sup norms, left sides from interpolant evaluations on each piece
    let fwd_sup = max_of(&mut set.pieces().map(|k| space.norm(&set.forward(((k as f64) - 0.5) * tau))));
    let bwd_sup = max_of(&mut set.pieces().map(|k| space.norm(&set.backward(((k as f64) - 0.5) * tau))));
    push("ouLinftyZ.forward", Relation::Equal, fwd_sup, max_of(&mut nz[1..].iter().copied()));
    push("ouLinftyZ.backward", Relation::Equal, bwd_sup, max_of(&mut nz[..n].iter().copied()));

    let dt_sup = max_of(&mut set.pieces().map(|k| space.norm(&set.derivative(((k as f64) - 0.5) * tau))));
    let dt_sup_samples = max_of(&mut incr_sq.iter().map(|d| d.sqrt() / tau));
    push("dtzLinftyZ", Relation::Equal, dt_sup, dt_sup_samples);

    let fwd_l2 = set.pieces().map(|k| set.simpson(|_| nz_sq[k])).sum::<f64>();
    let bwd_l2 = set.pieces().map(|k| set.simpson(|_| nz_sq[k - 1])).sum::<f64>();
    push("ouLdueZ.forward", Relation::Equal, fwd_l2, tau * nz_sq[1..].iter().sum::<f64>());
    push("ouLdueZ.backward", Relation::Equal, bwd_l2, tau * nz_sq[..n].iter().sum::<f64>());

    let dt_l2 = set.derivative_l2_sq(space);
    let dt_l2_samples = tau * incr_sq.iter().map(|d| d / (tau * tau)).sum::<f64>();
    push("dtzLdueZ", Relation::Equal, dt_l2, dt_l2_samples);

    // the squared norm of the linear piece is a convex quadratic in θ, so
    // its supremum sits at an endpoint; the midpoint is included anyway
    let lin_sup = max_of(&mut set.pieces().flat_map(|k| {
        let (a, b) = (&z[k - 1], &z[k]);
        [0.0, 0.5, 1.0].map(|th| space.norm(&lerp(a, b, th)))
    }));
    push("hzLinftyZ", Relation::Equal, lin_sup, max_of(&mut nz.iter().copied()));
    push("hzLinftyZ.forward", Relation::Equal, lin_sup, nz[0].max(fwd_sup));

    let lin_l2 = set.linear_l2_sq(space);
    let pair_sum = tau * (1..=n).map(|k| nz_sq[k - 1] + nz_sq[k]).sum::<f64>();
    push("hzLdueZ", Relation::AtMost, lin_l2, pair_sum);
    push("hzLdueZ.forward", Relation::AtMost, pair_sum, tau * nz_sq[0] + 2.0 * fwd_l2);

    let gap_sup = max_of(&mut set.pieces().map(|k| space.norm(&diff(&z[k], &z[k - 1]))));
    push("diffLinfty", Relation::Equal, gap_sup, max_of(&mut incr_sq.iter().map(|d| d.sqrt())));
    push("diffLinfty.derivative", Relation::Equal, gap_sup, tau * dt_sup);

    let gap_l2 = set
        .pieces()
        .map(|k| {
            let (a, b) = (&z[k - 1], &z[k]);
            set.simpson(|th| space.norm_sq(&diff(b, &lerp(a, b, th))))
        })
        .sum::<f64>();
    let fwd_bwd_l2 = set.pieces().map(|k| set.simpson(|_| incr_sq[k - 1])).sum::<f64>();
    push("diffLdue", Relation::Equal, gap_l2, tau / 3.0 * incr_sq.iter().sum::<f64>());
    push("diffLdue.constant", Relation::Equal, gap_l2, fwd_bwd_l2 / 3.0);
    push("diffLdue.derivative", Relation::Equal, gap_l2, tau * tau / 3.0 * dt_l2);

    if let Some(fine) = finer {
        let ratio = (tau / fine.tau).round();
        let m = ratio as usize;
        if m == 0 || (ratio * fine.tau - tau).abs() > 1e-9 * tau || fine.steps() != n * m {
            return Err(Error::invalid("finer set does not refine the coarse partition"));
        }
        push("interpH1Z", Relation::AtMost, dt_l2_samples, fine.derivative_l2_sq(space));
    }
    Ok(IdentityReport { checks })
}

/// One row of the refinement table: distances between the runs at
/// `steps[j]` and `steps[j + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub tau: f64,
    pub finer_tau: f64,
    pub dist_n: f64,
    pub dist_s: f64,
    pub dist_i: f64,
    pub dist_h: f64,
    /// `log(d_{j-1}/d_j) / log(τ_{j-1}/τ_j)`; NaN on the first row.
    pub order_estimate: f64,
    /// `d_j / d_{j-1}`; NaN on the first row.
    pub cauchy_ratio: f64,
}

impl StudyRow {
    pub fn total(&self) -> f64 {
        (self.dist_n.powi(2) + self.dist_s.powi(2) + self.dist_i.powi(2) + self.dist_h.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

fn csv_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,dist_n,dist_s,dist_i,dist_h,order_estimate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.tau,
                r.dist_n,
                r.dist_s,
                r.dist_i,
                r.dist_h,
                csv_num(r.order_estimate)
            ));
        }
        out
    }
}

/// `‖ẑ_a - ẑ_b‖_{L²(0,T;H)}` evaluated on a partition refining both.
fn l2h_distance(mesh: &Mesh, a: &InterpolantSet, b: &InterpolantSet, fine_steps: usize) -> f64 {
    let horizon = a.horizon();
    let dt = horizon / fine_steps as f64;
    let at = |m: usize| {
        let t = m as f64 * dt;
        diff(&a.linear(t), &b.linear(t))
    };
    let mut total = 0.0;
    let mut left = at(0);
    for m in 1..=fine_steps {
        let right = at(m);
        // the difference is linear on each fine interval
        let mid: Vec<f64> = left.iter().zip(&right).map(|(x, y)| 0.5 * (x + y)).collect();
        total += dt / 6.0
            * (norm_h_squared(mesh, &left) + 4.0 * norm_h_squared(mesh, &mid) + norm_h_squared(mesh, &right));
        left = right;
    }
    total.sqrt()
}

/// Builds the refinement table from finished trajectories (coarsest first).
pub fn study_from_trajectories(trajs: &[Trajectory]) -> Result<StudyTable> {
    if trajs.len() < 2 {
        return Ok(StudyTable { rows: Vec::new() });
    }
    let fine_steps = trajs.iter().map(|t| t.steps()).max().unwrap_or(1);
    for t in trajs {
        if fine_steps % t.steps() != 0 {
            return Err(Error::invalid(format!(
                "step count {} does not divide the finest count {fine_steps}",
                t.steps()
            )));
        }
    }
    let mesh = &trajs[0].mesh;
    let mut rows: Vec<StudyRow> = Vec::with_capacity(trajs.len() - 1);
    for pair in trajs.windows(2) {
        let dist = |u: Unknown| {
            let a = InterpolantSet::from_trajectory(&pair[0], u);
            let b = InterpolantSet::from_trajectory(&pair[1], u);
            l2h_distance(mesh, &a, &b, fine_steps)
        };
        let mut row = StudyRow {
            tau: pair[0].tau,
            finer_tau: pair[1].tau,
            dist_n: dist(Unknown::N),
            dist_s: dist(Unknown::S),
            dist_i: dist(Unknown::I),
            dist_h: dist(Unknown::H),
            order_estimate: f64::NAN,
            cauchy_ratio: f64::NAN,
        };
        if let Some(prev) = rows.last() {
            let (d0, d1) = (prev.total(), row.total());
            row.cauchy_ratio = d1 / d0;
            row.order_estimate = (d0 / d1).ln() / (prev.tau / row.tau).ln();
        }
        rows.push(row);
    }
    Ok(StudyTable { rows })
}

/// Runs `base` once per step count (coarsest first, in parallel) and
/// tabulates distances between consecutive refinements.
pub fn convergence_study(base: &Simulation, steps: &[usize]) -> Result<StudyTable> {
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("step counts must be strictly increasing"));
    }
    let trajs: Vec<Trajectory> = steps
        .par_iter()
        .map(|&n| {
            let mut sim = base.clone();
            sim.time.steps = n;
            run_simulation(&sim).map_err(|f| f.error)
        })
        .collect::<Result<_>>()?;
    study_from_trajectories(&trajs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_example() {
        let set = InterpolantSet::from_scalars(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(set.linear(0.5), vec![0.5]);
        assert_eq!(set.forward(0.5), vec![1.0]);
        assert_eq!(set.backward(0.5), vec![0.0]);
        let r = verify_interpolant_identities(&set, SampleSpace::Scalar, None).unwrap();
        let d = r.get("diffLdue").unwrap();
        assert_eq!(d.rhs, 1.0 / 3.0);
        assert!((d.lhs - 1.0 / 3.0).abs() < 1e-16);
        assert!(r.all_hold(1e-12));
    }

    #[test]
    fn knots_are_exact() {
        let vals = [0.3, -1.7, 2.2, 0.1, 5.0];
        let set = InterpolantSet::from_scalars(&vals, 0.1).unwrap();
        for (k, v) in vals.iter().enumerate() {
            assert_eq!(set.linear(k as f64 * 0.1), vec![*v]);
        }
        assert_eq!(set.forward(0.15), vec![2.2]);
        assert_eq!(set.backward(0.15), vec![-1.7]);
        assert_eq!(set.forward(0.2), vec![2.2]);
    }

    #[test]
    fn constant_sequence() {
        let set = InterpolantSet::from_scalars(&[2.0; 6], 0.2).unwrap();
        let r = verify_interpolant_identities(&set, SampleSpace::Scalar, None).unwrap();
        for name in ["diffLdue", "dtzLdueZ", "diffLinfty", "dtzLinftyZ"] {
            let c = r.get(name).unwrap();
            assert_eq!((c.lhs, c.rhs), (0.0, 0.0), "{name}");
        }
        assert!(r.all_hold(0.0));
    }

    #[test]
    fn rejects_short_input() {
        assert!(InterpolantSet::from_scalars(&[1.0], 1.0).is_err());
        assert!(build_interpolants(vec![], 1.0).is_err());
        assert!(InterpolantSet::from_scalars(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn single_run_gives_empty_table() {
        assert!(study_from_trajectories(&[]).unwrap().rows.is_empty());
        assert_eq!(StudyTable { rows: vec![] }.to_csv(), "tau,dist_n,dist_s,dist_i,dist_h,order_estimate\n");
    }

    #[test]
    fn finer_partition_must_nest() {
        let coarse = InterpolantSet::from_scalars(&[0.0, 1.0, 4.0], 0.5).unwrap();
        let fine = InterpolantSet::from_scalars(&[0.0, 0.2, 1.0, 2.0, 4.0], 0.25).unwrap();
        let r = verify_interpolant_identities(&coarse, SampleSpace::Scalar, Some(&fine)).unwrap();
        assert!(r.get("interpH1Z").unwrap().holds(0.0));
        let odd = InterpolantSet::from_scalars(&[0.0, 1.0, 4.0, 5.0], 1.0 / 3.0).unwrap();
        assert!(verify_interpolant_identities(&coarse, SampleSpace::Scalar, Some(&odd)).is_err());
    }
}
