//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seird::grid::{build_mesh, FaceAveraging, Field, Mesh};
use seird::model::{ContactModulation, Diffusivity, ModelParams, Nonlinearity};
use seird::stepper::{InitialData, Simulation, TimeGrid, Truncation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense `b·vol·I + Σ_faces T_f (e_lo - e_hi)(e_lo - e_hi)ᵀ`, built by
/// walking the lattice directly.
pub fn dense_operator(mesh: &Mesh, kappa: &[f64], b: &[f64], averaging: FaceAveraging) -> DMatrix<f64> {
    let [nx, ny, nz] = mesh.cells3();
    let n = nx * ny * nz;
    let h: Vec<f64> = (0..3).map(|a| if a < mesh.dim() { mesh.spacing()[a] } else { 1.0 }).collect();
    let vol: f64 = mesh.spacing().iter().product();
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut m = DMatrix::zeros(n, n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = idx(x, y, z);
                m[(c, c)] += b[c] * vol;
                let ups = [(x + 1 < nx, 0), (y + 1 < ny, 1), (z + 1 < nz, 2)];
                for (exists, axis) in ups {
                    if !exists || axis >= mesh.dim() {
                        continue;
                    }
                    let o = match axis {
                        0 => idx(x + 1, y, z),
                        1 => idx(x, y + 1, z),
                        _ => idx(x, y, z + 1),
                    };
                    let (ka, kb) = (kappa[c], kappa[o]);
                    let kf = match averaging {
                        FaceAveraging::Harmonic => 2.0 * ka * kb / (ka + kb),
                        FaceAveraging::Arithmetic => 0.5 * (ka + kb),
                    };
                    let t = kf * (vol / h[axis]) / h[axis];
                    m[(c, c)] += t;
                    m[(o, o)] += t;
                    m[(c, o)] -= t;
                    m[(o, c)] -= t;
                }
            }
        }
    }
    m
}

pub fn dense_solve(m: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
    let x = m.clone().lu().solve(&DVector::from_column_slice(rhs)).expect("nonsingular");
    x.iter().copied().collect()
}

/// Dense solution of `-div(a∇u) + b u = f` with zero-flux boundaries.
pub fn dense_reaction_diffusion(mesh: &Mesh, a: &[f64], b: &[f64], f: &[f64]) -> Vec<f64> {
    let vol = mesh.cell_volume();
    let rhs: Vec<f64> = f.iter().map(|v| v * vol).collect();
    dense_solve(&dense_operator(mesh, a, b, FaceAveraging::Harmonic), &rhs)
}

/// Dense solution of `(I - τΔ)v = u`.
pub fn dense_mollify(mesh: &Mesh, u: &[f64], tau: f64) -> Vec<f64> {
    let n = u.len();
    dense_reaction_diffusion(mesh, &vec![tau; n], &vec![1.0; n], u)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sup_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// `κ(clamp(y))` for an affine-type preset.
pub fn kappa_clamped(d: Diffusivity, lower: f64, upper: f64, y: f64) -> f64 {
    let z = y.max(lower).min(upper);
    match d {
        Diffusivity::Constant(c) => c,
        Diffusivity::Linear => z,
        Diffusivity::Affine { slope, offset } => slope * z + offset,
    }
}

/// `∫₀ʸ κ(clamp(z)) dz` by Simpson's rule on each smooth piece.
pub fn kirchhoff_quadrature(d: Diffusivity, lower: f64, upper: f64, y: f64) -> f64 {
    let (lo, hi) = (y.min(0.0), y.max(0.0));
    let mut knots = vec![lo, hi];
    knots.extend([lower, upper].into_iter().filter(|&b| b.is_finite() && b > lo && b < hi));
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = |z: f64| kappa_clamped(d, lower, upper, z);
    let total: f64 = knots
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (k(w[0]) + 4.0 * k(0.5 * (w[0] + w[1])) + k(w[1])))
        .sum();
    if y < 0.0 {
        -total
    } else {
        total
    }
}

/// Dense Newton for the population step written in the `n` unknown:
/// `λ n + L K(n) / vol = n_k / τ`.
pub fn dense_population_step(
    mesh: &Mesh,
    n_prev: &[f64],
    i_prev: &[f64],
    params: &ModelParams,
    d: Diffusivity,
    lower: f64,
    upper: f64,
    tau: f64,
) -> Vec<f64> {
    let len = n_prev.len();
    let vol = mesh.cell_volume();
    let stiff = dense_operator(mesh, &vec![1.0; len], &vec![0.0; len], FaceAveraging::Harmonic) / vol;
    let lambda: Vec<f64> = i_prev
        .iter()
        .map(|i| 1.0 / tau - params.alpha + params.mu + params.death() * i)
        .collect();
    let mut n = DVector::from_column_slice(n_prev);
    for _ in 0..100 {
        let k = DVector::from_iterator(len, n.iter().map(|&y| kirchhoff_quadrature(d, lower, upper, y)));
        let lk = &stiff * &k;
        let res = DVector::from_iterator(len, (0..len).map(|c| lambda[c] * n[c] + lk[c] - n_prev[c] / tau));
        let mut jac = stiff.clone();
        for c in 0..len {
            let kc = kappa_clamped(d, lower, upper, n[c]);
            for r in 0..len {
                jac[(r, c)] *= kc;
            }
            jac[(c, c)] += lambda[c];
        }
        let step = jac.lu().solve(&res).expect("nonsingular jacobian");
        n -= &step;
        if step.amax() <= 1e-15 * n.amax() {
            break;
        }
    }
    n.iter().copied().collect()
}

/// One homogeneous state `(n, s, i, h, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalars {
    pub n: f64,
    pub s: f64,
    pub i: f64,
    pub h: f64,
    pub d: f64,
}

fn contact(a: ContactModulation, y: f64) -> f64 {
    match a {
        ContactModulation::Constant(c) => c,
        ContactModulation::Saturating(a0) => (1.0 - a0 / y).max(0.0),
    }
}

/// Backward Euler for the rate equations with the same lagging as the scheme.
pub fn scalar_oracle(p: &ModelParams, a: ContactModulation, start: Scalars, tau: f64, steps: usize) -> Vec<Scalars> {
    let (bi, be, out, sig, phr, phd) = if p.normalized {
        (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    } else {
        (p.beta_i, p.beta_e, p.sigma + p.phi_e, p.sigma, p.phi_r, p.phi_d)
    };
    let mut z = start;
    let mut traj = vec![z];
    for _ in 0..steps {
        let e = z.h - z.s;
        let n = z.n / (1.0 + tau * (phd * z.i - p.alpha + p.mu));
        let pressure = contact(a, n) * (bi * z.i + be * e);
        let s = (z.s / tau + p.alpha * n) / (1.0 / tau + pressure + p.mu);
        let h = (z.h / tau + p.alpha * n + out * s) / (1.0 / tau + p.mu + out);
        let i = (z.i / tau + sig * (h - s)) / (1.0 / tau + phd * n + phr + p.mu);
        let d = z.d + tau * phd * i * n;
        z = Scalars { n, s, i, h, d };
        traj.push(z);
    }
    traj
}

/// A random admissible simulation on a box mesh.
pub fn random_simulation(r: &mut ChaCha8Rng, max_cells: usize, max_steps: usize, dim: usize) -> Simulation {
    let cells: Vec<usize> = (0..dim).map(|_| r.gen_range(4..=max_cells)).collect();
    let lengths: Vec<f64> = (0..dim).map(|_| r.gen_range(0.5..2.0)).collect();
    let mesh = build_mesh(dim, &cells, &lengths).unwrap();
    let alpha = r.gen_range(0.05..1.0);
    let mu = r.gen_range(0.05..1.0);
    let mut params = ModelParams::normalized(alpha, mu);
    if r.gen_bool(0.5) {
        params.normalized = false;
        params.beta_i = r.gen_range(0.0..2.0);
        params.beta_e = r.gen_range(0.0..2.0);
        params.sigma = r.gen_range(0.0..2.0);
        params.phi_e = r.gen_range(0.0..1.0);
        params.phi_r = r.gen_range(0.0..1.0);
        params.phi_d = r.gen_range(0.0..1.0);
    }
    let contact = if r.gen_bool(0.5) {
        ContactModulation::Constant(r.gen_range(0.0..2.0))
    } else {
        ContactModulation::Saturating(r.gen_range(0.0..0.5))
    };
    let diffusivity = match r.gen_range(0..3) {
        0 => Diffusivity::Constant(r.gen_range(0.01..1.0)),
        1 => Diffusivity::Linear,
        _ => Diffusivity::Affine { slope: r.gen_range(0.0..1.0), offset: r.gen_range(0.01..0.5) },
    };
    let steps = r.gen_range(4..=max_steps);
    // keep τ(α-μ)⁺ ≤ 1/2 and τ < 1
    let tau_max = if alpha > mu { (0.5 / (alpha - mu)).min(0.9) } else { 0.9 };
    let horizon = r.gen_range(0.1..1.5f64).min(tau_max * steps as f64);

    let bumps: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let mut c = [0.0; 3];
            for a in 0..dim {
                c[a] = r.gen_range(0.0..lengths[a]);
            }
            (c, r.gen_range(0.05..0.5), r.gen_range(0.0..1.0))
        })
        .collect();
    let bump = |k: usize| {
        let (c, w, amp) = bumps[k];
        move |p: [f64; 3]| {
            let r2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
            amp * (-r2 / (w * w)).exp()
        }
    };
    let n_floor = r.gen_range(0.2..1.5);
    let n = Field::from_fn(&mesh, |p| n_floor + bump(0)(p));
    let s_frac = r.gen_range(0.1..0.9);
    let s = n.map(|v| s_frac * v).zip_map(&Field::from_fn(&mesh, bump(1)), |a, b| a * (1.0 - 0.5 * b.min(1.0)));
    let e = Field::from_fn(&mesh, bump(2)).scale(0.1);
    let h = s.add(&e);
    let i = Field::from_fn(&mesh, bump(3)).scale(0.2);

    Simulation {
        mesh,
        params,
        nonlinearity: Nonlinearity::new(contact, diffusivity).unwrap(),
        time: TimeGrid::new(horizon, steps, &params).unwrap(),
        initial: InitialData { n, s, i, h },
        mollify: r.gen_bool(0.5),
        tol: 1e-10,
        averaging: FaceAveraging::Harmonic,
        truncation: Truncation::Ledger,
        initial_deceased: 0.0,
    }
}

/// A spatially uniform simulation with the given scalar initial state.
pub fn homogeneous_simulation(
    mesh: Mesh,
    params: ModelParams,
    nl: Nonlinearity,
    z0: Scalars,
    horizon: f64,
    steps: usize,
) -> Simulation {
    let c = |v: f64| Field::constant(&mesh, v);
    Simulation {
        initial: InitialData { n: c(z0.n), s: c(z0.s), i: c(z0.i), h: c(z0.h) },
        time: TimeGrid::new(horizon, steps, &params).unwrap(),
        mesh,
        params,
        nonlinearity: nl,
        mollify: false,
        tol: 1e-10,
        averaging: FaceAveraging::Harmonic,
        truncation: Truncation::Ledger,
        initial_deceased: z0.d,
    }
}
