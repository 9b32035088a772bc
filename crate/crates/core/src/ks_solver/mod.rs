//! Finite-volume solver for the 1D Keller-Segel system
//!
//! ```text
//! u_t = ∂x( D_u ∂x u − χ u ∂x v ),    v_t = ∂x( D_v ∂x v ) − γ v + α u
//! ```
//!
//! on `Q = (a, b)` with zero-flux boundaries. The same code path serves the
//! microscopic problem (coefficients `D(x/ε)`, `χ(x/ε)` from a realization)
//! and the homogenized problem (constant `D*`, `χ*`).
//!
//! Space: cell-centred finite volumes, harmonic face diffusivities, first
//! order upwinding of the chemotactic drift. Time: backward Euler in both
//! equations. Within a step a Picard loop alternates
//!
//! 1. `u^{k+1}`: implicit diffusion + implicit upwind drift in the frozen `v^k`,
//! 2. `v^{k+1}`: implicit diffusion and decay with source `α u^{k+1}`,
//!
//! starting from `v^0 = v^n`. Each `u` solve is an M-matrix system whose
//! column sums equal `1/dt`, so `u` stays nonnegative and `Σ u_i h` is
//! conserved to round-off.

mod profiles;
mod tridiag;

pub use profiles::{DvProfile, InitialPreset};
pub use tridiag::thomas_solve;

use crate::error::{Error, Result};
use crate::random_fields::RandomFieldRealization;

/// Uniform partition of `Q = (a, b)` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Validation(format!("grid needs finite a < b, got ({a}, {b})")));
        }
        if n < 2 {
            return Err(Error::Validation(format!("grid needs n >= 2 cells, got {n}")));
        }
        Ok(Self { a, b, n })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn h(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn x_mid(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.h()
    }

    pub fn x_face(&self, k: usize) -> f64 {
        self.a + k as f64 * self.h()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.h()
    }
}

/// Face coefficients. Face `k` sits at `x_k = a + k h`; faces `0` and `n`
/// are the boundary and carry no flux whatever their stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub grid: Grid,
    pub d_u_faces: Vec<f64>,
    pub chi_faces: Vec<f64>,
    pub d_v_faces: Vec<f64>,
    pub gamma: f64,
    pub alpha: f64,
}

impl Coefficients {
    /// Spatially constant `D_u`, `χ` (the homogenized problem).
    pub fn constant(
        grid: Grid,
        d_u: f64,
        chi: f64,
        d_v: &DvProfile,
        gamma: f64,
        alpha: f64,
    ) -> Result<Self> {
        let coeffs = Self {
            grid,
            d_u_faces: vec![d_u; grid.n + 1],
            chi_faces: vec![chi; grid.n + 1],
            d_v_faces: dv_faces(&grid, d_v),
            gamma,
            alpha,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    /// True when the `u` equation depends on `v`.
    fn has_chemotaxis(&self) -> bool {
        self.chi_faces[1..self.grid.n].iter().any(|&c| c != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if [&self.d_u_faces, &self.chi_faces, &self.d_v_faces]
            .iter()
            .any(|f| f.len() != n + 1)
        {
            return Err(Error::Validation(format!("face arrays must have n + 1 = {} entries", n + 1)));
        }
        let interior = 1..n;
        if self.d_u_faces[interior.clone()].iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Validation("D_u faces must be positive".into()));
        }
        if self.d_v_faces[interior.clone()].iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Validation("D_v faces must be positive".into()));
        }
        if self.chi_faces[interior].iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("chi faces must be finite".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Validation(format!(
                "gamma and alpha must be positive, got gamma = {}, alpha = {}",
                self.gamma, self.alpha
            )));
        }
        Ok(())
    }
}

fn dv_faces(grid: &Grid, profile: &DvProfile) -> Vec<f64> {
    (0..=grid.n).map(|k| profile.eval(grid, grid.x_face(k))).collect()
}

/// Face coefficients of the microscopic problem: cell values
/// `(D, χ)(x_i / ε)` at the midpoints, combined at each interior face as
/// the harmonic mean of `D` and `D_face · mean(χ/D)` for `χ`.
pub fn build_micro_coefficients(
    realization: &RandomFieldRealization,
    epsilon: f64,
    grid: Grid,
    d_v: &DvProfile,
    gamma: f64,
    alpha: f64,
) -> Result<Coefficients> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Validation(format!("epsilon must be > 0, got {epsilon}")));
    }
    let cells = (0..grid.n)
        .map(|i| realization.eval(grid.x_mid(i) / epsilon))
        .collect::<Result<Vec<_>>>()?;
    let n = grid.n;
    let mut d_u_faces = vec![0.0; n + 1];
    let mut chi_faces = vec![0.0; n + 1];
    for k in 1..n {
        let (dl, cl) = cells[k - 1];
        let (dr, cr) = cells[k];
        let d_face = 2.0 * dl * dr / (dl + dr);
        d_u_faces[k] = d_face;
        chi_faces[k] = d_face * 0.5 * (cl / dl + cr / dr);
    }
    (d_u_faces[0], chi_faces[0]) = cells[0];
    (d_u_faces[n], chi_faces[n]) = cells[n - 1];

    let coeffs = Coefficients {
        grid,
        d_u_faces,
        chi_faces,
        d_v_faces: dv_faces(&grid, d_v),
        gamma,
        alpha,
    };
    coeffs.validate()?;
    Ok(coeffs)
}

/// Micro runs must resolve the oscillation: `h ≤ ε ℓ / 4` for cell-wise
/// constant fields with cell length `ℓ`.
pub fn check_resolution(grid: &Grid, epsilon: f64, cell_length: Option<f64>) -> Result<()> {
    if let Some(ell) = cell_length {
        let limit = epsilon * ell / 4.0;
        if grid.h() > limit * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "grid h = {} does not resolve epsilon = {epsilon} (need h <= {limit})",
                grid.h()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn from_presets(grid: &Grid, u0: &InitialPreset, v0: &InitialPreset) -> Self {
        Self {
            t: 0.0,
            u: u0.sample(grid),
            v: v0.sample(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Oscillation scale; informational, set for micro runs only.
    pub epsilon: Option<f64>,
    /// Keep every `snapshot_stride`-th step (the last step is always kept).
    pub snapshot_stride: usize,
}

impl SolverConfig {
    pub const DEFAULT_PICARD_TOL: f64 = 1e-8;
    pub const DEFAULT_PICARD_MAX: usize = 50;

    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            picard_tol: Self::DEFAULT_PICARD_TOL,
            picard_max: Self::DEFAULT_PICARD_MAX,
            epsilon: None,
            snapshot_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    /// Number of steps; `t_end` must be a whole number of steps.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Validation(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 || self.snapshot_stride == 0 {
            return Err(Error::Validation(
                "picard_tol > 0, picard_max >= 1 and snapshot_stride >= 1 are required".into(),
            ));
        }
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Validation(format!(
                "t_end = {} is not a whole number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Advances one backward-Euler step. Returns the new state and the number
/// of Picard iterations used.
pub fn step(state: &State, coeffs: &Coefficients, config: &SolverConfig) -> Result<(State, usize)> {
    let dt = config.dt;
    let coupled = coeffs.has_chemotaxis();
    let mut v_k = state.v.clone();
    let mut u_prev: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;

    for iter in 1..=config.picard_max {
        let u_next = solve_u(&state.u, &v_k, coeffs, dt)?;
        v_k = solve_v(&state.v, &u_next, coeffs, dt)?;
        if let Some(prev) = &u_prev {
            change = relative_change(&u_next, prev);
        }
        let done = !coupled || change < config.picard_tol;
        if done {
            let next = State {
                t: state.t + dt,
                u: u_next,
                v: v_k,
            };
            if next.u.iter().chain(&next.v).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            return Ok((next, iter));
        }
        u_prev = Some(u_next);
    }
    Err(Error::PicardNotConverged {
        iterations: config.picard_max,
        residual: change,
    })
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = new.iter().map(|a| a * a).sum();
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

/// `(u − u_old)/dt + (J_{k+1} − J_k)/h = 0` with
/// `J_k = −D_k (u_k − u_{k−1})/h + a_k⁺ u_{k−1} + a_k⁻ u_k`, `a_k = χ_k (v_k − v_{k−1})/h`.
fn solve_u(u_old: &[f64], v: &[f64], coeffs: &Coefficients, dt: f64) -> Result<Vec<f64>> {
    let n = coeffs.grid.n;
    let h = coeffs.grid.h();
    let inv_dt = 1.0 / dt;
    let mut lower = vec![0.0; n];
    let mut diag = vec![inv_dt; n];
    let mut upper = vec![0.0; n];
    let rhs: Vec<f64> = u_old.iter().map(|u| u * inv_dt).collect();

    // interior face k couples cell k−1 (left) and cell k (right)
    for k in 1..n {
        let (l, r) = (k - 1, k);
        let diff = coeffs.d_u_faces[k] / (h * h);
        let drift = coeffs.chi_faces[k] * (v[r] - v[l]) / (h * h);
        let (ap, am) = (drift.max(0.0), drift.min(0.0));
        // J_k/h = −diff (u_r − u_l) + ap u_l + am u_r ; leaves l, enters r
        diag[l] += diff + ap;
        upper[l] += -diff + am;
        diag[r] += diff - am;
        lower[r] += -diff - ap;
    }
    thomas_solve(&lower, &diag, &upper, &rhs)
}

/// `(v − v_old)/dt − ∂x(D_v ∂x v) + γ v = α u`.
fn solve_v(v_old: &[f64], u: &[f64], coeffs: &Coefficients, dt: f64) -> Result<Vec<f64>> {
    let n = coeffs.grid.n;
    let h = coeffs.grid.h();
    let inv_dt = 1.0 / dt;
    let mut lower = vec![0.0; n];
    let mut diag = vec![inv_dt + coeffs.gamma; n];
    let mut upper = vec![0.0; n];
    let rhs: Vec<f64> = v_old
        .iter()
        .zip(u)
        .map(|(v, u)| v * inv_dt + coeffs.alpha * u)
        .collect();
    for k in 1..n {
        let diff = coeffs.d_v_faces[k] / (h * h);
        diag[k - 1] += diff;
        upper[k - 1] -= diff;
        diag[k] += diff;
        lower[k] -= diff;
    }
    thomas_solve(&lower, &diag, &upper, &rhs)
}

/// Per-step diagnostics (step 0 is the initial state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub picard_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub config: SolverConfig,
    pub snapshots: Vec<State>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &State {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// Largest `|mass_u(t) − mass_u(0)| / mass_u(0)` over the run.
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass_u;
        let scale = if m0 == 0.0 { 1.0 } else { m0.abs() };
        self.diagnostics
            .iter()
            .map(|d| (d.mass_u - m0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn min_u(&self) -> f64 {
        self.snapshots
            .iter()
            .flat_map(|s| s.u.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn run(initial: &State, coeffs: &Coefficients, config: &SolverConfig) -> Result<Trajectory> {
    let grid = coeffs.grid;
    coeffs.validate()?;
    let n_steps = config.n_steps()?;
    if initial.u.len() != grid.n || initial.v.len() != grid.n {
        return Err(Error::Validation(format!(
            "initial data must have {} cells, got u: {}, v: {}",
            grid.n,
            initial.u.len(),
            initial.v.len()
        )));
    }
    if initial.u.iter().chain(&initial.v).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation("initial u and v must be finite and nonnegative".into()));
    }

    let diag_of = |s: &State, iters| Diagnostic {
        t: s.t,
        mass_u: grid.integrate(&s.u),
        mass_v: grid.integrate(&s.v),
        picard_iters: iters,
    };
    let mut state = State {
        t: 0.0,
        ..initial.clone()
    };
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    diagnostics.push(diag_of(&state, 0));
    let mut snapshots = vec![state.clone()];

    for s in 1..=n_steps {
        let (mut next, iters) = step(&state, coeffs, config).map_err(|e| e.at_time(state.t))?;
        next.t = s as f64 * config.dt;
        diagnostics.push(diag_of(&next, iters));
        if s % config.snapshot_stride == 0 || s == n_steps {
            snapshots.push(next.clone());
        }
        state = next;
    }
    Ok(Trajectory {
        grid,
        config: *config,
        snapshots,
        diagnostics,
    })
}

/// The homogenized problem: constant `D*`, `χ*`.
#[allow(clippy::too_many_arguments)]
pub fn run_macro(
    d_star: f64,
    chi_star: f64,
    d_v: &DvProfile,
    gamma: f64,
    alpha: f64,
    grid: Grid,
    initial: &State,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let coeffs = Coefficients::constant(grid, d_star, chi_star, d_v, gamma, alpha)?;
    run(initial, &coeffs, config)
}

/// Discrete `L²((0, τ) × Q)` norms of `u_a − u_b` and `v_a − v_b`: midpoint
/// rule in time on each snapshot interval (average of the end values),
/// cell averages in space.
pub fn space_time_l2_error(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.grid != b.grid {
        return Err(Error::Validation("trajectories live on different grids".into()));
    }
    let (ta, tb) = (a.times(), b.times());
    let tol = 1e-12 * ta.last().copied().unwrap_or(1.0).abs().max(1.0);
    if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(x, y)| (x - y).abs() > tol) {
        return Err(Error::Validation("trajectories have different snapshot times".into()));
    }
    let h = a.grid.h();
    let mut err_u = 0.0;
    let mut err_v = 0.0;
    for j in 1..ta.len() {
        let dt = ta[j] - ta[j - 1];
        let (a0, a1, b0, b1) = (&a.snapshots[j - 1], &a.snapshots[j], &b.snapshots[j - 1], &b.snapshots[j]);
        let mid = |x0: &[f64], x1: &[f64], y0: &[f64], y1: &[f64]| -> f64 {
            (0..x0.len())
                .map(|i| {
                    let e = 0.5 * ((x0[i] - y0[i]) + (x1[i] - y1[i]));
                    e * e
                })
                .sum::<f64>()
        };
        err_u += dt * h * mid(&a0.u, &a1.u, &b0.u, &b1.u);
        err_v += dt * h * mid(&a0.v, &a1.v, &b0.v, &b1.v);
    }
    Ok((err_u.sqrt(), err_v.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::{make_realization, FieldSpec};
    use std::f64::consts::PI;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    fn uniform(grid: Grid, u: f64, v: f64) -> State {
        State {
            t: 0.0,
            u: vec![u; grid.n],
            v: vec![v; grid.n],
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(1.0, 0.0, 4).is_err());
        let g = unit_grid(4);
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.x_mid(0), 0.125);
        assert_eq!(g.x_face(4), 1.0);
    }

    #[test]
    fn constant_state_reduces_to_scalar_update() {
        let g = unit_grid(8);
        let coeffs = Coefficients::constant(g, 1.3, 2.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let cfg = SolverConfig::new(0.1, 0.1);
        let (next, _) = step(&uniform(g, 1.0, 0.0), &coeffs, &cfg).unwrap();
        for (u, v) in next.u.iter().zip(&next.v) {
            assert!((u - 1.0).abs() < 1e-14);
            assert!((v - 1.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chi_zero_needs_one_picard_iteration() {
        let g = unit_grid(32);
        let coeffs = Coefficients::constant(g, 1.0, 0.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let init = State::from_presets(
            &g,
            &InitialPreset::RaisedCosine {
                base: 1.0,
                amplitude: 1.0,
                mode: 1,
            },
            &InitialPreset::Constant(0.0),
        );
        let traj = run(&init, &coeffs, &SolverConfig::new(1e-3, 0.01)).unwrap();
        assert!(traj.diagnostics[1..].iter().all(|d| d.picard_iters == 1));
    }

    #[test]
    fn delta_bump_mass_is_conserved() {
        let g = unit_grid(50);
        let coeffs = Coefficients::constant(g, 0.5, 0.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let mut init = uniform(g, 0.0, 0.0);
        init.u[17] = 1.0 / g.h();
        let (next, _) = step(&init, &coeffs, &SolverConfig::new(1e-3, 1e-3)).unwrap();
        assert!((g.integrate(&next.u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn micro_face_values() {
        let g = unit_grid(4);
        let r = make_realization(&FieldSpec::constant(2.0, 1.0), 0).unwrap();
        let c = build_micro_coefficients(&r, 0.1, g, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        assert!(c.d_u_faces[1..4].iter().all(|&d| (d - 2.0).abs() < 1e-15));
        assert!(c.chi_faces[1..4].iter().all(|&x| (x - 1.0).abs() < 1e-15));

        // grid cells coincide with micro cells: ε = 1/4, cells y ∈ [k, k+1)
        let bench = make_realization(&FieldSpec::two_level_benchmark(1.0), 21).unwrap();
        let c = build_micro_coefficients(&bench, 0.25, g, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        for k in 1..4 {
            let (dl, dr) = (bench.cell_value(k as i64 - 1).0, bench.cell_value(k as i64).0);
            let expect = 2.0 * dl * dr / (dl + dr);
            assert_eq!(c.d_u_faces[k], expect);
            if dl != dr {
                assert!((expect - 1.6).abs() < 1e-15);
            }
        }

        // halving ε compresses the field: the fine grid sees twice as many cells
        let g8 = unit_grid(8);
        let half = build_micro_coefficients(&bench, 0.125, g8, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        for k in 1..8 {
            let (dl, dr) = (bench.cell_value(k as i64 - 1).0, bench.cell_value(k as i64).0);
            assert_eq!(half.d_u_faces[k], 2.0 * dl * dr / (dl + dr));
        }
        assert!(build_micro_coefficients(&bench, 0.0, g, &DvProfile::Constant(1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn resolution_rule() {
        let g = unit_grid(256);
        assert!(check_resolution(&g, 1.0 / 64.0, Some(1.0)).is_ok());
        assert!(check_resolution(&g, 1.0 / 128.0, Some(1.0)).is_err());
        assert!(check_resolution(&g, 1.0 / 128.0, None).is_ok());
    }

    #[test]
    fn v_mass_follows_backward_euler_recursion() {
        let g = unit_grid(40);
        let coeffs = Coefficients::constant(
            g,
            1.0,
            3.0,
            &DvProfile::Smooth { c0: 1.0, c1: 0.5 },
            0.7,
            1.9,
        )
        .unwrap();
        let init = State::from_presets(
            &g,
            &InitialPreset::Gaussian {
                base: 0.1,
                amplitude: 2.0,
                center: 0.3,
                width: 0.1,
            },
            &InitialPreset::RaisedCosine {
                base: 1.0,
                amplitude: 0.5,
                mode: 2,
            },
        );
        let cfg = SolverConfig::new(1e-3, 0.2);
        let traj = run(&init, &coeffs, &cfg).unwrap();
        let m_u = traj.diagnostics[0].mass_u;
        for w in traj.diagnostics.windows(2) {
            let expect = (w[0].mass_v / cfg.dt + 1.9 * m_u) / (1.0 / cfg.dt + 0.7);
            assert!((w[1].mass_v - expect).abs() < 1e-12 * expect);
        }
        assert!(traj.max_mass_drift() < 1e-12);
        assert!(traj.min_u() >= -1e-14);
    }

    #[test]
    fn positivity_under_strong_chemotaxis() {
        let g = unit_grid(64);
        let coeffs = Coefficients::constant(g, 0.01, 20.0, &DvProfile::Constant(0.1), 1.0, 5.0).unwrap();
        let init = State::from_presets(
            &g,
            &InitialPreset::Gaussian {
                base: 0.0,
                amplitude: 1.0,
                center: 0.5,
                width: 0.05,
            },
            &InitialPreset::Gaussian {
                base: 0.0,
                amplitude: 1.0,
                center: 0.6,
                width: 0.1,
            },
        );
        let traj = run(&init, &coeffs, &SolverConfig::new(1e-3, 0.05)).unwrap();
        assert!(traj.min_u() >= -1e-14);
        assert!(traj.max_mass_drift() < 1e-12);
    }

    #[test]
    fn heat_mode_decays() {
        let g = unit_grid(128);
        let coeffs = Coefficients::constant(g, 1.0, 0.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let init = State::from_presets(
            &g,
            &InitialPreset::RaisedCosine {
                base: 1.0,
                amplitude: 1.0,
                mode: 1,
            },
            &InitialPreset::Constant(0.0),
        );
        let traj = run(&init, &coeffs, &SolverConfig::new(1e-4, 0.1).with_stride(100)).unwrap();
        let end = traj.final_state();
        let decay = (-PI * PI * 0.1f64).exp();
        for i in 0..g.n {
            let exact = 1.0 + decay * (PI * g.x_mid(i)).cos();
            assert!((end.u[i] - exact).abs() < 5e-4);
        }
        assert!((g.integrate(&end.u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn macro_matches_constant_micro() {
        let g = unit_grid(32);
        let dv = DvProfile::Smooth { c0: 1.0, c1: 0.25 };
        let init = State::from_presets(
            &g,
            &InitialPreset::RaisedCosine {
                base: 1.0,
                amplitude: 1.0,
                mode: 1,
            },
            &InitialPreset::Constant(0.2),
        );
        let cfg = SolverConfig::new(1e-3, 0.05);
        for chi in [0.0, 0.8] {
            let r = make_realization(&FieldSpec::constant(1.6, chi), 4).unwrap();
            let micro = run(&init, &build_micro_coefficients(&r, 0.1, g, &dv, 1.0, 1.0).unwrap(), &cfg).unwrap();
            let mac = run_macro(1.6, chi, &dv, 1.0, 1.0, g, &init, &cfg).unwrap();
            let (eu, ev) = space_time_l2_error(&micro, &mac).unwrap();
            assert!(eu < 1e-12 && ev < 1e-12, "{eu} {ev}");
        }
    }

    #[test]
    fn l2_error_of_constant_offset() {
        let g = unit_grid(10);
        let coeffs = Coefficients::constant(g, 1.0, 0.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let a = run(&uniform(g, 1.0, 0.0), &coeffs, &SolverConfig::new(0.1, 1.0)).unwrap();
        assert_eq!(space_time_l2_error(&a, &a).unwrap(), (0.0, 0.0));
        let mut b = a.clone();
        b.snapshots.iter_mut().for_each(|s| s.u.iter_mut().for_each(|u| *u += 1.0));
        let (eu, ev) = space_time_l2_error(&a, &b).unwrap();
        assert!((eu - 1.0).abs() < 1e-14 && ev == 0.0);

        let other = run(&uniform(g, 1.0, 0.0), &coeffs, &SolverConfig::new(0.05, 1.0)).unwrap();
        assert!(space_time_l2_error(&a, &other).is_err());
    }

    #[test]
    fn run_rejects_bad_inputs() {
        let g = unit_grid(4);
        let coeffs = Coefficients::constant(g, 1.0, 0.0, &DvProfile::Constant(1.0), 1.0, 1.0).unwrap();
        let mut neg = uniform(g, 1.0, 0.0);
        neg.u[2] = -0.1;
        assert!(run(&neg, &coeffs, &SolverConfig::new(0.1, 1.0)).is_err());
        assert!(run(&uniform(g, 1.0, 0.0), &coeffs, &SolverConfig::new(0.3, 1.0)).is_err());
        assert!(Coefficients::constant(g, 1.0, 0.0, &DvProfile::Constant(1.0), -1.0, 1.0).is_err());
    }

    #[test]
    fn picard_cap_is_reported() {
        let g = unit_grid(32);
        let coeffs = Coefficients::constant(g, 0.1, 50.0, &DvProfile::Constant(0.1), 1.0, 10.0).unwrap();
        let init = State::from_presets(
            &g,
            &InitialPreset::Gaussian {
                base: 0.0,
                amplitude: 5.0,
                center: 0.5,
                width: 0.1,
            },
            &InitialPreset::Constant(0.0),
        );
        let mut cfg = SolverConfig::new(0.1, 0.1);
        cfg.picard_max = 1;
        let err = run(&init, &coeffs, &cfg).unwrap_err();
        assert!(matches!(err, Error::AtTime { .. }), "{err}");
        assert!(err.to_string().contains("Picard"));
    }
}
