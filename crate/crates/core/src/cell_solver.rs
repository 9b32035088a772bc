//! Periodic cell problems on `S_ρ = [0, ρ]`.
//!
//! A realization is restricted to `[0, ρ]` and extended periodically, then
//! the two corrector equations
//!
//! ```text
//! ∂z( D (∂z η̄ + 1) ) = 0,     ∂z( D ∂z η̂ − χ ) = 0,     η̄, η̂ ρ-periodic, zero mean
//! ```
//!
//! are solved with a cell-centred finite-volume scheme. Face diffusivities
//! are harmonic means of the adjacent cells and the face value of `χ/D` is
//! the arithmetic mean, which makes the scheme exact for data that is
//! constant on each cell: the discrete face fluxes are constant to round-off
//! and coincide with the closed-form values of [`analytic_effective`].

use crate::error::{Error, Result};
use crate::ks_solver::thomas_solve;
use crate::random_fields::RandomFieldRealization;

/// Relative tolerance for `ρ` being an integer number of field cells.
const ALIGN_TOL: f64 = 1e-9;

/// `D^ρ_per`, `χ^ρ_per` as cell-wise constants on a uniform partition of `[0, ρ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficientField {
    pub rho: f64,
    pub d_cells: Vec<f64>,
    pub chi_cells: Vec<f64>,
}

impl PeriodicCoefficientField {
    pub fn new(rho: f64, d_cells: Vec<f64>, chi_cells: Vec<f64>) -> Result<Self> {
        let field = Self {
            rho,
            d_cells,
            chi_cells,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn n_cells(&self) -> usize {
        self.d_cells.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.rho / self.n_cells() as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Validation(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.d_cells.is_empty() || self.d_cells.len() != self.chi_cells.len() {
            return Err(Error::Validation(format!(
                "need n_cells >= 1 and matching arrays, got {} D and {} chi values",
                self.d_cells.len(),
                self.chi_cells.len()
            )));
        }
        if let Some(d) = self.d_cells.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Validation(format!("cell diffusivity {d} is not positive")));
        }
        if let Some(c) = self.chi_cells.iter().find(|c| !c.is_finite()) {
            return Err(Error::Validation(format!("cell chemosensitivity {c} is not finite")));
        }
        Ok(())
    }
}

/// Restricts `realization` to `[0, ρ]`, sampling each of `n_cells` cells at
/// its midpoint.
///
/// For cell-wise constant fields, `ρ` must be a whole number of field cells
/// and `n_cells` a multiple of that number, unless `allow_misaligned` is set
/// (midpoint sampling then carries an O(h) representation error).
pub fn periodize(
    realization: &RandomFieldRealization,
    rho: f64,
    n_cells: usize,
    allow_misaligned: bool,
) -> Result<PeriodicCoefficientField> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Validation(format!("rho must be > 0, got {rho}")));
    }
    if n_cells == 0 {
        return Err(Error::Validation("n_cells must be >= 1".into()));
    }
    if let (Some(ell), false) = (realization.spec().cell_length(), allow_misaligned) {
        check_alignment(rho, n_cells, ell)?;
    }
    let h = rho / n_cells as f64;
    let mut d_cells = Vec::with_capacity(n_cells);
    let mut chi_cells = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let (d, chi) = realization.eval((i as f64 + 0.5) * h)?;
        d_cells.push(d);
        chi_cells.push(chi);
    }
    PeriodicCoefficientField::new(rho, d_cells, chi_cells)
}

/// `rho` must be a whole number of field cells of length `ell` and `n_cells` a
/// multiple of that number.
pub fn check_alignment(rho: f64, n_cells: usize, ell: f64) -> Result<()> {
    let ratio = rho / ell;
    let whole = ratio.round();
    if whole < 1.0 || (ratio - whole).abs() > ALIGN_TOL * ratio.max(1.0) {
        return Err(Error::Validation(format!(
            "misaligned periodization: rho = {rho} is not a multiple of the cell length {ell}"
        )));
    }
    if !n_cells.is_multiple_of(whole as usize) {
        return Err(Error::Validation(format!(
            "misaligned periodization: n_cells = {n_cells} is not a multiple of rho/cell_length = {whole}"
        )));
    }
    Ok(())
}

/// Discrete correctors and their (constant) fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub field: PeriodicCoefficientField,
    /// η̄ at the `n + 1` cell interfaces `z_k = k h`; first and last equal.
    pub eta_bar: Vec<f64>,
    /// η̂ at the cell interfaces.
    pub eta_hat: Vec<f64>,
    /// `D (∂z η̄ + 1)`.
    pub flux_bar: f64,
    /// `D ∂z η̂ − χ`.
    pub flux_hat: f64,
    /// Largest relative deviation of a face flux from its mean, over both problems.
    pub flux_residual: f64,
}

pub fn solve_cell_problems(field: &PeriodicCoefficientField) -> Result<CellSolution> {
    field.validate()?;
    let n = field.n_cells();
    let h = field.cell_width();
    let d = &field.d_cells;
    let chi = &field.chi_cells;

    // face k sits between cell k and cell (k + 1) mod n
    let mut trans = Vec::with_capacity(n);
    let mut src_bar = Vec::with_capacity(n);
    let mut src_hat = Vec::with_capacity(n);
    for k in 0..n {
        let (l, r) = (k, (k + 1) % n);
        let d_face = 2.0 * d[l] * d[r] / (d[l] + d[r]);
        trans.push(d_face / h);
        src_bar.push(d_face);
        src_hat.push(-d_face * 0.5 * (chi[l] / d[l] + chi[r] / d[r]));
    }

    let (eta_c_bar, flux_bar, res_bar) = solve_periodic(&trans, &src_bar)?;
    let (eta_c_hat, flux_hat, res_hat) = solve_periodic(&trans, &src_hat)?;

    // cell-wise slopes reconstructed from the constant flux
    let eta_bar = nodal_values(&eta_c_bar, h, |k| flux_bar / d[k] - 1.0);
    let eta_hat = nodal_values(&eta_c_hat, h, |k| (flux_hat + chi[k]) / d[k]);

    Ok(CellSolution {
        field: field.clone(),
        eta_bar,
        eta_hat,
        flux_bar,
        flux_hat,
        flux_residual: res_bar.max(res_hat),
    })
}

/// Solves `F_k − F_{k−1} = 0` with `F_k = T_k (η_{k+1} − η_k) + s_k` on a
/// ring of cells. Returns zero-mean cell values, the mean face flux and the
/// relative flux-constancy residual.
fn solve_periodic(trans: &[f64], src: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let n = trans.len();
    let mut eta = vec![0.0; n];
    if n > 1 {
        // ground η_0 = 0 and solve for η_1..η_{n−1}
        let m = n - 1;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 1..n {
            let r = i - 1;
            diag[r] = trans[i - 1] + trans[i];
            if i >= 2 {
                lower[r] = -trans[i - 1];
            }
            if i + 1 < n {
                upper[r] = -trans[i];
            }
            rhs[r] = src[i] - src[i - 1];
        }
        let sol = thomas_solve(&lower, &diag, &upper, &rhs)?;
        eta[1..].copy_from_slice(&sol);
        let mean = eta.iter().sum::<f64>() / n as f64;
        eta.iter_mut().for_each(|e| *e -= mean);
    }

    let fluxes: Vec<f64> = (0..n)
        .map(|k| trans[k] * (eta[(k + 1) % n] - eta[k]) + src[k])
        .collect();
    let mean = fluxes.iter().sum::<f64>() / n as f64;
    let scale = src
        .iter()
        .fold(mean.abs(), |acc, s| acc.max(s.abs()))
        .max(f64::MIN_POSITIVE);
    let residual = fluxes
        .iter()
        .map(|f| (f - mean).abs())
        .fold(0.0, f64::max)
        / scale;
    Ok((eta, mean, residual))
}

fn nodal_values(cell: &[f64], h: f64, slope: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut nodes: Vec<f64> = cell
        .iter()
        .enumerate()
        .map(|(k, c)| c - 0.5 * h * slope(k))
        .collect();
    nodes.push(nodes[0]);
    nodes
}

/// `(D^ρ_ω, χ^ρ_ω)` by exact cell-wise quadrature of the flux averages
/// `(1/ρ)∫ D(∂z η̄ + 1)` and `−(1/ρ)∫ (D ∂z η̂ − χ)`.
pub fn effective_from_cell(sol: &CellSolution) -> (f64, f64) {
    let field = &sol.field;
    let h = field.cell_width();
    let mut d_sum = 0.0;
    let mut chi_sum = 0.0;
    for k in 0..field.n_cells() {
        let d = field.d_cells[k];
        let g_bar = (sol.eta_bar[k + 1] - sol.eta_bar[k]) / h;
        let g_hat = (sol.eta_hat[k + 1] - sol.eta_hat[k]) / h;
        d_sum += h * d * (g_bar + 1.0);
        chi_sum += h * (d * g_hat - field.chi_cells[k]);
    }
    (d_sum / field.rho, -chi_sum / field.rho)
}

/// Closed form of the 1D cell problems: the harmonic mean of `D` and the
/// `1/D`-weighted mean of `χ`.
pub fn analytic_effective(field: &PeriodicCoefficientField) -> (f64, f64) {
    let h = field.cell_width();
    let (inv, weighted) = field
        .d_cells
        .iter()
        .zip(&field.chi_cells)
        .fold((0.0, 0.0), |(inv, w), (d, c)| (inv + h / d, w + h * c / d));
    (field.rho / inv, weighted / inv)
}
