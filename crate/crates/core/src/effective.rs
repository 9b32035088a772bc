//! Monte-Carlo estimation of the effective coefficients `D*`, `χ*` from
//! periodized cell problems, and sweeps over the period length `ρ`.
//!
//! Realization `k` of an estimate uses seed `base_seed + k` (wrapping). In a
//! sweep, row `j` starts at `base_seed + j · n_realizations`, so rows never
//! share a realization.

use rayon::prelude::*;

use crate::cell_solver::{effective_from_cell, periodize, solve_cell_problems};
use crate::error::{Error, Result};
use crate::random_fields::{make_realization, FieldSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationSample {
    pub seed: u64,
    pub d_rho: f64,
    pub chi_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveEstimate {
    pub rho: f64,
    pub n_cells: usize,
    pub n_realizations: usize,
    pub mean_d: f64,
    pub mean_chi: f64,
    /// Sample standard deviations across seeds (NaN for a single realization).
    pub sd_d: f64,
    pub sd_chi: f64,
    /// `sd / sqrt(n_realizations)`.
    pub se_d: f64,
    pub se_chi: f64,
    pub samples: Vec<RealizationSample>,
}

/// Per-realization `(D^ρ_ω, χ^ρ_ω)` for one seed.
pub fn realization_effective(
    spec: &FieldSpec,
    seed: u64,
    rho: f64,
    n_cells: usize,
    allow_misaligned: bool,
) -> Result<RealizationSample> {
    let run = || -> Result<RealizationSample> {
        let realization = make_realization(spec, seed)?;
        let field = periodize(&realization, rho, n_cells, allow_misaligned)?;
        let (d_rho, chi_rho) = effective_from_cell(&solve_cell_problems(&field)?);
        Ok(RealizationSample {
            seed,
            d_rho,
            chi_rho,
        })
    };
    run().map_err(|e| e.at_seed(seed))
}

pub fn estimate(
    spec: &FieldSpec,
    rho: f64,
    n_cells: usize,
    n_realizations: usize,
    base_seed: u64,
    allow_misaligned: bool,
) -> Result<EffectiveEstimate> {
    if n_realizations == 0 {
        return Err(Error::Validation("n_realizations must be >= 1".into()));
    }
    spec.validate()?;
    // rayon keeps index order, so the reduction below is seed-ordered
    let samples = (0..n_realizations as u64)
        .into_par_iter()
        .map(|k| {
            realization_effective(spec, base_seed.wrapping_add(k), rho, n_cells, allow_misaligned)
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean_d, sd_d) = mean_sd(samples.iter().map(|s| s.d_rho));
    let (mean_chi, sd_chi) = mean_sd(samples.iter().map(|s| s.chi_rho));
    let root_n = (n_realizations as f64).sqrt();
    Ok(EffectiveEstimate {
        rho,
        n_cells,
        n_realizations,
        mean_d,
        mean_chi,
        sd_d,
        sd_chi,
        se_d: sd_d / root_n,
        se_chi: sd_chi / root_n,
        samples,
    })
}

/// Mean and sample standard deviation; the latter is NaN for fewer than two values.
fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Target values `D* = 1 / E[1/D̃]`, `χ* = E[χ̃/D̃] / E[1/D̃]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceEffective {
    pub d_star: f64,
    pub chi_star: f64,
    /// False when the expectations were estimated numerically.
    pub exact: bool,
    pub se_d_star: f64,
    pub se_chi_star: f64,
}

pub fn reference_effective(spec: &FieldSpec) -> ReferenceEffective {
    let inv = spec.ensemble_mean(|d, _| 1.0 / d);
    let weighted = spec.ensemble_mean(|d, chi| chi / d);
    let d_star = 1.0 / inv.value;
    // a constant χ cancels out of the ratio exactly
    let chi_star = spec
        .constant_chi()
        .unwrap_or(weighted.value / inv.value);
    let exact = inv.is_exact() && weighted.is_exact();
    let se_d_star = inv.std_error / (inv.value * inv.value);
    let se_chi_star = if spec.constant_chi().is_some() {
        0.0
    } else {
        ((weighted.std_error / inv.value).powi(2)
            + (weighted.value * inv.std_error / (inv.value * inv.value)).powi(2))
        .sqrt()
    };
    ReferenceEffective {
        d_star,
        chi_star,
        exact,
        se_d_star,
        se_chi_star,
    }
}

/// Cell count for period `rho` at a fixed number of cells per unit length.
pub fn cells_for_rho(rho: f64, n_cells_per_unit: usize) -> usize {
    (rho * n_cells_per_unit as f64).round().max(1.0) as usize
}

pub fn rho_sweep(
    spec: &FieldSpec,
    rho_list: &[f64],
    n_cells_per_unit: usize,
    n_realizations: usize,
    base_seed: u64,
) -> Result<Vec<EffectiveEstimate>> {
    if rho_list.is_empty() {
        return Err(Error::Validation("rho_list must not be empty".into()));
    }
    if rho_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("rho_list must be strictly increasing".into()));
    }
    if n_cells_per_unit == 0 {
        return Err(Error::Validation("n_cells_per_unit must be >= 1".into()));
    }
    rho_list
        .iter()
        .enumerate()
        .map(|(j, &rho)| {
            let seed = base_seed.wrapping_add((j as u64).wrapping_mul(n_realizations as u64));
            estimate(
                spec,
                rho,
                cells_for_rho(rho, n_cells_per_unit),
                n_realizations,
                seed,
                false,
            )
        })
        .collect()
}
