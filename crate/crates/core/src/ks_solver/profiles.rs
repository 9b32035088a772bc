//! Built-in chemoattractant diffusivity profiles and initial-data presets.
//!
//! Every preset is smooth on the closed domain, so `u₀ ∈ H¹` and `v₀ ∈ H²`
//! hold by construction.

use std::f64::consts::PI;

use super::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DvProfile {
    Constant(f64),
    /// `c0 + c1 · sin(π (x − a) / |Q|)` with `c0 > c1 ≥ 0`.
    Smooth { c0: f64, c1: f64 },
}

impl DvProfile {
    pub fn eval(&self, grid: &Grid, x: f64) -> f64 {
        match *self {
            DvProfile::Constant(c) => c,
            DvProfile::Smooth { c0, c1 } => c0 + c1 * (PI * (x - grid.a) / grid.length()).sin(),
        }
    }

    pub fn issues(&self) -> Vec<String> {
        match *self {
            DvProfile::Constant(c) if !(c.is_finite() && c > 0.0) => {
                vec![format!("constant D_v must be > 0, got {c}")]
            }
            DvProfile::Smooth { c0, c1 } if !(c0.is_finite() && c1.is_finite() && c0 > c1 && c1 >= 0.0) => {
                vec![format!("smooth D_v needs c0 > c1 >= 0, got c0 = {c0}, c1 = {c1}")]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialPreset {
    Constant(f64),
    /// `base + amplitude · cos(mode · π (x − a) / |Q|)`; satisfies the
    /// zero-flux condition at both ends.
    RaisedCosine { base: f64, amplitude: f64, mode: u32 },
    /// `base + amplitude · exp(−((x − center) / width)²)`.
    Gaussian {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl InitialPreset {
    pub fn eval(&self, grid: &Grid, x: f64) -> f64 {
        match *self {
            InitialPreset::Constant(c) => c,
            InitialPreset::RaisedCosine {
                base,
                amplitude,
                mode,
            } => base + amplitude * (mode as f64 * PI * (x - grid.a) / grid.length()).cos(),
            InitialPreset::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * (-((x - center) / width).powi(2)).exp(),
        }
    }

    /// Midpoint samples on `grid`.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.n).map(|i| self.eval(grid, grid.x_mid(i))).collect()
    }

    /// Problems that would make the data negative or non-finite.
    pub fn issues(&self) -> Vec<String> {
        let bad = match *self {
            InitialPreset::Constant(c) => !(c.is_finite() && c >= 0.0),
            InitialPreset::RaisedCosine {
                base, amplitude, ..
            } => !(base.is_finite() && amplitude.is_finite() && base >= amplitude.abs()),
            InitialPreset::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => !([base, amplitude, center, width].iter().all(|v| v.is_finite())
                && base >= 0.0
                && amplitude >= 0.0
                && width > 0.0),
        };
        if bad {
            vec![format!("initial preset {self:?} is not a finite nonnegative profile")]
        } else {
            Vec::new()
        }
    }
}
