//! Stationary ergodic coefficient fields `(D_u(y, ω), χ(y, ω))`.
//!
//! A [`FieldSpec`] fixes the law of the process; a [`RandomFieldRealization`]
//! fixes one sample path `ω` through a 64-bit seed. Every random draw is
//! keyed by `(seed, cell index)` through a counter-based ChaCha stream, so a
//! realization can be evaluated lazily, in any order and from any thread, and
//! always returns the same values.
//!
//! Three families are provided:
//!
//! * `Checkerboard`: i.i.d. values on cells `[kℓ, (k+1)ℓ)`.
//! * `RandomPhasePeriodic`: a fixed periodic profile shifted by a uniformly
//!   distributed phase.
//! * `MovingAverage`: a window average of i.i.d. uniform cell noise, clamped
//!   to the ellipticity bounds.

use std::collections::HashMap;
use std::sync::RwLock;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-9;
const MC_SAMPLES: usize = 400_000;
const MC_SEED: u64 = 0x005e_ed0f_e4a1;

/// Finite discrete distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete {
    pub levels: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Discrete {
    pub fn new(levels: Vec<f64>, probs: Vec<f64>) -> Self {
        Self { levels, probs }
    }

    pub fn point(value: f64) -> Self {
        Self::new(vec![value], vec![1.0])
    }

    /// Inverse-CDF lookup for `u ∈ [0, 1)`.
    fn index_of(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    fn issues(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.levels.is_empty() {
            out.push(format!("{name}: at least one level is required"));
        }
        if self.levels.len() != self.probs.len() {
            out.push(format!(
                "{name}: {} levels but {} probabilities",
                self.levels.len(),
                self.probs.len()
            ));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            out.push(format!("{name}: probabilities must be finite and nonnegative"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            out.push(format!("{name}: probabilities sum to {total}, not 1"));
        }
        out
    }
}

/// How χ is drawn on a checkerboard cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ChiLaw {
    Constant(f64),
    /// One χ value per D level; χ is a deterministic function of the D draw.
    Colocated(Vec<f64>),
    /// χ drawn independently of D.
    Independent(Discrete),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Checkerboard {
        cell_length: f64,
        d: Discrete,
        chi: ChiLaw,
    },
    /// Equal-width piecewise-constant profiles on one period, shifted by a
    /// phase uniform on `[0, period)`.
    RandomPhasePeriodic {
        period: f64,
        d_profile: Vec<f64>,
        chi_profile: Vec<f64>,
    },
    /// Cell value = clamp(mean of uniform noise over `2·half_width + 1`
    /// neighbouring cells).
    MovingAverage {
        cell_length: f64,
        half_width: usize,
        d_noise: (f64, f64),
        chi_noise: (f64, f64),
    },
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Checkerboard { .. } => "checkerboard",
            FieldKind::RandomPhasePeriodic { .. } => "random_phase_periodic",
            FieldKind::MovingAverage { .. } => "moving_average",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub d_low: f64,
    pub d_high: f64,
    pub chi_low: f64,
    pub chi_high: f64,
}

impl FieldSpec {
    /// A spatially constant field, written as a one-level checkerboard.
    pub fn constant(d: f64, chi: f64) -> Self {
        Self {
            kind: FieldKind::Checkerboard {
                cell_length: 1.0,
                d: Discrete::point(d),
                chi: ChiLaw::Constant(chi),
            },
            d_low: d,
            d_high: d,
            chi_low: chi,
            chi_high: chi,
        }
    }

    /// Checkerboard with D drawn from `d_levels` and constant χ; bounds are
    /// the level range.
    pub fn checkerboard(cell_length: f64, d: Discrete, chi: ChiLaw) -> Self {
        let d_low = d.levels.iter().copied().fold(f64::INFINITY, f64::min);
        let d_high = d.levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let chi_values: Vec<f64> = match &chi {
            ChiLaw::Constant(c) => vec![*c],
            ChiLaw::Colocated(v) => v.clone(),
            ChiLaw::Independent(dist) => dist.levels.clone(),
        };
        let chi_low = chi_values.iter().copied().fold(f64::INFINITY, f64::min);
        let chi_high = chi_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            kind: FieldKind::Checkerboard {
                cell_length,
                d,
                chi,
            },
            d_low,
            d_high,
            chi_low,
            chi_high,
        }
    }

    /// The `D ∈ {1, 4}`, `p = ½`, unit-cell benchmark with constant χ.
    pub fn two_level_benchmark(chi: f64) -> Self {
        Self::checkerboard(
            1.0,
            Discrete::new(vec![1.0, 4.0], vec![0.5, 0.5]),
            ChiLaw::Constant(chi),
        )
    }

    /// True when the field takes a single deterministic value everywhere.
    pub fn is_constant(&self) -> bool {
        self.d_low == self.d_high && self.chi_low == self.chi_high
    }

    /// Length of the cells on which the field is constant. `None` for
    /// random-phase fields and for constant fields, which have no
    /// microstructure to align with or resolve.
    pub fn cell_length(&self) -> Option<f64> {
        if self.is_constant() {
            return None;
        }
        match &self.kind {
            FieldKind::Checkerboard { cell_length, .. }
            | FieldKind::MovingAverage { cell_length, .. } => Some(*cell_length),
            FieldKind::RandomPhasePeriodic { .. } => None,
        }
    }

    /// Returns the value χ takes everywhere, if χ is deterministic and constant.
    pub fn constant_chi(&self) -> Option<f64> {
        let all_equal = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]) && !v.is_empty();
        match &self.kind {
            FieldKind::Checkerboard { chi, .. } => match chi {
                ChiLaw::Constant(c) => Some(*c),
                ChiLaw::Colocated(v) if all_equal(v) => Some(v[0]),
                ChiLaw::Independent(dist) if all_equal(&dist.levels) => Some(dist.levels[0]),
                _ => None,
            },
            FieldKind::RandomPhasePeriodic { chi_profile, .. } if all_equal(chi_profile) => {
                Some(chi_profile[0])
            }
            FieldKind::MovingAverage { chi_noise, .. } if chi_noise.0 == chi_noise.1 => {
                Some(chi_noise.0.clamp(self.chi_low, self.chi_high))
            }
            _ => None,
        }
    }

    /// All constraint violations, empty when the spec is valid.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let finite = [self.d_low, self.d_high, self.chi_low, self.chi_high]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            out.push("bounds must be finite".to_string());
            return out;
        }
        if !(self.d_low > 0.0) {
            out.push(format!("d_low must be > 0, got {}", self.d_low));
        }
        if self.d_low > self.d_high {
            out.push(format!(
                "d_low ({}) must not exceed d_high ({})",
                self.d_low, self.d_high
            ));
        }
        if self.chi_low < 0.0 {
            out.push(format!("chi_low must be >= 0, got {}", self.chi_low));
        }
        if self.chi_low > self.chi_high {
            out.push(format!(
                "chi_low ({}) must not exceed chi_high ({})",
                self.chi_low, self.chi_high
            ));
        }
        let d_in = |v: f64| v >= self.d_low && v <= self.d_high;
        let chi_in = |v: f64| v >= self.chi_low && v <= self.chi_high;
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be finite and > 0, got {v}"));
            }
        };
        match &self.kind {
            FieldKind::Checkerboard {
                cell_length,
                d,
                chi,
            } => {
                positive("cell_length", *cell_length, &mut out);
                out.extend(d.issues("d"));
                if let Some(v) = d.levels.iter().find(|v| !d_in(**v)) {
                    out.push(format!("D level {v} outside [d_low, d_high]"));
                }
                let chi_levels: &[f64] = match chi {
                    ChiLaw::Constant(c) => std::slice::from_ref(c),
                    ChiLaw::Colocated(v) => {
                        if v.len() != d.levels.len() {
                            out.push(format!(
                                "colocated chi needs one value per D level ({}), got {}",
                                d.levels.len(),
                                v.len()
                            ));
                        }
                        v
                    }
                    ChiLaw::Independent(dist) => {
                        out.extend(dist.issues("chi"));
                        &dist.levels
                    }
                };
                if let Some(v) = chi_levels.iter().find(|v| !chi_in(**v)) {
                    out.push(format!("chi level {v} outside [chi_low, chi_high]"));
                }
            }
            FieldKind::RandomPhasePeriodic {
                period,
                d_profile,
                chi_profile,
            } => {
                positive("period", *period, &mut out);
                if d_profile.is_empty() || chi_profile.is_empty() {
                    out.push("profiles must have at least one piece".to_string());
                }
                if let Some(v) = d_profile.iter().find(|v| !d_in(**v)) {
                    out.push(format!("D profile value {v} outside [d_low, d_high]"));
                }
                if let Some(v) = chi_profile.iter().find(|v| !chi_in(**v)) {
                    out.push(format!("chi profile value {v} outside [chi_low, chi_high]"));
                }
            }
            FieldKind::MovingAverage {
                cell_length,
                d_noise,
                chi_noise,
                ..
            } => {
                positive("cell_length", *cell_length, &mut out);
                for (name, (lo, hi)) in [("d_noise", d_noise), ("chi_noise", chi_noise)] {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        out.push(format!("{name} must be a finite interval lo <= hi"));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(issues))
        }
    }

    /// `E[g(D̃, χ̃)]` under the one-point law of the field.
    ///
    /// Exact for `Checkerboard` (finite sum) and `RandomPhasePeriodic`
    /// (period integral). `MovingAverage` uses Monte Carlo over the window
    /// noise and reports its standard error.
    pub fn ensemble_mean(&self, g: impl Fn(f64, f64) -> f64) -> Expectation {
        match &self.kind {
            FieldKind::Checkerboard { d, chi, .. } => {
                let value = d
                    .levels
                    .iter()
                    .zip(&d.probs)
                    .enumerate()
                    .map(|(i, (&dv, &p))| {
                        let inner = match chi {
                            ChiLaw::Constant(c) => g(dv, *c),
                            ChiLaw::Colocated(v) => g(dv, v[i]),
                            ChiLaw::Independent(dist) => dist
                                .levels
                                .iter()
                                .zip(&dist.probs)
                                .map(|(&c, &q)| q * g(dv, c))
                                .sum(),
                        };
                        p * inner
                    })
                    .sum();
                Expectation::exact(value)
            }
            FieldKind::RandomPhasePeriodic {
                d_profile,
                chi_profile,
                ..
            } => {
                // Merge both partitions of [0, 1) and integrate exactly.
                let mut breaks: Vec<f64> = (0..=d_profile.len())
                    .map(|k| k as f64 / d_profile.len() as f64)
                    .chain((0..=chi_profile.len()).map(|k| k as f64 / chi_profile.len() as f64))
                    .collect();
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let value = breaks
                    .windows(2)
                    .map(|w| {
                        let mid = 0.5 * (w[0] + w[1]);
                        let dv = d_profile[piece(mid, d_profile.len())];
                        let cv = chi_profile[piece(mid, chi_profile.len())];
                        (w[1] - w[0]) * g(dv, cv)
                    })
                    .sum();
                Expectation::exact(value)
            }
            FieldKind::MovingAverage {
                half_width,
                d_noise,
                chi_noise,
                ..
            } => {
                let window = 2 * half_width + 1;
                let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for _ in 0..MC_SAMPLES {
                    let mut sd = 0.0;
                    let mut sc = 0.0;
                    for _ in 0..window {
                        sd += lerp(*d_noise, unit_f64(&mut rng));
                        sc += lerp(*chi_noise, unit_f64(&mut rng));
                    }
                    let dv = (sd / window as f64).clamp(self.d_low, self.d_high);
                    let cv = (sc / window as f64).clamp(self.chi_low, self.chi_high);
                    let x = g(dv, cv);
                    sum += x;
                    sum_sq += x * x;
                }
                let n = MC_SAMPLES as f64;
                let mean = sum / n;
                let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
                Expectation {
                    value: mean,
                    std_error: (var / n).sqrt(),
                }
            }
        }
    }
}

/// An ensemble expectation with its numerical error estimate (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub std_error: f64,
}

impl Expectation {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.std_error == 0.0
    }
}

/// `E[1/D̃_u]`, the quantity whose reciprocal is the 1D effective diffusivity.
pub fn ensemble_inverse_mean_d(spec: &FieldSpec) -> Expectation {
    spec.ensemble_mean(|d, _| 1.0 / d)
}

fn piece(z: f64, pieces: usize) -> usize {
    ((z * pieces as f64).floor() as usize).min(pieces - 1)
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Uniform draw on `[0, 1)` with 53 random bits.
fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn cell_stream(seed: u64, cell: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

/// One sample path of a [`FieldSpec`].
///
/// Immutable apart from a memoisation cache of per-cell values. The cache is
/// filled with values that are a pure function of `(spec, seed, cell)`, so
/// concurrent fills are idempotent.
#[derive(Debug)]
pub struct RandomFieldRealization {
    spec: FieldSpec,
    seed: u64,
    phase: f64,
    cache: RwLock<HashMap<i64, (f64, f64)>>,
}

impl Clone for RandomFieldRealization {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            seed: self.seed,
            phase: self.phase,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

pub fn make_realization(spec: &FieldSpec, seed: u64) -> Result<RandomFieldRealization> {
    spec.validate()?;
    let phase = match &spec.kind {
        FieldKind::RandomPhasePeriodic { period, .. } => {
            period * unit_f64(&mut ChaCha8Rng::seed_from_u64(seed))
        }
        _ => 0.0,
    };
    Ok(RandomFieldRealization {
        spec: spec.clone(),
        seed,
        phase,
        cache: RwLock::new(HashMap::new()),
    })
}

impl RandomFieldRealization {
    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Phase offset θ (zero except for `RandomPhasePeriodic`).
    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// `(D(y), χ(y))`. Cells are `[kℓ, (k+1)ℓ)`, so a point on a cell
    /// boundary belongs to the right-hand cell.
    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        if !y.is_finite() {
            return Err(Error::Validation(format!(
                "field evaluated at non-finite coordinate {y}"
            )));
        }
        Ok(match &self.spec.kind {
            FieldKind::Checkerboard { cell_length, .. }
            | FieldKind::MovingAverage { cell_length, .. } => {
                self.cell_value((y / cell_length).floor() as i64)
            }
            FieldKind::RandomPhasePeriodic {
                period,
                d_profile,
                chi_profile,
            } => {
                let z = (y + self.phase).rem_euclid(*period) / period;
                (
                    d_profile[piece(z, d_profile.len())],
                    chi_profile[piece(z, chi_profile.len())],
                )
            }
        })
    }

    /// Value on integer cell `cell` of a cell-wise constant field.
    pub fn cell_value(&self, cell: i64) -> (f64, f64) {
        if let Some(v) = self.cache.read().expect("cache poisoned").get(&cell) {
            return *v;
        }
        let v = self.draw_cell(cell);
        self.cache
            .write()
            .expect("cache poisoned")
            .insert(cell, v);
        v
    }

    fn draw_cell(&self, cell: i64) -> (f64, f64) {
        let spec = &self.spec;
        match &spec.kind {
            FieldKind::Checkerboard { d, chi, .. } => {
                let mut rng = cell_stream(self.seed, cell);
                let i = d.index_of(unit_f64(&mut rng));
                let c = match chi {
                    ChiLaw::Constant(c) => *c,
                    ChiLaw::Colocated(v) => v[i],
                    ChiLaw::Independent(dist) => dist.levels[dist.index_of(unit_f64(&mut rng))],
                };
                (d.levels[i], c)
            }
            FieldKind::MovingAverage {
                half_width,
                d_noise,
                chi_noise,
                ..
            } => {
                let w = *half_width as i64;
                let (mut sd, mut sc) = (0.0, 0.0);
                for k in cell - w..=cell + w {
                    let mut rng = cell_stream(self.seed, k);
                    sd += lerp(*d_noise, unit_f64(&mut rng));
                    sc += lerp(*chi_noise, unit_f64(&mut rng));
                }
                let n = (2 * w + 1) as f64;
                (
                    (sd / n).clamp(spec.d_low, spec.d_high),
                    (sc / n).clamp(spec.chi_low, spec.chi_high),
                )
            }
            FieldKind::RandomPhasePeriodic { .. } => {
                unreachable!("random-phase fields have no cells")
            }
        }
    }
}

/// Per-cell midpoint samples on a uniform partition of `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub y_mid: Vec<f64>,
    pub d: Vec<f64>,
    pub chi: Vec<f64>,
}

pub fn sample_path(
    realization: &RandomFieldRealization,
    a: f64,
    b: f64,
    n: usize,
) -> Result<SamplePath> {
    if n == 0 {
        return Err(Error::Validation("sample_path needs n >= 1".into()));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Validation(format!(
            "sample_path needs finite a < b, got [{a}, {b}]"
        )));
    }
    let h = (b - a) / n as f64;
    let mut path = SamplePath {
        y_mid: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        chi: Vec::with_capacity(n),
    };
    for i in 0..n {
        let y = a + (i as f64 + 0.5) * h;
        let (d, chi) = realization.eval(y)?;
        path.y_mid.push(y);
        path.d.push(d);
        path.chi.push(chi);
    }
    Ok(path)
}
