//! Experiment configuration.
//!
//! The file is sectioned `key = value` text (the TOML subset documented in
//! `docs/formats.md`). Parsing never stops at the first problem: every
//! missing key, type mismatch and constraint violation is collected with its
//! dotted key path.

use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::cell_solver::check_alignment;
use crate::effective::cells_for_rho;
use crate::error::{ConfigIssue, Error, Result};
use crate::ks_solver::{check_resolution, DvProfile, Grid, InitialPreset, SolverConfig};
use crate::random_fields::{ChiLaw, Discrete, FieldKind, FieldSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CellBlock {
    pub rho_list: Vec<f64>,
    pub n_cells_per_unit: usize,
    pub n_realizations: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeBlock {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub dt: f64,
    pub tau: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub d_v: DvProfile,
    pub u0: InitialPreset,
    pub v0: InitialPreset,
    pub epsilon_list: Vec<f64>,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Realization seed for micro runs.
    pub seed: u64,
    /// Reuse one realization for every ε (otherwise ε number `i` uses `seed + i`).
    pub shared_seed: bool,
    /// Minimum `err_u(ε_first) / err_u(ε_last)` the ε-sweep must show.
    pub required_error_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub dir: String,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    pub cell: CellBlock,
    pub pde: PdeBlock,
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.pde.a, self.pde.b, self.pde.n)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.pde.dt,
            t_end: self.pde.tau,
            picard_tol: self.pde.picard_tol,
            picard_max: self.pde.picard_max,
            epsilon: None,
            snapshot_stride: self.output.snapshot_stride,
        }
    }

    /// Canonical form with every default filled in; parses back to `self`.
    pub fn echo(&self) -> String {
        let f = |x: f64| format!("{x:?}");
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(", "));
        let mut s = String::new();
        let spec = &self.field;
        s.push_str("[field]\n");
        let _ = writeln!(s, "kind = \"{}\"", spec.kind.name());
        match &spec.kind {
            FieldKind::Checkerboard { cell_length, d, chi } => {
                let _ = writeln!(s, "cell_length = {}", f(*cell_length));
                let _ = writeln!(s, "d_levels = {}", list(&d.levels));
                let _ = writeln!(s, "d_probs = {}", list(&d.probs));
                match chi {
                    ChiLaw::Constant(c) => {
                        let _ = writeln!(s, "chi = {}", f(*c));
                    }
                    ChiLaw::Colocated(v) => {
                        let _ = writeln!(s, "chi_law = \"colocated\"\nchi_levels = {}", list(v));
                    }
                    ChiLaw::Independent(dist) => {
                        let _ = writeln!(
                            s,
                            "chi_law = \"independent\"\nchi_levels = {}\nchi_probs = {}",
                            list(&dist.levels),
                            list(&dist.probs)
                        );
                    }
                }
            }
            FieldKind::RandomPhasePeriodic {
                period,
                d_profile,
                chi_profile,
            } => {
                let _ = writeln!(s, "period = {}", f(*period));
                let _ = writeln!(s, "d_profile = {}", list(d_profile));
                let _ = writeln!(s, "chi_profile = {}", list(chi_profile));
            }
            FieldKind::MovingAverage {
                cell_length,
                half_width,
                d_noise,
                chi_noise,
            } => {
                let _ = writeln!(s, "cell_length = {}", f(*cell_length));
                let _ = writeln!(s, "half_width = {half_width}");
                let _ = writeln!(s, "d_noise = {}", list(&[d_noise.0, d_noise.1]));
                let _ = writeln!(s, "chi_noise = {}", list(&[chi_noise.0, chi_noise.1]));
            }
        }
        let _ = writeln!(
            s,
            "d_low = {}\nd_high = {}\nchi_low = {}\nchi_high = {}",
            f(spec.d_low),
            f(spec.d_high),
            f(spec.chi_low),
            f(spec.chi_high)
        );

        let c = &self.cell;
        let _ = writeln!(
            s,
            "\n[cell]\nrho_list = {}\nn_cells_per_unit = {}\nn_realizations = {}\nbase_seed = {}",
            list(&c.rho_list),
            c.n_cells_per_unit,
            c.n_realizations,
            c.base_seed
        );

        let p = &self.pde;
        let _ = writeln!(
            s,
            "\n[pde]\na = {}\nb = {}\nn = {}\ndt = {}\ntau = {}\ngamma = {}\nalpha = {}\nepsilon_list = {}\npicard_tol = {}\npicard_max = {}\nseed = {}\nshared_seed = {}\nrequired_error_ratio = {}",
            f(p.a),
            f(p.b),
            p.n,
            f(p.dt),
            f(p.tau),
            f(p.gamma),
            f(p.alpha),
            list(&p.epsilon_list),
            f(p.picard_tol),
            p.picard_max,
            p.seed,
            p.shared_seed,
            f(p.required_error_ratio)
        );
        s.push_str("\n[pde.d_v]\n");
        match p.d_v {
            DvProfile::Constant(c) => {
                let _ = writeln!(s, "kind = \"constant\"\nvalue = {}", f(c));
            }
            DvProfile::Smooth { c0, c1 } => {
                let _ = writeln!(s, "kind = \"smooth\"\nc0 = {}\nc1 = {}", f(c0), f(c1));
            }
        }
        for (name, preset) in [("u0", &p.u0), ("v0", &p.v0)] {
            let _ = writeln!(s, "\n[pde.{name}]");
            match *preset {
                InitialPreset::Constant(c) => {
                    let _ = writeln!(s, "preset = \"constant\"\nvalue = {}", f(c));
                }
                InitialPreset::RaisedCosine {
                    base,
                    amplitude,
                    mode,
                } => {
                    let _ = writeln!(
                        s,
                        "preset = \"raised_cosine\"\nbase = {}\namplitude = {}\nmode = {mode}",
                        f(base),
                        f(amplitude)
                    );
                }
                InitialPreset::Gaussian {
                    base,
                    amplitude,
                    center,
                    width,
                } => {
                    let _ = writeln!(
                        s,
                        "preset = \"gaussian\"\nbase = {}\namplitude = {}\ncenter = {}\nwidth = {}",
                        f(base),
                        f(amplitude),
                        f(center),
                        f(width)
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            "\n[output]\ndir = {:?}\nsnapshot_stride = {}",
            self.output.dir, self.output.snapshot_stride
        );
        s
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        Error::Config(vec![ConfigIssue {
            key: "<file>".into(),
            message: e.message().trim().to_string(),
        }])
    })?;
    let mut r = Reader::default();
    let empty = Table::new();
    r.known(&root, "", &["field", "cell", "pde", "output"]);

    let field = match root.get("field") {
        Some(Value::Table(t)) => r.field(t),
        Some(_) => {
            r.issue("field", "expected a table");
            None
        }
        None => {
            r.issue("field", "missing required section");
            None
        }
    };
    let cell_t = r.section(&root, "cell").unwrap_or(&empty);
    let cell = r.cell(cell_t);
    let pde_t = r.section(&root, "pde").unwrap_or(&empty);
    let pde = r.pde(pde_t);
    let output_t = r.section(&root, "output").unwrap_or(&empty);
    let output = r.output(output_t);

    if let (Some(field), Some(cell), Some(pde)) = (&field, &cell, &pde) {
        r.cross_checks(field, cell, pde);
    }
    match (field, cell, pde, output) {
        (Some(field), Some(cell), Some(pde), Some(output)) if r.issues.is_empty() => {
            Ok(ExperimentConfig {
                field,
                cell,
                pde,
                output,
            })
        }
        _ => Err(Error::Config(r.issues)),
    }
}

#[derive(Default)]
struct Reader {
    issues: Vec<ConfigIssue>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Reader {
    fn issue(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn known(&mut self, t: &Table, prefix: &str, keys: &[&str]) {
        for k in t.keys() {
            if !keys.contains(&k.as_str()) {
                self.issue(join(prefix, k), "unknown key");
            }
        }
    }

    fn section<'a>(&mut self, t: &'a Table, key: &str) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(inner)) => Some(inner),
            Some(_) => {
                self.issue(key, "expected a table");
                None
            }
            None => None,
        }
    }

    fn f64_opt(&mut self, t: &Table, prefix: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.issue(join(prefix, key), format!("expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64_or(&mut self, t: &Table, prefix: &str, key: &str, default: f64) -> f64 {
        if t.contains_key(key) {
            self.f64_opt(t, prefix, key).unwrap_or(f64::NAN)
        } else {
            default
        }
    }

    fn f64_req(&mut self, t: &Table, prefix: &str, key: &str) -> f64 {
        if !t.contains_key(key) {
            self.issue(join(prefix, key), "missing required key");
            return f64::NAN;
        }
        self.f64_opt(t, prefix, key).unwrap_or(f64::NAN)
    }

    fn int_or(&mut self, t: &Table, prefix: &str, key: &str, default: u64) -> u64 {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(Value::Integer(i)) => {
                self.issue(join(prefix, key), format!("must be >= 0, got {i}"));
                default
            }
            Some(other) => {
                self.issue(join(prefix, key), format!("expected an integer, got {}", other.type_str()));
                default
            }
        }
    }

    fn bool_or(&mut self, t: &Table, prefix: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.issue(join(prefix, key), format!("expected a boolean, got {}", other.type_str()));
                default
            }
        }
    }

    fn str_opt<'a>(&mut self, t: &'a Table, prefix: &str, key: &str) -> Option<&'a str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            other => {
                self.issue(join(prefix, key), format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn list_opt(&mut self, t: &Table, prefix: &str, key: &str) -> Option<Vec<f64>> {
        let path = join(prefix, key);
        match t.get(key)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, v) in items.iter().enumerate() {
                    match v {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(n) => out.push(*n as f64),
                        other => {
                            self.issue(format!("{path}[{i}]"), format!("expected a number, got {}", other.type_str()));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.issue(path, format!("expected an array of numbers, got {}", other.type_str()));
                None
            }
        }
    }

    fn list_req(&mut self, t: &Table, prefix: &str, key: &str) -> Option<Vec<f64>> {
        if !t.contains_key(key) {
            self.issue(join(prefix, key), "missing required key");
            return None;
        }
        self.list_opt(t, prefix, key)
    }

    fn pair_req(&mut self, t: &Table, prefix: &str, key: &str) -> Option<(f64, f64)> {
        let v = self.list_req(t, prefix, key)?;
        if v.len() != 2 {
            self.issue(join(prefix, key), "expected [low, high]");
            return None;
        }
        Some((v[0], v[1]))
    }

    fn field(&mut self, t: &Table) -> Option<FieldSpec> {
        let p = "field";
        let kind = self.str_opt(t, p, "kind").map(str::to_string);
        let bounds = ["d_low", "d_high", "chi_low", "chi_high"];
        let before = self.issues.len();
        let spec = match kind.as_deref() {
            Some("constant") => {
                self.known(t, p, &["kind", "d", "chi"]);
                let d = self.f64_req(t, p, "d");
                let chi = self.f64_or(t, p, "chi", 0.0);
                Some(FieldSpec::constant(d, chi))
            }
            Some("checkerboard") => {
                let mut keys = vec!["kind", "cell_length", "d_levels", "d_probs", "chi", "chi_law", "chi_levels", "chi_probs"];
                keys.extend(bounds);
                self.known(t, p, &keys);
                let cell_length = self.f64_or(t, p, "cell_length", 1.0);
                let levels = self.list_req(t, p, "d_levels");
                let probs = self.list_req(t, p, "d_probs");
                let chi = self.chi_law(t, p);
                match (levels, probs, chi) {
                    (Some(l), Some(pr), Some(chi)) => {
                        let mut spec = FieldSpec::checkerboard(cell_length, Discrete::new(l, pr), chi);
                        self.bounds_override(t, p, &mut spec);
                        Some(spec)
                    }
                    _ => None,
                }
            }
            Some("random_phase_periodic") => {
                let mut keys = vec!["kind", "period", "d_profile", "chi_profile"];
                keys.extend(bounds);
                self.known(t, p, &keys);
                let period = self.f64_or(t, p, "period", 1.0);
                let d_profile = self.list_req(t, p, "d_profile");
                let chi_profile = self.list_opt(t, p, "chi_profile").unwrap_or_else(|| vec![0.0]);
                d_profile.map(|d_profile| {
                    let range = |v: &[f64]| {
                        (
                            v.iter().copied().fold(f64::INFINITY, f64::min),
                            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        )
                    };
                    let (d_low, d_high) = range(&d_profile);
                    let (chi_low, chi_high) = range(&chi_profile);
                    let mut spec = FieldSpec {
                        kind: FieldKind::RandomPhasePeriodic {
                            period,
                            d_profile,
                            chi_profile,
                        },
                        d_low,
                        d_high,
                        chi_low,
                        chi_high,
                    };
                    self.bounds_override(t, p, &mut spec);
                    spec
                })
            }
            Some("moving_average") => {
                let mut keys = vec!["kind", "cell_length", "half_width", "d_noise", "chi_noise"];
                keys.extend(bounds);
                self.known(t, p, &keys);
                let cell_length = self.f64_or(t, p, "cell_length", 1.0);
                let half_width = self.int_or(t, p, "half_width", 1) as usize;
                let d_noise = self.pair_req(t, p, "d_noise");
                let chi_noise = self.pair_req(t, p, "chi_noise");
                let d_low = self.f64_req(t, p, "d_low");
                let d_high = self.f64_req(t, p, "d_high");
                let chi_low = self.f64_req(t, p, "chi_low");
                let chi_high = self.f64_req(t, p, "chi_high");
                match (d_noise, chi_noise) {
                    (Some(d_noise), Some(chi_noise)) => Some(FieldSpec {
                        kind: FieldKind::MovingAverage {
                            cell_length,
                            half_width,
                            d_noise,
                            chi_noise,
                        },
                        d_low,
                        d_high,
                        chi_low,
                        chi_high,
                    }),
                    _ => None,
                }
            }
            Some(other) => {
                self.issue(
                    "field.kind",
                    format!("unknown kind {other:?} (expected constant, checkerboard, random_phase_periodic or moving_average)"),
                );
                None
            }
            None => {
                if !t.contains_key("kind") {
                    self.issue("field.kind", "missing required key");
                }
                None
            }
        };
        let spec = spec?;
        if self.issues.len() > before {
            return None;
        }
        for msg in spec.issues() {
            self.issue("field", msg);
        }
        Some(spec)
    }

    fn chi_law(&mut self, t: &Table, p: &str) -> Option<ChiLaw> {
        let law = self.str_opt(t, p, "chi_law").map(str::to_string);
        match law.as_deref() {
            None | Some("constant") if !t.contains_key("chi_levels") => {
                Some(ChiLaw::Constant(self.f64_or(t, p, "chi", 0.0)))
            }
            None | Some("colocated") if !t.contains_key("chi_probs") => {
                self.list_req(t, p, "chi_levels").map(ChiLaw::Colocated)
            }
            None | Some("independent") => {
                let levels = self.list_req(t, p, "chi_levels");
                let probs = self.list_req(t, p, "chi_probs");
                Some(ChiLaw::Independent(Discrete::new(levels?, probs?)))
            }
            Some(other) => {
                self.issue(
                    join(p, "chi_law"),
                    format!("{other:?} does not match the chi keys given (constant: chi; colocated: chi_levels; independent: chi_levels + chi_probs)"),
                );
                None
            }
        }
    }

    fn bounds_override(&mut self, t: &Table, p: &str, spec: &mut FieldSpec) {
        spec.d_low = self.f64_or(t, p, "d_low", spec.d_low);
        spec.d_high = self.f64_or(t, p, "d_high", spec.d_high);
        spec.chi_low = self.f64_or(t, p, "chi_low", spec.chi_low);
        spec.chi_high = self.f64_or(t, p, "chi_high", spec.chi_high);
    }

    fn cell(&mut self, t: &Table) -> Option<CellBlock> {
        let p = "cell";
        self.known(t, p, &["rho_list", "n_cells_per_unit", "n_realizations", "base_seed"]);
        let rho_list = self
            .list_opt(t, p, "rho_list")
            .unwrap_or_else(|| vec![8.0, 32.0, 128.0, 512.0]);
        let n_cells_per_unit = self.int_or(t, p, "n_cells_per_unit", 1) as usize;
        let n_realizations = self.int_or(t, p, "n_realizations", 64) as usize;
        let base_seed = self.int_or(t, p, "base_seed", 0);
        if rho_list.is_empty() {
            self.issue("cell.rho_list", "must not be empty");
        } else if rho_list.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            self.issue("cell.rho_list", "entries must be positive");
        } else if rho_list.windows(2).any(|w| !(w[0] < w[1])) {
            self.issue("cell.rho_list", "rho_list must be strictly increasing");
        }
        if n_cells_per_unit == 0 {
            self.issue("cell.n_cells_per_unit", "must be >= 1");
        }
        if n_realizations == 0 {
            self.issue("cell.n_realizations", "must be >= 1");
        }
        Some(CellBlock {
            rho_list,
            n_cells_per_unit,
            n_realizations,
            base_seed,
        })
    }

    fn preset(&mut self, t: Option<&Table>, prefix: &str, default: InitialPreset) -> InitialPreset {
        let Some(t) = t else { return default };
        let kind = self.str_opt(t, prefix, "preset").map(str::to_string);
        let preset = match kind.as_deref() {
            Some("constant") => {
                self.known(t, prefix, &["preset", "value"]);
                InitialPreset::Constant(self.f64_req(t, prefix, "value"))
            }
            Some("raised_cosine") => {
                self.known(t, prefix, &["preset", "base", "amplitude", "mode"]);
                InitialPreset::RaisedCosine {
                    base: self.f64_or(t, prefix, "base", 1.0),
                    amplitude: self.f64_or(t, prefix, "amplitude", 1.0),
                    mode: self.int_or(t, prefix, "mode", 1) as u32,
                }
            }
            Some("gaussian") => {
                self.known(t, prefix, &["preset", "base", "amplitude", "center", "width"]);
                InitialPreset::Gaussian {
                    base: self.f64_or(t, prefix, "base", 0.0),
                    amplitude: self.f64_or(t, prefix, "amplitude", 1.0),
                    center: self.f64_req(t, prefix, "center"),
                    width: self.f64_req(t, prefix, "width"),
                }
            }
            Some(other) => {
                self.issue(
                    join(prefix, "preset"),
                    format!("unknown preset {other:?} (expected constant, raised_cosine or gaussian)"),
                );
                return default;
            }
            None => {
                self.issue(join(prefix, "preset"), "missing required key");
                return default;
            }
        };
        for msg in preset.issues() {
            self.issue(prefix, msg);
        }
        preset
    }

    fn pde(&mut self, t: &Table) -> Option<PdeBlock> {
        let p = "pde";
        self.known(
            t,
            p,
            &[
                "a", "b", "n", "dt", "tau", "gamma", "alpha", "epsilon_list", "picard_tol",
                "picard_max", "seed", "shared_seed", "required_error_ratio", "d_v", "u0", "v0",
            ],
        );
        let a = self.f64_or(t, p, "a", 0.0);
        let b = self.f64_or(t, p, "b", 1.0);
        let n = self.int_or(t, p, "n", 512) as usize;
        let dt = self.f64_or(t, p, "dt", 5e-4);
        let tau = self.f64_or(t, p, "tau", 0.5);
        let gamma = self.f64_or(t, p, "gamma", 1.0);
        let alpha = self.f64_or(t, p, "alpha", 1.0);
        let epsilon_list = self
            .list_opt(t, p, "epsilon_list")
            .unwrap_or_else(|| vec![0.125, 0.0625, 0.03125, 0.015625]);
        let picard_tol = self.f64_or(t, p, "picard_tol", SolverConfig::DEFAULT_PICARD_TOL);
        let picard_max = self.int_or(t, p, "picard_max", SolverConfig::DEFAULT_PICARD_MAX as u64) as usize;
        let seed = self.int_or(t, p, "seed", 0);
        let shared_seed = self.bool_or(t, p, "shared_seed", true);
        let required_error_ratio = self.f64_or(t, p, "required_error_ratio", 1.0);

        let d_v = match self.section(t, "d_v").cloned() {
            None => DvProfile::Constant(1.0),
            Some(dv) => {
                let prefix = "pde.d_v";
                let kind = self.str_opt(&dv, prefix, "kind").map(str::to_string);
                match kind.as_deref() {
                    Some("constant") => {
                        self.known(&dv, prefix, &["kind", "value"]);
                        DvProfile::Constant(self.f64_req(&dv, prefix, "value"))
                    }
                    Some("smooth") => {
                        self.known(&dv, prefix, &["kind", "c0", "c1"]);
                        DvProfile::Smooth {
                            c0: self.f64_req(&dv, prefix, "c0"),
                            c1: self.f64_req(&dv, prefix, "c1"),
                        }
                    }
                    _ => {
                        self.issue("pde.d_v.kind", "expected \"constant\" or \"smooth\"");
                        DvProfile::Constant(1.0)
                    }
                }
            }
        };
        for msg in d_v.issues() {
            self.issue("pde.d_v", msg);
        }
        let u0_table = self.section(t, "u0").cloned();
        let v0_table = self.section(t, "v0").cloned();
        let u0 = self.preset(
            u0_table.as_ref(),
            "pde.u0",
            InitialPreset::RaisedCosine {
                base: 1.0,
                amplitude: 1.0,
                mode: 1,
            },
        );
        let v0 = self.preset(v0_table.as_ref(), "pde.v0", InitialPreset::Constant(0.0));

        if !(a.is_finite() && b.is_finite() && a < b) {
            self.issue("pde.b", format!("domain needs a < b, got a = {a}, b = {b}"));
        }
        if n < 2 {
            self.issue("pde.n", "must be >= 2");
        }
        for (key, v) in [("gamma", gamma), ("alpha", alpha), ("dt", dt), ("tau", tau), ("picard_tol", picard_tol)] {
            if !(v.is_finite() && v > 0.0) {
                self.issue(join(p, key), format!("must be > 0, got {v}"));
            }
        }
        if picard_max == 0 {
            self.issue("pde.picard_max", "must be >= 1");
        }
        if !(required_error_ratio.is_finite() && required_error_ratio >= 1.0) {
            self.issue("pde.required_error_ratio", "must be >= 1");
        }
        if dt > 0.0 && tau > 0.0 {
            let steps = (tau / dt).round();
            if steps < 1.0 || (steps * dt - tau).abs() > 1e-9 * tau {
                self.issue("pde.tau", format!("tau = {tau} is not a whole number of steps of dt = {dt}"));
            }
        }
        if epsilon_list.is_empty() {
            self.issue("pde.epsilon_list", "must not be empty");
        } else if epsilon_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            self.issue("pde.epsilon_list", "entries must be positive");
        } else if epsilon_list.windows(2).any(|w| !(w[0] > w[1])) {
            self.issue("pde.epsilon_list", "epsilon_list must be strictly decreasing");
        }
        Some(PdeBlock {
            a,
            b,
            n,
            dt,
            tau,
            gamma,
            alpha,
            d_v,
            u0,
            v0,
            epsilon_list,
            picard_tol,
            picard_max,
            seed,
            shared_seed,
            required_error_ratio,
        })
    }

    fn output(&mut self, t: &Table) -> Option<OutputBlock> {
        let p = "output";
        self.known(t, p, &["dir", "snapshot_stride"]);
        let dir = self.str_opt(t, p, "dir").unwrap_or("out").to_string();
        let snapshot_stride = self.int_or(t, p, "snapshot_stride", 10) as usize;
        if snapshot_stride == 0 {
            self.issue("output.snapshot_stride", "must be >= 1");
        }
        Some(OutputBlock { dir, snapshot_stride })
    }

    fn cross_checks(&mut self, field: &FieldSpec, cell: &CellBlock, pde: &PdeBlock) {
        if let Some(ell) = field.cell_length() {
            for &rho in &cell.rho_list {
                if let Err(e) = check_alignment(rho, cells_for_rho(rho, cell.n_cells_per_unit), ell) {
                    self.issue("cell.rho_list", e.to_string());
                }
            }
        }
        if let Ok(grid) = Grid::new(pde.a, pde.b, pde.n) {
            for &eps in &pde.epsilon_list {
                if let Err(e) = check_resolution(&grid, eps, field.cell_length()) {
                    self.issue("pde.n", e.to_string());
                }
            }
        }
    }
}
