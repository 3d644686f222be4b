use std::path::PathBuf;

use rtl_core::num_complex::Complex64;
use rtl_core::spectral::SpaceTimeField;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA: &str = include_str!("../schema/experiment-config.v1.json");

/// Largest |k| or |l| accepted in a mode list.
const MAX_MODE: i64 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// V = cos(x + t); resonantly unstable for m = 1.
    ResonantCos,
    /// V = 2 + cos(x + t); resonantly stable for m = 1.
    StableShiftedCos,
    /// V = cos(x − t); resonant average vanishes for m = 1.
    NonresonantCos,
    /// V = 1 + cos(x + t); tangential zero at π.
    DegenerateTangent,
}

impl Preset {
    pub fn modes(self) -> Vec<ModeEntry> {
        let half = |k, l| [ModeEntry { k, l, re: 0.5, im: 0.0 }, ModeEntry { k: -k, l: -l, re: 0.5, im: 0.0 }];
        let constant = |c| ModeEntry { k: 0, l: 0, re: c, im: 0.0 };
        match self {
            Preset::ResonantCos => half(1, 1).to_vec(),
            Preset::StableShiftedCos => [vec![constant(2.0)], half(1, 1).to_vec()].concat(),
            Preset::NonresonantCos => half(1, -1).to_vec(),
            Preset::DegenerateTangent => [vec![constant(1.0)], half(1, 1).to_vec()].concat(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: i64,
    pub l: i64,
    pub re: f64,
    pub im: f64,
}

/// `V` as a named preset or an explicit mode list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Preset(Preset),
    Modes(Vec<ModeEntry>),
}

impl FieldSource {
    pub fn modes(&self) -> Vec<ModeEntry> {
        match self {
            FieldSource::Preset(p) => p.modes(),
            FieldSource::Modes(m) => m.clone(),
        }
    }

    pub fn build(&self) -> SpaceTimeField {
        let modes: Vec<(i64, i64, Complex64)> =
            self.modes().iter().map(|m| (m.k, m.l, Complex64::new(m.re, m.im))).collect();
        SpaceTimeField::from_modes_auto(&modes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub scheme: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { k: 1024, dt: None, t: 200.0, scheme: "cayley".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalFormConfig {
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        Self { n: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub sigma: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        Self { sigma: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatumConfig {
    pub xi0: i64,
}

impl Default for DatumConfig {
    fn default() -> Self {
        Self { xi0: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Sobolev index of the tracked norm.
    pub s: f64,
    /// Additional ε values; when non-empty they replace `epsilon`.
    pub sweep: Vec<f64>,
    /// Stable runs integrate to `stable_horizon_factor · ε^{−(N+1)}`.
    pub stable_horizon_factor: f64,
    pub samples: usize,
    pub sample_interval: f64,
    /// Quadrature points of the Lagrangian norm oracle; 0 disables it.
    pub characteristic_points: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            s: 1.0,
            sweep: Vec::new(),
            stable_horizon_factor: 1.0,
            samples: 2000,
            sample_interval: 0.1,
            characteristic_points: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DichotomyConfig {
    pub stable: FieldSource,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        Self { stable: FieldSource::Preset(Preset::StableShiftedCos) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeConfig {
    /// Perturbation budget ε̄ for degenerate fields; `null` skips regularization.
    pub budget: Option<f64>,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        Self { budget: Some(0.1) }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub regularize: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("rtl-output") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub m: i64,
    pub epsilon: f64,
    #[serde(rename = "V")]
    pub v: FieldSource,
    pub solver: SolverConfig,
    pub normal_form: NormalFormConfig,
    pub escape: EscapeConfig,
    pub datum: DatumConfig,
    pub evolve: EvolveConfig,
    pub dichotomy: DichotomyConfig,
    pub regularize: RegularizeConfig,
    pub seeds: SeedConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: 1,
            epsilon: 0.1,
            v: FieldSource::Preset(Preset::ResonantCos),
            solver: SolverConfig::default(),
            normal_form: NormalFormConfig::default(),
            escape: EscapeConfig::default(),
            datum: DatumConfig::default(),
            evolve: EvolveConfig::default(),
            dichotomy: DichotomyConfig::default(),
            regularize: RegularizeConfig::default(),
            seeds: SeedConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String, errs: &mut Vec<String>) {
    if !ok {
        errs.push(msg());
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn validate_field(name: &str, source: &FieldSource, errs: &mut Vec<String>) {
    let modes = source.modes();
    for (i, m) in modes.iter().enumerate() {
        check(m.k.abs() <= MAX_MODE && m.l.abs() <= MAX_MODE, || format!("{name}.modes[{i}]: |k|, |l| must be ≤ {MAX_MODE}"), errs);
        check(m.re.is_finite() && m.im.is_finite(), || format!("{name}.modes[{i}]: coefficients must be finite"), errs);
        check(
            !modes[..i].iter().any(|p| p.k == m.k && p.l == m.l),
            || format!("{name}.modes[{i}]: duplicate mode ({}, {})", m.k, m.l),
            errs,
        );
        let partner = modes.iter().find(|p| p.k == -m.k && p.l == -m.l);
        let conj = partner.is_some_and(|p| p.re == m.re && p.im == -m.im);
        check(conj, || format!("{name}.modes[{i}]: V must be real; ({}, {}) needs the conjugate of its coefficient at ({}, {})", m.k, m.l, -m.k, -m.l), errs);
    }
}

impl ExperimentConfig {
    /// All schema violations, in field order.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        check(self.schema_version == SCHEMA_VERSION, || format!("schema_version must be {SCHEMA_VERSION}, got {}", self.schema_version), &mut e);
        check(self.m >= 1, || format!("m must be a positive integer, got {}", self.m), &mut e);
        check(self.epsilon.is_finite() && self.epsilon >= 0.0, || format!("epsilon must be finite and ≥ 0, got {}", self.epsilon), &mut e);
        validate_field("V", &self.v, &mut e);
        check(self.solver.k >= 8 && self.solver.k <= 8192, || format!("solver.K must be in [8, 8192], got {}", self.solver.k), &mut e);
        check(self.solver.dt.is_none_or(positive), || "solver.dt must be positive or null".into(), &mut e);
        check(positive(self.solver.t), || format!("solver.T must be positive, got {}", self.solver.t), &mut e);
        check(self.solver.scheme == "cayley", || format!("solver.scheme must be \"cayley\", got {:?}", self.solver.scheme), &mut e);
        check((1..=8).contains(&self.normal_form.n), || format!("normal_form.N must be in [1, 8], got {}", self.normal_form.n), &mut e);
        check(positive(self.escape.sigma) && self.escape.sigma < 0.5, || format!("escape.sigma must be in (0, 0.5), got {}", self.escape.sigma), &mut e);
        check(self.datum.xi0 >= 1, || format!("datum.xi0 must be ≥ 1, got {}", self.datum.xi0), &mut e);
        check(self.evolve.s.is_finite() && self.evolve.s >= 0.0, || format!("evolve.s must be ≥ 0, got {}", self.evolve.s), &mut e);
        for (i, eps) in self.evolve.sweep.iter().enumerate() {
            check(positive(*eps), || format!("evolve.sweep[{i}] must be positive, got {eps}"), &mut e);
        }
        check(positive(self.evolve.stable_horizon_factor), || "evolve.stable_horizon_factor must be positive".into(), &mut e);
        check(self.evolve.samples >= 2, || "evolve.samples must be ≥ 2".into(), &mut e);
        check(positive(self.evolve.sample_interval), || "evolve.sample_interval must be positive".into(), &mut e);
        validate_field("dichotomy.stable", &self.dichotomy.stable, &mut e);
        check(self.regularize.budget.is_none_or(positive), || "regularize.budget must be positive or null".into(), &mut e);
        check(!self.output.dir.as_os_str().is_empty(), || "output.dir must not be empty".into(), &mut e);
        e
    }

    /// ε values for sweeps: the sweep list when given, else `[epsilon]`.
    pub fn epsilons(&self) -> Vec<f64> {
        if self.evolve.sweep.is_empty() {
            vec![self.epsilon]
        } else {
            self.evolve.sweep.clone()
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
