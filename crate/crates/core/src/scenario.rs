//! Scenario files, built-in presets and initial conditions.
//!
//! A scenario is a TOML document with the sections `[trap]`,
//! `[species.<name>]` (one per species, in particle order), `[cooling]`,
//! `[run]`, `[init]` and `[diagnostics]`. Quantities are given in lab units
//! and converted to SI on parsing:
//!
//! | key | unit |
//! |-----|------|
//! | `trap.omega_rf_mhz` | Ω/2π in MHz |
//! | `trap.rf_gradient_v_per_mm2` | V_rf/r₀² in V/mm² |
//! | `trap.dc_gradient_v_per_cm2` | U_dc/d² in V/cm² |
//! | `species.*.mass_amu`, `charge_e` | u, e |
//! | `species.*.wavelength_nm`, `linewidth_mhz` | nm, γ/2π in MHz |
//! | `cooling.beta_kg_per_s` | kg/s |
//! | `cooling.t_min_k`, `init.t_init_k` | K |
//! | `init.region_um` | ellipsoid semi-axes in µm |

use std::path::PathBuf;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Thresholds, MIN_WINDOW_PERIODS};
use crate::error::{ModelError, ScenarioError};
use crate::forces::{CoolingConfig, CoolingModel, ForceField, RecoilNoise, Semiclassical};
use crate::integrator::{EnsembleState, SimRng, StepController, MIN_SAMPLES_PER_PERIOD};
use crate::model::{
    stability_report, units, Composition, Role, Species, StabilityReport, Transition, TrapConfig, TrapMode, Vec3,
    CODATA,
};

/// Closest two particles may be placed at initialization (m).
pub const MIN_INITIAL_SEPARATION: f64 = 2e-6;
/// Highest accepted initial temperature (K).
pub const MAX_INITIAL_TEMPERATURE: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// Number of rf periods to simulate.
    pub duration_periods: u64,
    pub seed: u64,
    pub workers: usize,
    pub rel_tol: f64,
    pub allow_unstable: bool,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSettings {
    /// K
    pub temperature: f64,
    /// Semi-axes of the placement ellipsoid (m).
    pub region: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSettings {
    pub samples_per_period: usize,
    /// Averaging window for structure and crystallization (rf periods).
    pub window_periods: usize,
    /// Snapshot cadence in rf periods (0: only the final window).
    pub snapshot_every: u64,
    pub thresholds: Thresholds,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings {
            samples_per_period: 32,
            window_periods: MIN_WINDOW_PERIODS,
            snapshot_every: 1000,
            thresholds: Thresholds::default(),
        }
    }
}

/// A fully validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub trap: TrapConfig,
    pub species: Vec<Species>,
    /// Particle count per species, same order as `species`.
    pub counts: Vec<usize>,
    pub cooling: CoolingConfig,
    pub run: RunSettings,
    pub init: InitSettings,
    pub diagnostics: DiagnosticsSettings,
}

impl ScenarioConfig {
    /// Particles grouped by species in declaration order.
    pub fn composition(&self) -> Composition {
        let particle_species = self.counts.iter().enumerate().flat_map(|(s, &n)| std::iter::repeat_n(s, n)).collect();
        Composition::new(self.species.clone(), particle_species).expect("validated scenario")
    }

    pub fn coolant(&self) -> &Species {
        self.species.iter().find(|s| s.is_laser_cooled()).expect("validated scenario")
    }

    pub fn stability(&self) -> StabilityReport {
        stability_report(&self.species, &self.trap).expect("validated scenario")
    }

    pub fn force_field(&self) -> Result<ForceField, ModelError> {
        ForceField::from_composition(self.trap, self.composition(), self.cooling)?.with_workers(self.run.workers)
    }

    pub fn controller(&self) -> StepController {
        StepController::for_trap(&self.trap).with_rel_tol(self.run.rel_tol)
    }

    /// Re-check the invariants after programmatic edits.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = |m: String| Err(ScenarioError::Invalid(m));
        self.trap.require_axial_confinement()?;
        if self.species.is_empty() || self.species.len() != self.counts.len() {
            return v("at least one species with a count is required".into());
        }
        let coolants = self.species.iter().filter(|s| s.is_laser_cooled()).count();
        if coolants != 1 {
            return v(format!("exactly one laser-cooled species is required, found {coolants}"));
        }
        if self.counts.iter().sum::<usize>() == 0 {
            return v("the ensemble is empty".into());
        }
        self.cooling.validate(self.coolant())?;
        if self.run.workers == 0 {
            return v("workers must be >= 1".into());
        }
        if !(self.run.rel_tol > 0.0 && self.run.rel_tol <= 1e-3) {
            return v(format!("rel_tol must be in (0, 1e-3], got {}", self.run.rel_tol));
        }
        if self.run.seed > i64::MAX as u64 {
            return v("seed must be below 2^63".into());
        }
        if !(0.0..=MAX_INITIAL_TEMPERATURE).contains(&self.init.temperature) {
            return v(format!("t_init_k must be in [0, {MAX_INITIAL_TEMPERATURE}] K, got {}", self.init.temperature));
        }
        if !self.init.region.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return v("region_um semi-axes must be > 0".into());
        }
        let d = &self.diagnostics;
        if d.samples_per_period < MIN_SAMPLES_PER_PERIOD {
            return v(format!("samples_per_period must be >= {MIN_SAMPLES_PER_PERIOD}"));
        }
        if d.window_periods < MIN_WINDOW_PERIODS {
            return v(format!("window_rf_periods must be >= {MIN_WINDOW_PERIODS}"));
        }
        let t = &d.thresholds;
        if !(t.crystal > 0.0 && t.string > 0.0 && t.chain_gap > 0.0) {
            return v("diagnostics thresholds must be > 0".into());
        }
        Ok(())
    }

    /// Scenario text that parses back to this configuration.
    pub fn render(&self) -> String {
        let raw = RawScenario::from_config(self);
        toml::to_string(&raw).expect("scenario serializes")
    }

    /// Relative closeness of all floating-point fields, exact equality of the
    /// rest. Used for round trips through lab units.
    pub fn approx_eq(&self, other: &ScenarioConfig, rel: f64) -> bool {
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= rel * a.abs().max(b.abs());
        let close3 = |a: &Vec3, b: &Vec3| (0..3).all(|i| close(a[i], b[i]));
        let trap = self.trap.mode == other.trap.mode
            && close(self.trap.omega_rf, other.trap.omega_rf)
            && close(self.trap.rf_gradient, other.trap.rf_gradient)
            && close(self.trap.dc_gradient, other.trap.dc_gradient);
        let species = self.species.len() == other.species.len()
            && self.species.iter().zip(&other.species).all(|(a, b)| {
                a.name() == b.name()
                    && a.role() == b.role()
                    && close(a.mass(), b.mass())
                    && close(a.charge(), b.charge())
                    && match (a.transition(), b.transition()) {
                        (None, None) => true,
                        (Some(x), Some(y)) => close(x.wavelength, y.wavelength) && close(x.linewidth, y.linewidth),
                        _ => false,
                    }
            });
        let cooling = self.cooling.recoil == other.cooling.recoil
            && match (self.cooling.model, other.cooling.model) {
                (CoolingModel::None, CoolingModel::None) => true,
                (CoolingModel::Viscous { beta: a }, CoolingModel::Viscous { beta: b }) => close(a, b),
                (CoolingModel::Semiclassical(a), CoolingModel::Semiclassical(b)) => {
                    close(a.enhancement, b.enhancement)
                        && close(a.saturation, b.saturation)
                        && close(a.scan_period, b.scan_period)
                        && close(a.detuning_start, b.detuning_start)
                        && close3(&a.beam_direction, &b.beam_direction)
                }
                _ => false,
            };
        trap && species
            && cooling
            && self.counts == other.counts
            && self.run == other.run
            && close(self.init.temperature, other.init.temperature)
            && close3(&self.init.region, &other.init.region)
            && self.diagnostics == other.diagnostics
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    Rf,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawRole {
    LaserCooled,
    Sympathetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawModel {
    None,
    Viscous,
    Semiclassical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrap {
    omega_rf_mhz: f64,
    rf_gradient_v_per_mm2: f64,
    dc_gradient_v_per_cm2: f64,
    #[serde(default = "default_mode")]
    mode: RawMode,
}

fn default_mode() -> RawMode {
    RawMode::Rf
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    mass_amu: f64,
    charge_e: f64,
    role: RawRole,
    count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength_nm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    linewidth_mhz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCooling {
    model: RawModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_kg_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    enhancement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saturation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scan_period_rf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detuning_start_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beam_direction: Option<[f64; 3]>,
    #[serde(default)]
    recoil_noise: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_min_k: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    duration_rf_periods: u64,
    seed: u64,
    #[serde(default = "default_workers")]
    workers: usize,
    #[serde(default = "default_rel_tol")]
    rel_tol: f64,
    #[serde(default)]
    allow_unstable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<String>,
}

fn default_workers() -> usize {
    1
}

fn default_rel_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    t_init_k: f64,
    #[serde(default = "default_region")]
    region_um: [f64; 3],
}

fn default_region() -> [f64; 3] {
    [50.0, 50.0, 200.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    #[serde(default = "default_samples")]
    samples_per_period: usize,
    #[serde(default = "default_window")]
    window_rf_periods: usize,
    #[serde(default = "default_snapshot_every")]
    snapshot_every: u64,
    #[serde(default = "default_crystal")]
    crystal_threshold: f64,
    #[serde(default = "default_string")]
    string_threshold: f64,
    #[serde(default = "default_chain_gap")]
    chain_gap_threshold: f64,
}

fn default_samples() -> usize {
    DiagnosticsSettings::default().samples_per_period
}
fn default_window() -> usize {
    DiagnosticsSettings::default().window_periods
}
fn default_snapshot_every() -> u64 {
    DiagnosticsSettings::default().snapshot_every
}
fn default_crystal() -> f64 {
    Thresholds::default().crystal
}
fn default_string() -> f64 {
    Thresholds::default().string
}
fn default_chain_gap() -> f64 {
    Thresholds::default().chain_gap
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    trap: Option<RawTrap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    species: Option<IndexMap<String, RawSpecies>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cooling: Option<RawCooling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<RawRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<RawInit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<RawDiagnostics>,
}

impl RawScenario {
    fn from_config(c: &ScenarioConfig) -> Self {
        let trap = RawTrap {
            omega_rf_mhz: units::rad_per_s_to_mhz(c.trap.omega_rf),
            rf_gradient_v_per_mm2: units::si_to_v_per_mm2(c.trap.rf_gradient),
            dc_gradient_v_per_cm2: units::si_to_v_per_cm2(c.trap.dc_gradient),
            mode: match c.trap.mode {
                TrapMode::Rf => RawMode::Rf,
                TrapMode::Pseudo => RawMode::Pseudo,
            },
        };
        let species = c
            .species
            .iter()
            .zip(&c.counts)
            .map(|(s, &count)| {
                let raw = RawSpecies {
                    mass_amu: units::kg_to_amu(s.mass()),
                    charge_e: units::coulomb_to_e(s.charge()),
                    role: match s.role() {
                        Role::LaserCooled => RawRole::LaserCooled,
                        Role::Sympathetic => RawRole::Sympathetic,
                    },
                    count,
                    wavelength_nm: s.transition().map(|t| t.wavelength * 1e9),
                    linewidth_mhz: s.transition().map(|t| units::rad_per_s_to_mhz(t.linewidth)),
                };
                (s.name().to_string(), raw)
            })
            .collect();
        let period = c.trap.rf_period();
        let linewidth = c.coolant().transition().map(|t| t.linewidth);
        let mut cooling = RawCooling {
            model: RawModel::None,
            beta_kg_per_s: None,
            enhancement: None,
            saturation: None,
            scan_period_rf: None,
            detuning_start_gamma: None,
            beam_direction: None,
            recoil_noise: matches!(c.cooling.recoil, RecoilNoise::On { .. }),
            t_min_k: match c.cooling.recoil {
                RecoilNoise::On { t_min } => t_min,
                RecoilNoise::Off => None,
            },
        };
        match c.cooling.model {
            CoolingModel::None => {}
            CoolingModel::Viscous { beta } => {
                cooling.model = RawModel::Viscous;
                cooling.beta_kg_per_s = Some(beta);
            }
            CoolingModel::Semiclassical(p) => {
                cooling.model = RawModel::Semiclassical;
                cooling.enhancement = Some(p.enhancement);
                cooling.saturation = Some(p.saturation);
                cooling.scan_period_rf = Some(p.scan_period / period);
                cooling.detuning_start_gamma = linewidth.map(|g| p.detuning_start / g);
                cooling.beam_direction = Some([p.beam_direction.x, p.beam_direction.y, p.beam_direction.z]);
            }
        }
        let d = &c.diagnostics;
        RawScenario {
            trap: Some(trap),
            species: Some(species),
            cooling: Some(cooling),
            run: Some(RawRun {
                duration_rf_periods: c.run.duration_periods,
                seed: c.run.seed,
                workers: c.run.workers,
                rel_tol: c.run.rel_tol,
                allow_unstable: c.run.allow_unstable,
                output_dir: c.run.output_dir.as_ref().map(|p| p.display().to_string()),
            }),
            init: Some(RawInit {
                t_init_k: c.init.temperature,
                region_um: [c.init.region.x * 1e6, c.init.region.y * 1e6, c.init.region.z * 1e6],
            }),
            diagnostics: Some(RawDiagnostics {
                samples_per_period: d.samples_per_period,
                window_rf_periods: d.window_periods,
                snapshot_every: d.snapshot_every,
                crystal_threshold: d.thresholds.crystal,
                string_threshold: d.thresholds.string,
                chain_gap_threshold: d.thresholds.chain_gap,
            }),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key` inside the table whose header satisfies `in_table`, or the
/// header line itself when the key is absent (0 when neither is found).
fn key_line(text: &str, in_table: impl Fn(&str) -> bool, key: &str) -> usize {
    let mut inside = false;
    let mut header_line = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let header: String = line.trim_matches(|c| c == '[' || c == ']').chars().filter(|c| !c.is_whitespace()).collect();
            inside = in_table(&header);
            if inside {
                header_line = n + 1;
            }
        } else if inside {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return n + 1;
                }
            }
        }
    }
    header_line
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn section(&self, section: &str, key: &str, message: impl Into<String>) -> ScenarioError {
        let line = key_line(self.text, |h| h == section, key);
        ScenarioError::Key { key: format!("{section}.{key}"), line, message: message.into() }
    }

    fn species(&self, name: &str, key: &str, message: impl Into<String>) -> ScenarioError {
        let quoted = format!("species.\"{name}\"");
        let bare = format!("species.{name}");
        let line = key_line(self.text, |h| h == quoted || h == bare, key);
        ScenarioError::Key { key: format!("species.{name}.{key}"), line, message: message.into() }
    }
}

/// Parse and validate scenario text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(0);
        ScenarioError::Syntax(format!("line {line}: {}", e.message().trim()))
    })?;
    let at = Locator { text };
    let trap_raw = raw.trap.ok_or_else(|| ScenarioError::MissingSection("trap".into()))?;
    let species_raw = raw.species.filter(|s| !s.is_empty()).ok_or_else(|| ScenarioError::MissingSection("species".into()))?;
    let cooling_raw = raw.cooling.ok_or_else(|| ScenarioError::MissingSection("cooling".into()))?;
    let run_raw = raw.run.ok_or_else(|| ScenarioError::MissingSection("run".into()))?;
    let init_raw = raw.init.ok_or_else(|| ScenarioError::MissingSection("init".into()))?;

    let mode = match trap_raw.mode {
        RawMode::Rf => TrapMode::Rf,
        RawMode::Pseudo => TrapMode::Pseudo,
    };
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if !positive(trap_raw.omega_rf_mhz) {
        return Err(at.section("trap", "omega_rf_mhz", "must be > 0"));
    }
    if !(trap_raw.rf_gradient_v_per_mm2 >= 0.0 && trap_raw.rf_gradient_v_per_mm2.is_finite()) {
        return Err(at.section("trap", "rf_gradient_v_per_mm2", "must be >= 0"));
    }
    if !positive(trap_raw.dc_gradient_v_per_cm2) {
        return Err(at.section("trap", "dc_gradient_v_per_cm2", "must be > 0 (axial confinement)"));
    }
    let trap = TrapConfig::from_lab_units(
        trap_raw.omega_rf_mhz,
        trap_raw.rf_gradient_v_per_mm2,
        trap_raw.dc_gradient_v_per_cm2,
        mode,
    )?;

    let mut species = Vec::with_capacity(species_raw.len());
    let mut counts = Vec::with_capacity(species_raw.len());
    for (name, s) in &species_raw {
        if !positive(s.mass_amu) {
            return Err(at.species(name, "mass_amu", format!("must be > 0, got {}", s.mass_amu)));
        }
        if !(s.charge_e != 0.0 && s.charge_e.is_finite()) {
            return Err(at.species(name, "charge_e", "must be non-zero"));
        }
        let role = match s.role {
            RawRole::LaserCooled => Role::LaserCooled,
            RawRole::Sympathetic => Role::Sympathetic,
        };
        let mut sp = Species::from_lab_units(name.clone(), s.mass_amu, s.charge_e, role)?;
        match (s.wavelength_nm, s.linewidth_mhz) {
            (Some(l), Some(g)) => {
                if !positive(l) {
                    return Err(at.species(name, "wavelength_nm", "must be > 0"));
                }
                if !positive(g) {
                    return Err(at.species(name, "linewidth_mhz", "must be > 0"));
                }
                sp = sp.with_transition(Transition::new(l * 1e-9, units::mhz_to_rad_per_s(g))?);
            }
            (None, None) => {}
            (Some(_), None) => return Err(at.species(name, "linewidth_mhz", "required together with wavelength_nm")),
            (None, Some(_)) => return Err(at.species(name, "wavelength_nm", "required together with linewidth_mhz")),
        }
        species.push(sp);
        counts.push(s.count);
    }
    let coolants: Vec<&Species> = species.iter().filter(|s| s.is_laser_cooled()).collect();
    if coolants.len() != 1 {
        return Err(ScenarioError::Invalid(format!(
            "exactly one laser-cooled species is required, found {}",
            coolants.len()
        )));
    }
    let coolant = coolants[0].clone();

    let c = &cooling_raw;
    let model = match c.model {
        RawModel::None => CoolingModel::None,
        RawModel::Viscous => {
            let beta = c.beta_kg_per_s.ok_or_else(|| at.section("cooling", "beta_kg_per_s", "required for model = \"viscous\""))?;
            CoolingModel::Viscous { beta }
        }
        RawModel::Semiclassical => {
            let transition = coolant
                .transition()
                .ok_or_else(|| at.species(coolant.name(), "wavelength_nm", "the semiclassical model needs the cooling transition"))?;
            let mut p = Semiclassical::with_defaults(&trap, transition);
            if let Some(x) = c.enhancement {
                p.enhancement = x;
            }
            if let Some(x) = c.saturation {
                p.saturation = x;
            }
            if let Some(x) = c.scan_period_rf {
                p.scan_period = x * trap.rf_period();
            }
            if let Some(x) = c.detuning_start_gamma {
                p.detuning_start = x * transition.linewidth;
            }
            if let Some(d) = c.beam_direction {
                let d = Vec3::from(d);
                if !(d.norm() > 0.0 && d.norm().is_finite()) {
                    return Err(at.section("cooling", "beam_direction", "must be a non-zero vector"));
                }
                p.beam_direction = d.normalize();
            }
            CoolingModel::Semiclassical(p)
        }
    };
    let recoil = if c.recoil_noise { RecoilNoise::On { t_min: c.t_min_k } } else { RecoilNoise::Off };
    if !c.recoil_noise && c.t_min_k.is_some() {
        return Err(at.section("cooling", "t_min_k", "only meaningful with recoil_noise = true"));
    }
    let cooling = CoolingConfig { model, recoil };
    cooling.validate(&coolant).map_err(|e| at.section("cooling", "model", e.to_string()))?;

    let d = raw.diagnostics.unwrap_or(RawDiagnostics {
        samples_per_period: default_samples(),
        window_rf_periods: default_window(),
        snapshot_every: default_snapshot_every(),
        crystal_threshold: default_crystal(),
        string_threshold: default_string(),
        chain_gap_threshold: default_chain_gap(),
    });
    let config = ScenarioConfig {
        trap,
        species,
        counts,
        cooling,
        run: RunSettings {
            duration_periods: run_raw.duration_rf_periods,
            seed: run_raw.seed,
            workers: run_raw.workers,
            rel_tol: run_raw.rel_tol,
            allow_unstable: run_raw.allow_unstable,
            output_dir: run_raw.output_dir.map(PathBuf::from),
        },
        init: InitSettings {
            temperature: init_raw.t_init_k,
            region: Vec3::from(init_raw.region_um) * 1e-6,
        },
        diagnostics: DiagnosticsSettings {
            samples_per_period: d.samples_per_period,
            window_periods: d.window_rf_periods,
            snapshot_every: d.snapshot_every,
            thresholds: Thresholds {
                crystal: d.crystal_threshold,
                string: d.string_threshold,
                chain_gap: d.chain_gap_threshold,
            },
        },
    };
    // Name the offending key where one is identifiable.
    if config.run.workers == 0 {
        return Err(at.section("run", "workers", "must be >= 1"));
    }
    if !(0.0..=MAX_INITIAL_TEMPERATURE).contains(&config.init.temperature) {
        return Err(at.section("init", "t_init_k", format!("must be in [0, {MAX_INITIAL_TEMPERATURE}]")));
    }
    if config.diagnostics.samples_per_period < MIN_SAMPLES_PER_PERIOD {
        return Err(at.section("diagnostics", "samples_per_period", format!("must be >= {MIN_SAMPLES_PER_PERIOD}")));
    }
    if config.diagnostics.window_periods < MIN_WINDOW_PERIODS {
        return Err(at.section("diagnostics", "window_rf_periods", format!("must be >= {MIN_WINDOW_PERIODS}")));
    }
    config.validate()?;
    Ok(config)
}

const BE: &str = r#"
[species."Be+"]
mass_amu = 9.012
charge_e = 1
role = "laser-cooled"
wavelength_nm = 313.0
linewidth_mhz = 19.6
"#;

const BA: &str = r#"
[species."Ba+"]
mass_amu = 136.91
charge_e = 1
role = "laser-cooled"
wavelength_nm = 493.4
linewidth_mhz = 15.1
"#;

const FIG1_TRAP: &str = r#"
[trap]
omega_rf_mhz = 8.5
rf_gradient_v_per_mm2 = 17.6
dc_gradient_v_per_cm2 = 30.0
mode = "rf"
"#;

const BE_COOLING: &str = r#"
[cooling]
model = "viscous"
beta_kg_per_s = 2.4e-22
recoil_noise = true
"#;

const BA_COOLING: &str = r#"
[cooling]
model = "viscous"
beta_kg_per_s = 4.8e-22
recoil_noise = true
"#;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 10] =
    ["fig1", "fig1-partial", "rhodamine", "fig2b", "fig2c", "h2", "dt", "m2000", "m5000", "m10000"];

/// A species table followed by its particle count.
fn with_count(table: &str, count: usize) -> String {
    format!("{table}count = {count}\n")
}

fn run_section(duration: u64, seed: u64, t_init: f64, region: [f64; 3]) -> String {
    format!(
        "\n[run]\nduration_rf_periods = {duration}\nseed = {seed}\n\n[init]\nt_init_k = {t_init:?}\nregion_um = [{:?}, {:?}, {:?}]\n",
        region[0], region[1], region[2]
    )
}

fn molecule(name: &str, mass_amu: f64, charge_e: u32) -> String {
    format!("\n[species.\"{name}\"]\nmass_amu = {mass_amu:?}\ncharge_e = {charge_e}\nrole = \"sympathetic\"\n")
}

fn heavy_molecule_text(dc: f64, mass_amu: f64, charge_e: u32) -> String {
    let trap = format!(
        "\n[trap]\nomega_rf_mhz = 1.6\nrf_gradient_v_per_mm2 = 23.8\ndc_gradient_v_per_cm2 = {dc:?}\nmode = \"rf\"\n"
    );
    let name = format!("M{}", mass_amu as u64);
    format!(
        "{trap}{}{}{BA_COOLING}{}",
        with_count(BA, 30),
        with_count(&molecule(&name, mass_amu, charge_e), 10),
        run_section(20000, 1, 5.0, [100.0, 100.0, 400.0])
    )
}

/// Scenario text of a built-in preset.
pub fn preset_text(name: &str) -> Option<String> {
    let fig1_like = |n_be: usize, mol: &str, n_mol: usize, trap: &str, seed: u64| {
        format!(
            "{trap}{}{}{BE_COOLING}{}",
            with_count(BE, n_be),
            with_count(mol, n_mol),
            run_section(10000, seed, 5.0, [50.0, 50.0, 200.0])
        )
    };
    let text = match name {
        "fig1" => fig1_like(20, &molecule("HD+", 3.021, 1), 5, FIG1_TRAP, 1),
        // Seed 2 leaves some of the molecules hot after the run.
        "fig1-partial" => fig1_like(40, &molecule("HD+", 3.021, 1), 10, FIG1_TRAP, 2),
        "h2" => fig1_like(
            20,
            &molecule("H2+", 2.016, 1),
            5,
            "\n[trap]\nomega_rf_mhz = 8.5\nrf_gradient_v_per_mm2 = 11.5\ndc_gradient_v_per_cm2 = 20.0\nmode = \"rf\"\n",
            1,
        ),
        "dt" => fig1_like(20, &molecule("DT+", 5.030, 1), 5, FIG1_TRAP, 1),
        "rhodamine" => {
            let trap = "\n[trap]\nomega_rf_mhz = 1.6\nrf_gradient_v_per_mm2 = 21.6\ndc_gradient_v_per_cm2 = 12.0\nmode = \"rf\"\n";
            format!(
                "{trap}{}{}{BA_COOLING}{}",
                with_count(BA, 20),
                with_count(&molecule("R6G+", 493.0, 1), 5),
                run_section(20000, 1, 5.0, [100.0, 100.0, 400.0])
            )
        }
        "fig2b" => heavy_molecule_text(12.0, 20000.0, 20),
        "fig2c" => heavy_molecule_text(3.0, 20000.0, 20),
        "m2000" => heavy_molecule_text(12.0, 2000.0, 2),
        "m5000" => heavy_molecule_text(12.0, 5000.0, 5),
        "m10000" => heavy_molecule_text(12.0, 10000.0, 10),
        _ => return None,
    };
    Some(text)
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let text = preset_text(name)
        .ok_or_else(|| ScenarioError::UnknownPreset { name: name.to_string(), available: PRESET_NAMES.join(", ") })?;
    parse_scenario(&text)
}

/// Uniform positions in the placement ellipsoid with a minimum pairwise
/// separation, and Maxwell–Boltzmann velocities at the initial temperature.
pub fn init_ensemble_with(config: &ScenarioConfig, rng: &mut SimRng) -> Result<EnsembleState, ScenarioError> {
    let composition = config.composition();
    let n = composition.len();
    let region = config.init.region;
    let max_attempts = 10_000 * n.max(1);
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(ScenarioError::Placement { count: n, min_separation: MIN_INITIAL_SEPARATION });
        }
        let u = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if u.norm_squared() > 1.0 {
            continue;
        }
        let x = u.component_mul(&region);
        if positions.iter().all(|p| (p - x).norm() >= MIN_INITIAL_SEPARATION) {
            positions.push(x);
        }
    }
    let kt = CODATA.boltzmann * config.init.temperature;
    let velocities = (0..n)
        .map(|i| {
            let sigma = (kt / composition.species_of(i).mass()).sqrt();
            let mut draw = || -> f64 { rng.sample::<f64, _>(StandardNormal) * sigma };
            Vec3::new(draw(), draw(), draw())
        })
        .collect();
    Ok(EnsembleState { time: 0.0, positions, velocities, rng: rng.clone() })
}

/// Initial ensemble drawn from the scenario's own seed.
pub fn init_ensemble(config: &ScenarioConfig) -> Result<EnsembleState, ScenarioError> {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(config.run.seed);
    init_ensemble_with(config, &mut rng)
}
