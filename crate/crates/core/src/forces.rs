//! Right-hand side of the equations of motion: trap field, pairwise Coulomb
//! repulsion and laser cooling, plus the stochastic recoil kicks that are
//! applied between deterministic steps.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ForceError, ModelError};
use crate::model::{Composition, Species, TrapConfig, TrapMode, Transition, Vec3, CODATA};

/// Pair distances below this are treated as a broken integration step.
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

/// Parameters of the velocity- and detuning-dependent scattering force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Semiclassical {
    /// Multiplier applied to the two-level scattering force.
    pub enhancement: f64,
    /// On-resonance saturation parameter s.
    pub saturation: f64,
    /// Duration of one sawtooth sweep in s.
    pub scan_period: f64,
    /// Detuning at the start of each sweep in rad/s (red, i.e. negative).
    pub detuning_start: f64,
    /// Propagation direction of the beam (unit vector).
    pub beam_direction: Vec3,
}

impl Semiclassical {
    /// Defaults: s = 1, enhancement 8, sweep of 100 rf periods starting at
    /// −10γ, beam along (1,1,1)/√3, i.e. 54.7° to each trap axis.
    pub fn with_defaults(trap: &TrapConfig, transition: &Transition) -> Self {
        Semiclassical {
            enhancement: 8.0,
            saturation: 1.0,
            scan_period: 100.0 * trap.rf_period(),
            detuning_start: -10.0 * transition.linewidth,
            beam_direction: Vec3::new(1.0, 1.0, 1.0).normalize(),
        }
    }

    /// Laser detuning δ(t): linear ramp from `detuning_start` to −γ/2,
    /// repeated every `scan_period`.
    pub fn detuning(&self, linewidth: f64, t: f64) -> f64 {
        let phase = (t / self.scan_period).rem_euclid(1.0);
        self.detuning_start + (-0.5 * linewidth - self.detuning_start) * phase
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoolingModel {
    None,
    /// F = −βv with β in kg/s.
    Viscous { beta: f64 },
    Semiclassical(Semiclassical),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoilNoise {
    Off,
    /// Momentum diffusion calibrated to the stationary temperature `t_min`
    /// (K); `None` means the Doppler limit of the coolant transition.
    On { t_min: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingConfig {
    pub model: CoolingModel,
    pub recoil: RecoilNoise,
}

impl CoolingConfig {
    pub fn none() -> Self {
        CoolingConfig { model: CoolingModel::None, recoil: RecoilNoise::Off }
    }

    pub fn viscous(beta: f64) -> Self {
        CoolingConfig { model: CoolingModel::Viscous { beta }, recoil: RecoilNoise::Off }
    }

    pub fn with_recoil(mut self, recoil: RecoilNoise) -> Self {
        self.recoil = recoil;
        self
    }

    pub fn validate(&self, coolant: &Species) -> Result<(), ModelError> {
        match self.model {
            CoolingModel::None => {}
            CoolingModel::Viscous { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(ModelError::Invalid(format!("beta must be > 0, got {beta:e}")));
                }
                if let Some(tr) = coolant.transition() {
                    if beta > tr.max_friction() {
                        return Err(ModelError::Invalid(format!(
                            "beta = {beta:e} kg/s exceeds the Doppler-cooling maximum {:e} kg/s",
                            tr.max_friction()
                        )));
                    }
                }
            }
            CoolingModel::Semiclassical(p) => {
                let tr = coolant.require_transition()?;
                if !(p.enhancement > 0.0 && p.saturation > 0.0 && p.scan_period > 0.0) {
                    return Err(ModelError::Invalid(
                        "enhancement, saturation and scan period must be > 0".into(),
                    ));
                }
                if p.detuning_start >= -0.5 * tr.linewidth {
                    return Err(ModelError::Invalid(
                        "sweep must start red of -gamma/2".into(),
                    ));
                }
                if (p.beam_direction.norm() - 1.0).abs() > 1e-9 {
                    return Err(ModelError::Invalid("beam direction must be a unit vector".into()));
                }
            }
        }
        if let RecoilNoise::On { t_min } = self.recoil {
            match t_min {
                Some(t) if !(t > 0.0 && t.is_finite()) => {
                    return Err(ModelError::Invalid(format!("t_min must be > 0, got {t}")));
                }
                Some(_) => {}
                None => {
                    coolant.require_transition()?;
                }
            }
            if matches!(self.model, CoolingModel::None) {
                return Err(ModelError::Invalid("recoil noise needs an active cooling model".into()));
            }
        }
        Ok(())
    }

    /// Linear friction coefficient of the cooling force around v = 0 at time t.
    pub fn friction_coefficient(&self, species: &Species, t: f64) -> f64 {
        match self.model {
            CoolingModel::None => 0.0,
            CoolingModel::Viscous { beta } => beta,
            CoolingModel::Semiclassical(p) => {
                let Some(tr) = species.transition() else { return 0.0 };
                let k = tr.wavenumber();
                let x = 2.0 * p.detuning(tr.linewidth, t) / tr.linewidth;
                let denom = 1.0 + p.saturation + x * x;
                let slope =
                    2.0 * p.enhancement * CODATA.reduced_planck * k * k * p.saturation * x / (denom * denom);
                (-slope).max(0.0)
            }
        }
    }

    /// Target temperature of the recoil noise, if enabled.
    pub fn recoil_temperature(&self, species: &Species) -> Option<f64> {
        match self.recoil {
            RecoilNoise::Off => None,
            RecoilNoise::On { t_min: Some(t) } => Some(t),
            RecoilNoise::On { t_min: None } => species.transition().map(Transition::doppler_temperature),
        }
    }
}

/// Trap electric field at `x` and time `t` for a particle with charge-to-mass
/// ratio `charge_to_mass` (only the pseudopotential mode depends on it).
///
/// rf mode: E = (x(G_rf cos Ωt + G_dc/2), y(−G_rf cos Ωt + G_dc/2), −z G_dc).
/// pseudo mode: the rf part is replaced by −∇V_pseudo/Q.
pub fn trap_field(trap: &TrapConfig, charge_to_mass: f64, x: &Vec3, t: f64) -> Vec3 {
    let half_dc = 0.5 * trap.dc_gradient;
    match trap.mode {
        TrapMode::Rf => {
            let rf = trap.rf_gradient * (trap.omega_rf * t).cos();
            Vec3::new(x.x * (rf + half_dc), x.y * (half_dc - rf), -x.z * trap.dc_gradient)
        }
        TrapMode::Pseudo => {
            let k = pseudo_stiffness(trap, charge_to_mass);
            Vec3::new(x.x * (half_dc - k), x.y * (half_dc - k), -x.z * trap.dc_gradient)
        }
    }
}

/// Radial restoring field gradient Q G_rf²/(2mΩ²) of the pseudopotential.
fn pseudo_stiffness(trap: &TrapConfig, charge_to_mass: f64) -> f64 {
    charge_to_mass * trap.rf_gradient * trap.rf_gradient / (2.0 * trap.omega_rf * trap.omega_rf)
}

/// Electrostatic potential of the trap (per unit charge) used for energy
/// bookkeeping. In pseudo mode this is the time-independent effective
/// potential and the total energy is conserved.
pub fn trap_potential(trap: &TrapConfig, charge_to_mass: f64, x: &Vec3, t: f64) -> f64 {
    let rho2 = x.x * x.x + x.y * x.y;
    let dc = trap.dc_gradient * (0.5 * x.z * x.z - 0.25 * rho2);
    match trap.mode {
        TrapMode::Rf => -0.5 * trap.rf_gradient * (trap.omega_rf * t).cos() * (x.x * x.x - x.y * x.y) + dc,
        TrapMode::Pseudo => 0.5 * pseudo_stiffness(trap, charge_to_mass) * rho2 + dc,
    }
}

/// Coulomb field at particle `i` due to all others, summed in index order.
fn coulomb_field_at(i: usize, positions: &[Vec3], charges: &[f64]) -> Result<Vec3, ForceError> {
    let xi = positions[i];
    let mut field = Vec3::zeros();
    for (j, (xj, qj)) in positions.iter().zip(charges).enumerate() {
        if j == i {
            continue;
        }
        let d = xi - xj;
        let r2 = d.norm_squared();
        if r2 < MIN_PAIR_DISTANCE * MIN_PAIR_DISTANCE {
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            return Err(ForceError::CoincidentParticles { i, j, distance: r2.sqrt() });
        }
        let inv_r = 1.0 / r2.sqrt();
        field += d * (qj * inv_r * inv_r * inv_r);
    }
    Ok(field * CODATA.coulomb_constant())
}

/// Exact pairwise Coulomb forces in N.
pub fn coulomb_forces(positions: &[Vec3], charges: &[f64]) -> Result<Vec<Vec3>, ForceError> {
    (0..positions.len())
        .map(|i| coulomb_field_at(i, positions, charges).map(|e| e * charges[i]))
        .collect()
}

/// Total Coulomb energy Σ_{i<j} k Q_i Q_j / r_ij in J.
pub fn coulomb_energy(positions: &[Vec3], charges: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            e += charges[i] * charges[j] / (positions[i] - positions[j]).norm();
        }
    }
    e * CODATA.coulomb_constant()
}

pub fn viscous_force(beta: f64, v: &Vec3) -> Vec3 {
    -beta * v
}

/// Two-level scattering force along the beam, scaled by `enhancement`:
/// F = enh·ħk·(γ/2)·s / (1 + s + (2(δ(t) − k·v_beam)/γ)²).
pub fn semiclassical_force(params: &Semiclassical, transition: &Transition, v: &Vec3, t: f64) -> Vec3 {
    let k = transition.wavenumber();
    let gamma = transition.linewidth;
    let v_beam = v.dot(&params.beam_direction);
    let x = 2.0 * (params.detuning(gamma, t) - k * v_beam) / gamma;
    let s = params.saturation;
    let magnitude = params.enhancement * CODATA.reduced_planck * k * 0.5 * gamma * s / (1.0 + s + x * x);
    params.beam_direction * magnitude
}

/// Gaussian momentum increment (kg·m/s) with per-axis variance
/// 2·β_eff·k_B·T_min·dt, which makes T_min the stationary temperature of a
/// free particle under the friction β_eff.
pub fn recoil_kick<R: Rng + ?Sized>(
    cooling: &CoolingConfig,
    species: &Species,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Vec3 {
    let Some(t_min) = cooling.recoil_temperature(species) else {
        return Vec3::zeros();
    };
    if !species.is_laser_cooled() {
        return Vec3::zeros();
    }
    let beta = cooling.friction_coefficient(species, t);
    let sigma = (2.0 * beta * CODATA.boltzmann * t_min * dt).sqrt();
    Vec3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

/// All forces acting on one ensemble, with per-particle properties resolved
/// once from the species table.
#[derive(Clone)]
pub struct ForceField {
    trap: TrapConfig,
    composition: Composition,
    cooling: CoolingConfig,
    charges: Vec<f64>,
    inv_mass: Vec<f64>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for ForceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForceField")
            .field("trap", &self.trap)
            .field("species", &self.composition.species())
            .field("cooling", &self.cooling)
            .field("particles", &self.composition.len())
            .field("workers", &self.workers())
            .finish()
    }
}

impl ForceField {
    pub fn new(
        trap: TrapConfig,
        species: Vec<Species>,
        cooling: CoolingConfig,
        particle_species: Vec<usize>,
    ) -> Result<Self, ModelError> {
        ForceField::from_composition(trap, Composition::new(species, particle_species)?, cooling)
    }

    pub fn from_composition(
        trap: TrapConfig,
        composition: Composition,
        cooling: CoolingConfig,
    ) -> Result<Self, ModelError> {
        for s in composition.species().iter().filter(|s| s.is_laser_cooled()) {
            cooling.validate(s)?;
        }
        let charges = composition.charges();
        let inv_mass = composition.masses().iter().map(|m| 1.0 / m).collect();
        Ok(ForceField { trap, composition, cooling, charges, inv_mass, pool: None })
    }

    /// Spread the Coulomb sum over `workers` threads. Each particle's force
    /// is still accumulated in index order, so results do not depend on the
    /// worker count.
    pub fn with_workers(mut self, workers: usize) -> Result<Self, ModelError> {
        self.pool = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| ModelError::Invalid(format!("cannot start worker pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(self)
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }
    pub fn trap(&self) -> &TrapConfig {
        &self.trap
    }
    pub fn composition(&self) -> &Composition {
        &self.composition
    }
    pub fn species(&self) -> &[Species] {
        self.composition.species()
    }
    pub fn cooling(&self) -> &CoolingConfig {
        &self.cooling
    }
    pub fn particle_species(&self) -> &[usize] {
        self.composition.particle_species()
    }
    pub fn charges(&self) -> &[f64] {
        &self.charges
    }
    pub fn len(&self) -> usize {
        self.composition.len()
    }
    pub fn is_empty(&self) -> bool {
        self.composition.is_empty()
    }
    pub fn mass(&self, particle: usize) -> f64 {
        1.0 / self.inv_mass[particle]
    }
    pub fn species_of(&self, particle: usize) -> &Species {
        self.composition.species_of(particle)
    }

    /// Deterministic cooling force on a particle (zero for sympathetic ions).
    pub fn cooling_force(&self, species: &Species, v: &Vec3, t: f64) -> Vec3 {
        if !species.is_laser_cooled() {
            return Vec3::zeros();
        }
        match self.cooling.model {
            CoolingModel::None => Vec3::zeros(),
            CoolingModel::Viscous { beta } => viscous_force(beta, v),
            CoolingModel::Semiclassical(p) => match species.transition() {
                Some(tr) => semiclassical_force(&p, tr, v, t),
                None => Vec3::zeros(),
            },
        }
    }

    fn acceleration_of(&self, i: usize, positions: &[Vec3], velocities: &[Vec3], t: f64) -> Result<Vec3, ForceError> {
        let species = self.species_of(i);
        let q = self.charges[i];
        let field = trap_field(&self.trap, q * self.inv_mass[i], &positions[i], t)
            + coulomb_field_at(i, positions, &self.charges)?;
        let force = field * q + self.cooling_force(species, &velocities[i], t);
        Ok(force * self.inv_mass[i])
    }

    /// Accelerations of all particles (m/s²). Recoil kicks are not included.
    pub fn total_acceleration(
        &self,
        t: f64,
        positions: &[Vec3],
        velocities: &[Vec3],
        out: &mut [Vec3],
    ) -> Result<(), ForceError> {
        debug_assert_eq!(positions.len(), self.len());
        match &self.pool {
            Some(pool) => pool.install(|| {
                out.par_iter_mut().enumerate().try_for_each(|(i, a)| {
                    *a = self.acceleration_of(i, positions, velocities, t)?;
                    Ok(())
                })
            }),
            None => {
                for (i, a) in out.iter_mut().enumerate() {
                    *a = self.acceleration_of(i, positions, velocities, t)?;
                }
                Ok(())
            }
        }
    }

    /// Trap plus Coulomb potential energy in J at time t.
    pub fn potential_energy(&self, positions: &[Vec3], t: f64) -> f64 {
        let trap: f64 = positions
            .iter()
            .enumerate()
            .map(|(i, x)| self.charges[i] * trap_potential(&self.trap, self.charges[i] * self.inv_mass[i], x, t))
            .sum();
        trap + coulomb_energy(positions, &self.charges)
    }

    pub fn kinetic_energy(&self, velocities: &[Vec3]) -> f64 {
        velocities
            .iter()
            .enumerate()
            .map(|(i, v)| 0.5 * self.mass(i) * v.norm_squared())
            .sum()
    }
}
