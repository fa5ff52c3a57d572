//! Domain types of the trap and its particles, plus the closed-form
//! single-particle quantities derived from them.
//!
//! Everything in here is SI. Laboratory units (amu, e, MHz, V/mm², V/cm²)
//! only appear in the `units` helpers and the `from_lab_units`
//! constructors.

use std::f64::consts::{PI, SQRT_2};

use crate::error::ModelError;

/// 3-vector used for positions, velocities, forces and fields.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Fixed CODATA 2018/2022 values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// ε₀ in F/m.
    pub vacuum_permittivity: f64,
    /// e in C.
    pub elementary_charge: f64,
    /// u in kg.
    pub atomic_mass_unit: f64,
    /// ħ in J·s.
    pub reduced_planck: f64,
    /// k_B in J/K.
    pub boltzmann: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    vacuum_permittivity: 8.854_187_818_8e-12,
    elementary_charge: 1.602_176_634e-19,
    atomic_mass_unit: 1.660_539_068_92e-27,
    reduced_planck: 1.054_571_817e-34,
    boltzmann: 1.380_649e-23,
};

impl PhysicalConstants {
    /// 1/(4πε₀) in N·m²/C².
    pub fn coulomb_constant(&self) -> f64 {
        1.0 / (4.0 * PI * self.vacuum_permittivity)
    }
}

/// Conversions between the human-facing configuration units and SI.
pub mod units {
    use super::CODATA;
    use std::f64::consts::PI;

    pub fn amu_to_kg(m: f64) -> f64 {
        m * CODATA.atomic_mass_unit
    }
    pub fn kg_to_amu(m: f64) -> f64 {
        m / CODATA.atomic_mass_unit
    }
    pub fn e_to_coulomb(q: f64) -> f64 {
        q * CODATA.elementary_charge
    }
    pub fn coulomb_to_e(q: f64) -> f64 {
        q / CODATA.elementary_charge
    }
    /// Ordinary frequency in MHz to angular frequency in rad/s.
    pub fn mhz_to_rad_per_s(f: f64) -> f64 {
        2.0 * PI * f * 1e6
    }
    pub fn rad_per_s_to_mhz(w: f64) -> f64 {
        w / (2.0 * PI * 1e6)
    }
    pub fn v_per_mm2_to_si(g: f64) -> f64 {
        g * 1e6
    }
    pub fn si_to_v_per_mm2(g: f64) -> f64 {
        g * 1e-6
    }
    pub fn v_per_cm2_to_si(g: f64) -> f64 {
        g * 1e4
    }
    pub fn si_to_v_per_cm2(g: f64) -> f64 {
        g * 1e-4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    LaserCooled,
    Sympathetic,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::LaserCooled => "laser-cooled",
            Role::Sympathetic => "sympathetic",
        }
    }
}

/// Optical cooling transition of a laser-cooled species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// λ in m.
    pub wavelength: f64,
    /// γ (natural linewidth, FWHM) in rad/s.
    pub linewidth: f64,
}

impl Transition {
    pub fn new(wavelength: f64, linewidth: f64) -> Result<Self, ModelError> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(ModelError::Invalid(format!("wavelength must be > 0, got {wavelength}")));
        }
        if !(linewidth > 0.0 && linewidth.is_finite()) {
            return Err(ModelError::Invalid(format!("linewidth must be > 0, got {linewidth}")));
        }
        Ok(Transition { wavelength, linewidth })
    }

    /// Wavenumber k = 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Doppler limit ħγ/(2k_B).
    pub fn doppler_temperature(&self) -> f64 {
        CODATA.reduced_planck * self.linewidth / (2.0 * CODATA.boltzmann)
    }

    /// Upper bound π²ħ/λ² on the friction coefficient of Doppler cooling.
    pub fn max_friction(&self) -> f64 {
        PI * PI * CODATA.reduced_planck / (self.wavelength * self.wavelength)
    }
}

/// An immutable particle kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    name: String,
    mass: f64,
    charge: f64,
    role: Role,
    transition: Option<Transition>,
}

impl Species {
    /// Mass and charge in SI.
    pub fn new(name: impl Into<String>, mass: f64, charge: f64, role: Role) -> Result<Self, ModelError> {
        let name = name.into();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(ModelError::Invalid(format!("species {name}: mass must be > 0, got {mass}")));
        }
        if !(charge > 0.0 && charge.is_finite()) {
            return Err(ModelError::Invalid(format!(
                "species {name}: charge must be > 0, got {charge}"
            )));
        }
        Ok(Species { name, mass, charge, role, transition: None })
    }

    /// Mass in amu, charge in units of e.
    pub fn from_lab_units(
        name: impl Into<String>,
        mass_amu: f64,
        charge_e: f64,
        role: Role,
    ) -> Result<Self, ModelError> {
        Species::new(name, units::amu_to_kg(mass_amu), units::e_to_coulomb(charge_e), role)
    }

    pub fn with_transition(mut self, transition: Transition) -> Self {
        self.transition = Some(transition);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn charge(&self) -> f64 {
        self.charge
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn transition(&self) -> Option<&Transition> {
        self.transition.as_ref()
    }
    pub fn is_laser_cooled(&self) -> bool {
        self.role == Role::LaserCooled
    }
    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }

    pub fn require_transition(&self) -> Result<&Transition, ModelError> {
        self.transition
            .as_ref()
            .ok_or_else(|| ModelError::MissingTransition(self.name.clone()))
    }
}

/// The species table of an ensemble and the species index of every particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    species: Vec<Species>,
    particle_species: Vec<usize>,
}

impl Composition {
    pub fn new(species: Vec<Species>, particle_species: Vec<usize>) -> Result<Self, ModelError> {
        if species.is_empty() {
            return Err(ModelError::Invalid("species table is empty".into()));
        }
        if let Some(&bad) = particle_species.iter().find(|&&s| s >= species.len()) {
            return Err(ModelError::Invalid(format!("particle refers to unknown species index {bad}")));
        }
        Ok(Composition { species, particle_species })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }
    pub fn particle_species(&self) -> &[usize] {
        &self.particle_species
    }
    pub fn len(&self) -> usize {
        self.particle_species.len()
    }
    pub fn is_empty(&self) -> bool {
        self.particle_species.is_empty()
    }
    pub fn species_of(&self, particle: usize) -> &Species {
        &self.species[self.particle_species[particle]]
    }
    /// Particle indices belonging to species `s`, in index order.
    pub fn members(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.particle_species.iter().enumerate().filter(move |(_, &k)| k == s).map(|(i, _)| i)
    }
    pub fn count(&self, s: usize) -> usize {
        self.members(s).count()
    }
    pub fn masses(&self) -> Vec<f64> {
        self.particle_species.iter().map(|&s| self.species[s].mass()).collect()
    }
    pub fn charges(&self) -> Vec<f64> {
        self.particle_species.iter().map(|&s| self.species[s].charge()).collect()
    }
}

/// Whether the radial confinement is the real oscillating field or its
/// time-averaged pseudopotential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapMode {
    Rf,
    Pseudo,
}

impl TrapMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrapMode::Rf => "rf",
            TrapMode::Pseudo => "pseudo",
        }
    }
}

/// Drive parameters of a linear rf trap. Only the field gradients enter,
/// the electrode geometry never does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    /// Ω in rad/s.
    pub omega_rf: f64,
    /// V_rf/r₀² in V/m².
    pub rf_gradient: f64,
    /// U_dc/d² in V/m².
    pub dc_gradient: f64,
    pub mode: TrapMode,
}

impl TrapConfig {
    pub fn new(omega_rf: f64, rf_gradient: f64, dc_gradient: f64, mode: TrapMode) -> Result<Self, ModelError> {
        if !(omega_rf > 0.0 && omega_rf.is_finite()) {
            return Err(ModelError::Invalid(format!("rf frequency must be > 0, got {omega_rf}")));
        }
        if !(rf_gradient >= 0.0 && rf_gradient.is_finite()) {
            return Err(ModelError::Invalid(format!("rf gradient must be >= 0, got {rf_gradient}")));
        }
        if !(dc_gradient >= 0.0 && dc_gradient.is_finite()) {
            return Err(ModelError::Invalid(format!("dc gradient must be >= 0, got {dc_gradient}")));
        }
        Ok(TrapConfig { omega_rf, rf_gradient, dc_gradient, mode })
    }

    /// Ω/2π in MHz, V_rf/r₀² in V/mm², U_dc/d² in V/cm².
    pub fn from_lab_units(
        freq_mhz: f64,
        rf_v_per_mm2: f64,
        dc_v_per_cm2: f64,
        mode: TrapMode,
    ) -> Result<Self, ModelError> {
        TrapConfig::new(
            units::mhz_to_rad_per_s(freq_mhz),
            units::v_per_mm2_to_si(rf_v_per_mm2),
            units::v_per_cm2_to_si(dc_v_per_cm2),
            mode,
        )
    }

    /// Simulations need axial confinement.
    pub fn require_axial_confinement(&self) -> Result<(), ModelError> {
        if self.dc_gradient > 0.0 {
            Ok(())
        } else {
            Err(ModelError::Invalid("dc gradient must be > 0 for axial confinement".into()))
        }
    }

    pub fn rf_period(&self) -> f64 {
        2.0 * PI / self.omega_rf
    }

    pub fn with_mode(mut self, mode: TrapMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Mathieu q-parameter 2(Q/m)(V_rf/r₀²)/Ω².
pub fn compute_q(species: &Species, trap: &TrapConfig) -> f64 {
    2.0 * species.charge_to_mass() * trap.rf_gradient / (trap.omega_rf * trap.omega_rf)
}

/// Stability threshold of the Mathieu equation at zero dc offset (rounded).
pub const Q_UNSTABLE: f64 = 0.9;
/// Preferred operating window for q, bounds inclusive. The lower edge is
/// the practical minimum q ≃ 0.05 taken at its rounding limit, which keeps
/// the q = 0.045 heavy-molecule configuration inside.
pub const Q_WINDOW: (f64, f64) = (0.045, 0.4);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularFrequencies {
    /// ω_ρ in rad/s.
    pub radial: f64,
    /// ω_z in rad/s.
    pub axial: f64,
}

/// Lowest-order secular frequencies.
///
/// The axial restoring force is −Q·(U_dc/d²)·z and the dc field defocuses
/// radially with half that gradient, so ω_z² = (Q/m)·U_dc/d² and
/// ω_ρ² = (qΩ/2√2)² − ω_z²/2.
pub fn secular_frequencies(species: &Species, trap: &TrapConfig) -> Result<SecularFrequencies, ModelError> {
    let q = compute_q(species, trap);
    if q >= Q_UNSTABLE {
        return Err(ModelError::Unstable { species: species.name().to_owned(), q });
    }
    let (radial_sq, axial_sq) = secular_frequencies_squared(species, trap);
    if radial_sq <= 0.0 {
        return Err(ModelError::RadiallyUnbound { species: species.name().to_owned(), radial_sq });
    }
    Ok(SecularFrequencies { radial: radial_sq.sqrt(), axial: axial_sq.sqrt() })
}

fn secular_frequencies_squared(species: &Species, trap: &TrapConfig) -> (f64, f64) {
    let q = compute_q(species, trap);
    let axial_sq = species.charge_to_mass() * trap.dc_gradient;
    let pseudo = q * trap.omega_rf / (2.0 * SQRT_2);
    (pseudo * pseudo - 0.5 * axial_sq, axial_sq)
}

/// Time-averaged radial trap potential ρ²Q²(V_rf/r₀²)²/(4mΩ²) in J.
pub fn pseudopotential_energy(species: &Species, trap: &TrapConfig, rho: f64) -> f64 {
    let q = species.charge();
    rho * rho * q * q * trap.rf_gradient * trap.rf_gradient
        / (4.0 * species.mass() * trap.omega_rf * trap.omega_rf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesStability {
    pub name: String,
    pub q: f64,
    /// ω_ρ in rad/s, `None` when ω_ρ² ≤ 0.
    pub radial: Option<f64>,
    pub axial: f64,
    pub unstable: bool,
    pub outside_window: bool,
    pub radially_unbound: bool,
}

impl SpeciesStability {
    pub fn is_trappable(&self) -> bool {
        !self.unstable && !self.radially_unbound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub species: Vec<SpeciesStability>,
}

impl StabilityReport {
    pub fn all_trappable(&self) -> bool {
        self.species.iter().all(SpeciesStability::is_trappable)
    }

    /// Plain-text table, one row per species.
    pub fn to_table(&self) -> String {
        let mut out = String::from("species        q        f_rho[kHz]  f_z[kHz]  status\n");
        for s in &self.species {
            let radial = s
                .radial
                .map(|w| format!("{:10.1}", w / (2.0 * PI * 1e3)))
                .unwrap_or_else(|| format!("{:>10}", "-"));
            let mut status = Vec::new();
            if s.unstable {
                status.push("UNSTABLE");
            }
            if s.radially_unbound {
                status.push("UNBOUND");
            }
            if s.outside_window {
                status.push("outside-window");
            }
            if status.is_empty() {
                status.push("ok");
            }
            out.push_str(&format!(
                "{:<12} {:7.4}  {}  {:8.1}  {}\n",
                s.name,
                s.q,
                radial,
                s.axial / (2.0 * PI * 1e3),
                status.join(",")
            ));
        }
        out
    }
}

pub fn stability_report(species: &[Species], trap: &TrapConfig) -> Result<StabilityReport, ModelError> {
    if species.is_empty() {
        return Err(ModelError::Invalid("stability report needs at least one species".into()));
    }
    let species = species
        .iter()
        .map(|s| {
            let q = compute_q(s, trap);
            let (radial_sq, axial_sq) = secular_frequencies_squared(s, trap);
            let unstable = q >= Q_UNSTABLE;
            SpeciesStability {
                name: s.name().to_owned(),
                q,
                radial: (radial_sq > 0.0).then(|| radial_sq.sqrt()),
                axial: axial_sq.sqrt(),
                unstable,
                outside_window: unstable || q < Q_WINDOW.0 || q > Q_WINDOW.1,
                radially_unbound: radial_sq <= 0.0,
            }
        })
        .collect();
    Ok(StabilityReport { species })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn be() -> Species {
        Species::from_lab_units("Be+", 9.012, 1.0, Role::LaserCooled).unwrap()
    }
    fn hd() -> Species {
        Species::from_lab_units("HD+", 3.021, 1.0, Role::Sympathetic).unwrap()
    }
    fn fig1_trap() -> TrapConfig {
        TrapConfig::from_lab_units(8.5, 17.6, 30.0, TrapMode::Rf).unwrap()
    }
    fn fig2_trap() -> TrapConfig {
        TrapConfig::from_lab_units(1.6, 23.8, 12.0, TrapMode::Rf).unwrap()
    }

    #[test]
    fn q_values_of_reference_traps() {
        assert!((compute_q(&be(), &fig1_trap()) - 0.13).abs() <= 0.01);
        assert!((compute_q(&hd(), &fig1_trap()) - 0.39).abs() <= 0.01);
        let mol = Species::from_lab_units("mol", 20_000.0, 20.0, Role::Sympathetic).unwrap();
        assert!((compute_q(&mol, &fig2_trap()) - 0.045).abs() <= 0.003);
        let ba = Species::from_lab_units("Ba+", 136.91, 1.0, Role::LaserCooled).unwrap();
        assert!((compute_q(&ba, &fig2_trap()) - 0.33).abs() <= 0.01);
    }

    #[test]
    fn zero_rf_gives_zero_q() {
        let trap = TrapConfig::from_lab_units(8.5, 0.0, 30.0, TrapMode::Rf).unwrap();
        assert_eq!(compute_q(&be(), &trap), 0.0);
    }

    #[test]
    fn be_secular_frequencies() {
        let f = secular_frequencies(&be(), &fig1_trap()).unwrap();
        let khz = |w: f64| w / (2.0 * PI * 1e3);
        assert!((khz(f.radial) / 340.0 - 1.0).abs() < 0.02, "{}", khz(f.radial));
        assert!((khz(f.axial) / 285.0 - 1.0).abs() < 0.02, "{}", khz(f.axial));
    }

    #[test]
    fn hd_axial_frequency_scales_with_charge_to_mass() {
        let f = secular_frequencies(&hd(), &fig1_trap()).unwrap();
        let be_axial = secular_frequencies(&be(), &fig1_trap()).unwrap().axial;
        assert_relative_eq!(f.axial, be_axial * (9.012f64 / 3.021).sqrt(), max_relative = 1e-12);
        // 285 kHz · √(9.012/3.021) ≈ 492 kHz
        assert!((f.axial / (2.0 * PI * 1e3) - 492.0).abs() < 0.02 * 492.0);
    }

    #[test]
    fn no_dc_gives_pure_pseudopotential_frequency() {
        let trap = TrapConfig::from_lab_units(8.5, 17.6, 0.0, TrapMode::Rf).unwrap();
        let f = secular_frequencies(&be(), &trap).unwrap();
        assert_eq!(f.axial, 0.0);
        let q = compute_q(&be(), &trap);
        assert_relative_eq!(f.radial, q * trap.omega_rf / (2.0 * SQRT_2), max_relative = 1e-14);
    }

    #[test]
    fn unbound_and_unstable_are_errors() {
        let weak_rf = TrapConfig::from_lab_units(8.5, 2.0, 30.0, TrapMode::Rf).unwrap();
        assert!(matches!(secular_frequencies(&be(), &weak_rf), Err(ModelError::RadiallyUnbound { .. })));
        let strong_rf = TrapConfig::from_lab_units(8.5, 200.0, 30.0, TrapMode::Rf).unwrap();
        assert!(matches!(secular_frequencies(&be(), &strong_rf), Err(ModelError::Unstable { .. })));
    }

    #[test]
    fn pseudopotential_ratio_hd_over_be() {
        let trap = fig1_trap();
        assert_eq!(pseudopotential_energy(&be(), &trap, 0.0), 0.0);
        let r = pseudopotential_energy(&hd(), &trap, 1e-5) / pseudopotential_energy(&be(), &trap, 1e-5);
        assert!((r - 2.98).abs() <= 0.02, "{r}");
        assert_relative_eq!(
            pseudopotential_energy(&be(), &trap, 2e-5),
            4.0 * pseudopotential_energy(&be(), &trap, 1e-5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn fig1_and_fig2_reports() {
        let report = stability_report(&[be(), hd()], &fig1_trap()).unwrap();
        assert!(report.all_trappable());
        assert!(report.species.iter().all(|s| !s.outside_window));

        let ba = Species::from_lab_units("Ba+", 136.91, 1.0, Role::LaserCooled).unwrap();
        let mol = Species::from_lab_units("mol", 20_000.0, 20.0, Role::Sympathetic).unwrap();
        let report = stability_report(&[ba, mol], &fig2_trap()).unwrap();
        assert!(report.all_trappable());
        assert!(!report.species[0].outside_window);
        assert!(!report.species[1].outside_window);
        assert!((report.species[1].q - 0.045).abs() < 0.003);
    }

    #[test]
    fn high_q_flags_unstable() {
        // q = 1.2 for Be+ in the fig1 trap drive.
        let trap = fig1_trap();
        let grad = 1.2 * trap.omega_rf * trap.omega_rf / (2.0 * be().charge_to_mass());
        let trap = TrapConfig::new(trap.omega_rf, grad, trap.dc_gradient, TrapMode::Rf).unwrap();
        let report = stability_report(&[be()], &trap).unwrap();
        let s = &report.species[0];
        assert_relative_eq!(s.q, 1.2, max_relative = 1e-12);
        assert!(s.unstable && s.outside_window && !report.all_trappable());
        assert!(stability_report(&[], &trap).is_err());
    }

    #[test]
    fn invalid_species_rejected() {
        assert!(Species::from_lab_units("x", -1.0, 1.0, Role::Sympathetic).is_err());
        assert!(Species::from_lab_units("x", 1.0, 0.0, Role::Sympathetic).is_err());
        assert!(TrapConfig::from_lab_units(0.0, 1.0, 1.0, TrapMode::Rf).is_err());
        assert!(be().require_transition().is_err());
    }

    proptest! {
        #[test]
        fn q_is_linear_and_scale_free(scale in 0.1f64..10.0, mass in 1.0f64..1e5, charge in 1.0f64..50.0) {
            let trap = fig1_trap();
            let s = Species::from_lab_units("a", mass, charge, Role::Sympathetic).unwrap();
            let s2 = Species::from_lab_units("b", mass * 2.0, charge * 2.0, Role::Sympathetic).unwrap();
            prop_assert!((compute_q(&s, &trap) - compute_q(&s2, &trap)).abs() <= 1e-14 * compute_q(&s, &trap));
            let scaled = TrapConfig::new(trap.omega_rf, trap.rf_gradient * scale, trap.dc_gradient, TrapMode::Rf).unwrap();
            let ratio = compute_q(&s, &scaled) / compute_q(&s, &trap);
            prop_assert!((ratio - scale).abs() <= 1e-12 * scale);
        }

        #[test]
        fn pseudopotential_scales_as_q2_over_m(mass in 1.0f64..1e5, charge in 1.0f64..50.0, rho in 1e-7f64..1e-3) {
            let trap = fig1_trap();
            let s = Species::from_lab_units("a", mass, charge, Role::Sympathetic).unwrap();
            let reference = Species::from_lab_units("r", 1.0, 1.0, Role::Sympathetic).unwrap();
            let ratio = pseudopotential_energy(&s, &trap, rho) / pseudopotential_energy(&reference, &trap, rho);
            prop_assert!((ratio / (charge * charge / mass) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn axial_independent_of_rf_and_radial_monotone_in_dc(rf in 10.0f64..30.0, dc1 in 1.0f64..20.0, ddc in 0.1f64..10.0) {
            let a = TrapConfig::from_lab_units(8.5, rf, dc1, TrapMode::Rf).unwrap();
            let b = TrapConfig::from_lab_units(8.5, rf + 1.0, dc1, TrapMode::Rf).unwrap();
            let c = TrapConfig::from_lab_units(8.5, rf, dc1 + ddc, TrapMode::Rf).unwrap();
            let (ra, za) = secular_frequencies_squared(&be(), &a);
            let (_, zb) = secular_frequencies_squared(&be(), &b);
            let (rc, _) = secular_frequencies_squared(&be(), &c);
            prop_assert_eq!(za, zb);
            prop_assert!(rc < ra);
        }

        #[test]
        fn unit_round_trip(m in 1.0f64..1e5, q in 1.0f64..100.0, f in 0.1f64..50.0, g in 0.1f64..100.0) {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs();
            prop_assert!(close(units::kg_to_amu(units::amu_to_kg(m)), m));
            prop_assert!(close(units::coulomb_to_e(units::e_to_coulomb(q)), q));
            prop_assert!(close(units::rad_per_s_to_mhz(units::mhz_to_rad_per_s(f)), f));
            prop_assert!(close(units::si_to_v_per_mm2(units::v_per_mm2_to_si(g)), g));
            prop_assert!(close(units::si_to_v_per_cm2(units::v_per_cm2_to_si(g)), g));
        }
    }
}
