//! Per-species observables computed from rf-period samples, and spatial
//! classification of time-averaged ion positions.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use crate::error::DiagnosticsError;
use crate::model::{Composition, Vec3, CODATA};

/// Shortest averaging window accepted by the structure and crystallization
/// analyses, in rf periods.
pub const MIN_WINDOW_PERIODS: usize = 50;

/// Classification thresholds, all relative to the mean nearest-neighbour
/// spacing of the species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// RMS wander of a period-averaged position below this fraction of the
    /// particle's nearest-neighbour distance counts as crystallized.
    pub crystal: f64,
    /// Radial distance below this fraction counts as on-axis.
    pub string: f64,
    /// Mean axial gap between z-adjacent members above which the species is
    /// a chain (string, zigzag, helix) rather than a shell.
    pub chain_gap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { crystal: 0.3, string: 0.1, chain_gap: 0.5 }
    }
}

/// Period-averaged (total, secular) kinetic energy per particle of species
/// `s`, or `None` when the species has no members.
pub fn kinetic_energies(samples: &crate::integrator::PeriodSamples, composition: &Composition, s: usize) -> Option<(f64, f64)> {
    let n = composition.count(s);
    if n == 0 {
        return None;
    }
    let m = composition.species()[s].mass();
    let (mut total, mut secular) = (0.0, 0.0);
    for i in composition.members(s) {
        total += m * samples.mean_speed_squared(i);
        secular += m * samples.mean_velocity(i).norm_squared();
    }
    let scale = 0.5 / n as f64;
    Some((total * scale, secular * scale))
}

/// Mean over the species of half the Coulomb energy of each member with every
/// other particle.
pub fn interaction_energy(positions: &[Vec3], charges: &[f64], composition: &Composition, s: usize) -> Option<f64> {
    let n = composition.count(s);
    if n == 0 {
        return None;
    }
    let k = CODATA.coulomb_constant();
    let mut sum = 0.0;
    for i in composition.members(s) {
        for (j, (xj, qj)) in positions.iter().zip(charges).enumerate() {
            if j != i {
                sum += charges[i] * qj / (positions[i] - xj).norm();
            }
        }
    }
    Some(0.5 * k * sum / n as f64)
}

/// Temperature from equipartition of the secular energy over three
/// degrees of freedom.
pub fn secular_temperature(e_secular: f64) -> f64 {
    2.0 * e_secular / (3.0 * CODATA.boltzmann)
}

/// Nearest-neighbour distance of each particle in `subset` to any other
/// particle in `positions`.
pub fn nearest_neighbor_distances(positions: &[Vec3], subset: impl IntoIterator<Item = usize>) -> Vec<f64> {
    subset
        .into_iter()
        .map(|i| {
            positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, x)| (x - positions[i]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Wigner–Seitz radius of the species from the uniform ellipsoid with the
/// same second moments. Each semi-axis is floored at half the mean
/// same-species nearest-neighbour distance so flat or linear arrangements
/// keep a finite volume.
pub fn wigner_seitz_radius(positions: &[Vec3], members: &[usize]) -> Option<f64> {
    let n = members.len();
    if n < 2 {
        return None;
    }
    let own: Vec<Vec3> = members.iter().map(|&i| positions[i]).collect();
    let centroid = own.iter().sum::<Vec3>() / n as f64;
    let floor = 0.5 * mean(&nearest_neighbor_distances(&own, 0..n));
    let mut volume = 1.0;
    for axis in 0..3 {
        let var = own.iter().map(|x| (x[axis] - centroid[axis]).powi(2)).sum::<f64>() / n as f64;
        volume *= (5.0 * var).sqrt().max(floor);
    }
    Some((volume / n as f64).cbrt())
}

/// Coupling parameter Q²/(4πε₀ a_ws k_B T). Infinite at T = 0, `None` for
/// fewer than two members.
pub fn plasma_parameter(positions: &[Vec3], members: &[usize], charge: f64, temperature: f64) -> Option<f64> {
    let a = wigner_seitz_radius(positions, members)?;
    if temperature <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(CODATA.coulomb_constant() * charge * charge / (a * CODATA.boltzmann * temperature))
}

/// One species' row of a diagnostics record. Energies are per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesRecord {
    pub name: String,
    pub e_total: f64,
    pub e_secular: f64,
    pub e_interaction: f64,
    pub e_micromotion: f64,
    pub t_secular: f64,
    /// NaN when the species has fewer than two members.
    pub gamma: f64,
    pub crystallized: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub species: Vec<SpeciesRecord>,
}

impl DiagnosticsRecord {
    /// Record for one period; `crystallized` holds a count per species
    /// (zeros until a full window has been seen).
    pub fn from_samples(
        samples: &crate::integrator::PeriodSamples,
        composition: &Composition,
        crystallized: &[usize],
    ) -> Self {
        let charges = composition.charges();
        let species = composition
            .species()
            .iter()
            .enumerate()
            .filter(|&(s, _)| composition.count(s) > 0)
            .map(|(s, sp)| {
                let (e_total, e_secular) = kinetic_energies(samples, composition, s).unwrap_or_default();
                let e_interaction =
                    interaction_energy(&samples.end_positions, &charges, composition, s).unwrap_or_default();
                let t_secular = secular_temperature(e_secular);
                let members: Vec<usize> = composition.members(s).collect();
                let gamma = plasma_parameter(&samples.end_positions, &members, sp.charge(), t_secular).unwrap_or(f64::NAN);
                SpeciesRecord {
                    name: sp.name().to_string(),
                    e_total,
                    e_secular,
                    e_interaction,
                    // Quadrature round-off can make the difference slightly negative.
                    e_micromotion: (e_total - e_secular).max(0.0),
                    t_secular,
                    gamma,
                    crystallized: crystallized.get(s).copied().unwrap_or(0),
                }
            })
            .collect();
        DiagnosticsRecord { time: samples.end_time, species }
    }

    pub fn species(&self, name: &str) -> Option<&SpeciesRecord> {
        self.species.iter().find(|r| r.name == name)
    }
}

/// Window-averaged positions and the RMS wander of each particle's
/// period-averaged position about that average.
pub fn window_statistics(window: &[Vec<Vec3>]) -> (Vec<Vec3>, Vec<f64>) {
    let w = window.len() as f64;
    let n = window.first().map_or(0, Vec::len);
    let means: Vec<Vec3> = (0..n).map(|i| window.iter().map(|p| p[i]).sum::<Vec3>() / w).collect();
    let rms = (0..n)
        .map(|i| (window.iter().map(|p| (p[i] - means[i]).norm_squared()).sum::<f64>() / w).sqrt())
        .collect();
    (means, rms)
}

fn require_window(window: &[Vec<Vec3>]) -> Result<(), DiagnosticsError> {
    if window.len() < MIN_WINDOW_PERIODS {
        return Err(DiagnosticsError::WindowTooShort { periods: window.len(), required: MIN_WINDOW_PERIODS });
    }
    let n = window[0].len();
    if window.iter().any(|p| p.len() != n) {
        return Err(DiagnosticsError::Invalid("particle count changes within the window".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalFlags {
    /// One flag per member of the species, in particle order.
    pub flags: Vec<bool>,
    pub count: usize,
}

/// Lindemann-like test on a window of period-averaged positions (one entry
/// per rf period, all particles).
pub fn crystallization_detect(
    window: &[Vec<Vec3>],
    composition: &Composition,
    s: usize,
    threshold: f64,
) -> Result<CrystalFlags, DiagnosticsError> {
    require_window(window)?;
    Ok(flags_from_statistics(window, composition, s, threshold))
}

fn flags_from_statistics(window: &[Vec<Vec3>], composition: &Composition, s: usize, threshold: f64) -> CrystalFlags {
    let (means, rms) = window_statistics(window);
    let members: Vec<usize> = composition.members(s).collect();
    let nn = nearest_neighbor_distances(&means, members.iter().copied());
    // A lone particle has no neighbour; it counts as crystallized when it
    // does not wander at all.
    let flags: Vec<bool> = members.iter().zip(&nn).map(|(&i, &d)| rms[i] < threshold * d || (d.is_infinite() && rms[i] == 0.0)).collect();
    let count = flags.iter().filter(|&&f| f).count();
    CrystalFlags { flags, count }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureLabel {
    String,
    HelixSections,
    Shell,
    Diffuse,
    Mixed,
}

impl StructureLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StructureLabel::String => "string",
            StructureLabel::HelixSections => "helix-sections",
            StructureLabel::Shell => "shell",
            StructureLabel::Diffuse => "diffuse",
            StructureLabel::Mixed => "mixed",
        }
    }
}

impl fmt::Display for StructureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesStructure {
    pub name: String,
    pub laser_cooled: bool,
    pub label: StructureLabel,
    /// m
    pub mean_radius: f64,
    pub max_radius: f64,
    pub axial_extent: f64,
    pub nearest_neighbor_spacing: f64,
    pub crystallized: usize,
    pub count: usize,
    /// Whether some pair of z-adjacent members both sit off axis.
    pub adjacent_off_axis: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub species: Vec<SpeciesStructure>,
    /// Window-averaged positions of all particles.
    pub mean_positions: Vec<Vec3>,
}

impl StructureReport {
    pub fn get(&self, name: &str) -> Option<&SpeciesStructure> {
        self.species.iter().find(|s| s.name == name)
    }

    /// One line, sympathetically cooled species first, e.g.
    /// `HD+: string (5/5 crystallized); Be+: shell`.
    pub fn summary(&self) -> String {
        let mut ordered: Vec<&SpeciesStructure> = self.species.iter().filter(|s| !s.laser_cooled).collect();
        ordered.extend(self.species.iter().filter(|s| s.laser_cooled));
        ordered
            .iter()
            .map(|s| {
                if s.laser_cooled {
                    format!("{}: {}", s.name, s.label)
                } else {
                    format!("{}: {} ({}/{} crystallized)", s.name, s.label, s.crystallized, s.count)
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn radius(x: &Vec3) -> f64 {
    x.x.hypot(x.y)
}

/// Azimuthal separation folded into [0, π].
fn azimuth_gap(a: &Vec3, b: &Vec3) -> f64 {
    let d = (a.y.atan2(a.x) - b.y.atan2(b.x)).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Label each species from a window of period-averaged positions.
///
/// In order of precedence: diffuse when most members wander further than
/// the spacing; string when every member is within `string` spacings of the
/// axis. Otherwise a species whose members follow each other along z with a
/// mean gap of at least `chain_gap` spacings is a chain, labelled
/// helix-sections when some z-adjacent off-axis pair sits on different sides
/// (azimuth gap over 90°). A species that is not a chain and lies entirely
/// off axis is a shell. Everything else is mixed.
pub fn classify_structure(
    window: &[Vec<Vec3>],
    composition: &Composition,
    thresholds: &Thresholds,
) -> Result<StructureReport, DiagnosticsError> {
    require_window(window)?;
    if window[0].len() != composition.len() {
        return Err(DiagnosticsError::Invalid("window does not match the composition".into()));
    }
    let (means, rms) = window_statistics(window);
    let species = composition
        .species()
        .iter()
        .enumerate()
        .filter(|&(s, _)| composition.count(s) > 0)
        .map(|(s, sp)| {
            let members: Vec<usize> = composition.members(s).collect();
            let nn = nearest_neighbor_distances(&means, members.iter().copied());
            let finite: Vec<f64> = nn.iter().copied().filter(|d| d.is_finite()).collect();
            let spacing = if finite.is_empty() { f64::INFINITY } else { mean(&finite) };
            let radii: Vec<f64> = members.iter().map(|&i| radius(&means[i])).collect();
            let on_axis = thresholds.string * spacing;
            let max_radius = radii.iter().copied().fold(0.0, f64::max);
            let zs = members.iter().map(|&i| means[i].z);
            let axial_extent = zs.clone().fold(f64::NEG_INFINITY, f64::max) - zs.fold(f64::INFINITY, f64::min);

            let mut by_z = members.clone();
            by_z.sort_by(|&a, &b| means[a].z.total_cmp(&means[b].z));
            let off = |i: usize| radius(&means[i]) >= on_axis;
            let adjacent_off_axis = by_z.windows(2).any(|p| off(p[0]) && off(p[1]));
            let alternating = by_z
                .windows(2)
                .any(|p| off(p[0]) && off(p[1]) && azimuth_gap(&means[p[0]], &means[p[1]]) > PI / 2.0);

            let mean_gap = if members.len() > 1 { axial_extent / (members.len() - 1) as f64 } else { 0.0 };
            let chain = mean_gap >= thresholds.chain_gap * spacing;
            let wandering = members.iter().filter(|&&i| rms[i] > spacing).count();
            let label = if 2 * wandering > members.len() {
                StructureLabel::Diffuse
            } else if max_radius < on_axis {
                StructureLabel::String
            } else if chain && alternating {
                StructureLabel::HelixSections
            } else if !chain && radii.iter().all(|&r| r >= on_axis) {
                StructureLabel::Shell
            } else {
                StructureLabel::Mixed
            };
            let crystallized = flags_from_statistics(window, composition, s, thresholds.crystal).count;
            SpeciesStructure {
                name: sp.name().to_string(),
                laser_cooled: sp.is_laser_cooled(),
                label,
                mean_radius: mean(&radii),
                max_radius,
                axial_extent,
                nearest_neighbor_spacing: spacing,
                crystallized,
                count: members.len(),
                adjacent_off_axis,
            }
        })
        .collect();
    Ok(StructureReport { species, mean_positions: means })
}

/// Sliding window over the most recent period-averaged positions.
#[derive(Debug, Clone)]
pub struct WindowMonitor {
    capacity: usize,
    periods: VecDeque<Vec<Vec3>>,
}

impl WindowMonitor {
    pub fn new(capacity: usize) -> Result<Self, DiagnosticsError> {
        if capacity < MIN_WINDOW_PERIODS {
            return Err(DiagnosticsError::WindowTooShort { periods: capacity, required: MIN_WINDOW_PERIODS });
        }
        Ok(WindowMonitor { capacity, periods: VecDeque::with_capacity(capacity + 1) })
    }

    pub fn push(&mut self, mean_positions: Vec<Vec3>) {
        self.periods.push_back(mean_positions);
        if self.periods.len() > self.capacity {
            self.periods.pop_front();
        }
    }

    pub fn is_full(&self) -> bool {
        self.periods.len() == self.capacity
    }

    pub fn window(&self) -> Vec<Vec<Vec3>> {
        self.periods.iter().cloned().collect()
    }

    /// Crystallized count per species, zeros until the window is full.
    pub fn crystallized_counts(&self, composition: &Composition, threshold: f64) -> Vec<usize> {
        let n = composition.species().len();
        if !self.is_full() {
            return vec![0; n];
        }
        let window = self.window();
        (0..n).map(|s| flags_from_statistics(&window, composition, s, threshold).count).collect()
    }
}
