//! Independent reference calculations used to check the production code.
//!
//! Nothing here calls into the force, integrator or diagnostics modules;
//! the only shared item is the table of physical constants. Step counts are
//! fixed so every result is itself a deterministic reference.

use nalgebra::{Matrix2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::CODATA;

/// Fixed number of steps per drive period for the stepping oracles.
pub const ORACLE_STEPS_PER_PERIOD: usize = 10_000;

/// Monodromy traces of the two transverse Mathieu equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetResult {
    /// Trace for x'' + (a − 2q cos 2τ) x = 0.
    pub trace_x: f64,
    /// Trace for the conjugate axis, a → −a, q → −q.
    pub trace_y: f64,
    pub stable: bool,
}

/// One period (τ ∈ [0, π]) of the Mathieu equation, both fundamental
/// solutions, classic RK4.
fn mathieu_monodromy(a: f64, q: f64) -> Matrix2<f64> {
    let n = ORACLE_STEPS_PER_PERIOD;
    let h = std::f64::consts::PI / n as f64;
    let rhs = |tau: f64, y: [f64; 2]| [y[1], -(a - 2.0 * q * (2.0 * tau).cos()) * y[0]];
    let mut columns = [[1.0, 0.0], [0.0, 1.0]];
    for y in columns.iter_mut() {
        for k in 0..n {
            let tau = k as f64 * h;
            let k1 = rhs(tau, *y);
            let k2 = rhs(tau + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(tau + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(tau + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for c in 0..2 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
    }
    Matrix2::new(columns[0][0], columns[1][0], columns[0][1], columns[1][1])
}

/// Floquet stability of the transverse motion for Mathieu parameters (a, q)
/// of the x axis. Stable when both monodromy traces lie inside (−2, 2).
pub fn floquet_stability(a: f64, q: f64) -> FloquetResult {
    let trace_x = mathieu_monodromy(a, q).trace();
    let trace_y = mathieu_monodromy(-a, -q).trace();
    FloquetResult { trace_x, trace_y, stable: trace_x.abs() < 2.0 && trace_y.abs() < 2.0 }
}

/// Bisect for the first stability edge in q on [lo, hi] at fixed a;
/// `lo` must be stable and `hi` unstable.
pub fn floquet_boundary(a: f64, mut lo: f64, mut hi: f64, tolerance: f64) -> Option<f64> {
    if !floquet_stability(a, lo).stable || floquet_stability(a, hi).stable {
        return None;
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if floquet_stability(a, mid).stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Plain-number description of a single ion in a linear rf trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceIon {
    /// Ω in rad/s.
    pub omega_rf: f64,
    /// V/m²
    pub rf_gradient: f64,
    /// V/m²
    pub dc_gradient: f64,
    /// C/kg
    pub charge_to_mass: f64,
}

impl ReferenceIon {
    /// Mathieu (a, q) of the x axis with τ = Ωt/2.
    pub fn mathieu_parameters(&self) -> (f64, f64) {
        let w2 = self.omega_rf * self.omega_rf;
        (-2.0 * self.charge_to_mass * self.dc_gradient / w2, 2.0 * self.charge_to_mass * self.rf_gradient / w2)
    }

    fn acceleration(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let rf = self.rf_gradient * (self.omega_rf * t).cos();
        let half_dc = 0.5 * self.dc_gradient;
        self.charge_to_mass * Vector3::new((rf + half_dc) * x.x, (half_dc - rf) * x.y, -self.dc_gradient * x.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Fixed-step RK4 trajectory of a lone ion, `ORACLE_STEPS_PER_PERIOD` steps
/// per rf period, sampled `samples_per_period` times per period (which must
/// divide the step count). Includes the initial point.
pub fn single_ion_reference(
    ion: &ReferenceIon,
    x0: Vector3<f64>,
    v0: Vector3<f64>,
    periods: usize,
    samples_per_period: usize,
) -> Vec<ReferenceSample> {
    assert!(
        samples_per_period > 0 && ORACLE_STEPS_PER_PERIOD % samples_per_period == 0,
        "samples per period must divide {ORACLE_STEPS_PER_PERIOD}"
    );
    let period = 2.0 * std::f64::consts::PI / ion.omega_rf;
    let h = period / ORACLE_STEPS_PER_PERIOD as f64;
    let stride = ORACLE_STEPS_PER_PERIOD / samples_per_period;
    let (mut x, mut v) = (x0, v0);
    let mut out = Vec::with_capacity(periods * samples_per_period + 1);
    out.push(ReferenceSample { time: 0.0, position: x, velocity: v });
    for p in 0..periods {
        for k in 0..ORACLE_STEPS_PER_PERIOD {
            // Time from the step index keeps the phase free of accumulated round-off.
            let t = p as f64 * period + k as f64 * h;
            let (k1x, k1v) = (v, ion.acceleration(&x, t));
            let (k2x, k2v) = (v + 0.5 * h * k1v, ion.acceleration(&(x + 0.5 * h * k1x), t + 0.5 * h));
            let (k3x, k3v) = (v + 0.5 * h * k2v, ion.acceleration(&(x + 0.5 * h * k2x), t + 0.5 * h));
            let (k4x, k4v) = (v + h * k3v, ion.acceleration(&(x + h * k3x), t + h));
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            if (k + 1) % stride == 0 {
                let time = p as f64 * period + (k + 1) as f64 * h;
                out.push(ReferenceSample { time, position: x, velocity: v });
            }
        }
    }
    out
}

/// Equilibrium spacing of two identical ions on the axis of a harmonic
/// well, by direct minimization and in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoIonEquilibrium {
    /// m
    pub numeric: f64,
    /// m
    pub analytic: f64,
}

/// Spacing of two ions of charge `charge` (C) and mass `mass` (kg) in an
/// axial well of angular frequency `omega_z`.
pub fn two_ion_equilibrium(omega_z: f64, charge: f64, mass: f64) -> TwoIonEquilibrium {
    assert!(omega_z > 0.0, "axial frequency must be positive");
    let k = 1.0 / (4.0 * std::f64::consts::PI * CODATA.vacuum_permittivity);
    // Ions at ±d/2: two harmonic terms plus one Coulomb pair.
    let energy = |d: f64| 0.25 * mass * omega_z * omega_z * d * d + k * charge * charge / d;
    // Golden-section search in log d over 1 nm .. 1 cm.
    let f = |s: f64| energy(s.exp());
    let (mut lo, mut hi) = (1e-9f64.ln(), 1e-2f64.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let numeric = (0.5 * (lo + hi)).exp();
    let analytic = (charge * charge
        / (2.0 * std::f64::consts::PI * CODATA.vacuum_permittivity * mass * omega_z * omega_z))
        .cbrt();
    TwoIonEquilibrium { numeric, analytic }
}

/// Time-averaged kinetic temperature of a free particle under friction
/// `beta` (kg/s) and momentum kicks of variance 2β k_B T_min dt per axis,
/// integrated by Euler–Maruyama at 1/200 of the damping time. The first five
/// damping times are discarded. `t_min = 0` switches the noise off.
pub fn langevin_equilibrium<R: Rng + ?Sized>(beta: f64, t_min: f64, mass: f64, duration: f64, rng: &mut R) -> f64 {
    let tau = mass / beta;
    assert!(duration > 10.0 * tau, "duration must be much longer than the damping time");
    let dt = tau / 200.0;
    let steps = (duration / dt) as usize;
    let skip = (5.0 * tau / dt) as usize;
    let kick = (2.0 * beta * CODATA.boltzmann * t_min * dt).sqrt() / mass;
    // Start from a thermal-scale velocity so the noise-free case has
    // something to damp.
    let mut v = Vector3::repeat((CODATA.boltzmann * t_min.max(1e-3) / mass).sqrt());
    let mut sum = 0.0;
    for step in 0..steps {
        v -= v * (dt / tau);
        if kick > 0.0 {
            v += Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * kick;
        }
        if step >= skip {
            sum += v.norm_squared();
        }
    }
    mass * sum / (steps - skip) as f64 / (3.0 * CODATA.boltzmann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const AMU: f64 = 1.660_539_068_92e-27;
    const E: f64 = 1.602_176_634e-19;

    #[test]
    fn mathieu_stability_edges() {
        assert!(floquet_stability(0.0, 0.5).stable);
        assert!(!floquet_stability(0.0, 1.0).stable);
        let edge = floquet_boundary(0.0, 0.5, 1.0, 1e-5).unwrap();
        assert!((edge - 0.908).abs() < 0.002, "{edge}");
    }

    #[test]
    fn free_oscillator_traces() {
        // q = 0: x'' + a x = 0 over π has trace 2 cos(π√a).
        for a in [0.1, 0.3, 0.7] {
            let r = floquet_stability(a, 0.0);
            assert_relative_eq!(r.trace_x, 2.0 * (PI * f64::sqrt(a)).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn focusing_without_drive_is_stable_on_the_focusing_axis() {
        for a in [0.05, 0.2, 0.5, 0.9] {
            assert!(mathieu_monodromy(a, 0.0).trace().abs() < 2.0);
        }
    }

    fn be_fig1() -> ReferenceIon {
        ReferenceIon {
            omega_rf: 2.0 * PI * 8.5e6,
            rf_gradient: 17.6e6,
            dc_gradient: 30e4,
            charge_to_mass: E / (9.012 * AMU),
        }
    }

    #[test]
    fn ion_at_rest_at_origin_stays_there() {
        let traj = single_ion_reference(&be_fig1(), Vector3::zeros(), Vector3::zeros(), 2, 10);
        assert!(traj.iter().all(|s| s.position == Vector3::zeros() && s.velocity == Vector3::zeros()));
        assert_eq!(traj.len(), 21);
    }

    #[test]
    fn axial_motion_is_harmonic() {
        let ion = be_fig1();
        let omega_z = (ion.charge_to_mass * ion.dc_gradient).sqrt();
        let traj = single_ion_reference(&ion, Vector3::new(0.0, 0.0, 1e-6), Vector3::zeros(), 30, 10);
        let last = traj.last().unwrap();
        assert_relative_eq!(last.position.z, 1e-6 * (omega_z * last.time).cos(), epsilon = 1e-15);
    }

    #[test]
    fn two_be_ions_at_285_khz() {
        let r = two_ion_equilibrium(2.0 * PI * 285e3, E, 9.012 * AMU);
        assert_relative_eq!(r.analytic, 21.3e-6, max_relative = 0.01);
        assert_relative_eq!(r.numeric, r.analytic, max_relative = 1e-8);
        let doubled = two_ion_equilibrium(2.0 * PI * 570e3, E, 9.012 * AMU);
        assert_relative_eq!(r.numeric / doubled.numeric, 2f64.powf(2.0 / 3.0), max_relative = 1e-8);
    }

    #[test]
    fn langevin_temperature_is_independent_of_friction() {
        let mass = 9.012 * AMU;
        let t_min = 0.47e-3;
        let beta = 2.4e-22;
        let tau = mass / beta;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t1 = langevin_equilibrium(beta, t_min, mass, 4000.0 * tau, &mut rng);
        let t4 = langevin_equilibrium(4.0 * beta, t_min, mass, 4000.0 * tau / 4.0, &mut rng);
        assert!((t1 / t_min - 1.0).abs() < 0.15, "{t1}");
        assert!((t4 / t_min - 1.0).abs() < 0.15, "{t4}");
        // Pure damping from a 1 mK start.
        assert!(langevin_equilibrium(beta, 0.0, mass, 100.0 * tau, &mut rng) < 1e-9);
    }
}
