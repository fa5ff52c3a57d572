//! Time integration: an embedded Dormand–Prince 5(4) pair with proportional
//! step control, recoil kicks applied by operator splitting between
//! accepted steps, and rf-period-aligned sampling for the diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::IntegratorError;
use crate::forces::{recoil_kick, ForceField, RecoilNoise};
use crate::model::{TrapConfig, TrapMode, Vec3};

/// Random stream carried by the ensemble.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub rng: SimRng,
}

impl EnsembleState {
    pub fn new(time: f64, positions: Vec<Vec3>, velocities: Vec<Vec3>, seed: u64) -> Self {
        assert_eq!(positions.len(), velocities.len(), "positions and velocities differ in length");
        EnsembleState { time, positions, velocities, rng: SimRng::seed_from_u64(seed) }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_finite(&self) -> Result<(), IntegratorError> {
        let bad = self
            .positions
            .iter()
            .zip(&self.velocities)
            .position(|(x, v)| !(x.iter().all(|c| c.is_finite()) && v.iter().all(|c| c.is_finite())));
        match bad {
            Some(particle) => Err(IntegratorError::NonFinite { t: self.time, particle }),
            None => Ok(()),
        }
    }
}

/// Adaptive step-size policy. Tolerances are mixed absolute/relative per
/// phase-space component; the error norm is the RMS of the scaled errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    pub rel_tol: f64,
    /// m
    pub abs_tol_position: f64,
    /// m/s
    pub abs_tol_velocity: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub max_growth: f64,
    pub min_shrink: f64,
}

/// Order of the embedded error estimate plus one.
const ERROR_EXPONENT: f64 = 1.0 / 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub dt_next: f64,
}

impl StepController {
    /// Defaults: rel tol 1e-9, dt_max one twentieth of an rf period.
    pub fn for_trap(trap: &TrapConfig) -> Self {
        let period = trap.rf_period();
        StepController {
            rel_tol: 1e-9,
            abs_tol_position: 1e-15,
            abs_tol_velocity: 1e-11,
            dt_min: period * 1e-7,
            dt_max: period / 20.0,
            safety: 0.9,
            max_growth: 5.0,
            min_shrink: 0.2,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self, trap: &TrapConfig) -> Result<(), IntegratorError> {
        let tol_ok = self.rel_tol > 0.0 && self.abs_tol_position > 0.0 && self.abs_tol_velocity > 0.0;
        if !tol_ok {
            return Err(IntegratorError::Invalid("tolerances must be > 0".into()));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(IntegratorError::Invalid("need 0 < dt_min <= dt_max".into()));
        }
        if self.dt_max > trap.rf_period() / 10.0 * (1.0 + 1e-12) {
            return Err(IntegratorError::Invalid("dt_max must not exceed a tenth of the rf period".into()));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(IntegratorError::Invalid("safety factor must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// RMS of component errors scaled by atol + rtol·max(|y0|, |y1|).
    pub fn error_norm(&self, before: &Phase, after: &Phase, error: &Phase) -> f64 {
        let mut sum = 0.0;
        let mut accumulate = |y0: &[Vec3], y1: &[Vec3], e: &[Vec3], atol: f64| {
            for ((a, b), e) in y0.iter().zip(y1).zip(e) {
                for c in 0..3 {
                    let scale = atol + self.rel_tol * a[c].abs().max(b[c].abs());
                    let r = e[c] / scale;
                    sum += r * r;
                }
            }
        };
        accumulate(&before.positions, &after.positions, &error.positions, self.abs_tol_position);
        accumulate(&before.velocities, &after.velocities, &error.velocities, self.abs_tol_velocity);
        let n = 6 * before.positions.len();
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }

    /// Proportional control on a normalized error (1 = at tolerance).
    pub fn adapt_dt(&self, error: f64, dt: f64) -> Result<StepDecision, IntegratorError> {
        if !error.is_finite() {
            return self.reject(dt, self.min_shrink);
        }
        if error <= 1.0 {
            let factor = if error == 0.0 {
                self.max_growth
            } else {
                (self.safety * error.powf(-ERROR_EXPONENT)).min(self.max_growth)
            };
            Ok(StepDecision { accept: true, dt_next: (dt * factor).clamp(self.dt_min, self.dt_max) })
        } else {
            let factor = (self.safety * error.powf(-ERROR_EXPONENT)).max(self.min_shrink);
            self.reject(dt, factor)
        }
    }

    fn reject(&self, dt: f64, factor: f64) -> Result<StepDecision, IntegratorError> {
        if dt <= self.dt_min {
            return Err(IntegratorError::StepTooSmall { t: f64::NAN, dt: dt * factor, dt_min: self.dt_min });
        }
        Ok(StepDecision { accept: false, dt_next: (dt * factor).max(self.dt_min) })
    }
}

/// Positions and velocities of all particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

impl Phase {
    pub fn zeros(n: usize) -> Self {
        Phase { positions: vec![Vec3::zeros(); n], velocities: vec![Vec3::zeros(); n] }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Stage buffers for repeated steps on the same ensemble size.
#[derive(Debug, Clone)]
pub struct DormandPrince {
    /// Stage derivatives of positions (velocities) and velocities (accelerations).
    kx: [Vec<Vec3>; 7],
    kv: [Vec<Vec3>; 7],
    stage: Phase,
    /// First-same-as-last: kx[0]/kv[0] already hold f(t, y).
    fsal: bool,
    pub force_evaluations: u64,
}

impl DormandPrince {
    pub fn new(n: usize) -> Self {
        let buf = || std::array::from_fn(|_| vec![Vec3::zeros(); n]);
        DormandPrince { kx: buf(), kv: buf(), stage: Phase::zeros(n), fsal: false, force_evaluations: 0 }
    }

    /// Drop the cached derivative (after the state was modified externally).
    pub fn invalidate(&mut self) {
        self.fsal = false;
    }

    fn derivative(&mut self, field: &ForceField, t: f64, s: usize, use_stage: bool, y: &Phase) -> Result<(), IntegratorError> {
        let src = if use_stage { &self.stage } else { y };
        self.kx[s].copy_from_slice(&src.velocities);
        field.total_acceleration(t, &src.positions, &src.velocities, &mut self.kv[s])?;
        self.force_evaluations += 1;
        Ok(())
    }

    /// One step of size `dt` from (t, y). Writes the 5th-order solution into
    /// `out` and the difference to the embedded 4th-order solution into `err`.
    pub fn step(
        &mut self,
        field: &ForceField,
        t: f64,
        y: &Phase,
        dt: f64,
        out: &mut Phase,
        err: &mut Phase,
    ) -> Result<(), IntegratorError> {
        if !self.fsal {
            self.derivative(field, t, 0, false, y)?;
            // Valid until `y` changes; a rejected step keeps it.
            self.fsal = true;
        }
        for s in 1..7 {
            let a = &A[s];
            for i in 0..y.positions.len() {
                let mut dx = Vec3::zeros();
                let mut dv = Vec3::zeros();
                for (j, &aj) in a.iter().enumerate().take(s) {
                    if aj != 0.0 {
                        dx += self.kx[j][i] * aj;
                        dv += self.kv[j][i] * aj;
                    }
                }
                self.stage.positions[i] = y.positions[i] + dx * dt;
                self.stage.velocities[i] = y.velocities[i] + dv * dt;
            }
            self.derivative(field, t + C[s] * dt, s, true, y)?;
        }
        // Stage 7 was evaluated at the 5th-order solution itself.
        out.positions.copy_from_slice(&self.stage.positions);
        out.velocities.copy_from_slice(&self.stage.velocities);
        for i in 0..y.positions.len() {
            let mut ex = Vec3::zeros();
            let mut ev = Vec3::zeros();
            for (s, &e) in E.iter().enumerate() {
                if e != 0.0 {
                    ex += self.kx[s][i] * e;
                    ev += self.kv[s][i] * e;
                }
            }
            err.positions[i] = ex * dt;
            err.velocities[i] = ev * dt;
        }
        Ok(())
    }

    /// Promote the last stage to the first stage of the next step.
    fn accept(&mut self) {
        self.kx.swap(0, 6);
        self.kv.swap(0, 6);
        self.fsal = true;
    }
}

/// Result of a single embedded step.
#[derive(Debug, Clone, PartialEq)]
pub struct RkStep {
    pub next: Phase,
    pub error: Phase,
}

/// One deterministic Dormand–Prince step of size `dt` (no recoil kicks).
pub fn rk_step(field: &ForceField, t: f64, y: &Phase, dt: f64) -> Result<RkStep, IntegratorError> {
    if !(dt.is_finite() && dt != 0.0) {
        return Err(IntegratorError::Invalid(format!("step size must be finite and non-zero, got {dt}")));
    }
    let n = y.positions.len();
    let mut stepper = DormandPrince::new(n);
    let mut next = Phase::zeros(n);
    let mut error = Phase::zeros(n);
    stepper.step(field, t, y, dt, &mut next, &mut error)?;
    check_phase(&next, t + dt)?;
    Ok(RkStep { next, error })
}

fn check_phase(y: &Phase, t: f64) -> Result<(), IntegratorError> {
    for (i, (x, v)) in y.positions.iter().zip(&y.velocities).enumerate() {
        if !(x.iter().all(|c| c.is_finite()) && v.iter().all(|c| c.is_finite())) {
            return Err(IntegratorError::NonFinite { t, particle: i });
        }
    }
    Ok(())
}

/// Velocities and positions recorded at M uniform phases of one rf period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSamples {
    pub start_time: f64,
    pub period: f64,
    /// `velocities[k][i]`: particle i at phase k/M.
    pub velocities: Vec<Vec<Vec3>>,
    pub positions: Vec<Vec<Vec3>>,
    pub end_time: f64,
    pub end_positions: Vec<Vec3>,
    pub end_velocities: Vec<Vec3>,
}

/// Smallest number of phase samples per period.
pub const MIN_SAMPLES_PER_PERIOD: usize = 16;

impl PeriodSamples {
    /// Single-sample "period" for an instantaneous state (initial record).
    pub fn instantaneous(state: &EnsembleState) -> Self {
        PeriodSamples {
            start_time: state.time,
            period: 0.0,
            velocities: vec![state.velocities.clone()],
            positions: vec![state.positions.clone()],
            end_time: state.time,
            end_positions: state.positions.clone(),
            end_velocities: state.velocities.clone(),
        }
    }

    pub fn samples_per_period(&self) -> usize {
        self.velocities.len()
    }

    pub fn particle_count(&self) -> usize {
        self.end_positions.len()
    }

    /// Period-averaged velocity of particle i.
    pub fn mean_velocity(&self, i: usize) -> Vec3 {
        self.velocities.iter().map(|v| v[i]).sum::<Vec3>() / self.velocities.len() as f64
    }

    /// Period average of |v_i|².
    pub fn mean_speed_squared(&self, i: usize) -> f64 {
        self.velocities.iter().map(|v| v[i].norm_squared()).sum::<f64>() / self.velocities.len() as f64
    }

    /// Period-averaged positions of all particles.
    pub fn mean_positions(&self) -> Vec<Vec3> {
        let m = self.positions.len() as f64;
        (0..self.particle_count())
            .map(|i| self.positions.iter().map(|p| p[i]).sum::<Vec3>() / m)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
}

/// Adaptive driver owning the force field and step-size state for one
/// ensemble.
#[derive(Debug, Clone)]
pub struct Propagator {
    field: ForceField,
    controller: StepController,
    stepper: DormandPrince,
    dt: f64,
    current: Phase,
    next: Phase,
    error: Phase,
    synced_time: Option<f64>,
    pub stats: StepStats,
}

impl Propagator {
    pub fn new(field: ForceField, controller: StepController) -> Self {
        let n = field.len();
        Propagator {
            field,
            controller,
            stepper: DormandPrince::new(n),
            dt: controller.dt_max / 10.0,
            current: Phase::zeros(n),
            next: Phase::zeros(n),
            error: Phase::zeros(n),
            synced_time: None,
            stats: StepStats::default(),
        }
    }

    pub fn controller(&self) -> &StepController {
        &self.controller
    }

    pub fn field(&self) -> &ForceField {
        &self.field
    }

    pub fn force_evaluations(&self) -> u64 {
        self.stepper.force_evaluations
    }

    /// Integrate to `t_target` (forward or backward in time). With
    /// `with_noise`, recoil kicks for the elapsed step are applied after
    /// every accepted step, and steps are capped at 1/20 of an rf period.
    pub fn propagate_to(&mut self, state: &mut EnsembleState, t_target: f64, with_noise: bool) -> Result<(), IntegratorError> {
        let noise = with_noise && !matches!(self.field.cooling().recoil, RecoilNoise::Off);
        let dt_cap = if noise {
            self.controller.dt_max.min(self.field.trap().rf_period() / 20.0)
        } else {
            self.controller.dt_max
        };
        let direction = if t_target >= state.time { 1.0 } else { -1.0 };
        // The cached first stage stays valid if the state is exactly where the
        // previous call left it.
        let resumed = self.synced_time == Some(state.time)
            && self.current.positions == state.positions
            && self.current.velocities == state.velocities;
        if !resumed {
            self.current.positions.copy_from_slice(&state.positions);
            self.current.velocities.copy_from_slice(&state.velocities);
            self.stepper.invalidate();
        }
        self.synced_time = None;
        let mut t = state.time;
        while (t_target - t) * direction > 0.0 {
            let remaining = (t_target - t).abs();
            let proposed = self.dt.min(dt_cap);
            let last = remaining <= proposed * 1.000_001;
            let h = if last { remaining } else { proposed };
            self.stepper
                .step(&self.field, t, &self.current, h * direction, &mut self.next, &mut self.error)?;
            let err = self.controller.error_norm(&self.current, &self.next, &self.error);
            let decision = self.controller.adapt_dt(err, h).map_err(|e| match e {
                IntegratorError::StepTooSmall { dt, dt_min, .. } => IntegratorError::StepTooSmall { t, dt, dt_min },
                other => other,
            })?;
            if !decision.accept {
                self.stats.rejected += 1;
                self.dt = decision.dt_next;
                continue;
            }
            self.stats.accepted += 1;
            check_phase(&self.next, t)?;
            std::mem::swap(&mut self.current, &mut self.next);
            self.stepper.accept();
            t = if last { t_target } else { t + h * direction };
            // A step shortened to hit the target says nothing about the
            // step size the dynamics would allow.
            self.dt = if last && h < proposed { decision.dt_next.max(self.dt) } else { decision.dt_next };
            if noise {
                self.apply_kicks(&mut state.rng, t, h);
            }
        }
        state.time = t_target;
        state.positions.copy_from_slice(&self.current.positions);
        state.velocities.copy_from_slice(&self.current.velocities);
        self.synced_time = Some(t_target);
        Ok(())
    }

    fn apply_kicks(&mut self, rng: &mut SimRng, t: f64, dt: f64) {
        let field = &self.field;
        for i in 0..field.len() {
            let species = field.species_of(i);
            if species.is_laser_cooled() {
                let dp = recoil_kick(field.cooling(), species, t, dt, rng);
                self.current.velocities[i] += dp / species.mass();
            }
        }
        self.stepper.invalidate();
    }

    /// Advance by exactly one rf period (a nominal period of the same length
    /// in pseudopotential mode), recording `samples` phase-uniform samples
    /// by landing steps on the sample times.
    pub fn advance_one_rf_period(&mut self, state: &mut EnsembleState, samples: usize) -> Result<PeriodSamples, IntegratorError> {
        if samples < MIN_SAMPLES_PER_PERIOD {
            return Err(IntegratorError::Invalid(format!(
                "need at least {MIN_SAMPLES_PER_PERIOD} samples per period, got {samples}"
            )));
        }
        let period = self.field.trap().rf_period();
        let start = state.time;
        let end = start + period;
        let mut velocities = Vec::with_capacity(samples);
        let mut positions = Vec::with_capacity(samples);
        for k in 0..samples {
            velocities.push(state.velocities.clone());
            positions.push(state.positions.clone());
            let target = if k + 1 == samples { end } else { start + period * (k + 1) as f64 / samples as f64 };
            self.propagate_to(state, target, true)?;
        }
        state.check_finite()?;
        Ok(PeriodSamples {
            start_time: start,
            period,
            velocities,
            positions,
            end_time: end,
            end_positions: state.positions.clone(),
            end_velocities: state.velocities.clone(),
        })
    }
}

/// Whether the trap drive is explicitly time dependent.
pub fn is_time_dependent(trap: &TrapConfig) -> bool {
    trap.mode == TrapMode::Rf && trap.rf_gradient > 0.0
}
