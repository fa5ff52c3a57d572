//! Period-by-period driver: advances the ensemble one rf period at a time,
//! derives the diagnostics record and hands both to an observer.

use std::time::Instant;

use crate::diagnostics::{classify_structure, DiagnosticsRecord, StructureReport, Thresholds, WindowMonitor};
use crate::error::{DiagnosticsError, IntegratorError, IoError, RunError};
use crate::forces::ForceField;
use crate::integrator::{EnsembleState, PeriodSamples, Propagator, StepController, StepStats};
use crate::model::Composition;
use crate::scenario::{init_ensemble, DiagnosticsSettings, ScenarioConfig};

pub struct Simulation {
    propagator: Propagator,
    state: EnsembleState,
    composition: Composition,
    settings: DiagnosticsSettings,
    monitor: WindowMonitor,
    periods: u64,
}

impl Simulation {
    pub fn new(
        field: ForceField,
        controller: StepController,
        state: EnsembleState,
        settings: DiagnosticsSettings,
    ) -> Result<Self, RunError> {
        if state.len() != field.len() {
            return Err(IntegratorError::Invalid(format!(
                "state has {} particles, the force field {}",
                state.len(),
                field.len()
            ))
            .into());
        }
        controller.validate(field.trap())?;
        let monitor = WindowMonitor::new(settings.window_periods)
            .map_err(|e| IntegratorError::Invalid(e.to_string()))?;
        let composition = field.composition().clone();
        Ok(Simulation { propagator: Propagator::new(field, controller), state, composition, settings, monitor, periods: 0 })
    }

    /// Fresh ensemble from the scenario's initial conditions. Refuses
    /// untrappable species unless the scenario allows them.
    pub fn from_scenario(config: &ScenarioConfig) -> Result<Self, RunError> {
        config.validate()?;
        let report = config.stability();
        if !report.all_trappable() && !config.run.allow_unstable {
            return Err(RunError::Unstable(report.to_table()));
        }
        let field = config.force_field().map_err(crate::error::ScenarioError::from)?;
        let state = init_ensemble(config)?;
        Simulation::new(field, config.controller(), state, config.diagnostics.clone())
    }

    pub fn state(&self) -> &EnsembleState {
        &self.state
    }

    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    pub fn field(&self) -> &ForceField {
        self.propagator.field()
    }

    pub fn periods(&self) -> u64 {
        self.periods
    }

    pub fn step_stats(&self) -> StepStats {
        self.propagator.stats
    }

    pub fn force_evaluations(&self) -> u64 {
        self.propagator.force_evaluations()
    }

    /// Record of the instantaneous state (no period average).
    pub fn initial_record(&self) -> DiagnosticsRecord {
        let counts = vec![0; self.composition.species().len()];
        DiagnosticsRecord::from_samples(&PeriodSamples::instantaneous(&self.state), &self.composition, &counts)
    }

    /// Advance one rf period and return its samples and diagnostics.
    pub fn step_period(&mut self) -> Result<(PeriodSamples, DiagnosticsRecord), IntegratorError> {
        let samples = self.propagator.advance_one_rf_period(&mut self.state, self.settings.samples_per_period)?;
        self.periods += 1;
        self.monitor.push(samples.mean_positions());
        let counts = self.monitor.crystallized_counts(&self.composition, self.settings.thresholds.crystal);
        let record = DiagnosticsRecord::from_samples(&samples, &self.composition, &counts);
        Ok((samples, record))
    }

    /// Period-averaged positions of the most recent window.
    pub fn window(&self) -> Vec<Vec<crate::model::Vec3>> {
        self.monitor.window()
    }

    pub fn structure(&self, thresholds: &Thresholds) -> Result<StructureReport, DiagnosticsError> {
        classify_structure(&self.monitor.window(), &self.composition, thresholds)
    }
}

/// Receiver of per-period output.
pub trait RunObserver {
    /// Called for the initial record (period 0, `samples` instantaneous) and
    /// after every completed period.
    fn on_period(&mut self, period: u64, samples: &PeriodSamples, record: &DiagnosticsRecord) -> Result<(), IoError>;

    /// Called with the last completed state when integration fails.
    fn on_abort(&mut self, _last_good: &EnsembleState, _error: &IntegratorError) -> Result<(), IoError> {
        Ok(())
    }

    /// Flush everything; called on success and on failure.
    fn finish(&mut self) -> Result<(), IoError> {
        Ok(())
    }
}

impl<A: RunObserver, B: RunObserver> RunObserver for (A, B) {
    fn on_period(&mut self, period: u64, samples: &PeriodSamples, record: &DiagnosticsRecord) -> Result<(), IoError> {
        self.0.on_period(period, samples, record)?;
        self.1.on_period(period, samples, record)
    }

    fn on_abort(&mut self, last_good: &EnsembleState, error: &IntegratorError) -> Result<(), IoError> {
        self.0.on_abort(last_good, error)?;
        self.1.on_abort(last_good, error)
    }

    fn finish(&mut self) -> Result<(), IoError> {
        let a = self.0.finish();
        let b = self.1.finish();
        a.and(b)
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default, Clone)]
pub struct RecordCollector {
    pub records: Vec<DiagnosticsRecord>,
}

impl RunObserver for RecordCollector {
    fn on_period(&mut self, _period: u64, _samples: &PeriodSamples, record: &DiagnosticsRecord) -> Result<(), IoError> {
        self.records.push(record.clone());
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: EnsembleState,
    /// Number of diagnostics records emitted (duration + 1).
    pub records: u64,
    /// `None` when the run was shorter than the averaging window.
    pub structure: Option<StructureReport>,
    pub stats: StepStats,
    pub wall_seconds: f64,
}

/// Run a scenario to completion, streaming output to `observer`.
pub fn run(config: &ScenarioConfig, observer: &mut dyn RunObserver) -> Result<RunOutcome, RunError> {
    let mut sim = Simulation::from_scenario(config)?;
    run_simulation(&mut sim, config.run.duration_periods, observer)
}

/// Continue an existing simulation for `duration` periods.
pub fn run_simulation(
    sim: &mut Simulation,
    duration: u64,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let result = drive(sim, duration, observer);
    let flushed = observer.finish();
    result?;
    flushed?;
    let structure = sim.structure(&sim.settings.thresholds).ok();
    Ok(RunOutcome {
        state: sim.state.clone(),
        records: duration + 1,
        structure,
        stats: sim.step_stats(),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn drive(sim: &mut Simulation, duration: u64, observer: &mut dyn RunObserver) -> Result<(), RunError> {
    let first = sim.periods;
    observer.on_period(first, &PeriodSamples::instantaneous(&sim.state), &sim.initial_record())?;
    for _ in 0..duration {
        let last_good = sim.state.clone();
        match sim.step_period() {
            Ok((samples, record)) => observer.on_period(sim.periods, &samples, &record)?,
            Err(e) => {
                observer.on_abort(&last_good, &e)?;
                return Err(e.into());
            }
        }
    }
    Ok(())
}
