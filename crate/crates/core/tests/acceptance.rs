//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits non-zero when any check fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use ioncool::diagnostics::{DiagnosticsRecord, StructureLabel};
use ioncool::forces::{CoolingConfig, CoolingModel, ForceField, RecoilNoise};
use ioncool::integrator::{EnsembleState, Propagator, StepController};
use ioncool::model::{compute_q, secular_frequencies, Composition, TrapMode, Vec3};
use ioncool::oracles::{floquet_boundary, floquet_stability, single_ion_reference, two_ion_equilibrium, ReferenceIon};
use ioncool::output::RunDirectory;
use ioncool::scenario::{preset, ScenarioConfig};
use ioncool::simulation::{run, RecordCollector, Simulation};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn species_index(c: &ScenarioConfig, name: &str) -> usize {
    c.species.iter().position(|s| s.name() == name).unwrap_or_else(|| panic!("no species {name}"))
}

fn preset_trap_parameters() -> Check {
    let fig1 = preset("fig1").map_err(|e| e.to_string())?;
    let fig2 = preset("fig2b").map_err(|e| e.to_string())?;
    let q = |c: &ScenarioConfig, name: &str| compute_q(&c.species[species_index(c, name)], &c.trap);
    let (q_be, q_hd) = (q(&fig1, "Be+"), q(&fig1, "HD+"));
    let (q_ba, q_mol) = (q(&fig2, "Ba+"), q(&fig2, "M20000"));
    let be = secular_frequencies(&fig1.species[species_index(&fig1, "Be+")], &fig1.trap).map_err(|e| e.to_string())?;
    let (f_rho, f_z) = (be.radial / (2e3 * PI), be.axial / (2e3 * PI));
    let ok = within(q_be, 0.13, 0.01)
        && within(q_hd, 0.39, 0.01)
        && within(q_ba, 0.33, 0.01)
        && within(q_mol, 0.045, 0.003)
        && within(f_rho, 340.0, 6.8)
        && within(f_z, 285.0, 5.7);
    ensure(
        ok,
        format!(
            "q Be+={q_be:.4} HD+={q_hd:.4} Ba+={q_ba:.4} M20000={q_mol:.4}; Be+ f_rho={f_rho:.1} kHz f_z={f_z:.1} kHz"
        ),
    )
}

fn lone_ion(config: &ScenarioConfig, name: &str, cooling: CoolingConfig) -> ForceField {
    let s = config.species[species_index(config, name)].clone();
    let comp = Composition::new(vec![s], vec![0]).unwrap();
    ForceField::from_composition(config.trap.clone(), comp, cooling).unwrap()
}

/// Period-averaged kinetic energy of a lone ion follows
/// C + Σ_axes [A cos(2θn) + B sin(2θn)] exactly, θ being the secular phase
/// advance per period. A linear drift term on top must vanish.
fn micromotion_invariance() -> Check {
    let fig1 = preset("fig1").map_err(|e| e.to_string())?;
    let field = lone_ion(&fig1, "Be+", CoolingConfig::none());
    let be = field.species_of(0).clone();
    let trap = fig1.trap.clone();
    let periods = 1000;
    let controller = StepController::for_trap(&trap).with_rel_tol(1e-11);
    let mut prop = Propagator::new(field, controller);
    let x0 = Vec3::new(8e-6, -5e-6, 20e-6);
    let v0 = Vec3::new(0.3, 0.2, -0.1);
    let mut state = EnsembleState::new(0.0, vec![x0], vec![v0], 1);
    let mut energies = Vec::with_capacity(periods);
    for _ in 0..periods {
        let s = prop.advance_one_rf_period(&mut state, 32).map_err(|e| e.to_string())?;
        energies.push(0.5 * be.mass() * s.mean_speed_squared(0));
    }
    let ion = ReferenceIon {
        omega_rf: trap.omega_rf,
        rf_gradient: trap.rf_gradient,
        dc_gradient: trap.dc_gradient,
        charge_to_mass: be.charge_to_mass(),
    };
    let (a, q) = ion.mathieu_parameters();
    let f = floquet_stability(a, q);
    let theta = [
        (0.5 * f.trace_x).acos(),
        (0.5 * f.trace_y).acos(),
        (be.charge_to_mass() * trap.dc_gradient).sqrt() * trap.rf_period(),
    ];
    let n = energies.len();
    let mut design = DMatrix::zeros(n, 8);
    for (row, _) in energies.iter().enumerate() {
        let k = (row + 1) as f64;
        design[(row, 0)] = 1.0;
        design[(row, 1)] = k / periods as f64;
        for (j, th) in theta.iter().enumerate() {
            design[(row, 2 + 2 * j)] = (2.0 * th * k).cos();
            design[(row, 3 + 2 * j)] = (2.0 * th * k).sin();
        }
    }
    let y = DVector::from_vec(energies.clone());
    let fit = design.clone().svd(true, true).solve(&y, 1e-14).map_err(|e| e.to_string())?;
    let residual = (&design * &fit - &y).abs().max();
    let mean = fit[0];
    let drift = fit[1].abs() / mean;
    let spread = energies.iter().cloned().fold(f64::MIN, f64::max) / energies.iter().cloned().fold(f64::MAX, f64::min);
    ensure(
        drift < 1e-6 && residual / mean < 1e-6,
        format!("drift over {periods} periods {drift:.2e} (max/min cycle energy {spread:.2}, fit residual {:.1e})", residual / mean),
    )
}

fn pseudo_conservation() -> Check {
    let mut c = preset("fig1").map_err(|e| e.to_string())?;
    let be = species_index(&c, "Be+");
    c.species = vec![c.species[be].clone()];
    c.counts = vec![5];
    c.cooling = CoolingConfig::none();
    c.trap.mode = TrapMode::Pseudo;
    c.init.temperature = 0.05;
    let mut sim = Simulation::from_scenario(&c).map_err(|e| e.to_string())?;
    let energy = |sim: &Simulation| {
        let s = sim.state();
        sim.field().kinetic_energy(&s.velocities) + sim.field().potential_energy(&s.positions, s.time)
    };
    let e0 = energy(&sim);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        sim.step_period().map_err(|e| e.to_string())?;
        worst = worst.max(((energy(&sim) - e0) / e0).abs());
    }
    let end = ((energy(&sim) - e0) / e0).abs();
    ensure(worst < 1e-6, format!("relative drift {end:.2e} after 10^4 periods (worst {worst:.2e})"))
}

fn cross_oracle() -> Check {
    let fig1 = preset("fig1").map_err(|e| e.to_string())?;
    let field = lone_ion(&fig1, "HD+", CoolingConfig::none());
    let ion = ReferenceIon {
        omega_rf: fig1.trap.omega_rf,
        rf_gradient: fig1.trap.rf_gradient,
        dc_gradient: fig1.trap.dc_gradient,
        charge_to_mass: field.species_of(0).charge_to_mass(),
    };
    let x0 = Vector3::new(6e-6, -4e-6, 15e-6);
    let v0 = Vector3::new(0.5, 0.3, -0.2);
    let reference = single_ion_reference(&ion, x0, v0, 100, 20);
    let controller = StepController::for_trap(&fig1.trap).with_rel_tol(1e-13);
    let mut prop = Propagator::new(field, controller);
    let mut state = EnsembleState::new(0.0, vec![x0], vec![v0], 1);
    let scale_x = reference.iter().map(|r| r.position.norm()).fold(0.0, f64::max);
    let scale_v = reference.iter().map(|r| r.velocity.norm()).fold(0.0, f64::max);
    let mut dev: f64 = 0.0;
    for r in &reference[1..] {
        prop.propagate_to(&mut state, r.time, false).map_err(|e| e.to_string())?;
        dev = dev
            .max((state.positions[0] - r.position).norm() / scale_x)
            .max((state.velocities[0] - r.velocity).norm() / scale_v);
    }
    let boundary = floquet_boundary(0.0, 0.5, 1.0, 1e-6).ok_or("no stability edge in [0.5, 1]")?;
    ensure(
        dev < 1e-8 && within(boundary, 0.908, 0.002),
        format!("max trajectory deviation {dev:.2e} over 100 periods; q boundary {boundary:.4}"),
    )
}

fn doppler_limit() -> Check {
    let fig1 = preset("fig1").map_err(|e| e.to_string())?;
    let cooling = CoolingConfig::viscous(8e-22).with_recoil(RecoilNoise::On { t_min: None });
    let field = lone_ion(&fig1, "Be+", cooling);
    let t_doppler = field.species_of(0).transition().ok_or("Be+ has no transition")?.doppler_temperature();
    let state = EnsembleState::new(0.0, vec![Vec3::new(2e-6, 2e-6, 5e-6)], vec![Vec3::zeros()], 11);
    let mut sim =
        Simulation::new(field, StepController::for_trap(&fig1.trap), state, fig1.diagnostics.clone()).map_err(|e| e.to_string())?;
    let (burn_in, measured) = (2_000, 30_000);
    let mut sum = 0.0;
    for p in 0..burn_in + measured {
        let (_, record) = sim.step_period().map_err(|e| e.to_string())?;
        if p >= burn_in {
            sum += record.species[0].t_secular;
        }
    }
    let t = sum / measured as f64;
    ensure(
        within(t / t_doppler, 1.0, 0.15) && within(t_doppler, 0.47e-3, 0.01e-3),
        format!("T_sec = {:.3} mK vs Doppler limit {:.3} mK (ratio {:.3})", t * 1e3, t_doppler * 1e3, t / t_doppler),
    )
}

fn two_ion_spacing() -> Check {
    let mut c = preset("fig1").map_err(|e| e.to_string())?;
    let be = species_index(&c, "Be+");
    c.species = vec![c.species[be].clone()];
    c.counts = vec![2];
    c.cooling = CoolingConfig::viscous(8e-22).with_recoil(RecoilNoise::On { t_min: None });
    let mut sim = Simulation::from_scenario(&c).map_err(|e| e.to_string())?;
    for _ in 0..5_000 {
        sim.step_period().map_err(|e| e.to_string())?;
    }
    let window = sim.window();
    let d = window.iter().map(|p| (p[0] - p[1]).norm()).sum::<f64>() / window.len() as f64;
    let ion = &c.species[0];
    let omega_z = secular_frequencies(ion, &c.trap).map_err(|e| e.to_string())?.axial;
    let oracle = two_ion_equilibrium(omega_z, ion.charge(), ion.mass());
    ensure(
        within(d / 21.3e-6, 1.0, 0.02) && within(d / oracle.numeric, 1.0, 0.02),
        format!(
            "spacing {:.2} µm at f_z = {:.1} kHz (equilibrium {:.2} µm)",
            d * 1e6,
            omega_z / (2e3 * PI),
            oracle.numeric * 1e6
        ),
    )
}

struct CooledRun {
    config: ScenarioConfig,
    records: Vec<DiagnosticsRecord>,
    report: Option<ioncool::diagnostics::StructureReport>,
    seconds: f64,
}

fn cooled_run(name: &str, beta: f64, mode: TrapMode, duration: u64, t_init: Option<f64>) -> Result<CooledRun, String> {
    let mut c = preset(name).map_err(|e| e.to_string())?;
    c.cooling.model = CoolingModel::Viscous { beta };
    c.trap.mode = mode;
    c.run.duration_periods = duration;
    if let Some(t) = t_init {
        c.init.temperature = t;
    }
    let mut out = RecordCollector::default();
    let outcome = run(&c, &mut out).map_err(|e| e.to_string())?;
    Ok(CooledRun { config: c, records: out.records, report: outcome.structure, seconds: outcome.wall_seconds })
}

/// Mean of `field` over the last `n` records for one species.
fn tail_mean(records: &[DiagnosticsRecord], name: &str, n: usize, field: impl Fn(&ioncool::diagnostics::SpeciesRecord) -> f64) -> f64 {
    let tail = &records[records.len() - n..];
    tail.iter().map(|r| field(r.species(name).unwrap())).sum::<f64>() / n as f64
}

fn fig1_structure(r: &CooledRun) -> Check {
    let report = r.report.as_ref().ok_or("no structure report")?;
    let hd = report.get("HD+").ok_or("no HD+")?;
    let be = report.get("Be+").ok_or("no Be+")?;
    let crystallized = hd.crystallized + be.crystallized;
    let window = r.config.diagnostics.window_periods;
    let t_be = tail_mean(&r.records, "Be+", window, |s| s.t_secular);
    let e_sec = tail_mean(&r.records, "Be+", window, |s| s.e_secular);
    let e_mic = tail_mean(&r.records, "Be+", window, |s| s.e_micromotion);
    let limit = r.config.coolant().transition().unwrap().doppler_temperature();
    let ok = matches!(hd.label, StructureLabel::String)
        && hd.max_radius < 3e-6
        && matches!(be.label, StructureLabel::Shell)
        && crystallized >= 24
        && t_be <= 2.0 * limit
        && e_mic > e_sec;
    ensure(
        ok,
        format!(
            "{} | {crystallized}/25 crystallized | Be+ T_sec {:.3} mK (limit x2 {:.3} mK) | Be+ E_mic/E_sec {:.0} | {:.0} s",
            report.summary(),
            t_be * 1e3,
            2e3 * limit,
            e_mic / e_sec,
            r.seconds
        ),
    )
}

/// First period at which the 100-period moving average of E_sec falls to
/// twice its value averaged over the final tenth of the run.
fn time_to_twice_floor(records: &[DiagnosticsRecord], name: &str) -> Option<usize> {
    let e: Vec<f64> = records[1..].iter().map(|r| r.species(name).unwrap().e_secular).collect();
    let floor = e[e.len() - e.len() / 10..].iter().sum::<f64>() / (e.len() / 10) as f64;
    let w = 100;
    let mut sum: f64 = e[..w].iter().sum();
    for end in w..=e.len() {
        if sum / w as f64 <= 2.0 * floor {
            return Some(end);
        }
        if end < e.len() {
            sum += e[end] - e[end - w];
        }
    }
    None
}

fn cooling_order(rf: &CooledRun, pseudo: &CooledRun) -> Check {
    let hd = time_to_twice_floor(&rf.records, "HD+").ok_or("HD+ never reaches 2x floor")?;
    let be = time_to_twice_floor(&rf.records, "Be+").ok_or("Be+ never reaches 2x floor")?;
    let be_pseudo = time_to_twice_floor(&pseudo.records, "Be+").ok_or("Be+ (pseudo) never reaches 2x floor")?;
    ensure(
        hd > be && be_pseudo <= be,
        format!("periods to 2x floor: HD+ {hd}, Be+ {be}, Be+ pseudo {be_pseudo}"),
    )
}

fn fig2_structure(b: &CooledRun, c: &CooledRun) -> Check {
    let mol = "M20000";
    let rb = b.report.as_ref().ok_or("fig2b: no structure report")?;
    let rc = c.report.as_ref().ok_or("fig2c: no structure report")?;
    let sb = rb.get(mol).ok_or("no molecules")?;
    let sc = rc.get(mol).ok_or("no molecules")?;
    let window = b.config.diagnostics.window_periods;
    let mut detail = format!("fig2b: {} | fig2c: {} (off-axis neighbours {})", rb.summary(), rc.summary(), sc.adjacent_off_axis);
    let mut ok = matches!(sb.label, StructureLabel::Shell)
        && matches!(sc.label, StructureLabel::String | StructureLabel::HelixSections)
        && sc.adjacent_off_axis;
    for (tag, r) in [("b", b), ("c", c)] {
        let initial = r.records[0].species(mol).unwrap().e_secular;
        let e_sec = tail_mean(&r.records, mol, window, |s| s.e_secular);
        let e_mic = tail_mean(&r.records, mol, window, |s| s.e_micromotion);
        ok &= initial / e_sec >= 1e3 && e_mic > e_sec;
        detail.push_str(&format!(
            " | {tag}: E_sec fell x{:.0}, E_mic/E_sec {:.1}, {:.0} s",
            initial / e_sec,
            e_mic / e_sec,
            r.seconds
        ));
    }
    ensure(ok, detail)
}

fn determinism() -> Check {
    let mut c = preset("fig1").map_err(|e| e.to_string())?;
    c.run.duration_periods = 300;
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut out = RunDirectory::create(dir.path(), &c).map_err(|e| e.to_string())?;
        run(&c, &mut out).map_err(|e| e.to_string())?;
        files.push(std::fs::read(dir.path().join("timeseries.csv")).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], format!("{} bytes, identical: {}", files[0].len(), files[0] == files[1]))
}

fn report(id: usize, title: &str, check: impl FnOnce() -> Check) -> bool {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = started.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} {id:>2} {title}: {detail} [{secs:.1} s]");
    outcome.is_ok()
}

fn main() {
    let started = Instant::now();
    let mut passed = Vec::new();
    passed.push(report(1, "preset trap parameters", preset_trap_parameters));
    passed.push(report(2, "single-ion cycle-averaged energy", micromotion_invariance));
    passed.push(report(3, "pseudo-mode energy conservation", pseudo_conservation));
    passed.push(report(4, "integrator vs reference oracles", cross_oracle));
    passed.push(report(5, "Doppler limit", doppler_limit));
    passed.push(report(6, "two-ion spacing", two_ion_spacing));

    let fig1_rf = cooled_run("fig1", 8e-22, TrapMode::Rf, 20_000, None);
    let fig1 = || fig1_rf.as_ref().map_err(Clone::clone);
    passed.push(report(7, "fig1 structure", || fig1_structure(fig1()?)));
    passed.push(report(8, "fig2 structure dichotomy", || {
        let b = cooled_run("fig2b", 4.8e-22, TrapMode::Rf, FIG2_PERIODS, None)?;
        let c = cooled_run("fig2c", 4.8e-22, TrapMode::Rf, FIG2_PERIODS, None)?;
        fig2_structure(&b, &c)
    }));
    passed.push(report(9, "cooling order", || {
        let pseudo = cooled_run("fig1", 8e-22, TrapMode::Pseudo, 20_000, None)?;
        cooling_order(fig1()?, &pseudo)
    }));
    passed.push(report(10, "determinism", determinism));

    let failed = passed.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed in {:.0} s", passed.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

const FIG2_PERIODS: u64 = 30_000;
