use ioncool::forces::{CoolingConfig, ForceField};
use ioncool::integrator::{EnsembleState, Propagator};
use ioncool::model::{secular_frequencies, Composition, Vec3};
use ioncool::scenario::preset;

/// Secular frequency of a lone Be+ ion from the zero crossings of its
/// period-averaged radial position.
#[test]
fn secular_oscillation_frequency_from_zero_crossings() {
    let c = preset("fig1").unwrap();
    let be = c.species.iter().find(|s| s.name() == "Be+").unwrap().clone();
    let expected = secular_frequencies(&be, &c.trap).unwrap().radial / (2.0 * std::f64::consts::PI);
    let comp = Composition::new(vec![be], vec![0]).unwrap();
    let field = ForceField::from_composition(c.trap.clone(), comp, CoolingConfig::none()).unwrap();
    let mut prop = Propagator::new(field, c.controller());
    let mut state = EnsembleState::new(0.0, vec![Vec3::new(10e-6, 0.0, 0.0)], vec![Vec3::zeros()], 1);
    let mut track = Vec::new();
    for _ in 0..500 {
        let samples = prop.advance_one_rf_period(&mut state, 32).unwrap();
        track.push((samples.start_time + 0.5 * samples.period, samples.mean_positions()[0].x));
    }
    let crossings: Vec<f64> = track
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .map(|w| w[0].0 + (w[1].0 - w[0].0) * w[0].1 / (w[0].1 - w[1].1))
        .collect();
    assert!(crossings.len() > 20);
    let measured = (crossings.len() - 1) as f64 / (2.0 * (crossings[crossings.len() - 1] - crossings[0]));
    assert!((measured / expected - 1.0).abs() < 0.02, "measured {measured:.0} Hz, expected {expected:.0} Hz");
}
