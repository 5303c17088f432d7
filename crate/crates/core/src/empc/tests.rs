use super::*;
use crate::climate::ExternalConditions;
use crate::params::default_parameters;
use crate::simulator::{run_scenario, RunOptions};
use crate::solar::GreenhouseGeometry;

fn model() -> ClimateModel {
    let g = GreenhouseGeometry::gable(20.0, 10.0, 3.0, 4.5, 0.0, 0.75, 0.7).unwrap();
    ClimateModel::new(default_parameters(), g).unwrap()
}

fn day() -> ExternalConditions {
    ExternalConditions {
        i_dir: [250.0, 40.0, 200.0, 0.0, 150.0, 10.0, 150.0, 10.0],
        i_diff: [80.0; 8],
        ..ExternalConditions::dark(285.0, 70.0, 2.0)
    }
}

fn small_config() -> NempcConfig {
    NempcConfig {
        horizon: 5,
        control_steps: 5,
        ..NempcConfig::default()
    }
}

#[test]
fn adjoint_matches_finite_differences() {
    let m = model();
    let cfg = small_config();
    let p = day();
    let track = ExogenousTrack::constant(p, 250.0, 120.0, 12, 5);
    let x0 = m.initial_state(&p).to_array();
    let problem = Problem::new(&m, &cfg, &track.steps, x0).unwrap();
    let z: Vec<f64> = (0..problem.n_vars())
        .map(|i| 0.1 + 0.8 * ((i * 7 % 11) as f64 / 11.0))
        .collect();
    let mut ga = vec![0.0; z.len()];
    let mut gf = vec![0.0; z.len()];
    let fa = gradient::adjoint(&problem, &z, &mut ga).unwrap();
    finite_difference_gradient(&problem, &z, &mut gf).unwrap();
    assert!((fa - problem.objective(&z).unwrap()).abs() < 1e-15);
    let num: f64 = ga.iter().zip(&gf).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = gf.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num / den < 1e-3, "relative error {}", num / den);
}

#[test]
fn objective_parts_add_up() {
    let m = model();
    let cfg = small_config();
    let p = day();
    let track = ExogenousTrack::constant(p, 250.0, 120.0, 12, 5);
    let problem = Problem::new(&m, &cfg, &track.steps, m.initial_state(&p).to_array()).unwrap();
    let z = vec![0.5; problem.n_vars()];
    let parts = problem.objective_parts(&z).unwrap();
    assert!(parts.actuator_cost > 0.0);
    assert_eq!(parts.total(), parts.actuator_cost - parts.revenue + parts.penalty);
}

#[test]
fn solve_does_not_worsen_the_initial_guess() {
    let m = model();
    let cfg = small_config();
    let p = day();
    let track = ExogenousTrack::constant(p, 250.0, 120.0, 12, 5);
    let problem = Problem::new(&m, &cfg, &track.steps, m.initial_state(&p).to_array()).unwrap();
    let z0 = vec![0.5; problem.n_vars()];
    let s = solve(&problem, &z0).unwrap();
    assert!(s.diagnostics.objective <= problem.objective(&z0).unwrap());
    assert!(s
        .plan
        .iter()
        .all(|u| u.to_array().iter().all(|v| (0.0..=100.0).contains(v))));
}

#[test]
fn short_horizon_is_too_myopic_to_heat() {
    // one interval of heating costs far more than the growth it buys
    let m = model();
    let cfg = NempcConfig {
        horizon: 1,
        control_steps: 1,
        ..NempcConfig::default()
    };
    let p = ExternalConditions::dark(283.0, 70.0, 2.0);
    let track = ExogenousTrack::constant(p, 250.0, 120.0, 12, 1);
    let problem = Problem::new(&m, &cfg, &track.steps, m.initial_state(&p).to_array()).unwrap();
    let s = solve(&problem, &[0.5; NU]).unwrap();
    assert!(s.plan[0].heater < 1e-6, "{:?}", s.plan[0]);
}

#[test]
fn warm_start_shifts_and_duplicates() {
    let m = model();
    let mut c = NempcController::new(
        m,
        NempcConfig {
            horizon: 3,
            control_steps: 3,
            ..NempcConfig::default()
        },
    )
    .unwrap();
    let z: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
    c.shift(&z);
    assert_eq!(&c.warm_start()[..8], &z[4..]);
    assert_eq!(&c.warm_start()[8..], &z[8..]);
}

#[test]
fn controller_runs_in_closed_loop() {
    let m = model();
    let p = day();
    let cfg = small_config();
    let track = ExogenousTrack::constant(p, 250.0, 120.0, 12, 10);
    let mut c = NempcController::new(m.clone(), cfg).unwrap();
    let t = run_scenario(
        &m,
        &mut c,
        &track,
        m.initial_state(&p),
        5,
        &RunOptions::default(),
        &mut |_, _| {},
    )
    .unwrap();
    assert_eq!(t.len(), 6);
    assert!(t.diagnostics[..5].iter().all(|d| d.is_some()));
    assert!(t.final_ledger().solver_energy_cost > 0.0);
}

#[test]
fn config_validation() {
    assert!(NempcConfig {
        control_steps: 31,
        ..NempcConfig::default()
    }
    .validate()
    .is_err());
    assert!(NempcConfig {
        horizon: 0,
        ..NempcConfig::default()
    }
    .validate()
    .is_err());
    let mut c = NempcConfig::default();
    c.u_max[0] = 120.0;
    assert!(c.validate().is_err());
    assert!(NempcConfig::default().validate().is_ok());
}
