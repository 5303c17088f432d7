//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails or overruns its time budget.
//!
//!     cargo test --release -p greenhouse-core --test acceptance

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use greenhouse_core::actuators::{
    actuation_level, co2_emissions, energy_cost, power, size_actuators, social_cost, ActuatorKind, ActuatorSpec,
    ControlInput, CostLedger, NU,
};
use greenhouse_core::climate::{
    co2_density_from_ppm, co2_ext_density, co2_ppm, convective_flow, idx, nusselt, q_cond, q_rad, saturation_moisture,
    ClimateModel, ClimateState, ExchangeLink, ExternalConditions, Node, NX,
};
use greenhouse_core::empc::{
    cost_coefficients, finite_difference_gradient, revenue, solve, stage_cost, GradientMethod, NempcConfig,
    NempcController, Problem,
};
use greenhouse_core::error::{Error, Result};
use greenhouse_core::external_data::{
    CarbonClient, DataSource, FixtureStore, HttpResponse, Transport, WeatherClient, Window, OFFLINE_ENV,
};
use greenhouse_core::integrate::{rk4, AdaptiveOptions};
use greenhouse_core::params::{default_parameters, Compartment, PhysicalConstants};
use greenhouse_core::scenario::{PreparedScenario, ScenarioConfig};
use greenhouse_core::simulator::{
    integrate_step, run_scenario, ExogenousTrack, Mode, NoControl, Policy, RunOptions, StepTest, Trajectory,
};
use greenhouse_core::solar::GreenhouseGeometry;

type Check = std::result::Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn offline_source() -> DataSource {
    DataSource::offline(FixtureStore::new(root().join("fixtures")))
}

fn prepare(name: &str) -> Result<PreparedScenario> {
    let path = root().join("scenarios").join(name);
    let cfg = ScenarioConfig::load(&path)?;
    cfg.prepare(path.parent().unwrap(), &offline_source())
}

fn model() -> ClimateModel {
    let g = GreenhouseGeometry::gable(20.0, 10.0, 3.0, 4.5, 0.0, 0.75, 0.7).unwrap();
    ClimateModel::new(default_parameters(), g).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> std::result::Result<f64, String> {
    let e = rel(got, want);
    ensure(e <= tol, || {
        format!("{name}: got {got:e}, expected {want:e} (relative error {e:.2e})")
    })?;
    Ok(e)
}

fn spec(kind: ActuatorKind, a_max: f64, p_unit: f64, eta: f64) -> ActuatorSpec {
    ActuatorSpec {
        kind,
        a_max,
        p_unit,
        eta,
    }
}

fn formula_suite() -> Check {
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let mut check = |name: &str, got: f64, want: f64| -> std::result::Result<(), String> {
        worst = worst.max(close(name, got, want, tol)?);
        n += 1;
        Ok(())
    };

    check("nusselt free", nusselt(1e5, 0.0), 0.63)?;
    check("nusselt forced", nusselt(0.0, 2e4), 0.632)?;
    check("nusselt both", nusselt(1e5, 2e4), 0.632)?;
    check(
        "convective flow",
        convective_flow(1.0, 1.0, 0.025, 1.0, 301.0, 300.0),
        0.025,
    )?;

    let cover = Node::Compartment(Compartment::Cover);
    let r = ExchangeLink::radiative(cover, Node::Sky, 1.0, 1.0, 1.0, (1.0, 0.0), (1.0, 0.0));
    check("radiation", q_rad(&r, 300.0, 290.0, 5.670e-8), 58.241673)?;
    let c = ExchangeLink::conductive(cover, Node::External, 1.0, 1.0, 0.1);
    check("conduction", q_cond(&c, 300.0, 290.0), 100.0)?;

    check(
        "saturation",
        saturation_moisture(20.0, 1.2).map_err(|e| e.to_string())?,
        0.017221442547945682,
    )?;
    let k = PhysicalConstants {
        r_gas: 8.314,
        m_co2: 0.044,
        p_atm: 101325.0,
        ..default_parameters().constants
    };
    check("external co2", co2_ext_density(293.15, &k), 7.316937772179298e-4)?;
    check("co2 ppm", co2_ppm(1.464e-3, 293.15, &k), 800.3348097705403)?;
    check(
        "co2 ppm linearity",
        co2_ppm(2.0 * co2_ext_density(293.15, &k), 293.15, &k),
        800.0,
    )?;
    check(
        "co2 ppm inverse",
        co2_ppm(co2_density_from_ppm(1234.0, 301.0, &k), 301.0, &k),
        1234.0,
    )?;

    let e = |r: Result<f64>| r.map_err(|e| e.to_string());
    check(
        "actuation level",
        e(actuation_level(50.0, &spec(ActuatorKind::Co2gen, 2.0, 1.0, 1.0)))?,
        1.0,
    )?;
    let kw = spec(ActuatorKind::Heater, 1000.0, 1.0, 1.0);
    check("power", e(power(100.0, &kw))?, 1000.0)?;
    check(
        "power efficiency",
        e(power(100.0, &spec(ActuatorKind::Heater, 1000.0, 1.0, 0.5)))?,
        2000.0,
    )?;
    check("energy cost", e(energy_cost(100.0, 3600.0, 0.2, &kw))?, 0.2)?;
    let m = e(co2_emissions(100.0, 3600.0, 300.0, &kw))?;
    check("emissions", m, 300.0)?;
    check("social cost", social_cost(m, 1e-3), 0.3)?;

    let mut params = default_parameters();
    params.sizing.acph = 36.0;
    let mut g = model().geometry;
    g.volume = 100.0;
    let set = size_actuators(&g, &params).map_err(|e| e.to_string())?;
    check("fan sizing", set.get(ActuatorKind::Fan).a_max, 1.0)?;

    let x0 = ClimateState::from_array([290.0, 290.0, 290.0, 290.0, 290.0, 290.0, 290.0, 0.01, 7e-4, 3.0, 1.0]);
    let x1 = ClimateState {
        x_sdw: 3.75,
        x_nsdw: 1.25,
        ..x0
    };
    check("revenue", revenue(&x1, &x0, 0.02 * 50.0 / 0.05), 20.0)?;

    // one interval of a single actuator through the objective and the ledger
    let mdl = model();
    let dt = 120.0;
    let intensity = 250.0;
    let u = ControlInput::only(ActuatorKind::Heater, 40.0);
    let hs = mdl.actuators.get(ActuatorKind::Heater);
    let econ = mdl.params.economics;
    let energy = e(energy_cost(40.0, dt, econ.energy_price, hs))?;
    let social = social_cost(e(co2_emissions(40.0, dt, intensity, hs))?, econ.co2_price);
    let with = cost_coefficients(&mdl, dt, intensity, true).map_err(|e| e.to_string())?;
    let without = cost_coefficients(&mdl, dt, intensity, false).map_err(|e| e.to_string())?;
    let s1 = stage_cost(&u, &with, &x0, &x0, 1.0);
    let s0 = stage_cost(&u, &without, &x0, &x0, 1.0);
    check("stage cost with social", s1.total, energy + social)?;
    check("stage cost without social", s0.total, energy)?;
    let mut ledger = CostLedger::default();
    ledger
        .step(&u, dt, &mdl.actuators, &econ, intensity)
        .map_err(|e| e.to_string())?;
    let h = ActuatorKind::Heater.index();
    check("ledger energy row", ledger.energy_cost[h], energy)?;
    check("ledger co2 row", ledger.co2_cost[h], social)?;

    Ok(format!("{n} oracles, worst relative error {worst:.1e}"))
}

fn rk4_order() -> Check {
    // x' = x cos t, x(0) = 1, x(t) = exp(sin t)
    let f = |t: f64, x: &[f64; 1], d: &mut [f64; 1]| -> Result<()> {
        d[0] = x[0] * t.cos();
        Ok(())
    };
    let exact = 2f64.sin().exp();
    let err = |n: usize| (rk4(f, 0.0, 2.0, &[1.0], n).unwrap()[0] - exact).abs();
    let (e1, e2, e3) = (err(10), err(20), err(40));
    let (r1, r2) = (e1 / e2, e2 / e3);
    ensure((14.0..=18.0).contains(&r1) && (14.0..=18.0).contains(&r2), || {
        format!("error ratios {r1:.3}, {r2:.3} outside 16 +/- 2")
    })?;
    Ok(format!("error ratios {r1:.3}, {r2:.3}"))
}

fn equilibrium() -> Check {
    let t_ext = 285.0;
    let h_rel = 65.0;
    let mut params = default_parameters();
    params.climate.sky_temp_offset = 0.0;
    params.climate.deep_soil_temp_c = t_ext - 273.15;
    let m = ClimateModel::new(params, model().geometry).map_err(|e| e.to_string())?;
    let k = &m.params.constants;
    let p = ExternalConditions::dark(t_ext, h_rel, 3.0);
    let mut x = [t_ext; NX];
    x[idx::C_W] = h_rel / 100.0 * saturation_moisture(t_ext - 273.15, k.rho_air).unwrap();
    x[idx::C_CO2] = co2_ext_density(t_ext, k);
    x[idx::SDW] = 0.0;
    x[idx::NSDW] = 0.0;
    let mut dx = [0.0; NX];
    m.rhs(&x, &[0.0; NU], &p, &mut dx).map_err(|e| e.to_string())?;
    let norm = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
    ensure(norm < 1e-10, || format!("rhs norm {norm:e}"))?;
    let inputs = ExogenousTrack::constant(p, 250.0, 120.0, 12, 1).steps.remove(0);
    let mut drift: f64 = 0.0;
    for mode in [Mode::ControlModel, Mode::Plant] {
        let y = integrate_step(&m, &x, &[0.0; NU], &inputs, 120.0, mode, &AdaptiveOptions::default())
            .map_err(|e| e.to_string())?;
        for i in 0..NX {
            drift = drift.max((y[i] - x[i]).abs() / x[i].abs().max(1e-12));
        }
    }
    ensure(drift < 1e-12, || {
        format!("integrate_step moved the fixed point by {drift:e}")
    })?;
    Ok(format!("rhs norm {norm:.1e}, step drift {drift:.1e}"))
}

fn random_state(rng: &mut ChaCha8Rng, m: &ClimateModel, t_ext: f64) -> [f64; NX] {
    let k = &m.params.constants;
    let mut x = [0.0; NX];
    for t in x.iter_mut().take(7) {
        *t = t_ext + rng.random_range(-3.0..10.0);
    }
    let sat = saturation_moisture(x[idx::T_AIR] - 273.15, k.rho_air).unwrap();
    x[idx::C_W] = rng.random_range(0.3..1.1) * sat;
    x[idx::C_CO2] = co2_density_from_ppm(rng.random_range(350.0..1500.0), x[idx::T_AIR], k);
    x[idx::SDW] = rng.random_range(0.5..40.0);
    x[idx::NSDW] = rng.random_range(0.1..15.0);
    x
}

fn random_conditions(rng: &mut ChaCha8Rng, max_dir: f64) -> ExternalConditions {
    let sun = rng.random_range(0.0..1.0);
    let mut p = ExternalConditions::dark(
        rng.random_range(270.0..300.0),
        rng.random_range(30.0..95.0),
        rng.random_range(0.0..8.0),
    );
    for i in 0..p.i_dir.len() {
        p.i_dir[i] = sun * rng.random_range(0.0..max_dir);
        p.i_diff[i] = sun * rng.random_range(0.0..150.0);
    }
    p
}

fn energy_bookkeeping() -> Check {
    let m = model();
    let cap = m.capacities();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB00C);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_conditions(&mut rng, 600.0);
        let x = random_state(&mut rng, &m, p.t_ext);
        let u: [f64; NU] = std::array::from_fn(|_| rng.random_range(0.0..100.0));
        let mut dx = [0.0; NX];
        m.rhs(&x, &u, &p, &mut dx).map_err(|e| e.to_string())?;
        let stored: f64 = (0..7).map(|i| cap[i] * dx[i]).sum();

        let f = m.fluxes(&x, &u, &p).map_err(|e| e.to_string())?;
        let boundary: f64 = m
            .links
            .iter()
            .zip(&f.link_flows)
            .map(|(l, q)| match (l.from.is_boundary(), l.to.is_boundary()) {
                (false, true) => -q,
                (true, false) => *q,
                _ => 0.0,
            })
            .sum();
        let sources = f.solar.absorbed.iter().sum::<f64>() + f.heater + f.ventilation;
        let expected = boundary + sources;
        let scale = expected.abs().max(stored.abs()).max(1.0);
        let e = (stored - expected).abs() / scale;
        worst = worst.max(e);
    }
    ensure(worst <= 1e-8, || format!("worst relative imbalance {worst:e}"))?;
    Ok(format!("1000 states, worst relative imbalance {worst:.1e}"))
}

fn gradient_check() -> Check {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let mut worst: f64 = 0.0;
    let mut components = 0;
    let mut rejected = 0;
    let mut inst = 0;
    while inst < 20 {
        let p = random_conditions(&mut rng, 400.0);
        let x0 = random_state(&mut rng, &m, p.t_ext);
        let intensity = rng.random_range(100.0..400.0);
        let cfg = NempcConfig {
            include_social_cost: rng.random_bool(0.5),
            gradient: GradientMethod::Adjoint,
            ..NempcConfig::default()
        };
        let track = ExogenousTrack::constant(p, intensity, cfg.sample_time, cfg.substeps, cfg.horizon);
        let problem = Problem::new(&m, &cfg, &track.steps, x0).map_err(|e| e.to_string())?;
        let z: Vec<f64> = (0..problem.n_vars()).map(|_| rng.random_range(0.02..0.98)).collect();
        let mut gf = vec![0.0; z.len()];
        // an instance whose prediction leaves the plausible range has no gradient
        if let Err(Error::Implausible { .. }) = finite_difference_gradient(&problem, &z, &mut gf) {
            rejected += 1;
            continue;
        }
        let mut ga = vec![0.0; z.len()];
        problem.objective_and_gradient(&z, &mut ga).map_err(|e| e.to_string())?;
        for i in 0..z.len() {
            let e = rel(ga[i], gf[i]);
            if e >= 1e-3 {
                return Err(format!(
                    "instance {inst}, component {i}: adjoint {:e}, differences {:e} (relative {e:.2e})",
                    ga[i], gf[i]
                ));
            }
            worst = worst.max(e);
            components += 1;
        }
        inst += 1;
    }
    Ok(format!(
        "20 instances ({rejected} implausible draws skipped), {components} components, worst relative error {worst:.1e}"
    ))
}

struct BruteCase {
    name: &'static str,
    x0: [f64; NX],
    p: ExternalConditions,
}

fn brute_cases(m: &ClimateModel) -> Vec<BruteCase> {
    let k = &m.params.constants;
    let sunny = |t_ext: f64, h: f64, dir: f64| ExternalConditions {
        i_dir: [
            dir,
            0.2 * dir,
            0.8 * dir,
            0.0,
            0.6 * dir,
            0.1 * dir,
            0.6 * dir,
            0.1 * dir,
        ],
        i_diff: [0.3 * dir; 8],
        ..ExternalConditions::dark(t_ext, h, 2.5)
    };
    let state = |t: f64, ppm: f64, rh: f64, sdw: f64, nsdw: f64| {
        let mut x = [t; NX];
        x[idx::C_W] = rh * saturation_moisture(t - 273.15, k.rho_air).unwrap();
        x[idx::C_CO2] = co2_density_from_ppm(ppm, t, k);
        x[idx::SDW] = sdw;
        x[idx::NSDW] = nsdw;
        x
    };
    vec![
        BruteCase {
            name: "cold night",
            x0: state(281.0, 420.0, 0.8, 0.75, 0.25),
            p: ExternalConditions::dark(276.0, 85.0, 3.0),
        },
        BruteCase {
            name: "sunny noon",
            x0: state(291.0, 400.0, 0.6, 5.0, 2.0),
            p: sunny(288.0, 55.0, 450.0),
        },
        BruteCase {
            name: "hot afternoon",
            x0: state(311.0, 600.0, 0.5, 12.0, 4.0),
            p: sunny(300.0, 40.0, 600.0),
        },
        BruteCase {
            name: "co2 near limit",
            x0: state(294.0, 1550.0, 0.6, 8.0, 3.0),
            p: sunny(289.0, 60.0, 350.0),
        },
        BruteCase {
            name: "humid morning",
            x0: state(286.0, 450.0, 0.95, 25.0, 9.0),
            p: sunny(283.0, 92.0, 120.0),
        },
    ]
}

fn brute_force() -> Check {
    let m = model();
    let cfg = NempcConfig {
        horizon: 1,
        control_steps: 1,
        ..NempcConfig::default()
    };
    let mut lines = Vec::new();
    for case in brute_cases(&m) {
        let track = ExogenousTrack::constant(case.p, 250.0, cfg.sample_time, cfg.substeps, 1);
        let problem = Problem::new(&m, &cfg, &track.steps, case.x0).map_err(|e| e.to_string())?;
        let level = |i: usize| i as f64 / 10.0;
        let mut table = vec![0.0; 11usize.pow(4)];
        let key = |l: [usize; 4]| ((l[0] * 11 + l[1]) * 11 + l[2]) * 11 + l[3];
        let mut best = ([0usize; 4], f64::INFINITY);
        for a in 0..11 {
            for b in 0..11 {
                for c in 0..11 {
                    for d in 0..11 {
                        let l = [a, b, c, d];
                        let f = problem.objective(&l.map(level)).map_err(|e| e.to_string())?;
                        table[key(l)] = f;
                        if f < best.1 {
                            best = (l, f);
                        }
                    }
                }
            }
        }
        // largest objective change one grid level away from the enumerated optimum
        let mut slack: f64 = 0.0;
        for j in 0..4 {
            for s in [-1i32, 1] {
                let v = best.0[j] as i32 + s;
                if (0..11).contains(&v) {
                    let mut l = best.0;
                    l[j] = v as usize;
                    slack = slack.max((table[key(l)] - best.1).abs());
                }
            }
        }
        let sol = solve(&problem, &[0.5; NU]).map_err(|e| e.to_string())?;
        let f = sol.diagnostics.objective;
        ensure(f <= best.1 + slack, || {
            format!(
                "{}: solver {f:.6e} > grid {:.6e} + slack {slack:.3e}",
                case.name, best.1
            )
        })?;
        lines.push(format!("{} {:+.2e}", case.name, f - best.1));
    }
    Ok(format!("solver minus grid optimum: {}", lines.join(", ")))
}

fn run(prep: &PreparedScenario, policy: &mut dyn Policy, label: &str) -> Result<Trajectory> {
    let n = prep.n_steps;
    let mut last = 0;
    run_scenario(
        &prep.model,
        policy,
        &prep.track,
        prep.x0,
        n,
        &RunOptions::default(),
        &mut |k, total| {
            let pct = 100 * k / total.max(1);
            if pct >= last + 25 {
                last = pct;
                eprintln!("  {label}: {pct}%");
            }
        },
    )
}

fn step_response() -> Check {
    let prep = prepare("step_response_24h.toml").map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for a in [
        None,
        Some(ActuatorKind::Heater),
        Some(ActuatorKind::Fan),
        Some(ActuatorKind::Humidifier),
        Some(ActuatorKind::Co2gen),
    ] {
        let mut policy = StepTest {
            actuator: a,
            at_step: 0,
        };
        let name = policy.name();
        let t = run(&prep, &mut policy, &name).map_err(|e| e.to_string())?;
        let x = t.final_state();
        out.push((x.x_sdw, x.x_nsdw, x.biomass()));
    }
    let [none, heater, fan, humid, co2] = [out[0], out[1], out[2], out[3], out[4]];
    let detail = format!(
        "final sdw/nsdw none {:.4}/{:.4}, heater {:.4}/{:.4}, fan {:.4}/{:.4}, humidifier {:.4}/{:.4}, co2 {:.4}/{:.4}",
        none.0, none.1, heater.0, heater.1, fan.0, fan.1, humid.0, humid.1, co2.0, co2.1
    );
    let co2_delta = (co2.2 - none.2).abs();
    let fan_share = (fan.2 - none.2).abs() / co2_delta;
    let humid_share = (humid.2 - none.2).abs() / co2_delta;
    ensure(co2.1 >= 1.25 * none.1, || {
        format!("co2 step nsdw gain below 25%; {detail}")
    })?;
    ensure(heater.0 > none.0, || {
        format!("heater step sdw not above none; {detail}")
    })?;
    ensure(fan_share < 0.2, || {
        format!("fan delta {:.1}% of co2 delta; {detail}", 100.0 * fan_share)
    })?;
    ensure(humid_share < 0.2, || {
        format!("humidifier delta {:.1}% of co2 delta; {detail}", 100.0 * humid_share)
    })?;
    Ok(format!(
        "{detail}; fan {:.1}% and humidifier {:.1}% of the co2 delta",
        100.0 * fan_share,
        100.0 * humid_share
    ))
}

fn economic_ordering() -> Check {
    let prep = prepare("comparison_48h.toml").map_err(|e| e.to_string())?;
    let none = run(&prep, &mut NoControl, "none").map_err(|e| e.to_string())?;
    let variant = |social: bool| -> Result<Trajectory> {
        let cfg = NempcConfig {
            include_social_cost: social,
            ..prep.config.nempc_config()
        };
        let mut c = NempcController::new(prep.model.clone(), cfg)?;
        let label = c.name();
        run(&prep, &mut c, &label)
    };
    let money = variant(false).map_err(|e| e.to_string())?;
    let carbon = variant(true).map_err(|e| e.to_string())?;
    let (ln, lm, lc) = (none.final_ledger(), money.final_ledger(), carbon.final_ledger());
    let detail = format!(
        "total none {:.3}, nempc-$ {:.3}, nempc-co2 {:.3} EUR; revenue none {:.3}, nempc-$ {:.3}; emissions nempc-$ {:.1}, nempc-co2 {:.1} g",
        ln.total(),
        lm.total(),
        lc.total(),
        ln.lettuce_revenue,
        lm.lettuce_revenue,
        lm.total_co2_mass(),
        lc.total_co2_mass()
    );
    let mut failed = Vec::new();
    if lm.total() < lc.total() {
        failed.push("total(nempc-$) < total(nempc-co2)");
    }
    if lc.total() < ln.total() {
        failed.push("total(nempc-co2) < total(none)");
    }
    if lm.lettuce_revenue <= 1.5 * ln.lettuce_revenue {
        failed.push("revenue(nempc-$) <= 1.5 x revenue(none)");
    }
    if lc.total_co2_mass() > lm.total_co2_mass() {
        failed.push("emissions(nempc-co2) > emissions(nempc-$)");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failed.join(", ")))
    }
}

/// A transport that records calls and never answers.
struct Tripwire(AtomicUsize);

impl Transport for Tripwire {
    fn get(&self, url: &str, _: &[(&str, &str)]) -> Result<HttpResponse> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(Error::Network(format!("network disabled, refused GET {url}")))
    }
}

fn hermeticity() -> Check {
    ensure(greenhouse_core::external_data::is_offline(), || {
        format!("{OFFLINE_ENV} not honoured")
    })?;
    let wire = Arc::new(Tripwire(AtomicUsize::new(0)));
    let source = DataSource {
        store: FixtureStore::new(root().join("fixtures")),
        weather: Some(WeatherClient::new("http://127.0.0.1:9/forecast", wire.clone())),
        carbon: Some(CarbonClient::new("http://127.0.0.1:9/carbon", None, wire.clone())),
        offline: true,
    };
    let dir = root().join("scenarios");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    for path in &names {
        let cfg = ScenarioConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.prepare(&dir, &source)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }

    // store lookup by location and zone, without explicit data paths
    let mut cfg = ScenarioConfig::new(48.1486, 17.1077);
    cfg.data = Default::default();
    cfg.prepare(&dir, &source).map_err(|e| format!("store lookup: {e}"))?;

    let far = Window::covering("2031-01-01T00:00:00Z".parse().unwrap(), 86400.0);
    match source.fetch_weather(48.1486, 17.1077, &far) {
        Err(Error::CoverageGap(_)) => {}
        other => return Err(format!("uncovered weather window gave {other:?}")),
    }
    match source.fetch_carbon("XX", &far) {
        Err(Error::UnsupportedZone(_)) => {}
        other => return Err(format!("unknown zone gave {other:?}")),
    }
    let calls = wire.0.load(Ordering::SeqCst);
    ensure(calls == 0, || format!("{calls} network requests attempted"))?;
    Ok(format!(
        "{} scenarios prepared from fixtures, 0 network requests",
        names.len()
    ))
}

fn main() {
    // SAFETY: set before any other thread starts
    std::env::set_var(OFFLINE_ENV, "1");

    let criteria: [(&str, u64, fn() -> Check); 9] = [
        ("formula-suite", 1, formula_suite),
        ("integrator-order", 5, rk4_order),
        ("equilibrium-fixed-point", 1, equilibrium),
        ("energy-bookkeeping", 10, energy_bookkeeping),
        ("gradient-check", 60, gradient_check),
        ("brute-force-optimality", 300, brute_force),
        ("step-response-ordering", 120, step_response),
        ("closed-loop-economics", 1800, economic_ordering),
        ("hermeticity", 10, hermeticity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = t.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("over time budget; {d}")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "ACCEPTANCE | {name:<24} | {status} | {:>8.2}s / {budget}s | {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("ACCEPTANCE | {failures} criterion(s) failed");
        std::process::exit(1);
    }
}
