//! `greenhouse`: batch runs, step tests and ledger comparisons.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use greenhouse_core::external_data::{DataSource, FixtureStore};
use greenhouse_core::report::{execute, growth_series_csv, Comparison, Controller, ResultDocument};
use greenhouse_core::scenario::PolicyKind;
use greenhouse_core::simulator::RunOptions;
use greenhouse_core::{ActuatorKind, PreparedScenario, ScenarioConfig};

mod plot;

#[derive(Parser)]
#[command(
    name = "greenhouse",
    version,
    about = "Greenhouse climate simulation with economic MPC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    None,
    Nempc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StepArg {
    Fan,
    Heater,
    Humidifier,
    Co2,
    None,
    All,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replay fixtures only; never touch the network.
    #[arg(long)]
    offline: bool,
    /// Fixture store searched before any download.
    #[arg(long, default_value = "fixtures")]
    fixtures: PathBuf,
    /// Charge optimiser wall time to the ledger.
    #[arg(long, value_enum, default_value = "on")]
    solver_cost: Switch,
    /// Also write plot.svg.
    #[arg(long)]
    plot: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario under one controller.
    Run {
        #[command(flatten)]
        common: Common,
        /// Defaults to the scenario's policy.
        #[arg(long, value_enum)]
        controller: Option<ControllerArg>,
        /// Include the social cost of CO2 in the controller objective.
        #[arg(long, value_enum)]
        social_cost: Option<Switch>,
    },
    /// Off-to-maximum step in single actuators, compared with no step.
    Steptest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        actuator: StepArg,
    },
    /// Side-by-side ledgers of finished runs.
    Compare {
        /// Result directories written by `run`.
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
        /// Write the table as CSV here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Failure = String;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            common,
            controller,
            social_cost,
        } => run(&common, controller, social_cost),
        Command::Steptest { common, actuator } => steptest(&common, actuator),
        Command::Compare { runs, out } => compare(&runs, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn prepare(c: &Common) -> Result<PreparedScenario, Failure> {
    let config = ScenarioConfig::load(&c.scenario).map_err(|e| format!("{}: {e}", c.scenario.display()))?;
    let store = FixtureStore::new(&c.fixtures);
    let source = if c.offline {
        DataSource::offline(store)
    } else {
        DataSource::from_env(store)
    };
    let base = c.scenario.parent().unwrap_or(Path::new("."));
    config.prepare(base, &source).map_err(|e| e.to_string())
}

fn simulate(c: &Common, prep: &PreparedScenario, controller: Controller) -> Result<ResultDocument, Failure> {
    let opts = RunOptions {
        charge_solver: c.solver_cost == Switch::On,
        ..RunOptions::default()
    };
    let label = controller.label();
    let mut last = None;
    let doc = execute(prep, controller, &opts, &mut |k, n| {
        let pct = 100 * k / n.max(1);
        if !c.quiet && last.is_none_or(|l| pct >= l + 10) {
            last = Some(pct);
            eprintln!("{label}: {pct}% ({k}/{n} steps)");
        }
    })
    .map_err(|e| format!("{label}: {e}"))?;
    Ok(doc)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(dir: &Path, prep: &PreparedScenario, doc: &ResultDocument, plot: bool) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let t = &doc.trajectory;
    write(&dir.join("trajectory.csv"), &t.to_csv(&prep.model.params.constants))?;
    write(&dir.join("ledger.csv"), &t.final_ledger().to_csv())?;
    let summary = serde_json::to_string_pretty(&doc.summary).map_err(|e| e.to_string())?;
    write(&dir.join("summary.json"), &summary)?;
    write(&dir.join("result.json"), &doc.to_json())?;
    if plot {
        plot::trajectory(&dir.join("plot.svg"), doc).map_err(|e| format!("plot: {e}"))?;
    }
    Ok(())
}

fn run(c: &Common, controller: Option<ControllerArg>, social: Option<Switch>) -> Result<(), Failure> {
    let prep = prepare(c)?;
    let control = &prep.config.control;
    let include_social_cost = social.map_or(control.include_social_cost, |s| s == Switch::On);
    let controller = match controller {
        Some(ControllerArg::None) => Controller::None,
        Some(ControllerArg::Nempc) => Controller::Nempc { include_social_cost },
        None => match control.policy {
            PolicyKind::None => Controller::None,
            PolicyKind::Nempc => Controller::Nempc { include_social_cost },
            PolicyKind::Step => Controller::Step {
                actuator: control.step_actuator,
            },
        },
    };
    let doc = simulate(c, &prep, controller)?;
    emit(&c.out, &prep, &doc, c.plot)?;
    let s = &doc.summary;
    println!(
        "{}: {} steps, revenue {:.4} EUR, energy {:.4} EUR, CO2 cost {:.4} EUR, total {:.4} EUR -> {}",
        doc.label,
        s.steps,
        s.lettuce_revenue_eur,
        s.energy_cost_eur,
        s.co2_cost_eur,
        s.total_eur,
        c.out.display()
    );
    Ok(())
}

fn steptest(c: &Common, actuator: StepArg) -> Result<(), Failure> {
    let prep = prepare(c)?;
    let one = |a: StepArg| match a {
        StepArg::Fan => Some(ActuatorKind::Fan),
        StepArg::Heater => Some(ActuatorKind::Heater),
        StepArg::Humidifier => Some(ActuatorKind::Humidifier),
        StepArg::Co2 => Some(ActuatorKind::Co2gen),
        StepArg::None | StepArg::All => None,
    };
    let selected: Vec<Option<ActuatorKind>> = match actuator {
        StepArg::All => [
            StepArg::None,
            StepArg::Heater,
            StepArg::Fan,
            StepArg::Humidifier,
            StepArg::Co2,
        ]
        .into_iter()
        .map(one)
        .collect(),
        StepArg::None => vec![None],
        a => vec![None, one(a)],
    };
    let mut docs = Vec::new();
    for a in selected {
        let doc = simulate(c, &prep, Controller::Step { actuator: a })?;
        emit(&c.out.join(&doc.label), &prep, &doc, c.plot)?;
        docs.push(doc);
    }
    let runs: Vec<_> = docs.iter().map(|d| (d.label.clone(), &d.trajectory)).collect();
    write(
        &c.out.join("growth.csv"),
        &growth_series_csv(&runs).map_err(|e| e.to_string())?,
    )?;
    if c.plot {
        plot::growth(&c.out.join("growth.svg"), &docs).map_err(|e| format!("plot: {e}"))?;
    }
    for d in &docs {
        let x = d.trajectory.final_state();
        println!(
            "{:<16} final sdw {:.4} g/m2, nsdw {:.4} g/m2",
            d.label, x.x_sdw, x.x_nsdw
        );
    }
    Ok(())
}

fn compare(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let mut docs = Vec::new();
    for d in dirs {
        let path = d.join("result.json");
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        docs.push(ResultDocument::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    let mut names: Vec<String> = docs.iter().map(|d| d.label.clone()).collect();
    for i in 0..names.len() {
        if names.iter().filter(|n| **n == names[i]).count() > 1 {
            names[i] = dirs[i].display().to_string();
        }
    }
    let pairs: Vec<_> = names.into_iter().zip(docs.iter()).collect();
    let table = Comparison::new(&pairs).map_err(|e| e.to_string())?;
    for w in &table.warnings {
        eprintln!("warning: scenario hash mismatch: {w}");
    }
    print!("{}", table.to_table());
    if let Some(p) = out {
        write(p, &table.to_csv())?;
    }
    Ok(())
}
