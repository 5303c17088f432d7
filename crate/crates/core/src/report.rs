//! Run execution and the documents shared by the CLI and the service.

use std::fmt::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::actuators::{ActuatorKind, CostLedger, LEDGER_ROWS};
use crate::empc::NempcController;
use crate::error::{Error, Result};
use crate::scenario::PreparedScenario;
use crate::simulator::{run_scenario, NoControl, Policy, RunOptions, StepTest, Trajectory};

pub const FORMAT_VERSION: &str = "greenhouse-result/1";

/// Which policy drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Controller {
    None,
    Nempc { include_social_cost: bool },
    Step { actuator: Option<ActuatorKind> },
}

impl Controller {
    pub fn label(&self) -> String {
        match self {
            Controller::None => "no-control".into(),
            Controller::Nempc {
                include_social_cost: false,
            } => "nempc".into(),
            Controller::Nempc {
                include_social_cost: true,
            } => "nempc-social".into(),
            Controller::Step { actuator: None } => "step-none".into(),
            Controller::Step { actuator: Some(a) } => format!("step-{}", a.slug()),
        }
    }

    fn policy(&self, prep: &PreparedScenario) -> Result<Box<dyn Policy + Send>> {
        Ok(match *self {
            Controller::None => Box::new(NoControl),
            Controller::Step { actuator } => Box::new(StepTest {
                actuator,
                at_step: (prep.config.control.step_time / prep.config.time.sample_time).ceil() as usize,
            }),
            Controller::Nempc { include_social_cost } => {
                let cfg = crate::empc::NempcConfig {
                    include_social_cost,
                    ..prep.config.nempc_config()
                };
                Box::new(NempcController::new(prep.model.clone(), cfg)?)
            }
        })
    }
}

/// One labelled ledger row, signed as in the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub label: String,
    pub value_eur: f64,
    pub emissions_g: f64,
}

pub fn ledger_rows(l: &CostLedger) -> Vec<LedgerRow> {
    let (v, e) = (l.rows(), l.emission_rows());
    LEDGER_ROWS
        .iter()
        .enumerate()
        .map(|(i, label)| LedgerRow {
            label: label.to_string(),
            value_eur: v[i],
            emissions_g: e[i],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub duration_s: f64,
    pub initial_biomass_g_m2: f64,
    pub final_biomass_g_m2: f64,
    pub lettuce_revenue_eur: f64,
    pub energy_cost_eur: f64,
    pub co2_cost_eur: f64,
    pub co2_emissions_g: f64,
    pub total_eur: f64,
    pub solver_seconds: f64,
    pub mean_solver_iterations: f64,
    pub degraded_steps: usize,
    pub wall_seconds: f64,
}

impl Summary {
    pub fn of(t: &Trajectory, wall_seconds: f64) -> Self {
        let l = t.final_ledger();
        let diags: Vec<_> = t.diagnostics.iter().flatten().collect();
        let mean = if diags.is_empty() {
            0.0
        } else {
            diags.iter().map(|d| d.iterations as f64).sum::<f64>() / diags.len() as f64
        };
        Self {
            steps: t.len().saturating_sub(1),
            duration_s: t.timestamps.last().copied().unwrap_or(0.0) - t.timestamps.first().copied().unwrap_or(0.0),
            initial_biomass_g_m2: t.states[0].biomass(),
            final_biomass_g_m2: t.final_state().biomass(),
            lettuce_revenue_eur: l.lettuce_revenue,
            energy_cost_eur: l.total_energy_cost(),
            co2_cost_eur: l.total_co2_cost(),
            co2_emissions_g: l.total_co2_mass(),
            total_eur: l.total(),
            solver_seconds: diags.iter().map(|d| d.wall_seconds).sum::<f64>() + 0.0,
            mean_solver_iterations: mean,
            degraded_steps: diags.iter().filter(|d| d.degraded).count(),
            wall_seconds,
        }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub controller: Controller,
    pub label: String,
    pub ledger: Vec<LedgerRow>,
    pub summary: Summary,
    pub trajectory: Trajectory,
}

impl ResultDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("result document: {e}")))?;
        if doc.format != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "result format `{}`, expected `{FORMAT_VERSION}`",
                doc.format
            )));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result documents serialise")
    }
}

/// Runs a prepared scenario under `controller`. `progress` receives
/// `(done, total)` after every step.
pub fn execute(
    prep: &PreparedScenario,
    controller: Controller,
    opts: &RunOptions,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<ResultDocument> {
    let clock = Instant::now();
    let mut policy = controller.policy(prep)?;
    let mut t = run_scenario(
        &prep.model,
        policy.as_mut(),
        &prep.track,
        prep.x0,
        prep.n_steps,
        opts,
        progress,
    )?;
    t.start = Some(prep.config.time.start);
    let summary = Summary::of(&t, clock.elapsed().as_secs_f64());
    Ok(ResultDocument {
        format: FORMAT_VERSION.into(),
        scenario_name: prep.config.name.clone(),
        scenario_hash: prep.config.hash(),
        controller,
        label: controller.label(),
        ledger: ledger_rows(t.final_ledger()),
        summary,
        trajectory: t,
    })
}

/// Ledger columns of several runs side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    /// `(label, value per column)` in ledger order; the last row is the total.
    pub rows: Vec<(String, Vec<f64>)>,
    pub warnings: Vec<String>,
}

impl Comparison {
    pub fn new(docs: &[(String, &ResultDocument)]) -> Result<Self> {
        if docs.len() < 2 {
            return Err(Error::validation("runs", "at least two results are needed"));
        }
        let mut warnings = Vec::new();
        let first = &docs[0].1.scenario_hash;
        for (name, d) in &docs[1..] {
            if &d.scenario_hash != first {
                warnings.push(format!(
                    "`{name}` was run on scenario {} but `{}` on {first}",
                    d.scenario_hash, docs[0].0
                ));
            }
        }
        let n = LEDGER_ROWS.len();
        let mut rows: Vec<(String, Vec<f64>)> = LEDGER_ROWS[..n - 1]
            .iter()
            .map(|l| (l.to_string(), Vec::new()))
            .collect();
        for (name, d) in docs {
            for row in rows.iter_mut() {
                let r = d
                    .ledger
                    .iter()
                    .find(|r| r.label == row.0)
                    .ok_or_else(|| Error::Schema(format!("`{name}` has no ledger row `{}`", row.0)))?;
                row.1.push(r.value_eur);
            }
        }
        let total = (0..docs.len()).map(|c| rows.iter().map(|r| r.1[c]).sum()).collect();
        rows.push((LEDGER_ROWS[n - 1].to_string(), total));
        Ok(Self {
            columns: docs.iter().map(|(n, _)| n.clone()).collect(),
            rows,
            warnings,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Parameter".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (label, vals) in &self.rows {
            let mut rec = vec![label.clone()];
            rec.extend(vals.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let width = self.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(12);
        let mut s = format!("{:<20}", "Parameter");
        for c in &self.columns {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for (label, vals) in &self.rows {
            let _ = write!(s, "{label:<20}");
            for v in vals {
                let _ = write!(s, " {v:>width$.3}");
            }
            s.push('\n');
        }
        s
    }
}

/// Structural and non-structural dry weight of several runs on a shared
/// time axis.
pub fn growth_series_csv(runs: &[(String, &Trajectory)]) -> Result<String> {
    let Some((_, first)) = runs.first() else {
        return Ok(String::new());
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time_s".to_string()];
    for (name, t) in runs {
        if t.timestamps != first.timestamps {
            return Err(Error::validation("runs", format!("`{name}` has a different time axis")));
        }
        header.push(format!("{name}_sdw_g_m2"));
        header.push(format!("{name}_nsdw_g_m2"));
    }
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for (k, time) in first.timestamps.iter().enumerate() {
        let mut rec = vec![time.to_string()];
        for (_, t) in runs {
            rec.push(format!("{:.8}", t.states[k].x_sdw));
            rec.push(format!("{:.8}", t.states[k].x_nsdw));
        }
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?).expect("utf-8"))
}

/// Serialises non-finite floats as `null` and reads `null` back as NaN.
pub mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::ExternalConditions;
    use crate::scenario::ScenarioConfig;
    use crate::simulator::ExogenousTrack;

    fn prepared(hours: f64) -> PreparedScenario {
        let mut c = ScenarioConfig::new(48.1486, 17.1077);
        c.time.duration = hours * 3600.0;
        let model = c.model().unwrap();
        let p = ExternalConditions::dark(283.15, 70.0, 2.0);
        let n = c.n_steps();
        let track = ExogenousTrack::constant(p, 250.0, c.time.sample_time, c.time.substeps, n + c.horizon_steps());
        let x0 = model.initial_state(&track.steps[0].substeps[0]);
        PreparedScenario {
            config: c,
            model,
            track,
            x0,
            n_steps: n,
            weather: vec![],
            carbon: vec![],
        }
    }

    #[test]
    fn no_control_ledger_is_revenue_only() {
        let doc = execute(&prepared(1.0), Controller::None, &RunOptions::default(), &mut |_, _| {}).unwrap();
        assert_eq!(doc.summary.steps, 30);
        assert_eq!(doc.ledger.len(), LEDGER_ROWS.len());
        for r in &doc.ledger[1..11] {
            assert_eq!(r.value_eur, 0.0, "{}", r.label);
        }
        assert_eq!(doc.ledger[11].value_eur, doc.ledger[0].value_eur);
        assert_eq!(doc.summary.total_eur, doc.ledger[0].value_eur);
    }

    #[test]
    fn documents_round_trip_through_json() {
        let mut doc = execute(
            &prepared(0.2),
            Controller::Step {
                actuator: Some(ActuatorKind::Fan),
            },
            &RunOptions::default(),
            &mut |_, _| {},
        )
        .unwrap();
        let back = ResultDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        doc.format = "other/9".into();
        assert!(matches!(
            ResultDocument::from_json(&doc.to_json()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn comparison_totals_are_column_sums() {
        let prep = prepared(0.2);
        let a = execute(&prep, Controller::None, &RunOptions::default(), &mut |_, _| {}).unwrap();
        let b = execute(
            &prep,
            Controller::Step {
                actuator: Some(ActuatorKind::Heater),
            },
            &RunOptions::default(),
            &mut |_, _| {},
        )
        .unwrap();
        let cmp = Comparison::new(&[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert!(cmp.warnings.is_empty());
        let (label, totals) = cmp.rows.last().unwrap();
        assert_eq!(label, "Total");
        for c in 0..2 {
            let sum: f64 = cmp.rows[..11].iter().map(|r| r.1[c]).sum();
            assert_eq!(totals[c], sum);
        }
        assert!((totals[1] - b.summary.total_eur).abs() < 1e-12);
        let csv = cmp.to_csv();
        assert!(csv.starts_with("Parameter,a,b\nLettuce profit,"));
        assert!(csv.contains("\"CO2 (CO2 Gen.)\"") || csv.contains("CO2 (CO2 Gen.),"));

        let mut other = b.clone();
        other.scenario_hash = "f".repeat(64);
        let cmp = Comparison::new(&[("a".into(), &a), ("c".into(), &other)]).unwrap();
        assert_eq!(cmp.warnings.len(), 1);
        assert!(Comparison::new(&[("a".into(), &a)]).is_err());
    }

    #[test]
    fn non_finite_diagnostics_survive_json() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "nullable")] f64);
        assert_eq!(serde_json::to_string(&W(f64::NAN)).unwrap(), "null");
        assert!(serde_json::from_str::<W>("null").unwrap().0.is_nan());
        assert_eq!(serde_json::from_str::<W>("1.5").unwrap().0, 1.5);
    }

    #[test]
    fn growth_series_columns() {
        let prep = prepared(0.2);
        let a = execute(&prep, Controller::None, &RunOptions::default(), &mut |_, _| {}).unwrap();
        let s = growth_series_csv(&[("none".into(), &a.trajectory)]).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("time_s,none_sdw_g_m2,none_nsdw_g_m2"));
        assert_eq!(s.lines().count(), a.trajectory.len() + 1);
    }
}
