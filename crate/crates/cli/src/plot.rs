//! Static SVG figures.

use std::error::Error;
use std::path::Path;

use greenhouse_core::report::ResultDocument;
use plotters::prelude::*;

type Res = Result<(), Box<dyn Error>>;

const COLOURS: [RGBColor; 5] = [BLACK, RED, BLUE, GREEN, MAGENTA];

fn hours(doc: &ResultDocument) -> Vec<f64> {
    doc.trajectory.timestamps.iter().map(|t| t / 3600.0).collect()
}

fn bounds(series: &[Vec<f64>]) -> (f64, f64) {
    let lo = series.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    x: &[f64],
    series: &[(String, Vec<f64>)],
) -> Result<(), Box<dyn Error>>
where
    DB::ErrorType: 'static,
{
    let values: Vec<Vec<f64>> = series.iter().map(|s| s.1.clone()).collect();
    let (lo, hi) = bounds(&values);
    let t_end = x.last().copied().unwrap_or(1.0).max(1e-6);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, lo..hi)?;
    chart.configure_mesh().x_desc("h").draw()?;
    for (i, (name, ys)) in series.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        chart
            .draw_series(LineSeries::new(x.iter().copied().zip(ys.iter().copied()), c))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    Ok(())
}

/// Dry weight, air temperature and commands of one run.
pub fn trajectory(path: &Path, doc: &ResultDocument) -> Res {
    let root = SVGBackend::new(path, (900, 900)).into_drawing_area();
    root.fill(&WHITE)?;
    let parts = root.split_evenly((3, 1));
    let x = hours(doc);
    let t = &doc.trajectory;
    panel(
        &parts[0],
        "dry weight, g/m2",
        &x,
        &[
            ("structural".into(), t.states.iter().map(|s| s.x_sdw).collect()),
            ("non-structural".into(), t.states.iter().map(|s| s.x_nsdw).collect()),
        ],
    )?;
    panel(
        &parts[1],
        "temperature, C",
        &x,
        &[
            ("air".into(), t.states.iter().map(|s| s.t_air - 273.15).collect()),
            ("outside".into(), t.exogenous.iter().map(|p| p.t_ext - 273.15).collect()),
        ],
    )?;
    let u = |f: fn(&greenhouse_core::ControlInput) -> f64| t.inputs.iter().map(f).collect::<Vec<_>>();
    panel(
        &parts[2],
        "commands, %",
        &x,
        &[
            ("heater".into(), u(|u| u.heater)),
            ("fan".into(), u(|u| u.fan)),
            ("humidifier".into(), u(|u| u.humidifier)),
            ("co2".into(), u(|u| u.co2)),
        ],
    )?;
    root.present()?;
    Ok(())
}

/// Structural and non-structural dry weight across step-test runs.
pub fn growth(path: &Path, docs: &[ResultDocument]) -> Res {
    let Some(first) = docs.first() else {
        return Ok(());
    };
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let parts = root.split_evenly((2, 1));
    let x = hours(first);
    let pick = |f: fn(&greenhouse_core::ClimateState) -> f64| -> Vec<(String, Vec<f64>)> {
        docs.iter()
            .map(|d| (d.label.clone(), d.trajectory.states.iter().map(f).collect()))
            .collect()
    };
    panel(&parts[0], "structural dry weight, g/m2", &x, &pick(|s| s.x_sdw))?;
    panel(&parts[1], "non-structural dry weight, g/m2", &x, &pick(|s| s.x_nsdw))?;
    root.present()?;
    Ok(())
}
