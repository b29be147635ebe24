//! Static SVG figures: convergence of the estimate against evaluations,
//! per-stage probabilities against threshold, and a trajectory profile.

use std::path::Path;

use dips_core::scenario::Trajectory;
use dips_core::stats::IntervalRow;
use plotters::prelude::*;

use crate::report::ConvergencePoint;
use crate::CliError;

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::runtime(format!("{}: {e}", path.display()))
}

/// Log-axis range covering the positive values, padded to whole decades.
fn log_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
    (hi > 0.0).then(|| (10f64.powi(a), 10f64.powi(b.max(a + 1))))
}

pub fn convergence_svg(
    path: &Path,
    name: &str,
    traces: &[Vec<(u64, f64)>],
    mean: &[ConvergencePoint],
) -> Result<(), CliError> {
    let err = plot_err(path);
    let values = traces.iter().flatten().map(|p| p.1).chain(mean.iter().map(|p| p.mean));
    let (y0, y1) = log_range(values).unwrap_or((1e-10, 1.0));
    let x1 = mean.last().map_or(10, |p| p.evaluation).max(10) as f64;
    let root = SVGBackend::new(path, (800, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{name}: estimate vs evaluations"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((1f64..x1).log_scale(), (y0..y1).log_scale())
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("evaluated boxes")
        .y_desc("probability")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(&err)?;
    for t in traces {
        let pts: Vec<(f64, f64)> = t.iter().filter(|p| p.1 > 0.0).map(|p| (p.0 as f64, p.1)).collect();
        chart.draw_series(LineSeries::new(pts, BLUE.mix(0.3))).map_err(&err)?;
    }
    let avg: Vec<(f64, f64)> = mean.iter().filter(|p| p.mean > 0.0).map(|p| (p.evaluation as f64, p.mean)).collect();
    chart
        .draw_series(LineSeries::new(avg, RED.stroke_width(2)))
        .map_err(&err)?
        .label("mean over runs")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED.stroke_width(2)));
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

pub fn stages_svg(path: &Path, name: &str, rows: &[IntervalRow], per_run: &[Vec<f64>]) -> Result<(), CliError> {
    let err = plot_err(path);
    let values = per_run.iter().flatten().copied().chain(rows.iter().filter_map(|r| r.upper)).chain(rows.iter().filter_map(|r| r.lower));
    let (y0, y1) = log_range(values).unwrap_or((1e-10, 1.0));
    let (mut x0, mut x1) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.threshold), b.max(r.threshold)));
    let pad = ((x1 - x0) * 0.05).max(1.0);
    x0 -= pad;
    x1 += pad;
    let root = SVGBackend::new(path, (800, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{name}: per-stage probability"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("threshold m")
        .y_desc("P(d <= m)")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(&err)?;
    for run in per_run {
        let pts = rows.iter().zip(run).filter(|(_, p)| **p > 0.0).map(|(r, p)| Circle::new((r.threshold, *p), 2, BLUE.mix(0.4).filled()));
        chart.draw_series(pts).map_err(&err)?;
    }
    let means: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.lognormal_mean.map(|m| (r.threshold, m))).collect();
    chart
        .draw_series(LineSeries::new(means, RED.stroke_width(2)))
        .map_err(&err)?
        .label("lognormal mean")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED.stroke_width(2)));
    chart
        .draw_series(rows.iter().filter_map(|r| {
            let (lo, hi) = (r.lower?.max(y0), r.upper?);
            Some(PathElement::new(vec![(r.threshold, lo), (r.threshold, hi)], BLACK.stroke_width(1)))
        }))
        .map_err(&err)?
        .label("interval")
        .legend(|(x, y)| PathElement::new(vec![(x + 10, y - 6), (x + 10, y + 6)], BLACK));
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

/// Altitude and distance to terrain against time.
pub fn trajectory_svg(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let err = plot_err(path);
    let t1 = traj.samples.last().map_or(1.0, |s| s.state.t_s).max(1.0);
    let (lo, hi) = traj
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.terrain_ft).min(s.state.h_ft), b.max(s.terrain_ft).max(s.state.h_ft)));
    let pad = ((hi - lo) * 0.05).max(100.0);
    let root = SVGBackend::new(path, (800, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("trajectory: {}", traj.termination.as_str()), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..t1, (lo - pad)..(hi + pad))
        .map_err(&err)?;
    chart.configure_mesh().x_desc("time (s)").y_desc("feet").draw().map_err(&err)?;
    chart
        .draw_series(LineSeries::new(traj.samples.iter().map(|s| (s.state.t_s, s.state.h_ft)), BLUE.stroke_width(2)))
        .map_err(&err)?
        .label("aircraft")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE.stroke_width(2)));
    chart
        .draw_series(LineSeries::new(traj.samples.iter().map(|s| (s.state.t_s, s.terrain_ft)), BLACK))
        .map_err(&err)?
        .label("distance to terrain")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_range_pads_to_decades() {
        assert_eq!(log_range([3e-5, 2e-3, 0.0].into_iter()), Some((1e-5, 1e-2)));
        assert_eq!(log_range([0.0].into_iter()), None);
    }

    #[test]
    fn convergence_plot_is_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        let traces = vec![vec![(1, 1e-3), (100, 2e-4)]];
        let mean = vec![ConvergencePoint { evaluation: 100, runs: 1, mean: 2e-4, geometric_mean: Some(2e-4), min: 2e-4, max: 2e-4 }];
        convergence_svg(&path, "basic", &traces, &mean).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg") && text.contains("<text"));
    }
}
