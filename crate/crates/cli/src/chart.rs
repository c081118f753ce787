//! Grouped-bar SVG of per-species F1 for the long-tail selections.

use std::path::Path;

use crownscale_core::metrics::LongTailReport;
use crownscale_core::ViewKind;
use plotters::coord::ranged1d::{IntoSegmentedCoord, SegmentValue};
use plotters::prelude::*;

use crate::error::{CliError, Result};

const COLORS: [RGBColor; 2] = [RGBColor(46, 125, 50), RGBColor(230, 124, 35)];

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("chart rendering failed: {e}"))
}

/// One bar group per selected species (top 10, then bottom 10), one bar per
/// evaluated view. Species without a defined F1 get no bar.
pub fn longtail_chart(report: &LongTailReport, path: &Path) -> Result<()> {
    let selected: Vec<(usize, &str)> = report
        .top10
        .iter()
        .map(|&i| (i, "top"))
        .chain(report.bottom10.iter().map(|&i| (i, "bottom")))
        .collect();
    let n = selected.len().max(1);
    let views = &report.views;
    let width = (120 + 70 * n as u32).max(480);
    let root = SVGBackend::new(path, (width, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let labels: Vec<String> = selected
        .iter()
        .map(|&(i, group)| {
            let r = &report.rows[i];
            format!("{} [{group}] n={}", r.scientific_name, r.train_count)
        })
        .collect();
    let mut chart = ChartBuilder::on(&root)
        .caption("Per-species F1 by training-set size", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(220)
        .y_label_area_size(50)
        .build_cartesian_2d((0..n).into_segmented(), 0.0..1.0f64)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_style(("sans-serif", 11).into_font().transform(FontTransform::Rotate90))
        .x_label_formatter(&|v| match v {
            SegmentValue::CenterOf(i) | SegmentValue::Exact(i) => labels.get(*i).cloned().unwrap_or_default(),
            SegmentValue::Last => String::new(),
        })
        .y_desc("F1")
        .draw()
        .map_err(plot_err)?;

    let slots = views.len().max(1);
    for (j, view) in views.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        let bars: Vec<Rectangle<(SegmentValue<usize>, f64)>> = selected
            .iter()
            .enumerate()
            .filter_map(|(k, &(i, _))| {
                let row = &report.rows[i];
                let f1 = match view {
                    ViewKind::CrownView => row.crown_view_f1,
                    ViewKind::CloseUp => row.close_up_f1,
                }?;
                Some((k, f1))
            })
            .map(|(k, f1)| {
                let mut r = Rectangle::new(
                    [(SegmentValue::Exact(k), 0.0), (SegmentValue::Exact(k + 1), f1)],
                    color.filled(),
                );
                let pad = 8;
                let per = 56 / slots as i32;
                r.set_margin(0, 0, (pad + per * j as i32) as u32, (pad + per * (slots - 1 - j) as i32) as u32);
                r
            })
            .collect();
        chart
            .draw_series(bars)
            .map_err(plot_err)?
            .label(view.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
