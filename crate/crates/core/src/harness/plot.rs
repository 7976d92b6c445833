//! SVG charts of the emitted tables: selection frequencies against the grid
//! variable, point estimates with intervals, and per-term box plots.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::emit::CoefficientRecord;
use super::run::{BoxRow, SweepRow};
use crate::error::{Error, Result};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(140, 86, 75),
];

fn draw_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn unique<T: Ord + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    items.collect::<BTreeSet<_>>().into_iter().collect()
}

/// Keeps first-seen order.
fn ordered(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn grid_shape(panels: usize) -> (usize, usize) {
    let cols = (panels as f64).sqrt().ceil().max(1.0) as usize;
    (panels.div_ceil(cols), cols)
}

fn span(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5 - lo.abs() * 0.1, hi + 0.5 + hi.abs() * 0.1)
    }
}

/// One file per state dimension: a panel per term with one line per method,
/// and a final panel with the exact-support success rate.
pub fn plot_sweep(rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let dims = unique(rows.iter().filter(|r| r.dim != "system").map(|r| r.dim.clone()));
    let methods = ordered(rows.iter().map(|r| r.method.clone()));
    for dim in dims {
        let here: Vec<&SweepRow> = rows.iter().filter(|r| r.dim == dim).collect();
        let terms = ordered(here.iter().filter_map(|r| r.term.clone()));
        let xs: Vec<f64> = here.iter().map(|r| r.grid_value).collect();
        let (x0, x1) = span(&xs);
        let grid_var = here.first().map(|r| r.grid_var.clone()).unwrap_or_default();
        let path = dir.join(format!("sweep_dim{dim}.svg"));
        let (nr, nc) = grid_shape(terms.len() + 1);
        let root = SVGBackend::new(path.as_path(), (260 * nc as u32, 200 * nr as u32)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let panels = root.split_evenly((nr, nc));
        for (k, panel) in panels.iter().enumerate().take(terms.len() + 1) {
            let title = terms.get(k).cloned().unwrap_or_else(|| "exact support".into());
            let mut chart = ChartBuilder::on(panel)
                .caption(&title, ("sans-serif", 14))
                .margin(6)
                .x_label_area_size(24)
                .y_label_area_size(32)
                .build_cartesian_2d(x0..x1, 0.0..1.0)
                .map_err(draw_err)?;
            chart
                .configure_mesh()
                .x_desc(grid_var.as_str())
                .x_labels(4)
                .y_labels(3)
                .draw()
                .map_err(draw_err)?;
            for (m, method) in methods.iter().enumerate() {
                let colour = PALETTE[m % PALETTE.len()];
                let mut pts: Vec<(f64, f64)> = here
                    .iter()
                    .filter(|r| &r.method == method)
                    .filter(|r| match terms.get(k) {
                        Some(t) => r.term.as_deref() == Some(t.as_str()),
                        None => true,
                    })
                    .filter_map(|r| {
                        let v = if k < terms.len() { r.sel_freq } else { r.success_rate };
                        v.map(|v| (r.grid_value, v))
                    })
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                pts.dedup_by(|a, b| a.0 == b.0);
                let series = chart
                    .draw_series(LineSeries::new(pts.clone(), colour.stroke_width(2)))
                    .map_err(draw_err)?;
                if k == 0 {
                    series
                        .label(method.as_str())
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 14, y)], colour));
                }
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 2, colour.filled())))
                    .map_err(draw_err)?;
            }
            if k == 0 {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(draw_err)?;
            }
        }
        root.present().map_err(draw_err)?;
        written.push(path.clone());
    }
    Ok(written)
}

/// One file per state dimension: a panel per method with each term's
/// estimate and, where available, its interval.
pub fn plot_coefficients(records: &[CoefficientRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dim in unique(records.iter().map(|r| r.dim)) {
        let here: Vec<&CoefficientRecord> = records.iter().filter(|r| r.dim == dim).collect();
        let methods = ordered(here.iter().map(|r| r.method.clone()));
        let terms = ordered(here.iter().map(|r| r.term.clone()));
        let path = dir.join(format!("coefficients_dim{dim}.svg"));
        let root = SVGBackend::new(path.as_path(), (40 * terms.len() as u32 + 120, 220 * methods.len() as u32))
            .into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        for (panel, method) in root.split_evenly((methods.len(), 1)).iter().zip(&methods) {
            let mine: Vec<&&CoefficientRecord> = here.iter().filter(|r| &r.method == method).collect();
            let ys: Vec<f64> = mine
                .iter()
                .flat_map(|r| [Some(r.estimate), r.ci_lo, r.ci_hi])
                .flatten()
                .filter(|v| v.is_finite())
                .collect();
            let (y0, y1) = span(&ys);
            let names = terms.clone();
            let mut chart = ChartBuilder::on(panel)
                .caption(method, ("sans-serif", 14))
                .margin(6)
                .x_label_area_size(40)
                .y_label_area_size(48)
                .build_cartesian_2d(-0.5..(terms.len() as f64 - 0.5), y0..y1)
                .map_err(draw_err)?;
            chart
                .configure_mesh()
                .x_labels(terms.len())
                .x_label_formatter(&move |x| {
                    let i = x.round();
                    if (x - i).abs() < 1e-9 && i >= 0.0 {
                        names.get(i as usize).cloned().unwrap_or_default()
                    } else {
                        String::new()
                    }
                })
                .disable_x_mesh()
                .draw()
                .map_err(draw_err)?;
            chart
                .draw_series(LineSeries::new(vec![(-0.5, 0.0), (terms.len() as f64 - 0.5, 0.0)], BLACK.mix(0.4)))
                .map_err(draw_err)?;
            for r in &mine {
                let x = terms.iter().position(|t| t == &r.term).unwrap_or(0) as f64;
                let colour = if r.selected == Some(true) { PALETTE[2] } else { PALETTE[0] };
                if let (Some(lo), Some(hi)) = (r.ci_lo, r.ci_hi) {
                    chart
                        .draw_series(std::iter::once(ErrorBar::new_vertical(x, lo, r.estimate, hi, colour, 6)))
                        .map_err(draw_err)?;
                }
                chart
                    .draw_series(std::iter::once(Circle::new((x, r.estimate), 3, colour.filled())))
                    .map_err(draw_err)?;
            }
        }
        root.present().map_err(draw_err)?;
        written.push(path.clone());
    }
    Ok(written)
}

/// One file per (method, dimension) at the first grid value: a box per term
/// over replicates.
pub fn plot_boxplot(rows: &[BoxRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let Some(first) = rows.first().map(|r| r.grid_value) else {
        return Ok(written);
    };
    let at_first: Vec<&BoxRow> = rows.iter().filter(|r| r.grid_value == first).collect();
    let methods = ordered(at_first.iter().map(|r| r.method.clone()));
    for method in &methods {
        for dim in unique(at_first.iter().filter(|r| &r.method == method).map(|r| r.dim)) {
            let here: Vec<&&BoxRow> = at_first.iter().filter(|r| &r.method == method && r.dim == dim).collect();
            let terms = ordered(here.iter().map(|r| r.term.clone()));
            let values: Vec<f64> = here.iter().map(|r| r.estimate).filter(|v| v.is_finite()).collect();
            let (y0, y1) = span(&values);
            let path = dir.join(format!("boxplot_{method}_dim{dim}.svg"));
            let root = SVGBackend::new(path.as_path(), (40 * terms.len() as u32 + 120, 300)).into_drawing_area();
            root.fill(&WHITE).map_err(draw_err)?;
            let names = terms.clone();
            let mut chart = ChartBuilder::on(&root)
                .caption(format!("{method}, dimension {dim}"), ("sans-serif", 14))
                .margin(6)
                .x_label_area_size(40)
                .y_label_area_size(48)
                .build_cartesian_2d(-0.5..(terms.len() as f64 - 0.5), y0 as f32..y1 as f32)
                .map_err(draw_err)?;
            chart
                .configure_mesh()
                .x_labels(terms.len())
                .x_label_formatter(&move |x| {
                    let i = x.round();
                    if (x - i).abs() < 1e-9 && i >= 0.0 {
                        names.get(i as usize).cloned().unwrap_or_default()
                    } else {
                        String::new()
                    }
                })
                .disable_x_mesh()
                .draw()
                .map_err(draw_err)?;
            for (j, term) in terms.iter().enumerate() {
                let v: Vec<f64> = here.iter().filter(|r| &r.term == term).map(|r| r.estimate).collect();
                if v.is_empty() {
                    continue;
                }
                let q = Quartiles::new(&v);
                chart
                    .draw_series(std::iter::once(
                        Boxplot::new_vertical(j as f64, &q).width(12).style(PALETTE[j % PALETTE.len()]),
                    ))
                    .map_err(draw_err)?;
            }
            root.present().map_err(draw_err)?;
            written.push(path.clone());
        }
    }
    Ok(written)
}
