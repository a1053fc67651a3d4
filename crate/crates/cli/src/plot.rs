//! Static SVG renderings of a series CSV: one polyline per UE over time or
//! horizontal distance. No interactive parts, deterministic bytes.

use skytwin_core::xapp_kpm::SeriesPoint;
use std::io;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Plot {
    file: &'static str,
    title: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    x: fn(&SeriesPoint) -> f64,
    y: fn(&SeriesPoint) -> Option<f64>,
}

const PLOTS: [Plot; 4] = [
    Plot {
        file: "throughput_vs_distance.svg",
        title: "DL throughput vs horizontal distance",
        x_label: "horizontal distance (m)",
        y_label: "DL throughput (Mb/s)",
        x: |p| p.horizontal_m,
        y: |p| Some(p.dl_thp_mbps),
    },
    Plot {
        file: "latency_vs_distance.svg",
        title: "SDU latency vs horizontal distance",
        x_label: "horizontal distance (m)",
        y_label: "SDU latency (ms)",
        x: |p| p.horizontal_m,
        y: |p| p.sdu_latency_ms,
    },
    Plot {
        file: "rb_vs_distance.svg",
        title: "RB allocation vs horizontal distance",
        x_label: "horizontal distance (m)",
        y_label: "RBs per report window",
        x: |p| p.horizontal_m,
        y: |p| Some(f64::from(p.rb_count)),
    },
    Plot {
        file: "throughput_vs_time.svg",
        title: "DL throughput vs time",
        x_label: "time (s)",
        y_label: "DL throughput (Mb/s)",
        x: |p| p.t_ms as f64 / 1000.0,
        y: |p| Some(p.dl_thp_mbps),
    },
];

pub fn render_all(series: &[SeriesPoint], out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for plot in &PLOTS {
        let path = out_dir.join(plot.file);
        std::fs::write(&path, render(series, plot))?;
        written.push(path);
    }
    Ok(written)
}

fn nice_ticks(min: f64, max: f64, n: usize) -> Vec<f64> {
    if !(max > min) {
        return vec![min];
    }
    let raw = (max - min) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let start = (min / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= max + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render(series: &[SeriesPoint], plot: &Plot) -> String {
    let mut by_ue: std::collections::BTreeMap<u32, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for p in series {
        if let Some(y) = (plot.y)(p) {
            by_ue.entry(p.ue_id).or_default().push(((plot.x)(p), y));
        }
    }
    for pts in by_ue.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all: Vec<(f64, f64)> = by_ue.values().flatten().copied().collect();
    let (x0, x1, y0, y1) = if all.is_empty() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
        let y1 = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        (x0, x1, y0, if y1 > y0 { y1 } else { y0 + 1.0 })
    };
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0).max(1e-12) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0).max(1e-12) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        plot.title
    ));

    // axes
    let axis_y = HEIGHT - MARGIN_B;
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_R
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{axis_y}\" stroke=\"black\"/>\n"
    ));
    for t in nice_ticks(x0, x1, 6) {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{axis_y}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            axis_y + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            axis_y + 20.0,
            fmt_tick(t)
        ));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = py(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN_L - 9.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        plot.x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MARGIN_T + axis_y) / 2.0,
        (MARGIN_T + axis_y) / 2.0,
        plot.y_label
    ));

    // one polyline per UE
    for (i, (ue, pts)) in by_ue.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = MARGIN_T + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">ue {ue}</text>\n",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
