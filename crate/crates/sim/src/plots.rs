//! Minimal deterministic SVG line charts for run logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::runner::RunLog;
use tacservo_core::plant::PathGeometry;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<(String, Vec<(f64, f64)>)>,
    equal_aspect: bool,
}

impl Chart {
    fn render(&self) -> String {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (_, pts) in &self.series {
            for (x, y) in pts {
                x_min = x_min.min(*x);
                x_max = x_max.max(*x);
                y_min = y_min.min(*y);
                y_max = y_max.max(*y);
            }
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if (x_max - x_min).abs() < 1e-12 {
            x_max = x_min + 1.0;
        }
        if (y_max - y_min).abs() < 1e-12 {
            y_max = y_min + 1.0;
        }
        if self.equal_aspect {
            let span = (x_max - x_min).max(y_max - y_min);
            let xc = 0.5 * (x_min + x_max);
            let yc = 0.5 * (y_min + y_max);
            x_min = xc - span / 2.0;
            x_max = xc + span / 2.0;
            y_min = yc - span / 2.0;
            y_max = yc + span / 2.0;
        }
        let plot_w = WIDTH - 2.0 * MARGIN;
        let plot_h = HEIGHT - 2.0 * MARGIN;
        let sx = move |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
        let sy = move |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * plot_h;

        let mut svg = String::new();
        let _ = write!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = write!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            self.title
        );
        // Axes and ticks.
        let _ = write!(
            svg,
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#444\"/>"
        );
        for i in 0..=5 {
            let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
            let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
            let px = sx(fx);
            let py = sy(fy);
            let _ = write!(
                svg,
                "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#bbb\" stroke-dasharray=\"3 3\"/>",
                MARGIN,
                HEIGHT - MARGIN
            );
            let _ = write!(
                svg,
                "<line x1=\"{MARGIN}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" stroke=\"#bbb\" stroke-dasharray=\"3 3\"/>",
                WIDTH - MARGIN
            );
            let _ = write!(
                svg,
                "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{fx:.3}</text>",
                HEIGHT - MARGIN + 18.0
            );
            let _ = write!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{fy:.4}</text>",
                MARGIN - 6.0,
                py + 4.0
            );
        }
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            HEIGHT - 14.0,
            self.x_label
        );
        let _ = write!(
            svg,
            "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            self.y_label
        );
        for (i, (name, pts)) in self.series.iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let color = COLORS[i % COLORS.len()];
            let mut path = String::new();
            for (j, (x, y)) in pts.iter().enumerate() {
                let _ = write!(path, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
            }
            let _ = write!(
                svg,
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.4\"/>",
                path.trim_end()
            );
            let ly = MARGIN + 18.0 * i as f64 + 14.0;
            let _ = write!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                WIDTH - MARGIN - 150.0,
                WIDTH - MARGIN - 120.0
            );
            let _ = write!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
                WIDTH - MARGIN - 112.0,
                ly + 4.0
            );
        }
        svg.push_str("</svg>");
        svg
    }
}

/// Write the standard three charts (feature errors, twist components, XY
/// trajectory with the reference contour) into `out_dir`.
pub fn emit_plots(
    log: &RunLog,
    geometry: &PathGeometry,
    trajectory_xy: &[(f64, f64)],
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    if log.rows.is_empty() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "empty run log",
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let errors = Chart {
        title: "Contour feature errors".into(),
        x_label: "time [s]".into(),
        y_label: "error".into(),
        series: vec![
            (
                "offset [m]".into(),
                log.rows.iter().map(|r| (r.time_s, r.error[0])).collect(),
            ),
            (
                "angle [rad]".into(),
                log.rows.iter().map(|r| (r.time_s, r.error[1])).collect(),
            ),
            (
                "pitch [rad]".into(),
                log.rows.iter().map(|r| (r.time_s, r.error[2])).collect(),
            ),
            (
                "depth [m]".into(),
                log.rows.iter().map(|r| (r.time_s, r.error[3])).collect(),
            ),
        ],
        equal_aspect: false,
    };
    let twist = Chart {
        title: "Commanded twist".into(),
        x_label: "time [s]".into(),
        y_label: "command".into(),
        series: ["vx", "vy", "vz", "wx", "wy", "wz"]
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    format!("{name} [{}]", if i < 3 { "m/s" } else { "rad/s" }),
                    log.rows
                        .iter()
                        .map(|r| (r.time_s, r.command[i]))
                        .collect::<Vec<_>>(),
                )
            })
            .collect(),
        equal_aspect: false,
    };
    // Reference contour polyline plus executed trajectory.
    let mut contour_pts = Vec::new();
    let total = geometry.total_length();
    let samples = 600;
    for i in 0..=samples {
        let p = geometry.point_at(total * i as f64 / samples as f64);
        contour_pts.push((p.x, p.y));
    }
    let trajectory = Chart {
        title: "XY trajectory vs reference contour".into(),
        x_label: "x [m]".into(),
        y_label: "y [m]".into(),
        series: vec![
            ("contour".into(), contour_pts),
            ("sensor".into(), trajectory_xy.to_vec()),
        ],
        equal_aspect: true,
    };

    for (name, chart) in [
        ("feature_errors.svg", errors),
        ("twist.svg", twist),
        ("trajectory.svg", trajectory),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, chart.render())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal well-formedness check: tags balance and the document parses
    /// as a single element tree.
    pub fn is_well_formed_xml(text: &str) -> bool {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            let Some(end_rel) = rest[start..].find('>') else {
                return false;
            };
            let tag = &rest[start + 1..start + end_rel];
            rest = &rest[start + end_rel + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                match stack.pop() {
                    Some(open) if open == name => {}
                    _ => return false,
                }
            } else if tag.ends_with('/') {
                continue;
            } else {
                let name = tag.split_whitespace().next().unwrap_or("");
                stack.push(name.to_string());
            }
        }
        stack.is_empty()
    }

    #[test]
    fn chart_renders_well_formed_svg() {
        let chart = Chart {
            title: "test".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![("a".into(), vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)])],
            equal_aspect: false,
        };
        let svg = chart.render();
        assert!(is_well_formed_xml(&svg), "svg not well formed");
        assert!(svg.contains("<path"));
    }
}
