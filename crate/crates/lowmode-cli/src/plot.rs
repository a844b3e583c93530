//! Minimal SVG 1.1 log-log figures: decade gridlines, polyline series with
//! markers, dashed reference guides, and a legend.  No external renderer is
//! involved; the output is a single self-contained file per figure.

use std::path::{Path, PathBuf};

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;

const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d1495b", "#3d8f5f", "#8a5fb0", "#c98a2a", "#555555",
];

/// One curve on a figure.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// (x, y) pairs; both coordinates must be finite and strictly positive
    /// because both axes are logarithmic.
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
    pub markers: bool,
}

impl Series {
    /// A solid data curve with point markers, colored from the palette.
    pub fn data(label: &str, points: Vec<(f64, f64)>, index: usize) -> Self {
        Series {
            label: label.to_string(),
            points,
            color: PALETTE[index % PALETTE.len()].to_string(),
            dashed: false,
            markers: true,
        }
    }

    /// A dashed reference guide without markers.
    pub fn guide(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.to_string(),
            points,
            color: "#888888".to_string(),
            dashed: true,
            markers: false,
        }
    }
}

/// Reference curve `y = y0 (x / x0)^slope` through the anchor, evaluated at
/// the given abscissae.  The usual way to draw an order guide next to data.
pub fn power_guide(anchor: (f64, f64), slope: f64, xs: &[f64]) -> Vec<(f64, f64)> {
    xs.iter()
        .map(|&x| (x, anchor.1 * (x / anchor.0).powf(slope)))
        .collect()
}

/// A complete log-log figure.
#[derive(Debug, Clone)]
pub struct LogLogPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Decade label: plain numbers near one, `1e±k` further out.
fn decade_label(exp: i32) -> String {
    if (-3..=3).contains(&exp) {
        let v = 10f64.powi(exp);
        if exp >= 0 {
            format!("{v:.0}")
        } else {
            format!("{v}")
        }
    } else {
        format!("1e{exp}")
    }
}

struct LogAxis {
    lo: f64,
    hi: f64,
}

impl LogAxis {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            let l = v.log10();
            lo = lo.min(l);
            hi = hi.max(l);
        }
        // Snap to the surrounding decades; force at least one decade of span.
        let mut lo = lo.floor();
        let mut hi = hi.ceil();
        if hi - lo < 1.0 {
            lo -= 0.5;
            hi = lo + 1.0;
        }
        LogAxis { lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo)
    }

    fn decades(&self) -> Vec<i32> {
        (self.lo.ceil() as i32..=self.hi.floor() as i32).collect()
    }
}

impl LogLogPlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LogLogPlot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, series: Series) {
        self.series.push(series);
    }

    /// Renders the SVG document.
    pub fn render(&self) -> Result<String, CliError> {
        if self.series.is_empty() || self.series.iter().all(|s| s.points.is_empty()) {
            return Err(CliError::Format(format!(
                "figure '{}' has no data",
                self.title
            )));
        }
        for series in &self.series {
            for &(x, y) in &series.points {
                if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
                    return Err(CliError::Format(format!(
                        "figure '{}', series '{}': point ({x:e}, {y:e}) not plottable on log axes",
                        self.title, series.label
                    )));
                }
            }
        }

        let xs = LogAxis::from_values(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0)),
        );
        let ys = LogAxis::from_values(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1)),
        );
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + xs.frac(x) * plot_w;
        let py = |y: f64| MARGIN_TOP + (1.0 - ys.frac(y)) * plot_h;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
             width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            escape_xml(&self.title)
        ));

        // Decade gridlines and tick labels.
        for exp in xs.decades() {
            let x = px(10f64.powi(exp));
            svg.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                MARGIN_TOP,
                MARGIN_TOP + plot_h
            ));
            svg.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
                 text-anchor=\"middle\">{}</text>\n",
                MARGIN_TOP + plot_h + 18.0,
                decade_label(exp)
            ));
        }
        for exp in ys.decades() {
            let y = py(10f64.powi(exp));
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
                 text-anchor=\"end\">{}</text>\n",
                MARGIN_LEFT - 8.0,
                y + 4.0,
                decade_label(exp)
            ));
        }

        // Axis frame.
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w:.1}\" \
             height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape_xml(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"20\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
             text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape_xml(&self.y_label)
        ));

        // Series.
        for series in &self.series {
            let dash = if series.dashed {
                " stroke-dasharray=\"7,5\""
            } else {
                ""
            };
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>\n",
                pts.join(" "),
                series.color
            ));
            if series.markers {
                for &(x, y) in &series.points {
                    svg.push_str(&format!(
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                        px(x),
                        py(y),
                        series.color
                    ));
                }
            }
        }

        // Legend.
        let legend_x = MARGIN_LEFT + plot_w + 16.0;
        for (i, series) in self.series.iter().enumerate() {
            let y = MARGIN_TOP + 14.0 + 22.0 * i as f64;
            let dash = if series.dashed {
                " stroke-dasharray=\"7,5\""
            } else {
                ""
            };
            svg.push_str(&format!(
                "<line x1=\"{legend_x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                 stroke=\"{}\" stroke-width=\"1.8\"{dash}/>\n",
                legend_x + 28.0,
                series.color
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                legend_x + 34.0,
                y + 4.0,
                escape_xml(&series.label)
            ));
        }

        svg.push_str("</svg>\n");
        Ok(svg)
    }

    /// Writes `<out_dir>/<name>.svg` and returns the path.
    pub fn write_svg(&self, out_dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        let text = self.render()?;
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Discretization errors against the grid size, with a second-order guide.
pub fn figure_convergence(ms: &[usize], err_fd: &[f64], err_rd: &[f64]) -> LogLogPlot {
    let mut plot = LogLogPlot::new(
        "L2 error vs grid size",
        "interior points per axis m",
        "discrete L2 error",
    );
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let fd: Vec<(f64, f64)> = xs.iter().copied().zip(err_fd.iter().copied()).collect();
    let rd: Vec<(f64, f64)> = xs.iter().copied().zip(err_rd.iter().copied()).collect();
    plot.push(Series::data("fine-grid solve", fd, 0));
    plot.push(Series::data("reduced solve", rd, 1));
    if let (Some(&x0), Some(&y0)) = (ms.first(), err_fd.first()) {
        let guide = power_guide((x0 as f64, y0 * 1.6), -2.0, &xs);
        plot.push(Series::guide("slope -2", guide));
    }
    plot
}

/// Total error of the reduced solution against the reduced dimension, with
/// the fine-grid error drawn as the saturation floor.
/// Total error against the reduced dimension, next to the fine-grid
/// error floor and the anchored `C sqrt(log M) / M` reference.
/// `reference` points carry their own abscissas (in K) because the
/// reference is undefined at M = 1.
pub fn figure_total_error(
    ks: &[usize],
    err_total: &[f64],
    err_fd: f64,
    reference: &[(f64, f64)],
) -> LogLogPlot {
    let mut plot = LogLogPlot::new(
        "Total error vs reduced dimension",
        "reduced dimension K",
        "discrete L2 error",
    );
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let total: Vec<(f64, f64)> = xs.iter().copied().zip(err_total.iter().copied()).collect();
    plot.push(Series::data("total error", total, 0));
    let floor: Vec<(f64, f64)> = xs.iter().map(|&x| (x, err_fd)).collect();
    plot.push(Series::guide("fine-grid error", floor));
    if !reference.is_empty() {
        plot.push(Series::guide("C sqrt(log M)/M", reference.to_vec()));
    }
    plot
}

/// Reduction error (distance to the fine-grid solve) against the cutoff.
pub fn figure_reduction_error(cutoffs: &[usize], err_red: &[f64]) -> LogLogPlot {
    let mut plot = LogLogPlot::new(
        "Reduction error vs spectral cutoff",
        "cutoff M",
        "discrete L2 distance to the fine-grid solve",
    );
    let xs: Vec<f64> = cutoffs.iter().map(|&m| m as f64).collect();
    let red: Vec<(f64, f64)> = xs.iter().copied().zip(err_red.iter().copied()).collect();
    plot.push(Series::data("reduction error", red, 1));
    plot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let mut plot = LogLogPlot::new("demo", "x", "y");
        plot.push(Series::data("a", vec![(10.0, 1e-2), (100.0, 1e-4)], 0));
        plot.push(Series::guide(
            "guide",
            power_guide((10.0, 2e-2), -2.0, &[10.0, 100.0]),
        ));
        let svg = plot.render().unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn rejects_nonpositive_points() {
        let mut plot = LogLogPlot::new("demo", "x", "y");
        plot.push(Series::data("a", vec![(10.0, 0.0)], 0));
        let err = plot.render().unwrap_err();
        assert_eq!(err.category(), "format");
        let empty = LogLogPlot::new("demo", "x", "y");
        assert!(empty.render().is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let mut plot = LogLogPlot::new("a < b & c", "x", "y");
        plot.push(Series::data("s<1>", vec![(1.0, 1.0), (2.0, 2.0)], 0));
        let svg = plot.render().unwrap();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("s&lt;1&gt;"));
    }

    #[test]
    fn power_guide_hits_the_anchor() {
        let guide = power_guide((4.0, 1.0), -2.0, &[4.0, 8.0]);
        assert!((guide[0].1 - 1.0).abs() < 1e-15);
        assert!((guide[1].1 - 0.25).abs() < 1e-15);
    }
}
