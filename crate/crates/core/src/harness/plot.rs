//! Minimal self-contained SVG line plots for traces and learning curves.
//!
//! Presentation only: callers pass already-computed series; nothing is
//! recomputed here.

use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 60.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One named line.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Optional shaded min/max band drawn under the lines.
pub struct Band {
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
    pub color: &'static str,
}

fn bounds(series: &[Series], band: Option<&Band>) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    let mut feed = |pts: &[(f64, f64)]| {
        for (x, y) in pts {
            xs.0 = xs.0.min(*x);
            xs.1 = xs.1.max(*x);
            ys.0 = ys.0.min(*y);
            ys.1 = ys.1.max(*y);
        }
    };
    for s in series {
        feed(&s.points);
    }
    if let Some(b) = band {
        feed(&b.lower);
        feed(&b.upper);
    }
    if xs.0 == xs.1 {
        xs.1 = xs.0 + 1.0;
    }
    if ys.0 == ys.1 {
        ys.1 = ys.0 + 1.0;
    }
    (xs, ys)
}

/// Writes a line plot (optionally with a shaded band) as a standalone
/// SVG file. Errors if no series has any points.
pub fn line_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    band: Option<&Band>,
) -> std::io::Result<()> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "no data points to plot",
        ));
    }
    let ((x0, x1), (y0, y1)) = bounds(series, band);
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    ));

    // Axes with min/max tick labels.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            sx(x),
            H - MB + 16.0,
            x
        ));
    }
    for y in [y0, y1] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            ML - 6.0,
            sy(y) + 4.0,
            y
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0,
        xml_escape(xlabel)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        xml_escape(ylabel)
    ));

    if let Some(b) = band {
        let mut d = String::from("M");
        for (x, y) in &b.lower {
            d.push_str(&format!(" {:.2},{:.2}", sx(*x), sy(*y)));
        }
        for (x, y) in b.upper.iter().rev() {
            d.push_str(&format!(" L {:.2},{:.2}", sx(*x), sy(*y)));
        }
        d.push_str(" Z");
        svg.push_str(&format!("<path d=\"{d}\" fill=\"{}\" fill-opacity=\"0.25\"/>\n", b.color));
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.join(" ")
        ));
        let ly = MT + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            W - MR - 140.0,
            W - MR - 116.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            W - MR - 110.0,
            ly + 4.0,
            xml_escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_wellformed_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let series = [Series {
            name: "a<b>".into(),
            points: (0..10).map(|i| (i as f64, (i as f64).sin())).collect(),
        }];
        let band = Band {
            lower: (0..10).map(|i| (i as f64, -1.0)).collect(),
            upper: (0..10).map(|i| (i as f64, 1.0)).collect(),
            color: "#1f77b4",
        };
        line_plot(&path, "t", "x", "y", &series, Some(&band)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.ends_with("</svg>\n"));
        // Tag balance as a cheap well-formedness proxy.
        for tag in ["svg", "text", "polyline", "path", "line", "rect"] {
            let opens = text.matches(&format!("<{tag}")).count();
            let closes = text.matches(&format!("</{tag}>")).count()
                + text.matches("/>").count();
            assert!(closes >= opens, "unbalanced <{tag}>");
        }
        assert!(!text.contains("a<b>"));
    }

    #[test]
    fn empty_series_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let series = [Series { name: "a".into(), points: vec![] }];
        assert!(line_plot(&path, "t", "x", "y", &series, None).is_err());
    }
}
