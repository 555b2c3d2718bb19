//! Minimal deterministic SVG line plots. No plotting dependency: the output
//! must be byte-stable across runs and machines, and the handful of features
//! needed (polylines, ticks, legend, log-y) fits in one file.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot: no series given")]
    NoSeries,
    #[error("series {name:?} has {usable} usable points, need at least 2")]
    TooFewPoints { name: String, usable: usize },
    #[error("series {name:?} contains a non-finite coordinate")]
    NonFinite { name: String },
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PlotConfig {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Log-scale the y axis; non-positive points are dropped (each drop is
    /// noted in an XML comment so the file records what it omitted).
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: "step".into(),
            y_label: "value".into(),
            log_y: false,
            width: 800,
            height: 480,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 54.0;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Short human tick label: plain decimal in a middle range, scientific
/// outside it, trailing zeros trimmed.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

struct AxisScale {
    min: f64,
    max: f64,
}

impl AxisScale {
    /// Pads a degenerate range so a flat series still renders.
    fn new(min: f64, max: f64) -> Self {
        if min == max {
            Self { min: min - 0.5, max: max + 0.5 }
        } else {
            Self { min, max }
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    /// Five evenly spaced ticks in data space.
    fn ticks(&self) -> Vec<f64> {
        (0..5).map(|i| self.min + (self.max - self.min) * (i as f64) / 4.0).collect()
    }
}

pub fn render_plot(series: &[Series], cfg: &PlotConfig) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::NoSeries);
    }
    for s in series {
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PlotError::NonFinite { name: s.name.clone() });
        }
    }

    // Apply the y transform up front; log-y drops non-positive points.
    let mut dropped: Vec<(String, usize)> = Vec::new();
    let mut prepared: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for s in series {
        let pts: Vec<(f64, f64)> = if cfg.log_y {
            let kept: Vec<(f64, f64)> =
                s.points.iter().filter(|(_, y)| *y > 0.0).map(|(x, y)| (*x, y.log10())).collect();
            let n_dropped = s.points.len() - kept.len();
            if n_dropped > 0 {
                dropped.push((s.name.clone(), n_dropped));
            }
            kept
        } else {
            s.points.clone()
        };
        if pts.len() < 2 {
            return Err(PlotError::TooFewPoints { name: s.name.clone(), usable: pts.len() });
        }
        prepared.push((s.name.clone(), pts));
    }

    let all = prepared.iter().flat_map(|(_, p)| p.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let xs = AxisScale::new(x_min, x_max);
    let ys = AxisScale::new(y_min, y_max);

    let w = cfg.width as f64;
    let h = cfg.height as f64;
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + xs.frac(x) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - ys.frac(y)) * plot_h;

    let mut svg = String::with_capacity(4096);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n",
        cfg.width, cfg.height, cfg.width, cfg.height
    ));
    for (name, n) in &dropped {
        svg.push_str(&format!(
            "<!-- log-y dropped {n} non-positive point(s) from series {} -->\n",
            xml_escape(name)
        ));
    }
    svg.push_str(&format!("<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", cfg.width, cfg.height));
    svg.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_LEFT, MARGIN_TOP, plot_w, plot_h
    ));
    if !cfg.title.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            xml_escape(&cfg.title)
        ));
    }

    for t in xs.ticks() {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            MARGIN_TOP + plot_h + 16.0,
            xml_escape(&tick_label(t))
        ));
    }
    for t in ys.ticks() {
        let y = py(t);
        let label = if cfg.log_y {
            // Ticks live in log10 space; label them as powers of ten.
            format!("1e{}", tick_label(t))
        } else {
            tick_label(t)
        };
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            xml_escape(&label)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        h - 12.0,
        xml_escape(&cfg.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        xml_escape(&cfg.y_label)
    ));

    for (i, (name, pts)) in prepared.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> =
            pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"11\">{}</text>\n",
            lx + 24.0,
            xml_escape(name)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric_series() -> Series {
        Series {
            name: "V".into(),
            points: (0..50).map(|k| (k as f64, 0.9125_f64.powi(k))).collect(),
        }
    }

    #[test]
    fn renders_a_single_series() {
        let svg = render_plot(
            &[geometric_series()],
            &PlotConfig { title: "gap".into(), ..PlotConfig::default() },
        )
        .unwrap();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(">gap<"));
    }

    #[test]
    fn output_is_deterministic() {
        let cfg = PlotConfig { log_y: true, ..PlotConfig::default() };
        let a = render_plot(&[geometric_series()], &cfg).unwrap();
        let b = render_plot(&[geometric_series()], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_y_drops_nonpositive_points_and_says_so() {
        let mut s = geometric_series();
        s.points.push((50.0, 0.0));
        s.points.push((51.0, -1.0));
        let svg = render_plot(&[s], &PlotConfig { log_y: true, ..PlotConfig::default() }).unwrap();
        assert!(svg.contains("dropped 2 non-positive point(s)"), "missing drop note");
        // Log ticks are labeled as powers of ten.
        assert!(svg.contains(">1e"), "missing log tick label");
    }

    #[test]
    fn too_few_usable_points_is_an_error() {
        let s = Series { name: "flat".into(), points: vec![(0.0, -1.0), (1.0, -2.0), (2.0, 1.0)] };
        let err = render_plot(&[s], &PlotConfig { log_y: true, ..PlotConfig::default() }).unwrap_err();
        assert!(matches!(err, PlotError::TooFewPoints { usable: 1, .. }), "got: {err}");
        assert!(matches!(render_plot(&[], &PlotConfig::default()), Err(PlotError::NoSeries)));
    }

    #[test]
    fn names_and_labels_are_xml_escaped() {
        let s = Series { name: "a<b & c".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] };
        let cfg = PlotConfig { title: "\"q\" > 'p'".into(), ..PlotConfig::default() };
        let svg = render_plot(&[s], &cfg).unwrap();
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(svg.contains("&quot;q&quot; &gt; &apos;p&apos;"));
        assert!(!svg.contains("a<b"));
    }

    #[test]
    fn flat_series_still_renders_via_range_padding() {
        let s = Series { name: "const".into(), points: vec![(0.0, 3.0), (1.0, 3.0), (2.0, 3.0)] };
        let svg = render_plot(&[s], &PlotConfig::default()).unwrap();
        assert!(svg.contains("<polyline"));
    }
}
