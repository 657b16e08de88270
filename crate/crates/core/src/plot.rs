//! Minimal static SVG line charts: Bode curves, spectra and trajectory
//! overlays.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    /// Same scale on both axes, for spatial plots.
    pub equal_aspect: bool,
    pub series: Vec<Series>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Figure {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            equal_aspect: false,
            series: Vec::new(),
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn equal_aspect(mut self) -> Self {
        self.equal_aspect = true;
        self
    }

    pub fn with_series(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.into(), points });
        self
    }

    fn x_of(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0))
            .map(|&(x, y)| (self.x_of(x), y))
            .peekable();
        it.peek()?;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let pad = |lo: f64, hi: f64| if hi - lo > 0.0 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Some((x0, x1, y0, y1))
    }

    /// Renders into a group translated by `dy`.
    fn render(&self, out: &mut String, dy: f64) {
        let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
        let _ = writeln!(out, r#"<g transform="translate(0,{dy})">"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        if let Some((mut x0, mut x1, mut y0, mut y1)) = self.bounds() {
            if self.equal_aspect {
                let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
                let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
                (x0, x1) = (cx - scale * pw / 2.0, cx + scale * pw / 2.0);
                (y0, y1) = (cy - scale * ph / 2.0, cy + scale * ph / 2.0);
            }
            let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
            let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * ph;
            for i in 0..=4 {
                let f = i as f64 / 4.0;
                let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
                let xl = if self.log_x { format!("{:.3}", 10f64.powf(xv)) } else { format!("{xv:.3}") };
                let _ = writeln!(
                    out,
                    r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" fill="#444">{}</text>"##,
                    sx(xv),
                    MARGIN_TOP + ph + 16.0,
                    trim(&xl)
                );
                let _ = writeln!(
                    out,
                    r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" fill="#444">{}</text>"##,
                    MARGIN_LEFT - 6.0,
                    sy(yv) + 4.0,
                    trim(&format!("{yv:.3}"))
                );
            }
            for (i, s) in self.series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                let mut d = String::new();
                let mut pen_up = true;
                for &(x, y) in &s.points {
                    if !(x.is_finite() && y.is_finite()) || (self.log_x && x <= 0.0) {
                        pen_up = true;
                        continue;
                    }
                    let _ = write!(d, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, sx(self.x_of(x)), sy(y));
                    pen_up = false;
                }
                let _ =
                    writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"#, d.trim_end());
                let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
                let lx = MARGIN_LEFT + pw - 150.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
                    lx + 18.0,
                    lx + 24.0,
                    ly + 4.0,
                    escape(&s.label)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );
        out.push_str("</g>\n");
    }

    pub fn to_svg(&self) -> String {
        stack(std::slice::from_ref(self))
    }
}

/// Figures stacked vertically in one document.
pub fn stack(figures: &[Figure]) -> String {
    let total = HEIGHT * figures.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total}" viewBox="0 0 {WIDTH} {total}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, f) in figures.iter().enumerate() {
        f.render(&mut out, HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Top-down (x, y) overlay of several trajectories, gaps left open.
pub fn trajectory_overlay(title: &str, tracks: &[(&str, &crate::trajectory::Trajectory)]) -> Figure {
    let mut fig = Figure::new(title, "x (m)", "y (m)").equal_aspect();
    for (label, t) in tracks {
        let pts = t.samples.iter().map(|s| s.pose.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y))).collect();
        fig = fig.with_series(label, pts);
    }
    fig
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.into()
        }
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polylines_and_legend() {
        let f = Figure::new("Bode <mag>", "ω (rad/s)", "dB")
            .log_x()
            .with_series("order 2", vec![(0.1, 0.0), (1.0, -3.0), (10.0, -40.0), (f64::NAN, 0.0)]);
        let svg = f.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), 1);
        assert!(svg.contains("Bode &lt;mag&gt;"));
        assert!(svg.contains(">order 2<"));
    }

    #[test]
    fn empty_and_stacked() {
        let a = Figure::new("a", "x", "y");
        let b = Figure::new("b", "x", "y").equal_aspect().with_series("s", vec![(1.0, 1.0)]);
        let svg = stack(&[a, b]);
        assert_eq!(svg.matches("<g transform").count(), 2);
        assert!(svg.contains(r#"height="720""#));
    }
}
