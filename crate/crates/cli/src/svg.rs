//! Static SVG rendering of a band with optional overlaid paths.

use std::fmt::Write;

pub struct Plot<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub paths: Vec<&'a [f64]>,
    /// Paths available before truncation to `paths`.
    pub total_paths: usize,
    pub reference: Option<Reference<'a>>,
    pub title: String,
    pub width: u32,
    pub height: u32,
}

pub struct Reference<'a> {
    pub values: &'a [f64],
    pub label: &'a str,
    /// 1-based steps outside the band.
    pub violations: &'a [usize],
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Step between axis ticks: 1, 2 or 5 times a power of ten.
fn tick_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    h: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, step: usize) -> f64 {
        if self.h == 1 {
            return 0.5 * (self.x0 + self.x1);
        }
        self.x0 + (self.x1 - self.x0) * (step - 1) as f64 / (self.h - 1) as f64
    }

    fn y(&self, v: f64) -> f64 {
        self.y1 - (self.y1 - self.y0) * (v - self.lo) / (self.hi - self.lo)
    }

    fn points(&self, values: &[f64]) -> String {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", self.x(i + 1), self.y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn render(plot: &Plot) -> String {
    let h = plot.upper.len();
    let (w, ht) = (plot.width as f64, plot.height as f64);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let reference = plot.reference.as_ref().map(|r| r.values);
    for series in [plot.lower, plot.upper].into_iter().chain(plot.paths.iter().copied()).chain(reference) {
        for &v in series {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let frame = Frame {
        x0: MARGIN_LEFT,
        x1: w - MARGIN_RIGHT,
        y0: MARGIN_TOP,
        y1: ht - MARGIN_BOTTOM,
        h,
        lo: lo - pad,
        hi: hi + pad,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(&plot.title)
    );

    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#,
        x0 = frame.x0,
        x1 = frame.x1,
        y0 = frame.y0,
        y1 = frame.y1
    );
    let xstep = (tick_step(h.max(2) as f64 - 1.0, 10).max(1.0)) as usize;
    let mut ticks = String::new();
    let mut t = 1;
    while t <= h {
        let x = frame.x(t);
        let _ = write!(
            ticks,
            r#"<line x1="{x:.2}" y1="{y}" x2="{x:.2}" y2="{y2}" stroke="black"/><text x="{x:.2}" y="{ty}" text-anchor="middle">{t}</text>"#,
            y = frame.y1,
            y2 = frame.y1 + 5.0,
            ty = frame.y1 + 18.0
        );
        t += xstep;
    }
    let ystep = tick_step(frame.hi - frame.lo, 6);
    let mut v = (frame.lo / ystep).ceil() * ystep;
    while v <= frame.hi + 1e-9 * ystep {
        let y = frame.y(v);
        let _ = write!(
            ticks,
            r#"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="black"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{label}</text>"#,
            x0 = frame.x0 - 5.0,
            x1 = frame.x0,
            tx = frame.x0 - 8.0,
            ty = y + 4.0,
            label = fmt_tick(v, ystep)
        );
        v += ystep;
    }
    let _ = writeln!(s, "<g>{ticks}</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time step t</text>"#,
        0.5 * (frame.x0 + frame.x1),
        ht - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 18 {cy:.1})">value</text>"#,
        cy = 0.5 * (frame.y0 + frame.y1)
    );

    // Band region and edges.
    let upper_pts = frame.points(plot.upper);
    let lower_rev: String = plot
        .lower
        .iter()
        .enumerate()
        .rev()
        .map(|(i, &v)| format!("{:.2},{:.2}", frame.x(i + 1), frame.y(v)))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(
        s,
        r##"<polygon points="{upper_pts} {lower_rev}" fill="#9ecae1" fill-opacity="0.45" stroke="none"/>"##
    );

    if !plot.paths.is_empty() {
        let _ = writeln!(s, r##"<g fill="none" stroke="#636363" stroke-opacity="0.25" stroke-width="0.8">"##);
        for p in &plot.paths {
            let _ = writeln!(s, r#"<polyline points="{}"/>"#, frame.points(p));
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        upper_pts
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        frame.points(plot.lower)
    );

    let mut legend: Vec<(String, String)> = vec![("#08519c".into(), "confidence band".into())];
    if !plot.paths.is_empty() {
        let label = if plot.paths.len() < plot.total_paths {
            format!("sample paths ({} of {})", plot.paths.len(), plot.total_paths)
        } else {
            format!("sample paths ({})", plot.paths.len())
        };
        legend.push(("#969696".into(), label));
    }
    if let Some(r) = &plot.reference {
        let covered = r.violations.is_empty();
        let color = if covered { "#238b45" } else { "#cb181d" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="6 3"/>"#,
            frame.points(r.values)
        );
        for &t in r.violations {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                frame.x(t),
                frame.y(r.values[t - 1])
            );
        }
        let status = if covered {
            "covered".to_string()
        } else {
            let steps: Vec<String> = r.violations.iter().map(|t| t.to_string()).collect();
            format!("not covered (violated steps: {})", steps.join(", "))
        };
        legend.push((color.into(), format!("{}: {status}", r.label)));
    }

    let lx = frame.x0 + 12.0;
    let mut ly = frame.y0 + 14.0;
    let widest = legend.iter().map(|(_, l)| l.len()).max().unwrap_or(0) as f64;
    let _ = writeln!(
        s,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="white" fill-opacity="0.85" stroke="#bdbdbd"/>"##,
        lx - 6.0,
        ly - 12.0,
        36.0 + 6.6 * widest,
        18.0 * legend.len() as f64 + 6.0
    );
    for (color, label) in &legend {
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{y:.1}" x2="{x2:.1}" y2="{y:.1}" stroke="{color}" stroke-width="3"/><text x="{tx:.1}" y="{ty:.1}">{}</text>"#,
            escape(label),
            y = ly - 4.0,
            x2 = lx + 20.0,
            tx = lx + 26.0,
            ty = ly
        );
        ly += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(10.0, 5), 2.0);
        assert_eq!(tick_step(0.9, 6), 0.2);
        assert_eq!(tick_step(11.0, 10), 2.0);
        assert_eq!(fmt_tick(-0.0, 0.5), "0.0");
        assert_eq!(fmt_tick(1.5, 0.5), "1.5");
    }

    #[test]
    fn legend_reports_coverage() {
        let lower = [0.0, 0.0, 0.0];
        let upper = [1.0, 1.0, 1.0];
        let inside = [0.5, 0.5, 0.5];
        let plot = |values, violations| Plot {
            lower: &lower,
            upper: &upper,
            paths: vec![],
            total_paths: 0,
            reference: Some(Reference {
                values,
                label: "reference path",
                violations,
            }),
            title: "t".into(),
            width: 400,
            height: 300,
        };
        let svg = render(&plot(&inside, &[]));
        assert!(svg.contains("reference path: covered"));
        let outside = [0.5, 2.0, -1.0];
        let svg = render(&plot(&outside, &[2, 3]));
        assert!(svg.contains("not covered (violated steps: 2, 3)"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn band_only_has_region_and_two_edges() {
        let plot = Plot {
            lower: &[0.0, 1.0],
            upper: &[2.0, 3.0],
            paths: vec![],
            total_paths: 0,
            reference: None,
            title: String::new(),
            width: 400,
            height: 300,
        };
        let svg = render(&plot);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("time step t"));
    }
}
