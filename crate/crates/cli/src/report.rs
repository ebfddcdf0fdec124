//! CSV and SVG emitters.

use std::fmt::Write;

use lich_core::thresholds::fmt_f64;

/// Rows of already formatted cells; LF line endings, no quoting needed.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// `name,value` table.
pub fn name_value_csv(rows: &[(&str, f64)]) -> String {
    let rows: Vec<Vec<String>> = rows.iter().map(|(n, v)| vec![n.to_string(), fmt_f64(*v)]).collect();
    csv(&["name", "value"], &rows)
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub series: Vec<Series<'a>>,
    /// Horizontal reference lines.
    pub h_lines: Vec<(&'a str, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot<'_> {
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 420.0, 60.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| tx(x).is_finite() && y.is_finite())
            .map(|(x, y)| (tx(x), y))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
        );
        let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(out, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>", w / 2.0, escape(self.title));
        if pts.is_empty() {
            out.push_str("</svg>\n");
            return out;
        }
        let ys = pts.iter().map(|p| p.1).chain(self.h_lines.iter().map(|l| l.1));
        let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
        let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
        let _ = writeln!(
            out,
            "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            w - 2.0 * m,
            h - 2.0 * m
        );
        for i in 0..=4 {
            let xv = x0 + (x1 - x0) * i as f64 / 4.0;
            let yv = y0 + (y1 - y0) * i as f64 / 4.0;
            let xl = if self.log_x { format!("1e{xv:.1}") } else { format!("{xv:.3e}") };
            let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{xl}</text>", sx(xv), h - m + 16.0);
            let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{yv:.3e}</text>", m - 4.0, sy(yv) + 4.0);
        }
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(out, "<line x1=\"{m}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>", sy(0.0), w - m);
        }
        for (label, y) in &self.h_lines {
            let _ = writeln!(out, "<line x1=\"{m}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"red\"/>", sy(*y), w - m);
            let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\" fill=\"red\">{}</text>", w - m - 4.0, sy(*y) - 4.0, escape(label));
        }
        for (i, s) in self.series.iter().enumerate() {
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|&&(x, y)| tx(x).is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(tx(x)), sy(y)))
                .collect();
            let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>", s.color, coords.join(" "));
            let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{}\">{}</text>", m + 8.0, m + 16.0 + 14.0 * i as f64, s.color, escape(s.label));
        }
        let x_label = if self.log_x { format!("log10 {}", self.x_label) } else { self.x_label.to_string() };
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>", w / 2.0, h - 16.0, escape(&x_label));
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 {0})\">{1}</text>",
            h / 2.0,
            escape(self.y_label)
        );
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf_and_header() {
        let s = csv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(s, "a,b\n1,2\n");
        assert!(!name_value_csv(&[("x", 0.5)]).contains('\r'));
    }

    #[test]
    fn empty_plot_is_closed() {
        let p = Plot { title: "t & u", x_label: "k", y_label: "mu", log_x: true, series: vec![], h_lines: vec![] };
        let s = p.to_svg();
        assert!(s.ends_with("</svg>\n") && s.contains("t &amp; u"));
    }
}
