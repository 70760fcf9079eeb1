//! Minimal SVG plots: grouped accuracy bars and overlap scatters.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One panel of a grouped bar chart: `values[group][series]` in [0, 1].
pub struct BarPanel {
    pub title: String,
    pub groups: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Stacked panels sharing one legend, with a dashed chance line at 0.5.
pub fn grouped_bars(series: &[String], panels: &[BarPanel]) -> String {
    const PANEL_H: f64 = 260.0;
    const PLOT_H: f64 = 180.0;
    const LEFT: f64 = 60.0;
    const BAR_W: f64 = 14.0;
    const GROUP_GAP: f64 = 20.0;

    let max_groups = panels.iter().map(|p| p.groups.len()).max().unwrap_or(0);
    let group_w = BAR_W * series.len().max(1) as f64 + GROUP_GAP;
    let plot_w = (group_w * max_groups as f64).max(200.0);
    let legend_w = 20.0 + 8.0 * series.iter().map(|s| s.len()).max().unwrap_or(0) as f64 + 30.0;
    let width = LEFT + plot_w + legend_w;
    let height = PANEL_H * panels.len() as f64 + 10.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (p, panel) in panels.iter().enumerate() {
        let top = PANEL_H * p as f64 + 30.0;
        let y = |v: f64| top + PLOT_H * (1.0 - v.clamp(0.0, 1.0));
        let _ = writeln!(out, r#"<text x="{LEFT}" y="{}" font-size="13">{}</text>"#, top - 10.0, escape(&panel.title));
        for tick in 0..=5 {
            let v = tick as f64 / 5.0;
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="#ddd"/><text x="{2}" y="{3}" text-anchor="end">{v:.1}</text>"##,
                y(v),
                LEFT + plot_w,
                LEFT - 5.0,
                y(v) + 4.0
            );
        }
        for (g, name) in panel.groups.iter().enumerate() {
            let x0 = LEFT + group_w * g as f64 + GROUP_GAP / 2.0;
            for (s, &v) in panel.values[g].iter().enumerate() {
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="{BAR_W}" height="{}" fill="{}"><title>{} {}: {v:.3}</title></rect>"#,
                    x0 + BAR_W * s as f64,
                    y(v),
                    PLOT_H * v.clamp(0.0, 1.0),
                    PALETTE[s % PALETTE.len()],
                    escape(name),
                    escape(&series[s])
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x0 + BAR_W * series.len() as f64 / 2.0,
                top + PLOT_H + 15.0,
                escape(name)
            );
        }
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="black" stroke-dasharray="4 3"/><line x1="{LEFT}" y1="{top}" x2="{LEFT}" y2="{2}" stroke="black"/>"#,
            y(0.5),
            LEFT + plot_w,
            y(0.0)
        );
    }
    for (s, name) in series.iter().enumerate() {
        let ly = 30.0 + 16.0 * s as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            ly - 9.0,
            PALETTE[s % PALETTE.len()],
            lx + 15.0,
            ly,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Colour for an overlap membership label.
pub fn membership_colour(m: &str) -> &'static str {
    match m {
        "common" => "#59a14f",
        "only_a" => "#4e79a7",
        "only_b" => "#e15759",
        _ => "#bbbbbb",
    }
}

/// A labelled point in unit coordinates.
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub label: String,
    pub membership: &'static str,
}

/// Square scatter over [x_range] × [y_range] with a membership legend.
pub fn scatter(
    title: &str,
    (x_label, y_label): (&str, &str),
    x_range: (f64, f64),
    y_range: (f64, f64),
    points: &[Point],
) -> String {
    const SIZE: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 40.0;
    let sx = |v: f64| LEFT + SIZE * (v - x_range.0) / (x_range.1 - x_range.0).max(f64::EPSILON);
    let sy = |v: f64| TOP + SIZE * (1.0 - (v - y_range.0) / (y_range.1 - y_range.0).max(f64::EPSILON));
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        LEFT + SIZE + 120.0,
        TOP + SIZE + 50.0
    );
    let _ = writeln!(out, r#"<text x="{LEFT}" y="20" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#,
        LEFT + SIZE / 2.0,
        TOP + SIZE + 35.0,
        escape(x_label),
        TOP + SIZE / 2.0,
        TOP + SIZE / 2.0,
        escape(y_label)
    );
    for (v, anchor) in [(x_range.0, "start"), (x_range.1, "end")] {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="{anchor}">{v}</text>"#, sx(v), TOP + SIZE + 15.0);
    }
    for v in [y_range.0, y_range.1] {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#, LEFT - 5.0, sy(v) + 4.0);
    }
    for p in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"><title>{}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            membership_colour(p.membership),
            escape(&p.label)
        );
    }
    for (i, m) in ["common", "only_a", "only_b"].iter().enumerate() {
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><text x="{}" y="{}">{m}</text>"#,
            LEFT + SIZE + 15.0,
            ly - 4.0,
            membership_colour(m),
            LEFT + SIZE + 25.0,
            ly
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_contain_one_rect_per_value_and_chance_line() {
        let panel = BarPanel {
            title: "word-to-brain".into(),
            groups: vec!["s1".into(), "average".into()],
            values: vec![vec![0.8, 0.6], vec![0.7, 0.5]],
        };
        let svg = grouped_bars(&["a".into(), "b<c".into()], &[panel]);
        assert_eq!(svg.matches("<rect").count(), 4 + 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("b&lt;c"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn scatter_points() {
        let pts = vec![Point { x: 0.5, y: 0.5, label: "p".into(), membership: "common" }];
        let svg = scatter("t", ("x", "y"), (0.0, 1.0), (0.0, 1.0), &pts);
        assert!(svg.contains(r#"cx="260.00" cy="240.00""#));
    }
}
