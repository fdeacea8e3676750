//! Minimal log-log SVG plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 64.0;

/// Log-log plot of `(x, y)` with a dashed reference line of slope
/// `ref_slope` through the geometric centre of the data.
pub fn loglog_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    ref_slope: f64,
) -> String {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = bounds(&pts);
    let (cx, cy) = (
        pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64,
        pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64,
    );
    let reference = [
        (x0, cy + ref_slope * (x0 - cx)),
        (x1, cy + ref_slope * (x1 - cx)),
    ];
    for &(_, y) in &reference {
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // Whole decades on both axes.
    x0 = x0.floor();
    x1 = x1.ceil().max(x0 + 1.0);
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for d in x0 as i32..=x1 as i32 {
        let x = sx(d as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            H - PAD,
            H - PAD + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">1e{d}</text>"#,
            H - PAD + 18.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = sy(d as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
            PAD - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">1e{d}</text>"#,
            PAD - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="red" stroke-dasharray="6 4"/>"#,
        sx(reference[0].0),
        sy(reference[0].1),
        sx(reference[1].0),
        sy(reference[1].1)
    );
    let path: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="blue"/>"#,
        path.join(" ")
    );
    for &(x, y) in &pts {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="blue"/>"#,
            sx(x),
            sy(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" fill="red">slope {ref_slope}</text>"#,
        W - PAD - 70.0,
        PAD + 16.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn bounds(pts: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    pts.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
