use std::fmt::Write as _;

use avflow_core::Tensor;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

/// Overlaid scatter of 2-D point sets, each `(label, colour, [N, 2])`.
pub fn scatter(title: &str, sets: &[(&str, &str, &Tensor)]) -> String {
    let extent = sets
        .iter()
        .flat_map(|(_, _, t)| t.data().iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max)
        * 1.05;
    let scale = (SIZE - 2.0 * MARGIN) / (2.0 * extent);
    let px = |v: f64| MARGIN + (v + extent) * scale;
    let py = |v: f64| MARGIN + (extent - v) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="0 0 {SIZE} {h}">"#,
        h = SIZE + 30.0
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mid = px(0.0);
    let _ = writeln!(
        s,
        r##"<path d="M{MARGIN} {mid:.2}H{e:.2}M{mid:.2} {MARGIN}V{e:.2}" stroke="#ccc"/>"##,
        e = SIZE - MARGIN
    );
    for (label, colour, points) in sets {
        let _ = writeln!(s, r#"<g fill="{colour}" fill-opacity="0.6"><title>{}</title>"#, escape(label));
        for i in 0..points.rows() {
            let p = points.row_slice(i);
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, px(p[0]), py(p[1]));
        }
        s.push_str("</g>\n");
    }
    for (k, (label, colour, _)) in sets.iter().enumerate() {
        let x = MARGIN + 150.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{colour}"/><text x="{:.2}" y="{:.2}" font-size="13" font-family="sans-serif">{}</text>"#,
            x,
            SIZE + 12.0,
            x + 10.0,
            SIZE + 17.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Side-by-side heatmaps of equally sized `rows × cols` grids on one colour scale.
pub fn heatmaps(title: &str, rows: usize, cols: usize, panels: &[(&str, &[f64])]) -> String {
    let cell = 12.0;
    let gap = 24.0;
    let top = 36.0;
    let panel_w = cols as f64 * cell;
    let width = MARGIN * 2.0 + panels.len() as f64 * panel_w + (panels.len().saturating_sub(1)) as f64 * gap;
    let height = top + rows as f64 * cell + MARGIN;
    let peak = panels
        .iter()
        .flat_map(|(_, v)| v.iter().map(|x| x.abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, (label, values)) in panels.iter().enumerate() {
        let x0 = MARGIN + k as f64 * (panel_w + gap);
        let _ = writeln!(
            s,
            r#"<text x="{x0:.2}" y="{:.2}" font-size="13" font-family="sans-serif">{}</text>"#,
            top - 10.0,
            escape(label)
        );
        for r in 0..rows {
            for c in 0..cols {
                let v = values[r * cols + c].abs() / peak;
                let level = (255.0 * (1.0 - v.min(1.0))).round() as u8;
                let y = top + (rows - 1 - r) as f64 * cell;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="rgb({level},{level},{level})"/>"#,
                    x0 + c as f64 * cell
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
