//! Grayscale SVG heatmaps of adjacency matrices.

use std::fmt::Write as _;

use lograph::Adjacency;

const CELL: usize = 12;
const MARGIN: usize = 24;

/// Renders `w` with white for zero and black for the largest weight.
/// `scale` overrides the weight mapped to black, so paired plots can share it.
pub fn heatmap(w: &Adjacency, title: &str, scale: Option<f64>) -> String {
    let p = w.nodes();
    let max = scale.unwrap_or_else(|| w.weights().iter().fold(0.0f64, |m, &v| m.max(v)));
    let side = p * CELL + 2 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}">"#
    );
    let _ = writeln!(out, r#"<rect width="{side}" height="{side}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
        MARGIN - 8,
        escape(title)
    );
    for i in 0..p {
        for j in 0..p {
            let v = w.weight(i, j);
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let g = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({g},{g},{g})"/>"#,
                MARGIN + j * CELL,
                MARGIN + i * CELL
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{0}" height="{0}" fill="none" stroke="black" stroke-width="1"/>"#,
        p * CELL
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
