//! Minimal SVG renderings of the ROC and per-day CSV data.

use std::fmt::Write;

use crate::PerDay;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
const SIZE: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="16" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1) = (MARGIN, MARGIN + SIZE, MARGIN + SIZE);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#
    );
    for t in 0..=4 {
        let f = f64::from(t) / 4.0;
        let x = x0 + f * SIZE;
        let y = y0 - f * SIZE;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{f}</text>"#,
            y0 + 14.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{f}</text>"#,
            x0 - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        x0 + SIZE / 2.0,
        y0 + 30.0
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{y_label}</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
}

/// One polyline per model over the unit square.
pub fn roc_svg(curves: &[(&str, &[(f64, f64)])]) -> String {
    let mut out = String::new();
    let side = SIZE + 2.0 * MARGIN;
    header(&mut out, side + 140.0, side, "ROC");
    axes(&mut out, "false positive rate", "true positive rate");
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{MARGIN}" stroke="#999" stroke-dasharray="4 3"/>"##,
        MARGIN + SIZE,
        MARGIN + SIZE
    );
    for (i, (model, points)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", MARGIN + x * SIZE, MARGIN + (1.0 - y) * SIZE))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            side + 4.0,
            escape(model)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bars per day; days without a value are left empty.
pub fn per_day_svg(rows: &[(&str, &[PerDay])]) -> String {
    let mut out = String::new();
    let side = SIZE + 2.0 * MARGIN;
    header(&mut out, side + 140.0, side, "AUROC by day of onset");
    let days = rows
        .iter()
        .flat_map(|(_, d)| d.iter().map(|p| p.day))
        .max()
        .unwrap_or(0);
    axes(&mut out, "day", "AUROC");
    if days > 0 {
        let slot = SIZE / f64::from(days);
        let bar = slot * 0.8 / rows.len().max(1) as f64;
        for (i, (model, per_day)) in rows.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            for p in per_day.iter() {
                let Some(a) = p.auroc else { continue };
                let x = MARGIN + slot * f64::from(p.day - 1) + slot * 0.1 + bar * i as f64;
                let h = a * SIZE;
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}" fill="{color}"/>"#,
                    MARGIN + SIZE - h
                );
            }
            let ly = MARGIN + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
                side + 4.0,
                escape(model)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
