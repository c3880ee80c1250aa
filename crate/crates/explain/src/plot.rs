use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use delirium_core::report::TextReport;

use crate::{AttributionReport, ExplainError, SectionAttribution};

const RED: (u8, u8, u8) = (214, 39, 40);
const BLUE: (u8, u8, u8) = (31, 119, 180);

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone HTML with each section shaded by its phi: red for positive,
/// blue for negative, opacity |phi| / max |phi|. Truncated sections and an
/// all-zero attribution render without shading.
pub fn export_text_plot(report: &TextReport, attribution: &SectionAttribution) -> String {
    let phi: HashMap<&str, f64> = attribution
        .per_section
        .iter()
        .map(|(l, p)| (l.as_str(), *p))
        .collect();
    let max = attribution
        .per_section
        .iter()
        .fold(0.0f64, |m, (_, p)| m.max(p.abs()));
    let mut html = String::new();
    let _ = writeln!(html, "<!DOCTYPE html>");
    let _ = writeln!(
        html,
        "<html><head><meta charset=\"utf-8\"><title>{}</title></head>",
        escape(&attribution.stay_id)
    );
    let _ = writeln!(
        html,
        "<body style=\"font-family: monospace; line-height: 1.8\">"
    );
    let _ = writeln!(
        html,
        "<p>stay {} | base {:.6} | output {:.6} | {}</p>",
        escape(&attribution.stay_id),
        attribution.base_value,
        attribution.full_value,
        attribution.mode.as_str()
    );
    let _ = write!(html, "<p>[CLS]");
    for (i, sec) in report.sections.iter().enumerate() {
        if i > 0 {
            let _ = write!(html, " [SEP]");
        }
        let p = phi.get(sec.label.as_str()).copied().unwrap_or(0.0);
        let alpha = if max > 0.0 { p.abs() / max } else { 0.0 };
        let (r, g, b) = if p >= 0.0 { RED } else { BLUE };
        let _ = write!(
            html,
            " <span title=\"{}: phi={}\" style=\"background-color: rgba({r}, {g}, {b}, {alpha:.4})\">{}</span>",
            escape(&sec.label),
            p,
            escape(&sec.body)
        );
    }
    let _ = writeln!(html, "</p>\n</body></html>");
    html
}

/// Per-sample `(section, phi)` table.
pub fn write_phi_csv<W: Write>(
    out: W,
    attribution: &SectionAttribution,
) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["section", "phi"])?;
    for (label, phi) in &attribution.per_section {
        w.write_record([label.as_str(), &phi.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_phi_csv<R: Read>(input: R) -> Result<Vec<(String, f64)>, ExplainError> {
    let mut r = csv::Reader::from_reader(input);
    r.records()
        .map(|rec| {
            let rec = rec?;
            let phi = rec[1]
                .parse()
                .map_err(|_| ExplainError::Parse(format!("bad phi `{}`", &rec[1])))?;
            Ok((rec[0].to_owned(), phi))
        })
        .collect()
}

/// Horizontal bar chart of mean |phi| in rank order.
pub fn importance_svg(report: &AttributionReport) -> String {
    let (label_w, bar_w, row_h, pad) = (260.0, 360.0, 18.0, 10.0);
    let max = report
        .features
        .iter()
        .fold(0.0f64, |m, f| m.max(f.mean_abs_phi));
    let height = pad * 2.0 + row_h * report.features.len().max(1) as f64;
    let width = label_w + bar_w + 90.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    for (i, f) in report.features.iter().enumerate() {
        let y = pad + row_h * i as f64;
        let w = if max > 0.0 {
            bar_w * f.mean_abs_phi / max
        } else {
            0.0
        };
        let (r, g, b) = RED;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            label_w - 6.0,
            y + row_h * 0.7,
            escape(&f.feature_label)
        );
        let _ = writeln!(
            svg,
            "<rect x=\"{label_w:.1}\" y=\"{:.1}\" width=\"{w:.2}\" height=\"{:.1}\" fill=\"rgb({r},{g},{b})\"/>",
            y + 2.0,
            row_h - 4.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{:.4}</text>",
            label_w + w + 4.0,
            y + row_h * 0.7,
            f.mean_abs_phi
        );
    }
    svg.push_str("</svg>\n");
    svg
}
