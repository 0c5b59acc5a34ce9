//! Self-contained SVG line chart of averaged ROC curves.

use std::fmt::Write;

use spatial_precision::experiment::RocCurve;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

fn x(fpr: f64) -> f64 {
    MARGIN + fpr * (WIDTH - 2.0 * MARGIN)
}

fn y(tpr: f64) -> f64 {
    HEIGHT - MARGIN - tpr * (HEIGHT - 2.0 * MARGIN)
}

pub fn roc_chart(title: &str, curves: &[RocCurve]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (x(0.0), x(1.0), y(0.0), y(1.0));
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t:.1}</text>"#, x(t), y0 + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t:.1}</text>"#, x0 - 6.0, y(t) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">false positive rate</text>"#, WIDTH / 2.0, HEIGHT - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">true positive rate</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, curve) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).filter(|(f, t)| f.is_finite() && t.is_finite()).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let path: Vec<String> = std::iter::once((0.0, 0.0))
            .chain(pts)
            .chain(std::iter::once((1.0, 1.0)))
            .map(|(f, t)| format!("{:.2},{:.2}", x(f), y(t)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let ly = y1 + 20.0 + 18.0 * i as f64;
        let lx = x(0.55);
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{} (AUC {:.3})</text>"#, lx + 26.0, ly + 4.0, curve.method, curve.auc);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
