//! Plot data (`.dat` two-column series) and a small static SVG.

use std::fmt::Write;

use pulse_period::montecarlo::MseCurve;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per method plus the two bound overlays.
pub fn curve_series(curve: &MseCurve) -> Vec<Series> {
    let mut out: Vec<Series> = curve
        .methods
        .iter()
        .map(|m| Series {
            name: m.to_string(),
            points: curve.series(*m),
        })
        .collect();
    let bound = |name: &str, v: &[f64]| Series {
        name: name.into(),
        points: curve.snr_db.iter().copied().zip(v.iter().copied()).collect(),
    };
    out.push(bound("crlb_model1", &curve.crlb_model1));
    out.push(bound("crlb_mhus", &curve.crlb_mhus));
    out
}

pub fn dat(series: &Series) -> String {
    let mut s = format!("# snr_db {}\n", series.name);
    for (x, y) in &series.points {
        let _ = writeln!(s, "{x} {y}");
    }
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#444444", "#888888"];

/// MSE versus SNR with a logarithmic y axis.
pub fn svg(series: &[Series], title: &str) -> String {
    let (w, h, margin) = (720.0, 480.0, 60.0);
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite() && p.1 > 0.0;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().filter(finite).copied())
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let x_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).max(x_lo + 1.0);
    let y_lo = pts.iter().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min).floor();
    let y_hi = pts
        .iter()
        .map(|p| p.1.log10())
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil()
        .max(y_lo + 1.0);
    let px = |x: f64| margin + (x - x_lo) / (x_hi - x_lo) * (w - 2.0 * margin);
    let py = |ly: f64| h - margin - (ly - y_lo) / (y_hi - y_lo) * (h - 2.0 * margin);

    let _ = writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    for decade in (y_lo as i32)..=(y_hi as i32) {
        let y = py(decade as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{margin}" x2="{}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">1e{decade}</text>"##,
            w - margin,
            margin - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_lo} .. {x_hi} dB</text>"#,
        w / 2.0,
        h - margin / 3.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if ser.name.starts_with("crlb") { r#" stroke-dasharray="6 4""# } else { "" };
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(finite)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(y.log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            path.join(" ")
        );
        let ly = margin + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            w - margin - 8.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dat_has_one_line_per_point() {
        let s = Series {
            name: "ppks".into(),
            points: vec![(-30.0, 400.0), (-28.0, 1e-3)],
        };
        assert_eq!(dat(&s), "# snr_db ppks\n-30 400\n-28 0.001\n");
    }

    #[test]
    fn svg_skips_nonpositive_points() {
        let s = Series {
            name: "ppks".into(),
            points: vec![(-30.0, 400.0), (-28.0, 0.0), (-26.0, f64::NAN), (-24.0, 1e-3)],
        };
        let out = svg(&[s], "t");
        assert!(out.starts_with("<svg"));
        assert!(out.trim_end().ends_with("</svg>"));
        let poly = out.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(poly.matches(',').count(), 2);
    }
}
