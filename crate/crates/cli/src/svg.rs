//! Self-contained SVG figures. Numbers are printed with fixed precision so
//! identical inputs give identical files.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn over(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return Axis {
                lo: lo - pad,
                hi: hi + pad,
            };
        }
        Axis { lo, hi }
    }

    fn fixed(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

struct Canvas {
    out: String,
    x: Axis,
    y: Axis,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, x: Axis, y: Axis) -> Canvas {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + (W - LEFT - RIGHT) / 2.0,
            H - 12.0,
            esc(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + (H - TOP - BOTTOM) / 2.0,
            TOP + (H - TOP - BOTTOM) / 2.0,
            esc(y_label)
        );
        let mut c = Canvas { out, x, y };
        c.frame();
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + self.x.frac(v) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - self.y.frac(v) * (H - TOP - BOTTOM)
    }

    fn frame(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            self.out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            x1 - x0,
            y1 - y0
        );
        for t in self.x.ticks(5) {
            let px = self.px(t);
            let _ = writeln!(
                self.out,
                r##"<line x1="{px:.1}" y1="{y1:.1}" x2="{px:.1}" y2="{:.1}" stroke="#444"/>"##,
                y1 + 4.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y1 + 17.0,
                tick(t)
            );
        }
        for t in self.y.ticks(5) {
            let py = self.py(t);
            let _ = writeln!(
                self.out,
                r##"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="#444"/>"##,
                x0 - 4.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                py + 4.0,
                tick(t)
            );
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.1}" fill="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = W - RIGHT - 150.0;
            let _ = writeln!(
                self.out,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#,
                x + 18.0,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                x + 24.0,
                y + 4.0,
                esc(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Line chart of named series. With `log_y`, values are plotted as
/// log10 and non-positive points are dropped.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
    log_y: bool,
) -> String {
    let series: Vec<(&str, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(n, pts)| {
            let pts = if log_y {
                pts.iter()
                    .filter(|p| p.1 > 0.0)
                    .map(|&(x, y)| (x, y.log10()))
                    .collect()
            } else {
                pts.clone()
            };
            (*n, pts)
        })
        .collect();
    let x = Axis::over(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let y = Axis::over(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let y_label = if log_y {
        format!("log10 {y_label}")
    } else {
        y_label.to_string()
    };
    let mut c = Canvas::new(title, x_label, &y_label, x, y);
    for (i, (_, pts)) in series.iter().enumerate() {
        c.polyline(pts, PALETTE[i % PALETTE.len()], false);
    }
    if series.len() > 1 {
        c.legend(&series.iter().map(|s| s.0).collect::<Vec<_>>());
    }
    c.finish()
}

/// Abundance histogram with the error valley marked.
pub fn spectrum_chart(k: usize, histogram: &[(u64, u64)], valley: u64) -> String {
    let pts: Vec<(f64, f64)> = histogram
        .iter()
        .map(|&(a, n)| (a as f64, (n as f64).log10()))
        .collect();
    let mut c = Canvas::new(
        &format!("{k}-mer spectrum"),
        "abundance",
        "log10 distinct k-mers",
        Axis::over(pts.iter().map(|p| p.0)),
        Axis::over(pts.iter().map(|p| p.1)),
    );
    c.polyline(&pts, PALETTE[0], false);
    if let Some(&(_, n)) = histogram.iter().find(|(a, _)| *a == valley) {
        c.dot(valley as f64, (n as f64).log10(), 4.0, PALETTE[1]);
    }
    c.finish()
}

pub fn roc_chart(points: &[(f64, f64)], auc: f64) -> String {
    let mut c = Canvas::new(
        &format!("ROC (AUC = {auc:.4})"),
        "false positive rate",
        "true positive rate",
        Axis::fixed(0.0, 1.0),
        Axis::fixed(0.0, 1.0),
    );
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    c.polyline(points, PALETTE[0], false);
    c.finish()
}

/// 2x2 confusion matrix, true class on rows.
pub fn confusion_chart(tn: u64, fp: u64, fn_: u64, tp: u64) -> String {
    let cells = [[tn, fp], [fn_, tp]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = String::new();
    let (size, x0, y0) = (140.0, 170.0, 70.0);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="520" height="420" viewBox="0 0 520 420" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(out, r#"<rect width="520" height="420" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="260" y="30" text-anchor="middle" font-size="15">Confusion matrix</text>"#
    );
    for (r, row) in cells.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let shade = 255.0 - 200.0 * (v as f64 / max);
            let (x, y) = (x0 + c as f64 * size, y0 + r as f64 * size);
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{size:.1}" height="{size:.1}" fill="rgb({0:.0},{0:.0},255)" stroke="#333"/>"##,
                shade
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="20">{v}</text>"#,
                x + size / 2.0,
                y + size / 2.0 + 7.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">true {r}</text>"#,
            x0 - 10.0,
            y0 + r as f64 * size + size / 2.0 + 5.0
        );
    }
    for c in 0..2 {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">predicted {c}</text>"#,
            x0 + c as f64 * size + size / 2.0,
            y0 + 2.0 * size + 22.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Per-feature SHAP dots, one row per feature, coloured by the feature's
/// value scaled to [0, 1] within that feature. Vertical jitter is a fixed
/// function of the instance index.
pub fn beeswarm_chart(rows: &[(String, Vec<(f64, f64)>)]) -> String {
    let n = rows.len().max(1);
    let height = 70.0 + 26.0 * n as f64 + 50.0;
    let left = 190.0;
    let width = 700.0;
    let x = Axis::over(
        rows.iter()
            .flat_map(|r| r.1.iter().map(|p| p.0))
            .chain([0.0]),
    );
    let px = |v: f64| left + x.frac(v) * (width - left - 30.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height:.0}" viewBox="0 0 {width} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width}" height="{height:.0}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">SHAP summary</text>"#,
        width / 2.0
    );
    let zero = px(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{zero:.1}" y1="45" x2="{zero:.1}" y2="{:.1}" stroke="#999"/>"##,
        height - 45.0
    );
    for (i, (name, pts)) in rows.iter().enumerate() {
        let cy = 60.0 + 26.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 8.0,
            cy + 4.0,
            esc(name)
        );
        for (j, &(phi, value)) in pts.iter().enumerate() {
            let jitter = ((j as u64).wrapping_mul(2654435761) % 1000) as f64 / 1000.0 - 0.5;
            let red = (255.0 * value.clamp(0.0, 1.0)).round();
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="rgb({red:.0},60,{:.0})" fill-opacity="0.7"/>"#,
                px(phi),
                cy + jitter * 16.0,
                255.0 - red
            );
        }
    }
    let base = height - 30.0;
    for t in x.ticks(4) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{base:.1}" text-anchor="middle">{}</text>"#,
            px(t),
            tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SHAP value (blue low, red high feature value)</text>"#,
        left + (width - left) / 2.0,
        height - 10.0
    );
    out.push_str("</svg>\n");
    out
}

/// Histogram of integer values in `bins` equal-width bins.
pub fn histogram_chart(title: &str, x_label: &str, values: &[usize], bins: usize) -> String {
    let (lo, hi) = match (values.iter().min(), values.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo as f64, hi as f64),
        _ => (0.0, 1.0),
    };
    let bins = bins.max(1);
    let width = ((hi - lo) / bins as f64).max(1e-9);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v as f64 - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut c = Canvas::new(
        title,
        x_label,
        "count",
        Axis::fixed(lo, lo + width * bins as f64),
        Axis::fixed(0.0, top),
    );
    for (b, &n) in counts.iter().enumerate() {
        let x0 = c.px(lo + width * b as f64);
        let x1 = c.px(lo + width * (b + 1) as f64);
        let y = c.py(n as f64);
        let _ = writeln!(
            c.out,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white"/>"##,
            (x1 - x0).max(0.0),
            (H - BOTTOM - y).max(0.0),
            PALETTE[0]
        );
    }
    c.finish()
}
