//! Fixed-layout SVG histograms over `[0, 1]`.

use std::fmt::Write;

const WIDTH: f64 = 400.0;
const HEIGHT: f64 = 200.0;
const PAD: f64 = 30.0;

pub fn histogram(title: &str, counts: &[usize]) -> String {
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar = (WIDTH - 2.0 * PAD) / counts.len().max(1) as f64;
    let plot_h = HEIGHT - 2.0 * PAD;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="18" font-size="12">{}</text>"#, escape(title)).unwrap();
    for (i, &c) in counts.iter().enumerate() {
        let h = c as f64 / max * plot_h;
        let x = PAD + i as f64 * bar;
        let y = HEIGHT - PAD - h;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="steelblue" data-bin="{i}" data-count="{c}"/>"#,
            bar - 1.0
        )
        .unwrap();
    }
    let base = HEIGHT - PAD;
    writeln!(s, r#"<line x1="{PAD}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, WIDTH - PAD).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="{}" font-size="10">0</text>"#, base + 14.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" font-size="10">1</text>"#, WIDTH - PAD - 4.0, base + 14.0).unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
