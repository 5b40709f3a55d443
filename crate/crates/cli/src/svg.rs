//! Box plots as standalone SVG.

use std::fmt::Write;

use softchain::analytics::BoxStats;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Values are clamped to this floor before taking logs.
const LOG_FLOOR: f64 = 1e-16;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One box per group on a log10 axis: whiskers at min/max, box at the
/// quartiles, the median as a line and the mean as a triangle labelled with
/// its value.
pub fn boxplot(title: &str, y_label: &str, groups: &[(String, BoxStats)]) -> String {
    let lg = |v: f64| v.max(LOG_FLOOR).log10();
    let lo = groups.iter().map(|(_, s)| lg(s.min)).fold(f64::INFINITY, f64::min);
    let hi = groups.iter().map(|(_, s)| lg(s.max)).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if groups.is_empty() {
        (0.0, 1.0)
    } else {
        (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
    };
    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    let y = |v: f64| TOP + plot_h * (hi - lg(v)) / (hi - lo);
    let slot = plot_w / groups.len().max(1) as f64;
    let half = 0.25 * slot;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        esc(y_label)
    );
    for e in (lo as i32)..=(hi as i32) {
        let yy = y(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{yy:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            yy + 4.0
        );
    }
    for (i, (name, st)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let (ymin, yq1, ymed, yq3, ymax, ymean) =
            (y(st.min), y(st.q1), y(st.median), y(st.q3), y(st.max), y(st.mean));
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.2}" x2="{cx:.2}" y1="{ymax:.2}" y2="{yq3:.2}" stroke="black"/><line x1="{cx:.2}" x2="{cx:.2}" y1="{yq1:.2}" y2="{ymin:.2}" stroke="black"/>"##
        );
        for yy in [ymin, ymax] {
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" x2="{:.2}" y1="{yy:.2}" y2="{yy:.2}" stroke="black"/>"##,
                cx - half / 2.0,
                cx + half / 2.0
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{yq3:.2}" width="{:.2}" height="{:.2}" fill="#cfe0f3" stroke="black"/>"##,
            cx - half,
            2.0 * half,
            (yq1 - yq3).max(0.5)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" x2="{:.2}" y1="{ymed:.2}" y2="{ymed:.2}" stroke="#e67e00" stroke-width="2"/>"##,
            cx - half,
            cx + half
        );
        let _ = writeln!(
            s,
            r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#2a9d3a"/>"##,
            cx - 5.0,
            ymean + 4.0,
            cx + 5.0,
            ymean + 4.0,
            cx,
            ymean - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{:.2e}</text>"#,
            (ymax - 8.0).max(TOP - 4.0),
            st.mean
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
