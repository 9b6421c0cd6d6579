//! Deterministic SVG plots rendered straight from CSV rows.
//!
//! Every coordinate is formatted with fixed precision and no timestamps or
//! random ids appear anywhere, so regenerating a plot from the same data
//! yields byte-identical output.

use std::fmt::Write;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const FONT: &str = "font-family=\"monospace\" font-size=\"12\"";

/// Accuracy-vs-epoch curves (train gray, test black). The y axis is the
/// full 0..100 percentage range; the x axis spans the observed epochs.
pub fn acc_curve_svg(rows: &[(usize, f64, f64)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (x0, x1, y0, y1) = (60.0, 620.0, 360.0, 20.0);
    let n = rows.len();
    let e_min = rows.first().map_or(1, |r| r.0) as f64;
    let e_max = rows.last().map_or(1, |r| r.0) as f64;
    let span = (e_max - e_min).max(1.0);
    let px = |e: f64| x0 + (e - e_min) / span * (x1 - x0);
    let py = |acc: f64| y0 + acc / 100.0 * (y1 - y0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"{w}\" height=\"{h}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    for grid in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let y = py(grid);
        let _ = writeln!(
            s,
            "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{grid:.0}</text>",
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    for (e, anchor) in [(e_min, "start"), (e_max, "end")] {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"{anchor}\">{e:.0}</text>",
            px(e),
            y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"middle\">epoch</text>",
        (x0 + x1) / 2.0,
        h - 6.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14.00\" y=\"{:.2}\" {FONT} text-anchor=\"middle\" transform=\"rotate(-90 14 {:.0})\">accuracy %</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (color, label, pick) in [
        ("#999999", "train", 1usize),
        ("#000000", "test", 2usize),
    ] {
        let mut pts = String::new();
        for r in rows {
            let acc = if pick == 1 { r.1 } else { r.2 };
            let _ = write!(pts, "{:.2},{:.2} ", px(r.0 as f64), py(acc));
        }
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.trim_end()
        );
        if n == 1 {
            let r = rows[0];
            let acc = if pick == 1 { r.1 } else { r.2 };
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(r.0 as f64),
                py(acc)
            );
        }
        let ly = if pick == 1 { 30.0 } else { 46.0 };
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            x1 - 120.0,
            x1 - 96.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{label}</text>",
            x1 - 90.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bar chart of (label, accuracy-percent) rows in given order.
pub fn bar_chart_svg(title: &str, rows: &[(String, f64)]) -> String {
    let w = 640.0;
    let row_h = 30.0;
    let top = 46.0;
    let h = top + rows.len() as f64 * row_h + 14.0;
    let (bx0, bx1) = (170.0, 560.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h:.0}\" width=\"{w}\" height=\"{h:.0}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h:.0}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"20.00\" y=\"26.00\" {FONT} font-weight=\"bold\">{}</text>", esc(title));
    for (i, (label, acc)) in rows.iter().enumerate() {
        let y = top + i as f64 * row_h;
        let len = (acc.clamp(0.0, 100.0)) / 100.0 * (bx1 - bx0);
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>",
            bx0 - 8.0,
            y + 19.0,
            esc(label)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{bx0}\" y=\"{:.2}\" width=\"{len:.2}\" height=\"{:.2}\" fill=\"#555555\"/>",
            y + 6.0,
            row_h - 12.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{acc:.2}</text>",
            bx0 + len + 8.0,
            y + 19.0
        );
    }
    s.push_str("</svg>\n");
    s
}
