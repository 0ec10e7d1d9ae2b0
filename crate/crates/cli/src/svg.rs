//! Single-pane line plot of a score trace.

use std::fmt::Write;

use redlamp::data::label_ranges;

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 30.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Plots `values` as a polyline over `[offset, offset + len)` and shades
/// every labelled range.
pub fn score_plot(title: &str, values: &[f64], offset: usize, labels: Option<&[bool]>) -> String {
    let n = values.len().max(2) as f64;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let lo = if lo.is_finite() { lo } else { 0.0 };
    let x = |i: f64| MARGIN + i / (n - 1.0) * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(labels) = labels {
        for (a, b) in label_ranges(labels) {
            let (x0, x1) = (x(a as f64), x(b as f64));
            let _ = writeln!(
                s,
                r#"<rect class="label" x="{x0:.2}" y="{MARGIN}" width="{:.2}" height="{}" fill="red" fill-opacity="0.2"/>"#,
                (x1 - x0).max(1.0),
                HEIGHT - 2.0 * MARGIN
            );
        }
    }
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i as f64), y(v)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1" points="{}"/>"#,
        points.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">t = {offset}</text>"#,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">t = {}</text>"#,
        WIDTH - MARGIN,
        HEIGHT - 8.0,
        offset + values.len().saturating_sub(1)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed_and_shades_ranges() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut labels = vec![false; 50];
        labels[10..15].fill(true);
        labels[40] = true;
        let svg = score_plot("a <&> \"b\"", &values, 100, Some(&labels));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let shaded = doc.descendants().filter(|n| n.attribute("class") == Some("label")).count();
        assert_eq!(shaded, 2);
        let line = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
        assert_eq!(line.attribute("points").unwrap().split(' ').count(), 50);
    }

    #[test]
    fn degenerate_traces_still_plot() {
        for values in [vec![], vec![0.5], vec![1.0; 4]] {
            let svg = score_plot("flat", &values, 0, None);
            roxmltree::Document::parse(&svg).unwrap();
            assert!(!svg.contains("NaN"));
        }
    }
}
