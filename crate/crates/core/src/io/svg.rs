//! Minimal SVG line charts for daily series: one polyline, axis ticks and
//! dashed vertical markers on Saturdays.

use std::fmt::Write;

use chrono::{Datelike, NaiveDate, Weekday};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            y_label: String::new(),
            width: 720.0,
            height: 360.0,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 40.0); // left, right, top, bottom

/// Renders `points` (sorted by date; duplicates allowed) as an SVG document.
/// Returns `None` when there is nothing finite to draw.
pub fn line_chart(points: &[(NaiveDate, f64)], opts: &PlotOptions) -> Option<String> {
    let pts: Vec<(NaiveDate, f64)> = points.iter().copied().filter(|p| p.1.is_finite()).collect();
    let first = pts.iter().map(|p| p.0).min()?;
    let last = pts.iter().map(|p| p.0).max()?;
    let span = ((last - first).num_days() as f64).max(1.0);
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.1), h.max(p.1)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (opts.width - ml - mr, opts.height - mt - mb);
    let sx = |d: NaiveDate| ml + (d - first).num_days() as f64 / span * pw;
    let sy = |v: f64| mt + (hi - v) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&opts.title));
    let _ = writeln!(s, r#"<g class="saturdays" stroke="grey" stroke-dasharray="4 3">"#);
    let mut d = first;
    while d <= last {
        if d.weekday() == Weekday::Sat {
            let x = sx(d);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{mt:.2}" x2="{x:.2}" y2="{:.2}"/>"#, mt + ph);
        }
        d = d.succ_opt()?;
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="axes" stroke="black">"#);
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{y:.2}" x2="{x:.2}" y2="{y:.2}"/>"#, y = mt + ph, x = ml + pw);
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.2}"/>"#, mt + ph);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" font-size="10" font-family="sans-serif">"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 4.0,
            ml - 6.0,
            y + 3.0,
            fmt_tick(v)
        );
    }
    let mid = first + chrono::Duration::days((last - first).num_days() / 2);
    let mut dates = vec![first, mid, last];
    dates.dedup();
    for d in dates {
        let x = sx(d);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="black"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{d}</text>"#,
            y0 = mt + ph,
            y1 = mt + ph + 4.0,
            ty = mt + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="12" y="{:.2}" transform="rotate(-90 12 {:.2})" text-anchor="middle">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&opts.y_label)
    );
    let _ = writeln!(s, "</g>");
    let coords: Vec<String> = pts.iter().map(|&(d, v)| format!("{:.2},{:.2}", sx(d), sy(v))).collect();
    let _ = writeln!(
        s,
        r#"<polyline class="series" fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
    let _ = writeln!(s, "</svg>");
    Some(s)
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_with_saturday_markers() {
        let d0 = NaiveDate::from_ymd_opt(2019, 6, 1).unwrap(); // a Saturday
        let pts: Vec<(NaiveDate, f64)> = (0..30).map(|i| (d0 + chrono::Duration::days(i), (i % 7) as f64 * 10.0)).collect();
        let svg = line_chart(&pts, &PlotOptions { title: "faces & <more>".into(), ..Default::default() }).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
        let group = |class: &str| root.children().find(|n| n.attribute("class") == Some(class)).unwrap();
        let sats = group("saturdays");
        assert_eq!(sats.attribute("stroke-dasharray"), Some("4 3"));
        assert_eq!(sats.children().filter(|n| n.has_tag_name("line")).count(), 5);
        let poly = root.children().find(|n| n.has_tag_name("polyline")).unwrap();
        assert_eq!(poly.attribute("points").unwrap().split(' ').count(), 30);
        assert!(line_chart(&[], &PlotOptions::default()).is_none());
    }
}
