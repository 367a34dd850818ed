use std::fmt::Write as _;

use ael_core::tsp::TspInstance;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

/// Nodes as dots, the tour as a closed polyline, the start node in red.
/// Coordinates are scaled to fit; y grows upwards as in the unit square.
pub fn route_svg(
    instance: &TspInstance,
    order: Option<&[usize]>,
    start: usize,
    title: &str,
) -> String {
    let coords = instance.coords();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in coords {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let xy = |p: [f64; 2]| {
        (
            MARGIN + (p[0] - lo[0]) * scale,
            SIZE - MARGIN - (p[1] - lo[1]) * scale,
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(order) = order {
        s.push_str(r##"<polygon fill="none" stroke="#1f77b4" stroke-width="1.5" points=""##);
        for (k, &v) in order.iter().enumerate() {
            let (x, y) = xy(coords[v]);
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s.push_str("\"/>\n");
    }
    for (v, &p) in coords.iter().enumerate() {
        if v == start {
            continue;
        }
        let (x, y) = xy(p);
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#333333"/>"##
        );
    }
    if let Some(&p) = coords.get(start) {
        let (x, y) = xy(p);
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="#d62728"/>"##
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{MARGIN}" y="14" font-family="sans-serif" font-size="12" fill="#333333">{}</text>"##,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_every_node_and_one_closed_tour() {
        let inst = TspInstance::generate(12, 3).unwrap();
        let order: Vec<usize> = (0..12).collect();
        let svg = route_svg(&inst, Some(&order), 0, "tsp12-3 <demo>");
        assert_eq!(svg.matches("<circle").count(), 12);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("#d62728").count(), 1);
        assert!(svg.contains("&lt;demo&gt;"));
        let points = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(points.split(' ').count(), 12);
        for pair in points.split(' ') {
            let (x, y) = pair.split_once(',').unwrap();
            for v in [x, y] {
                let v: f64 = v.parse().unwrap();
                assert!((0.0..=SIZE).contains(&v));
            }
        }
    }

    #[test]
    fn nodes_only_without_a_tour() {
        let inst = TspInstance::generate(5, 1).unwrap();
        let svg = route_svg(&inst, None, 2, "x");
        assert!(!svg.contains("<polygon"));
        assert_eq!(svg.matches("<circle").count(), 5);
    }
}
