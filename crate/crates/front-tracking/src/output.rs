//! Snapshots (JSON), TV series (CSV) and t–x diagrams (SVG).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::riemann::{WaveFamily, WaveKind};
use crate::tracking::{Snapshot, TvSeries};

fn io(e: impl std::fmt::Display) -> Error {
    Error::Domain(format!("output: {e}"))
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), snap).map_err(io)
}

pub fn write_snapshots(path: &Path, snaps: &[Snapshot]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), snaps).map_err(io)
}

pub const TV_HEADER: [&str; 6] = ["t", "tv_w1", "tv_w2", "fronts", "rho_min", "event"];

pub fn write_tv_csv<W: Write>(out: W, series: &TvSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TV_HEADER).map_err(io)?;
    for r in &series.records {
        w.write_record([
            format!("{:e}", r.t),
            format!("{:e}", r.tv_w1),
            format!("{:e}", r.tv_w2),
            r.fronts.to_string(),
            format!("{:e}", r.rho_min),
            r.event.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_tv_file(path: &Path, series: &TvSeries) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io)?;
    write_tv_csv(f, series)
}

/// One straight front segment in the t–x plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub family: WaveFamily,
    pub kind: WaveKind,
    pub t0: f64,
    pub x0: f64,
    pub t1: f64,
    pub x1: f64,
}

/// Front paths between consecutive snapshots, matched by id.
pub fn segments(snaps: &[Snapshot]) -> Vec<Segment> {
    let mut out = Vec::new();
    for w in snaps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for f in &a.fronts {
            let end = b.fronts.iter().find(|g| g.id == f.id && g.kind == f.kind);
            let (t1, x1) = match end {
                Some(g) => (b.t, g.x),
                None => (b.t, f.x + f.speed * (b.t - a.t)),
            };
            let family = if f.family == 1 { WaveFamily::One } else { WaveFamily::Two };
            out.push(Segment { family, kind: f.kind, t0: a.t, x0: f.x, t1, x1 });
        }
    }
    out
}

/// Renders a t–x diagram: shocks solid, rarefactions dashed, compressions
/// dotted; family 1 blue, family 2 red. Time runs upwards.
pub fn svg_diagram(segs: &[Segment], timestamp: Option<&str>) -> String {
    let (w, h, pad) = (800.0, 600.0, 40.0);
    let (mut xmin, mut xmax, mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in segs {
        xmin = xmin.min(s.x0.min(s.x1));
        xmax = xmax.max(s.x0.max(s.x1));
        tmin = tmin.min(s.t0);
        tmax = tmax.max(s.t1);
    }
    if !(xmax > xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if !(tmax > tmin) {
        tmin = tmin.min(0.0);
        tmax = tmin + 1.0;
    }
    let px = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let py = |t: f64| h - pad - (t - tmin) / (tmax - tmin) * (h - 2.0 * pad);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if let Some(ts) = timestamp {
        let _ = writeln!(s, "<!-- generated {ts} -->");
    }
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">x ∈ [{xmin:.4e}, {xmax:.4e}], t ∈ [{tmin:.4e}, {tmax:.4e}]</text>",
        h - 10.0
    );
    for g in segs {
        let colour = match g.family {
            WaveFamily::One => "#1f4fd1",
            WaveFamily::Two => "#c8231b",
        };
        let dash = match g.kind {
            WaveKind::Shock => "",
            WaveKind::Rarefaction => " stroke-dasharray=\"6,3\"",
            WaveKind::Compression => " stroke-dasharray=\"1,3\"",
        };
        let width = if g.kind == WaveKind::Shock { 1.6 } else { 0.6 };
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{colour}\" stroke-width=\"{width}\"{dash}/>",
            px(g.x0),
            py(g.t0),
            px(g.x1),
            py(g.t1)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, snaps: &[Snapshot], timestamp: Option<&str>) -> Result<()> {
    std::fs::write(path, svg_diagram(&segments(snaps), timestamp)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::GasState;
    use crate::tracking::{FrontSnapshot, TvRecord};

    fn snap(t: f64, x: f64) -> Snapshot {
        let st = GasState::new(0.0, 1.0);
        Snapshot {
            t,
            fronts: vec![FrontSnapshot {
                id: 7,
                family: 2,
                kind: WaveKind::Rarefaction,
                x,
                speed: 1.0,
                strength: 0.1,
                left: st,
                right: st,
            }],
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let series = TvSeries {
            records: vec![TvRecord { t: 0.5, tv_w1: 1.0, tv_w2: 2.0, fronts: 3, rho_min: 0.25, event: 4 }],
        };
        let mut buf = Vec::new();
        write_tv_csv(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,tv_w1,tv_w2,fronts,rho_min,event");
        assert_eq!(lines.next().unwrap(), "5e-1,1e0,2e0,3,2.5e-1,4");
    }

    #[test]
    fn snapshot_json_field_names() {
        let v = serde_json::to_value(snap(1.0, 2.0)).unwrap();
        let f = &v["fronts"][0];
        for key in ["id", "family", "kind", "x", "speed", "strength", "left", "right"] {
            assert!(f.get(key).is_some(), "{key}");
        }
        assert_eq!(f["kind"], "rarefaction");
        assert_eq!(f["left"]["rho"], 1.0);
    }

    #[test]
    fn svg_is_reproducible_without_timestamp() {
        let snaps = [snap(0.0, 0.0), snap(1.0, 1.0)];
        let a = svg_diagram(&segments(&snaps), None);
        let b = svg_diagram(&segments(&snaps), None);
        assert_eq!(a, b);
        assert!(a.contains("stroke-dasharray=\"6,3\""));
        assert!(!a.contains("generated"));
        assert!(svg_diagram(&segments(&snaps), Some("now")).contains("<!-- generated now -->"));
    }
}
