use std::fmt::Write as _;
use std::io::Write;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, Event};
use quick_xml::Writer;

use super::{Cluster, ClusterStats, ConfusionMatrix, Reference};
use crate::bim::Detection;
use crate::error::{Error, Result};

/// One row per cluster: center, membership, identification and, when
/// linked, the reference and its distance in centimetres.
pub fn write_clusters_csv<W: Write>(
    w: W,
    clusters: &[Cluster],
    stats: &ClusterStats,
    references: &[Reference],
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "cluster", "cx", "cy", "cz", "members", "model", "state", "model_score", "reference",
        "reference_dist_cm",
    ])?;
    for (k, c) in clusters.iter().enumerate() {
        let link = stats.links.get(k).copied().flatten();
        let (rid, rdist) = match link {
            Some(r) => (
                r.to_string(),
                format!("{:.6}", (c.center - references[r].position).norm() * 100.0),
            ),
            None => (String::new(), String::new()),
        };
        wr.write_record([
            k.to_string(),
            format!("{:.6}", c.center.x),
            format!("{:.6}", c.center.y),
            format!("{:.6}", c.center.z),
            c.members.len().to_string(),
            c.winning_model.to_string(),
            if c.state { "on" } else { "off" }.to_string(),
            format!("{:.6}", c.accumulated_score.get(&c.winning_model).copied().unwrap_or(0.0)),
            rid,
            rdist,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Square table; rows are expected models, columns detected models.
pub fn write_confusion_csv<W: Write>(w: W, confusion: &ConfusionMatrix) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["expected\\detected".to_string()];
    header.extend(confusion.models.iter().map(|m| m.to_string()));
    wr.write_record(&header)?;
    for (m, row) in confusion.models.iter().zip(&confusion.counts) {
        let mut rec = vec![m.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Top view (x right, y up) of detections, cluster centers and references.
pub fn write_svg<W: Write>(
    mut w: W,
    detections: &[Detection],
    clusters: &[Cluster],
    references: &[Reference],
) -> Result<()> {
    const SIZE: f64 = 800.0;
    const MARGIN: f64 = 40.0;
    let xy = detections
        .iter()
        .map(|d| d.position)
        .chain(clusters.iter().map(|c| c.center))
        .chain(references.iter().map(|r| r.position));
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in xy {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if lo[0] > hi[0] {
        (lo, hi) = ([0.0; 2], [1.0; 2]);
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map = |x: f64, y: f64| (MARGIN + (x - lo[0]) * scale, SIZE - MARGIN - (y - lo[1]) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">detections (grey), cluster centers (red), references (blue); 1 m = {scale:.1} px</text>"#
    );
    for d in detections {
        let (x, y) = map(d.position.x, d.position.y);
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="#888" fill-opacity="0.6"/>"##);
    }
    for r in references {
        let (x, y) = map(r.position.x, r.position.y);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##,
            x - 5.0,
            y - 5.0
        );
    }
    for (k, c) in clusters.iter().enumerate() {
        let (x, y) = map(c.center.x, c.center.y);
        let _ = writeln!(
            s,
            r##"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="#c0392b" stroke-width="2"/>"##,
            x - 5.0, y - 5.0, x + 5.0, y + 5.0, x - 5.0, y + 5.0, x + 5.0, y - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{k}:m{}</text>"#,
            x + 7.0,
            y - 7.0,
            c.winning_model
        );
    }
    s.push_str("</svg>\n");
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Lamp list to merge into the building model: one `Lamp` per cluster with
/// its center (metres), model and state.
pub fn write_lamp_fragment<W: Write>(w: W, clusters: &[Cluster], ceiling_id: Option<&str>) -> Result<()> {
    let mut wr = Writer::new_with_indent(w, b' ', 2);
    let xml = |e: quick_xml::Error| Error::Format(e.to_string());
    wr.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(xml)?;
    let mut root = BytesStart::new("LampList");
    root.push_attribute(("lengthUnit", "Meters"));
    if let Some(id) = ceiling_id {
        root.push_attribute(("surfaceIdRef", id));
    }
    wr.write_event(Event::Start(root)).map_err(xml)?;
    for (k, c) in clusters.iter().enumerate() {
        let mut lamp = BytesStart::new("Lamp");
        lamp.push_attribute(("id", format!("lamp-{k}").as_str()));
        lamp.push_attribute(("model", c.winning_model.to_string().as_str()));
        lamp.push_attribute(("state", if c.state { "on" } else { "off" }));
        lamp.push_attribute(("detections", c.members.len().to_string().as_str()));
        wr.write_event(Event::Start(lamp)).map_err(xml)?;
        let mut pos = BytesStart::new("Position");
        for (key, v) in [("x", c.center.x), ("y", c.center.y), ("z", c.center.z)] {
            pos.push_attribute((key, format!("{v:.6}").as_str()));
        }
        wr.write_event(Event::Empty(pos)).map_err(xml)?;
        wr.write_event(Event::End(BytesEnd::new("Lamp"))).map_err(xml)?;
    }
    wr.write_event(Event::End(BytesEnd::new("LampList"))).map_err(xml)?;
    wr.into_inner().write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{cluster, compute_stats};
    use super::*;
    use crate::pose::Vec3;

    fn fixture() -> (Vec<Detection>, Vec<Cluster>, Vec<Reference>) {
        let ds: Vec<Detection> = [[0.0, 0.0], [0.1, 0.0], [3.0, 1.0]]
            .iter()
            .enumerate()
            .map(|(i, p)| Detection::new(Vec3::new(p[0], p[1], 3.0), Vec3::zeros(), 1 + i as u32 / 2, 0.5, true, i).unwrap())
            .collect();
        let cs = cluster(&ds, 0.5).unwrap();
        let refs = vec![Reference { position: Vec3::new(0.05, 0.0, 3.0), model_id: 1, state: true }];
        (ds, cs, refs)
    }

    #[test]
    fn cluster_csv() {
        let (ds, cs, refs) = fixture();
        let stats = compute_stats(&cs, &ds, &refs);
        let mut buf = Vec::new();
        write_clusters_csv(&mut buf, &cs, &stats, &refs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0.050000,0.000000,3.000000,2,1,on,1.000000,0,0.000000");
        assert!(lines[2].ends_with(",1,2,on,0.500000,,"));
    }

    #[test]
    fn lamp_fragment() {
        let (_, cs, _) = fixture();
        let mut buf = Vec::new();
        write_lamp_fragment(&mut buf, &cs, Some("ceil-1")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#"<LampList lengthUnit="Meters" surfaceIdRef="ceil-1">"#));
        assert!(text.contains(r#"<Lamp id="lamp-0" model="1" state="on" detections="2">"#));
        assert!(text.contains(r#"<Position x="0.050000" y="0.000000" z="3.000000"/>"#));
        assert_eq!(text.matches("<Lamp ").count(), 2);
    }

    #[test]
    fn confusion_csv() {
        let m = ConfusionMatrix { models: vec![1, 3], counts: vec![vec![4, 1], vec![0, 2]] };
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "expected\\detected,1,3\n1,4,1\n3,0,2\n");
    }

    #[test]
    fn svg_is_well_formed() {
        let (ds, cs, refs) = fixture();
        let mut buf = Vec::new();
        write_svg(&mut buf, &ds, &cs, &refs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("<circle").count(), 3);
        assert_eq!(text.matches("<path").count(), 2);
        let mut reader = quick_xml::Reader::from_str(&text);
        loop {
            match reader.read_event().unwrap() {
                quick_xml::events::Event::Eof => break,
                _ => {}
            }
        }
        let mut empty = Vec::new();
        write_svg(&mut empty, &[], &[], &[]).unwrap();
        assert!(String::from_utf8(empty).unwrap().ends_with("</svg>\n"));
    }
}
