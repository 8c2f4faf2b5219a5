//! Reader and writer for the surface subset of gbXML.

use std::borrow::Cow;
use std::io::Write;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::{BimSurface, SurfaceType};
use crate::error::{Error, Result};
use crate::pose::Vec3;

/// Element path below a `Surface` whose `CartesianPoint`s form its polygon.
/// Points under `RectangularGeometry` or `Opening` are ignored.
const POLYGON_PATH: [&str; 3] = ["PlanarGeometry", "PolyLoop", "CartesianPoint"];

fn line_of(text: &str, byte: usize) -> usize {
    let end = byte.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Metres per unit for the gbXML `lengthUnit` attribute.
fn unit_scale(unit: &str) -> Option<f64> {
    Some(match unit {
        "Meters" => 1.0,
        "Kilometers" => 1000.0,
        "Centimeters" => 0.01,
        "Millimeters" => 0.001,
        "Feet" => 0.3048,
        "Inches" => 0.0254,
        "Yards" => 0.9144,
        "Miles" => 1609.344,
        _ => return None,
    })
}

struct PendingSurface {
    id: String,
    surface_type: SurfaceType,
    polygon: Vec<Vec3>,
    loops_seen: usize,
    start_line: usize,
}

/// Parses every `Surface` with a planar polygon. Surfaces whose polygon has
/// fewer than three points, or is degenerate or non-planar, are skipped with
/// a warning. Coordinates are converted to metres using the root
/// `lengthUnit` attribute (metres when absent).
pub fn parse_surfaces(document: &str) -> Result<Vec<BimSurface>> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);
    let parse_err = |pos: u64, message: String| Error::Parse {
        line: line_of(document, pos as usize),
        message,
    };

    let mut scale = 1.0;
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<PendingSurface> = None;
    let mut point: Vec<f64> = Vec::new();
    let mut out = Vec::new();

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| parse_err(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                match name.as_str() {
                    "gbXML" => {
                        if let Some(unit) = attribute(&e, "lengthUnit")
                            .map_err(|m| parse_err(pos, m))?
                        {
                            scale = unit_scale(&unit).ok_or_else(|| {
                                parse_err(pos, format!("unsupported lengthUnit '{unit}'"))
                            })?;
                        }
                    }
                    "Surface" if current.is_none() => {
                        let id = attribute(&e, "id")
                            .map_err(|m| parse_err(pos, m))?
                            .unwrap_or_default();
                        let kind = attribute(&e, "surfaceType")
                            .map_err(|m| parse_err(pos, m))?
                            .unwrap_or_default();
                        current = Some(PendingSurface {
                            id,
                            surface_type: SurfaceType::from_gbxml(&kind),
                            polygon: Vec::new(),
                            loops_seen: 0,
                            start_line: line_of(document, pos as usize),
                        });
                    }
                    _ => {}
                }
                stack.push(name);
                if let Some(s) = current.as_mut() {
                    match polygon_depth(&stack) {
                        Some(2) => s.loops_seen += 1,
                        Some(3) => point.clear(),
                        _ => {}
                    }
                }
            }
            Event::Text(t) => {
                let in_coordinate = stack.last().is_some_and(|n| n == "Coordinate")
                    && current.as_ref().is_some_and(|s| s.loops_seen == 1)
                    && polygon_depth(&stack[..stack.len() - 1]) == Some(3);
                if in_coordinate {
                    let raw = t.unescape().map_err(|e| parse_err(pos, e.to_string()))?;
                    let v: f64 = raw.trim().parse().map_err(|_| {
                        parse_err(pos, format!("bad coordinate '{}'", raw.trim()))
                    })?;
                    point.push(v * scale);
                }
            }
            Event::End(_) => {
                let at_point = polygon_depth(&stack) == Some(3);
                let name = stack.pop().unwrap_or_default();
                if let Some(s) = current.as_mut() {
                    if at_point && s.loops_seen == 1 {
                        if point.len() != 3 {
                            return Err(parse_err(
                                pos,
                                format!("CartesianPoint has {} coordinates", point.len()),
                            ));
                        }
                        s.polygon.push(Vec3::new(point[0], point[1], point[2]));
                    }
                }
                if name == "Surface" && !stack.iter().any(|n| n == "Surface") {
                    if let Some(s) = current.take() {
                        match BimSurface::new(s.id.clone(), s.surface_type, s.polygon) {
                            Ok(surface) => out.push(surface),
                            Err(e) => log::warn!(
                                "skipping surface '{}' at line {}: {e}",
                                s.id,
                                s.start_line
                            ),
                        }
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(parse_err(document.len() as u64, format!("unclosed element '{open}'")));
    }
    Ok(out)
}

/// Depth within [`POLYGON_PATH`] of the innermost element, counted from the
/// nearest enclosing `Surface` (1 = PlanarGeometry), or `None` when the stack
/// is not on that path.
fn polygon_depth(stack: &[String]) -> Option<usize> {
    let surface = stack.iter().rposition(|n| n == "Surface")?;
    let below = &stack[surface + 1..];
    if below.is_empty() || below.len() > POLYGON_PATH.len() {
        return None;
    }
    below
        .iter()
        .zip(POLYGON_PATH)
        .all(|(a, b)| a == b)
        .then_some(below.len())
}

fn attribute(e: &BytesStart<'_>, key: &str) -> std::result::Result<Option<String>, String> {
    match e.try_get_attribute(key) {
        Ok(Some(a)) => a
            .unescape_value()
            .map(Cow::into_owned)
            .map(Some)
            .map_err(|err| err.to_string()),
        Ok(None) => Ok(None),
        Err(err) => Err(err.to_string()),
    }
}

/// Writes surfaces as a minimal metre-based gbXML document.
pub fn write_surfaces<W: Write>(w: W, surfaces: &[BimSurface]) -> Result<()> {
    let mut wr = Writer::new_with_indent(w, b' ', 2);
    let xml = |e: quick_xml::Error| Error::Format(e.to_string());
    wr.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(xml)?;
    let mut root = BytesStart::new("gbXML");
    root.push_attribute(("xmlns", "http://www.gbxml.org/schema"));
    root.push_attribute(("lengthUnit", "Meters"));
    wr.write_event(Event::Start(root)).map_err(xml)?;
    wr.write_event(Event::Start(BytesStart::new("Campus"))).map_err(xml)?;
    for s in surfaces {
        let mut start = BytesStart::new("Surface");
        start.push_attribute(("id", s.id.as_str()));
        start.push_attribute(("surfaceType", s.surface_type.as_gbxml()));
        wr.write_event(Event::Start(start)).map_err(xml)?;
        wr.write_event(Event::Start(BytesStart::new("PlanarGeometry"))).map_err(xml)?;
        wr.write_event(Event::Start(BytesStart::new("PolyLoop"))).map_err(xml)?;
        for p in &s.polygon {
            wr.write_event(Event::Start(BytesStart::new("CartesianPoint"))).map_err(xml)?;
            for c in [p.x, p.y, p.z] {
                wr.write_event(Event::Start(BytesStart::new("Coordinate"))).map_err(xml)?;
                wr.write_event(Event::Text(BytesText::new(&format!("{c}")))).map_err(xml)?;
                wr.write_event(Event::End(BytesEnd::new("Coordinate"))).map_err(xml)?;
            }
            wr.write_event(Event::End(BytesEnd::new("CartesianPoint"))).map_err(xml)?;
        }
        wr.write_event(Event::End(BytesEnd::new("PolyLoop"))).map_err(xml)?;
        wr.write_event(Event::End(BytesEnd::new("PlanarGeometry"))).map_err(xml)?;
        wr.write_event(Event::End(BytesEnd::new("Surface"))).map_err(xml)?;
    }
    wr.write_event(Event::End(BytesEnd::new("Campus"))).map_err(xml)?;
    wr.write_event(Event::End(BytesEnd::new("gbXML"))).map_err(xml)?;
    Ok(())
}
