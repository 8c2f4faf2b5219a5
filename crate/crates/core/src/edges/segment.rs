use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pose::{fold_orientation, Vec2};

/// An image line segment (pixel coordinates, pixel centers at integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2D {
    pub end_a: Vec2,
    pub end_b: Vec2,
    /// Radians in `[0, π)`.
    pub orientation: f64,
}

impl Segment2D {
    pub fn new(end_a: Vec2, end_b: Vec2) -> Self {
        Self {
            end_a,
            end_b,
            orientation: fold_orientation(end_b - end_a),
        }
    }

    pub fn length(&self) -> f64 {
        (self.end_b - self.end_a).norm()
    }

    pub fn center(&self) -> Vec2 {
        0.5 * (self.end_a + self.end_b)
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

/// Writes segments as CSV with header `x1,y1,x2,y2`.
pub fn write_segments_csv<W: Write>(w: W, segments: &[Segment2D]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in segments {
        wr.serialize(Row {
            x1: s.end_a.x,
            y1: s.end_a.y,
            x2: s.end_b.x,
            y2: s.end_b.y,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_segments_csv<R: Read>(r: R) -> Result<Vec<Segment2D>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: Row = row?;
        out.push(Segment2D::new(
            Vec2::new(row.x1, row.y1),
            Vec2::new(row.x2, row.y2),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip(coords in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 0..20)) {
            let segs: Vec<Segment2D> = coords
                .iter()
                .map(|&(a, b, c, d)| Segment2D::new(Vec2::new(a, b), Vec2::new(c, d)))
                .collect();
            let mut buf = Vec::new();
            write_segments_csv(&mut buf, &segs).unwrap();
            let back = read_segments_csv(&buf[..]).unwrap();
            prop_assert_eq!(back, segs);
        }
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &[Segment2D::new(Vec2::new(1.0, 2.0), Vec2::new(3.5, 4.0))])
            .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,y1,x2,y2\n1.0,2.0,3.5,4.0\n");
    }
}
