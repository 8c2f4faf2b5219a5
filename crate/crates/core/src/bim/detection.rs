use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pose::Vec3;

/// A localized lamp detection in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub position: Vec3,
    pub camera_position: Vec3,
    pub model_id: u32,
    /// In `(0, 1]`.
    pub score: f64,
    /// Whether the lamp was lit.
    pub state: bool,
    pub frame_index: usize,
}

impl Detection {
    pub fn new(
        position: Vec3,
        camera_position: Vec3,
        model_id: u32,
        score: f64,
        state: bool,
        frame_index: usize,
    ) -> Result<Self> {
        if position == camera_position {
            return Err(invalid("detection coincides with its camera"));
        }
        if !(score > 0.0 && score <= 1.0) {
            return Err(invalid(format!("score {score} outside (0, 1]")));
        }
        Ok(Self {
            position,
            camera_position,
            model_id,
            score,
            state,
            frame_index,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    frame: usize,
    model_id: u32,
    score: f64,
    state: String,
    px: f64,
    py: f64,
    pz: f64,
    cx: f64,
    cy: f64,
    cz: f64,
}

/// Header `frame,model_id,score,state,px,py,pz,cx,cy,cz`; state is `on`/`off`.
pub fn write_detections_csv<W: Write>(w: W, detections: &[Detection]) -> Result<()> {
    // Header written explicitly so an empty table still carries it.
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(["frame", "model_id", "score", "state", "px", "py", "pz", "cx", "cy", "cz"])?;
    for d in detections {
        wr.serialize(Row {
            frame: d.frame_index,
            model_id: d.model_id,
            score: d.score,
            state: if d.state { "on" } else { "off" }.into(),
            px: d.position.x,
            py: d.position.y,
            pz: d.position.z,
            cx: d.camera_position.x,
            cy: d.camera_position.y,
            cz: d.camera_position.z,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_detections_csv<R: Read>(r: R) -> Result<Vec<Detection>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rd.deserialize().enumerate() {
        let row: Row = row?;
        let state = match row.state.as_str() {
            "on" => true,
            "off" => false,
            other => {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("state '{other}' is not on/off"),
                })
            }
        };
        out.push(
            Detection::new(
                Vec3::new(row.px, row.py, row.pz),
                Vec3::new(row.cx, row.cy, row.cz),
                row.model_id,
                row.score,
                state,
                row.frame,
            )
            .map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let d = vec![
            Detection::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 0.0, 1.5), 3, 0.75, true, 4).unwrap(),
            Detection::new(Vec3::new(-1.0, 0.5, 2.9), Vec3::new(0.1, 0.0, 1.5), 1, 1.0, false, 5).unwrap(),
        ];
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,model_id,score,state,px,py,pz,cx,cy,cz\n4,3,0.75,on,"));
        assert_eq!(read_detections_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn empty_table_keeps_header() {
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "frame,model_id,score,state,px,py,pz,cx,cy,cz\n");
        assert!(read_detections_csv(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let bad = "frame,model_id,score,state,px,py,pz,cx,cy,cz\n0,1,0.5,maybe,0,0,1,0,0,0\n";
        assert!(matches!(read_detections_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let same = "frame,model_id,score,state,px,py,pz,cx,cy,cz\n0,1,0.5,on,0,0,0,0,0,0\n";
        assert!(read_detections_csv(same.as_bytes()).is_err());
        assert!(Detection::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 1, 0.0, true, 0).is_err());
    }
}
