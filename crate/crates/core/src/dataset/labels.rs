//! Annotation label file: `image_id,x1,y1,x2,y2,theta_deg`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{angle_from_endpoints, LineSegment};
use crate::{Error, Result};

pub const LABEL_HEADER: [&str; 6] = ["image_id", "x1", "y1", "x2", "y2", "theta_deg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub image_id: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub theta_deg: f64,
}

impl LabelRecord {
    /// Builds a record whose angle is computed from the endpoints.
    pub fn from_segment(image_id: impl Into<String>, seg: &LineSegment) -> Result<Self> {
        let theta = angle_from_endpoints(seg)?;
        Ok(Self {
            image_id: image_id.into(),
            x1: seg.x1,
            y1: seg.y1,
            x2: seg.x2,
            y2: seg.y2,
            theta_deg: theta.value(),
        })
    }

    pub fn segment(&self) -> LineSegment {
        LineSegment::new(self.x1, self.y1, self.x2, self.y2)
    }
}

pub fn read_labels(reader: impl Read) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(LABEL_HEADER) {
        return Err(Error::Manifest(format!(
            "unexpected label header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Writes records in the given order, LF line endings, header always present.
pub fn write_labels(writer: impl Write, records: &[LabelRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(writer);
    w.write_record(LABEL_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
