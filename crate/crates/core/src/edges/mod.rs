//! Grayscale images and 2D line segment detection.

mod detector;
mod image;
mod segment;

pub use detector::{detect_segments, DetectorConfig, RegionGrowingDetector, SegmentDetector};
pub use image::GrayImage;
pub use segment::{read_segments_csv, write_segments_csv, Segment2D};
