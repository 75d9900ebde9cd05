//! Frame ingestion and run output.

mod extract;
mod manifest;
mod output;

pub use extract::{
    decoder_version, extract_frames, load_frame_dir, parse_working_res, ExtractOptions, DEFAULT_DECODER,
    DEFAULT_WORKING_RES,
};
pub use manifest::{
    AssignmentRecord, OutputRecord, RunManifest, StrategyKind, MANIFEST_FILE, MANIFEST_SCHEMA,
    SCHEMA_VERSION,
};
pub use output::{contact_sheet, key_file_name, write_outputs, CONTACT_SHEET_FILE};

use image::RgbImage;
use sha2::{Digest, Sha256};

/// One coarse-sampled frame at working resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp_sec: f64,
    pub image: RgbImage,
    pub source_id: String,
}

impl Frame {
    pub fn new(index: usize, timestamp_sec: f64, image: RgbImage, source_id: impl Into<String>) -> Self {
        Self {
            index,
            timestamp_sec,
            image,
            source_id: source_id.into(),
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.image.dimensions()
    }

    /// Dimensions followed by the raw RGB bytes; what content-addressed
    /// backends hash.
    pub fn content_bytes(&self) -> Vec<u8> {
        let (w, h) = self.dimensions();
        let mut out = Vec::with_capacity(8 + self.image.as_raw().len());
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(self.image.as_raw());
        out
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.content_bytes()))
    }
}
