use std::fs;
use std::path::Path;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorLayout {
    #[serde(rename = "NCHW")]
    Nchw,
    #[serde(rename = "NHWC")]
    Nhwc,
}

/// Image preprocessing that ships next to an image-encoder model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreprocessDescriptor {
    pub input_size: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub layout: TensorLayout,
}

impl PreprocessDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("preprocess inputSize must be positive".into()));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("preprocess std must be positive".into()));
        }
        Ok(())
    }

    /// Resize the short side to `input_size`, center-crop a square, scale to
    /// `[0, 1]` and normalize per channel. Returns one image worth of tensor
    /// data in the configured layout.
    pub fn apply(&self, frame: &Frame) -> Vec<f32> {
        let s = self.input_size;
        let (w, h) = frame.dimensions();
        let (rw, rh) = if w <= h {
            (s, ((u64::from(h) * u64::from(s) + u64::from(w) / 2) / u64::from(w)).max(1) as u32)
        } else {
            (((u64::from(w) * u64::from(s) + u64::from(h) / 2) / u64::from(h)).max(1) as u32, s)
        };
        let resized = imageops::resize(&frame.image, rw, rh, FilterType::CatmullRom);
        let (x0, y0) = ((rw - s) / 2, (rh - s) / 2);
        let cropped = imageops::crop_imm(&resized, x0, y0, s, s).to_image();

        let n = (s * s) as usize;
        let mut out = vec![0f32; 3 * n];
        for (i, px) in cropped.pixels().enumerate() {
            for c in 0..3 {
                let v = (f32::from(px.0[c]) / 255.0 - self.mean[c]) / self.std[c];
                match self.layout {
                    TensorLayout::Nchw => out[c * n + i] = v,
                    TensorLayout::Nhwc => out[i * 3 + c] = v,
                }
            }
        }
        out
    }
}
