use std::ffi::OsStr;
use std::fs;
use std::io::{ErrorKind, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::imageops::{self, FilterType};
use image::RgbImage;

use super::Frame;
use crate::error::{Error, Result};

pub const DEFAULT_DECODER: &str = "ffmpeg";
pub const DEFAULT_WORKING_RES: (u32, u32) = (224, 224);

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];
const INSTALL_HINT: &str = "install ffmpeg (e.g. `apt install ffmpeg` or `brew install ffmpeg`) or pass --decoder PATH";

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub fps: f64,
    /// (width, height)
    pub working_res: (u32, u32),
    /// Decoder executable used for video files.
    pub decoder: PathBuf,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            fps: 1.0,
            working_res: DEFAULT_WORKING_RES,
            decoder: PathBuf::from(DEFAULT_DECODER),
        }
    }
}

impl ExtractOptions {
    fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.working_res.0 == 0 || self.working_res.1 == 0 {
            return Err(Error::Config("working resolution must be non-zero".into()));
        }
        Ok(())
    }
}

/// Parse `WxH`, e.g. `224x224`.
pub fn parse_working_res(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Config(format!("expected WxH, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: u32 = w.trim().parse().map_err(|_| bad())?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Coarse-sample `source` (a video file or a directory of images) into frames
/// at working resolution.
pub fn extract_frames(source: &Path, opts: &ExtractOptions) -> Result<Vec<Frame>> {
    opts.validate()?;
    let meta = fs::metadata(source).map_err(|e| Error::io(source, e))?;
    let frames = if meta.is_dir() {
        load_frame_dir(source, opts)?
    } else {
        decode_video(source, opts)?
    };
    if frames.is_empty() {
        return Err(Error::EmptyInput("source produced no frames"));
    }
    Ok(frames)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(OsStr::to_str)
        .is_some_and(|ext| IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()))
}

fn to_working_res(img: RgbImage, (w, h): (u32, u32)) -> RgbImage {
    if img.dimensions() == (w, h) {
        img
    } else {
        imageops::resize(&img, w, h, FilterType::Triangle)
    }
}

/// Images in lexicographic filename order, timestamped `index / fps`.
pub fn load_frame_dir(dir: &Path, opts: &ExtractOptions) -> Result<Vec<Frame>> {
    opts.validate()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();

    paths
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let img = image::open(path)
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?
                .to_rgb8();
            let name = path.file_name().and_then(OsStr::to_str).unwrap_or_default();
            Ok(Frame::new(
                i,
                i as f64 / opts.fps,
                to_working_res(img, opts.working_res),
                name,
            ))
        })
        .collect()
}

fn spawn_error(tool: &Path, e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::NotFound {
        Error::ToolNotFound {
            tool: tool.display().to_string(),
            hint: INSTALL_HINT,
        }
    } else {
        Error::io(tool, e)
    }
}

/// First line of `<decoder> -version`.
pub fn decoder_version(decoder: &Path) -> Result<String> {
    let out = Command::new(decoder)
        .arg("-version")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| spawn_error(decoder, e))?;
    let text = String::from_utf8_lossy(&out.stdout);
    Ok(text.lines().next().unwrap_or("unknown").trim().to_owned())
}

/// Argument list passed to the decoder; kept in sync with docs/decoder.md.
fn decoder_args(input: &Path, fps: f64, (w, h): (u32, u32)) -> Vec<String> {
    vec![
        "-nostdin".into(),
        "-v".into(),
        "error".into(),
        "-i".into(),
        input.display().to_string(),
        "-vf".into(),
        format!("fps={fps},scale={w}:{h}:flags=bilinear"),
        "-f".into(),
        "rawvideo".into(),
        "-pix_fmt".into(),
        "rgb24".into(),
        "-".into(),
    ]
}

fn decode_video(input: &Path, opts: &ExtractOptions) -> Result<Vec<Frame>> {
    let (w, h) = opts.working_res;
    let mut child = Command::new(&opts.decoder)
        .args(decoder_args(input, opts.fps, opts.working_res))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| spawn_error(&opts.decoder, e))?;

    let mut raw = Vec::new();
    child
        .stdout
        .take()
        .expect("stdout piped")
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(input, e))?;
    let mut stderr = String::new();
    if let Some(mut s) = child.stderr.take() {
        let _ = s.read_to_string(&mut stderr);
    }
    let status = child.wait().map_err(|e| Error::io(&opts.decoder, e))?;
    if !status.success() {
        return Err(Error::Decoder(format!("{status}: {}", stderr.trim())));
    }

    let frame_len = (w as usize) * (h as usize) * 3;
    if raw.len() % frame_len != 0 {
        return Err(Error::Decoder(format!(
            "decoder output of {} bytes is not a whole number of {w}x{h} frames",
            raw.len()
        )));
    }
    let source = input.file_name().and_then(OsStr::to_str).unwrap_or("video");
    Ok(raw
        .chunks_exact(frame_len)
        .enumerate()
        .map(|(i, chunk)| {
            let img = RgbImage::from_raw(w, h, chunk.to_vec()).expect("exact chunk");
            Frame::new(i, i as f64 / opts.fps, img, format!("{source}#{i}"))
        })
        .collect())
}
