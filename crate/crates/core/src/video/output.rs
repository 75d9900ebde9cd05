use std::fs;
use std::path::{Path, PathBuf};

use image::{imageops, RgbImage};

use super::manifest::{RunManifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::fmm::MergedFrameSet;

pub const CONTACT_SHEET_FILE: &str = "contact_sheet.png";

pub fn key_file_name(rank: usize, key_index: usize) -> String {
    format!("key_{rank:03}_{key_index:05}.png")
}

/// Tile images left-to-right, top-to-bottom on a near-square grid.
pub fn contact_sheet(images: &[&RgbImage]) -> Option<RgbImage> {
    let first = images.first()?;
    let (w, h) = first.dimensions();
    let cols = (images.len() as f64).sqrt().ceil() as u32;
    let rows = (images.len() as u32).div_ceil(cols);
    let mut sheet = RgbImage::new(cols * w, rows * h);
    for (i, img) in images.iter().enumerate() {
        let (c, r) = (i as u32 % cols, i as u32 / cols);
        imageops::replace(&mut sheet, *img, i64::from(c * w), i64::from(r * h));
    }
    Some(sheet)
}

/// Write merged frames, `manifest.json` and optionally a contact sheet into
/// `out_dir`, replacing whatever was there.
///
/// Files are staged in a sibling temporary directory and moved into place in
/// one rename, so a failed run leaves no partial output behind.
pub fn write_outputs(
    merged: &MergedFrameSet,
    manifest: &RunManifest,
    out_dir: &Path,
    with_contact_sheet: bool,
) -> Result<Vec<PathBuf>> {
    manifest.validate()?;
    if manifest.outputs.len() != merged.len() {
        return Err(Error::Config(format!(
            "manifest lists {} outputs but {} frames were merged",
            manifest.outputs.len(),
            merged.len()
        )));
    }

    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".tifre-staging-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;

    let mut names = Vec::with_capacity(merged.len() + 2);
    for (frame, record) in merged.frames.iter().zip(&manifest.outputs) {
        if frame.provenance.key_index != record.key_index {
            return Err(Error::Config(format!(
                "output {} is for key frame {} but merged frame is {}",
                record.rank, record.key_index, frame.provenance.key_index
            )));
        }
        let path = staging.path().join(&record.file);
        frame
            .image
            .save(&path)
            .map_err(|source| Error::Image { path, source })?;
        names.push(record.file.clone());
    }

    if with_contact_sheet {
        let images: Vec<&RgbImage> = merged.frames.iter().map(|f| &f.image).collect();
        if let Some(sheet) = contact_sheet(&images) {
            let path = staging.path().join(CONTACT_SHEET_FILE);
            sheet.save(&path).map_err(|source| Error::Image { path, source })?;
            names.push(CONTACT_SHEET_FILE.to_owned());
        }
    }

    let manifest_path = staging.path().join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest.to_json()).map_err(|e| Error::io(&manifest_path, e))?;
    names.push(MANIFEST_FILE.to_owned());

    replace_dir(staging, out_dir)?;
    Ok(names.into_iter().map(|n| out_dir.join(n)).collect())
}

fn replace_dir(staging: tempfile::TempDir, out_dir: &Path) -> Result<()> {
    let staged = staging.keep();
    let result = (|| {
        if out_dir.exists() {
            let parent = staged.parent().expect("staging has a parent");
            let old = tempfile::Builder::new()
                .prefix(".tifre-old-")
                .tempdir_in(parent)
                .map_err(|e| Error::io(parent, e))?
                .keep();
            // rename needs a non-existent (or empty) target
            fs::remove_dir(&old).map_err(|e| Error::io(&old, e))?;
            fs::rename(out_dir, &old).map_err(|e| Error::io(out_dir, e))?;
            fs::rename(&staged, out_dir).map_err(|e| Error::io(out_dir, e))?;
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))
        } else {
            fs::rename(&staged, out_dir).map_err(|e| Error::io(out_dir, e))
        }
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staged);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmm::{MergeMode, MergedFrame, Provenance};
    use crate::video::manifest::{OutputRecord, StrategyKind, SCHEMA_VERSION};
    use crate::embedding::{BackendDescriptor, BackendKind};
    use image::Rgb;
    use std::collections::BTreeMap;

    fn run(m: usize) -> (MergedFrameSet, RunManifest) {
        let frames = (0..m)
            .map(|k| MergedFrame {
                image: RgbImage::from_fn(6, 4, |x, y| Rgb([(k * 40) as u8, x as u8 * 10, y as u8 * 10])),
                provenance: Provenance {
                    key_index: k,
                    contributors: vec![],
                    mode: MergeMode::Normalized,
                },
            })
            .collect();
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            question: None,
            prompts: None,
            prompt_note: None,
            llm: None,
            backend: BackendDescriptor::new(BackendKind::Mock, 8, "mock:seed=0").unwrap(),
            coarse_fps: 1.0,
            working_res: [6, 4],
            n_frames: m,
            strategy: StrategyKind::FixedFps,
            k: m,
            threshold: None,
            saliency: vec![0.0; m],
            key_indices: (0..m).collect(),
            assignments: vec![],
            merge_mode: MergeMode::Normalized,
            outputs: (0..m)
                .map(|k| OutputRecord {
                    file: key_file_name(k, k),
                    rank: k,
                    key_index: k,
                    contributors: vec![],
                })
                .collect(),
            tool_versions: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        };
        (MergedFrameSet { frames }, manifest)
    }

    fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect()
    }

    #[test]
    fn writes_pngs_and_manifest_deterministically() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("nested/out");
        let (merged, manifest) = run(3);
        let files = write_outputs(&merged, &manifest, &out, false).unwrap();
        assert_eq!(files.len(), 4);
        let first = snapshot(&out);
        assert!(first.contains_key("key_000_00000.png") && first.contains_key(MANIFEST_FILE));

        fs::write(out.join("stale.txt"), "x").unwrap();
        write_outputs(&merged, &manifest, &out, false).unwrap();
        assert_eq!(snapshot(&out), first);

        let back = RunManifest::load(&out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, manifest);
        let img = image::open(out.join("key_002_00002.png")).unwrap().to_rgb8();
        assert_eq!(img, merged.frames[2].image);

        // no staging leftovers
        let leftovers: Vec<_> = fs::read_dir(out.parent().unwrap())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".tifre"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn contact_sheet_layout() {
        let (merged, manifest) = run(5);
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("o");
        let files = write_outputs(&merged, &manifest, &out, true).unwrap();
        assert!(files.iter().any(|f| f.ends_with(CONTACT_SHEET_FILE)));
        let sheet = image::open(out.join(CONTACT_SHEET_FILE)).unwrap().to_rgb8();
        assert_eq!(sheet.dimensions(), (3 * 6, 2 * 4));
        assert_eq!(sheet.get_pixel(6, 0), merged.frames[1].image.get_pixel(0, 0));
    }

    #[test]
    fn unwritable_parent_is_error() {
        let root = tempfile::tempdir().unwrap();
        let blocker = root.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let (merged, manifest) = run(1);
        let err = write_outputs(&merged, &manifest, &blocker.join("out"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
