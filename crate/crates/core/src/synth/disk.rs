use std::fs;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, McmiError, Result};
use crate::synth::{Latent, ShapeDataset, ShapePairSpec, ShapeRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "mcmi-shapes";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    format_version: u32,
    spec: ShapePairSpec,
    spec_hash: String,
    seed: u64,
    records: Vec<RecordMeta>,
    /// Pairing index of the unpaired Y view.
    y_order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordMeta {
    latent: Latent,
    hue: f64,
}

fn file_name(i: usize) -> String {
    format!("{i:06}.png")
}

fn write_png(path: &Path, chw: &[u8], size: usize) -> Result<()> {
    let plane = size * size;
    let img = RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let p = y as usize * size + x as usize;
        image::Rgb([chw[p], chw[plane + p], chw[2 * plane + p]])
    });
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| McmiError::Codec(format!("{}: {e}", path.display())))
}

fn read_png(path: &Path, size: usize) -> Result<Vec<u8>> {
    let img = image::open(path)
        .map_err(|e| McmiError::Codec(format!("{}: {e}", path.display())))?
        .into_rgb8();
    if img.width() as usize != size || img.height() as usize != size {
        return Err(invalid(format!(
            "{} is {}x{}, manifest says {size}x{size}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let plane = size * size;
    let mut chw = vec![0u8; 3 * plane];
    for (x, y, px) in img.enumerate_pixels() {
        let p = y as usize * size + x as usize;
        for c in 0..3 {
            chw[c * plane + p] = px.0[c];
        }
    }
    Ok(chw)
}

/// Writes `dir/x/*.png`, `dir/y/*.png` (paired order) and the manifest.
pub fn save_dataset(data: &ShapeDataset, dir: &Path) -> Result<()> {
    let size = data.spec.size;
    for (sub, pick) in [("x", 0), ("y", 1)] {
        let d = dir.join(sub);
        fs::create_dir_all(&d)?;
        for (i, r) in data.records.iter().enumerate() {
            let bytes = if pick == 0 { &r.x } else { &r.y };
            write_png(&d.join(file_name(i)), bytes, size)?;
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        spec: data.spec.clone(),
        spec_hash: data.spec.hash(),
        seed: data.spec.seed,
        records: data
            .records
            .iter()
            .map(|r| RecordMeta {
                latent: r.latent,
                hue: r.hue,
            })
            .collect(),
        y_order: data.y_order.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<ShapeDataset> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT || manifest.format_version != FORMAT_VERSION {
        return Err(invalid(format!(
            "unsupported dataset format {} v{}",
            manifest.format, manifest.format_version
        )));
    }
    if manifest.spec.hash() != manifest.spec_hash {
        return Err(invalid("dataset manifest spec hash does not match its spec"));
    }
    manifest.spec.validate()?;
    let n = manifest.records.len();
    let mut sorted = manifest.y_order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(invalid("dataset pairing index is not a permutation"));
    }
    let size = manifest.spec.size;
    let records = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, meta)| {
            Ok(ShapeRecord {
                latent: meta.latent,
                hue: meta.hue,
                x: read_png(&dir.join("x").join(file_name(i)), size)?,
                y: read_png(&dir.join("y").join(file_name(i)), size)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ShapeDataset {
        spec: manifest.spec,
        records,
        y_order: manifest.y_order,
    })
}
