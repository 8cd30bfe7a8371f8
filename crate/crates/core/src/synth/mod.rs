//! Synthetic paired shape domains and random discrete Markov chains.
//!
//! Domain X holds black outline drawings; domain Y holds the same shapes
//! filled with a colour drawn independently of the geometry, so every X image
//! has many valid Y partners.

mod disk;
mod markov;
mod render;

pub use disk::{load_dataset, save_dataset, MANIFEST_FILE};
pub use markov::{markov_chain_joints, random_markov_chain_joint};
pub use render::{hue_to_rgb, render_filled, render_outline, Latent, Shape};

use mcmi_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::image::{Geometry, ImageBatch, ValueRange};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapePairSpec {
    /// Side length in pixels.
    pub size: usize,
    pub shapes: Vec<Shape>,
    /// Circumradius range as a fraction of `size`.
    pub radius_range: [f64; 2],
    /// Outline stroke width in pixels.
    pub line_width: f64,
    /// Grey level inside the X outlines (1 leaves them white).
    pub interior_value: f64,
    /// HSV value of the fill colour.
    pub fill_value: f64,
    pub seed: u64,
}

impl Default for ShapePairSpec {
    fn default() -> Self {
        Self {
            size: 32,
            shapes: vec![Shape::Circle, Shape::Square, Shape::Triangle],
            radius_range: [0.22, 0.32],
            line_width: 2.0,
            interior_value: 0.5,
            fill_value: 0.9,
            seed: 0,
        }
    }
}

impl ShapePairSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(invalid(format!("image size must be at least 8, got {}", self.size)));
        }
        if self.shapes.is_empty() {
            return Err(invalid("shape vocabulary is empty"));
        }
        let [lo, hi] = self.radius_range;
        if !(0.0 < lo && lo <= hi && hi < 0.5) {
            return Err(invalid(format!(
                "radius range {lo}..{hi} must satisfy 0 < lo <= hi < 0.5"
            )));
        }
        if self.line_width.is_nan()
            || self.line_width <= 0.0
            || !(0.0..=1.0).contains(&self.fill_value)
            || !(0.0..=1.0).contains(&self.interior_value)
        {
            return Err(invalid(
                "line width must be positive, fill and interior values in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(3, self.size, self.size)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serialises");
        hex::encode(Sha256::digest(json))
    }

    fn record(&self, index: usize) -> ShapeRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let size = self.size as f64;
        let shape = self.shapes[rng.gen_range(0..self.shapes.len())];
        let [lo, hi] = self.radius_range;
        let radius = size * rng.gen_range(lo..=hi);
        let margin = radius + self.line_width;
        let cx = rng.gen_range(margin..=size - margin);
        let cy = rng.gen_range(margin..=size - margin);
        let hue = rng.gen_range(0.0..1.0);
        let latent = Latent { shape, cx, cy, radius };
        ShapeRecord {
            latent,
            hue,
            x: render_outline(&latent, self.size, self.line_width, self.interior_value),
            y: render_filled(&latent, self.size, hue_to_rgb(hue, self.fill_value)),
        }
    }
}

/// One latent draw rendered in both domains (CHW bytes).
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRecord {
    pub latent: Latent,
    /// Fill hue of the Y rendering.
    pub hue: f64,
    pub x: Vec<u8>,
    pub y: Vec<u8>,
}

/// Paired records plus an independent shuffle of domain Y for unpaired training.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDataset {
    pub spec: ShapePairSpec,
    pub records: Vec<ShapeRecord>,
    /// `y_order[i]` is the record whose Y image appears at position `i` of the unpaired view.
    pub y_order: Vec<usize>,
}

/// Stream index reserved for the unpaired shuffle.
const SHUFFLE_STREAM: u64 = u64::MAX;

pub fn generate_dataset(spec: &ShapePairSpec, n: usize) -> Result<ShapeDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("dataset needs at least one record"));
    }
    let records = (0..n).map(|i| spec.record(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut y_order: Vec<usize> = (0..n).collect();
    y_order.shuffle(&mut rng);
    Ok(ShapeDataset {
        spec: spec.clone(),
        records,
        y_order,
    })
}

fn bytes_to_batch(images: &[&[u8]], geometry: Geometry) -> Result<ImageBatch> {
    let mut data = Vec::with_capacity(images.len() * geometry.pixels());
    for img in images {
        data.extend(img.iter().map(|&b| b as f32 / 255.0));
    }
    let t = Tensor::from_vec(
        &[images.len(), geometry.channels, geometry.height, geometry.width],
        data,
    )?;
    Ok(ImageBatch::new(t, ValueRange::Unit)?.to_signed())
}

impl ShapeDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn geometry(&self) -> Geometry {
        self.spec.geometry()
    }

    fn check(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.len()) {
            Some(i) => Err(invalid(format!("record {i} out of range for {} records", self.len()))),
            None => Ok(()),
        }
    }

    /// X images of the given records, canonical range.
    pub fn x_batch(&self, idx: &[usize]) -> Result<ImageBatch> {
        self.check(idx)?;
        let imgs: Vec<&[u8]> = idx.iter().map(|&i| self.records[i].x.as_slice()).collect();
        bytes_to_batch(&imgs, self.geometry())
    }

    /// Ground-truth Y partners of the given records, canonical range.
    pub fn y_batch(&self, idx: &[usize]) -> Result<ImageBatch> {
        self.check(idx)?;
        let imgs: Vec<&[u8]> = idx.iter().map(|&i| self.records[i].y.as_slice()).collect();
        bytes_to_batch(&imgs, self.geometry())
    }

    /// Y images at positions of the shuffled (unpaired) view.
    pub fn unpaired_y_batch(&self, pos: &[usize]) -> Result<ImageBatch> {
        self.check(pos)?;
        let idx: Vec<usize> = pos.iter().map(|&p| self.y_order[p]).collect();
        self.y_batch(&idx)
    }

    /// Every Y image in unpaired order, as raw bytes.
    pub fn unpaired_y(&self) -> impl Iterator<Item = &[u8]> {
        self.y_order.iter().map(|&i| self.records[i].y.as_slice())
    }
}
