//! Image batches, domains, and translation directions.

use std::fmt;

use mcmi_tensor::{Element, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{McmiError, Result};

/// Channel/height/width of a single image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn check<T: Element>(&self, t: &Tensor<T>) -> Result<usize> {
        match t.shape() {
            &[n, c, h, w] if c == self.channels && h == self.height && w == self.width => Ok(n),
            other => Err(McmiError::Geometry {
                expected: format!("[n, {}, {}, {}]", self.channels, self.height, self.width),
                got: format!("{other:?}"),
            }),
        }
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::new(3, 32, 32)
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    X,
    Y,
}

impl Domain {
    pub fn other(self) -> Self {
        match self {
            Domain::X => Domain::Y,
            Domain::Y => Domain::X,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::X => "X",
            Domain::Y => "Y",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    /// The direction that maps images out of `domain`.
    pub fn from_domain(domain: Domain) -> Self {
        match domain {
            Domain::X => Direction::XToY,
            Domain::Y => Direction::YToX,
        }
    }

    pub fn target(self) -> Domain {
        match self {
            Direction::XToY => Domain::Y,
            Direction::YToX => Domain::X,
        }
    }

    pub fn source(self) -> Domain {
        self.target().other()
    }
}

/// Value range an image batch is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueRange {
    /// `[-1, 1]`, the canonical internal range (tanh generator output).
    Signed,
    /// `[0, 1]`.
    Unit,
}

/// Rank-4 `f32` batch (`n × c × h × w`) tagged with its value range.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    tensor: Tensor<f32>,
    range: ValueRange,
}

impl ImageBatch {
    pub fn new(tensor: Tensor<f32>, range: ValueRange) -> Result<Self> {
        tensor.dims4("ImageBatch")?;
        Ok(Self { tensor, range })
    }

    /// Batch in the canonical `[-1, 1]` range.
    pub fn signed(tensor: Tensor<f32>) -> Result<Self> {
        Self::new(tensor, ValueRange::Signed)
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.tensor
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn geometry(&self) -> Geometry {
        let s = self.tensor.shape();
        Geometry::new(s[1], s[2], s[3])
    }

    /// Copy of this batch expressed in `[0, 1]`.
    pub fn to_unit(&self) -> ImageBatch {
        match self.range {
            ValueRange::Unit => self.clone(),
            ValueRange::Signed => ImageBatch {
                tensor: self.tensor.map(|v| (v + 1.0) * 0.5),
                range: ValueRange::Unit,
            },
        }
    }

    /// Copy of this batch expressed in `[-1, 1]`.
    pub fn to_signed(&self) -> ImageBatch {
        match self.range {
            ValueRange::Signed => self.clone(),
            ValueRange::Unit => ImageBatch {
                tensor: self.tensor.map(|v| v * 2.0 - 1.0),
                range: ValueRange::Signed,
            },
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<ImageBatch> {
        Ok(ImageBatch {
            tensor: self.tensor.slice_batch(start, len)?,
            range: self.range,
        })
    }

    pub fn item(&self, i: usize) -> Result<ImageBatch> {
        self.slice(i, 1)
    }

    /// Concatenate batches; all are converted to the first batch's range.
    pub fn concat(parts: &[&ImageBatch]) -> Result<ImageBatch> {
        let first = parts
            .first()
            .ok_or_else(|| McmiError::Invalid("concat of zero batches".into()))?;
        let range = first.range;
        let converted: Vec<ImageBatch> = parts
            .iter()
            .map(|p| match range {
                ValueRange::Signed => p.to_signed(),
                ValueRange::Unit => p.to_unit(),
            })
            .collect();
        let refs: Vec<&Tensor<f32>> = converted.iter().map(|b| &b.tensor).collect();
        Ok(ImageBatch {
            tensor: Tensor::concat_batch(&refs)?,
            range,
        })
    }
}
