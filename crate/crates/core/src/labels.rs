//! Integer class-id maps aligned with image planes.

use crate::error::{Error, Result};

/// Pixels carrying this id are excluded from the loss and from metrics
/// (Cityscapes convention).
pub const IGNORE_ID: u8 = 255;

/// A batch of per-pixel class ids, shape (n, h, w), row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub ids: Vec<u8>,
}

impl Labels {
    pub fn new(n: usize, h: usize, w: usize, ids: Vec<u8>) -> Result<Self> {
        if n * h * w != ids.len() {
            return Err(Error::Shape(format!(
                "labels ({n},{h},{w}) want {} ids, got {}",
                n * h * w,
                ids.len()
            )));
        }
        Ok(Labels { n, h, w, ids })
    }

    pub fn filled(n: usize, h: usize, w: usize, id: u8) -> Self {
        Labels { n, h, w, ids: vec![id; n * h * w] }
    }

    pub fn numel(&self) -> usize {
        self.ids.len()
    }

    pub fn at(&self, n: usize, y: usize, x: usize) -> u8 {
        self.ids[(n * self.h + y) * self.w + x]
    }

    /// Ensure every id is `< num_classes` or the ignore id.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        for (i, &id) in self.ids.iter().enumerate() {
            if id != IGNORE_ID && (id as usize) >= num_classes {
                return Err(Error::Value(format!(
                    "label id {id} at flat index {i} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(())
    }
}
