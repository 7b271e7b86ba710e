use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, Dims, Spacing};

/// Per-voxel tumor probability on a volume's lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap<T> {
    dims: Dims,
    spacing: Spacing,
    probs: Vec<T>,
}

impl<T: Real> ProbabilityMap<T> {
    pub fn new(dims: Dims, spacing: Spacing, probs: Vec<T>) -> Result<Self> {
        spacing.validate()?;
        if probs.len() != dims.len() {
            return Err(Error::shape(format!(
                "probability map has {} values, dims {:?} need {}",
                probs.len(),
                dims,
                dims.len()
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(*p >= T::zero() && *p <= T::one())) {
            return Err(Error::Invariant(format!("probability at voxel {i} outside [0, 1]")));
        }
        Ok(Self { dims, spacing, probs })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Voxels with probability strictly above `threshold`.
    pub fn binarize(&self, threshold: T) -> BinaryMask {
        BinaryMask::new(self.dims, self.probs.iter().map(|p| *p > threshold).collect())
            .expect("probability map dims are consistent")
    }
}
