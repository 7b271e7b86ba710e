use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::catalog::StructureCatalog;

/// Structure label stored per voxel. `0` is background.
pub type Label = u16;

pub const BACKGROUND: Label = 0;

/// Voxel counts along x, y and z. Linear index is `x + nx * (y + ny * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.x * (y + self.y * z)
    }

    #[inline]
    pub const fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.x;
        let yz = i / self.x;
        (x, yz % self.y, yz / self.y)
    }

    #[inline]
    pub const fn point(&self, i: usize) -> [usize; 3] {
        let (x, y, z) = self.coords(i);
        [x, y, z]
    }

    /// Index of a signed coordinate, or `None` when it falls off the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        (x < self.x && y < self.y && z < self.z).then(|| self.index(x, y, z))
    }

    fn validate(&self) -> Result<()> {
        if self.x == 0 || self.y == 0 || self.z == 0 {
            return Err(Error::shape(format!("dims must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Physical voxel size in millimetres along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing(pub [f64; 3]);

impl Default for Spacing {
    fn default() -> Self {
        Spacing([1.0; 3])
    }
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = Spacing([sx, sy, sz]);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::shape(format!("spacing must be positive, got {:?}", self.0)))
        }
    }
}

/// Dense 3D scalar intensity volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        dims.validate()?;
        spacing.validate()?;
        if data.len() != dims.len() {
            return Err(Error::shape(format!(
                "intensity array has {} values, dims {:?} need {}",
                data.len(),
                dims,
                dims.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!("non-finite intensity at voxel {i}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }
}

/// Boolean voxel mask on a lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    dims: Dims,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::shape(format!(
                "mask has {} voxels, dims {:?} need {}",
                data.len(),
                dims,
                dims.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn empty(dims: Dims) -> Self {
        Self { dims, data: vec![false; dims.len()] }
    }

    pub fn full(dims: Dims) -> Self {
        Self { dims, data: vec![true; dims.len()] }
    }

    pub fn from_indices(dims: Dims, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(dims);
        for i in indices {
            m.data[i] = true;
        }
        m
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn at(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    pub fn set_index(&mut self, i: usize, v: bool) {
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|v| *v)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter_map(|(i, v)| v.then_some(i))
    }

    pub fn ensure_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "mask dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.ensure_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count())
    }

    pub fn intersects(&self, other: &BinaryMask) -> Result<bool> {
        self.ensure_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).any(|(a, b)| *a && *b))
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.ensure_same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
        Ok(())
    }

    /// Inclusive voxel bounding box `(min, max)` of the set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in self.indices() {
            let (x, y, z) = self.dims.coords(i);
            for (k, c) in [x, y, z].into_iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Voxel-space centroid of the set voxels.
    pub fn centroid(&self) -> Option<[f64; 3]> {
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for i in self.indices() {
            let (x, y, z) = self.dims.coords(i);
            sum[0] += x as f64;
            sum[1] += y as f64;
            sum[2] += z as f64;
            n += 1;
        }
        (n > 0).then(|| sum.map(|s| s / n as f64))
    }
}

/// Dense per-voxel structure labels drawn from a [`StructureCatalog`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMap {
    dims: Dims,
    spacing: SpacingBits,
    labels: Vec<Label>,
    catalog_id: String,
}

/// Spacing stored as raw bits so that label maps can be compared and hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct SpacingBits([u64; 3]);

impl From<Spacing> for SpacingBits {
    fn from(s: Spacing) -> Self {
        SpacingBits(s.0.map(f64::to_bits))
    }
}

impl From<SpacingBits> for Spacing {
    fn from(s: SpacingBits) -> Self {
        Spacing(s.0.map(f64::from_bits))
    }
}

impl LabelMap {
    pub fn new(
        dims: Dims,
        spacing: Spacing,
        labels: Vec<Label>,
        catalog: &StructureCatalog,
    ) -> Result<Self> {
        dims.validate()?;
        spacing.validate()?;
        if labels.len() != dims.len() {
            return Err(Error::shape(format!(
                "label array has {} values, dims {:?} need {}",
                labels.len(),
                dims,
                dims.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l != BACKGROUND && !catalog.contains(l)) {
            return Err(Error::UnknownLabel { label: bad, catalog: catalog.id().to_string() });
        }
        Ok(Self { dims, spacing: spacing.into(), labels, catalog_id: catalog.id().to_string() })
    }

    pub fn background(dims: Dims, spacing: Spacing, catalog: &StructureCatalog) -> Result<Self> {
        Self::new(dims, spacing, vec![BACKGROUND; dims.len()], catalog)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing.into()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn catalog_id(&self) -> &str {
        &self.catalog_id
    }

    #[inline]
    pub fn at(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Label {
        self.labels[self.dims.index(x, y, z)]
    }

    /// Mask of `label` without catalog validation.
    pub fn mask_of(&self, label: Label) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn voxel_count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Clears every voxel of `label` back to background. Returns the number cleared.
    pub fn clear_label(&mut self, label: Label) -> usize {
        let mut n = 0;
        for l in self.labels.iter_mut().filter(|l| **l == label) {
            *l = BACKGROUND;
            n += 1;
        }
        n
    }

    pub(crate) fn set_at(&mut self, i: usize, label: Label) {
        self.labels[i] = label;
    }

    pub fn matches_grid<T: Real>(&self, grid: &VoxelGrid<T>) -> bool {
        self.dims == grid.dims() && self.spacing() == grid.spacing()
    }

    pub fn ensure_same_grid(&self, other: &LabelMap) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing {
            return Err(Error::shape(format!(
                "label maps on different lattices: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// Mask of the voxels carrying `label`, validated against `catalog`.
pub fn extract_structure_mask(
    map: &LabelMap,
    catalog: &StructureCatalog,
    label: Label,
) -> Result<BinaryMask> {
    if map.catalog_id() != catalog.id() {
        return Err(Error::Catalog(format!(
            "label map drawn from `{}`, not `{}`",
            map.catalog_id(),
            catalog.id()
        )));
    }
    if !catalog.contains(label) {
        return Err(Error::UnknownLabel { label, catalog: catalog.id().to_string() });
    }
    Ok(map.mask_of(label))
}
