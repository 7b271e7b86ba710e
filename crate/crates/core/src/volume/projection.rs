use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::grid::{BinaryMask, VoxelGrid};

/// Front view (x–z plane, looking along y) of a volume and a mask.
///
/// Pixels are row-major with x fastest: pixel `(x, z)` lives at `x + width * z`.
/// `z` grows superiorly, so row 0 is the most inferior slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D<T> {
    pub width: usize,
    pub height: usize,
    /// Mean intensity along y. Raw values; display scaling is the consumer's job.
    pub intensity: Vec<T>,
    pub overlay: Overlay,
}

/// Binary front-view occupancy image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Overlay {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
    /// Physical pixel size (x, z) in mm.
    pub pixel_mm: [u64; 2],
}

impl Overlay {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>, pixel_mm: [f64; 2]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(format!(
                "overlay has {} pixels, expected {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, pixel_mm: pixel_mm.map(f64::to_bits) })
    }

    pub fn pixel_size(&self) -> [f64; 2] {
        self.pixel_mm.map(f64::from_bits)
    }

    #[inline]
    pub fn get(&self, x: usize, z: usize) -> bool {
        self.pixels[x + self.width * z]
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|p| *p)
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }
}

/// Overlay of `mask` alone: pixel `(x, z)` is set iff any voxel along y is.
pub fn project_overlay(mask: &BinaryMask, spacing: [f64; 3]) -> Overlay {
    let d = mask.dims();
    let mut pixels = vec![false; d.x * d.z];
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                if mask.get(x, y, z) {
                    pixels[x + d.x * z] = true;
                }
            }
        }
    }
    Overlay { width: d.x, height: d.z, pixels, pixel_mm: [spacing[0], spacing[2]].map(f64::to_bits) }
}

/// Projects `volume` and `mask` onto the x–z plane.
pub fn front_view_projection<T: Real>(
    volume: &VoxelGrid<T>,
    mask: &BinaryMask,
) -> Result<Projection2D<T>> {
    let d = volume.dims();
    if mask.dims() != d {
        return Err(Error::shape(format!(
            "mask dims {:?} do not match volume dims {:?}",
            mask.dims(),
            d
        )));
    }
    let mut sums = vec![0.0f64; d.x * d.z];
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                sums[x + d.x * z] += volume.get(x, y, z).to_f64_lossless();
            }
        }
    }
    let n = d.y as f64;
    Ok(Projection2D {
        width: d.x,
        height: d.z,
        intensity: sums.into_iter().map(|s| T::of(s / n)).collect(),
        overlay: project_overlay(mask, volume.spacing().0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::grid::{Dims, Spacing};

    fn ramp(dims: Dims) -> VoxelGrid<f64> {
        let data = (0..dims.len()).map(|i| i as f64).collect();
        VoxelGrid::new(dims, Spacing::default(), data).unwrap()
    }

    #[test]
    fn empty_mask_gives_empty_overlay() {
        let v = ramp(Dims::new(3, 4, 2));
        let p = front_view_projection(&v, &BinaryMask::empty(v.dims())).unwrap();
        assert!(p.overlay.is_empty());
        assert_eq!((p.width, p.height), (3, 2));
    }

    #[test]
    fn column_maps_to_single_pixel() {
        let dims = Dims::new(4, 5, 3);
        let v = ramp(dims);
        let mut m = BinaryMask::empty(dims);
        for y in 0..dims.y {
            m.set(2, y, 1, true);
        }
        let p = front_view_projection(&v, &m).unwrap();
        for z in 0..3 {
            for x in 0..4 {
                assert_eq!(p.overlay.get(x, z), (x, z) == (2, 1));
            }
        }
    }

    #[test]
    fn intensity_is_mean_along_y() {
        let dims = Dims::new(2, 3, 2);
        let v = ramp(dims);
        let p = front_view_projection(&v, &BinaryMask::empty(dims)).unwrap();
        for z in 0..2 {
            for x in 0..2 {
                let mean = (0..3).map(|y| v.get(x, y, z)).sum::<f64>() / 3.0;
                assert_eq!(p.intensity[x + 2 * z], mean);
            }
        }
    }

    #[test]
    fn dims_mismatch_is_shape_error() {
        let v = ramp(Dims::cube(3));
        let err = front_view_projection(&v, &BinaryMask::empty(Dims::cube(2)));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    proptest::proptest! {
        #[test]
        fn overlay_is_or_along_y(bits in proptest::collection::vec(proptest::bool::weighted(0.2), 64)) {
            let dims = Dims::cube(4);
            let m = BinaryMask::new(dims, bits).unwrap();
            let p = front_view_projection(&ramp(dims), &m).unwrap();
            for z in 0..4 {
                for x in 0..4 {
                    let mut any = false;
                    for y in 0..4 {
                        any = any || m.get(x, y, z);
                    }
                    proptest::prop_assert_eq!(p.overlay.get(x, z), any);
                }
            }
        }

        #[test]
        fn overlay_is_monotone(bits in proptest::collection::vec(proptest::bool::weighted(0.2), 64), extra in 0usize..64) {
            let dims = Dims::cube(4);
            let m = BinaryMask::new(dims, bits).unwrap();
            let mut grown = m.clone();
            grown.set_index(extra, true);
            let a = project_overlay(&m, [1.0; 3]);
            let b = project_overlay(&grown, [1.0; 3]);
            for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
                proptest::prop_assert!(!*pa || *pb);
            }
        }
    }
}
