use serde::{Deserialize, Serialize};

use crate::volume::grid::{BinaryMask, Dims};

/// Voxel adjacency used for connected-component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Component id per voxel (0 = background, ids dense from 1) plus sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    dims: Dims,
    ids: Vec<u32>,
    sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Voxel count of component `id` (1-based).
    pub fn size(&self, id: u32) -> usize {
        self.sizes[id as usize - 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn component_mask(&self, id: u32) -> BinaryMask {
        BinaryMask::from_indices(
            self.dims,
            self.ids.iter().enumerate().filter_map(|(i, &c)| (c == id).then_some(i)),
        )
    }

    /// Id of the largest component; ties go to the lowest id.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (k, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, k as u32 + 1));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Mask keeping only components whose size passes `keep`.
    pub fn filter_mask(&self, mut keep: impl FnMut(u32, usize) -> bool) -> BinaryMask {
        let kept: Vec<bool> = std::iter::once(false)
            .chain(self.sizes.iter().enumerate().map(|(k, &s)| keep(k as u32 + 1, s)))
            .collect();
        BinaryMask::from_indices(
            self.dims,
            self.ids.iter().enumerate().filter_map(|(i, &c)| kept[c as usize].then_some(i)),
        )
    }
}

/// Labels connected components of `mask` by flood fill in raster order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let mut ids = vec![0u32; dims.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();

    for seed in 0..dims.len() {
        if !mask.at(seed) || ids[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        ids[seed] = id;
        stack.push(seed);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = dims.coords(i);
            for [dx, dy, dz] in &offsets {
                let Some(j) = dims.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz) else {
                    continue;
                };
                if mask.at(j) && ids[j] == 0 {
                    ids[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }

    ComponentLabeling { dims, ids, sizes }
}

/// Keeps only the largest connected component of `mask`.
pub fn largest_component(mask: &BinaryMask, connectivity: Connectivity) -> BinaryMask {
    let cc = connected_components(mask, connectivity);
    match cc.largest() {
        Some(id) => cc.component_mask(id),
        None => BinaryMask::empty(mask.dims()),
    }
}

/// Component count of a 2D image stored row-major, using 8-neighbour adjacency.
pub fn count_components_2d(width: usize, height: usize, pixels: &[bool]) -> usize {
    let mask = BinaryMask::new(Dims::new(width, 1, height), pixels.to_vec())
        .expect("pixel buffer matches width * height");
    connected_components(&mask, Connectivity::TwentySix).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Oracle: merge voxels pairwise until no adjacent pair sits in different sets.
    fn oracle_components(mask: &BinaryMask, conn: Connectivity) -> BTreeSet<BTreeSet<usize>> {
        let dims = mask.dims();
        let voxels: Vec<usize> = mask.indices().collect();
        let mut group: Vec<usize> = (0..voxels.len()).collect();
        let adjacent = |a: usize, b: usize| {
            let (ax, ay, az) = dims.coords(a);
            let (bx, by, bz) = dims.coords(b);
            let d = [
                ax.abs_diff(bx) as i64,
                ay.abs_diff(by) as i64,
                az.abs_diff(bz) as i64,
            ];
            let cheb = d.iter().copied().max().unwrap();
            let man: i64 = d.iter().sum();
            match conn {
                Connectivity::Six => man == 1,
                Connectivity::TwentySix => cheb == 1,
            }
        };
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..voxels.len() {
                for j in 0..voxels.len() {
                    if group[i] != group[j] && adjacent(voxels[i], voxels[j]) {
                        let (lo, hi) = (group[i].min(group[j]), group[i].max(group[j]));
                        for g in group.iter_mut() {
                            if *g == hi {
                                *g = lo;
                            }
                        }
                        changed = true;
                    }
                }
            }
        }
        let mut sets = std::collections::BTreeMap::<usize, BTreeSet<usize>>::new();
        for (k, &g) in group.iter().enumerate() {
            sets.entry(g).or_default().insert(voxels[k]);
        }
        sets.into_values().collect()
    }

    fn as_sets(cc: &ComponentLabeling) -> BTreeSet<BTreeSet<usize>> {
        (1..=cc.count() as u32)
            .map(|id| cc.component_mask(id).indices().collect())
            .collect()
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&BinaryMask::empty(Dims::cube(4)), Connectivity::TwentySix);
        assert_eq!(cc.count(), 0);
        assert!(cc.largest().is_none());
    }

    #[test]
    fn solid_block_is_one_component() {
        let cc = connected_components(&BinaryMask::full(Dims::cube(3)), Connectivity::Six);
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.size(1), 27);
    }

    #[test]
    fn bridging_voxel_merges_components() {
        let dims = Dims::new(3, 1, 1);
        let mut m = BinaryMask::empty(dims);
        m.set(0, 0, 0, true);
        m.set(2, 0, 0, true);
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.count(), 2);
        assert_eq!(as_sets(&cc), oracle_components(&m, Connectivity::Six));
        m.set(1, 0, 0, true);
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.size(1), 3);
    }

    #[test]
    fn diagonal_neighbours_depend_on_connectivity() {
        let mut m = BinaryMask::empty(Dims::cube(2));
        m.set(0, 0, 0, true);
        m.set(1, 1, 1, true);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
    }

    #[test]
    fn two_d_counts_use_eight_neighbours() {
        // X . X
        // . X .
        let px = [true, false, true, false, true, false];
        assert_eq!(count_components_2d(3, 2, &px), 1);
        let px = [true, false, true, false, false, false];
        assert_eq!(count_components_2d(3, 2, &px), 2);
    }

    proptest::proptest! {
        #[test]
        fn matches_oracle(bits in proptest::collection::vec(proptest::bool::weighted(0.35), 64), six in proptest::bool::ANY) {
            let conn = if six { Connectivity::Six } else { Connectivity::TwentySix };
            let m = BinaryMask::new(Dims::cube(4), bits).unwrap();
            let cc = connected_components(&m, conn);
            proptest::prop_assert_eq!(as_sets(&cc), oracle_components(&m, conn));
            proptest::prop_assert_eq!(cc.sizes().iter().sum::<usize>(), m.count());
        }
    }
}
