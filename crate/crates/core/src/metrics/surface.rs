//! Surface voxels, exact Euclidean distance transform and normalized surface Dice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, Spacing};
#[cfg(test)]
use crate::volume::Dims;

/// Default surface tolerance in mm.
pub const DEFAULT_TOLERANCE_MM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistanceSpec {
    pub tolerance_mm: f64,
    pub spacing: Spacing,
}

impl SurfaceDistanceSpec {
    pub fn new(tolerance_mm: f64, spacing: Spacing) -> Result<Self> {
        if !(tolerance_mm.is_finite() && tolerance_mm > 0.0) {
            return Err(Error::Spec(format!("tolerance must be positive, got {tolerance_mm}")));
        }
        spacing.validate()?;
        Ok(Self { tolerance_mm, spacing })
    }
}

/// Voxels of `mask` with at least one face neighbour outside the mask or off the grid.
pub fn surface_voxels(mask: &BinaryMask) -> BinaryMask {
    let d = mask.dims();
    let mut out = BinaryMask::empty(d);
    for i in mask.indices() {
        let (x, y, z) = d.coords(i);
        let on_surface = [[-1i64, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]]
            .iter()
            .any(|[dx, dy, dz]| {
                match d.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
                    Some(j) => !mask.at(j),
                    None => true,
                }
            });
        if on_surface {
            out.set_index(i, true);
        }
    }
    out
}

/// Squared distance (mm²) from every voxel to the nearest voxel of `seeds`.
///
/// Separable lower-envelope transform (Felzenszwalb & Huttenlocher), one pass
/// per axis with the axis spacing folded into the sample positions. Voxels are
/// `f64::INFINITY` when `seeds` is empty.
pub fn squared_distance_transform(seeds: &BinaryMask, spacing: Spacing) -> Vec<f64> {
    let d = seeds.dims();
    let mut f: Vec<f64> = seeds.data().iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    let axes: [(usize, Box<dyn Fn(usize, usize) -> usize>); 3] = [
        (d.x, Box::new(|o, k| k + d.x * o)),
        (d.y, Box::new(|o, k| (o % d.x) + d.x * (k + d.y * (o / d.x)))),
        (d.z, Box::new(|o, k| o + d.x * d.y * k)),
    ];
    for (axis, (n, at)) in axes.iter().enumerate() {
        let lines = d.len() / n;
        for o in 0..lines {
            line.clear();
            line.extend((0..*n).map(|k| f[at(o, k)]));
            transform_line(&line, spacing.0[axis], &mut out);
            for (k, v) in out.iter().enumerate() {
                f[at(o, k)] = *v;
            }
        }
    }
    f
}

fn transform_line(f: &[f64], step: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(f.len(), f64::INFINITY);
    // Parabola apexes of the lower envelope and the boundaries between them.
    let mut apex: Vec<usize> = Vec::with_capacity(f.len());
    let mut from: Vec<f64> = Vec::with_capacity(f.len());
    let pos = |k: usize| k as f64 * step;
    let meet = |p: usize, q: usize| {
        ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)))
    };
    for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
        while let Some(&top) = apex.last() {
            let s = meet(top, q);
            if s <= *from.last().unwrap() {
                apex.pop();
                from.pop();
            } else {
                apex.push(q);
                from.push(s);
                break;
            }
        }
        if apex.is_empty() {
            apex.push(q);
            from.push(f64::NEG_INFINITY);
        }
    }
    if apex.is_empty() {
        return;
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while k + 1 < apex.len() && from[k + 1] < pos(q) {
            k += 1;
        }
        let p = apex[k];
        let delta = pos(q) - pos(p);
        *slot = delta * delta + f[p];
    }
}

/// Normalized surface Dice at tolerance `spec.tolerance_mm` (strict `d < δ`).
///
/// Both masks empty scores 1; exactly one empty scores 0.
pub fn nsd<F: Real>(a: &BinaryMask, b: &BinaryMask, spec: &SurfaceDistanceSpec) -> Result<F> {
    a.ensure_same_dims(b)?;
    let (sa, sb) = (surface_voxels(a), surface_voxels(b));
    let (na, nb) = (sa.count(), sb.count());
    match (na, nb) {
        (0, 0) => return Ok(F::one()),
        (0, _) | (_, 0) => return Ok(F::zero()),
        _ => {}
    }
    let to_b = squared_distance_transform(&sb, spec.spacing);
    let to_a = squared_distance_transform(&sa, spec.spacing);
    let within = |surface: &BinaryMask, dist2: &[f64]| {
        surface.indices().filter(|&i| dist2[i].sqrt() < spec.tolerance_mm).count()
    };
    let hits = within(&sa, &to_b) + within(&sb, &to_a);
    Ok(F::of(hits as f64 / (na + nb) as f64))
}

#[cfg(test)]
pub(crate) fn physical(dims: Dims, spacing: Spacing, i: usize) -> [f64; 3] {
    let (x, y, z) = dims.coords(i);
    [x as f64 * spacing.0[0], y as f64 * spacing.0[1], z as f64 * spacing.0[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: minimum pairwise distance between surface voxels.
    fn oracle_nsd(a: &BinaryMask, b: &BinaryMask, tol: f64, spacing: Spacing) -> f64 {
        let (sa, sb) = (surface_voxels(a), surface_voxels(b));
        let (pa, pb): (Vec<_>, Vec<_>) = (
            sa.indices().map(|i| physical(a.dims(), spacing, i)).collect(),
            sb.indices().map(|i| physical(b.dims(), spacing, i)).collect(),
        );
        if pa.is_empty() && pb.is_empty() {
            return 1.0;
        }
        if pa.is_empty() || pb.is_empty() {
            return 0.0;
        }
        let dmin = |p: &[f64; 3], set: &[[f64; 3]]| {
            set.iter()
                .map(|q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    let dz = p[2] - q[2];
                    (dx * dx + dy * dy + dz * dz).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let hits = pa.iter().filter(|p| dmin(p, &pb) < tol).count()
            + pb.iter().filter(|p| dmin(p, &pa) < tol).count();
        hits as f64 / (pa.len() + pb.len()) as f64
    }

    fn cube(dims: Dims, lo: [usize; 3], side: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(dims);
        for z in lo[2]..lo[2] + side {
            for y in lo[1]..lo[1] + side {
                for x in lo[0]..lo[0] + side {
                    m.set(x, y, z, true);
                }
            }
        }
        m
    }

    #[test]
    fn surface_of_solid_cube_is_its_shell() {
        let m = cube(Dims::cube(7), [1, 1, 1], 5);
        assert_eq!(surface_voxels(&m).count(), 125 - 27);
        // Touching the grid border counts as surface.
        assert_eq!(surface_voxels(&BinaryMask::full(Dims::cube(3))).count(), 26);
    }

    #[test]
    fn edt_matches_brute_force() {
        let d = Dims::new(5, 4, 3);
        let sp = Spacing([1.0, 0.5, 2.0]);
        let seeds = BinaryMask::from_indices(d, [3, 17, 40]);
        let got = squared_distance_transform(&seeds, sp);
        for (i, g) in got.iter().enumerate() {
            let p = physical(d, sp, i);
            let want = seeds
                .indices()
                .map(|j| {
                    let q = physical(d, sp, j);
                    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(*g, want, "voxel {i}");
        }
    }

    #[test]
    fn identical_masks_score_one() {
        let m = cube(Dims::cube(6), [1, 1, 1], 3);
        let spec = SurfaceDistanceSpec::new(1.0, Spacing::default()).unwrap();
        assert_eq!(nsd::<f64>(&m, &m, &spec).unwrap(), 1.0);
    }

    #[test]
    fn far_apart_voxels_score_zero() {
        let d = Dims::new(12, 1, 1);
        let a = BinaryMask::from_indices(d, [0]);
        let b = BinaryMask::from_indices(d, [10]);
        let spec = SurfaceDistanceSpec::new(1.0, Spacing::default()).unwrap();
        assert_eq!(nsd::<f64>(&a, &b, &spec).unwrap(), 0.0);
    }

    #[test]
    fn shifted_cube_matches_oracle() {
        // Frozen from the exhaustive oracle: 5³ cube vs the same cube shifted one
        // voxel along x, unit spacing, δ = 1 mm. Only coincident surface voxels
        // (distance 0) count, since neighbours sit at exactly 1 mm.
        let d = Dims::cube(9);
        let a = cube(d, [1, 2, 2], 5);
        let b = cube(d, [2, 2, 2], 5);
        let spec = SurfaceDistanceSpec::new(1.0, Spacing::default()).unwrap();
        let oracle = oracle_nsd(&a, &b, 1.0, Spacing::default());
        assert_eq!(oracle, 128.0 / 196.0);
        assert_eq!(nsd::<f64>(&a, &b, &spec).unwrap(), oracle);
    }

    #[test]
    fn empty_conventions() {
        let d = Dims::cube(3);
        let spec = SurfaceDistanceSpec::new(2.0, Spacing::default()).unwrap();
        let e = BinaryMask::empty(d);
        assert_eq!(nsd::<f64>(&e, &e, &spec).unwrap(), 1.0);
        assert_eq!(nsd::<f64>(&e, &BinaryMask::full(d), &spec).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(SurfaceDistanceSpec::new(0.0, Spacing::default()).is_err());
        assert!(SurfaceDistanceSpec::new(f64::NAN, Spacing::default()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn matches_oracle(a in proptest::collection::vec(proptest::bool::weighted(0.3), 64),
                          b in proptest::collection::vec(proptest::bool::weighted(0.3), 64),
                          tol in 0.5f64..3.0, aniso in proptest::bool::ANY) {
            let d = Dims::cube(4);
            let sp = if aniso { Spacing([0.5, 1.0, 1.5]) } else { Spacing::default() };
            let (a, b) = (BinaryMask::new(d, a).unwrap(), BinaryMask::new(d, b).unwrap());
            let spec = SurfaceDistanceSpec::new(tol, sp).unwrap();
            let got = nsd::<f64>(&a, &b, &spec).unwrap();
            proptest::prop_assert!((got - oracle_nsd(&a, &b, tol, sp)).abs() <= 1e-12);
            proptest::prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn monotone_in_tolerance(a in proptest::collection::vec(proptest::bool::weighted(0.3), 64),
                                 b in proptest::collection::vec(proptest::bool::weighted(0.3), 64),
                                 t1 in 0.1f64..3.0, dt in 0.0f64..3.0) {
            let d = Dims::cube(4);
            let (a, b) = (BinaryMask::new(d, a).unwrap(), BinaryMask::new(d, b).unwrap());
            let lo = nsd::<f64>(&a, &b, &SurfaceDistanceSpec::new(t1, Spacing::default()).unwrap()).unwrap();
            let hi = nsd::<f64>(&a, &b, &SurfaceDistanceSpec::new(t1 + dt, Spacing::default()).unwrap()).unwrap();
            proptest::prop_assert!(lo <= hi);
        }
    }
}
