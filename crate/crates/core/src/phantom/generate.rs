use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::noise::{inject_noise, InjectionLog};
use super::rng::{derive_seed, stream_rng, Stream};
use super::spec::{AugmentSpec, NoiseSpec, PhantomSpec, StructureSpec};
use crate::error::{Error, Result};
use crate::metrics::squared_distance_transform;
use crate::volume::{
    connected_components, BinaryMask, CaseMeta, CaseRecord, Connectivity, Dims, Label, LabelMap,
    Phase, Sex, Spacing, StructuredReport, TumorType, VoxelGrid, BACKGROUND,
};

/// Generates one clean case; `pseudo` and `gold` both hold the true labels.
pub fn generate_case(spec: &PhantomSpec, seed: u64) -> Result<CaseRecord> {
    generate_case_with(spec, seed, "case", &AugmentSpec::default())
}

/// Clean case with augmentation applied to intensities and tumor sizes.
pub fn generate_augmented_case(
    spec: &PhantomSpec,
    augment: &AugmentSpec,
    seed: u64,
    case_id: &str,
) -> Result<CaseRecord> {
    generate_case_with(spec, seed, case_id, augment)
}

fn generate_case_with(
    spec: &PhantomSpec,
    seed: u64,
    case_id: &str,
    augment: &AugmentSpec,
) -> Result<CaseRecord> {
    spec.validate()?;
    let catalog = spec.catalog()?;
    let dims = spec.dims();
    let spacing = spec.spacing();
    let mut geo = stream_rng(seed, Stream::Geometry, 0);

    let shapes: Vec<StructureSpec> = spec.structures.iter().map(|s| jitter_structure(s, spec, &mut geo)).collect();
    let mut labels = vec![BACKGROUND; dims.len()];
    for s in &shapes {
        rasterize(s, dims, &mut labels);
    }

    let mut tumor_count = 0u32;
    if let Some(t) = &spec.tumor {
        let host = spec
            .structure(&t.host)
            .ok_or_else(|| Error::Spec(format!("tumor host `{}` is not a declared structure", t.host)))?
            .label;
        let wanted = geo.random_range(t.count[0]..=t.count[1]);
        let scale = geo.random_range(augment.tumor_radius_scale[0]..=augment.tumor_radius_scale[1]);
        for _ in 0..wanted {
            let r = geo.random_range(t.radius[0]..=t.radius[1]) * scale * dims.x as f64;
            place_blob(&mut labels, dims, host, t.label, r, &mut geo);
        }
        let gold_tumor = BinaryMask::from_indices(
            dims,
            labels.iter().enumerate().filter(|(_, l)| **l == t.label).map(|(i, _)| i),
        );
        tumor_count = connected_components(&gold_tumor, Connectivity::Six).count() as u32;
    }
    let report = if tumor_count > 0 {
        let kind = *TumorType::ALL.choose(&mut geo).expect("nonempty");
        StructuredReport::new(true, Some(kind), tumor_count)?
    } else {
        StructuredReport::negative()
    };
    let meta = CaseMeta {
        age: geo.random_range(30..=85),
        sex: if geo.random_bool(0.5) { Sex::Female } else { Sex::Male },
        phase: [Phase::Arterial, Phase::Venous, Phase::Noncontrast][geo.random_range(0..3)],
        is_gold: false,
    };

    let mut ints = stream_rng(seed, Stream::Intensity, 0);
    let mut dists: Vec<(Label, Normal<f64>)> = Vec::new();
    let jitter = |rng: &mut ChaCha8Rng| {
        if augment.intensity_jitter > 0.0 {
            rng.random_range(-augment.intensity_jitter..=augment.intensity_jitter)
        } else {
            0.0
        }
    };
    let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| Error::Spec(e.to_string()));
    dists.push((BACKGROUND, normal(spec.background.mean, spec.background.std)?));
    for s in &spec.structures {
        let m = s.intensity.mean + jitter(&mut ints);
        dists.push((s.label, normal(m, s.intensity.std)?));
    }
    if let Some(t) = &spec.tumor {
        let host = spec.structure(&t.host).expect("validated");
        let m = host.intensity.mean + t.intensity_offset + jitter(&mut ints);
        dists.push((t.label, normal(m, t.std)?));
    }
    let mut lut: Vec<Option<Normal<f64>>> = vec![None; catalog.labels().map(|l| l as usize).max().unwrap_or(0) + 1];
    for (l, d) in dists {
        lut[l as usize] = Some(d);
    }
    let data: Vec<f32> = labels
        .iter()
        .map(|&l| lut[l as usize].expect("every label has a distribution").sample(&mut ints) as f32)
        .collect();

    let volume = VoxelGrid::new(dims, spacing, data)?;
    let gold = LabelMap::new(dims, spacing, labels, &catalog)?;
    CaseRecord::new(case_id, volume, gold.clone(), Some(gold), report, meta)
}

fn jitter_structure(s: &StructureSpec, spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> StructureSpec {
    let j = spec.jitter;
    let mut out = s.clone();
    for k in 0..3 {
        if j.center > 0.0 {
            out.center[k] += rng.random_range(-j.center..=j.center);
        }
        if j.radius_scale > 0.0 {
            out.radii[k] *= rng.random_range(1.0 - j.radius_scale..=1.0 + j.radius_scale);
        }
    }
    out
}

fn rasterize(s: &StructureSpec, dims: Dims, labels: &mut [Label]) {
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let p = [
                    (x as f64 + 0.5) / dims.x as f64,
                    (y as f64 + 0.5) / dims.y as f64,
                    (z as f64 + 0.5) / dims.z as f64,
                ];
                if s.contains(p) {
                    labels[dims.index(x, y, z)] = s.label;
                }
            }
        }
    }
}

/// Voxel-space ball test.
pub(crate) fn in_ball(dims: Dims, center: [usize; 3], radius: f64, i: usize) -> bool {
    let c = dims.point(i);
    let d2: f64 = (0..3).map(|k| (c[k] as f64 - center[k] as f64).powi(2)).sum();
    d2 <= radius * radius
}

/// Writes a ball of `label` over `host` voxels, centered on a host voxel at
/// least `radius + 2` voxels away from any existing `label` voxel so that
/// separate blobs never touch. Returns false when no such center exists.
pub(crate) fn place_blob(
    labels: &mut [Label],
    dims: Dims,
    host: Label,
    label: Label,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    match pick_blob_center(labels, dims, host, label, radius, 0, rng) {
        Some(c) => {
            paint_ball(labels, dims, c, radius, host, label);
            true
        }
        None => false,
    }
}

pub(crate) fn pick_blob_center(
    labels: &[Label],
    dims: Dims,
    host: Label,
    avoid: Label,
    radius: f64,
    margin: usize,
    rng: &mut ChaCha8Rng,
) -> Option<[usize; 3]> {
    let existing = BinaryMask::from_indices(
        dims,
        labels.iter().enumerate().filter(|(_, l)| **l == avoid).map(|(i, _)| i),
    );
    let d2 = squared_distance_transform(&existing, Spacing::default());
    let min = (radius + 2.0).powi(2);
    let fits = |c: [usize; 3]| {
        c[0] >= margin
            && c[1] >= margin
            && c[2] >= margin
            && c[0] + margin < dims.x
            && c[1] + margin < dims.y
            && c[2] + margin < dims.z
    };
    let eligible: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == host && d2[i] > min && fits(dims.point(i)))
        .collect();
    eligible.choose(rng).map(|&i| dims.point(i))
}

pub(crate) fn paint_ball(labels: &mut [Label], dims: Dims, c: [usize; 3], radius: f64, over: Label, label: Label) {
    let r = radius.ceil() as i64;
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let Some(i) = dims.checked_index(c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz) else {
                    continue;
                };
                if labels[i] == over && in_ball(dims, c, radius, i) {
                    labels[i] = label;
                }
            }
        }
    }
}

/// A generated corpus together with the noise bookkeeping of each case.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub cases: Vec<CaseRecord>,
    /// One log per case, in case order. Gold cases have empty logs.
    pub logs: Vec<InjectionLog>,
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

/// Number of gold cases for a corpus of `n` cases.
pub fn gold_count(n: usize, gold_fraction: f64) -> usize {
    // Guard against representation error such as 0.1 * 100 = 10.000000000000002.
    let raw = gold_fraction * n as f64;
    let rounded = raw.round();
    let g = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (g as usize).min(n)
}

pub fn generate_corpus(
    spec: &PhantomSpec,
    noise: &NoiseSpec,
    n_cases: usize,
    gold_fraction: f64,
    seed: u64,
) -> Result<Corpus> {
    if n_cases == 0 {
        return Err(Error::Spec("a corpus needs at least one case".into()));
    }
    if !(0.0..=1.0).contains(&gold_fraction) {
        return Err(Error::Spec(format!("gold_fraction {gold_fraction} outside [0, 1]")));
    }
    spec.validate()?;
    noise.validate()?;
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut stream_rng(seed, Stream::GoldSelection, 0));
    let mut is_gold = vec![false; n_cases];
    for &i in &order[..gold_count(n_cases, gold_fraction)] {
        is_gold[i] = true;
    }
    let built: Vec<(CaseRecord, InjectionLog)> = (0..n_cases)
        .into_par_iter()
        .map(|i| {
            let case_seed = derive_seed(seed, Stream::CaseSeed, i as u64);
            let mut case = generate_case_with(spec, case_seed, &case_id(i), &AugmentSpec::default())?;
            if is_gold[i] {
                case.meta.is_gold = true;
                Ok((case, InjectionLog::default()))
            } else {
                inject_noise(&case, spec, noise, derive_seed(seed, Stream::Noise, i as u64))
            }
        })
        .collect::<Result<_>>()?;
    let (cases, logs) = built.into_iter().unzip();
    Ok(Corpus { cases, logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn default_spec() -> PhantomSpec {
        RunConfig::default_config().phantom
    }

    #[test]
    fn zero_structures_give_background() {
        let mut spec = default_spec();
        spec.structures.clear();
        spec.tumor = None;
        spec.dims = [8, 8, 8];
        let case = generate_case(&spec, 1).unwrap();
        assert!(case.pseudo.labels().iter().all(|&l| l == BACKGROUND));
        assert!(!case.report.tumor_present());
    }

    #[test]
    fn absent_host_is_rejected() {
        let mut spec = default_spec();
        spec.tumor.as_mut().unwrap().host = "gallbladder".into();
        assert!(matches!(generate_case(&spec, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn forced_tumor_count_is_reported() {
        let mut spec = default_spec();
        spec.tumor.as_mut().unwrap().count = [2, 2];
        for seed in 0..4 {
            let case = generate_case(&spec, seed).unwrap();
            let gold = case.gold.as_ref().unwrap();
            let comps = connected_components(&gold.mask_of(7), Connectivity::Six).count();
            assert_eq!(case.report.tumor_count(), 2);
            assert_eq!(comps, 2);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = default_spec();
        assert_eq!(generate_case(&spec, 9).unwrap(), generate_case(&spec, 9).unwrap());
        assert_ne!(generate_case(&spec, 9).unwrap().volume, generate_case(&spec, 10).unwrap().volume);
    }

    #[test]
    fn tumors_stay_inside_host() {
        let spec = default_spec();
        let case = generate_case(&spec, 3).unwrap();
        let gold = case.gold.unwrap();
        let clean = {
            let mut s = spec.clone();
            s.tumor = None;
            generate_case(&s, 3).unwrap().gold.unwrap()
        };
        for i in 0..gold.labels().len() {
            if gold.at(i) == 7 {
                assert_eq!(clean.at(i), 5);
            } else {
                assert_eq!(gold.at(i), clean.at(i));
            }
        }
    }

    #[test]
    fn gold_count_is_a_ceiling() {
        assert_eq!(gold_count(100, 0.1), 10);
        assert_eq!(gold_count(1, 1.0), 1);
        assert_eq!(gold_count(7, 0.1), 1);
        assert_eq!(gold_count(10, 0.0), 0);
        assert_eq!(gold_count(3, 0.5), 2);
    }

    #[test]
    fn single_gold_case() {
        let mut spec = default_spec();
        spec.dims = [24, 24, 24];
        let c = generate_corpus(&spec, &RunConfig::default_config().noise, 1, 1.0, 5).unwrap();
        assert_eq!(c.cases.len(), 1);
        assert!(c.cases[0].meta.is_gold);
        assert_eq!(Some(&c.cases[0].pseudo), c.cases[0].gold.as_ref());
    }
}
