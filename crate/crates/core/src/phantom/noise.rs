use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::{paint_ball, pick_blob_center};
use super::rng::stream_rng;
use super::spec::{NoiseSpec, PhantomSpec};
use crate::error::{Error, Result};
use crate::volume::{
    connected_components, BinaryMask, CaseRecord, Connectivity, Label, LabelMap, StructureKind, BACKGROUND,
};

/// One corruption applied to a label map. Every operation is a pure function
/// of the map it is applied to and its recorded parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NoiseOp {
    Delete { label: Label },
    /// Translates the structure; moved voxels only land on background.
    Shift { label: Label, offset: [i64; 3] },
    /// Clears the slab `start..start + width` along `axis`.
    Fragment { label: Label, axis: usize, start: usize, width: usize },
    /// Adds a ball of the label over background.
    Spurious { label: Label, center: [usize; 3], radius: f64 },
    /// Grows into background by one voxel, or strips the one-voxel shell.
    BoundaryJitter { label: Label, grow: bool },
    /// Relabels the tumor instance containing `seed` as its host.
    TumorMiss { label: Label, host: Label, seed: [usize; 3] },
    /// Paints a false tumor ball over host voxels.
    TumorFp { label: Label, host: Label, center: [usize; 3], radius: f64 },
}

impl NoiseOp {
    pub fn label(&self) -> Label {
        match *self {
            NoiseOp::Delete { label }
            | NoiseOp::Shift { label, .. }
            | NoiseOp::Fragment { label, .. }
            | NoiseOp::Spurious { label, .. }
            | NoiseOp::BoundaryJitter { label, .. }
            | NoiseOp::TumorMiss { label, .. }
            | NoiseOp::TumorFp { label, .. } => label,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseOp::Delete { .. } => "delete",
            NoiseOp::Shift { .. } => "shift",
            NoiseOp::Fragment { .. } => "fragment",
            NoiseOp::Spurious { .. } => "spurious",
            NoiseOp::BoundaryJitter { .. } => "boundary_jitter",
            NoiseOp::TumorMiss { .. } => "tumor_miss",
            NoiseOp::TumorFp { .. } => "tumor_fp",
        }
    }

    pub fn apply(&self, map: &mut LabelMap) {
        let dims = map.dims();
        let n = dims.len();
        match *self {
            NoiseOp::Delete { label } => {
                map.clear_label(label);
            }
            NoiseOp::Shift { label, offset } => {
                let voxels: Vec<usize> = (0..n).filter(|&i| map.at(i) == label).collect();
                for &i in &voxels {
                    map.set_at(i, BACKGROUND);
                }
                for &i in &voxels {
                    let c = dims.point(i);
                    let t = dims.checked_index(
                        c[0] as i64 + offset[0],
                        c[1] as i64 + offset[1],
                        c[2] as i64 + offset[2],
                    );
                    if let Some(t) = t {
                        if map.at(t) == BACKGROUND {
                            map.set_at(t, label);
                        }
                    }
                }
            }
            NoiseOp::Fragment { label, axis, start, width } => {
                for i in 0..n {
                    let c = dims.point(i)[axis];
                    if map.at(i) == label && c >= start && c < start + width {
                        map.set_at(i, BACKGROUND);
                    }
                }
            }
            NoiseOp::Spurious { label, center, radius } => {
                let mut labels = map.labels().to_vec();
                paint_ball(&mut labels, dims, center, radius, BACKGROUND, label);
                for (i, l) in labels.into_iter().enumerate() {
                    map.set_at(i, l);
                }
            }
            NoiseOp::BoundaryJitter { label, grow } => {
                let offsets = Connectivity::Six.offsets();
                let mut flip = Vec::new();
                for i in 0..n {
                    let own = map.at(i) == label;
                    if grow == own || (grow && map.at(i) != BACKGROUND) {
                        continue;
                    }
                    let c = dims.point(i).map(|v| v as i64);
                    let hit = offsets.iter().any(|o| {
                        match dims.checked_index(c[0] + o[0], c[1] + o[1], c[2] + o[2]) {
                            Some(j) => (map.at(j) == label) == grow,
                            None => !grow,
                        }
                    });
                    if hit {
                        flip.push(i);
                    }
                }
                let to = if grow { label } else { BACKGROUND };
                for i in flip {
                    map.set_at(i, to);
                }
            }
            NoiseOp::TumorMiss { label, host, seed } => {
                let comps = connected_components(&map.mask_of(label), Connectivity::Six);
                let id = comps.ids()[dims.index(seed[0], seed[1], seed[2])];
                if id != 0 {
                    for i in 0..n {
                        if comps.ids()[i] == id {
                            map.set_at(i, host);
                        }
                    }
                }
            }
            NoiseOp::TumorFp { label, host, center, radius } => {
                let mut labels = map.labels().to_vec();
                paint_ball(&mut labels, dims, center, radius, host, label);
                for (i, l) in labels.into_iter().enumerate() {
                    map.set_at(i, l);
                }
            }
        }
    }
}

/// Ordered record of every corruption applied to one case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionLog {
    pub ops: Vec<NoiseOp>,
}

impl InjectionLog {
    /// Re-applies the logged operations to `gold`.
    pub fn replay(&self, gold: &LabelMap) -> LabelMap {
        let mut map = gold.clone();
        for op in &self.ops {
            op.apply(&mut map);
        }
        map
    }

    pub fn count(&self, name: &str) -> usize {
        self.ops.iter().filter(|o| o.name() == name).count()
    }
}

/// Corrupts the pseudo annotation of a case carrying gold labels.
///
/// Tumor operations run first (each gold instance missed independently, then
/// at most one false blob), followed by the organ and vessel structures in
/// catalog order. A deleted structure receives no further operations.
pub fn inject_noise(
    case: &CaseRecord,
    spec: &PhantomSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(CaseRecord, InjectionLog)> {
    let gold = case
        .gold
        .as_ref()
        .ok_or_else(|| Error::Invariant(format!("case {} has no gold labels to corrupt", case.case_id)))?;
    noise.validate()?;
    let catalog = spec.catalog()?;
    let mut rng = stream_rng(seed, super::rng::Stream::Noise, 0);
    let mut map = gold.clone();
    let mut log = InjectionLog::default();
    let mut push = |op: NoiseOp, map: &mut LabelMap| {
        op.apply(map);
        log.ops.push(op);
    };

    if let Some(t) = &spec.tumor {
        let host = spec.structure(&t.host).expect("validated").label;
        let comps = connected_components(&map.mask_of(t.label), Connectivity::Six);
        for id in 1..=comps.count() as u32 {
            if rng.random_bool(noise.tumor_miss) {
                let first = comps.ids().iter().position(|&c| c == id).expect("component has voxels");
                let seed = map.dims().point(first);
                push(NoiseOp::TumorMiss { label: t.label, host, seed }, &mut map);
            }
        }
        if rng.random_bool(noise.tumor_fp_rate) {
            if let Some(op) = sample_op(OpKind::TumorFp, &map, t.label, spec, noise, &mut rng) {
                push(op, &mut map);
            }
        }
    }

    for entry in catalog.entries().iter().filter(|e| e.kind != StructureKind::Tumor) {
        let rates = noise.rates_for(&entry.name);
        if rng.random_bool(rates.delete) {
            push(NoiseOp::Delete { label: entry.label }, &mut map);
            continue;
        }
        for (kind, p) in [
            (OpKind::Shift, rates.shift),
            (OpKind::Fragment, rates.fragment),
            (OpKind::Spurious, rates.spurious),
            (OpKind::BoundaryJitter, rates.boundary_jitter),
        ] {
            if rng.random_bool(p) {
                if let Some(op) = sample_op(kind, &map, entry.label, spec, noise, &mut rng) {
                    push(op, &mut map);
                }
            }
        }
    }

    let out = CaseRecord { pseudo: map, ..case.clone() };
    Ok((out, log))
}

/// Kinds of corruption, for sampling a single operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Delete,
    Shift,
    Fragment,
    Spurious,
    BoundaryJitter,
    TumorMiss,
    TumorFp,
}

/// Draws the parameters of one operation of `kind` on `label` given the
/// current map. `None` when the operation has nothing to act on or no room.
pub fn sample_op(
    kind: OpKind,
    map: &LabelMap,
    label: Label,
    spec: &PhantomSpec,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Option<NoiseOp> {
    match kind {
        OpKind::Delete => Some(NoiseOp::Delete { label }),
        OpKind::Shift => {
            let axis = rng.random_range(0..3);
            let k = rng.random_range(noise.shift_voxels[0]..=noise.shift_voxels[1]) as i64;
            let mut offset = [0i64; 3];
            offset[axis] = if rng.random_bool(0.5) { k } else { -k };
            Some(NoiseOp::Shift { label, offset })
        }
        OpKind::Fragment => fragment_op(&map.mask_of(label), label, noise.fragment_gap as usize),
        OpKind::Spurious => {
            let radius = uniform(rng, noise.spurious_radius);
            spurious_center(map, label, radius, rng).map(|center| NoiseOp::Spurious { label, center, radius })
        }
        OpKind::BoundaryJitter => Some(NoiseOp::BoundaryJitter { label, grow: rng.random_bool(0.5) }),
        OpKind::TumorMiss => {
            let host = spec.structure(&spec.tumor.as_ref()?.host)?.label;
            let comps = connected_components(&map.mask_of(label), Connectivity::Six);
            if comps.count() == 0 {
                return None;
            }
            let id = rng.random_range(1..=comps.count() as u32);
            let first = comps.ids().iter().position(|&c| c == id)?;
            Some(NoiseOp::TumorMiss { label, host, seed: map.dims().point(first) })
        }
        OpKind::TumorFp => {
            let host = spec.structure(&spec.tumor.as_ref()?.host)?.label;
            let radius = uniform(rng, noise.tumor_fp_radius);
            pick_blob_center(map.labels(), map.dims(), host, label, radius, 0, rng)
                .map(|center| NoiseOp::TumorFp { label, host, center, radius })
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Slab through the centroid, across the longest bounding-box axis.
fn fragment_op(mask: &BinaryMask, label: Label, gap: usize) -> Option<NoiseOp> {
    let (lo, hi) = mask.bounding_box()?;
    let centroid = mask.centroid()?;
    let axis = (0..3).max_by_key(|&k| (hi[k] - lo[k], std::cmp::Reverse(k)))?;
    let mid = centroid[axis].round() as usize;
    let start = mid.saturating_sub(gap / 2);
    Some(NoiseOp::Fragment { label, axis, start, width: gap })
}

/// Background voxel whose ball of `radius` stays clear of the structure by
/// two voxels and fits inside the grid.
fn spurious_center(map: &LabelMap, label: Label, radius: f64, rng: &mut ChaCha8Rng) -> Option<[usize; 3]> {
    let margin = radius.ceil() as usize;
    pick_blob_center(map.labels(), map.dims(), BACKGROUND, label, radius, margin, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::metrics::dsc;
    use crate::phantom::generate_case;
    use crate::phantom::spec::NoiseRates;

    fn setup() -> (PhantomSpec, NoiseSpec, CaseRecord) {
        let cfg = RunConfig::default_config();
        let case = generate_case(&cfg.phantom, 11).unwrap();
        (cfg.phantom, cfg.noise, case)
    }

    #[test]
    fn zero_rates_leave_pseudo_clean() {
        let (spec, _, case) = setup();
        let (out, log) = inject_noise(&case, &spec, &NoiseSpec::clean(), 3).unwrap();
        assert!(log.ops.is_empty());
        assert_eq!(Some(&out.pseudo), case.gold.as_ref());
    }

    #[test]
    fn certain_deletion_empties_structure() {
        let (spec, mut noise, case) = setup();
        noise.rates = NoiseRates::default();
        noise.tumor_miss = 0.0;
        noise.tumor_fp_rate = 0.0;
        noise.overrides.insert("spleen".into(), super::super::spec::NoiseOverride { delete: Some(1.0), ..Default::default() });
        let (out, log) = inject_noise(&case, &spec, &noise, 3).unwrap();
        assert_eq!(out.pseudo.voxel_count(2), 0);
        assert_eq!(log.ops, vec![NoiseOp::Delete { label: 2 }]);
    }

    #[test]
    fn shift_overlap_matches_direct_count() {
        // Ball of radius 10 shifted by 2 voxels along x.
        let catalog = crate::volume::StructureCatalog::new(
            "t",
            vec![crate::volume::StructureEntry { label: 1, name: "ball".into(), kind: StructureKind::Organ }],
        )
        .unwrap();
        let dims = crate::volume::Dims::cube(32);
        let mut labels = vec![BACKGROUND; dims.len()];
        paint_ball(&mut labels, dims, [16, 16, 16], 10.0, BACKGROUND, 1);
        let gold = LabelMap::new(dims, Default::default(), labels, &catalog).unwrap();
        let mut moved = gold.clone();
        NoiseOp::Shift { label: 1, offset: [2, 0, 0] }.apply(&mut moved);

        // Independent count: voxel (x,y,z) is in both balls iff it and (x-2,y,z) are within 10.
        let inside = |x: i64, y: i64, z: i64| (x - 16).pow(2) + (y - 16).pow(2) + (z - 16).pow(2) <= 100;
        let (mut both, mut size) = (0usize, 0usize);
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    size += inside(x, y, z) as usize;
                    both += (inside(x, y, z) && inside(x - 2, y, z)) as usize;
                }
            }
        }
        let expected = 2.0 * both as f64 / (2 * size) as f64;
        let got: f64 = dsc(&gold.mask_of(1), &moved.mask_of(1)).unwrap();
        assert_eq!(got, expected);
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn fragment_splits_structure() {
        let (spec, _, case) = setup();
        let mut map = case.pseudo.clone();
        let op = fragment_op(&map.mask_of(1), 1, 3).unwrap();
        op.apply(&mut map);
        assert!(connected_components(&map.mask_of(1), Connectivity::TwentySix).count() >= 2);
        let _ = spec;
    }

    #[test]
    fn replay_reproduces_pseudo_and_gold_is_untouched() {
        let (spec, mut noise, case) = setup();
        noise.rates = NoiseRates { delete: 0.2, shift: 0.5, fragment: 0.5, spurious: 0.5, boundary_jitter: 0.5 };
        noise.tumor_miss = 0.5;
        noise.tumor_fp_rate = 0.8;
        for seed in 0..6 {
            let (out, log) = inject_noise(&case, &spec, &noise, seed).unwrap();
            assert_eq!(out.gold, case.gold);
            assert_eq!(log.replay(case.gold.as_ref().unwrap()), out.pseudo);
        }
    }
}
