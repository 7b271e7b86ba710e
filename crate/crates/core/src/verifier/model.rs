use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::roc::ProbabilityMap;
use crate::volume::{
    connected_components, largest_component, CaseRecord, Connectivity, Dims, Label, LabelMap,
    StructureCatalog, StructureKind, VoxelGrid, BACKGROUND,
};

/// Minimum standard deviation, in intensity units.
pub const STD_FLOOR: f64 = 1e-3;

/// Something that labels volumes and scores tumor probability.
pub trait SegmentationModel: Send + Sync {
    fn predict(&self, volume: &VoxelGrid<f32>) -> Result<LabelMap>;
    fn predict_prob(&self, volume: &VoxelGrid<f32>, label: Label) -> Result<ProbabilityMap<f32>>;
}

/// Normalized axis-aligned box, `[lo, hi]` per axis in voxel-edge coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl PriorBox {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureModel {
    pub label: Label,
    pub name: String,
    pub kind: StructureKind,
    /// `None` when no training voxel carried the label.
    pub fit: Option<GaussianFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
    pub prior_box: PriorBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFit {
    pub mean: f64,
    pub std: f64,
}

/// Per-structure Gaussian intensity classifier gated by learned boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianIntensityModel {
    pub catalog: StructureCatalog,
    pub background: BackgroundFit,
    pub structures: Vec<StructureModel>,
    /// Tumor components smaller than this are dropped from predictions.
    pub min_tumor_voxels: usize,
}

pub const DEFAULT_MIN_TUMOR_VOXELS: usize = 4;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    w: f64,
    wv: f64,
    wv2: f64,
}

impl Moments {
    fn add(&mut self, v: f64, w: f64) {
        self.w += w;
        self.wv += w * v;
        self.wv2 += w * v * v;
    }

    fn merge(&mut self, o: &Moments, w: f64) {
        self.w += w * o.w;
        self.wv += w * o.wv;
        self.wv2 += w * o.wv2;
    }

    fn mean_std(&self) -> (f64, f64) {
        let mean = self.wv / self.w;
        let var = (self.wv2 / self.w - mean * mean).max(0.0);
        (mean, var.sqrt().max(STD_FLOOR))
    }
}

/// Streaming sufficient statistics for [`GaussianIntensityModel`].
///
/// Samples may be added in several passes with different weights; the fit
/// only depends on the weighted sums, so continuing an accumulator with a
/// heavily weighted subset acts as a fine-tuning pass.
#[derive(Debug, Clone)]
pub struct ModelAccumulator {
    catalog: StructureCatalog,
    slot: Vec<Option<usize>>,
    background: Moments,
    structures: Vec<Moments>,
    boxes: Vec<Option<PriorBox>>,
}

impl ModelAccumulator {
    pub fn new(catalog: &StructureCatalog) -> Self {
        let max = catalog.labels().map(|l| l as usize).max().unwrap_or(0);
        let mut slot = vec![None; max + 1];
        for (k, l) in catalog.labels().enumerate() {
            slot[l as usize] = Some(k);
        }
        let n = catalog.entries().len();
        Self {
            catalog: catalog.clone(),
            slot,
            background: Moments::default(),
            structures: vec![Moments::default(); n],
            boxes: vec![None; n],
        }
    }

    pub fn add(&mut self, volume: &VoxelGrid<f32>, labels: &LabelMap, weight: f64) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Spec(format!("sample weight {weight} must be finite and nonnegative")));
        }
        if !labels.matches_grid(volume) {
            return Err(Error::shape("training labels do not share the volume lattice"));
        }
        if labels.catalog_id() != self.catalog.id() {
            return Err(Error::Catalog(format!(
                "training labels drawn from `{}`, model uses `{}`",
                labels.catalog_id(),
                self.catalog.id()
            )));
        }
        if weight == 0.0 {
            return Ok(());
        }
        // Per-sample sums first so the weight multiplies exact per-case totals.
        let mut bg = Moments::default();
        let mut per = vec![Moments::default(); self.structures.len()];
        for (&l, &v) in labels.labels().iter().zip(volume.data()) {
            let v = v as f64;
            match self.slot.get(l as usize).copied().flatten() {
                Some(k) => per[k].add(v, 1.0),
                None => bg.add(v, 1.0),
            }
        }
        self.background.merge(&bg, weight);
        let dims = labels.dims();
        for (k, entry) in self.catalog.entries().iter().enumerate() {
            if per[k].w == 0.0 {
                continue;
            }
            self.structures[k].merge(&per[k], weight);
            let mask = labels.mask_of(entry.label);
            let support = match entry.kind {
                StructureKind::Tumor => mask,
                _ => largest_component(&mask, Connectivity::TwentySix),
            };
            let (lo, hi) = support.bounding_box().expect("structure has voxels");
            let b = normalized_box(dims, lo, hi);
            self.boxes[k] = Some(match self.boxes[k] {
                None => b,
                Some(a) => PriorBox {
                    lo: [0, 1, 2].map(|i| a.lo[i].min(b.lo[i])),
                    hi: [0, 1, 2].map(|i| a.hi[i].max(b.hi[i])),
                },
            });
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<GaussianIntensityModel> {
        if self.background.w == 0.0 && self.structures.iter().all(|m| m.w == 0.0) {
            return Err(Error::EmptyInput("training set carries no positive weight"));
        }
        let background = if self.background.w > 0.0 {
            let (mean, std) = self.background.mean_std();
            BackgroundFit { mean, std }
        } else {
            BackgroundFit { mean: 0.0, std: 1.0 }
        };
        let structures = self
            .catalog
            .entries()
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let fit = (self.structures[k].w > 0.0).then(|| {
                    let (mean, std) = self.structures[k].mean_std();
                    GaussianFit { mean, std, prior_box: self.boxes[k].expect("box tracks moments") }
                });
                if fit.is_none() {
                    log::warn!("structure `{}` has no labeled voxels; left unmodeled", e.name);
                }
                StructureModel { label: e.label, name: e.name.clone(), kind: e.kind, fit }
            })
            .collect();
        Ok(GaussianIntensityModel {
            catalog: self.catalog.clone(),
            background,
            structures,
            min_tumor_voxels: DEFAULT_MIN_TUMOR_VOXELS,
        })
    }
}

fn normalized_box(dims: Dims, lo: [usize; 3], hi: [usize; 3]) -> PriorBox {
    let n = [dims.x, dims.y, dims.z].map(|v| v as f64);
    PriorBox {
        lo: [0, 1, 2].map(|k| lo[k] as f64 / n[k]),
        hi: [0, 1, 2].map(|k| (hi[k] + 1) as f64 / n[k]),
    }
}

/// Fits on the pseudo labels of `cases`, optionally weighted per case.
pub fn fit_model(
    cases: &[CaseRecord],
    weights: Option<&[f64]>,
    catalog: &StructureCatalog,
) -> Result<GaussianIntensityModel> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("cannot fit a model on an empty corpus"));
    }
    if let Some(w) = weights {
        if w.len() != cases.len() {
            return Err(Error::Spec(format!("{} weights for {} cases", w.len(), cases.len())));
        }
        if w.iter().any(|v| !(*v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Spec("weights must be nonnegative and not all zero".into()));
        }
    }
    let mut acc = ModelAccumulator::new(catalog);
    for (i, case) in cases.iter().enumerate() {
        acc.add(&case.volume, &case.pseudo, weights.map_or(1.0, |w| w[i]))?;
    }
    acc.finish()
}

fn log_density(v: f64, mean: f64, std: f64) -> f64 {
    let z = (v - mean) / std;
    -std.ln() - 0.5 * z * z
}

impl GaussianIntensityModel {
    pub fn structure(&self, label: Label) -> Option<&StructureModel> {
        self.structures.iter().find(|s| s.label == label)
    }

    /// Stable identifier: SHA-256 of the JSON-serialized parameters.
    pub fn snapshot_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn check(&self, volume: &VoxelGrid<f32>) -> Result<()> {
        if volume.data().is_empty() {
            return Err(Error::EmptyInput("volume has no voxels"));
        }
        Ok(())
    }

    /// Per voxel: gated structure log densities, background last.
    fn scores(&self, dims: Dims, i: usize, v: f64, out: &mut Vec<(Label, f64)>) {
        out.clear();
        let c = dims.point(i);
        let p = [
            (c[0] as f64 + 0.5) / dims.x as f64,
            (c[1] as f64 + 0.5) / dims.y as f64,
            (c[2] as f64 + 0.5) / dims.z as f64,
        ];
        for s in &self.structures {
            if let Some(f) = &s.fit {
                if f.prior_box.contains(p) {
                    out.push((s.label, log_density(v, f.mean, f.std)));
                }
            }
        }
    }

    /// Voxel-wise decision before connected-component cleanup.
    pub fn raw_labels(&self, volume: &VoxelGrid<f32>) -> Vec<Label> {
        let dims = volume.dims();
        let bg = self.background;
        let mut buf = Vec::new();
        volume
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let v = v as f64;
                self.scores(dims, i, v, &mut buf);
                let mut best = (BACKGROUND, log_density(v, bg.mean, bg.std));
                for &(l, s) in &buf {
                    if s > best.1 {
                        best = (l, s);
                    }
                }
                best.0
            })
            .collect()
    }
}

impl SegmentationModel for GaussianIntensityModel {
    fn predict(&self, volume: &VoxelGrid<f32>) -> Result<LabelMap> {
        self.check(volume)?;
        let dims = volume.dims();
        let raw = LabelMap::new(dims, volume.spacing(), self.raw_labels(volume), &self.catalog)?;
        let mut out = vec![BACKGROUND; dims.len()];
        for s in &self.structures {
            let mask = raw.mask_of(s.label);
            let kept = match s.kind {
                StructureKind::Tumor => connected_components(&mask, Connectivity::Six)
                    .filter_mask(|_, size| size >= self.min_tumor_voxels),
                _ => largest_component(&mask, Connectivity::TwentySix),
            };
            for i in kept.indices() {
                out[i] = s.label;
            }
        }
        LabelMap::new(dims, volume.spacing(), out, &self.catalog)
    }

    fn predict_prob(&self, volume: &VoxelGrid<f32>, label: Label) -> Result<ProbabilityMap<f32>> {
        self.check(volume)?;
        if !self.catalog.contains(label) {
            return Err(Error::UnknownLabel { label, catalog: self.catalog.id().to_string() });
        }
        let dims = volume.dims();
        let bg = self.background;
        let mut buf = Vec::new();
        let probs = volume
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let v = v as f64;
                self.scores(dims, i, v, &mut buf);
                let Some(&(_, own)) = buf.iter().find(|(l, _)| *l == label) else {
                    return 0.0f32;
                };
                // Posterior under equal priors, computed relative to the target.
                let mut denom = (log_density(v, bg.mean, bg.std) - own).exp();
                for &(_, s) in &buf {
                    denom += (s - own).exp();
                }
                (1.0 / denom).clamp(0.0, 1.0) as f32
            })
            .collect();
        ProbabilityMap::new(dims, volume.spacing(), probs)
    }
}
