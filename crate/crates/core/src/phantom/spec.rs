use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Spacing, StructureCatalog, StructureEntry, StructureKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intensity {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ellipsoid,
    /// Axis along z; radii are the x and y semi-axes and the half-height.
    Cylinder,
    /// Uses `radii[0]` on every axis.
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub label: u16,
    pub name: String,
    pub kind: StructureKind,
    pub shape: Shape,
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub intensity: Intensity,
}

impl StructureSpec {
    pub fn effective_radii(&self) -> [f64; 3] {
        match self.shape {
            Shape::Sphere => [self.radii[0]; 3],
            _ => self.radii,
        }
    }

    /// Whether the normalized point `p` lies inside the shape.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let r = self.effective_radii();
        let q = [0, 1, 2].map(|k| (p[k] - self.center[k]) / r[k]);
        match self.shape {
            Shape::Ellipsoid | Shape::Sphere => q[0] * q[0] + q[1] * q[1] + q[2] * q[2] <= 1.0,
            Shape::Cylinder => q[0] * q[0] + q[1] * q[1] <= 1.0 && q[2].abs() <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TumorSpec {
    pub label: u16,
    pub name: String,
    /// Name of the structure tumors grow in.
    pub host: String,
    /// Inclusive range of tumors placed per case.
    pub count: [u32; 2],
    /// Normalized radius range (fraction of the x extent).
    pub radius: [f64; 2],
    /// Added to the host's mean intensity.
    pub intensity_offset: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnatomyJitter {
    pub center: f64,
    pub radius_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub catalog_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub background: Intensity,
    #[serde(default = "no_jitter")]
    pub jitter: AnatomyJitter,
    #[serde(default)]
    pub structures: Vec<StructureSpec>,
    #[serde(default)]
    pub tumor: Option<TumorSpec>,
}

fn no_jitter() -> AnatomyJitter {
    AnatomyJitter { center: 0.0, radius_scale: 0.0 }
}

impl PhantomSpec {
    pub fn dims(&self) -> Dims {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn spacing(&self) -> Spacing {
        Spacing(self.spacing)
    }

    pub fn structure(&self, name: &str) -> Option<&StructureSpec> {
        self.structures.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.dims.iter().any(|d| *d == 0) {
            return bad(format!("dims must be positive: {:?}", self.dims));
        }
        self.spacing().validate()?;
        if !(self.background.std > 0.0) {
            return bad("background std must be positive".into());
        }
        let j = self.jitter;
        if !(0.0..0.5).contains(&j.center) || !(0.0..1.0).contains(&j.radius_scale) {
            return bad(format!("invalid anatomy jitter {j:?}"));
        }
        for s in &self.structures {
            if s.kind == StructureKind::Tumor {
                return bad(format!("`{}`: tumors are declared in [phantom.tumor]", s.name));
            }
            let r = s.effective_radii();
            if r.iter().any(|v| !(*v > 0.0)) {
                return bad(format!("`{}`: radii must be positive", s.name));
            }
            if !(s.intensity.std > 0.0) {
                return bad(format!("`{}`: intensity std must be positive", s.name));
            }
            let grow = 1.0 + j.radius_scale;
            for k in 0..3 {
                let lo = s.center[k] - j.center - r[k] * grow;
                let hi = s.center[k] + j.center + r[k] * grow;
                if lo < 0.0 || hi > 1.0 {
                    return bad(format!("`{}` leaves the unit cube along axis {k}", s.name));
                }
            }
        }
        if let Some(t) = &self.tumor {
            if self.structure(&t.host).is_none() {
                return bad(format!("tumor host `{}` is not a declared structure", t.host));
            }
            if t.count[0] > t.count[1] || t.radius[0] > t.radius[1] || !(t.radius[0] > 0.0) {
                return bad("tumor count/radius ranges must be ordered and positive".into());
            }
            if !(t.std > 0.0) {
                return bad("tumor intensity std must be positive".into());
            }
        }
        self.catalog().map(|_| ())
    }

    /// Catalog implied by the declared structures plus the tumor entry.
    pub fn catalog(&self) -> Result<StructureCatalog> {
        let mut entries: Vec<StructureEntry> = self
            .structures
            .iter()
            .map(|s| StructureEntry { label: s.label, name: s.name.clone(), kind: s.kind })
            .collect();
        if let Some(t) = &self.tumor {
            entries.push(StructureEntry { label: t.label, name: t.name.clone(), kind: StructureKind::Tumor });
        }
        entries.sort_by_key(|e| e.label);
        StructureCatalog::new(self.catalog_id.clone(), entries)
    }
}

/// Per-structure corruption probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRates {
    pub delete: f64,
    pub shift: f64,
    pub fragment: f64,
    pub spurious: f64,
    pub boundary_jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOverride {
    pub delete: Option<f64>,
    pub shift: Option<f64>,
    pub fragment: Option<f64>,
    pub spurious: Option<f64>,
    pub boundary_jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub rates: NoiseRates,
    #[serde(default)]
    pub overrides: BTreeMap<String, NoiseOverride>,
    /// Inclusive range of shift lengths in voxels.
    pub shift_voxels: [u32; 2],
    /// Thickness in voxels of the slab removed by a fragment operation.
    pub fragment_gap: u32,
    /// Radius range in voxels of spurious blobs.
    pub spurious_radius: [f64; 2],
    /// Probability that each tumor instance is left unannotated.
    pub tumor_miss: f64,
    /// Probability that a case gains one false tumor blob.
    pub tumor_fp_rate: f64,
    pub tumor_fp_radius: [f64; 2],
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self {
            rates: NoiseRates::default(),
            overrides: BTreeMap::new(),
            shift_voxels: [1, 1],
            fragment_gap: 1,
            spurious_radius: [1.0, 1.0],
            tumor_miss: 0.0,
            tumor_fp_rate: 0.0,
            tumor_fp_radius: [1.0, 1.0],
        }
    }

    pub fn rates_for(&self, name: &str) -> NoiseRates {
        let mut r = self.rates;
        if let Some(o) = self.overrides.get(name) {
            r.delete = o.delete.unwrap_or(r.delete);
            r.shift = o.shift.unwrap_or(r.shift);
            r.fragment = o.fragment.unwrap_or(r.fragment);
            r.spurious = o.spurious.unwrap_or(r.spurious);
            r.boundary_jitter = o.boundary_jitter.unwrap_or(r.boundary_jitter);
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let all_rates = std::iter::once(self.rates).chain(self.overrides.keys().map(|k| self.rates_for(k)));
        for r in all_rates {
            if ![r.delete, r.shift, r.fragment, r.spurious, r.boundary_jitter].into_iter().all(prob) {
                return Err(Error::Spec(format!("noise probabilities must lie in [0, 1]: {r:?}")));
            }
        }
        if !prob(self.tumor_miss) || !prob(self.tumor_fp_rate) {
            return Err(Error::Spec("tumor noise probabilities must lie in [0, 1]".into()));
        }
        if self.shift_voxels[0] > self.shift_voxels[1]
            || self.spurious_radius[0] > self.spurious_radius[1]
            || self.tumor_fp_radius[0] > self.tumor_fp_radius[1]
            || self.fragment_gap == 0
        {
            return Err(Error::Spec("noise parameter ranges must be ordered and nonempty".into()));
        }
        Ok(())
    }
}

/// Variation applied to freshly generated training phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    /// Each structure's mean intensity moves by up to this amount.
    pub intensity_jitter: f64,
    /// Tumor radii are scaled by a factor drawn from this range.
    pub tumor_radius_scale: [f64; 2],
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { intensity_jitter: 0.0, tumor_radius_scale: [1.0, 1.0] }
    }
}
