use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{count_components_2d, Label, Overlay, StructureCatalog};

/// Relative weight of each criterion in the product score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionWeights {
    pub centroid: f64,
    pub components: f64,
    pub vertical_extent: f64,
    pub elongation: f64,
}

/// Normalized rectangle on the front view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidBox {
    pub x: [f64; 2],
    pub z: [f64; 2],
}

/// Expected appearance of one structure on the front view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnatomicalPrior {
    pub structure: String,
    #[serde(skip)]
    pub label: Label,
    pub centroid_box: CentroidBox,
    /// Inclusive range of 8-connected overlay components.
    pub components: [u32; 2],
    /// Expected normalized z interval covered by the overlay.
    pub vertical_extent: [f64; 2],
    /// Range of physical height / width of the overlay bounding box.
    pub elongation: [f64; 2],
    pub weights: CriterionWeights,
    /// Instruction text forwarded to external judges.
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorTable {
    /// Normalized distance outside the centroid box at which that criterion reaches 0.
    pub centroid_falloff: f64,
    /// Score differences below this are ties.
    pub tie_epsilon: f64,
    #[serde(rename = "prior")]
    pub priors: Vec<AnatomicalPrior>,
}

fn unit_range(r: [f64; 2]) -> bool {
    r[0] <= r[1] && r[0] >= 0.0 && r[1] <= 1.0
}

impl AnatomicalPrior {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("prior `{}`: {what}", self.structure)));
        if !unit_range(self.centroid_box.x) || !unit_range(self.centroid_box.z) {
            return bad("centroid box must be a nonempty range inside [0, 1]");
        }
        if !unit_range(self.vertical_extent) || self.vertical_extent[0] == self.vertical_extent[1] {
            return bad("vertical extent must be a nonempty range inside [0, 1]");
        }
        if self.components[0] > self.components[1] || self.components[0] == 0 {
            return bad("component range must be ordered and start at 1 or more");
        }
        if !(self.elongation[0] > 0.0 && self.elongation[0] <= self.elongation[1]) {
            return bad("elongation range must be positive and ordered");
        }
        let w = self.weights;
        if [w.centroid, w.components, w.vertical_extent, w.elongation].iter().any(|v| !(*v >= 0.0)) {
            return bad("weights must be nonnegative");
        }
        Ok(())
    }
}

impl PriorTable {
    /// Parses a table and binds every entry to a catalog label.
    pub fn from_toml_str(text: &str, catalog: &StructureCatalog) -> Result<Self> {
        let mut table: PriorTable = toml::from_str(text)?;
        if !(table.centroid_falloff > 0.0) || !(table.tie_epsilon >= 0.0) {
            return Err(Error::Config("centroid_falloff must be positive, tie_epsilon nonnegative".into()));
        }
        for p in &mut table.priors {
            p.validate()?;
            p.label = catalog
                .by_name(&p.structure)
                .ok_or_else(|| Error::Config(format!("prior for unknown structure `{}`", p.structure)))?
                .label;
        }
        for l in catalog.labels() {
            if table.priors.iter().filter(|p| p.label == l).count() != 1 {
                return Err(Error::Config(format!(
                    "prior table needs exactly one entry for `{}`",
                    catalog.name(l)
                )));
            }
        }
        Ok(table)
    }

    pub fn get(&self, label: Label) -> Option<&AnatomicalPrior> {
        self.priors.iter().find(|p| p.label == label)
    }
}

/// Geometric summary of a nonempty overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayFeatures {
    /// Normalized (x, z) centroid of the set pixels.
    pub centroid: [f64; 2],
    pub components: u32,
    /// Normalized z interval spanned by set pixels.
    pub z_span: [f64; 2],
    /// Physical bounding-box height over width.
    pub elongation: f64,
}

pub fn overlay_features(overlay: &Overlay) -> Option<OverlayFeatures> {
    let (w, h) = (overlay.width, overlay.height);
    let (mut sx, mut sz, mut n) = (0.0, 0.0, 0usize);
    let (mut x0, mut x1, mut z0, mut z1) = (usize::MAX, 0, usize::MAX, 0);
    for z in 0..h {
        for x in 0..w {
            if overlay.get(x, z) {
                sx += x as f64 + 0.5;
                sz += z as f64 + 0.5;
                n += 1;
                x0 = x0.min(x);
                x1 = x1.max(x);
                z0 = z0.min(z);
                z1 = z1.max(z);
            }
        }
    }
    if n == 0 {
        return None;
    }
    let [px, pz] = overlay.pixel_size();
    Some(OverlayFeatures {
        centroid: [sx / n as f64 / w as f64, sz / n as f64 / h as f64],
        components: count_components_2d(w, h, &overlay.pixels) as u32,
        z_span: [z0 as f64 / h as f64, (z1 + 1) as f64 / h as f64],
        elongation: ((z1 - z0 + 1) as f64 * pz) / ((x1 - x0 + 1) as f64 * px),
    })
}

/// Per-criterion scores in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionScores {
    pub centroid: f64,
    pub components: f64,
    pub vertical_extent: f64,
    pub elongation: f64,
}

impl CriterionScores {
    pub fn combine(&self, w: &CriterionWeights) -> f64 {
        self.centroid.powf(w.centroid)
            * self.components.powf(w.components)
            * self.vertical_extent.powf(w.vertical_extent)
            * self.elongation.powf(w.elongation)
    }
}

pub fn criterion_scores(prior: &AnatomicalPrior, f: &OverlayFeatures, falloff: f64) -> CriterionScores {
    let b = prior.centroid_box;
    let dx = (b.x[0] - f.centroid[0]).max(f.centroid[0] - b.x[1]).max(0.0);
    let dz = (b.z[0] - f.centroid[1]).max(f.centroid[1] - b.z[1]).max(0.0);
    let centroid = (1.0 - dx.hypot(dz) / falloff).max(0.0);

    let [lo, hi] = prior.components;
    let miss = if f.components < lo { lo - f.components } else { f.components.saturating_sub(hi) };
    let components = 1.0 / (1.0 + miss as f64);

    let [e0, e1] = prior.vertical_extent;
    let inter = (f.z_span[1].min(e1) - f.z_span[0].max(e0)).max(0.0);
    let union = f.z_span[1].max(e1) - f.z_span[0].min(e0);
    let vertical_extent = inter / union;

    let [l0, l1] = prior.elongation;
    let elongation = if f.elongation < l0 {
        f.elongation / l0
    } else if f.elongation > l1 {
        l1 / f.elongation
    } else {
        1.0
    };
    CriterionScores { centroid, components, vertical_extent, elongation }
}

/// Weighted product of the criterion scores; an empty overlay scores 0.
pub fn score_overlay(prior: &AnatomicalPrior, overlay: &Overlay, falloff: f64) -> f64 {
    match overlay_features(overlay) {
        None => 0.0,
        Some(f) => criterion_scores(prior, &f, falloff).combine(&prior.weights),
    }
}
