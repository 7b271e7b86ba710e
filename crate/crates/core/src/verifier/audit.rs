use serde::{Deserialize, Serialize};

use super::model::SegmentationModel;
use crate::error::{Error, Result};
use crate::metrics::dsc;
use crate::volume::{CaseRecord, Label, LabelMap, StructureCatalog, StructureKind, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Keep,
    AutoReplace,
    RouteToExpert,
}

/// DSC cut points for the audit decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditThresholds {
    /// Structures at or below this DSC are replaced outright.
    pub auto_replace_dsc: f64,
    /// Structures below this DSC (and above the replacement cut) go to the expert.
    pub route_dsc: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self { auto_replace_dsc: 0.0, route_dsc: 0.5 }
    }
}

impl AuditThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.auto_replace_dsc)
            && (0.0..=1.0).contains(&self.route_dsc)
            && self.auto_replace_dsc <= self.route_dsc;
        if !ok {
            return Err(Error::Config(format!("invalid audit thresholds {self:?}")));
        }
        Ok(())
    }

    pub fn action(&self, dsc: f64) -> AuditAction {
        if dsc <= self.auto_replace_dsc {
            AuditAction::AutoReplace
        } else if dsc < self.route_dsc {
            AuditAction::RouteToExpert
        } else {
            AuditAction::Keep
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureAudit {
    pub label: Label,
    pub dsc: f64,
    pub action: AuditAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub case_id: String,
    pub structures: Vec<StructureAudit>,
}

impl AuditOutcome {
    pub fn with_action(&self, action: AuditAction) -> impl Iterator<Item = &StructureAudit> {
        self.structures.iter().filter(move |s| s.action == action)
    }

    pub fn mean_dsc(&self) -> f64 {
        if self.structures.is_empty() {
            return 1.0;
        }
        self.structures.iter().map(|s| s.dsc).sum::<f64>() / self.structures.len() as f64
    }
}

/// Model prediction for a case, with tumor voxels removed when the report
/// states that no tumor is present.
pub fn predict_for_case(
    model: &dyn SegmentationModel,
    case: &CaseRecord,
    catalog: &StructureCatalog,
) -> Result<LabelMap> {
    let mut pred = model.predict(&case.volume)?;
    if !case.report.tumor_present() {
        for t in catalog.tumor_labels() {
            pred.clear_label(t);
        }
    }
    Ok(pred)
}

/// Compares every catalog structure of `case.pseudo` with `prediction`.
pub fn audit_against(
    case: &CaseRecord,
    prediction: &LabelMap,
    catalog: &StructureCatalog,
    thresholds: &AuditThresholds,
) -> Result<AuditOutcome> {
    case.pseudo.ensure_same_grid(prediction)?;
    let structures = catalog
        .labels()
        .map(|label| {
            let d: f64 = dsc(&case.pseudo.mask_of(label), &prediction.mask_of(label))?;
            Ok(StructureAudit { label, dsc: d, action: thresholds.action(d) })
        })
        .collect::<Result<_>>()?;
    Ok(AuditOutcome { case_id: case.case_id.clone(), structures })
}

pub fn audit_case(
    model: &dyn SegmentationModel,
    case: &CaseRecord,
    catalog: &StructureCatalog,
    thresholds: &AuditThresholds,
) -> Result<AuditOutcome> {
    let pred = predict_for_case(model, case, catalog)?;
    audit_against(case, &pred, catalog, thresholds)
}

/// One structure's voxel count before and after an update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub case_id: String,
    pub structure: String,
    pub action: String,
    pub voxels_before: usize,
    pub voxels_after: usize,
    /// Voxels of other structures the write displaced.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub displaced: usize,
    /// Voxels not written because a tumor label held them.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub blocked: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLog {
    pub records: Vec<ChangeRecord>,
}

impl ChangeLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: ChangeLog) {
        self.records.extend(other.records);
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("change records serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }
}

/// Replaces `label` in `map` by the voxels of `label` in `source`.
///
/// Old voxels of the label are cleared to background first. A tumor label
/// overwrites anything; other labels overwrite anything except tumor voxels.
pub fn replace_structure(
    map: &mut LabelMap,
    source: &LabelMap,
    label: Label,
    catalog: &StructureCatalog,
    case_id: &str,
    action: &str,
) -> Result<ChangeRecord> {
    map.ensure_same_grid(source)?;
    let is_tumor = catalog.kind(label) == Some(StructureKind::Tumor);
    let before = map.clear_label(label);
    let (mut displaced, mut blocked, mut after) = (0, 0, 0);
    for i in 0..source.labels().len() {
        if source.at(i) != label {
            continue;
        }
        let cur = map.at(i);
        if cur != BACKGROUND && !is_tumor && catalog.kind(cur) == Some(StructureKind::Tumor) {
            blocked += 1;
            continue;
        }
        if cur != BACKGROUND {
            displaced += 1;
        }
        map.set_at(i, label);
        after += 1;
    }
    Ok(ChangeRecord {
        case_id: case_id.to_string(),
        structure: catalog.name(label).to_string(),
        action: action.to_string(),
        voxels_before: before,
        voxels_after: after,
        displaced,
        blocked,
    })
}

/// Applies every `auto_replace` decision of `outcome` using `prediction`.
pub fn apply_update_with(
    case: &CaseRecord,
    outcome: &AuditOutcome,
    prediction: &LabelMap,
    catalog: &StructureCatalog,
) -> Result<(CaseRecord, ChangeLog)> {
    if outcome.case_id != case.case_id {
        return Err(Error::Invariant(format!(
            "audit outcome for `{}` applied to case `{}`",
            outcome.case_id, case.case_id
        )));
    }
    let mut updated = case.clone();
    let mut log = ChangeLog::default();
    // Tumor replacements run last so that their precedence holds regardless
    // of catalog order.
    let mut labels: Vec<Label> = outcome.with_action(AuditAction::AutoReplace).map(|s| s.label).collect();
    labels.sort_by_key(|l| (catalog.kind(*l) == Some(StructureKind::Tumor), *l));
    for label in labels {
        let rec = replace_structure(&mut updated.pseudo, prediction, label, catalog, &case.case_id, "auto_replace")?;
        if rec.displaced > 0 || rec.blocked > 0 {
            log::debug!(
                "case {}: replacing `{}` displaced {} voxels, {} blocked by tumor",
                case.case_id,
                rec.structure,
                rec.displaced,
                rec.blocked
            );
        }
        log.records.push(rec);
    }
    Ok((updated, log))
}

pub fn apply_update_rule(
    case: &CaseRecord,
    outcome: &AuditOutcome,
    model: &dyn SegmentationModel,
    catalog: &StructureCatalog,
) -> Result<(CaseRecord, ChangeLog)> {
    if outcome.with_action(AuditAction::AutoReplace).next().is_none() {
        return Ok((case.clone(), ChangeLog::default()));
    }
    let pred = predict_for_case(model, case, catalog)?;
    apply_update_with(case, outcome, &pred, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::phantom::{generate_case, generate_corpus, NoiseRates, NoiseSpec};
    use crate::verifier::fit_model;
    use crate::volume::{CaseMeta, Dims, Phase, Sex, Spacing, StructureEntry, StructuredReport, VoxelGrid};
    use proptest::prelude::*;

    fn catalog() -> StructureCatalog {
        let e = |label, name: &str| StructureEntry { label, name: name.into(), kind: StructureKind::Organ };
        StructureCatalog::new("toy", vec![e(1, "a"), e(2, "b")]).unwrap()
    }

    fn map(labels: Vec<Label>) -> LabelMap {
        LabelMap::new(Dims::new(labels.len(), 1, 1), Spacing::default(), labels, &catalog()).unwrap()
    }

    fn case(pseudo: LabelMap) -> CaseRecord {
        let volume = VoxelGrid::filled(pseudo.dims(), Spacing::default(), 0.0f32).unwrap();
        let meta = CaseMeta { age: 60, sex: Sex::Male, phase: Phase::Arterial, is_gold: false };
        CaseRecord::new("c", volume, pseudo, None, StructuredReport::negative(), meta).unwrap()
    }

    fn action_of(o: &AuditOutcome, label: Label) -> (f64, AuditAction) {
        let s = o.structures.iter().find(|s| s.label == label).unwrap();
        (s.dsc, s.action)
    }

    #[test]
    fn identical_maps_keep_everything() {
        let m = map(vec![1, 1, 2, 0, 2]);
        let o = audit_against(&case(m.clone()), &m, &catalog(), &AuditThresholds::default()).unwrap();
        assert!(o.structures.iter().all(|s| s.dsc == 1.0 && s.action == AuditAction::Keep));
    }

    #[test]
    fn structure_missing_from_the_annotation_is_replaced() {
        let pseudo = map(vec![1, 1, 0, 0]);
        let pred = map(vec![1, 1, 2, 2]);
        let o = audit_against(&case(pseudo), &pred, &catalog(), &AuditThresholds::default()).unwrap();
        assert_eq!(action_of(&o, 2), (0.0, AuditAction::AutoReplace));
        assert_eq!(action_of(&o, 1), (1.0, AuditAction::Keep));
    }

    #[test]
    fn partial_overlap_of_three_tenths_is_routed() {
        // Two 10-voxel masks sharing 3 voxels: 2*3/20.
        let mut pseudo = vec![0; 17];
        let mut pred = vec![0; 17];
        pseudo[..10].fill(1);
        pred[7..17].fill(1);
        let o = audit_against(&case(map(pseudo)), &map(pred), &catalog(), &AuditThresholds::default()).unwrap();
        let (d, a) = action_of(&o, 1);
        assert!((d - 0.3).abs() < 1e-12);
        assert_eq!(a, AuditAction::RouteToExpert);
    }

    #[test]
    fn all_keep_leaves_the_case_alone() {
        let m = map(vec![1, 2, 0]);
        let c = case(m.clone());
        let o = audit_against(&c, &m, &catalog(), &AuditThresholds::default()).unwrap();
        let (updated, log) = apply_update_with(&c, &o, &m, &catalog()).unwrap();
        assert_eq!(updated, c);
        assert!(log.is_empty());
    }

    #[test]
    fn replacement_is_idempotent_under_the_same_model() {
        let spec = RunConfig::default_config().phantom;
        let cat = spec.catalog().unwrap();
        let clean: Vec<_> = (0..4).map(|s| generate_case(&spec, s).unwrap()).collect();
        let model = fit_model(&clean, None, &cat).unwrap();
        let mut c = clean[0].clone();
        c.pseudo.clear_label(1);
        let t = AuditThresholds::default();
        let o = audit_case(&model, &c, &cat, &t).unwrap();
        assert_eq!(action_of(&o, 1).1, AuditAction::AutoReplace);
        let (updated, log) = apply_update_rule(&c, &o, &model, &cat).unwrap();
        assert_eq!(log.records.len(), o.with_action(AuditAction::AutoReplace).count());
        assert_eq!(log.records[0].voxels_before, 0);
        let again = audit_case(&model, &updated, &cat, &t).unwrap();
        assert_eq!(action_of(&again, 1).0, 1.0);
        assert_eq!(again.with_action(AuditAction::AutoReplace).count(), 0);
    }

    #[test]
    fn tumor_voxels_block_organ_replacement() {
        let cat = StructureCatalog::new(
            "toy",
            vec![
                StructureEntry { label: 1, name: "a".into(), kind: StructureKind::Organ },
                StructureEntry { label: 2, name: "t".into(), kind: StructureKind::Tumor },
            ],
        )
        .unwrap();
        let mk = |l: Vec<Label>| LabelMap::new(Dims::new(4, 1, 1), Spacing::default(), l, &cat).unwrap();
        let mut m = mk(vec![2, 0, 0, 0]);
        let rec = replace_structure(&mut m, &mk(vec![1, 1, 1, 0]), 1, &cat, "c", "auto_replace").unwrap();
        assert_eq!(m.labels(), &[2, 1, 1, 0]);
        assert_eq!((rec.voxels_after, rec.blocked, rec.displaced), (2, 1, 0));
        let rec = replace_structure(&mut m, &mk(vec![0, 2, 0, 0]), 2, &cat, "c", "auto_replace").unwrap();
        assert_eq!(m.labels(), &[0, 2, 1, 0]);
        assert_eq!((rec.voxels_before, rec.displaced), (1, 1));
    }

    #[test]
    fn change_log_round_trips_through_json_lines() {
        let log = ChangeLog {
            records: vec![ChangeRecord {
                case_id: "c".into(),
                structure: "a".into(),
                action: "auto_replace".into(),
                voxels_before: 0,
                voxels_after: 12,
                displaced: 0,
                blocked: 2,
            }],
        };
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 1);
        assert!(!text.contains("displaced"));
        assert_eq!(ChangeLog::from_jsonl(&text).unwrap(), log);
    }

    #[test]
    fn auto_replace_rate_tracks_injected_deletions() {
        let cfg = RunConfig::default_config();
        let cat = cfg.phantom.catalog().unwrap();
        let noise = NoiseSpec { rates: NoiseRates { delete: 0.2, ..NoiseRates::default() }, ..NoiseSpec::clean() };
        let corpus = generate_corpus(&cfg.phantom, &noise, 40, 0.0, 4).unwrap();
        let model = fit_model(&corpus.cases, None, &cat).unwrap();
        let t = AuditThresholds::default();
        let organs: Vec<Label> = cat.labels().filter(|l| cat.kind(*l) != Some(StructureKind::Tumor)).collect();
        let mut replaced = 0;
        for c in &corpus.cases {
            let o = audit_case(&model, c, &cat, &t).unwrap();
            replaced += o.with_action(AuditAction::AutoReplace).filter(|s| organs.contains(&s.label)).count();
        }
        let injected: usize = corpus.logs.iter().map(|l| l.count("delete")).sum();
        let n = (organs.len() * corpus.cases.len()) as f64;
        let frac = replaced as f64 / n;
        // Bookkeeping match plus a 3-sigma binomial band around the rate.
        assert_eq!(replaced, injected);
        assert!((frac - 0.2).abs() <= 3.0 * (0.2f64 * 0.8 / n).sqrt(), "rate {frac}");
    }

    proptest! {
        #[test]
        fn action_depends_only_on_the_dsc_bucket(a in proptest::collection::vec(0u16..3, 1..40), b_seed in any::<u64>()) {
            let b: Vec<Label> = a.iter().enumerate().map(|(i, &l)| {
                if (b_seed >> (i % 64)) & 1 == 1 { (l + 1) % 3 } else { l }
            }).collect();
            let o = audit_against(&case(map(a)), &map(b), &catalog(), &AuditThresholds::default()).unwrap();
            for s in &o.structures {
                let want = if s.dsc == 0.0 {
                    AuditAction::AutoReplace
                } else if s.dsc < 0.5 {
                    AuditAction::RouteToExpert
                } else {
                    AuditAction::Keep
                };
                prop_assert_eq!(s.action, want);
            }
        }

        #[test]
        fn updates_touch_only_replaced_labels(a in proptest::collection::vec(0u16..3, 1..40), b in proptest::collection::vec(0u16..3, 1..40)) {
            let n = a.len().min(b.len());
            let (pa, pb) = (map(a[..n].to_vec()), map(b[..n].to_vec()));
            let c = case(pa.clone());
            let o = audit_against(&c, &pb, &catalog(), &AuditThresholds::default()).unwrap();
            let (updated, _) = apply_update_with(&c, &o, &pb, &catalog()).unwrap();
            let replaced: Vec<Label> = o.with_action(AuditAction::AutoReplace).map(|s| s.label).collect();
            for i in 0..n {
                let (before, after) = (pa.at(i), updated.pseudo.at(i));
                if before != after {
                    prop_assert!(replaced.contains(&before) || replaced.contains(&after));
                }
            }
        }
    }
}
