use serde::{Deserialize, Serialize};

use super::prior::{criterion_scores, overlay_features, AnatomicalPrior, CriterionScores, PriorTable};
use crate::error::{Error, Result};
use crate::volume::{project_overlay, BinaryMask, Overlay, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    First,
    Second,
    Tie,
}

impl Preference {
    pub fn swapped(self) -> Self {
        match self {
            Preference::First => Preference::Second,
            Preference::Second => Preference::First,
            Preference::Tie => Preference::Tie,
        }
    }
}

/// Scores behind a rule-based verdict. `None` criteria mean an empty overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub score_a: f64,
    pub score_b: f64,
    pub criteria_a: Option<CriterionScores>,
    pub criteria_b: Option<CriterionScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub preference: Preference,
    pub rationale: Option<Rationale>,
    /// Set when an external judge failed and the rule-based judge answered.
    #[serde(default)]
    pub protocol_failure: bool,
}

/// One pairwise comparison as handed to a judge.
#[derive(Debug, Clone, Copy)]
pub struct PairRequest<'a> {
    pub case_id: &'a str,
    pub prior: &'a AnatomicalPrior,
    pub overlay_a: &'a Overlay,
    pub overlay_b: &'a Overlay,
}

pub trait Judge: Send + Sync {
    fn judge(&self, req: &PairRequest<'_>) -> Result<JudgeVerdict>;
}

/// Deterministic judge scoring both overlays against the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleJudge {
    pub falloff: f64,
    pub tie_epsilon: f64,
}

impl RuleJudge {
    pub fn from_table(table: &PriorTable) -> Self {
        Self { falloff: table.centroid_falloff, tie_epsilon: table.tie_epsilon }
    }

    pub fn compare(&self, prior: &AnatomicalPrior, a: &Overlay, b: &Overlay) -> JudgeVerdict {
        let score = |o: &Overlay| {
            overlay_features(o).map(|f| {
                let c = criterion_scores(prior, &f, self.falloff);
                (c.combine(&prior.weights), c)
            })
        };
        let (sa, ca) = score(a).map_or((0.0, None), |(s, c)| (s, Some(c)));
        let (sb, cb) = score(b).map_or((0.0, None), |(s, c)| (s, Some(c)));
        let preference = if (sa - sb).abs() < self.tie_epsilon {
            Preference::Tie
        } else if sa > sb {
            Preference::First
        } else {
            Preference::Second
        };
        JudgeVerdict {
            preference,
            rationale: Some(Rationale { score_a: sa, score_b: sb, criteria_a: ca, criteria_b: cb }),
            protocol_failure: false,
        }
    }
}

impl Judge for RuleJudge {
    fn judge(&self, req: &PairRequest<'_>) -> Result<JudgeVerdict> {
        Ok(self.compare(req.prior, req.overlay_a, req.overlay_b))
    }
}

/// Projects both masks and lets the rule-based judge compare them.
pub fn judge_pair(
    volume: &VoxelGrid<f32>,
    mask_a: &BinaryMask,
    mask_b: &BinaryMask,
    prior: &AnatomicalPrior,
    judge: &RuleJudge,
) -> Result<JudgeVerdict> {
    for m in [mask_a, mask_b] {
        if m.dims() != volume.dims() {
            return Err(Error::shape("judged masks must share the volume dims"));
        }
    }
    let sp = volume.spacing().0;
    Ok(judge.compare(prior, &project_overlay(mask_a, sp), &project_overlay(mask_b, sp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::expert::score_overlay;
    use crate::phantom::generate_case;
    use proptest::prelude::*;

    fn table() -> PriorTable {
        RunConfig::default_config().prior_table().unwrap()
    }

    fn prior(name: &str) -> AnatomicalPrior {
        table().priors.into_iter().find(|p| p.structure == name).unwrap()
    }

    fn overlay(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> Overlay {
        let pixels = (0..w * h).map(|i| on(i % w, i / w)).collect();
        Overlay::new(w, h, pixels, [1.0, 1.0]).unwrap()
    }

    /// 4-pixel-wide column over z in [6, 58) of a 64×64 view.
    fn aorta_line(gaps: &[usize]) -> Overlay {
        overlay(64, 64, |x, z| (30..34).contains(&x) && (6..58).contains(&z) && !gaps.contains(&z))
    }

    #[test]
    fn empty_overlay_scores_zero() {
        assert_eq!(score_overlay(&prior("aorta"), &overlay(8, 8, |_, _| false), 0.1), 0.0);
    }

    #[test]
    fn centered_vertical_line_fits_the_aorta_prior() {
        let s = score_overlay(&prior("aorta"), &aorta_line(&[]), table().centroid_falloff);
        // Only the z-span misses: [6/64, 58/64] against [0.1, 0.9].
        let expected = (0.9 - 0.1) / (58.0 / 64.0 - 6.0 / 64.0);
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
        assert!(s >= 0.9);
    }

    #[test]
    fn fragmenting_the_line_lowers_its_score() {
        let p = prior("aorta");
        let whole = score_overlay(&p, &aorta_line(&[]), 0.1);
        let split = score_overlay(&p, &aorta_line(&[20, 40]), 0.1);
        assert!(split < whole);
    }

    #[test]
    fn identical_masks_tie() {
        let spec = RunConfig::default_config().phantom;
        let case = generate_case(&spec, 0).unwrap();
        let mask = case.gold.as_ref().unwrap().mask_of(spec.structure("aorta").unwrap().label);
        let v = judge_pair(&case.volume, &mask, &mask, &prior("aorta"), &RuleJudge::from_table(&table())).unwrap();
        assert_eq!(v.preference, Preference::Tie);
    }

    #[test]
    fn aorta_moved_off_the_midline_loses() {
        let spec = RunConfig::default_config().phantom;
        let case = generate_case(&spec, 0).unwrap();
        let mask = case.gold.as_ref().unwrap().mask_of(spec.structure("aorta").unwrap().label);
        let d = mask.dims();
        let shift = d.x / 3;
        let moved = BinaryMask::from_indices(
            d,
            mask.indices().filter_map(|i| {
                let [x, y, z] = d.point(i);
                (x + shift < d.x).then(|| d.index(x + shift, y, z))
            }),
        );
        let judge = RuleJudge::from_table(&table());
        let v = judge_pair(&case.volume, &mask, &moved, &prior("aorta"), &judge).unwrap();
        assert_eq!(v.preference, Preference::First);
        let r = v.rationale.unwrap();
        assert_eq!(r.criteria_b.unwrap().centroid, 0.0);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let spec = RunConfig::default_config().phantom;
        let case = generate_case(&spec, 0).unwrap();
        let small = BinaryMask::empty(crate::volume::Dims::cube(2));
        let judge = RuleJudge::from_table(&table());
        assert!(judge_pair(&case.volume, &small, &small, &prior("aorta"), &judge).is_err());
    }

    fn arb_overlay() -> impl Strategy<Value = Overlay> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |p| Overlay::new(w, h, p, [1.0, 1.5]).unwrap())
        })
    }

    proptest! {
        #[test]
        fn swapping_arguments_swaps_the_verdict(a in arb_overlay(), b_bits in any::<u64>(), which in 0usize..7) {
            let b = Overlay::new(
                a.width,
                a.height,
                (0..a.pixels.len()).map(|i| (b_bits >> (i % 64)) & 1 == 1).collect(),
                [1.0, 1.5],
            ).unwrap();
            let t = table();
            let p = &t.priors[which % t.priors.len()];
            let judge = RuleJudge::from_table(&t);
            let ab = judge.compare(p, &a, &b);
            let ba = judge.compare(p, &b, &a);
            prop_assert_eq!(ab.preference, ba.preference.swapped());
            prop_assert_eq!(judge.compare(p, &a, &b), ab);
        }
    }
}
