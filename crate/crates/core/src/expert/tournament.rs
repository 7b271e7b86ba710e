use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::judge::{Judge, PairRequest, Preference};
use super::prior::PriorTable;
use crate::error::{Error, Result};
use crate::volume::{
    largest_component, project_overlay, BinaryMask, Connectivity, Label, LabelMap, StructureCatalog,
    StructureKind, VoxelGrid, BACKGROUND,
};

/// Simplified shape post-processing: per organ or vessel, keep the largest
/// 26-connected component and apply a one-voxel closing. Closing only claims
/// background voxels. Tumor labels are left as they are.
pub fn shape_cleanup(map: &LabelMap, catalog: &StructureCatalog) -> LabelMap {
    let mut out = map.clone();
    for e in catalog.entries() {
        if e.kind == StructureKind::Tumor {
            continue;
        }
        let mask = map.mask_of(e.label);
        if mask.is_empty() {
            continue;
        }
        let kept = largest_component(&mask, Connectivity::TwentySix);
        let closed = close6(&kept);
        for i in 0..mask.data().len() {
            if mask.at(i) && !kept.at(i) {
                out.set_at(i, BACKGROUND);
            } else if closed.at(i) && !kept.at(i) && map.at(i) == BACKGROUND && out.at(i) == BACKGROUND {
                out.set_at(i, e.label);
            }
        }
    }
    out
}

fn morph6(mask: &BinaryMask, dilate: bool) -> BinaryMask {
    let d = mask.dims();
    let offsets = Connectivity::Six.offsets();
    let data = (0..d.len())
        .map(|i| {
            let c = d.point(i).map(|v| v as i64);
            let mut hit = offsets
                .iter()
                .map(|o| d.checked_index(c[0] + o[0], c[1] + o[1], c[2] + o[2]).map(|j| mask.at(j)));
            if dilate {
                mask.at(i) || hit.any(|v| v == Some(true))
            } else {
                // Off-grid neighbours count as set so closing never shrinks the mask.
                mask.at(i) && hit.all(|v| v != Some(false))
            }
        })
        .collect();
    BinaryMask::new(d, data).expect("same dims")
}

fn close6(mask: &BinaryMask) -> BinaryMask {
    morph6(&morph6(mask, true), false)
}

/// Vote of one structure in a round: `1` challenger, `2` champion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    Tie,
}

/// One pairwise round: candidate 1 is the challenger, candidate 2 the champion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub challenger: usize,
    pub champion: usize,
    pub per_structure_votes: BTreeMap<String, Vote>,
    pub score_1: u32,
    pub score_2: u32,
    /// Some verdict came from the fallback judge after a protocol failure.
    pub protocol_failure: bool,
}

impl Round {
    /// 1 when the challenger wins, else 2; ties keep the champion.
    pub fn winner(&self) -> u8 {
        if self.score_1 > self.score_2 {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Index of the selected candidate.
    pub winner: usize,
    pub rounds: Vec<Round>,
}

impl TournamentResult {
    /// Every vote of every round was a tie.
    pub fn all_ties(&self) -> bool {
        self.rounds.iter().all(|r| r.score_1 == 0 && r.score_2 == 0)
    }

    /// Final round, the one that decided the winner against the incumbent line.
    pub fn last(&self) -> &Round {
        self.rounds.last().expect("a tournament has at least one round")
    }

    pub fn protocol_failure(&self) -> bool {
        self.rounds.iter().any(|r| r.protocol_failure)
    }
}

/// Sequential pairwise elimination over `candidates`, judging `structures`.
///
/// Candidate 0 is the incumbent. Each later candidate challenges the current
/// champion and replaces it only with strictly more structure votes.
pub fn run_tournament(
    case_id: &str,
    volume: &VoxelGrid<f32>,
    candidates: &[LabelMap],
    structures: &[Label],
    judge: &dyn Judge,
    priors: &PriorTable,
) -> Result<TournamentResult> {
    if candidates.len() < 2 {
        return Err(Error::Spec(format!("a tournament needs at least two candidates, got {}", candidates.len())));
    }
    for c in candidates {
        if !c.matches_grid(volume) {
            return Err(Error::shape("tournament candidates must share the volume lattice"));
        }
    }
    let sp = volume.spacing().0;
    let mut champion = 0;
    let mut rounds = Vec::with_capacity(candidates.len() - 1);
    for challenger in 1..candidates.len() {
        let mut votes = BTreeMap::new();
        let (mut s1, mut s2, mut failure) = (0, 0, false);
        for &label in structures {
            let prior = priors
                .get(label)
                .ok_or_else(|| Error::Config(format!("no anatomical prior for label {label}")))?;
            let a = project_overlay(&candidates[challenger].mask_of(label), sp);
            let b = project_overlay(&candidates[champion].mask_of(label), sp);
            let verdict = judge.judge(&PairRequest { case_id, prior, overlay_a: &a, overlay_b: &b })?;
            failure |= verdict.protocol_failure;
            let vote = match verdict.preference {
                Preference::First => {
                    s1 += 1;
                    Vote::One
                }
                Preference::Second => {
                    s2 += 1;
                    Vote::Two
                }
                Preference::Tie => Vote::Tie,
            };
            votes.insert(prior.structure.clone(), vote);
        }
        let round = Round { challenger, champion, per_structure_votes: votes, score_1: s1, score_2: s2, protocol_failure: failure };
        if round.winner() == 1 {
            champion = challenger;
        }
        rounds.push(round);
    }
    Ok(TournamentResult { winner: champion, rounds })
}
