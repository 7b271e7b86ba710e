use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dsc;
use crate::phantom::rng::{fnv1a, stream_rng, Stream};
use crate::volume::{project_overlay, CaseRecord, Label, LabelMap, Overlay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationReason {
    ExpertTie,
    LowConfidence,
    ProtocolFailure,
}

/// One annotation handed to a human reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationEntry {
    pub iteration: usize,
    pub case_id: String,
    pub structure: String,
    pub label: Label,
    pub reason: EscalationReason,
    /// DSC between the annotation and the model prediction at audit time.
    pub audit_dsc: f64,
    /// Front views of the candidates; candidate 0 is the incumbent.
    pub candidates: Vec<Overlay>,
}

impl EscalationEntry {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.iteration, self.case_id, self.structure)
    }
}

/// A reviewer's answer; `choice` is `None` when the entry was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub choice: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EscalationQueue {
    pub entries: Vec<EscalationEntry>,
    /// Keyed by [`EscalationEntry::key`].
    pub resolved: BTreeMap<String, ReviewDecision>,
}

impl EscalationQueue {
    pub fn unresolved(&self) -> impl Iterator<Item = &EscalationEntry> {
        self.entries.iter().filter(|e| self.resolved.get(&e.key()).and_then(|d| d.choice).is_none())
    }
}

/// Everything a reviewer sees for one escalated annotation.
pub struct ReviewItem<'a> {
    pub case: &'a CaseRecord,
    pub entry: &'a EscalationEntry,
    /// Full candidate label maps, in the same order as `entry.candidates`.
    pub candidates: &'a [LabelMap],
}

pub trait HumanOracle: Send + Sync {
    /// Index of the chosen candidate, or `None` to leave the entry open.
    fn review(&self, item: &ReviewItem<'_>) -> Result<Option<usize>>;

    /// Whether the oracle reads gold labels.
    fn uses_gold(&self) -> bool {
        false
    }
}

/// Picks the candidate closest to gold with probability `accuracy`, otherwise
/// another candidate at random. Draws depend only on the seed, iteration,
/// case and structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedExpert {
    pub accuracy: f64,
    pub seed: u64,
}

impl HumanOracle for SimulatedExpert {
    fn review(&self, item: &ReviewItem<'_>) -> Result<Option<usize>> {
        let gold = item.case.gold.as_ref().ok_or_else(|| {
            Error::Oracle(format!("simulated expert needs gold labels for case {}", item.case.case_id))
        })?;
        let label = item.entry.label;
        let reference = gold.mask_of(label);
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, c) in item.candidates.iter().enumerate() {
            let d: f64 = dsc(&c.mask_of(label), &reference)?;
            if d > best.1 {
                best = (k, d);
            }
        }
        let index = fnv1a(item.case.case_id.as_bytes()) ^ ((item.entry.iteration as u64) << 32) ^ label as u64;
        let mut rng = stream_rng(self.seed, Stream::Oracle, index);
        if item.candidates.len() < 2 || rng.random_bool(self.accuracy) {
            return Ok(Some(best.0));
        }
        let k = rng.random_range(0..item.candidates.len() - 1);
        Ok(Some(if k >= best.0 { k + 1 } else { k }))
    }

    fn uses_gold(&self) -> bool {
        true
    }
}

/// Keeps the incumbent every time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TieKeeper;

impl HumanOracle for TieKeeper {
    fn review(&self, _item: &ReviewItem<'_>) -> Result<Option<usize>> {
        Ok(Some(0))
    }
}

/// Renders overlays as text and reads `1`, `2`, ... or `skip` from a reader.
pub struct InteractiveCli<R, W> {
    io: Mutex<(R, W)>,
}

impl<R: BufRead + Send, W: Write + Send> InteractiveCli<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { io: Mutex::new((input, output)) }
    }

    pub fn into_inner(self) -> (R, W) {
        self.io.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    pub fn ask(&self, entry: &EscalationEntry) -> Result<Option<usize>> {
        let mut guard = self.io.lock().unwrap_or_else(|p| p.into_inner());
        let (input, output) = &mut *guard;
        write!(output, "{}", render_entry(entry))?;
        let n = entry.candidates.len();
        loop {
            write!(output, "choose 1-{n} or skip: ")?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::Oracle("review input ended".into()));
            }
            let answer = line.trim();
            if answer.eq_ignore_ascii_case("skip") || answer.eq_ignore_ascii_case("s") {
                return Ok(None);
            }
            match answer.parse::<usize>() {
                Ok(k) if (1..=n).contains(&k) => return Ok(Some(k - 1)),
                _ => writeln!(output, "unrecognized answer `{answer}`")?,
            }
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> HumanOracle for InteractiveCli<R, W> {
    fn review(&self, item: &ReviewItem<'_>) -> Result<Option<usize>> {
        self.ask(item.entry)
    }
}

/// Side-by-side text rendering of the candidate overlays, superior at the top.
pub fn render_entry(entry: &EscalationEntry) -> String {
    let mut out = format!(
        "\ncase {} / {} (iteration {}, {:?}, audit DSC {:.3})\n",
        entry.case_id, entry.structure, entry.iteration, entry.reason, entry.audit_dsc
    );
    let Some(first) = entry.candidates.first() else {
        return out;
    };
    let (w, h) = (first.width, first.height);
    for (k, _) in entry.candidates.iter().enumerate() {
        out.push_str(&format!("{:<width$} ", format!("[{}]", k + 1), width = w));
    }
    out.push('\n');
    for z in (0..h).rev() {
        for c in &entry.candidates {
            out.extend((0..w).map(|x| if c.get(x, z) { '#' } else { '.' }));
            out.push(' ');
        }
        out.push('\n');
    }
    out
}

/// Front views of each candidate's mask for `label`.
pub fn candidate_overlays(candidates: &[LabelMap], label: Label) -> Vec<Overlay> {
    candidates.iter().map(|c| project_overlay(&c.mask_of(label), c.spacing().0)).collect()
}

/// Walks the unresolved entries of `queue`, recording every answer.
pub fn interactive_review<R: BufRead + Send, W: Write + Send>(
    queue: &mut EscalationQueue,
    reviewer: &InteractiveCli<R, W>,
) -> Result<usize> {
    let pending: Vec<EscalationEntry> = queue.unresolved().cloned().collect();
    let mut answered = 0;
    for entry in pending {
        let choice = reviewer.ask(&entry)?;
        answered += choice.is_some() as usize;
        queue.resolved.insert(entry.key(), ReviewDecision { choice });
    }
    Ok(answered)
}

/// Resolution file: every decision recorded for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolutions {
    pub schema_version: u32,
    pub decisions: BTreeMap<String, ReviewDecision>,
}

impl Resolutions {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
