//! Intent-segment augmentation: positive samples insert a successor-valid
//! chain at an interior adjacency, negative samples append a chain whose end
//! no longer leads to the original target.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adjacency::SuccessorIndex;
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::seqprep::TrainInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Positive,
    Negative,
}

/// An augmented view of one training instance.
///
/// Positive: `input = source[..p] ++ segment ++ source[p..]` with every seam
/// (including segment end to the following item) successor-valid; the target
/// is unchanged. Negative: `input = source ++ segment`; the target is kept
/// for bookkeeping only and never enters a loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSample {
    /// Ordinal of the source instance in the training list.
    pub source: usize,
    pub kind: SampleKind,
    pub input_items: Vec<u32>,
    pub target: u32,
    /// Number of source items preceding the segment (positive only).
    pub insertion_point: Option<usize>,
    pub segment: Vec<u32>,
}

/// Generation knobs.
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    /// Segment length K.
    pub k: usize,
    /// Total (position, segment) attempts per sample before giving up.
    pub retry_budget: usize,
    /// Sample successors by observation frequency instead of uniformly.
    pub weighted: bool,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            k: 1,
            retry_budget: 10,
            weighted: false,
        }
    }
}

/// Success rates of one generation pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub instances: usize,
    pub positive_eligible: usize,
    pub positive_generated: usize,
    pub negative_generated: usize,
}

impl CoverageReport {
    pub fn positive_rate(&self) -> f64 {
        if self.positive_eligible == 0 {
            0.0
        } else {
            self.positive_generated as f64 / self.positive_eligible as f64
        }
    }

    pub fn negative_rate(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.negative_generated as f64 / self.instances as f64
        }
    }

    pub fn to_record(&self) -> String {
        format!(
            "instances={}\npositive_eligible={}\npositive_generated={}\nnegative_generated={}\npositive_rate={:.6}\nnegative_rate={:.6}\n",
            self.instances,
            self.positive_eligible,
            self.positive_generated,
            self.negative_generated,
            self.positive_rate(),
            self.negative_rate()
        )
    }
}

/// Augmented samples for a training list, plus a lookup from source ordinal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentedData {
    pub positives: Vec<AugmentedSample>,
    pub negatives: Vec<AugmentedSample>,
    pub coverage: CoverageReport,
}

impl AugmentedData {
    /// Map source ordinal -> index into `positives` (resp. `negatives`).
    pub fn positive_by_source(&self, n_instances: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_instances];
        for (i, s) in self.positives.iter().enumerate() {
            map[s.source] = Some(i);
        }
        map
    }

    pub fn negative_by_source(&self, n_instances: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_instances];
        for (i, s) in self.negatives.iter().enumerate() {
            map[s.source] = Some(i);
        }
        map
    }
}

/// Walk the successor index for `k` steps starting from `start`'s set.
/// Returns `None` as the normal outcome when any encountered set is empty.
pub fn gen_intent_segment(
    index: &SuccessorIndex,
    start: u32,
    k: usize,
    rng: &mut ChaCha8Rng,
    weighted: bool,
) -> Option<Vec<u32>> {
    let mut segment = Vec::with_capacity(k);
    let mut current = start;
    for _ in 0..k {
        let set = index.successors(current).ok()?;
        let next = if weighted {
            set.sample_weighted(rng)?
        } else {
            set.sample_uniform(rng)?
        };
        segment.push(next);
        current = next;
    }
    Some(segment)
}

/// Try to build an intent-inserted positive sample. Picks an interior
/// adjacency uniformly, draws a segment from the left item's successors, and
/// accepts iff the item after the seam lies in the segment end's successor
/// set. Retries with a fresh position and segment up to the budget.
pub fn make_positive(
    source: usize,
    inst: &TrainInstance,
    index: &SuccessorIndex,
    opts: &AugmentOptions,
    rng: &mut ChaCha8Rng,
) -> Option<AugmentedSample> {
    let len = inst.input_items.len();
    if len < 2 {
        return None;
    }
    for _ in 0..opts.retry_budget {
        let p = rng.gen_range(1..len);
        let head = inst.input_items[p - 1];
        let follower = inst.input_items[p];
        let Some(segment) = gen_intent_segment(index, head, opts.k, rng, opts.weighted) else {
            continue;
        };
        if !index.is_successor(*segment.last().unwrap(), follower) {
            continue;
        }
        let mut input_items = Vec::with_capacity(len + opts.k);
        input_items.extend_from_slice(&inst.input_items[..p]);
        input_items.extend_from_slice(&segment);
        input_items.extend_from_slice(&inst.input_items[p..]);
        return Some(AugmentedSample {
            source,
            kind: SampleKind::Positive,
            input_items,
            target: inst.target,
            insertion_point: Some(p),
            segment,
        });
    }
    None
}

/// Try to build an intent-appended negative sample: a segment grown from the
/// last input item's successors. A chain is rejected when the original
/// target still lies in the segment end's successor set, since such an
/// extension would keep the label a consistent continuation.
pub fn make_negative(
    source: usize,
    inst: &TrainInstance,
    index: &SuccessorIndex,
    opts: &AugmentOptions,
    rng: &mut ChaCha8Rng,
) -> Option<AugmentedSample> {
    let last = *inst.input_items.last()?;
    for _ in 0..opts.retry_budget {
        let Some(segment) = gen_intent_segment(index, last, opts.k, rng, opts.weighted) else {
            continue;
        };
        if index.is_successor(*segment.last().unwrap(), inst.target) {
            continue;
        }
        let mut input_items = inst.input_items.clone();
        input_items.extend_from_slice(&segment);
        return Some(AugmentedSample {
            source,
            kind: SampleKind::Negative,
            input_items,
            target: inst.target,
            insertion_point: None,
            segment,
        });
    }
    None
}

/// One positive attempt and one negative attempt per instance, with a
/// per-instance derived random stream so results are independent of
/// scheduling and reproducible from the seed alone.
pub fn augment_dataset(
    train: &[TrainInstance],
    index: &SuccessorIndex,
    opts: &AugmentOptions,
    seed: u64,
) -> AugmentedData {
    let mut data = AugmentedData::default();
    data.coverage.instances = train.len();
    for (ordinal, inst) in train.iter().enumerate() {
        let mut rng = derived_rng(seed, "augment", ordinal as u64);
        if inst.input_items.len() >= 2 {
            data.coverage.positive_eligible += 1;
            if let Some(sample) = make_positive(ordinal, inst, index, opts, &mut rng) {
                data.coverage.positive_generated += 1;
                data.positives.push(sample);
            }
        }
        if let Some(sample) = make_negative(ordinal, inst, index, opts, &mut rng) {
            data.coverage.negative_generated += 1;
            data.negatives.push(sample);
        }
    }
    data
}

// ---------------------------------------------------------------------------
// Persistence: TrainInstance record format plus kind and insertion metadata.
// ---------------------------------------------------------------------------

impl AugmentedData {
    /// One sample per line:
    /// `kind<TAB>source<TAB>items<TAB>target<TAB>insertion_point<TAB>segment`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for sample in self.positives.iter().chain(&self.negatives) {
            let kind = match sample.kind {
                SampleKind::Positive => "positive",
                SampleKind::Negative => "negative",
            };
            let items: Vec<String> = sample.input_items.iter().map(|i| i.to_string()).collect();
            let segment: Vec<String> = sample.segment.iter().map(|i| i.to_string()).collect();
            let point = sample
                .insertion_point
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{kind}\t{}\t{}\t{}\t{point}\t{}\n",
                sample.source,
                items.join(" "),
                sample.target,
                segment.join(" ")
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<AugmentedData> {
        let text = fs::read_to_string(path)?;
        let mut data = AugmentedData::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected 6 tab-separated fields".into(),
                });
            }
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.into(),
            };
            let kind = match fields[0] {
                "positive" => SampleKind::Positive,
                "negative" => SampleKind::Negative,
                other => return Err(bad(&format!("unknown kind {other:?}"))),
            };
            let source: usize = fields[1].parse().map_err(|_| bad("bad source ordinal"))?;
            let input_items = fields[2]
                .split_whitespace()
                .map(|s| s.parse::<u32>().map_err(|_| bad("bad item index")))
                .collect::<Result<Vec<u32>>>()?;
            let target: u32 = fields[3].parse().map_err(|_| bad("bad target"))?;
            let insertion_point = match fields[4] {
                "-" => None,
                v => Some(v.parse::<usize>().map_err(|_| bad("bad insertion point"))?),
            };
            let segment = fields[5]
                .split_whitespace()
                .map(|s| s.parse::<u32>().map_err(|_| bad("bad segment item")))
                .collect::<Result<Vec<u32>>>()?;
            let sample = AugmentedSample {
                source,
                kind,
                input_items,
                target,
                insertion_point,
                segment,
            };
            match kind {
                SampleKind::Positive => data.positives.push(sample),
                SampleKind::Negative => data.negatives.push(sample),
            }
        }
        data.coverage.positive_generated = data.positives.len();
        data.coverage.negative_generated = data.negatives.len();
        Ok(data)
    }
}
