//! Per-item successor sets harvested from training instances; the sampling
//! space for intent segments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PADDING_ITEM;
use crate::error::{Error, Result};
use crate::seqprep::TrainInstance;

/// Which pairs count as "appearing after" an item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessorMode {
    /// Immediate successor: only adjacent pairs. The default; keeps the
    /// chain constraint selective.
    #[default]
    Immediate,
    /// Every later item in the same instance.
    AnyLater,
}

/// One item's successors, sorted ascending, with observation counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuccessorSet {
    items: Vec<u32>,
    counts: Vec<u32>,
}

impl SuccessorSet {
    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: u32) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    /// Uniform draw over the set, ignoring observation counts.
    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Option<u32> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.gen_range(0..self.items.len())])
        }
    }

    /// Frequency-weighted draw (off by default in generation).
    pub fn sample_weighted(&self, rng: &mut impl Rng) -> Option<u32> {
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..total);
        for (item, &count) in self.items.iter().zip(&self.counts) {
            let count = count as u64;
            if pick < count {
                return Some(*item);
            }
            pick -= count;
        }
        self.items.last().copied()
    }
}

/// Immutable successor index over real item indices `1..=n_items`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessorIndex {
    sets: Vec<SuccessorSet>,
    built_from: usize,
    n_items: usize,
}

/// Build the index from training instances only. Every adjacent pair inside
/// `input_items` contributes, plus the pair (last input item, target).
pub fn build_successor_index(
    train: &[TrainInstance],
    n_items: usize,
    mode: SuccessorMode,
) -> SuccessorIndex {
    let mut maps: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); n_items + 1];
    let mut add = |head: u32, succ: u32| {
        if head != PADDING_ITEM && succ != PADDING_ITEM {
            *maps[head as usize].entry(succ).or_insert(0) += 1;
        }
    };
    for inst in train {
        let full: Vec<u32> = inst
            .input_items
            .iter()
            .copied()
            .chain(std::iter::once(inst.target))
            .collect();
        match mode {
            SuccessorMode::Immediate => {
                for pair in full.windows(2) {
                    add(pair[0], pair[1]);
                }
            }
            SuccessorMode::AnyLater => {
                for (i, &head) in full.iter().enumerate() {
                    for &later in &full[i + 1..] {
                        add(head, later);
                    }
                }
            }
        }
    }
    let sets = maps
        .into_iter()
        .map(|m| {
            let mut items = Vec::with_capacity(m.len());
            let mut counts = Vec::with_capacity(m.len());
            for (item, count) in m {
                items.push(item);
                counts.push(count);
            }
            SuccessorSet { items, counts }
        })
        .collect();
    SuccessorIndex {
        sets,
        built_from: train.len(),
        n_items,
    }
}

impl SuccessorIndex {
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn built_from(&self) -> usize {
        self.built_from
    }

    /// Successor set of a real item. Querying the padding index is a usage error.
    pub fn successors(&self, item: u32) -> Result<&SuccessorSet> {
        if item == PADDING_ITEM {
            return Err(Error::Index(
                "successor query on the padding index".into(),
            ));
        }
        self.sets
            .get(item as usize)
            .ok_or_else(|| Error::Index(format!("item index {item} out of range")))
    }

    /// True iff `succ` was observed after `head`. Padding never qualifies.
    pub fn is_successor(&self, head: u32, succ: u32) -> bool {
        if head == PADDING_ITEM || succ == PADDING_ITEM {
            return false;
        }
        self.sets
            .get(head as usize)
            .map(|s| s.contains(succ))
            .unwrap_or(false)
    }

    /// One record per real item: `item: sorted successor list`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (item, set) in self.sets.iter().enumerate().skip(1) {
            let list: Vec<String> = set.items.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{}: {}\n", item, list.join(" ")));
        }
        fs::write(path, out)?;
        Ok(())
    }
}
