//! Chronological leave-one-out splitting, sliding-window expansion, and
//! fixed-length padding/truncation.

use std::fs;
use std::path::Path;

use crate::corpus::PADDING_ITEM;
use crate::error::{Error, Result};

/// A windowed input sequence with its next-item target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainInstance {
    pub user: u32,
    pub input_items: Vec<u32>,
    pub target: u32,
}

/// Frozen train/validation/test splits. Per user, the validation target is
/// the second-to-last item and the test target the last; training instances
/// come from sliding windows over the remaining prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Vec<TrainInstance>,
    pub validation: Vec<TrainInstance>,
    pub test: Vec<TrainInstance>,
    /// Users with fewer than three items, dropped from all splits.
    pub dropped_users: usize,
}

/// Fixed-length, right-aligned view of an item sequence. Invalid slots hold
/// the padding index; valid slots are contiguous at the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedSequence {
    pub slots: Vec<u32>,
    pub valid_mask: Vec<bool>,
}

impl PaddedSequence {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.valid_mask.iter().filter(|&&m| m).count()
    }

    /// Index of the last valid slot, if any.
    pub fn last_valid(&self) -> Option<usize> {
        self.valid_mask.iter().rposition(|&m| m)
    }
}

/// Expand one sequence into (prefix, next-item) instances, the prefix capped
/// at the `max_len` most recent items. Yields `len - 1` instances in target
/// order.
pub fn sliding_windows(user: u32, seq: &[u32], max_len: usize) -> Vec<TrainInstance> {
    let mut out = Vec::new();
    if seq.len() < 2 {
        return out;
    }
    for t in 1..seq.len() {
        let start = t.saturating_sub(max_len);
        out.push(TrainInstance {
            user,
            input_items: seq[start..t].to_vec(),
            target: seq[t],
        });
    }
    out
}

/// Leave-one-out split with input windows capped at `max_len`. Users with
/// fewer than three items are dropped (and counted).
pub fn chrono_split(sequences: &[Vec<u32>], max_len: usize) -> SplitDataset {
    let mut dataset = SplitDataset::default();
    for (u, seq) in sequences.iter().enumerate() {
        let n = seq.len();
        if n < 3 {
            dataset.dropped_users += 1;
            continue;
        }
        let user = u as u32;
        let test_start = (n - 1).saturating_sub(max_len);
        dataset.test.push(TrainInstance {
            user,
            input_items: seq[test_start..n - 1].to_vec(),
            target: seq[n - 1],
        });
        let val_start = (n - 2).saturating_sub(max_len);
        dataset.validation.push(TrainInstance {
            user,
            input_items: seq[val_start..n - 2].to_vec(),
            target: seq[n - 2],
        });
        dataset
            .train
            .extend(sliding_windows(user, &seq[..n - 2], max_len));
    }
    dataset
}

/// Keep the last `max_len` items (or left-pad with the padding index) and
/// mark which slots hold real items.
pub fn pad_truncate(items: &[u32], max_len: usize) -> PaddedSequence {
    debug_assert!(items.iter().all(|&i| i != PADDING_ITEM));
    let keep = items.len().min(max_len);
    let mut slots = vec![PADDING_ITEM; max_len];
    let mut valid_mask = vec![false; max_len];
    let offset = max_len - keep;
    for (k, &item) in items[items.len() - keep..].iter().enumerate() {
        slots[offset + k] = item;
        valid_mask[offset + k] = true;
    }
    PaddedSequence { slots, valid_mask }
}

// ---------------------------------------------------------------------------
// Persistence: one instance per record, `user<TAB>items<TAB>target`.
// ---------------------------------------------------------------------------

fn write_instances(path: &Path, instances: &[TrainInstance]) -> Result<()> {
    let mut out = String::new();
    for inst in instances {
        let items: Vec<String> = inst.input_items.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            inst.user,
            items.join(" "),
            inst.target
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_instances(path: &Path) -> Result<Vec<TrainInstance>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 3 tab-separated fields in {}", path.display()),
            });
        }
        let user: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: "bad user index".into(),
        })?;
        let input_items = fields[1]
            .split_whitespace()
            .map(|s| {
                s.parse::<u32>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: "bad item index".into(),
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        let target: u32 = fields[2].parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: "bad target index".into(),
        })?;
        out.push(TrainInstance {
            user,
            input_items,
            target,
        });
    }
    Ok(out)
}

impl SplitDataset {
    /// Persist the three splits as `train.txt`, `validation.txt`, `test.txt`
    /// plus a `meta.txt` with the dropped-user count.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_instances(&dir.join("train.txt"), &self.train)?;
        write_instances(&dir.join("validation.txt"), &self.validation)?;
        write_instances(&dir.join("test.txt"), &self.test)?;
        fs::write(
            dir.join("meta.txt"),
            format!("dropped_users={}\n", self.dropped_users),
        )?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<SplitDataset> {
        let train = read_instances(&dir.join("train.txt"))?;
        let validation = read_instances(&dir.join("validation.txt"))?;
        let test = read_instances(&dir.join("test.txt"))?;
        let mut dropped_users = 0;
        if let Ok(meta) = fs::read_to_string(dir.join("meta.txt")) {
            for line in meta.lines() {
                if let Some(v) = line.strip_prefix("dropped_users=") {
                    dropped_users = v.parse().unwrap_or(0);
                }
            }
        }
        Ok(SplitDataset {
            train,
            validation,
            test,
            dropped_users,
        })
    }

    /// Largest item index observed anywhere in the splits.
    pub fn max_item(&self) -> u32 {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .flat_map(|inst| {
                inst.input_items
                    .iter()
                    .copied()
                    .chain(std::iter::once(inst.target))
            })
            .max()
            .unwrap_or(0)
    }
}
