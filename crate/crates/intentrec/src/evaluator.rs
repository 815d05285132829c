//! Full-ranking evaluation: HR@K, NDCG@K, and MRR with pessimistic ties.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::encoder::{encode, score_all_items, EncoderParams};
use crate::error::{Error, Result};
use crate::seqprep::{pad_truncate, TrainInstance};

/// 1-based rank of one user's held-out target among all real items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankRecord {
    pub user: u32,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Validation,
    Test,
}

impl SplitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitKind::Validation => "validation",
            SplitKind::Test => "test",
        }
    }
}

/// Aggregated ranking metrics for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub split: SplitKind,
    pub hr: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n_users: usize,
}

/// Rank of the target under full ranking with pessimistic tie handling:
/// `1 + |{j != target : score_j >= score_target}|`. No items are excluded.
pub fn full_rank(scores: &[f64], target: u32) -> usize {
    let target_idx = target as usize - 1;
    let target_score = scores[target_idx];
    let mut rank = 1;
    for (j, &s) in scores.iter().enumerate() {
        if j != target_idx && s >= target_score {
            rank += 1;
        }
    }
    rank
}

fn require_nonempty(ranks: &[RankRecord]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Data("metric undefined over zero users".into()));
    }
    Ok(())
}

/// Fraction of users whose target ranks within the top `k`.
pub fn hr_at_k(ranks: &[RankRecord], k: usize) -> Result<f64> {
    require_nonempty(ranks)?;
    let hits = ranks.iter().filter(|r| r.rank <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean position-discounted gain, `1 / log2(1 + rank)` inside the top `k`,
/// zero outside. One relevant item per user, so the ideal gain is 1.
pub fn ndcg_at_k(ranks: &[RankRecord], k: usize) -> Result<f64> {
    require_nonempty(ranks)?;
    let sum: f64 = ranks
        .iter()
        .map(|r| {
            if r.rank <= k {
                1.0 / ((1 + r.rank) as f64).log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / ranks.len() as f64)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[RankRecord]) -> Result<f64> {
    require_nonempty(ranks)?;
    let sum: f64 = ranks.iter().map(|r| 1.0 / r.rank as f64).sum();
    Ok(sum / ranks.len() as f64)
}

/// Evaluation settings; `mask_history` removes input items (never the
/// target) from the ranking, off by default.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub max_len: usize,
    pub mask_history: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![10, 20, 50],
            max_len: 50,
            mask_history: false,
        }
    }
}

/// Encode each instance, score the full catalog, and rank its target.
pub fn rank_instances(
    params: &EncoderParams,
    instances: &[TrainInstance],
    opts: &EvalOptions,
) -> Result<Vec<RankRecord>> {
    let mut ranks = Vec::with_capacity(instances.len());
    for inst in instances {
        let seq = pad_truncate(&inst.input_items, opts.max_len);
        let encoding = encode(params, &seq)?;
        let mut scores = score_all_items(params, &encoding.final_repr);
        if opts.mask_history {
            for &item in &inst.input_items {
                if item != inst.target {
                    scores[item as usize - 1] = f64::NEG_INFINITY;
                }
            }
        }
        ranks.push(RankRecord {
            user: inst.user,
            rank: full_rank(&scores, inst.target),
        });
    }
    Ok(ranks)
}

/// Full evaluation of one split at every requested cutoff.
pub fn evaluate(
    params: &EncoderParams,
    instances: &[TrainInstance],
    split: SplitKind,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let ranks = rank_instances(params, instances, opts)?;
    metrics_from_ranks(&ranks, split, &opts.ks)
}

/// Aggregate already-computed ranks into a report.
pub fn metrics_from_ranks(
    ranks: &[RankRecord],
    split: SplitKind,
    ks: &[usize],
) -> Result<MetricsReport> {
    let mut hr = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        hr.insert(k, hr_at_k(ranks, k)?);
        ndcg.insert(k, ndcg_at_k(ranks, k)?);
    }
    Ok(MetricsReport {
        split,
        hr,
        ndcg,
        mrr: mrr(ranks)?,
        n_users: ranks.len(),
    })
}

impl MetricsReport {
    /// One structured-text record per (split, K), plus MRR.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split={} n_users={}", self.split.as_str(), self.n_users);
        for (k, hr) in &self.hr {
            let _ = writeln!(
                out,
                "split={} k={} hr={:.6} ndcg={:.6}",
                self.split.as_str(),
                k,
                hr,
                self.ndcg[k]
            );
        }
        let _ = writeln!(out, "split={} mrr={:.6}", self.split.as_str(), self.mrr);
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_records())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<MetricsReport> {
        let text = fs::read_to_string(path)?;
        let mut split = None;
        let mut hr = BTreeMap::new();
        let mut ndcg = BTreeMap::new();
        let mut mrr_value = None;
        let mut n_users = 0usize;
        for line in text.lines() {
            let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
            for kv in line.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    fields.insert(k, v);
                }
            }
            if let Some(s) = fields.get("split") {
                split = Some(match *s {
                    "validation" => SplitKind::Validation,
                    _ => SplitKind::Test,
                });
            }
            if let Some(n) = fields.get("n_users") {
                n_users = n.parse().unwrap_or(0);
            }
            if let (Some(k), Some(h), Some(n)) =
                (fields.get("k"), fields.get("hr"), fields.get("ndcg"))
            {
                let k: usize = k.parse().map_err(|_| Error::Data("bad k".into()))?;
                hr.insert(k, h.parse().map_err(|_| Error::Data("bad hr".into()))?);
                ndcg.insert(k, n.parse().map_err(|_| Error::Data("bad ndcg".into()))?);
            } else if let Some(m) = fields.get("mrr") {
                mrr_value = Some(m.parse().map_err(|_| Error::Data("bad mrr".into()))?);
            }
        }
        Ok(MetricsReport {
            split: split.ok_or_else(|| Error::Data("metrics file missing split".into()))?,
            hr,
            ndcg,
            mrr: mrr_value.ok_or_else(|| Error::Data("metrics file missing mrr".into()))?,
            n_users,
        })
    }

    /// Fixed-width grid with one row per metric and one column per K.
    pub fn format_grid(&self) -> String {
        let ks: Vec<usize> = self.hr.keys().copied().collect();
        let mut out = String::new();
        let _ = write!(out, "{:<8} |", self.split.as_str());
        for k in &ks {
            let _ = write!(out, " K={k:<8}");
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<8} |", "HR@K");
        for k in &ks {
            let _ = write!(out, " {:<10.4}", self.hr[k]);
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<8} |", "NDCG@K");
        for k in &ks {
            let _ = write!(out, " {:<10.4}", self.ndcg[k]);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "MRR      | {:.4}", self.mrr);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use rand::Rng;

    fn ranks(rs: &[usize]) -> Vec<RankRecord> {
        rs.iter()
            .enumerate()
            .map(|(u, &rank)| RankRecord {
                user: u as u32,
                rank,
            })
            .collect()
    }

    #[test]
    fn rank_of_strict_max_is_one() {
        assert_eq!(full_rank(&[0.1, 0.9, 0.5], 2), 1);
    }

    #[test]
    fn ties_rank_pessimistically() {
        assert_eq!(full_rank(&[0.9, 0.5, 0.5], 2), 3);
    }

    #[test]
    fn rank_matches_sort_oracle() {
        let mut rng = derived_rng(31, "rank-test", 0);
        for _ in 0..1000 {
            let n = rng.gen_range(1..25);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let target = rng.gen_range(1..=n) as u32;
            // Oracle: position after sorting descending with ties placed above.
            let t = scores[target as usize - 1];
            let above = scores
                .iter()
                .enumerate()
                .filter(|&(j, &s)| j != target as usize - 1 && s >= t)
                .count();
            assert_eq!(full_rank(&scores, target), above + 1);
        }
    }

    #[test]
    fn hr_counts_indicators() {
        let r = ranks(&[1, 5, 12]);
        assert!((hr_at_k(&r, 10).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hr_at_k(&r, 20).unwrap(), 1.0);
        assert_eq!(hr_at_k(&ranks(&[30, 40]), 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_discounts_by_position() {
        assert_eq!(ndcg_at_k(&ranks(&[1]), 10).unwrap(), 1.0);
        assert!((ndcg_at_k(&ranks(&[3]), 10).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&ranks(&[11]), 10).unwrap(), 0.0);
    }

    #[test]
    fn mrr_examples() {
        let r = ranks(&[1, 2, 4]);
        assert!((mrr(&r).unwrap() - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        assert_eq!(mrr(&ranks(&[1, 1, 1])).unwrap(), 1.0);
        assert!((mrr(&ranks(&[200])).unwrap() - 1.0 / 200.0).abs() < 1e-18);
    }

    #[test]
    fn empty_ranks_are_undefined() {
        assert!(matches!(hr_at_k(&[], 10), Err(Error::Data(_))));
        assert!(matches!(ndcg_at_k(&[], 10), Err(Error::Data(_))));
        assert!(matches!(mrr(&[]), Err(Error::Data(_))));
    }

    #[test]
    fn hr_dominates_ndcg_and_k_monotone() {
        let mut rng = derived_rng(32, "metric-prop", 0);
        for _ in 0..200 {
            let n = rng.gen_range(1..40);
            let r: Vec<RankRecord> = (0..n)
                .map(|u| RankRecord {
                    user: u as u32,
                    rank: rng.gen_range(1..60),
                })
                .collect();
            let mut prev_hr = 0.0;
            let mut prev_ndcg = 0.0;
            for k in [10usize, 20, 50] {
                let hr = hr_at_k(&r, k).unwrap();
                let ndcg = ndcg_at_k(&r, k).unwrap();
                assert!(hr >= ndcg);
                assert!(ndcg >= 0.0);
                assert!(hr >= prev_hr && ndcg >= prev_ndcg);
                prev_hr = hr;
                prev_ndcg = ndcg;
            }
        }
    }

    #[test]
    fn metrics_report_round_trips() {
        let r = ranks(&[1, 3, 7, 25]);
        let report = metrics_from_ranks(&r, SplitKind::Test, &[10, 20, 50]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics_test.txt");
        report.write_to(&path).unwrap();
        let loaded = MetricsReport::read_from(&path).unwrap();
        assert_eq!(report.split, loaded.split);
        assert_eq!(report.n_users, loaded.n_users);
        for k in [10, 20, 50] {
            assert!((report.hr[&k] - loaded.hr[&k]).abs() < 1e-6);
            assert!((report.ndcg[&k] - loaded.ndcg[&k]).abs() < 1e-6);
        }
    }

    #[test]
    fn perfect_model_scores_one_everywhere() {
        use crate::encoder::{init_params, EncoderConfig};
        use crate::seqprep::TrainInstance;
        // Identity item embeddings, zero positional rows, and a passthrough
        // stack make the final representation equal the last input item's
        // embedding, so a target equal to that item always ranks first.
        let d = 4;
        let mut params = init_params(
            EncoderConfig {
                embedding_dim: d,
                n_heads: 2,
                n_layers: 0,
                ffn_dim: 8,
                max_len: 4,
                n_items: 4,
                dropout_rate: 0.0,
            },
            0,
        )
        .unwrap();
        let emb_offset = params.tensors()[0].offset;
        for v in params.data.iter_mut() {
            *v = 0.0;
        }
        for item in 1..=4usize {
            params.data[emb_offset + item * d + (item - 1)] = 1.0;
        }
        let instances: Vec<TrainInstance> = (1..=4u32)
            .map(|item| TrainInstance {
                user: item - 1,
                input_items: vec![item],
                target: item,
            })
            .collect();
        let opts = EvalOptions {
            max_len: 4,
            ..EvalOptions::default()
        };
        let report = evaluate(&params, &instances, SplitKind::Test, &opts).unwrap();
        assert_eq!(report.mrr, 1.0);
        for k in [10, 20, 50] {
            assert_eq!(report.hr[&k], 1.0);
            assert_eq!(report.ndcg[&k], 1.0);
        }
    }
}
