//! Joint training loop: adaptive-moment updates, per-epoch validation MRR,
//! and early stopping.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adjacency::{build_successor_index, SuccessorIndex, SuccessorMode};
use crate::augment::{augment_dataset, AugmentOptions, AugmentedData, AugmentedSample};
use crate::encoder::{
    backward, backward_scores, encode_training, init_params, score_all_items, EncoderConfig,
    EncoderParams,
};
use crate::error::{Error, Result};
use crate::evaluator::{mrr, rank_instances, EvalOptions};
use crate::objective::{
    contrastive_grads, joint_loss, rec_loss_grad, ContrastiveVariant, LossBreakdown,
};
use crate::rng::{derive_seed, derived_rng};
use crate::seqprep::{pad_truncate, SplitDataset, TrainInstance};

/// Which loss components run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Positives in the training data and the contrastive term.
    Full,
    /// Positives excluded from the recommendation loss; contrastive kept.
    NoPs,
    /// Contrastive term removed; positives still trained on.
    NoCl,
    /// Neither: plain next-item training on sliding windows.
    NoBoth,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoPs,
        Ablation::NoCl,
        Ablation::NoBoth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoPs => "no_ps",
            Ablation::NoCl => "no_cl",
            Ablation::NoBoth => "no_both",
        }
    }

    pub fn parse(s: &str) -> Result<Ablation> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_ps" => Ok(Ablation::NoPs),
            "no_cl" => Ok(Ablation::NoCl),
            "no_both" => Ok(Ablation::NoBoth),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }

    fn trains_positives(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoCl)
    }

    fn uses_contrastive(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoPs)
    }

    fn needs_augmentation(&self) -> bool {
        !matches!(self, Ablation::NoBoth)
    }
}

/// All training hyperparameters. Defaults follow the reference protocol:
/// learning rate 1e-3, batch 512, dimension 64, dropout 0.5, window 50,
/// patience 10 on validation MRR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub lambda: f64,
    pub tau: f64,
    pub k: usize,
    pub retry_budget: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub successor_mode: SuccessorMode,
    pub weighted_sampling: bool,
    pub contrastive_variant: ContrastiveVariant,
    /// Regenerate augmentation with a fresh stream at every epoch instead of
    /// once per run.
    pub regen_per_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 512,
            embedding_dim: 64,
            n_heads: 2,
            n_layers: 2,
            ffn_dim: 256,
            dropout: 0.5,
            max_len: 50,
            lambda: 0.1,
            tau: 1.0,
            k: 1,
            retry_budget: 10,
            patience: 10,
            max_epochs: 200,
            seed: 42,
            ablation: Ablation::Full,
            successor_mode: SuccessorMode::Immediate,
            weighted_sampling: false,
            contrastive_variant: ContrastiveVariant::Ratio,
            regen_per_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs, and patience must be positive".into(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.k == 0 || self.retry_budget == 0 {
            return Err(Error::Config(
                "k and retry_budget must be positive".into(),
            ));
        }
        self.encoder_config(1).validate()
    }

    pub fn encoder_config(&self, n_items: usize) -> EncoderConfig {
        EncoderConfig {
            embedding_dim: self.embedding_dim,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
            n_items,
            dropout_rate: self.dropout,
        }
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad config file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let correction1 = 1.0 - b1.powi(self.t as i32);
        let correction2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / correction1;
            let v_hat = self.v[i] / correction2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Training data plus augmentation lookups for one epoch.
pub struct TrainData<'a> {
    pub train: &'a [TrainInstance],
    pub positives: &'a [AugmentedSample],
    pub negatives: &'a [AugmentedSample],
    pub pos_by_source: &'a [Option<usize>],
    pub neg_by_source: &'a [Option<usize>],
}

/// One pass over all batches: encode originals (plus positive and negative
/// views where the ablation requires), combine the loss terms, and apply an
/// Adam update per batch. Batch order is shuffled deterministically from
/// `(seed, epoch)`.
pub fn train_epoch(
    params: &mut EncoderParams,
    optimizer: &mut Adam,
    data: &TrainData,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<LossBreakdown> {
    let d = cfg.embedding_dim;
    let use_ps = cfg.ablation.trains_positives();
    let use_cl = cfg.ablation.uses_contrastive();

    let mut indices: Vec<usize> = (0..data.train.len()).collect();
    indices.shuffle(&mut derived_rng(cfg.seed, "shuffle", epoch as u64));
    // Dropout masks are derived per (epoch, instance), not from one rolling
    // epoch stream: the original view always sees the same masks no matter
    // which augmented views the ablation adds, so variants stay comparable.
    let dropout_epoch_seed = derive_seed(cfg.seed, "dropout", epoch as u64);

    let mut rec_sum = 0.0;
    let mut rec_count = 0usize;
    let mut aug_sum = 0.0;
    let mut aug_count = 0usize;
    let mut cl_sum = 0.0;
    let mut cl_count = 0usize;

    for (batch_no, batch) in indices.chunks(cfg.batch_size).enumerate() {
        let n_rec = batch.len();
        let n_aug = if use_ps {
            batch
                .iter()
                .filter(|&&i| data.pos_by_source[i].is_some())
                .count()
        } else {
            0
        };
        let n_cl = if use_cl {
            batch
                .iter()
                .filter(|&&i| {
                    data.pos_by_source[i].is_some() && data.neg_by_source[i].is_some()
                })
                .count()
        } else {
            0
        };

        let mut grads = params.zero_grads();
        for &idx in batch {
            let inst = &data.train[idx];
            let mut dropout_rng = derived_rng(dropout_epoch_seed, "instance", idx as u64);
            let seq = pad_truncate(&inst.input_items, cfg.max_len);
            let pass_orig = encode_training(params, &seq, &mut dropout_rng)?;
            let mut d_final_orig = vec![0.0; d];

            let scores = score_all_items(params, pass_orig.final_repr());
            let (loss, mut d_scores) = rec_loss_grad(&scores, inst.target)?;
            rec_sum += loss;
            rec_count += 1;
            let scale = 1.0 / n_rec as f64;
            for g in d_scores.iter_mut() {
                *g *= scale;
            }
            backward_scores(
                params,
                pass_orig.final_repr(),
                &d_scores,
                &mut grads,
                &mut d_final_orig,
            );

            let pos_idx = data.pos_by_source[idx];
            let neg_idx = data.neg_by_source[idx];
            let wants_pos_rec = use_ps && pos_idx.is_some();
            let has_triple = use_cl && pos_idx.is_some() && neg_idx.is_some();

            if wants_pos_rec || has_triple {
                let pos = &data.positives[pos_idx.unwrap()];
                let pos_seq = pad_truncate(&pos.input_items, cfg.max_len);
                let pass_pos = encode_training(params, &pos_seq, &mut dropout_rng)?;
                let mut d_final_pos = vec![0.0; d];

                if wants_pos_rec {
                    let scores = score_all_items(params, pass_pos.final_repr());
                    let (loss, mut d_scores) = rec_loss_grad(&scores, pos.target)?;
                    aug_sum += loss;
                    aug_count += 1;
                    let scale = 1.0 / n_aug as f64;
                    for g in d_scores.iter_mut() {
                        *g *= scale;
                    }
                    backward_scores(
                        params,
                        pass_pos.final_repr(),
                        &d_scores,
                        &mut grads,
                        &mut d_final_pos,
                    );
                }

                if has_triple {
                    let neg = &data.negatives[neg_idx.unwrap()];
                    let neg_seq = pad_truncate(&neg.input_items, cfg.max_len);
                    let pass_neg = encode_training(params, &neg_seq, &mut dropout_rng)?;
                    let (loss, dh, dpos, dneg) = contrastive_grads(
                        cfg.contrastive_variant,
                        pass_orig.final_repr(),
                        pass_pos.final_repr(),
                        pass_neg.final_repr(),
                        cfg.tau,
                    )?;
                    cl_sum += loss;
                    cl_count += 1;
                    let scale = cfg.lambda / n_cl as f64;
                    for (acc, g) in d_final_orig.iter_mut().zip(&dh) {
                        *acc += scale * g;
                    }
                    for (acc, g) in d_final_pos.iter_mut().zip(&dpos) {
                        *acc += scale * g;
                    }
                    let d_final_neg: Vec<f64> = dneg.iter().map(|g| scale * g).collect();
                    backward(params, &pass_neg, &d_final_neg, &mut grads);
                }

                backward(params, &pass_pos, &d_final_pos, &mut grads);
            }

            backward(params, &pass_orig, &d_final_orig, &mut grads);
        }

        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in epoch {epoch}, batch {batch_no}"
            )));
        }
        optimizer.step(&mut params.data, &grads);
        params.zero_padding_row();
    }

    let rec = rec_sum / rec_count.max(1) as f64;
    let rec_aug = if use_ps {
        Some(aug_sum / aug_count.max(1) as f64)
    } else {
        None
    };
    let contrastive = if use_cl {
        Some(cl_sum / cl_count.max(1) as f64)
    } else {
        None
    };
    let joint = joint_loss(rec, rec_aug, contrastive, cfg.lambda);
    if !joint.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss {joint} after epoch {epoch}"
        )));
    }
    Ok(LossBreakdown {
        rec,
        rec_aug,
        contrastive,
        joint,
        lambda: cfg.lambda,
        tau: cfg.tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stop iff the last `patience` validation values all fail to improve on the
/// best value seen before them.
pub fn early_stop_check(val_mrrs: &[f64], patience: usize) -> StopDecision {
    if val_mrrs.len() <= patience {
        return StopDecision::Continue;
    }
    let cut = val_mrrs.len() - patience;
    let best_before = val_mrrs[..cut]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if val_mrrs[cut..].iter().all(|&v| v <= best_before) {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

/// Per-epoch record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub val_mrr: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// One structured-text record per epoch plus summary lines. Wall times
    /// are kept out of this file so reruns reproduce it byte for byte; they
    /// go to the timings record instead.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = write!(out, "epoch={} rec={:.6}", e.epoch, e.losses.rec);
            if let Some(aug) = e.losses.rec_aug {
                let _ = write!(out, " rec_aug={aug:.6}");
            }
            if let Some(cl) = e.losses.contrastive {
                let _ = write!(out, " contrastive={cl:.6}");
            }
            let _ = writeln!(out, " joint={:.6} val_mrr={:.6}", e.losses.joint, e.val_mrr);
        }
        if let Some(best) = self.best_epoch {
            let _ = writeln!(out, "best_epoch={best}");
        }
        let _ = writeln!(out, "stopped_early={}", self.stopped_early);
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_records())?;
        Ok(())
    }

    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(out, "epoch={} wall_ms={}", e.epoch, e.wall_ms);
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn best_val_mrr(&self) -> Option<f64> {
        self.best_epoch
            .and_then(|b| self.epochs.iter().find(|e| e.epoch == b))
            .map(|e| e.val_mrr)
    }
}

/// Everything `fit` produces: the best checkpoint plus the artifacts built
/// along the way.
pub struct FitOutcome {
    pub params: EncoderParams,
    pub history: TrainHistory,
    pub index: SuccessorIndex,
    pub augmented: AugmentedData,
}

/// Full training: build the successor index from the training split,
/// generate augmentation, train with early stopping on validation MRR, and
/// return the parameters of the best epoch. Evaluation of the result never
/// touches augmentation or the contrastive term.
pub fn fit(cfg: &TrainConfig, splits: &SplitDataset, n_items: usize) -> Result<FitOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if splits.validation.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }

    let index = build_successor_index(&splits.train, n_items, cfg.successor_mode);
    let aug_opts = AugmentOptions {
        k: cfg.k,
        retry_budget: cfg.retry_budget,
        weighted: cfg.weighted_sampling,
    };
    let mut augmented = if cfg.ablation.needs_augmentation() {
        augment_dataset(&splits.train, &index, &aug_opts, cfg.seed)
    } else {
        let mut empty = AugmentedData::default();
        empty.coverage.instances = splits.train.len();
        empty
    };

    let mut params = init_params(cfg.encoder_config(n_items), cfg.seed)?;
    let mut optimizer = Adam::new(cfg.learning_rate, params.n_params());
    let eval_opts = EvalOptions {
        ks: Vec::new(),
        max_len: cfg.max_len,
        mask_history: false,
    };

    let mut history = TrainHistory::default();
    let mut val_mrrs: Vec<f64> = Vec::new();
    let mut best: Option<(usize, f64, EncoderParams)> = None;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        if cfg.regen_per_epoch && cfg.ablation.needs_augmentation() && epoch > 0 {
            let epoch_seed = derive_seed(cfg.seed, "augment-epoch", epoch as u64);
            augmented = augment_dataset(&splits.train, &index, &aug_opts, epoch_seed);
        }
        let pos_by_source = augmented.positive_by_source(splits.train.len());
        let neg_by_source = augmented.negative_by_source(splits.train.len());
        let data = TrainData {
            train: &splits.train,
            positives: &augmented.positives,
            negatives: &augmented.negatives,
            pos_by_source: &pos_by_source,
            neg_by_source: &neg_by_source,
        };
        let losses = train_epoch(&mut params, &mut optimizer, &data, cfg, epoch)?;
        debug_assert!(losses.identity_holds());

        let ranks = rank_instances(&params, &splits.validation, &eval_opts)?;
        let val_mrr = mrr(&ranks)?;
        val_mrrs.push(val_mrr);
        history.epochs.push(EpochStats {
            epoch,
            losses,
            val_mrr,
            wall_ms: started.elapsed().as_millis(),
        });
        if best.as_ref().is_none_or(|&(_, b, _)| val_mrr > b) {
            best = Some((epoch, val_mrr, params.clone()));
        }
        if early_stop_check(&val_mrrs, cfg.patience) == StopDecision::Stop {
            history.stopped_early = true;
            break;
        }
    }

    let (best_epoch, _, best_params) = best.expect("at least one epoch ran");
    history.best_epoch = Some(best_epoch);
    Ok(FitOutcome {
        params: best_params,
        history,
        index,
        augmented,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, synth_generate, user_sequences, SynthSpec};
    use crate::seqprep::chrono_split;

    fn desk_config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            embedding_dim: 8,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 16,
            dropout: 0.2,
            max_len: 8,
            max_epochs: 3,
            patience: 10,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn toy_splits(seed: u64) -> (SplitDataset, usize) {
        let spec = SynthSpec {
            n_users: 40,
            n_items: 12,
            n_intent_clusters: 3,
            chain_length_range: (3, 4),
            segments_per_user: 2,
            noise_rate: 0.05,
        };
        let log = synth_generate(&spec, seed).unwrap();
        let index = build_index(&log);
        let seqs = user_sequences(&log, &index).unwrap();
        (chrono_split(&seqs, 8), index.n_items())
    }

    #[test]
    fn early_stop_rule_cases() {
        // Ten non-improving checks after the best: stop.
        let mut trace = vec![0.1, 0.2];
        trace.extend(std::iter::repeat_n(0.2, 10));
        assert_eq!(early_stop_check(&trace, 10), StopDecision::Stop);

        // Strictly increasing: continue.
        let trace: Vec<f64> = (0..15).map(|i| i as f64 * 0.01).collect();
        assert_eq!(early_stop_check(&trace, 10), StopDecision::Continue);

        // Nine flat epochs after the best: continue.
        let mut trace = vec![0.1, 0.2];
        trace.extend(std::iter::repeat_n(0.2, 9));
        assert_eq!(early_stop_check(&trace, 10), StopDecision::Continue);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(0.1, 2);
        let mut params = vec![1.0, -1.0];
        adam.step(&mut params, &[0.5, -0.5]);
        assert!(params[0] < 1.0);
        assert!(params[1] > -1.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let (splits, n_items) = toy_splits(3);
        let cfg = desk_config();
        let a = fit(&cfg, &splits, n_items).unwrap();
        let b = fit(&cfg, &splits, n_items).unwrap();
        assert_eq!(a.params.data, b.params.data);
        assert_eq!(a.history.best_epoch, b.history.best_epoch);
        assert_eq!(a.augmented, b.augmented);
    }

    #[test]
    fn fit_rejects_empty_train_split() {
        let splits = SplitDataset::default();
        assert!(matches!(
            fit(&desk_config(), &splits, 5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn padding_row_stays_zero_through_training() {
        let (splits, n_items) = toy_splits(4);
        let outcome = fit(&desk_config(), &splits, n_items).unwrap();
        let d = desk_config().embedding_dim;
        assert!(outcome.params.data[outcome.params.tensors()[0].offset..][..d]
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn training_loss_descends_on_toy_data() {
        let (splits, n_items) = toy_splits(5);
        let cfg = TrainConfig {
            max_epochs: 3,
            dropout: 0.0,
            learning_rate: 0.01,
            ..desk_config()
        };
        let outcome = fit(&cfg, &splits, n_items).unwrap();
        let first = outcome.history.epochs.first().unwrap().losses.rec;
        let last = outcome.history.epochs.last().unwrap().losses.rec;
        assert!(
            last < first,
            "rec loss should fall: first {first}, last {last}"
        );
    }

    #[test]
    fn ablation_isolation_in_history() {
        let (splits, n_items) = toy_splits(6);
        let no_cl = fit(
            &TrainConfig {
                ablation: Ablation::NoCl,
                ..desk_config()
            },
            &splits,
            n_items,
        )
        .unwrap();
        for e in &no_cl.history.epochs {
            assert!(e.losses.contrastive.is_none());
            assert!(e.losses.rec_aug.is_some());
        }
        let no_ps = fit(
            &TrainConfig {
                ablation: Ablation::NoPs,
                ..desk_config()
            },
            &splits,
            n_items,
        )
        .unwrap();
        for e in &no_ps.history.epochs {
            assert!(e.losses.rec_aug.is_none());
            assert!(e.losses.contrastive.is_some());
        }
    }

    #[test]
    fn no_both_equals_full_with_empty_augmentation() {
        // With lambda 0 and no augmented samples available, the full
        // configuration degenerates to plain next-item cross-entropy.
        let (splits, n_items) = toy_splits(7);
        let index = build_successor_index(&splits.train, n_items, SuccessorMode::Immediate);
        let cfg_full = TrainConfig {
            lambda: 0.0,
            ..desk_config()
        };
        let cfg_plain = TrainConfig {
            ablation: Ablation::NoBoth,
            ..cfg_full.clone()
        };

        let mut params_a = init_params(cfg_full.encoder_config(n_items), cfg_full.seed).unwrap();
        let mut adam_a = Adam::new(cfg_full.learning_rate, params_a.n_params());
        let empty_pos = vec![None; splits.train.len()];
        let empty_neg = vec![None; splits.train.len()];
        let data = TrainData {
            train: &splits.train,
            positives: &[],
            negatives: &[],
            pos_by_source: &empty_pos,
            neg_by_source: &empty_neg,
        };
        let _ = index;
        let breakdown_a = train_epoch(&mut params_a, &mut adam_a, &data, &cfg_full, 0).unwrap();

        let mut params_b = init_params(cfg_plain.encoder_config(n_items), cfg_plain.seed).unwrap();
        let mut adam_b = Adam::new(cfg_plain.learning_rate, params_b.n_params());
        let breakdown_b = train_epoch(&mut params_b, &mut adam_b, &data, &cfg_plain, 0).unwrap();

        assert_eq!(params_a.data, params_b.data);
        assert_eq!(breakdown_a.rec, breakdown_b.rec);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = TrainConfig {
            lambda: 0.25,
            ablation: Ablation::NoPs,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        cfg.save(&path).unwrap();
        let loaded = TrainConfig::load(&path).unwrap();
        assert_eq!(cfg, loaded);
    }

    #[test]
    fn partial_config_file_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, "lambda = 0.5\nablation = \"no_cl\"\n").unwrap();
        let loaded = TrainConfig::load(&path).unwrap();
        assert_eq!(loaded.lambda, 0.5);
        assert_eq!(loaded.ablation, Ablation::NoCl);
        assert_eq!(loaded.batch_size, 512);
    }
}
