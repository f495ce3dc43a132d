//! Training, optimization, batching, and evaluation.
//!
//! The loss is the per-class binary cross-entropy summed over interactions
//! and classes (not plain categorical CE), with probabilities clamped before
//! the logs. Optimization is AdamW with decoupled multiplicative weight decay
//! applied before the adaptive step.
//!
//! Epoch accounting: each epoch starts with one full-graph forward pass whose
//! probabilities serve both the history row (train loss on the train rows,
//! validation metrics on the validation rows) and, in the full-batch regime,
//! the gradient. History row t therefore describes the parameters entering
//! epoch t, and the retained best checkpoint is the exact parameter set
//! behind its history row, so a later evaluation reproduces that row
//! bit-for-bit. Mini-batch training keeps the same metrics pass and then
//! applies one optimizer step per sampled chunk.
//!
//! Early stopping tracks validation micro-F1: an epoch improves only when
//! strictly greater than the best so far; `early_stop` consecutive
//! non-improving epochs end training.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::StructEmbeddings;
use crate::encoder::{EncoderConfig, ParamStore, SaftModel};
use crate::error::{Error, Result};
use crate::graph::TinGraph;
use crate::mat::Mat;
use crate::mp::{MpConfig, MpVariant};
use crate::sampling::{
    mix64, sample_centrality, sample_distance_at, sample_random, SamplerConfig, SamplerKind, Side,
};
use crate::tensor::{bce_sum, gather_rows, Tape, Tensor};

// ── configuration ────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// AdamW denominator epsilon.
    pub epsilon: f64,
    pub epochs: usize,
    /// Early-stop patience in epochs; must not exceed `epochs`.
    pub early_stop: usize,
    /// Edges per optimizer step; 0 trains full-batch.
    pub batch_size: usize,
    /// Message-passing iterations per encoder layer.
    pub mp_layer: usize,
    /// Structural embedding rank.
    pub svd_dim: usize,
    pub delta: f64,
    pub lambda: f64,
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub text_len: usize,
    pub vocab_buckets: usize,
    pub sampler: SamplerKind,
    /// Sampler neighborhood budget.
    pub b: usize,
    pub variant: MpVariant,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            epsilon: 1e-6,
            epochs: 300,
            early_stop: 30,
            batch_size: 0,
            mp_layer: 1,
            svd_dim: 64,
            delta: 2.0,
            lambda: 2.0,
            layers: 2,
            heads: 2,
            hidden_dim: 32,
            text_len: 12,
            vocab_buckets: 1024,
            sampler: SamplerKind::Random,
            b: 10,
            variant: MpVariant::Lga,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Contract("learning rate and epsilon must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Contract("weight decay must be nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Contract("training needs at least one epoch".into()));
        }
        if self.early_stop == 0 || self.early_stop > self.epochs {
            return Err(Error::Contract(format!(
                "early-stop patience {} must be in [1, epochs = {}]",
                self.early_stop, self.epochs
            )));
        }
        if self.svd_dim == 0 {
            return Err(Error::Contract("svd_dim must be at least 1".into()));
        }
        self.mp_config().validate()?;
        Ok(())
    }

    pub fn encoder_config(&self, n_classes: usize) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            heads: self.heads,
            d: self.hidden_dim,
            text_len: self.text_len,
            vocab_buckets: self.vocab_buckets,
            n_classes,
        }
    }

    pub fn mp_config(&self) -> MpConfig {
        MpConfig {
            variant: self.variant,
            rounds: self.mp_layer,
            delta: self.delta,
            lambda: self.lambda,
        }
    }
}

// ── splits ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self, g: &TinGraph) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Contract("train split is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (name, part) in
            [("train", &self.train), ("val", &self.val), ("test", &self.test)]
        {
            for &e in part {
                if e >= g.n_edges() {
                    return Err(Error::Contract(format!(
                        "{name} split references edge {e}, graph has {}",
                        g.n_edges()
                    )));
                }
                if !seen.insert(e) {
                    return Err(Error::Contract(format!(
                        "edge {e} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Stratified split, seeded: within each class the edges are shuffled, then
/// floor(n/5) go to test, floor(n/5) to validation, and the rest to train.
pub fn stratified_split(g: &TinGraph, seed: u64) -> SplitSpec {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..g.n_classes {
        let mut edges: Vec<usize> =
            (0..g.n_edges()).filter(|&e| g.labels[e] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(&[seed, 0x73706c69, class as u64]));
        edges.shuffle(&mut rng);
        let n_hold = edges.len() / 5;
        test.extend(&edges[..n_hold]);
        val.extend(&edges[n_hold..2 * n_hold]);
        train.extend(&edges[2 * n_hold..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    SplitSpec { train, val, test }
}

// ── loss ─────────────────────────────────────────────────────────────────

/// One-hot target rows for the given edges.
pub fn one_hot_targets(g: &TinGraph, edges: &[usize]) -> Mat {
    let mut t = Mat::zeros(edges.len(), g.n_classes);
    for (r, &e) in edges.iter().enumerate() {
        *t.at_mut(r, g.labels[e]) = 1.0;
    }
    t
}

/// Per-class binary cross-entropy summed over rows and classes:
/// −Σ [y·ln p + (1−y)·ln(1−p)], probabilities clamped before the logs.
/// Targets must be exactly one-hot.
pub fn bce_loss<'t>(tape: &'t Tape, probs: Tensor<'t>, targets: &Mat) -> Result<Tensor<'t>> {
    if probs.rows() != targets.rows || probs.cols() != targets.cols {
        return Err(Error::Contract(format!(
            "loss shapes differ: predictions {}x{}, targets {}x{}",
            probs.rows(),
            probs.cols(),
            targets.rows,
            targets.cols
        )));
    }
    for r in 0..targets.rows {
        let row = targets.row(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Contract(format!("target row {r} is not one-hot")));
        }
    }
    let t = tape.constant(targets.clone());
    bce_sum(tape, probs, t)
}

// ── optimizer ────────────────────────────────────────────────────────────

pub struct AdamW {
    pub lr: f64,
    pub wd: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    t: u32,
    m: BTreeMap<String, Mat>,
    v: BTreeMap<String, Mat>,
}

impl AdamW {
    pub fn new(lr: f64, wd: f64, eps: f64) -> Self {
        AdamW { lr, wd, eps, beta1: 0.9, beta2: 0.999, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// One step over every trainable parameter. A parameter missing from
    /// `grads` is treated as having a zero gradient: it still decays and its
    /// moments still shrink toward zero.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Mat>) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let names: Vec<String> = params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.name.clone())
            .collect();
        for name in names {
            let current = params.get(&name).expect("listed above").value.clone();
            let (rows, cols) = (current.rows, current.cols);
            let zero = Mat::zeros(rows, cols);
            let g = grads.get(&name).unwrap_or(&zero);
            if g.rows != rows || g.cols != cols {
                return Err(Error::Contract(format!(
                    "gradient for {name} has shape {}x{}, parameter is {rows}x{cols}",
                    g.rows, g.cols
                )));
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| Mat::zeros(rows, cols));
            let v = self.v.entry(name.clone()).or_insert_with(|| Mat::zeros(rows, cols));
            let mut next = current;
            let decay = 1.0 - self.lr * self.wd;
            for i in 0..next.data.len() {
                next.data[i] *= decay;
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g.data[i];
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                next.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            params.set_value(&name, next)?;
        }
        Ok(())
    }
}

// ── metrics ──────────────────────────────────────────────────────────────

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Vec<Vec<usize>> {
    assert_eq!(truth.len(), pred.len());
    let mut c = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        c[t][p] += 1;
    }
    c
}

/// Micro-F1 from globally pooled true/false positives. For single-label
/// multiclass data every miss is one false positive and one false negative,
/// so this equals accuracy.
pub fn micro_f1(conf: &[Vec<usize>]) -> f64 {
    let total: usize = conf.iter().map(|r| r.iter().sum::<usize>()).sum();
    if total == 0 {
        return 0.0;
    }
    let tp: usize = (0..conf.len()).map(|i| conf[i][i]).sum();
    let fp = total - tp;
    let fn_ = total - tp;
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted mean of per-class F1; a class with no true positives scores 0.
pub fn macro_f1(conf: &[Vec<usize>]) -> f64 {
    let k = conf.len();
    if k == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for c in 0..k {
        let tp = conf[c][c] as f64;
        let pred: f64 = (0..k).map(|t| conf[t][c] as f64).sum();
        let truth: f64 = conf[c].iter().map(|&x| x as f64).sum();
        if tp > 0.0 {
            let p = tp / pred;
            let r = tp / truth;
            sum += 2.0 * p * r / (p + r);
        }
    }
    sum / k as f64
}

// ties resolve to the lowest index
fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

// ── training ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub val_micro_f1: f64,
}

pub struct TrainResult {
    /// Model holding the best-validation parameter snapshot.
    pub model: SaftModel,
    pub history: Vec<HistoryRow>,
    /// History row index of the retained snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
}

fn metrics_on(probs: &Mat, g: &TinGraph, edges: &[usize]) -> (f64, f64, Vec<Vec<usize>>) {
    if edges.is_empty() {
        return (0.0, 0.0, vec![vec![0; g.n_classes]; g.n_classes]);
    }
    let truth: Vec<usize> = edges.iter().map(|&e| g.labels[e]).collect();
    let pred: Vec<usize> = edges.iter().map(|&e| argmax_row(probs.row(e))).collect();
    let conf = confusion(&truth, &pred, g.n_classes);
    (macro_f1(&conf), micro_f1(&conf), conf)
}

fn check_embeddings(g: &TinGraph, embeds: &StructEmbeddings) -> Result<()> {
    if embeds.z_dist.rows != g.n_edges() || embeds.z_cent.rows != g.n_edges() {
        return Err(Error::Contract(format!(
            "embeddings cover {} / {} edges, graph has {}",
            embeds.z_dist.rows,
            embeds.z_cent.rows,
            g.n_edges()
        )));
    }
    if embeds.z_dist.cols != embeds.z_cent.cols {
        return Err(Error::Contract("distance and centrality widths differ".into()));
    }
    Ok(())
}

/// Train a fresh model. Embeddings and splits are inputs; the caller decides
/// how they were produced. With `text_only` the graph-aware half of the model
/// is disabled (ablation baseline).
pub fn train(
    g: &TinGraph,
    embeds: &StructEmbeddings,
    cfg: &TrainConfig,
    splits: &SplitSpec,
    text_only: bool,
) -> Result<TrainResult> {
    cfg.validate()?;
    splits.validate(g)?;
    check_embeddings(g, embeds)?;

    let enc_cfg = cfg.encoder_config(g.n_classes);
    let mp_cfg = cfg.mp_config();
    let struct_k = embeds.z_dist.cols;
    let mut model = SaftModel::new(
        enc_cfg.clone(),
        mp_cfg,
        struct_k,
        g.n_users,
        g.n_items,
        mix64(&[cfg.seed, 0x6d6f6465]),
    )?;

    let all_edges: Vec<usize> = (0..g.n_edges()).collect();
    let train_targets = one_hot_targets(g, &splits.train);
    let mut optimizer = AdamW::new(cfg.learning_rate, cfg.weight_decay, cfg.epsilon);

    let mut history: Vec<HistoryRow> = Vec::new();
    let mut best_micro = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: ParamStore = model.params.clone();
    let mut non_improving = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        // metrics pass: one full-graph forward with the parameters entering
        // this epoch; in the full-batch regime it doubles as the loss pass
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let probs = model.forward(
            &tape,
            &bound,
            g,
            &embeds.z_dist,
            &embeds.z_cent,
            &all_edges,
            text_only,
        )?;
        let train_probs = gather_rows(&tape, probs, &splits.train)?;
        let loss = bce_loss(&tape, train_probs, &train_targets)?;
        let loss_value = loss.value().at(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss {loss_value} at epoch {epoch}"
            )));
        }
        let probs_mat = probs.value();
        let (val_macro, val_micro, _) = metrics_on(&probs_mat, g, &splits.val);
        history.push(HistoryRow {
            epoch,
            train_loss: loss_value,
            val_macro_f1: val_macro,
            val_micro_f1: val_micro,
        });

        if splits.val.is_empty() {
            // no validation signal: keep the latest parameters, never stop early
            best_params = model.params.clone();
            best_epoch = epoch;
        } else if val_micro > best_micro {
            best_micro = val_micro;
            best_epoch = epoch;
            best_params = model.params.clone();
            non_improving = 0;
        } else {
            non_improving += 1;
            if non_improving >= cfg.early_stop {
                stopped_early = true;
                break;
            }
        }

        if cfg.batch_size == 0 {
            // full batch: reuse the metrics pass for the gradient
            tape.backward(loss)?;
            let mut grads = BTreeMap::new();
            for p in model.params.iter().filter(|p| p.trainable) {
                if let Some(gm) = tape.grad(bound.tensor(&p.name)) {
                    grads.insert(p.name.clone(), gm);
                }
            }
            optimizer.step(&mut model.params, &grads)?;
        } else {
            let mut order = splits.train.clone();
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix64(&[cfg.seed, 0x65706f63, epoch as u64]));
            order.shuffle(&mut rng);
            for (chunk_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let mut chunk_sorted = chunk.to_vec();
                chunk_sorted.sort_unstable();
                let batch = assemble_batch(
                    g,
                    embeds,
                    cfg,
                    &chunk_sorted,
                    epoch,
                    chunk_idx,
                    text_only,
                )?;
                let positions: Vec<usize> = chunk_sorted
                    .iter()
                    .map(|e| batch.binary_search(e).expect("chunk edge is in its batch"))
                    .collect();

                let tape = Tape::new();
                let bound = model.bind(&tape);
                let probs = model.forward(
                    &tape,
                    &bound,
                    g,
                    &embeds.z_dist,
                    &embeds.z_cent,
                    &batch,
                    text_only,
                )?;
                let chunk_probs = gather_rows(&tape, probs, &positions)?;
                let targets = one_hot_targets(g, &chunk_sorted);
                let loss = bce_loss(&tape, chunk_probs, &targets)?;
                let lv = loss.value().at(0, 0);
                if !lv.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite batch loss {lv} at epoch {epoch}"
                    )));
                }
                tape.backward(loss)?;
                let mut grads = BTreeMap::new();
                for p in model.params.iter().filter(|p| p.trainable) {
                    if let Some(gm) = tape.grad(bound.tensor(&p.name)) {
                        grads.insert(p.name.clone(), gm);
                    }
                }
                optimizer.step(&mut model.params, &grads)?;
            }
        }
    }

    let model = SaftModel::from_parts(
        enc_cfg,
        mp_cfg,
        struct_k,
        g.n_users,
        g.n_items,
        best_params,
    )?;
    Ok(TrainResult { model, history, best_epoch, stopped_early })
}

/// Mini-batch edge set: the target chunk plus one shared neighborhood sample
/// per (node, side) touched by it. Distance sampling anchors each node's
/// sample on its lowest target edge.
pub fn assemble_batch(
    g: &TinGraph,
    embeds: &StructEmbeddings,
    cfg: &TrainConfig,
    chunk_sorted: &[usize],
    epoch: usize,
    chunk_idx: usize,
    text_only: bool,
) -> Result<Vec<usize>> {
    let mut batch: BTreeSet<usize> = chunk_sorted.iter().copied().collect();
    if text_only {
        // no message passing, so neighborhoods are irrelevant
        return Ok(batch.into_iter().collect());
    }
    let scfg = SamplerConfig {
        kind: cfg.sampler,
        b: cfg.b,
        seed: mix64(&[cfg.seed, 0x62617463, epoch as u64, chunk_idx as u64]),
    };
    let mut seen: BTreeSet<(u8, usize)> = BTreeSet::new();
    for &e in chunk_sorted {
        let (u, i) = g.edges[e];
        for (tag, side, node) in [(0u8, Side::User, u), (1u8, Side::Item, i)] {
            if !seen.insert((tag, node)) {
                continue;
            }
            let sampled = match cfg.sampler {
                SamplerKind::Random => sample_random(g, node, side, &scfg)?,
                SamplerKind::Centrality => {
                    sample_centrality(g, node, side, &embeds.z_cent, &scfg)?
                }
                SamplerKind::Distance => {
                    sample_distance_at(g, node, side, e, &embeds.z_dist, &scfg)?
                }
            };
            batch.extend(sampled);
        }
    }
    Ok(batch.into_iter().collect())
}

/// Metrics for a trained model on a set of edges. The forward pass runs over
/// the whole graph (the model is transductive) and the report is restricted
/// to `edges`.
pub fn evaluate(
    model: &SaftModel,
    g: &TinGraph,
    embeds: &StructEmbeddings,
    edges: &[usize],
    text_only: bool,
) -> Result<EvalReport> {
    if edges.is_empty() {
        return Err(Error::Contract("evaluation split is empty".into()));
    }
    check_embeddings(g, embeds)?;
    let all_edges: Vec<usize> = (0..g.n_edges()).collect();
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let probs = model
        .forward(&tape, &bound, g, &embeds.z_dist, &embeds.z_cent, &all_edges, text_only)?
        .value();
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    let (macro_f1, micro_f1, confusion) = metrics_on(&probs, g, &sorted);
    Ok(EvalReport { macro_f1, micro_f1, confusion })
}

// ── history file ─────────────────────────────────────────────────────────

/// One tab-separated line per epoch: epoch, train loss, validation macro-F1,
/// validation micro-F1.
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in rows {
        writeln!(f, "{}\t{}\t{}\t{}", r.epoch, r.train_loss, r.val_macro_f1, r.val_micro_f1)?;
    }
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 tab-separated fields, got {}",
                path.display(),
                lineno + 1,
                parts.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::Format(format!("{}:{}: bad {what} `{s}`", path.display(), lineno + 1))
            })
        };
        rows.push(HistoryRow {
            epoch: parts[0].parse::<usize>().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: bad epoch `{}`",
                    path.display(),
                    lineno + 1,
                    parts[0]
                ))
            })?,
            train_loss: parse_f(parts[1], "loss")?,
            val_macro_f1: parse_f(parts[2], "macro-f1")?,
            val_micro_f1: parse_f(parts[3], "micro-f1")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_first_step_moves_by_learning_rate() {
        let mut params = ParamStore::default();
        params.add("p", Mat::from_vec(1, 1, vec![1.0]).unwrap(), true);
        let mut opt = AdamW::new(0.1, 0.0, 1e-6);
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Mat::from_vec(1, 1, vec![1.0]).unwrap());
        opt.step(&mut params, &grads).unwrap();
        let p = params.get("p").unwrap().value.at(0, 0);
        assert!((p - 0.9).abs() < 1e-5, "got {p}");
    }

    #[test]
    fn adamw_zero_grad_zero_decay_is_identity() {
        let mut params = ParamStore::default();
        params.add("p", Mat::from_vec(1, 2, vec![0.3, -0.7]).unwrap(), true);
        let mut opt = AdamW::new(0.1, 0.0, 1e-6);
        opt.step(&mut params, &BTreeMap::new()).unwrap();
        assert_eq!(params.get("p").unwrap().value.data, vec![0.3, -0.7]);
    }

    #[test]
    fn adamw_decoupled_decay_shrinks_multiplicatively() {
        let mut params = ParamStore::default();
        params.add("p", Mat::from_vec(1, 1, vec![2.0]).unwrap(), true);
        let lr = 0.05;
        let wd = 1e-2;
        let mut opt = AdamW::new(lr, wd, 1e-6);
        for _ in 0..3 {
            opt.step(&mut params, &BTreeMap::new()).unwrap();
        }
        let want = 2.0 * (1.0 - lr * wd).powi(3);
        let got = params.get("p").unwrap().value.at(0, 0);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn frozen_params_are_not_touched() {
        let mut params = ParamStore::default();
        params.add("frozen", Mat::from_vec(1, 1, vec![5.0]).unwrap(), false);
        let mut opt = AdamW::new(0.1, 0.5, 1e-6);
        let mut grads = BTreeMap::new();
        grads.insert("frozen".to_string(), Mat::from_vec(1, 1, vec![1.0]).unwrap());
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params.get("frozen").unwrap().value.at(0, 0), 5.0);
    }

    #[test]
    fn uniform_binary_prediction_costs_two_log_two() {
        let tape = Tape::new();
        let probs = tape.leaf(Mat::from_vec(1, 2, vec![0.5, 0.5]).unwrap());
        let targets = Mat::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let loss = bce_loss(&tape, probs, &targets).unwrap();
        assert!((loss.value().at(0, 0) - 2.0 * (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_costs_nearly_nothing() {
        let tape = Tape::new();
        let probs = tape.leaf(Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let targets = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let loss = bce_loss(&tape, probs, &targets).unwrap();
        assert!(loss.value().at(0, 0) <= 2.0 * 2.0 * 1e-11);
    }

    #[test]
    fn non_one_hot_targets_rejected() {
        let tape = Tape::new();
        let probs = tape.leaf(Mat::from_vec(1, 2, vec![0.5, 0.5]).unwrap());
        for bad in [vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 0.0]] {
            let targets = Mat::from_vec(1, 2, bad).unwrap();
            assert!(bce_loss(&tape, probs, &targets).is_err());
        }
    }

    #[test]
    fn metrics_match_hand_computed_confusions() {
        let conf = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert!((micro_f1(&conf) - 0.75).abs() < 1e-12);
        assert!((macro_f1(&conf) - (2.0 / 3.0 + 4.0 / 5.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_one_class_predictor_on_balanced_data() {
        let conf = confusion(&[0, 0, 1, 1], &[0, 0, 0, 0], 2);
        assert!((micro_f1(&conf) - 0.5).abs() < 1e-12);
        assert!((macro_f1(&conf) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let conf = confusion(&[0, 1, 2], &[0, 1, 2], 3);
        assert!((micro_f1(&conf) - 1.0).abs() < 1e-15);
        assert!((macro_f1(&conf) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn micro_f1_equals_accuracy_on_random_confusions() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let k = rng.gen_range(2..6);
            let n = rng.gen_range(1..40);
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let conf = confusion(&truth, &pred, k);
            let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
            assert!((micro_f1(&conf) - acc).abs() < 1e-12);
        }
    }

    fn split_graph() -> TinGraph {
        // 20 edges, two classes of 10 each
        let mut edges = Vec::new();
        let mut labels = Vec::new();
        let mut texts = Vec::new();
        for i in 0..20 {
            edges.push((i % 4, i % 5));
            labels.push(i % 2);
            texts.push(format!("text {i}"));
        }
        TinGraph::new(4, 5, edges, labels, texts, 2).unwrap()
    }

    #[test]
    fn stratified_split_proportions_and_disjointness() {
        let g = split_graph();
        let s = stratified_split(&g, 7);
        s.validate(&g).unwrap();
        assert_eq!(s.test.len(), 4);
        assert_eq!(s.val.len(), 4);
        assert_eq!(s.train.len(), 12);
        // two of each class in each holdout
        for part in [&s.test, &s.val] {
            let c0 = part.iter().filter(|&&e| g.labels[e] == 0).count();
            assert_eq!(c0, 2);
        }
        // deterministic
        let s2 = stratified_split(&g, 7);
        assert_eq!(s.train, s2.train);
        assert_eq!(s.val, s2.val);
        assert_eq!(s.test, s2.test);
        // and seed-sensitive
        let s3 = stratified_split(&g, 8);
        assert!(s.train != s3.train || s.val != s3.val || s.test != s3.test);
    }

    #[test]
    fn split_validation_catches_overlap_and_range() {
        let g = split_graph();
        let bad = SplitSpec { train: vec![0, 1], val: vec![1], test: vec![] };
        assert!(bad.validate(&g).is_err());
        let oob = SplitSpec { train: vec![0, 99], val: vec![], test: vec![] };
        assert!(oob.validate(&g).is_err());
        let empty = SplitSpec { train: vec![], val: vec![0], test: vec![1] };
        assert!(empty.validate(&g).is_err());
    }

    #[test]
    fn history_roundtrip_preserves_floats() {
        let rows = vec![
            HistoryRow { epoch: 0, train_loss: 1.25, val_macro_f1: 1.0 / 3.0, val_micro_f1: 0.5 },
            HistoryRow { epoch: 1, train_loss: 0.7331, val_macro_f1: 0.25, val_micro_f1: 1.0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.tsv");
        write_history(&path, &rows).unwrap();
        let back = read_history(&path).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn config_validation_bounds() {
        let mut cfg = TrainConfig::default();
        cfg.early_stop = cfg.epochs + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
