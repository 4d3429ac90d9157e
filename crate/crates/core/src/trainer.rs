//! Mini-batch training under the log loss with L2 on active parameters, and
//! early stopping on validation AUC.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::repeated_eval;
use crate::exec::ExecMode;
use crate::graph::{KigGraph, LabeledPair};
use crate::model::{Model, ModelConfig, Network};
use crate::numeric::{Adam, AdamConfig, Gradients, ParamRef, ParamStore, Tape, Var};
use crate::seed::SeedStream;

/// Pairs per gradient work unit. Fixed so the reduction order, and hence the
/// result, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSeeds {
    pub init: u64,
    pub sampler: u64,
    pub shuffle: u64,
    pub eval: u64,
}

impl Default for TrainSeeds {
    fn default() -> Self {
        TrainSeeds {
            init: 1,
            sampler: 2,
            shuffle: 3,
            eval: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Sampling draws averaged per validation pair.
    pub val_repetitions: usize,
    pub model: ModelConfig,
    pub seeds: TrainSeeds,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            l2: 1e-5,
            batch_size: 1024,
            max_epochs: 50,
            patience: 5,
            val_repetitions: 10,
            model: ModelConfig::default(),
            seeds: TrainSeeds::default(),
            exec: ExecMode::default(),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            out.push(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            out.push(format!("l2 must be finite and non-negative, got {}", self.l2));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("val_repetitions", self.val_repetitions),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if let Err(e) = self.model.validate() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            p => Err(Error::invalid(p.join("; "))),
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            l2: self.l2,
            ..Default::default()
        }
    }
}

/// Distinct regularized slices for a set of leaf references: every dense
/// parameter in full, and each touched row of row-sparse parameters.
fn active_slices(params: &ParamStore, refs: impl IntoIterator<Item = ParamRef>) -> Vec<ParamRef> {
    let mut rows = BTreeSet::new();
    for r in refs {
        let p = params.get(r.id);
        if p.row_sparse {
            let rl = p.row_len();
            for row in r.offset / rl..(r.offset + r.len).div_ceil(rl) {
                rows.insert((r.id, row));
            }
        }
    }
    let mut out: Vec<ParamRef> = params.iter().filter(|(_, p)| !p.row_sparse).map(|(id, _)| params.whole(id)).collect();
    out.extend(rows.into_iter().map(|(id, row)| params.row(id, row)));
    out
}

fn l2_value(params: &ParamStore, slices: &[ParamRef]) -> f64 {
    slices.iter().map(|&r| params.slice(r).iter().map(|x| x * x).sum::<f64>()).sum()
}

/// Sampling stream of the pair at shuffled position `pos` in `epoch`.
pub fn pair_stream(seeds: &TrainSeeds, epoch: usize, pos: usize) -> SeedStream {
    SeedStream::new(seeds.sampler).derive(&[epoch as u64, pos as u64])
}

/// Records the full objective on one tape: mean log loss over `batch` plus
/// `l2` times the squared norm of the active parameters.
pub fn loss_tape(
    net: &Network,
    params: &ParamStore,
    tape: &mut Tape,
    graph: &KigGraph,
    batch: &[LabeledPair],
    streams: &[SeedStream],
    l2: f64,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if streams.len() != batch.len() {
        return Err(Error::LengthMismatch {
            expected: batch.len(),
            actual: streams.len(),
        });
    }
    let mut losses = Vec::with_capacity(batch.len());
    for (p, s) in batch.iter().zip(streams) {
        let out = net.forward(params, tape, graph, p.user, p.item, &mut s.rng())?;
        losses.push(tape.log_loss(out.logit, p.label));
    }
    let total = tape.sum(&losses);
    let data = tape.scale(total, 1.0 / batch.len() as f64);
    if l2 == 0.0 {
        return Ok(data);
    }
    let refs: Vec<ParamRef> = tape.param_refs().collect();
    let norms: Vec<Var> = active_slices(params, refs)
        .into_iter()
        .map(|r| {
            let v = tape.param(params, r);
            tape.squared_norm(v)
        })
        .collect();
    let reg = tape.sum(&norms);
    let reg = tape.scale(reg, l2);
    Ok(tape.sum(&[data, reg]))
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Mean log loss plus the L2 term.
    pub loss: f64,
    pub data_loss: f64,
    /// Gradient of the mean log loss only; the optimizer adds the L2 part.
    pub grads: Gradients,
}

/// Loss and data-term gradient for one batch. Pairs are processed in fixed
/// chunks whose partial results are reduced in order.
pub fn batch_loss(
    model: &Model,
    graph: &KigGraph,
    batch: &[LabeledPair],
    streams: &[SeedStream],
    l2: f64,
    exec: ExecMode,
) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if streams.len() != batch.len() {
        return Err(Error::LengthMismatch {
            expected: batch.len(),
            actual: streams.len(),
        });
    }
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<(usize, usize)> = (0..batch.len())
        .step_by(GRAD_CHUNK)
        .map(|s| (s, (s + GRAD_CHUNK).min(batch.len())))
        .collect();
    let partial = exec.map(&chunks, |_, &(start, end)| -> Result<(f64, Gradients, BTreeSet<ParamRef>)> {
        let mut grads = Gradients::zeros_like(&model.params);
        let mut refs = BTreeSet::new();
        let mut loss = 0.0;
        for idx in start..end {
            let p = &batch[idx];
            let mut tape = Tape::new();
            let out = model.net.forward(&model.params, &mut tape, graph, p.user, p.item, &mut streams[idx].rng())?;
            let l = tape.log_loss(out.logit, p.label);
            let value = tape.scalar(l);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss of pair {idx} (node {} , node {})",
                    p.user.0, p.item.0
                )));
            }
            loss += value;
            let adj = tape.backward(l);
            tape.accumulate(&adj, &mut grads, scale);
            refs.extend(tape.param_refs());
        }
        Ok((loss, grads, refs))
    });
    let mut grads = Gradients::zeros_like(&model.params);
    let mut refs = BTreeSet::new();
    let mut loss = 0.0;
    for part in partial {
        let (l, g, r) = part?;
        loss += l;
        grads.merge(&g, 1.0);
        refs.extend(r);
    }
    let data_loss = loss * scale;
    let reg = if l2 == 0.0 {
        0.0
    } else {
        l2 * l2_value(&model.params, &active_slices(&model.params, refs))
    };
    Ok(BatchResult {
        loss: data_loss + reg,
        data_loss,
        grads,
    })
}

/// Optimizer and epoch counter carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(model: Model, config: &TrainConfig) -> Self {
        let adam = Adam::new(config.adam(), &model.params);
        TrainState { model, adam, epoch: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean over batches of the batch objective.
    pub train_loss: f64,
    pub val_auc: f64,
    pub seconds: f64,
}

/// One shuffled pass over `train`, with one optimizer step per batch.
/// Returns the mean batch loss.
pub fn train_epoch(state: &mut TrainState, graph: &KigGraph, train: &[LabeledPair], config: &TrainConfig) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let epoch = state.epoch;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut SeedStream::new(config.seeds.shuffle).child(epoch as u64).rng());
    let mut total = 0.0;
    let mut batches = 0;
    for (b, idx) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<LabeledPair> = idx.iter().map(|&i| train[i]).collect();
        let streams: Vec<SeedStream> = (0..idx.len())
            .map(|k| pair_stream(&config.seeds, epoch, b * config.batch_size + k))
            .collect();
        let res = batch_loss(&state.model, graph, &batch, &streams, config.l2, config.exec)?;
        state.adam.step(&mut state.model.params, &res.grads)?;
        total += res.loss;
        batches += 1;
    }
    state.epoch += 1;
    Ok(total / batches as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub nodes: usize,
    pub train_pairs: usize,
    pub validation_pairs: usize,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub stopped_early: bool,
}

impl RunManifest {
    /// Deterministic text form. Wall times are left out; see
    /// [`RunManifest::timing_text`].
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let m = &c.model;
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "scorer = {}", m.scorer);
        let _ = writeln!(s, "encoder = {}", m.encoder);
        let _ = writeln!(s, "layers = {}", m.layers);
        let _ = writeln!(s, "dim = {}", m.dim);
        let _ = writeln!(s, "neighbors = {}", m.neighbors);
        let _ = writeln!(s, "encoder_neighbors = {}", m.encoder_neighbors);
        let _ = writeln!(s, "lr = {:?}", c.lr);
        let _ = writeln!(s, "l2 = {:?}", c.l2);
        let _ = writeln!(s, "batch_size = {}", c.batch_size);
        let _ = writeln!(s, "max_epochs = {}", c.max_epochs);
        let _ = writeln!(s, "patience = {}", c.patience);
        let _ = writeln!(s, "val_repetitions = {}", c.val_repetitions);
        let _ = writeln!(s, "seed_init = {}", c.seeds.init);
        let _ = writeln!(s, "seed_sampler = {}", c.seeds.sampler);
        let _ = writeln!(s, "seed_shuffle = {}", c.seeds.shuffle);
        let _ = writeln!(s, "seed_eval = {}", c.seeds.eval);
        let _ = writeln!(s, "nodes = {}", self.nodes);
        let _ = writeln!(s, "train_pairs = {}", self.train_pairs);
        let _ = writeln!(s, "validation_pairs = {}", self.validation_pairs);
        let _ = writeln!(s, "best_epoch = {}", self.best_epoch);
        let _ = writeln!(s, "best_val_auc = {:.10}", self.best_val_auc);
        let _ = writeln!(s, "stopped_early = {}", self.stopped_early);
        let _ = writeln!(s, "\n[epochs]");
        let _ = writeln!(s, "epoch\ttrain_loss\tval_auc");
        for e in &self.epochs {
            let _ = writeln!(s, "{}\t{:.10}\t{:.10}", e.epoch, e.train_loss, e.val_auc);
        }
        s
    }

    pub fn timing_text(&self) -> String {
        let mut s = String::from("epoch\tseconds\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{}\t{:.3}", e.epoch, e.seconds);
        }
        s
    }
}

pub struct FitOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub manifest: RunManifest,
}

/// Trains from a fresh initialization, keeping the parameters of the epoch
/// with the best validation AUC. Stops once `patience` consecutive epochs
/// fail to improve on it. `observer` sees each epoch as it completes.
pub fn fit_with(
    graph: &KigGraph,
    train: &[LabeledPair],
    validation: &[LabeledPair],
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochStats),
) -> Result<FitOutcome> {
    config.validate()?;
    let model = Model::new(config.model, graph.node_count(), config.seeds.init)?;
    let mut state = TrainState::new(model, config);
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    let eval_stream = SeedStream::new(config.seeds.eval);
    for e in 0..config.max_epochs {
        let start = Instant::now();
        let train_loss = train_epoch(&mut state, graph, train, config)?;
        let (_, report) = repeated_eval(&state.model, graph, validation, config.val_repetitions, eval_stream, config.exec)?;
        let stats = EpochStats {
            epoch: e + 1,
            train_loss,
            val_auc: report.auc,
            seconds: start.elapsed().as_secs_f64(),
        };
        info!("epoch={} train_loss={:.6} val_auc={:.6}", stats.epoch, stats.train_loss, stats.val_auc);
        observer(&stats);
        epochs.push(stats);
        if best.as_ref().is_none_or(|b| report.auc > b.1) {
            best = Some((e + 1, report.auc, state.model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = e + 1 < config.max_epochs;
                break;
            }
        }
    }
    let (best_epoch, best_val_auc, params) = best.ok_or(Error::Empty("epochs"))?;
    let model = Model::from_params(config.model, params)?;
    let manifest = RunManifest {
        config: *config,
        nodes: graph.node_count(),
        train_pairs: train.len(),
        validation_pairs: validation.len(),
        epochs,
        best_epoch,
        best_val_auc,
        stopped_early,
    };
    Ok(FitOutcome { model, manifest })
}

pub fn fit(graph: &KigGraph, train: &[LabeledPair], validation: &[LabeledPair], config: &TrainConfig) -> Result<FitOutcome> {
    fit_with(graph, train, validation, config, |_| {})
}

/// Applies the early-stopping rule to a validation AUC sequence and returns
/// `(epochs run, best epoch)`, both 1-based.
pub fn early_stop_schedule(val_aucs: &[f64], patience: usize) -> (usize, usize) {
    let mut best = (0, f64::NEG_INFINITY);
    let mut since = 0;
    for (e, &auc) in val_aucs.iter().enumerate() {
        if auc > best.1 {
            best = (e + 1, auc);
            since = 0;
        } else {
            since += 1;
            if since >= patience {
                return (e + 1, best.0);
            }
        }
    }
    (val_aucs.len(), best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_interaction_graph, Interaction};
    use crate::model::{EncoderKind, ScorerKind};
    use crate::numeric::{grad_check, log_loss, sample_coords, Coord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (KigGraph, Vec<LabeledPair>) {
        let mut pairs = Vec::new();
        for u in 0..4 {
            for i in 0..4 {
                pairs.push(Interaction::new(format!("u{u}"), format!("i{i}"), ((u + i) % 2) as u8));
            }
        }
        let g = build_interaction_graph(&pairs);
        let resolved = g.resolve(&pairs).unwrap();
        (g, resolved)
    }

    fn cfg(scorer: ScorerKind, encoder: EncoderKind) -> TrainConfig {
        TrainConfig {
            lr: 0.01,
            l2: 1e-3,
            batch_size: 5,
            max_epochs: 3,
            patience: 2,
            val_repetitions: 2,
            model: ModelConfig {
                scorer,
                encoder,
                layers: 1,
                dim: 6,
                neighbors: 3,
                encoder_neighbors: 2,
            },
            seeds: TrainSeeds::default(),
            exec: ExecMode::Serial,
        }
    }

    fn streams(n: usize) -> Vec<SeedStream> {
        (0..n).map(|i| SeedStream::new(9).child(i as u64)).collect()
    }

    #[test]
    fn zero_parameters_give_ln2_per_pair() {
        let (g, pairs) = toy();
        let mut m = Model::new(cfg(ScorerKind::Ni, EncoderKind::None).model, g.node_count(), 1).unwrap();
        m.params.get_mut(m.net.embedding).data.iter_mut().for_each(|x| *x = 0.0);
        let r = batch_loss(&m, &g, &pairs, &streams(pairs.len()), 0.0, ExecMode::Serial).unwrap();
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn batch_loss_matches_per_pair_summation() {
        let (g, pairs) = toy();
        let batch = &pairs[..4];
        let s = streams(4);
        let m = Model::new(cfg(ScorerKind::Ni, EncoderKind::Gat).model, g.node_count(), 1).unwrap();
        let l2 = 0.01;
        let r = batch_loss(&m, &g, batch, &s, l2, ExecMode::Serial).unwrap();

        let mut data = 0.0;
        let mut refs = Vec::new();
        for (p, st) in batch.iter().zip(&s) {
            let mut tape = Tape::new();
            let out = m.net.forward(&m.params, &mut tape, &g, p.user, p.item, &mut st.rng()).unwrap();
            data += log_loss(p.label, tape.scalar(out.logit));
            refs.extend(tape.param_refs());
        }
        data /= 4.0;
        let mut reg = 0.0;
        for (_, p) in m.params.iter().filter(|(_, p)| !p.row_sparse) {
            reg += p.data.iter().map(|x| x * x).sum::<f64>();
        }
        let rows: BTreeSet<usize> = refs
            .iter()
            .filter(|r| r.id == m.net.embedding)
            .map(|r| r.offset / m.config().dim)
            .collect();
        for row in rows {
            reg += m.params.slice(m.params.row(m.net.embedding, row)).iter().map(|x| x * x).sum::<f64>();
        }
        assert!((r.loss - (data + l2 * reg)).abs() < 1e-10);

        let mut tape = Tape::new();
        let v = loss_tape(&m.net, &m.params, &mut tape, &g, batch, &s, l2).unwrap();
        assert!((tape.scalar(v) - r.loss).abs() < 1e-10);
    }

    #[test]
    fn larger_l2_increases_loss() {
        let (g, pairs) = toy();
        let m = Model::new(cfg(ScorerKind::AttentionAgg, EncoderKind::Gcn).model, g.node_count(), 1).unwrap();
        let s = streams(pairs.len());
        let a = batch_loss(&m, &g, &pairs, &s, 0.0, ExecMode::Serial).unwrap().loss;
        let b = batch_loss(&m, &g, &pairs, &s, 0.1, ExecMode::Serial).unwrap().loss;
        let c = batch_loss(&m, &g, &pairs, &s, 0.2, ExecMode::Serial).unwrap().loss;
        assert!(a < b && b < c);
    }

    #[test]
    fn chunked_gradients_match_single_tape() {
        let (g, pairs) = toy();
        let m = Model::new(cfg(ScorerKind::Ni, EncoderKind::Gcn).model, g.node_count(), 1).unwrap();
        let s = streams(pairs.len());
        let r = batch_loss(&m, &g, &pairs, &s, 0.0, ExecMode::Serial).unwrap();
        let p = batch_loss(&m, &g, &pairs, &s, 0.0, ExecMode::Parallel).unwrap();
        assert_eq!(r.loss, p.loss);
        assert_eq!(r.grads, p.grads);

        let mut tape = Tape::new();
        let v = loss_tape(&m.net, &m.params, &mut tape, &g, &pairs, &s, 0.0).unwrap();
        let adj = tape.backward(v);
        let mut whole = Gradients::zeros_like(&m.params);
        tape.accumulate(&adj, &mut whole, 1.0);
        for (id, p) in m.params.iter() {
            for k in 0..p.data.len() {
                assert!((whole.at(id, k) - r.grads.at(id, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_loss_gradient_check() {
        let (g, pairs) = toy();
        let batch = &pairs[..6];
        let s = streams(6);
        for (scorer, encoder) in [(ScorerKind::Ni, EncoderKind::Gat), (ScorerKind::AttentionAgg, EncoderKind::Gcn)] {
            let mut m = Model::new(cfg(scorer, encoder).model, g.node_count(), 3).unwrap();
            let net = m.net.clone();
            let coords: Vec<Coord> = sample_coords(&m.params, 12, None, &mut ChaCha8Rng::seed_from_u64(4));
            let err = grad_check(&mut m.params, &coords, 1e-6, |p, t| loss_tape(&net, p, t, &g, batch, &s, 0.05)).unwrap();
            assert!(err < 1e-4, "{scorer} {encoder}: {err}");
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_bitwise() {
        let (g, pairs) = toy();
        let mut c = cfg(ScorerKind::Ni, EncoderKind::Gat);
        c.lr = 0.0;
        let m = Model::new(c.model, g.node_count(), 1).unwrap();
        let before = m.params.clone();
        let mut state = TrainState::new(m, &c);
        train_epoch(&mut state, &g, &pairs, &c).unwrap();
        assert_eq!(state.model.params, before);
    }

    #[test]
    fn same_seeds_same_epoch_loss() {
        let (g, pairs) = toy();
        let c = cfg(ScorerKind::Ni, EncoderKind::Gcn);
        let run = |exec: ExecMode| {
            let mut c = c;
            c.exec = exec;
            let mut st = TrainState::new(Model::new(c.model, g.node_count(), 1).unwrap(), &c);
            let l = train_epoch(&mut st, &g, &pairs, &c).unwrap();
            (l, st.model.params)
        };
        let a = run(ExecMode::Serial);
        let b = run(ExecMode::Serial);
        let p = run(ExecMode::Parallel);
        assert_eq!(a, b);
        assert_eq!(a, p);
    }

    #[test]
    fn early_stopping_rule() {
        assert_eq!(early_stop_schedule(&[0.9, 0.8, 0.7, 0.6], 1), (2, 1));
        assert_eq!(early_stop_schedule(&[0.5, 0.6, 0.55, 0.58, 0.7], 2), (4, 2));
        assert_eq!(early_stop_schedule(&[0.5, 0.6, 0.7], 2), (3, 3));
    }

    #[test]
    fn manifest_best_epoch_is_max_val_auc() {
        let (g, pairs) = toy();
        let c = cfg(ScorerKind::Ni, EncoderKind::None);
        let out = fit(&g, &pairs, &pairs, &c).unwrap();
        let m = &out.manifest;
        let max = m.epochs.iter().map(|e| e.val_auc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(m.best_val_auc, max);
        assert_eq!(m.epochs[m.best_epoch - 1].val_auc, max);
        let again = fit(&g, &pairs, &pairs, &c).unwrap();
        assert_eq!(again.manifest.to_text(), m.to_text());
        assert_eq!(again.model.params, out.model.params);
    }

    #[test]
    fn problems_are_listed_exhaustively() {
        let c = TrainConfig {
            lr: -1.0,
            batch_size: 0,
            patience: 0,
            ..Default::default()
        };
        assert_eq!(c.problems().len(), 3);
        assert!(c.validate().is_err());
    }
}
