//! Pair scorers in the `logit = sum_ij A_ij * Z_ij` form.
//!
//! `Z_ij = <x_i, x_j>` over user-side rows and item-side columns. The
//! scorers differ only in `A`:
//!
//! * average: constant `1 / (|N_u| |N_v|)`;
//! * attention aggregation: outer product of two per-side softmaxes;
//! * neighborhood interaction: one softmax over all `|N_u| |N_v|` pairs.
//!
//! Attention logits drop every term that is constant over the softmax axis
//! (the center embeddings and the bias): they shift all logits equally and
//! cancel in the normalization, so only the neighbor-dependent weights are
//! parameters.

use crate::graph::NodeId;
use crate::numeric::{Tape, Var};

/// Tape handles produced by a scorer.
#[derive(Debug, Clone)]
pub struct ScoreOutput {
    pub logit: Var,
    /// Row-major `rows.len() x cols.len()` weights.
    pub weights: Var,
    /// Row-major inner products.
    pub gram: Var,
    pub rows: Vec<NodeId>,
    pub cols: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy)]
pub struct AggAttentionVars {
    pub user: Var,
    pub item: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct NiAttentionVars {
    pub user: Var,
    pub item: Var,
}

fn finish(tape: &mut Tape, weights: Var, gram: Var) -> ScoreOutput {
    let logit = tape.dot(weights, gram);
    ScoreOutput {
        logit,
        weights,
        gram,
        rows: Vec::new(),
        cols: Vec::new(),
    }
}

pub fn score_average(tape: &mut Tape, xs_u: &[Var], xs_v: &[Var]) -> ScoreOutput {
    let n = xs_u.len() * xs_v.len();
    let gram = tape.gram(xs_u, xs_v);
    let weights = tape.constant(vec![1.0 / n as f64; n]);
    finish(tape, weights, gram)
}

fn side_scores(tape: &mut Tape, w: Var, xs: &[Var]) -> Var {
    let s: Vec<Var> = xs.iter().map(|&x| tape.dot(w, x)).collect();
    tape.concat(&s)
}

pub fn score_attention_agg(tape: &mut Tape, xs_u: &[Var], xs_v: &[Var], att: AggAttentionVars) -> ScoreOutput {
    let gram = tape.gram(xs_u, xs_v);
    let su = side_scores(tape, att.user, xs_u);
    let sv = side_scores(tape, att.item, xs_v);
    let alpha_u = tape.softmax(su);
    let alpha_v = tape.softmax(sv);
    let weights = tape.outer_product(alpha_u, alpha_v);
    finish(tape, weights, gram)
}

pub fn score_ni(tape: &mut Tape, xs_u: &[Var], xs_v: &[Var], att: NiAttentionVars) -> ScoreOutput {
    let gram = tape.gram(xs_u, xs_v);
    let su = side_scores(tape, att.user, xs_u);
    let sv = side_scores(tape, att.item, xs_v);
    let pair_logits = tape.outer_sum(su, sv);
    let weights = tape.softmax(pair_logits);
    finish(tape, weights, gram)
}
