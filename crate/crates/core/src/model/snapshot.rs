use super::{ScoreOutput, ScorerKind};
use crate::graph::NodeId;
use crate::numeric::Tape;

/// Weight matrix `A` and inner-product matrix `Z` of one scored pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSnapshot {
    pub user: NodeId,
    pub item: NodeId,
    pub scorer: ScorerKind,
    pub rows: Vec<NodeId>,
    pub cols: Vec<NodeId>,
    /// Row-major `rows.len() x cols.len()`.
    pub a: Vec<f64>,
    pub z: Vec<f64>,
    pub logit: f64,
}

impl InteractionSnapshot {
    pub fn from_output(tape: &Tape, out: &ScoreOutput, user: NodeId, item: NodeId, scorer: ScorerKind) -> Self {
        InteractionSnapshot {
            user,
            item,
            scorer,
            rows: out.rows.clone(),
            cols: out.cols.clone(),
            a: tape.value(out.weights).to_vec(),
            z: tape.value(out.gram).to_vec(),
            logit: tape.scalar(out.logit),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    /// `sum_ij A_ij Z_ij`, recomputed from the stored matrices.
    pub fn weighted_sum(&self) -> f64 {
        self.a.iter().zip(&self.z).map(|(a, z)| a * z).sum()
    }

    pub fn weight_total(&self) -> f64 {
        self.a.iter().sum()
    }
}
