use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named row-major parameter tensor.
///
/// `row_sparse` tensors (embedding tables) receive gradients per row and are
/// regularized and updated only on rows touched by a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub row_sparse: bool,
}

impl Param {
    pub fn row_len(&self) -> usize {
        if self.shape.len() <= 1 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }
}

/// A contiguous slice of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamRef {
    pub id: ParamId,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>, row_sparse: bool) -> Result<ParamId> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.params.push(Param {
            name,
            shape,
            data,
            row_sparse,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn slice(&self, r: ParamRef) -> &[f64] {
        &self.params[r.id.0].data[r.offset..r.offset + r.len]
    }

    pub fn whole(&self, id: ParamId) -> ParamRef {
        ParamRef {
            id,
            offset: 0,
            len: self.params[id.0].data.len(),
        }
    }

    pub fn row(&self, id: ParamId, row: usize) -> ParamRef {
        let len = self.params[id.0].row_len();
        ParamRef {
            id,
            offset: row * len,
            len,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient storage for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum GradSlot {
    /// Dense gradient; empty until first touched.
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Gradient accumulators shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    slots: Vec<GradSlot>,
    row_lens: Vec<usize>,
    sizes: Vec<usize>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        let slots = store
            .params
            .iter()
            .map(|p| {
                if p.row_sparse {
                    GradSlot::Rows(BTreeMap::new())
                } else {
                    GradSlot::Dense(Vec::new())
                }
            })
            .collect();
        Gradients {
            slots,
            row_lens: store.params.iter().map(Param::row_len).collect(),
            sizes: store.params.iter().map(|p| p.data.len()).collect(),
        }
    }

    pub fn slot(&self, id: ParamId) -> &GradSlot {
        &self.slots[id.0]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Adds `scale * grad` into the slice addressed by `r`.
    pub fn accumulate(&mut self, r: ParamRef, grad: &[f64], scale: f64) {
        debug_assert_eq!(grad.len(), r.len);
        match &mut self.slots[r.id.0] {
            GradSlot::Dense(buf) => {
                if buf.is_empty() {
                    buf.resize(self.sizes[r.id.0], 0.0);
                }
                for (b, g) in buf[r.offset..r.offset + r.len].iter_mut().zip(grad) {
                    *b += scale * g;
                }
            }
            GradSlot::Rows(rows) => {
                let row_len = self.row_lens[r.id.0];
                let mut pos = r.offset;
                let mut k = 0;
                while k < grad.len() {
                    let row = pos / row_len;
                    let col = pos % row_len;
                    let take = (row_len - col).min(grad.len() - k);
                    let entry = rows.entry(row).or_insert_with(|| vec![0.0; row_len]);
                    for (b, g) in entry[col..col + take].iter_mut().zip(&grad[k..k + take]) {
                        *b += scale * g;
                    }
                    pos += take;
                    k += take;
                }
            }
        }
    }

    /// Adds all of `other` scaled by `scale`.
    pub fn merge(&mut self, other: &Gradients, scale: f64) {
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            match (mine, theirs) {
                (GradSlot::Dense(a), GradSlot::Dense(b)) => {
                    if b.is_empty() {
                        continue;
                    }
                    if a.is_empty() {
                        a.resize(b.len(), 0.0);
                    }
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += scale * y;
                    }
                }
                (GradSlot::Rows(a), GradSlot::Rows(b)) => {
                    for (row, g) in b {
                        let entry = a.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
                        for (x, y) in entry.iter_mut().zip(g) {
                            *x += scale * y;
                        }
                    }
                }
                _ => unreachable!("gradient slot kinds come from the same store"),
            }
        }
    }

    /// Gradient value at a flat coordinate (zero when never touched).
    pub fn at(&self, id: ParamId, index: usize) -> f64 {
        match &self.slots[id.0] {
            GradSlot::Dense(buf) => buf.get(index).copied().unwrap_or(0.0),
            GradSlot::Rows(rows) => {
                let row_len = self.row_lens[id.0];
                rows.get(&(index / row_len))
                    .map(|r| r[index % row_len])
                    .unwrap_or(0.0)
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| match s {
            GradSlot::Dense(b) => b.iter().all(|v| v.is_finite()),
            GradSlot::Rows(r) => r.values().all(|row| row.iter().all(|v| v.is_finite())),
        })
    }

    /// Rows of a row-sparse parameter that carry a gradient.
    pub fn touched_rows(&self, id: ParamId) -> Vec<usize> {
        match &self.slots[id.0] {
            GradSlot::Rows(r) => r.keys().copied().collect(),
            GradSlot::Dense(_) => Vec::new(),
        }
    }
}
