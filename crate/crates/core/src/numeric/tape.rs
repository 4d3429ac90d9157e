//! Vector-valued reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so index order is a topological
//! order and the backward pass is a single reverse sweep. Scalars are
//! length-1 vectors.

use super::ops::{dot_unchecked, log_loss, sigmoid, softmax_unchecked, LEAKY_SLOPE};
use super::params::{Gradients, ParamRef, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamRef),
    /// `w` is row-major `rows x cols`.
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    Add(Var, Var),
    /// Vector plus a broadcast scalar.
    AddScalar(Var, Var),
    Scale(Var, f64),
    Mean(Vec<Var>),
    WeightedSum { weights: Var, items: Vec<Var> },
    Dot(Var, Var),
    Relu(Var),
    LeakyRelu(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    /// `out[i * m + j] = a[i] + b[j]`
    OuterSum(Var, Var),
    /// `out[i * m + j] = a[i] * b[j]`
    OuterProduct(Var, Var),
    /// `out[i * m + j] = <left[i], right[j]>`
    Gram { left: Vec<Var>, right: Vec<Var> },
    Sum(Vec<Var>),
    SquaredNorm(Var),
    LogLoss { logit: Var, label: u8 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        debug_assert_eq!(val.len(), 1);
        val[0]
    }

    /// Parameter slices referenced by leaves, in recording order, repeats
    /// included.
    pub fn param_refs(&self) -> impl Iterator<Item = ParamRef> + '_ {
        self.nodes.iter().filter_map(|n| match n.op {
            Op::Param(r) => Some(r),
            _ => None,
        })
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, store: &ParamStore, r: ParamRef) -> Var {
        self.push(store.slice(r).to_vec(), Op::Param(r))
    }

    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        assert_eq!(wv.len(), rows * cols, "matvec weight shape");
        assert_eq!(xv.len(), cols, "matvec input length");
        let out = (0..rows)
            .map(|r| dot_unchecked(&wv[r * cols..(r + 1) * cols], xv))
            .collect();
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        assert_eq!(av.len(), bv.len(), "add length");
        let out = av.iter().zip(bv).map(|(x, y)| x + y).collect();
        self.push(out, Op::Add(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let out = self.nodes[a.0].value.iter().map(|x| x + sv).collect();
        self.push(out, Op::AddScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        self.push(out, Op::Scale(a, c))
    }

    pub fn mean(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "mean of nothing");
        let n = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; n];
        for it in items {
            let v = &self.nodes[it.0].value;
            assert_eq!(v.len(), n, "mean length");
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        let inv = 1.0 / items.len() as f64;
        for o in &mut out {
            *o *= inv;
        }
        self.push(out, Op::Mean(items.to_vec()))
    }

    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = &self.nodes[weights.0].value;
        assert_eq!(w.len(), items.len(), "weighted_sum arity");
        let n = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; n];
        for (wk, it) in w.iter().zip(items) {
            for (o, x) in out.iter_mut().zip(&self.nodes[it.0].value) {
                *o += wk * x;
            }
        }
        self.push(
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        )
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        assert_eq!(av.len(), bv.len(), "dot length");
        let out = vec![dot_unchecked(av, bv)];
        self.push(out, Op::Dot(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| if x > 0.0 { x } else { LEAKY_SLOPE * x })
            .collect();
        self.push(out, Op::LeakyRelu(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        assert!(!self.nodes[a.0].value.is_empty(), "softmax of nothing");
        let out = softmax_unchecked(&self.nodes[a.0].value);
        self.push(out, Op::Softmax(a))
    }

    pub fn concat(&mut self, items: &[Var]) -> Var {
        let out = items
            .iter()
            .flat_map(|v| self.nodes[v.0].value.iter().copied())
            .collect();
        self.push(out, Op::Concat(items.to_vec()))
    }

    pub fn outer_sum(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out = av
            .iter()
            .flat_map(|x| bv.iter().map(move |y| x + y))
            .collect();
        self.push(out, Op::OuterSum(a, b))
    }

    pub fn outer_product(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out = av
            .iter()
            .flat_map(|x| bv.iter().map(move |y| x * y))
            .collect();
        self.push(out, Op::OuterProduct(a, b))
    }

    pub fn gram(&mut self, left: &[Var], right: &[Var]) -> Var {
        let mut out = Vec::with_capacity(left.len() * right.len());
        for l in left {
            let lv = &self.nodes[l.0].value;
            for r in right {
                let rv = &self.nodes[r.0].value;
                assert_eq!(lv.len(), rv.len(), "gram length");
                out.push(dot_unchecked(lv, rv));
            }
        }
        self.push(
            out,
            Op::Gram {
                left: left.to_vec(),
                right: right.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "sum of nothing");
        let n = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; n];
        for it in items {
            for (o, x) in out.iter_mut().zip(&self.nodes[it.0].value) {
                *o += x;
            }
        }
        self.push(out, Op::Sum(items.to_vec()))
    }

    pub fn squared_norm(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let out = vec![dot_unchecked(v, v)];
        self.push(out, Op::SquaredNorm(a))
    }

    pub fn log_loss(&mut self, logit: Var, label: u8) -> Var {
        let out = vec![log_loss(label, self.scalar(logit))];
        self.push(out, Op::LogLoss { logit, label })
    }

    /// Reverse sweep from scalar `output`; returns per-node adjoints.
    pub fn backward(&self, output: Var) -> Adjoints {
        assert_eq!(self.nodes[output.0].value.len(), 1, "backward from non-scalar");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::MatVec { w, x, rows, cols } => {
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; *cols];
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let wrow = &wv[r * cols..(r + 1) * cols];
                        for c in 0..*cols {
                            gw[r * cols + c] = gr * xv[c];
                            gx[c] += gr * wrow[c];
                        }
                    }
                    add_into(&mut adj, *w, &gw);
                    add_into(&mut adj, *x, &gx);
                }
                Op::Add(a, b) => {
                    add_into(&mut adj, *a, &g);
                    add_into(&mut adj, *b, &g);
                }
                Op::AddScalar(a, s) => {
                    add_into(&mut adj, *a, &g);
                    add_into(&mut adj, *s, &[g.iter().sum()]);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    add_into(&mut adj, *a, &ga);
                }
                Op::Mean(items) => {
                    let inv = 1.0 / items.len() as f64;
                    let gi: Vec<f64> = g.iter().map(|x| x * inv).collect();
                    for it in items {
                        add_into(&mut adj, *it, &gi);
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = &self.nodes[weights.0].value;
                    let mut gw = vec![0.0; items.len()];
                    for (k, it) in items.iter().enumerate() {
                        gw[k] = dot_unchecked(&g, &self.nodes[it.0].value);
                        let gi: Vec<f64> = g.iter().map(|x| x * wv[k]).collect();
                        add_into(&mut adj, *it, &gi);
                    }
                    add_into(&mut adj, *weights, &gw);
                }
                Op::Dot(a, b) => {
                    let s = g[0];
                    let ga: Vec<f64> = self.nodes[b.0].value.iter().map(|x| x * s).collect();
                    let gb: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x * s).collect();
                    add_into(&mut adj, *a, &ga);
                    add_into(&mut adj, *b, &gb);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(x, gi)| if *x > 0.0 { *gi } else { 0.0 })
                        .collect();
                    add_into(&mut adj, *a, &ga);
                }
                Op::LeakyRelu(a) => {
                    let ga: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(x, gi)| if *x > 0.0 { *gi } else { LEAKY_SLOPE * gi })
                        .collect();
                    add_into(&mut adj, *a, &ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let inner = dot_unchecked(y, &g);
                    let ga: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi * (gi - inner)).collect();
                    add_into(&mut adj, *a, &ga);
                }
                Op::Concat(items) => {
                    let mut pos = 0;
                    for it in items {
                        let n = self.nodes[it.0].value.len();
                        add_into(&mut adj, *it, &g[pos..pos + n]);
                        pos += n;
                    }
                }
                Op::OuterSum(a, b) => {
                    let n = self.nodes[a.0].value.len();
                    let m = self.nodes[b.0].value.len();
                    let mut ga = vec![0.0; n];
                    let mut gb = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            ga[i] += g[i * m + j];
                            gb[j] += g[i * m + j];
                        }
                    }
                    add_into(&mut adj, *a, &ga);
                    add_into(&mut adj, *b, &gb);
                }
                Op::OuterProduct(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let (n, m) = (av.len(), bv.len());
                    let mut ga = vec![0.0; n];
                    let mut gb = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            ga[i] += g[i * m + j] * bv[j];
                            gb[j] += g[i * m + j] * av[i];
                        }
                    }
                    add_into(&mut adj, *a, &ga);
                    add_into(&mut adj, *b, &gb);
                }
                Op::Gram { left, right } => {
                    let m = right.len();
                    let dim = self.nodes[left[0].0].value.len();
                    let mut gl = vec![vec![0.0; dim]; left.len()];
                    let mut gr = vec![vec![0.0; dim]; m];
                    for (i, l) in left.iter().enumerate() {
                        let lv = &self.nodes[l.0].value;
                        for (j, r) in right.iter().enumerate() {
                            let s = g[i * m + j];
                            let rv = &self.nodes[r.0].value;
                            for k in 0..dim {
                                gl[i][k] += s * rv[k];
                                gr[j][k] += s * lv[k];
                            }
                        }
                    }
                    for (l, gv) in left.iter().zip(&gl) {
                        add_into(&mut adj, *l, gv);
                    }
                    for (r, gv) in right.iter().zip(&gr) {
                        add_into(&mut adj, *r, gv);
                    }
                }
                Op::Sum(items) => {
                    for it in items {
                        add_into(&mut adj, *it, &g);
                    }
                }
                Op::SquaredNorm(a) => {
                    let ga: Vec<f64> = self.nodes[a.0].value.iter().map(|x| 2.0 * x * g[0]).collect();
                    add_into(&mut adj, *a, &ga);
                }
                Op::LogLoss { logit, label } => {
                    let z = self.scalar(*logit);
                    let d = sigmoid(z) - f64::from(*label);
                    add_into(&mut adj, *logit, &[d * g[0]]);
                }
            }
            // keep leaf adjoints for extraction
            if matches!(node.op, Op::Param(_) | Op::Const) {
                adj[idx] = Some(g);
            }
        }
        Adjoints { adj }
    }

    /// Adds `scale * d(output)/d(param)` for every parameter leaf into `grads`.
    pub fn accumulate(&self, adjoints: &Adjoints, grads: &mut Gradients, scale: f64) {
        for (idx, a) in adjoints.adj.iter().enumerate() {
            if let (Some(g), Op::Param(r)) = (a, &self.nodes[idx].op) {
                grads.accumulate(*r, g, scale);
            }
        }
    }
}

fn add_into(adj: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(g) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Adjoints produced by [`Tape::backward`]; only leaf entries are retained.
#[derive(Debug, Clone)]
pub struct Adjoints {
    adj: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.adj.get(v.0).and_then(|a| a.as_deref())
    }
}
