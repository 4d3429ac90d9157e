//! Entropy of interaction weight matrices, entropy histograms, and case
//! dumps of individual pairs.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::graph::{Interaction, KigGraph, LabeledPair};
use crate::model::{InteractionSnapshot, Model, ScorerKind};
use crate::seed::SeedStream;

pub const HISTOGRAM_BINS: usize = 50;

/// Shannon entropy (natural log) of a weight matrix given as a flat slice.
/// Entries are renormalized to sum to one first; a constant matrix gives
/// exactly `ln(len)`.
pub fn entropy(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("weight matrix"));
    }
    if let Some(bad) = a.iter().find(|x| !x.is_finite() || **x < -1e-9) {
        return Err(Error::invalid(format!("weight entry {bad} is not a probability")));
    }
    if a.iter().all(|&x| x == a[0]) && a[0] > 0.0 {
        return Ok((a.len() as f64).ln());
    }
    let total: f64 = a.iter().map(|x| x.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    let mut h = 0.0;
    for &x in a {
        let p = x.max(0.0) / total;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyHistogram {
    /// `bins + 1` uniform edges over `[0, max]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub pairs: usize,
}

impl EntropyHistogram {
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("entropy values"));
        }
        if bins == 0 {
            return Err(Error::invalid("bins must be positive"));
        }
        let max = values.iter().copied().fold(0.0f64, f64::max);
        let width = max / bins as f64;
        let edges = (0..=bins).map(|b| b as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = if width > 0.0 { ((v / width) as usize).min(bins - 1) } else { 0 };
            counts[b] += 1;
        }
        Ok(EntropyHistogram {
            edges,
            counts,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            pairs: values.len(),
        })
    }

    /// Two columns: bin center and count.
    pub fn to_text(&self) -> String {
        let mut s = String::from("bin_center\tcount\n");
        for (b, c) in self.counts.iter().enumerate() {
            let center = 0.5 * (self.edges[b] + self.edges[b + 1]);
            let _ = writeln!(s, "{center:.6}\t{c}");
        }
        s
    }
}

/// Snapshot of every pair under the stream derived from its index.
pub fn snapshots(
    model: &Model,
    graph: &KigGraph,
    pairs: &[LabeledPair],
    seed: SeedStream,
    exec: ExecMode,
) -> Result<Vec<InteractionSnapshot>> {
    exec.map(pairs, |i, p| model.snapshot(graph, p.user, p.item, seed.child(i as u64)))
        .into_iter()
        .collect()
}

/// Per-pair entropies of the weight matrix, in input order, plus their
/// histogram. Two models given the same pairs and seed see the same
/// neighborhood draws.
pub fn entropy_histogram(
    model: &Model,
    graph: &KigGraph,
    pairs: &[LabeledPair],
    seed: SeedStream,
    exec: ExecMode,
) -> Result<(Vec<f64>, EntropyHistogram)> {
    let values = exec
        .map(pairs, |i, p| -> Result<f64> {
            let snap = model.snapshot(graph, p.user, p.item, seed.child(i as u64))?;
            entropy(&snap.a)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let hist = EntropyHistogram::from_values(&values, HISTOGRAM_BINS)?;
    Ok((values, hist))
}

/// A snapshot in portable form with node keys as axis labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDump {
    pub user: String,
    pub item: String,
    pub scorer: ScorerKind,
    pub logit: f64,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major `rows x cols`.
    pub a: Vec<f64>,
    pub z: Vec<f64>,
}

impl CaseDump {
    pub fn from_snapshot(s: &InteractionSnapshot, graph: &KigGraph) -> Self {
        let key = |n: crate::graph::NodeId| graph.node(n).key.clone();
        CaseDump {
            user: key(s.user),
            item: key(s.item),
            scorer: s.scorer,
            logit: s.logit,
            rows: s.rows.iter().map(|&n| key(n)).collect(),
            cols: s.cols.iter().map(|&n| key(n)).collect(),
            a: s.a.clone(),
            z: s.z.clone(),
        }
    }

    /// Header lines, axis labels, then `A` and `Z` as row-major decimal text.
    /// Numbers use the shortest representation that parses back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "user\t{}", self.user);
        let _ = writeln!(s, "item\t{}", self.item);
        let _ = writeln!(s, "scorer\t{}", self.scorer);
        let _ = writeln!(s, "dims\t{}\t{}", self.rows.len(), self.cols.len());
        let _ = writeln!(s, "logit\t{:?}", self.logit);
        let _ = writeln!(s, "rows\t{}", self.rows.join("\t"));
        let _ = writeln!(s, "cols\t{}", self.cols.join("\t"));
        for (name, m) in [("A", &self.a), ("Z", &self.z)] {
            let _ = writeln!(s, "{name}");
            for row in m.chunks(self.cols.len().max(1)) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", cells.join("\t"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |want: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines.next().ok_or_else(|| Error::Format(format!("missing {want} line")))?;
            Ok((n + 1, line.split('\t').collect()))
        };
        let parse_err = |line: usize, message: String| Error::Parse {
            file: "case dump".into(),
            line,
            message,
        };
        let mut field = |name: &str| -> Result<(usize, Vec<String>)> {
            let (n, f) = next(name)?;
            if f.first() != Some(&name) {
                return Err(parse_err(n, format!("expected {name}")));
            }
            Ok((n, f[1..].iter().map(|s| s.to_string()).collect()))
        };
        let one = |(n, v): (usize, Vec<String>)| -> Result<String> {
            match v.as_slice() {
                [x] => Ok(x.clone()),
                _ => Err(parse_err(n, "expected one value".into())),
            }
        };
        let user = one(field("user")?)?;
        let item = one(field("item")?)?;
        let (n, sc) = field("scorer")?;
        let scorer: ScorerKind = one((n, sc))?.parse()?;
        let (n, dims) = field("dims")?;
        let dims: Vec<usize> = dims
            .iter()
            .map(|d| d.parse().map_err(|_| parse_err(n, format!("bad dimension {d:?}"))))
            .collect::<Result<_>>()?;
        let [r, c] = dims[..] else {
            return Err(parse_err(n, "dims needs two values".into()));
        };
        let (n, lg) = field("logit")?;
        let lg = one((n, lg))?;
        let logit: f64 = lg.parse().map_err(|_| parse_err(n, format!("bad number {lg:?}")))?;
        let (_, rows) = field("rows")?;
        let (_, cols) = field("cols")?;
        if rows.len() != r || cols.len() != c {
            return Err(Error::Format("axis labels disagree with dims".into()));
        }
        let mut matrix = |name: &str| -> Result<Vec<f64>> {
            let (n, head) = next(name)?;
            if head != [name] {
                return Err(parse_err(n, format!("expected {name}")));
            }
            let mut out = Vec::with_capacity(r * c);
            for _ in 0..r {
                let (n, cells) = next(name)?;
                if cells.len() != c {
                    return Err(parse_err(n, format!("expected {c} values")));
                }
                for cell in cells {
                    out.push(cell.parse().map_err(|_| parse_err(n, format!("bad number {cell:?}")))?);
                }
            }
            Ok(out)
        };
        let a = matrix("A")?;
        let z = matrix("Z")?;
        Ok(CaseDump {
            user,
            item,
            scorer,
            logit,
            rows,
            cols,
            a,
            z,
        })
    }
}

/// Snapshot of one pair by node keys, exported as a [`CaseDump`].
pub fn case_dump(model: &Model, graph: &KigGraph, user: &str, item: &str, seed: SeedStream) -> Result<CaseDump> {
    let u = graph.user(user).ok_or_else(|| Error::UnknownNode(format!("user {user}")))?;
    let v = graph.item(item).ok_or_else(|| Error::UnknownNode(format!("item {item}")))?;
    let snap = model.snapshot(graph, u, v, seed)?;
    Ok(CaseDump::from_snapshot(&snap, graph))
}

/// Subsample sizes: users and items drawn uniformly at random, then
/// responses among their records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsampleConfig {
    pub users: usize,
    pub items: usize,
    pub responses: usize,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            users: 10_000,
            items: 6_000,
            responses: 250_000,
            seed: 11,
        }
    }
}

/// Keeps records whose user and item are both in random subsets of the
/// requested sizes, then at most `responses` of them. Output keeps input
/// order.
pub fn subsample(pairs: &[Interaction], cfg: &SubsampleConfig) -> Vec<Interaction> {
    let stream = SeedStream::new(cfg.seed);
    let pick = |mut keys: Vec<&str>, n: usize, key: u64| -> HashSet<String> {
        keys.sort_unstable();
        keys.dedup();
        keys.choose_multiple(&mut stream.child(key).rng(), n).map(|s| s.to_string()).collect()
    };
    let users = pick(pairs.iter().map(|p| p.user.as_str()).collect(), cfg.users, 1);
    let items = pick(pairs.iter().map(|p| p.item.as_str()).collect(), cfg.items, 2);
    let kept: Vec<usize> = (0..pairs.len())
        .filter(|&i| users.contains(&pairs[i].user) && items.contains(&pairs[i].item))
        .collect();
    let mut chosen: Vec<usize> = kept.choose_multiple(&mut stream.child(3).rng(), cfg.responses).copied().collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pairs[i].clone()).collect()
}
