//! CTR metrics, top-N metrics and repeated stochastic evaluation.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::graph::{KigGraph, LabeledPair, NodeId};
use crate::model::Model;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub user: NodeId,
    pub item: NodeId,
    pub label: u8,
    pub score: f64,
}

/// Area under the ROC curve from rank statistics, ties credited 0.5.
pub fn auc(scored: &[ScoredPair]) -> Result<f64> {
    let labels: Vec<u8> = scored.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = scored.iter().map(|p| p.score).collect();
    auc_scores(&labels, &scores)
}

pub fn auc_scores(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("auc needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // midranks (1-based) over tie groups, summed over positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let wins = rank_sum - p * (p + 1.0) / 2.0;
    Ok(wins / (p * negatives as f64))
}

/// Fraction of pairs where `score >= threshold` agrees with the label.
pub fn acc(scored: &[ScoredPair], threshold: f64) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Empty("scored pairs"));
    }
    let hits = scored.iter().filter(|p| ((p.score >= threshold) as u8) == p.label).count();
    Ok(hits as f64 / scored.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopNRow {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision == 0.0 || recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision/recall/F1 of one ranked list at `k`.
pub fn precision_recall_at(ranked: &[NodeId], relevant: &HashSet<NodeId>, k: usize) -> TopNRow {
    let hits = ranked.iter().take(k).filter(|n| relevant.contains(n)).count() as f64;
    let precision = if k == 0 { 0.0 } else { hits / k as f64 };
    let recall = if relevant.is_empty() { 0.0 } else { hits / relevant.len() as f64 };
    TopNRow {
        k,
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Orders candidates by descending score; ties go to the smaller node id.
pub fn rank_candidates(scored: &[(NodeId, f64)]) -> Vec<NodeId> {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(n, _)| n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopNReport {
    pub rows: Vec<TopNRow>,
    pub users: usize,
    pub skipped_users: usize,
}

/// Per-K metrics averaged over users; users with an empty relevant set are
/// skipped and counted.
pub fn topn_from_rankings(per_user: &[(Vec<NodeId>, HashSet<NodeId>)], ks: &[usize]) -> TopNReport {
    let evaluated: Vec<_> = per_user.iter().filter(|(_, rel)| !rel.is_empty()).collect();
    let skipped_users = per_user.len() - evaluated.len();
    let rows = ks
        .iter()
        .map(|&k| {
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for (ranked, rel) in &evaluated {
                let row = precision_recall_at(ranked, rel, k);
                p += row.precision;
                r += row.recall;
                f += row.f1;
            }
            let n = evaluated.len().max(1) as f64;
            TopNRow {
                k,
                precision: p / n,
                recall: r / n,
                f1: f / n,
            }
        })
        .collect();
    TopNReport {
        rows,
        users: evaluated.len(),
        skipped_users,
    }
}

/// Candidate pools and relevant sets per user: every item node the user has
/// no train/validation record with, and the user's positive test items.
pub fn topn_candidates(
    graph: &KigGraph,
    seen: &[LabeledPair],
    test: &[LabeledPair],
) -> Vec<(NodeId, Vec<NodeId>, HashSet<NodeId>)> {
    let mut seen_by: HashMap<NodeId, HashSet<NodeId>> = HashMap::new();
    for p in seen {
        seen_by.entry(p.user).or_default().insert(p.item);
    }
    let mut relevant: HashMap<NodeId, HashSet<NodeId>> = HashMap::new();
    let mut users: Vec<NodeId> = Vec::new();
    for p in test {
        let entry = relevant.entry(p.user).or_insert_with(|| {
            users.push(p.user);
            HashSet::new()
        });
        if p.label == 1 {
            entry.insert(p.item);
        }
    }
    users.sort_unstable();
    let items = graph.item_nodes();
    let empty = HashSet::new();
    users
        .into_iter()
        .map(|u| {
            let s = seen_by.get(&u).unwrap_or(&empty);
            let pool = items.iter().copied().filter(|i| !s.contains(i)).collect();
            (u, pool, relevant.remove(&u).unwrap_or_default())
        })
        .collect()
}

/// Scores every candidate with `repetitions`-draw averaging and reports
/// per-K metrics.
#[allow(clippy::too_many_arguments)]
pub fn topn_metrics(
    model: &Model,
    graph: &KigGraph,
    seen: &[LabeledPair],
    test: &[LabeledPair],
    ks: &[usize],
    repetitions: usize,
    seed: SeedStream,
    exec: ExecMode,
) -> Result<TopNReport> {
    let pools = topn_candidates(graph, seen, test);
    let per_user: Vec<Result<(Vec<NodeId>, HashSet<NodeId>)>> = exec.map(&pools, |_, (user, pool, rel)| {
        if rel.is_empty() {
            return Ok((Vec::new(), HashSet::new()));
        }
        let pairs: Vec<LabeledPair> = pool
            .iter()
            .map(|&item| LabeledPair {
                user: *user,
                item,
                label: 0,
            })
            .collect();
        let scores = average_scores(model, graph, &pairs, repetitions, seed.child(user.0 as u64), ExecMode::Serial)?;
        let scored: Vec<(NodeId, f64)> = pool.iter().copied().zip(scores).collect();
        Ok((rank_candidates(&scored), rel.clone()))
    });
    let per_user = per_user.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(topn_from_rankings(&per_user, ks))
}

/// Per-pair predictions averaged over `repetitions` independent sampling
/// draws. Draw `r` of pair `i` uses the stream derived from `(r, i)`.
pub fn average_scores(
    model: &Model,
    graph: &KigGraph,
    pairs: &[LabeledPair],
    repetitions: usize,
    seed: SeedStream,
    exec: ExecMode,
) -> Result<Vec<f64>> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    let scores = exec.map(pairs, |i, p| -> Result<f64> {
        let mut mean = 0.0;
        for r in 0..repetitions {
            let s = model.predict(graph, p.user, p.item, seed.derive(&[r as u64, i as u64]))?;
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("prediction for pair {i}")));
            }
            // running mean keeps a constant sequence exact
            mean += (s - mean) / (r + 1) as f64;
        }
        Ok(mean)
    });
    scores.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub auc: f64,
    pub acc: f64,
    pub pairs: usize,
    pub repetitions: usize,
    pub topn: Option<TopNReport>,
}

impl MetricReport {
    /// Key-value block followed by the per-K table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[metrics]");
        let _ = writeln!(s, "auc = {:.10}", self.auc);
        let _ = writeln!(s, "acc = {:.10}", self.acc);
        let _ = writeln!(s, "pairs = {}", self.pairs);
        let _ = writeln!(s, "repetitions = {}", self.repetitions);
        if let Some(t) = &self.topn {
            let _ = writeln!(s, "topn_users = {}", t.users);
            let _ = writeln!(s, "topn_skipped_users = {}", t.skipped_users);
            let _ = writeln!(s, "\n[topn]");
            s.push_str(&topn_table(t));
        }
        s
    }
}

/// Tab-separated `k precision recall f1` table with a header row.
pub fn topn_table(t: &TopNReport) -> String {
    let mut s = String::from("k\tprecision\trecall\tf1\n");
    for r in &t.rows {
        let _ = writeln!(s, "{}\t{:.10}\t{:.10}\t{:.10}", r.k, r.precision, r.recall, r.f1);
    }
    s
}

/// Scores `pairs` with repeated draws and computes AUC/ACC on the averaged
/// scores.
pub fn repeated_eval(
    model: &Model,
    graph: &KigGraph,
    pairs: &[LabeledPair],
    repetitions: usize,
    seed: SeedStream,
    exec: ExecMode,
) -> Result<(Vec<ScoredPair>, MetricReport)> {
    let scores = average_scores(model, graph, pairs, repetitions, seed, exec)?;
    let scored: Vec<ScoredPair> = pairs
        .iter()
        .zip(scores)
        .map(|(p, score)| ScoredPair {
            user: p.user,
            item: p.item,
            label: p.label,
            score,
        })
        .collect();
    let report = MetricReport {
        auc: auc(&scored)?,
        acc: acc(&scored, 0.5)?,
        pairs: scored.len(),
        repetitions,
        topn: None,
    };
    Ok((scored, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_interaction_graph, Interaction};
    use crate::model::{ModelConfig, ScorerKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_count_auc(labels: &[u8], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_scores(&[1, 0], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc_scores(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5]).unwrap(), 0.75);
        assert_eq!(auc_scores(&[1, 0, 1, 0, 0], &[0.3; 5]).unwrap(), 0.5);
        assert!(auc_scores(&[1, 1], &[0.2, 0.3]).is_err());
        assert!(auc_scores(&[1, 0], &[0.2]).is_err());
    }

    #[test]
    fn auc_equals_pair_counting_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..300);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 1;
            labels[1] = 0;
            // coarse grid forces ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
            assert_eq!(auc_scores(&labels, &scores).unwrap(), pair_count_auc(&labels, &scores));
        }
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            scores in proptest::collection::vec(0.0f64..1.0, 4..60),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<u8> = scores.iter().map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(auc_scores(&labels, &scores).unwrap(), auc_scores(&labels, &t).unwrap());
        }

        #[test]
        fn topn_integer_consistency(k in 1usize..8, n_rel in 0usize..6, seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ranked: Vec<NodeId> = (0..10).map(NodeId).collect();
            use rand::seq::SliceRandom;
            ranked.shuffle(&mut rng);
            let rel: HashSet<NodeId> = (0..n_rel as u32).map(NodeId).collect();
            let row = precision_recall_at(&ranked, &rel, k);
            let hits = ranked.iter().take(k).filter(|n| rel.contains(n)).count();
            prop_assert!((row.precision * k as f64 - hits as f64).abs() < 1e-12);
            if row.precision == 0.0 || row.recall == 0.0 {
                prop_assert_eq!(row.f1, 0.0);
            } else {
                prop_assert!((row.f1 - 2.0 * row.precision * row.recall / (row.precision + row.recall)).abs() < 1e-9);
            }
        }
    }

    fn sp(label: u8, score: f64) -> ScoredPair {
        ScoredPair {
            user: NodeId(0),
            item: NodeId(1),
            label,
            score,
        }
    }

    #[test]
    fn acc_examples() {
        assert_eq!(acc(&[sp(1, 1.0), sp(0, 0.0)], 0.5).unwrap(), 1.0);
        assert_eq!(acc(&[sp(1, 0.0), sp(0, 1.0)], 0.5).unwrap(), 0.0);
        let toy = [sp(1, 0.5), sp(0, 0.49), sp(1, 0.2), sp(0, 0.9)];
        let expected = toy.iter().filter(|p| (p.score >= 0.5) == (p.label == 1)).count() as f64 / 4.0;
        assert_eq!(acc(&toy, 0.5).unwrap(), expected);
        assert_eq!(expected, 0.5);
        assert!(acc(&[], 0.5).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let (a, b, c) = (NodeId(1), NodeId(2), NodeId(3));
        let rel: HashSet<NodeId> = [a, b].into_iter().collect();
        let row = precision_recall_at(&[a, c, b], &rel, 2);
        assert_eq!((row.precision, row.recall, row.f1), (0.5, 0.5, 0.5));
        let row = precision_recall_at(&[b, a, c], &rel, 2);
        assert_eq!((row.precision, row.recall, row.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let r = rank_candidates(&[(NodeId(5), 0.5), (NodeId(2), 0.5), (NodeId(9), 0.7)]);
        assert_eq!(r, vec![NodeId(9), NodeId(2), NodeId(5)]);
    }

    #[test]
    fn users_without_positives_are_skipped() {
        let rel: HashSet<NodeId> = [NodeId(1)].into_iter().collect();
        let rep = topn_from_rankings(&[(vec![NodeId(1)], rel), (vec![NodeId(2)], HashSet::new())], &[1]);
        assert_eq!(rep.users, 1);
        assert_eq!(rep.skipped_users, 1);
        assert_eq!(rep.rows[0].precision, 1.0);
    }

    fn toy() -> (KigGraph, Vec<LabeledPair>) {
        let mut pairs = Vec::new();
        for u in 0..6 {
            for i in 0..6 {
                let label = ((u + i) % 2 == 0) as u8;
                pairs.push(Interaction::new(format!("u{u}"), format!("i{i}"), label));
            }
        }
        let g = build_interaction_graph(&pairs);
        let resolved = g.resolve(&pairs).unwrap();
        (g, resolved)
    }

    #[test]
    fn deterministic_model_needs_one_repetition() {
        let (g, pairs) = toy();
        let cfg = ModelConfig {
            scorer: ScorerKind::Average,
            neighbors: 1,
            dim: 8,
            ..Default::default()
        };
        let m = Model::new(cfg, g.node_count(), 3).unwrap();
        let one = average_scores(&m, &g, &pairs, 1, SeedStream::new(1), ExecMode::Serial).unwrap();
        let forty = average_scores(&m, &g, &pairs, 40, SeedStream::new(1), ExecMode::Serial).unwrap();
        assert_eq!(one, forty);
    }

    #[test]
    fn serial_and_parallel_scores_agree() {
        let (g, pairs) = toy();
        let m = Model::new(ModelConfig { dim: 8, ..Default::default() }, g.node_count(), 3).unwrap();
        let a = average_scores(&m, &g, &pairs, 5, SeedStream::new(2), ExecMode::Serial).unwrap();
        let b = average_scores(&m, &g, &pairs, 5, SeedStream::new(2), ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    fn std_dev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn more_repetitions_stabilize_auc() {
        let (g, pairs) = toy();
        let m = Model::new(ModelConfig { dim: 8, neighbors: 3, ..Default::default() }, g.node_count(), 5).unwrap();
        let spread = |n: usize| {
            let aucs: Vec<f64> = (0..20)
                .map(|t| repeated_eval(&m, &g, &pairs, n, SeedStream::new(1000 + t), ExecMode::Serial).unwrap().1.auc)
                .collect();
            std_dev(&aucs)
        };
        let (s1, s5, s40) = (spread(1), spread(5), spread(40));
        assert!(s1 > s5 && s5 > s40, "{s1} {s5} {s40}");
    }

    #[test]
    fn report_text_is_stable() {
        let r = MetricReport {
            auc: 0.75,
            acc: 0.5,
            pairs: 4,
            repetitions: 40,
            topn: Some(TopNReport {
                rows: vec![TopNRow {
                    k: 2,
                    precision: 0.5,
                    recall: 0.5,
                    f1: 0.5,
                }],
                users: 1,
                skipped_users: 0,
            }),
        };
        let t = r.to_text();
        assert!(t.contains("auc = 0.7500000000\n"));
        assert!(t.ends_with("k\tprecision\trecall\tf1\n2\t0.5000000000\t0.5000000000\t0.5000000000\n"));
    }
}
