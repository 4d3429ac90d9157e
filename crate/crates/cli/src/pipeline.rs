//! The five pipeline stages. Each reads its inputs from the work directory
//! and writes its outputs plus a manifest of input digests next to them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use nirec_core::analyzer::{case_dump, entropy_histogram};
use nirec_core::evaluator::{repeated_eval, topn_metrics, topn_table};
use nirec_core::graph::{
    binarize_ratings, build_split_graph, expand_knowledge, export_graph, filter_low_frequency, import_graph, read_interactions,
    read_linkage, read_pairs, read_triples, sample_unseen_negatives, split_dataset, write_pairs, ExpansionParams, Interaction,
    KigGraph, LabeledPair,
};
use nirec_core::model::Model;
use nirec_core::numeric::{read_checkpoint, write_checkpoint};
use nirec_core::trainer::fit_with;
use nirec_core::SeedStream;
use sha2::{Digest, Sha256};

use crate::config::{InputFormat, RunConfig};

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Layout {
            root: cfg.paths.workdir.clone(),
        }
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }

    pub fn split_file(&self, name: &str) -> PathBuf {
        self.split_dir().join(format!("{name}.tsv"))
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.root.join("graph")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.train_dir().join("model.ckpt")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn analyze_dir(&self) -> PathBuf {
        self.root.join("analyze")
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).with_context(|| format!("open {}", path.display()))?);
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).with_context(|| format!("read {}", path.display()))?;
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn sha256_text(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stage manifest: the effective config digest, then `name sha256` per input.
/// File names only, so two work directories give identical manifests.
fn write_manifest(dir: &Path, stage: &str, cfg: &RunConfig, inputs: &[&Path], extra: &str) -> Result<()> {
    let config = cfg.to_toml();
    write(&dir.join("config.toml"), &config)?;
    let mut s = format!("[{stage}]\nconfig_sha256 = {}\n", sha256_text(&config));
    s.push_str(extra);
    s.push_str("\n[inputs]\n");
    for p in inputs {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "{name}\t{}", sha256_file(p)?);
    }
    write(&dir.join(format!("{stage}.manifest")), &s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("write {}", path.display()))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let input = cfg.paths.interactions.as_deref().expect("validated");
    let p = &cfg.preprocess;
    let (pairs, rejected) = match p.format {
        InputFormat::Pairs => (read_pairs(input)?, Vec::new()),
        InputFormat::Ratings => {
            let (binary, rejected) = binarize_ratings(&read_interactions(input)?);
            let positives: Vec<Interaction> = binary.into_iter().filter(|i| i.label == 1).collect();
            (sample_unseen_negatives(&positives, p.negative_seed), rejected)
        }
    };
    for r in &rejected {
        log::warn!("record {}: {}", r.index + 1, r.reason);
    }
    let kept = filter_low_frequency(&pairs, p.user_min, p.item_min)?;
    let split = split_dataset(&kept, (p.split[0], p.split[1], p.split[2]), p.split_seed)?;
    let dir = layout.split_dir();
    mkdir(&dir)?;
    for (name, part) in SPLITS.iter().zip([&split.train, &split.validation, &split.test]) {
        write_pairs(&layout.split_file(name), part)?;
    }
    let extra = format!(
        "records = {}\nrejected = {}\nkept = {}\ntrain = {}\nvalidation = {}\ntest = {}\n",
        pairs.len(),
        rejected.len(),
        kept.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    write_manifest(&dir, "preprocess", cfg, &[input], &extra)?;
    info!("split {} pairs into {}/{}/{}", kept.len(), split.train.len(), split.validation.len(), split.test.len());
    Ok(())
}

fn read_splits(layout: &Layout) -> Result<[Vec<Interaction>; 3]> {
    Ok([
        read_pairs(&layout.split_file(SPLITS[0]))?,
        read_pairs(&layout.split_file(SPLITS[1]))?,
        read_pairs(&layout.split_file(SPLITS[2]))?,
    ])
}

pub fn build_graph(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let [train, validation, test] = read_splits(&layout)?;
    let mut graph = build_split_graph(&train, &[&validation, &test]);
    let mut inputs: Vec<PathBuf> = SPLITS.iter().map(|s| layout.split_file(s)).collect();
    let mut extra = String::new();
    if cfg.graph.use_knowledge {
        let triples_path = cfg.paths.triples.clone().expect("validated");
        let linkage_path = cfg.paths.linkage.clone().expect("validated");
        let triples = read_triples(&triples_path)?;
        let linkage = read_linkage(&linkage_path)?;
        let params = ExpansionParams {
            rounds: cfg.graph.rounds,
            entity_min: cfg.graph.entity_min,
            relation_min: cfg.graph.relation_min,
        };
        let (expanded, r) = expand_knowledge(&graph, &triples, &linkage, params);
        graph = expanded;
        let _ = write!(
            extra,
            "linked_items = {}\nskipped_links = {}\ncollected_triples = {}\ndropped_entities = {}\ndropped_relations = {}\nkept_triples = {}\nnew_entities = {}\n",
            r.linked_items, r.skipped_links, r.collected_triples, r.dropped_entities, r.dropped_relations, r.kept_triples, r.new_entities
        );
        inputs.push(triples_path);
        inputs.push(linkage_path);
    }
    graph.validate().map_err(|e| anyhow::anyhow!("built graph is inconsistent: {e}"))?;
    let dir = layout.graph_dir();
    let manifest = export_graph(&dir, &graph)?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir, "build", cfg, &refs, &extra)?;
    info!("graph: {} nodes, {} feedback edges, {} kg edges", manifest.nodes, manifest.feedback_edges, manifest.kg_edges);
    Ok(())
}

struct Loaded {
    graph: KigGraph,
    pairs: [Vec<LabeledPair>; 3],
    raw: [Vec<Interaction>; 3],
}

fn load(layout: &Layout) -> Result<Loaded> {
    let graph = import_graph(&layout.graph_dir())?;
    let raw = read_splits(layout)?;
    let pairs = [graph.resolve(&raw[0])?, graph.resolve(&raw[1])?, graph.resolve(&raw[2])?];
    Ok(Loaded { graph, pairs, raw })
}

fn stage_inputs(layout: &Layout) -> Vec<PathBuf> {
    let mut v = vec![layout.graph_dir().join("graph.bin")];
    v.extend(SPLITS.iter().map(|s| layout.split_file(s)));
    v
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let data = load(&layout)?;
    let tc = cfg.train_config();
    let out = fit_with(&data.graph, &data.pairs[0], &data.pairs[1], &tc, |e| {
        println!("epoch={} train_loss={:.6} val_auc={:.6}", e.epoch, e.train_loss, e.val_auc);
    })?;
    let dir = layout.train_dir();
    mkdir(&dir)?;
    let ckpt = layout.checkpoint();
    let mut w = BufWriter::new(File::create(&ckpt).with_context(|| format!("create {}", ckpt.display()))?);
    write_checkpoint(&out.model.params, &mut w)?;
    w.flush()?;
    write(&dir.join("run.manifest"), &out.manifest.to_text())?;
    write(&dir.join("timing.tsv"), &out.manifest.timing_text())?;
    let inputs = stage_inputs(&layout);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir, "train", cfg, &refs, &format!("checkpoint_sha256 = {}\n", sha256_file(&ckpt)?))?;
    println!("best_epoch={} best_val_auc={:.6}", out.manifest.best_epoch, out.manifest.best_val_auc);
    Ok(())
}

fn load_model(cfg: &RunConfig, layout: &Layout) -> Result<Model> {
    let ckpt = layout.checkpoint();
    let f = File::open(&ckpt).with_context(|| format!("open {}", ckpt.display()))?;
    let params = read_checkpoint(BufReader::new(f))?;
    Model::from_params(cfg.model, params).context("checkpoint does not match [model]")
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let data = load(&layout)?;
    let model = load_model(cfg, &layout)?;
    let e = &cfg.evaluate;
    let exec = cfg.train.exec;
    let stream = SeedStream::new(cfg.seeds.eval).child(1);
    let (scored, mut report) = repeated_eval(&model, &data.graph, &data.pairs[2], e.repetitions, stream, exec)?;
    if e.topn {
        let seen: Vec<LabeledPair> = data.pairs[0].iter().chain(&data.pairs[1]).copied().collect();
        let mut test = data.pairs[2].clone();
        if e.topn_max_users > 0 {
            let users: BTreeSet<_> = test.iter().map(|p| p.user).collect();
            let keep: BTreeSet<_> = users.into_iter().take(e.topn_max_users).collect();
            test.retain(|p| keep.contains(&p.user));
        }
        let stream = SeedStream::new(cfg.seeds.eval).child(2);
        report.topn = Some(topn_metrics(&model, &data.graph, &seen, &test, &e.ks, e.repetitions, stream, exec)?);
    }
    let dir = layout.eval_dir();
    mkdir(&dir)?;
    write(&dir.join("metrics.txt"), &report.to_text())?;
    if let Some(t) = &report.topn {
        write(&dir.join("topn.tsv"), &topn_table(t))?;
    }
    let mut scores = String::from("user\titem\tlabel\tscore\n");
    for (s, raw) in scored.iter().zip(&data.raw[2]) {
        let _ = writeln!(scores, "{}\t{}\t{}\t{:.10}", raw.user, raw.item, s.label, s.score);
    }
    write(&dir.join("scores.tsv"), &scores)?;
    let mut inputs = stage_inputs(&layout);
    inputs.push(layout.checkpoint());
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir, "evaluate", cfg, &refs, "")?;
    println!("auc={:.6} acc={:.6} pairs={}", report.auc, report.acc, report.pairs);
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let data = load(&layout)?;
    let model = load_model(cfg, &layout)?;
    let a = &cfg.analyze;
    let n = if a.max_pairs == 0 { data.pairs[2].len() } else { a.max_pairs.min(data.pairs[2].len()) };
    let stream = SeedStream::new(a.seed);
    let (values, hist) = entropy_histogram(&model, &data.graph, &data.pairs[2][..n], stream, cfg.train.exec)?;
    let dir = layout.analyze_dir();
    mkdir(&dir)?;
    write(&dir.join("entropy_hist.tsv"), &hist.to_text())?;
    let mut per_pair = String::from("user\titem\tlabel\tentropy\n");
    for (v, raw) in values.iter().zip(&data.raw[2]) {
        let _ = writeln!(per_pair, "{}\t{}\t{}\t{:.10}", raw.user, raw.item, raw.label, v);
    }
    write(&dir.join("entropy.tsv"), &per_pair)?;

    let cases: Vec<[String; 2]> = if a.cases.is_empty() {
        data.raw[2].first().map(|p| vec![[p.user.clone(), p.item.clone()]]).unwrap_or_default()
    } else {
        a.cases.clone()
    };
    for (k, [user, item]) in cases.iter().enumerate() {
        let dump = case_dump(&model, &data.graph, user, item, stream.derive(&[u64::MAX, k as u64]))?;
        write(&dir.join(format!("case_{k}.txt")), &dump.to_text())?;
    }
    let mut inputs = stage_inputs(&layout);
    inputs.push(layout.checkpoint());
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir, "analyze", cfg, &refs, &format!("pairs = {}\nmean_entropy = {:.10}\ncases = {}\n", n, hist.mean, cases.len()))?;
    println!("pairs={} mean_entropy={:.6} cases={}", n, hist.mean, cases.len());
    Ok(())
}

/// Paths a stage reads from the work directory, for start-of-command checks.
pub fn required_artifacts(layout: &Layout, stage: &str) -> Vec<PathBuf> {
    let splits = SPLITS.iter().map(|s| layout.split_file(s));
    match stage {
        "build-graph" => splits.collect(),
        "train" => stage_inputs(layout),
        "evaluate" | "analyze" => {
            let mut v = stage_inputs(layout);
            v.push(layout.checkpoint());
            v
        }
        _ => Vec::new(),
    }
}
