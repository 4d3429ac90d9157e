//! Run configuration: a TOML file plus `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use nirec_core::model::{EncoderKind, ModelConfig};
use nirec_core::trainer::{TrainConfig, TrainSeeds};
use nirec_core::ExecMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub interactions: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub linkage: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            interactions: None,
            triples: None,
            linkage: None,
            workdir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `user item label` with 0/1 labels.
    Pairs,
    /// `user item rating` on a 1..5 scale, binarized with sampled negatives.
    Ratings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub format: InputFormat,
    pub user_min: usize,
    pub item_min: usize,
    pub split: [f64; 3],
    pub split_seed: u64,
    pub negative_seed: u64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            format: InputFormat::Pairs,
            user_min: 1,
            item_min: 1,
            split: [0.6, 0.2, 0.2],
            split_seed: 0,
            negative_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub use_knowledge: bool,
    pub rounds: usize,
    pub entity_min: usize,
    pub relation_min: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            use_knowledge: true,
            rounds: 2,
            entity_min: 1,
            relation_min: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_repetitions: usize,
    pub exec: ExecMode,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.lr,
            l2: t.l2,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            val_repetitions: t.val_repetitions,
            exec: t.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub repetitions: usize,
    pub topn: bool,
    pub ks: Vec<usize>,
    /// Cap on evaluated top-N users, 0 for all.
    pub topn_max_users: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            repetitions: 40,
            topn: true,
            ks: vec![1, 2, 5, 10, 20, 50, 100],
            topn_max_users: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Cap on test pairs entering the histogram, 0 for all.
    pub max_pairs: usize,
    /// `[user, item]` keys to dump; the first test pair when empty.
    pub cases: Vec<[String; 2]>,
    pub seed: u64,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection {
            max_pairs: 0,
            cases: Vec::new(),
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub preprocess: Preprocess,
    pub graph: GraphSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub seeds: TrainSeeds,
    pub evaluate: EvaluateSection,
    pub analyze: AnalyzeSection,
}

impl RunConfig {
    /// Reads `path` (defaults when `None`), applies overrides in order and
    /// resolves relative paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Vec<String>> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| vec![format!("config {}: {e}", p.display())])?;
                let table: toml::Table = text.parse().map_err(|e| vec![format!("config {}: {e}", p.display())])?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        let mut problems = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut table, o) {
                problems.push(e);
            }
        }
        if !problems.is_empty() {
            return Err(problems);
        }
        let mut cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| vec![format!("config: {}", e.message())])?;
        cfg.paths.resolve(&base);
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            l2: t.l2,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            val_repetitions: t.val_repetitions,
            model: self.model,
            seeds: self.seeds,
            exec: t.exec,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn problems_preprocess(&self) -> Vec<String> {
        let mut out = Vec::new();
        require_file(&mut out, "paths.interactions", self.paths.interactions.as_deref());
        let p = &self.preprocess;
        if p.split.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            out.push(format!("preprocess.split ratios must be positive, got {:?}", p.split));
        } else if (p.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            out.push(format!("preprocess.split ratios must sum to 1, got {:?}", p.split));
        }
        out
    }

    pub fn problems_graph(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.graph.use_knowledge {
            require_file(&mut out, "paths.triples", self.paths.triples.as_deref());
            require_file(&mut out, "paths.linkage", self.paths.linkage.as_deref());
            if self.graph.rounds == 0 {
                out.push("graph.rounds must be positive when graph.use_knowledge is set".into());
            }
        }
        if self.model.encoder != EncoderKind::None && !self.graph.use_knowledge {
            log::warn!("encoder {} over a feedback-only graph", self.model.encoder);
        }
        out
    }

    pub fn problems_train(&self) -> Vec<String> {
        self.train_config().problems().into_iter().map(|p| format!("train/model: {p}")).collect()
    }

    pub fn problems_evaluate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let e = &self.evaluate;
        if e.repetitions == 0 {
            out.push("evaluate.repetitions must be positive".into());
        }
        if e.topn && (e.ks.is_empty() || e.ks.contains(&0)) {
            out.push(format!("evaluate.ks must be non-empty and positive, got {:?}", e.ks));
        }
        if let Err(err) = self.model.validate() {
            out.push(format!("model: {err}"));
        }
        out
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.interactions, &mut self.triples, &mut self.linkage].into_iter().flatten() {
            join(p);
        }
        join(&mut self.workdir);
    }
}

fn require_file(out: &mut Vec<String>, field: &str, path: Option<&Path>) {
    match path {
        None => out.push(format!("{field} is required")),
        Some(p) if !p.is_file() => out.push(format!("{field}: no such file {}", p.display())),
        Some(_) => {}
    }
}

/// `section.key=value`; the value is read as a TOML value, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("--set {spec:?}: expected section.key=value"))?;
    let (section, field) = key.trim().split_once('.').ok_or_else(|| format!("--set {spec:?}: key must be section.key"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(format!("--set {spec:?}: {section} is not a section"));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_parse_values_and_strings() {
        let cfg = RunConfig::load(
            None,
            &["model.encoder=gat".into(), "train.lr=0.01".into(), "evaluate.ks=[1, 3]".into()],
        )
        .unwrap();
        assert_eq!(cfg.model.encoder, EncoderKind::Gat);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.evaluate.ks, vec![1, 3]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["train.learning_rate=0.1".into()]).unwrap_err();
        assert!(err[0].contains("learning_rate"), "{err:?}");
        assert!(RunConfig::load(None, &["nodot=1".into()]).is_err());
    }

    #[test]
    fn knowledge_requires_triples() {
        let cfg = RunConfig::default();
        let p = cfg.problems_graph();
        assert!(p.iter().any(|s| s.starts_with("paths.triples")), "{p:?}");
        assert!(p.iter().any(|s| s.starts_with("paths.linkage")), "{p:?}");
    }

    #[test]
    fn train_problems_are_exhaustive() {
        let cfg = RunConfig::load(None, &["train.lr=-1.0".into(), "train.batch_size=0".into(), "model.dim=0".into()]).unwrap();
        assert_eq!(cfg.problems_train().len(), 3);
    }
}
