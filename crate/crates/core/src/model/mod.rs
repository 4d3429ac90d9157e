//! Embedding table, neighborhood encoders and pair scorers.
//!
//! A forward pass for a (user, item) pair samples a self-inclusive
//! neighborhood of size `neighbors` around each side, encodes every node in
//! those neighborhoods (raw embedding, GCN or GAT over a sampled subtree),
//! and scores the pair as `sum_ij A_ij * <x_i, x_j>` where the scorer decides
//! the weight matrix `A`.

mod encoder;
mod scorer;
mod snapshot;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{encode, gat_layer, gcn_layer, Activation, LayerVars};
use encoder::{encode_with, EncodeCtx};
pub use scorer::{score_attention_agg, score_average, score_ni, AggAttentionVars, NiAttentionVars, ScoreOutput};
pub use snapshot::InteractionSnapshot;

use crate::error::{Error, Result};
use crate::graph::{KigGraph, NodeId};
use crate::numeric::{sigmoid, ParamId, ParamStore, Tape, Var};
use crate::sampler::sample_neighbors;
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Average,
    AttentionAgg,
    Ni,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    None,
    Gcn,
    Gat,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::invalid(format!("unknown {} {other:?}", stringify!($ty)))),
                }
            }
        }
    };
}

text_enum!(ScorerKind { ScorerKind::Average => "average", ScorerKind::AttentionAgg => "attention_agg", ScorerKind::Ni => "ni" });
text_enum!(EncoderKind { EncoderKind::None => "none", EncoderKind::Gcn => "gcn", EncoderKind::Gat => "gat" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub scorer: ScorerKind,
    pub encoder: EncoderKind,
    /// Encoder depth in hops; ignored when `encoder` is `None`.
    pub layers: usize,
    pub dim: usize,
    /// Scorer neighborhood size, self included.
    pub neighbors: usize,
    /// Per-hop sample size of the encoder subtree, self included.
    pub encoder_neighbors: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scorer: ScorerKind::Ni,
            encoder: EncoderKind::None,
            layers: 1,
            dim: 128,
            neighbors: 4,
            encoder_neighbors: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if self.neighbors == 0 || self.encoder_neighbors == 0 {
            return Err(Error::invalid("neighbor sample sizes must be positive"));
        }
        if self.encoder != EncoderKind::None && !(1..=2).contains(&self.layers) {
            return Err(Error::invalid(format!("encoder layers must be 1 or 2, got {}", self.layers)));
        }
        Ok(())
    }

    /// Effective encoder depth (0 without an encoder).
    pub fn depth(&self) -> usize {
        if self.encoder == EncoderKind::None {
            0
        } else {
            self.layers
        }
    }
}

/// Parameter ids for one model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub embedding: ParamId,
    pub layers: Vec<LayerIds>,
    pub scorer: ScorerIds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerIds {
    pub weight: ParamId,
    pub bias: ParamId,
    /// GAT attention vector (length `2 * dim`) and its scalar bias.
    pub attention: Option<(ParamId, ParamId)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScorerIds {
    Average,
    /// Per-side weights applied to neighbor embeddings.
    AttentionAgg { user: ParamId, item: ParamId },
    /// Weights applied to user-side and item-side neighbor embeddings.
    Ni { user: ParamId, item: ParamId },
}

fn uniform<R: Rng>(rng: &mut R, n: usize, limit: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

impl Network {
    /// Registers and initializes all parameters in `params`.
    ///
    /// Embeddings are uniform in `[-1/sqrt(d), 1/sqrt(d)]`; weights and
    /// attention vectors are uniform with variance `1/fan_in`; biases are 0.
    pub fn init(config: ModelConfig, nodes: usize, params: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut rng = SeedStream::new(seed).child(0x1417).rng();
        let emb_limit = 1.0 / (d as f64).sqrt();
        let w_limit = (3.0 / d as f64).sqrt();
        let embedding = params.add("embedding", vec![nodes, d], uniform(&mut rng, nodes * d, emb_limit), true)?;
        let mut layers = Vec::new();
        for l in 0..config.depth() {
            let weight = params.add(format!("encoder.{l}.weight"), vec![d, d], uniform(&mut rng, d * d, w_limit), false)?;
            let bias = params.add(format!("encoder.{l}.bias"), vec![d], vec![0.0; d], false)?;
            let attention = if config.encoder == EncoderKind::Gat {
                let a_limit = (3.0 / (2 * d) as f64).sqrt();
                let a = params.add(format!("encoder.{l}.attention"), vec![2 * d], uniform(&mut rng, 2 * d, a_limit), false)?;
                let b = params.add(format!("encoder.{l}.attention_bias"), vec![1], vec![0.0], false)?;
                Some((a, b))
            } else {
                None
            };
            layers.push(LayerIds { weight, bias, attention });
        }
        let scorer = match config.scorer {
            ScorerKind::Average => ScorerIds::Average,
            ScorerKind::AttentionAgg => ScorerIds::AttentionAgg {
                user: params.add("agg.user_attention", vec![d], uniform(&mut rng, d, w_limit), false)?,
                item: params.add("agg.item_attention", vec![d], uniform(&mut rng, d, w_limit), false)?,
            },
            ScorerKind::Ni => ScorerIds::Ni {
                user: params.add("ni.user_attention", vec![d], uniform(&mut rng, d, w_limit), false)?,
                item: params.add("ni.item_attention", vec![d], uniform(&mut rng, d, w_limit), false)?,
            },
        };
        Ok(Network {
            config,
            embedding,
            layers,
            scorer,
        })
    }

    /// Rebuilds parameter ids from a loaded store by name.
    pub fn attach(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        config.validate()?;
        let find = |name: String| params.find(&name).ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")));
        let embedding = find("embedding".into())?;
        let d = params.get(embedding).row_len();
        if d != config.dim {
            return Err(Error::Shape(format!("checkpoint dim {d} != configured dim {}", config.dim)));
        }
        let mut layers = Vec::new();
        for l in 0..config.depth() {
            let attention = if config.encoder == EncoderKind::Gat {
                Some((find(format!("encoder.{l}.attention"))?, find(format!("encoder.{l}.attention_bias"))?))
            } else {
                None
            };
            layers.push(LayerIds {
                weight: find(format!("encoder.{l}.weight"))?,
                bias: find(format!("encoder.{l}.bias"))?,
                attention,
            });
        }
        let scorer = match config.scorer {
            ScorerKind::Average => ScorerIds::Average,
            ScorerKind::AttentionAgg => ScorerIds::AttentionAgg {
                user: find("agg.user_attention".into())?,
                item: find("agg.item_attention".into())?,
            },
            ScorerKind::Ni => ScorerIds::Ni {
                user: find("ni.user_attention".into())?,
                item: find("ni.item_attention".into())?,
            },
        };
        Ok(Network {
            config,
            embedding,
            layers,
            scorer,
        })
    }

    /// Samples both neighborhoods, encodes them and scores the pair.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        params: &ParamStore,
        tape: &mut Tape,
        graph: &KigGraph,
        user: NodeId,
        item: NodeId,
        rng: &mut R,
    ) -> Result<ScoreOutput> {
        let k = self.config.neighbors;
        let rows = sample_neighbors(graph, user, k, true, rng)?.sampled;
        let cols = sample_neighbors(graph, item, k, true, rng)?.sampled;
        self.score_neighborhoods(params, tape, graph, &rows, &cols, rng)
    }

    /// Scores explicit neighborhoods; `rows[0]` and `cols[0]` must be the user
    /// and the item.
    pub fn score_neighborhoods<R: Rng + ?Sized>(
        &self,
        params: &ParamStore,
        tape: &mut Tape,
        graph: &KigGraph,
        rows: &[NodeId],
        cols: &[NodeId],
        rng: &mut R,
    ) -> Result<ScoreOutput> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::Empty("scorer neighborhood"));
        }
        let mut ctx = EncodeCtx::new(self, params, tape);
        let mut cache: HashMap<NodeId, Var> = HashMap::new();
        let mut encode_all = |nodes: &[NodeId], tape: &mut Tape, rng: &mut R| -> Result<Vec<Var>> {
            nodes
                .iter()
                .map(|&n| {
                    if let Some(&v) = cache.get(&n) {
                        return Ok(v);
                    }
                    let v = encode_with(self, params, tape, graph, n, &mut ctx, rng)?;
                    cache.insert(n, v);
                    Ok(v)
                })
                .collect()
        };
        let xs_u = encode_all(rows, tape, rng)?;
        let xs_v = encode_all(cols, tape, rng)?;
        let mut out = match self.scorer {
            ScorerIds::Average => score_average(tape, &xs_u, &xs_v),
            ScorerIds::AttentionAgg { user, item } => {
                let vars = AggAttentionVars {
                    user: tape.param(params, params.whole(user)),
                    item: tape.param(params, params.whole(item)),
                };
                score_attention_agg(tape, &xs_u, &xs_v, vars)
            }
            ScorerIds::Ni { user, item } => {
                let vars = NiAttentionVars {
                    user: tape.param(params, params.whole(user)),
                    item: tape.param(params, params.whole(item)),
                };
                score_ni(tape, &xs_u, &xs_v, vars)
            }
        };
        out.rows = rows.to_vec();
        out.cols = cols.to_vec();
        Ok(out)
    }
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Network,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, nodes: usize, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Network::init(config, nodes, &mut params, seed)?;
        Ok(Model { net, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let net = Network::attach(config, &params)?;
        Ok(Model { net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn logit(&self, graph: &KigGraph, user: NodeId, item: NodeId, stream: SeedStream) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self.net.forward(&self.params, &mut tape, graph, user, item, &mut stream.rng())?;
        Ok(tape.scalar(out.logit))
    }

    pub fn predict(&self, graph: &KigGraph, user: NodeId, item: NodeId, stream: SeedStream) -> Result<f64> {
        Ok(sigmoid(self.logit(graph, user, item, stream)?))
    }

    /// Materializes the pair's weight and inner-product matrices for one
    /// sampling draw.
    pub fn snapshot(&self, graph: &KigGraph, user: NodeId, item: NodeId, stream: SeedStream) -> Result<InteractionSnapshot> {
        let mut tape = Tape::new();
        let out = self.net.forward(&self.params, &mut tape, graph, user, item, &mut stream.rng())?;
        Ok(InteractionSnapshot::from_output(&tape, &out, user, item, self.net.config.scorer))
    }
}
