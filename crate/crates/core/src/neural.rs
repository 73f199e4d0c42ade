//! Multi-NN, Multi-RNN and Single-RNN grounders.
//!
//! All three share one layout: an encoder (bag of embeddings or a GRU over
//! token embeddings), a shared ReLU layer, and one or more heads made of a
//! ReLU hidden layer, dropout, and a softmax read-out. Multi-* models carry
//! a level head plus one reward head per level; Single-RNN has one head over
//! every `(level, reward)` pair.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::grounding::{parse_at_level, LiftedRewardFunction, RewardSpace};
use crate::nn::{
    cross_entropy, dropout, dropout_backward, relu, relu_backward, softmax, softmax_cross_entropy_backward,
    word_counts, Adam, Dense, Embedding, Gru, GruStep, NnError, Param, Tensor,
};
use crate::world::Level;

pub const FORMAT: &str = "hiergrounding-neural/1";
const UNK: &str = "<unk>";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("command has no tokens")]
    EmptyCommand,
    #[error("reward {0} is not in the model's reward space")]
    UnknownReward(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("bad model file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuralKind {
    MultiNn,
    MultiRnn,
    SingleRnn,
}

impl NeuralKind {
    pub const ALL: [NeuralKind; 3] = [NeuralKind::MultiNn, NeuralKind::MultiRnn, NeuralKind::SingleRnn];

    pub fn token(self) -> &'static str {
        match self {
            NeuralKind::MultiNn => "multi-nn",
            NeuralKind::MultiRnn => "multi-rnn",
            NeuralKind::SingleRnn => "single-rnn",
        }
    }

    pub fn recurrent(self) -> bool {
        self != NeuralKind::MultiNn
    }
}

impl fmt::Display for NeuralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for NeuralKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NeuralKind::ALL.into_iter().find(|k| k.token() == s).ok_or_else(|| format!("unknown neural model kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralConfig {
    pub embed_dim: usize,
    /// Width of the GRU state and of the shared layer.
    pub hidden_dim: usize,
    /// Width of each head's hidden layer.
    pub head_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Record the mean training loss (dropout off) before training and
    /// after every epoch.
    pub record_loss: bool,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            embed_dim: 30,
            hidden_dim: 60,
            head_dim: 80,
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            dropout: 0.5,
            record_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    hidden: Dense,
    out: Dense,
}

/// Encoded model input.
#[derive(Debug, Clone, PartialEq)]
enum Input {
    Bow(Vec<(usize, f64)>),
    Seq(Vec<usize>),
}

enum EncoderCache {
    Bow { mask: Vec<f64> },
    Seq { masks: Vec<Vec<f64>>, steps: Vec<GruStep> },
}

struct HeadCache {
    head: usize,
    t: Vec<f64>,
    mask: Vec<f64>,
    td: Vec<f64>,
    probs: Vec<f64>,
}

struct Forward {
    enc: EncoderCache,
    u: Vec<f64>,
    s: Vec<f64>,
    heads: Vec<HeadCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    kind: NeuralKind,
    config: NeuralConfig,
    space: RewardSpace,
    vocab: Vec<String>,
    index: FxHashMap<String, usize>,
    embed: Embedding,
    gru: Option<Gru>,
    shared: Dense,
    heads: Vec<Head>,
}

/// Training output: the model and, when requested, its loss curve
/// (entry 0 is the loss before the first update).
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: NeuralModel,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralInference {
    pub level: Level,
    pub reward: LiftedRewardFunction,
    pub joint_index: usize,
    /// `Pr(l, m | c)` for every candidate in joint enumeration order.
    pub joint: Vec<f64>,
}

impl NeuralModel {
    /// Freshly initialized model over `vocab` (duplicates removed, sorted).
    pub fn new(kind: NeuralKind, space: RewardSpace, vocab: Vec<String>, config: NeuralConfig, seed: u64) -> Self {
        Self::init(kind, space, vocab, config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn init(kind: NeuralKind, space: RewardSpace, mut vocab: Vec<String>, config: NeuralConfig, rng: &mut ChaCha8Rng) -> Self {
        vocab.sort();
        vocab.dedup();
        vocab.retain(|w| w != UNK);
        if kind.recurrent() {
            vocab.insert(0, UNK.to_string());
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let c = &config;
        let embed = Embedding::new(vocab.len(), c.embed_dim, rng);
        let (gru, enc_dim) = if kind.recurrent() {
            (Some(Gru::new(c.embed_dim, c.hidden_dim, rng)), c.hidden_dim)
        } else {
            (None, c.embed_dim)
        };
        let shared = Dense::new(enc_dim, c.hidden_dim, rng);
        let sizes: Vec<usize> = match kind {
            NeuralKind::SingleRnn => vec![space.len()],
            _ => std::iter::once(Level::ALL.len()).chain(Level::ALL.map(|l| space.level(l).len())).collect(),
        };
        let heads = sizes
            .into_iter()
            .map(|n| Head { hidden: Dense::new(c.hidden_dim, c.head_dim, rng), out: Dense::new(c.head_dim, n, rng) })
            .collect();
        NeuralModel { kind, config, space, vocab, index, embed, gru, shared, heads }
    }

    pub fn kind(&self) -> NeuralKind {
        self.kind
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.config
    }

    pub fn space(&self) -> &RewardSpace {
        &self.space
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Every parameter with a stable name.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out: Vec<(String, &mut Param)> = vec![("E".into(), &mut self.embed.e)];
        if let Some(g) = &mut self.gru {
            let names = ["gru.W_z", "gru.U_z", "gru.b_z", "gru.W_r", "gru.U_r", "gru.b_r", "gru.W_h", "gru.U_h", "gru.b_n"];
            out.extend(names.iter().map(|n| n.to_string()).zip(g.params_mut()));
        }
        out.push(("W_s".into(), &mut self.shared.w));
        out.push(("b_s".into(), &mut self.shared.b));
        for (k, h) in self.heads.iter_mut().enumerate() {
            out.push((format!("head{k}.W_t"), &mut h.hidden.w));
            out.push((format!("head{k}.b_t"), &mut h.hidden.b));
            out.push((format!("head{k}.W_o"), &mut h.out.w));
            out.push((format!("head{k}.b_o"), &mut h.out.b));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.named_params_mut().into_iter().map(|(_, p)| p).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn input(&self, tokens: &[String]) -> Result<Input, NeuralError> {
        if tokens.is_empty() {
            return Err(NeuralError::EmptyCommand);
        }
        if self.kind.recurrent() {
            Ok(Input::Seq(tokens.iter().map(|w| self.index.get(w).copied().unwrap_or(0)).collect()))
        } else {
            let ids: Vec<usize> = tokens.iter().filter_map(|w| self.index.get(w).copied()).collect();
            Ok(Input::Bow(word_counts(&ids)))
        }
    }

    fn forward(&self, input: &Input, heads: &[usize], train: bool, rng: &mut ChaCha8Rng) -> Forward {
        let p = self.config.dropout;
        let (enc, u) = match input {
            Input::Bow(counts) => {
                let (u, mask) = dropout(&self.embed.bow(counts), p, train, rng);
                (EncoderCache::Bow { mask }, u)
            }
            Input::Seq(ids) => {
                let (xs, masks): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
                    ids.iter().map(|&id| dropout(self.embed.lookup(id), p, train, rng)).unzip();
                let gru = self.gru.as_ref().expect("recurrent model has a GRU");
                let steps = gru.encode(&xs).expect("inputs are nonempty");
                let u = steps.last().expect("nonempty").h.clone();
                (EncoderCache::Seq { masks, steps }, u)
            }
        };
        let s = relu(&self.shared.forward(&u));
        let heads = heads
            .iter()
            .map(|&k| {
                let h = &self.heads[k];
                let t = relu(&h.hidden.forward(&s));
                let (td, mask) = dropout(&t, p, train, rng);
                let probs = if h.out.output() == 0 { Vec::new() } else { softmax(&h.out.forward(&td)).expect("nonempty") };
                HeadCache { head: k, t, mask, td, probs }
            })
            .collect();
        Forward { enc, u, s, heads }
    }

    /// Heads trained by an example at `level` with reward `idx` (within its
    /// level for Multi-*, joint for Single-RNN) and their targets.
    fn targets(&self, e: &CorpusEntry) -> Result<Vec<(usize, usize)>, NeuralError> {
        let unknown = || NeuralError::UnknownReward(e.reward.to_string());
        if e.reward.level != e.level {
            return Err(unknown());
        }
        Ok(match self.kind {
            NeuralKind::SingleRnn => vec![(0, self.space.joint_index(&e.reward).ok_or_else(unknown)?)],
            _ => {
                let idx = self.space.index_of(&e.reward).ok_or_else(unknown)?;
                vec![(0, e.level.index()), (1 + e.level.index(), idx)]
            }
        })
    }

    /// Summed cross-entropy over the active heads (dropout off).
    pub fn loss(&self, e: &CorpusEntry) -> Result<f64, NeuralError> {
        let targets = self.targets(e)?;
        let heads: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let fw = self.forward(&self.input(&e.tokens)?, &heads, false, &mut ChaCha8Rng::seed_from_u64(0));
        let mut total = 0.0;
        for (hc, &(_, target)) in fw.heads.iter().zip(&targets) {
            total += cross_entropy(&hc.probs, target)?;
        }
        Ok(total)
    }

    pub fn mean_loss(&self, corpus: &[CorpusEntry]) -> Result<f64, NeuralError> {
        let mut total = 0.0;
        for e in corpus {
            total += self.loss(e)?;
        }
        Ok(total / corpus.len().max(1) as f64)
    }

    /// Adds `scale · ∂loss/∂θ` for one example into the gradient buffers and
    /// returns the loss.
    pub fn accumulate_gradient(&mut self, e: &CorpusEntry, scale: f64, train: bool, rng: &mut ChaCha8Rng) -> Result<f64, NeuralError> {
        let targets = self.targets(e)?;
        let input = self.input(&e.tokens)?;
        let heads: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let fw = self.forward(&input, &heads, train, rng);
        let mut loss = 0.0;
        let mut ds = vec![0.0; fw.s.len()];
        for (hc, &(_, target)) in fw.heads.iter().zip(&targets) {
            loss += cross_entropy(&hc.probs, target)?;
            let dlogits: Vec<f64> = softmax_cross_entropy_backward(&hc.probs, target).into_iter().map(|g| g * scale).collect();
            let head = &mut self.heads[hc.head];
            let dtd = head.out.backward(&hc.td, &dlogits);
            let dt = relu_backward(&hc.t, &dropout_backward(&hc.mask, &dtd));
            let d = head.hidden.backward(&fw.s, &dt);
            ds.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        let du = self.shared.backward(&fw.u, &relu_backward(&fw.s, &ds));
        match (fw.enc, &input) {
            (EncoderCache::Bow { mask }, Input::Bow(counts)) => {
                self.embed.bow_backward(counts, &dropout_backward(&mask, &du));
            }
            (EncoderCache::Seq { masks, steps }, Input::Seq(ids)) => {
                let gru = self.gru.as_mut().expect("recurrent model has a GRU");
                let dxs = gru.encode_backward(&steps, &du);
                for ((dx, mask), &id) in dxs.iter().zip(&masks).zip(ids) {
                    self.embed.lookup_backward(id, &dropout_backward(mask, dx));
                }
            }
            _ => unreachable!("encoder cache matches input"),
        }
        Ok(loss)
    }

    /// `Pr(l, m | c)` over the joint enumeration.
    pub fn joint_distribution(&self, tokens: &[String]) -> Result<Vec<f64>, NeuralError> {
        let input = self.input(tokens)?;
        let heads: Vec<usize> = (0..self.heads.len()).collect();
        let fw = self.forward(&input, &heads, false, &mut ChaCha8Rng::seed_from_u64(0));
        Ok(match self.kind {
            NeuralKind::SingleRnn => fw.heads[0].probs.clone(),
            _ => {
                let level = &fw.heads[0].probs;
                Level::ALL.iter().flat_map(|l| fw.heads[1 + l.index()].probs.iter().map(move |p| level[l.index()] * p)).collect()
            }
        })
    }

    /// Level-marginal `Pr(l | c)`.
    pub fn level_distribution(&self, tokens: &[String]) -> Result<[f64; 3], NeuralError> {
        let joint = self.joint_distribution(tokens)?;
        let mut out = [0.0; 3];
        for ((l, _, _), p) in self.space.iter().zip(joint) {
            out[l.index()] += p;
        }
        Ok(out)
    }

    /// Most probable `(level, reward)`; ties go to the lowest joint index.
    pub fn infer(&self, tokens: &[String]) -> Result<NeuralInference, NeuralError> {
        let joint = self.joint_distribution(tokens)?;
        let mut best = 0;
        for (j, &p) in joint.iter().enumerate() {
            if p > joint[best] {
                best = j;
            }
        }
        let reward = self.space.get_joint(best).ok_or(NeuralError::Format("empty reward space".into()))?.clone();
        Ok(NeuralInference { level: reward.level, reward, joint_index: best, joint })
    }

    pub fn to_json(&self) -> String {
        let mut m = self.clone();
        let params = m.named_params_mut().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
        let file = ModelFile {
            format: FORMAT.into(),
            model_kind: self.kind,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            rewards: Level::ALL.map(|l| self.space.level(l).iter().map(ToString::to_string).collect()),
            params,
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(NeuralError::Format(format!("unsupported format {:?}", file.format)));
        }
        let mut levels: [Vec<LiftedRewardFunction>; 3] = Default::default();
        for (l, strings) in Level::ALL.iter().zip(&file.rewards) {
            for s in strings {
                let m = parse_at_level(s, *l).map_err(|e| NeuralError::Format(e.to_string()))?;
                levels[l.index()].push(m);
            }
        }
        let mut model = NeuralModel::new(file.model_kind, RewardSpace::from_levels(levels), file.vocab.clone(), file.config, 0);
        if model.vocab != file.vocab {
            return Err(NeuralError::Format("vocabulary is not in canonical order".into()));
        }
        let mut params = file.params;
        for (name, p) in model.named_params_mut() {
            let t = params.remove(&name).ok_or_else(|| NeuralError::Format(format!("missing parameter {name}")))?;
            if t.shape != p.value.shape || t.data.len() != p.value.data.len() {
                return Err(NeuralError::Format(format!("parameter {name} has shape {:?}", t.shape)));
            }
            *p = Param::from_tensor(t);
        }
        if let Some(name) = params.keys().next() {
            return Err(NeuralError::Format(format!("unexpected parameter {name}")));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model_kind: NeuralKind,
    config: NeuralConfig,
    vocab: Vec<String>,
    rewards: [Vec<String>; 3],
    params: BTreeMap<String, Tensor>,
}

/// Trains a fresh model with shuffled mini-batches and Adam. The vocabulary
/// is every token of `corpus`. Fully determined by `seed`.
pub fn train_neural(
    kind: NeuralKind,
    corpus: &[CorpusEntry],
    space: &RewardSpace,
    config: &NeuralConfig,
    seed: u64,
) -> Result<Trained, NeuralError> {
    if corpus.is_empty() {
        return Err(NeuralError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = corpus.iter().flat_map(|e| e.tokens.iter().cloned()).collect();
    let mut model = NeuralModel::init(kind, space.clone(), vocab, config.clone(), &mut rng);
    let mut adam = Adam::new(config.learning_rate);
    let mut curve = Vec::new();
    if config.record_loss {
        curve.push(model.mean_loss(corpus)?);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let batch_size = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                model.accumulate_gradient(&corpus[i], scale, true, &mut rng)?;
            }
            adam.update(&mut model.params_mut());
        }
        if config.record_loss {
            curve.push(model.mean_loss(corpus)?);
        }
    }
    model.zero_grad();
    Ok(Trained { model, loss_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{bundled, BundledEnv};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn zeroed(kind: NeuralKind) -> NeuralModel {
        let space = RewardSpace::from_env(&bundled(BundledEnv::Small));
        let mut m = NeuralModel::new(kind, space, toks("go north"), NeuralConfig::default(), 1);
        for p in m.params_mut() {
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    #[test]
    fn zero_parameters_give_uniform_outputs() {
        for kind in NeuralKind::ALL {
            let m = zeroed(kind);
            let joint = m.joint_distribution(&toks("go north please")).unwrap();
            assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if kind == NeuralKind::SingleRnn {
                assert!(joint.iter().all(|p| (p - 1.0 / joint.len() as f64).abs() < 1e-12));
                // ties go to the first candidate
                assert_eq!(m.infer(&toks("go")).unwrap().joint_index, 0);
            } else {
                let levels = m.level_distribution(&toks("go")).unwrap();
                assert!(levels.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn uniform_loss_is_log_of_head_sizes() {
        let m = zeroed(NeuralKind::MultiNn);
        let e = CorpusEntry::new("go north", m.space().level(Level::L0)[0].clone()).unwrap();
        let r0 = m.space().level(Level::L0).len() as f64;
        assert!((m.loss(&e).unwrap() - (3.0f64.ln() + r0.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_command_rejected() {
        let m = zeroed(NeuralKind::MultiRnn);
        assert!(matches!(m.infer(&[]), Err(NeuralError::EmptyCommand)));
    }

    #[test]
    fn kind_tokens_round_trip() {
        for k in NeuralKind::ALL {
            assert_eq!(k.token().parse::<NeuralKind>().unwrap(), k);
        }
        assert!("ibm3".parse::<NeuralKind>().is_err());
    }
}
