//! One interface over every trained language model.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, CorpusEntry, CorpusError};
use crate::grounding::{LiftedRewardFunction, RewardSpace};
use crate::ibm2::{self, Ibm2Config, Ibm2Error, Ibm2Model};
use crate::neural::{self, train_neural, NeuralConfig, NeuralError, NeuralKind, NeuralModel};
use crate::world::Level;

#[derive(Debug, Error)]
pub enum GrounderError {
    #[error("command has no tokens")]
    EmptyCommand,
    #[error("reward space is empty")]
    EmptySpace,
    #[error("unrecognized model file: {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Ibm2(#[from] Ibm2Error),
    #[error(transparent)]
    Neural(NeuralError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NeuralError> for GrounderError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::EmptyCommand => GrounderError::EmptyCommand,
            e => GrounderError::Neural(e),
        }
    }
}

impl From<CorpusError> for GrounderError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(e) => GrounderError::Io(e),
            _ => GrounderError::EmptyCommand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ibm2,
    MultiNn,
    MultiRnn,
    SingleRnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ibm2, ModelKind::MultiNn, ModelKind::MultiRnn, ModelKind::SingleRnn];

    pub fn token(self) -> &'static str {
        match self {
            ModelKind::Ibm2 => "ibm2",
            ModelKind::MultiNn => "multi-nn",
            ModelKind::MultiRnn => "multi-rnn",
            ModelKind::SingleRnn => "single-rnn",
        }
    }

    pub fn neural(self) -> Option<NeuralKind> {
        match self {
            ModelKind::Ibm2 => None,
            ModelKind::MultiNn => Some(NeuralKind::MultiNn),
            ModelKind::MultiRnn => Some(NeuralKind::MultiRnn),
            ModelKind::SingleRnn => Some(NeuralKind::SingleRnn),
        }
    }
}

impl From<NeuralKind> for ModelKind {
    fn from(k: NeuralKind) -> Self {
        match k {
            NeuralKind::MultiNn => ModelKind::MultiNn,
            NeuralKind::MultiRnn => ModelKind::MultiRnn,
            NeuralKind::SingleRnn => ModelKind::SingleRnn,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL.into_iter().find(|k| k.token() == s).ok_or_else(|| {
            let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.token()).collect();
            format!("unknown model kind {s:?} (expected one of {})", known.join(", "))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ibm2: Ibm2Config,
    pub neural: NeuralConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grounder {
    Ibm2 { model: Ibm2Model, space: RewardSpace },
    Neural(NeuralModel),
}

/// A model's answer for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub level: Level,
    pub reward: LiftedRewardFunction,
    pub joint_index: usize,
    /// `Pr(l, m | c)` over the joint enumeration. IBM2 likelihoods are
    /// normalized under a uniform prior.
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReward {
    pub level: Level,
    pub lifted: String,
    pub score: f64,
}

impl Inference {
    /// The `k` most probable candidates, best first; ties by joint index.
    pub fn top(&self, space: &RewardSpace, k: usize) -> Vec<ScoredReward> {
        let mut idx: Vec<usize> = (0..self.posterior.len()).collect();
        idx.sort_by(|&a, &b| self.posterior[b].total_cmp(&self.posterior[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(k)
            .filter_map(|j| {
                let m = space.get_joint(j)?;
                Some(ScoredReward { level: m.level, lifted: m.to_string(), score: self.posterior[j] })
            })
            .collect()
    }

    /// The winner holds less than twice the uniform share of mass.
    pub fn low_confidence(&self) -> bool {
        let n = self.posterior.len().max(1) as f64;
        self.posterior[self.joint_index] < 2.0 / n
    }
}

impl Grounder {
    pub fn train(
        kind: ModelKind,
        corpus: &[CorpusEntry],
        space: &RewardSpace,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self, GrounderError> {
        match kind.neural() {
            None => Ok(Grounder::Ibm2 { model: Ibm2Model::train(corpus, &cfg.ibm2), space: space.clone() }),
            Some(k) => Ok(Grounder::Neural(train_neural(k, corpus, space, &cfg.neural, seed)?.model)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Grounder::Ibm2 { .. } => ModelKind::Ibm2,
            Grounder::Neural(m) => m.kind().into(),
        }
    }

    pub fn space(&self) -> &RewardSpace {
        match self {
            Grounder::Ibm2 { space, .. } => space,
            Grounder::Neural(m) => m.space(),
        }
    }

    pub fn infer(&self, tokens: &[String]) -> Result<Inference, GrounderError> {
        if tokens.is_empty() {
            return Err(GrounderError::EmptyCommand);
        }
        match self {
            Grounder::Ibm2 { model, space } => {
                let inf = model.infer(tokens, space).ok_or(GrounderError::EmptySpace)?;
                let max = inf.scores[inf.joint_index];
                let exps: Vec<f64> = inf.scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                let posterior = exps.into_iter().map(|e| e / z).collect();
                Ok(Inference { level: inf.level, reward: inf.reward, joint_index: inf.joint_index, posterior })
            }
            Grounder::Neural(m) => {
                let inf = m.infer(tokens)?;
                Ok(Inference { level: inf.level, reward: inf.reward, joint_index: inf.joint_index, posterior: inf.joint })
            }
        }
    }

    pub fn infer_text(&self, text: &str) -> Result<Inference, GrounderError> {
        self.infer(&tokenize(text)?)
    }

    pub fn to_json(&self) -> String {
        match self {
            Grounder::Ibm2 { model, .. } => model.to_json(),
            Grounder::Neural(m) => m.to_json(),
        }
    }

    /// Reads either model format. IBM2 files carry no reward space, so
    /// they get `space`.
    pub fn from_json(text: &str, space: &RewardSpace) -> Result<Self, GrounderError> {
        #[derive(Deserialize)]
        struct Tag {
            format: String,
        }
        let tag: Tag = serde_json::from_str(text)?;
        match tag.format.as_str() {
            ibm2::FORMAT => Ok(Grounder::Ibm2 { model: Ibm2Model::from_json(text)?, space: space.clone() }),
            neural::FORMAT => Ok(Grounder::Neural(NeuralModel::from_json(text)?)),
            other => Err(GrounderError::UnknownFormat(other.to_string())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GrounderError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, space: &RewardSpace) -> Result<Self, GrounderError> {
        Self::from_json(&std::fs::read_to_string(path)?, space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic_corpus;
    use crate::world::{bundled, BundledEnv};

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.token().parse::<ModelKind>().unwrap(), k);
        }
        assert!("ibm1".parse::<ModelKind>().is_err());
    }

    #[test]
    fn files_round_trip_for_every_kind() {
        let env = bundled(BundledEnv::Small);
        let space = RewardSpace::from_env(&env);
        let corpus = gen_synthetic_corpus(&env, 2, 1).unwrap();
        let cfg = TrainConfig { neural: NeuralConfig { epochs: 1, ..Default::default() }, ..Default::default() };
        for kind in ModelKind::ALL {
            let g = Grounder::train(kind, &corpus, &space, &cfg, 3).unwrap();
            let back = Grounder::from_json(&g.to_json(), &space).unwrap();
            assert_eq!(back.kind(), kind);
            let a = g.infer_text("go to the green room").unwrap();
            let b = back.infer_text("go to the green room").unwrap();
            assert_eq!(a, b);
            assert!((a.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let top = a.top(&space, 5);
            assert_eq!(top.len(), 5);
            assert!(top.windows(2).all(|w| w[0].score >= w[1].score));
            assert!(matches!(g.infer_text("?!"), Err(GrounderError::EmptyCommand)));
        }
        assert!(matches!(Grounder::from_json("{\"format\":\"x\"}", &space), Err(GrounderError::UnknownFormat(_))));
    }

    #[test]
    fn low_confidence_threshold() {
        let m = LiftedRewardFunction::go(crate::grounding::Predicate::GoNorth);
        let inf = Inference { level: Level::L0, reward: m.clone(), joint_index: 0, posterior: vec![0.25; 4] };
        assert!(inf.low_confidence());
        let inf = Inference { posterior: vec![0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0], ..inf };
        assert!(!inf.low_confidence());
    }
}
