//! IBM Model 2 over (command, machine string) pairs, one table set per level.
//!
//! `Pr(c | m, l) = η(n_c | n_m, l) · Π_j Σ_i δ(i | j, n_c, n_m, l) · τ(c_j | m_i, l)`
//! with source position 0 the NULL token. The product-of-sums form equals
//! the sum over all alignments because alignments factor per word.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::grounding::{LiftedRewardFunction, RewardSpace};
use crate::world::Level;

pub const NULL_TOKEN: &str = "<null>";
/// Lower bound on a known word's translation probability at scoring time.
pub const TAU_FLOOR: f64 = 1e-12;
/// Translation probability of a word never seen at the level.
pub const OOV_FLOOR: f64 = 1e-9;
pub const FORMAT: &str = "hiergrounding-ibm2/1";

#[derive(Debug, Error)]
pub enum Ibm2Error {
    #[error("not an IBM2 model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ibm2Config {
    /// EM iterations updating τ only, with δ held uniform.
    pub bakein_iters: usize,
    /// EM iterations updating τ and δ.
    pub full_iters: usize,
}

impl Default for Ibm2Config {
    fn default() -> Self {
        Ibm2Config { bakein_iters: 5, full_iters: 10 }
    }
}

type DeltaKey = (usize, usize, usize); // (n_c, n_m, j), j zero-based

/// Parameters of one abstraction level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTables {
    words: Vec<String>,
    word_index: FxHashMap<String, usize>,
    /// Position 0 is [`NULL_TOKEN`].
    sources: Vec<String>,
    source_index: FxHashMap<String, usize>,
    /// Row-major `[source][word]`.
    tau: Vec<f64>,
    delta: FxHashMap<DeltaKey, Vec<f64>>,
    /// `n_m -> n_c -> η`.
    eta: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl LevelTables {
    /// Uniform τ over `words`; no δ or η entries (δ falls back to uniform).
    pub fn uniform(mut words: Vec<String>, mut sources: Vec<String>) -> Self {
        words.sort();
        words.dedup();
        sources.retain(|s| s != NULL_TOKEN);
        sources.sort();
        sources.dedup();
        sources.insert(0, NULL_TOKEN.to_string());
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let source_index = sources.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let v = words.len().max(1);
        let tau = vec![1.0 / v as f64; sources.len() * words.len()];
        LevelTables { words, word_index, sources, source_index, tau, delta: FxHashMap::default(), eta: BTreeMap::new() }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Raw τ(word | source); 0 for unknown tokens.
    pub fn tau(&self, source: &str, word: &str) -> f64 {
        match (self.source_index.get(source), self.word_index.get(word)) {
            (Some(&s), Some(&w)) => self.tau[s * self.words.len() + w],
            _ => 0.0,
        }
    }

    pub fn set_tau(&mut self, source: &str, word: &str, p: f64) {
        let s = self.source_index[source];
        let w = self.word_index[word];
        let v = self.words.len();
        self.tau[s * v + w] = p;
    }

    /// τ as used for scoring: known words floored at [`TAU_FLOOR`], unknown
    /// words at [`OOV_FLOOR`].
    pub fn tau_scored(&self, source: &str, word: &str) -> f64 {
        if !self.word_index.contains_key(word) {
            return OOV_FLOOR;
        }
        self.tau(source, word).max(TAU_FLOOR)
    }

    /// δ(i | j, n_c, n_m) with zero-based `j`; uniform over the `n_m + 1`
    /// source positions for shapes never trained.
    pub fn delta(&self, i: usize, j: usize, n_c: usize, n_m: usize) -> f64 {
        match self.delta.get(&(n_c, n_m, j)) {
            Some(row) => row.get(i).copied().unwrap_or(0.0),
            None => 1.0 / (n_m + 1) as f64,
        }
    }

    pub fn set_delta(&mut self, j: usize, n_c: usize, n_m: usize, probs: Vec<f64>) {
        assert_eq!(probs.len(), n_m + 1);
        self.delta.insert((n_c, n_m, j), probs);
    }

    /// η(n_c | n_m). Length pairs never observed back off to a uniform
    /// distribution over the observed command-length range.
    pub fn eta(&self, n_c: usize, n_m: usize) -> f64 {
        if let Some(&p) = self.eta.get(&n_m).and_then(|row| row.get(&n_c)) {
            if p > 0.0 {
                return p;
            }
        }
        let (lo, hi) = self
            .eta
            .values()
            .flat_map(|row| row.keys().copied())
            .fold((usize::MAX, 0), |(lo, hi), n| (lo.min(n), hi.max(n)));
        if lo > hi {
            return 1.0;
        }
        1.0 / (hi - lo + 1) as f64
    }

    pub fn set_eta(&mut self, n_m: usize, n_c: usize, p: f64) {
        self.eta.entry(n_m).or_default().insert(n_c, p);
    }

    /// Largest deviation from 1 of any τ row, δ row or η row.
    pub fn normalization_error(&self) -> f64 {
        let v = self.words.len();
        let mut err: f64 = 0.0;
        if v > 0 {
            for row in self.tau.chunks(v) {
                err = err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        for row in self.delta.values() {
            err = err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        for row in self.eta.values() {
            err = err.max((row.values().sum::<f64>() - 1.0).abs());
        }
        err
    }

    fn source_ids(&self, m: &[String]) -> Vec<Option<usize>> {
        std::iter::once(Some(0)).chain(m.iter().map(|t| self.source_index.get(t).copied())).collect()
    }

    fn tau_ids(&self, s: Option<usize>, w: Option<usize>, floored: bool) -> f64 {
        match (s, w) {
            (_, None) => OOV_FLOOR,
            (None, Some(_)) => TAU_FLOOR,
            (Some(s), Some(w)) => {
                let t = self.tau[s * self.words.len() + w];
                if floored {
                    t.max(TAU_FLOOR)
                } else {
                    t
                }
            }
        }
    }

    fn log_likelihood(&self, c: &[String], m: &[String], floored: bool) -> f64 {
        let (n_c, n_m) = (c.len(), m.len());
        let sources = self.source_ids(m);
        let mut total = self.eta(n_c, n_m).ln();
        for (j, word) in c.iter().enumerate() {
            let w = self.word_index.get(word).copied();
            let sum: f64 =
                sources.iter().enumerate().map(|(i, &s)| self.delta(i, j, n_c, n_m) * self.tau_ids(s, w, floored)).sum();
            total += sum.ln();
        }
        total
    }
}

/// Trained IBM Model 2. Levels absent from the training corpus have no
/// tables and score `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct Ibm2Model {
    levels: [Option<LevelTables>; 3],
}

/// Corpus log-likelihood before training and after every EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    /// Initial value followed by one value per bake-in iteration.
    pub bakein: Vec<f64>,
    /// One value per full iteration.
    pub full: Vec<f64>,
}

struct Pair {
    words: Vec<usize>,
    sources: Vec<usize>,
}

impl Ibm2Model {
    pub fn from_levels(levels: [Option<LevelTables>; 3]) -> Self {
        Ibm2Model { levels }
    }

    pub fn level(&self, l: Level) -> Option<&LevelTables> {
        self.levels[l.index()].as_ref()
    }

    pub fn train(corpus: &[CorpusEntry], cfg: &Ibm2Config) -> Self {
        Self::train_traced(corpus, cfg).0
    }

    /// Bake-in then full EM per level; η by maximum-likelihood counts.
    pub fn train_traced(corpus: &[CorpusEntry], cfg: &Ibm2Config) -> (Self, EmTrace) {
        // Canonical order makes the result independent of corpus order.
        let mut rows: Vec<(Level, Vec<String>, Vec<String>)> =
            corpus.iter().map(|e| (e.level, e.reward.tokens(), e.tokens.clone())).collect();
        rows.sort();

        let mut levels: [Option<LevelTables>; 3] = [None, None, None];
        let mut pairs: [Vec<Pair>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for l in Level::ALL {
            let mine: Vec<&(Level, Vec<String>, Vec<String>)> = rows.iter().filter(|r| r.0 == l).collect();
            if mine.is_empty() {
                continue;
            }
            let words = mine.iter().flat_map(|r| r.2.iter().cloned()).collect();
            let sources = mine.iter().flat_map(|r| r.1.iter().cloned()).collect();
            let mut t = LevelTables::uniform(words, sources);
            let mut counts: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
            for r in &mine {
                *counts.entry(r.1.len()).or_default().entry(r.2.len()).or_default() += 1.0;
                pairs[l.index()].push(Pair {
                    words: r.2.iter().map(|w| t.word_index[w]).collect(),
                    sources: std::iter::once(0).chain(r.1.iter().map(|s| t.source_index[s])).collect(),
                });
            }
            for (n_m, row) in counts {
                let total: f64 = row.values().sum();
                for (n_c, c) in row {
                    t.set_eta(n_m, n_c, c / total);
                }
            }
            levels[l.index()] = Some(t);
        }

        let mut model = Ibm2Model { levels };
        let mut trace = EmTrace { bakein: vec![model.raw_corpus_ll(&pairs)], full: Vec::new() };
        for _ in 0..cfg.bakein_iters {
            model.em_step(&pairs, false);
            trace.bakein.push(model.raw_corpus_ll(&pairs));
        }
        for _ in 0..cfg.full_iters {
            model.em_step(&pairs, true);
            trace.full.push(model.raw_corpus_ll(&pairs));
        }
        (model, trace)
    }

    fn em_step(&mut self, pairs: &[Vec<Pair>; 3], update_delta: bool) {
        for l in Level::ALL {
            let Some(t) = self.levels[l.index()].as_mut() else { continue };
            let v = t.words.len();
            let mut tau_counts = vec![0.0; t.tau.len()];
            let mut delta_counts: FxHashMap<DeltaKey, Vec<f64>> = FxHashMap::default();
            let mut post = Vec::new();
            for p in &pairs[l.index()] {
                let n_c = p.words.len();
                let n_m = p.sources.len() - 1;
                for (j, &w) in p.words.iter().enumerate() {
                    post.clear();
                    post.extend(p.sources.iter().enumerate().map(|(i, &s)| t.delta(i, j, n_c, n_m) * t.tau[s * v + w]));
                    let z: f64 = post.iter().sum();
                    if z <= 0.0 {
                        continue;
                    }
                    let dc = delta_counts.entry((n_c, n_m, j)).or_insert_with(|| vec![0.0; n_m + 1]);
                    for (i, (&s, &q)) in p.sources.iter().zip(&post).enumerate() {
                        tau_counts[s * v + w] += q / z;
                        dc[i] += q / z;
                    }
                }
            }
            for (row, counts) in t.tau.chunks_mut(v).zip(tau_counts.chunks(v)) {
                let total: f64 = counts.iter().sum();
                if total > 0.0 {
                    for (x, c) in row.iter_mut().zip(counts) {
                        *x = c / total;
                    }
                }
            }
            if update_delta {
                for (key, counts) in delta_counts {
                    let total: f64 = counts.iter().sum();
                    t.delta.insert(key, counts.into_iter().map(|c| c / total).collect());
                }
            }
        }
    }

    fn raw_corpus_ll(&self, pairs: &[Vec<Pair>; 3]) -> f64 {
        let mut total = 0.0;
        for l in Level::ALL {
            let Some(t) = self.level(l) else { continue };
            let v = t.words.len();
            for p in &pairs[l.index()] {
                let n_c = p.words.len();
                let n_m = p.sources.len() - 1;
                total += t.eta(n_c, n_m).ln();
                for (j, &w) in p.words.iter().enumerate() {
                    let s: f64 =
                        p.sources.iter().enumerate().map(|(i, &s)| t.delta(i, j, n_c, n_m) * t.tau[s * v + w]).sum();
                    total += s.ln();
                }
            }
        }
        total
    }

    /// Unfloored log-likelihood of a corpus under the model.
    pub fn corpus_log_likelihood(&self, corpus: &[CorpusEntry]) -> f64 {
        corpus
            .iter()
            .map(|e| match self.level(e.level) {
                Some(t) => t.log_likelihood(&e.tokens, &e.reward.tokens(), false),
                None => f64::NEG_INFINITY,
            })
            .sum()
    }

    /// `log Pr(c | m, l)` by the exact factorized alignment sum, floors applied.
    pub fn likelihood_exact(&self, c: &[String], m: &[String], level: Level) -> f64 {
        match self.level(level) {
            Some(t) if !c.is_empty() => t.log_likelihood(c, m, true),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Monte-Carlo estimate of `log Pr(c | m, l)`: alignments drawn from δ,
    /// each weighted by its product of translation probabilities.
    pub fn likelihood_sampled(&self, c: &[String], m: &[String], level: Level, samples: usize, seed: u64) -> f64 {
        assert!(samples >= 1, "at least one sample");
        let Some(t) = self.level(level) else { return f64::NEG_INFINITY };
        let (n_c, n_m) = (c.len(), m.len());
        let sources = t.source_ids(m);
        let words: Vec<Option<usize>> = c.iter().map(|w| t.word_index.get(w).copied()).collect();
        let dists: Vec<WeightedIndex<f64>> = (0..n_c)
            .map(|j| WeightedIndex::new((0..=n_m).map(|i| t.delta(i, j, n_c, n_m))).expect("δ rows are distributions"))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logs: Vec<f64> = (0..samples)
            .map(|_| {
                dists.iter().zip(&words).map(|(d, &w)| t.tau_ids(sources[d.sample(&mut rng)], w, true).ln()).sum()
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = logs.iter().map(|x| (x - max).exp()).sum::<f64>() / samples as f64;
        t.eta(n_c, n_m).ln() + max + mean.ln()
    }

    /// Scores every candidate of `space` and returns the best; ties go to
    /// the earliest candidate in enumeration order.
    pub fn infer(&self, c: &[String], space: &RewardSpace) -> Option<Ibm2Inference> {
        let scores: Vec<f64> = space.iter().map(|(l, _, m)| self.likelihood_exact(c, &m.tokens(), l)).collect();
        let mut best: Option<usize> = None;
        for (j, &s) in scores.iter().enumerate() {
            if best.is_none_or(|b| s > scores[b]) {
                best = Some(j);
            }
        }
        let j = best?;
        let reward = space.get_joint(j).expect("index from enumeration").clone();
        Some(Ibm2Inference { level: reward.level, reward, joint_index: j, scores })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, Ibm2Error> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Ibm2Error> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Ibm2Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ibm2Inference {
    pub level: Level,
    pub reward: LiftedRewardFunction,
    pub joint_index: usize,
    /// Log-likelihood of every candidate in joint enumeration order.
    pub scores: Vec<f64>,
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    levels: Vec<LevelFile>,
}

#[derive(Serialize, Deserialize)]
struct LevelFile {
    level: Level,
    words: Vec<String>,
    sources: Vec<String>,
    tau: Vec<Vec<f64>>,
    delta: Vec<DeltaRow>,
    eta: Vec<EtaRow>,
}

#[derive(Serialize, Deserialize)]
struct DeltaRow {
    n_c: usize,
    n_m: usize,
    j: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EtaRow {
    n_m: usize,
    n_c: usize,
    p: f64,
}

impl From<Ibm2Model> for ModelFile {
    fn from(m: Ibm2Model) -> Self {
        let levels = Level::ALL
            .into_iter()
            .zip(m.levels)
            .filter_map(|(level, t)| {
                let t = t?;
                let v = t.words.len().max(1);
                let mut delta: Vec<DeltaRow> = t
                    .delta
                    .into_iter()
                    .map(|((n_c, n_m, j), probs)| DeltaRow { n_c, n_m, j, probs })
                    .collect();
                delta.sort_by_key(|r| (r.n_c, r.n_m, r.j));
                let eta = t
                    .eta
                    .into_iter()
                    .flat_map(|(n_m, row)| row.into_iter().map(move |(n_c, p)| EtaRow { n_m, n_c, p }))
                    .collect();
                Some(LevelFile {
                    level,
                    tau: t.tau.chunks(v).map(<[f64]>::to_vec).collect(),
                    words: t.words,
                    sources: t.sources,
                    delta,
                    eta,
                })
            })
            .collect();
        ModelFile { format: FORMAT.to_string(), levels }
    }
}

impl TryFrom<ModelFile> for Ibm2Model {
    type Error = Ibm2Error;

    fn try_from(f: ModelFile) -> Result<Self, Self::Error> {
        if f.format != FORMAT {
            return Err(Ibm2Error::Format(format!("format tag {:?}, expected {FORMAT:?}", f.format)));
        }
        let mut levels: [Option<LevelTables>; 3] = [None, None, None];
        for lf in f.levels {
            if lf.sources.first().map(String::as_str) != Some(NULL_TOKEN) {
                return Err(Ibm2Error::Format("source vocabulary must start with the NULL token".into()));
            }
            if lf.tau.len() != lf.sources.len() || lf.tau.iter().any(|r| r.len() != lf.words.len()) {
                return Err(Ibm2Error::Format(format!("level {} τ table has the wrong shape", lf.level)));
            }
            let mut t = LevelTables::uniform(lf.words.clone(), lf.sources.clone());
            if t.words != lf.words || t.sources != lf.sources {
                return Err(Ibm2Error::Format("vocabularies must be sorted and unique".into()));
            }
            t.tau = lf.tau.into_iter().flatten().collect();
            for r in lf.delta {
                if r.probs.len() != r.n_m + 1 || r.j >= r.n_c {
                    return Err(Ibm2Error::Format("δ row has the wrong shape".into()));
                }
                t.delta.insert((r.n_c, r.n_m, r.j), r.probs);
            }
            for r in lf.eta {
                t.set_eta(r.n_m, r.n_c, r.p);
            }
            levels[lf.level.index()] = Some(t);
        }
        Ok(Ibm2Model { levels })
    }
}
