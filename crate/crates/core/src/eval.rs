//! Cross-validation, cross-level training, and planner timing.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusEntry;
use crate::grounder::{Grounder, GrounderError, ModelKind, TrainConfig};
use crate::grounding::{bind, cross_level_equivalent, RewardSpace};
use crate::planners::{plan, PlannerConfig, PlannerKind};
use crate::world::{GridEnv, Level};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n: usize,
    pub level_accuracy: f64,
    pub reward_accuracy: f64,
}

/// Level-selection and reward accuracy of `grounder` on `test`. A reward
/// counts only when its level is right too.
pub fn score(grounder: &Grounder, test: &[CorpusEntry]) -> Result<Score, GrounderError> {
    let (mut level, mut reward) = (0usize, 0usize);
    for e in test {
        let inf = grounder.infer(&e.tokens)?;
        if inf.level == e.level {
            level += 1;
            if inf.reward == e.reward {
                reward += 1;
            }
        }
    }
    let n = test.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(Score { n, level_accuracy: frac(level), reward_accuracy: frac(reward) })
}

/// Index sets of `k` folds. Each level's entries are shuffled and dealt
/// round-robin, continuing from where the previous level stopped.
pub fn stratified_folds(corpus: &[CorpusEntry], k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 2, "need at least two folds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for l in Level::ALL {
        let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus[i].level == l).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Score>,
    /// Means over folds.
    pub level_accuracy: f64,
    pub reward_accuracy: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,fold,n,level_accuracy,reward_accuracy\n");
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "{},{i},{},{:.6},{:.6}", self.model_kind, f.n, f.level_accuracy, f.reward_accuracy);
        }
        let n: usize = self.folds.iter().map(|f| f.n).sum();
        let _ = writeln!(out, "{},mean,{n},{:.6},{:.6}", self.model_kind, self.level_accuracy, self.reward_accuracy);
        out
    }
}

/// Stratified `k`-fold cross-validation of `kind` on `corpus`.
pub fn kfold_cv(
    corpus: &[CorpusEntry],
    space: &RewardSpace,
    kind: ModelKind,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<EvalReport, GrounderError> {
    assert!(corpus.len() >= k, "corpus smaller than fold count");
    let folds = stratified_folds(corpus, k, seed);
    let mut scores = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let mut in_test = vec![false; corpus.len()];
        held.iter().for_each(|&i| in_test[i] = true);
        let train: Vec<CorpusEntry> = corpus.iter().zip(&in_test).filter(|(_, &t)| !t).map(|(e, _)| e.clone()).collect();
        let test: Vec<CorpusEntry> = held.iter().map(|&i| corpus[i].clone()).collect();
        let g = Grounder::train(kind, &train, space, cfg, seed.wrapping_add(f as u64 + 1))?;
        let s = score(&g, &test)?;
        log::info!("{kind} fold {f}: level {:.3} reward {:.3}", s.level_accuracy, s.reward_accuracy);
        scores.push(s);
    }
    let mean = |get: fn(&Score) -> f64| scores.iter().map(get).sum::<f64>() / scores.len() as f64;
    Ok(EvalReport {
        model_kind: kind,
        k,
        seed,
        level_accuracy: mean(|s| s.level_accuracy),
        reward_accuracy: mean(|s| s.reward_accuracy),
        folds: scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub accuracy: f64,
    /// Commands evaluated, summed over trials.
    pub n: usize,
}

/// `cells[i][j]`: trained on level `i`, evaluated on commands of level `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLevelMatrix {
    pub model_kind: ModelKind,
    pub trials: usize,
    pub cells: [[Option<Cell>; 3]; 3],
}

impl CrossLevelMatrix {
    pub fn accuracy(&self, train: Level, test: Level) -> Option<f64> {
        self.cells[train.index()][test.index()].map(|c| c.accuracy)
    }

    /// Every diagonal entry strictly above the rest of its row.
    pub fn diagonal_dominant(&self) -> bool {
        Level::ALL.iter().all(|&i| {
            let Some(d) = self.accuracy(i, i) else { return false };
            Level::ALL.iter().filter(|&&j| j != i).all(|&j| self.accuracy(i, j).is_none_or(|a| d > a))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,train_level,test_L0,test_L1,test_L2\n");
        for i in Level::ALL {
            let row: Vec<String> =
                Level::ALL.iter().map(|&j| self.accuracy(i, j).map_or(String::new(), |a| format!("{a:.6}"))).collect();
            let _ = writeln!(out, "{},{i},{}", self.model_kind, row.join(","));
        }
        out
    }
}

/// Trains `kind` on one level at a time over that level's rewards only.
/// The diagonal is accuracy on a held-out `holdout` fraction averaged over
/// `trials` random splits; off-diagonal entries score every command of the
/// other level against its equivalent reward at the trained level, and
/// skip commands that have none.
pub fn cross_level_matrix(
    corpus: &[CorpusEntry],
    space: &RewardSpace,
    kind: ModelKind,
    cfg: &TrainConfig,
    trials: usize,
    holdout: f64,
    seed: u64,
) -> Result<CrossLevelMatrix, GrounderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = [[None; 3]; 3];
    for i in Level::ALL {
        let mut levels: [Vec<_>; 3] = Default::default();
        levels[i.index()] = space.level(i).to_vec();
        let restricted = RewardSpace::from_levels(levels);
        let own: Vec<&CorpusEntry> = corpus.iter().filter(|e| e.level == i).collect();
        let mut hits = [0usize; 3];
        let mut totals = [0usize; 3];
        for t in 0..trials {
            let mut idx: Vec<usize> = (0..own.len()).collect();
            idx.shuffle(&mut rng);
            let n_test = ((own.len() as f64 * holdout).round() as usize).clamp(1, own.len().saturating_sub(1).max(1));
            let (test_idx, train_idx) = idx.split_at(n_test);
            let train: Vec<CorpusEntry> = train_idx.iter().map(|&k| own[k].clone()).collect();
            let g = Grounder::train(kind, &train, &restricted, cfg, seed.wrapping_add(t as u64 + 1))?;
            for &k in test_idx {
                totals[i.index()] += 1;
                if g.infer(&own[k].tokens)?.reward == own[k].reward {
                    hits[i.index()] += 1;
                }
            }
            for e in corpus.iter().filter(|e| e.level != i) {
                let Some(target) = cross_level_equivalent(&e.reward, i) else { continue };
                totals[e.level.index()] += 1;
                if g.infer(&e.tokens)?.reward == target {
                    hits[e.level.index()] += 1;
                }
            }
        }
        for j in 0..3 {
            if totals[j] > 0 {
                cells[i.index()][j] = Some(Cell { accuracy: hits[j] as f64 / totals[j] as f64, n: totals[j] });
            }
        }
    }
    Ok(CrossLevelMatrix { model_kind: kind, trials, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear-interpolation quantiles; `None` for no samples.
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (s.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
        };
        Some(Quartiles { n: s.len(), min: s[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: s[s.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub command: String,
    pub level: Level,
    pub lifted: String,
    pub plan_steps: usize,
    /// Mean grounding plus planning time per planner, in milliseconds,
    /// ordered base, nh, amdp.
    pub ms: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub name: String,
    pub samples: Vec<f64>,
    pub quartiles: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub repeats: usize,
    pub samples: Vec<TimingSample>,
    /// Commands the model grounded wrongly.
    pub misgrounded: usize,
    /// Commands dropped because binding or planning failed.
    pub excluded: Vec<String>,
    pub ratios: Vec<RatioSummary>,
}

impl TimingReport {
    pub fn ratio(&self, name: &str) -> Option<&RatioSummary> {
        self.ratios.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("command,level,lifted,plan_steps,base_ms,nh_ms,amdp_ms\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "\"{}\",{},{},{},{:.4},{:.4},{:.4}",
                s.command.replace('"', "\"\""),
                s.level,
                s.lifted,
                s.plan_steps,
                s.ms[0],
                s.ms[1],
                s.ms[2]
            );
        }
        out
    }

    pub fn quartiles_csv(&self) -> String {
        let mut out = String::from("ratio,n,min,q1,median,q3,max\n");
        for r in &self.ratios {
            if let Some(q) = r.quartiles {
                let _ = writeln!(out, "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}", r.name, q.n, q.min, q.q1, q.median, q.q3, q.max);
            }
        }
        out
    }
}

const PLANNERS: [PlannerKind; 3] = [PlannerKind::Base, PlannerKind::Nh, PlannerKind::Amdp];

/// Times grounding plus planning of each correctly grounded command from
/// the start state of `env` under every planner, averaged over `repeats`
/// runs, and summarizes the pairwise time ratios.
pub fn timing_harness(
    grounder: &Grounder,
    commands: &[CorpusEntry],
    env: &GridEnv,
    cfg: &PlannerConfig,
    repeats: usize,
) -> Result<TimingReport, GrounderError> {
    let repeats = repeats.max(1);
    let mut samples = Vec::new();
    let mut misgrounded = 0;
    let mut excluded = Vec::new();
    'commands: for e in commands {
        if grounder.infer(&e.tokens)?.reward != e.reward {
            misgrounded += 1;
            continue;
        }
        let mut ms = [0.0; 3];
        let mut plan_steps = 0;
        for (p, kind) in PLANNERS.into_iter().enumerate() {
            let start = Instant::now();
            for _ in 0..repeats {
                let inf = grounder.infer(&e.tokens)?;
                let outcome = bind(&inf.reward, env).map_err(|e| e.to_string()).and_then(|goal| {
                    plan(kind, env, &goal, cfg).map_err(|e| e.to_string())
                });
                match outcome {
                    Ok(trace) => plan_steps = trace.num_steps(),
                    Err(err) => {
                        log::warn!("excluding {:?} under {kind}: {err}", e.command);
                        excluded.push(e.command.clone());
                        continue 'commands;
                    }
                }
            }
            ms[p] = start.elapsed().as_secs_f64() * 1e3 / repeats as f64;
        }
        samples.push(TimingSample { command: e.command.clone(), level: e.level, lifted: e.reward.to_string(), plan_steps, ms });
    }
    let ratio = |name: &str, a: usize, b: usize| {
        let r: Vec<f64> = samples.iter().map(|s| s.ms[a] / s.ms[b]).collect();
        RatioSummary { name: name.to_string(), quartiles: Quartiles::of(&r), samples: r }
    };
    let ratios = vec![ratio("amdp/base", 2, 0), ratio("nh/base", 1, 0), ratio("amdp/nh", 2, 1)];
    Ok(TimingReport { repeats, samples, misgrounded, excluded, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic_corpus;
    use crate::world::{bundled, BundledEnv};

    #[test]
    fn quartiles_are_ordered() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(Quartiles::of(&[2.0, 4.0]).unwrap().median, 3.0);
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn folds_partition_and_stratify() {
        let env = bundled(BundledEnv::Regular);
        let corpus = gen_synthetic_corpus(&env, 5, 3).unwrap();
        let folds = stratified_folds(&corpus, 10, 1);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..corpus.len()).collect::<Vec<_>>());
        for l in Level::ALL {
            let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| corpus[i].level == l).count()).collect();
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{l}: {counts:?}");
        }
        assert_eq!(folds, stratified_folds(&corpus, 10, 1));
    }
}
