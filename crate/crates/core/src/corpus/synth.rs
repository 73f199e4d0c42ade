use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{CorpusEntry, CorpusError};
use crate::grounding::{Constraint, LiftedRewardFunction, ObjectToken, RewardSpace};
use crate::world::{Dir, GridEnv, Layout, Pos, Region, RoomIdx};

const BUNDLED: &str = include_str!("../../data/templates.toml");

#[derive(Debug, Clone, Deserialize)]
struct TemplateGroup {
    level: usize,
    kind: String,
    texts: Vec<String>,
}

/// Paraphrase templates and word lists for the synthetic corpus.
#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    prefixes: Vec<String>,
    suffixes: Vec<String>,
    objects: Vec<String>,
    units: Vec<String>,
    joiners: Vec<String>,
    numbers: Vec<String>,
    directions: BTreeMap<String, Vec<String>>,
    templates: Vec<TemplateGroup>,
}

impl Templates {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled templates parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let t: Templates = toml::from_str(text).map_err(|e| CorpusError::Templates(e.to_string()))?;
        for d in Dir::ALL {
            if t.directions.get(d.name()).is_none_or(Vec::is_empty) {
                return Err(CorpusError::Templates(format!("no words for direction {}", d.name())));
            }
        }
        if t.objects.is_empty() || t.joiners.is_empty() || t.units.is_empty() {
            return Err(CorpusError::Templates("empty word list".into()));
        }
        Ok(t)
    }

    fn texts(&self, level: usize, kind: &str) -> Vec<&str> {
        self.templates
            .iter()
            .filter(|g| g.level == level && g.kind == kind)
            .flat_map(|g| g.texts.iter().map(String::as_str))
            .collect()
    }

    /// `n_per_task` commands for every reward function of `env`, in reward
    /// enumeration order.
    pub fn generate(&self, env: &GridEnv, n_per_task: usize, seed: u64) -> Result<Vec<CorpusEntry>, CorpusError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = RewardSpace::from_env(env);
        let mut out = Vec::with_capacity(space.len() * n_per_task);
        for (level, _, m) in space.iter() {
            let kind = task_kind(m);
            let texts = self.texts(level.index(), kind);
            if texts.is_empty() {
                return Err(CorpusError::Templates(format!("no level {} templates for {kind}", level.index())));
            }
            for _ in 0..n_per_task {
                let text = self.fill(&mut rng, env.layout(), m, &texts);
                out.push(CorpusEntry::new(&text, m.clone())?);
            }
        }
        Ok(out)
    }

    fn fill(&self, rng: &mut ChaCha8Rng, layout: &Layout, m: &LiftedRewardFunction, texts: &[&str]) -> String {
        let colors: Vec<&str> = layout.rooms().iter().map(|r| r.color.as_str()).collect();
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("object", self.objects.choose(rng).unwrap().clone());
        if let Some(dir) = m.predicate.direction() {
            vars.insert("dir", self.directions[dir.name()].choose(rng).unwrap().clone());
        }
        match &m.constraint {
            Some(Constraint::RoomColor(color)) => {
                vars.insert("color", color.clone());
                // a door into the target room, and the room beyond it
                let doors: Vec<[&str; 2]> = layout
                    .doors()
                    .iter()
                    .map(|d| [colors[d.rooms[0].0], colors[d.rooms[1].0]])
                    .filter(|pair| pair.contains(&color.as_str()))
                    .collect();
                let other = match doors.choose(rng) {
                    Some(pair) => {
                        let (a, b) = if rng.gen_bool(0.5) { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
                        vars.insert("a", a.into());
                        vars.insert("b", b.into());
                        if pair[0] == color { pair[1] } else { pair[0] }
                    }
                    None => colors.iter().copied().find(|c| c != color).unwrap_or(color),
                };
                let others: Vec<&str> = colors.iter().copied().filter(|c| c != color).collect();
                let other = if m.level == crate::world::Level::L1 { other } else { others.choose(rng).copied().unwrap_or(other) };
                vars.insert("other", other.into());
                let target = layout
                    .rooms()
                    .iter()
                    .position(|r| &r.color == color)
                    .map(RoomIdx)
                    .expect("reward space colors come from the layout");
                vars.insert("chain", self.chain(rng, layout, target));
            }
            Some(Constraint::Door(a, b)) => {
                let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                vars.insert("a", a.clone());
                vars.insert("b", b.clone());
            }
            None => {}
        }
        let usable: Vec<&str> = texts
            .iter()
            .copied()
            .filter(|t| placeholders(t).iter().all(|p| vars.contains_key(p.as_str())))
            .collect();
        let template = usable.choose(rng).or_else(|| texts.first()).expect("templates nonempty");
        let mut text = template.to_string();
        for (k, v) in &vars {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        let prefix = self.prefixes.choose(rng).map_or("", String::as_str);
        let suffix = self.suffixes.choose(rng).map_or("", String::as_str);
        let mut text = [prefix, text.as_str(), suffix].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join(" ");
        if rng.gen_bool(0.5) {
            text = capitalize(&text) + ".";
        }
        text
    }

    /// Movement runs from a random cell outside `target` to a random cell
    /// inside it, vertical or horizontal run first at random.
    fn chain(&self, rng: &mut ChaCha8Rng, layout: &Layout, target: RoomIdx) -> String {
        let inside = layout.region_cells(Region::Room(target));
        let outside: Vec<Pos> = (0..layout.num_cells())
            .map(|i| layout.cell_pos(i))
            .filter(|&p| layout.is_free(p) && layout.room_at(p) != Some(target))
            .collect();
        let to = *inside.choose(rng).expect("rooms have cells");
        let from = outside.choose(rng).copied().unwrap_or(Pos::new(to.x, to.y - 1));
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        let mut runs = Vec::new();
        if dy != 0 {
            runs.push((if dy > 0 { Dir::North } else { Dir::South }, dy.unsigned_abs()));
        }
        if dx != 0 {
            runs.push((if dx > 0 { Dir::East } else { Dir::West }, dx.unsigned_abs()));
        }
        if runs.is_empty() {
            runs.push((Dir::North, 1));
        }
        if rng.gen_bool(0.5) {
            runs.reverse();
        }
        let rendered: Vec<String> = runs
            .into_iter()
            .map(|(d, n)| {
                let word = self.directions[d.name()].choose(rng).unwrap();
                let num = match self.numbers.get(n as usize - 1) {
                    Some(w) if rng.gen_bool(0.5) => w.clone(),
                    _ => n.to_string(),
                };
                let unit = self.units.choose(rng).unwrap();
                let amount = if unit.is_empty() { num } else { format!("{num} {unit}") };
                if rng.gen_bool(0.5) {
                    format!("{word} {amount}")
                } else {
                    format!("{amount} {word}")
                }
            })
            .collect();
        let joiner = self.joiners.choose(rng).unwrap();
        rendered.join(joiner)
    }
}

fn task_kind(m: &LiftedRewardFunction) -> &'static str {
    let block = matches!(m.object, Some(ObjectToken::Block(_)));
    match (&m.constraint, block) {
        (None, _) => "go",
        (Some(Constraint::RoomColor(_)), false) => "agent_room",
        (Some(Constraint::RoomColor(_)), true) => "block_room",
        (Some(Constraint::Door(..)), false) => "agent_door",
        (Some(Constraint::Door(..)), true) => "block_door",
    }
}

fn placeholders(t: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = t;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else { break };
        out.push(rest[start + 1..start + len].to_string());
        rest = &rest[start + len + 1..];
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
}

/// Seeded synthetic corpus over `env` from the bundled templates.
pub fn gen_synthetic_corpus(env: &GridEnv, n_per_task: usize, seed: u64) -> Result<Vec<CorpusEntry>, CorpusError> {
    Templates::bundled().generate(env, n_per_task, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::level_counts;
    use crate::grounding::bind;
    use crate::world::{bundled, BundledEnv, Level};

    #[test]
    fn reproducible_and_bindable() {
        let env = bundled(BundledEnv::Regular);
        let a = gen_synthetic_corpus(&env, 3, 7).unwrap();
        let b = gen_synthetic_corpus(&env, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic_corpus(&env, 3, 8).unwrap());
        for e in &a {
            assert!(bind(&e.reward, &env).is_ok(), "{}", e.reward);
            assert!(!e.tokens.is_empty());
            assert!(!e.command.contains('{'), "{}", e.command);
        }
    }

    #[test]
    fn level_distribution_follows_reward_space() {
        let env = bundled(BundledEnv::Regular);
        let space = RewardSpace::from_env(&env);
        let corpus = gen_synthetic_corpus(&env, 5, 1).unwrap();
        let counts = level_counts(&corpus);
        for l in Level::ALL {
            assert_eq!(counts[l.index()], 5 * space.level(l).len());
        }
    }

    #[test]
    fn placeholder_scan() {
        assert_eq!(placeholders("go {dir} to {color}"), ["dir", "color"]);
        assert!(placeholders("plain").is_empty());
    }
}
