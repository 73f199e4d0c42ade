//! Machine-language reward functions and their binding to an environment.
//!
//! Grammar: `<predicate> [<object-token>] [<constraint-token>]`, tokens
//! separated by whitespace.
//!
//! | predicate       | level | object            | constraint                 |
//! |-----------------|-------|-------------------|----------------------------|
//! | `goNorth` ...   | 0     | none              | none                       |
//! | `agentInRoom`   | 0     | `agent0`          | `roomIs<Color>`            |
//! | `blockInRoom`   | 0     | `block<k>`        | `roomIs<Color>`            |
//! | `agentInRegion` | 1, 2  | `agent0`          | `roomIs<Color>`, `door<ColorA><ColorB>` (level 1 only) |
//! | `blockInRegion` | 1, 2  | `block<k>`        | as above                   |
//!
//! Door tokens name the colors of the two rooms a door joins, in
//! alphabetical order (`doorGreenRed`).

use std::fmt;

use thiserror::Error;

use crate::world::{BlockIdx, Dir, GridEnv, Layout, Level, Prop, Region, RoomIdx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundingError {
    #[error("cannot parse machine string: {0}")]
    Parse(String),
    #[error("no object matches {0}")]
    NoMatch(String),
    #[error("several objects match {0}")]
    Ambiguous(String),
}

impl GroundingError {
    pub fn code(&self) -> &'static str {
        match self {
            GroundingError::Parse(_) => "ParseError",
            GroundingError::NoMatch(_) => "NoMatch",
            GroundingError::Ambiguous(_) => "Ambiguous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    GoNorth,
    GoSouth,
    GoEast,
    GoWest,
    AgentInRoom,
    BlockInRoom,
    AgentInRegion,
    BlockInRegion,
}

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::GoNorth => "goNorth",
            Predicate::GoSouth => "goSouth",
            Predicate::GoEast => "goEast",
            Predicate::GoWest => "goWest",
            Predicate::AgentInRoom => "agentInRoom",
            Predicate::BlockInRoom => "blockInRoom",
            Predicate::AgentInRegion => "agentInRegion",
            Predicate::BlockInRegion => "blockInRegion",
        }
    }

    fn from_name(s: &str) -> Option<Predicate> {
        Some(match s {
            "goNorth" => Predicate::GoNorth,
            "goSouth" => Predicate::GoSouth,
            "goEast" => Predicate::GoEast,
            "goWest" => Predicate::GoWest,
            "agentInRoom" => Predicate::AgentInRoom,
            "blockInRoom" => Predicate::BlockInRoom,
            "agentInRegion" => Predicate::AgentInRegion,
            "blockInRegion" => Predicate::BlockInRegion,
            _ => return None,
        })
    }

    pub fn direction(self) -> Option<Dir> {
        match self {
            Predicate::GoNorth => Some(Dir::North),
            Predicate::GoSouth => Some(Dir::South),
            Predicate::GoEast => Some(Dir::East),
            Predicate::GoWest => Some(Dir::West),
            _ => None,
        }
    }

    fn takes_block(self) -> bool {
        matches!(self, Predicate::BlockInRoom | Predicate::BlockInRegion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectToken {
    Agent,
    /// Position in the id-sorted block list.
    Block(usize),
}

impl fmt::Display for ObjectToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectToken::Agent => f.write_str("agent0"),
            ObjectToken::Block(k) => write!(f, "block{k}"),
        }
    }
}

/// Environment-independent description of a region.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    RoomColor(String),
    /// Colors of the two joined rooms, sorted.
    Door(String, String),
}

impl Constraint {
    pub fn door(a: &str, b: &str) -> Constraint {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a <= b {
            Constraint::Door(a, b)
        } else {
            Constraint::Door(b, a)
        }
    }

    fn parse(tok: &str) -> Option<Constraint> {
        if let Some(color) = tok.strip_prefix("roomIs") {
            return color_word(color).map(Constraint::RoomColor);
        }
        let rest = tok.strip_prefix("door")?;
        let split = rest.char_indices().skip(1).find(|(_, c)| c.is_ascii_uppercase())?.0;
        let (a, b) = rest.split_at(split);
        let (a, b) = (color_word(a)?, color_word(b)?);
        let c = Constraint::door(&a, &b);
        // only the canonical spelling round-trips
        (c.to_string() == tok).then_some(c)
    }
}

fn color_word(s: &str) -> Option<String> {
    let mut chars = s.chars();
    let first = chars.next()?;
    if !first.is_ascii_uppercase() || !chars.all(|c| c.is_ascii_lowercase()) {
        return None;
    }
    Some(s.to_lowercase())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::RoomColor(c) => write!(f, "roomIs{}", capitalize(c)),
            Constraint::Door(a, b) => write!(f, "door{}{}", capitalize(a), capitalize(b)),
        }
    }
}

/// A reward-function template whose constraints name room attributes
/// rather than object ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiftedRewardFunction {
    pub level: Level,
    pub predicate: Predicate,
    pub object: Option<ObjectToken>,
    pub constraint: Option<Constraint>,
}

impl LiftedRewardFunction {
    pub fn go(predicate: Predicate) -> Self {
        debug_assert!(predicate.direction().is_some());
        LiftedRewardFunction { level: Level::L0, predicate, object: None, constraint: None }
    }

    pub fn new(level: Level, predicate: Predicate, object: ObjectToken, constraint: Constraint) -> Self {
        LiftedRewardFunction { level, predicate, object: Some(object), constraint: Some(constraint) }
    }

    /// Machine tokens, e.g. `["agentInRegion", "agent0", "roomIsGreen"]`.
    pub fn tokens(&self) -> Vec<String> {
        self.to_string().split(' ').map(str::to_string).collect()
    }
}

impl fmt::Display for LiftedRewardFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.predicate.name())?;
        if let Some(o) = &self.object {
            write!(f, " {o}")?;
        }
        if let Some(c) = &self.constraint {
            write!(f, " {c}")?;
        }
        Ok(())
    }
}

/// Parses a machine string, choosing the level from its form: `go*`,
/// `agentInRoom` and `blockInRoom` are level 0, region predicates with a
/// door constraint are level 1, other region predicates are level 2.
pub fn parse_machine_string(s: &str) -> Result<LiftedRewardFunction, GroundingError> {
    let (predicate, object, constraint) = parse_parts(s)?;
    let level = match (predicate, &constraint) {
        (Predicate::AgentInRegion | Predicate::BlockInRegion, Some(Constraint::Door(..))) => Level::L1,
        (Predicate::AgentInRegion | Predicate::BlockInRegion, _) => Level::L2,
        _ => Level::L0,
    };
    Ok(LiftedRewardFunction { level, predicate, object, constraint })
}

/// Parses a machine string that must be valid at `level`.
pub fn parse_at_level(s: &str, level: Level) -> Result<LiftedRewardFunction, GroundingError> {
    let (predicate, object, constraint) = parse_parts(s)?;
    let ok = match predicate {
        Predicate::GoNorth
        | Predicate::GoSouth
        | Predicate::GoEast
        | Predicate::GoWest
        | Predicate::AgentInRoom
        | Predicate::BlockInRoom => level == Level::L0,
        Predicate::AgentInRegion | Predicate::BlockInRegion => match &constraint {
            Some(Constraint::Door(..)) => level == Level::L1,
            _ => level != Level::L0,
        },
    };
    if !ok {
        return Err(GroundingError::Parse(format!("{s:?} is not a level {} reward function", level.index())));
    }
    Ok(LiftedRewardFunction { level, predicate, object, constraint })
}

type Parts = (Predicate, Option<ObjectToken>, Option<Constraint>);

fn parse_parts(s: &str) -> Result<Parts, GroundingError> {
    let toks: Vec<&str> = s.split_whitespace().collect();
    let err = |why: &str| GroundingError::Parse(format!("{s:?}: {why}"));
    let (&head, args) = toks.split_first().ok_or_else(|| err("empty"))?;
    let predicate = Predicate::from_name(head).ok_or_else(|| err("unknown predicate"))?;
    if predicate.direction().is_some() {
        if !args.is_empty() {
            return Err(err("direction predicates take no arguments"));
        }
        return Ok((predicate, None, None));
    }
    let [obj, con] = args else {
        return Err(err("expected an object token and a constraint token"));
    };
    let object = if predicate.takes_block() {
        let k = obj
            .strip_prefix("block")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|k| *obj == format!("block{k}"))
            .ok_or_else(|| err("expected block<k>"))?;
        ObjectToken::Block(k)
    } else if *obj == "agent0" {
        ObjectToken::Agent
    } else {
        return Err(err("expected agent0"));
    };
    let constraint = Constraint::parse(con).ok_or_else(|| err("bad constraint token"))?;
    if matches!(predicate, Predicate::AgentInRoom | Predicate::BlockInRoom)
        && matches!(constraint, Constraint::Door(..))
    {
        return Err(err("room predicates take a room constraint"));
    }
    Ok((predicate, Some(object), Some(constraint)))
}

/// A reward function bound to object ids of one environment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundedRewardFunction {
    pub lifted: LiftedRewardFunction,
    pub prop: Prop,
}

impl GroundedRewardFunction {
    pub fn level(&self) -> Level {
        self.lifted.level
    }

    /// Machine string with object ids, e.g. `blockInRegion block0 room1`.
    pub fn describe(&self, layout: &Layout) -> String {
        let name = self.lifted.predicate.name();
        match self.prop {
            Prop::Go { .. } => name.to_string(),
            Prop::AgentInRoom { room } => format!("{name} agent0 {}", layout.rooms()[room.0].id),
            Prop::BlockInRoom { block, room } => {
                format!("{name} {} {}", layout.blocks()[block.0].id, layout.rooms()[room.0].id)
            }
            Prop::AgentInRegion { region, .. } => format!("{name} agent0 {}", layout.region_id(region)),
            Prop::BlockInRegion { block, region, .. } => {
                format!("{name} {} {}", layout.blocks()[block.0].id, layout.region_id(region))
            }
        }
    }
}

fn unique<T: Copy>(found: Vec<T>, what: &Constraint) -> Result<T, GroundingError> {
    match found.as_slice() {
        [] => Err(GroundingError::NoMatch(what.to_string())),
        [one] => Ok(*one),
        _ => Err(GroundingError::Ambiguous(what.to_string())),
    }
}

fn resolve_region(layout: &Layout, c: &Constraint) -> Result<Region, GroundingError> {
    match c {
        Constraint::RoomColor(color) => unique(
            layout
                .rooms()
                .iter()
                .enumerate()
                .filter(|(_, r)| &r.color == color)
                .map(|(i, _)| Region::Room(RoomIdx(i)))
                .collect(),
            c,
        ),
        Constraint::Door(..) => unique(
            layout
                .doors()
                .iter()
                .enumerate()
                .filter(|(_, d)| {
                    &Constraint::door(&layout.rooms()[d.rooms[0].0].color, &layout.rooms()[d.rooms[1].0].color) == c
                })
                .map(|(i, _)| Region::Door(crate::world::DoorIdx(i)))
                .collect(),
            c,
        ),
    }
}

/// Binds constraint tokens to the unique matching object of `env`. Direction
/// tasks bind to the agent's current cell.
pub fn bind(lifted: &LiftedRewardFunction, env: &GridEnv) -> Result<GroundedRewardFunction, GroundingError> {
    let layout = env.layout();
    if let Some(dir) = lifted.predicate.direction() {
        return Ok(GroundedRewardFunction { lifted: lifted.clone(), prop: Prop::Go { dir, from: env.agent() } });
    }
    let constraint = lifted.constraint.as_ref().ok_or_else(|| GroundingError::Parse(lifted.to_string()))?;
    let region = resolve_region(layout, constraint)?;
    let block = match lifted.object {
        Some(ObjectToken::Block(k)) => {
            if k >= layout.blocks().len() {
                return Err(GroundingError::NoMatch(format!("block{k}")));
            }
            Some(BlockIdx(k))
        }
        _ => None,
    };
    let room = |r: Region| match r {
        Region::Room(room) => Ok(room),
        Region::Door(_) => Err(GroundingError::Parse(format!("{lifted}: door constraint on a room predicate"))),
    };
    let prop = match (lifted.predicate, block) {
        (Predicate::AgentInRoom, _) => Prop::AgentInRoom { room: room(region)? },
        (Predicate::BlockInRoom, Some(block)) => Prop::BlockInRoom { block, room: room(region)? },
        (Predicate::AgentInRegion, _) => Prop::AgentInRegion { region, level: lifted.level },
        (Predicate::BlockInRegion, Some(block)) => Prop::BlockInRegion { block, region, level: lifted.level },
        _ => return Err(GroundingError::Parse(lifted.to_string())),
    };
    if lifted.level == Level::L2 && matches!(region, Region::Door(_)) {
        return Err(GroundingError::Parse(format!("{lifted}: doors do not exist at level 2")));
    }
    Ok(GroundedRewardFunction { lifted: lifted.clone(), prop })
}

/// The same task expressed at another level, when one exists. Direction
/// tasks exist only at level 0 and door targets only at level 1.
pub fn cross_level_equivalent(m: &LiftedRewardFunction, target: Level) -> Option<LiftedRewardFunction> {
    if m.level == target {
        return Some(m.clone());
    }
    if m.predicate.direction().is_some() {
        return None;
    }
    if matches!(m.constraint, Some(Constraint::Door(..))) {
        return None;
    }
    let predicate = match (m.predicate, target) {
        (Predicate::AgentInRoom | Predicate::AgentInRegion, Level::L0) => Predicate::AgentInRoom,
        (Predicate::BlockInRoom | Predicate::BlockInRegion, Level::L0) => Predicate::BlockInRoom,
        (Predicate::AgentInRoom | Predicate::AgentInRegion, _) => Predicate::AgentInRegion,
        (Predicate::BlockInRoom | Predicate::BlockInRegion, _) => Predicate::BlockInRegion,
        _ => return None,
    };
    Some(LiftedRewardFunction { level: target, predicate, object: m.object, constraint: m.constraint.clone() })
}

/// Candidate reward functions per level, in enumeration order: level 0
/// first, each level sorted by machine string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardSpace {
    levels: [Vec<LiftedRewardFunction>; 3],
}

impl RewardSpace {
    pub fn from_env(env: &GridEnv) -> Self {
        RewardSpace { levels: Level::ALL.map(|l| crate::world::enumerate_reward_space(env, l)) }
    }

    /// Builds a space from explicit candidates; each must belong to its level.
    pub fn from_levels(levels: [Vec<LiftedRewardFunction>; 3]) -> Self {
        for (l, space) in Level::ALL.iter().zip(&levels) {
            assert!(space.iter().all(|m| m.level == *l), "candidate listed under the wrong level");
        }
        RewardSpace { levels }
    }

    pub fn level(&self, l: Level) -> &[LiftedRewardFunction] {
        &self.levels[l.index()]
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of `m` within its level.
    pub fn index_of(&self, m: &LiftedRewardFunction) -> Option<usize> {
        self.levels[m.level.index()].iter().position(|x| x == m)
    }

    /// Position of `m` in the joint enumeration.
    pub fn joint_index(&self, m: &LiftedRewardFunction) -> Option<usize> {
        let offset: usize = self.levels[..m.level.index()].iter().map(Vec::len).sum();
        self.index_of(m).map(|i| offset + i)
    }

    /// Every `(level, index within level, candidate)` in joint order.
    pub fn iter(&self) -> impl Iterator<Item = (Level, usize, &LiftedRewardFunction)> {
        Level::ALL.into_iter().flat_map(move |l| self.levels[l.index()].iter().enumerate().map(move |(i, m)| (l, i, m)))
    }

    pub fn get_joint(&self, j: usize) -> Option<&LiftedRewardFunction> {
        self.iter().nth(j).map(|(_, _, m)| m)
    }
}
