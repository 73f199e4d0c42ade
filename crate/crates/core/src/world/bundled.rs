use std::str::FromStr;

use super::GridEnv;

const SMALL: &str = include_str!("../../data/envs/small.json");
const REGULAR: &str = include_str!("../../data/envs/regular.json");
const LARGE: &str = include_str!("../../data/envs/large.json");

/// Environments shipped with the crate. All three share one topology: a red
/// room along the south, green and blue rooms to the north, one-cell doors
/// joining every pair of rooms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BundledEnv {
    /// 8x8, about 3k primitive states.
    Small,
    /// 12x12, about 2^14 primitive states.
    Regular,
    /// 24x24, about 2^18 primitive states.
    Large,
}

impl BundledEnv {
    pub const ALL: [BundledEnv; 3] = [BundledEnv::Small, BundledEnv::Regular, BundledEnv::Large];

    pub fn name(self) -> &'static str {
        match self {
            BundledEnv::Small => "small",
            BundledEnv::Regular => "regular",
            BundledEnv::Large => "large",
        }
    }

    pub fn json(self) -> &'static str {
        match self {
            BundledEnv::Small => SMALL,
            BundledEnv::Regular => REGULAR,
            BundledEnv::Large => LARGE,
        }
    }
}

impl FromStr for BundledEnv {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BundledEnv::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown bundled environment {s:?}"))
    }
}

pub fn bundled(which: BundledEnv) -> GridEnv {
    GridEnv::from_json(which.json()).expect("bundled environments are valid")
}
