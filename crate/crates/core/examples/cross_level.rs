//! Trains a model on one level's commands at a time and tests it on every
//! level, printing the mean accuracy matrix.
//!
//!     cargo run --release --example cross_level -- single-rnn 100

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::eval::cross_level_matrix;
use hiergrounding::grounder::{ModelKind, TrainConfig};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::neural::NeuralConfig;
use hiergrounding::world::{bundled, BundledEnv, Level};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: ModelKind = args.next().as_deref().unwrap_or("single-rnn").parse()?;
    let epochs: usize = args.next().map_or(Ok(100), |s| s.parse())?;
    let env = bundled(BundledEnv::Regular);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let cfg = TrainConfig { neural: NeuralConfig { epochs, ..NeuralConfig::default() }, ..TrainConfig::default() };
    let m = cross_level_matrix(&corpus, &RewardSpace::from_env(&env), kind, &cfg, 3, 0.1, 7)?;

    println!("{kind}, rows train level, columns test level");
    println!("       {}", Level::ALL.map(|l| format!("{l:>6}")).join(""));
    for train in Level::ALL {
        let row = Level::ALL.map(|test| m.accuracy(train, test).map_or("     -".into(), |a| format!("{a:>6.3}")));
        println!("{train:>6} {}", row.join(""));
    }
    println!("diagonal dominant: {}", m.diagonal_dominant());
    Ok(())
}
