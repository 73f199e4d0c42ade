//! Ten-fold cross-validation of every grounding model on the synthetic
//! corpus of the regular environment.
//!
//!     cargo run --release --example cross_validation -- [epochs] [folds]

use std::time::Instant;

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::eval::kfold_cv;
use hiergrounding::grounder::{ModelKind, TrainConfig};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::world::{bundled, BundledEnv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(100), |s| s.parse())?;
    let folds: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let env = bundled(BundledEnv::Regular);
    let space = RewardSpace::from_env(&env);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let mut cfg = TrainConfig::default();
    cfg.neural.epochs = epochs;
    println!("{} commands, {folds} folds, {epochs} epochs", corpus.len());
    println!("{:<12} {:>8} {:>8} {:>8}", "model", "level", "reward", "secs");
    for kind in ModelKind::ALL {
        let start = Instant::now();
        let report = kfold_cv(&corpus, &space, kind, &cfg, folds, 7)?;
        println!(
            "{:<12} {:>8.4} {:>8.4} {:>8.1}",
            kind.token(),
            report.level_accuracy,
            report.reward_accuracy,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
