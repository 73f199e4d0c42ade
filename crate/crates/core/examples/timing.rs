//! Grounds composite commands with IBM2 and times the flat, non-hierarchical
//! and AMDP planners on each, printing the time-ratio quartiles.
//!
//!     cargo run --release --example timing -- regular 60

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::eval::timing_harness;
use hiergrounding::grounder::{Grounder, ModelKind, TrainConfig};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::planners::PlannerConfig;
use hiergrounding::world::{bundled, BundledEnv};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let which: BundledEnv = args.next().as_deref().unwrap_or("regular").parse().expect("small, regular or large");
    let max: usize = args.next().map_or(60, |s| s.parse().expect("command count"));
    let env = bundled(which);
    let space = RewardSpace::from_env(&env);

    let train = gen_synthetic_corpus(&env, 22, 42).expect("corpus");
    let grounder = Grounder::train(ModelKind::Ibm2, &train, &space, &TrainConfig::default(), 0).expect("training");

    // fresh commands for timing; go-direction commands are single steps
    let mut commands: Vec<_> = gen_synthetic_corpus(&env, 4, 7)
        .expect("corpus")
        .into_iter()
        .filter(|e| e.reward.predicate.direction().is_none())
        .collect();
    commands.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    commands.truncate(max);

    let start = std::time::Instant::now();
    let report = timing_harness(&grounder, &commands, &env, &PlannerConfig::default(), 1).expect("timing");
    println!(
        "{} environment: {} timed, {} misgrounded, {} excluded, {:.1} s",
        which.name(),
        report.samples.len(),
        report.misgrounded,
        report.excluded.len(),
        start.elapsed().as_secs_f64()
    );
    print!("{}", report.quartiles_csv());
}
