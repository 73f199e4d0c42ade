//! Trains a grounding model on the synthetic corpus and shows its top
//! candidates for a few commands, including ones it has never seen.
//!
//!     cargo run --release --example grounding -- ibm2
//!     cargo run --release --example grounding -- single-rnn

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::grounder::{Grounder, ModelKind, TrainConfig};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::world::{bundled, BundledEnv};

const COMMANDS: [&str; 5] = [
    "go north",
    "take the block to the green room",
    "walk into the red room",
    "go through the door to the blue room",
    "please push the block from the green room to the red room",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: ModelKind = std::env::args().nth(1).as_deref().unwrap_or("ibm2").parse()?;
    let env = bundled(BundledEnv::Regular);
    let space = RewardSpace::from_env(&env);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let grounder = Grounder::train(kind, &corpus, &space, &TrainConfig::default(), 1)?;
    println!("{kind} trained on {} commands, {} candidate rewards\n", corpus.len(), space.len());
    for text in COMMANDS {
        let inf = grounder.infer_text(text)?;
        println!("{text:?}{}", if inf.low_confidence() { "  (low confidence)" } else { "" });
        for c in inf.top(&space, 3) {
            println!("  {:.3}  {}  {}", c.score, c.level, c.lifted);
        }
    }
    Ok(())
}
