//! Drives a simulated robot through a sequence of commands: each one is
//! grounded, planned with AMDP and executed against the running state.
//!
//!     cargo run --release --example session

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::grounder::{Grounder, ModelKind, TrainConfig};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::planners::{PlannerConfig, PlannerKind};
use hiergrounding::session::Session;
use hiergrounding::world::{bundled, BundledEnv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = bundled(BundledEnv::Regular);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let grounder = Grounder::train(ModelKind::Ibm2, &corpus, &RewardSpace::from_env(&env), &TrainConfig::default(), 0)?;
    let cfg = PlannerConfig::default();
    let mut session = Session::new(env);
    println!("{}", session.env().render());

    for text in ["go to the green room", "take the block to the red room", "go north", "go to the green room"] {
        match session.command(&grounder, text, PlannerKind::Amdp, &cfg) {
            Ok(o) => {
                println!("{text:?}");
                println!("  {} -> {}", o.lifted, o.grounded);
                println!("  {} steps in {:.2} ms, satisfied {}", o.plan_steps.len(), o.planning_ms, o.satisfied);
            }
            Err(e) => println!("{text:?} failed: {} ({e})", e.code()),
        }
    }
    println!("\n{}", session.env().render());
    Ok(())
}
