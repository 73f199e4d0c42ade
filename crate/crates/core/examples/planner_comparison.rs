//! Plans every level 1 and level 2 goal of a bundled environment with the
//! flat and hierarchical planners and prints their planning times.
//!
//!     cargo run --release --example planner_comparison -- regular

use hiergrounding::grounding::bind;
use hiergrounding::planners::{plan, PlannerConfig, PlannerKind};
use hiergrounding::world::{bundled, enumerate_reward_space, BundledEnv, Level};

fn main() {
    let which: BundledEnv = std::env::args().nth(1).as_deref().unwrap_or("small").parse().expect("small, regular or large");
    let env = bundled(which);
    let cfg = PlannerConfig::default();
    println!("{} environment, {} states", which.name(), env.state_space_size());
    println!("{:<48} {:>6} {:>10} {:>10} {:>10}", "goal", "steps", "base ms", "nh ms", "amdp ms");
    for level in [Level::L1, Level::L2] {
        for lifted in enumerate_reward_space(&env, level) {
            let goal = bind(&lifted, &env).expect("bundled environments bind every goal");
            let mut row = Vec::new();
            let mut steps = 0;
            for kind in PlannerKind::ALL {
                let trace = plan(kind, &env, &goal, &cfg).expect("goal reachable");
                steps = steps.max(trace.num_steps());
                row.push(trace.planning_time.as_secs_f64() * 1e3);
            }
            println!("{:<48} {:>6} {:>10.2} {:>10.2} {:>10.2}", format!("{lifted} ({level})"), steps, row[0], row[1], row[2]);
        }
    }
}
