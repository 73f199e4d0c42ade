//! Renders each bundled environment, steps the agent, and shows the same
//! state projected to regions and rooms with the subroutines available there.
//!
//!     cargo run --example world

use hiergrounding::world::{abstract_actions, bundled, BundledEnv, Dir, Level};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for which in BundledEnv::ALL {
        let env = bundled(which);
        let layout = env.layout();
        println!(
            "{}: {}x{}, {} rooms, {} doors, {} blocks, {} states",
            which.name(),
            layout.width(),
            layout.height(),
            layout.rooms().len(),
            layout.doors().len(),
            layout.blocks().len(),
            env.state_space_size()
        );
    }

    let env = bundled(BundledEnv::Small);
    println!("\n{}", env.render());
    let moved = [Dir::North, Dir::North, Dir::East].iter().fold(env.clone(), |e, &d| e.step(d));
    println!("after north, north, east:\n{}", moved.render());
    for level in [Level::L1, Level::L2] {
        let s = moved.project(level)?;
        let actions: Vec<String> = abstract_actions(moved.layout(), &s).iter().map(|a| a.describe(moved.layout())).collect();
        println!("{level}: {s:?}\n  subroutines: {}", actions.join(", "));
    }
    Ok(())
}
