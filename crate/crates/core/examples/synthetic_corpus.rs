//! Generates a seeded synthetic command corpus for the regular environment,
//! prints a sample per level and writes the whole corpus as JSON Lines.
//!
//!     cargo run --example synthetic_corpus -- corpus.jsonl

use hiergrounding::corpus::{gen_synthetic_corpus, level_counts, save_corpus};
use hiergrounding::world::{bundled, BundledEnv, Level};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = bundled(BundledEnv::Regular);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let counts = level_counts(&corpus);
    println!("{} commands (L0 {}, L1 {}, L2 {})", corpus.len(), counts[0], counts[1], counts[2]);
    for level in Level::ALL {
        println!("\n{level}");
        for e in corpus.iter().filter(|e| e.level == level).step_by(23).take(8) {
            println!("  {:<70} -> {}", e.command, e.reward);
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        save_corpus(&path, &corpus)?;
        println!("\nwrote {path}");
    }
    Ok(())
}
