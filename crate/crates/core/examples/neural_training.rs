//! Trains one neural grounding model, prints its loss curve and checks that
//! the saved model reloads with identical predictions.
//!
//!     cargo run --release --example neural_training -- single-rnn 60

use hiergrounding::corpus::gen_synthetic_corpus;
use hiergrounding::grounding::RewardSpace;
use hiergrounding::neural::{train_neural, NeuralConfig, NeuralKind, NeuralModel};
use hiergrounding::world::{bundled, BundledEnv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: NeuralKind = args.next().as_deref().unwrap_or("single-rnn").parse()?;
    let epochs: usize = args.next().map_or(Ok(60), |s| s.parse())?;
    let env = bundled(BundledEnv::Regular);
    let space = RewardSpace::from_env(&env);
    let corpus = gen_synthetic_corpus(&env, 22, 42)?;
    let config = NeuralConfig { epochs, record_loss: true, ..NeuralConfig::default() };

    let start = std::time::Instant::now();
    let trained = train_neural(kind, &corpus, &space, &config, 5)?;
    println!("{kind}: {epochs} epochs on {} commands in {:.1} s", corpus.len(), start.elapsed().as_secs_f64());
    for (epoch, loss) in trained.loss_curve.iter().enumerate().step_by((epochs / 10).max(1)) {
        println!("  epoch {epoch:>4}  mean loss {loss:.4}");
    }

    let text = trained.model.to_json();
    let reloaded = NeuralModel::from_json(&text)?;
    let tokens: Vec<String> = "bring the block into the blue room".split(' ').map(String::from).collect();
    let (a, b) = (trained.model.infer(&tokens)?, reloaded.infer(&tokens)?);
    assert_eq!(a.joint, b.joint);
    println!("\n{} bytes of JSON; reloaded model agrees: {} ({})", text.len(), a.reward, a.level);
    Ok(())
}
