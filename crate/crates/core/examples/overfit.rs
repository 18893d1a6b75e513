//! Trains on a handful of generated programs and reports paired accuracy.
//!
//! `cargo run --release -p gsmcad-core --example overfit -- <min> <max> <steps> [lr] [n_ts]`

use std::time::Instant;

use gsmcad_core::dataset::generate;
use gsmcad_core::diffusion::{CadDiffusion, PairedMode, TrainConfig, Trainer};
use gsmcad_core::metrics::{paired_counts, PairedCounts};
use gsmcad_core::model::{Example, ModelConfig};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (min, max, steps) = (arg(0, 20.0) as usize, arg(1, 60.0) as usize, arg(2, 500.0) as u64);
    let lr = arg(3, 2e-3);
    let n_ts = arg(4, max as f64) as usize;
    let trees = generate(16, (min, max), 7)?;
    let model = ModelConfig { n_ts, ..ModelConfig::desk() };
    let data: Vec<Example> = trees.iter().map(|t| Example::from_tree(t, n_ts)).collect::<Result<_, _>>()?;
    let train = TrainConfig { lr, max_steps: Some(steps), ..TrainConfig::desk() };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let sys = CadDiffusion::<f32>::new(model, train.schedule()?, &mut rng)?;
    let mut trainer = Trainer::new(sys, train, data)?;
    let start = Instant::now();
    trainer.run(|tr, log| {
        if log.step % 50 == 0 || tr.is_done() {
            println!(
                "step {:5} loss {:.4} mse {:.4} cmd {:.4} args {:.4} |g| {:.3} {:.1}s",
                log.step,
                log.loss.total,
                log.loss.diffusion,
                log.loss.cmd,
                log.loss.args,
                log.grad_norm,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    let t_max = trainer.config.t;
    for mode in [PairedMode::OneShot(1), PairedMode::OneShot(t_max / 2), PairedMode::OneShot(t_max), PairedMode::Chain(t_max)] {
        let mut c = PairedCounts::default();
        for (i, (ex, tree)) in trainer.data().iter().zip(&trees).enumerate() {
            let pred = trainer.system.reconstruct(ex, mode, i as u64)?;
            c.add(&paired_counts(&pred, tree)?);
        }
        println!("{mode:?}: {:?}", c.accuracy());
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
