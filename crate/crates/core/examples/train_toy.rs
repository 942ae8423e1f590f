//! Trains on a freshly rendered toy dataset and prints per-iteration timing.
//!
//! cargo run --release -p gnr-core --example train_toy -- [iterations] [base_channels] [seed]

use std::time::Instant;

use gnr_core::data::toy::render_tensor;
use gnr_core::data::{Domain, DomainDataset, Split};
use gnr_core::trainer::TrainState;
use gnr_formats::TrainConfig;

fn main() -> gnr_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let iters = args.first().copied().unwrap_or(50);
    let cfg = TrainConfig {
        base_channels: args.get(1).copied().unwrap_or(8) as usize,
        seed: args.get(2).copied().unwrap_or(1),
        ..TrainConfig::default()
    };
    let load = |d| {
        let images = (0..200).map(|i| render_tensor(d, 1, i, cfg.resolution)).collect();
        DomainDataset::from_images(d, Split::Train, images)
    };
    let (dx, dy) = (load(Domain::X), load(Domain::Y));
    let mut state = TrainState::new(cfg)?;
    let start = Instant::now();
    for _ in 0..iters {
        let b = state.sample_batches(&dx, &dy)?;
        let r = state.train_step(&b)?;
        if state.iteration % 10 == 0 {
            println!(
                "{:5} {:7.2}s scon {:.4} l2 {:.4} perc {:.4} adv_g {:.3} adv_d {:.3} r1 {:.4}",
                state.iteration,
                start.elapsed().as_secs_f64(),
                r.scon,
                r.cyc_l2,
                r.cyc_perceptual,
                r.adv_g,
                r.adv_d,
                r.r1
            );
        }
    }
    println!("{:.3} s/iter", start.elapsed().as_secs_f64() / iters as f64);
    Ok(())
}
