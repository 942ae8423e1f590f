//! Compares within-image and across-image style variance after a short run.
//!
//! cargo run --release -p gnr-core --example style_probe -- [iterations] [seed]

use gnr_core::data::toy::render_tensor;
use gnr_core::data::{make_batch, sample_real_batch, Domain, DomainDataset, Split};
use gnr_core::losses::style_consistency_loss;
use gnr_core::trainer::TrainState;
use gnr_formats::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gnr_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let cfg = TrainConfig {
        seed: args.get(1).copied().unwrap_or(1),
        ..TrainConfig::default()
    };
    let load = |d| {
        let images = (0..200).map(|i| render_tensor(d, 1, i, cfg.resolution)).collect();
        DomainDataset::from_images(d, Split::Train, images)
    };
    let (dx, dy) = (load(Domain::X), load(Domain::Y));
    let mut state = TrainState::new(cfg)?;
    for _ in 0..args.first().copied().unwrap_or(0) {
        let b = state.sample_batches(&dx, &dy)?;
        state.train_step(&b)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut within, mut across) = (0.0, 0.0);
    for i in 0..20 {
        let b = make_batch(&dx, i * 7, 8, &mut rng)?;
        within += style_consistency_loss(&state.gen_xy.encode_styles(&b.views)?)?;
        let r = sample_real_batch(&dx, 8, &mut rng)?;
        across += style_consistency_loss(&state.gen_xy.encode_styles(&r)?)?;
    }
    println!("within {:.6} across {:.6} ratio {:.3}", within / 20.0, across / 20.0, within / across);
    Ok(())
}
