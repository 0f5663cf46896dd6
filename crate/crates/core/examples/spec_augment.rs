//! Apply the strong and weak masking presets to a small feature grid and
//! print which cells were zeroed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqssl::augment::{preset, spec_augment_with, AugmentPolicy};
use seqssl::sequence::FeatureMatrix;

fn show(name: &str, x: &FeatureMatrix, policy: &AugmentPolicy, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, spans) = spec_augment_with(x, policy, &mut rng);
    println!("{name} ({policy}): {spans:?}");
    for t in 0..y.frames() {
        let row: String = (0..y.dim()).map(|f| if y.get(t, f) == 0.0 { '.' } else { '#' }).collect();
        println!("  {row}");
    }
}

fn main() -> seqssl::Result<()> {
    let x = FeatureMatrix::new(24, 16, vec![1.0; 24 * 16])?;
    show("strong", &x, &preset("strong", 16)?, 3);
    show("weak", &x, &preset("weak", 16)?, 3);
    show("explicit", &x, &AugmentPolicy::parse("4,3,2,2", 16)?, 3);
    Ok(())
}
