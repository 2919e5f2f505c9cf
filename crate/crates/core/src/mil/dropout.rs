use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Bag;
use crate::error::{Error, Result};
use crate::imaging::RgbImage;

thread_local! {
    static DROPOUT_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of dropout draws made on the current thread. Evaluation code paths
/// must never move this counter.
pub fn dropout_calls_on_this_thread() -> u64 {
    DROPOUT_CALLS.with(Cell::get)
}

/// Independent Bernoulli(`rate`) drop decisions for `k` instances. If every
/// instance comes up dropped, one uniformly chosen instance is restored.
pub fn dropout_mask<R: Rng>(k: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    DROPOUT_CALLS.with(|c| c.set(c.get() + 1));
    let mut mask: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < rate).collect();
    if k > 0 && mask.iter().all(|&d| d) {
        let keep = rng.random_range(0..k);
        mask[keep] = false;
    }
    mask
}

/// Replaces randomly chosen instances with constant tiles of `mean_rgb`.
/// Tile references and order are left untouched.
pub fn instance_dropout(bag: &Bag, rate: f64, mean_rgb: [u8; 3], rng_seed: u64) -> Result<Bag> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mask = dropout_mask(bag.tiles.len(), rate, &mut rng);
    let mut out = bag.clone();
    for (tile, &drop) in out.tiles.iter_mut().zip(&mask) {
        if drop {
            *tile = RgbImage::filled(tile.width(), tile.height(), mean_rgb)?;
        }
    }
    Ok(out)
}
