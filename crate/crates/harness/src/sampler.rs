//! Stratified batch composition.

use benet_core::Label;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Split one epoch's indices into batches of at most `batch_size`.
///
/// Reals and fakes are shuffled separately and drawn in proportion to what
/// is left, with at least one of each while both pools are non-empty. A
/// trailing batch of one sample is folded into the previous batch, so no
/// batch is smaller than 2 unless the whole epoch is a single sample.
pub fn stratified_batches(labels: &[Label], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 2, "batch size must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reals: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_fake()).collect();
    let mut fakes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_fake()).collect();
    reals.shuffle(&mut rng);
    fakes.shuffle(&mut rng);

    let mut batches: Vec<Vec<usize>> = Vec::new();
    let (mut ri, mut fi) = (0, 0);
    while ri < reals.len() || fi < fakes.len() {
        let r = reals.len() - ri;
        let f = fakes.len() - fi;
        let size = batch_size.min(r + f);
        let n_fake = if r == 0 {
            size
        } else if f == 0 {
            0
        } else {
            let ideal = (size as f64 * f as f64 / (r + f) as f64).round() as usize;
            // at least one of each when size allows, never more than remains
            ideal.clamp(1, size.saturating_sub(1).max(1)).clamp(size.saturating_sub(r), f)
        };
        let n_real = size - n_fake;
        let mut batch: Vec<usize> = reals[ri..ri + n_real].to_vec();
        batch.extend_from_slice(&fakes[fi..fi + n_fake]);
        ri += n_real;
        fi += n_fake;
        batch.shuffle(&mut rng);
        batches.push(batch);
    }
    if batches.len() >= 2 && batches.last().map_or(false, |b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}
