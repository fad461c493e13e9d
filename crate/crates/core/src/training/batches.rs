use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Smallest batch that carries a contrastive signal.
pub const MIN_BATCH: usize = 2;

/// Shuffles item indices and cuts them into batches. A trailing partial
/// batch is dropped when at least one full batch exists; a corpus smaller
/// than `batch_size` forms a single batch.
pub fn make_batches<R: Rng + ?Sized>(n_items: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if n_items < MIN_BATCH {
        return Err(Error::InsufficientData {
            what: "training corpus",
            needed: MIN_BATCH,
            got: n_items,
        });
    }
    if batch_size < MIN_BATCH {
        return Err(Error::Config(format!("batch size must be at least {MIN_BATCH}, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(rng);
    if n_items < batch_size {
        return Ok(vec![order]);
    }
    Ok(order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect())
}
