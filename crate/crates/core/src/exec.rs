//! Data-parallel execution over independent positions.
//!
//! Work is split into fixed-size chunks. Each chunk that needs randomness gets
//! its own ChaCha20 stream seeded from the caller's source, so the plaintext
//! results never depend on how chunks are scheduled. With the `parallel`
//! feature disabled, [`Execution::Parallel`] runs the same chunks in order.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::paillier::PaillierError;

/// Positions per chunk. Each chunk costs one 32-byte seed draw.
pub const CHUNK_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Number of workers this mode will actually use.
    pub fn worker_count(self) -> usize {
        match self {
            Execution::Sequential => 1,
            #[cfg(feature = "parallel")]
            Execution::Parallel => rayon::current_num_threads(),
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel => 1,
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, E, F>(self, items: &[T], f: F) -> Result<Vec<U>, E>
    where
        T: Sync,
        U: Send,
        E: Send,
        F: Fn(&T) -> Result<U, E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `items`, handing each chunk an independent entropy stream.
    pub fn map_with_rng<T, U, E, F, R>(self, items: &[T], rng: &mut R, f: F) -> Result<Vec<U>, E>
    where
        T: Sync,
        U: Send,
        E: Send + From<PaillierError>,
        F: Fn(&T, &mut ChaCha20Rng) -> Result<U, E> + Sync + Send,
        R: RngCore + CryptoRng + ?Sized,
    {
        let chunks: Vec<&[T]> = items.chunks(CHUNK_LEN).collect();
        let seeds = draw_seeds(rng, chunks.len())?;
        let run_chunk = |(chunk, seed): (&&[T], &[u8; 32])| -> Result<Vec<U>, E> {
            let mut local = ChaCha20Rng::from_seed(*seed);
            chunk.iter().map(|item| f(item, &mut local)).collect()
        };
        let per_chunk: Vec<Vec<U>> = match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                chunks
                    .par_iter()
                    .zip(seeds.par_iter())
                    .map(run_chunk)
                    .collect::<Result<_, E>>()?
            }
            _ => chunks
                .iter()
                .zip(seeds.iter())
                .map(run_chunk)
                .collect::<Result<_, E>>()?,
        };
        Ok(per_chunk.into_iter().flatten().collect())
    }

    /// Folds `items` with an associative `combine`, starting every partial
    /// result from `identity`.
    pub fn reduce<T, F, I>(self, items: Vec<T>, identity: I, combine: F) -> T
    where
        T: Send,
        I: Fn() -> T + Sync + Send,
        F: Fn(T, T) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().reduce(identity, combine)
            }
            _ => items.into_iter().fold(identity(), combine),
        }
    }
}

pub(crate) fn draw_seeds<R>(rng: &mut R, count: usize) -> Result<Vec<[u8; 32]>, PaillierError>
where
    R: RngCore + CryptoRng + ?Sized,
{
    (0..count)
        .map(|_| {
            let mut seed = [0u8; 32];
            rng.try_fill_bytes(&mut seed)
                .map_err(|e| PaillierError::Entropy(e.to_string()))?;
            Ok(seed)
        })
        .collect()
}
