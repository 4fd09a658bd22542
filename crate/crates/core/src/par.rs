//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled (the default) the helpers fan out on
//! the global rayon pool; without it, or after `set_mode(Mode::Sequential)`,
//! they run on the calling thread. Output order never depends on the mode, so
//! every caller produces bit-identical results either way.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

pub fn set_mode(mode: Mode) {
    MODE.store(
        match mode {
            Mode::Parallel => 0,
            Mode::Sequential => 1,
        },
        Ordering::Relaxed,
    );
}

/// Mode actually in effect; always `Sequential` when built without rayon.
pub fn mode() -> Mode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 0 {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == Mode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f` to each fixed-size chunk of `data` together with the chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if mode() == Mode::Parallel {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
