//! Chunk residency: where a worker's chunks live between sampling passes.

use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::sync::Mutex;

use crate::corpus::{Chunk, ChunkStore};
use crate::error::{Error, Result};

/// Gives a worker mutable access to its chunks, one at a time, in order.
pub trait Schedule: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether chunks stay in memory after their sampling pass.
    fn resident(&self) -> bool;

    /// Calls `visit` on each chunk of `ids`, in the given order.
    fn visit(&self, ids: &[usize], visit: &mut dyn FnMut(&mut Chunk) -> Result<()>) -> Result<()>;

    /// Returns every chunk, ordered by id.
    fn into_chunks(self: Box<Self>) -> Result<Vec<Chunk>>;
}

/// Every chunk held in memory for the whole run (one chunk per worker).
pub struct Resident {
    chunks: Vec<Mutex<Chunk>>,
}

impl Resident {
    pub fn new(chunks: Vec<Chunk>) -> Self {
        Resident {
            chunks: chunks.into_iter().map(Mutex::new).collect(),
        }
    }
}

impl Schedule for Resident {
    fn name(&self) -> &'static str {
        "resident"
    }

    fn resident(&self) -> bool {
        true
    }

    fn visit(&self, ids: &[usize], visit: &mut dyn FnMut(&mut Chunk) -> Result<()>) -> Result<()> {
        for &id in ids {
            let mut chunk = self.chunks[id].lock().map_err(|_| Error::WorkerPanic { chunk: id })?;
            visit(&mut chunk)?;
        }
        Ok(())
    }

    fn into_chunks(self: Box<Self>) -> Result<Vec<Chunk>> {
        self.chunks
            .into_iter()
            .enumerate()
            .map(|(id, m)| m.into_inner().map_err(|_| Error::WorkerPanic { chunk: id }))
            .collect()
    }
}

/// Chunks live in an on-disk store; a loader thread reads chunk `m + 1`
/// while the worker samples chunk `m`, and each chunk is written back once
/// sampled.
pub struct Streaming {
    store: ChunkStore,
    num_chunks: usize,
    owned_dir: Option<PathBuf>,
}

impl Streaming {
    /// Writes `chunks` into `store`. When `owned` is set the directory is
    /// removed when the schedule is dropped.
    pub fn new(store: ChunkStore, chunks: Vec<Chunk>, owned: bool) -> Result<Self> {
        for c in &chunks {
            store.write(c)?;
        }
        let owned_dir = owned.then(|| store.dir().to_path_buf());
        Ok(Streaming {
            store,
            num_chunks: chunks.len(),
            owned_dir,
        })
    }
}

impl Drop for Streaming {
    fn drop(&mut self) {
        if let Some(dir) = &self.owned_dir {
            let _ = std::fs::remove_dir_all(dir);
        }
    }
}

impl Schedule for Streaming {
    fn name(&self) -> &'static str {
        "streaming"
    }

    fn resident(&self) -> bool {
        false
    }

    fn visit(&self, ids: &[usize], visit: &mut dyn FnMut(&mut Chunk) -> Result<()>) -> Result<()> {
        let store = &self.store;
        std::thread::scope(|scope| {
            // Rendezvous channel: the loader holds at most one chunk ahead.
            let (tx, rx) = sync_channel::<Result<Chunk>>(0);
            scope.spawn(move || {
                for &id in ids {
                    let loaded = store.read(id);
                    let failed = loaded.is_err();
                    if tx.send(loaded).is_err() || failed {
                        break;
                    }
                }
            });
            for _ in ids {
                let mut chunk = rx
                    .recv()
                    .map_err(|_| Error::Internal("chunk loader stopped early".into()))??;
                visit(&mut chunk)?;
                store.write(&chunk)?;
            }
            Ok(())
        })
    }

    fn into_chunks(self: Box<Self>) -> Result<Vec<Chunk>> {
        (0..self.num_chunks).map(|id| self.store.read(id)).collect()
    }
}
