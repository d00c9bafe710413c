//! Fixed-size buffer pool and the heap-side fragment store.
//!
//! Every genome lives in one pool slot of `max_tree_size` bytes. The pool is
//! sized once at startup (`M + 2t` slots) and never grows; exhaustion is a
//! fatal configuration error. Slots are handed out through handles carrying a
//! per-slot generation counter, so releases invalidate outstanding handles
//! and double releases are detected.
//!
//! The breeding scheduler accounts acquire/release deterministically on the
//! master thread and may let a worker finish reading a slot after its logical
//! release; such reads go through the crate-internal index paths and are
//! ordered by the scheduler's task dependencies, never by handle access.

use std::sync::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{Error, Result};

/// Ticket for an acquired slot. Stale tickets are rejected once the slot is
/// released.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferHandle {
    slot: u32,
    generation: u32,
}

impl BufferHandle {
    /// Slot index, for scheduler bookkeeping.
    pub fn slot(&self) -> u32 {
        self.slot
    }
}

struct Inner {
    free: Vec<u32>,
    generation: Vec<u32>,
    in_use: usize,
    peak: usize,
    window_peak: usize,
}

/// Pool of equally sized byte buffers with strict accounting.
pub struct BufferPool {
    buf_size: usize,
    slots: Vec<RwLock<Box<[u8]>>>,
    inner: Mutex<Inner>,
}

/// Read access to one buffer.
pub struct BufRead<'a>(RwLockReadGuard<'a, Box<[u8]>>);

impl std::ops::Deref for BufRead<'_> {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// Write access to one buffer.
pub struct BufWrite<'a>(RwLockWriteGuard<'a, Box<[u8]>>);

impl std::ops::Deref for BufWrite<'_> {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl std::ops::DerefMut for BufWrite<'_> {
    fn deref_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }
}

impl BufferPool {
    /// Allocate `capacity` buffers of `buf_size` bytes up front.
    pub fn new(capacity: usize, buf_size: usize) -> Self {
        let slots = (0..capacity)
            .map(|_| RwLock::new(vec![0u8; buf_size].into_boxed_slice()))
            .collect();
        BufferPool {
            buf_size,
            slots,
            inner: Mutex::new(Inner {
                // LIFO free list; low indices come out first
                free: (0..capacity as u32).rev().collect(),
                generation: vec![0; capacity],
                in_use: 0,
                peak: 0,
                window_peak: 0,
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn buf_size(&self) -> usize {
        self.buf_size
    }

    /// Take a free slot. Fails when the pool is exhausted.
    pub fn acquire(&self) -> Result<BufferHandle> {
        let mut inner = self.inner.lock().unwrap();
        let slot = inner.free.pop().ok_or(Error::PoolExhausted { capacity: self.slots.len() })?;
        inner.in_use += 1;
        if inner.in_use > inner.peak {
            inner.peak = inner.in_use;
        }
        if inner.in_use > inner.window_peak {
            inner.window_peak = inner.in_use;
        }
        Ok(BufferHandle { slot, generation: inner.generation[slot as usize] })
    }

    /// Return a slot to the free list and invalidate its handles.
    pub fn release(&self, handle: BufferHandle) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let idx = handle.slot as usize;
        if idx >= self.slots.len() || inner.generation[idx] != handle.generation {
            return Err(Error::Accounting(format!("release of stale handle for slot {idx}")));
        }
        inner.generation[idx] = inner.generation[idx].wrapping_add(1);
        inner.free.push(handle.slot);
        inner.in_use -= 1;
        Ok(())
    }

    fn check(&self, handle: &BufferHandle) -> Result<()> {
        let inner = self.inner.lock().unwrap();
        let idx = handle.slot as usize;
        if idx >= self.slots.len() || inner.generation[idx] != handle.generation {
            return Err(Error::Accounting(format!("use of stale handle for slot {idx}")));
        }
        Ok(())
    }

    /// Read an acquired buffer.
    pub fn buf(&self, handle: &BufferHandle) -> Result<BufRead<'_>> {
        self.check(handle)?;
        Ok(BufRead(self.slots[handle.slot as usize].read().unwrap()))
    }

    /// Write an acquired buffer.
    pub fn buf_mut(&self, handle: &BufferHandle) -> Result<BufWrite<'_>> {
        self.check(handle)?;
        Ok(BufWrite(self.slots[handle.slot as usize].write().unwrap()))
    }

    /// Scheduler path: read a slot by index without handle validation.
    pub(crate) fn slot_read(&self, slot: u32) -> BufRead<'_> {
        BufRead(self.slots[slot as usize].read().unwrap())
    }

    /// Scheduler path: write a slot by index without handle validation.
    pub(crate) fn slot_write(&self, slot: u32) -> BufWrite<'_> {
        BufWrite(self.slots[slot as usize].write().unwrap())
    }

    /// Buffers currently held.
    pub fn in_use(&self) -> usize {
        self.inner.lock().unwrap().in_use
    }

    /// All-time high-water mark; monotone non-decreasing.
    pub fn peak(&self) -> usize {
        self.inner.lock().unwrap().peak
    }

    /// High-water mark since the previous call; the marker resets to the
    /// current usage so per-generation peaks can be reported.
    pub fn take_window_peak(&self) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let w = inner.window_peak;
        inner.window_peak = inner.in_use;
        w
    }
}

/// Crossover and mutation fragments held outside the pool, keyed by the
/// child slot they will build. A fragment lives from planning until its
/// child is materialized or skipped.
#[derive(Debug)]
pub struct FragmentStore {
    frags: Vec<Option<Vec<u8>>>,
    total_bytes: usize,
}

impl FragmentStore {
    pub fn new(children: usize) -> Self {
        FragmentStore { frags: vec![None; children], total_bytes: 0 }
    }

    pub fn put(&mut self, child: usize, bytes: Vec<u8>) {
        debug_assert!(self.frags[child].is_none(), "fragment slot {child} already filled");
        self.total_bytes += bytes.len();
        self.frags[child] = Some(bytes);
    }

    pub fn get(&self, child: usize) -> Option<&[u8]> {
        self.frags[child].as_deref()
    }

    /// Drop one fragment, returning how many bytes it held.
    pub fn remove(&mut self, child: usize) -> usize {
        if let Some(b) = self.frags[child].take() {
            self.total_bytes -= b.len();
            b.len()
        } else {
            0
        }
    }

    pub fn clear(&mut self) {
        for f in &mut self.frags {
            *f = None;
        }
        self.total_bytes = 0;
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bytes
    }
}
