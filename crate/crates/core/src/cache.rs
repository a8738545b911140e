//! Set-associative write-back, write-allocate cache with LRU replacement and
//! per-block retention monitor counters.
//!
//! Each valid block carries the time of its last write (or fill). Its monitor
//! counter advances on the rising edges of a monitor clock whose period is
//! `retention / N`, with edges at integer multiples of the period from t = 0.
//! A write or invalidate puts the counter back in S0; an edge that coincides
//! with the write does not count. When the counter reaches S(N-1) the block
//! expires: dirty blocks are written back, then the block is invalidated.
//!
//! Expiration is applied lazily: [`CacheState::advance_time`] retires every
//! block whose expiry instant is at or before `now`, in expiry order. An
//! [`ExpirationMode::Exact`] mode instead expires a block once strictly more
//! than one retention time has passed since its last write.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::config::{CacheGeometry, ExpirationMode};
use crate::trace::{Op, TraceRecord};

/// Tick boundaries tolerate this fraction of a monitor period of rounding.
const TICK_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum CacheError {
    #[error("simulated time went backwards: {now} < {previous}")]
    TimeRegression { now: f64, previous: f64 },
    #[error("retention violated: read hit {age} s after the last write (limit {limit} s)")]
    RetentionViolation { age: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFrame {
    pub valid: bool,
    pub dirty: bool,
    pub tag: u64,
    /// 0 is most recently used. Meaningful only for valid frames.
    pub lru_rank: u32,
    pub last_write_time: f64,
    /// Set when the frame was invalidated by expiry and has not been refilled since.
    expired: bool,
    /// Bumped on every write/fill/invalidate so stale heap entries can be skipped.
    generation: u64,
}

impl BlockFrame {
    const EMPTY: BlockFrame = BlockFrame {
        valid: false,
        dirty: false,
        tag: 0,
        lru_rank: 0,
        last_write_time: 0.0,
        expired: false,
        generation: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    ReadHit,
    WriteHit,
    ReadMiss,
    WriteMiss,
}

impl AccessKind {
    pub fn is_hit(self) -> bool {
        matches!(self, AccessKind::ReadHit | AccessKind::WriteHit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    pub caused_writeback: bool,
    pub expired_before_access: bool,
    /// Block address of the valid line evicted to make room, if any.
    pub victim: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpirationEvent {
    pub set: usize,
    pub way: usize,
    pub block: u64,
    pub writeback: bool,
    pub expiry_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WritebackEvent {
    pub set: usize,
    pub way: usize,
    pub block: u64,
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    at: f64,
    frame: usize,
    generation: u64,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at
            .total_cmp(&other.at)
            .then(self.frame.cmp(&other.frame))
            .then(self.generation.cmp(&other.generation))
    }
}

/// Retention behaviour of the array backing a [`CacheState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retention {
    /// `None` means the array never loses data (SRAM, or STT-RAM under refresh).
    pub time_s: Option<f64>,
    pub divisor: u32,
    pub mode: ExpirationMode,
}

impl Retention {
    pub const INFINITE: Retention = Retention {
        time_s: None,
        divisor: 10,
        mode: ExpirationMode::Quantized,
    };

    /// A retention of `time_s` seconds; non-finite values mean no expiry.
    pub fn finite(time_s: f64, divisor: u32, mode: ExpirationMode) -> Self {
        Self {
            time_s: time_s.is_finite().then_some(time_s),
            divisor,
            mode,
        }
    }

    pub fn monitor_period(&self) -> Option<f64> {
        self.time_s.map(|r| r / self.divisor as f64)
    }

    fn tick_of(&self, t: f64) -> u64 {
        let p = self.monitor_period().expect("finite retention");
        (t / p + TICK_EPS).floor() as u64
    }

    /// Instant at which a block last written at `written` expires.
    pub fn expiry_time(&self, written: f64) -> Option<f64> {
        let r = self.time_s?;
        Some(match self.mode {
            ExpirationMode::Quantized => {
                let tick = self.tick_of(written) + self.divisor as u64 - 1;
                tick as f64 * (r / self.divisor as f64)
            }
            ExpirationMode::Exact => written + r,
        })
    }

    fn expired(&self, written: f64, now: f64) -> bool {
        match (self.time_s, self.mode) {
            (None, _) => false,
            (Some(_), ExpirationMode::Quantized) => {
                self.tick_of(now) >= self.tick_of(written) + self.divisor as u64 - 1
            }
            (Some(r), ExpirationMode::Exact) => now - written > r,
        }
    }

    /// Monitor counter state at `now` for a block last written at `written`.
    pub fn counter_state(&self, written: f64, now: f64) -> u32 {
        if self.time_s.is_none() {
            return 0;
        }
        let n = self.divisor as u64;
        let elapsed = self.tick_of(now).saturating_sub(self.tick_of(written));
        elapsed.min(n - 1) as u32
    }

    /// Longest age at which a read hit is still legal.
    pub fn hit_age_limit(&self) -> f64 {
        match (self.time_s, self.mode) {
            (None, _) => f64::INFINITY,
            (Some(r), ExpirationMode::Quantized) => r + r / self.divisor as f64,
            (Some(r), ExpirationMode::Exact) => r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CacheState {
    geometry: CacheGeometry,
    num_sets: usize,
    ways: usize,
    frames: Vec<BlockFrame>,
    retention: Retention,
    now: f64,
    heap: BinaryHeap<Reverse<HeapEntry>>,
}

impl CacheState {
    pub fn new(geometry: CacheGeometry, retention: Retention) -> Self {
        let num_sets = geometry.num_sets();
        let ways = geometry.associativity as usize;
        Self {
            geometry,
            num_sets,
            ways,
            frames: vec![BlockFrame::EMPTY; num_sets * ways],
            retention,
            now: 0.0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn retention(&self) -> &Retention {
        &self.retention
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn frame(&self, set: usize, way: usize) -> &BlockFrame {
        &self.frames[set * self.ways + way]
    }

    pub fn set_frames(&self, set: usize) -> &[BlockFrame] {
        &self.frames[set * self.ways..(set + 1) * self.ways]
    }

    pub fn valid_blocks(&self) -> usize {
        self.frames.iter().filter(|f| f.valid).count()
    }

    /// Monitor counter of a frame at the current time (0 for invalid frames).
    pub fn counter_state(&self, set: usize, way: usize) -> u32 {
        let f = self.frame(set, way);
        if f.valid {
            self.retention.counter_state(f.last_write_time, self.now)
        } else {
            0
        }
    }

    /// Whether `address` is currently resident.
    pub fn probe(&self, address: u64) -> Option<(usize, usize)> {
        let set = self.geometry.set_index(address);
        let tag = self.geometry.tag(address);
        self.set_frames(set)
            .iter()
            .position(|f| f.valid && f.tag == tag)
            .map(|way| (set, way))
    }

    fn block_of(&self, set: usize, tag: u64) -> u64 {
        tag * self.num_sets as u64 + set as u64
    }

    fn schedule(&mut self, idx: usize) {
        let f = &self.frames[idx];
        if let Some(at) = self.retention.expiry_time(f.last_write_time) {
            self.heap.push(Reverse(HeapEntry {
                at,
                frame: idx,
                generation: f.generation,
            }));
        }
    }

    /// Retire every block whose retention has elapsed by `now`.
    pub fn advance_time(&mut self, now: f64) -> Result<Vec<ExpirationEvent>, CacheError> {
        if now < self.now {
            return Err(CacheError::TimeRegression {
                now,
                previous: self.now,
            });
        }
        self.now = now;
        let mut events = Vec::new();
        while let Some(Reverse(top)) = self.heap.peek().copied() {
            let f = self.frames[top.frame];
            if !f.valid || f.generation != top.generation {
                self.heap.pop();
                continue;
            }
            if !self.retention.expired(f.last_write_time, now) {
                break;
            }
            self.heap.pop();
            let (set, way) = (top.frame / self.ways, top.frame % self.ways);
            events.push(ExpirationEvent {
                set,
                way,
                block: self.block_of(set, f.tag),
                writeback: f.dirty,
                expiry_time: top.at,
            });
            self.invalidate_frame(set, way);
            self.frames[top.frame].expired = true;
        }
        Ok(events)
    }

    fn invalidate_frame(&mut self, set: usize, way: usize) {
        let base = set * self.ways;
        let rank = self.frames[base + way].lru_rank;
        for f in &mut self.frames[base..base + self.ways] {
            if f.valid && f.lru_rank > rank {
                f.lru_rank -= 1;
            }
        }
        let f = &mut self.frames[base + way];
        f.valid = false;
        f.dirty = false;
        f.expired = false;
        f.lru_rank = 0;
        f.generation += 1;
    }

    fn touch(&mut self, set: usize, way: usize) {
        let base = set * self.ways;
        let rank = self.frames[base + way].lru_rank;
        for f in &mut self.frames[base..base + self.ways] {
            if f.valid && f.lru_rank < rank {
                f.lru_rank += 1;
            }
        }
        self.frames[base + way].lru_rank = 0;
    }

    /// Perform one reference at time `now`. Expirations due by `now` are applied first.
    pub fn access(
        &mut self,
        rec: &TraceRecord,
        now: f64,
    ) -> Result<(AccessOutcome, Vec<ExpirationEvent>), CacheError> {
        let expirations = self.advance_time(now)?;
        let outcome = self.access_at_current_time(rec.op, rec.address)?;
        Ok((outcome, expirations))
    }

    /// Perform one reference at the cache's current time; `advance_time` must already
    /// have been applied for this instant.
    pub fn access_at_current_time(
        &mut self,
        op: Op,
        address: u64,
    ) -> Result<AccessOutcome, CacheError> {
        let set = self.geometry.set_index(address);
        let tag = self.geometry.tag(address);
        let base = set * self.ways;
        let now = self.now;

        if let Some(way) = self
            .set_frames(set)
            .iter()
            .position(|f| f.valid && f.tag == tag)
        {
            let idx = base + way;
            if op == Op::Read {
                let age = now - self.frames[idx].last_write_time;
                let limit = self.retention.hit_age_limit();
                if age > limit {
                    return Err(CacheError::RetentionViolation { age, limit });
                }
            }
            self.touch(set, way);
            if op == Op::Write {
                let f = &mut self.frames[idx];
                f.dirty = true;
                f.last_write_time = now;
                f.generation += 1;
                self.schedule(idx);
            }
            return Ok(AccessOutcome {
                kind: if op == Op::Write {
                    AccessKind::WriteHit
                } else {
                    AccessKind::ReadHit
                },
                caused_writeback: false,
                expired_before_access: false,
                victim: None,
            });
        }

        let expired_before_access = self
            .set_frames(set)
            .iter()
            .any(|f| !f.valid && f.expired && f.tag == tag);

        let frames = self.set_frames(set);
        let way = match frames.iter().position(|f| !f.valid) {
            Some(w) => w,
            None => frames
                .iter()
                .enumerate()
                .max_by_key(|(_, f)| f.lru_rank)
                .map(|(w, _)| w)
                .expect("at least one way"),
        };
        let idx = base + way;
        let old = self.frames[idx];
        let (caused_writeback, victim) = if old.valid {
            let victim = self.block_of(set, old.tag);
            self.invalidate_frame(set, way);
            (old.dirty, Some(victim))
        } else {
            (false, None)
        };

        for f in &mut self.frames[base..base + self.ways] {
            if f.valid {
                f.lru_rank += 1;
            }
        }
        let generation = self.frames[idx].generation + 1;
        self.frames[idx] = BlockFrame {
            valid: true,
            dirty: op == Op::Write,
            tag,
            lru_rank: 0,
            last_write_time: now,
            expired: false,
            generation,
        };
        self.schedule(idx);

        Ok(AccessOutcome {
            kind: if op == Op::Write {
                AccessKind::WriteMiss
            } else {
                AccessKind::ReadMiss
            },
            caused_writeback,
            expired_before_access,
            victim,
        })
    }

    /// Invalidate every frame, returning the dirty ones as writebacks.
    pub fn flush(&mut self) -> Vec<WritebackEvent> {
        let mut out = Vec::new();
        for set in 0..self.num_sets {
            for way in 0..self.ways {
                let f = self.frames[set * self.ways + way];
                if f.valid && f.dirty {
                    out.push(WritebackEvent {
                        set,
                        way,
                        block: self.block_of(set, f.tag),
                    });
                }
                let g = f.generation + 1;
                self.frames[set * self.ways + way] = BlockFrame {
                    generation: g,
                    ..BlockFrame::EMPTY
                };
            }
        }
        self.heap.clear();
        out
    }

    /// Move the cache contents into an array with different retention. Every
    /// resident block is rewritten at the current time, so its counter restarts.
    /// Returns the number of blocks moved.
    pub fn migrate(&mut self, retention: Retention) -> usize {
        self.retention = retention;
        self.heap.clear();
        let now = self.now;
        let mut moved = 0;
        for idx in 0..self.frames.len() {
            let f = &mut self.frames[idx];
            f.expired = false;
            if f.valid {
                f.last_write_time = now;
                f.generation += 1;
                moved += 1;
                self.schedule(idx);
            }
        }
        moved
    }

    /// Switch to an array with different retention, discarding the contents.
    pub fn switch_cold(&mut self, retention: Retention) -> Vec<WritebackEvent> {
        let wbs = self.flush();
        self.retention = retention;
        wbs
    }

    /// Check that valid LRU ranks in every set form a permutation of 0..k.
    pub fn lru_ranks_consistent(&self) -> bool {
        (0..self.num_sets).all(|s| {
            let mut ranks: Vec<u32> = self
                .set_frames(s)
                .iter()
                .filter(|f| f.valid)
                .map(|f| f.lru_rank)
                .collect();
            ranks.sort_unstable();
            ranks.iter().enumerate().all(|(i, &r)| r as usize == i)
        })
    }
}
