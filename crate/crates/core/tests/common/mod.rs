//! Reference models used by the integration tests. They are written
//! independently of the simulator: plain per-set arrays, timestamps for LRU,
//! and explicit stepping instead of event queues.
#![allow(dead_code)]

use lars_core::trace::{Op, TraceRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FREQ: f64 = 2e9;
pub const SETS: u64 = 128;
pub const WAYS: usize = 4;
pub const LINE: u64 = 64;

/// Table values for the four STT-RAM units (100 ms, 10 ms, 1 ms, 100 us) and SRAM.
pub struct Row {
    pub retention: f64,
    pub read: f64,
    pub write: f64,
    pub hit: u64,
    pub write_lat: u64,
    pub leak_mw: f64,
}

pub const STT: [Row; 4] = [
    Row {
        retention: 100e-3,
        read: 0.011,
        write: 0.101,
        hit: 2,
        write_lat: 7,
        leak_mw: 1.753,
    },
    Row {
        retention: 10e-3,
        read: 0.011,
        write: 0.076,
        hit: 2,
        write_lat: 5,
        leak_mw: 1.753,
    },
    Row {
        retention: 1e-3,
        read: 0.012,
        write: 0.056,
        hit: 2,
        write_lat: 4,
        leak_mw: 1.753,
    },
    Row {
        retention: 100e-6,
        read: 0.012,
        write: 0.040,
        hit: 2,
        write_lat: 3,
        leak_mw: 1.753,
    },
];
pub const SRAM: Row = Row {
    retention: f64::INFINITY,
    read: 0.033,
    write: 0.033,
    hit: 3,
    write_lat: 3,
    leak_mw: 38.021,
};
pub const MISS_PENALTY: u64 = 100;
pub const BUFFER_LEAK_MW: f64 = 1.0;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub read_hits: u64,
    pub write_hits: u64,
    pub read_misses: u64,
    pub write_misses: u64,
    pub writebacks: u64,
    pub expiration_misses: u64,
    pub cycles: u64,
}

fn set_of(addr: u64) -> usize {
    ((addr / LINE) % SETS) as usize
}

fn block_of(addr: u64) -> u64 {
    addr / LINE
}

fn time_of(r: &TraceRecord) -> f64 {
    r.cycle.unwrap_or(r.icount) as f64 / FREQ
}

/// Textbook LRU write-back write-allocate cache, most recently used first.
pub fn lru_oracle(records: &[TraceRecord], row: &Row) -> Counts {
    let mut sets: Vec<Vec<(u64, bool)>> = vec![Vec::new(); SETS as usize];
    let mut c = Counts::default();
    for r in records {
        let set = &mut sets[set_of(r.address)];
        let b = block_of(r.address);
        let write = r.op == Op::Write;
        if let Some(pos) = set.iter().position(|e| e.0 == b) {
            let mut e = set.remove(pos);
            e.1 |= write;
            set.insert(0, e);
            if write {
                c.write_hits += 1;
                c.cycles += row.write_lat;
            } else {
                c.read_hits += 1;
                c.cycles += row.hit;
            }
        } else {
            if set.len() == WAYS {
                let (_, dirty) = set.pop().unwrap();
                if dirty {
                    c.writebacks += 1;
                }
            }
            set.insert(0, (b, write));
            if write {
                c.write_misses += 1;
            } else {
                c.read_misses += 1;
            }
            c.cycles += MISS_PENALTY + row.write_lat;
        }
    }
    c
}

/// Refreshes a perfect refresh scheme performs: the cache behaves like plain
/// LRU, and every resident block is refreshed at each whole retention period
/// after its last write, counted when a later access to it shows it was needed.
pub fn refresh_oracle(records: &[TraceRecord], retention: f64) -> u64 {
    // (block, epoch start, refreshes already counted in this epoch)
    let mut sets: Vec<Vec<(u64, f64, u64)>> = vec![Vec::new(); SETS as usize];
    let mut total = 0;
    for r in records {
        let t = time_of(r);
        let set = &mut sets[set_of(r.address)];
        let b = block_of(r.address);
        if let Some(pos) = set.iter().position(|e| e.0 == b) {
            let mut e = set.remove(pos);
            while e.1 + (e.2 + 1) as f64 * retention < t {
                e.2 += 1;
                total += 1;
            }
            if r.op == Op::Write {
                e.1 = t;
                e.2 = 0;
            }
            set.insert(0, e);
        } else {
            if set.len() == WAYS {
                set.pop();
            }
            set.insert(0, (b, t, 0));
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub hit: bool,
    pub writeback: bool,
    pub expired_before_access: bool,
}

#[derive(Clone, Copy, Default)]
struct Frame {
    valid: bool,
    block: u64,
    dirty: bool,
    stamp: u64,
    written: f64,
    /// Monitor counter: whole ticks since the last write.
    counter: u64,
    write_tick: u64,
    ghost: Option<u64>,
}

/// Retention model stepped one monitor tick at a time (quantized) or checked
/// against exact ages at every access (exact).
pub struct FsmOracle {
    frames: Vec<[Frame; WAYS]>,
    retention: f64,
    divisor: u64,
    exact: bool,
    tick: u64,
    clock: u64,
    pub expiry_writebacks: u64,
    pub last_write: std::collections::HashMap<u64, f64>,
}

const TICK_EPS: f64 = 1e-6;

impl FsmOracle {
    pub fn new(retention: f64, divisor: u64, exact: bool) -> Self {
        Self {
            frames: vec![[Frame::default(); WAYS]; SETS as usize],
            retention,
            divisor,
            exact,
            tick: 0,
            clock: 0,
            expiry_writebacks: 0,
            last_write: Default::default(),
        }
    }

    fn period(&self) -> f64 {
        self.retention / self.divisor as f64
    }

    fn tick_at(&self, t: f64) -> u64 {
        (t / self.period() + TICK_EPS).floor() as u64
    }

    fn expire(f: &mut Frame, wb: &mut u64) {
        if f.dirty {
            *wb += 1;
        }
        f.ghost = Some(f.block);
        f.valid = false;
        f.dirty = false;
    }

    fn advance(&mut self, t: f64) {
        if self.exact {
            for set in &mut self.frames {
                for f in set.iter_mut().filter(|f| f.valid) {
                    if t - f.written > self.retention {
                        Self::expire(f, &mut self.expiry_writebacks);
                    }
                }
            }
            return;
        }
        let target = self.tick_at(t);
        while self.tick < target {
            // Ticks where no counter can saturate change nothing; jump over them.
            let next = self
                .frames
                .iter()
                .flatten()
                .filter(|f| f.valid)
                .map(|f| f.write_tick + self.divisor - 1)
                .min()
                .unwrap_or(target);
            self.tick = (self.tick + 1).max(next.min(target));
            for set in &mut self.frames {
                for f in set.iter_mut().filter(|f| f.valid) {
                    f.counter = self.tick.saturating_sub(f.write_tick).min(self.divisor);
                    if f.counter >= self.divisor - 1 {
                        Self::expire(f, &mut self.expiry_writebacks);
                    }
                }
            }
        }
    }

    pub fn access(&mut self, r: &TraceRecord) -> Outcome {
        let t = time_of(r);
        self.advance(t);
        self.clock += 1;
        let stamp = self.clock;
        let write = r.op == Op::Write;
        let b = block_of(r.address);
        let tick = if self.exact { 0 } else { self.tick_at(t) };
        let set = &mut self.frames[set_of(r.address)];
        if let Some(f) = set.iter_mut().find(|f| f.valid && f.block == b) {
            f.stamp = stamp;
            if write {
                f.dirty = true;
                f.written = t;
                f.write_tick = tick;
                f.counter = 0;
                self.last_write.insert(b, t);
            }
            return Outcome {
                hit: true,
                writeback: false,
                expired_before_access: false,
            };
        }
        let expired_before_access = set.iter().any(|f| !f.valid && f.ghost == Some(b));
        let way = set
            .iter()
            .position(|f| !f.valid)
            .unwrap_or_else(|| (0..WAYS).min_by_key(|&w| set[w].stamp).unwrap());
        let writeback = set[way].valid && set[way].dirty;
        set[way] = Frame {
            valid: true,
            block: b,
            dirty: write,
            stamp,
            written: t,
            counter: 0,
            write_tick: tick,
            ghost: None,
        };
        self.last_write.insert(b, t);
        Outcome {
            hit: false,
            writeback,
            expired_before_access,
        }
    }

    pub fn dirty_lines(&self) -> u64 {
        self.frames
            .iter()
            .flatten()
            .filter(|f| f.valid && f.dirty)
            .count() as u64
    }
}

/// Energy from event counts and the table above, written out term by term.
#[allow(clippy::too_many_arguments)]
pub fn energy_oracle(
    row: &Row,
    reads: u64,
    writes: u64,
    misses: u64,
    writebacks: u64,
    refreshes: u64,
    cycles: u64,
    buffered: bool,
) -> (f64, f64) {
    let dynamic = reads as f64 * row.read
        + writes as f64 * row.write
        + misses as f64 * row.write
        + writebacks as f64 * row.read;
    let seconds = cycles as f64 / FREQ;
    let leak = row.leak_mw + if buffered { BUFFER_LEAK_MW } else { 0.0 };
    // mW * s = mJ = 1e6 nJ
    let stat = leak * seconds * 1e6;
    let refresh = refreshes as f64 * (row.read + SRAM.write + SRAM.read + row.write);
    let total = dynamic + stat + refresh;
    (total, total * seconds)
}

/// Random trace mixing tight reuse, conflict misses and idle gaps that span
/// every retention in the table.
pub fn random_trace(seed: u64, max_len: usize) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..=max_len);
    let lines = rng.random_range(4..=2048u64);
    let write_p = rng.random_range(0.0..0.9);
    let mut icount = 0u64;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        icount += match rng.random_range(0..100) {
            0..=59 => rng.random_range(0..200),
            60..=79 => rng.random_range(0..40_000),
            80..=87 => rng.random_range(0..400_000),
            // Whole monitor periods and retentions, to land on boundaries.
            88..=97 => {
                [20_000, 200_000, 2_000_000, 20_000_000][rng.random_range(0..4)]
                    * rng.random_range(0..12)
            }
            _ => rng.random_range(0..30_000_000),
        };
        let line = rng.random_range(0..lines);
        let address = line * LINE + rng.random_range(0..LINE);
        out.push(if rng.random_bool(write_p) {
            TraceRecord::write(icount, address)
        } else {
            TraceRecord::read(icount, address)
        });
    }
    out
}

/// Few lines and gaps that are whole monitor periods, so accesses keep
/// landing exactly on expiry and refresh instants.
pub fn boundary_trace(seed: u64, len: usize) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = [20_000u64, 200_000, 2_000_000][rng.random_range(0..3)];
    let mut icount = 0;
    (0..len)
        .map(|_| {
            icount += period * rng.random_range(0..=11);
            let address = rng.random_range(0..6u64) * SETS * LINE;
            if rng.random_bool(0.3) {
                TraceRecord::write(icount, address)
            } else {
                TraceRecord::read(icount, address)
            }
        })
        .collect()
}
