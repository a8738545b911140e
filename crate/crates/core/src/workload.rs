//! Synthetic workloads with controlled block lifetimes.
//!
//! A fixed number of concurrent "slots" each run a sequence of block
//! residencies. A residency picks a fresh cache line, draws a lifetime, touches
//! the line at its start, re-touches it every drawn inter-access gap while the
//! lifetime lasts, touches it one final time when the lifetime ends, and then
//! retires the line for good. Touches from all slots are merged in time order.
//! Lines are handed out from a seeded permutation of the working set, so a
//! line is only reused after every other line has been used once.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Op, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
}

/// A distribution over non-negative reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
}

impl Dist {
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { low, high } => 0.5 * (low + high),
            Dist::Exponential { mean } => mean,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            Dist::Exponential { mean } => {
                if mean > 0.0 {
                    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), WorkloadError> {
        let ok = match *self {
            Dist::Fixed { value } => value.is_finite() && value >= 0.0,
            Dist::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low >= 0.0 && high >= low
            }
            Dist::Exponential { mean } => mean.is_finite() && mean >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::Invalid(format!(
                "{name}: bad distribution {self:?}"
            )))
        }
    }

    /// Parse `fixed:V`, `uniform:LO:HI` or `exp:MEAN`. Values go through `scale`
    /// so callers can accept durations (`exp:5ms`) as well as plain numbers.
    pub fn parse_with(text: &str, scale: impl Fn(&str) -> Option<f64>) -> Option<Dist> {
        let mut parts = text.split(':');
        let kind = parts.next()?;
        let mut next = || parts.next().and_then(&scale);
        let d = match kind {
            "fixed" => Dist::Fixed { value: next()? },
            "uniform" => Dist::Uniform {
                low: next()?,
                high: next()?,
            },
            "exp" | "exponential" => Dist::Exponential { mean: next()? },
            _ => return None,
        };
        Some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Concurrently live blocks.
    pub num_blocks: usize,
    pub working_set_bytes: u64,
    #[serde(default = "default_line")]
    pub line_size_bytes: u64,
    pub write_fraction: f64,
    /// Instructions between successive touches of one block.
    pub inter_access_gap: Dist,
    /// Seconds between a residency's first and last touch.
    pub reuse_lifetime: Dist,
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    pub seed: u64,
    /// Number of records to emit.
    pub length: usize,
}

fn default_line() -> u64 {
    64
}
fn default_frequency() -> f64 {
    2e9
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Invalid(m.to_string()));
        if self.line_size_bytes == 0 || !self.line_size_bytes.is_power_of_two() {
            return bad("line size must be a power of two");
        }
        if self.working_set_bytes < self.line_size_bytes {
            return bad("working set is smaller than one line");
        }
        if self.num_blocks == 0 {
            return bad("num_blocks must be at least 1");
        }
        if (self.num_blocks as u64) > self.working_set_bytes / self.line_size_bytes {
            return bad("more live blocks than lines in the working set");
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return bad("write_fraction must lie in [0, 1]");
        }
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return bad("frequency must be positive");
        }
        self.inter_access_gap.validate("inter_access_gap")?;
        self.reuse_lifetime.validate("reuse_lifetime")?;
        Ok(())
    }

    pub fn num_lines(&self) -> u64 {
        self.working_set_bytes / self.line_size_bytes
    }
}

/// Pending touch of one slot's current residency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    icount: u64,
    slot: usize,
}

#[derive(Debug, Clone, Copy)]
struct Residency {
    line: u64,
    end: u64,
}

/// Iterator over the records of a [`WorkloadSpec`].
pub struct TraceGenerator {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    lines: Vec<u64>,
    next_line: usize,
    slots: Vec<Residency>,
    queue: BinaryHeap<Reverse<Pending>>,
    emitted: usize,
}

impl TraceGenerator {
    pub fn new(spec: WorkloadSpec) -> Result<Self, WorkloadError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut lines: Vec<u64> = (0..spec.num_lines()).collect();
        lines.shuffle(&mut rng);
        let mut g = Self {
            spec,
            rng,
            lines,
            next_line: 0,
            slots: Vec::new(),
            queue: BinaryHeap::new(),
            emitted: 0,
        };
        for slot in 0..g.spec.num_blocks {
            // Stagger slot starts so the first touches are not all at icount 0.
            let start = g.draw_gap().saturating_sub(1);
            let r = g.start_residency(start);
            g.slots.push(r);
            g.queue.push(Reverse(Pending {
                icount: start,
                slot,
            }));
        }
        Ok(g)
    }

    fn draw_gap(&mut self) -> u64 {
        let g = self.spec.inter_access_gap.sample(&mut self.rng).round();
        (g as u64).max(1)
    }

    fn start_residency(&mut self, start: u64) -> Residency {
        let line = self.lines[self.next_line];
        self.next_line = (self.next_line + 1) % self.lines.len();
        let life_s = self.spec.reuse_lifetime.sample(&mut self.rng);
        let life = (life_s * self.spec.frequency_hz).round() as u64;
        Residency {
            line,
            end: start + life,
        }
    }

    fn op(&mut self) -> Op {
        if self.spec.write_fraction > 0.0 && self.rng.random::<f64>() < self.spec.write_fraction {
            Op::Write
        } else {
            Op::Read
        }
    }
}

impl Iterator for TraceGenerator {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        if self.emitted >= self.spec.length {
            return None;
        }
        let Reverse(Pending { icount, slot }) = self.queue.pop()?;
        let res = self.slots[slot];
        let offset = self.rng.random_range(0..self.spec.line_size_bytes);
        let address = res.line * self.spec.line_size_bytes + offset;
        let op = self.op();

        let next = if icount >= res.end {
            // Residency over: a fresh line starts after one more gap.
            let start = icount + self.draw_gap();
            self.slots[slot] = self.start_residency(start);
            start
        } else {
            (icount + self.draw_gap()).min(res.end)
        };
        self.queue.push(Reverse(Pending { icount: next, slot }));
        self.emitted += 1;
        Some(TraceRecord {
            icount,
            op,
            address,
            cycle: None,
        })
    }
}

pub fn generate_trace(spec: &WorkloadSpec) -> Result<Vec<TraceRecord>, WorkloadError> {
    Ok(TraceGenerator::new(spec.clone())?.collect())
}
