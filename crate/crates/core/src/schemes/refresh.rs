//! Residency logging and perfect-refresh counting for the refresh-based schemes.
//!
//! A residency is one stay of a block in the cache, from fill to eviction (or
//! end of run). It is split into write epochs: the fill opens the first epoch
//! and every later write closes the current epoch and opens a new one. The
//! closing write is the epoch's final access, because a partial-line write
//! needs the rest of the line to still be intact.
//!
//! A perfect refresh scheme rewrites a block each time a whole retention period
//! has passed since the epoch started, but only when the block is accessed
//! again afterwards. Refresh instants are aligned to the epoch start.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("retention must be positive and finite, got {0}")]
    BadRetention(f64),
    #[error("residency of block {block:#x}: {reason}")]
    Malformed { block: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: f64,
    /// Time of the last access that needs this epoch's data, including the
    /// write that closes the epoch.
    pub last_access: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residency {
    pub block: u64,
    pub insert_time: f64,
    pub epochs: Vec<Epoch>,
    pub last_access_time: f64,
    pub evict_time: f64,
}

impl Residency {
    fn check(&self) -> Result<(), LogError> {
        let bad = |reason: &str| {
            Err(LogError::Malformed {
                block: self.block,
                reason: reason.to_string(),
            })
        };
        if !(self.insert_time <= self.last_access_time && self.last_access_time <= self.evict_time)
        {
            return bad("expected insert <= last access <= evict");
        }
        match self.epochs.first() {
            None => return bad("no epochs"),
            Some(e) if e.start != self.insert_time => {
                return bad("first epoch must start at insert")
            }
            _ => {}
        }
        let mut prev = self.insert_time;
        for e in &self.epochs {
            if e.start < prev || e.last_access < e.start || e.last_access > self.last_access_time {
                return bad("epochs out of order");
            }
            prev = e.start;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidencyLog {
    pub residencies: Vec<Residency>,
}

/// Number of refresh instants `start + k * retention` (k >= 1) strictly before `last`.
fn refreshes_in(start: f64, last: f64, retention: f64) -> u64 {
    if last <= start {
        return 0;
    }
    let mut k = ((last - start) / retention).ceil() as u64;
    // Settle rounding at exact multiples against the instant expression itself.
    while k > 0 && start + k as f64 * retention >= last {
        k -= 1;
    }
    while start + (k + 1) as f64 * retention < last {
        k += 1;
    }
    k
}

/// Refreshes a perfect refresh scheme needs over a completed log.
pub fn count_perfect_refreshes(log: &ResidencyLog, retention: f64) -> Result<u64, LogError> {
    if !(retention.is_finite() && retention > 0.0) {
        return Err(LogError::BadRetention(retention));
    }
    let mut total = 0;
    for r in &log.residencies {
        r.check()?;
        total += r
            .epochs
            .iter()
            .map(|e| refreshes_in(e.start, e.last_access, retention))
            .sum::<u64>();
    }
    Ok(total)
}

/// Builds a [`ResidencyLog`] from a stream of cache events.
#[derive(Debug, Default)]
pub struct ResidencyTracker {
    open: HashMap<u64, Residency>,
    log: ResidencyLog,
}

impl ResidencyTracker {
    pub fn fill(&mut self, block: u64, now: f64) {
        self.open.insert(
            block,
            Residency {
                block,
                insert_time: now,
                epochs: vec![Epoch {
                    start: now,
                    last_access: now,
                }],
                last_access_time: now,
                evict_time: now,
            },
        );
    }

    pub fn hit(&mut self, block: u64, now: f64, write: bool) {
        if let Some(r) = self.open.get_mut(&block) {
            r.last_access_time = now;
            let cur = r.epochs.last_mut().expect("open residency has an epoch");
            cur.last_access = now;
            if write {
                r.epochs.push(Epoch {
                    start: now,
                    last_access: now,
                });
            }
        }
    }

    pub fn evict(&mut self, block: u64, now: f64) {
        if let Some(mut r) = self.open.remove(&block) {
            r.evict_time = now;
            self.log.residencies.push(r);
        }
    }

    /// Close every open residency at `end` and return the log, ordered by insert time.
    pub fn finish(mut self, end: f64) -> ResidencyLog {
        let mut rest: Vec<Residency> = self.open.into_values().collect();
        rest.sort_by(|a, b| {
            a.insert_time
                .total_cmp(&b.insert_time)
                .then(a.block.cmp(&b.block))
        });
        for mut r in rest {
            r.evict_time = end.max(r.last_access_time);
            self.log.residencies.push(r);
        }
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: f64 = 1e-3;

    fn single(last: f64, evict: f64) -> ResidencyLog {
        ResidencyLog {
            residencies: vec![Residency {
                block: 1,
                insert_time: 0.0,
                epochs: vec![Epoch {
                    start: 0.0,
                    last_access: last,
                }],
                last_access_time: last,
                evict_time: evict,
            }],
        }
    }

    #[test]
    fn counts_needed_refreshes_only() {
        assert_eq!(
            count_perfect_refreshes(&single(25.0 * MS, 25.0 * MS), 10.0 * MS).unwrap(),
            2
        );
        assert_eq!(
            count_perfect_refreshes(&single(9.0 * MS, 25.0 * MS), 10.0 * MS).unwrap(),
            0
        );
        assert_eq!(
            count_perfect_refreshes(&single(5.0 * MS, 5.0 * MS), 10.0 * MS).unwrap(),
            0
        );
        // An access exactly at a refresh instant does not need that refresh.
        assert_eq!(
            count_perfect_refreshes(&single(20.0 * MS, 30.0 * MS), 10.0 * MS).unwrap(),
            1
        );
    }

    #[test]
    fn rejects_malformed_logs() {
        assert!(count_perfect_refreshes(&single(1.0, 0.5), 0.1).is_err());
        assert!(count_perfect_refreshes(&single(1.0, 1.0), 0.0).is_err());
        let mut log = single(1.0, 1.0);
        log.residencies[0].epochs.clear();
        assert!(count_perfect_refreshes(&log, 0.1).is_err());
    }

    #[test]
    fn tracker_splits_epochs_on_writes() {
        let mut t = ResidencyTracker::default();
        t.fill(7, 0.0);
        t.hit(7, 15.0 * MS, false);
        t.hit(7, 18.0 * MS, true);
        t.hit(7, 40.0 * MS, false);
        t.evict(7, 41.0 * MS);
        let log = t.finish(50.0 * MS);
        let r = &log.residencies[0];
        assert_eq!(r.epochs.len(), 2);
        assert_eq!(r.epochs[0].last_access, 18.0 * MS);
        assert_eq!(r.evict_time, 41.0 * MS);
        // epoch 0: 10 ms < 18 ms -> 1; epoch 1 (18..40): 28 and 38 ms -> 2
        assert_eq!(count_perfect_refreshes(&log, 10.0 * MS).unwrap(), 3);
    }
}
