//! Pointer-chase workload: blocks are linked into one shuffled cycle and
//! walked `iterations` times, optionally dirtying each line after its load.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::{AccessOutcome, SlicedCache};
use super::trace::{MemoryTrace, Op};
use crate::error::SimError;

/// Ticks charged to a line fill in the emitted trace.
pub const FILL_TICKS: u64 = 15;
/// Ticks charged to a write-back, before the idle gap is added.
pub const WRITEBACK_TICKS: u64 = 600;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadConfig {
    pub block_addresses: Vec<u64>,
    pub shuffle_seed: u64,
    /// Number of pointer-chase steps.
    pub iterations: u64,
    pub dirty_writes: bool,
    pub idle_gap: u64,
}

impl WorkloadConfig {
    /// A workload that walks the chain `laps` full times.
    pub fn laps(block_addresses: Vec<u64>, laps: u64, shuffle_seed: u64) -> Self {
        let iterations = block_addresses.len() as u64 * laps;
        Self {
            block_addresses,
            shuffle_seed,
            iterations,
            dirty_writes: true,
            idle_gap: 1000,
        }
    }

    pub fn with_dirty_writes(mut self, dirty: bool) -> Self {
        self.dirty_writes = dirty;
        self
    }

    pub fn with_idle_gap(mut self, idle_gap: u64) -> Self {
        self.idle_gap = idle_gap;
        self
    }
}

/// Ways to describe the blocks of a workload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AddressSpec {
    /// Explicit addresses.
    List { addresses: Vec<u64> },
    /// `base + i * stride` for `i < count`.
    Stride { base: u64, stride: u64, count: u64 },
    /// `base` with every combination of the listed bit positions set.
    Bits { base: u64, bits: Vec<u32> },
}

impl AddressSpec {
    pub fn generate(&self) -> Result<Vec<u64>, SimError> {
        match self {
            AddressSpec::List { addresses } => Ok(addresses.clone()),
            AddressSpec::Stride {
                base,
                stride,
                count,
            } => {
                if *stride == 0 && *count > 1 {
                    return Err(SimError::InvalidWorkload("zero stride".into()));
                }
                (0..*count)
                    .map(|i| {
                        i.checked_mul(*stride)
                            .and_then(|off| base.checked_add(off))
                            .ok_or_else(|| SimError::InvalidWorkload("stride overflows".into()))
                    })
                    .collect()
            }
            AddressSpec::Bits { base, bits } => {
                let unique: BTreeSet<u32> = bits.iter().copied().collect();
                if unique.len() != bits.len() || bits.iter().any(|&b| b >= 63) || bits.len() > 24 {
                    return Err(SimError::InvalidWorkload(format!("bad bit list {bits:?}")));
                }
                if bits.iter().any(|&b| base >> b & 1 == 1) {
                    return Err(SimError::InvalidWorkload(
                        "base already has a combination bit set".into(),
                    ));
                }
                Ok((0..1u64 << bits.len())
                    .map(|combo| {
                        bits.iter()
                            .enumerate()
                            .filter(|(i, _)| combo >> i & 1 == 1)
                            .fold(*base, |acc, (_, &b)| acc | 1 << b)
                    })
                    .collect())
            }
        }
    }
}

/// Access order of the pointer chase: a shuffled cyclic permutation of the
/// block addresses (the last block links back to the first).
pub fn build_chain(config: &WorkloadConfig) -> Result<Vec<u64>, SimError> {
    if config.block_addresses.is_empty() {
        return Err(SimError::EmptyWorkload);
    }
    let mut seen = BTreeSet::new();
    for &a in &config.block_addresses {
        if !seen.insert(a) {
            return Err(SimError::DuplicateAddress(a));
        }
    }
    let mut order = config.block_addresses.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    order.shuffle(&mut rng);
    Ok(order)
}

/// The initialized array contents: each block holds the address of the next.
pub fn chain_links(order: &[u64]) -> BTreeMap<u64, u64> {
    order
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, order[(i + 1) % order.len()]))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkloadStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub write_backs: u64,
    /// Counters restricted to accesses after the first full lap.
    pub steady_accesses: u64,
    pub steady_hits: u64,
    pub steady_misses: u64,
}

impl WorkloadStats {
    pub fn steady_miss_rate(&self) -> Option<f64> {
        (self.steady_accesses > 0).then(|| self.steady_misses as f64 / self.steady_accesses as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct WorkloadRun {
    pub trace: MemoryTrace,
    pub stats: WorkloadStats,
}

/// Walk the chain on `cache`, appending memory-controller events to `trace`.
///
/// Each miss emits a read fill; a dirty victim emits a write-back. With a
/// non-zero idle gap the write-back directly follows its fill; without one
/// it drains only after the next fill.
pub fn run_workload_into(
    cache: &mut SlicedCache,
    config: &WorkloadConfig,
    trace: &mut MemoryTrace,
) -> Result<WorkloadStats, SimError> {
    let order = build_chain(config)?;
    for &a in &order {
        if !cache.geometry().is_line_aligned(a) {
            return Err(SimError::Unaligned(a));
        }
    }
    let lap = order.len() as u64;
    let mut stats = WorkloadStats::default();
    let mut pending: Option<u64> = None;
    for step in 0..config.iterations {
        let address = order[(step % lap) as usize];
        let outcome = cache.access(address, config.dirty_writes)?;
        let steady = step >= lap;
        stats.accesses += 1;
        stats.steady_accesses += steady as u64;
        match outcome {
            AccessOutcome::Hit => {
                stats.hits += 1;
                stats.steady_hits += steady as u64;
            }
            AccessOutcome::Miss { evicted } => {
                stats.misses += 1;
                stats.steady_misses += steady as u64;
                trace.push(Op::Read, address, FILL_TICKS);
                if let Some(victim) = pending.take() {
                    trace.push(Op::Write, victim, WRITEBACK_TICKS + config.idle_gap);
                }
                if let Some(e) = evicted.filter(|e| e.was_dirty) {
                    stats.write_backs += 1;
                    if config.idle_gap > 0 {
                        trace.push(Op::Write, e.address, WRITEBACK_TICKS + config.idle_gap);
                    } else {
                        pending = Some(e.address);
                    }
                }
            }
        }
    }
    if let Some(victim) = pending {
        trace.push(Op::Write, victim, WRITEBACK_TICKS + config.idle_gap);
    }
    Ok(stats)
}

pub fn run_workload(
    cache: &mut SlicedCache,
    config: &WorkloadConfig,
) -> Result<WorkloadRun, SimError> {
    let mut trace = MemoryTrace::new();
    let stats = run_workload_into(cache, config, &mut trace)?;
    Ok(WorkloadRun { trace, stats })
}
