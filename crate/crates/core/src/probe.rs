//! Timing-only classification: eviction sets are found and blocks sorted
//! into slice groups using nothing but average-latency measurements.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ModelError, ProbeError};
use crate::geometry::CacheGeometry;
use crate::graph::BlockGroups;
use crate::hash::SliceHash;
use crate::latency::LatencyModel;

/// Something that reports the average latency of a pointer chase.
///
/// `active` is every block kept live in the cache during the measurement
/// (both threads, in the two-thread experiment); the reported latency is
/// averaged over the `timed` subset only.
pub trait LatencyOracle {
    fn geometry(&self) -> &CacheGeometry;
    fn model(&self) -> &LatencyModel;
    fn sample(&mut self, active: &[u64], timed: &[u64]) -> Result<f64, ProbeError>;
    /// Number of samples taken so far.
    fn calls(&self) -> u64;
}

/// Threshold for a measurement averaged over `n` blocks: half the smallest
/// possible overflow, one set holding `N + 1` blocks that each pay
/// `L_mem / N` extra. At `n = N + 1` this is `L_LLC + 0.5 * L_mem / N`.
pub fn threshold(model: &LatencyModel, ways: usize, n: usize) -> f64 {
    let ways = ways as f64;
    model.l_llc + 0.5 * (ways + 1.0) * model.l_memory / (ways * n.max(1) as f64)
}

/// Threshold for a measurement whose timed blocks all share one set:
/// `L_LLC + 0.5 * L_mem / N`.
pub fn single_set_threshold(model: &LatencyModel, ways: usize) -> f64 {
    model.l_llc + 0.5 * model.l_memory / ways as f64
}

fn check_blocks(geom: &CacheGeometry, blocks: &[u64]) -> Result<(), ProbeError> {
    for &b in blocks {
        geom.check_address(b)?;
        if !geom.is_line_aligned(b) {
            return Err(ProbeError::InvalidArgument(format!(
                "block {b:#x} is not line aligned"
            )));
        }
    }
    Ok(())
}

/// Mean of the per-bucket latencies over `timed`, given bucket occupancies.
fn bucket_mean<K: Ord>(
    model: &LatencyModel,
    ways: usize,
    occupancy: &BTreeMap<K, u64>,
    timed: &[K],
) -> f64 {
    let sum: f64 = timed
        .iter()
        .map(|k| model.expected(occupancy[k], ways))
        .sum();
    sum / timed.len() as f64
}

/// Seeded jitter for one sample: the mean of `accesses` per-access draws.
fn jitter(model: &LatencyModel, call: u64, accesses: u64) -> f64 {
    if model.noise_stddev == 0.0 {
        return 0.0;
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(model.rng_seed ^ call.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let sd = model.noise_stddev / (accesses.max(1) as f64).sqrt();
    Normal::new(0.0, sd)
        .expect("validated stddev")
        .sample(&mut rng)
}

/// Desk-mode oracle: blocks are bucketed by (slice, set) under a planted
/// hash and each bucket is charged the analytic latency of its occupancy.
#[derive(Debug, Clone)]
pub struct DeskOracle {
    geom: CacheGeometry,
    hash: SliceHash,
    model: LatencyModel,
    /// Timed laps per sample; noise averages over `blocks * laps` accesses.
    laps: u64,
    calls: u64,
}

impl DeskOracle {
    pub fn new(
        geom: CacheGeometry,
        hash: SliceHash,
        model: LatencyModel,
        laps: u64,
    ) -> Result<Self, ProbeError> {
        hash.validate(&geom)?;
        model.validate()?;
        if laps == 0 {
            return Err(ProbeError::InvalidArgument("laps must be positive".into()));
        }
        Ok(Self {
            geom,
            hash,
            model,
            laps,
            calls: 0,
        })
    }

    pub fn hash(&self) -> &SliceHash {
        &self.hash
    }
}

impl LatencyOracle for DeskOracle {
    fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    fn model(&self) -> &LatencyModel {
        &self.model
    }

    fn sample(&mut self, active: &[u64], timed: &[u64]) -> Result<f64, ProbeError> {
        if timed.is_empty() {
            return Err(ProbeError::InvalidArgument("nothing to time".into()));
        }
        check_blocks(&self.geom, active)?;
        check_blocks(&self.geom, timed)?;
        let mut occupancy: BTreeMap<(u32, u64), u64> = BTreeMap::new();
        for &b in active {
            *occupancy
                .entry(self.hash.location(b, &self.geom)?)
                .or_default() += 1;
        }
        let keys = timed
            .iter()
            .map(|&b| {
                let loc = self.hash.location(b, &self.geom)?;
                if !occupancy.contains_key(&loc) {
                    return Err(ModelError::InvalidArgument(format!(
                        "timed block {b:#x} is not active"
                    )));
                }
                Ok(loc)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        self.calls += 1;
        let mean = bucket_mean(&self.model, self.geom.associativity(), &occupancy, &keys);
        Ok(mean + jitter(&self.model, self.calls, timed.len() as u64 * self.laps))
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Hash-free analytic oracle: blocks are bucketed by set index only and each
/// set index's blocks are assumed spread as evenly as possible over the
/// slices. This is the idealized cache the capacity table describes.
#[derive(Debug, Clone)]
pub struct EquitableOracle {
    geom: CacheGeometry,
    model: LatencyModel,
    laps: u64,
    calls: u64,
}

impl EquitableOracle {
    pub fn new(geom: CacheGeometry, model: LatencyModel) -> Result<Self, ProbeError> {
        model.validate()?;
        Ok(Self {
            geom,
            model,
            laps: 1,
            calls: 0,
        })
    }
}

impl LatencyOracle for EquitableOracle {
    fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    fn model(&self) -> &LatencyModel {
        &self.model
    }

    fn sample(&mut self, active: &[u64], timed: &[u64]) -> Result<f64, ProbeError> {
        if timed.is_empty() {
            return Err(ProbeError::InvalidArgument("nothing to time".into()));
        }
        check_blocks(&self.geom, active)?;
        let mut per_set = vec![0u64; self.geom.sets_per_slice()];
        for &b in active {
            per_set[self.geom.set_index_of(b)? as usize] += 1;
        }
        let mut timed_per_set = vec![0u64; self.geom.sets_per_slice()];
        for &b in timed {
            timed_per_set[self.geom.set_index_of(b)? as usize] += 1;
        }
        let slices = self.geom.slice_count() as u64;
        let ways = self.geom.associativity();
        let mut total = 0.0;
        for (set, &count) in per_set.iter().enumerate() {
            let t = timed_per_set[set];
            if t == 0 {
                continue;
            }
            if t > count {
                return Err(ProbeError::InvalidArgument(
                    "timed blocks must be active".into(),
                ));
            }
            // `r` slices hold q+1 blocks, the rest hold q; timed blocks are
            // spread over them in the same proportion.
            let (q, r) = (count / slices, count % slices);
            let big = (q + 1) as f64 * r as f64;
            let small = q as f64 * (slices - r) as f64;
            let mean = if count == 0 {
                0.0
            } else {
                (big * self.model.expected(q + 1, ways)
                    + if q > 0 {
                        small * self.model.expected(q, ways)
                    } else {
                        0.0
                    })
                    / count as f64
            };
            total += mean * t as f64;
        }
        self.calls += 1;
        Ok(total / timed.len() as f64
            + jitter(&self.model, self.calls, timed.len() as u64 * self.laps))
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Median of `repeats` samples of the average latency over `blocks`.
pub fn measure<O: LatencyOracle + ?Sized>(
    oracle: &mut O,
    blocks: &[u64],
    repeats: usize,
) -> Result<f64, ProbeError> {
    measure_timed(oracle, blocks, blocks, repeats)
}

pub fn measure_timed<O: LatencyOracle + ?Sized>(
    oracle: &mut O,
    active: &[u64],
    timed: &[u64],
    repeats: usize,
) -> Result<f64, ProbeError> {
    if repeats == 0 {
        return Err(ProbeError::InvalidArgument(
            "repeats must be positive".into(),
        ));
    }
    if timed.is_empty() {
        return Err(ProbeError::InvalidArgument("no blocks to measure".into()));
    }
    let mut samples = (0..repeats)
        .map(|_| oracle.sample(active, timed))
        .collect::<Result<Vec<f64>, _>>()?;
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    Ok(if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    })
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub groups: BlockGroups,
    /// Oracle samples spent (each median counts `repeats` samples).
    pub probe_calls: u64,
}

struct Prober<'a, O: ?Sized> {
    oracle: &'a mut O,
    repeats: usize,
    ways: usize,
    model: LatencyModel,
}

impl<O: LatencyOracle + ?Sized> Prober<'_, O> {
    fn conflicts(&mut self, blocks: &[u64]) -> Result<bool, ProbeError> {
        let t = threshold(&self.model, self.ways, blocks.len());
        Ok(measure(self.oracle, blocks, self.repeats)? > t)
    }

    /// Smallest prefix of `pool` that overflows some set, reduced to the
    /// `N + 1` blocks of the overflowing set.
    fn seed(&mut self, pool: &[u64]) -> Result<Option<Vec<u64>>, ProbeError> {
        let need = self.ways + 1;
        if pool.len() < need {
            return Ok(None);
        }
        let mut end = None;
        for m in need..=pool.len() {
            if self.conflicts(&pool[..m])? {
                end = Some(m);
                break;
            }
        }
        let Some(m) = end else { return Ok(None) };
        // The last block completed the overflowing set; drop every other
        // block whose removal keeps the overflow.
        let mut set: Vec<u64> = pool[..m].to_vec();
        let mut i = 0;
        while i + 1 < set.len() && set.len() > need {
            let mut trial = set.clone();
            trial.remove(i);
            if self.conflicts(&trial)? {
                set = trial;
            } else {
                i += 1;
            }
        }
        Ok((set.len() == need).then_some(set))
    }
}

/// Sort `pool` (blocks sharing one set index) into slice groups using only
/// latency measurements.
///
/// A seed eviction set of `assoc + 1` congruent blocks is found by growing a
/// prefix until it overflows, then shrinking it. Every other block is timed
/// together with `assoc` members of the seed: an overflow means it shares
/// their set. This repeats on the remaining blocks; blocks left over when no
/// further seed exists are returned unclassified.
pub fn crack_without_trace<O: LatencyOracle + ?Sized>(
    oracle: &mut O,
    pool: &[u64],
    assoc: usize,
    repeats: usize,
) -> Result<ProbeOutcome, ProbeError> {
    if assoc == 0 {
        return Err(ProbeError::InvalidArgument(
            "associativity must be positive".into(),
        ));
    }
    let start_calls = oracle.calls();
    let model = *oracle.model();
    let mut remaining: Vec<u64> = pool.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let total = remaining.len();
    let mut prober = Prober {
        oracle,
        repeats,
        ways: assoc,
        model,
    };
    let mut found: Vec<Vec<u64>> = Vec::new();
    while let Some(seed) = prober.seed(&remaining)? {
        let base: Vec<u64> = seed[..assoc].to_vec();
        let mut group = seed.clone();
        let mut probe = base.clone();
        probe.push(0);
        for &b in &remaining {
            if seed.contains(&b) {
                continue;
            }
            probe[assoc] = b;
            if prober.conflicts(&probe)? {
                group.push(b);
            }
        }
        remaining.retain(|b| !group.contains(b));
        found.push(group);
    }
    if found.is_empty() {
        return Err(ProbeError::InsufficientPool {
            pool: total,
            needed: assoc + 1,
        });
    }
    let leftovers: BTreeSet<u64> = remaining.iter().copied().collect();
    let mut parts = found;
    parts.extend(remaining.iter().map(|&b| vec![b]));
    let groups =
        BlockGroups::from_partition(parts, |m| !(m.len() == 1 && leftovers.contains(&m[0])));
    Ok(ProbeOutcome {
        groups,
        probe_calls: prober.oracle.calls() - start_calls,
    })
}

/// Which cache set thread 1's blocks occupy relative to thread 2's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    SameSet,
    DifferentSet,
}

/// Thread 1 keeps `k` blocks live; thread 2 walks `m` blocks for each `m` in
/// `m_range` and is timed alone. Returns the smallest `m` whose latency
/// exceeds the single-set threshold.
///
/// `set_a` and `set_b` are congruent block lists for two different cache
/// sets; thread 2 always uses `set_a`.
pub fn two_thread_experiment<O: LatencyOracle + ?Sized>(
    oracle: &mut O,
    set_a: &[u64],
    set_b: &[u64],
    k: usize,
    m_range: std::ops::RangeInclusive<usize>,
    placement: Placement,
    repeats: usize,
) -> Result<Option<usize>, ProbeError> {
    if k > 4 {
        return Err(ProbeError::InvalidArgument(format!(
            "thread 1 holds {k} blocks, at most 4"
        )));
    }
    let ways = oracle.geometry().associativity();
    let thr = single_set_threshold(oracle.model(), ways);
    let (thread1, offset) = match placement {
        Placement::SameSet => (set_a.get(..k), k),
        Placement::DifferentSet => (set_b.get(..k), 0),
    };
    let thread1 = thread1.ok_or(ProbeError::InsufficientPool {
        pool: set_b.len().min(set_a.len()),
        needed: k,
    })?;
    for m in m_range {
        if m == 0 {
            continue;
        }
        let thread2 = set_a
            .get(offset..offset + m)
            .ok_or(ProbeError::InsufficientPool {
                pool: set_a.len(),
                needed: offset + m,
            })?;
        let mut active = thread1.to_vec();
        active.extend_from_slice(thread2);
        if measure_timed(oracle, &active, thread2, repeats)? > thr {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::BitFunction;

    fn geom(slices: usize) -> CacheGeometry {
        CacheGeometry::new(64, 20, 2048, slices, 36, 64 << 30).unwrap()
    }

    fn same_set(n: u64) -> Vec<u64> {
        (0..n).map(|i| (0x4000 + i) << 17).collect()
    }

    fn desk(slices: usize) -> DeskOracle {
        let g = geom(slices);
        let h = SliceHash::LinearGf2 { outputs: vec![] };
        DeskOracle::new(g, h, LatencyModel::default(), 1).unwrap()
    }

    #[test]
    fn measure_examples() {
        let mut o = desk(1);
        assert_eq!(measure(&mut o, &same_set(20), 1).unwrap(), 40.0);
        assert_eq!(measure(&mut o, &same_set(1), 1).unwrap(), 40.0);
        assert!((measure(&mut o, &same_set(21), 3).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(o.calls(), 5);
    }

    #[test]
    fn threshold_sits_inside_first_step() {
        let m = LatencyModel::default();
        let t = single_set_threshold(&m, 20);
        assert!(t > m.l_llc && t < m.l_llc + m.l_memory / 20.0);
        assert_eq!(threshold(&m, 20, 21), t);
    }

    #[test]
    fn exactly_n_blocks_cannot_seed() {
        let mut o = desk(1);
        assert_eq!(
            crack_without_trace(&mut o, &same_set(20), 20, 1).unwrap_err(),
            ProbeError::InsufficientPool {
                pool: 20,
                needed: 21
            }
        );
        let out = crack_without_trace(&mut o, &same_set(21), 20, 1).unwrap();
        assert_eq!(out.groups.classified().count(), 1);
        assert_eq!(out.groups.groups[0].members.len(), 21);
    }

    #[test]
    fn two_slices_split() {
        let g = geom(2);
        let h = SliceHash::linear(vec![BitFunction::from_bits(&[17], false)], &g).unwrap();
        let mut o = DeskOracle::new(g, h, LatencyModel::default(), 1).unwrap();
        let out = crack_without_trace(&mut o, &same_set(64), 20, 1).unwrap();
        let groups: Vec<Vec<u64>> = out.groups.classified().map(|g| g.members.clone()).collect();
        assert_eq!(groups.len(), 2);
        assert!(groups[0].iter().all(|a| a >> 17 & 1 == 0));
        assert!(out.probe_calls > 0);
    }

    #[test]
    fn knee_law() {
        let g = geom(2);
        let h = SliceHash::linear(vec![BitFunction::from_bits(&[17], false)], &g).unwrap();
        let mut o = DeskOracle::new(g, h, LatencyModel::default(), 1).unwrap();
        let a: Vec<u64> = (0..40u64).map(|i| (0x4000 + 2 * i) << 17).collect();
        let b: Vec<u64> = (0..40u64).map(|i| (0x4001 + 2 * i) << 17).collect();
        for k in 0..=4 {
            let same =
                two_thread_experiment(&mut o, &a, &b, k, 1..=30, Placement::SameSet, 1).unwrap();
            let diff = two_thread_experiment(&mut o, &a, &b, k, 1..=30, Placement::DifferentSet, 1)
                .unwrap();
            assert_eq!(same, Some(21 - k));
            assert_eq!(diff, Some(21));
        }
    }

    #[test]
    fn equitable_spreads_over_slices() {
        let mut o = EquitableOracle::new(geom(6), LatencyModel::default()).unwrap();
        let blocks: Vec<u64> = (0..120u64).map(|i| i << 17).collect();
        assert_eq!(measure(&mut o, &blocks, 1).unwrap(), 40.0);
        let blocks: Vec<u64> = (0..121u64).map(|i| i << 17).collect();
        let m = measure(&mut o, &blocks, 1).unwrap();
        assert!((m - (40.0 + 21.0 * 10.0 / 121.0)).abs() < 1e-9);
    }
}
