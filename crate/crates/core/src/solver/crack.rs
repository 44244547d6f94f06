//! End-to-end trace-based cracking: simulate, extract evictions, group,
//! tabulate, deduplicate, and fit a formula where one exists.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::equiv::{equivalent_up_to_permutation, Equivalence};
use super::gf2::{affine_labeling, fit_linear_gf2_over, LinearFit};
use super::table::{build_table, dedup_tables, Dedup, MappingTable};
use crate::error::{ModelError, SolverError};
use crate::geometry::CacheGeometry;
use crate::graph::{
    conflict_edges, connected_components, extract_edges, BlockGroups, EvictionEdge,
    DEFAULT_MAX_PAIR_GAP,
};
use crate::hash::{BoundHash, SliceHash, SliceLookup};
use crate::planted::Domain;
use crate::sim::{
    run_workload_into, MemoryTrace, ReplacementPolicy, SlicedCache, TraceEvent, WorkloadConfig,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrackConfig {
    pub domain: Domain,
    pub set_indexes: Vec<u64>,
    /// Independent shuffles per set index; their edges are merged.
    pub rounds: u32,
    pub laps: u64,
    pub seed: u64,
    pub policy: ReplacementPolicy,
    pub idle_gap: u64,
    pub max_pair_gap: usize,
    /// Random domain addresses checked against the planted hash.
    pub verify_samples: usize,
}

impl CrackConfig {
    pub fn new(domain: Domain, set_indexes: Vec<u64>, seed: u64) -> Self {
        Self {
            domain,
            set_indexes,
            rounds: 4,
            laps: 2,
            seed,
            policy: ReplacementPolicy::LruMruInsert,
            idle_gap: 1000,
            max_pair_gap: DEFAULT_MAX_PAIR_GAP,
            verify_samples: 10_000,
        }
    }
}

/// Everything observed at one set index.
#[derive(Debug, Clone)]
pub struct SetIndexRun {
    pub set_index: u64,
    pub blocks: Vec<u64>,
    pub groups: BlockGroups,
    pub table: MappingTable,
    pub edges: usize,
    pub events: usize,
    pub unpaired_writes: Vec<TraceEvent>,
    pub conflict_edges: Vec<(u64, u64)>,
}

#[derive(Debug, Clone)]
pub struct CrackResult {
    pub geom: CacheGeometry,
    pub runs: Vec<SetIndexRun>,
    pub dedup: Dedup,
    /// Present when every probed set index shares one table and enough of
    /// it was classified to determine the fit.
    pub formula: Option<LinearFit>,
    /// Verdicts against the planted hash: one global entry (`None`) when a
    /// single table was found, otherwise one per set index, since canonical
    /// labels are only comparable within a table.
    pub equivalence: Vec<(Option<u64>, Equivalence)>,
}

impl CrackResult {
    pub fn tables(&self) -> Vec<&MappingTable> {
        self.runs.iter().map(|r| &r.table).collect()
    }

    pub fn distinct_tables(&self) -> usize {
        self.dedup.distinct.len()
    }

    /// All groups of all set indexes, canonically labeled together.
    pub fn all_groups(&self) -> BlockGroups {
        let mut classified = Vec::new();
        let mut loose = BTreeSet::new();
        for r in &self.runs {
            for g in &r.groups.groups {
                if g.classified {
                    classified.push(g.members.clone());
                } else {
                    loose.extend(g.members.iter().copied());
                }
            }
        }
        classified.extend(loose.iter().map(|&b| vec![b]));
        BlockGroups::from_partition(classified, |m| !(m.len() == 1 && loose.contains(&m[0])))
    }

    pub fn is_equivalent(&self) -> bool {
        !self.equivalence.is_empty() && self.equivalence.iter().all(|(_, e)| e.is_yes())
    }

    pub fn run(&self, set_index: u64) -> Option<&SetIndexRun> {
        self.runs.iter().find(|r| r.set_index == set_index)
    }
}

impl SliceLookup for CrackResult {
    fn lookup(&self, pa: u64) -> Result<u32, ModelError> {
        let f = self.geom.split_address(pa)?;
        self.run(f.a1)
            .and_then(|r| r.table.entries.get(&f.a2).copied())
            .ok_or(ModelError::Unmapped {
                address: pa,
                a2: f.a2,
                set_index: f.a1,
            })
    }
}

fn round_seed(seed: u64, set_index: u64, round: u32) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ set_index.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (round as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simulated traces of every round at one set index, concatenated.
pub fn simulate_set_index(
    geom: &CacheGeometry,
    planted: &SliceHash,
    config: &CrackConfig,
    set_index: u64,
) -> Result<(Vec<u64>, Vec<MemoryTrace>), SolverError> {
    let blocks = config.domain.blocks(geom, set_index);
    let mut traces = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds.max(1) {
        let mut cache = SlicedCache::new(*geom, planted.clone(), config.policy)?;
        let workload = WorkloadConfig::laps(
            blocks.clone(),
            config.laps,
            round_seed(config.seed, set_index, round),
        )
        .with_idle_gap(config.idle_gap);
        let mut trace = MemoryTrace::new();
        run_workload_into(&mut cache, &workload, &mut trace)?;
        traces.push(trace);
    }
    Ok((blocks, traces))
}

/// Classify the blocks of one set index from its traces.
pub fn classify_traces(
    traces: &[MemoryTrace],
    blocks: &[u64],
    max_pair_gap: usize,
) -> (BlockGroups, Vec<EvictionEdge>, Vec<TraceEvent>) {
    let mut edges = Vec::new();
    let mut unpaired = Vec::new();
    for t in traces {
        let ex = extract_edges(t, max_pair_gap);
        edges.extend(ex.edges);
        unpaired.extend(ex.unpaired_writes);
    }
    let groups = connected_components(&edges, blocks.iter().copied());
    (groups, edges, unpaired)
}

/// Run the trace pipeline against a planted hash.
pub fn crack(
    geom: &CacheGeometry,
    planted: &SliceHash,
    config: &CrackConfig,
) -> Result<CrackResult, SolverError> {
    config.domain.validate(geom)?;
    if config.set_indexes.is_empty() {
        return Err(SolverError::InvalidArgument(
            "no set indexes to probe".into(),
        ));
    }
    let mut runs = Vec::with_capacity(config.set_indexes.len());
    for &set_index in &config.set_indexes {
        if set_index >= geom.sets_per_slice() as u64 {
            return Err(SolverError::InvalidArgument(format!(
                "set index {set_index} out of range"
            )));
        }
        let (blocks, traces) = simulate_set_index(geom, planted, config, set_index)?;
        let (groups, edges, unpaired_writes) =
            classify_traces(&traces, &blocks, config.max_pair_gap);
        let table = build_table(&groups, geom)?;
        runs.push(SetIndexRun {
            set_index,
            blocks,
            table,
            edges: edges.len(),
            events: traces.iter().map(MemoryTrace::len).sum(),
            unpaired_writes,
            conflict_edges: conflict_edges(&edges),
            groups,
        });
    }
    let tables: Vec<MappingTable> = runs.iter().map(|r| r.table.clone()).collect();
    let dedup = dedup_tables(&tables);

    let formula = if dedup.distinct.len() == 1 {
        match fit_formula(geom, config, &runs) {
            Ok(fit) => Some(fit),
            // Too little was classified to pin down a formula; the tables
            // still stand on their own.
            Err(SolverError::TooFewAssignments { .. } | SolverError::Underdetermined { .. }) => {
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut result = CrackResult {
        geom: *geom,
        runs,
        dedup,
        formula,
        equivalence: Vec::new(),
    };
    let truth = BoundHash::new(geom, planted);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut sample = |members: Vec<u64>| {
        if members.len() > config.verify_samples {
            members
                .choose_multiple(&mut rng, config.verify_samples)
                .copied()
                .collect()
        } else {
            members
        }
    };
    let classified = |r: &SetIndexRun| -> Vec<u64> {
        r.groups
            .classified()
            .flat_map(|g| g.members.iter().copied())
            .collect()
    };
    let mut verdicts = Vec::new();
    if result.distinct_tables() == 1 {
        let domain = sample(result.runs.iter().flat_map(classified).collect());
        verdicts.push((
            None,
            equivalent_up_to_permutation(&result, &truth, &domain)?,
        ));
    } else {
        for r in &result.runs {
            let domain = sample(classified(r));
            verdicts.push((
                Some(r.set_index),
                equivalent_up_to_permutation(&result, &truth, &domain)?,
            ));
        }
    }
    result.equivalence = verdicts;
    Ok(result)
}

fn fit_formula(
    geom: &CacheGeometry,
    config: &CrackConfig,
    runs: &[SetIndexRun],
) -> Result<LinearFit, SolverError> {
    let table = &runs[0].table.entries;
    let relabel = affine_labeling(table);
    let mut assignments = BTreeMap::new();
    for r in runs {
        for (&a2, &g) in &r.table.entries {
            let label = relabel.as_ref().map_or(g, |p| p[&g]);
            assignments.insert(geom.block_address(a2, r.set_index), label);
        }
    }
    let bits = config.domain.varying_address_bits(geom);
    fit_linear_gf2_over(&assignments, geom, &bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::BitFunction;

    #[test]
    fn linear_four_slice_round_trip() {
        let g = CacheGeometry::new(64, 8, 64, 4, 30, 1 << 30).unwrap();
        let planted = SliceHash::linear(
            vec![
                BitFunction::from_bits(&[12, 14], false),
                BitFunction::from_bits(&[13, 15], true),
            ],
            &g,
        )
        .unwrap();
        let cfg = CrackConfig::new(Domain::low(0, 8), vec![0, 5], 1);
        let r = crack(&g, &planted, &cfg).unwrap();
        assert_eq!(r.distinct_tables(), 1);
        assert!(r.is_equivalent());
        assert_eq!(r.equivalence.len(), 1);
        let fit = r.formula.as_ref().unwrap();
        assert!(fit.is_linear(), "{}", fit.expression());
        for run in &r.runs {
            assert_eq!(run.groups.classified().count(), 4);
            assert!(run.unpaired_writes.is_empty());
        }
    }
}
