//! Eviction relationships recovered from a trace, and the block groups they
//! induce.
//!
//! Two blocks that evict each other live in the same (slice, set). Eviction
//! is transitive over a thrashing set, so the connected components of the
//! eviction graph are the slice groups of one set index.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::RangeInclusive;

use crate::error::{GraphError, ModelError};
use crate::sim::{MemoryTrace, Op, TraceEvent};

/// Pair a write with the nearest unpaired read at most this many events
/// earlier.
pub const DEFAULT_MAX_PAIR_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EvictionEdge {
    pub filled: u64,
    pub evicted: u64,
    pub seq_of_read: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeExtraction {
    pub edges: Vec<EvictionEdge>,
    /// Write-backs with no fill close enough to pair with.
    pub unpaired_writes: Vec<TraceEvent>,
}

pub fn extract_edges(trace: &MemoryTrace, max_pair_gap: usize) -> EdgeExtraction {
    let events = trace.events();
    let mut used = vec![false; events.len()];
    let mut out = EdgeExtraction::default();
    for (i, w) in events.iter().enumerate() {
        if w.op != Op::Write {
            continue;
        }
        let lo = i.saturating_sub(max_pair_gap);
        let partner = (lo..i)
            .rev()
            .find(|&j| events[j].op == Op::Read && !used[j] && events[j].address != w.address);
        match partner {
            Some(j) => {
                used[j] = true;
                out.edges.push(EvictionEdge {
                    filled: events[j].address,
                    evicted: w.address,
                    seq_of_read: events[j].seq,
                });
            }
            None => out.unpaired_writes.push(*w),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub id: usize,
    /// Sorted ascending.
    pub members: Vec<u64>,
    /// False for isolated blocks that never took part in an eviction.
    pub classified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockGroups {
    pub groups: Vec<Group>,
    pub labeling: BTreeMap<u64, usize>,
}

impl BlockGroups {
    /// Build from explicit member lists; ids follow ascending smallest member.
    pub fn from_partition(parts: Vec<Vec<u64>>, classified: impl Fn(&[u64]) -> bool) -> Self {
        let mut parts: Vec<Vec<u64>> = parts
            .into_iter()
            .filter(|p| !p.is_empty())
            .map(|mut p| {
                p.sort_unstable();
                p.dedup();
                p
            })
            .collect();
        parts.sort_by_key(|p| p[0]);
        let mut labeling = BTreeMap::new();
        let groups = parts
            .into_iter()
            .enumerate()
            .map(|(id, members)| {
                for &m in &members {
                    labeling.insert(m, id);
                }
                let classified = classified(&members);
                Group {
                    id,
                    members,
                    classified,
                }
            })
            .collect();
        Self { groups, labeling }
    }

    pub fn classified(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().filter(|g| g.classified)
    }

    pub fn unclassified(&self) -> impl Iterator<Item = u64> + '_ {
        self.groups
            .iter()
            .filter(|g| !g.classified)
            .flat_map(|g| g.members.iter().copied())
    }

    pub fn group_of(&self, address: u64) -> Option<&Group> {
        self.labeling.get(&address).map(|&id| &self.groups[id])
    }

    /// The classified groups as a label-free set, for comparing two
    /// classifications up to relabeling.
    pub fn partition(&self) -> BTreeSet<Vec<u64>> {
        self.classified().map(|g| g.members.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

fn adjacency(edges: &[EvictionEdge]) -> BTreeMap<u64, BTreeMap<u64, usize>> {
    let mut adj: BTreeMap<u64, BTreeMap<u64, usize>> = BTreeMap::new();
    for e in edges {
        if e.filled == e.evicted {
            continue;
        }
        *adj.entry(e.filled)
            .or_default()
            .entry(e.evicted)
            .or_default() += 1;
        *adj.entry(e.evicted)
            .or_default()
            .entry(e.filled)
            .or_default() += 1;
    }
    adj
}

/// Breadth-first connected components over all nodes. Blocks without any
/// edge come back as singleton groups marked unclassified.
pub fn connected_components(
    edges: &[EvictionEdge],
    all_nodes: impl IntoIterator<Item = u64>,
) -> BlockGroups {
    let adj = adjacency(edges);
    let mut nodes: BTreeSet<u64> = all_nodes.into_iter().collect();
    nodes.extend(adj.keys().copied());

    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut parts = Vec::new();
    for &start in &nodes {
        if !seen.insert(start) {
            continue;
        }
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &next in adj.get(&n).into_iter().flat_map(|m| m.keys()) {
                if seen.insert(next) {
                    members.push(next);
                    queue.push_back(next);
                }
            }
        }
        parts.push(members);
    }
    BlockGroups::from_partition(parts, |m| m.len() > 1 || adj.contains_key(&m[0]))
}

/// Edges whose removal would split their component into two parts of at
/// least two blocks each: single observations holding two clusters together.
pub fn conflict_edges(edges: &[EvictionEdge]) -> Vec<(u64, u64)> {
    let adj = adjacency(edges);
    let index: BTreeMap<u64, usize> = adj.keys().enumerate().map(|(i, &a)| (a, i)).collect();
    let addr: Vec<u64> = adj.keys().copied().collect();
    let nbrs: Vec<Vec<(usize, usize)>> = adj
        .values()
        .map(|m| m.iter().map(|(b, &mult)| (index[b], mult)).collect())
        .collect();
    let n = addr.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut size = vec![1usize; n];
    let mut comp_of = vec![0usize; n];
    let mut comp_size = Vec::new();
    let mut tree_edges = Vec::new();
    let mut timer = 0;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        let comp = comp_size.len();
        let mut count = 0;
        // (node, parent, next neighbor position)
        let mut stack = vec![(root, usize::MAX, 0usize)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent, ref mut pos)) = stack.last_mut() {
            if *pos < nbrs[v].len() {
                let (w, mult) = nbrs[v][*pos];
                *pos += 1;
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, v, 0));
                } else if w != parent || mult > 1 {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                comp_of[v] = comp;
                count += 1;
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    size[parent] += size[v];
                    let single = nbrs[v].iter().any(|&(w, m)| w == parent && m == 1);
                    if low[v] > disc[parent] && single {
                        tree_edges.push((parent, v));
                    }
                }
            }
        }
        comp_size.push(count);
    }

    let mut out: Vec<(u64, u64)> = tree_edges
        .into_iter()
        .filter(|&(_, c)| {
            let below = size[c];
            let above = comp_size[comp_of[c]] - below;
            below >= 2 && above >= 2
        })
        .map(|(p, c)| (addr[p].min(addr[c]), addr[p].max(addr[c])))
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessHistogram {
    /// Read fills per block inside the window; blocks seen anywhere in the
    /// trace but not in the window count as zero.
    pub counts: BTreeMap<u64, u64>,
    /// Coefficient of variation of the counts (0 = perfectly uniform).
    pub coefficient_of_variation: f64,
}

pub fn access_histogram(
    trace: &MemoryTrace,
    window: RangeInclusive<u64>,
) -> Result<AccessHistogram, GraphError> {
    let in_window: Vec<&TraceEvent> = trace
        .events()
        .iter()
        .filter(|e| window.contains(&e.seq))
        .collect();
    if in_window.is_empty() {
        return Err(GraphError::EmptyWindow {
            start: *window.start(),
            end: *window.end(),
        });
    }
    let mut counts: BTreeMap<u64, u64> = trace.reads().map(|e| (e.address, 0)).collect();
    for e in in_window.iter().filter(|e| e.op == Op::Read) {
        *counts.entry(e.address).or_default() += 1;
    }
    let n = counts.len() as f64;
    let mean = counts.values().sum::<u64>() as f64 / n;
    let cv = if mean == 0.0 {
        0.0
    } else {
        let var = counts
            .values()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt() / mean
    };
    Ok(AccessHistogram {
        counts,
        coefficient_of_variation: cv,
    })
}

/// How well a classification matches a known ground-truth location map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthScore {
    /// Fraction of classified groups whose members share one location (1 when
    /// nothing was classified: no group is impure).
    pub purity: f64,
    /// Fraction of blocks whose classified group is exactly the set of
    /// blocks at their location.
    pub coverage: f64,
    pub classified_groups: usize,
    pub locations: usize,
}

/// Score `groups` over `blocks` against `location` (typically (slice, set)).
pub fn score_against<L, F>(
    groups: &BlockGroups,
    blocks: &[u64],
    location: F,
) -> Result<GroundTruthScore, ModelError>
where
    L: Ord + Clone,
    F: Fn(u64) -> Result<L, ModelError>,
{
    let mut truth: BTreeMap<L, Vec<u64>> = BTreeMap::new();
    for &b in blocks {
        truth.entry(location(b)?).or_default().push(b);
    }
    for members in truth.values_mut() {
        members.sort_unstable();
    }
    let mut pure = 0usize;
    let mut total = 0usize;
    for g in groups.classified() {
        total += 1;
        let first = location(g.members[0])?;
        let mut same = true;
        for &m in &g.members[1..] {
            if location(m)? != first {
                same = false;
                break;
            }
        }
        pure += same as usize;
    }
    let mut covered = 0usize;
    for members in truth.values() {
        if let Some(g) = groups.group_of(members[0]) {
            if g.classified && g.members == *members {
                covered += members.len();
            }
        }
    }
    Ok(GroundTruthScore {
        purity: if total == 0 {
            1.0
        } else {
            pure as f64 / total as f64
        },
        coverage: if blocks.is_empty() {
            0.0
        } else {
            covered as f64 / blocks.len() as f64
        },
        classified_groups: total,
        locations: truth.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::read_trace;

    fn edge(a: u64, b: u64) -> EvictionEdge {
        EvictionEdge {
            filled: a,
            evicted: b,
            seq_of_read: 0,
        }
    }

    #[test]
    fn pairs_sample_rows() {
        let t = read_trace(
            "1,read,bfd60000,15\n2,write,be1a0000,1094\n3,read,bfd80000,15\n".as_bytes(),
        )
        .unwrap();
        let ex = extract_edges(&t, DEFAULT_MAX_PAIR_GAP);
        assert_eq!(
            ex.edges,
            vec![EvictionEdge {
                filled: 0xbfd6_0000,
                evicted: 0xbe1a_0000,
                seq_of_read: 1
            }]
        );
        assert!(ex.unpaired_writes.is_empty());
    }

    #[test]
    fn reads_only_give_no_edges() {
        let t = read_trace("1,read,40,15\n2,read,80,15\n".as_bytes()).unwrap();
        let ex = extract_edges(&t, DEFAULT_MAX_PAIR_GAP);
        assert!(ex.edges.is_empty());
        assert!(ex.unpaired_writes.is_empty());
    }

    #[test]
    fn lone_write_is_reported() {
        let t = read_trace(
            "1,write,40,600\n2,read,80,15\n3,write,c0,600\n4,write,100,600\n".as_bytes(),
        )
        .unwrap();
        let ex = extract_edges(&t, DEFAULT_MAX_PAIR_GAP);
        assert_eq!(ex.edges.len(), 1);
        let lone: Vec<u64> = ex.unpaired_writes.iter().map(|e| e.seq).collect();
        assert_eq!(lone, vec![1, 4]);
    }

    #[test]
    fn transitive_grouping() {
        let g = connected_components(&[edge(1, 2), edge(2, 3)], [1, 2, 3]);
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].members, vec![1, 2, 3]);
        assert!(g.groups[0].classified);
    }

    #[test]
    fn isolated_nodes_are_unclassified() {
        let g = connected_components(&[], [0x80, 0x40]);
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[0].members, vec![0x40]);
        assert!(g.groups.iter().all(|g| !g.classified));
        assert_eq!(g.unclassified().collect::<Vec<_>>(), vec![0x40, 0x80]);
    }

    #[test]
    fn labels_follow_smallest_member() {
        let g = connected_components(&[edge(9, 5), edge(2, 7), edge(30, 31)], [1]);
        let firsts: Vec<u64> = g.groups.iter().map(|g| g.members[0]).collect();
        assert_eq!(firsts, vec![1, 2, 5, 30]);
        assert_eq!(g.labeling[&7], 1);
        assert_eq!(g.labeling[&9], 2);
    }

    #[test]
    fn bridge_between_clusters_is_a_conflict() {
        // two triangles joined by a single edge 3-10
        let edges = [
            edge(1, 2),
            edge(2, 3),
            edge(3, 1),
            edge(10, 11),
            edge(11, 12),
            edge(12, 10),
            edge(3, 10),
        ];
        assert_eq!(conflict_edges(&edges), vec![(3, 10)]);
        // a pendant edge is not a conflict
        assert!(conflict_edges(&[edge(1, 2), edge(2, 3), edge(3, 1), edge(3, 4)]).is_empty());
        // a doubled bridge is not a conflict either
        let mut doubled = edges.to_vec();
        doubled.push(edge(10, 3));
        assert!(conflict_edges(&doubled).is_empty());
    }

    #[test]
    fn histogram_empty_window() {
        let t = read_trace("1,read,40,15\n".as_bytes()).unwrap();
        assert!(matches!(
            access_histogram(&t, 5..=9),
            Err(GraphError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn histogram_single_block() {
        let t = read_trace("1,read,40,15\n2,read,40,15\n3,read,40,15\n".as_bytes()).unwrap();
        let h = access_histogram(&t, 1..=3).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(0x40, 3)]));
        assert_eq!(h.coefficient_of_variation, 0.0);
    }
}
