use std::collections::BTreeMap;

use crate::error::SolverError;
use crate::geometry::CacheGeometry;
use crate::graph::BlockGroups;

/// Observed `a2 → group` mapping at one set index (`None` = all set indexes).
///
/// Group ids are canonical: numbered by first occurrence in ascending a2.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MappingTable {
    pub set_index: Option<u64>,
    pub entries: BTreeMap<u64, u32>,
}

impl MappingTable {
    /// Relabel arbitrary ids canonically.
    pub fn canonical(set_index: Option<u64>, raw: &BTreeMap<u64, u32>) -> Self {
        let mut relabel: BTreeMap<u32, u32> = BTreeMap::new();
        let entries = raw
            .iter()
            .map(|(&a2, &id)| {
                let next = relabel.len() as u32;
                (a2, *relabel.entry(id).or_insert(next))
            })
            .collect();
        Self { set_index, entries }
    }

    pub fn group_count(&self) -> usize {
        self.entries.values().max().map_or(0, |&m| m as usize + 1)
    }

    /// Members of each group, by id.
    pub fn columns(&self) -> Vec<Vec<u64>> {
        let mut cols = vec![Vec::new(); self.group_count()];
        for (&a2, &id) in &self.entries {
            cols[id as usize].push(a2);
        }
        cols
    }
}

/// Turn the classified groups of one set index into a canonical table.
/// Unclassified blocks are left out.
pub fn build_table(
    groups: &BlockGroups,
    geom: &CacheGeometry,
) -> Result<MappingTable, SolverError> {
    let mut set_index: Option<u64> = None;
    let mut raw = BTreeMap::new();
    let mut count = 0;
    for g in groups.classified() {
        count += 1;
        for &m in &g.members {
            let f = geom.split_address(m)?;
            match set_index {
                None => set_index = Some(f.a1),
                Some(s) if s != f.a1 => {
                    return Err(SolverError::MixedSetIndex {
                        group: g.id,
                        first: s,
                        second: f.a1,
                    });
                }
                _ => {}
            }
            raw.insert(f.a2, g.id as u32);
        }
    }
    if count > geom.slice_count() {
        return Err(SolverError::TooManyGroups {
            groups: count,
            slice_count: geom.slice_count(),
        });
    }
    Ok(MappingTable::canonical(set_index, &raw))
}

/// Distinct tables and which one each input uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dedup {
    /// Distinct tables in order of first appearance; ordinal `k` is
    /// `distinct[k - 1]`.
    pub distinct: Vec<BTreeMap<u64, u32>>,
    /// `(set_index, ordinal)` for every input table, in input order.
    pub ordinals: Vec<(Option<u64>, u32)>,
}

impl Dedup {
    pub fn ordinal_of(&self, set_index: Option<u64>) -> Option<u32> {
        self.ordinals
            .iter()
            .find(|(s, _)| *s == set_index)
            .map(|&(_, o)| o)
    }

    /// Set indexes sharing each ordinal.
    pub fn sharing(&self) -> BTreeMap<u32, Vec<Option<u64>>> {
        let mut out: BTreeMap<u32, Vec<Option<u64>>> = BTreeMap::new();
        for &(s, o) in &self.ordinals {
            out.entry(o).or_default().push(s);
        }
        out
    }
}

/// Collapse entry-for-entry equal tables. Ordinals start at 1.
pub fn dedup_tables(tables: &[MappingTable]) -> Dedup {
    let mut index: BTreeMap<&BTreeMap<u64, u32>, u32> = BTreeMap::new();
    let mut distinct = Vec::new();
    let mut ordinals = Vec::with_capacity(tables.len());
    for t in tables {
        let ord = *index.entry(&t.entries).or_insert_with(|| {
            distinct.push(t.entries.clone());
            distinct.len() as u32
        });
        ordinals.push((t.set_index, ord));
    }
    Dedup { distinct, ordinals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::SliceHash;
    use crate::sandy_bridge;

    fn truth_groups(geom: &CacheGeometry, hash: &SliceHash, blocks: &[u64]) -> BlockGroups {
        let mut by: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for &b in blocks {
            by.entry(hash.slice_of(b, geom).unwrap())
                .or_default()
                .push(b);
        }
        BlockGroups::from_partition(by.into_values().collect(), |_| true)
    }

    #[test]
    fn four_core_table_has_four_columns_of_sixteen() {
        let g = CacheGeometry::sandy_bridge_4core();
        let h = SliceHash::global_table(sandy_bridge::four_core_table(), &g).unwrap();
        let blocks: Vec<u64> = (0x4000..0x4040).map(|a2| g.block_address(a2, 3)).collect();
        let t = build_table(&truth_groups(&g, &h, &blocks), &g).unwrap();
        assert_eq!(t.set_index, Some(3));
        assert!(t.columns().iter().all(|c| c.len() == 16));
        // canonical ids coincide with the column order of the reference
        assert_eq!(t.entries, sandy_bridge::four_core_table());
    }

    #[test]
    fn single_group_maps_to_zero() {
        let g = CacheGeometry::sandy_bridge_4core();
        let blocks: Vec<u64> = (0..5).map(|a2| g.block_address(a2, 0)).collect();
        let groups = BlockGroups::from_partition(vec![blocks], |_| true);
        let t = build_table(&groups, &g).unwrap();
        assert!(t.entries.values().all(|&v| v == 0));
        assert_eq!(t.entries.len(), 5);
    }

    #[test]
    fn six_core_sizes() {
        let g = CacheGeometry::sandy_bridge_6core();
        let h = SliceHash::global_table(sandy_bridge::six_core_set1_table(), &g).unwrap();
        let blocks: Vec<u64> = (0x4000..0x4080).map(|a2| g.block_address(a2, 1)).collect();
        let t = build_table(&truth_groups(&g, &h, &blocks), &g).unwrap();
        let mut sizes: Vec<usize> = t.columns().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![21, 21, 21, 21, 22, 22]);
    }

    #[test]
    fn mixed_set_index_is_rejected() {
        let g = CacheGeometry::sandy_bridge_4core();
        let groups = BlockGroups::from_partition(
            vec![vec![g.block_address(1, 0), g.block_address(2, 1)]],
            |_| true,
        );
        assert!(matches!(
            build_table(&groups, &g),
            Err(SolverError::MixedSetIndex { .. })
        ));
    }

    #[test]
    fn too_many_groups() {
        let g = CacheGeometry::sandy_bridge_4core();
        let groups = BlockGroups::from_partition(
            (0..5).map(|a2| vec![g.block_address(a2, 0)]).collect(),
            |_| true,
        );
        assert_eq!(
            build_table(&groups, &g),
            Err(SolverError::TooManyGroups {
                groups: 5,
                slice_count: 4
            })
        );
    }

    #[test]
    fn dedup_numbers_by_first_appearance() {
        let a = MappingTable::canonical(Some(0), &BTreeMap::from([(1, 5), (2, 7)]));
        let b = MappingTable::canonical(Some(1), &BTreeMap::from([(1, 0), (2, 0)]));
        let c = MappingTable::canonical(Some(2), &BTreeMap::from([(1, 9), (2, 3)]));
        let d = dedup_tables(&[a.clone(), b.clone(), c]);
        assert_eq!(d.distinct.len(), 2);
        assert_eq!(d.ordinals, vec![(Some(0), 1), (Some(1), 2), (Some(2), 1)]);
        let again = dedup_tables(&[b, a]);
        assert_eq!(again.ordinals, vec![(Some(1), 1), (Some(0), 2)]);
    }
}
