use crate::error::SimError;
use crate::geometry::CacheGeometry;
use crate::hash::SliceHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplacementPolicy {
    /// Evict the least recently used line, insert fills at MRU.
    #[default]
    LruMruInsert,
    /// Evict the LRU clean line while one exists; when every line is dirty,
    /// evict the MRU line so that long-lived dirty lines stay resident.
    DirtyRetain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Line {
    block: u64,
    dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eviction {
    pub address: u64,
    pub was_dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    Miss { evicted: Option<Eviction> },
}

impl AccessOutcome {
    pub fn is_hit(&self) -> bool {
        matches!(self, AccessOutcome::Hit)
    }
}

/// One replacement observed by the simulator, independent of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictionRecord {
    pub access: u64,
    pub filled: u64,
    pub evicted: u64,
    pub was_dirty: bool,
}

/// Sliced set-associative cache. Each set keeps its lines ordered from LRU
/// (index 0) to MRU, so a line's position is its recency rank.
#[derive(Debug, Clone)]
pub struct SlicedCache {
    geom: CacheGeometry,
    hash: SliceHash,
    policy: ReplacementPolicy,
    sets: Vec<Vec<Line>>,
    accesses: u64,
    log: Option<Vec<EvictionRecord>>,
}

impl SlicedCache {
    pub fn new(
        geom: CacheGeometry,
        hash: SliceHash,
        policy: ReplacementPolicy,
    ) -> Result<Self, SimError> {
        hash.validate(&geom)?;
        let set_count = geom.slice_count() * geom.sets_per_slice();
        Ok(Self {
            geom,
            hash,
            policy,
            sets: vec![Vec::new(); set_count],
            accesses: 0,
            log: None,
        })
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    pub fn hash(&self) -> &SliceHash {
        &self.hash
    }

    pub fn policy(&self) -> ReplacementPolicy {
        self.policy
    }

    /// Start recording every replacement.
    pub fn enable_eviction_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn eviction_log(&self) -> &[EvictionRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    fn set_slot(&self, address: u64) -> Result<usize, SimError> {
        if !self.geom.is_line_aligned(address) {
            return Err(SimError::Unaligned(address));
        }
        let (slice, set) = self.hash.location(address, &self.geom)?;
        Ok(slice as usize * self.geom.sets_per_slice() + set as usize)
    }

    fn victim(&self, lines: &[Line]) -> usize {
        match self.policy {
            ReplacementPolicy::LruMruInsert => 0,
            ReplacementPolicy::DirtyRetain => lines
                .iter()
                .position(|l| !l.dirty)
                .unwrap_or(lines.len() - 1),
        }
    }

    pub fn access(&mut self, address: u64, is_write: bool) -> Result<AccessOutcome, SimError> {
        let slot = self.set_slot(address)?;
        self.accesses += 1;
        let ways = self.geom.associativity();
        if let Some(pos) = self.sets[slot].iter().position(|l| l.block == address) {
            let lines = &mut self.sets[slot];
            let mut line = lines.remove(pos);
            line.dirty |= is_write;
            lines.push(line);
            return Ok(AccessOutcome::Hit);
        }
        let evicted = if self.sets[slot].len() == ways {
            let idx = self.victim(&self.sets[slot]);
            let old = self.sets[slot].remove(idx);
            if let Some(log) = self.log.as_mut() {
                log.push(EvictionRecord {
                    access: self.accesses,
                    filled: address,
                    evicted: old.block,
                    was_dirty: old.dirty,
                });
            }
            Some(Eviction {
                address: old.block,
                was_dirty: old.dirty,
            })
        } else {
            None
        };
        self.sets[slot].push(Line {
            block: address,
            dirty: is_write,
        });
        Ok(AccessOutcome::Miss { evicted })
    }

    pub fn is_resident(&self, address: u64) -> bool {
        self.set_slot(address)
            .map(|slot| self.sets[slot].iter().any(|l| l.block == address))
            .unwrap_or(false)
    }

    pub fn is_dirty(&self, address: u64) -> Option<bool> {
        let slot = self.set_slot(address).ok()?;
        self.sets[slot]
            .iter()
            .find(|l| l.block == address)
            .map(|l| l.dirty)
    }

    pub fn occupancy(&self, slice: u32, set_index: u64) -> usize {
        self.sets[slice as usize * self.geom.sets_per_slice() + set_index as usize].len()
    }

    /// Resident blocks of one set with their recency rank (0 = LRU).
    pub fn recency(&self, slice: u32, set_index: u64) -> Vec<(u64, usize)> {
        self.sets[slice as usize * self.geom.sets_per_slice() + set_index as usize]
            .iter()
            .enumerate()
            .map(|(rank, l)| (l.block, rank))
            .collect()
    }

    pub fn resident_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Verify placement and capacity of every resident line.
    pub fn check_invariants(&self) -> Result<(), String> {
        let sets_per_slice = self.geom.sets_per_slice();
        for (slot, lines) in self.sets.iter().enumerate() {
            if lines.len() > self.geom.associativity() {
                return Err(format!("set slot {slot} holds {} lines", lines.len()));
            }
            for (i, l) in lines.iter().enumerate() {
                if lines[..i].iter().any(|o| o.block == l.block) {
                    return Err(format!("block {:#x} resident twice", l.block));
                }
                let (slice, set) = self
                    .hash
                    .location(l.block, &self.geom)
                    .map_err(|e| e.to_string())?;
                if slice as usize * sets_per_slice + set as usize != slot {
                    return Err(format!("block {:#x} resident in wrong set", l.block));
                }
            }
        }
        Ok(())
    }
}
