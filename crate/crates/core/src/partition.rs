//! Page coloring: colors are the set-index bits that lie above the page
//! offset, so pages of different colors can never share a cache set.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, PartitionError};
use crate::geometry::CacheGeometry;
use crate::hash::SliceHash;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorScheme {
    page_size_bytes: u64,
    color_bits: Vec<u32>,
}

impl ColorScheme {
    /// Colors from the set-index bits at or above the page boundary.
    pub fn new(page_size_bytes: u64, geom: &CacheGeometry) -> Result<Self, PartitionError> {
        if !page_size_bytes.is_power_of_two() {
            return Err(PartitionError::InvalidScheme(format!(
                "page size {page_size_bytes} is not a power of two"
            )));
        }
        let page_bits = page_size_bytes.trailing_zeros();
        let lo = geom.offset_bits().max(page_bits);
        Ok(Self {
            page_size_bytes,
            color_bits: (lo..geom.a2_shift()).collect(),
        })
    }

    /// Arbitrary color bits, without the set-index check. Used to show what
    /// goes wrong with a bad scheme.
    pub fn with_bits_unchecked(page_size_bytes: u64, color_bits: Vec<u32>) -> Self {
        Self {
            page_size_bytes,
            color_bits,
        }
    }

    pub fn page_size_bytes(&self) -> u64 {
        self.page_size_bytes
    }

    pub fn color_bits(&self) -> &[u32] {
        &self.color_bits
    }

    pub fn color_count(&self) -> u64 {
        1 << self.color_bits.len()
    }

    /// Whether every color bit is a set-index bit.
    pub fn is_sound(&self, geom: &CacheGeometry) -> bool {
        self.color_bits
            .iter()
            .all(|&b| b >= geom.offset_bits() && b < geom.a2_shift())
    }
}

pub fn page_color(pa: u64, scheme: &ColorScheme, geom: &CacheGeometry) -> Result<u32, ModelError> {
    geom.check_address(pa)?;
    Ok(scheme
        .color_bits
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | ((pa >> b & 1) as u32) << i))
}

/// Client → owned colors, in client order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub clients: Vec<(String, Vec<u32>)>,
}

impl PartitionPlan {
    pub fn owner_of(&self, color: u32) -> Option<&str> {
        self.clients
            .iter()
            .find(|(_, colors)| colors.contains(&color))
            .map(|(c, _)| c.as_str())
    }

    pub fn colors_of(&self, client: &str) -> Option<&[u32]> {
        self.clients
            .iter()
            .find(|(c, _)| c == client)
            .map(|(_, v)| v.as_slice())
    }
}

/// Give each client a contiguous color range, in the order given.
pub fn plan_partition(
    demands: &[(String, u64)],
    scheme: &ColorScheme,
) -> Result<PartitionPlan, PartitionError> {
    let requested: u64 = demands.iter().map(|(_, q)| q).sum();
    let available = scheme.color_count();
    if requested > available {
        return Err(PartitionError::OverSubscribed {
            requested,
            available,
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut next = 0u32;
    let mut clients = Vec::with_capacity(demands.len());
    for (client, quota) in demands {
        if !seen.insert(client) {
            return Err(PartitionError::InvalidScheme(format!(
                "client {client} listed twice"
            )));
        }
        let colors: Vec<u32> = (next..next + *quota as u32).collect();
        next += *quota as u32;
        clients.push((client.clone(), colors));
    }
    Ok(PartitionPlan { clients })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disjointness {
    Ok,
    /// Two addresses owned by different clients in the same (slice, set).
    Violation {
        first: u64,
        second: u64,
        slice: u32,
        set_index: u64,
    },
}

/// Check that no two sampled addresses owned by different clients land in
/// the same (slice, set). Addresses whose color nobody owns are skipped.
pub fn verify_disjoint(
    plan: &PartitionPlan,
    scheme: &ColorScheme,
    geom: &CacheGeometry,
    hash: &SliceHash,
    sample: &[u64],
) -> Result<Disjointness, ModelError> {
    let owner: BTreeMap<u32, usize> = plan
        .clients
        .iter()
        .enumerate()
        .flat_map(|(i, (_, colors))| colors.iter().map(move |&c| (c, i)))
        .collect();
    let mut seen: BTreeMap<(u32, u64), (usize, u64)> = BTreeMap::new();
    for &pa in sample {
        let Some(&client) = owner.get(&page_color(pa, scheme, geom)?) else {
            continue;
        };
        let (slice, set_index) = hash.location(geom.line_base(pa), geom)?;
        match seen.get(&(slice, set_index)) {
            Some(&(other, first)) if other != client => {
                return Ok(Disjointness::Violation {
                    first,
                    second: pa,
                    slice,
                    set_index,
                });
            }
            Some(_) => {}
            None => {
                seen.insert((slice, set_index), (client, pa));
            }
        }
    }
    Ok(Disjointness::Ok)
}

/// `n` random line addresses below the installed memory, seeded.
pub fn sample_addresses(geom: &CacheGeometry, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = geom.block_count();
    (0..n)
        .map(|_| rng.random_range(0..lines) * geom.line_size_bytes())
        .collect()
}

/// Count address pairs with different colors but the same set index, over
/// every address in `addresses`. Zero for a sound scheme.
pub fn color_set_conflicts(
    scheme: &ColorScheme,
    geom: &CacheGeometry,
    addresses: &[u64],
) -> Result<u64, ModelError> {
    let mut per_set: BTreeMap<u64, BTreeMap<u32, u64>> = BTreeMap::new();
    for &pa in addresses {
        *per_set
            .entry(geom.set_index_of(pa)?)
            .or_default()
            .entry(page_color(pa, scheme, geom)?)
            .or_default() += 1;
    }
    Ok(per_set
        .values()
        .map(|colors| {
            let total: u64 = colors.values().sum();
            let same: u64 = colors.values().map(|c| c * c).sum();
            (total * total - same) / 2
        })
        .sum())
}
