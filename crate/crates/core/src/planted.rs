//! Ground-truth slice hashes planted in the simulator, and the probed address
//! region they are evaluated over.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::CacheGeometry;
use crate::hash::{eval_four_core_formula, output_bits, BitFunction, SliceHash};
use crate::sim::AddressSpec;

/// Lowest a2 value of the probed region (physical address 2 GiB with the
/// Sandy Bridge split).
pub const DEFAULT_A2_BASE: u64 = 0x4000;

/// A cube of a2 values: `a2_base` with every combination of `a2_bits` set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub a2_base: u64,
    /// Bit positions inside a2 (0 = lowest a2 bit).
    pub a2_bits: Vec<u32>,
}

impl Domain {
    /// `2^count` consecutive a2 values starting at `a2_base`.
    pub fn low(a2_base: u64, count: u32) -> Self {
        Self {
            a2_base,
            a2_bits: (0..count).collect(),
        }
    }

    pub fn len(&self) -> usize {
        1 << self.a2_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn validate(&self, geom: &CacheGeometry) -> Result<(), ModelError> {
        let mut mask = 0u64;
        for &b in &self.a2_bits {
            if b >= geom.a2_bits() || mask >> b & 1 == 1 {
                return Err(ModelError::InvalidArgument(format!(
                    "bad a2 bit {b} in domain"
                )));
            }
            mask |= 1 << b;
        }
        if self.a2_base & mask != 0 {
            return Err(ModelError::InvalidArgument(format!(
                "a2 base {:#x} overlaps the varying bits",
                self.a2_base
            )));
        }
        if (self.a2_base | mask) >> geom.a2_bits() != 0 {
            return Err(ModelError::InvalidArgument(
                "domain exceeds the a2 field".into(),
            ));
        }
        let top = geom.block_address(self.a2_base | mask, geom.sets_per_slice() as u64 - 1);
        if top >= geom.memory_bytes() {
            return Err(ModelError::AddressOutOfRange {
                address: top,
                width: geom.addr_width_bits(),
            });
        }
        Ok(())
    }

    /// All a2 values, ascending.
    pub fn a2_values(&self) -> Vec<u64> {
        let mut v: Vec<u64> = (0..self.len() as u64)
            .map(|combo| {
                self.a2_bits
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| combo >> i & 1 == 1)
                    .fold(self.a2_base, |acc, (_, &b)| acc | 1 << b)
            })
            .collect();
        v.sort_unstable();
        v
    }

    /// Line addresses of every domain value at one set index, ascending.
    pub fn blocks(&self, geom: &CacheGeometry, set_index: u64) -> Vec<u64> {
        self.a2_values()
            .into_iter()
            .map(|a2| geom.block_address(a2, set_index))
            .collect()
    }

    pub fn address_spec(&self, geom: &CacheGeometry, set_index: u64) -> AddressSpec {
        AddressSpec::Bits {
            base: geom.block_address(self.a2_base, set_index),
            bits: self.varying_address_bits(geom),
        }
    }

    /// Physical bit positions that vary across the domain.
    pub fn varying_address_bits(&self, geom: &CacheGeometry) -> Vec<u32> {
        self.a2_bits.iter().map(|b| b + geom.a2_shift()).collect()
    }
}

/// The 5-bit feed value a set index contributes to slice selection in the
/// set-dependent families. Set indexes {0, 2, 65, 67} share feed 0, {1, 3,
/// 64, 66} share feed 1, and so on through 32 classes.
pub fn set_feed(set_index: u64) -> u32 {
    ((((set_index >> 2) & 0xf) << 1) | ((set_index ^ set_index >> 6) & 1)) as u32
}

pub const FEED_CLASSES: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Linear,
    FourCore,
    RandomTable,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Linear, Family::FourCore, Family::RandomTable];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::FourCore => "four-core",
            Family::RandomTable => "random-table",
        }
    }
}

/// GF(2) rank of a set of bit vectors.
pub fn gf2_rank(rows: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &r in rows {
        let mut v = r;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Random masks for `outputs` output bits over physical `bits`, rejecting
/// draws whose restriction to `window` is not of full rank (a full-rank
/// window makes every output combination equally frequent on the window).
pub fn random_linear_masks<R: Rng>(
    rng: &mut R,
    outputs: u32,
    bits: &[u32],
    window: &[u32],
) -> Vec<BitFunction> {
    let window_mask: u64 = window.iter().fold(0, |m, &b| m | 1 << b);
    loop {
        let fns: Vec<BitFunction> = (0..outputs)
            .map(|_| {
                let mask = bits
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .fold(0u64, |m, &b| m | 1 << b);
                BitFunction::new(mask, rng.random_bool(0.5))
            })
            .collect();
        let restricted: Vec<u64> = fns.iter().map(|f| f.mask & window_mask).collect();
        if gf2_rank(&restricted) == outputs as usize {
            return fns;
        }
    }
}

fn parity(x: u64) -> u32 {
    x.count_ones() & 1
}

/// Materialize `slice(a2)` over the domain.
fn table_over(domain: &Domain, f: impl Fn(u64) -> u32) -> BTreeMap<u64, u32> {
    domain
        .a2_values()
        .into_iter()
        .map(|a2| (a2, f(a2)))
        .collect()
}

/// One table per feed class, selected by [`set_feed`].
fn per_feed(
    geom: &CacheGeometry,
    domain: &Domain,
    f: impl Fn(u32, u64) -> u32,
) -> Result<SliceHash, ModelError> {
    let tables = (0..FEED_CLASSES)
        .map(|feed| table_over(domain, |a2| f(feed, a2)))
        .collect();
    let table_of_set = (0..geom.sets_per_slice() as u64).map(set_feed).collect();
    SliceHash::per_set_index(table_of_set, tables, geom)
}

/// Spread a feed value over the varying a2 bits of the domain.
fn feed_mask(domain: &Domain, feed: u32) -> u64 {
    domain
        .a2_bits
        .iter()
        .take(5)
        .enumerate()
        .filter(|(i, _)| feed >> i & 1 == 1)
        .fold(0, |m, (_, &b)| m | 1 << b)
}

/// Build a planted hash of `family` for `geom` over `domain`.
///
/// Families that cannot be expressed natively at this slice count (the
/// four-core formula needs 4 slices; a linear output must stay below the
/// slice count) are folded modulo the slice count and stored as tables.
/// Set-dependent variants are per-set-index table families over 32 feed
/// classes.
pub fn planted(
    family: Family,
    geom: &CacheGeometry,
    set_dependent: bool,
    domain: &Domain,
    seed: u64,
) -> Result<SliceHash, ModelError> {
    domain.validate(geom)?;
    let slices = geom.slice_count() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = geom.a2_shift();
    match family {
        Family::Linear => {
            let outs = output_bits(slices as usize);
            let top = (shift + 17).min(geom.addr_width_bits());
            let bits: Vec<u32> = (shift..top).collect();
            // Keep the feed bits out of output bits > 0 so each feed class
            // yields a genuinely different partition.
            let feed_bits: Vec<u32> = domain.a2_bits.iter().take(5).map(|b| b + shift).collect();
            let window: Vec<u32> = domain.varying_address_bits(geom);
            let mut masks = random_linear_masks(&mut rng, outs, &bits, &window);
            if set_dependent {
                for m in masks.iter_mut().skip(1) {
                    for b in &feed_bits {
                        m.mask &= !(1u64 << b);
                    }
                }
            }
            let eval = |a2: u64, feed: u32| -> u32 {
                let pa = geom.block_address(a2, 0);
                let mut v = masks
                    .iter()
                    .enumerate()
                    .fold(0u32, |acc, (i, f)| acc | f.eval(pa) << i);
                if set_dependent {
                    v ^= parity(a2 & feed_mask(domain, feed));
                }
                v % slices.max(1)
            };
            if set_dependent {
                per_feed(geom, domain, |feed, a2| eval(a2, feed))
            } else if slices.is_power_of_two() {
                SliceHash::linear(masks, geom)
            } else {
                SliceHash::global_table(table_over(domain, |a2| eval(a2, 0)), geom)
            }
        }
        Family::FourCore => {
            let value = |a2: u64, feed: u32| {
                let (b1, b0) = eval_four_core_formula(a2);
                let mut v = (b1 as u32) << 1 | b0 as u32;
                // XOR-ing a2 by a per-feed constant would only relabel slices
                // on small domains, where the formula is affine.
                if set_dependent {
                    v ^= parity(a2 & feed_mask(domain, feed));
                }
                if slices == 4 {
                    v
                } else {
                    (v | parity(a2 & 0x155) << 2) % slices
                }
            };
            if set_dependent {
                per_feed(geom, domain, |feed, a2| value(a2, feed))
            } else if slices == 4 {
                SliceHash::four_core(geom)
            } else {
                SliceHash::global_table(table_over(domain, |a2| value(a2, 0)), geom)
            }
        }
        Family::RandomTable => {
            let mut balanced = || {
                let mut a2s = domain.a2_values();
                a2s.shuffle(&mut rng);
                a2s.into_iter()
                    .enumerate()
                    .map(|(i, a2)| (a2, (i as u32) % slices))
                    .collect::<BTreeMap<u64, u32>>()
            };
            if set_dependent {
                let tables = (0..FEED_CLASSES).map(|_| balanced()).collect();
                let table_of_set = (0..geom.sets_per_slice() as u64).map(set_feed).collect();
                SliceHash::per_set_index(table_of_set, tables, geom)
            } else {
                SliceHash::global_table(balanced(), geom)
            }
        }
    }
}

/// Geometry used for the planted test matrix: 64 B lines, 20 ways, 2048 sets
/// per slice, 36-bit addresses, 64 GiB.
pub fn matrix_geometry(slices: usize) -> CacheGeometry {
    CacheGeometry::new(64, 20, 2048, slices, 36, 64 << 30).expect("valid matrix geometry")
}
