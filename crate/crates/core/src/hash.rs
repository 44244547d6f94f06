//! Slice-selection functions.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::ModelError;
use crate::geometry::CacheGeometry;

/// One output bit of an affine GF(2) function: the parity of the physical
/// address bits selected by `mask`, optionally complemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitFunction {
    pub mask: u64,
    pub affine: bool,
}

impl BitFunction {
    pub fn new(mask: u64, affine: bool) -> Self {
        Self { mask, affine }
    }

    pub fn from_bits(bits: &[u32], affine: bool) -> Self {
        let mask = bits.iter().fold(0u64, |m, &b| m | 1 << b);
        Self { mask, affine }
    }

    #[inline]
    pub fn eval(&self, pa: u64) -> u32 {
        ((pa & self.mask).count_ones() & 1) ^ self.affine as u32
    }

    pub fn bits(&self) -> Vec<u32> {
        (0..64).filter(|b| self.mask >> b & 1 == 1).collect()
    }
}

impl fmt::Display for BitFunction {
    /// `bit(17) XOR bit(19)`, wrapped in `NOT (...)` when affine.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.bits().iter().map(|b| format!("bit({b})")).collect();
        match (terms.is_empty(), self.affine) {
            (true, false) => write!(f, "0"),
            (true, true) => write!(f, "1"),
            (false, false) => write!(f, "{}", terms.join(" XOR ")),
            (false, true) if terms.len() == 1 => write!(f, "NOT {}", terms[0]),
            (false, true) => write!(f, "NOT ({})", terms.join(" XOR ")),
        }
    }
}

/// Ground-truth or recovered mapping from physical address to slice id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceHash {
    /// Output bit `i` of the slice id is `outputs[i]` evaluated on the address.
    LinearGf2 { outputs: Vec<BitFunction> },
    /// The reduced 4-slice formula: slice = 2·bit_a1 + bit_a0 over `a2`.
    FourCoreFormula,
    /// One `a2 → slice` table shared by every set index.
    GlobalTable { table: BTreeMap<u64, u32> },
    /// `table_of_set[a1]` selects one of the distinct `a2 → slice` tables.
    PerSetIndexTables {
        table_of_set: Vec<u32>,
        tables: Vec<BTreeMap<u64, u32>>,
    },
}

/// Number of output bits needed to name `slice_count` slices.
pub fn output_bits(slice_count: usize) -> u32 {
    match slice_count {
        0 | 1 => 0,
        n => usize::BITS - (n - 1).leading_zeros(),
    }
}

#[inline]
fn get_bit(value: u64, bit: u32) -> u8 {
    (value >> bit & 1) as u8
}

/// The two intermediate values of the reduced 4-slice mapping, as
/// `(bit_a1, bit_a0)`. Only `a2` bits 0..=14 participate.
pub fn eval_four_core_formula(a2: u64) -> (u8, u8) {
    let b = |i| get_bit(a2, i);
    let bit_a0 = b(0)
        ^ b(1)
        ^ b(2)
        ^ b(3)
        ^ b(4)
        ^ b(5)
        ^ b(7)
        ^ b(9)
        ^ b(10)
        ^ (b(12) & b(14))
        ^ ((1 - b(14)) & b(13));
    let bit_a1 = b(0) ^ b(2) ^ b(4) ^ b(6) ^ b(8) ^ b(10) ^ b(11) ^ b(13) ^ (b(14) & b(13) & b(12));
    (bit_a1, bit_a0)
}

/// Input width of [`eval_four_core_formula`].
pub const FOUR_CORE_FORMULA_BITS: u32 = 15;

/// Text form of the reduced 4-slice formula over `a2` bits.
pub const FOUR_CORE_EXPRESSION: &str =
    "bit_a0 = bit(0) XOR bit(1) XOR bit(2) XOR bit(3) XOR bit(4) XOR bit(5) \
XOR bit(7) XOR bit(9) XOR bit(10) XOR (bit(12) AND bit(14)) XOR ((NOT bit(14)) AND bit(13))\n\
bit_a1 = bit(0) XOR bit(2) XOR bit(4) XOR bit(6) XOR bit(8) XOR bit(10) XOR bit(11) \
XOR bit(13) XOR (bit(14) AND bit(13) AND bit(12))\n\
(bits are numbered from the lowest a2 bit)";

impl SliceHash {
    pub fn linear(outputs: Vec<BitFunction>, geom: &CacheGeometry) -> Result<Self, ModelError> {
        let h = SliceHash::LinearGf2 { outputs };
        h.validate(geom)?;
        Ok(h)
    }

    pub fn global_table(
        table: BTreeMap<u64, u32>,
        geom: &CacheGeometry,
    ) -> Result<Self, ModelError> {
        let h = SliceHash::GlobalTable { table };
        h.validate(geom)?;
        Ok(h)
    }

    pub fn per_set_index(
        table_of_set: Vec<u32>,
        tables: Vec<BTreeMap<u64, u32>>,
        geom: &CacheGeometry,
    ) -> Result<Self, ModelError> {
        let h = SliceHash::PerSetIndexTables {
            table_of_set,
            tables,
        };
        h.validate(geom)?;
        Ok(h)
    }

    pub fn four_core(geom: &CacheGeometry) -> Result<Self, ModelError> {
        let h = SliceHash::FourCoreFormula;
        h.validate(geom)?;
        Ok(h)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            SliceHash::LinearGf2 { .. } => "linear",
            SliceHash::FourCoreFormula => "four-core",
            SliceHash::GlobalTable { .. } => "global-table",
            SliceHash::PerSetIndexTables { .. } => "per-set-table",
        }
    }

    /// Check the structural invariants against a geometry.
    pub fn validate(&self, geom: &CacheGeometry) -> Result<(), ModelError> {
        let slices = geom.slice_count();
        let check_table = |t: &BTreeMap<u64, u32>| {
            if let Some((a2, s)) = t.iter().find(|(_, &s)| s as usize >= slices) {
                return Err(ModelError::InvalidHash(format!(
                    "table maps a2 {a2:#x} to slice {s}, slice count is {slices}"
                )));
            }
            if let Some(a2) = t.keys().next_back() {
                if geom.a2_bits() < 64 && a2 >> geom.a2_bits() != 0 {
                    return Err(ModelError::InvalidHash(format!(
                        "table key a2 {a2:#x} exceeds {} a2 bits",
                        geom.a2_bits()
                    )));
                }
            }
            Ok(())
        };
        match self {
            SliceHash::LinearGf2 { outputs } => {
                if outputs.len() > 16 {
                    return Err(ModelError::InvalidHash(format!(
                        "{} output bits for {slices} slices",
                        outputs.len()
                    )));
                }
                let low_mask = (1u64 << geom.a2_shift()) - 1;
                let width = geom.addr_width_bits();
                for (i, out) in outputs.iter().enumerate() {
                    if out.mask & low_mask != 0 {
                        return Err(ModelError::InvalidHash(format!(
                            "output bit {i} uses offset or set-index bits (mask {:#x})",
                            out.mask
                        )));
                    }
                    if width < 64 && out.mask >> width != 0 {
                        return Err(ModelError::InvalidHash(format!(
                            "output bit {i} uses bits above the {width}-bit address"
                        )));
                    }
                }
                Ok(())
            }
            SliceHash::FourCoreFormula => {
                if slices != 4 {
                    return Err(ModelError::InvalidHash(format!(
                        "four-core formula needs 4 slices, geometry has {slices}"
                    )));
                }
                Ok(())
            }
            SliceHash::GlobalTable { table } => check_table(table),
            SliceHash::PerSetIndexTables {
                table_of_set,
                tables,
            } => {
                if table_of_set.len() != geom.sets_per_slice() {
                    return Err(ModelError::InvalidHash(format!(
                        "{} set indexes have a table id, geometry has {}",
                        table_of_set.len(),
                        geom.sets_per_slice()
                    )));
                }
                if let Some(id) = table_of_set.iter().find(|&&id| id as usize >= tables.len()) {
                    return Err(ModelError::InvalidHash(format!(
                        "table id {id} but only {} tables",
                        tables.len()
                    )));
                }
                tables.iter().try_for_each(check_table)
            }
        }
    }

    /// Slice id of a physical address.
    pub fn slice_of(&self, pa: u64, geom: &CacheGeometry) -> Result<u32, ModelError> {
        let fields = geom.split_address(pa)?;
        let slice = match self {
            SliceHash::LinearGf2 { outputs } => outputs
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, out)| acc | out.eval(pa) << i),
            SliceHash::FourCoreFormula => {
                let (a1, a0) = eval_four_core_formula(fields.a2);
                (a1 as u32) << 1 | a0 as u32
            }
            SliceHash::GlobalTable { table } => {
                *table.get(&fields.a2).ok_or(ModelError::Unmapped {
                    address: pa,
                    a2: fields.a2,
                    set_index: fields.a1,
                })?
            }
            SliceHash::PerSetIndexTables {
                table_of_set,
                tables,
            } => {
                let id = table_of_set[fields.a1 as usize] as usize;
                *tables[id].get(&fields.a2).ok_or(ModelError::Unmapped {
                    address: pa,
                    a2: fields.a2,
                    set_index: fields.a1,
                })?
            }
        };
        if slice as usize >= geom.slice_count() {
            return Err(ModelError::SliceOutOfRange {
                address: pa,
                slice,
                slice_count: geom.slice_count(),
            });
        }
        Ok(slice)
    }

    /// Slice and set index of a physical address.
    pub fn location(&self, pa: u64, geom: &CacheGeometry) -> Result<(u32, u64), ModelError> {
        Ok((self.slice_of(pa, geom)?, geom.set_index_of(pa)?))
    }

    /// Human-readable expression of the function, where one exists.
    pub fn expression(&self) -> Option<String> {
        match self {
            SliceHash::LinearGf2 { outputs } => Some(
                outputs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| format!("slice_bit[{i}] = {o}"))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            SliceHash::FourCoreFormula => Some(FOUR_CORE_EXPRESSION.to_string()),
            _ => None,
        }
    }
}

/// Anything that can answer "which slice does this address live in".
pub trait SliceLookup {
    fn lookup(&self, pa: u64) -> Result<u32, ModelError>;
}

/// A [`SliceHash`] paired with the geometry it is evaluated under.
#[derive(Debug, Clone, Copy)]
pub struct BoundHash<'a> {
    pub geom: &'a CacheGeometry,
    pub hash: &'a SliceHash,
}

impl<'a> BoundHash<'a> {
    pub fn new(geom: &'a CacheGeometry, hash: &'a SliceHash) -> Self {
        Self { geom, hash }
    }
}

impl SliceLookup for BoundHash<'_> {
    fn lookup(&self, pa: u64) -> Result<u32, ModelError> {
        self.hash.slice_of(pa, self.geom)
    }
}

impl<F> SliceLookup for F
where
    F: Fn(u64) -> Result<u32, ModelError>,
{
    fn lookup(&self, pa: u64) -> Result<u32, ModelError> {
        self(pa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandy_bridge;

    fn two_slice() -> CacheGeometry {
        CacheGeometry::new(64, 20, 2048, 2, 36, 64 << 30).unwrap()
    }

    #[test]
    fn four_core_formula_hand_values() {
        assert_eq!(eval_four_core_formula(0), (0, 0));
        assert_eq!(eval_four_core_formula(0x4000), (0, 0));
        assert_eq!(eval_four_core_formula(0x2000), (1, 1));
        // bits above 14 are ignored
        assert_eq!(eval_four_core_formula(0x8000 | 0x2000), (1, 1));
    }

    #[test]
    fn four_core_formula_is_balanced() {
        let mut counts = [0usize; 4];
        for a2 in 0..1u64 << 15 {
            let (a1, a0) = eval_four_core_formula(a2);
            counts[(a1 * 2 + a0) as usize] += 1;
        }
        assert_eq!(counts, [1 << 13; 4]);
    }

    #[test]
    fn global_table_lookup() {
        let g = CacheGeometry::sandy_bridge_4core();
        let h = SliceHash::global_table(sandy_bridge::four_core_table(), &g).unwrap();
        assert_eq!(h.slice_of(g.block_address(0x4009, 0), &g).unwrap(), 0);
        assert_eq!(h.slice_of(g.block_address(0x400b, 7), &g).unwrap(), 2);
        assert!(matches!(
            h.slice_of(g.block_address(0x4100, 0), &g),
            Err(ModelError::Unmapped { a2: 0x4100, .. })
        ));
    }

    #[test]
    fn empty_linear_is_constant_zero() {
        let g = CacheGeometry::sandy_bridge_4core();
        let h = SliceHash::linear(vec![BitFunction::default(); 2], &g).unwrap();
        for pa in [0u64, 0x40, 0xbfd6_0000, (1 << 34) - 64] {
            assert_eq!(h.slice_of(pa, &g).unwrap(), 0);
        }
    }

    #[test]
    fn single_bit_linear() {
        let g = two_slice();
        let h = SliceHash::linear(vec![BitFunction::from_bits(&[17], false)], &g).unwrap();
        assert_eq!(h.slice_of(1 << 17, &g).unwrap(), 1);
        assert_eq!(h.slice_of(0, &g).unwrap(), 0);
    }

    #[test]
    fn linear_rejects_low_bits() {
        let g = two_slice();
        assert!(SliceHash::linear(vec![BitFunction::from_bits(&[16], false)], &g).is_err());
        assert!(SliceHash::linear(vec![BitFunction::from_bits(&[36], false)], &g).is_err());
    }

    #[test]
    fn linear_output_must_name_a_slice() {
        let g = CacheGeometry::sandy_bridge_6core();
        let h = SliceHash::linear(
            vec![
                BitFunction::from_bits(&[17], false),
                BitFunction::from_bits(&[18], false),
                BitFunction::from_bits(&[19], false),
            ],
            &g,
        )
        .unwrap();
        assert_eq!(h.slice_of(g.block_address(0b101, 0), &g).unwrap(), 5);
        assert!(matches!(
            h.slice_of(g.block_address(0b111, 0), &g),
            Err(ModelError::SliceOutOfRange { slice: 7, .. })
        ));
    }

    #[test]
    fn four_core_needs_four_slices() {
        assert!(SliceHash::four_core(&CacheGeometry::sandy_bridge_6core()).is_err());
        assert!(SliceHash::four_core(&CacheGeometry::sandy_bridge_4core()).is_ok());
    }

    #[test]
    fn per_set_table_dispatch() {
        let g = CacheGeometry::new(64, 4, 4, 2, 30, 1 << 20).unwrap();
        let t0 = BTreeMap::from([(0, 0), (1, 1)]);
        let t1 = BTreeMap::from([(0, 1), (1, 0)]);
        let h = SliceHash::per_set_index(vec![0, 1, 0, 1], vec![t0, t1], &g).unwrap();
        assert_eq!(h.slice_of(g.block_address(0, 0), &g).unwrap(), 0);
        assert_eq!(h.slice_of(g.block_address(0, 1), &g).unwrap(), 1);
        assert!(SliceHash::per_set_index(vec![0, 1], vec![BTreeMap::new()], &g).is_err());
    }

    #[test]
    fn expression_text() {
        assert_eq!(
            BitFunction::from_bits(&[17, 19], false).to_string(),
            "bit(17) XOR bit(19)"
        );
        assert_eq!(
            BitFunction::from_bits(&[17], true).to_string(),
            "NOT bit(17)"
        );
        assert_eq!(BitFunction::default().to_string(), "0");
        assert_eq!(BitFunction::new(0, true).to_string(), "1");
    }

    #[test]
    fn output_bit_counts() {
        assert_eq!(output_bits(1), 0);
        assert_eq!(output_bits(2), 1);
        assert_eq!(output_bits(4), 2);
        assert_eq!(output_bits(6), 3);
        assert_eq!(output_bits(8), 3);
    }
}
