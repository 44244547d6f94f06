//! Cache geometry and physical address decomposition.
//!
//! A physical address is split into three substrings, from the most
//! significant end: `a2` (slice selector / tag side), `a1` (set index inside a
//! slice) and `a0` (displacement inside the cache line).

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Static description of a sliced, set-associative last-level cache and the
/// physical memory behind it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    line_size_bytes: u64,
    associativity: usize,
    sets_per_slice: usize,
    slice_count: usize,
    addr_width_bits: u32,
    memory_bytes: u64,
}

/// The `(a2, a1, a0)` decomposition of one physical address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AddressFields {
    pub a2: u64,
    pub a1: u64,
    pub a0: u64,
}

impl CacheGeometry {
    pub fn new(
        line_size_bytes: u64,
        associativity: usize,
        sets_per_slice: usize,
        slice_count: usize,
        addr_width_bits: u32,
        memory_bytes: u64,
    ) -> Result<Self, ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidGeometry(msg));
        if !line_size_bytes.is_power_of_two() {
            return invalid(format!("line size {line_size_bytes} is not a power of two"));
        }
        if associativity == 0 {
            return invalid("associativity must be positive".into());
        }
        if !sets_per_slice.is_power_of_two() {
            return invalid(format!(
                "sets per slice {sets_per_slice} is not a power of two"
            ));
        }
        if slice_count == 0 {
            return invalid("slice count must be at least 1".into());
        }
        if !(30..=48).contains(&addr_width_bits) {
            return invalid(format!(
                "address width {addr_width_bits} is outside 30..=48"
            ));
        }
        let low_bits = line_size_bytes.trailing_zeros() + sets_per_slice.trailing_zeros();
        if low_bits > addr_width_bits {
            return invalid(format!(
                "offset and set index need {low_bits} bits, address is only {addr_width_bits} bits"
            ));
        }
        if memory_bytes == 0 || !memory_bytes.is_multiple_of(line_size_bytes) {
            return invalid(format!(
                "memory size {memory_bytes} is not a positive multiple of the line size"
            ));
        }
        let blocks = memory_bytes / line_size_bytes;
        if !blocks.is_multiple_of(sets_per_slice as u64) {
            return invalid(format!(
                "{blocks} memory blocks do not divide evenly over {sets_per_slice} set indexes"
            ));
        }
        if addr_width_bits < 64 && memory_bytes > 1u64 << addr_width_bits {
            return invalid(format!(
                "memory size {memory_bytes} does not fit in {addr_width_bits} address bits"
            ));
        }
        Ok(Self {
            line_size_bytes,
            associativity,
            sets_per_slice,
            slice_count,
            addr_width_bits,
            memory_bytes,
        })
    }

    /// Xeon E5-2640: 6 slices, 20-way, 2048 sets per slice, 64 GB installed.
    pub fn sandy_bridge_6core() -> Self {
        Self::new(64, 20, 2048, 6, 36, 64 << 30).expect("valid preset")
    }

    /// Xeon E5-2603: 4 slices, 20-way, 2048 sets per slice, 16 GB installed.
    pub fn sandy_bridge_4core() -> Self {
        Self::new(64, 20, 2048, 4, 34, 16 << 30).expect("valid preset")
    }

    pub fn line_size_bytes(&self) -> u64 {
        self.line_size_bytes
    }

    pub fn associativity(&self) -> usize {
        self.associativity
    }

    pub fn sets_per_slice(&self) -> usize {
        self.sets_per_slice
    }

    pub fn slice_count(&self) -> usize {
        self.slice_count
    }

    pub fn addr_width_bits(&self) -> u32 {
        self.addr_width_bits
    }

    pub fn memory_bytes(&self) -> u64 {
        self.memory_bytes
    }

    pub fn offset_bits(&self) -> u32 {
        self.line_size_bytes.trailing_zeros()
    }

    pub fn set_index_bits(&self) -> u32 {
        self.sets_per_slice.trailing_zeros()
    }

    /// Bit position of the lowest `a2` bit in a physical address.
    pub fn a2_shift(&self) -> u32 {
        self.offset_bits() + self.set_index_bits()
    }

    /// Number of bits in the `a2` substring.
    pub fn a2_bits(&self) -> u32 {
        self.addr_width_bits - self.a2_shift()
    }

    /// Total LLC capacity in bytes (line × ways × sets × slices).
    pub fn capacity_bytes(&self) -> u64 {
        self.line_size_bytes
            * self.associativity as u64
            * self.sets_per_slice as u64
            * self.slice_count as u64
    }

    /// Total number of cache sets across all slices: `C_cache / (ways × line)`.
    pub fn total_sets(&self) -> u64 {
        self.capacity_bytes() / (self.associativity as u64 * self.line_size_bytes)
    }

    pub fn total_lines(&self) -> u64 {
        self.capacity_bytes() / self.line_size_bytes
    }

    /// Number of memory blocks (`C_memory / C_cacheline`).
    pub fn block_count(&self) -> u64 {
        self.memory_bytes / self.line_size_bytes
    }

    /// Number of memory blocks that share any one set index.
    pub fn blocks_per_set_index(&self) -> u64 {
        self.block_count() / self.sets_per_slice as u64
    }

    pub fn check_address(&self, pa: u64) -> Result<(), ModelError> {
        if self.addr_width_bits < 64 && pa >> self.addr_width_bits != 0 {
            return Err(ModelError::AddressOutOfRange {
                address: pa,
                width: self.addr_width_bits,
            });
        }
        Ok(())
    }

    pub fn is_line_aligned(&self, pa: u64) -> bool {
        pa & (self.line_size_bytes - 1) == 0
    }

    /// Align an address down to the start of its line.
    pub fn line_base(&self, pa: u64) -> u64 {
        pa & !(self.line_size_bytes - 1)
    }

    pub fn split_address(&self, pa: u64) -> Result<AddressFields, ModelError> {
        self.check_address(pa)?;
        let offset_bits = self.offset_bits();
        Ok(AddressFields {
            a2: pa >> self.a2_shift(),
            a1: (pa >> offset_bits) & (self.sets_per_slice as u64 - 1),
            a0: pa & (self.line_size_bytes - 1),
        })
    }

    pub fn recompose(&self, fields: AddressFields) -> u64 {
        (fields.a2 << self.a2_shift()) | (fields.a1 << self.offset_bits()) | fields.a0
    }

    /// Line-aligned address for a given `a2` value at set index `a1`.
    pub fn block_address(&self, a2: u64, a1: u64) -> u64 {
        self.recompose(AddressFields { a2, a1, a0: 0 })
    }

    pub fn set_index_of(&self, pa: u64) -> Result<u64, ModelError> {
        Ok(self.split_address(pa)?.a1)
    }

    /// Number of lines the LLC can hold when an array is walked with an
    /// arithmetic power-of-two stride.
    ///
    /// A stride of `k` lines touches only `sets_per_slice / k` set indexes
    /// (at least one), and each touched set index offers
    /// `slice_count × associativity` ways.
    pub fn expected_resident_capacity(&self, stride_bytes: u64) -> Result<u64, ModelError> {
        if stride_bytes < self.line_size_bytes {
            return Err(ModelError::InvalidArgument(format!(
                "stride {stride_bytes} is below the line size {}",
                self.line_size_bytes
            )));
        }
        if !stride_bytes.is_power_of_two() {
            return Err(ModelError::InvalidArgument(format!(
                "stride {stride_bytes} is not a power of two"
            )));
        }
        let sets = self.sets_per_slice as u64;
        let stride_lines = stride_bytes / self.line_size_bytes;
        let reachable_sets = (sets / stride_lines.min(sets)).max(1);
        Ok(self.slice_count as u64 * self.associativity as u64 * reachable_sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six_core() -> CacheGeometry {
        CacheGeometry::sandy_bridge_6core()
    }

    #[test]
    fn split_zero_and_first_set() {
        let g = six_core();
        assert_eq!(
            g.split_address(0).unwrap(),
            AddressFields {
                a2: 0,
                a1: 0,
                a0: 0
            }
        );
        assert_eq!(
            g.split_address(0x40).unwrap(),
            AddressFields {
                a2: 0,
                a1: 1,
                a0: 0
            }
        );
    }

    #[test]
    fn split_trace_address() {
        // Manual extraction: 0xbfd60000 >> 17 = 0x5feb, bits 6..16 are zero.
        let f = six_core().split_address(0xbfd6_0000).unwrap();
        assert_eq!(
            f,
            AddressFields {
                a2: 0x5feb,
                a1: 0,
                a0: 0
            }
        );
    }

    #[test]
    fn split_rejects_wide_address() {
        let g = six_core();
        assert!(matches!(
            g.split_address(1 << 36),
            Err(ModelError::AddressOutOfRange { .. })
        ));
        assert!(g.split_address((1 << 36) - 1).is_ok());
    }

    #[test]
    fn derived_counts() {
        let g6 = six_core();
        assert_eq!(g6.capacity_bytes(), 15360 * 1024);
        assert_eq!(g6.total_sets(), 6 * 2048);
        assert_eq!(g6.block_count(), 1 << 30);
        assert_eq!(g6.blocks_per_set_index(), 1 << 19);
        let g4 = CacheGeometry::sandy_bridge_4core();
        assert_eq!(g4.capacity_bytes(), 10240 * 1024);
        assert_eq!(g4.block_count(), 1 << 28);
        assert_eq!(g4.blocks_per_set_index(), 1 << 17);
        assert_eq!(g4.a2_shift(), 17);
        assert_eq!(g4.a2_bits(), 17);
    }

    #[test]
    fn capacity_rows() {
        let g = six_core();
        assert_eq!(g.expected_resident_capacity(64).unwrap(), 15 << 14);
        assert_eq!(g.expected_resident_capacity(32 << 10).unwrap(), 15 << 5);
        assert_eq!(g.expected_resident_capacity(128 << 10).unwrap(), 120);
        assert_eq!(g.expected_resident_capacity(8 << 20).unwrap(), 120);
        assert!(g.expected_resident_capacity(32).is_err());
        assert!(g.expected_resident_capacity(96).is_err());
    }

    #[test]
    fn degenerate_cache_holds_one_line() {
        let g = CacheGeometry::new(64, 1, 1, 1, 30, 1 << 20).unwrap();
        assert_eq!(g.expected_resident_capacity(64).unwrap(), 1);
        assert_eq!(g.expected_resident_capacity(1 << 20).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(CacheGeometry::new(48, 20, 2048, 6, 36, 64 << 30).is_err());
        assert!(CacheGeometry::new(64, 0, 2048, 6, 36, 64 << 30).is_err());
        assert!(CacheGeometry::new(64, 20, 2000, 6, 36, 64 << 30).is_err());
        assert!(CacheGeometry::new(64, 20, 2048, 0, 36, 64 << 30).is_err());
        assert!(CacheGeometry::new(64, 20, 2048, 6, 34, 64 << 30).is_err());
        assert!(CacheGeometry::new(64, 20, 2048, 6, 36, 100).is_err());
    }
}
