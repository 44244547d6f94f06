//! Capacity knees of strided pointer chases, and the set-index width they
//! reveal.

use crate::error::SolverError;
use crate::geometry::CacheGeometry;
use crate::probe::{measure, threshold, LatencyOracle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KneeRow {
    pub stride: u64,
    /// Smallest block count whose latency crosses the threshold; `None` when
    /// no tried size did.
    pub knee: Option<u64>,
}

impl KneeRow {
    /// Lines the cache holds at this stride (`knee - 1`).
    pub fn capacity(&self) -> Option<u64> {
        self.knee.map(|k| k - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrideScan {
    pub rows: Vec<KneeRow>,
    pub offset_bits: u32,
    /// `log2(stride / line)` of the first stride on the saturated plateau.
    pub set_index_bits: Option<u32>,
    /// Capacity on the plateau (slices × ways on a well-formed cache).
    pub saturation_capacity: Option<u64>,
}

/// Powers of two from one line up to twice the set-index span.
pub fn default_strides(geom: &CacheGeometry) -> Vec<u64> {
    let top = geom.line_size_bytes() * geom.sets_per_slice() as u64 * 2;
    std::iter::successors(Some(geom.line_size_bytes()), |s| Some(s * 2))
        .take_while(|&s| s <= top)
        .collect()
}

/// Powers of two from 1 past twice the cache's line count.
pub fn default_array_sizes(geom: &CacheGeometry) -> Vec<u64> {
    let top = geom.total_lines() * 2;
    let mut v: Vec<u64> = std::iter::successors(Some(1u64), |s| Some(s * 2))
        .take_while(|&s| s <= top)
        .collect();
    v.push(v.last().copied().unwrap_or(1) * 2);
    v
}

fn blocks(stride: u64, n: u64) -> Vec<u64> {
    (0..n).map(|i| i * stride).collect()
}

/// For every stride, find the smallest block count whose average latency
/// crosses the overflow threshold. Sizes are tried in ascending order; the
/// first crossing is then narrowed by bisection against the previous size.
pub fn stride_scan<O: LatencyOracle + ?Sized>(
    oracle: &mut O,
    strides: &[u64],
    array_sizes: &[u64],
    repeats: usize,
) -> Result<StrideScan, SolverError> {
    let geom = *oracle.geometry();
    let model = *oracle.model();
    let ways = geom.associativity();
    let mut sizes: Vec<u64> = array_sizes.iter().copied().filter(|&n| n > 0).collect();
    sizes.sort_unstable();
    sizes.dedup();

    let mut rows = Vec::with_capacity(strides.len());
    for &stride in strides {
        if stride < geom.line_size_bytes() || !stride.is_power_of_two() {
            return Err(SolverError::InvalidArgument(format!(
                "stride {stride} must be a power of two of at least one line"
            )));
        }
        let fits = |n: u64| {
            (n - 1)
                .checked_mul(stride)
                .is_some_and(|top| top < geom.memory_bytes())
        };
        let mut crosses = |n: u64| -> Result<bool, SolverError> {
            let b = blocks(stride, n);
            Ok(measure(oracle, &b, repeats)? > threshold(&model, ways, n as usize))
        };
        let mut prev = 0u64;
        let mut knee = None;
        for &n in sizes.iter().take_while(|&&n| fits(n)) {
            if crosses(n)? {
                let (mut lo, mut hi) = (prev + 1, n);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if crosses(mid)? {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                knee = Some(hi);
                break;
            }
            prev = n;
        }
        rows.push(KneeRow { stride, knee });
    }

    let mut ascending: Vec<&KneeRow> = rows.iter().collect();
    ascending.sort_by_key(|r| r.stride);
    let last = ascending.last().and_then(|r| r.capacity());
    let mut plateau_start = None;
    if let Some(cap) = last {
        for r in ascending.iter().rev() {
            if r.capacity() == Some(cap) {
                plateau_start = Some(r.stride);
            } else {
                break;
            }
        }
    }
    let plateau_len = ascending
        .iter()
        .filter(|r| r.capacity() == last && last.is_some())
        .count();
    let saturated = plateau_len >= 2 || (plateau_len == 1 && geom.sets_per_slice() == 1);
    let set_index_bits = plateau_start
        .filter(|_| saturated)
        .map(|s| (s / geom.line_size_bytes()).trailing_zeros());
    Ok(StrideScan {
        rows,
        offset_bits: geom.offset_bits(),
        set_index_bits,
        saturation_capacity: if saturated { last } else { None },
    })
}
