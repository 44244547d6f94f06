//! Affine GF(2) fits of slice-id bits as functions of address bits.

use std::collections::BTreeMap;

use crate::error::{ModelError, SolverError};
use crate::geometry::CacheGeometry;
use crate::hash::{output_bits, BitFunction, SliceHash};

/// Largest number of address bits the non-linear fallback will transform.
pub const MAX_APPROX_BITS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFit {
    /// Exact solution, or the best affine approximation.
    pub function: BitFunction,
    /// Points where `function` disagrees with the data.
    pub residuals: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearFit {
    pub outputs: Vec<BitFit>,
    /// Address bits the fit was allowed to use.
    pub bits: Vec<u32>,
    pub points: usize,
    /// Points where the assembled formula gives a different slice id.
    pub residual_points: usize,
}

impl LinearFit {
    pub fn is_linear(&self) -> bool {
        self.residual_points == 0
    }

    pub fn functions(&self) -> Vec<BitFunction> {
        self.outputs.iter().map(|o| o.function).collect()
    }

    pub fn eval(&self, pa: u64) -> u32 {
        self.outputs
            .iter()
            .enumerate()
            .fold(0, |acc, (i, o)| acc | o.function.eval(pa) << i)
    }

    pub fn to_hash(&self, geom: &CacheGeometry) -> Result<SliceHash, ModelError> {
        SliceHash::linear(self.functions(), geom)
    }

    /// `slice_bit[i] = ...` lines, with a residual note for inexact fits.
    pub fn expression(&self) -> String {
        let mut lines: Vec<String> = self
            .outputs
            .iter()
            .enumerate()
            .map(|(i, o)| {
                if o.residuals == 0 {
                    format!("slice_bit[{i}] = {}", o.function)
                } else {
                    format!(
                        "slice_bit[{i}] ~ {}   (non-linear, {} residuals)",
                        o.function, o.residuals
                    )
                }
            })
            .collect();
        if lines.is_empty() {
            lines.push("slice = 0".to_string());
        }
        lines.join("\n")
    }
}

/// Fit every output bit over all a2 bits of the address.
pub fn fit_linear_gf2(
    assignments: &BTreeMap<u64, u32>,
    geom: &CacheGeometry,
) -> Result<LinearFit, SolverError> {
    let needed = geom.addr_width_bits() as usize + 1;
    if assignments.len() < needed {
        return Err(SolverError::TooFewAssignments {
            needed,
            got: assignments.len(),
        });
    }
    let bits: Vec<u32> = (geom.a2_shift()..geom.addr_width_bits()).collect();
    fit_linear_gf2_over(assignments, geom, &bits)
}

/// Row-echelon basis keyed by pivot (highest set bit), with right-hand side.
struct Echelon {
    pivots: Vec<Option<(u64, bool)>>,
    consistent: bool,
}

impl Echelon {
    fn new(width: usize) -> Self {
        Self {
            pivots: vec![None; width],
            consistent: true,
        }
    }

    fn insert(&mut self, mut v: u64, mut rhs: bool) {
        while v != 0 {
            let top = 63 - v.leading_zeros() as usize;
            match self.pivots[top] {
                Some((pv, pr)) => {
                    v ^= pv;
                    rhs ^= pr;
                }
                None => {
                    self.pivots[top] = Some((v, rhs));
                    return;
                }
            }
        }
        if rhs {
            self.consistent = false;
        }
    }

    fn free(&self) -> Vec<usize> {
        (0..self.pivots.len())
            .filter(|&i| self.pivots[i].is_none())
            .collect()
    }

    /// Unique solution of a full-rank consistent system.
    fn solve(&self) -> u64 {
        let mut x = 0u64;
        for (b, p) in self.pivots.iter().enumerate() {
            let (v, r) = p.expect("full rank");
            let rest = v & !(1u64 << b) & x;
            if r ^ (rest.count_ones() & 1 == 1) {
                x |= 1 << b;
            }
        }
        x
    }
}

fn gather(pa: u64, bits: &[u32]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (j, &b)| acc | (pa >> b & 1) << j)
}

fn scatter(x: u64, bits: &[u32]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (j, &b)| acc | (x >> j & 1) << b)
}

/// Minimum-residual affine approximation via the Walsh–Hadamard transform.
fn best_affine(points: &[(u64, bool)], k: usize) -> (u64, bool, usize) {
    let mut w = vec![0i64; 1 << k];
    for &(x, y) in points {
        w[x as usize] += if y { -1 } else { 1 };
    }
    let mut h = 1;
    while h < w.len() {
        for i in (0..w.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (w[j], w[j + h]);
                w[j] = a + b;
                w[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let (best, &val) = w
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.abs().cmp(&b.abs()).then(ib.cmp(ia)))
        .expect("non-empty transform");
    let residuals = (points.len() as i64 - val.abs()) as usize / 2;
    (best as u64, val < 0, residuals)
}

/// Fit every output bit over the given physical address bits plus an affine
/// constant. Bits outside `bits` are treated as constant.
pub fn fit_linear_gf2_over(
    assignments: &BTreeMap<u64, u32>,
    geom: &CacheGeometry,
    bits: &[u32],
) -> Result<LinearFit, SolverError> {
    let k = bits.len();
    if k > 62 {
        return Err(SolverError::InvalidArgument(format!("{k} unknown bits")));
    }
    if let Some(&b) = bits
        .iter()
        .find(|&&b| b < geom.a2_shift() || b >= geom.addr_width_bits())
    {
        return Err(SolverError::InvalidArgument(format!(
            "bit {b} is not an a2 bit"
        )));
    }
    let needed = k + 1;
    if assignments.len() < needed {
        return Err(SolverError::TooFewAssignments {
            needed,
            got: assignments.len(),
        });
    }
    let slice_count = geom.slice_count();
    if let Some(&s) = assignments.values().find(|&&s| s as usize >= slice_count) {
        return Err(SolverError::SliceOutOfRange {
            slice: s,
            slice_count,
        });
    }
    let rows: Vec<(u64, u32)> = assignments
        .iter()
        .map(|(&pa, &s)| (gather(pa, bits) | 1 << k, s))
        .collect();

    let mut rank = Echelon::new(k + 1);
    for &(x, _) in &rows {
        rank.insert(x, false);
    }
    let free = rank.free();
    if !free.is_empty() {
        let free_bits = free.iter().filter(|&&j| j < k).map(|&j| bits[j]).collect();
        return Err(SolverError::Underdetermined { free_bits });
    }

    let outputs = (0..output_bits(slice_count))
        .map(|i| {
            let mut e = Echelon::new(k + 1);
            for &(x, s) in &rows {
                e.insert(x, s >> i & 1 == 1);
            }
            if e.consistent {
                let x = e.solve();
                BitFit {
                    function: BitFunction::new(scatter(x & ((1 << k) - 1), bits), x >> k & 1 == 1),
                    residuals: 0,
                }
            } else if k <= MAX_APPROX_BITS {
                let pts: Vec<(u64, bool)> = rows
                    .iter()
                    .map(|&(x, s)| (x & ((1 << k) - 1), s >> i & 1 == 1))
                    .collect();
                let (a, affine, residuals) = best_affine(&pts, k);
                BitFit {
                    function: BitFunction::new(scatter(a, bits), affine),
                    residuals,
                }
            } else {
                // Too wide to search: report the constant majority fit.
                let ones = rows.iter().filter(|&&(_, s)| s >> i & 1 == 1).count();
                let affine = 2 * ones > rows.len();
                let residuals = if affine { rows.len() - ones } else { ones };
                BitFit {
                    function: BitFunction::new(0, affine),
                    residuals,
                }
            }
        })
        .collect::<Vec<_>>();

    let mut fit = LinearFit {
        outputs,
        bits: bits.to_vec(),
        points: rows.len(),
        residual_points: 0,
    };
    fit.residual_points = assignments
        .iter()
        .filter(|(&pa, &s)| fit.eval(pa) != s)
        .count();
    Ok(fit)
}

/// Relabel canonical group ids so that, if the partition is affine, the
/// labels become the affine image. Uses the XOR structure of the a2 values:
/// in an affine partition the class of `x ^ y ^ z` is determined by the
/// classes of `x`, `y` and `z`. Returns `None` when that structure is absent
/// or the group count is not a power of two.
pub fn affine_labeling(table: &BTreeMap<u64, u32>) -> Option<BTreeMap<u32, u32>> {
    let groups = table.values().max().map_or(0, |&m| m + 1);
    if groups == 0 || !groups.is_power_of_two() {
        return None;
    }
    let mut rep: BTreeMap<u32, u64> = BTreeMap::new();
    for (&a2, &g) in table {
        rep.entry(g).or_insert(a2);
    }
    let origin = rep[&0];
    let combine =
        |a: u32, b: u32| -> Option<u32> { table.get(&(rep[&a] ^ rep[&b] ^ origin)).copied() };
    let mut phi: BTreeMap<u32, u32> = BTreeMap::from([(0, 0)]);
    let mut next_basis = 0u32;
    for g in 0..groups {
        if phi.contains_key(&g) {
            continue;
        }
        if 1 << next_basis >= groups {
            return None;
        }
        let v = 1 << next_basis;
        next_basis += 1;
        let known: Vec<(u32, u32)> = phi.iter().map(|(&a, &b)| (a, b)).collect();
        phi.insert(g, v);
        for (a, va) in known {
            let c = combine(a, g)?;
            match phi.get(&c) {
                Some(&vc) if vc != va ^ v => return None,
                Some(_) => {}
                None => {
                    phi.insert(c, va ^ v);
                }
            }
        }
    }
    // Check closure on all pairs.
    for a in 0..groups {
        for b in 0..groups {
            if phi[&combine(a, b)?] != phi[&a] ^ phi[&b] {
                return None;
            }
        }
    }
    Some(phi)
}
