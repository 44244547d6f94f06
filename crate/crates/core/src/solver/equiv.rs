use std::collections::BTreeMap;

use crate::error::ModelError;
use crate::hash::SliceLookup;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    /// `perm[s1] = s2` for every slice id of the first hash seen on the domain.
    Yes { perm: BTreeMap<u32, u32> },
    /// An address where no consistent relabeling exists.
    No { witness: u64 },
}

impl Equivalence {
    pub fn is_yes(&self) -> bool {
        matches!(self, Equivalence::Yes { .. })
    }

    /// `0->2 1->0 ...`
    pub fn describe(&self) -> String {
        match self {
            Equivalence::Yes { perm } => {
                let p: Vec<String> = perm.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                format!("EQUIVALENT (perm={})", p.join(" "))
            }
            Equivalence::No { witness } => format!("NOT EQUIVALENT (witness={witness:#x})"),
        }
    }
}

/// Look for a slice relabeling `π` with `π(h1(a)) = h2(a)` on `domain`.
///
/// The first address carrying each `h1` label anchors `π` for that label, so
/// the mapping is forced and the scan is linear in the domain size.
pub fn equivalent_up_to_permutation<A, B>(
    h1: &A,
    h2: &B,
    domain: &[u64],
) -> Result<Equivalence, ModelError>
where
    A: SliceLookup + ?Sized,
    B: SliceLookup + ?Sized,
{
    let mut forward: BTreeMap<u32, u32> = BTreeMap::new();
    let mut backward: BTreeMap<u32, u32> = BTreeMap::new();
    for &a in domain {
        let (s1, s2) = (h1.lookup(a)?, h2.lookup(a)?);
        match (forward.get(&s1), backward.get(&s2)) {
            (Some(&t), _) if t != s2 => return Ok(Equivalence::No { witness: a }),
            (None, Some(_)) => return Ok(Equivalence::No { witness: a }),
            (None, None) => {
                forward.insert(s1, s2);
                backward.insert(s2, s1);
            }
            _ => {}
        }
    }
    Ok(Equivalence::Yes { perm: forward })
}

/// One way of reading a 2-bit formula against a 4-column table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    /// Formula evaluated on the a2 value with its low `a2_width` bits reversed.
    pub reversed_a2: bool,
    /// Slice id taken as `2*bit_a0 + bit_a1` instead of `2*bit_a1 + bit_a0`.
    pub swapped_outputs: bool,
    /// `perm[formula value] = table label`.
    pub perm: [u32; 4],
    pub agree: usize,
    pub total: usize,
}

impl Interpretation {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Every interpretation, in a fixed enumeration order.
    pub interpretations: Vec<Interpretation>,
}

impl ConsistencyReport {
    /// Highest agreement; ties go to the earliest interpretation.
    pub fn best(&self) -> Option<&Interpretation> {
        self.interpretations
            .iter()
            .reduce(|best, i| if i.agree > best.agree { i } else { best })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("reversed_a2,swapped_outputs,perm,agree,total,fraction\n");
        for i in &self.interpretations {
            out.push_str(&format!(
                "{},{},{}{}{}{},{},{},{:.6}\n",
                i.reversed_a2,
                i.swapped_outputs,
                i.perm[0],
                i.perm[1],
                i.perm[2],
                i.perm[3],
                i.agree,
                i.total,
                i.fraction()
            ));
        }
        out
    }
}

fn permutations4() -> Vec<[u32; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    if p.iter()
                        .all(|&x| !std::mem::replace(&mut seen[x as usize], true))
                    {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn reverse_low(x: u64, width: u32) -> u64 {
    let low = x & ((1 << width) - 1);
    (x & !((1 << width) - 1)) | low.reverse_bits() >> (64 - width)
}

/// Score a `(bit_a1, bit_a0)` formula against a 4-label table under both a2
/// bit orders, all 24 label permutations and both output bit orders.
pub fn consistency_report<F>(
    formula: F,
    table: &BTreeMap<u64, u32>,
    a2_width: u32,
) -> ConsistencyReport
where
    F: Fn(u64) -> (u8, u8),
{
    let mut interpretations = Vec::with_capacity(96);
    for reversed_a2 in [false, true] {
        let values: Vec<((u8, u8), u32)> = table
            .iter()
            .map(|(&a2, &label)| {
                let x = if reversed_a2 {
                    reverse_low(a2, a2_width)
                } else {
                    a2
                };
                (formula(x), label)
            })
            .collect();
        for swapped_outputs in [false, true] {
            for perm in permutations4() {
                let agree = values
                    .iter()
                    .filter(|&&((b1, b0), label)| {
                        let v = if swapped_outputs {
                            (b0 << 1) | b1
                        } else {
                            (b1 << 1) | b0
                        };
                        perm[v as usize] == label
                    })
                    .count();
                interpretations.push(Interpretation {
                    reversed_a2,
                    swapped_outputs,
                    perm,
                    agree,
                    total: values.len(),
                });
            }
        }
    }
    ConsistencyReport { interpretations }
}
