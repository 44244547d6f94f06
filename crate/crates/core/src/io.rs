//! CSV forms of pipeline artifacts. Every writer has a reader that accepts
//! its output.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{ModelError, TraceError};
use crate::geometry::CacheGeometry;
use crate::graph::BlockGroups;
use crate::hash::SliceHash;
use crate::partition::PartitionPlan;
use crate::solver::{Dedup, KneeRow, MappingTable};

type Result<T> = std::result::Result<T, TraceError>;

fn bad(row: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        row,
        message: message.into(),
    }
}

fn hex(row: usize, s: &str) -> Result<u64> {
    u64::from_str_radix(s.trim_start_matches("0x"), 16)
        .map_err(|_| bad(row, format!("bad hex value {s:?}")))
}

fn dec<T: std::str::FromStr>(row: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(row, format!("bad number {s:?}")))
}

fn set_field(s: Option<u64>) -> String {
    s.map_or_else(|| "*".to_string(), |v| v.to_string())
}

fn parse_set(row: usize, s: &str) -> Result<Option<u64>> {
    if s == "*" {
        Ok(None)
    } else {
        dec(row, s).map(Some)
    }
}

/// Parse a headed CSV into rows of exactly `header.len()` fields. Row
/// numbers count the header as row 1.
fn rows<R: Read>(source: R, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(bad(1, format!("expected header {}", header.join(","))));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            if r.len() != header.len() {
                return Err(bad(i + 2, format!("expected {} fields", header.len())));
            }
            Ok((i + 2, r))
        })
        .collect()
}

fn emit<W: Write>(
    dest: W,
    header: &[&str],
    body: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(dest);
    w.write_record(header)?;
    for r in body {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub const TABLE_HEADER: [&str; 3] = ["set_index", "a2_hex", "group_id"];
pub const HASH_TABLE_HEADER: [&str; 3] = ["set_index", "a2_hex", "slice_id"];

pub fn write_tables<W: Write>(tables: &[&MappingTable], dest: W) -> Result<()> {
    emit(
        dest,
        &TABLE_HEADER,
        tables.iter().flat_map(|t| {
            t.entries
                .iter()
                .map(move |(a2, g)| vec![set_field(t.set_index), format!("{a2:x}"), g.to_string()])
        }),
    )
}

/// Tables in file order, one per distinct set index column value.
pub fn read_tables<R: Read>(source: R) -> Result<Vec<MappingTable>> {
    let mut out: Vec<MappingTable> = Vec::new();
    for (row, r) in rows(source, &TABLE_HEADER)? {
        let set_index = parse_set(row, &r[0])?;
        let (a2, g) = (hex(row, &r[1])?, dec(row, &r[2])?);
        match out.iter_mut().find(|t| t.set_index == set_index) {
            Some(t) => {
                t.entries.insert(a2, g);
            }
            None => out.push(MappingTable {
                set_index,
                entries: BTreeMap::from([(a2, g)]),
            }),
        }
    }
    Ok(out)
}

pub const DEDUP_HEADER: [&str; 2] = ["set_index", "table_ordinal"];

pub fn write_dedup<W: Write>(dedup: &Dedup, dest: W) -> Result<()> {
    emit(
        dest,
        &DEDUP_HEADER,
        dedup
            .ordinals
            .iter()
            .map(|&(s, o)| vec![set_field(s), o.to_string()]),
    )
}

pub fn read_dedup<R: Read>(source: R) -> Result<Vec<(Option<u64>, u32)>> {
    rows(source, &DEDUP_HEADER)?
        .into_iter()
        .map(|(row, r)| Ok((parse_set(row, &r[0])?, dec(row, &r[1])?)))
        .collect()
}

pub const GROUPS_HEADER: [&str; 2] = ["group_id", "address_hex"];

/// Classified groups only; unclassified blocks go to the diagnostics file.
pub fn write_groups<W: Write>(groups: &BlockGroups, dest: W) -> Result<()> {
    emit(
        dest,
        &GROUPS_HEADER,
        groups.classified().flat_map(|g| {
            g.members
                .iter()
                .map(move |m| vec![g.id.to_string(), format!("{m:x}")])
        }),
    )
}

/// Group id → members.
pub fn read_groups<R: Read>(source: R) -> Result<BTreeMap<usize, Vec<u64>>> {
    let mut out: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (row, r) in rows(source, &GROUPS_HEADER)? {
        out.entry(dec(row, &r[0])?)
            .or_default()
            .push(hex(row, &r[1])?);
    }
    Ok(out)
}

pub const DIAGNOSTICS_HEADER: [&str; 4] = ["kind", "address_hex", "other_hex", "seq"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Diagnostic {
    UnpairedWrite { address: u64, seq: u64 },
    Unclassified { address: u64 },
    ConflictEdge { a: u64, b: u64 },
}

pub fn write_diagnostics<W: Write>(diags: &[Diagnostic], dest: W) -> Result<()> {
    emit(
        dest,
        &DIAGNOSTICS_HEADER,
        diags.iter().map(|d| match d {
            Diagnostic::UnpairedWrite { address, seq } => {
                vec![
                    "unpaired-write".into(),
                    format!("{address:x}"),
                    String::new(),
                    seq.to_string(),
                ]
            }
            Diagnostic::Unclassified { address } => {
                vec![
                    "unclassified".into(),
                    format!("{address:x}"),
                    String::new(),
                    String::new(),
                ]
            }
            Diagnostic::ConflictEdge { a, b } => {
                vec![
                    "conflict-edge".into(),
                    format!("{a:x}"),
                    format!("{b:x}"),
                    String::new(),
                ]
            }
        }),
    )
}

pub fn read_diagnostics<R: Read>(source: R) -> Result<Vec<Diagnostic>> {
    rows(source, &DIAGNOSTICS_HEADER)?
        .into_iter()
        .map(|(row, r)| match &r[0] {
            "unpaired-write" => Ok(Diagnostic::UnpairedWrite {
                address: hex(row, &r[1])?,
                seq: dec(row, &r[3])?,
            }),
            "unclassified" => Ok(Diagnostic::Unclassified {
                address: hex(row, &r[1])?,
            }),
            "conflict-edge" => Ok(Diagnostic::ConflictEdge {
                a: hex(row, &r[1])?,
                b: hex(row, &r[2])?,
            }),
            other => Err(bad(row, format!("unknown diagnostic kind {other:?}"))),
        })
        .collect()
}

pub const KNEES_HEADER: [&str; 3] = ["stride", "knee_count", "capacity"];

/// Rows without a knee are written with empty knee and capacity fields.
pub fn write_knees<W: Write>(rows_: &[KneeRow], dest: W) -> Result<()> {
    emit(
        dest,
        &KNEES_HEADER,
        rows_.iter().map(|r| {
            vec![
                r.stride.to_string(),
                r.knee.map_or_else(String::new, |k| k.to_string()),
                r.capacity().map_or_else(String::new, |c| c.to_string()),
            ]
        }),
    )
}

pub fn read_knees<R: Read>(source: R) -> Result<Vec<KneeRow>> {
    rows(source, &KNEES_HEADER)?
        .into_iter()
        .map(|(row, r)| {
            let knee = if r[1].is_empty() {
                None
            } else {
                Some(dec(row, &r[1])?)
            };
            Ok(KneeRow {
                stride: dec(row, &r[0])?,
                knee,
            })
        })
        .collect()
}

pub const PLAN_HEADER: [&str; 2] = ["client", "color_id"];

pub fn write_plan<W: Write>(plan: &PartitionPlan, dest: W) -> Result<()> {
    emit(
        dest,
        &PLAN_HEADER,
        plan.clients
            .iter()
            .flat_map(|(c, colors)| colors.iter().map(move |k| vec![c.clone(), k.to_string()])),
    )
}

pub fn read_plan<R: Read>(source: R) -> Result<PartitionPlan> {
    let mut clients: Vec<(String, Vec<u32>)> = Vec::new();
    for (row, r) in rows(source, &PLAN_HEADER)? {
        let color = dec(row, &r[1])?;
        match clients.iter_mut().find(|(c, _)| c == &r[0]) {
            Some((_, v)) => v.push(color),
            None => clients.push((r[0].to_string(), vec![color])),
        }
    }
    Ok(PartitionPlan { clients })
}

/// Slice hash tables: `*` rows form a global table; numbered rows give one
/// table per set index and must cover every set index of `geom`.
pub fn read_hash_tables<R: Read>(
    source: R,
    geom: &CacheGeometry,
) -> std::result::Result<SliceHash, HashTableError> {
    let mut global: BTreeMap<u64, u32> = BTreeMap::new();
    let mut per_set: BTreeMap<u64, BTreeMap<u64, u32>> = BTreeMap::new();
    for (row, r) in rows(source, &HASH_TABLE_HEADER)? {
        let (a2, slice) = (hex(row, &r[1])?, dec(row, &r[2])?);
        match parse_set(row, &r[0])? {
            None => {
                global.insert(a2, slice);
            }
            Some(s) => {
                per_set.entry(s).or_default().insert(a2, slice);
            }
        }
    }
    match (global.is_empty(), per_set.is_empty()) {
        (false, true) => Ok(SliceHash::global_table(global, geom)?),
        (true, false) => {
            let sets = geom.sets_per_slice() as u64;
            if let Some(missing) = (0..sets).find(|s| !per_set.contains_key(s)) {
                return Err(ModelError::InvalidHash(format!(
                    "no table rows for set index {missing}"
                ))
                .into());
            }
            let mut distinct: Vec<BTreeMap<u64, u32>> = Vec::new();
            let mut table_of_set = Vec::with_capacity(sets as usize);
            for t in per_set.into_values() {
                let id = match distinct.iter().position(|d| *d == t) {
                    Some(i) => i,
                    None => {
                        distinct.push(t);
                        distinct.len() - 1
                    }
                };
                table_of_set.push(id as u32);
            }
            Ok(SliceHash::per_set_index(table_of_set, distinct, geom)?)
        }
        (true, true) => Err(ModelError::InvalidHash("hash table file has no rows".into()).into()),
        (false, false) => {
            Err(ModelError::InvalidHash("mixes global and per-set rows".into()).into())
        }
    }
}

pub fn write_hash_tables<W: Write>(
    hash: &SliceHash,
    dest: W,
) -> std::result::Result<(), HashTableError> {
    match hash {
        SliceHash::GlobalTable { table } => Ok(emit(
            dest,
            &HASH_TABLE_HEADER,
            table
                .iter()
                .map(|(a2, s)| vec!["*".into(), format!("{a2:x}"), s.to_string()]),
        )?),
        SliceHash::PerSetIndexTables {
            table_of_set,
            tables,
        } => Ok(emit(
            dest,
            &HASH_TABLE_HEADER,
            table_of_set.iter().enumerate().flat_map(|(set, &id)| {
                tables[id as usize]
                    .iter()
                    .map(move |(a2, s)| vec![set.to_string(), format!("{a2:x}"), s.to_string()])
            }),
        )?),
        other => Err(ModelError::InvalidHash(format!(
            "{} hashes have no table form",
            other.variant_name()
        ))
        .into()),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HashTableError {
    #[error(transparent)]
    Csv(#[from] TraceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
