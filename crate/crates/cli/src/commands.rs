use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use slicecrack::config::{ConfigError, RunConfig};
use slicecrack::graph::{conflict_edges, connected_components, extract_edges, score_against};
use slicecrack::io::{self, Diagnostic};
use slicecrack::partition::{plan_partition, sample_addresses, verify_disjoint, Disjointness};
use slicecrack::probe::crack_without_trace;
use slicecrack::sandy_bridge::four_core_table;
use slicecrack::sim::{read_trace_file, run_workload_into, write_trace};
use slicecrack::solver::{
    self, consistency_report, default_array_sizes, default_strides, stride_scan, CrackConfig,
    CrackResult, StrideScan,
};
use slicecrack::{
    eval_four_core_formula, BlockGroups, CacheGeometry, ColorScheme, DeskOracle, EquitableOracle,
    LatencyModel, MemoryTrace, SimError, SliceHash, SlicedCache, SolverError,
    FOUR_CORE_FORMULA_BITS,
};

use crate::{CliError, Common};

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::EmptyWorkload => {
            CliError::Usage("no events: workload has no block addresses".into())
        }
        e => usage(e),
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::MixedSetIndex { .. } | SolverError::TooManyGroups { .. } => {
            CliError::Invariant(e.to_string())
        }
        SolverError::Sim(s) => sim_error(s),
        e => usage(e),
    }
}

fn config_error(e: ConfigError) -> CliError {
    match e {
        ConfigError::Sim(s) => sim_error(s),
        e => usage(e),
    }
}

struct Run {
    cfg: RunConfig,
    geom: CacheGeometry,
    seed: u64,
    noise: Option<f64>,
    out: PathBuf,
}

impl Run {
    fn open(common: &Common) -> Result<Self> {
        let cfg = RunConfig::load(&common.config).map_err(config_error)?;
        let seed = common.seed.or(cfg.seed).ok_or_else(|| {
            CliError::Usage("a seed is required (--seed or `seed` in the config)".into())
        })?;
        let geom = cfg.geometry().map_err(config_error)?;
        fs::create_dir_all(&common.out)
            .map_err(|e| usage(format!("{}: {e}", common.out.display())))?;
        Ok(Self {
            cfg,
            geom,
            seed,
            noise: common.noise,
            out: common.out.clone(),
        })
    }

    fn hash(&self) -> Result<SliceHash> {
        self.cfg.hash(&self.geom, self.seed).map_err(config_error)
    }

    /// The configured latency model; jitter draws from the run seed.
    fn model(&self) -> Result<LatencyModel> {
        let base = self.cfg.latency;
        let noise = self.noise.unwrap_or(base.noise_stddev);
        let m = base.with_noise(noise, base.rng_seed ^ self.seed);
        m.validate().map_err(usage)?;
        Ok(m)
    }

    fn crack_config(&self) -> CrackConfig {
        let c = &self.cfg.crack;
        let mut cfg = CrackConfig::new(c.domain(), c.set_indexes.clone(), self.seed);
        cfg.rounds = c.rounds;
        cfg.laps = c.laps;
        cfg.max_pair_gap = c.max_pair_gap;
        cfg.idle_gap = c.idle_gap;
        cfg.verify_samples = c.verify_samples;
        cfg
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.flush())
            .map_err(usage)
    }
}

fn scan(run: &Run) -> Result<StrideScan> {
    let mut oracle = EquitableOracle::new(run.geom, run.model()?).map_err(usage)?;
    let strides = run
        .cfg
        .scan
        .strides
        .clone()
        .unwrap_or_else(|| default_strides(&run.geom));
    let sizes = run
        .cfg
        .scan
        .array_sizes
        .clone()
        .unwrap_or_else(|| default_array_sizes(&run.geom));
    stride_scan(&mut oracle, &strides, &sizes, run.cfg.scan.repeats).map_err(solver_error)
}

pub fn stride_scan_cmd(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let scan = scan(&run)?;
    io::write_knees(&scan.rows, run.create("knees.csv")?).map_err(usage)?;
    for r in &scan.rows {
        match r.knee {
            Some(k) => println!(
                "stride {:>8}  knee {:>7}  capacity {:>7}",
                r.stride,
                k,
                k - 1
            ),
            None => println!("stride {:>8}  no knee", r.stride),
        }
    }
    println!("offset bits: {}", scan.offset_bits);
    if let (Some(b), Some(c)) = (scan.set_index_bits, scan.saturation_capacity) {
        println!("set index bits: {b}  saturated capacity: {c}");
    }
    Ok(())
}

fn simulate(run: &Run) -> Result<(Vec<u64>, MemoryTrace)> {
    let hash = run.hash()?;
    let (workload, policy) = run.cfg.workload(run.seed).map_err(config_error)?;
    let mut cache = SlicedCache::new(run.geom, hash, policy).map_err(sim_error)?;
    let mut trace = MemoryTrace::new();
    let stats = run_workload_into(&mut cache, &workload, &mut trace).map_err(sim_error)?;
    if trace.is_empty() {
        return Err(CliError::Usage(
            "no events: the workload produced an empty trace".into(),
        ));
    }
    println!(
        "{} accesses, {} misses, {} write-backs, {} events",
        stats.accesses,
        stats.misses,
        stats.write_backs,
        trace.len()
    );
    Ok((workload.block_addresses, trace))
}

pub fn gen_trace(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let (_, trace) = simulate(&run)?;
    write_trace(&trace, run.create("trace.csv")?).map_err(usage)
}

fn diagnostics(
    groups: &BlockGroups,
    unpaired: &[slicecrack::TraceEvent],
    conflicts: &[(u64, u64)],
) -> Vec<Diagnostic> {
    let mut d: Vec<Diagnostic> = unpaired
        .iter()
        .map(|e| Diagnostic::UnpairedWrite {
            address: e.address,
            seq: e.seq,
        })
        .collect();
    d.extend(
        groups
            .unclassified()
            .map(|address| Diagnostic::Unclassified { address }),
    );
    d.extend(
        conflicts
            .iter()
            .map(|&(a, b)| Diagnostic::ConflictEdge { a, b }),
    );
    d
}

fn check_purity(run: &Run, hash: &SliceHash, groups: &BlockGroups, blocks: &[u64]) -> Result<()> {
    let score = score_against(groups, blocks, |b| hash.location(b, &run.geom)).map_err(usage)?;
    println!(
        "purity {:.4}  coverage {:.4}  ({} groups over {} locations)",
        score.purity, score.coverage, score.classified_groups, score.locations
    );
    if score.purity < 1.0 {
        return Err(CliError::Invariant(format!(
            "classification purity {:.4} < 1",
            score.purity
        )));
    }
    Ok(())
}

pub fn classify(common: &Common, trace_path: Option<&Path>) -> Result<()> {
    let run = Run::open(common)?;
    let (blocks, trace, simulated) = match trace_path {
        Some(p) => {
            let trace = read_trace_file(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if trace.is_empty() {
                return Err(CliError::Usage("no events in the input trace".into()));
            }
            let blocks: BTreeSet<u64> = trace.reads().map(|e| e.address).collect();
            (blocks.into_iter().collect::<Vec<_>>(), trace, false)
        }
        None => {
            let (b, t) = simulate(&run)?;
            (b, t, true)
        }
    };
    let ex = extract_edges(&trace, run.cfg.crack.max_pair_gap);
    let groups = connected_components(&ex.edges, blocks.iter().copied());
    let conflicts = conflict_edges(&ex.edges);
    println!(
        "{} edges, {} groups, {} unclassified, {} unpaired writes",
        ex.edges.len(),
        groups.classified().count(),
        groups.unclassified().count(),
        ex.unpaired_writes.len()
    );
    io::write_groups(&groups, run.create("groups.csv")?).map_err(usage)?;
    io::write_diagnostics(
        &diagnostics(&groups, &ex.unpaired_writes, &conflicts),
        run.create("diagnostics.csv")?,
    )
    .map_err(usage)?;
    if simulated {
        check_purity(&run, &run.hash()?, &groups, &blocks)?;
    }
    Ok(())
}

fn formula_text(result: &CrackResult) -> String {
    match &result.formula {
        Some(f) if f.is_linear() => format!("linear\n{}\n", f.expression()),
        Some(f) => format!(
            "non-linear (best affine approximation)\n{}\n",
            f.expression()
        ),
        None => format!("none: {} distinct tables\n", result.distinct_tables()),
    }
}

fn verdict_text(result: &CrackResult) -> String {
    let mut s = String::new();
    for (set, e) in &result.equivalence {
        match set {
            None => writeln!(s, "{}", e.describe()),
            Some(i) => writeln!(s, "set {i}: {}", e.describe()),
        }
        .expect("string write");
    }
    s
}

fn run_crack(run: &Run) -> Result<(SliceHash, CrackResult)> {
    let hash = run.hash()?;
    let cfg = run.crack_config();
    if cfg.set_indexes.is_empty() {
        return Err(CliError::Usage("no events: no set indexes to probe".into()));
    }
    let result = solver::crack(&run.geom, &hash, &cfg).map_err(solver_error)?;
    if result.runs.iter().all(|r| r.events == 0) {
        return Err(CliError::Usage(
            "no events: the workload produced an empty trace".into(),
        ));
    }
    Ok((hash, result))
}

pub fn crack(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let (hash, result) = run_crack(&run)?;

    let tables = result.tables();
    io::write_tables(&tables, run.create("tables.csv")?).map_err(usage)?;
    io::write_dedup(&result.dedup, run.create("dedup.csv")?).map_err(usage)?;
    io::write_groups(&result.all_groups(), run.create("groups.csv")?).map_err(usage)?;
    let mut diags = Vec::new();
    for r in &result.runs {
        diags.extend(diagnostics(
            &r.groups,
            &r.unpaired_writes,
            &r.conflict_edges,
        ));
    }
    io::write_diagnostics(&diags, run.create("diagnostics.csv")?).map_err(usage)?;
    let formula = formula_text(&result);
    run.write_text("formula.txt", &formula)?;
    let verdict = verdict_text(&result);
    run.write_text("verdict.txt", &verdict)?;

    println!("distinct tables: {}", result.distinct_tables());
    print!("formula: {formula}{verdict}");

    for r in &result.runs {
        check_purity(&run, &hash, &r.groups, &r.blocks)?;
    }
    if !result.is_equivalent() {
        return Err(CliError::Invariant(
            "recovered mapping disagrees with the planted hash".into(),
        ));
    }
    Ok(())
}

pub fn probe(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let hash = run.hash()?;
    let p = &run.cfg.probe;
    if p.set_index >= run.geom.sets_per_slice() as u64 {
        return Err(CliError::Usage(format!(
            "probe set index {} out of range",
            p.set_index
        )));
    }
    let pool = run.cfg.crack.domain().blocks(&run.geom, p.set_index);
    let mut oracle =
        DeskOracle::new(run.geom, hash.clone(), run.model()?, p.laps).map_err(usage)?;
    let outcome = crack_without_trace(&mut oracle, &pool, run.geom.associativity(), p.repeats)
        .map_err(usage)?;
    io::write_groups(&outcome.groups, run.create("probe_groups.csv")?).map_err(usage)?;
    println!(
        "{} groups, {} unclassified, {} probe calls",
        outcome.groups.classified().count(),
        outcome.groups.unclassified().count(),
        outcome.probe_calls
    );
    check_purity(&run, &hash, &outcome.groups, &pool)
}

/// Random line addresses, with a2 drawn from the table's rows when the hash
/// is only defined on a table.
fn partition_sample(run: &Run, hash: &SliceHash, n: usize) -> Vec<u64> {
    let g = &run.geom;
    let mut sample = sample_addresses(g, n, run.seed);
    let rows = |a1: u64| -> Option<Vec<u64>> {
        match hash {
            SliceHash::GlobalTable { table } => Some(table.keys().copied().collect()),
            SliceHash::PerSetIndexTables {
                table_of_set,
                tables,
            } => Some(
                tables[table_of_set[a1 as usize] as usize]
                    .keys()
                    .copied()
                    .collect(),
            ),
            _ => None,
        }
    };
    for pa in &mut sample {
        let f = g.split_address(*pa).expect("sampled below memory size");
        if let Some(keys) = rows(f.a1).filter(|k| !k.is_empty()) {
            *pa = g.block_address(keys[(f.a2 % keys.len() as u64) as usize], f.a1);
        }
    }
    sample
}

pub fn partition(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let section = run
        .cfg
        .partition
        .as_ref()
        .ok_or_else(|| usage("missing [partition] section"))?;
    let hash = run.hash()?;
    let scheme = ColorScheme::new(section.page_size, &run.geom).map_err(usage)?;
    let demands: Vec<(String, u64)> = section
        .clients
        .iter()
        .map(|c| (c.name.clone(), c.colors))
        .collect();
    let plan = plan_partition(&demands, &scheme).map_err(usage)?;
    io::write_plan(&plan, run.create("plan.csv")?).map_err(usage)?;
    println!(
        "{} colors over bits {:?}",
        scheme.color_count(),
        scheme.color_bits()
    );
    let sample = partition_sample(&run, &hash, section.sample);
    match verify_disjoint(&plan, &scheme, &run.geom, &hash, &sample).map_err(usage)? {
        Disjointness::Ok => {
            println!("disjoint: ok");
            Ok(())
        }
        Disjointness::Violation {
            first,
            second,
            slice,
            set_index,
        } => Err(CliError::Invariant(format!(
            "disjoint: violated by {first:#x} and {second:#x} at slice {slice}, set {set_index}"
        ))),
    }
}

pub fn report(common: &Common) -> Result<()> {
    let run = Run::open(common)?;
    let g = &run.geom;
    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(&t);
        s.push('\n');
    };
    line("# geometry".into());
    line(format!(
        "line {} B, {} ways, {} sets/slice, {} slices, {} address bits, {} B memory",
        g.line_size_bytes(),
        g.associativity(),
        g.sets_per_slice(),
        g.slice_count(),
        g.addr_width_bits(),
        g.memory_bytes()
    ));
    line(format!(
        "capacity {} B, {} sets, {} blocks, {} blocks per set index, a2 = pa >> {}",
        g.capacity_bytes(),
        g.total_sets(),
        g.block_count(),
        g.blocks_per_set_index(),
        g.a2_shift()
    ));

    let scan = scan(&run)?;
    line(String::new());
    line("# knees (stride, knee, capacity)".into());
    for r in &scan.rows {
        line(format!(
            "{},{},{}",
            r.stride,
            r.knee.map_or(String::new(), |k| k.to_string()),
            r.capacity().map_or(String::new(), |c| c.to_string())
        ));
    }
    line(format!(
        "offset bits {}, set index bits {}, saturated capacity {}",
        scan.offset_bits,
        scan.set_index_bits.map_or("?".into(), |b| b.to_string()),
        scan.saturation_capacity
            .map_or("?".into(), |c| c.to_string())
    ));

    if run.cfg.hash.is_some() {
        let (_, result) = run_crack(&run)?;
        line(String::new());
        line("# tables".into());
        for r in &result.runs {
            let sizes: Vec<String> = r
                .table
                .columns()
                .iter()
                .map(|c| c.len().to_string())
                .collect();
            line(format!(
                "set {}: {} groups, sizes [{}], table {}",
                r.set_index,
                r.table.group_count(),
                sizes.join(" "),
                result.dedup.ordinal_of(Some(r.set_index)).unwrap_or(0)
            ));
        }
        line(format!("distinct tables: {}", result.distinct_tables()));
        line(String::new());
        line("# formula".into());
        s.push_str(&formula_text(&result));
        s.push_str(&verdict_text(&result));
    }

    let table = four_core_table();
    let consistency = consistency_report(eval_four_core_formula, &table, FOUR_CORE_FORMULA_BITS);
    s.push('\n');
    s.push_str("# four-core formula against the four-core reference table\n");
    if let Some(best) = consistency.best() {
        writeln!(
            s,
            "best: reversed_a2={} swapped_outputs={} perm={:?} agree {}/{}",
            best.reversed_a2, best.swapped_outputs, best.perm, best.agree, best.total
        )
        .expect("string write");
    }
    s.push_str(&consistency.to_text());

    run.write_text("report.txt", &s)?;
    print!("{s}");
    Ok(())
}
