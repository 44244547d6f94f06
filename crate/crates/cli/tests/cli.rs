use std::collections::BTreeSet;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slicecrack::io;
use slicecrack::sim::read_trace_file;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slicecrack"))
}

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        stderr(o)
    );
}

const LINEAR4: &str = r#"
seed = 42

[geometry]
preset = "sandy-bridge-4core"

[hash]
variant = "planted"
family = "linear"

[crack]
a2_bits = 9
set_indexes = [0, 1, 5]

[workload]
addresses = { kind = "bits", base = 0x80000000, bits = [17, 18, 19, 20, 21, 22, 23, 24, 25] }

[probe]
set_index = 5

[partition]
clients = [{ name = "A", colors = 16 }, { name = "B", colors = 16 }]
sample = 20000
"#;

const THRASH21: &str = r#"
seed = 1

[geometry]
preset = "sandy-bridge-4core"
slices = 1

[hash]
variant = "linear"
outputs = []

[workload]
addresses = { kind = "stride", base = 0, stride = 131072, count = 21 }
laps = 3
"#;

#[test]
fn six_slice_scan_has_the_128k_row() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        "seed = 1\n[geometry]\npreset = \"sandy-bridge-6core\"\n",
    );
    let o = run("stride-scan", &cfg, &s.out("o"), &[]);
    ok(&o);
    let text = fs::read_to_string(s.out("o/knees.csv")).unwrap();
    assert!(text.lines().any(|l| l == "131072,121,120"), "{text}");
}

#[test]
fn one_line_cache_knees_at_two() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        "seed = 1\n[geometry]\nline_size = 64\nassociativity = 1\nsets_per_slice = 1\nslices = 1\naddr_bits = 30\nmemory = 1073741824\n",
    );
    let o = run("stride-scan", &cfg, &s.out("o"), &[]);
    ok(&o);
    let rows = io::read_knees(File::open(s.out("o/knees.csv")).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.knee == Some(2)), "{rows:?}");
}

#[test]
fn four_slice_line_stride_capacity() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        "seed = 1\n[geometry]\npreset = \"sandy-bridge-4core\"\n[scan]\nstrides = [64]\n",
    );
    ok(&run("stride-scan", &cfg, &s.out("o"), &[]));
    let rows = io::read_knees(File::open(s.out("o/knees.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].capacity(), Some(10 * (1 << 20) / 64));
}

#[test]
fn crack_linear_four_slice() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    let o = run("crack", &cfg, &s.out("o"), &[]);
    ok(&o);
    let out = stdout(&o);
    assert!(out.contains("distinct tables: 1"), "{out}");
    assert!(out.contains("EQUIVALENT (perm="), "{out}");
    assert!(!out.contains("NOT EQUIVALENT"), "{out}");
    assert!(fs::read_to_string(s.out("o/formula.txt"))
        .unwrap()
        .starts_with("linear\n"));
}

#[test]
fn crack_set_dependent_gives_32_tables() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        &format!(
            "seed = 3\n[geometry]\npreset = \"sandy-bridge-6core\"\n[hash]\nvariant = \"planted\"\nfamily = \"random-table\"\nset_dependent = true\n[crack]\na2_bits = 7\nset_indexes = {:?}\n",
            (0..128).collect::<Vec<u64>>()
        ),
    );
    let o = run("crack", &cfg, &s.out("o"), &[]);
    ok(&o);
    assert!(stdout(&o).contains("distinct tables: 32"));
    let dedup = io::read_dedup(File::open(s.out("o/dedup.csv")).unwrap()).unwrap();
    assert_eq!(dedup.len(), 128);
    assert_eq!(dedup.iter().map(|d| d.1).collect::<BTreeSet<_>>().len(), 32);
}

#[test]
fn empty_workload_fails_with_no_events() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        "seed = 1\n[geometry]\npreset = \"sandy-bridge-4core\"\n[hash]\nvariant = \"four-core\"\n[crack]\nset_indexes = []\n[workload]\naddresses = { kind = \"list\", addresses = [] }\n",
    );
    for cmd in ["crack", "gen-trace", "classify"] {
        let o = run(cmd, &cfg, &s.out("o"), &[]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(stderr(&o).contains("no events"), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn config_and_usage_errors_exit_1() {
    let s = Sandbox::new();
    let no_seed = s.config("a.toml", "[geometry]\npreset = \"sandy-bridge-4core\"\n");
    let o = run("stride-scan", &no_seed, &s.out("o"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
    // The flag supplies the missing seed.
    ok(&run("stride-scan", &no_seed, &s.out("o"), &["--seed", "5"]));

    let bad = s.config("b.toml", "seed = 1\n[geometry]\npreset = \"pentium\"\n");
    assert_eq!(
        run("stride-scan", &bad, &s.out("o"), &[]).status.code(),
        Some(1)
    );
    let missing = s.dir.path().join("nope.toml");
    assert_eq!(
        run("crack", &missing, &s.out("o"), &[]).status.code(),
        Some(1)
    );
    let unknown = s.config(
        "c.toml",
        "seed = 1\nfoo = 2\n[geometry]\npreset = \"sandy-bridge-4core\"\n",
    );
    assert_eq!(
        run("stride-scan", &unknown, &s.out("o"), &[]).status.code(),
        Some(1)
    );
    let negative = s.config(
        "d.toml",
        "seed = 1\n[geometry]\npreset = \"sandy-bridge-4core\"\n",
    );
    assert_eq!(
        run("stride-scan", &negative, &s.out("o"), &["--noise", "-1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn thrash_trace_alternates_after_warm_up() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", THRASH21);
    ok(&run("gen-trace", &cfg, &s.out("o"), &[]));
    let trace = read_trace_file(s.out("o/trace.csv")).unwrap();
    let ev = trace.events();
    // 20 cold fills; from the 21st on every fill writes a dirty victim back.
    assert!(ev[..20].iter().all(|e| e.op.as_str() == "read"));
    for pair in ev[20..].chunks(2) {
        assert_eq!(pair.len(), 2);
        assert_eq!(pair[0].op.as_str(), "read");
        assert_eq!(pair[1].op.as_str(), "write");
    }
    assert_eq!(ev.len(), 20 + 2 * (63 - 20));
}

#[test]
fn classify_reads_a_trace_back() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", THRASH21);
    ok(&run("gen-trace", &cfg, &s.out("o"), &[]));
    let trace = s.out("o/trace.csv");
    let o = bin()
        .args(["classify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(s.out("c"))
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    ok(&o);
    let groups = io::read_groups(File::open(s.out("c/groups.csv")).unwrap()).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups.values().next().unwrap().len(), 21);
}

#[test]
fn partition_sixteen_sixteen() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    let o = run("partition", &cfg, &s.out("o"), &[]);
    ok(&o);
    assert!(stdout(&o).contains("disjoint: ok"));
    let plan = io::read_plan(File::open(s.out("o/plan.csv")).unwrap()).unwrap();
    assert_eq!(
        plan.colors_of("A").unwrap(),
        (0..16).collect::<Vec<u32>>().as_slice()
    );
    assert_eq!(
        plan.colors_of("B").unwrap(),
        (16..32).collect::<Vec<u32>>().as_slice()
    );
}

#[test]
fn oversubscribed_partition_is_a_usage_error() {
    let s = Sandbox::new();
    let cfg = s.config(
        "c.toml",
        &LINEAR4.replace("colors = 16 }]", "colors = 17 }]"),
    );
    assert_eq!(
        run("partition", &cfg, &s.out("o"), &[]).status.code(),
        Some(1)
    );
}

fn group_sets(path: &Path) -> BTreeSet<Vec<u64>> {
    io::read_groups(File::open(path).unwrap())
        .unwrap()
        .into_values()
        .map(|mut v| {
            v.sort_unstable();
            v
        })
        .collect()
}

#[test]
fn probe_agrees_with_crack() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    ok(&run("crack", &cfg, &s.out("o"), &[]));
    let o = run("probe", &cfg, &s.out("o"), &[]);
    ok(&o);
    assert!(stdout(&o).contains("probe calls"));
    let set_of = |a: u64| (a >> 6) & 2047;
    let crack: BTreeSet<Vec<u64>> = group_sets(&s.out("o/groups.csv"))
        .into_iter()
        .filter(|g| set_of(g[0]) == 5)
        .collect();
    let probe = group_sets(&s.out("o/probe_groups.csv"));
    assert_eq!(crack.len(), 4);
    assert_eq!(crack, probe);
}

#[test]
fn noisy_probe_still_agrees() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", &LINEAR4.replace("a2_bits = 9", "a2_bits = 8"));
    ok(&run("crack", &cfg, &s.out("o"), &[]));
    ok(&run("probe", &cfg, &s.out("o"), &["--noise", "10"]));
    let set_of = |a: u64| (a >> 6) & 2047;
    let crack: BTreeSet<Vec<u64>> = group_sets(&s.out("o/groups.csv"))
        .into_iter()
        .filter(|g| set_of(g[0]) == 5)
        .collect();
    assert_eq!(crack, group_sets(&s.out("o/probe_groups.csv")));
}

#[test]
fn every_csv_reads_back() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    let o = s.out("o");
    for cmd in ["stride-scan", "gen-trace", "classify", "crack", "partition"] {
        ok(&run(cmd, &cfg, &o, &[]));
    }
    let open = |n: &str| File::open(o.join(n)).unwrap();
    assert!(!io::read_knees(open("knees.csv")).unwrap().is_empty());
    assert!(!read_trace_file(o.join("trace.csv")).unwrap().is_empty());
    assert!(!io::read_groups(open("groups.csv")).unwrap().is_empty());
    io::read_diagnostics(open("diagnostics.csv")).unwrap();
    assert_eq!(io::read_tables(open("tables.csv")).unwrap().len(), 3);
    assert_eq!(io::read_dedup(open("dedup.csv")).unwrap().len(), 3);
    assert_eq!(io::read_plan(open("plan.csv")).unwrap().clients.len(), 2);
}

#[test]
fn report_lists_all_interpretations() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    ok(&run("report", &cfg, &s.out("o"), &[]));
    let text = fs::read_to_string(s.out("o/report.txt")).unwrap();
    for heading in [
        "# geometry",
        "# knees",
        "# tables",
        "# formula",
        "# four-core formula",
    ] {
        assert!(text.contains(heading), "{heading}");
    }
    let rows = text
        .lines()
        .filter(|l| l.starts_with("true,") || l.starts_with("false,"))
        .count();
    assert_eq!(rows, 96);
}

#[test]
fn same_seed_same_bytes() {
    let s = Sandbox::new();
    let cfg = s.config("c.toml", LINEAR4);
    for dir in ["a", "b"] {
        for cmd in ["gen-trace", "classify", "crack", "probe", "partition"] {
            ok(&run(cmd, &cfg, &s.out(dir), &["--noise", "10"]));
        }
    }
    let names: BTreeSet<_> = fs::read_dir(s.out("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(names.len() >= 9);
    for n in &names {
        assert_eq!(
            fs::read(s.out("a").join(n)).unwrap(),
            fs::read(s.out("b").join(n)).unwrap(),
            "{n:?}"
        );
    }
    // A different seed changes the planted hash and so the trace.
    ok(&run("gen-trace", &cfg, &s.out("c"), &["--seed", "43"]));
    assert_ne!(
        fs::read(s.out("a/trace.csv")).unwrap(),
        fs::read(s.out("c/trace.csv")).unwrap()
    );
}
