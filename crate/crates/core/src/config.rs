//! Run configuration, loaded from TOML.
//!
//! ```toml
//! seed = 7
//! [geometry]
//! preset = "sandy-bridge-6core"   # or line_size/associativity/... directly
//! [hash]
//! variant = "planted"
//! family = "random-table"
//! set_dependent = true
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{ModelError, SimError};
use crate::geometry::CacheGeometry;
use crate::hash::{BitFunction, SliceHash};
use crate::io::{read_hash_tables, HashTableError};
use crate::latency::LatencyModel;
use crate::planted::{planted, Domain, Family, DEFAULT_A2_BASE};
use crate::sandy_bridge;
use crate::sim::{AddressSpec, ReplacementPolicy, WorkloadConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: missing [{0}] section")]
    Missing(&'static str),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] HashTableError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub geometry: GeometryConfig,
    pub hash: Option<HashConfig>,
    pub workload: Option<WorkloadSection>,
    #[serde(default)]
    pub crack: CrackSection,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub probe: ProbeSection,
    pub partition: Option<PartitionSection>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub preset: Option<String>,
    pub line_size: Option<u64>,
    pub associativity: Option<usize>,
    pub sets_per_slice: Option<usize>,
    pub slices: Option<usize>,
    pub addr_bits: Option<u32>,
    pub memory: Option<u64>,
}

impl GeometryConfig {
    pub fn build(&self) -> Result<CacheGeometry, ConfigError> {
        let base = match self.preset.as_deref() {
            None => None,
            Some("sandy-bridge-6core") => Some(CacheGeometry::sandy_bridge_6core()),
            Some("sandy-bridge-4core") => Some(CacheGeometry::sandy_bridge_4core()),
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "unknown geometry preset {other:?}"
                )))
            }
        };
        let need = |v: Option<u64>, name: &str| {
            v.ok_or_else(|| {
                ConfigError::Invalid(format!("geometry.{name} is required without a preset"))
            })
        };
        let g = CacheGeometry::new(
            need(
                self.line_size.or(base.map(|b| b.line_size_bytes())),
                "line_size",
            )?,
            need(
                self.associativity
                    .or(base.map(|b| b.associativity()))
                    .map(|v| v as u64),
                "associativity",
            )? as usize,
            need(
                self.sets_per_slice
                    .or(base.map(|b| b.sets_per_slice()))
                    .map(|v| v as u64),
                "sets_per_slice",
            )? as usize,
            need(
                self.slices
                    .or(base.map(|b| b.slice_count()))
                    .map(|v| v as u64),
                "slices",
            )? as usize,
            need(
                self.addr_bits
                    .or(base.map(|b| b.addr_width_bits()))
                    .map(u64::from),
                "addr_bits",
            )? as u32,
            need(self.memory.or(base.map(|b| b.memory_bytes())), "memory")?,
        )?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBit {
    #[serde(default)]
    pub bits: Vec<u32>,
    #[serde(default)]
    pub affine: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HashConfig {
    Linear {
        outputs: Vec<OutputBit>,
    },
    FourCore,
    /// CSV with columns set_index (or `*`), a2_hex, slice_id.
    Table {
        path: PathBuf,
    },
    /// The measured 4-core mapping table, as a global table.
    #[serde(rename = "reference-4core")]
    Reference4core,
    /// The measured 6-core table of set index 1, as a global table.
    #[serde(rename = "reference-6core-set1")]
    Reference6coreSet1,
    /// A generated ground truth over the crack domain.
    Planted {
        family: Family,
        #[serde(default)]
        set_dependent: bool,
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub addresses: AddressSpec,
    #[serde(default = "two")]
    pub laps: u64,
    /// Overrides `laps` when given.
    pub iterations: Option<u64>,
    #[serde(default = "yes")]
    pub dirty: bool,
    #[serde(default = "idle")]
    pub idle_gap: u64,
    #[serde(default)]
    pub policy: PolicyName,
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    #[default]
    Lru,
    DirtyRetain,
}

impl From<PolicyName> for ReplacementPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::Lru => ReplacementPolicy::LruMruInsert,
            PolicyName::DirtyRetain => ReplacementPolicy::DirtyRetain,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrackSection {
    #[serde(default = "a2_base")]
    pub a2_base: u64,
    /// Number of low a2 bits that vary (the domain has 2^a2_bits values).
    #[serde(default = "a2_bits")]
    pub a2_bits: u32,
    #[serde(default = "set_indexes")]
    pub set_indexes: Vec<u64>,
    #[serde(default = "four")]
    pub rounds: u32,
    #[serde(default = "two")]
    pub laps: u64,
    #[serde(default = "two_usize")]
    pub max_pair_gap: usize,
    #[serde(default = "idle")]
    pub idle_gap: u64,
    #[serde(default = "samples")]
    pub verify_samples: usize,
}

impl Default for CrackSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl CrackSection {
    pub fn domain(&self) -> Domain {
        Domain::low(self.a2_base, self.a2_bits)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub strides: Option<Vec<u64>>,
    pub array_sizes: Option<Vec<u64>>,
    #[serde(default = "one")]
    pub repeats: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub set_index: u64,
    #[serde(default = "fifteen")]
    pub repeats: usize,
    #[serde(default = "ten")]
    pub laps: u64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Client {
    pub name: String,
    pub colors: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default = "page")]
    pub page_size: u64,
    pub clients: Vec<Client>,
    #[serde(default = "samples_100k")]
    pub sample: usize,
}

fn one() -> usize {
    1
}
fn two() -> u64 {
    2
}
fn two_usize() -> usize {
    2
}
fn four() -> u32 {
    4
}
fn ten() -> u64 {
    10
}
fn fifteen() -> usize {
    15
}
fn yes() -> bool {
    true
}
fn idle() -> u64 {
    1000
}
fn a2_base() -> u64 {
    DEFAULT_A2_BASE
}
fn a2_bits() -> u32 {
    13
}
fn set_indexes() -> Vec<u64> {
    vec![0, 1]
}
fn samples() -> usize {
    10_000
}
fn samples_100k() -> usize {
    100_000
}
fn page() -> u64 {
    4096
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut c: RunConfig = toml::from_str(text)?;
        c.base_dir = base_dir.into();
        c.latency.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn geometry(&self) -> Result<CacheGeometry, ConfigError> {
        self.geometry.build()
    }

    /// The configured hash; planted families default their seed to the run
    /// seed.
    pub fn hash(&self, geom: &CacheGeometry, run_seed: u64) -> Result<SliceHash, ConfigError> {
        let cfg = self.hash.as_ref().ok_or(ConfigError::Missing("hash"))?;
        Ok(match cfg {
            HashConfig::Linear { outputs } => SliceHash::linear(
                outputs
                    .iter()
                    .map(|o| BitFunction::from_bits(&o.bits, o.affine))
                    .collect(),
                geom,
            )?,
            HashConfig::FourCore => SliceHash::four_core(geom)?,
            HashConfig::Table { path } => {
                let full = self.base_dir.join(path);
                let file = fs::File::open(&full).map_err(|source| ConfigError::Io {
                    path: full.clone(),
                    source,
                })?;
                read_hash_tables(std::io::BufReader::new(file), geom)?
            }
            HashConfig::Reference4core => {
                SliceHash::global_table(sandy_bridge::four_core_table(), geom)?
            }
            HashConfig::Reference6coreSet1 => {
                SliceHash::global_table(sandy_bridge::six_core_set1_table(), geom)?
            }
            HashConfig::Planted {
                family,
                set_dependent,
                seed,
            } => planted(
                *family,
                geom,
                *set_dependent,
                &self.crack.domain(),
                seed.unwrap_or(run_seed),
            )?,
        })
    }

    pub fn workload(
        &self,
        run_seed: u64,
    ) -> Result<(WorkloadConfig, ReplacementPolicy), ConfigError> {
        let w = self
            .workload
            .as_ref()
            .ok_or(ConfigError::Missing("workload"))?;
        let blocks = w.addresses.generate()?;
        let mut cfg = WorkloadConfig::laps(blocks, w.laps, w.shuffle_seed.unwrap_or(run_seed))
            .with_dirty_writes(w.dirty)
            .with_idle_gap(w.idle_gap);
        if let Some(it) = w.iterations {
            cfg.iterations = it;
        }
        Ok((cfg, w.policy.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_and_overrides() {
        let c = RunConfig::from_toml(
            "seed = 1\n[geometry]\npreset = \"sandy-bridge-6core\"\nslices = 4\n",
            ".",
        )
        .unwrap();
        let g = c.geometry().unwrap();
        assert_eq!((g.slice_count(), g.associativity()), (4, 20));
        assert_eq!(c.crack.a2_bits, 13);
        assert_eq!(c.probe.repeats, 15);
    }

    #[test]
    fn explicit_geometry_and_linear_hash() {
        let c = RunConfig::from_toml(
            r#"
[geometry]
line_size = 64
associativity = 4
sets_per_slice = 16
slices = 2
addr_bits = 30
memory = 1048576
[hash]
variant = "linear"
outputs = [{ bits = [10, 12] }]
[workload]
addresses = { kind = "stride", base = 0, stride = 1024, count = 5 }
"#,
            ".",
        )
        .unwrap();
        let g = c.geometry().unwrap();
        let h = c.hash(&g, 0).unwrap();
        assert_eq!(h.slice_of(1 << 10, &g).unwrap(), 1);
        let (w, p) = c.workload(9).unwrap();
        assert_eq!(w.block_addresses.len(), 5);
        assert_eq!(w.iterations, 10);
        assert_eq!(p, ReplacementPolicy::LruMruInsert);
    }

    #[test]
    fn errors() {
        assert!(RunConfig::from_toml("[geometry]\npreset = \"nope\"\n", ".")
            .unwrap()
            .geometry()
            .is_err());
        assert!(RunConfig::from_toml("[geometry]\nline_size = 64\n", ".")
            .unwrap()
            .geometry()
            .is_err());
        assert!(RunConfig::from_toml("[geometry]\nbogus = 1\n", ".").is_err());
        let c = RunConfig::from_toml("[geometry]\npreset = \"sandy-bridge-4core\"\n", ".").unwrap();
        assert!(matches!(
            c.hash(&c.geometry().unwrap(), 0),
            Err(ConfigError::Missing("hash"))
        ));
    }
}
