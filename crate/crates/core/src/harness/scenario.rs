// Licensed under the Apache-2.0 license

//! Scenario files: architecture, program, timed adversary script and the
//! expected outcome.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asm::Assembled;
use crate::isa::Word;

use super::{HarnessError, Row};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Baseline,
    Vrased,
    RataA,
    RataB,
    Apex,
    Tinycfa,
    Dialed,
}

impl Feature {
    fn requires(self) -> Option<Feature> {
        match self {
            Feature::Baseline | Feature::Vrased => None,
            Feature::RataA | Feature::RataB | Feature::Apex => Some(Feature::Vrased),
            Feature::Tinycfa => Some(Feature::Apex),
            Feature::Dialed => Some(Feature::Tinycfa),
        }
    }
}

/// The architecture column a feature set reports under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Baseline,
    Vrased,
    Apex,
    Tinycfa,
    Dialed,
    Rata,
}

impl Column {
    pub const ALL: [Column; 6] =
        [Column::Baseline, Column::Vrased, Column::Apex, Column::Tinycfa, Column::Dialed, Column::Rata];

    pub fn label(self) -> &'static str {
        match self {
            Column::Baseline => "Baseline",
            Column::Vrased => "VRASED",
            Column::Apex => "APEX",
            Column::Tinycfa => "Tiny-CFA",
            Column::Dialed => "DIALED",
            Column::Rata => "RATA",
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Validated feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Arch(BTreeSet<Feature>);

impl Arch {
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Result<Arch, String> {
        let set: BTreeSet<Feature> = features.into_iter().collect();
        if set.is_empty() {
            return Err("arch must name at least one feature".into());
        }
        if set.contains(&Feature::Baseline) && set.len() > 1 {
            return Err("baseline cannot be combined with other features".into());
        }
        for f in &set {
            if let Some(req) = f.requires() {
                if !set.contains(&req) {
                    return Err(format!("{f:?} requires {req:?}"));
                }
            }
        }
        if set.contains(&Feature::RataA) && set.contains(&Feature::RataB) {
            return Err("pick one of rata_a and rata_b".into());
        }
        let rata = set.contains(&Feature::RataA) || set.contains(&Feature::RataB);
        if rata && set.contains(&Feature::Apex) {
            return Err("RATA together with APEX is not supported".into());
        }
        Ok(Arch(set))
    }

    pub fn has(&self, f: Feature) -> bool {
        self.0.contains(&f)
    }

    pub fn features(&self) -> impl Iterator<Item = Feature> + '_ {
        self.0.iter().copied()
    }

    pub fn pox(&self) -> bool {
        self.has(Feature::Apex)
    }

    pub fn column(&self) -> Column {
        if self.has(Feature::Dialed) {
            Column::Dialed
        } else if self.has(Feature::Tinycfa) {
            Column::Tinycfa
        } else if self.has(Feature::Apex) {
            Column::Apex
        } else if self.has(Feature::RataA) || self.has(Feature::RataB) {
            Column::Rata
        } else if self.has(Feature::Vrased) {
            Column::Vrased
        } else {
            Column::Baseline
        }
    }
}

/// A number or a symbol of the running image, written `"@label"` or
/// `"@label+4"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Num(i64),
    Sym(String),
}

impl ValueSpec {
    pub fn resolve(&self, asm: &Assembled) -> Result<Word, String> {
        match self {
            ValueSpec::Num(n) if (0..=0xFFFF).contains(n) => Ok(*n as Word),
            ValueSpec::Num(n) => Err(format!("{n} does not fit in 16 bits")),
            ValueSpec::Sym(s) => {
                let body = s.strip_prefix('@').ok_or_else(|| format!("symbol `{s}` must start with @"))?;
                let (name, off) = match body.split_once('+') {
                    Some((n, o)) => (n, o.trim().parse::<u16>().map_err(|_| format!("bad offset in `{s}`"))?),
                    None => (body, 0),
                };
                let base = asm.symbol(name.trim()).ok_or_else(|| format!("unknown symbol `{name}`"))?;
                Ok(base.wrapping_add(off))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Device idle before the attestation request; `at` is absolute.
    #[default]
    Pre,
    /// While the application runs for the request; `at` counts from its start.
    App,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// DMA write of `values` starting at `addr`.
    WriteMem { addr: ValueSpec, values: Vec<ValueSpec> },
    ProgramDma { src: ValueSpec, dst: ValueSpec, len: u16 },
    RaiseIrq,
    /// Malware patch of PMEM; the original words are kept for `restore_pmem`.
    ReplacePmem { addr: ValueSpec, values: Vec<ValueSpec> },
    RestorePmem,
    /// DMA write of `value` at `SP + offset`.
    CorruptStack { offset: u16, value: ValueSpec },
    FeedInput { values: Vec<ValueSpec> },
    /// Output written by the adversary instead of ER.
    ClaimOutput { values: Vec<ValueSpec> },
    /// Read K from software and answer the next request with a forged
    /// report over the benign image.
    Forge,
    /// Verifier-authorized PMEM update.
    AuthorizedUpdate { addr: ValueSpec, values: Vec<ValueSpec> },
    /// An extra attestation round.
    Attest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub at: u64,
    #[serde(default)]
    pub phase: Phase,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Detected,
    Missed,
}

fn yes() -> bool {
    true
}

/// On-disk form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: u32,
    name: String,
    program: String,
    arch: Vec<Feature>,
    #[serde(default)]
    row: Option<Row>,
    expect: Expect,
    #[serde(default)]
    expect_reason: Option<String>,
    /// Run the application for the attestation request.
    #[serde(default = "yes")]
    run_app: bool,
    #[serde(default)]
    event: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Demo name or path to an assembly file.
    pub program: String,
    pub arch: Arch,
    pub row: Option<Row>,
    pub expect: Expect,
    pub expect_reason: Option<String>,
    pub run_app: bool,
    pub events: Vec<Event>,
    /// Directory relative program paths are resolved against.
    pub base_dir: PathBuf,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn find_line(text: &str, needle: &str) -> Option<usize> {
    text.find(needle).map(|o| line_of(text, o))
}

impl Scenario {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Scenario, HarnessError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| HarnessError::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        if raw.schema != SCHEMA_VERSION {
            return Err(HarnessError::Config {
                line: find_line(text, "schema"),
                msg: format!("unsupported schema {} (expected {SCHEMA_VERSION})", raw.schema),
            });
        }
        let arch = Arch::new(raw.arch).map_err(|msg| HarnessError::Config { line: find_line(text, "arch"), msg })?;
        Ok(Scenario {
            name: raw.name,
            program: raw.program,
            arch,
            row: raw.row,
            expect: raw.expect,
            expect_reason: raw.expect_reason,
            run_app: raw.run_app,
            events: raw.event,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Scenario::parse(&text, dir)
    }
}
