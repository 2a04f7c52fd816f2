// Licensed under the Apache-2.0 license

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use attestsim::asm::AsmProgram;
use attestsim::harness::{self, demo, RunOptions, TransportKind};
use attestsim::instrument::{Instrumented, Target};
use attestsim::memory::{Image, MemoryMap};

#[derive(Parser)]
#[command(name = "attestsim", version, about = "Attestation architecture co-simulator")]
struct Cli {
    /// Transport between verifier and prover.
    #[arg(long, value_enum, global = true, default_value = "mem")]
    transport: Transport,
    /// Verifier RNG seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Directory for evidence logs and structured reports.
    #[arg(long, global = true)]
    evidence: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Mem,
    Tcp,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a program into `<out>.bin` plus a `.map` sidecar.
    Asm {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Print the disassembly of the result.
        #[arg(long)]
        disasm: bool,
    },
    /// Apply the CFA pass (and the DFA pass with --dfa) and print assembly.
    Instrument {
        input: PathBuf,
        #[arg(long)]
        dfa: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario; exit 0 iff the outcome matches its expectation.
    Run { scenario: PathBuf },
    /// Run the detection-matrix suite; exit 0 iff it reproduces the reference table.
    Matrix {
        #[arg(default_value = "scenarios/matrix")]
        dir: PathBuf,
    },
    /// IEF cycles for full sweep vs LMT-only attestation.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        sizes: Vec<u32>,
    },
    /// Instrumentation overhead over the demo corpus.
    Report {
        /// Benign inputs per program.
        #[arg(long, default_value_t = 20)]
        inputs: usize,
        /// Include the DFA pass.
        #[arg(long)]
        dfa: bool,
    },
}

fn write_json(dir: &Option<PathBuf>, name: &str, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| path.display().to_string())?;
    }
    Ok(())
}

fn read_program(path: &Path) -> Result<AsmProgram> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(AsmProgram::parse(&text)?)
}

fn run(cli: Cli) -> Result<bool> {
    let opts = RunOptions {
        transport: match cli.transport {
            Transport::Mem => TransportKind::Mem,
            Transport::Tcp => TransportKind::Tcp,
        },
        seed: cli.seed,
        evidence: cli.evidence.clone(),
    };
    match cli.cmd {
        Cmd::Asm { input, out, disasm } => {
            let map = MemoryMap::default();
            let asm = read_program(&input)?.assemble(map.pmem.start)?;
            let out = out.unwrap_or_else(|| input.with_extension("bin"));
            Image { bytes: asm.bytes.clone(), map }.save(&out)?;
            if disasm {
                print!("{}", AsmProgram::disassemble(&asm.bytes, asm.base).to_text());
            }
            println!("{}: {} bytes at {:#06x}", out.display(), asm.bytes.len(), asm.base);
            write_json(&cli.evidence, "symbols.json", &asm.symbols)?;
            Ok(true)
        }
        Cmd::Instrument { input, dfa, out } => {
            let ins = Instrumented::build(&read_program(&input)?, Target::default(), dfa)?;
            let text = ins.program.to_text();
            match out {
                Some(p) => std::fs::write(&p, &text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
            let meta = ins.metadata();
            eprintln!(
                "ER {:#06x}..={:#06x}  OR {:#06x}..={:#06x}  {} -> {} bytes",
                meta.er_min,
                meta.er_max,
                meta.or_min,
                meta.or_max,
                ins.original.bytes.len(),
                ins.assembled.bytes.len()
            );
            Ok(true)
        }
        Cmd::Run { scenario } => {
            let out = harness::run_scenario_file(&scenario, &opts)?;
            for t in &out.trail {
                println!("{:<10} {}", t.step, if t.accepted { "accepted".to_string() } else { format!("rejected ({:?})", t.reason) });
            }
            println!(
                "{}: {} ({:?}), expected {:?}{} -> {}",
                out.name,
                if out.detected { "detected" } else { "missed" },
                out.reason,
                out.expected,
                out.expected_reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default(),
                if out.matches { "OK" } else { "MISMATCH" }
            );
            Ok(out.matches)
        }
        Cmd::Matrix { dir } => {
            let report = harness::run_matrix(&dir, &opts)?;
            print!("{}", report.to_table());
            for d in report.deviations() {
                println!("deviation: {} / {} ({}): got {:?}", d.row.label(), d.column, d.scenario, d.reason);
            }
            Ok(report.matches_table1)
        }
        Cmd::Bench { sizes } => {
            if sizes.is_empty() {
                bail!("no sizes given");
            }
            let b = harness::bench_rata(&sizes)?;
            print!("{}", b.to_table());
            write_json(&cli.evidence, "bench_rata.json", &b)?;
            Ok(b.lmt_constant && b.full_affine)
        }
        Cmd::Report { inputs, dfa } => {
            let r = demo::corpus_overhead(inputs, cli.seed, dfa)?;
            print!("{}", r.to_table());
            write_json(&cli.evidence, "overhead.json", &r)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
