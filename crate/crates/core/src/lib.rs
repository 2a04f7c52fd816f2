// Licensed under the Apache-2.0 license

//! Co-simulator for hybrid remote attestation on a low-end MCU.
//!
//! Crate layout:
//! - [`isa`], [`memory`], [`asm`]: the toy instruction set, memory map and assembler
//! - [`mcu`]: the cycle-counted emulator
//! - [`monitor`]: VRASED, RATA and APEX hardware monitors
//! - [`ief`]: the SW-Att routine and MAC encoding
//! - [`protocol`]: wire frames, prover and verifier
//! - [`instrument`]: CFA / DFA instrumentation and the matching verifiers
//! - [`harness`]: demo programs, scenarios and the capability matrix

pub mod asm;
pub mod harness;
pub mod ief;
pub mod instrument;
pub mod isa;
pub mod mcu;
pub mod memory;
pub mod monitor;
pub mod protocol;

pub use ief::{AttReport, AttScope, Chal, ScopeMode};
pub use isa::{Address, Instruction, Reg, Word};
pub use mcu::{BusSignals, McuState, MemAccess};
pub use memory::{MemoryMap, Region};
pub use monitor::{MonitorBank, MonitorSet, RataVariant, Violation};
