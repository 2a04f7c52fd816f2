// Licensed under the Apache-2.0 license

use crate::ief::{ief_run, IefError, ScopeMode};
use crate::mcu::{McuState, StepOutcome};
use crate::memory::page;
use crate::monitor::MonitorBank;

use super::frame::{AttRequest, Frame};

/// Default step budget for running ER in a PoX request.
pub const ER_STEP_BUDGET: usize = 200_000;

/// The prover device: emulator plus its monitors.
#[derive(Debug, Clone)]
pub struct Prover {
    pub mcu: McuState,
    pub bank: MonitorBank,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunEnd {
    Halted,
    Reset,
    Fault,
    Budget,
}

impl Prover {
    pub fn new(mcu: McuState, bank: MonitorBank) -> Self {
        Prover { mcu, bank }
    }

    /// Steps until the core halts, resets or faults, calling `hook` before
    /// each step and `observe` after it.
    pub fn run(
        &mut self,
        budget: usize,
        mut hook: impl FnMut(&mut McuState, &mut MonitorBank),
        mut observe: impl FnMut(&StepOutcome),
    ) -> RunEnd {
        for _ in 0..budget {
            hook(&mut self.mcu, &mut self.bank);
            let Ok(out) = self.mcu.step(&mut self.bank) else {
                return RunEnd::Halted;
            };
            observe(&out);
            if out.reset {
                return RunEnd::Reset;
            }
            if out.fault.is_some() {
                return RunEnd::Fault;
            }
            if self.mcu.halted && !self.mcu.dma.active {
                return RunEnd::Halted;
            }
        }
        RunEnd::Budget
    }

    /// Writes the metadata registers and points the core at `er_min`.
    pub fn arm_pox(&mut self, req: &AttRequest) {
        if let Some(cfg) = req.pox {
            for (i, w) in cfg.to_words().into_iter().enumerate() {
                self.mcu.poke_word(page::METADATA.start + 2 * i as u16, w);
            }
            self.mcu.set_pc(cfg.er_min);
        }
    }

    /// Runs SW-Att for `req` and frames the outcome. Claimed output
    /// (GPIO_OUT words) rides along unauthenticated outside PoX.
    pub fn attest(&mut self, req: &AttRequest) -> Frame {
        match ief_run(&mut self.mcu, &mut self.bank, &req.chal, &req.scope) {
            Ok(run) => {
                let mut report = run.report;
                if report.scope.mode != ScopeMode::Pox {
                    report.or_bytes = self.mcu.gpio_out.iter().flat_map(|w| w.to_le_bytes()).collect();
                }
                Frame::Response(report)
            }
            Err(IefError::Reset(v)) => Frame::Abort(format!("reset during SW-Att: {v:?}")),
            Err(e) => Frame::Abort(e.to_string()),
        }
    }

    /// Full request handling: for PoX, program metadata and run ER to
    /// completion first.
    pub fn handle(&mut self, req: &AttRequest) -> Frame {
        if req.scope.mode == ScopeMode::Pox {
            self.arm_pox(req);
            match self.run(ER_STEP_BUDGET, |_, _| {}, |_| {}) {
                RunEnd::Halted => {}
                other => return Frame::Abort(format!("ER run ended with {other:?}")),
            }
        }
        self.attest(req)
    }
}
