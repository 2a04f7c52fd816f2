// Licensed under the Apache-2.0 license

//! Challenge-response protocol between verifier and prover.

pub mod db;
pub mod frame;
pub mod prover;
pub mod transport;
pub mod verifier;

pub use frame::{AttRequest, Frame, FrameError};
pub use prover::{Prover, RunEnd, ER_STEP_BUDGET};
pub use transport::{mem_duplex, tcp_pair, MemEndpoint, TcpEndpoint, Transport, TransportError};
pub use verifier::{Reason, Verdict, Verifier, VerifierError};

use crate::ief::AttReport;

/// One request/response round trip. The prover side is pumped in between
/// so both ends can live on the calling thread.
pub fn exchange(
    verifier_end: &mut dyn Transport,
    prover_end: &mut dyn Transport,
    req: &AttRequest,
    mut serve: impl FnMut(&AttRequest) -> Frame,
) -> Result<AttReport, Reason> {
    verifier_end.send(&Frame::Request(req.clone())).map_err(|_| Reason::ProverSilent)?;
    match prover_end.recv() {
        Ok(Frame::Request(r)) => {
            let reply = serve(&r);
            prover_end.send(&reply).map_err(|_| Reason::ProverSilent)?;
        }
        Ok(_) => return Err(Reason::ParseError),
        // The request never arrived; the prover stays silent.
        Err(_) => {}
    }
    match verifier_end.recv() {
        Ok(Frame::Response(report)) => Ok(report),
        Ok(Frame::Abort(_)) => Err(Reason::ProverSilent),
        Ok(Frame::Request(_)) => Err(Reason::ParseError),
        Err(TransportError::Frame(_)) => Err(Reason::ParseError),
        Err(_) => Err(Reason::ProverSilent),
    }
}
