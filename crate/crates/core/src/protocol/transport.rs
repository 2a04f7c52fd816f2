// Licensed under the Apache-2.0 license

//! Byte transports carrying frames. Both are driven from a single thread:
//! the verifier sends, the prover side is pumped, the verifier receives.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::time::Duration;

use thiserror::Error;

use super::frame::{Frame, FrameError, HEADER_LEN, MAX_PAYLOAD};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("peer closed the connection")]
    Closed,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Transport {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Frame, TransportError>;
}

/// One end of an in-memory duplex channel. Delivery is in order and
/// lossless unless a drop is scripted.
pub struct MemEndpoint {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    drop_outgoing: usize,
}

pub fn mem_duplex() -> (MemEndpoint, MemEndpoint) {
    let (atx, brx) = channel();
    let (btx, arx) = channel();
    (
        MemEndpoint { tx: atx, rx: arx, drop_outgoing: 0 },
        MemEndpoint { tx: btx, rx: brx, drop_outgoing: 0 },
    )
}

impl MemEndpoint {
    /// Silently discards the next `n` outgoing frames.
    pub fn drop_next(&mut self, n: usize) {
        self.drop_outgoing = n;
    }
}

impl Transport for MemEndpoint {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        if self.drop_outgoing > 0 {
            self.drop_outgoing -= 1;
            return Ok(());
        }
        self.tx.send(frame.encode()).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        match self.rx.try_recv() {
            Ok(bytes) => Ok(Frame::decode(&bytes)?),
            Err(TryRecvError::Empty) => Err(TransportError::Timeout),
            Err(TryRecvError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

/// Frames over a TCP byte stream.
pub struct TcpEndpoint {
    stream: TcpStream,
}

pub const TCP_TIMEOUT: Duration = Duration::from_millis(500);

/// A connected loopback pair.
pub fn tcp_pair() -> std::io::Result<(TcpEndpoint, TcpEndpoint)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let a = TcpStream::connect(listener.local_addr()?)?;
    let (b, _) = listener.accept()?;
    Ok((TcpEndpoint::new(a)?, TcpEndpoint::new(b)?))
}

impl TcpEndpoint {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_read_timeout(Some(TCP_TIMEOUT))?;
        stream.set_nodelay(true)?;
        Ok(TcpEndpoint { stream })
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError> {
        self.stream.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => TransportError::Timeout,
            std::io::ErrorKind::UnexpectedEof => TransportError::Closed,
            _ => TransportError::Io(e),
        })
    }
}

impl Transport for TcpEndpoint {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.stream.write_all(&frame.encode())?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        self.read_exact(&mut header)?;
        let len = u32::from_le_bytes(header[1..5].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLong(len).into());
        }
        let mut buf = header.to_vec();
        buf.resize(HEADER_LEN + len as usize, 0);
        self.read_exact(&mut buf[HEADER_LEN..])?;
        Ok(Frame::decode(&buf)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_channel_in_order_and_scripted_drop() {
        let (mut a, mut b) = mem_duplex();
        a.send(&Frame::Abort("one".into())).unwrap();
        a.send(&Frame::Abort("two".into())).unwrap();
        assert_eq!(b.recv().unwrap(), Frame::Abort("one".into()));
        assert_eq!(b.recv().unwrap(), Frame::Abort("two".into()));
        b.drop_next(1);
        b.send(&Frame::Abort("lost".into())).unwrap();
        assert!(matches!(a.recv(), Err(TransportError::Timeout)));
    }

    #[test]
    fn tcp_loopback() {
        let (mut a, mut b) = tcp_pair().unwrap();
        a.send(&Frame::Abort("hi".into())).unwrap();
        assert_eq!(b.recv().unwrap(), Frame::Abort("hi".into()));
    }
}
