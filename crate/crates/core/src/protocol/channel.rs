//! Transports for the public channel.
//!
//! Engines talk to a [`FrameTransport`]. Two harnesses are provided: a
//! byte-stream transport (in-process [`pipe`], TCP loopback, ...) for running
//! Alice and Bob on separate threads, and [`LockstepTransport`], which runs
//! Alice's responder inline on Bob's thread. Both push every frame through
//! the wire encoding.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::session::AliceSession;
use super::wire::{read_frame, write_frame, Frame};
use crate::{Error, Result};

pub trait FrameTransport {
    fn send(&mut self, frame: &Frame) -> Result<()>;

    /// Next frame, or `None` once the peer has closed the channel.
    fn recv_opt(&mut self) -> Result<Option<Frame>>;

    fn recv(&mut self) -> Result<Frame> {
        self.recv_opt()?
            .ok_or_else(|| Error::Protocol("public channel closed by peer".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    BobToAlice,
    AliceToBob,
}

/// Raw bytes that crossed the channel, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<(Direction, Vec<u8>)>,
}

impl Transcript {
    pub fn frames(&self) -> Vec<(Direction, Frame)> {
        self.records
            .iter()
            .map(|(d, b)| (*d, Frame::decode(b).expect("transcript holds valid frames").0))
            .collect()
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|(_, b)| b.len()).sum()
    }
}

/// Frames over any reliable ordered byte stream.
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> FrameTransport for StreamTransport<S> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        write_frame(&mut self.stream, frame)
    }

    fn recv_opt(&mut self) -> Result<Option<Frame>> {
        read_frame(&mut self.stream)
    }
}

/// One end of an in-process duplex byte pipe.
pub struct PipeEnd {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
}

/// Connected pair of in-process byte streams.
pub fn pipe() -> (PipeEnd, PipeEnd) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        PipeEnd { tx: Some(tx_a), rx: rx_a, pending: VecDeque::new() },
        PipeEnd { tx: Some(tx_b), rx: rx_b, pending: VecDeque::new() },
    )
}

impl PipeEnd {
    /// Closes the sending half; the peer reads end-of-stream afterwards.
    pub fn close(&mut self) {
        self.tx = None;
    }
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pending.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.pending.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed"))?;
        tx.send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer dropped"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Bob-side transport that drives Alice's responder synchronously.
pub struct LockstepTransport<'a> {
    alice: &'a mut AliceSession,
    inbox: VecDeque<u8>,
    transcript: Transcript,
}

impl<'a> LockstepTransport<'a> {
    pub fn new(alice: &'a mut AliceSession) -> Self {
        Self {
            alice,
            inbox: VecDeque::new(),
            transcript: Transcript::default(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

impl FrameTransport for LockstepTransport<'_> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        let (decoded, _) = Frame::decode(&bytes)?;
        self.transcript.records.push((Direction::BobToAlice, bytes));
        for reply in self.alice.handle(decoded) {
            let bytes = reply.encode();
            self.inbox.extend(bytes.iter().copied());
            self.transcript.records.push((Direction::AliceToBob, bytes));
        }
        Ok(())
    }

    fn recv_opt(&mut self) -> Result<Option<Frame>> {
        let (slice_a, slice_b) = self.inbox.as_slices();
        let mut reader = slice_a.chain(slice_b);
        let before = self.inbox.len();
        let frame = read_frame(&mut reader)?;
        let used = before - (reader.get_ref().0.len() + reader.get_ref().1.len());
        self.inbox.drain(..used);
        Ok(frame)
    }
}
