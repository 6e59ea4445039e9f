//! Framed wire protocol between Alice, Bob and the eavesdropper proxy.
//!
//! Every frame is `51 43 | version | type | payload_len (u32 LE) | payload`.
//! Photons travel as their four complex amplitudes; that is the simulator's
//! stand-in for the physical carrier and is what gives the proxy access to
//! the quantum channel.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc::{self, Receiver, Sender};

use num_complex::Complex64;
use thiserror::Error;

use crate::adversary::{eve_intercept, EveRecord, EveStrategy};
use crate::protocol::Verdict;
use crate::rng::RandomStream;
use crate::scheme::BasisChoice;
use crate::statevec::{StateVector, DIM};

pub const MAGIC: [u8; 2] = [0x51, 0x43];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;

/// Photon amplitudes must have unit norm within this tolerance.
pub const WIRE_NORM_TOL: f64 = 1e-9;

const PHOTON_PAYLOAD_LEN: usize = 4 + 16 * DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Photon = 0x01,
    ControlPositions = 0x02,
    OutcomeReport = 0x03,
    ErrorVerdict = 0x04,
    KeyAnnounce = 0x05,
    Abort = 0x06,
}

impl TryFrom<u8> for FrameType {
    type Error = CodecError;

    fn try_from(b: u8) -> Result<Self, CodecError> {
        Ok(match b {
            0x01 => FrameType::Photon,
            0x02 => FrameType::ControlPositions,
            0x03 => FrameType::OutcomeReport,
            0x04 => FrameType::ErrorVerdict,
            0x05 => FrameType::KeyAnnounce,
            0x06 => FrameType::Abort,
            other => return Err(CodecError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("photon amplitudes are not normalized (norm² = {0})")]
    DenormalizedState(f64),
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("peer closed the channel")]
    Closed,
    #[error("unexpected {got:?} frame while waiting for {expected}")]
    Unexpected { expected: &'static str, got: FrameType },
}

/// Raw frame: type tag plus opaque payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireFrame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

pub fn encode_frame(frame_type: FrameType, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame_type as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

fn parse_header(header: &[u8]) -> Result<(FrameType, usize), CodecError> {
    if header.len() < 2 {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: header.len(),
        });
    }
    if header[..2] != MAGIC {
        return Err(CodecError::BadMagic([header[0], header[1]]));
    }
    if header.len() < 3 {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: header.len(),
        });
    }
    if header[2] != VERSION {
        return Err(CodecError::BadVersion(header[2]));
    }
    if header.len() < 4 {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: header.len(),
        });
    }
    let frame_type = FrameType::try_from(header[3])?;
    if header.len() < HEADER_LEN {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: header.len(),
        });
    }
    let len = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    Ok((frame_type, len))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame, CodecError> {
    let (frame_type, len) = parse_header(bytes)?;
    let needed = HEADER_LEN + len;
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(CodecError::TrailingBytes(bytes.len() - needed));
    }
    Ok(WireFrame {
        frame_type,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Reads one frame from a stream. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<WireFrame>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_up_to(reader, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    let (frame_type, len) = parse_header(&header[..got])?;
    let mut payload = vec![0u8; len];
    let got_payload = read_up_to(reader, &mut payload)?;
    if got_payload < len {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN + len,
            available: HEADER_LEN + got_payload,
        }
        .into());
    }
    Ok(Some(WireFrame { frame_type, payload }))
}

fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Bob's disclosed finding for one control position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportedOutcome {
    pub basis: BasisChoice,
    pub index: u8,
    pub lost: bool,
}

/// Typed protocol messages carried by [`WireFrame`]s.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Photon { position: u32, state: StateVector },
    ControlPositions(Vec<u32>),
    OutcomeReport(Vec<ReportedOutcome>),
    ErrorVerdict { error_rate: f64, verdict: Verdict },
    KeyAnnounce(Vec<u8>),
    Abort,
}

impl Message {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Message::Photon { .. } => FrameType::Photon,
            Message::ControlPositions(_) => FrameType::ControlPositions,
            Message::OutcomeReport(_) => FrameType::OutcomeReport,
            Message::ErrorVerdict { .. } => FrameType::ErrorVerdict,
            Message::KeyAnnounce(_) => FrameType::KeyAnnounce,
            Message::Abort => FrameType::Abort,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Message::Photon { position, state } => {
                p.extend_from_slice(&position.to_le_bytes());
                for a in state.amplitudes() {
                    p.extend_from_slice(&a.re.to_le_bytes());
                    p.extend_from_slice(&a.im.to_le_bytes());
                }
            }
            Message::ControlPositions(positions) => {
                p.extend_from_slice(&(positions.len() as u32).to_le_bytes());
                for pos in positions {
                    p.extend_from_slice(&pos.to_le_bytes());
                }
            }
            Message::OutcomeReport(outcomes) => {
                for o in outcomes {
                    p.push(match o.basis {
                        BasisChoice::B => 0,
                        BasisChoice::C => 1,
                    });
                    p.push(o.index);
                    p.push(u8::from(o.lost));
                }
            }
            Message::ErrorVerdict { error_rate, verdict } => {
                p.extend_from_slice(&error_rate.to_le_bytes());
                p.push(verdict.to_byte());
            }
            Message::KeyAnnounce(ciphers) => p.extend_from_slice(ciphers),
            Message::Abort => {}
        }
        p
    }

    pub fn to_frame(&self) -> WireFrame {
        WireFrame {
            frame_type: self.frame_type(),
            payload: self.payload(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_frame(self.frame_type(), &self.payload())
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
        Self::from_frame(&decode_frame(bytes)?)
    }

    pub fn from_frame(frame: &WireFrame) -> Result<Message, CodecError> {
        let p = &frame.payload;
        let expect_len = |n: usize| -> Result<(), CodecError> {
            match p.len().cmp(&n) {
                std::cmp::Ordering::Less => Err(CodecError::Truncated {
                    needed: HEADER_LEN + n,
                    available: HEADER_LEN + p.len(),
                }),
                std::cmp::Ordering::Greater => Err(CodecError::TrailingBytes(p.len() - n)),
                std::cmp::Ordering::Equal => Ok(()),
            }
        };
        let u32_at = |i: usize| u32::from_le_bytes(p[i..i + 4].try_into().expect("4 bytes"));
        let f64_at = |i: usize| f64::from_le_bytes(p[i..i + 8].try_into().expect("8 bytes"));
        match frame.frame_type {
            FrameType::Photon => {
                expect_len(PHOTON_PAYLOAD_LEN)?;
                let position = u32_at(0);
                let amps: [Complex64; DIM] =
                    std::array::from_fn(|k| Complex64::new(f64_at(4 + 16 * k), f64_at(12 + 16 * k)));
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                let state = StateVector::with_tolerance(amps, WIRE_NORM_TOL)
                    .map_err(|_| CodecError::DenormalizedState(norm))?;
                Ok(Message::Photon { position, state })
            }
            FrameType::ControlPositions => {
                if p.len() < 4 {
                    return Err(CodecError::Truncated {
                        needed: HEADER_LEN + 4,
                        available: HEADER_LEN + p.len(),
                    });
                }
                let count = u32_at(0) as usize;
                expect_len(4 + 4 * count)?;
                Ok(Message::ControlPositions(
                    (0..count).map(|i| u32_at(4 + 4 * i)).collect(),
                ))
            }
            FrameType::OutcomeReport => {
                if !p.len().is_multiple_of(3) {
                    return Err(CodecError::Truncated {
                        needed: HEADER_LEN + p.len().next_multiple_of(3),
                        available: HEADER_LEN + p.len(),
                    });
                }
                p.chunks_exact(3)
                    .map(|c| {
                        let basis = match c[0] {
                            0 => BasisChoice::B,
                            1 => BasisChoice::C,
                            b => return Err(CodecError::Malformed(format!("basis byte {b}"))),
                        };
                        if c[1] as usize >= DIM {
                            return Err(CodecError::Malformed(format!("outcome index {}", c[1])));
                        }
                        let lost = match c[2] {
                            0 => false,
                            1 => true,
                            b => return Err(CodecError::Malformed(format!("lost byte {b}"))),
                        };
                        Ok(ReportedOutcome {
                            basis,
                            index: c[1],
                            lost,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(Message::OutcomeReport)
            }
            FrameType::ErrorVerdict => {
                expect_len(9)?;
                let verdict =
                    Verdict::from_byte(p[8]).ok_or_else(|| CodecError::Malformed(format!("verdict byte {}", p[8])))?;
                Ok(Message::ErrorVerdict {
                    error_rate: f64_at(0),
                    verdict,
                })
            }
            FrameType::KeyAnnounce => {
                if let Some(bad) = p.iter().find(|&&c| c as usize >= DIM) {
                    return Err(CodecError::Malformed(format!("cipher byte {bad}")));
                }
                Ok(Message::KeyAnnounce(p.clone()))
            }
            FrameType::Abort => {
                expect_len(0)?;
                Ok(Message::Abort)
            }
        }
    }
}

/// One side of an ordered, reliable, bidirectional message channel.
pub trait Endpoint: Send {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Message, TransportError>;
}

impl<E: Endpoint + ?Sized> Endpoint for Box<E> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        (**self).recv()
    }
}

/// Passes typed messages without serializing them.
pub struct MemoryEndpoint {
    tx: Sender<Message>,
    rx: Receiver<Message>,
}

pub fn memory_pair() -> (MemoryEndpoint, MemoryEndpoint) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemoryEndpoint { tx: a_tx, rx: a_rx },
        MemoryEndpoint { tx: b_tx, rx: b_rx },
    )
}

impl Endpoint for MemoryEndpoint {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.tx.send(msg.clone()).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        self.rx.recv().map_err(|_| TransportError::Closed)
    }
}

/// Encodes messages onto any byte stream (pipes, TCP sockets, files).
pub struct StreamEndpoint<R, W> {
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> StreamEndpoint<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

impl<R: Read + Send, W: Write + Send> Endpoint for StreamEndpoint<R, W> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.writer.write_all(&msg.encode())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let frame = read_frame(&mut self.reader)?.ok_or(TransportError::Closed)?;
        Ok(Message::from_frame(&frame)?)
    }
}

/// Writing half of an in-memory byte pipe.
pub struct PipeWriter {
    tx: Sender<Vec<u8>>,
}

/// Reading half of an in-memory byte pipe.
pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    buf: VecDeque<u8>,
}

pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = mpsc::channel();
    (
        PipeWriter { tx },
        PipeReader {
            rx,
            buf: VecDeque::new(),
        },
    )
}

impl Write for PipeWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.tx
            .send(data.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.buf.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.buf.extend(chunk),
                // writer dropped: end of stream
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len());
        for (dst, src) in out.iter_mut().zip(self.buf.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

pub type PipeEndpoint = StreamEndpoint<PipeReader, PipeWriter>;

/// Two connected endpoints over in-memory byte pipes.
pub fn byte_pair() -> (PipeEndpoint, PipeEndpoint) {
    let (a_w, b_r) = pipe();
    let (b_w, a_r) = pipe();
    (StreamEndpoint::new(a_r, a_w), StreamEndpoint::new(b_r, b_w))
}

/// Everything the eavesdropper saw and did during one session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProxyLog {
    pub records: Vec<EveRecord>,
    /// Classical frames in the order they were relayed.
    pub classical: Vec<Message>,
}

impl ProxyLog {
    pub fn control_positions(&self) -> Option<&[u32]> {
        self.classical.iter().find_map(|m| match m {
            Message::ControlPositions(p) => Some(p.as_slice()),
            _ => None,
        })
    }

    pub fn announced_key(&self) -> Option<&[u8]> {
        self.classical.iter().find_map(|m| match m {
            Message::KeyAnnounce(k) => Some(k.as_slice()),
            _ => None,
        })
    }
}

/// Man-in-the-middle relay. `upstream` faces Alice, `downstream` faces Bob.
///
/// Photons are passed through [`eve_intercept`]; classical frames are
/// forwarded unchanged and logged. The relay follows the session's phase
/// order: Alice's photons and control positions, Bob's report, then
/// Alice's verdict and key (or abort).
pub fn eve_proxy(
    upstream: &mut dyn Endpoint,
    downstream: &mut dyn Endpoint,
    strategy: &EveStrategy,
    rng: &mut RandomStream,
) -> Result<ProxyLog, TransportError> {
    let mut log = ProxyLog::default();
    loop {
        let msg = upstream.recv()?;
        match msg {
            Message::Photon { position, state } => {
                let (forwarded, record) = eve_intercept(position, &state, strategy, rng);
                log.records.extend(record);
                downstream.send(&Message::Photon {
                    position,
                    state: forwarded,
                })?;
            }
            Message::ControlPositions(_) => {
                downstream.send(&msg)?;
                log.classical.push(msg);
                break;
            }
            other => {
                return Err(TransportError::Unexpected {
                    expected: "photon or control positions",
                    got: other.frame_type(),
                })
            }
        }
    }
    let report = downstream.recv()?;
    upstream.send(&report)?;
    log.classical.push(report);
    loop {
        let msg = upstream.recv()?;
        downstream.send(&msg)?;
        let done = matches!(msg, Message::KeyAnnounce(_) | Message::Abort);
        log.classical.push(msg);
        if done {
            return Ok(log);
        }
    }
}
