//! Alice and Bob: session planning, encoding, measurement, control-bit
//! verification, the pass/abort verdict, key announcement and decoding.
//!
//! Each party runs as its own sequential state machine over an
//! [`Endpoint`]; the eavesdropper sits between them as a relay. Parties
//! draw from independent substreams of the session seed, so the transcript
//! is the same whether they run on one thread or several.

use std::collections::HashSet;
use std::thread;

use thiserror::Error;

use crate::adversary::{error_bound, EveRecord, EveStrategy};
use crate::rng::RandomStream;
use crate::scheme::{build_bases, BasisPair, SchemeParams};
use crate::statevec::{self, StateVector, DIM};
use crate::transport::{
    byte_pair, eve_proxy, memory_pair, Endpoint, Message, ProxyLog, ReportedOutcome, TransportError,
};

pub use crate::scheme::{BasisChoice, BitValue};

const ALICE_STREAM: u64 = 1;
const BOB_STREAM: u64 = 2;
const LOSS_STREAM: u64 = 3;
const EVE_STREAM: u64 = 4;

/// Table entries above this count as possible outcomes.

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("control_fraction {0} outside [0, 1)")]
    BadControlFraction(f64),
    #[error("abort_threshold {0} outside (0, 0.5)")]
    BadAbortThreshold(f64),
    #[error("loss_probability {0} outside [0, 1)")]
    BadLossProbability(f64),
    #[error("outcome at position {0} was lost")]
    LostOutcome(u32),
    #[error("frame at position {0} is not a control frame")]
    NotControl(u32),
    #[error("cipher {0} out of range")]
    BadCipher(u8),
}

/// Failure to complete a session at all, as opposed to an aborted one.
#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session: {0}")]
    Config(#[from] ProtocolError),
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("{0} thread panicked")]
    Panicked(&'static str),
}

/// One transmitted bit position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub position: u32,
    pub bit: BitValue,
    /// 0-based cipher `n - 1`.
    pub cipher: u8,
    pub is_control: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub scheme: SchemeParams,
    pub message: Vec<u8>,
    pub control_fraction: f64,
    pub abort_threshold: f64,
    pub loss_probability: f64,
    pub seed: u64,
}

/// Half the scheme's minimum intercept-resend error rate, but at least 1%.
pub fn default_abort_threshold(params: &SchemeParams) -> f64 {
    (0.5 * error_bound(params)).max(0.01)
}

impl SessionConfig {
    pub fn new(scheme: SchemeParams, message: Vec<u8>, seed: u64) -> Self {
        Self {
            scheme,
            message,
            control_fraction: 0.5,
            abort_threshold: default_abort_threshold(&scheme),
            loss_probability: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.message.is_empty() {
            return Err(ProtocolError::EmptyMessage);
        }
        if !(0.0..1.0).contains(&self.control_fraction) {
            return Err(ProtocolError::BadControlFraction(self.control_fraction));
        }
        if !(self.abort_threshold > 0.0 && self.abort_threshold < 0.5) {
            return Err(ProtocolError::BadAbortThreshold(self.abort_threshold));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(ProtocolError::BadLossProbability(self.loss_probability));
        }
        Ok(())
    }
}

/// Bob's local result for one position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub position: u32,
    pub basis_choice: BasisChoice,
    pub index: u8,
    /// The photon never reached a detector; `basis_choice`/`index` are meaningless.
    pub lost: bool,
}

impl Outcome {
    fn lost(position: u32) -> Self {
        Self {
            position,
            basis_choice: BasisChoice::B,
            index: 0,
            lost: true,
        }
    }

    fn reported(&self) -> ReportedOutcome {
        ReportedOutcome {
            basis: self.basis_choice,
            index: self.index,
            lost: self.lost,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Abort,
}

impl Verdict {
    pub fn to_byte(self) -> u8 {
        match self {
            Verdict::Pass => 0,
            Verdict::Abort => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Verdict::Pass),
            1 => Some(Verdict::Abort),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReport {
    pub control_total: usize,
    pub control_errors: usize,
    pub error_rate: f64,
    pub verdict: Verdict,
}

impl ErrorReport {
    pub fn new(control_total: usize, control_errors: usize, abort_threshold: f64) -> Self {
        let error_rate = if control_total == 0 {
            0.0
        } else {
            control_errors as f64 / control_total as f64
        };
        let verdict = if error_rate > abort_threshold {
            Verdict::Abort
        } else {
            Verdict::Pass
        };
        Self {
            control_total,
            control_errors,
            error_rate,
            verdict,
        }
    }

    /// Binomial standard error of `error_rate` around probability `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.control_total.max(1) as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub frames: Vec<Frame>,
    /// Bob's outcome for every position (only the control ones are disclosed).
    pub outcomes: Vec<Outcome>,
    pub eve_records: Vec<EveRecord>,
    /// Classical traffic as seen by the eavesdropper.
    pub eve_classical: Vec<Message>,
    pub error_report: ErrorReport,
    pub announced_key: Option<Vec<u8>>,
    /// Decoded message; bits lost in transit are zero and listed in `erased_bits`.
    pub decoded_message: Option<Vec<u8>>,
    /// Message-bit indices (MSB-first) whose photon was lost.
    pub erased_bits: Vec<usize>,
}

impl Transcript {
    pub fn key(&self) -> Vec<u8> {
        self.frames.iter().map(|f| f.cipher).collect()
    }

    pub fn bits(&self) -> Vec<BitValue> {
        self.frames.iter().map(|f| f.bit).collect()
    }

    pub fn message_frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| !f.is_control)
    }

    /// Whether the decoded message agrees with `message` on every bit that was not erased.
    pub fn decodes_to(&self, message: &[u8]) -> bool {
        let Some(decoded) = &self.decoded_message else {
            return false;
        };
        if decoded.len() != message.len() {
            return false;
        }
        let erased: HashSet<usize> = self.erased_bits.iter().copied().collect();
        let sent = bytes_to_bits(message);
        let got = bytes_to_bits(decoded);
        sent.iter()
            .zip(&got)
            .enumerate()
            .all(|(i, (a, b))| erased.contains(&i) || a == b)
    }
}

/// MSB-first expansion; `Plus` ↔ 1.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<BitValue> {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| BitValue::from_bit(b >> i & 1 == 1)))
        .collect()
}

pub fn bits_to_bytes(bits: &[BitValue]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, b)| acc | (u8::from(b.as_bit()) << (7 - i)))
        })
        .collect()
}

/// Interleaves the message with control frames and assigns every frame an
/// independent uniform cipher. Before each message frame, control frames
/// are inserted while a `control_fraction` coin keeps landing heads.
pub fn plan_session(config: &SessionConfig, rng: &mut RandomStream) -> Result<Vec<Frame>, ProtocolError> {
    if config.message.is_empty() {
        return Err(ProtocolError::EmptyMessage);
    }
    let mut frames = Vec::new();
    let push = |frames: &mut Vec<Frame>, bit: BitValue, is_control: bool, rng: &mut RandomStream| {
        let cipher = rng.below(DIM) as u8;
        frames.push(Frame {
            position: frames.len() as u32,
            bit,
            cipher,
            is_control,
        });
    };
    for bit in bytes_to_bits(&config.message) {
        while rng.bernoulli(config.control_fraction) {
            let control_bit = BitValue::from_bit(rng.coin());
            push(&mut frames, control_bit, true, rng);
        }
        push(&mut frames, bit, false, rng);
    }
    Ok(frames)
}

/// `+` → `|B_n⟩`, `−` → `|C_n⟩`.
pub fn encode_frame(frame: &Frame, bases: &BasisPair) -> StateVector {
    *bases.signal_state(frame.bit, frame.cipher as usize)
}

/// Fair choice between the `B` and `C` basis, then a projective measurement.
pub fn bob_measure(position: u32, state: &StateVector, bases: &BasisPair, rng: &mut RandomStream) -> Outcome {
    let basis_choice = if rng.coin() { BasisChoice::B } else { BasisChoice::C };
    let (index, _) = statevec::measure(state, bases.basis(basis_choice), rng);
    Outcome {
        position,
        basis_choice,
        index: index as u8,
        lost: false,
    }
}

/// Bit value implied by Bob's outcome once the cipher is known.
pub fn decode_bit(outcome: &Outcome, cipher: u8) -> Result<BitValue, ProtocolError> {
    if outcome.lost {
        return Err(ProtocolError::LostOutcome(outcome.position));
    }
    if cipher as usize >= DIM {
        return Err(ProtocolError::BadCipher(cipher));
    }
    let native = outcome.basis_choice.native_bit();
    Ok(if outcome.index == cipher {
        native
    } else {
        native.flipped()
    })
}

/// Whether Bob's outcome on a control frame decodes to the bit Alice sent.
///
/// Outcomes with zero probability for the prepared state always fail. When
/// some `a_i` vanishes the converse does not hold: e.g. `+` in the `C`
/// basis at an index other than the cipher has probability `a_i²`, which may
/// be zero, yet it still decodes correctly and is not counted as an error.
pub fn verify_control(frame: &Frame, outcome: &Outcome) -> Result<bool, ProtocolError> {
    if !frame.is_control {
        return Err(ProtocolError::NotControl(frame.position));
    }
    Ok(decode_bit(outcome, frame.cipher)? == frame.bit)
}

struct AliceResult {
    frames: Vec<Frame>,
    error_report: ErrorReport,
    announced_key: Option<Vec<u8>>,
}

fn run_alice(config: &SessionConfig, bases: &BasisPair, link: &mut dyn Endpoint) -> Result<AliceResult, SessionError> {
    let mut rng = RandomStream::substream(config.seed, ALICE_STREAM);
    let frames = plan_session(config, &mut rng)?;
    for frame in &frames {
        link.send(&Message::Photon {
            position: frame.position,
            state: encode_frame(frame, bases),
        })?;
    }
    // control positions are revealed only after every photon has been sent
    let controls: Vec<&Frame> = frames.iter().filter(|f| f.is_control).collect();
    link.send(&Message::ControlPositions(
        controls.iter().map(|f| f.position).collect(),
    ))?;

    let reported = match link.recv()? {
        Message::OutcomeReport(r) => r,
        other => {
            return Err(SessionError::Violation(format!(
                "expected outcome report, got {:?}",
                other.frame_type()
            )))
        }
    };
    if reported.len() != controls.len() {
        return Err(SessionError::Violation(format!(
            "{} outcomes reported for {} control positions",
            reported.len(),
            controls.len()
        )));
    }
    let (mut total, mut errors) = (0, 0);
    for (frame, r) in controls.iter().zip(&reported) {
        if r.lost {
            continue;
        }
        let outcome = Outcome {
            position: frame.position,
            basis_choice: r.basis,
            index: r.index,
            lost: false,
        };
        total += 1;
        if !verify_control(frame, &outcome)? {
            errors += 1;
        }
    }
    let error_report = ErrorReport::new(total, errors, config.abort_threshold);
    link.send(&Message::ErrorVerdict {
        error_rate: error_report.error_rate,
        verdict: error_report.verdict,
    })?;
    let announced_key = match error_report.verdict {
        Verdict::Pass => {
            let key: Vec<u8> = frames.iter().map(|f| f.cipher).collect();
            link.send(&Message::KeyAnnounce(key.clone()))?;
            Some(key)
        }
        Verdict::Abort => {
            link.send(&Message::Abort)?;
            None
        }
    };
    Ok(AliceResult {
        frames,
        error_report,
        announced_key,
    })
}

struct BobResult {
    outcomes: Vec<Outcome>,
    /// Per message position, `None` when the photon was lost.
    decoded: Option<Vec<Option<BitValue>>>,
}

fn run_bob(
    bases: &BasisPair,
    seed: u64,
    loss_probability: f64,
    link: &mut dyn Endpoint,
) -> Result<BobResult, SessionError> {
    let mut rng = RandomStream::substream(seed, BOB_STREAM);
    let mut loss = RandomStream::substream(seed, LOSS_STREAM);
    let mut outcomes: Vec<Outcome> = Vec::new();
    let controls = loop {
        match link.recv()? {
            Message::Photon { position, state } => {
                if position as usize != outcomes.len() {
                    return Err(SessionError::Violation(format!(
                        "photon position {} arrived, expected {}",
                        position,
                        outcomes.len()
                    )));
                }
                let outcome = if loss.bernoulli(loss_probability) {
                    Outcome::lost(position)
                } else {
                    bob_measure(position, &state, bases, &mut rng)
                };
                outcomes.push(outcome);
            }
            Message::ControlPositions(p) => break p,
            other => {
                return Err(SessionError::Violation(format!(
                    "unexpected {:?} during photon phase",
                    other.frame_type()
                )))
            }
        }
    };
    let mut report = Vec::with_capacity(controls.len());
    for &pos in &controls {
        let outcome = outcomes
            .get(pos as usize)
            .ok_or_else(|| SessionError::Violation(format!("control position {pos} was never sent")))?;
        report.push(outcome.reported());
    }
    link.send(&Message::OutcomeReport(report))?;

    match link.recv()? {
        Message::ErrorVerdict { .. } => {}
        other => {
            return Err(SessionError::Violation(format!(
                "expected verdict, got {:?}",
                other.frame_type()
            )))
        }
    }
    let decoded = match link.recv()? {
        Message::KeyAnnounce(key) => {
            if key.len() != outcomes.len() {
                return Err(SessionError::Violation(format!(
                    "key of length {} for {} photons",
                    key.len(),
                    outcomes.len()
                )));
            }
            let control_set: HashSet<u32> = controls.into_iter().collect();
            let mut bits = Vec::new();
            for outcome in &outcomes {
                if control_set.contains(&outcome.position) {
                    continue;
                }
                bits.push(if outcome.lost {
                    None
                } else {
                    Some(decode_bit(outcome, key[outcome.position as usize])?)
                });
            }
            Some(bits)
        }
        Message::Abort => None,
        other => {
            return Err(SessionError::Violation(format!(
                "expected key or abort, got {:?}",
                other.frame_type()
            )))
        }
    };
    Ok(BobResult { outcomes, decoded })
}

/// How the three parties are wired together.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    /// Typed messages over in-process channels.
    Memory,
    /// Wire-encoded frames over in-memory byte pipes.
    Bytes,
}

/// Runs a complete session over in-process channels.
pub fn run_session(config: &SessionConfig, eve: &EveStrategy) -> Result<Transcript, SessionError> {
    run_session_with(config, eve, Carrier::Memory)
}

pub fn run_session_with(
    config: &SessionConfig,
    eve: &EveStrategy,
    carrier: Carrier,
) -> Result<Transcript, SessionError> {
    match carrier {
        Carrier::Memory => {
            let (alice, eve_up) = memory_pair();
            let (eve_down, bob) = memory_pair();
            run_session_on(config, eve, alice, eve_up, eve_down, bob)
        }
        Carrier::Bytes => {
            let (alice, eve_up) = byte_pair();
            let (eve_down, bob) = byte_pair();
            run_session_on(config, eve, alice, eve_up, eve_down, bob)
        }
    }
}

/// Runs a session over caller-supplied links: `alice ↔ eve_up` and
/// `eve_down ↔ bob`. Each party gets its own thread.
pub fn run_session_on<A, U, D, B>(
    config: &SessionConfig,
    eve: &EveStrategy,
    mut alice: A,
    mut eve_up: U,
    mut eve_down: D,
    mut bob: B,
) -> Result<Transcript, SessionError>
where
    A: Endpoint,
    U: Endpoint,
    D: Endpoint,
    B: Endpoint,
{
    config.validate()?;
    let bases = build_bases(&config.scheme);
    let (alice_res, eve_res, bob_res) = thread::scope(|s| {
        let a = s.spawn(|| {
            let r = run_alice(config, &bases, &mut alice);
            drop(alice);
            r
        });
        let e = s.spawn(|| {
            let mut rng = RandomStream::substream(config.seed, EVE_STREAM);
            let r = eve_proxy(&mut eve_up, &mut eve_down, eve, &mut rng);
            drop(eve_up);
            drop(eve_down);
            r
        });
        let b = s.spawn(|| {
            let r = run_bob(&bases, config.seed, config.loss_probability, &mut bob);
            drop(bob);
            r
        });
        (
            a.join().map_err(|_| SessionError::Panicked("alice")),
            e.join().map_err(|_| SessionError::Panicked("eve")),
            b.join().map_err(|_| SessionError::Panicked("bob")),
        )
    });
    let alice_res = alice_res?;
    let eve_res = eve_res?.map_err(SessionError::from);
    let bob_res = bob_res?;
    // a hard failure in one party shows up as a closed channel in the others
    let (alice_res, eve_res, bob_res) = match (alice_res, eve_res, bob_res) {
        (Ok(a), Ok(e), Ok(b)) => (a, e, b),
        (a, e, b) => {
            let errors: Vec<SessionError> = [a.err(), e.err(), b.err()].into_iter().flatten().collect();
            let primary = errors
                .iter()
                .position(|e| !matches!(e, SessionError::Transport(TransportError::Closed)))
                .unwrap_or(0);
            return Err(errors.into_iter().nth(primary).expect("at least one error"));
        }
    };
    Ok(assemble(config, alice_res, eve_res, bob_res))
}

fn assemble(config: &SessionConfig, alice: AliceResult, eve: ProxyLog, bob: BobResult) -> Transcript {
    let (decoded_message, erased_bits) = match bob.decoded {
        Some(bits) => {
            let erased: Vec<usize> = bits
                .iter()
                .enumerate()
                .filter(|(_, b)| b.is_none())
                .map(|(i, _)| i)
                .collect();
            let filled: Vec<BitValue> = bits.iter().map(|b| b.unwrap_or(BitValue::Minus)).collect();
            (Some(bits_to_bytes(&filled)), erased)
        }
        None => (None, Vec::new()),
    };
    debug_assert_eq!(
        decoded_message.as_ref().map(Vec::len).unwrap_or(config.message.len()),
        config.message.len()
    );
    Transcript {
        frames: alice.frames,
        outcomes: bob.outcomes,
        eve_records: eve.records,
        eve_classical: eve.classical,
        error_report: alice.error_report,
        announced_key: alice.announced_key,
        decoded_message,
        erased_bits,
    }
}
