//! The classical line between Alice and Bob.
//!
//! Frames are a 4-byte big-endian length followed by a canonical JSON message
//! (sorted keys, no whitespace). A session runs Hello, the outcome batches,
//! Bob's Estimate, then a Bye from each side. Frames only ever carry Alice's
//! ±1 results and Bob's answer.
//!
//! Bob's particles are rebuilt from the shared session seed, the simulated
//! stand-in for the qubits he physically holds. He checks that the announced
//! outcomes match them.

use crate::bloch::Direction;
use crate::estimators::Estimator;
use crate::protocol::{stream, EstimateRecord, GroundTruth, Outcome, OutcomeRecord, ParticleBox, ProtocolConfig, Transcript};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

/// Largest payload a frame may carry.
pub const MAX_FRAME: usize = 1 << 20;
/// Most outcomes sent in a single batch.
pub const MAX_BATCH: usize = 1024;
pub const DEFAULT_PORT: u16 = 7070;

/// Codes carried by [`Message::ProtocolError`].
pub mod code {
    /// Unparseable frame or unknown message type.
    pub const MALFORMED: u32 = 1;
    /// A valid message arrived out of turn.
    pub const UNEXPECTED: u32 = 2;
    /// The estimator cannot handle this register size.
    pub const UNSUPPORTED: u32 = 3;
    /// Announced outcomes disagree with Bob's particles.
    pub const MISMATCH: u32 = 4;
    /// Bob's estimator failed.
    pub const INTERNAL: u32 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Alice,
    Bob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello { role: Role, n_particles: usize },
    Outcomes { seq: u64, outcomes: Vec<Outcome> },
    Estimate { x: f64, y: f64, z: f64, strategy: String },
    ProtocolError { code: u32, detail: String },
    Bye,
}

const KNOWN_TYPES: [&str; 5] = ["hello", "outcomes", "estimate", "protocol_error", "bye"];

impl Message {
    pub fn estimate(d: &Direction, strategy: &str) -> Self {
        Message::Estimate { x: d.x(), y: d.y(), z: d.z(), strategy: strategy.to_string() }
    }

    pub fn validate(&self) -> std::result::Result<(), ChannelError> {
        match self {
            Message::Outcomes { outcomes, .. } if outcomes.len() > MAX_BATCH => Err(ChannelError::Invalid(format!(
                "batch of {} outcomes exceeds {MAX_BATCH}",
                outcomes.len()
            ))),
            Message::Estimate { x, y, z, .. } => {
                let norm = (x * x + y * y + z * z).sqrt();
                if (norm - 1.0).abs() <= 1e-9 {
                    Ok(())
                } else {
                    Err(ChannelError::Invalid(format!("estimate ({x}, {y}, {z}) is not a unit vector")))
                }
            }
            _ => Ok(()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Outcomes { .. } => "outcomes",
            Message::Estimate { .. } => "estimate",
            Message::ProtocolError { .. } => "protocol_error",
            Message::Bye => "bye",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("truncated frame: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("connection closed")]
    Closed,
    #[error("frame of {0} bytes exceeds the {MAX_FRAME}-byte limit")]
    TooLarge(usize),
    #[error("malformed frame: {0}")]
    Parse(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("peer reported error {code}: {detail}")]
    Remote { code: u32, detail: String },
    #[error("transport: {0}")]
    Io(#[from] io::Error),
}

/// Header plus canonical JSON payload.
pub fn encode_frame(msg: &Message) -> std::result::Result<Vec<u8>, ChannelError> {
    msg.validate()?;
    // Going through `Value` sorts object keys.
    let value = serde_json::to_value(msg).map_err(|e| ChannelError::Invalid(e.to_string()))?;
    let payload = serde_json::to_vec(&value).map_err(|e| ChannelError::Invalid(e.to_string()))?;
    if payload.len() > MAX_FRAME {
        return Err(ChannelError::TooLarge(payload.len()));
    }
    let mut frame = Vec::with_capacity(4 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Reads exactly one frame. A clean end of stream before any header byte is
/// [`ChannelError::Closed`].
pub fn decode_frame<R: Read + ?Sized>(r: &mut R) -> std::result::Result<Message, ChannelError> {
    let mut header = [0u8; 4];
    match read_full(r, &mut header)? {
        0 => return Err(ChannelError::Closed),
        4 => {}
        got => return Err(ChannelError::Truncated { expected: 4, got }),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(ChannelError::TooLarge(len));
    }
    let mut payload = vec![0u8; len];
    let got = read_full(r, &mut payload)?;
    if got < len {
        return Err(ChannelError::Truncated { expected: len, got });
    }
    let value: Value = serde_json::from_slice(&payload).map_err(|e| ChannelError::Parse(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ChannelError::Parse("missing \"type\" field".into()))?;
    if !KNOWN_TYPES.contains(&kind) {
        return Err(ChannelError::UnknownType(kind.to_string()));
    }
    let msg: Message = serde_json::from_value(value).map_err(|e| ChannelError::Invalid(e.to_string()))?;
    msg.validate()?;
    Ok(msg)
}

fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn send<W: Write + ?Sized>(w: &mut W, msg: &Message) -> std::result::Result<(), ChannelError> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

/// One end of an in-memory duplex byte stream.
#[derive(Debug)]
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

/// Two connected in-memory endpoints.
pub fn duplex() -> (PipeEnd, PipeEnd) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        PipeEnd { tx: a_tx, rx: a_rx, pending: Vec::new(), pos: 0 },
        PipeEnd { tx: b_tx, rx: b_rx, pending: Vec::new(), pos: 0 },
    )
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.pending.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let k = buf.len().min(self.pending.len() - self.pos);
        buf[..k].copy_from_slice(&self.pending[self.pos..self.pos + k]);
        self.pos += k;
        Ok(k)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer hung up"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Wraps a transport and keeps a copy of every byte written and read.
#[derive(Debug)]
pub struct Recorder<T> {
    inner: T,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
}

impl<T> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Recorder { inner, sent: Vec::new(), received: Vec::new() }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Read> Read for Recorder<T> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let k = self.inner.read(buf)?;
        self.received.extend_from_slice(&buf[..k]);
        Ok(k)
    }
}

impl<T: Write> Write for Recorder<T> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let k = self.inner.write(buf)?;
        self.sent.extend_from_slice(&buf[..k]);
        Ok(k)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Sends a best-effort ProtocolError to the peer and returns the local error.
fn abort<T: Write + ?Sized>(t: &mut T, code: u32, err: Error) -> Error {
    let _ = send(t, &Message::ProtocolError { code, detail: err.to_string() });
    err
}

/// Receives the next message. Malformed or unknown frames are answered with a
/// ProtocolError, and a ProtocolError from the peer becomes a local error.
fn receive<T: Read + Write + ?Sized>(t: &mut T) -> Result<Message> {
    match decode_frame(t) {
        Ok(Message::ProtocolError { code, detail }) => Err(ChannelError::Remote { code, detail }.into()),
        Ok(msg) => Ok(msg),
        Err(e @ (ChannelError::UnknownType(_) | ChannelError::Parse(_) | ChannelError::Invalid(_))) => {
            Err(abort(t, code::MALFORMED, e.into()))
        }
        Err(e) => Err(e.into()),
    }
}

fn unexpected<T: Write + ?Sized>(t: &mut T, msg: &Message, wanted: &str) -> Error {
    abort(
        t,
        code::UNEXPECTED,
        ChannelError::Violation(format!("expected {wanted}, got {}", msg.kind())).into(),
    )
}

/// Alice's side of a session: announce every outcome, collect Bob's answer.
pub fn alice_endpoint<T: Read + Write + ?Sized>(
    truth: &GroundTruth,
    config: &ProtocolConfig,
    transport: &mut T,
) -> Result<Transcript> {
    let outcomes = crate::protocol::alice_outcomes(truth, config);
    send(transport, &Message::Hello { role: Role::Alice, n_particles: config.n_particles })?;
    for (seq, batch) in outcomes.chunks(MAX_BATCH).enumerate() {
        let batch = batch.iter().map(|o| o.alice_outcome).collect();
        send(transport, &Message::Outcomes { seq: seq as u64, outcomes: batch })?;
    }
    let estimate = match receive(transport)? {
        Message::Estimate { x, y, z, strategy } => {
            let direction = Direction::new(x, y, z).map_err(|e| Error::InvalidInput(e.to_string()))?;
            EstimateRecord { direction, strategy }
        }
        other => return Err(unexpected(transport, &other, "estimate")),
    };
    send(transport, &Message::Bye)?;
    match receive(transport)? {
        Message::Bye => {}
        other => return Err(unexpected(transport, &other, "bye")),
    }
    Ok(Transcript { config: *config, outcomes, estimate: Some(estimate), truth: Some(*truth) })
}

/// Bob's side of a session. `seed` and `hint` must match Alice's session so
/// that his particles are the partners of hers.
pub fn bob_endpoint<T: Read + Write + ?Sized>(
    estimator: &dyn Estimator,
    seed: u64,
    hint: Option<Direction>,
    transport: &mut T,
) -> Result<Transcript> {
    let n = match receive(transport)? {
        Message::Hello { role: Role::Alice, n_particles } => n_particles,
        other => return Err(unexpected(transport, &other, "hello from alice")),
    };
    if let Err(e) = estimator.supports(n) {
        return Err(abort(transport, code::UNSUPPORTED, e));
    }
    let config = ProtocolConfig::new(n, seed).with_hint(hint);
    let (_, expected, particles) = ParticleBox::prepare(&config);

    let mut received: Vec<OutcomeRecord> = Vec::with_capacity(n);
    let mut next_seq = 0u64;
    while received.len() < n {
        match receive(transport)? {
            Message::Outcomes { seq, outcomes } if seq == next_seq && received.len() + outcomes.len() <= n => {
                let start = received.len();
                received.extend(
                    outcomes.into_iter().enumerate().map(|(i, alice_outcome)| OutcomeRecord { index: start + i, alice_outcome }),
                );
                next_seq += 1;
            }
            Message::Outcomes { seq, outcomes } => {
                let err = ChannelError::Violation(format!(
                    "batch {seq} with {} outcomes out of order (expected batch {next_seq}, {} of {n} received)",
                    outcomes.len(),
                    received.len()
                ));
                return Err(abort(transport, code::UNEXPECTED, err.into()));
            }
            other => return Err(unexpected(transport, &other, "outcomes")),
        }
    }
    if received != expected {
        let err = ChannelError::Violation("announced outcomes do not match the shared particles; check the seed".into());
        return Err(abort(transport, code::MISMATCH, err.into()));
    }

    let mut rng = config.stream_rng(stream::BOB);
    let direction = match estimator.estimate(&received, &particles, &mut rng) {
        Ok(d) => d,
        Err(e) => return Err(abort(transport, code::INTERNAL, e)),
    };
    let strategy = estimator.label();
    send(transport, &Message::estimate(&direction, &strategy))?;
    match receive(transport)? {
        Message::Bye => send(transport, &Message::Bye)?,
        other => return Err(unexpected(transport, &other, "bye")),
    }
    Ok(Transcript {
        config,
        outcomes: received,
        estimate: Some(EstimateRecord { direction, strategy }),
        truth: None,
    })
}

/// The whole protocol in one process with no channel in between.
pub fn simulate_run(config: &ProtocolConfig, estimator: &dyn Estimator) -> Result<Transcript> {
    estimator.supports(config.n_particles)?;
    let (truth, outcomes, particles) = ParticleBox::prepare(config);
    let mut rng = config.stream_rng(stream::BOB);
    let direction = estimator.estimate(&outcomes, &particles, &mut rng)?;
    Ok(Transcript {
        config: *config,
        outcomes,
        estimate: Some(EstimateRecord { direction, strategy: estimator.label() }),
        truth: Some(truth),
    })
}

/// Both transcripts of a session and the bytes each side wrote.
#[derive(Debug)]
pub struct SessionLog {
    pub alice: Transcript,
    pub bob: Transcript,
    pub alice_sent: Vec<u8>,
    pub bob_sent: Vec<u8>,
}

/// Runs Alice and Bob on two threads over the given connected transports.
pub fn run_session<A, B>(config: &ProtocolConfig, estimator: &dyn Estimator, alice: A, bob: B) -> Result<SessionLog>
where
    A: Read + Write + Send,
    B: Read + Write + Send,
{
    let truth = GroundTruth::sample(config);
    std::thread::scope(|s| {
        let bob_side = s.spawn(move || {
            let mut bob = Recorder::new(bob);
            let result = bob_endpoint(estimator, config.seed, config.hemisphere_hint, &mut bob);
            (result, bob.sent)
        });
        let mut alice = Recorder::new(alice);
        let a = alice_endpoint(&truth, config, &mut alice);
        let alice_sent = std::mem::take(&mut alice.sent);
        // A failed Alice may leave Bob waiting; closing her end unblocks him.
        drop(alice);
        let (b, bob_sent) = bob_side.join().expect("bob thread panicked");
        Ok(SessionLog { alice: a?, bob: b?, alice_sent, bob_sent })
    })
}

/// [`run_session`] over an in-memory pipe.
pub fn run_in_process(config: &ProtocolConfig, estimator: &dyn Estimator) -> Result<SessionLog> {
    let (a, b) = duplex();
    run_session(config, estimator, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{BobEstimator, Strategy as Kind};
    use crate::numfmt::fmt17;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn roundtrip(m: &Message) -> Message {
        decode_frame(&mut Cursor::new(encode_frame(m).unwrap())).unwrap()
    }

    #[test]
    fn bye_frame_bytes() {
        let f = encode_frame(&Message::Bye).unwrap();
        assert_eq!(&f[..4], &[0, 0, 0, 14]);
        assert_eq!(&f[4..], br#"{"type":"bye"}"#);
    }

    #[test]
    fn keys_are_sorted() {
        let f = encode_frame(&Message::Hello { role: Role::Bob, n_particles: 3 }).unwrap();
        assert_eq!(&f[4..], br#"{"n_particles":3,"role":"bob","type":"hello"}"#);
        let f = encode_frame(&Message::Outcomes { seq: 2, outcomes: vec![Outcome::Plus, Outcome::Minus] }).unwrap();
        assert_eq!(&f[4..], br#"{"outcomes":[1,-1],"seq":2,"type":"outcomes"}"#);
    }

    #[test]
    fn empty_batch_round_trips() {
        let m = Message::Outcomes { seq: 0, outcomes: vec![] };
        assert_eq!(roundtrip(&m), m);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode_frame(&mut Cursor::new(vec![0u8, 0, 1])), Err(ChannelError::Truncated { .. })));
        assert!(matches!(decode_frame(&mut Cursor::new(Vec::<u8>::new())), Err(ChannelError::Closed)));
        // Declares 2 MiB and supplies nothing; rejected on the header alone.
        let huge = (2u32 << 20).to_be_bytes().to_vec();
        assert!(matches!(decode_frame(&mut Cursor::new(huge)), Err(ChannelError::TooLarge(_))));
        let mut short = 10u32.to_be_bytes().to_vec();
        short.extend_from_slice(b"{}");
        assert!(matches!(decode_frame(&mut Cursor::new(short)), Err(ChannelError::Truncated { .. })));
        let frame = |p: &[u8]| {
            let mut f = (p.len() as u32).to_be_bytes().to_vec();
            f.extend_from_slice(p);
            Cursor::new(f)
        };
        assert!(matches!(decode_frame(&mut frame(b"{not json")), Err(ChannelError::Parse(_))));
        assert!(matches!(decode_frame(&mut frame(br#"{"type":"ping"}"#)), Err(ChannelError::UnknownType(_))));
        assert!(matches!(
            decode_frame(&mut frame(br#"{"type":"outcomes","seq":0,"outcomes":[1,0]}"#)),
            Err(ChannelError::Invalid(_))
        ));
        assert!(matches!(
            decode_frame(&mut frame(br#"{"type":"estimate","x":1,"y":1,"z":0,"strategy":"mle"}"#)),
            Err(ChannelError::Invalid(_))
        ));
    }

    #[test]
    fn oversized_batches_are_refused() {
        let m = Message::Outcomes { seq: 0, outcomes: vec![Outcome::Plus; MAX_BATCH + 1] };
        assert!(encode_frame(&m).is_err());
        let m = Message::ProtocolError { code: 1, detail: "x".repeat(MAX_FRAME) };
        assert!(matches!(encode_frame(&m), Err(ChannelError::TooLarge(_))));
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<bool>(), 0usize..100_000).prop_map(|(a, n)| Message::Hello {
                role: if a { Role::Alice } else { Role::Bob },
                n_particles: n
            }),
            (any::<u64>(), proptest::collection::vec(any::<bool>(), 0..300)).prop_map(|(seq, v)| Message::Outcomes {
                seq,
                outcomes: v.into_iter().map(|b| if b { Outcome::Plus } else { Outcome::Minus }).collect()
            }),
            (0.0..std::f64::consts::PI, -3.2f64..3.2, "[a-z]{0,12}")
                .prop_map(|(t, p, s)| Message::estimate(&Direction::from_spherical(t, p), &s)),
            (any::<u32>(), "\\PC{0,40}").prop_map(|(code, detail)| Message::ProtocolError { code, detail }),
            Just(Message::Bye),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn frames_round_trip(m in message()) {
            let bytes = encode_frame(&m).unwrap();
            let back = decode_frame(&mut Cursor::new(bytes.clone())).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
        }
    }

    fn frames(mut bytes: &[u8]) -> Vec<Message> {
        let mut out = Vec::new();
        while !bytes.is_empty() {
            out.push(decode_frame(&mut bytes).unwrap());
        }
        out
    }

    #[test]
    fn session_matches_single_process_run() {
        let est = BobEstimator::new(Kind::Mle, 2000, None).unwrap();
        let config = ProtocolConfig::new(96, 1234);
        let log = run_in_process(&config, &est).unwrap();
        let direct = simulate_run(&config, &est).unwrap();
        assert_eq!(log.alice, direct);
        assert_eq!(log.alice.to_json(), log.bob.to_json());
        assert_eq!(log.bob.estimate, direct.estimate);
    }

    #[test]
    fn session_message_sequence() {
        let est = BobEstimator::new(Kind::Frame, 10, None).unwrap();
        let log = run_in_process(&ProtocolConfig::new(2500, 9), &est).unwrap();
        let sent = frames(&log.alice_sent);
        assert_eq!(sent.len(), 1 + 3 + 1);
        assert!(matches!(sent[0], Message::Hello { role: Role::Alice, n_particles: 2500 }));
        for (i, m) in sent[1..4].iter().enumerate() {
            assert!(matches!(m, Message::Outcomes { seq, .. } if *seq == i as u64));
        }
        assert_eq!(sent[4], Message::Bye);
        let replies = frames(&log.bob_sent);
        assert!(matches!(replies[0], Message::Estimate { .. }));
        assert_eq!(replies[1], Message::Bye);
    }

    #[test]
    fn empty_session() {
        let est = BobEstimator::new(Kind::Mle, 100, None).unwrap();
        let log = run_in_process(&ProtocolConfig::new(0, 5), &est).unwrap();
        let sent = frames(&log.alice_sent);
        assert_eq!(sent, vec![Message::Hello { role: Role::Alice, n_particles: 0 }, Message::Bye]);
        assert_eq!(log.alice.estimate.unwrap().direction, Direction::PLUS_Z);
    }

    #[test]
    fn sessions_are_byte_deterministic() {
        let est = BobEstimator::new(Kind::Frame, 10, None).unwrap();
        let config = ProtocolConfig::new(50, 77);
        let a = run_in_process(&config, &est).unwrap();
        let b = run_in_process(&config, &est).unwrap();
        assert_eq!(a.alice_sent, b.alice_sent);
        assert_eq!(a.bob_sent, b.bob_sent);
    }

    #[test]
    fn truth_never_travels() {
        let est = BobEstimator::new(Kind::Mle, 500, None).unwrap();
        let config = ProtocolConfig::new(40, 31);
        let log = run_in_process(&config, &est).unwrap();
        let truth = log.alice.truth.unwrap().a_z;
        let mut wire = log.alice_sent.clone();
        wire.extend_from_slice(&log.bob_sent);
        let wire = String::from_utf8(wire.into_iter().filter(|b| b.is_ascii()).collect()).unwrap();
        for c in truth.to_array() {
            assert!(!wire.contains(&c.to_string()), "{c} found on the wire");
            assert!(!wire.contains(&fmt17(c)));
        }
        assert!(!log.alice.to_json().contains(&truth.x().to_string()));
    }

    #[test]
    fn unknown_type_gets_error_reply() {
        let (mut alice, bob) = duplex();
        let est = BobEstimator::new(Kind::Frame, 10, None).unwrap();
        let handle = std::thread::spawn(move || {
            let mut bob = bob;
            bob_endpoint(&est, 1, None, &mut bob).map(|_| ())
        });
        send(&mut alice, &Message::Hello { role: Role::Alice, n_particles: 3 }).unwrap();
        let payload = br#"{"type":"teleport"}"#;
        alice.write_all(&(payload.len() as u32).to_be_bytes()).unwrap();
        alice.write_all(payload).unwrap();
        let reply = decode_frame(&mut alice).unwrap();
        assert!(matches!(reply, Message::ProtocolError { code: code::MALFORMED, .. }));
        assert!(handle.join().unwrap().is_err());
    }

    #[test]
    fn out_of_order_batch_is_rejected() {
        let (mut alice, mut bob) = duplex();
        let est = BobEstimator::new(Kind::Frame, 10, None).unwrap();
        let handle = std::thread::spawn(move || bob_endpoint(&est, 1, None, &mut bob).map(|_| ()));
        send(&mut alice, &Message::Hello { role: Role::Alice, n_particles: 3 }).unwrap();
        send(&mut alice, &Message::Outcomes { seq: 1, outcomes: vec![Outcome::Plus] }).unwrap();
        assert!(matches!(decode_frame(&mut alice).unwrap(), Message::ProtocolError { code: code::UNEXPECTED, .. }));
        assert!(handle.join().unwrap().is_err());
    }

    #[test]
    fn collective_refuses_large_registers() {
        let est = BobEstimator::new(Kind::Collective, 200, None).unwrap();
        let err = run_in_process(&ProtocolConfig::new(12, 3), &est).unwrap_err();
        match err {
            Error::Channel(ChannelError::Remote { code, .. }) => assert_eq!(code, code::UNSUPPORTED),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn seed_mismatch_is_detected() {
        let (a, mut b) = duplex();
        let est = BobEstimator::new(Kind::Frame, 10, None).unwrap();
        let config = ProtocolConfig::new(64, 100);
        let truth = GroundTruth::sample(&config);
        let handle = std::thread::spawn(move || bob_endpoint(&est, 101, None, &mut b).map(|_| ()));
        let mut a = a;
        let err = alice_endpoint(&truth, &config, &mut a).unwrap_err();
        assert!(matches!(err, Error::Channel(ChannelError::Remote { code: code::MISMATCH, .. })), "{err}");
        assert!(handle.join().unwrap().is_err());
    }
}
