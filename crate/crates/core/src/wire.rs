//! ISMP/1: framed measurement-to-visualization stream.
//!
//! Every message is a 9-byte header followed by a fixed-size payload:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `ISMP`                            |
//! | 4      | 1    | type: 1 Hello, 2 Frame, 3 Intensity, 4 End |
//! | 5      | 4    | payload length, u32 LE                  |
//!
//! Payloads (all little-endian):
//!
//! * Hello (8): version u8 = 1, channels u8, sample_rate_hz u32, segment_ms_x10 u16
//! * Frame (45): t_us u64, position 3 x f32, quaternion (w, x, y, z) 4 x f32,
//!   intensity f32, rgb 3 x u8, 2 zero pad bytes
//! * IntensityOnly (12): t_us u64, intensity f32
//! * End (0)

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ISMP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 9;

pub const TYPE_HELLO: u8 = 1;
pub const TYPE_FRAME: u8 = 2;
pub const TYPE_INTENSITY: u8 = 3;
pub const TYPE_END: u8 = 4;

pub const HELLO_PAYLOAD: usize = 8;
pub const FRAME_PAYLOAD: usize = 45;
pub const INTENSITY_PAYLOAD: usize = 12;
pub const END_PAYLOAD: usize = 0;

/// Unknown message types with a larger declared payload are treated as
/// framing garbage rather than skipped whole.
pub const MAX_UNKNOWN_PAYLOAD: u32 = 64 * 1024;

pub const ENDPOINT_ENV: &str = "ISMP_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7878";

/// `$ISMP_ENDPOINT`, or `127.0.0.1:7878`.
pub fn default_endpoint() -> String {
    std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameData {
    pub t_us: u64,
    pub position: [f32; 3],
    /// (w, x, y, z)
    pub quaternion: [f32; 4],
    pub intensity: f32,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WireMessage {
    Hello {
        version: u8,
        channels: u8,
        sample_rate_hz: u32,
        segment_ms_x10: u16,
    },
    Frame(FrameData),
    IntensityOnly {
        t_us: u64,
        intensity: f32,
    },
    End,
}

impl WireMessage {
    pub fn hello(channels: u8, sample_rate_hz: u32, segment_ms_x10: u16) -> Self {
        WireMessage::Hello {
            version: VERSION,
            channels,
            sample_rate_hz,
            segment_ms_x10,
        }
    }

    pub fn type_code(&self) -> u8 {
        match self {
            WireMessage::Hello { .. } => TYPE_HELLO,
            WireMessage::Frame(_) => TYPE_FRAME,
            WireMessage::IntensityOnly { .. } => TYPE_INTENSITY,
            WireMessage::End => TYPE_END,
        }
    }

    /// Frames and intensity updates may be dropped under backpressure.
    pub fn is_droppable(&self) -> bool {
        matches!(self, WireMessage::Frame(_) | WireMessage::IntensityOnly { .. })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + payload_len(self.type_code()).unwrap_or(0)
    }
}

fn payload_len(msg_type: u8) -> Option<usize> {
    match msg_type {
        TYPE_HELLO => Some(HELLO_PAYLOAD),
        TYPE_FRAME => Some(FRAME_PAYLOAD),
        TYPE_INTENSITY => Some(INTENSITY_PAYLOAD),
        TYPE_END => Some(END_PAYLOAD),
        _ => None,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("non-finite float in {0}")]
    NonFinite(&'static str),
    #[error("unsupported protocol version {0}")]
    Version(u8),
}

pub fn encode(message: &WireMessage) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(message.encoded_len());
    encode_into(message, &mut out)?;
    Ok(out)
}

pub fn encode_into(message: &WireMessage, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let finite = |v: &[f32], what| {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(EncodeError::NonFinite(what))
        }
    };
    match message {
        WireMessage::Hello { version, .. } if *version != VERSION => {
            return Err(EncodeError::Version(*version))
        }
        WireMessage::Frame(f) => {
            finite(&f.position, "position")?;
            finite(&f.quaternion, "quaternion")?;
            finite(&[f.intensity], "intensity")?;
        }
        WireMessage::IntensityOnly { intensity, .. } => finite(&[*intensity], "intensity")?,
        _ => {}
    }
    out.extend_from_slice(&MAGIC);
    out.push(message.type_code());
    let len = payload_len(message.type_code()).unwrap_or(0) as u32;
    out.extend_from_slice(&len.to_le_bytes());
    match *message {
        WireMessage::Hello {
            version,
            channels,
            sample_rate_hz,
            segment_ms_x10,
        } => {
            out.push(version);
            out.push(channels);
            out.extend_from_slice(&sample_rate_hz.to_le_bytes());
            out.extend_from_slice(&segment_ms_x10.to_le_bytes());
        }
        WireMessage::Frame(f) => {
            out.extend_from_slice(&f.t_us.to_le_bytes());
            for v in f.position.iter().chain(&f.quaternion).chain(std::iter::once(&f.intensity)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&f.rgb);
            out.extend_from_slice(&[0, 0]);
        }
        WireMessage::IntensityOnly { t_us, intensity } => {
            out.extend_from_slice(&t_us.to_le_bytes());
            out.extend_from_slice(&intensity.to_le_bytes());
        }
        WireMessage::End => {}
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("bad magic, skipped {0} bytes")]
    BadMagic(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("message type {msg_type} declares {declared}-byte payload, expected {expected}")]
    LengthMismatch {
        msg_type: u8,
        declared: u32,
        expected: usize,
    },
    #[error("unknown message type {msg_type} with oversized payload {declared}")]
    Oversized { msg_type: u8, declared: u32 },
    #[error("unsupported protocol version {0}")]
    VersionMismatch(u8),
    #[error("non-finite float in frame")]
    NonFinite,
    #[error("non-zero pad byte in frame")]
    BadPadding,
}

/// Result of one decode step. `consumed` bytes should be discarded from
/// the front of the input before the next call.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Message { message: WireMessage, consumed: usize },
    NeedMore,
    Error { error: DecodeError, consumed: usize },
}

fn starts_like_magic(bytes: &[u8]) -> bool {
    let k = bytes.len().min(MAGIC.len());
    bytes[..k] == MAGIC[..k]
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Decodes one message from the front of `bytes`.
///
/// Garbage before a magic is skipped up to the next `ISMP` (or a partial
/// `ISMP` at the end of the input). A header with a known type but the
/// wrong length consumes one byte so the scan can resynchronize. An
/// unknown type is skipped together with its declared payload.
pub fn decode(bytes: &[u8]) -> Decoded {
    if bytes.is_empty() {
        return Decoded::NeedMore;
    }
    if !starts_like_magic(bytes) {
        let skip = (1..bytes.len())
            .find(|&i| starts_like_magic(&bytes[i..]))
            .unwrap_or(bytes.len());
        return Decoded::Error {
            error: DecodeError::BadMagic(skip),
            consumed: skip,
        };
    }
    if bytes.len() < HEADER_LEN {
        return Decoded::NeedMore;
    }
    let msg_type = bytes[4];
    let declared = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
    let expected = match payload_len(msg_type) {
        Some(n) => n,
        None => {
            if declared > MAX_UNKNOWN_PAYLOAD {
                return Decoded::Error {
                    error: DecodeError::Oversized { msg_type, declared },
                    consumed: 1,
                };
            }
            let total = HEADER_LEN + declared as usize;
            if bytes.len() < total {
                return Decoded::NeedMore;
            }
            return Decoded::Error {
                error: DecodeError::UnknownType(msg_type),
                consumed: total,
            };
        }
    };
    if declared as usize != expected {
        return Decoded::Error {
            error: DecodeError::LengthMismatch {
                msg_type,
                declared,
                expected,
            },
            consumed: 1,
        };
    }
    let total = HEADER_LEN + expected;
    if bytes.len() < total {
        return Decoded::NeedMore;
    }
    let p = &bytes[HEADER_LEN..total];
    let fail = |error| Decoded::Error { error, consumed: total };
    let message = match msg_type {
        TYPE_HELLO => {
            if p[0] != VERSION {
                return fail(DecodeError::VersionMismatch(p[0]));
            }
            WireMessage::Hello {
                version: p[0],
                channels: p[1],
                sample_rate_hz: u32::from_le_bytes(p[2..6].try_into().expect("4 bytes")),
                segment_ms_x10: u16::from_le_bytes(p[6..8].try_into().expect("2 bytes")),
            }
        }
        TYPE_FRAME => {
            let floats: Vec<f32> = (0..8).map(|i| f32_at(p, 8 + 4 * i)).collect();
            if floats.iter().any(|v| !v.is_finite()) {
                return fail(DecodeError::NonFinite);
            }
            if p[43] != 0 || p[44] != 0 {
                return fail(DecodeError::BadPadding);
            }
            WireMessage::Frame(FrameData {
                t_us: u64_at(p, 0),
                position: [floats[0], floats[1], floats[2]],
                quaternion: [floats[3], floats[4], floats[5], floats[6]],
                intensity: floats[7],
                rgb: [p[40], p[41], p[42]],
            })
        }
        TYPE_INTENSITY => {
            let intensity = f32_at(p, 8);
            if !intensity.is_finite() {
                return fail(DecodeError::NonFinite);
            }
            WireMessage::IntensityOnly {
                t_us: u64_at(p, 0),
                intensity,
            }
        }
        _ => WireMessage::End,
    };
    Decoded::Message {
        message,
        consumed: total,
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("connection error: {0}")]
    Connection(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("sender stopped: {0}")]
    Stopped(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconnectPolicy {
    Off,
    Retry { attempts: u32, delay: Duration },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenderConfig {
    pub queue_capacity: usize,
    pub reconnect: ReconnectPolicy,
}

impl Default for SenderConfig {
    fn default() -> Self {
        Self {
            queue_capacity: 256,
            reconnect: ReconnectPolicy::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderReport {
    /// Messages written to the transport, including Hello and End.
    pub written: u64,
    /// Frames or intensity updates discarded by the drop-oldest policy.
    pub dropped: u64,
    pub reconnects: u32,
}

#[derive(Debug, Default)]
struct QueueState {
    queue: VecDeque<WireMessage>,
    closed: bool,
    failed: Option<String>,
    report: SenderReport,
}

#[derive(Debug, Default)]
struct Shared {
    state: Mutex<QueueState>,
    ready: Condvar,
}

type Connector<W> = Box<dyn FnMut() -> io::Result<W> + Send>;

/// Producer side of the stream: a bounded drop-oldest queue drained by a
/// writer thread. Hello is written first on every (re)connection.
pub struct Sender {
    shared: Arc<Shared>,
    capacity: usize,
    worker: Option<JoinHandle<()>>,
}

impl Sender {
    /// Connects over TCP to `endpoint` (`host:port`).
    pub fn connect(endpoint: &str, hello: WireMessage, config: SenderConfig) -> Result<Self, WireError> {
        let endpoint = endpoint.to_string();
        let first = TcpStream::connect(&endpoint)?;
        first.set_nodelay(true)?;
        let mut first = Some(first);
        Ok(Self::with_connector(
            move || match first.take() {
                Some(s) => Ok(s),
                None => TcpStream::connect(&endpoint),
            },
            hello,
            config,
        ))
    }

    /// Sends over an already open transport; reconnection is not possible.
    pub fn from_writer<W: Write + Send + 'static>(writer: W, hello: WireMessage, config: SenderConfig) -> Self {
        let mut writer = Some(writer);
        Self::with_connector(
            move || {
                writer
                    .take()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::NotConnected, "transport cannot reconnect"))
            },
            hello,
            config,
        )
    }

    pub fn with_connector<W, F>(connect: F, hello: WireMessage, config: SenderConfig) -> Self
    where
        W: Write + Send + 'static,
        F: FnMut() -> io::Result<W> + Send + 'static,
    {
        let shared = Arc::new(Shared::default());
        shared.state.lock().expect("fresh mutex").queue.push_back(hello);
        let worker_shared = Arc::clone(&shared);
        let connect: Connector<W> = Box::new(connect);
        let worker = thread::spawn(move || writer_loop(worker_shared, connect, hello, config.reconnect));
        Self {
            shared,
            capacity: config.queue_capacity.max(1),
            worker: Some(worker),
        }
    }

    /// Enqueues a message. When the queue is full the oldest Frame or
    /// IntensityOnly is discarded; Hello and End are never dropped.
    pub fn send(&self, message: WireMessage) -> Result<(), WireError> {
        encode(&message)?;
        let mut st = self.shared.state.lock().expect("sender mutex poisoned");
        if let Some(err) = &st.failed {
            return Err(WireError::Stopped(err.clone()));
        }
        if st.closed {
            return Err(WireError::Stopped("sender already finished".into()));
        }
        if st.queue.len() >= self.capacity {
            if let Some(i) = st.queue.iter().position(WireMessage::is_droppable) {
                st.queue.remove(i);
                st.report.dropped += 1;
            } else if message.is_droppable() {
                st.report.dropped += 1;
                return Ok(());
            }
        }
        st.queue.push_back(message);
        self.shared.ready.notify_one();
        Ok(())
    }

    pub fn dropped(&self) -> u64 {
        self.shared.state.lock().expect("sender mutex poisoned").report.dropped
    }

    pub fn queued(&self) -> usize {
        self.shared.state.lock().expect("sender mutex poisoned").queue.len()
    }

    /// Enqueues End, waits for the queue to drain and returns the counters.
    pub fn finish(mut self) -> Result<SenderReport, WireError> {
        {
            let mut st = self.shared.state.lock().expect("sender mutex poisoned");
            if st.failed.is_none() && !st.closed {
                st.queue.push_back(WireMessage::End);
            }
            st.closed = true;
            self.shared.ready.notify_one();
        }
        if let Some(worker) = self.worker.take() {
            worker
                .join()
                .map_err(|_| WireError::Stopped("writer thread panicked".into()))?;
        }
        let st = self.shared.state.lock().expect("sender mutex poisoned");
        match &st.failed {
            Some(err) => Err(WireError::Stopped(err.clone())),
            None => Ok(st.report),
        }
    }
}

impl Drop for Sender {
    fn drop(&mut self) {
        if let Some(worker) = self.worker.take() {
            if let Ok(mut st) = self.shared.state.lock() {
                st.closed = true;
                st.queue.clear();
            }
            self.shared.ready.notify_one();
            let _ = worker.join();
        }
    }
}

fn writer_loop<W: Write>(
    shared: Arc<Shared>,
    mut connect: Connector<W>,
    hello: WireMessage,
    policy: ReconnectPolicy,
) {
    let fail = |msg: String| {
        log::error!("ISMP sender stopped: {msg}");
        let mut st = shared.state.lock().expect("sender mutex poisoned");
        st.failed = Some(msg);
        st.queue.clear();
    };
    let mut transport = match connect() {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let mut buf = Vec::with_capacity(64);
    loop {
        let message = {
            let mut st = shared.state.lock().expect("sender mutex poisoned");
            loop {
                if let Some(m) = st.queue.pop_front() {
                    break m;
                }
                if st.closed {
                    return;
                }
                st = shared.ready.wait(st).expect("sender mutex poisoned");
            }
        };
        buf.clear();
        encode_into(&message, &mut buf).expect("validated on send");
        let mut result = transport.write_all(&buf).and_then(|_| transport.flush());
        let mut attempts_left = match policy {
            ReconnectPolicy::Off => 0,
            ReconnectPolicy::Retry { attempts, .. } => attempts,
        };
        while let Err(err) = &result {
            if attempts_left == 0 {
                return fail(err.to_string());
            }
            attempts_left -= 1;
            if let ReconnectPolicy::Retry { delay, .. } = policy {
                thread::sleep(delay);
            }
            log::warn!("ISMP connection lost ({err}), reconnecting");
            result = connect().and_then(|mut t| {
                let mut again = encode(&hello).expect("valid hello");
                if message != hello {
                    encode_into(&message, &mut again).expect("validated on send");
                }
                t.write_all(&again)?;
                t.flush()?;
                transport = t;
                Ok(())
            });
            if result.is_ok() {
                shared.state.lock().expect("sender mutex poisoned").report.reconnects += 1;
            }
        }
        let mut st = shared.state.lock().expect("sender mutex poisoned");
        st.report.written += 1;
        if message == WireMessage::End {
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiveReport {
    pub messages: u64,
    pub frames: u64,
    /// Bytes skipped while scanning for the next magic.
    pub resync_bytes: u64,
    pub decode_errors: u64,
    /// Whether the stream closed with an End message.
    pub ended: bool,
}

/// Reads messages until End or end of stream, invoking `on_message` for
/// each in arrival order. Framing errors are logged and skipped; a Frame
/// or IntensityOnly before Hello, or a Hello with the wrong version, is a
/// protocol violation.
pub fn receive<R: Read>(
    mut reader: R,
    mut on_message: impl FnMut(&WireMessage),
) -> Result<ReceiveReport, WireError> {
    let mut report = ReceiveReport::default();
    let mut buf: Vec<u8> = Vec::with_capacity(8192);
    let mut chunk = [0u8; 4096];
    let mut seen_hello = false;
    let mut eof = false;
    loop {
        let mut start = 0;
        loop {
            match decode(&buf[start..]) {
                Decoded::NeedMore => break,
                Decoded::Error { error, consumed } => {
                    start += consumed;
                    match error {
                        DecodeError::BadMagic(n) => {
                            report.resync_bytes += n as u64;
                            log::warn!("ISMP resync: skipped {n} bytes");
                        }
                        DecodeError::VersionMismatch(v) => {
                            return Err(WireError::Protocol(format!("unsupported Hello version {v}")))
                        }
                        other => {
                            report.decode_errors += 1;
                            log::warn!("ISMP decode error: {other}");
                        }
                    }
                }
                Decoded::Message { message, consumed } => {
                    start += consumed;
                    match message {
                        WireMessage::Hello { .. } => seen_hello = true,
                        WireMessage::Frame(_) | WireMessage::IntensityOnly { .. } if !seen_hello => {
                            return Err(WireError::Protocol(
                                "data message received before Hello".into(),
                            ))
                        }
                        _ => {}
                    }
                    report.messages += 1;
                    if matches!(message, WireMessage::Frame(_)) {
                        report.frames += 1;
                    }
                    on_message(&message);
                    if message == WireMessage::End {
                        report.ended = true;
                        return Ok(report);
                    }
                }
            }
        }
        buf.drain(..start);
        if eof {
            if !buf.is_empty() {
                log::warn!("ISMP stream closed with {} undecoded bytes", buf.len());
            }
            return Ok(report);
        }
        match reader.read(&mut chunk) {
            Ok(0) => eof = true,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
}

/// Binds a listener for [`accept_one`].
pub fn listen(endpoint: &str) -> Result<TcpListener, WireError> {
    Ok(TcpListener::bind(endpoint)?)
}

/// Accepts one connection and receives from it until End or close.
pub fn accept_one(
    listener: &TcpListener,
    on_message: impl FnMut(&WireMessage),
) -> Result<ReceiveReport, WireError> {
    let (stream, peer) = listener.accept()?;
    log::info!("ISMP connection from {peer}");
    receive(stream, on_message)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t_us: u64) -> WireMessage {
        WireMessage::Frame(FrameData {
            t_us,
            position: [0.1, -0.2, 0.3],
            quaternion: [1.0, 0.0, 0.0, 0.0],
            intensity: 1.5,
            rgb: [10, 20, 30],
        })
    }

    #[test]
    fn end_bytes() {
        assert_eq!(
            encode(&WireMessage::End).unwrap(),
            vec![0x49, 0x53, 0x4D, 0x50, 0x04, 0x00, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn frame_prefix_and_sizes() {
        let bytes = encode(&frame(7)).unwrap();
        assert_eq!(bytes.len(), 54);
        assert_eq!(&bytes[..9], &[0x49, 0x53, 0x4D, 0x50, 0x02, 0x2D, 0x00, 0x00, 0x00]);
        assert_eq!(encode(&WireMessage::hello(4, 5000, 50)).unwrap().len(), 17);
        let ints = WireMessage::IntensityOnly {
            t_us: 1,
            intensity: 0.5,
        };
        assert_eq!(encode(&ints).unwrap().len(), 21);
    }

    #[test]
    fn encode_rejects_non_finite() {
        let WireMessage::Frame(mut f) = frame(1) else { unreachable!() };
        f.quaternion[2] = f32::NAN;
        assert!(matches!(
            encode(&WireMessage::Frame(f)),
            Err(EncodeError::NonFinite("quaternion"))
        ));
    }

    #[test]
    fn truncated_frame_needs_more() {
        let bytes = encode(&frame(7)).unwrap();
        assert_eq!(decode(&bytes[..50]), Decoded::NeedMore);
        assert_eq!(decode(&bytes[..3]), Decoded::NeedMore);
    }

    #[test]
    fn resync_past_garbage() {
        let mut bytes = vec![0xAA];
        bytes.extend(encode(&WireMessage::End).unwrap());
        assert_eq!(
            decode(&bytes),
            Decoded::Error {
                error: DecodeError::BadMagic(1),
                consumed: 1
            }
        );
        assert_eq!(
            decode(&bytes[1..]),
            Decoded::Message {
                message: WireMessage::End,
                consumed: 9
            }
        );
    }

    #[test]
    fn unknown_type_skips_payload() {
        let mut bytes = b"ISMP".to_vec();
        bytes.push(9);
        bytes.extend(3u32.to_le_bytes());
        bytes.extend([1, 2, 3]);
        assert_eq!(
            decode(&bytes),
            Decoded::Error {
                error: DecodeError::UnknownType(9),
                consumed: 12
            }
        );
    }

    #[test]
    fn length_mismatch_and_version() {
        let mut bytes = encode(&WireMessage::End).unwrap();
        bytes[5] = 1;
        assert!(matches!(
            decode(&bytes),
            Decoded::Error {
                error: DecodeError::LengthMismatch { .. },
                consumed: 1
            }
        ));
        let mut hello = encode(&WireMessage::hello(4, 5000, 50)).unwrap();
        hello[9] = 2;
        assert_eq!(
            decode(&hello),
            Decoded::Error {
                error: DecodeError::VersionMismatch(2),
                consumed: 17
            }
        );
    }

    #[test]
    fn frame_before_hello_is_violation() {
        let bytes = encode(&frame(1)).unwrap();
        let err = receive(&bytes[..], |_| {}).unwrap_err();
        assert!(matches!(err, WireError::Protocol(_)));
    }

    #[test]
    fn receive_counts_resync() {
        let mut bytes = encode(&WireMessage::hello(4, 5000, 50)).unwrap();
        bytes.extend(b"junk");
        bytes.extend(encode(&frame(1)).unwrap());
        bytes.extend(encode(&WireMessage::End).unwrap());
        let mut got = Vec::new();
        let report = receive(&bytes[..], |m| got.push(*m)).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(report.resync_bytes, 4);
        assert!(report.ended);
    }
}
