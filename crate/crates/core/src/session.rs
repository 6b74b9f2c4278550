//! `.isms` session container and replay.
//!
//! Layout (little-endian):
//!
//! ```text
//! "ISMS" | version u16 | channels u16 | sample_rate_hz f64 | segment_ms f64
//!        | model_id_len u16 | model_id UTF-8
//! chunk* = tag [u8; 4] | len u32 | payload
//! ```
//!
//! Chunk tags: `VIBR` interleaved f32 frames, `POSE` 36-byte records
//! (t_us u64, position 3 x f32, quaternion w x y z 4 x f32), `INTS` 12-byte
//! records (t_us u64, intensity f32), `META` UTF-8 `key=value` lines.
//! Other tags are kept verbatim and written back unchanged.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::trajectory::{PoseSample, Quaternion};

pub const SESSION_MAGIC: [u8; 4] = *b"ISMS";
pub const SESSION_VERSION: u16 = 1;

pub const TAG_VIBR: [u8; 4] = *b"VIBR";
pub const TAG_POSE: [u8; 4] = *b"POSE";
pub const TAG_INTS: [u8; 4] = *b"INTS";
pub const TAG_META: [u8; 4] = *b"META";

pub const POSE_RECORD_LEN: usize = 36;
pub const INTENSITY_RECORD_LEN: usize = 12;

/// Largest VIBR payload written in one chunk; longer recordings span
/// several chunks.
const MAX_VIBR_CHUNK: usize = 1 << 24;

/// META key giving the timestamp of the first vibration frame.
pub const META_VIBRATION_START: &str = "vibration_start_us";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt session: {0}")]
    Corrupt(String),
    #[error("{stream} timestamps regress: {prev} then {next}")]
    TimestampRegression {
        stream: &'static str,
        prev: u64,
        next: u64,
    },
    #[error("invalid session: {0}")]
    Invalid(String),
    #[error("sink error: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionHeader {
    pub version: u16,
    pub channels: u16,
    pub sample_rate_hz: f64,
    pub segment_ms: f64,
    pub model_id: String,
}

impl SessionHeader {
    pub fn new(channels: u16, sample_rate_hz: f64, segment_ms: f64, model_id: impl Into<String>) -> Self {
        Self {
            version: SESSION_VERSION,
            channels,
            sample_rate_hz,
            segment_ms,
            model_id: model_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityRecord {
    pub t_us: u64,
    pub intensity: f32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawChunk {
    pub tag: [u8; 4],
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub header: SessionHeader,
    /// Interleaved frames of `header.channels` samples.
    pub vibration: Vec<f32>,
    pub poses: Vec<PoseSample<f32>>,
    pub intensities: Vec<IntensityRecord>,
    pub meta: Vec<(String, String)>,
    pub unknown: Vec<RawChunk>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SessionSummary {
    pub vibration_frames: usize,
    pub vibration_duration_s: f64,
    pub poses: usize,
    pub pose_duration_s: f64,
    pub intensities: usize,
    pub intensity_duration_s: f64,
    pub unknown_chunks: usize,
}

fn span_s(first: Option<u64>, last: Option<u64>) -> f64 {
    match (first, last) {
        (Some(a), Some(b)) => (b - a) as f64 / 1e6,
        _ => 0.0,
    }
}

fn check_order(stream: &'static str, ts: impl Iterator<Item = u64>) -> Result<(), SessionError> {
    let mut prev = None;
    for t in ts {
        if let Some(p) = prev {
            if t < p {
                return Err(SessionError::TimestampRegression {
                    stream,
                    prev: p,
                    next: t,
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

impl Session {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            header,
            vibration: Vec::new(),
            poses: Vec::new(),
            intensities: Vec::new(),
            meta: Vec::new(),
            unknown: Vec::new(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn vibration_frames(&self) -> usize {
        match self.header.channels {
            0 => 0,
            c => self.vibration.len() / c as usize,
        }
    }

    /// One channel of the vibration stream.
    pub fn vibration_channel(&self, channel: usize) -> Vec<f32> {
        let c = self.header.channels as usize;
        self.vibration.iter().skip(channel).step_by(c.max(1)).copied().collect()
    }

    pub fn vibration_start_us(&self) -> u64 {
        self.meta_value(META_VIBRATION_START)
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let h = &self.header;
        if !(h.sample_rate_hz > 0.0 && h.sample_rate_hz.is_finite()) {
            return Err(SessionError::Invalid(format!("sample rate {}", h.sample_rate_hz)));
        }
        if !self.vibration.is_empty() && h.channels == 0 {
            return Err(SessionError::Invalid("vibration data with zero channels".into()));
        }
        if h.channels > 0 && !self.vibration.len().is_multiple_of(h.channels as usize) {
            return Err(SessionError::Invalid(format!(
                "{} vibration samples do not fill whole {}-channel frames",
                self.vibration.len(),
                h.channels
            )));
        }
        if self.meta.iter().any(|(k, v)| k.contains(['=', '\n']) || v.contains('\n')) {
            return Err(SessionError::Invalid("META keys may not contain `=` or newlines".into()));
        }
        check_order("POSE", self.poses.iter().map(|p| p.t_us))?;
        check_order("INTS", self.intensities.iter().map(|r| r.t_us))?;
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            vibration_frames: self.vibration_frames(),
            vibration_duration_s: self.vibration_frames() as f64 / self.header.sample_rate_hz,
            poses: self.poses.len(),
            pose_duration_s: span_s(self.poses.first().map(|p| p.t_us), self.poses.last().map(|p| p.t_us)),
            intensities: self.intensities.len(),
            intensity_duration_s: span_s(
                self.intensities.first().map(|r| r.t_us),
                self.intensities.last().map(|r| r.t_us),
            ),
            unknown_chunks: self.unknown.len(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, SessionError> {
        self.validate()?;
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(&SESSION_MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.channels.to_le_bytes());
        out.extend_from_slice(&h.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&h.segment_ms.to_le_bytes());
        let id = h.model_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| SessionError::Invalid("model id longer than 65535 bytes".into()))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);

        let push_chunk = |out: &mut Vec<u8>, tag: [u8; 4], payload: &[u8]| -> Result<(), SessionError> {
            let len = u32::try_from(payload.len())
                .map_err(|_| SessionError::Invalid("chunk larger than 4 GiB".into()))?;
            out.extend_from_slice(&tag);
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(payload);
            Ok(())
        };

        if !self.vibration.is_empty() {
            let frame_bytes = 4 * h.channels as usize;
            let per_chunk = (MAX_VIBR_CHUNK / frame_bytes).max(1) * h.channels as usize;
            for block in self.vibration.chunks(per_chunk) {
                let payload: Vec<u8> = block.iter().flat_map(|s| s.to_le_bytes()).collect();
                push_chunk(&mut out, TAG_VIBR, &payload)?;
            }
        }
        if !self.poses.is_empty() {
            let mut payload = Vec::with_capacity(self.poses.len() * POSE_RECORD_LEN);
            for p in &self.poses {
                payload.extend_from_slice(&p.t_us.to_le_bytes());
                let q = p.orientation;
                for v in p.position.iter().chain(&[q.w, q.x, q.y, q.z]) {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
            push_chunk(&mut out, TAG_POSE, &payload)?;
        }
        if !self.intensities.is_empty() {
            let mut payload = Vec::with_capacity(self.intensities.len() * INTENSITY_RECORD_LEN);
            for r in &self.intensities {
                payload.extend_from_slice(&r.t_us.to_le_bytes());
                payload.extend_from_slice(&r.intensity.to_le_bytes());
            }
            push_chunk(&mut out, TAG_INTS, &payload)?;
        }
        if !self.meta.is_empty() {
            let mut text = String::new();
            for (k, v) in &self.meta {
                let _ = writeln!(text, "{k}={v}");
            }
            push_chunk(&mut out, TAG_META, text.as_bytes())?;
        }
        for chunk in &self.unknown {
            push_chunk(&mut out, chunk.tag, &chunk.payload)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SessionError> {
        let corrupt = |m: &str| SessionError::Corrupt(m.to_string());
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| corrupt("truncated header"))? != SESSION_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u16().ok_or_else(|| corrupt("truncated header"))?;
        if version != SESSION_VERSION {
            return Err(SessionError::Corrupt(format!("unsupported version {version}")));
        }
        let channels = r.u16().ok_or_else(|| corrupt("truncated header"))?;
        let sample_rate_hz = r.f64().ok_or_else(|| corrupt("truncated header"))?;
        let segment_ms = r.f64().ok_or_else(|| corrupt("truncated header"))?;
        let id_len = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
        let model_id = std::str::from_utf8(r.take(id_len).ok_or_else(|| corrupt("truncated model id"))?)
            .map_err(|_| corrupt("model id is not UTF-8"))?
            .to_string();
        let mut session = Session::new(SessionHeader {
            version,
            channels,
            sample_rate_hz,
            segment_ms,
            model_id,
        });

        while r.pos < bytes.len() {
            let tag: [u8; 4] = r
                .take(4)
                .and_then(|t| t.try_into().ok())
                .ok_or_else(|| corrupt("truncated chunk tag"))?;
            let tag_str = String::from_utf8_lossy(&tag).into_owned();
            let len = r
                .u32()
                .ok_or_else(|| SessionError::Corrupt(format!("truncated length of chunk {tag_str}")))?
                as usize;
            let payload = r.take(len).ok_or_else(|| {
                SessionError::Corrupt(format!(
                    "chunk {tag_str} declares {len} bytes but only {} remain",
                    bytes.len() - r.pos
                ))
            })?;
            match tag {
                TAG_VIBR => {
                    if !len.is_multiple_of(4) {
                        return Err(corrupt("VIBR length is not a multiple of 4"));
                    }
                    session.vibration.extend(
                        payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4"))),
                    );
                }
                TAG_POSE => {
                    if !len.is_multiple_of(POSE_RECORD_LEN) {
                        return Err(corrupt("POSE length is not a multiple of 36"));
                    }
                    for rec in payload.chunks_exact(POSE_RECORD_LEN) {
                        let f = |i: usize| f32::from_le_bytes(rec[8 + 4 * i..12 + 4 * i].try_into().expect("4"));
                        session.poses.push(PoseSample {
                            t_us: u64::from_le_bytes(rec[..8].try_into().expect("8")),
                            position: [f(0), f(1), f(2)],
                            orientation: Quaternion::new(f(3), f(4), f(5), f(6)),
                        });
                    }
                }
                TAG_INTS => {
                    if !len.is_multiple_of(INTENSITY_RECORD_LEN) {
                        return Err(corrupt("INTS length is not a multiple of 12"));
                    }
                    for rec in payload.chunks_exact(INTENSITY_RECORD_LEN) {
                        session.intensities.push(IntensityRecord {
                            t_us: u64::from_le_bytes(rec[..8].try_into().expect("8")),
                            intensity: f32::from_le_bytes(rec[8..].try_into().expect("4")),
                        });
                    }
                }
                TAG_META => {
                    let text = std::str::from_utf8(payload).map_err(|_| corrupt("META is not UTF-8"))?;
                    for line in text.lines().filter(|l| !l.is_empty()) {
                        let (k, v) = line.split_once('=').ok_or_else(|| corrupt("META line without `=`"))?;
                        session.meta.push((k.to_string(), v.to_string()));
                    }
                }
                _ => session.unknown.push(RawChunk {
                    tag,
                    payload: payload.to_vec(),
                }),
            }
        }
        session.validate().map_err(|e| match e {
            SessionError::Invalid(m) => SessionError::Corrupt(m),
            other => other,
        })?;
        Ok(session)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<SessionSummary, SessionError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(self.summary())
    }

    /// POSE records as `t_us,px,py,pz,qw,qx,qy,qz` CSV.
    pub fn poses_csv(&self) -> String {
        crate::trajectory::poses_to_csv(&self.poses)
    }

    /// INTS records as `t_s,intensity` CSV.
    pub fn intensities_csv(&self) -> String {
        let mut out = String::from("t_s,intensity\n");
        for r in &self.intensities {
            let _ = writeln!(out, "{},{}", r.t_us as f64 / 1e6, r.intensity);
        }
        out
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().expect("2")))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4")))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8")))
    }
}

/// Input to a [`Recorder`].
#[derive(Debug, Clone, PartialEq)]
pub enum RecordEvent {
    /// Interleaved frames for all channels.
    Vibration(Vec<f32>),
    Pose(PoseSample<f32>),
    Intensity(IntensityRecord),
    Meta(String, String),
}

/// Accumulates streams in arrival order, rejecting timestamp regressions.
#[derive(Debug)]
pub struct Recorder {
    session: Session,
}

impl Recorder {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            session: Session::new(header),
        }
    }

    pub fn push(&mut self, event: RecordEvent) -> Result<(), SessionError> {
        let s = &mut self.session;
        match event {
            RecordEvent::Vibration(frames) => {
                let c = s.header.channels as usize;
                if c == 0 || frames.len() % c != 0 {
                    return Err(SessionError::Invalid(format!(
                        "vibration block of {} samples for {c} channels",
                        frames.len()
                    )));
                }
                s.vibration.extend(frames);
            }
            RecordEvent::Pose(p) => {
                if let Some(prev) = s.poses.last() {
                    if p.t_us < prev.t_us {
                        return Err(SessionError::TimestampRegression {
                            stream: "POSE",
                            prev: prev.t_us,
                            next: p.t_us,
                        });
                    }
                }
                s.poses.push(p);
            }
            RecordEvent::Intensity(r) => {
                if let Some(prev) = s.intensities.last() {
                    if r.t_us < prev.t_us {
                        return Err(SessionError::TimestampRegression {
                            stream: "INTS",
                            prev: prev.t_us,
                            next: r.t_us,
                        });
                    }
                }
                s.intensities.push(r);
            }
            RecordEvent::Meta(k, v) => s.set_meta(k, v),
        }
        Ok(())
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    /// Writes the file and returns per-stream counts.
    pub fn finish(self, path: impl AsRef<Path>) -> Result<SessionSummary, SessionError> {
        self.session.save(path)
    }

    /// Serializer thread fed by any number of producers through a channel.
    /// Events from one producer keep their order.
    pub fn spawn(header: SessionHeader) -> (mpsc::Sender<RecordEvent>, thread::JoinHandle<Result<Session, SessionError>>) {
        let (tx, rx) = mpsc::channel();
        let handle = thread::spawn(move || {
            let mut rec = Recorder::new(header);
            for ev in rx {
                rec.push(ev)?;
            }
            Ok(rec.into_session())
        });
        (tx, handle)
    }
}

/// Writes the given streams to `path`.
pub fn record(
    header: SessionHeader,
    vibration: &[f32],
    poses: &[PoseSample<f32>],
    intensities: &[IntensityRecord],
    meta: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<SessionSummary, SessionError> {
    let mut rec = Recorder::new(header);
    if !vibration.is_empty() {
        rec.push(RecordEvent::Vibration(vibration.to_vec()))?;
    }
    for &p in poses {
        rec.push(RecordEvent::Pose(p))?;
    }
    for &r in intensities {
        rec.push(RecordEvent::Intensity(r))?;
    }
    for (k, v) in meta {
        rec.push(RecordEvent::Meta(k.clone(), v.clone()))?;
    }
    rec.finish(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayClock {
    /// Playback speed; `f64::INFINITY` replays as fast as possible.
    pub speed: f64,
    /// Events before this timestamp are skipped.
    pub start_offset_us: u64,
}

impl Default for ReplayClock {
    fn default() -> Self {
        Self {
            speed: 1.0,
            start_offset_us: 0,
        }
    }
}

impl ReplayClock {
    pub fn as_fast_as_possible() -> Self {
        Self {
            speed: f64::INFINITY,
            start_offset_us: 0,
        }
    }

    pub fn with_speed(speed: f64) -> Self {
        Self {
            speed,
            start_offset_us: 0,
        }
    }
}

/// Events delivered during replay. Ties in `t_us` are delivered in the
/// order Pose, Intensity, Vibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplayEvent<'a> {
    Pose(&'a PoseSample<f32>),
    Intensity(&'a IntensityRecord),
    /// One segment of interleaved vibration frames.
    Vibration { t_us: u64, frames: &'a [f32] },
}

impl ReplayEvent<'_> {
    pub fn t_us(&self) -> u64 {
        match self {
            ReplayEvent::Pose(p) => p.t_us,
            ReplayEvent::Intensity(r) => r.t_us,
            ReplayEvent::Vibration { t_us, .. } => *t_us,
        }
    }

    fn priority(&self) -> u8 {
        match self {
            ReplayEvent::Pose(_) => 0,
            ReplayEvent::Intensity(_) => 1,
            ReplayEvent::Vibration { .. } => 2,
        }
    }
}

pub trait ReplaySink {
    fn event(&mut self, event: &ReplayEvent<'_>) -> Result<(), SessionError>;
}

impl<F: FnMut(&ReplayEvent<'_>) -> Result<(), SessionError>> ReplaySink for F {
    fn event(&mut self, event: &ReplayEvent<'_>) -> Result<(), SessionError> {
        self(event)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplayReport {
    pub events: usize,
    pub poses: usize,
    pub intensities: usize,
    pub vibration_blocks: usize,
    pub wall_time: Duration,
}

/// All events of `session` in delivery order.
pub fn replay_events(session: &Session) -> Vec<ReplayEvent<'_>> {
    let mut events: Vec<ReplayEvent<'_>> = Vec::with_capacity(session.poses.len() + session.intensities.len());
    events.extend(session.poses.iter().map(ReplayEvent::Pose));
    events.extend(session.intensities.iter().map(ReplayEvent::Intensity));
    let c = session.header.channels as usize;
    if c > 0 && !session.vibration.is_empty() {
        let rate = session.header.sample_rate_hz;
        let block = ((session.header.segment_ms / 1000.0 * rate).round() as usize).max(1);
        let start = session.vibration_start_us();
        for (k, frames) in session.vibration.chunks(block * c).enumerate() {
            let t_us = start + ((k * block) as f64 / rate * 1e6).round() as u64;
            events.push(ReplayEvent::Vibration { t_us, frames });
        }
    }
    // Stable: order within each stream is preserved.
    events.sort_by_key(|e| (e.t_us(), e.priority()));
    events
}

/// Delivers the session's events to every sink in timestamp order, paced
/// so that wall-clock gaps equal timestamp gaps divided by `clock.speed`.
pub fn replay(
    session: &Session,
    clock: &ReplayClock,
    sinks: &mut [&mut dyn ReplaySink],
) -> Result<ReplayReport, SessionError> {
    if !(clock.speed > 0.0) {
        return Err(SessionError::Invalid(format!("replay speed {} must be positive", clock.speed)));
    }
    let events: Vec<_> = replay_events(session)
        .into_iter()
        .filter(|e| e.t_us() >= clock.start_offset_us)
        .collect();
    let started = Instant::now();
    let mut report = ReplayReport::default();
    let t0 = events.first().map(|e| e.t_us()).unwrap_or(0);
    for event in &events {
        if clock.speed.is_finite() {
            let target = Duration::from_secs_f64((event.t_us() - t0) as f64 / 1e6 / clock.speed);
            let elapsed = started.elapsed();
            if target > elapsed {
                thread::sleep(target - elapsed);
            }
        }
        for sink in sinks.iter_mut() {
            sink.event(event)?;
        }
        report.events += 1;
        match event {
            ReplayEvent::Pose(_) => report.poses += 1,
            ReplayEvent::Intensity(_) => report.intensities += 1,
            ReplayEvent::Vibration { .. } => report.vibration_blocks += 1,
        }
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(t_us: u64) -> PoseSample<f32> {
        PoseSample {
            t_us,
            position: [t_us as f32 * 1e-3, 0.5, -0.25],
            orientation: Quaternion::new(1.0, 0.0, 0.0, 0.0),
        }
    }

    fn header() -> SessionHeader {
        SessionHeader::new(4, 5000.0, 5.0, "builtin")
    }

    #[test]
    fn pose_regression_rejected() {
        let mut rec = Recorder::new(header());
        rec.push(RecordEvent::Pose(pose(10))).unwrap();
        assert!(matches!(
            rec.push(RecordEvent::Pose(pose(5))),
            Err(SessionError::TimestampRegression { prev: 10, next: 5, .. })
        ));
    }

    #[test]
    fn vibration_only_has_no_pose_chunks() {
        let mut s = Session::new(header());
        s.vibration = vec![0.25; 400];
        let bytes = s.to_bytes().unwrap();
        assert!(!bytes.windows(4).any(|w| w == TAG_POSE || w == TAG_INTS));
        assert_eq!(Session::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn unknown_chunks_survive_rewrite() {
        let mut s = Session::new(header());
        s.poses.push(pose(1));
        s.unknown.push(RawChunk {
            tag: *b"XTRA",
            payload: vec![1, 2, 3],
        });
        let back = Session::from_bytes(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(back.unknown, s.unknown);
        assert_eq!(back.to_bytes().unwrap(), s.to_bytes().unwrap());
    }

    #[test]
    fn overrunning_chunk_is_corrupt() {
        let mut s = Session::new(header());
        s.intensities.push(IntensityRecord { t_us: 3, intensity: 1.0 });
        let mut bytes = s.to_bytes().unwrap();
        let n = bytes.len();
        // Length field sits 4 bytes after the tag, 12-byte payload follows.
        bytes[n - 16..n - 12].copy_from_slice(&100u32.to_le_bytes());
        assert!(matches!(Session::from_bytes(&bytes), Err(SessionError::Corrupt(_))));
    }

    #[test]
    fn ties_put_pose_before_intensity() {
        let mut s = Session::new(header());
        s.poses = vec![pose(0), pose(10)];
        s.intensities = vec![
            IntensityRecord { t_us: 5, intensity: 1.0 },
            IntensityRecord { t_us: 10, intensity: 2.0 },
        ];
        let order: Vec<(u64, u8)> = replay_events(&s).iter().map(|e| (e.t_us(), e.priority())).collect();
        assert_eq!(order, vec![(0, 0), (5, 1), (10, 0), (10, 1)]);
    }

    #[test]
    fn vibration_blocks_are_timed_by_segment() {
        let mut s = Session::new(header());
        s.vibration = vec![0.0; 4 * 60];
        s.set_meta(META_VIBRATION_START, "1000");
        let ts: Vec<u64> = replay_events(&s).iter().map(|e| e.t_us()).collect();
        assert_eq!(ts, vec![1000, 6000, 11000]);
    }
}
