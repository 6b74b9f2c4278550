//! Intensity Segment Modulation.
//!
//! Analysis splits a signal into buffers, decomposes each buffer with EMD,
//! and sums the perceptual intensity of every resolvable IMF over each
//! 5 ms segment. Synthesis turns an intensity profile back into a single
//! carrier whose amplitude reproduces that intensity, and adds the
//! low-frequency channel that the segment analysis cannot resolve.

use std::fmt::Write as _;
use std::sync::mpsc;
use std::thread;

use thiserror::Error;

use crate::emd::{components_in, emd_decompose, EmdConfig, EmdError, MIN_EMD_LEN};
use crate::psychophysics::{ModelError, PsychoModel};
use crate::scalar::Scalar;
use crate::signal::{lowfreq_extract, segment_len_samples, SignalError, Waveform};

#[derive(Debug, Error)]
pub enum IsmError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("input of {len} samples is shorter than one {buffer_len}-sample buffer")]
    TooShort { len: usize, buffer_len: usize },
    #[error("carrier {carrier_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    CarrierAboveNyquist { carrier_hz: f64, nyquist_hz: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("profile mismatch: {0}")]
    ProfileMismatch(String),
    #[error("empty intensity profile")]
    EmptyProfile,
    #[error("profile CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsmConfig {
    pub carrier_hz: f64,
    pub buffer_ms: f64,
    pub segment_ms: f64,
    pub lowfreq_cutoff_hz: f64,
    pub crossfade: bool,
    /// Samples of neighbouring signal, in segments, given to EMD on each
    /// side of a buffer. Only the buffer's own segments are reported.
    pub context_segments: usize,
    pub emd: EmdConfig,
}

impl Default for IsmConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 200.0,
            buffer_ms: 100.0,
            segment_ms: 5.0,
            lowfreq_cutoff_hz: 100.0,
            crossfade: true,
            context_segments: 2,
            emd: EmdConfig::default(),
        }
    }
}

/// Fraction of each segment over which the carrier amplitude ramps.
pub const CROSSFADE_FRACTION: f64 = 0.25;

impl IsmConfig {
    fn segments_per_buffer(&self) -> Result<usize, IsmError> {
        if !(self.segment_ms > 0.0 && self.buffer_ms > 0.0) {
            return Err(IsmError::InvalidConfig("buffer_ms and segment_ms must be positive".into()));
        }
        let ratio = self.buffer_ms / self.segment_ms;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
            return Err(IsmError::InvalidConfig(format!(
                "buffer_ms {} is not an integer multiple of segment_ms {}",
                self.buffer_ms, self.segment_ms
            )));
        }
        Ok(k as usize)
    }

    fn check_carrier(&self, sample_rate_hz: f64) -> Result<(), IsmError> {
        let nyquist = sample_rate_hz / 2.0;
        if !(self.carrier_hz > 0.0 && self.carrier_hz < nyquist) {
            return Err(IsmError::CarrierAboveNyquist {
                carrier_hz: self.carrier_hz,
                nyquist_hz: nyquist,
            });
        }
        Ok(())
    }
}

/// One perceptual intensity per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile<T> {
    pub segment_duration_ms: T,
    pub values: Vec<T>,
    pub start_time_s: T,
}

impl<T: Scalar> IntensityProfile<T> {
    pub fn new(segment_duration_ms: T, values: Vec<T>, start_time_s: T) -> Self {
        Self {
            segment_duration_ms,
            values,
            start_time_s,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment_duration_s(&self) -> T {
        self.segment_duration_ms / T::lit(1000.0)
    }

    pub fn midpoint_s(&self, k: usize) -> T {
        self.start_time_s + (T::from_usize_lossy(k) + T::lit(0.5)) * self.segment_duration_s()
    }

    /// `t_s,intensity` with one row per segment midpoint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,intensity\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.midpoint_s(k).to_f64_lossy(), v.to_f64_lossy());
        }
        out
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv). The segment
    /// duration is taken from the midpoint spacing, or `default_segment_ms`
    /// when there is a single row.
    pub fn from_csv(text: &str, default_segment_ms: T) -> Result<Self, IsmError> {
        let mut rows = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "t_s,intensity" => {}
            _ => {
                return Err(IsmError::Csv {
                    line: 1,
                    message: "expected header `t_s,intensity`".into(),
                })
            }
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: &str| IsmError::Csv {
                line: line_no,
                message: message.to_string(),
            };
            let (t, v) = line.split_once(',').ok_or_else(|| err("expected two columns"))?;
            let t: f64 = t.trim().parse().map_err(|_| err("bad time"))?;
            let v: f64 = v.trim().parse().map_err(|_| err("bad intensity"))?;
            if !t.is_finite() || !(v >= 0.0 && v.is_finite()) {
                return Err(err("values must be finite, intensity non-negative"));
            }
            rows.push((t, v));
        }
        let seg_s = match rows.as_slice() {
            [] => return Err(IsmError::EmptyProfile),
            [_] => default_segment_ms.to_f64_lossy() / 1000.0,
            [a, b, ..] => b.0 - a.0,
        };
        if !(seg_s > 0.0) {
            return Err(IsmError::Csv {
                line: 3,
                message: "midpoints must be increasing".into(),
            });
        }
        Ok(Self {
            segment_duration_ms: T::lit(seg_s * 1000.0),
            start_time_s: T::lit(rows[0].0 - seg_s / 2.0),
            values: rows.into_iter().map(|r| T::lit(r.1)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult<T> {
    pub profile: IntensityProfile<T>,
    pub lowfreq: Waveform<T>,
}

/// Buffer geometry in samples.
#[derive(Debug, Clone, Copy)]
struct Layout {
    segment_len: usize,
    segments_per_buffer: usize,
    context_len: usize,
}

impl Layout {
    fn new<T: Scalar>(sample_rate_hz: T, config: &IsmConfig) -> Result<Self, IsmError> {
        let segment_len = segment_len_samples(sample_rate_hz, T::lit(config.segment_ms))?;
        let segments_per_buffer = config.segments_per_buffer()?;
        if segment_len * segments_per_buffer < MIN_EMD_LEN {
            return Err(IsmError::InvalidConfig(format!(
                "buffer of {} samples is shorter than the EMD minimum {MIN_EMD_LEN}",
                segment_len * segments_per_buffer
            )));
        }
        config.emd.validate()?;
        Ok(Self {
            segment_len,
            segments_per_buffer,
            context_len: config.context_segments * segment_len,
        })
    }

    fn buffer_len(&self) -> usize {
        self.segment_len * self.segments_per_buffer
    }

    /// Segments in the next buffer starting at segment `seg`, given
    /// `total` segments. A remainder too short for EMD joins this buffer.
    fn next_buffer_segments(&self, seg: usize, total: usize) -> usize {
        let n = self.segments_per_buffer.min(total - seg);
        let rest = total - seg - n;
        if rest > 0 && rest * self.segment_len < MIN_EMD_LEN {
            n + rest
        } else {
            n
        }
    }
}

/// Intensities of `n_segs` segments that start `lead` samples into `window`.
fn analyze_window<T: Scalar>(
    window: &[T],
    lead: usize,
    n_segs: usize,
    layout: &Layout,
    sample_rate_hz: T,
    model: &PsychoModel<T>,
    config: &IsmConfig,
) -> Result<Vec<T>, IsmError> {
    let w = Waveform::new(window.to_vec(), sample_rate_hz)?;
    let imfs = emd_decompose(&w, &config.emd)?;
    (0..n_segs)
        .map(|k| {
            let start = lead + k * layout.segment_len;
            let comps = components_in(&imfs, start..start + layout.segment_len);
            model.total_intensity(&comps).map_err(IsmError::from)
        })
        .collect()
}

/// Buffered EMD analysis plus the low-frequency channel of the raw signal.
pub fn analyze<T: Scalar>(
    waveform: &Waveform<T>,
    model: &PsychoModel<T>,
    config: &IsmConfig,
) -> Result<AnalysisResult<T>, IsmError> {
    let rate = waveform.sample_rate_hz();
    let layout = Layout::new(rate, config)?;
    let x = waveform.samples();
    if x.len() < layout.buffer_len() {
        return Err(IsmError::TooShort {
            len: x.len(),
            buffer_len: layout.buffer_len(),
        });
    }
    let total = x.len() / layout.segment_len;
    let mut values = Vec::with_capacity(total);
    let mut seg = 0;
    while seg < total {
        let n_segs = layout.next_buffer_segments(seg, total);
        let start = seg * layout.segment_len;
        let end = start + n_segs * layout.segment_len;
        let lo = start.saturating_sub(layout.context_len);
        let hi = (end + layout.context_len).min(x.len());
        values.extend(analyze_window(&x[lo..hi], start - lo, n_segs, &layout, rate, model, config)?);
        seg += n_segs;
    }
    let lowfreq = lowfreq_extract(waveform, T::lit(config.lowfreq_cutoff_hz))?;
    Ok(AnalysisResult {
        profile: IntensityProfile::new(T::lit(config.segment_ms), values, T::zero()),
        lowfreq,
    })
}

/// Element-wise mean of four channel profiles. The four values of each
/// segment are summed in sorted order so the result does not depend on
/// channel order.
pub fn fuse_channels<T: Scalar>(profiles: &[IntensityProfile<T>]) -> Result<IntensityProfile<T>, IsmError> {
    let first = profiles
        .first()
        .ok_or_else(|| IsmError::ProfileMismatch("no profiles to fuse".into()))?;
    if profiles.len() != crate::signal::CHANNELS {
        return Err(IsmError::ProfileMismatch(format!(
            "expected {} profiles, got {}",
            crate::signal::CHANNELS,
            profiles.len()
        )));
    }
    for p in &profiles[1..] {
        if p.len() != first.len() {
            return Err(IsmError::ProfileMismatch(format!(
                "length {} differs from {}",
                p.len(),
                first.len()
            )));
        }
        if p.segment_duration_ms != first.segment_duration_ms {
            return Err(IsmError::ProfileMismatch("segment durations differ".into()));
        }
    }
    let n = T::from_usize_lossy(profiles.len());
    let mut scratch = Vec::with_capacity(profiles.len());
    let values = (0..first.len())
        .map(|k| {
            scratch.clear();
            scratch.extend(profiles.iter().map(|p| p.values[k]));
            scratch.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            scratch.iter().copied().sum::<T>() / n
        })
        .collect();
    Ok(IntensityProfile::new(first.segment_duration_ms, values, first.start_time_s))
}

/// Unwrapped carrier phase at sample `n`: `2 pi f_c n / rate`.
pub fn carrier_phase<T: Scalar>(n: usize, carrier_hz: T, sample_rate_hz: T) -> T {
    T::TAU() * T::from_usize_lossy(n) * carrier_hz / sample_rate_hz
}

// sin of the carrier at sample n, computed from the wrapped cycle position
// so that the carrier repeats bit-exactly when rate / f_c is an integer.
fn carrier_sample<T: Scalar>(n: usize, carrier_hz: T, sample_rate_hz: T) -> T {
    let cycles = (T::from_usize_lossy(n) * carrier_hz) % sample_rate_hz / sample_rate_hz;
    (T::TAU() * cycles).sin()
}

/// Per-segment carrier amplitude: `a_k` giving `values[k]` at the carrier.
pub fn carrier_amplitudes<T: Scalar>(
    profile: &IntensityProfile<T>,
    model: &PsychoModel<T>,
    carrier_hz: T,
) -> Result<Vec<T>, IsmError> {
    profile
        .values
        .iter()
        .map(|&v| model.amplitude_for_intensity(v, carrier_hz).map_err(IsmError::from))
        .collect()
}

/// Amplitude-modulated carrier reproducing `profile`, plus `lowfreq`.
///
/// Output length is `segments * segment_len`; `lowfreq` is truncated to
/// that length or treated as zero past its end. With crossfade the
/// amplitude ramps linearly from the previous segment's value (zero before
/// the first segment) over the first quarter of each segment.
pub fn synthesize<T: Scalar>(
    profile: &IntensityProfile<T>,
    lowfreq: &Waveform<T>,
    model: &PsychoModel<T>,
    config: &IsmConfig,
) -> Result<Waveform<T>, IsmError> {
    if profile.is_empty() {
        return Err(IsmError::EmptyProfile);
    }
    let rate = lowfreq.sample_rate_hz();
    config.check_carrier(rate.to_f64_lossy())?;
    let carrier = T::lit(config.carrier_hz);
    let seg_len = segment_len_samples(rate, profile.segment_duration_ms)?;
    let amps = carrier_amplitudes(profile, model, carrier)?;
    let ramp_len = if config.crossfade {
        ((seg_len as f64 * CROSSFADE_FRACTION).round() as usize).max(1)
    } else {
        0
    };
    let low = lowfreq.samples();
    let mut out = Vec::with_capacity(amps.len() * seg_len);
    let mut prev = T::zero();
    for &a in &amps {
        for j in 0..seg_len {
            let n = out.len();
            let amp = if j < ramp_len {
                prev + (a - prev) * T::from_usize_lossy(j) / T::from_usize_lossy(ramp_len)
            } else {
                a
            };
            let lf = low.get(n).copied().unwrap_or_else(T::zero);
            out.push(amp * carrier_sample(n, carrier, rate) + lf);
        }
        prev = a;
    }
    Ok(Waveform::new(out, rate)?)
}

/// Analysis followed by synthesis at the configured carrier.
pub fn convert<T: Scalar>(
    waveform: &Waveform<T>,
    model: &PsychoModel<T>,
    config: &IsmConfig,
) -> Result<Waveform<T>, IsmError> {
    config.check_carrier(waveform.sample_rate_hz().to_f64_lossy())?;
    let analysis = analyze(waveform, model, config)?;
    synthesize(&analysis.profile, &analysis.lowfreq, model, config)
}

/// Incremental analysis producing the same intensities as [`analyze`].
///
/// A buffer is analysed once its right-hand context has arrived, so
/// intensities lag the input by one buffer plus the context.
#[derive(Debug)]
pub struct StreamingAnalyzer<T> {
    model: PsychoModel<T>,
    config: IsmConfig,
    layout: Layout,
    sample_rate_hz: T,
    pending: Vec<T>,
    /// Absolute index of `pending[0]`.
    pending_start: usize,
    /// Next segment to analyse.
    next_segment: usize,
}

impl<T: Scalar> StreamingAnalyzer<T> {
    pub fn new(model: PsychoModel<T>, config: IsmConfig, sample_rate_hz: T) -> Result<Self, IsmError> {
        let layout = Layout::new(sample_rate_hz, &config)?;
        Ok(Self {
            model,
            config,
            layout,
            sample_rate_hz,
            pending: Vec::new(),
            pending_start: 0,
            next_segment: 0,
        })
    }

    fn received(&self) -> usize {
        self.pending_start + self.pending.len()
    }

    fn run_buffer(&mut self, n_segs: usize) -> Result<Vec<T>, IsmError> {
        let l = &self.layout;
        let start = self.next_segment * l.segment_len;
        let end = start + n_segs * l.segment_len;
        let lo = start.saturating_sub(l.context_len);
        let hi = (end + l.context_len).min(self.received());
        let window = &self.pending[lo - self.pending_start..hi - self.pending_start];
        let out = analyze_window(window, start - lo, n_segs, l, self.sample_rate_hz, &self.model, &self.config)?;
        self.next_segment += n_segs;
        let keep_from = (self.next_segment * l.segment_len).saturating_sub(l.context_len);
        self.pending.drain(..keep_from - self.pending_start);
        self.pending_start = keep_from;
        Ok(out)
    }

    /// Feeds samples and returns intensities of any buffers completed.
    pub fn push(&mut self, samples: &[T]) -> Result<Vec<T>, IsmError> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(self.received() + i).into());
        }
        self.pending.extend_from_slice(samples);
        let mut out = Vec::new();
        let l = self.layout;
        // Hold back enough that the batch tail rule cannot merge this buffer.
        let reserve = l.context_len + MIN_EMD_LEN + l.segment_len;
        loop {
            let end = (self.next_segment + l.segments_per_buffer) * l.segment_len;
            if self.received() < end + reserve {
                break;
            }
            out.extend(self.run_buffer(l.segments_per_buffer)?);
        }
        Ok(out)
    }

    /// Flushes the remaining whole segments.
    pub fn finish(mut self) -> Result<Vec<T>, IsmError> {
        let l = self.layout;
        let total = self.received() / l.segment_len;
        if total * l.segment_len < l.buffer_len() {
            return Err(IsmError::TooShort {
                len: self.received(),
                buffer_len: l.buffer_len(),
            });
        }
        let mut out = Vec::new();
        while self.next_segment < total {
            let n = l.next_buffer_segments(self.next_segment, total);
            out.extend(self.run_buffer(n)?);
        }
        Ok(out)
    }
}

/// Runs a [`StreamingAnalyzer`] on its own thread. Sample blocks go in
/// through a bounded channel (sends block when it is full); intensities
/// come out in segment order. The join handle reports the first error.
pub fn spawn_streaming_analysis<T: Scalar>(
    model: PsychoModel<T>,
    config: IsmConfig,
    sample_rate_hz: T,
    capacity: usize,
) -> Result<
    (
        mpsc::SyncSender<Vec<T>>,
        mpsc::Receiver<T>,
        thread::JoinHandle<Result<(), IsmError>>,
    ),
    IsmError,
> {
    let mut analyzer = StreamingAnalyzer::new(model, config, sample_rate_hz)?;
    let (block_tx, block_rx) = mpsc::sync_channel::<Vec<T>>(capacity);
    let (value_tx, value_rx) = mpsc::sync_channel::<T>(capacity.max(1) * 64);
    let handle = thread::spawn(move || {
        for block in block_rx {
            for v in analyzer.push(&block)? {
                if value_tx.send(v).is_err() {
                    return Ok(());
                }
            }
        }
        for v in analyzer.finish()? {
            if value_tx.send(v).is_err() {
                break;
            }
        }
        Ok(())
    });
    Ok((block_tx, value_rx, handle))
}
