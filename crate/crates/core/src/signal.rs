//! Waveforms, 5 ms segmentation, the low-frequency extraction filter and
//! WAV file I/O.

use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

/// Number of sensor channels on the wrist device.
pub const CHANNELS: usize = 4;

/// Sample rate used for synthetic fixtures when none is given.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("signal of {len} samples is shorter than one {segment_len}-sample segment")]
    TooShort { len: usize, segment_len: usize },
    #[error("segment of {0} ms yields fewer than 2 samples")]
    SegmentTooShort(f64),
    #[error("cutoff {cutoff_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("unsupported channel count {0} (expected 1 or 4)")]
    ChannelCount(u16),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for SignalError {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(e) => SignalError::Io(e),
            hound::Error::FormatError(msg) => SignalError::MalformedHeader(msg.to_string()),
            hound::Error::Unsupported => {
                SignalError::UnsupportedEncoding("format not supported by the reader".into())
            }
            other => SignalError::MalformedHeader(other.to_string()),
        }
    }
}

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate_hz: T,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: T) -> Result<Self, SignalError> {
        check_rate(sample_rate_hz)?;
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: T) -> Result<Self, SignalError> {
        Self::new(vec![T::zero(); len], sample_rate_hz)
    }

    /// Samples `f(t)` at `n` points spaced `1 / sample_rate_hz` apart.
    pub fn from_fn(
        n: usize,
        sample_rate_hz: T,
        f: impl Fn(T) -> T,
    ) -> Result<Self, SignalError> {
        check_rate(sample_rate_hz)?;
        let samples = (0..n)
            .map(|i| f(T::from_usize_lossy(i) / sample_rate_hz))
            .collect();
        Self::new(samples, sample_rate_hz)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> T {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> T {
        T::from_usize_lossy(self.len()) / self.sample_rate_hz
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    /// Copies `range` into a new waveform at the same rate.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            samples: self.samples[range].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn truncated(mut self, len: usize) -> Self {
        self.samples.truncate(len);
        self
    }
}

pub(crate) fn check_rate<T: Scalar>(rate: T) -> Result<(), SignalError> {
    if rate.is_finite() && rate > T::zero() {
        Ok(())
    } else {
        Err(SignalError::InvalidSampleRate(rate.to_f64_lossy()))
    }
}

pub fn rms<T: Scalar>(samples: &[T]) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let energy: T = samples.iter().map(|&s| s * s).sum();
    (energy / T::from_usize_lossy(samples.len())).sqrt()
}

/// Four equally long channels sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelWaveform<T> {
    channels: [Waveform<T>; CHANNELS],
}

impl<T: Scalar> MultiChannelWaveform<T> {
    pub fn new(channels: [Waveform<T>; CHANNELS]) -> Result<Self, SignalError> {
        let rate = channels[0].sample_rate_hz();
        let len = channels[0].len();
        for (i, ch) in channels.iter().enumerate().skip(1) {
            if ch.sample_rate_hz() != rate {
                return Err(SignalError::ChannelMismatch(format!(
                    "channel {i} rate {} differs from {}",
                    ch.sample_rate_hz(),
                    rate
                )));
            }
            if ch.len() != len {
                return Err(SignalError::ChannelMismatch(format!(
                    "channel {i} has {} samples, expected {len}",
                    ch.len()
                )));
            }
        }
        Ok(Self { channels })
    }

    /// Splits interleaved frames into four channels.
    pub fn from_interleaved(data: &[T], sample_rate_hz: T) -> Result<Self, SignalError> {
        if !data.len().is_multiple_of(CHANNELS) {
            return Err(SignalError::ChannelMismatch(format!(
                "{} interleaved samples is not a multiple of {CHANNELS}",
                data.len()
            )));
        }
        let frames = data.len() / CHANNELS;
        let mut chans: [Vec<T>; CHANNELS] = Default::default();
        for c in chans.iter_mut() {
            c.reserve(frames);
        }
        for frame in data.chunks_exact(CHANNELS) {
            for (c, &s) in chans.iter_mut().zip(frame) {
                c.push(s);
            }
        }
        let [a, b, c, d] = chans;
        Self::new([
            Waveform::new(a, sample_rate_hz)?,
            Waveform::new(b, sample_rate_hz)?,
            Waveform::new(c, sample_rate_hz)?,
            Waveform::new(d, sample_rate_hz)?,
        ])
    }

    pub fn interleaved(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * CHANNELS);
        for i in 0..self.len() {
            out.extend(self.channels.iter().map(|c| c.samples()[i]));
        }
        out
    }

    pub fn channels(&self) -> &[Waveform<T>; CHANNELS] {
        &self.channels
    }

    pub fn into_channels(self) -> [Waveform<T>; CHANNELS] {
        self.channels
    }

    pub fn sample_rate_hz(&self) -> T {
        self.channels[0].sample_rate_hz()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Partition of a signal into whole segments; the trailing partial segment
/// is not part of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentGrid {
    pub segment_len_samples: usize,
    pub segment_count: usize,
}

impl SegmentGrid {
    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        let start = k * self.segment_len_samples;
        start..start + self.segment_len_samples
    }

    /// Samples covered by the grid.
    pub fn covered_len(&self) -> usize {
        self.segment_len_samples * self.segment_count
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.segment_count).map(|k| self.range(k))
    }
}

/// `round(segment_ms / 1000 * rate)`, at least 2.
pub fn segment_len_samples<T: Scalar>(sample_rate_hz: T, segment_ms: T) -> Result<usize, SignalError> {
    check_rate(sample_rate_hz)?;
    let len = (segment_ms / T::lit(1000.0) * sample_rate_hz).round();
    match len.to_usize() {
        Some(n) if n >= 2 && segment_ms.is_finite() => Ok(n),
        _ => Err(SignalError::SegmentTooShort(segment_ms.to_f64_lossy())),
    }
}

pub fn segment<T: Scalar>(waveform: &Waveform<T>, segment_ms: T) -> Result<SegmentGrid, SignalError> {
    let segment_len = segment_len_samples(waveform.sample_rate_hz(), segment_ms)?;
    grid_for_len(waveform.len(), segment_len)
}

pub(crate) fn grid_for_len(len: usize, segment_len: usize) -> Result<SegmentGrid, SignalError> {
    if len < segment_len {
        return Err(SignalError::TooShort {
            len,
            segment_len,
        });
    }
    Ok(SegmentGrid {
        segment_len_samples: segment_len,
        segment_count: len / segment_len,
    })
}

/// Second-order IIR section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    b0: T,
    b1: T,
    b2: T,
    a1: T,
    a2: T,
    z1: T,
    z2: T,
}

impl<T: Scalar> Biquad<T> {
    /// Bilinear-transform low-pass with frequency prewarping.
    pub fn lowpass(cutoff_hz: T, sample_rate_hz: T, q: T) -> Self {
        let k = (T::PI() * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let norm = T::one() / (T::one() + k / q + k2);
        let b0 = k2 * norm;
        Self::from_coefficients(
            b0,
            b0 + b0,
            b0,
            T::lit(2.0) * (k2 - T::one()) * norm,
            (T::one() - k / q + k2) * norm,
        )
    }

    pub fn highpass(cutoff_hz: T, sample_rate_hz: T, q: T) -> Self {
        let k = (T::PI() * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let norm = T::one() / (T::one() + k / q + k2);
        Self::from_coefficients(
            norm,
            -T::lit(2.0) * norm,
            norm,
            T::lit(2.0) * (k2 - T::one()) * norm,
            (T::one() - k / q + k2) * norm,
        )
    }

    fn from_coefficients(b0: T, b1: T, b2: T, a1: T, a2: T) -> Self {
        Self {
            b0,
            b1,
            b2,
            a1,
            a2,
            z1: T::zero(),
            z2: T::zero(),
        }
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    pub fn reset(&mut self) {
        self.z1 = T::zero();
        self.z2 = T::zero();
    }
}

/// Cascade of biquads realizing a 4th-order Butterworth response.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth4<T> {
    stages: [Biquad<T>; 2],
}

impl<T: Scalar> Butterworth4<T> {
    // Pole-pair quality factors 1/(2 cos(pi/8)) and 1/(2 cos(3 pi/8)).
    fn qs() -> [T; 2] {
        let eighth = T::PI() / T::lit(8.0);
        [
            T::one() / (T::lit(2.0) * eighth.cos()),
            T::one() / (T::lit(2.0) * (T::lit(3.0) * eighth).cos()),
        ]
    }

    pub fn lowpass(cutoff_hz: T, sample_rate_hz: T) -> Result<Self, SignalError> {
        check_cutoff(cutoff_hz, sample_rate_hz)?;
        let [q1, q2] = Self::qs();
        Ok(Self {
            stages: [
                Biquad::lowpass(cutoff_hz, sample_rate_hz, q1),
                Biquad::lowpass(cutoff_hz, sample_rate_hz, q2),
            ],
        })
    }

    pub fn highpass(cutoff_hz: T, sample_rate_hz: T) -> Result<Self, SignalError> {
        check_cutoff(cutoff_hz, sample_rate_hz)?;
        let [q1, q2] = Self::qs();
        Ok(Self {
            stages: [
                Biquad::highpass(cutoff_hz, sample_rate_hz, q1),
                Biquad::highpass(cutoff_hz, sample_rate_hz, q2),
            ],
        })
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        let y = self.stages[0].process(x);
        self.stages[1].process(y)
    }

    pub fn process_all(&mut self, input: &[T]) -> Vec<T> {
        input.iter().map(|&x| self.process(x)).collect()
    }

    pub fn reset(&mut self) {
        self.stages.iter_mut().for_each(Biquad::reset);
    }
}

fn check_cutoff<T: Scalar>(cutoff_hz: T, sample_rate_hz: T) -> Result<(), SignalError> {
    check_rate(sample_rate_hz)?;
    let nyquist = sample_rate_hz / T::lit(2.0);
    if !(cutoff_hz > T::zero() && cutoff_hz < nyquist) {
        return Err(SignalError::CutoffAboveNyquist {
            cutoff_hz: cutoff_hz.to_f64_lossy(),
            nyquist_hz: nyquist.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Causal 4th-order Butterworth low-pass (-3 dB at `cutoff_hz`), starting
/// from rest. Output has the input's length and rate.
pub fn lowfreq_extract<T: Scalar>(waveform: &Waveform<T>, cutoff_hz: T) -> Result<Waveform<T>, SignalError> {
    let mut filter = Butterworth4::lowpass(cutoff_hz, waveform.sample_rate_hz())?;
    Ok(Waveform {
        samples: filter.process_all(waveform.samples()),
        sample_rate_hz: waveform.sample_rate_hz(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Contents of a WAV file: either one channel or the four wrist channels.
#[derive(Debug, Clone, PartialEq)]
pub enum WavContents<T> {
    Mono(Waveform<T>),
    Quad(MultiChannelWaveform<T>),
}

impl<T: Scalar> WavContents<T> {
    pub fn sample_rate_hz(&self) -> T {
        match self {
            WavContents::Mono(w) => w.sample_rate_hz(),
            WavContents::Quad(m) => m.sample_rate_hz(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            WavContents::Mono(w) => w.len(),
            WavContents::Quad(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const PCM16_SCALE: f64 = 32768.0;

pub fn load_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<WavContents<T>, SignalError> {
    let reader = hound::WavReader::open(path)?;
    read_wav(reader)
}

pub fn read_wav<T: Scalar, R: std::io::Read>(
    reader: hound::WavReader<R>,
) -> Result<WavContents<T>, SignalError> {
    let spec = reader.spec();
    if spec.channels != 1 && spec.channels as usize != CHANNELS {
        return Err(SignalError::ChannelCount(spec.channels));
    }
    let data: Vec<T> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| T::lit(v as f64 / PCM16_SCALE)))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| T::lit(v as f64)))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(SignalError::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?}"
            )))
        }
    };
    let rate = T::lit(spec.sample_rate as f64);
    if spec.channels == 1 {
        Ok(WavContents::Mono(Waveform::new(data, rate)?))
    } else {
        Ok(WavContents::Quad(MultiChannelWaveform::from_interleaved(&data, rate)?))
    }
}

/// Writes interleaved samples; returns how many PCM16 samples were clipped.
fn write_interleaved<T: Scalar>(
    path: &Path,
    data: &[T],
    channels: u16,
    sample_rate_hz: T,
    encoding: WavEncoding,
) -> Result<usize, SignalError> {
    if let Some(i) = data.iter().position(|s| !s.is_finite()) {
        return Err(SignalError::NonFinite(i));
    }
    let rate = sample_rate_hz
        .round()
        .to_u32()
        .filter(|&r| r > 0)
        .ok_or(SignalError::InvalidSampleRate(sample_rate_hz.to_f64_lossy()))?;
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let mut clipped = 0;
    for &s in data {
        let v = s.to_f64_lossy();
        match encoding {
            WavEncoding::Float32 => writer.write_sample(v as f32)?,
            WavEncoding::Pcm16 => {
                if v.abs() > 1.0 {
                    clipped += 1;
                }
                let q = (v.clamp(-1.0, 1.0) * PCM16_SCALE).round();
                writer.write_sample(q.clamp(i16::MIN as f64, i16::MAX as f64) as i16)?;
            }
        }
    }
    writer.finalize()?;
    if clipped > 0 {
        log::warn!("{clipped} samples clipped while writing PCM16 to {}", path.display());
    }
    Ok(clipped)
}

/// Saves a mono waveform. Returns the number of clipped samples (PCM16 only).
pub fn save_wav<T: Scalar>(
    waveform: &Waveform<T>,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<usize, SignalError> {
    write_interleaved(path.as_ref(), waveform.samples(), 1, waveform.sample_rate_hz(), encoding)
}

pub fn save_wav_multi<T: Scalar>(
    waveform: &MultiChannelWaveform<T>,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<usize, SignalError> {
    write_interleaved(
        path.as_ref(),
        &waveform.interleaved(),
        CHANNELS as u16,
        waveform.sample_rate_hz(),
        encoding,
    )
}
