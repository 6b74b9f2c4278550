//! Empirical Mode Decomposition and per-segment amplitude/frequency
//! estimation of the resulting intrinsic mode functions.
//!
//! Sifting follows Huang's scheme: cubic-spline envelopes through the local
//! maxima and minima, subtraction of the envelope mean, and a stop test on
//! `SD = sum(m^2) / sum(h^2)` where `m` is the mean removed in the last pass.
//! Envelopes are pinned at the signal ends by mirroring the outermost
//! extrema about the first and last sample.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::signal::{SegmentGrid, Waveform};

/// Minimum input length accepted by [`emd_decompose`].
pub const MIN_EMD_LEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum EmdError {
    #[error("EMD needs at least {MIN_EMD_LEN} samples, got {0}")]
    TooShort(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid EMD configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("segment grid covers {grid} samples but the IMFs have {len}")]
    GridMismatch { grid: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdConfig {
    pub max_imfs: usize,
    pub sift_sd_threshold: f64,
    pub max_sift_iterations: usize,
    /// Extrema mirrored past each end of the signal.
    pub boundary_extrema: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_imfs: 8,
            sift_sd_threshold: 0.2,
            max_sift_iterations: 50,
            boundary_extrema: 2,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<(), EmdError> {
        if self.max_imfs == 0 {
            return Err(EmdError::InvalidConfig("max_imfs must be positive"));
        }
        if !(self.sift_sd_threshold > 0.0 && self.sift_sd_threshold.is_finite()) {
            return Err(EmdError::InvalidConfig("sift_sd_threshold must be positive"));
        }
        if self.max_sift_iterations == 0 {
            return Err(EmdError::InvalidConfig("max_sift_iterations must be positive"));
        }
        if self.boundary_extrema == 0 {
            return Err(EmdError::InvalidConfig("boundary_extrema must be positive"));
        }
        Ok(())
    }
}

/// Intrinsic mode functions, fastest oscillation first, plus the residual trend.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet<T> {
    pub imfs: Vec<Waveform<T>>,
    pub residual: Waveform<T>,
    pub source_length: usize,
}

impl<T: Scalar> ImfSet<T> {
    pub fn reconstruct(&self) -> Vec<T> {
        let mut out = self.residual.samples().to_vec();
        for imf in &self.imfs {
            for (o, &s) in out.iter_mut().zip(imf.samples()) {
                *o += s;
            }
        }
        out
    }

    /// Mean frequency of each IMF from its zero-crossing count.
    pub fn dominant_frequencies(&self) -> Vec<T> {
        self.imfs.iter().map(dominant_frequency).collect()
    }
}

/// Frequency of a whole waveform from its zero-crossing count.
pub fn dominant_frequency<T: Scalar>(w: &Waveform<T>) -> T {
    if w.is_empty() {
        return T::zero();
    }
    let crossings = count_zero_crossings(w.samples(), None);
    T::from_usize_lossy(crossings) / (T::lit(2.0) * w.duration_s())
}

/// Counts sign changes between non-zero samples. Zeros inherit the sign of
/// the last non-zero sample, so touching zero without crossing is not
/// counted. `lead_in` is the sample preceding `samples`, if any.
pub fn count_zero_crossings<T: Scalar>(samples: &[T], lead_in: Option<T>) -> usize {
    let sign = |x: T| {
        if x > T::zero() {
            1i8
        } else if x < T::zero() {
            -1
        } else {
            0
        }
    };
    let mut last = lead_in.map(sign).unwrap_or(0);
    let mut count = 0;
    for &x in samples {
        let s = sign(x);
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

#[derive(Debug, Default)]
struct Extrema {
    maxima: Vec<usize>,
    minima: Vec<usize>,
}

impl Extrema {
    fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }
}

// Plateaus are reported once, at their centre.
fn find_extrema<T: Scalar>(x: &[T], out: &mut Extrema) {
    out.maxima.clear();
    out.minima.clear();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        let rising = x[i] > x[i - 1];
        let falling = x[i] < x[i - 1];
        if !rising && !falling {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 < n {
            if rising && x[j + 1] < x[i] {
                out.maxima.push((i + j) / 2);
            } else if falling && x[j + 1] > x[i] {
                out.minima.push((i + j) / 2);
            }
        }
        i = j + 1;
    }
}

/// Number of local extrema (maxima + minima).
pub fn count_extrema<T: Scalar>(x: &[T]) -> usize {
    let mut e = Extrema::default();
    find_extrema(x, &mut e);
    e.count()
}

/// Standard IMF criterion: extrema and zero-crossing counts differ by at most one.
pub fn satisfies_imf_criterion<T: Scalar>(imf: &[T]) -> bool {
    let ext = count_extrema(imf) as i64;
    let zc = count_zero_crossings(imf, None) as i64;
    (ext - zc).abs() <= 1
}

/// Natural cubic spline workspace, reused across sifting passes.
#[derive(Debug, Default)]
struct Spline<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    m: Vec<T>,
    c: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> Spline<T> {
    /// Loads knots at `indices` (with mirrored copies past both ends) and
    /// evaluates the spline at every sample position, writing into `out`.
    fn envelope(&mut self, signal: &[T], indices: &[usize], mirror: usize, out: &mut [T]) {
        let n = signal.len();
        self.xs.clear();
        self.ys.clear();
        let last = (n - 1) as i64;
        for &p in indices.iter().take(mirror).rev() {
            if p != 0 {
                self.xs.push(T::lit(-(p as f64)));
                self.ys.push(signal[p]);
            }
        }
        for &p in indices {
            self.xs.push(T::from_usize_lossy(p));
            self.ys.push(signal[p]);
        }
        for &p in indices.iter().rev().take(mirror) {
            if p as i64 != last {
                self.xs.push(T::lit((2 * last - p as i64) as f64));
                self.ys.push(signal[p]);
            }
        }
        self.solve();
        self.evaluate(out);
    }

    fn solve(&mut self) {
        let k = self.xs.len();
        self.m.clear();
        self.m.resize(k, T::zero());
        if k < 3 {
            return;
        }
        // Thomas algorithm on the natural-spline system for interior M_i.
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        self.c.clear();
        self.c.resize(k, T::zero());
        self.d.clear();
        self.d.resize(k, T::zero());
        for i in 1..k - 1 {
            let h0 = self.xs[i] - self.xs[i - 1];
            let h1 = self.xs[i + 1] - self.xs[i];
            let rhs = six
                * ((self.ys[i + 1] - self.ys[i]) / h1 - (self.ys[i] - self.ys[i - 1]) / h0);
            let diag = two * (h0 + h1) - h0 * self.c[i - 1];
            self.c[i] = h1 / diag;
            self.d[i] = (rhs - h0 * self.d[i - 1]) / diag;
        }
        for i in (1..k - 1).rev() {
            self.m[i] = self.d[i] - self.c[i] * self.m[i + 1];
        }
    }

    fn evaluate(&self, out: &mut [T]) {
        let k = self.xs.len();
        match k {
            0 => out.iter_mut().for_each(|o| *o = T::zero()),
            1 => out.iter_mut().for_each(|o| *o = self.ys[0]),
            _ => {
                let six = T::lit(6.0);
                let mut seg = 0;
                for (i, o) in out.iter_mut().enumerate() {
                    let t = T::from_usize_lossy(i);
                    while seg + 2 < k && t > self.xs[seg + 1] {
                        seg += 1;
                    }
                    let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
                    let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
                    let (m0, m1) = (self.m[seg], self.m[seg + 1]);
                    let h = x1 - x0;
                    let a = (x1 - t) / h;
                    let b = (t - x0) / h;
                    *o = a * y0
                        + b * y1
                        + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six;
                }
            }
        }
    }
}

/// Decomposes `waveform` into IMFs and a residual.
///
/// Decomposition ends after `max_imfs` IMFs, or once the residual lacks
/// either maxima or minima (monotone or a single hump), or has negligible
/// energy relative to the input.
pub fn emd_decompose<T: Scalar>(waveform: &Waveform<T>, config: &EmdConfig) -> Result<ImfSet<T>, EmdError> {
    config.validate()?;
    let x = waveform.samples();
    let n = x.len();
    if n < MIN_EMD_LEN {
        return Err(EmdError::TooShort(n));
    }
    if let Some(i) = x.iter().position(|s| !s.is_finite()) {
        return Err(EmdError::NonFinite(i));
    }
    let rate = waveform.sample_rate_hz();
    let input_energy: T = x.iter().map(|&s| s * s).sum();
    let energy_floor = input_energy * T::lit(1e-24);
    let sd_threshold = T::lit(config.sift_sd_threshold);

    let mut residual = x.to_vec();
    let mut imfs = Vec::new();
    let mut extrema = Extrema::default();
    let mut spline = Spline::default();
    let mut upper = vec![T::zero(); n];
    let mut lower = vec![T::zero(); n];

    while imfs.len() < config.max_imfs {
        find_extrema(&residual, &mut extrema);
        let residual_energy: T = residual.iter().map(|&s| s * s).sum();
        if extrema.maxima.is_empty() || extrema.minima.is_empty() || residual_energy <= energy_floor {
            break;
        }
        let mut h = residual.clone();
        for _ in 0..config.max_sift_iterations {
            find_extrema(&h, &mut extrema);
            if extrema.maxima.is_empty() || extrema.minima.is_empty() {
                break;
            }
            spline.envelope(&h, &extrema.maxima, config.boundary_extrema, &mut upper);
            spline.envelope(&h, &extrema.minima, config.boundary_extrema, &mut lower);
            let mut mean_energy = T::zero();
            let mut h_energy = T::zero();
            let half = T::lit(0.5);
            for ((hv, &u), &l) in h.iter_mut().zip(&upper).zip(&lower) {
                let mean = (u + l) * half;
                mean_energy += mean * mean;
                h_energy += *hv * *hv;
                *hv -= mean;
            }
            if h_energy <= T::zero() || mean_energy / h_energy < sd_threshold {
                break;
            }
        }
        for (r, &v) in residual.iter_mut().zip(&h) {
            *r -= v;
        }
        imfs.push(Waveform::new(h, rate).map_err(|_| EmdError::NonFinite(0))?);
    }

    Ok(ImfSet {
        imfs,
        residual: Waveform::new(residual, rate).map_err(|_| EmdError::NonFinite(0))?,
        source_length: n,
    })
}

/// Amplitude and frequency of one IMF over one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentComponent<T> {
    /// Equivalent sine amplitude, `sqrt(2) * RMS`.
    pub amplitude: T,
    pub frequency_hz: T,
    /// `false` when the segment has fewer than two zero crossings.
    pub resolvable: bool,
}

impl<T: Scalar> SegmentComponent<T> {
    /// Measures one segment. `lead_in` is the sample just before the
    /// segment, which lets a crossing on the boundary count once.
    pub fn measure(samples: &[T], lead_in: Option<T>, sample_rate_hz: T) -> Self {
        let rms = crate::signal::rms(samples);
        let crossings = count_zero_crossings(samples, lead_in);
        let duration = T::from_usize_lossy(samples.len()) / sample_rate_hz;
        Self {
            amplitude: T::SQRT_2() * rms,
            frequency_hz: T::from_usize_lossy(crossings) / (T::lit(2.0) * duration),
            resolvable: crossings >= 2,
        }
    }
}

/// Per-segment components: `result[k][j]` is IMF `j` over segment `k`.
pub fn segment_components<T: Scalar>(
    imf_set: &ImfSet<T>,
    grid: &SegmentGrid,
) -> Result<Vec<Vec<SegmentComponent<T>>>, EmdError> {
    if grid.covered_len() > imf_set.source_length {
        return Err(EmdError::GridMismatch {
            grid: grid.covered_len(),
            len: imf_set.source_length,
        });
    }
    Ok(grid.iter().map(|range| components_in(imf_set, range)).collect())
}

/// Components of every IMF over `range`, using the sample before `range`
/// (when there is one) as the zero-crossing lead-in.
pub fn components_in<T: Scalar>(
    imf_set: &ImfSet<T>,
    range: std::ops::Range<usize>,
) -> Vec<SegmentComponent<T>> {
    let rate = imf_set.residual.sample_rate_hz();
    imf_set
        .imfs
        .iter()
        .map(|imf| {
            let s = imf.samples();
            let lead_in = range.start.checked_sub(1).map(|i| s[i]);
            SegmentComponent::measure(&s[range.clone()], lead_in, rate)
        })
        .collect()
}
