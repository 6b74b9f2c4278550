//! Frequency-dependent detection threshold and intensity exponent, and the
//! perceptual intensity `I = (A / A_T(f))^(2 alpha(f))` with its inverse.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::emd::SegmentComponent;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("intensity must be non-negative, got {0}")]
    NegativeIntensity(f64),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Threshold curve `A_T(f)` (log-log interpolation) and exponent curve
/// `alpha(f)` (linear in log-frequency), both held flat beyond their ends.
#[derive(Debug, Clone, PartialEq)]
pub struct PsychoModel<T> {
    threshold_points: Vec<(T, T)>,
    exponent_points: Vec<(T, T)>,
}

impl<T: Scalar> PsychoModel<T> {
    pub fn new(threshold_points: Vec<(T, T)>, exponent_points: Vec<(T, T)>) -> Result<Self, ModelError> {
        validate_curve("threshold", &threshold_points)?;
        validate_curve("exponent", &exponent_points)?;
        Ok(Self {
            threshold_points,
            exponent_points,
        })
    }

    /// Model with a constant exponent.
    pub fn with_constant_exponent(threshold_points: Vec<(T, T)>, alpha: T) -> Result<Self, ModelError> {
        let f0 = threshold_points
            .first()
            .map(|p| p.0)
            .unwrap_or_else(T::one);
        Self::new(threshold_points, vec![(f0, alpha)])
    }

    /// U-shaped Pacinian-like table in sensor-normalized units with
    /// alpha = 0.5. Not a calibrated model.
    pub fn builtin() -> Self {
        let pts = [
            (10.0, 100.0),
            (25.0, 40.0),
            (50.0, 10.0),
            (100.0, 2.5),
            (200.0, 0.65),
            (250.0, 0.5),
            (400.0, 1.0),
            (800.0, 8.0),
        ];
        Self::with_constant_exponent(
            pts.iter().map(|&(f, a)| (T::lit(f), T::lit(a))).collect(),
            T::lit(0.5),
        )
        .expect("builtin table is valid")
    }

    pub fn threshold_points(&self) -> &[(T, T)] {
        &self.threshold_points
    }

    pub fn exponent_points(&self) -> &[(T, T)] {
        &self.exponent_points
    }

    pub fn threshold_at(&self, f: T) -> Result<T, ModelError> {
        check_frequency(f)?;
        Ok(interpolate(&self.threshold_points, f, true))
    }

    pub fn exponent_at(&self, f: T) -> Result<T, ModelError> {
        check_frequency(f)?;
        Ok(interpolate(&self.exponent_points, f, false))
    }

    pub fn intensity_single(&self, amplitude: T, f: T) -> Result<T, ModelError> {
        if !(amplitude >= T::zero()) {
            return Err(ModelError::NegativeAmplitude(amplitude.to_f64_lossy()));
        }
        let threshold = self.threshold_at(f)?;
        let alpha = self.exponent_at(f)?;
        Ok((amplitude / threshold).powf(T::lit(2.0) * alpha))
    }

    /// Sum of the intensities of the resolvable components of one segment.
    pub fn total_intensity(&self, components: &[SegmentComponent<T>]) -> Result<T, ModelError> {
        components
            .iter()
            .filter(|c| c.resolvable)
            .try_fold(T::zero(), |acc, c| {
                Ok(acc + self.intensity_single(c.amplitude, c.frequency_hz)?)
            })
    }

    /// Carrier amplitude at `carrier_hz` perceived with `intensity`.
    pub fn amplitude_for_intensity(&self, intensity: T, carrier_hz: T) -> Result<T, ModelError> {
        if !(intensity >= T::zero()) {
            return Err(ModelError::NegativeIntensity(intensity.to_f64_lossy()));
        }
        let threshold = self.threshold_at(carrier_hz)?;
        let alpha = self.exponent_at(carrier_hz)?;
        Ok(threshold * intensity.powf(T::one() / (T::lit(2.0) * alpha)))
    }

    /// Parses `threshold <f> <a_t>` and `exponent <f> <alpha>` lines.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut thresholds = Vec::new();
        let mut exponents = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let err = |message: String| ModelError::Parse { line, message };
            if fields.len() != 3 {
                return Err(err(format!("expected `<kind> <freq> <value>`, got `{content}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number `{s}`")))
            };
            let point = (T::lit(num(fields[1])?), T::lit(num(fields[2])?));
            match fields[0] {
                "threshold" => thresholds.push(point),
                "exponent" => exponents.push(point),
                other => return Err(err(format!("unknown entry `{other}`"))),
            }
        }
        Self::new(thresholds, exponents).map_err(|e| ModelError::Parse {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, a) in &self.threshold_points {
            let _ = writeln!(out, "threshold {} {}", f.to_f64_lossy(), a.to_f64_lossy());
        }
        for (f, a) in &self.exponent_points {
            let _ = writeln!(out, "exponent {} {}", f.to_f64_lossy(), a.to_f64_lossy());
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_text()).map_err(|e| ModelError::Io(e.to_string()))
    }
}

fn check_frequency<T: Scalar>(f: T) -> Result<(), ModelError> {
    if f > T::zero() && f.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositiveFrequency(f.to_f64_lossy()))
    }
}

fn validate_curve<T: Scalar>(name: &str, points: &[(T, T)]) -> Result<(), ModelError> {
    if points.is_empty() {
        return Err(ModelError::Invalid(format!("{name} curve has no points")));
    }
    for (i, &(f, v)) in points.iter().enumerate() {
        if !(f > T::zero() && f.is_finite()) {
            return Err(ModelError::Invalid(format!("{name} point {i}: frequency must be positive")));
        }
        if !(v > T::zero() && v.is_finite()) {
            return Err(ModelError::Invalid(format!("{name} point {i}: value must be positive")));
        }
        if i > 0 && f <= points[i - 1].0 {
            return Err(ModelError::Invalid(format!(
                "{name} frequencies must be strictly increasing"
            )));
        }
    }
    Ok(())
}

fn interpolate<T: Scalar>(points: &[(T, T)], f: T, log_value: bool) -> T {
    let first = points[0];
    let last = points[points.len() - 1];
    if f <= first.0 {
        return first.1;
    }
    if f >= last.0 {
        return last.1;
    }
    let hi = points.partition_point(|p| p.0 < f);
    let (f1, v1) = points[hi];
    if f1 == f {
        return v1;
    }
    let (f0, v0) = points[hi - 1];
    let w = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
    if log_value {
        (v0.ln() + w * (v1.ln() - v0.ln())).exp()
    } else {
        v0 + w * (v1 - v0)
    }
}
