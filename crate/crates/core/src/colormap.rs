//! Intensity normalization and 256-entry colormap lookup.

use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("intensity must be non-negative, got {0}")]
    NegativeIntensity(f64),
    #[error("i_max must be positive, got {0}")]
    NonPositiveMax(f64),
    #[error("t must lie in [0, 1], got {0}")]
    OutOfRange(f64),
    #[error("LUT line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("LUT has {0} entries, expected 256")]
    WrongSize(usize),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Rgb = [u8; 3];

// Google's published 8-bit Turbo table (Apache-2.0, Anton Mikhailov 2019).
const TURBO_LUT: &str = include_str!("../data/turbo.lut");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorLut {
    entries: Box<[Rgb; 256]>,
    name: String,
}

impl ColorLut {
    pub fn new(name: impl Into<String>, entries: [Rgb; 256]) -> Self {
        Self {
            entries: Box::new(entries),
            name: name.into(),
        }
    }

    /// The Turbo rainbow map.
    pub fn turbo() -> Self {
        Self::parse("turbo", TURBO_LUT).expect("embedded Turbo table is well formed")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[Rgb; 256] {
        &self.entries
    }

    /// 256 lines of `r g b` integers in 0..=255.
    pub fn parse(name: &str, text: &str) -> Result<Self, ColorError> {
        let mut entries = Vec::with_capacity(256);
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let err = |message: String| ColorError::Parse {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 integers, got {}", fields.len())));
            }
            let mut rgb = [0u8; 3];
            for (c, f) in rgb.iter_mut().zip(&fields) {
                *c = f.parse().map_err(|_| err(format!("`{f}` is not an integer in 0..=255")))?;
            }
            entries.push(rgb);
        }
        let entries: [Rgb; 256] = entries
            .try_into()
            .map_err(|v: Vec<Rgb>| ColorError::WrongSize(v.len()))?;
        Ok(Self::new(name, entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ColorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ColorError::Io(e.to_string()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &text)
    }

    /// Largest per-channel difference between adjacent entries.
    pub fn max_adjacent_step(&self) -> u8 {
        self.entries
            .windows(2)
            .flat_map(|w| (0..3).map(move |c| w[0][c].abs_diff(w[1][c])))
            .max()
            .unwrap_or(0)
    }
}

/// Preset maximum intensity mapped to the top of the colormap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConfig<T> {
    pub i_max: T,
}

impl<T: Scalar> NormalizationConfig<T> {
    pub fn new(i_max: T) -> Result<Self, ColorError> {
        if !(i_max > T::zero() && i_max.is_finite()) {
            return Err(ColorError::NonPositiveMax(i_max.to_f64_lossy()));
        }
        Ok(Self { i_max })
    }
}

/// `min(intensity / i_max, 1)`.
pub fn normalize<T: Scalar>(intensity: T, config: &NormalizationConfig<T>) -> Result<T, ColorError> {
    if !(config.i_max > T::zero()) {
        return Err(ColorError::NonPositiveMax(config.i_max.to_f64_lossy()));
    }
    if !(intensity >= T::zero()) {
        return Err(ColorError::NegativeIntensity(intensity.to_f64_lossy()));
    }
    Ok((intensity / config.i_max).min(T::one()))
}

/// Linear interpolation between `lut[floor(255 t)]` and the next entry,
/// rounded to the nearest integer per channel.
pub fn map_color<T: Scalar>(t: T, lut: &ColorLut) -> Result<Rgb, ColorError> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(ColorError::OutOfRange(t.to_f64_lossy()));
    }
    let x = t.to_f64_lossy() * 255.0;
    let i = (x.floor() as usize).min(254);
    let frac = x - i as f64;
    let (a, b) = (lut.entries[i], lut.entries[i + 1]);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = a[c] as f64 + (b[c] as f64 - a[c] as f64) * frac;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let cfg = NormalizationConfig::new(2.0).unwrap();
        assert_eq!(normalize(5.0, &cfg).unwrap(), 1.0);
        assert_eq!(normalize(0.0, &cfg).unwrap(), 0.0);
        assert_eq!(normalize(0.5, &cfg).unwrap(), 0.25);
        assert!(matches!(normalize(-0.1, &cfg), Err(ColorError::NegativeIntensity(_))));
        assert!(NormalizationConfig::new(0.0).is_err());
        assert!(matches!(
            normalize(1.0, &NormalizationConfig { i_max: -1.0 }),
            Err(ColorError::NonPositiveMax(_))
        ));
    }

    #[test]
    fn turbo_endpoints_and_knots() {
        let lut = ColorLut::turbo();
        assert_eq!(lut.name(), "turbo");
        assert_eq!(map_color(0.0, &lut).unwrap(), [48, 18, 59]);
        assert_eq!(map_color(1.0, &lut).unwrap(), [122, 4, 3]);
        for k in 0..256 {
            assert_eq!(map_color(k as f64 / 255.0, &lut).unwrap(), lut.entries()[k]);
            assert_eq!(map_color(k as f32 / 255.0, &lut).unwrap(), lut.entries()[k]);
        }
    }

    #[test]
    fn map_color_interpolates_midway() {
        let lut = ColorLut::turbo();
        let (a, b) = (lut.entries()[10], lut.entries()[11]);
        let mid = map_color(10.5 / 255.0, &lut).unwrap();
        for c in 0..3 {
            let expected = (a[c] as f64 + b[c] as f64) / 2.0;
            assert!((mid[c] as f64 - expected).abs() <= 0.5);
        }
    }

    #[test]
    fn map_color_rejects_out_of_range() {
        let lut = ColorLut::turbo();
        assert!(map_color(1.01, &lut).is_err());
        assert!(map_color(-0.01, &lut).is_err());
        assert!(map_color(f64::NAN, &lut).is_err());
    }

    #[test]
    fn lut_parse_errors() {
        assert!(matches!(
            ColorLut::parse("x", "1 2 3\n1 2\n"),
            Err(ColorError::Parse { line: 2, .. })
        ));
        assert!(matches!(ColorLut::parse("x", "1 2 300\n"), Err(ColorError::Parse { line: 1, .. })));
        assert_eq!(ColorLut::parse("x", "1 2 3\n"), Err(ColorError::WrongSize(1)));
    }
}
