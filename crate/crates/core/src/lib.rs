//! Intensity segment modulation (ISM) for four-channel vibrotactile
//! recordings, plus the pieces around it: colored tool-tip trajectories,
//! a streaming wire protocol and a session container.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root pick `f64`; the `*32` variants pick `f32`.

pub mod colormap;
pub mod emd;
pub mod ism;
pub mod psychophysics;
pub mod scalar;
pub mod session;
pub mod signal;
pub mod trajectory;
pub mod wire;

pub use colormap::{map_color, normalize, ColorError, ColorLut, Rgb};
pub use emd::{emd_decompose, EmdConfig, EmdError};
pub use ism::{analyze, convert, fuse_channels, synthesize, IsmConfig, IsmError};
pub use psychophysics::ModelError;
pub use scalar::Scalar;
pub use session::{Session, SessionError, SessionHeader};
pub use signal::{lowfreq_extract, segment, SegmentGrid, SignalError, CHANNELS};
pub use trajectory::{build_trajectory, pivot_calibrate, TrajectoryConfig, TrajectoryError};
pub use wire::{WireError, WireMessage};

pub type Waveform = signal::Waveform<f64>;
pub type Waveform32 = signal::Waveform<f32>;
pub type MultiChannelWaveform = signal::MultiChannelWaveform<f64>;
pub type MultiChannelWaveform32 = signal::MultiChannelWaveform<f32>;
pub type ImfSet = emd::ImfSet<f64>;
pub type ImfSet32 = emd::ImfSet<f32>;
pub type SegmentComponent = emd::SegmentComponent<f64>;
pub type PsychoModel = psychophysics::PsychoModel<f64>;
pub type PsychoModel32 = psychophysics::PsychoModel<f32>;
pub type IntensityProfile = ism::IntensityProfile<f64>;
pub type IntensityProfile32 = ism::IntensityProfile<f32>;
pub type AnalysisResult = ism::AnalysisResult<f64>;
pub type NormalizationConfig = colormap::NormalizationConfig<f64>;
pub type Quaternion = trajectory::Quaternion<f64>;
pub type PoseSample = trajectory::PoseSample<f64>;
pub type PoseSample32 = trajectory::PoseSample<f32>;
pub type ToolCalibration = trajectory::ToolCalibration<f64>;
pub type PivotResult = trajectory::PivotResult<f64>;
pub type IntensityTimeline = trajectory::IntensityTimeline<f64>;
pub type TrajectoryPoint = trajectory::TrajectoryPoint<f64>;
