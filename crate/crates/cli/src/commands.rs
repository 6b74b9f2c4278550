//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use ismtrace::colormap::{map_color, normalize, ColorLut, NormalizationConfig};
use ismtrace::ism::{analyze, fuse_channels, synthesize, IntensityProfile, IsmConfig};
use ismtrace::psychophysics::PsychoModel;
use ismtrace::session::{
    replay, IntensityRecord, ReplayClock, ReplayEvent, ReplaySink, Session, SessionError, SessionHeader,
};
use ismtrace::signal::{load_wav, save_wav, WavContents, WavEncoding, Waveform, CHANNELS};
use ismtrace::trajectory::{
    build_trajectory, export_ply, pivot_calibrate, poses_from_csv, tip_position, IntensityTimeline, PoseSample,
    Quaternion, ToolCalibration, TrajectoryPoint,
};
use ismtrace::wire::{self, FrameData, Sender, SenderConfig, WireMessage};

use crate::config::CliConfig;
use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

/// Configuration after merging the config file with command-line flags.
pub struct Settings {
    pub config: CliConfig,
    pub model: PsychoModel<f64>,
    pub model_id: String,
    pub speed: f64,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Settings {
    fn endpoint(&self) -> String {
        self.config.endpoint.clone().unwrap_or_else(wire::default_endpoint)
    }

    fn out(&self, what: &str) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("--out is required for {what}")))
    }

    fn calibration(&self, flag: Option<&Path>) -> CliResult<ToolCalibration<f64>> {
        match flag.or(self.config.calibration.as_deref()) {
            None => Ok(ToolCalibration::default()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
                ToolCalibration::parse(&text).map_err(|e| CliError::from(e).context(path.display()))
            }
        }
    }

    /// Configured i_max, or the largest intensity present.
    fn normalization(&self, intensities: impl Iterator<Item = f64>) -> CliResult<NormalizationConfig<f64>> {
        let i_max = match self.config.imax {
            Some(v) => v,
            None => {
                let max = intensities.fold(0.0, f64::max);
                let v = if max > 0.0 { max } else { 1.0 };
                log::info!("no i_max configured, using {v}");
                v
            }
        };
        Ok(NormalizationConfig::new(i_max)?)
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn open_session(path: &Path) -> CliResult<Session> {
    Session::open(path).map_err(|e| CliError::from(e).context(path.display()))
}

/// Input signal as separate channels.
struct Channels {
    waveforms: Vec<Waveform<f64>>,
    session: Option<Session>,
}

fn load_channels(path: &Path) -> CliResult<Channels> {
    if extension(path) == "isms" {
        let session = open_session(path)?;
        let c = session.header.channels as usize;
        if c != 1 && c != CHANNELS {
            return Err(CliError::data(format!("session has {c} channels, expected 1 or {CHANNELS}")));
        }
        let waveforms = (0..c)
            .map(|ch| {
                let samples = session.vibration_channel(ch).into_iter().map(f64::from).collect();
                Waveform::new(samples, session.header.sample_rate_hz)
            })
            .collect::<Result<_, _>>()?;
        return Ok(Channels {
            waveforms,
            session: Some(session),
        });
    }
    let waveforms = match load_wav::<f64>(path).map_err(|e| CliError::from(e).context(path.display()))? {
        WavContents::Mono(w) => vec![w],
        WavContents::Quad(m) => m.into_channels().into(),
    };
    Ok(Channels {
        waveforms,
        session: None,
    })
}

/// Per-channel analysis fused into one profile, plus the mean low-frequency channel.
fn analyze_channels(
    waveforms: &[Waveform<f64>],
    model: &PsychoModel<f64>,
    ism: &IsmConfig,
) -> CliResult<(IntensityProfile<f64>, Waveform<f64>)> {
    let results = waveforms
        .iter()
        .map(|w| analyze(w, model, ism))
        .collect::<Result<Vec<_>, _>>()?;
    if results.len() == 1 {
        let r = results.into_iter().next().expect("one result");
        return Ok((r.profile, r.lowfreq));
    }
    let profiles: Vec<_> = results.iter().map(|r| r.profile.clone()).collect();
    let fused = fuse_channels(&profiles)?;
    let n = results[0].lowfreq.len();
    let rate = results[0].lowfreq.sample_rate_hz();
    let low: Vec<f64> = (0..n)
        .map(|i| results.iter().map(|r| r.lowfreq.samples()[i]).sum::<f64>() / results.len() as f64)
        .collect();
    Ok((fused, Waveform::new(low, rate)?))
}

fn intensity_records(profile: &IntensityProfile<f64>, start_us: u64) -> Vec<IntensityRecord> {
    (0..profile.len())
        .map(|k| IntensityRecord {
            t_us: start_us + (profile.midpoint_s(k) * 1e6).round() as u64,
            intensity: profile.values[k] as f32,
        })
        .collect()
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p.display(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn analyze_cmd(s: &Settings, input: &Path) -> CliResult<()> {
    let Channels { waveforms, session } = load_channels(input)?;
    let (profile, _) = analyze_channels(&waveforms, &s.model, &s.config.ism)?;
    let mean = profile.values.iter().sum::<f64>() / profile.len().max(1) as f64;
    match s.out.as_deref() {
        Some(out) if extension(out) == "isms" => {
            let mut session = match session {
                Some(sess) => sess,
                None => {
                    let rate = waveforms[0].sample_rate_hz();
                    let mut sess = Session::new(SessionHeader::new(
                        waveforms.len() as u16,
                        rate,
                        s.config.ism.segment_ms,
                        s.model_id.clone(),
                    ));
                    let n = waveforms[0].len();
                    sess.vibration = (0..n)
                        .flat_map(|i| waveforms.iter().map(move |w| w.samples()[i] as f32))
                        .collect();
                    sess
                }
            };
            session.intensities = intensity_records(&profile, session.vibration_start_us());
            session.header.model_id = s.model_id.clone();
            session.save(out).map_err(|e| CliError::from(e).context(out.display()))?;
        }
        out => write_text(out, &profile.to_csv())?,
    }
    if s.out.is_some() {
        println!(
            "analyzed {} segments from {} channel(s), mean intensity {:.4}",
            profile.len(),
            waveforms.len(),
            mean
        );
    }
    Ok(())
}

pub fn convert_cmd(s: &Settings, input: &Path) -> CliResult<()> {
    let out = s.out("convert")?;
    let Channels { waveforms, .. } = load_channels(input)?;
    let (profile, low) = analyze_channels(&waveforms, &s.model, &s.config.ism)?;
    let y = synthesize(&profile, &low, &s.model, &s.config.ism)?;
    let clipped = save_wav(&y, out, WavEncoding::Float32).map_err(|e| CliError::from(e).context(out.display()))?;
    println!(
        "converted {} channel(s) to a {} Hz carrier: {} samples{}",
        waveforms.len(),
        s.config.ism.carrier_hz,
        y.len(),
        if clipped > 0 { format!(", {clipped} clipped") } else { String::new() }
    );
    Ok(())
}

fn poses_f64(poses: &[PoseSample<f32>]) -> Vec<PoseSample<f64>> {
    poses
        .iter()
        .map(|p| PoseSample {
            t_us: p.t_us,
            position: p.position.map(f64::from),
            orientation: Quaternion::new(
                p.orientation.w.into(),
                p.orientation.x.into(),
                p.orientation.y.into(),
                p.orientation.z.into(),
            ),
        })
        .collect()
}

pub fn render_cmd(s: &Settings, input: &Path, profile: Option<&Path>, calibration: Option<&Path>) -> CliResult<()> {
    let out = s.out("render")?;
    let (poses, session_timeline) = if extension(input) == "isms" {
        let session = open_session(input)?;
        let timeline = IntensityTimeline::new(
            session
                .intensities
                .iter()
                .map(|r| (r.t_us, f64::from(r.intensity)))
                .collect(),
        )?;
        (poses_f64(&session.poses), Some(timeline))
    } else {
        let text = fs::read_to_string(input).map_err(|e| CliError::io(input.display(), e))?;
        let poses = poses_from_csv::<f64>(&text).map_err(|e| CliError::from(e).context(input.display()))?;
        (poses, None)
    };
    let timeline = match (profile, session_timeline) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
            let prof = IntensityProfile::from_csv(&text, s.config.ism.segment_ms)
                .map_err(|e| CliError::from(e).context(p.display()))?;
            IntensityTimeline::from_profile(&prof)
        }
        (None, Some(t)) => t,
        (None, None) => return Err(CliError::usage("render from a pose CSV needs --profile")),
    };
    let cal = s.calibration(calibration)?;
    let norm = s.normalization(timeline.samples().iter().map(|x| x.1))?;
    let points = build_trajectory(&poses, &timeline, &ColorLut::turbo(), &norm, &cal, &s.config.trajectory)?;
    export_ply(&points, out).map_err(|e| CliError::from(e).context(out.display()))?;
    println!(
        "rendered {} points from {} poses (i_max {})",
        points.len(),
        poses.len(),
        norm.i_max
    );
    Ok(())
}

pub fn simulate_cmd(s: &Settings, scenario: &Path) -> CliResult<()> {
    let out = s.out("simulate")?;
    let text = fs::read_to_string(scenario).map_err(|e| CliError::io(scenario.display(), e))?;
    let sc = Scenario::parse(&text).map_err(|e| e.context(scenario.display()))?;
    let seed = s.seed.or(sc.seed).unwrap_or(0);
    let session = sc.generate(seed, s.config.ism.segment_ms, &s.model_id)?;
    let summary = session.save(out).map_err(|e| CliError::from(e).context(out.display()))?;
    println!(
        "simulated {:.3} s: {} frames x {} channels, {} poses (seed {seed})",
        summary.vibration_duration_s,
        summary.vibration_frames,
        session.header.channels,
        summary.poses
    );
    Ok(())
}

pub fn calibrate_cmd(s: &Settings, poses_path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(poses_path).map_err(|e| CliError::io(poses_path.display(), e))?;
    let poses = poses_from_csv::<f64>(&text).map_err(|e| CliError::from(e).context(poses_path.display()))?;
    let r = pivot_calibrate(&poses)?;
    let o = r.calibration.tip_offset;
    let p = r.pivot_point;
    match s.out.as_deref() {
        Some(out) => {
            let text = format!(
                "{}pivot_point = {} {} {}\nrms_residual_m = {}\ncondition_number = {}\n",
                r.calibration.to_text(),
                p[0],
                p[1],
                p[2],
                r.rms_residual,
                r.condition_number
            );
            fs::write(out, text).map_err(|e| CliError::io(out.display(), e))?;
        }
        None => print!("{}", r.calibration.to_text()),
    }
    println!(
        "tip_offset {:.6} {:.6} {:.6} m, pivot {:.6} {:.6} {:.6} m, rms residual {:.3e} m, condition {:.1} ({} poses)",
        o[0],
        o[1],
        o[2],
        p[0],
        p[1],
        p[2],
        r.rms_residual,
        r.condition_number,
        poses.len()
    );
    Ok(())
}

/// Turns replayed poses and intensities into wire messages.
struct WireSink {
    sender: Option<Sender>,
    calibration: ToolCalibration<f64>,
    normalization: NormalizationConfig<f64>,
    lut: ColorLut,
    held: f64,
    frames: u64,
}

impl ReplaySink for WireSink {
    fn event(&mut self, event: &ReplayEvent<'_>) -> Result<(), SessionError> {
        let sink_err = |e: &dyn std::fmt::Display| SessionError::Sink(e.to_string());
        let Some(sender) = &self.sender else {
            return Ok(());
        };
        let message = match event {
            ReplayEvent::Pose(p) => {
                let pose = poses_f64(std::slice::from_ref(*p))[0];
                let tip = tip_position(&pose, &self.calibration).map_err(|e| sink_err(&e))?;
                let t = normalize(self.held, &self.normalization).map_err(|e| sink_err(&e))?;
                let q = p.orientation;
                self.frames += 1;
                WireMessage::Frame(FrameData {
                    t_us: p.t_us,
                    position: tip.map(|v| v as f32),
                    quaternion: [q.w, q.x, q.y, q.z],
                    intensity: self.held as f32,
                    rgb: map_color(t, &self.lut).map_err(|e| sink_err(&e))?,
                })
            }
            ReplayEvent::Intensity(r) => {
                self.held = f64::from(r.intensity);
                WireMessage::IntensityOnly {
                    t_us: r.t_us,
                    intensity: r.intensity,
                }
            }
            ReplayEvent::Vibration { .. } => return Ok(()),
        };
        sender.send(message).map_err(|e| sink_err(&e))
    }
}

impl WireSink {
    fn connect(s: &Settings, session: &Session) -> CliResult<Self> {
        let endpoint = s.endpoint();
        let h = &session.header;
        let hello = WireMessage::hello(
            h.channels.min(u8::MAX as u16) as u8,
            h.sample_rate_hz.round() as u32,
            (h.segment_ms * 10.0).round() as u16,
        );
        let config = SenderConfig {
            queue_capacity: s.config.queue_capacity,
            ..SenderConfig::default()
        };
        let sender = Sender::connect(&endpoint, hello, config).map_err(|e| CliError::from(e).context(&endpoint))?;
        Ok(Self {
            sender: Some(sender),
            calibration: s.calibration(None)?,
            normalization: s.normalization(session.intensities.iter().map(|r| f64::from(r.intensity)))?,
            lut: ColorLut::turbo(),
            held: 0.0,
            frames: 0,
        })
    }

    fn finish(mut self) -> CliResult<()> {
        let sender = self.sender.take().expect("sender present until finish");
        let report = sender.finish()?;
        println!(
            "sent {} frames: {} messages written, {} dropped",
            self.frames, report.written, report.dropped
        );
        Ok(())
    }
}

/// Collects replayed events for file sinks.
#[derive(Default)]
struct Collector {
    poses: Vec<PoseSample<f32>>,
    intensities: Vec<IntensityRecord>,
}

impl ReplaySink for Collector {
    fn event(&mut self, event: &ReplayEvent<'_>) -> Result<(), SessionError> {
        match event {
            ReplayEvent::Pose(p) => self.poses.push(**p),
            ReplayEvent::Intensity(r) => self.intensities.push(**r),
            ReplayEvent::Vibration { .. } => {}
        }
        Ok(())
    }
}

fn clock(s: &Settings) -> CliResult<ReplayClock> {
    if !(s.speed > 0.0) {
        return Err(CliError::usage(format!("--speed must be positive, got {}", s.speed)));
    }
    Ok(ReplayClock::with_speed(s.speed))
}

pub fn stream_send_cmd(s: &Settings, session_path: &Path) -> CliResult<()> {
    let session = open_session(session_path)?;
    let clock = clock(s)?;
    let mut sink = WireSink::connect(s, &session)?;
    replay(&session, &clock, &mut [&mut sink])?;
    sink.finish()
}

pub fn stream_recv_cmd(s: &Settings) -> CliResult<()> {
    let out = s.out("stream-recv")?;
    let ext = extension(out);
    if ext != "isms" && ext != "ply" {
        return Err(CliError::usage("stream-recv writes .isms or .ply"));
    }
    let endpoint = s.endpoint();
    let listener = wire::listen(&endpoint).map_err(|e| CliError::from(e).context(&endpoint))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let mut hello = None;
    let mut frames = Vec::new();
    let mut updates = Vec::new();
    let report = wire::accept_one(&listener, |m| match *m {
        WireMessage::Hello { .. } => hello = Some(*m),
        WireMessage::Frame(f) => frames.push(f),
        WireMessage::IntensityOnly { t_us, intensity } => updates.push(IntensityRecord { t_us, intensity }),
        WireMessage::End => {}
    })?;
    if ext == "ply" {
        let points: Vec<TrajectoryPoint<f64>> = frames
            .iter()
            .map(|f| TrajectoryPoint {
                t_us: f.t_us,
                tip_position: f.position.map(f64::from),
                intensity: f64::from(f.intensity),
                rgb: f.rgb,
            })
            .collect();
        export_ply(&points, out).map_err(|e| CliError::from(e).context(out.display()))?;
    } else {
        let header = match hello {
            Some(WireMessage::Hello {
                channels,
                sample_rate_hz,
                segment_ms_x10,
                ..
            }) => SessionHeader::new(
                channels.into(),
                f64::from(sample_rate_hz),
                f64::from(segment_ms_x10) / 10.0,
                s.model_id.clone(),
            ),
            _ => return Err(CliError::new(crate::error::Kind::Protocol, "stream ended before Hello")),
        };
        let mut session = Session::new(header);
        session.poses = frames
            .iter()
            .map(|f| PoseSample {
                t_us: f.t_us,
                position: f.position,
                orientation: Quaternion::new(f.quaternion[0], f.quaternion[1], f.quaternion[2], f.quaternion[3]),
            })
            .collect();
        session.intensities = if updates.is_empty() {
            frames
                .iter()
                .map(|f| IntensityRecord {
                    t_us: f.t_us,
                    intensity: f.intensity,
                })
                .collect()
        } else {
            updates
        };
        session.set_meta("source", "stream-recv");
        session.save(out).map_err(|e| CliError::from(e).context(out.display()))?;
    }
    println!(
        "received {} frames in {} messages ({} bytes resynced, {} decode errors, {})",
        report.frames,
        report.messages,
        report.resync_bytes,
        report.decode_errors,
        if report.ended { "ended cleanly" } else { "no End message" }
    );
    Ok(())
}

pub fn replay_cmd(s: &Settings, session_path: &Path) -> CliResult<()> {
    let session = open_session(session_path)?;
    let clock = clock(s)?;
    let mut collector = Collector::default();
    let mut wire_sink = match &s.config.endpoint {
        Some(_) => Some(WireSink::connect(s, &session)?),
        None => None,
    };
    let report = {
        let mut sinks: Vec<&mut dyn ReplaySink> = vec![&mut collector];
        if let Some(w) = wire_sink.as_mut() {
            sinks.push(w);
        }
        replay(&session, &clock, &mut sinks)?
    };
    if let Some(w) = wire_sink {
        w.finish()?;
    }
    if let Some(out) = s.out.as_deref() {
        match extension(out).as_str() {
            "csv" => {
                let mut tmp = Session::new(session.header.clone());
                tmp.intensities = collector.intensities;
                write_text(Some(out), &tmp.intensities_csv())?;
            }
            "ply" => {
                let timeline =
                    IntensityTimeline::new(collector.intensities.iter().map(|r| (r.t_us, f64::from(r.intensity))).collect())?;
                let norm = s.normalization(timeline.samples().iter().map(|x| x.1))?;
                let points = build_trajectory(
                    &poses_f64(&collector.poses),
                    &timeline,
                    &ColorLut::turbo(),
                    &norm,
                    &s.calibration(None)?,
                    &s.config.trajectory,
                )?;
                export_ply(&points, out).map_err(|e| CliError::from(e).context(out.display()))?;
            }
            other => return Err(CliError::usage(format!("replay writes .csv or .ply, not `.{other}`"))),
        }
    }
    println!(
        "replayed {} events ({} poses, {} intensities, {} vibration blocks) in {:.3} s",
        report.events,
        report.poses,
        report.intensities,
        report.vibration_blocks,
        report.wall_time.as_secs_f64()
    );
    Ok(())
}
