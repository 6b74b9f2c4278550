//! Synthetic recordings standing in for the wrist sensors and tracker.
//!
//! Scenario files are `key = value` lines:
//!
//! ```text
//! duration_s = 2.0
//! roughness = 0.4          # noise gain per m/s of tool speed
//! sample_rate_hz = 5000    # optional
//! pose_rate_hz = 120       # optional
//! seed = 7                 # optional, --seed wins
//! waypoint = x y z speed   # metres, m/s for the leg leaving this point
//! impact = t amplitude decay_s
//! ```
//!
//! The tool visits the waypoints in order and returns to the first,
//! repeating until the scenario ends.

use ismtrace::session::{Session, SessionHeader, META_VIBRATION_START};
use ismtrace::signal::{Butterworth4, CHANNELS};
use ismtrace::trajectory::{PoseSample, Quaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CliError, CliResult};

const NOISE_LOW_HZ: f64 = 500.0;
const NOISE_HIGH_HZ: f64 = 1500.0;
const IMPACT_HZ: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: [f64; 3],
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impact {
    pub t_s: f64,
    pub amplitude: f64,
    pub decay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration_s: f64,
    pub roughness: f64,
    pub sample_rate_hz: f64,
    pub pose_rate_hz: f64,
    pub seed: Option<u64>,
    pub waypoints: Vec<Waypoint>,
    pub impacts: Vec<Impact>,
}

fn numbers(line: usize, key: &str, value: &str, count: usize) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = value
        .split_whitespace()
        .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::data(format!("scenario line {line}: `{key}` needs numbers, got `{value}`")))?;
    if v.len() != count {
        return Err(CliError::data(format!(
            "scenario line {line}: `{key}` needs {count} numbers, got {}",
            v.len()
        )));
    }
    Ok(v)
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut duration = None;
        let mut s = Scenario {
            duration_s: 0.0,
            roughness: 0.0,
            sample_rate_hz: 5000.0,
            pose_rate_hz: 120.0,
            seed: None,
            waypoints: Vec::new(),
            impacts: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| CliError::data(format!("scenario line {line}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            let one = || numbers(line, key, value, 1).map(|v| v[0]);
            match key {
                "duration_s" => duration = Some(one()?),
                "roughness" => s.roughness = one()?,
                "sample_rate_hz" => s.sample_rate_hz = one()?,
                "pose_rate_hz" => s.pose_rate_hz = one()?,
                "seed" => {
                    s.seed = Some(value.parse().map_err(|_| {
                        CliError::data(format!("scenario line {line}: `seed` must be an unsigned integer"))
                    })?)
                }
                "waypoint" => {
                    let v = numbers(line, key, value, 4)?;
                    if v[3] < 0.0 {
                        return Err(CliError::data(format!("scenario line {line}: speed must be >= 0")));
                    }
                    s.waypoints.push(Waypoint {
                        position: [v[0], v[1], v[2]],
                        speed: v[3],
                    });
                }
                "impact" => {
                    let v = numbers(line, key, value, 3)?;
                    if v[2] <= 0.0 {
                        return Err(CliError::data(format!("scenario line {line}: impact decay must be > 0")));
                    }
                    s.impacts.push(Impact {
                        t_s: v[0],
                        amplitude: v[1],
                        decay_s: v[2],
                    });
                }
                other => return Err(CliError::data(format!("scenario line {line}: unknown key `{other}`"))),
            }
        }
        s.duration_s = duration.ok_or_else(|| CliError::data("scenario: missing `duration_s`"))?;
        if s.duration_s <= 0.0 {
            return Err(CliError::data("scenario: `duration_s` must be positive"));
        }
        if s.roughness < 0.0 {
            return Err(CliError::data("scenario: `roughness` must be >= 0"));
        }
        if s.sample_rate_hz <= 2.0 * NOISE_HIGH_HZ {
            return Err(CliError::data(format!(
                "scenario: sample_rate_hz must exceed {} Hz",
                2.0 * NOISE_HIGH_HZ
            )));
        }
        if s.pose_rate_hz <= 0.0 {
            return Err(CliError::data("scenario: `pose_rate_hz` must be positive"));
        }
        if s.waypoints.is_empty() {
            return Err(CliError::data("scenario: at least one `waypoint` is required"));
        }
        Ok(s)
    }

    /// Tool position and speed at time `t_s`.
    pub fn path_state(&self, t_s: f64) -> ([f64; 3], f64) {
        let wp = &self.waypoints;
        let n = wp.len();
        let legs: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                let (a, b) = (wp[i].position, wp[(i + 1) % n].position);
                (i, ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt())
            })
            .filter(|&(_, len)| len > 0.0)
            .collect();
        if legs.is_empty() {
            return (wp[0].position, 0.0);
        }
        let cycle: f64 = legs.iter().map(|&(i, len)| len / wp[i].speed).sum();
        let mut tau = if cycle.is_finite() { t_s % cycle } else { t_s };
        for &(i, len) in &legs {
            let (a, b, v) = (wp[i].position, wp[(i + 1) % n].position, wp[i].speed);
            if v == 0.0 {
                return (a, 0.0);
            }
            let d = len / v;
            if tau < d {
                let f = tau * v / len;
                return ([0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * f), v);
            }
            tau -= d;
        }
        let (i, _) = legs[0];
        (wp[i].position, wp[i].speed)
    }

    fn impact_at(&self, t: f64) -> f64 {
        self.impacts
            .iter()
            .filter(|imp| t >= imp.t_s)
            .map(|imp| {
                let dt = t - imp.t_s;
                imp.amplitude * (-dt / imp.decay_s).exp() * (std::f64::consts::TAU * IMPACT_HZ * dt).sin()
            })
            .sum()
    }

    /// Four vibration channels and 120 Hz poses. Identical inputs and seed
    /// give a bit-identical session.
    pub fn generate(&self, seed: u64, segment_ms: f64, model_id: &str) -> CliResult<Session> {
        let rate = self.sample_rate_hz;
        let frames = (self.duration_s * rate).round() as usize;
        // Unit-variance white noise keeps about (band / Nyquist) of its power.
        let gain = (rate / 2.0 / (NOISE_HIGH_HZ - NOISE_LOW_HZ)).sqrt();
        let mut channels = Vec::with_capacity(CHANNELS);
        for c in 0..CHANNELS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let white: Vec<f64> = (0..frames).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut hp = Butterworth4::highpass(NOISE_LOW_HZ, rate).map_err(CliError::from)?;
            let mut lp = Butterworth4::lowpass(NOISE_HIGH_HZ, rate).map_err(CliError::from)?;
            let band: Vec<f64> = white.iter().map(|&x| lp.process(hp.process(x)) * gain).collect();
            channels.push(band);
        }
        let mut vibration = Vec::with_capacity(frames * CHANNELS);
        for i in 0..frames {
            let t = i as f64 / rate;
            let speed = self.path_state(t).1;
            let impact = self.impact_at(t);
            for ch in &channels {
                vibration.push((self.roughness * speed * ch[i] + impact) as f32);
            }
        }
        let n_poses = (self.duration_s * self.pose_rate_hz + 1e-9).floor() as u64 + 1;
        let poses = (0..n_poses)
            .map(|i| {
                let t = i as f64 / self.pose_rate_hz;
                let p = self.path_state(t).0;
                PoseSample {
                    t_us: (t * 1e6).round() as u64,
                    position: p.map(|v| v as f32),
                    orientation: Quaternion::identity(),
                }
            })
            .collect();
        let mut session = Session::new(SessionHeader::new(CHANNELS as u16, rate, segment_ms, model_id));
        session.vibration = vibration;
        session.poses = poses;
        session.set_meta(META_VIBRATION_START, "0");
        session.set_meta("seed", seed.to_string());
        session.set_meta("source", "simulate");
        Ok(session)
    }
}
