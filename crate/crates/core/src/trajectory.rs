//! Tool poses, tip calibration, and colored trajectory construction.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::colormap::{map_color, normalize, ColorError, ColorLut, NormalizationConfig, Rgb};
use crate::ism::IntensityProfile;
use crate::scalar::Scalar;

/// Allowed deviation of a quaternion norm from 1.
pub const UNIT_QUATERNION_TOLERANCE: f64 = 1e-6;

/// Largest accepted condition number of the stacked pivot system.
pub const PIVOT_MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("quaternion norm {0} is not within {UNIT_QUATERNION_TOLERANCE} of 1")]
    NonUnitQuaternion(f64),
    #[error("pivot calibration needs at least 3 poses, got {0}")]
    TooFewPoses(usize),
    #[error("pose orientations are degenerate (condition number {0:.3e})")]
    Degenerate(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("timestamps must strictly increase: {prev} then {next}")]
    Unsorted { prev: u64, next: u64 },
    #[error("invalid trajectory config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Vec3<T> = [T; 3];

fn sub<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn distance<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Rotation quaternion stored as (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Quaternion<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    /// Rotation by `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let n = distance(axis, [T::zero(); 3]);
        let half = angle / T::lit(2.0);
        let s = half.sin() / n;
        Self::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn check_unit(&self) -> Result<(), TrajectoryError> {
        let n = self.norm();
        if (n - T::one()).abs().to_f64_lossy() <= UNIT_QUATERNION_TOLERANCE {
            Ok(())
        } else {
            Err(TrajectoryError::NonUnitQuaternion(n.to_f64_lossy()))
        }
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotation_matrix(&self) -> [[T; 3]; 3] {
        let Self { w, x, y, z } = *self;
        let two = T::lit(2.0);
        let one = T::one();
        [
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ]
    }

    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        let r = self.rotation_matrix();
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }
}

/// Rigid-body pose of the tracked tool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample<T> {
    pub t_us: u64,
    pub position: Vec3<T>,
    pub orientation: Quaternion<T>,
}

/// Tip offset in the rigid-body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolCalibration<T> {
    pub tip_offset: Vec3<T>,
}

impl<T: Scalar> Default for ToolCalibration<T> {
    fn default() -> Self {
        Self {
            tip_offset: [T::zero(); 3],
        }
    }
}

impl<T: Scalar> ToolCalibration<T> {
    pub fn to_text(&self) -> String {
        let o = self.tip_offset.map(|v| v.to_f64_lossy());
        format!("tip_offset = {} {} {}\n", o[0], o[1], o[2])
    }

    /// Reads the `tip_offset = x y z` line; other `key = value` lines are ignored.
    pub fn parse(text: &str) -> Result<Self, TrajectoryError> {
        for (idx, line) in text.lines().enumerate() {
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            if key.trim() != "tip_offset" {
                continue;
            }
            let v: Vec<f64> = value
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| TrajectoryError::Parse {
                    line: idx + 1,
                    message: "tip_offset needs three numbers".into(),
                })?;
            if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(TrajectoryError::Parse {
                    line: idx + 1,
                    message: "tip_offset needs three finite numbers".into(),
                });
            }
            return Ok(Self {
                tip_offset: [T::lit(v[0]), T::lit(v[1]), T::lit(v[2])],
            });
        }
        Err(TrajectoryError::Parse {
            line: 0,
            message: "missing tip_offset".into(),
        })
    }
}

/// `p + R(q) * tip_offset`.
pub fn tip_position<T: Scalar>(
    pose: &PoseSample<T>,
    calibration: &ToolCalibration<T>,
) -> Result<Vec3<T>, TrajectoryError> {
    pose.orientation.check_unit()?;
    Ok(add(pose.position, pose.orientation.rotate(calibration.tip_offset)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotResult<T> {
    pub calibration: ToolCalibration<T>,
    /// Fixed point the tip pivoted about, in the tracking frame.
    pub pivot_point: Vec3<T>,
    /// RMS of the per-axis residuals `R_i o + p_i - c`.
    pub rms_residual: T,
    pub condition_number: T,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and column eigenvectors.
fn symmetric_eigen<T: Scalar, const N: usize>(mut a: [[T; N]; N]) -> ([T; N], [[T; N]; N]) {
    let mut v = [[T::zero(); N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for _sweep in 0..100 {
        let off: T = (0..N)
            .flat_map(|i| (0..N).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: T = (0..N).map(|i| a[i][i] * a[i][i]).sum();
        if off <= diag * T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut eig = [T::zero(); N];
    for (i, e) in eig.iter_mut().enumerate() {
        *e = a[i][i];
    }
    (eig, v)
}

/// Least-squares pivot calibration: solves `R_i o - c = -p_i` for the tip
/// offset `o` and pivot point `c` over all poses.
pub fn pivot_calibrate<T: Scalar>(poses: &[PoseSample<T>]) -> Result<PivotResult<T>, TrajectoryError> {
    if poses.len() < 3 {
        return Err(TrajectoryError::TooFewPoses(poses.len()));
    }
    // Normal equations of the stacked system A x = b, A_i = [R_i | -I].
    let mut ata = [[T::zero(); 6]; 6];
    let mut atb = [T::zero(); 6];
    let mut rotations = Vec::with_capacity(poses.len());
    for pose in poses {
        pose.orientation.check_unit()?;
        let r = pose.orientation.rotation_matrix();
        let b = pose.position.map(|v| -v);
        for row in 0..3 {
            let mut a_row = [T::zero(); 6];
            a_row[..3].copy_from_slice(&r[row]);
            a_row[3 + row] = -T::one();
            for i in 0..6 {
                atb[i] += a_row[i] * b[row];
                for j in 0..6 {
                    ata[i][j] += a_row[i] * a_row[j];
                }
            }
        }
        rotations.push(r);
    }
    let (eig, vecs) = symmetric_eigen(ata);
    let max = eig.iter().copied().fold(T::zero(), T::max);
    let min = eig.iter().copied().fold(T::infinity(), T::min);
    let condition = if min > T::zero() {
        (max / min).sqrt()
    } else {
        T::infinity()
    };
    if !(condition.to_f64_lossy() < PIVOT_MAX_CONDITION) {
        return Err(TrajectoryError::Degenerate(condition.to_f64_lossy()));
    }
    let mut x = [T::zero(); 6];
    for k in 0..6 {
        let proj: T = (0..6).map(|i| vecs[i][k] * atb[i]).sum::<T>() / eig[k];
        for i in 0..6 {
            x[i] += vecs[i][k] * proj;
        }
    }
    let offset = [x[0], x[1], x[2]];
    let pivot = [x[3], x[4], x[5]];
    let mut sq = T::zero();
    for (pose, r) in poses.iter().zip(&rotations) {
        for row in 0..3 {
            let e = r[row][0] * offset[0] + r[row][1] * offset[1] + r[row][2] * offset[2]
                + pose.position[row]
                - pivot[row];
            sq += e * e;
        }
    }
    Ok(PivotResult {
        calibration: ToolCalibration { tip_offset: offset },
        pivot_point: pivot,
        rms_residual: (sq / T::from_usize_lossy(3 * poses.len())).sqrt(),
        condition_number: condition,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub min_spacing_m: f64,
    pub max_point_rate_hz: f64,
    pub align_tolerance_ms: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            min_spacing_m: 0.002,
            max_point_rate_hz: 200.0,
            align_tolerance_ms: 20.0,
        }
    }
}

impl TrajectoryConfig {
    fn validate(&self) -> Result<(), TrajectoryError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.min_spacing_m) {
            return Err(TrajectoryError::InvalidConfig("min_spacing_m must be positive"));
        }
        if !ok(self.max_point_rate_hz) {
            return Err(TrajectoryError::InvalidConfig("max_point_rate_hz must be positive"));
        }
        if !ok(self.align_tolerance_ms) {
            return Err(TrajectoryError::InvalidConfig("align_tolerance_ms must be positive"));
        }
        Ok(())
    }
}

/// Intensity samples keyed by segment-midpoint timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTimeline<T> {
    samples: Vec<(u64, T)>,
}

impl<T: Scalar> IntensityTimeline<T> {
    /// Samples must be sorted by time.
    pub fn new(samples: Vec<(u64, T)>) -> Result<Self, TrajectoryError> {
        check_sorted(samples.iter().map(|s| s.0), false)?;
        Ok(Self { samples })
    }

    pub fn from_profile(profile: &IntensityProfile<T>) -> Self {
        let samples = (0..profile.len())
            .map(|k| {
                let t = (profile.midpoint_s(k).to_f64_lossy() * 1e6).round().max(0.0) as u64;
                (t, profile.values[k])
            })
            .collect();
        Self { samples }
    }

    pub fn samples(&self) -> &[(u64, T)] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Value whose timestamp is nearest `t_us`, if within `tolerance_us`.
    pub fn nearest(&self, t_us: u64, tolerance_us: f64) -> Option<T> {
        let i = self.samples.partition_point(|s| s.0 < t_us);
        let candidates = [i.checked_sub(1), Some(i)];
        candidates
            .into_iter()
            .flatten()
            .filter_map(|j| self.samples.get(j))
            .map(|&(t, v)| (t.abs_diff(t_us), v))
            .min_by_key(|&(d, _)| d)
            .filter(|&(d, _)| d as f64 <= tolerance_us)
            .map(|(_, v)| v)
    }
}

fn check_sorted(ts: impl Iterator<Item = u64>, strict: bool) -> Result<(), TrajectoryError> {
    let mut prev: Option<u64> = None;
    for t in ts {
        if let Some(p) = prev {
            if t < p || (strict && t == p) {
                return Err(TrajectoryError::Unsorted { prev: p, next: t });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub t_us: u64,
    pub tip_position: Vec3<T>,
    pub intensity: T,
    pub rgb: Rgb,
}

/// Colored tip trajectory.
///
/// A pose is emitted only if its tip is at least `min_spacing_m` from the
/// last emitted tip and at least `1 / max_point_rate_hz` later. Its
/// intensity comes from the timeline sample nearest in time within
/// `align_tolerance_ms`; otherwise the last aligned value (initially 0) is held.
pub fn build_trajectory<T: Scalar>(
    poses: &[PoseSample<T>],
    timeline: &IntensityTimeline<T>,
    lut: &ColorLut,
    normalization: &NormalizationConfig<T>,
    calibration: &ToolCalibration<T>,
    config: &TrajectoryConfig,
) -> Result<Vec<TrajectoryPoint<T>>, TrajectoryError> {
    config.validate()?;
    if poses.is_empty() {
        return Err(TrajectoryError::Empty("pose stream"));
    }
    if timeline.is_empty() {
        return Err(TrajectoryError::Empty("intensity stream"));
    }
    check_sorted(poses.iter().map(|p| p.t_us), true)?;
    let spacing = T::lit(config.min_spacing_m);
    let min_interval_us = 1e6 / config.max_point_rate_hz;
    let tolerance_us = config.align_tolerance_ms * 1e3;

    let mut points: Vec<TrajectoryPoint<T>> = Vec::new();
    let mut held = T::zero();
    for pose in poses {
        let tip = tip_position(pose, calibration)?;
        if let Some(v) = timeline.nearest(pose.t_us, tolerance_us) {
            held = v;
        }
        if let Some(last) = points.last() {
            let far = distance(tip, last.tip_position) >= spacing;
            let late = (pose.t_us - last.t_us) as f64 >= min_interval_us;
            if !(far && late) {
                continue;
            }
        }
        let t = normalize(held, normalization)?;
        points.push(TrajectoryPoint {
            t_us: pose.t_us,
            tip_position: tip,
            intensity: held,
            rgb: map_color(t, lut)?,
        });
    }
    Ok(points)
}

pub fn ply_string<T: Scalar>(points: &[TrajectoryPoint<T>]) -> Result<String, TrajectoryError> {
    if points.is_empty() {
        return Err(TrajectoryError::Empty("no trajectory points to export"));
    }
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\n\
         property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    );
    for p in points {
        let [x, y, z] = p.tip_position.map(|v| v.to_f32().unwrap_or(f32::NAN));
        let [r, g, b] = p.rgb;
        let _ = writeln!(out, "{x} {y} {z} {r} {g} {b}");
    }
    Ok(out)
}

/// Writes an ASCII PLY point cloud with per-vertex colors.
pub fn export_ply<T: Scalar>(points: &[TrajectoryPoint<T>], path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
    let text = ply_string(points)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Vertex of an ASCII PLY point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub rgb: Rgb,
}

/// Reads ASCII PLY vertices with `x y z` and `red green blue` properties
/// in any order; other vertex properties are ignored.
pub fn parse_ply(text: &str) -> Result<Vec<PlyVertex>, TrajectoryError> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, message: &str| TrajectoryError::Parse {
        line,
        message: message.to_string(),
    };
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(perr(1, "missing `ply` magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_done = false;
    for (idx, line) in lines.by_ref() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(perr(idx + 1, "only ASCII PLY is supported")),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| perr(idx + 1, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(perr(idx + 1, "unrecognized header line")),
        }
    }
    if !header_done {
        return Err(perr(0, "missing end_header"));
    }
    let count = count.ok_or_else(|| perr(0, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| perr(0, &format!("missing property {name}")))
    };
    let cols = [col("x")?, col("y")?, col("z")?, col("red")?, col("green")?, col("blue")?];
    let mut out = Vec::with_capacity(count);
    for (idx, line) in lines.take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != props.len() {
            return Err(perr(idx + 1, "wrong number of vertex fields"));
        }
        let num = |c: usize| f[c].parse::<f32>().map_err(|_| perr(idx + 1, "bad coordinate"));
        let byte = |c: usize| f[c].parse::<u8>().map_err(|_| perr(idx + 1, "bad color"));
        out.push(PlyVertex {
            position: [num(cols[0])?, num(cols[1])?, num(cols[2])?],
            rgb: [byte(cols[3])?, byte(cols[4])?, byte(cols[5])?],
        });
    }
    if out.len() != count {
        return Err(perr(0, "fewer vertices than declared"));
    }
    Ok(out)
}

pub const POSE_CSV_HEADER: &str = "t_us,px,py,pz,qw,qx,qy,qz";

pub fn poses_to_csv<T: Scalar>(poses: &[PoseSample<T>]) -> String {
    let mut out = format!("{POSE_CSV_HEADER}\n");
    for p in poses {
        let q = p.orientation;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.t_us,
            p.position[0].to_f64_lossy(),
            p.position[1].to_f64_lossy(),
            p.position[2].to_f64_lossy(),
            q.w.to_f64_lossy(),
            q.x.to_f64_lossy(),
            q.y.to_f64_lossy(),
            q.z.to_f64_lossy()
        );
    }
    out
}

/// Parses `t_us,px,py,pz,qw,qx,qy,qz` rows; timestamps must strictly increase.
pub fn poses_from_csv<T: Scalar>(text: &str) -> Result<Vec<PoseSample<T>>, TrajectoryError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some(POSE_CSV_HEADER) {
        return Err(TrajectoryError::Parse {
            line: 1,
            message: format!("expected header `{POSE_CSV_HEADER}`"),
        });
    }
    let mut poses: Vec<PoseSample<T>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TrajectoryError::Parse {
            line: idx + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 columns, got {}", f.len())));
        }
        let t_us: u64 = f[0].parse().map_err(|_| err(format!("bad timestamp `{}`", f[0])))?;
        let mut v = [T::zero(); 7];
        for (slot, s) in v.iter_mut().zip(&f[1..]) {
            let x: f64 = s.parse().map_err(|_| err(format!("bad number `{s}`")))?;
            if !x.is_finite() {
                return Err(err(format!("non-finite value `{s}`")));
            }
            *slot = T::lit(x);
        }
        if let Some(prev) = poses.last() {
            if t_us <= prev.t_us {
                return Err(err(format!("timestamp {t_us} does not increase past {}", prev.t_us)));
            }
        }
        poses.push(PoseSample {
            t_us,
            position: [v[0], v[1], v[2]],
            orientation: Quaternion::new(v[3], v[4], v[5], v[6]),
        });
    }
    Ok(poses)
}
