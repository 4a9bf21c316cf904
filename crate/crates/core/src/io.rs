//! On-disk formats: PFM float maps, 8/16-bit PPM/PGM images, and plain
//! `key = value` text files for calibration, poses, configs and scenes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{ImageGrid, InverseDepthMap, NormalMap};
use crate::solver::{write_trace_csv, StereoSequence, TraceEntry, Variables};
use crate::synth::{OracleInstance, SceneSpec};

pub const LEFT: &str = "left.ppm";
pub const RIGHT: &str = "right.ppm";
pub const PREV_LEFT: &str = "prev_left.ppm";
pub const PREV_RIGHT: &str = "prev_right.ppm";
pub const DINV: &str = "dinv.pfm";
pub const NORMAL: &str = "normal.pfm";
pub const POSE: &str = "pose.txt";
pub const CALIB: &str = "calib.txt";
pub const TRACE: &str = "loss_trace.csv";

fn format_error(kind: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        kind,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Splits a Netpbm-style header into `count` whitespace-separated tokens,
/// skipping `#` comments, and returns them with the offset of the payload
/// (one whitespace byte after the last token).
fn header_tokens(bytes: &[u8], count: usize) -> std::result::Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err("missing pixel data".into());
    }
    Ok((tokens, i + 1))
}

fn parse_dim(token: &str) -> std::result::Result<usize, String> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("invalid dimension {token:?}")),
    }
}

/// Encodes a 1- or 3-channel grid as PFM: little-endian `f32`, scale `-1`,
/// rows stored bottom-up.
pub fn encode_pfm(grid: &ImageGrid) -> Result<Vec<u8>> {
    let magic = match grid.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::InvalidGrid(format!(
                "PFM stores 1 or 3 channels, got {c}"
            )))
        }
    };
    let (w, h) = grid.dims();
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * grid.data().len());
    let row = w * grid.channels();
    for y in (0..h).rev() {
        for v in &grid.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a PFM file of either byte order (the sign of the scale field).
pub fn decode_pfm(bytes: &[u8]) -> std::result::Result<ImageGrid, String> {
    let (tokens, start) = header_tokens(bytes, 4)?;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(format!("unknown magic {m:?}")),
    };
    let w = parse_dim(&tokens[1])?;
    let h = parse_dim(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format!("invalid scale {:?}", tokens[3]))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("invalid scale {scale}"));
    }
    let little = scale < 0.0;
    let payload = &bytes[start..];
    let n = w * h * channels;
    if payload.len() != 4 * n {
        return Err(format!(
            "expected {} data bytes, found {}",
            4 * n,
            payload.len()
        ));
    }
    let row = w * channels;
    let mut data = vec![0.0; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (i / row, i % row);
        data[(h - 1 - file_row) * row + col] = v as f64;
    }
    ImageGrid::new(w, h, channels, data).map_err(|e| e.to_string())
}

pub fn write_pfm(path: &Path, grid: &ImageGrid) -> Result<()> {
    fs::write(path, encode_pfm(grid)?)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<ImageGrid> {
    decode_pfm(&fs::read(path)?).map_err(|r| format_error("PFM", path, r))
}

/// Bits per sample of written PPM/PGM files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleDepth {
    Eight,
    /// Maxval 65535, big-endian samples.
    Sixteen,
}

/// Encodes a 1-channel grid as binary PGM and a 3-channel grid as binary PPM,
/// mapping `[0, 1]` to `0..=maxval` with rounding and clamping.
pub fn encode_pnm(grid: &ImageGrid, depth: SampleDepth) -> Result<Vec<u8>> {
    let magic = match grid.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidGrid(format!(
                "PPM/PGM store 1 or 3 channels, got {c}"
            )))
        }
    };
    let (w, h) = grid.dims();
    let max = match depth {
        SampleDepth::Eight => 255u16,
        SampleDepth::Sixteen => u16::MAX,
    };
    let mut out = format!("{magic}\n{w} {h}\n{max}\n").into_bytes();
    for v in grid.data() {
        let q = (v * max as f64).round().clamp(0.0, max as f64) as u16;
        match depth {
            SampleDepth::Eight => out.push(q as u8),
            SampleDepth::Sixteen => out.extend_from_slice(&q.to_be_bytes()),
        }
    }
    Ok(out)
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with 8- or 16-bit samples into
/// values in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<ImageGrid, String> {
    let (tokens, start) = header_tokens(bytes, 4)?;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(format!("unsupported magic {m:?}")),
    };
    let w = parse_dim(&tokens[1])?;
    let h = parse_dim(&tokens[2])?;
    let max: u32 = tokens[3]
        .parse()
        .map_err(|_| format!("invalid maxval {:?}", tokens[3]))?;
    if max == 0 || max > u16::MAX as u32 {
        return Err(format!("maxval must be in 1..=65535, got {max}"));
    }
    let bytes_per_sample = if max > 255 { 2 } else { 1 };
    let payload = &bytes[start..];
    let n = w * h * channels;
    if payload.len() != n * bytes_per_sample {
        return Err(format!(
            "expected {} data bytes, found {}",
            n * bytes_per_sample,
            payload.len()
        ));
    }
    let data = payload
        .chunks_exact(bytes_per_sample)
        .map(|b| {
            let v = if bytes_per_sample == 2 {
                u16::from_be_bytes([b[0], b[1]]) as u32
            } else {
                b[0] as u32
            };
            v as f64 / max as f64
        })
        .collect();
    ImageGrid::new(w, h, channels, data).map_err(|e| e.to_string())
}

pub fn write_pnm(path: &Path, grid: &ImageGrid, depth: SampleDepth) -> Result<()> {
    fs::write(path, encode_pnm(grid, depth)?)?;
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<ImageGrid> {
    decode_pnm(&fs::read(path)?).map_err(|r| format_error("PPM", path, r))
}

/// Parsed `key = value` lines. `#` starts a comment; duplicate keys are errors.
///
/// Values are taken out one key at a time; [`KeyValues::finish`] then rejects
/// whatever was not consumed.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", number + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", number + 1));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key {key:?}", number + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: std::str::FromStr>(
        &mut self,
        key: &str,
    ) -> std::result::Result<Option<T>, String> {
        self.take(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| format!("invalid value for {key}: {v:?}"))
            })
            .transpose()
    }

    /// Exactly `n` whitespace-separated reals.
    pub fn take_reals(
        &mut self,
        key: &str,
        n: usize,
    ) -> std::result::Result<Option<Vec<f64>>, String> {
        let Some(raw) = self.take(key) else {
            return Ok(None);
        };
        let values = raw
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| format!("invalid number {t:?} for {key}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if values.len() != n {
            return Err(format!("{key} needs {n} values, found {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format!("{key} has a non-finite value"));
        }
        Ok(Some(values))
    }

    pub fn require_reals(&mut self, key: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
        self.take_reals(key, n)?
            .ok_or_else(|| format!("missing key {key}"))
    }

    /// Keys starting with `prefix`, in sorted order.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    pub fn finish(self) -> std::result::Result<(), String> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            Err(format!("unknown key(s): {}", keys.join(", ")))
        }
    }
}

pub fn read_key_values(path: &Path, kind: &'static str) -> Result<KeyValues> {
    let text = fs::read_to_string(path)?;
    KeyValues::parse(&text).map_err(|r| format_error(kind, path, r))
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn transform_rows(t: &RigidTransform) -> String {
    let (r, p) = (t.rotation(), t.translation());
    let mut v = Vec::with_capacity(12);
    for i in 0..3 {
        v.extend([r[(i, 0)], r[(i, 1)], r[(i, 2)], p[i]]);
    }
    join(&v)
}

fn transform_from_rows(v: &[f64]) -> std::result::Result<RigidTransform, String> {
    let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let t = Vector3::new(v[3], v[7], v[11]);
    if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-6 || r.determinant() <= 0.0 {
        return Err("rotation block is not a proper rotation".into());
    }
    Ok(RigidTransform::from_matrix(r, t))
}

/// Camera calibration of a stereo sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub intrinsics: Intrinsics,
    /// Left-to-right camera transform.
    pub stereo: RigidTransform,
}

pub fn calib_text(c: &Calibration) -> String {
    let k = &c.intrinsics;
    format!(
        "# pinhole intrinsics, row-major\nK = {}\n# left-to-right camera transform [R | t], row-major\nT_LR = {}\n",
        join(&[k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0]),
        transform_rows(&c.stereo)
    )
}

pub fn parse_calib(mut kv: KeyValues) -> std::result::Result<Calibration, String> {
    let k = kv.require_reals("K", 9)?;
    if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
        return Err("K must have the form [fx 0 cx; 0 fy cy; 0 0 1]".into());
    }
    let intrinsics = Intrinsics::new(k[0], k[4], k[2], k[5]).map_err(|e| e.to_string())?;
    let stereo = transform_from_rows(&kv.require_reals("T_LR", 12)?)?;
    kv.finish()?;
    Ok(Calibration { intrinsics, stereo })
}

pub fn write_calib(path: &Path, c: &Calibration) -> Result<()> {
    fs::write(path, calib_text(c))?;
    Ok(())
}

pub fn read_calib(path: &Path) -> Result<Calibration> {
    parse_calib(read_key_values(path, "calibration")?)
        .map_err(|r| format_error("calibration", path, r))
}

/// `xi` (rho then omega) and the matching `[R | t]` rows.
pub fn pose_text(pose: &RigidTransform) -> String {
    format!(
        "# pose from frame t to frame t-1: se(3) coordinates (rho, omega)\nxi = {}\n# [R | t], row-major\nT = {}\n",
        join(pose.xi().as_slice()),
        transform_rows(pose)
    )
}

/// Reads `xi`; an accompanying `T` must agree with it.
pub fn parse_pose(mut kv: KeyValues) -> std::result::Result<RigidTransform, String> {
    let xi = kv.require_reals("xi", 6)?;
    let pose = RigidTransform::exp(&Vector6::from_column_slice(&xi));
    if let Some(rows) = kv.take_reals("T", 12)? {
        let t = transform_from_rows(&rows)?;
        let gap = (t.rotation() - pose.rotation()).abs().max()
            + (t.translation() - pose.translation()).abs().max();
        if gap > 1e-6 {
            return Err("T does not match xi".into());
        }
    }
    kv.finish()?;
    Ok(pose)
}

pub fn write_pose(path: &Path, pose: &RigidTransform) -> Result<()> {
    fs::write(path, pose_text(pose))?;
    Ok(())
}

pub fn read_pose(path: &Path) -> Result<RigidTransform> {
    parse_pose(read_key_values(path, "pose")?).map_err(|r| format_error("pose", path, r))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes the four views (16-bit PPM), frame-`t` ground truth, pose and
/// calibration.
pub fn write_instance(dir: &Path, instance: &OracleInstance) -> Result<()> {
    create_dir(dir)?;
    let s = &instance.sequence;
    write_pnm(&dir.join(LEFT), &s.left, SampleDepth::Sixteen)?;
    write_pnm(&dir.join(RIGHT), &s.right, SampleDepth::Sixteen)?;
    write_pnm(&dir.join(PREV_LEFT), &s.prev_left, SampleDepth::Sixteen)?;
    write_pnm(&dir.join(PREV_RIGHT), &s.prev_right, SampleDepth::Sixteen)?;
    write_pfm(&dir.join(DINV), instance.truth.dinv.grid())?;
    write_pfm(&dir.join(NORMAL), instance.truth.normals.grid())?;
    write_pose(&dir.join(POSE), &instance.pose)?;
    write_calib(
        &dir.join(CALIB),
        &Calibration {
            intrinsics: s.intrinsics,
            stereo: s.stereo.clone(),
        },
    )
}

/// Reads the solver input (images and calibration) of an instance directory.
pub fn read_instance(dir: &Path) -> Result<StereoSequence> {
    let calib = read_calib(&dir.join(CALIB))?;
    StereoSequence::new(
        read_pnm(&dir.join(LEFT))?,
        read_pnm(&dir.join(RIGHT))?,
        read_pnm(&dir.join(PREV_LEFT))?,
        read_pnm(&dir.join(PREV_RIGHT))?,
        calib.intrinsics,
        calib.stereo,
    )
}

/// Inverse depth and normals stored in a directory (ground truth or prediction).
pub fn read_geometry(dir: &Path) -> Result<(InverseDepthMap, NormalMap)> {
    let wrap = |path: PathBuf, e: Error| match e {
        Error::Io(_) | Error::Format { .. } => e,
        other => format_error("PFM", &path, other.to_string()),
    };
    let dinv_path = dir.join(DINV);
    let dinv = read_pfm(&dinv_path)
        .and_then(InverseDepthMap::new)
        .map_err(|e| wrap(dinv_path, e))?;
    let normal_path = dir.join(NORMAL);
    let normals = read_pfm(&normal_path)
        .and_then(NormalMap::normalized)
        .map_err(|e| wrap(normal_path, e))?;
    crate::losses::check_dims(dinv.dims(), normals.dims())?;
    Ok((dinv, normals))
}

/// Writes a solve result: inverse depth, normals, pose and the loss trace.
pub fn write_solution(dir: &Path, vars: &Variables, trace: &[TraceEntry]) -> Result<()> {
    create_dir(dir)?;
    write_pfm(&dir.join(DINV), vars.dinv.grid())?;
    write_pfm(&dir.join(NORMAL), vars.normals.grid())?;
    write_pose(&dir.join(POSE), &vars.pose())?;
    let mut csv = Vec::new();
    write_trace_csv(trace, &mut csv)?;
    fs::write(dir.join(TRACE), csv)?;
    Ok(())
}

/// Scene description file:
///
/// ```text
/// name = custom
/// seed = 3
/// width = 128          # optional, with height, focal, baseline, ego_motion
/// plane1 = nx ny nz offset fmin fmax
/// plane2 = ...
/// ```
///
/// Each `planeN` line gives a plane `<n, X> = offset` whose texture is drawn
/// from `seed` with frequencies in `[fmin, fmax]` cycles per metre.
pub fn parse_scene(mut kv: KeyValues) -> std::result::Result<SceneSpec, String> {
    use crate::synth::{
        custom_scene, PlaneSpec, DEFAULT_BASELINE, DEFAULT_FOCAL, DEFAULT_HEIGHT, DEFAULT_SEED,
        DEFAULT_WIDTH,
    };
    let name = kv.take("name").unwrap_or_else(|| "custom".into());
    let seed = kv.take_parsed::<u64>("seed")?.unwrap_or(DEFAULT_SEED);
    let width = kv.take_parsed::<usize>("width")?.unwrap_or(DEFAULT_WIDTH);
    let height = kv.take_parsed::<usize>("height")?.unwrap_or(DEFAULT_HEIGHT);
    let focal = kv.take_parsed::<f64>("focal")?.unwrap_or(DEFAULT_FOCAL);
    let baseline = kv
        .take_parsed::<f64>("baseline")?
        .unwrap_or(DEFAULT_BASELINE);
    let ego = kv
        .take_reals("ego_motion", 6)?
        .unwrap_or_else(|| vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
    let mut planes = Vec::new();
    for key in kv.keys_with_prefix("plane") {
        let v = kv.require_reals(&key, 6)?;
        let normal = Vector3::new(v[0], v[1], v[2]);
        if normal.norm() == 0.0 {
            return Err(format!("{key}: zero normal"));
        }
        if !(0.0 < v[4] && v[4] <= v[5]) {
            return Err(format!("{key}: need 0 < fmin <= fmax"));
        }
        planes.push(PlaneSpec {
            normal: normal.normalize(),
            offset: v[3],
            frequencies: (v[4], v[5]),
        });
    }
    kv.finish()?;
    let intrinsics = Intrinsics::new(
        focal,
        focal,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
    )
    .map_err(|e| e.to_string())?;
    let spec = custom_scene(
        &name,
        &planes,
        seed,
        intrinsics,
        (width, height),
        baseline,
        Vector6::from_column_slice(&ego),
    );
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

pub fn read_scene(path: &Path) -> Result<SceneSpec> {
    parse_scene(read_key_values(path, "scene")?).map_err(|r| format_error("scene", path, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, c: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, c, |x, y, ch| {
            (x as f64 * 0.25 - y as f64 * 0.5 + ch as f64) / 7.0
        })
    }

    #[test]
    fn pfm_header_and_row_order() {
        let g = grid(3, 2, 1);
        let bytes = encode_pfm(&g).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        let data = &bytes[b"Pf\n3 2\n-1.0\n".len()..];
        let first = f32::from_le_bytes([data[0], data[1], data[2], data[3]]);
        assert_eq!(first, g.get(0, 1, 0) as f32);
        assert!(encode_pfm(&grid(3, 2, 3)).unwrap().starts_with(b"PF\n"));
        assert!(encode_pfm(&grid(3, 2, 2)).is_err());
    }

    #[test]
    fn pfm_big_endian_is_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend(1.5f32.to_be_bytes());
        bytes.extend((-2.0f32).to_be_bytes());
        let g = decode_pfm(&bytes).unwrap();
        assert_eq!(g.data(), &[1.5, -2.0]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(decode_pfm(b"PX\n2 1\n-1.0\n12345678").is_err());
        assert!(decode_pfm(b"Pf\n2 1\n-1.0\n1234").is_err());
        assert!(decode_pfm(b"Pf\n2").is_err());
        assert!(decode_pnm(b"P6\n1 1\n65536\n123456").is_err());
        assert!(decode_pnm(b"P6\n1 1\n65535\n123").is_err());
        assert!(decode_pnm(b"P3\n1 1\n255\n1 2 3").is_err());
    }

    #[test]
    fn pnm_comments_and_quantization() {
        let g = decode_pnm(b"P5\n# comment\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(g.data(), &[0.0, 1.0]);
        let img = ImageGrid::from_fn(4, 3, 3, |x, y, c| ((x + 2 * y + c) % 5) as f64 / 4.0);
        for (depth, max) in [(SampleDepth::Eight, 255.0), (SampleDepth::Sixteen, 65535.0)] {
            let back = decode_pnm(&encode_pnm(&img, depth).unwrap()).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.5 / max + 1e-12);
            }
        }
        let sixteen = decode_pnm(b"P5\n1 1\n65535\n\x80\x00").unwrap();
        assert_eq!(sixteen.data(), &[32768.0 / 65535.0]);
    }

    #[test]
    fn key_values_reject_duplicates_and_unknown_keys() {
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        assert!(KeyValues::parse("just words").is_err());
        let mut kv = KeyValues::parse("# c\na = 1 # trailing\n\nb = x").unwrap();
        assert_eq!(kv.take_parsed::<u32>("a").unwrap(), Some(1));
        assert_eq!(kv.finish().unwrap_err(), "unknown key(s): b");
    }

    #[test]
    fn calibration_and_pose_round_trip() {
        let c = Calibration {
            intrinsics: Intrinsics::new(100.0, 99.5, 63.5, 47.5).unwrap(),
            stereo: RigidTransform::from_translation(Vector3::new(-0.54, 0.0, 0.0)),
        };
        let back = parse_calib(KeyValues::parse(&calib_text(&c)).unwrap()).unwrap();
        assert_eq!(back.intrinsics, c.intrinsics);
        assert!((back.stereo.translation() - c.stereo.translation()).norm() < 1e-15);

        let pose = RigidTransform::exp(&Vector6::new(0.1, -0.2, 0.5, 0.01, 0.02, -0.03));
        let back = parse_pose(KeyValues::parse(&pose_text(&pose)).unwrap()).unwrap();
        assert_eq!(back.xi(), pose.xi());
        assert!(parse_pose(
            KeyValues::parse("xi = 0 0 0 0 0 0\nT = 1 0 0 1 0 1 0 0 0 0 1 0").unwrap()
        )
        .is_err());
        assert!(parse_pose(KeyValues::parse("xi = 0 0 0 0 0 0\nextra = 1").unwrap()).is_err());
    }

    #[test]
    fn scene_file_parses() {
        let text =
            "name = box\nseed = 3\nplane1 = 0 0 -1 -5 0.1 0.3\nplane2 = 0 -2 0 -1.5 0.05 0.2\n";
        let spec = parse_scene(KeyValues::parse(text).unwrap()).unwrap();
        assert_eq!(spec.name, "box");
        assert_eq!(spec.planes.len(), 2);
        assert!((spec.planes[1].normal - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
        assert!(parse_scene(KeyValues::parse("plane1 = 0 0 -1 -5 0.3 0.1").unwrap()).is_err());
        assert!(parse_scene(KeyValues::parse("name = empty").unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn pfm_round_trip_is_exact_for_f32_values(
            w in 1usize..6, h in 1usize..6, three in any::<bool>(),
            seed in any::<u32>(),
        ) {
            let c = if three { 3 } else { 1 };
            let g = ImageGrid::from_fn(w, h, c, |x, y, ch| {
                let v = ((seed as usize + 31 * x + 17 * y + 7 * ch) % 1000) as f64 / 37.0 - 13.0;
                v as f32 as f64
            });
            let back = decode_pfm(&encode_pfm(&g).unwrap()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
