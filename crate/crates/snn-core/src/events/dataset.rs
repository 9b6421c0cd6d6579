//! On-disk dataset layout.
//!
//! A dataset root holds one directory per sample plus a manifest:
//!
//! ```text
//! root/
//!   manifest.txt            split dir label light position subject
//!   train/s0000/events.evt1
//!   train/s0000/frame_000000000us.ppm
//!   ...
//! ```
//!
//! Frames are binary PPM (P6, maxval 255); event streams use the format in
//! [`super::codec`]. Loading re-validates every invariant, so a dataset
//! edited by hand fails with a pointed error instead of corrupting a run.

use super::codec::{self, CodecError};
use super::{event_frequency, CameraPosition, DualSample, EventError, Light, Scenario};
use crate::tensor::Tensor;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum DatasetError {
    Io { path: PathBuf, source: io::Error },
    Ppm { path: PathBuf, reason: String },
    Manifest { line: usize, reason: String },
    Codec { path: PathBuf, source: CodecError },
    Sample { dir: PathBuf, source: EventError },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            DatasetError::Ppm { path, reason } => {
                write!(f, "{}: bad ppm: {reason}", path.display())
            }
            DatasetError::Manifest { line, reason } => {
                write!(f, "manifest line {line}: {reason}")
            }
            DatasetError::Codec { path, source } => write!(f, "{}: {source}", path.display()),
            DatasetError::Sample { dir, source } => {
                write!(f, "{}: invalid sample: {source}", dir.display())
            }
        }
    }
}

impl std::error::Error for DatasetError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            DatasetError::Io { source, .. } => Some(source),
            DatasetError::Codec { source, .. } => Some(source),
            DatasetError::Sample { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Quantizes a unit-interval channel value to one PPM byte.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes `[3, h, w]` pixels as binary PPM.
pub fn encode_ppm(pixels: &Tensor) -> Vec<u8> {
    let (h, w) = (pixels.shape()[1], pixels.shape()[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let data = pixels.data();
    let plane = h * w;
    for i in 0..plane {
        for c in 0..3 {
            out.push(quantize(data[c * plane + i]));
        }
    }
    out
}

/// Decodes binary PPM into `[3, h, w]` pixels scaled to `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor, String> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(bytes)?;
    if magic != "P6" {
        return Err(format!("magic {magic:?}, expected \"P6\""));
    }
    let w: usize = token(bytes)?.parse().map_err(|_| "unreadable width".to_string())?;
    let h: usize = token(bytes)?.parse().map_err(|_| "unreadable height".to_string())?;
    let maxval = token(bytes)?;
    if maxval != "255" {
        return Err(format!("maxval {maxval}, only 255 is supported"));
    }
    if w == 0 || h == 0 {
        return Err("zero dimension".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = w * h * 3;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        format!("raster needs {need} bytes, found {}", bytes.len().saturating_sub(pos))
    })?;
    let plane = h * w;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = f64::from(raster[i * 3 + c]) / 255.0;
        }
    }
    Ok(Tensor::from_vec(&[3, h, w], data))
}

fn frame_file_name(t_us: u64) -> String {
    format!("frame_{t_us:09}us.ppm")
}

fn parse_frame_time(name: &str) -> Option<u64> {
    name.strip_prefix("frame_")?.strip_suffix("us.ppm")?.parse().ok()
}

/// Writes both splits plus the manifest under `root`.
pub fn save_dataset(
    root: &Path,
    train: &[DualSample],
    test: &[DualSample],
) -> Result<(), DatasetError> {
    let mut manifest = String::new();
    for (split, samples) in [("train", train), ("test", test)] {
        for (i, sample) in samples.iter().enumerate() {
            let dir = root.join(split).join(format!("s{i:04}"));
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let ev_path = dir.join("events.evt1");
            codec::write_file(&ev_path, &sample.events).map_err(io_err(&ev_path))?;
            for frame in &sample.frames {
                let path = dir.join(frame_file_name(frame.t_us()));
                let mut f = fs::File::create(&path).map_err(io_err(&path))?;
                f.write_all(&encode_ppm(frame.pixels())).map_err(io_err(&path))?;
            }
            manifest.push_str(&format!(
                "{split} s{i:04} {} {} {} {}\n",
                sample.label,
                sample.scenario.light.name(),
                sample.scenario.position.name(),
                sample.scenario.subject,
            ));
        }
    }
    let path = root.join("manifest.txt");
    fs::write(&path, manifest).map_err(io_err(&path))
}

fn load_sample(root: &Path, dir: &str, label: usize, scenario: Scenario) -> Result<DualSample, DatasetError> {
    let dir_path = root.join(dir);
    let ev_path = dir_path.join("events.evt1");
    let ev_bytes = fs::read(&ev_path).map_err(io_err(&ev_path))?;
    let events = codec::decode(&ev_bytes)
        .map_err(|source| DatasetError::Codec { path: ev_path.clone(), source })?;

    let mut frame_files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&dir_path).map_err(io_err(&dir_path))? {
        let entry = entry.map_err(io_err(&dir_path))?;
        let name = entry.file_name();
        if let Some(t) = parse_frame_time(&name.to_string_lossy()) {
            frame_files.push((t, entry.path()));
        }
    }
    frame_files.sort();

    let mut frames = Vec::with_capacity(frame_files.len());
    for (t, path) in frame_files {
        let mut bytes = Vec::new();
        fs::File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(&path))?;
        let pixels =
            decode_ppm(&bytes).map_err(|reason| DatasetError::Ppm { path: path.clone(), reason })?;
        let frame = super::FrameImage::new(pixels, t)
            .map_err(|source| DatasetError::Sample { dir: dir_path.clone(), source })?;
        frames.push(frame);
    }

    DualSample::new(events, frames, label, scenario)
        .map_err(|source| DatasetError::Sample { dir: dir_path.clone(), source })
}

/// Reads a dataset written by [`save_dataset`], returning (train, test).
pub fn load_dataset(root: &Path) -> Result<(Vec<DualSample>, Vec<DualSample>), DatasetError> {
    let path = root.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(DatasetError::Manifest {
                line: line_no,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let label: usize = fields[2].parse().map_err(|_| DatasetError::Manifest {
            line: line_no,
            reason: format!("unreadable label {:?}", fields[2]),
        })?;
        let light = Light::from_name(fields[3]).ok_or_else(|| DatasetError::Manifest {
            line: line_no,
            reason: format!("unknown light {:?}", fields[3]),
        })?;
        let position = CameraPosition::from_name(fields[4]).ok_or_else(|| DatasetError::Manifest {
            line: line_no,
            reason: format!("unknown position {:?}", fields[4]),
        })?;
        let subject: u32 = fields[5].parse().map_err(|_| DatasetError::Manifest {
            line: line_no,
            reason: format!("unreadable subject {:?}", fields[5]),
        })?;
        let scenario = Scenario { light, position, subject };
        let rel = format!("{}/{}", fields[0], fields[1]);
        let sample = load_sample(root, &rel, label, scenario)?;
        match fields[0] {
            "train" => train.push(sample),
            "test" => test.push(sample),
            other => {
                return Err(DatasetError::Manifest {
                    line: line_no,
                    reason: format!("unknown split {other:?}"),
                })
            }
        }
    }
    Ok((train, test))
}

/// Writes per-sample event statistics: one row per sample with the label,
/// scenario tags, event count, and mean rate in kilo-events per second.
pub fn write_frequency_csv(
    path: &Path,
    samples: &[DualSample],
    class_names: &[String],
) -> Result<(), DatasetError> {
    let mut out = String::from("index,label,class,light,position,subject,events,duration_us,kev_per_s\n");
    for (i, s) in samples.iter().enumerate() {
        let class = class_names.get(s.label).map(String::as_str).unwrap_or("?");
        out.push_str(&format!(
            "{i},{},{class},{},{},{},{},{},{:.6}\n",
            s.label,
            s.scenario.light.name(),
            s.scenario.position.name(),
            s.scenario.subject,
            s.events.len(),
            s.events.duration_us(),
            event_frequency(&s.events),
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::synth::{generate_split, SynthConfig, SPLIT_TEST, SPLIT_TRAIN};

    fn tiny_samples() -> (Vec<DualSample>, Vec<DualSample>) {
        let cfg = SynthConfig { duration_us: 200_000, ..SynthConfig::default() };
        let train = generate_split(&cfg, 5, 1, SPLIT_TRAIN).unwrap();
        let test = generate_split(&cfg, 5, 1, SPLIT_TEST).unwrap();
        (train, test)
    }

    #[test]
    fn ppm_roundtrip_is_exact_after_quantization() {
        let pixels = Tensor::from_vec(
            &[3, 2, 2],
            vec![0.0, 0.25, 0.5, 1.0, 0.1, 0.2, 0.3, 0.4, 0.9, 0.8, 0.7, 0.6],
        );
        let bytes = encode_ppm(&pixels);
        let decoded = decode_ppm(&bytes).unwrap();
        assert_eq!(encode_ppm(&decoded), bytes);
        for (a, b) in pixels.data().iter().zip(decoded.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn ppm_rejects_malformed_input() {
        assert!(decode_ppm(b"P5\n2 2\n255\nxxxx").is_err());
        assert!(decode_ppm(b"P6\n2 2\n65535\n").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\nshort").is_err());
        assert!(decode_ppm(b"P6\n# comment\n1 1\n255\nRGB").is_ok());
    }

    #[test]
    fn dataset_roundtrip_preserves_everything_up_to_quantization() {
        let (train, test) = tiny_samples();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &train, &test).unwrap();
        let (train2, test2) = load_dataset(dir.path()).unwrap();
        assert_eq!(train.len(), train2.len());
        assert_eq!(test.len(), test2.len());
        for (a, b) in train.iter().zip(&train2) {
            assert_eq!(a.events, b.events);
            assert_eq!(a.label, b.label);
            assert_eq!(a.scenario, b.scenario);
            assert_eq!(a.frames.len(), b.frames.len());
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.t_us(), fb.t_us());
                assert_eq!(encode_ppm(fa.pixels()), encode_ppm(fb.pixels()));
            }
        }
    }

    #[test]
    fn corrupt_manifest_is_reported_with_its_line() {
        let (train, test) = tiny_samples();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &train[..1].to_vec(), &test[..0].to_vec()).unwrap();
        std::fs::write(dir.path().join("manifest.txt"), "train s0000 zero dim front 0\n").unwrap();
        match load_dataset(dir.path()) {
            Err(DatasetError::Manifest { line: 1, .. }) => {}
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn missing_events_file_is_an_io_error() {
        let (train, test) = tiny_samples();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &train[..1].to_vec(), &test[..0].to_vec()).unwrap();
        std::fs::remove_file(dir.path().join("train/s0000/events.evt1")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn frequency_csv_lists_every_sample() {
        let (train, _) = tiny_samples();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("freq.csv");
        let names: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
        write_frequency_csv(&path, &train, &names).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), train.len() + 1);
        assert!(lines[0].starts_with("index,label,class"));
        assert!(lines[1].contains(",dim,front,0,"));
    }
}
