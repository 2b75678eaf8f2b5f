//! WAV decoding and GTZAN-style dataset scanning.
//!
//! Only 16-bit PCM RIFF/WAVE files are accepted; anything else is treated
//! as corrupt. Stereo (or any multi-channel) input is downmixed to mono by
//! the per-frame channel mean. Corrupt files are skipped and itemized,
//! never fatal for a whole dataset scan.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

/// Decoded mono audio: normalized samples in `[-1, 1]` plus the sample rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub source_path: String,
}

/// One skipped file and why it could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptFileReport {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated data chunk: declared {declared} bytes, found {actual}")]
    TruncatedData { declared: usize, actual: usize },
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("no decodable audio files found")]
    EmptyDataset,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn read_u16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes(b.get(at..at + 2)?.try_into().ok()?))
}

fn read_u32(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

/// Decodes a 16-bit PCM WAV file into a normalized mono clip.
///
/// Sample `s` maps to `s / 32768`; multi-channel frames are averaged.
/// Unknown RIFF chunks are skipped. The declared data-chunk length must be
/// covered by the actual payload or the file is reported truncated.
pub fn load_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes, &path.display().to_string())
}

/// Decodes WAV bytes; `source` is recorded on the clip for reporting.
pub fn decode_wav(bytes: &[u8], source: &str) -> Result<AudioClip, AudioError> {
    let header_err = |m: &str| AudioError::MalformedHeader(m.to_string());
    if bytes.len() < 12 {
        return Err(header_err("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(header_err("missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(header_err("missing WAVE tag"));
    }

    let mut channels = 0u16;
    let mut sample_rate = 0u32;
    let mut fmt_seen = false;
    let mut offset = 12usize;
    loop {
        let Some(id) = bytes.get(offset..offset + 4) else {
            return Err(header_err("no data chunk"));
        };
        let Some(size) = read_u32(bytes, offset + 4) else {
            return Err(header_err("chunk header cut short"));
        };
        let size = size as usize;
        let body = offset + 8;

        if id == b"fmt " {
            if size < 16 {
                return Err(header_err("fmt chunk shorter than 16 bytes"));
            }
            let format_tag = read_u16(bytes, body).ok_or_else(|| header_err("fmt chunk cut short"))?;
            channels = read_u16(bytes, body + 2).ok_or_else(|| header_err("fmt chunk cut short"))?;
            sample_rate = read_u32(bytes, body + 4).ok_or_else(|| header_err("fmt chunk cut short"))?;
            let bits = read_u16(bytes, body + 14).ok_or_else(|| header_err("fmt chunk cut short"))?;
            if format_tag != 1 {
                return Err(AudioError::UnsupportedEncoding(format!(
                    "format tag {format_tag}, only PCM (1) is supported"
                )));
            }
            if bits != 16 {
                return Err(AudioError::UnsupportedEncoding(format!(
                    "{bits}-bit samples, only 16-bit is supported"
                )));
            }
            if channels == 0 {
                return Err(header_err("zero channels"));
            }
            if sample_rate == 0 {
                return Err(header_err("zero sample rate"));
            }
            fmt_seen = true;
        } else if id == b"data" {
            if !fmt_seen {
                return Err(header_err("data chunk before fmt chunk"));
            }
            let actual = bytes.len().saturating_sub(body);
            if actual < size {
                return Err(AudioError::TruncatedData {
                    declared: size,
                    actual,
                });
            }
            return decode_pcm16(&bytes[body..body + size], channels, sample_rate, source);
        }
        // Chunks are word-aligned: odd sizes carry one pad byte.
        offset = body + size + (size & 1);
    }
}

fn decode_pcm16(
    payload: &[u8],
    channels: u16,
    sample_rate: u32,
    source: &str,
) -> Result<AudioClip, AudioError> {
    let frame_bytes = 2 * channels as usize;
    if payload.is_empty() {
        return Err(AudioError::MalformedHeader("empty data chunk".to_string()));
    }
    if payload.len() % frame_bytes != 0 {
        return Err(AudioError::MalformedHeader(
            "data chunk not frame-aligned".to_string(),
        ));
    }
    let n_frames = payload.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for frame in payload.chunks_exact(frame_bytes) {
        let mut acc = 0.0f64;
        for ch in frame.chunks_exact(2) {
            let s = i16::from_le_bytes([ch[0], ch[1]]);
            acc += f64::from(s) / 32768.0;
        }
        samples.push(acc / f64::from(channels));
    }
    Ok(AudioClip {
        samples,
        sample_rate_hz: sample_rate,
        source_path: source.to_string(),
    })
}

/// Writes mono samples as a 16-bit PCM WAV file. Fixture/cache helper;
/// samples are clamped to `[-1, 1]` and round-trip within `1/32768`.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate_hz: u32) -> std::io::Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)
}

/// Scans a `<root>/<genre>/*.wav` tree. The genre label is the directory
/// name. Every file is decode-checked; undecodable files land in the
/// corrupt list only. Output is sorted by genre then file name, stable
/// across runs and platforms.
pub fn scan_dataset(
    root: &Path,
) -> Result<(Vec<(String, PathBuf)>, Vec<CorruptFileReport>), AudioError> {
    if !root.is_dir() {
        return Err(AudioError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset root {} is not a directory", root.display()),
        )));
    }
    let mut genres: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            genres.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    genres.sort_by(|a, b| a.0.cmp(&b.0));

    let mut candidates: Vec<(String, PathBuf)> = Vec::new();
    for (genre, dir) in &genres {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            })
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        candidates.extend(files.into_iter().map(|p| (genre.clone(), p)));
    }

    // Decode checks run in parallel; results are reassembled in scan order.
    let checked: Vec<Result<(), AudioError>> = candidates
        .par_iter()
        .map(|(_, path)| load_wav(path).map(|_| ()))
        .collect();

    let mut entries = Vec::new();
    let mut corrupt = Vec::new();
    for ((genre, path), result) in candidates.into_iter().zip(checked) {
        match result {
            Ok(()) => entries.push((genre, path)),
            Err(e) => corrupt.push(CorruptFileReport {
                path: path.display().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(AudioError::EmptyDataset);
    }
    Ok((entries, corrupt))
}
