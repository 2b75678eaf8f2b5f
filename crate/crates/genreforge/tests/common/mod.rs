//! Deterministic synthetic fixtures shared by the integration tests:
//! a GTZAN-shaped feature CSV and a WAV dataset tree with one
//! harmonic voice per genre.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const GENRES: [&str; 10] = [
    "blues", "classical", "country", "disco", "hiphop", "jazz", "metal", "pop", "reggae", "rock",
];

pub const N_FEATURES: usize = 57;
pub const INFORMATIVE: usize = 10;
pub const ROWS_PER_GENRE: usize = 100;

/// Ten-genre feature table shaped like a GTZAN metadata export:
/// filename and length columns, 57 feature columns, trailing label.
/// The first ten features carry axis-aligned class structure (corners
/// of a bit pattern, with classical as a tight far-off cluster); the
/// other 47 are identically distributed noise in every class, which
/// drags nearest-neighbor distances without hurting axis-aligned
/// splits.
pub fn write_gtzan_csv(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let spread = Normal::new(0.0, 1.0).unwrap();
    let tight = Normal::new(0.0, 0.4).unwrap();
    let mut text = String::from("filename,length,");
    for j in 1..=N_FEATURES {
        text.push_str(&format!("f{j:02},"));
    }
    text.push_str("label\n");
    for (c, genre) in GENRES.iter().enumerate() {
        for i in 0..ROWS_PER_GENRE {
            text.push_str(&format!("{genre}.{i:05}.wav,661794,"));
            for j in 0..N_FEATURES {
                let v = if j >= INFORMATIVE {
                    noise.sample(&mut rng)
                } else if *genre == "classical" {
                    7.0 + tight.sample(&mut rng)
                } else {
                    4.0 * ((c >> (j % 4)) & 1) as f64 + spread.sample(&mut rng)
                };
                text.push_str(&format!("{v:.6},"));
            }
            text.push_str(genre);
            text.push('\n');
        }
    }
    fs::write(path, text).unwrap();
}

/// Small three-genre CSV with the same column layout, separable with
/// margin to spare. Cheap enough for CLI-level tests.
pub fn write_small_csv(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let mut text = String::from("filename,length,f1,f2,f3,f4,label\n");
    for (c, genre) in ["blues", "jazz", "rock"].iter().enumerate() {
        for i in 0..12 {
            let base = c as f64 * 8.0;
            text.push_str(&format!(
                "{genre}.{i:05}.wav,661794,{:.6},{:.6},{:.6},{:.6},{genre}\n",
                base + jitter.sample(&mut rng),
                base + jitter.sample(&mut rng),
                base + jitter.sample(&mut rng),
                base + jitter.sample(&mut rng),
            ));
        }
    }
    fs::write(path, text).unwrap();
}

/// Samples per clip: exactly 130 STFT frames at n_fft 2048, hop 512.
pub const CLIP_SAMPLES: usize = 2048 + 129 * 512;

/// Writes `genres[..n_genres]` directories with `clips_per_genre`
/// 16-bit PCM WAVs each. Every genre is a distinct harmonic stack
/// (fundamental, rolloff, and partial mix), every clip a slight
/// detune of it, so MFCCs separate the genres cleanly.
pub fn write_wav_tree(root: &Path, n_genres: usize, clips_per_genre: usize) {
    let sample_rate = 22050u32;
    for (g, genre) in GENRES.iter().take(n_genres).enumerate() {
        let dir = root.join(genre);
        fs::create_dir_all(&dir).unwrap();
        let f0 = 110.0 * 1.35f64.powi(g as i32);
        for i in 0..clips_per_genre {
            let mut rng = ChaCha8Rng::seed_from_u64((g as u64) << 32 | i as u64);
            let detune = f0 * (1.0 + 0.004 * i as f64);
            let samples: Vec<i16> = (0..CLIP_SAMPLES)
                .map(|t| {
                    let phase = 2.0 * std::f64::consts::PI * detune * t as f64
                        / f64::from(sample_rate);
                    let mut v = 0.0;
                    for k in 1..=4u32 {
                        let amp = 1.0 / f64::from(k).powf(1.0 + 0.2 * (g % 3) as f64);
                        v += amp * (phase * f64::from(k)).sin();
                    }
                    v += 0.02 * (rng.random::<f64>() - 0.5);
                    (v / 3.0 * 32767.0).clamp(-32767.0, 32767.0) as i16
                })
                .collect();
            fs::write(
                dir.join(format!("{genre}.{i:05}.wav")),
                wav_bytes(&samples, sample_rate),
            )
            .unwrap();
        }
    }
}

/// Minimal RIFF/WAVE encoder: PCM, mono, 16-bit little-endian.
pub fn wav_bytes(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}
