//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads 16/24-bit PCM and 32-bit float (plain or extensible format),
//! averaging channels to mono. Writes mono 32-bit float or 16-bit PCM.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::resample::{ResampleError, Signal};

#[derive(Debug, Error)]
pub enum WavError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("malformed WAV header: missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("unsupported WAV codec: {0}")]
    UnsupportedCodec(String),
    #[error(transparent)]
    Signal(#[from] ResampleError),
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

struct Fmt {
    format: u16,
    channels: u16,
    rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(WavError::MalformedHeader(format!("`fmt ` chunk is {} bytes", body.len())));
    }
    let mut format = u16_at(body, 0);
    if format == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(WavError::MalformedHeader("extensible `fmt ` chunk too short".into()));
        }
        // first two bytes of the sub-format GUID carry the real format tag
        format = u16_at(body, 24);
    }
    Ok(Fmt {
        format,
        channels: u16_at(body, 2),
        rate: u32_at(body, 4),
        bits: u16_at(body, 14),
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<Signal, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::MissingChunk("RIFF"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MalformedHeader("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start.saturating_add(size);
        match id {
            b"fmt " => {
                if end > bytes.len() {
                    return Err(WavError::MalformedHeader("truncated `fmt ` chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[start..end])?);
            }
            b"data" => {
                // tolerate a data size that overruns a truncated file
                data = Some(&bytes[start..end.min(bytes.len())]);
            }
            _ => {}
        }
        pos = end.saturating_add(size & 1);
    }
    let fmt = fmt.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;
    if fmt.channels == 0 {
        return Err(WavError::MalformedHeader("zero channels".into()));
    }
    if fmt.rate == 0 {
        return Err(WavError::MalformedHeader("zero sample rate".into()));
    }
    let width = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_FLOAT, 32) => 4,
        (f, b) => {
            return Err(WavError::UnsupportedCodec(format!("format tag {f} with {b} bits per sample")));
        }
    };
    let decode = |c: &[u8]| -> f64 {
        match width {
            2 => i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0,
            3 => (i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8) as f64 / 8_388_608.0,
            _ => f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
        }
    };
    let channels = fmt.channels as usize;
    let frame = width * channels;
    let samples = data
        .chunks_exact(frame)
        .map(|f| {
            if channels == 1 {
                decode(f)
            } else {
                f.chunks_exact(width).map(decode).sum::<f64>() / channels as f64
            }
        })
        .collect();
    Ok(Signal::new(samples, fmt.rate as f64)?)
}

pub fn encode_wav(signal: &Signal, format: SampleFormat) -> Result<Vec<u8>, WavError> {
    let rate = signal.sample_rate();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return Err(WavError::UnsupportedCodec(format!("non-integer sample rate {rate}")));
    }
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 16u16),
        SampleFormat::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let block = bits / 8;
    let data_len = signal.len() * block as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(rate as u32).to_le_bytes());
    out.extend_from_slice(&(rate as u32 * block as u32).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for v in signal.samples() {
        match format {
            SampleFormat::Pcm16 => {
                let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal, WavError> {
    decode_wav(&fs::read(path)?)
}

pub fn write_wav(path: impl AsRef<Path>, signal: &Signal) -> Result<(), WavError> {
    fs::write(path, encode_wav(signal, SampleFormat::Float32)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine() -> Signal {
        let fs = 16000.0;
        let x = (0..16000)
            .map(|i| ((2.0 * PI * 440.0 * i as f64 / fs).sin() * 0.8) as f32 as f64)
            .collect();
        Signal::new(x, fs).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let s = sine();
        let back = decode_wav(&encode_wav(&s, SampleFormat::Float32).unwrap()).unwrap();
        assert_eq!(back, s);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &s).unwrap();
        assert_eq!(read_wav(&p).unwrap(), s);
    }

    #[test]
    fn pcm16_square_wave_bounds() {
        let s = Signal::new((0..100).map(|i| if i % 10 < 5 { 1.0 } else { -1.0 }).collect(), 8000.0).unwrap();
        let back = decode_wav(&encode_wav(&s, SampleFormat::Pcm16).unwrap()).unwrap();
        for v in back.samples() {
            assert!(*v == -1.0 || *v == 32767.0 / 32768.0);
        }
    }

    fn header(format: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&format.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&(8000u32 * channels as u32 * bits as u32 / 8).to_le_bytes());
        b.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn pcm24_stereo_is_averaged() {
        // left = 0.5, right = -0.25
        let mut frame = Vec::new();
        frame.extend_from_slice(&(4_194_304i32.to_le_bytes()[..3]));
        frame.extend_from_slice(&((-2_097_152i32).to_le_bytes()[..3]));
        let s = decode_wav(&header(FORMAT_PCM, 2, 24, &frame)).unwrap();
        assert_eq!(s.samples(), &[0.125]);
    }

    #[test]
    fn truncated_file_names_missing_chunk() {
        let bytes = encode_wav(&sine(), SampleFormat::Float32).unwrap();
        match decode_wav(&bytes[..30]) {
            Err(e @ WavError::MalformedHeader(_)) => assert!(e.to_string().contains("fmt "), "{e}"),
            other => panic!("unexpected {other:?}"),
        }
        match decode_wav(&bytes[..36]) {
            Err(e @ WavError::MissingChunk("data")) => assert!(e.to_string().contains("`data`")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode_wav(&bytes[..8]), Err(WavError::MissingChunk("RIFF"))));
    }

    #[test]
    fn unsupported_codec_is_distinct() {
        let err = decode_wav(&header(FORMAT_PCM, 1, 8, &[0, 1, 2])).unwrap_err();
        assert!(matches!(err, WavError::UnsupportedCodec(_)));
        let err = decode_wav(&header(6, 1, 8, &[0])).unwrap_err();
        assert!(matches!(err, WavError::UnsupportedCodec(_)));
    }
}
