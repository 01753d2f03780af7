use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavSpec};
use serde::{Deserialize, Serialize};

use super::{AudioError, MultichannelAudio, Result};

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitDepth {
    Int16,
    Int24,
    Int32,
    Float32,
}

impl BitDepth {
    pub fn bits(self) -> u16 {
        match self {
            BitDepth::Int16 => 16,
            BitDepth::Int24 => 24,
            BitDepth::Int32 => 32,
            BitDepth::Float32 => 32,
        }
    }
}

/// Outcome of a write. `clipped` counts samples outside `[-1, 1]` that were
/// hard-limited before encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub clipped: usize,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelAudio> {
    let file = File::open(path.as_ref())?;
    read_from(BufReader::new(file))
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<MultichannelAudio> {
    read_from(Cursor::new(bytes))
}

fn map_read_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => {
            AudioError::UnsupportedEncoding("compressed or unknown format tag".into())
        }
        hound::Error::IoError(io) => AudioError::MalformedWav(io.to_string()),
        other => AudioError::MalformedWav(other.to_string()),
    }
}

fn read_from<R: Read>(reader: R) -> Result<MultichannelAudio> {
    let mut wav = hound::WavReader::new(reader).map_err(map_read_err)?;
    let spec = wav.spec();
    let n_channels = usize::from(spec.channels);
    if n_channels == 0 {
        return Err(AudioError::MalformedWav("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => wav
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_read_err)?,
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            wav.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()
                .map_err(map_read_err)?
        }
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{bits}-bit {format:?} samples"
            )))
        }
    };
    if interleaved.len() % n_channels != 0 {
        return Err(AudioError::MalformedWav(
            "data chunk ends mid-frame".into(),
        ));
    }

    let frames = interleaved.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for frame in interleaved.chunks_exact(n_channels) {
        for (ch, &s) in channels.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    MultichannelAudio::new(channels, spec.sample_rate)
}

pub fn write_wav(
    audio: &MultichannelAudio,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<WriteReport> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    let report = write_to(audio, &mut out, depth)?;
    out.flush()?;
    Ok(report)
}

pub fn write_wav_bytes(audio: &MultichannelAudio, depth: BitDepth) -> Result<(Vec<u8>, WriteReport)> {
    let mut cursor = Cursor::new(Vec::new());
    let report = write_to(audio, &mut cursor, depth)?;
    Ok((cursor.into_inner(), report))
}

fn write_to<W: Write + Seek>(
    audio: &MultichannelAudio,
    out: W,
    depth: BitDepth,
) -> Result<WriteReport> {
    let channels = u16::try_from(audio.num_channels())
        .map_err(|_| AudioError::Invalid("too many channels for WAV".into()))?;
    let spec = WavSpec {
        channels,
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: depth.bits(),
        sample_format: match depth {
            BitDepth::Float32 => SampleFormat::Float,
            _ => SampleFormat::Int,
        },
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => AudioError::IoFailure(io),
        other => AudioError::IoFailure(std::io::Error::other(other.to_string())),
    };

    let mut writer = hound::WavWriter::new(out, spec).map_err(io_err)?;
    let mut report = WriteReport::default();
    let full_scale = f64::from(1u32 << (depth.bits() - 1));
    for i in 0..audio.num_samples() {
        for ch in audio.channels() {
            let raw = ch[i];
            if !raw.is_finite() {
                return Err(AudioError::Invalid(format!("non-finite sample at index {i}")));
            }
            let s = if raw.abs() > 1.0 {
                report.clipped += 1;
                raw.clamp(-1.0, 1.0)
            } else {
                raw
            };
            match depth {
                BitDepth::Float32 => writer.write_sample(s as f32),
                _ => {
                    let q = (s * full_scale).round().clamp(-full_scale, full_scale - 1.0);
                    writer.write_sample(q as i32)
                }
            }
            .map_err(io_err)?;
        }
    }
    writer.finalize().map_err(io_err)?;
    if report.clipped > 0 {
        tracing::warn!(clipped = report.clipped, "samples outside [-1, 1] were clipped");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_signal(channels: usize, n: usize) -> MultichannelAudio {
        let chans = (0..channels)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let t = i as f64 / 16000.0;
                        // f32-representable so the float path can be bit-exact
                        f64::from((0.8 * (2.0 * std::f64::consts::PI * (200.0 + 50.0 * c as f64) * t).sin()) as f32)
                    })
                    .collect()
            })
            .collect();
        MultichannelAudio::new(chans, 16000).unwrap()
    }

    #[test]
    fn seven_channel_header_echo() {
        let audio = test_signal(7, 16000);
        let (bytes, _) = write_wav_bytes(&audio, BitDepth::Int16).unwrap();
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back.num_channels(), 7);
        assert_eq!(back.num_samples(), 16000);
        assert_eq!(back.sample_rate_hz(), 16000);
    }

    #[test]
    fn int16_full_scale_normalization() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(32767i16).unwrap();
        w.write_sample(-32768i16).unwrap();
        w.finalize().unwrap();
        let audio = read_wav_bytes(cursor.get_ref()).unwrap();
        assert_eq!(audio.channel(0)[0], 32767.0 / 32768.0);
        assert_eq!(audio.channel(0)[1], -1.0);
    }

    #[test]
    fn float_round_trip_is_lossless() {
        let audio = test_signal(3, 4000);
        let (bytes, report) = write_wav_bytes(&audio, BitDepth::Float32).unwrap();
        assert_eq!(report.clipped, 0);
        assert_eq!(read_wav_bytes(&bytes).unwrap(), audio);
    }

    #[test]
    fn integer_round_trips_within_quantization_bound() {
        let audio = test_signal(2, 4000);
        for depth in [BitDepth::Int16, BitDepth::Int24, BitDepth::Int32] {
            let (bytes, _) = write_wav_bytes(&audio, depth).unwrap();
            let back = read_wav_bytes(&bytes).unwrap();
            let bound = 2f64.powi(-(i32::from(depth.bits()) - 1));
            for (a, b) in audio.channels().iter().zip(back.channels()) {
                let err = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(err <= bound, "{depth:?}: {err} > {bound}");
            }
        }
    }

    #[test]
    fn out_of_range_samples_are_clipped_and_counted() {
        let audio = MultichannelAudio::mono(vec![1.5, -2.0, 0.25, 1.0], 16000).unwrap();
        let (bytes, report) = write_wav_bytes(&audio, BitDepth::Float32).unwrap();
        assert_eq!(report.clipped, 2);
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back.channel(0), &[1.0, -1.0, 0.25, 1.0]);
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let audio = MultichannelAudio::mono(vec![0.0, f64::NAN], 16000).unwrap();
        assert!(write_wav_bytes(&audio, BitDepth::Int16).is_err());
    }

    #[test]
    fn truncated_data_chunk_is_malformed() {
        let audio = test_signal(2, 1000);
        let (bytes, _) = write_wav_bytes(&audio, BitDepth::Int16).unwrap();
        let cut = &bytes[..bytes.len() - 301];
        assert!(matches!(read_wav_bytes(cut), Err(AudioError::MalformedWav(_))));
        assert!(matches!(read_wav_bytes(&bytes[..20]), Err(AudioError::MalformedWav(_))));
        assert!(matches!(read_wav_bytes(b"not a wav file at all"), Err(AudioError::MalformedWav(_))));
    }

    #[test]
    fn compressed_format_is_unsupported() {
        let audio = test_signal(1, 100);
        let (mut bytes, _) = write_wav_bytes(&audio, BitDepth::Int16).unwrap();
        // fmt chunk format tag lives at byte 20; 0x0055 is MPEG layer 3
        bytes[20] = 0x55;
        bytes[21] = 0x00;
        assert!(matches!(
            read_wav_bytes(&bytes),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let audio = test_signal(2, 800);
        write_wav(&audio, &path, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), audio);
    }
}
