//! Synchronized multichannel sample buffers and their on-disk format.
//!
//! File layout, little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `OOGW`                   |
//! | 4      | 4    | u32 version (1)                |
//! | 8      | 4    | u32 channel count              |
//! | 12     | 4    | u32 sample rate, Hz            |
//! | 16     | 8    | u64 samples per channel        |
//! | 24     | ...  | f32 samples, frame-interleaved |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"OOGW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"OOGW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported recording version {0}")]
    VersionMismatch(u32),
    #[error("truncated payload: header promises {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("invalid recording: {0}")]
    Invalid(String),
}

impl RecordingError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u8 {
        match self {
            RecordingError::Io(_) => 10,
            RecordingError::BadMagic(_) => 11,
            RecordingError::VersionMismatch(_) => 12,
            RecordingError::TruncatedPayload { .. } => 13,
            RecordingError::TruncatedHeader => 14,
            RecordingError::Invalid(_) => 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelRecording {
    pub sample_rate: f64,
    pub channels: Vec<Vec<f32>>,
}

impl MultiChannelRecording {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f32>>) -> Result<Self, RecordingError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(RecordingError::Invalid(format!(
                "sample rate {sample_rate} must be positive"
            )));
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(RecordingError::Invalid("channel buffers differ in length".into()));
            }
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RecordingError::Invalid("non-finite sample".into()));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn samples_per_channel(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.samples_per_channel() as f64 / self.sample_rate
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RecordingError> {
        let rate = self.sample_rate;
        if rate.fract() != 0.0 || rate > u32::MAX as f64 {
            return Err(RecordingError::Invalid(format!(
                "sample rate {rate} is not representable as a u32 Hz value"
            )));
        }
        let n = self.samples_per_channel();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.channel_count() as u32).to_le_bytes())?;
        w.write_all(&(rate as u32).to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        let mut frame = Vec::with_capacity(4 * self.channel_count());
        for i in 0..n {
            frame.clear();
            for ch in &self.channels {
                frame.extend_from_slice(&ch[i].to_le_bytes());
            }
            w.write_all(&frame)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RecordingError> {
        let mut header = [0u8; HEADER_LEN];
        read_fully(&mut r, &mut header).and_then(|got| {
            if got < HEADER_LEN {
                // a short file that still shows the wrong magic is reported as such
                if got >= 4 && &header[..4] != MAGIC {
                    return Err(RecordingError::BadMagic(header[..4].try_into().unwrap()));
                }
                Err(RecordingError::TruncatedHeader)
            } else {
                Ok(())
            }
        })?;
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(RecordingError::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(RecordingError::VersionMismatch(version));
        }
        let channel_count = u32_at(8) as usize;
        let rate = u32_at(12);
        let n = u64::from_le_bytes(header[16..24].try_into().unwrap());

        let expected = n
            .checked_mul(channel_count as u64)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| RecordingError::Invalid("header sizes overflow".into()))?;
        let mut payload = Vec::new();
        r.take(expected).read_to_end(&mut payload)?;
        if (payload.len() as u64) < expected {
            return Err(RecordingError::TruncatedPayload {
                expected,
                found: payload.len() as u64,
            });
        }

        let n = n as usize;
        let mut channels = vec![Vec::with_capacity(n); channel_count];
        for frame in payload.chunks_exact(4 * channel_count.max(1)).take(n) {
            for (ch, bytes) in channels.iter_mut().zip(frame.chunks_exact(4)) {
                ch.push(f32::from_le_bytes(bytes.try_into().unwrap()));
            }
        }
        Self::new(rate as f64, channels)
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, RecordingError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

pub fn write_recording(recording: &MultiChannelRecording, path: impl AsRef<Path>) -> Result<(), RecordingError> {
    let mut w = BufWriter::new(File::create(path)?);
    recording.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<MultiChannelRecording, RecordingError> {
    MultiChannelRecording::read_from(BufReader::new(File::open(path)?))
}
