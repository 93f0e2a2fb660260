//! Minimal RIFF/WAVE reader and writer for 16-bit PCM.

use crate::error::{Error, Result};

const PCM: u16 = 1;
const EXTENSIBLE: u16 = 0xFFFE;

/// Decoded PCM: mono samples in `[-1, 1)` and the source rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedWav {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Wav("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Decodes a 16-bit PCM WAV, averaging channels to mono and dividing by 32768.
pub fn decode_wav(bytes: &[u8]) -> Result<DecodedWav> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"RIFF" {
        return Err(Error::Wav("missing RIFF header".into()));
    }
    let _riff_len = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(Error::Wav("not a WAVE file".into()));
    }

    let mut format: Option<(u16, u32)> = None;
    loop {
        if r.remaining() == 0 {
            return Err(Error::Wav(if format.is_none() {
                "missing fmt chunk".into()
            } else {
                "missing data chunk".into()
            }));
        }
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        match id {
            b"fmt " => {
                let body = r.take(len)?;
                format = Some(parse_fmt(body)?);
            }
            b"data" => {
                let (channels, sample_rate) =
                    format.ok_or_else(|| Error::Wav("data chunk before fmt chunk".into()))?;
                let body = r.take(len)?;
                let frame_bytes = 2 * channels as usize;
                if body.len() % frame_bytes != 0 {
                    return Err(Error::Wav("unexpected end of data".into()));
                }
                let scale = 1.0 / (32768.0 * f64::from(channels));
                let samples = body
                    .chunks_exact(frame_bytes)
                    .map(|frame| {
                        let sum: i32 = frame
                            .chunks_exact(2)
                            .map(|s| i32::from(i16::from_le_bytes([s[0], s[1]])))
                            .sum();
                        f64::from(sum) * scale
                    })
                    .collect();
                return Ok(DecodedWav {
                    samples,
                    sample_rate,
                    channels,
                });
            }
            _ => {
                r.take(len)?;
            }
        }
        if len % 2 == 1 && r.remaining() > 0 {
            r.take(1)?;
        }
    }
}

fn parse_fmt(body: &[u8]) -> Result<(u16, u32)> {
    let mut r = Reader { bytes: body, pos: 0 };
    let mut tag = r.u16()?;
    let channels = r.u16()?;
    let sample_rate = r.u32()?;
    let _byte_rate = r.u32()?;
    let _block_align = r.u16()?;
    let bits = r.u16()?;
    if tag == EXTENSIBLE {
        let _cb_size = r.u16()?;
        let _valid_bits = r.u16()?;
        let _mask = r.u32()?;
        let guid = r.take(16)?;
        tag = u16::from_le_bytes([guid[0], guid[1]]);
    }
    if tag != PCM {
        return Err(Error::Wav(format!("unsupported codec (format tag {tag:#06x})")));
    }
    if bits != 16 {
        return Err(Error::Wav(format!(
            "unsupported bit depth {bits}; only 16-bit PCM is accepted"
        )));
    }
    if channels == 0 || sample_rate == 0 {
        return Err(Error::Wav("malformed fmt chunk".into()));
    }
    Ok((channels, sample_rate))
}

/// Quantizes `[-1, 1]` samples to 16-bit integers (round half away, clamped).
pub fn quantize_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes mono samples as a canonical 44-byte-header 16-bit PCM WAV.
pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    encode_wav_i16(&samples.iter().map(|&x| quantize_i16(x)).collect::<Vec<_>>(), 1, sample_rate)
}

/// Encodes interleaved integer PCM.
pub fn encode_wav_i16(interleaved: &[i16], channels: u16, sample_rate: u32) -> Vec<u8> {
    let data_len = (interleaved.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2 * u32::from(channels)).to_le_bytes());
    out.extend_from_slice(&(2 * channels).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_square_wave() {
        let pcm: Vec<i16> = (0..64).map(|i| if (i / 8) % 2 == 0 { 32767 } else { -32767 }).collect();
        let wav = decode_wav(&encode_wav_i16(&pcm, 1, 8000)).unwrap();
        assert_eq!(wav.sample_rate, 8000);
        for (s, p) in wav.samples.iter().zip(&pcm) {
            assert_eq!(*s, f64::from(*p) / 32768.0);
        }
        assert_eq!(wav.samples[0], 32767.0 / 32768.0);
    }

    #[test]
    fn opposite_stereo_channels_average_to_silence() {
        let pcm: Vec<i16> = (0..100).flat_map(|_| [1000i16, -1000]).collect();
        let wav = decode_wav(&encode_wav_i16(&pcm, 2, 16000)).unwrap();
        assert_eq!(wav.samples.len(), 100);
        assert!(wav.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn truncated_file_reports_end_of_data() {
        let bytes = encode_wav(&[0.1; 50], 8000);
        let err = decode_wav(&bytes[..bytes.len() - 7]).unwrap_err();
        assert!(err.to_string().contains("unexpected end of data"), "{err}");
        let err = decode_wav(&bytes[..20]).unwrap_err();
        assert!(err.to_string().contains("unexpected end of data"), "{err}");
    }

    #[test]
    fn rejects_non_pcm16() {
        let mut bytes = encode_wav(&[0.0; 4], 8000);
        bytes[34] = 24; // bits per sample
        assert!(decode_wav(&bytes).unwrap_err().to_string().contains("bit depth"));
        let mut bytes = encode_wav(&[0.0; 4], 8000);
        bytes[20] = 3; // IEEE float
        assert!(decode_wav(&bytes).unwrap_err().to_string().contains("codec"));
        assert!(decode_wav(b"RIFX\0\0\0\0WAVE").is_err());
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = encode_wav(&[0.5, -0.25], 8000);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        assert_eq!(decode_wav(&bytes).unwrap().samples, vec![0.5, -0.25]);
    }
}
