use super::AudioError;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Multichannel audio exactly as stored in the file, scaled to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RawAudio {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl RawAudio {
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

/// Sample encodings accepted by [`decode_wav`] and produced by [`encode_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl WavEncoding {
    fn bits(self) -> u16 {
        match self {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Pcm24 => 24,
            WavEncoding::Float32 => 32,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AudioError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| AudioError::MalformedHeader(format!("truncated {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, AudioError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, AudioError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    encoding: WavEncoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
}

fn parse_fmt(chunk: &[u8]) -> Result<Format, AudioError> {
    let mut r = Reader {
        bytes: chunk,
        pos: 0,
    };
    let mut tag = r.u16("fmt chunk")?;
    let channels = r.u16("fmt chunk")?;
    let sample_rate = r.u32("fmt chunk")?;
    let _byte_rate = r.u32("fmt chunk")?;
    let block_align = r.u16("fmt chunk")?;
    let bits = r.u16("fmt chunk")?;
    if tag == FORMAT_EXTENSIBLE {
        let cb_size = r.u16("extensible fmt chunk")?;
        if cb_size < 22 {
            return Err(AudioError::MalformedHeader(
                "extensible fmt chunk too short".to_string(),
            ));
        }
        let _valid_bits = r.u16("extensible fmt chunk")?;
        let _channel_mask = r.u32("extensible fmt chunk")?;
        // first two bytes of the subformat GUID carry the real format tag
        tag = r.u16("extensible fmt chunk")?;
    }
    if channels == 0 {
        return Err(AudioError::MalformedHeader("zero channels".to_string()));
    }
    if sample_rate == 0 {
        return Err(AudioError::MalformedHeader("zero sample rate".to_string()));
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => WavEncoding::Pcm16,
        (FORMAT_PCM, 24) => WavEncoding::Pcm24,
        (FORMAT_IEEE_FLOAT, 32) => WavEncoding::Float32,
        (FORMAT_PCM, b) => return Err(AudioError::UnsupportedEncoding(format!("{b}-bit PCM"))),
        (FORMAT_IEEE_FLOAT, b) => {
            return Err(AudioError::UnsupportedEncoding(format!("{b}-bit float")))
        }
        (t, _) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag 0x{t:04X}"
            )))
        }
    };
    let expected_align = channels as usize * (encoding.bits() as usize / 8);
    if block_align as usize != expected_align {
        return Err(AudioError::MalformedHeader(format!(
            "block align {block_align} does not match {channels} channel(s) of {bits}-bit samples"
        )));
    }
    Ok(Format {
        encoding,
        channels,
        sample_rate,
        block_align,
    })
}

/// Decodes a RIFF/WAVE byte stream holding PCM16, PCM24 or float32 samples.
///
/// Integer PCM is scaled by `1 / 2^(bits-1)`; float samples pass through
/// unchanged but must be finite.
pub fn decode_wav(bytes: &[u8]) -> Result<RawAudio, AudioError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(AudioError::MalformedHeader("missing RIFF tag".to_string()));
    }
    let _riff_size = r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(AudioError::MalformedHeader("missing WAVE tag".to_string()));
    }

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while r.pos + 8 <= bytes.len() {
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        let body = r.take(size, "chunk body")?;
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        if size % 2 == 1 && r.pos < bytes.len() {
            r.pos += 1;
        }
    }

    let format =
        format.ok_or_else(|| AudioError::MalformedHeader("missing fmt chunk".to_string()))?;
    let data = data.ok_or_else(|| AudioError::MalformedHeader("missing data chunk".to_string()))?;
    if data.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    let align = format.block_align as usize;
    if data.len() % align != 0 {
        return Err(AudioError::MalformedHeader(format!(
            "data chunk length {} is not a multiple of the frame size {align}",
            data.len()
        )));
    }

    let n_channels = format.channels as usize;
    let frames = data.len() / align;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    let width = align / n_channels;
    for (i, sample) in data.chunks_exact(width).enumerate() {
        let value = match format.encoding {
            WavEncoding::Pcm16 => i16::from_le_bytes([sample[0], sample[1]]) as f64 / 32768.0,
            WavEncoding::Pcm24 => {
                let v = i32::from_le_bytes([0, sample[0], sample[1], sample[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            WavEncoding::Float32 => {
                let v = f32::from_le_bytes([sample[0], sample[1], sample[2], sample[3]]);
                if !v.is_finite() {
                    return Err(AudioError::MalformedHeader(
                        "non-finite float sample".to_string(),
                    ));
                }
                v as f64
            }
        };
        channels[i % n_channels].push(value);
    }
    Ok(RawAudio {
        channels,
        sample_rate: format.sample_rate,
    })
}

/// Writes interleaved channels as a canonical 44-byte-header WAV file.
///
/// Integer encodings round and saturate; all channels must share a length.
pub fn encode_wav(
    channels: &[Vec<f64>],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<Vec<u8>, AudioError> {
    let n_channels = channels.len();
    if n_channels == 0 || n_channels > u16::MAX as usize {
        return Err(AudioError::MalformedHeader(format!(
            "cannot encode {n_channels} channels"
        )));
    }
    if sample_rate == 0 {
        return Err(AudioError::InvalidRate(sample_rate));
    }
    let frames = channels[0].len();
    if channels.iter().any(|c| c.len() != frames) {
        return Err(AudioError::MalformedHeader(
            "channels differ in length".to_string(),
        ));
    }
    let width = encoding.bits() as usize / 8;
    let block_align = n_channels * width;
    let data_len = frames * block_align;
    let tag = match encoding {
        WavEncoding::Float32 => FORMAT_IEEE_FLOAT,
        _ => FORMAT_PCM,
    };

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(n_channels as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&encoding.bits().to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for t in 0..frames {
        for ch in channels {
            let v = ch[t];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                WavEncoding::Pcm24 => {
                    let q = (v * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                    out.extend_from_slice(&q.to_le_bytes()[..3]);
                }
                WavEncoding::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    Ok(out)
}
