use std::fmt::Write;

use super::{DspError, MelSpectrogramDb};

/// 8-bit grayscale raster, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses binary PGM with maxval 255 and optional `#` comments.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, DspError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(DspError::MalformedImage("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(DspError::MalformedImage(format!("magic {:?}", fields[0])));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| DspError::MalformedImage(format!("bad {what} {s:?}")))
        };
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        if parse(&fields[3], "maxval")? != 255 {
            return Err(DspError::MalformedImage(
                "only maxval 255 is supported".into(),
            ));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let expected = width * height;
        if bytes.len() < pos || bytes.len() - pos != expected {
            return Err(DspError::MalformedImage(format!(
                "expected {expected} pixel bytes, found {}",
                bytes.len().saturating_sub(pos)
            )));
        }
        Ok(Self {
            width,
            height,
            pixels: bytes[pos..].to_vec(),
        })
    }
}

/// Maps the dB matrix onto 0..=255 over the kept dynamic range, with
/// band 0 on the bottom row.
pub fn render_spectrogram(mel_db: &MelSpectrogramDb) -> GrayImage {
    let bands = &mel_db.bands;
    let (height, width) = (bands.rows(), bands.cols());
    let range = -mel_db.floor_db;
    let lo = bands.max() - range;
    let mut pixels = Vec::with_capacity(width * height);
    for r in (0..height).rev() {
        for &v in bands.row(r) {
            let p = (255.0 * (v - lo) / range).round().clamp(0.0, 255.0);
            pixels.push(p as u8);
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}

pub fn export_spectrogram_pgm(mel_db: &MelSpectrogramDb) -> Vec<u8> {
    render_spectrogram(mel_db).to_pgm()
}

/// One line per mel band (band 0 first), values with six decimals.
pub fn mel_db_to_csv(mel_db: &MelSpectrogramDb) -> String {
    let mut out = String::new();
    for r in 0..mel_db.bands.rows() {
        for (i, v) in mel_db.bands.row(r).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    out
}
