//! Recording files.
//!
//! CSV layout (one header line per field, then one row per time step):
//!
//! ```text
//! patient_id,P001
//! sample_rate_hz,256
//! channels,FP1,FP2,F7
//! 12.5,-3.25,0.5
//! ...
//! ```
//!
//! Packed binary layout, all little-endian: magic `EEGR`, `u16` version,
//! `u8` sample width (4 or 8 bytes), `u16`-prefixed UTF-8 patient id, `f64`
//! sample rate, `u16` channel count, each name `u16`-prefixed, `u64` samples
//! per channel, then samples channel-major.

use std::path::Path;

use crate::error::{Error, Result};

pub const RECORDING_MAGIC: &[u8; 4] = b"EEGR";
pub const RECORDING_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    /// `channels × time`.
    pub samples: Vec<Vec<f64>>,
}

/// Sample width used by the packed binary format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleWidth {
    F32,
    F64,
}

impl EegRecording {
    pub fn new(
        patient_id: String,
        sample_rate_hz: f64,
        channels: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!("sample rate {sample_rate_hz} must be positive")));
        }
        if channels.len() != samples.len() {
            return Err(Error::Shape(format!(
                "{} channel names for {} sample rows",
                channels.len(),
                samples.len()
            )));
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|s| s.len() != first.len()) {
                return Err(Error::Shape("channels differ in length".into()));
            }
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("recording contains non-finite samples".into()));
        }
        Ok(EegRecording {
            patient_id,
            sample_rate_hz,
            channels,
            samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.eq_ignore_ascii_case(name))
    }
}

/// Loads a recording, choosing the binary or CSV parser from the first bytes.
pub fn load_recording(path: &Path) -> Result<EegRecording> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RECORDING_MAGIC) {
        decode_binary(&bytes, path)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::parse(path, 1, "not UTF-8 text and no EEGR magic"))?;
        parse_csv(&text, path)
    }
}

pub fn save_recording_csv(rec: &EegRecording, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("patient_id,{}\n", rec.patient_id));
    out.push_str(&format!("sample_rate_hz,{}\n", rec.sample_rate_hz));
    out.push_str("channels");
    for c in &rec.channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in 0..rec.n_samples() {
        for (i, ch) in rec.samples.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            // `{}` on f64 prints the shortest string that round-trips exactly.
            out.push_str(&format!("{}", ch[t]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, path: &Path) -> Result<EegRecording> {
    let mut lines = text.lines();
    let mut field = |line_no: usize, key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, format!("missing {key} header line")))?;
        let parts: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if parts.first().map(String::as_str) != Some(key) {
            return Err(Error::parse(path, line_no, format!("expected {key} header line")));
        }
        Ok(parts[1..].to_vec())
    };
    let pid = field(1, "patient_id")?;
    if pid.len() != 1 || pid[0].is_empty() {
        return Err(Error::parse(path, 1, "patient_id needs exactly one value"));
    }
    let fs = field(2, "sample_rate_hz")?;
    let fs: f64 = match fs.as_slice() {
        [v] => v
            .parse()
            .ok()
            .filter(|f: &f64| f.is_finite() && *f > 0.0)
            .ok_or_else(|| Error::parse(path, 2, format!("bad sample rate {v:?}")))?,
        _ => return Err(Error::parse(path, 2, "sample_rate_hz needs exactly one value")),
    };
    let channels = field(3, "channels")?;
    if channels.is_empty() || channels.iter().any(String::is_empty) {
        return Err(Error::parse(path, 3, "channel list is empty or has blank names"));
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); channels.len()];
    for (i, line) in lines.enumerate() {
        let line_no = i + 4;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != channels.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("{} columns, header lists {} channels", vals.len(), channels.len()),
            ));
        }
        for (c, v) in vals.iter().enumerate() {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad sample {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite sample {v:?}")));
            }
            samples[c].push(x);
        }
    }
    EegRecording::new(pid[0].clone(), fs, channels, samples)
}

pub fn encode_binary(rec: &EegRecording, width: SampleWidth) -> Vec<u8> {
    let n = rec.n_samples();
    let w = match width {
        SampleWidth::F32 => 4u8,
        SampleWidth::F64 => 8u8,
    };
    let mut out = Vec::with_capacity(64 + rec.channels.len() * n * w as usize);
    out.extend_from_slice(RECORDING_MAGIC);
    out.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    out.push(w);
    let put_str = |out: &mut Vec<u8>, s: &str| {
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    put_str(&mut out, &rec.patient_id);
    out.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(rec.channels.len() as u16).to_le_bytes());
    for c in &rec.channels {
        put_str(&mut out, c);
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for ch in &rec.samples {
        for v in ch {
            match width {
                SampleWidth::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
                SampleWidth::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

pub fn save_recording_binary(rec: &EegRecording, path: &Path, width: SampleWidth) -> Result<()> {
    std::fs::write(path, encode_binary(rec, width)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(self.path, 0, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::parse(self.path, 0, "invalid UTF-8 in header"))
    }
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<EegRecording> {
    let mut c = Cursor { buf: bytes, pos: 0, path };
    if c.take(4)? != RECORDING_MAGIC {
        return Err(Error::parse(path, 0, "missing EEGR magic"));
    }
    let version = c.u16()?;
    if version != RECORDING_VERSION {
        return Err(Error::parse(path, 0, format!("unsupported recording version {version}")));
    }
    let width = c.take(1)?[0];
    if width != 4 && width != 8 {
        return Err(Error::parse(path, 0, format!("unsupported sample width {width}")));
    }
    let pid = c.string()?;
    let fs = c.f64()?;
    let n_ch = c.u16()? as usize;
    let channels = (0..n_ch).map(|_| c.string()).collect::<Result<Vec<_>>>()?;
    let n = c.u64()? as usize;
    let need = n_ch
        .checked_mul(n)
        .and_then(|v| v.checked_mul(width as usize))
        .ok_or_else(|| Error::parse(path, 0, "sample count overflows"))?;
    let body = c.take(need)?;
    if c.pos != bytes.len() {
        return Err(Error::parse(path, 0, "trailing bytes after sample block"));
    }
    let samples: Vec<Vec<f64>> = body
        .chunks_exact((n * width as usize).max(1))
        .take(n_ch)
        .map(|ch| match width {
            4 => ch
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            _ => ch
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        })
        .collect();
    let samples = if n == 0 { vec![Vec::new(); n_ch] } else { samples };
    EegRecording::new(pid, fs, channels, samples)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}
