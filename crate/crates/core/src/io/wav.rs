//! Mono RIFF/WAVE audio: 16- and 24-bit integer PCM and 32-bit float.
//!
//! Integer samples are scaled by `1 / 2^(bits-1)`, so full-scale positive
//! 16-bit 32767 reads as 0.99997. Every format fault reports the byte
//! offset in the file where it was detected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{param, Error, Result};
use crate::signal::SampleBlock;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl Encoding {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            Self::Pcm16 => 2,
            Self::Pcm24 => 3,
            Self::Float32 => 4,
        }
    }

    fn format_tag(self) -> u16 {
        match self {
            Self::Pcm16 | Self::Pcm24 => FORMAT_PCM,
            Self::Float32 => FORMAT_FLOAT,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::Pcm16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            Self::Pcm24 => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            Self::Float32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::Pcm16 => {
                let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            Self::Pcm24 => {
                let q = (v * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                out.extend_from_slice(&q.to_le_bytes()[..3]);
            }
            Self::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavSpec {
    pub sample_rate_hz: u32,
    pub encoding: Encoding,
    pub n_samples: usize,
}

fn fault<T>(offset: u64, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset,
        message: message.into(),
    })
}

/// Tracks the byte position so faults can name it.
struct Cursor<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Cursor<R> {
    /// Reads exactly `buf.len()` bytes; a short read is a truncation fault.
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    return fault(
                        self.pos + got as u64,
                        format!(
                            "file truncated inside {what}: {} of {} bytes",
                            got,
                            buf.len()
                        ),
                    )
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.pos += buf.len() as u64;
        Ok(())
    }

    fn skip(&mut self, n: u64, what: &str) -> Result<()> {
        let copied = std::io::copy(&mut (&mut self.inner).take(n), &mut std::io::sink())?;
        if copied < n {
            return fault(self.pos + copied, format!("file truncated inside {what}"));
        }
        self.pos += n;
        Ok(())
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0; 2];
        self.fill(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn tag(&mut self, what: &str) -> Result<[u8; 4]> {
        let mut b = [0; 4];
        self.fill(&mut b, what)?;
        Ok(b)
    }
}

/// Incremental reader that hands out the data chunk block by block.
pub struct WavReader<R> {
    cur: Cursor<R>,
    spec: WavSpec,
    remaining: usize,
}

impl WavReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> WavReader<R> {
    /// Parses the header up to the start of the sample data.
    pub fn new(inner: R) -> Result<Self> {
        let mut cur = Cursor { inner, pos: 0 };
        if &cur.tag("RIFF header")? != b"RIFF" {
            return fault(0, "not a RIFF file");
        }
        cur.u32("RIFF header")?;
        if &cur.tag("RIFF header")? != b"WAVE" {
            return fault(8, "RIFF form is not WAVE");
        }

        let mut fmt: Option<(u32, Encoding)> = None;
        loop {
            let chunk_at = cur.pos;
            let id = cur.tag("chunk header")?;
            let size = cur.u32("chunk header")?;
            match &id {
                b"fmt " => {
                    if size < 16 {
                        return fault(
                            chunk_at + 4,
                            format!("fmt chunk of {size} bytes is too short"),
                        );
                    }
                    let tag_at = cur.pos;
                    let mut tag = cur.u16("fmt chunk")?;
                    let channels = cur.u16("fmt chunk")?;
                    let rate = cur.u32("fmt chunk")?;
                    cur.u32("fmt chunk")?;
                    let align = cur.u16("fmt chunk")?;
                    let bits_at = cur.pos;
                    let bits = cur.u16("fmt chunk")?;
                    let mut consumed = 16u64;
                    if tag == FORMAT_EXTENSIBLE {
                        if size < 40 {
                            return fault(tag_at, "extensible format without its extension");
                        }
                        cur.skip(8, "fmt extension")?;
                        tag = cur.u16("fmt extension")?;
                        cur.skip(14, "fmt extension")?;
                        consumed = 40;
                    }
                    if channels != 1 {
                        return fault(
                            tag_at + 2,
                            format!("{channels} channels; only mono is supported"),
                        );
                    }
                    if rate == 0 {
                        return fault(tag_at + 4, "sample rate is zero");
                    }
                    let enc = match (tag, bits) {
                        (FORMAT_PCM, 16) => Encoding::Pcm16,
                        (FORMAT_PCM, 24) => Encoding::Pcm24,
                        (FORMAT_FLOAT, 32) => Encoding::Float32,
                        (FORMAT_PCM | FORMAT_FLOAT, b) => {
                            return fault(bits_at, format!("unsupported sample width {b} bits"))
                        }
                        (t, _) => return fault(tag_at, format!("unsupported format tag {t:#06x}")),
                    };
                    if align as usize != enc.bytes_per_sample() {
                        return fault(
                            bits_at - 2,
                            format!("block align {align} does not match {bits}-bit mono"),
                        );
                    }
                    cur.skip(size as u64 - consumed + (size as u64 & 1), "fmt chunk")?;
                    fmt = Some((rate, enc));
                }
                b"data" => {
                    let Some((rate, encoding)) = fmt else {
                        return fault(chunk_at, "data chunk before fmt chunk");
                    };
                    let width = encoding.bytes_per_sample();
                    if size as usize % width != 0 {
                        return fault(
                            chunk_at + 4,
                            format!("data size {size} is not a multiple of {width}-byte samples"),
                        );
                    }
                    let n = size as usize / width;
                    return Ok(Self {
                        cur,
                        spec: WavSpec {
                            sample_rate_hz: rate,
                            encoding,
                            n_samples: n,
                        },
                        remaining: n,
                    });
                }
                _ => cur.skip(size as u64 + (size as u64 & 1), "chunk")?,
            }
        }
    }

    pub fn spec(&self) -> WavSpec {
        self.spec
    }

    /// Next block of at most `max_len` samples; `None` once the data is exhausted.
    pub fn next_block(&mut self, max_len: usize) -> Result<Option<SampleBlock>> {
        if max_len == 0 {
            return param("block length must be positive");
        }
        if self.remaining == 0 {
            return Ok(None);
        }
        let n = max_len.min(self.remaining);
        let width = self.spec.encoding.bytes_per_sample();
        let start = self.cur.pos;
        let mut buf = vec![0u8; n * width];
        self.cur.fill(&mut buf, "sample data")?;
        self.remaining -= n;
        let samples: Vec<f64> = buf
            .chunks_exact(width)
            .map(|b| self.spec.encoding.decode(b))
            .collect();
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return fault(start + (i * width) as u64, "non-finite float sample");
        }
        SampleBlock::new(samples, self.spec.sample_rate_hz as f64).map(Some)
    }
}

/// Reads a whole file. A truncated file is an error, never a short signal.
pub fn read_audio(path: impl AsRef<Path>) -> Result<SampleBlock> {
    let mut r = WavReader::open(path)?;
    if r.spec.n_samples == 0 {
        return fault(r.cur.pos, "data chunk holds no samples");
    }
    let block = r.next_block(r.spec.n_samples)?;
    Ok(block.expect("non-empty data yields a block"))
}

/// Reads a whole file as consecutive blocks of `block_len` samples.
pub fn read_audio_blocks(path: impl AsRef<Path>, block_len: usize) -> Result<Vec<SampleBlock>> {
    let mut r = WavReader::open(path)?;
    let mut out = Vec::new();
    while let Some(b) = r.next_block(block_len)? {
        out.push(b);
    }
    Ok(out)
}

pub fn encode_wav(block: &SampleBlock, encoding: Encoding) -> Result<Vec<u8>> {
    let rate = block.sample_rate_hz();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return param(format!(
            "sample rate {rate} Hz cannot be stored in a WAV header"
        ));
    }
    let width = encoding.bytes_per_sample();
    let data_len = block.len() * width;
    if data_len + 36 > u32::MAX as usize {
        return param("signal too long for a WAV file");
    }
    let mut out = Vec::with_capacity(44 + data_len + 1);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len + (data_len & 1)) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&encoding.format_tag().to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(rate as u32).to_le_bytes());
    out.extend_from_slice(&((rate as usize * width) as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&((width * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in block.samples() {
        encoding.encode(v, &mut out);
    }
    if data_len & 1 == 1 {
        out.push(0);
    }
    Ok(out)
}

pub fn write_audio(path: impl AsRef<Path>, block: &SampleBlock, encoding: Encoding) -> Result<()> {
    let bytes = encode_wav(block, encoding)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
