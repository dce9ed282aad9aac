//! PTAG binary tag files and the `time_ps,channel` CSV alternative.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! header, 32 bytes:
//!   0  magic "PTAG"
//!   4  u16 version (1)
//!   6  u8  channel count (5)
//!   7  u8  reserved
//!   8  u64 repetition period in femtoseconds
//!  16  5 × u8 channel map: role of raw channel i
//!  21  11 bytes zero padding
//! record, 12 bytes:
//!   0  u64 time_ps
//!   8  u8  channel
//!   9  u8  flags (0)
//!  10  u16 reserved (0)
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Channel, TagRecord};

pub const MAGIC: [u8; 4] = *b"PTAG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 12;
const N_CHANNELS: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFileHeader {
    pub version: u16,
    /// Repetition period in femtoseconds.
    pub rep_period_fs: u64,
    /// Role of each raw channel number.
    pub channel_map: [Channel; 5],
}

impl TagFileHeader {
    pub fn new(rep_period_fs: u64) -> Self {
        TagFileHeader {
            version: VERSION,
            rep_period_fs,
            channel_map: Channel::ALL,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6] = N_CHANNELS;
        b[8..16].copy_from_slice(&self.rep_period_fs.to_le_bytes());
        for (i, c) in self.channel_map.iter().enumerate() {
            b[16 + i] = *c as u8;
        }
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(Error::format(0, "bad magic"));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        if b[6] != N_CHANNELS {
            return Err(Error::format(6, format!("expected 5 channels, found {}", b[6])));
        }
        let rep_period_fs = u64::from_le_bytes(b[8..16].try_into().unwrap());
        if rep_period_fs == 0 {
            return Err(Error::format(8, "zero repetition period"));
        }
        let mut channel_map = Channel::ALL;
        let mut seen = [false; 5];
        for (i, slot) in channel_map.iter_mut().enumerate() {
            let role = Channel::try_from(b[16 + i])
                .map_err(|v| Error::format(16 + i as u64, format!("unknown channel role {v}")))?;
            if std::mem::replace(&mut seen[role as usize], true) {
                return Err(Error::format(16 + i as u64, "channel map is not a permutation"));
            }
            *slot = role;
        }
        Ok(TagFileHeader {
            version,
            rep_period_fs,
            channel_map,
        })
    }
}

/// Streaming PTAG writer.
pub struct TagWriter<W: Write> {
    out: W,
    last: u64,
    raw: [u8; 5],
}

impl<W: Write> TagWriter<W> {
    pub fn new(mut out: W, header: &TagFileHeader) -> Result<Self> {
        out.write_all(&header.to_bytes())?;
        let mut raw = [0u8; 5];
        for (i, role) in header.channel_map.iter().enumerate() {
            raw[*role as usize] = i as u8;
        }
        Ok(TagWriter { out, last: 0, raw })
    }

    pub fn write(&mut self, r: TagRecord) -> Result<()> {
        if r.time_ps < self.last {
            return Err(Error::Domain(format!(
                "timestamp {} after {}",
                r.time_ps, self.last
            )));
        }
        self.last = r.time_ps;
        let mut b = [0u8; RECORD_LEN];
        b[0..8].copy_from_slice(&r.time_ps.to_le_bytes());
        b[8] = self.raw[r.channel as usize];
        self.out.write_all(&b)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming PTAG reader; yields records in file order and checks channel
/// range and timestamp order.
pub struct TagReader<R: Read> {
    input: R,
    header: TagFileHeader,
    buf: Vec<u8>,
    pos: usize,
    len: usize,
    offset: u64,
    last: u64,
    done: bool,
}

const READ_CHUNK: usize = RECORD_LEN << 16;

impl<R: Read> TagReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut h = [0u8; HEADER_LEN];
        read_full(&mut input, &mut h).and_then(|n| {
            if n < HEADER_LEN {
                Err(Error::format(n as u64, "truncated header"))
            } else {
                Ok(())
            }
        })?;
        Ok(TagReader {
            input,
            header: TagFileHeader::from_bytes(&h)?,
            buf: vec![0; READ_CHUNK],
            pos: 0,
            len: 0,
            offset: HEADER_LEN as u64,
            last: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &TagFileHeader {
        &self.header
    }

    fn refill(&mut self) -> Result<()> {
        let rem = self.len - self.pos;
        self.buf.copy_within(self.pos..self.len, 0);
        let n = read_full(&mut self.input, &mut self.buf[rem..])?;
        self.pos = 0;
        self.len = rem + n;
        Ok(())
    }

    fn next_record(&mut self) -> Result<Option<TagRecord>> {
        if self.len - self.pos < RECORD_LEN {
            self.refill()?;
            match self.len {
                0 => return Ok(None),
                n if n < RECORD_LEN => {
                    return Err(Error::format(self.offset, "truncated record"));
                }
                _ => {}
            }
        }
        let b = &self.buf[self.pos..self.pos + RECORD_LEN];
        let time_ps = u64::from_le_bytes(b[0..8].try_into().unwrap());
        let raw = b[8];
        let offset = self.offset;
        self.pos += RECORD_LEN;
        self.offset += RECORD_LEN as u64;
        let channel = *self
            .header
            .channel_map
            .get(raw as usize)
            .ok_or_else(|| Error::format(offset, format!("unknown channel {raw}")))?;
        if time_ps < self.last {
            return Err(Error::format(
                offset,
                format!("timestamp regression {} < {}", time_ps, self.last),
            ));
        }
        self.last = time_ps;
        Ok(Some(TagRecord { time_ps, channel }))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.next_record().transpose();
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}

/// Parses `time_ps,channel` lines; a non-numeric first line is a header.
/// Offsets in errors are byte offsets of the offending line.
pub fn read_csv_tags<R: BufRead>(input: R) -> impl Iterator<Item = Result<TagRecord>> {
    let mut offset = 0u64;
    let mut last = 0u64;
    let mut first = true;
    let mut failed = false;
    input.split(b'\n').filter_map(move |line| {
        if failed {
            return None;
        }
        let at = offset;
        let r = (|| {
            let line = line?;
            offset += line.len() as u64 + 1;
            let text = String::from_utf8_lossy(&line);
            let text = text.trim();
            let is_first = std::mem::replace(&mut first, false);
            if text.is_empty() {
                return Ok(None);
            }
            let (t, c) = text
                .split_once(',')
                .ok_or_else(|| Error::format(at, "expected `time_ps,channel`"))?;
            let (t, c) = (t.trim(), c.trim());
            let time_ps = match t.parse::<u64>() {
                Ok(v) => v,
                Err(_) if is_first => return Ok(None),
                Err(_) => return Err(Error::format(at, format!("bad timestamp `{t}`"))),
            };
            let raw: u8 = c
                .parse()
                .map_err(|_| Error::format(at, format!("bad channel `{c}`")))?;
            let channel = Channel::try_from(raw)
                .map_err(|v| Error::format(at, format!("unknown channel {v}")))?;
            if time_ps < last {
                return Err(Error::format(
                    at,
                    format!("timestamp regression {time_ps} < {last}"),
                ));
            }
            last = time_ps;
            Ok(Some(TagRecord { time_ps, channel }))
        })();
        match r {
            Ok(v) => v.map(Ok),
            Err(e) => {
                failed = true;
                Some(Err(e))
            }
        }
    })
}

pub fn write_csv_tags<W: Write>(mut out: W, records: &[TagRecord]) -> Result<()> {
    writeln!(out, "time_ps,channel")?;
    for r in records {
        writeln!(out, "{},{}", r.time_ps, r.channel as u8)?;
    }
    out.flush()?;
    Ok(())
}

/// Tag source opened from a path; `.csv` files are parsed as CSV, anything
/// else as PTAG.
pub enum TagSource {
    Binary(TagReader<BufReader<File>>),
    Csv(Box<dyn Iterator<Item = Result<TagRecord>>>),
}

impl TagSource {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            Ok(TagSource::Csv(Box::new(read_csv_tags(BufReader::new(f)))))
        } else {
            Ok(TagSource::Binary(TagReader::new(BufReader::with_capacity(1 << 20, f))?))
        }
    }

    /// Repetition period from the file header, if the format carries one.
    pub fn rep_period_fs(&self) -> Option<u64> {
        match self {
            TagSource::Binary(r) => Some(r.header().rep_period_fs),
            TagSource::Csv(_) => None,
        }
    }
}

impl Iterator for TagSource {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            TagSource::Binary(r) => r.next(),
            TagSource::Csv(r) => r.next(),
        }
    }
}

/// Opens `path` for buffered PTAG writing.
pub fn create_ptag(path: &Path, header: &TagFileHeader) -> Result<TagWriter<BufWriter<File>>> {
    TagWriter::new(BufWriter::with_capacity(1 << 20, File::create(path)?), header)
}
