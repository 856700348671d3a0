//! Binary time-tag files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 8    | magic `SNSPDTAG`                       |
//! | 8      | 2    | version (u16, currently 1)             |
//! | 10     | 4    | tick numerator (u32, ps)               |
//! | 14     | 4    | tick denominator (u32)                 |
//! | 18     | 2    | channel count (u16)                    |
//! | 20     | 2    | sync channel (i16, -1 if none)         |
//! | 22     | 8    | record count (u64)                     |
//! | 30     | 8*n  | records                                |
//!
//! Each record is one u64 holding `channel | tick << 8`, so on disk the
//! channel byte comes first followed by the 56-bit tick. Records are sorted
//! by tick, ties by channel.
//!
//! [`TagReader`] streams records through a fixed 64 KiB buffer; memory use
//! does not depend on the file size.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{TICK_DENOMINATOR, TICK_NUMERATOR};
use crate::tag::TimeTag;

pub const MAGIC: &[u8; 8] = b"SNSPDTAG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 30;
pub const RECORD_LEN: usize = 8;
pub const MAX_TICK: u64 = (1 << 56) - 1;
const BUFFER_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagFileHeader {
    pub version: u16,
    pub tick_ps_numerator: u32,
    pub tick_ps_denominator: u32,
    pub channel_count: u16,
    pub sync_channel: Option<u16>,
    pub record_count: u64,
}

impl TagFileHeader {
    pub fn new(channel_count: u16, sync_channel: Option<u16>) -> Self {
        Self {
            version: VERSION,
            tick_ps_numerator: TICK_NUMERATOR,
            tick_ps_denominator: TICK_DENOMINATOR,
            channel_count,
            sync_channel,
            record_count: 0,
        }
    }

    pub fn tick_ps(&self) -> f64 {
        self.tick_ps_numerator as f64 / self.tick_ps_denominator as f64
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..8].copy_from_slice(MAGIC);
        b[8..10].copy_from_slice(&self.version.to_le_bytes());
        b[10..14].copy_from_slice(&self.tick_ps_numerator.to_le_bytes());
        b[14..18].copy_from_slice(&self.tick_ps_denominator.to_le_bytes());
        b[18..20].copy_from_slice(&self.channel_count.to_le_bytes());
        let sync = self.sync_channel.map_or(-1i16, |s| s as i16);
        b[20..22].copy_from_slice(&sync.to_le_bytes());
        b[22..30].copy_from_slice(&self.record_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[0..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([b[8], b[9]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let num = u32::from_le_bytes(b[10..14].try_into().unwrap());
        let den = u32::from_le_bytes(b[14..18].try_into().unwrap());
        if num == 0 || den == 0 {
            return Err(Error::Format("zero tick ratio".into()));
        }
        let sync = i16::from_le_bytes([b[20], b[21]]);
        Ok(Self {
            version,
            tick_ps_numerator: num,
            tick_ps_denominator: den,
            channel_count: u16::from_le_bytes([b[18], b[19]]),
            sync_channel: (sync >= 0).then_some(sync as u16),
            record_count: u64::from_le_bytes(b[22..30].try_into().unwrap()),
        })
    }
}

pub fn encode_record(tag: TimeTag) -> Result<[u8; RECORD_LEN]> {
    if tag.channel > 0xff {
        return Err(Error::Format(format!("channel {} does not fit in 8 bits", tag.channel)));
    }
    if tag.tick > MAX_TICK {
        return Err(Error::Format(format!("tick {} does not fit in 56 bits", tag.tick)));
    }
    Ok(((tag.tick << 8) | tag.channel as u64).to_le_bytes())
}

pub fn decode_record(b: [u8; RECORD_LEN]) -> TimeTag {
    let word = u64::from_le_bytes(b);
    TimeTag::new((word & 0xff) as u16, word >> 8)
}

/// Streaming writer. The header's record count is patched on [`finish`].
///
/// [`finish`]: TagWriter::finish
pub struct TagWriter<W: Write + Seek> {
    out: BufWriter<W>,
    header: TagFileHeader,
    last: Option<TimeTag>,
}

impl TagWriter<File> {
    pub fn create(path: impl AsRef<Path>, channel_count: u16, sync_channel: Option<u16>) -> Result<Self> {
        Self::new(File::create(path)?, channel_count, sync_channel)
    }
}

impl<W: Write + Seek> TagWriter<W> {
    pub fn new(inner: W, channel_count: u16, sync_channel: Option<u16>) -> Result<Self> {
        let header = TagFileHeader::new(channel_count, sync_channel);
        let mut out = BufWriter::with_capacity(BUFFER_BYTES, inner);
        out.write_all(&header.to_bytes())?;
        Ok(Self { out, header, last: None })
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<()> {
        if let Some(prev) = self.last {
            if tag < prev {
                return Err(Error::Unsorted { index: self.header.record_count as usize });
            }
        }
        self.out.write_all(&encode_record(tag)?)?;
        self.header.record_count += 1;
        self.last = Some(tag);
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&self.header.to_bytes())?;
        self.out.flush()?;
        Ok(self.header.record_count)
    }
}

/// Write a sorted stream to `path`, returning the number of records.
pub fn write_tags(
    tags: impl IntoIterator<Item = TimeTag>,
    path: impl AsRef<Path>,
    channel_count: u16,
    sync_channel: Option<u16>,
) -> Result<u64> {
    let path = path.as_ref();
    let mut w = TagWriter::create(path, channel_count, sync_channel)?;
    for tag in tags {
        if let Err(e) = w.push(tag) {
            drop(w);
            let _ = std::fs::remove_file(path);
            return Err(e);
        }
    }
    w.finish()
}

/// Streaming reader yielding records in file order.
pub struct TagReader<R: Read> {
    input: BufReader<R>,
    header: TagFileHeader,
    remaining: u64,
    offset: u64,
    trailing_checked: bool,
}

impl TagReader<File> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(File::open(path)?)
    }
}

impl<R: Read> TagReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        let mut input = BufReader::with_capacity(BUFFER_BYTES, inner);
        let mut hb = [0u8; HEADER_LEN];
        read_exact_at(&mut input, &mut hb, 0)?;
        let header = TagFileHeader::from_bytes(&hb)?;
        Ok(Self {
            input,
            remaining: header.record_count,
            header,
            offset: HEADER_LEN as u64,
            trailing_checked: false,
        })
    }

    pub fn header(&self) -> &TagFileHeader {
        &self.header
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Err(Error::Truncated { offset: offset + filled as u64 }),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTag>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            if !self.trailing_checked {
                self.trailing_checked = true;
                let mut probe = [0u8; 1];
                return match self.input.read(&mut probe) {
                    Ok(0) => None,
                    Ok(_) => Some(Err(Error::Format(format!(
                        "trailing data after {} records at byte offset {}",
                        self.header.record_count, self.offset
                    )))),
                    Err(e) => Some(Err(e.into())),
                };
            }
            return None;
        }
        let mut b = [0u8; RECORD_LEN];
        if let Err(e) = read_exact_at(&mut self.input, &mut b, self.offset) {
            self.remaining = 0;
            self.trailing_checked = true;
            return Some(Err(e));
        }
        self.offset += RECORD_LEN as u64;
        self.remaining -= 1;
        Some(Ok(decode_record(b)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (0, usize::try_from(self.remaining + 1).ok())
    }
}

/// Read a whole file into memory.
pub fn read_tags(path: impl AsRef<Path>) -> Result<(TagFileHeader, Vec<TimeTag>)> {
    let reader = TagReader::open(path)?;
    let header = *reader.header();
    let tags = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, tags))
}

/// Export `channel,tick` CSV.
pub fn write_csv<W: Write>(tags: impl IntoIterator<Item = TimeTag>, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "channel,tick")?;
    for t in tags {
        writeln!(out, "{},{}", t.channel, t.tick)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub count: u64,
    pub first_tick: u64,
    pub last_tick: u64,
}

impl ChannelStats {
    /// `count / (last - first)`, zero when the span is empty.
    pub fn mean_rate(&self, tick_ps: f64) -> f64 {
        let span = (self.last_tick - self.first_tick) as f64 * tick_ps * 1e-12;
        if span > 0.0 {
            self.count as f64 / span
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub channels: BTreeMap<u16, ChannelStats>,
    pub total: u64,
    pub first_tick: u64,
    pub last_tick: u64,
}

impl StreamStats {
    pub fn count(&self, channel: u16) -> u64 {
        self.channels.get(&channel).map_or(0, |c| c.count)
    }

    pub fn mean_rate(&self, channel: u16, tick_ps: f64) -> f64 {
        self.channels.get(&channel).map_or(0.0, |c| c.mean_rate(tick_ps))
    }

    pub fn span_s(&self, tick_ps: f64) -> f64 {
        (self.last_tick - self.first_tick) as f64 * tick_ps * 1e-12
    }

    pub fn push(&mut self, tag: TimeTag) {
        let entry = self.channels.entry(tag.channel).or_insert(ChannelStats {
            count: 0,
            first_tick: tag.tick,
            last_tick: tag.tick,
        });
        entry.count += 1;
        entry.last_tick = tag.tick;
        if self.total == 0 {
            self.first_tick = tag.tick;
        }
        self.last_tick = tag.tick;
        self.total += 1;
    }
}

/// Exact per-channel counts and first/last ticks of a sorted stream.
pub fn stream_stats(tags: impl IntoIterator<Item = TimeTag>) -> StreamStats {
    let mut counts = [0u64; 256];
    let mut first = [u64::MAX; 256];
    let mut last = [0u64; 256];
    let mut stats = StreamStats::default();
    for tag in tags {
        let ch = tag.channel as usize;
        if ch >= 256 {
            stats.push(tag);
            continue;
        }
        if counts[ch] == 0 {
            first[ch] = tag.tick;
        }
        counts[ch] += 1;
        last[ch] = tag.tick;
        if stats.total == 0 {
            stats.first_tick = tag.tick;
        }
        stats.last_tick = tag.tick;
        stats.total += 1;
    }
    for ch in 0..256 {
        if counts[ch] > 0 {
            stats.channels.insert(
                ch as u16,
                ChannelStats { count: counts[ch], first_tick: first[ch], last_tick: last[ch] },
            );
        }
    }
    stats
}
