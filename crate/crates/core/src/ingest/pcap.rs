//! Classic libpcap container, both byte orders, micro- and nanosecond
//! timestamps. pcapng is not supported.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::decode::{decode_frame, Decoded};
use super::{PacketRecord, DEFAULT_PREFIX_CAP};
use crate::error::{Error, Result};

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const MAX_RECORD_LEN: u32 = 256 * 1024;

#[derive(Debug, Clone, Copy)]
pub struct CaptureOptions {
    pub prefix_cap: usize,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self { prefix_cap: DEFAULT_PREFIX_CAP }
    }
}

/// Packets of one capture file plus the count of records that were not used.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub link_type: u32,
    pub packets: Vec<PacketRecord>,
    /// Frames that are not IPv4/IPv6 carrying TCP or UDP (ARP, ICMP, later fragments...).
    pub skipped: usize,
    /// Records whose captured bytes end inside a header, or the file itself ends mid-record.
    pub truncated: usize,
}

#[derive(Clone, Copy)]
struct Format {
    big_endian: bool,
    nanos: bool,
}

impl Format {
    fn u32_at(&self, b: &[u8], at: usize) -> u32 {
        let raw = [b[at], b[at + 1], b[at + 2], b[at + 3]];
        if self.big_endian {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    }
}

pub fn read_packets(path: impl AsRef<Path>) -> Result<Capture> {
    let bytes = fs::read(path)?;
    parse_pcap(&bytes, CaptureOptions::default())
}

pub fn parse_pcap(bytes: &[u8], opts: CaptureOptions) -> Result<Capture> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(Error::MalformedCapture(format!(
            "file is {} bytes, shorter than the 24-byte global header",
            bytes.len()
        )));
    }
    let magic = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let fmt = match magic {
        0xA1B2_C3D4 => Format { big_endian: false, nanos: false },
        0xA1B2_3C4D => Format { big_endian: false, nanos: true },
        0xD4C3_B2A1 => Format { big_endian: true, nanos: false },
        0x4D3C_B2A1 => Format { big_endian: true, nanos: true },
        other => {
            return Err(Error::MalformedCapture(format!("bad magic number {other:#010x}")));
        }
    };
    let link_type = fmt.u32_at(bytes, 20) & 0x0FFF_FFFF;
    if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_RAW {
        return Err(Error::MalformedCapture(format!("unsupported link type {link_type}")));
    }

    let mut cap = Capture { link_type, ..Capture::default() };
    let mut at = GLOBAL_HEADER_LEN;
    while at < bytes.len() {
        if bytes.len() - at < RECORD_HEADER_LEN {
            cap.truncated += 1;
            break;
        }
        let ts_sec = fmt.u32_at(bytes, at) as i64;
        let ts_frac = fmt.u32_at(bytes, at + 4) as i64;
        let incl_len = fmt.u32_at(bytes, at + 8);
        let orig_len = fmt.u32_at(bytes, at + 12);
        at += RECORD_HEADER_LEN;
        if incl_len > MAX_RECORD_LEN || bytes.len() - at < incl_len as usize {
            cap.truncated += 1;
            break;
        }
        let frame = &bytes[at..at + incl_len as usize];
        at += incl_len as usize;

        let frac_us = if fmt.nanos { ts_frac / 1000 } else { ts_frac };
        let timestamp_us = ts_sec * 1_000_000 + frac_us;
        match decode_frame(link_type, frame, orig_len.max(incl_len), timestamp_us, opts.prefix_cap) {
            Decoded::Packet(p) => cap.packets.push(p),
            Decoded::Skipped => cap.skipped += 1,
            Decoded::Truncated => cap.truncated += 1,
        }
    }
    Ok(cap)
}

/// Minimal classic-pcap writer, little-endian, microsecond or nanosecond
/// resolution.
pub struct PcapWriter<W: Write> {
    out: W,
    nanos: bool,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W, link_type: u32, nanos: bool) -> io::Result<Self> {
        let magic: u32 = if nanos { 0xA1B2_3C4D } else { 0xA1B2_C3D4 };
        out.write_all(&magic.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&65535u32.to_le_bytes())?;
        out.write_all(&link_type.to_le_bytes())?;
        Ok(Self { out, nanos })
    }

    pub fn write_frame(&mut self, timestamp_us: i64, frame: &[u8]) -> io::Result<()> {
        let sec = timestamp_us.div_euclid(1_000_000) as u32;
        let us = timestamp_us.rem_euclid(1_000_000) as u32;
        let frac = if self.nanos { us * 1000 } else { us };
        self.out.write_all(&sec.to_le_bytes())?;
        self.out.write_all(&frac.to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
