//! Classic libpcap reader that reduces each TCP segment to a [`PacketRecord`].
//!
//! Only the fields needed for size analysis are decoded: addresses, ports,
//! sequence number and the payload length implied by the IPv4 and TCP headers.
//! Payload lengths come from the IP total length, so captures taken with a
//! short snap length still report the true segment size.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Direction, PacketRecord};

const MAGIC_NATIVE: u32 = 0xa1b2_c3d4;
const MAGIC_SWAPPED: u32 = 0xd4c3_b2a1;
const FILE_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_IPV4: u32 = 228;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_TCP: u8 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaptureError {
    #[error("not a classic pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("packet {index} at byte {offset} is truncated")]
    TruncatedPacket { index: usize, offset: usize },
    #[error("unsupported link type {found} (configured for {expected:?})")]
    UnsupportedLinkType { found: u32, expected: LinkType },
    #[error("cannot tell direction of packet {index}: both endpoints look like the service")]
    AmbiguousDirection { index: usize },
    #[error("invalid capture config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    Ethernet,
    RawIp,
}

fn default_ports() -> BTreeSet<u16> {
    [443, 5223].into_iter().collect()
}

/// How to decide which side of a connection is the service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureConfig {
    #[serde(default = "default_ports")]
    pub service_ports: BTreeSet<u16>,
    /// When non-empty, these addresses identify the service side and take
    /// precedence over ports.
    #[serde(default)]
    pub service_addresses: BTreeSet<Ipv4Addr>,
    #[serde(default = "default_link_type")]
    pub link_type: LinkType,
}

fn default_link_type() -> LinkType {
    LinkType::Ethernet
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            service_ports: default_ports(),
            service_addresses: BTreeSet::new(),
            link_type: LinkType::Ethernet,
        }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.service_ports.is_empty() && self.service_addresses.is_empty() {
            return Err(CaptureError::InvalidConfig(
                "service_ports must not be empty when no service_addresses are given".into(),
            ));
        }
        Ok(())
    }
}

/// Packets that were read but produced no record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub ipv6: u64,
    pub non_ip: u64,
    pub non_tcp: u64,
    pub fragments: u64,
    pub empty_payload: u64,
    pub not_service: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCapture {
    pub records: Vec<PacketRecord>,
    pub skipped: SkipCounts,
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        }
    }
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

enum Decoded {
    Segment {
        src: Ipv4Addr,
        dst: Ipv4Addr,
        sport: u16,
        dport: u16,
        seq: u32,
        payload: u32,
    },
    Skip(fn(&mut SkipCounts)),
}

/// Parses a classic pcap image into one record per non-empty TCP segment
/// exchanged with the service.
pub fn parse_pcap(bytes: &[u8], config: &CaptureConfig) -> Result<ParsedCapture, CaptureError> {
    config.validate()?;
    if bytes.len() < 4 {
        return Err(CaptureError::BadMagic(0));
    }
    let magic = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let endian = match magic {
        MAGIC_NATIVE => Endian::Little,
        MAGIC_SWAPPED => Endian::Big,
        other => return Err(CaptureError::BadMagic(other)),
    };
    if bytes.len() < FILE_HEADER_LEN {
        return Err(CaptureError::TruncatedPacket {
            index: 0,
            offset: 0,
        });
    }
    let network = endian.u32(&bytes[20..24]);
    let link = match network {
        LINKTYPE_ETHERNET => LinkType::Ethernet,
        LINKTYPE_RAW | LINKTYPE_IPV4 => LinkType::RawIp,
        found => {
            return Err(CaptureError::UnsupportedLinkType {
                found,
                expected: config.link_type,
            })
        }
    };
    if link != config.link_type {
        return Err(CaptureError::UnsupportedLinkType {
            found: network,
            expected: config.link_type,
        });
    }

    let mut records = Vec::new();
    let mut skipped = SkipCounts::default();
    let mut offset = FILE_HEADER_LEN;
    let mut index = 0usize;
    while offset < bytes.len() {
        let truncated = CaptureError::TruncatedPacket { index, offset };
        let header = bytes
            .get(offset..offset + RECORD_HEADER_LEN)
            .ok_or_else(|| truncated.clone())?;
        let ts_sec = endian.u32(&header[0..4]);
        let ts_usec = endian.u32(&header[4..8]);
        let incl_len = endian.u32(&header[8..12]) as usize;
        let start = offset + RECORD_HEADER_LEN;
        let data = bytes
            .get(start..start + incl_len)
            .ok_or_else(|| truncated.clone())?;

        let decoded = match link {
            LinkType::Ethernet => decode_ethernet(data),
            LinkType::RawIp => decode_ip(data),
        }
        .ok_or(truncated)?;

        match decoded {
            Decoded::Skip(count) => count(&mut skipped),
            Decoded::Segment { payload: 0, .. } => skipped.empty_payload += 1,
            Decoded::Segment {
                src,
                dst,
                sport,
                dport,
                seq,
                payload,
            } => match direction(config, src, dst, sport, dport, index)? {
                None => skipped.not_service += 1,
                Some(dir) => {
                    let (client, service) = match dir {
                        Direction::ToService => ((src, sport), (dst, dport)),
                        Direction::FromService => ((dst, dport), (src, sport)),
                    };
                    records.push(PacketRecord {
                        timestamp: ts_sec as f64 + ts_usec as f64 / 1e6,
                        direction: dir,
                        payload_length: payload,
                        stream_id: format!(
                            "{}:{}-{}:{}",
                            client.0, client.1, service.0, service.1
                        ),
                        seq_hint: Some(seq),
                    });
                }
            },
        }
        offset = start + incl_len;
        index += 1;
    }
    Ok(ParsedCapture { records, skipped })
}

fn direction(
    config: &CaptureConfig,
    src: Ipv4Addr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    index: usize,
) -> Result<Option<Direction>, CaptureError> {
    if !config.service_addresses.is_empty() {
        let to = config.service_addresses.contains(&dst);
        let from = config.service_addresses.contains(&src);
        match (to, from) {
            (true, false) => return Ok(Some(Direction::ToService)),
            (false, true) => return Ok(Some(Direction::FromService)),
            _ => {}
        }
    }
    let to = config.service_ports.contains(&dport);
    let from = config.service_ports.contains(&sport);
    match (to, from) {
        (true, false) => Ok(Some(Direction::ToService)),
        (false, true) => Ok(Some(Direction::FromService)),
        (true, true) => Err(CaptureError::AmbiguousDirection { index }),
        (false, false) => Ok(None),
    }
}

/// `None` means the frame is too short for the headers it announces.
fn decode_ethernet(frame: &[u8]) -> Option<Decoded> {
    let mut ethertype = be16(frame.get(12..14)?);
    let mut l3 = 14;
    if ethertype == ETHERTYPE_VLAN {
        ethertype = be16(frame.get(16..18)?);
        l3 = 18;
    }
    match ethertype {
        ETHERTYPE_IPV4 => decode_ip(&frame[l3..]),
        ETHERTYPE_IPV6 => Some(Decoded::Skip(|s| s.ipv6 += 1)),
        _ => Some(Decoded::Skip(|s| s.non_ip += 1)),
    }
}

fn decode_ip(packet: &[u8]) -> Option<Decoded> {
    let first = *packet.first()?;
    match first >> 4 {
        4 => {}
        6 => return Some(Decoded::Skip(|s| s.ipv6 += 1)),
        _ => return Some(Decoded::Skip(|s| s.non_ip += 1)),
    }
    let ihl = usize::from(first & 0x0f) * 4;
    if ihl < 20 || packet.len() < ihl {
        return None;
    }
    let total_len = usize::from(be16(&packet[2..4]));
    let flags_frag = be16(&packet[6..8]);
    if flags_frag & 0x3fff != 0 {
        return Some(Decoded::Skip(|s| s.fragments += 1));
    }
    if packet[9] != IPPROTO_TCP {
        return Some(Decoded::Skip(|s| s.non_tcp += 1));
    }
    let src = Ipv4Addr::new(packet[12], packet[13], packet[14], packet[15]);
    let dst = Ipv4Addr::new(packet[16], packet[17], packet[18], packet[19]);
    let tcp = packet.get(ihl..ihl + 20)?;
    let doff = usize::from(tcp[12] >> 4) * 4;
    if doff < 20 || total_len < ihl + doff {
        return None;
    }
    Some(Decoded::Segment {
        src,
        dst,
        sport: be16(&tcp[0..2]),
        dport: be16(&tcp[2..4]),
        seq: be32(&tcp[4..8]),
        payload: (total_len - ihl - doff) as u32,
    })
}
