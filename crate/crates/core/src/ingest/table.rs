//! Flow-table CSV: the interchange format between the pipeline stages.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Endpoint, FlowRecord, Transport};
use crate::error::{Error, Result};

pub const FLOW_TABLE_HEADER: [&str; 18] = [
    "flow_id",
    "app_label",
    "transport",
    "client_ip",
    "client_port",
    "server_ip",
    "server_port",
    "first_ts_us",
    "last_ts_us",
    "bytes_in",
    "bytes_out",
    "packets_in",
    "packets_out",
    "header_bytes_total",
    "payload_bytes_total",
    "dst_port",
    "client_payload_prefix_hex",
    "server_payload_prefix_hex",
];

pub fn write_flow_table(flows: &[FlowRecord], path: impl AsRef<Path>) -> Result<()> {
    write_flow_table_to(flows, File::create(path)?)
}

pub fn write_flow_table_to<W: Write>(flows: &[FlowRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FLOW_TABLE_HEADER)?;
    for f in flows {
        w.write_record([
            f.id.to_string(),
            f.app_label.clone().unwrap_or_default(),
            f.transport.to_string(),
            f.client.ip.to_string(),
            f.client.port.to_string(),
            f.server.ip.to_string(),
            f.server.port.to_string(),
            f.first_ts_us.to_string(),
            f.last_ts_us.to_string(),
            f.bytes_in.to_string(),
            f.bytes_out.to_string(),
            f.packets_in.to_string(),
            f.packets_out.to_string(),
            f.header_bytes_total.to_string(),
            f.payload_bytes_total.to_string(),
            f.dst_port().to_string(),
            hex::encode(&f.client_payload_prefix),
            hex::encode(&f.server_payload_prefix),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow_table(path: impl AsRef<Path>) -> Result<Vec<FlowRecord>> {
    read_flow_table_from(File::open(path)?)
}

pub fn read_flow_table_from<R: Read>(input: R) -> Result<Vec<FlowRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::SchemaMismatch("empty file, missing header row".into())),
    };
    check_header(&header)?;

    let mut flows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != FLOW_TABLE_HEADER.len() {
            return Err(Error::Value {
                line,
                msg: format!("expected {} fields, got {}", FLOW_TABLE_HEADER.len(), rec.len()),
            });
        }
        let field = |idx: usize| &rec[idx];
        macro_rules! num {
            ($idx:expr) => {
                parse_field(field($idx), FLOW_TABLE_HEADER[$idx], line)
            };
        }
        let prefix = |idx: usize| {
            hex::decode(field(idx)).map_err(|e| Error::Value { line, msg: format!("{}: {e}", FLOW_TABLE_HEADER[idx]) })
        };

        let label = field(1);
        let flow = FlowRecord {
            id: num!(0)?,
            app_label: (!label.is_empty()).then(|| label.to_string()),
            transport: parse_field::<Transport>(field(2), "transport", line)?,
            client: Endpoint::new(num!(3)?, num!(4)?),
            server: Endpoint::new(num!(5)?, num!(6)?),
            first_ts_us: num!(7)?,
            last_ts_us: num!(8)?,
            bytes_in: num!(9)?,
            bytes_out: num!(10)?,
            packets_in: num!(11)?,
            packets_out: num!(12)?,
            header_bytes_total: num!(13)?,
            payload_bytes_total: num!(14)?,
            client_payload_prefix: prefix(16)?,
            server_payload_prefix: prefix(17)?,
        };
        let dst_port: u16 = num!(15)?;
        if dst_port != flow.server.port {
            return Err(Error::Value {
                line,
                msg: format!("dst_port {dst_port} differs from server_port {}", flow.server.port),
            });
        }
        validate(&flow).map_err(|msg| Error::Value { line, msg })?;
        flows.push(flow);
    }
    Ok(flows)
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    let got: Vec<&str> = header.iter().collect();
    if got == FLOW_TABLE_HEADER {
        return Ok(());
    }
    let missing: Vec<&str> = FLOW_TABLE_HEADER.iter().copied().filter(|c| !got.contains(c)).collect();
    let unexpected: Vec<&str> = got.iter().copied().filter(|c| !FLOW_TABLE_HEADER.contains(c)).collect();
    Err(Error::SchemaMismatch(if missing.is_empty() && unexpected.is_empty() {
        "columns are out of order".to_string()
    } else {
        format!("missing columns {missing:?}, unexpected columns {unexpected:?}")
    }))
}

fn parse_field<T: FromStr>(raw: &str, column: &str, line: usize) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Value { line, msg: format!("{column}: cannot parse {raw:?}") })
}

fn validate(f: &FlowRecord) -> std::result::Result<(), String> {
    if f.last_ts_us < f.first_ts_us {
        return Err("last_ts_us precedes first_ts_us".into());
    }
    if f.packets() == 0 {
        return Err("flow has no packets".into());
    }
    if f.packets_in == 0 && f.bytes_in != 0 {
        return Err("bytes_in is non-zero with zero packets_in".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FlowRecord {
        FlowRecord {
            id: 7,
            app_label: Some("tiktok".into()),
            transport: Transport::Tcp,
            client: Endpoint::new("10.1.2.3".parse().unwrap(), 51234),
            server: Endpoint::new("2001:db8::1".parse().unwrap(), 443),
            first_ts_us: 1_700_000_000_000_000,
            last_ts_us: 1_700_000_003_000_000,
            bytes_in: 10_000,
            bytes_out: 500,
            packets_in: 8,
            packets_out: 4,
            header_bytes_total: 792,
            payload_bytes_total: 9708,
            client_payload_prefix: vec![0x16, 0x03, 0x01],
            server_payload_prefix: vec![],
        }
    }

    #[test]
    fn round_trip_single_flow() {
        let mut buf = Vec::new();
        write_flow_table_to(&[sample()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&FLOW_TABLE_HEADER.join(",")));
        assert_eq!(read_flow_table_from(&buf[..]).unwrap(), vec![sample()]);
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let mut buf = Vec::new();
        write_flow_table_to(&[sample()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("bytes_in,", "", 1);
        match read_flow_table_from(text.as_bytes()) {
            Err(Error::SchemaMismatch(msg)) => assert!(msg.contains("bytes_in")),
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_counter_names_line() {
        let mut buf = Vec::new();
        write_flow_table_to(&[sample(), sample()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[2] = lines[2].replace(",10000,", ",lots,");
        match read_flow_table_from(lines.join("\n").as_bytes()) {
            Err(Error::Value { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("bytes_in"));
            }
            other => panic!("expected ValueError, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_schema_mismatch() {
        assert!(matches!(read_flow_table_from(&b""[..]), Err(Error::SchemaMismatch(_))));
    }
}
