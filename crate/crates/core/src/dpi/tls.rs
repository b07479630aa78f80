//! TLS ClientHello parsing, enough to recover the server_name extension.

const CONTENT_HANDSHAKE: u8 = 22;
const HANDSHAKE_CLIENT_HELLO: u8 = 1;
const EXT_SERVER_NAME: u16 = 0;
const NAME_TYPE_HOST: u8 = 0;

/// What a ClientHello revealed. Only the SNI is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub sni: Option<String>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

/// `Err(Truncated)` means the payload prefix ended early, which is
/// expected for capped prefixes; `Err(Malformed)` means the bytes
/// contradict the layout.
enum Stop {
    Truncated,
    Malformed,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8, Stop> {
        let b = *self.buf.get(self.pos).ok_or(Stop::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, Stop> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn skip(&mut self, n: usize) -> Result<(), Stop> {
        if self.buf.len() - self.pos < n {
            self.pos = self.buf.len();
            return Err(Stop::Truncated);
        }
        self.pos += n;
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Stop> {
        let start = self.pos;
        self.skip(n)?;
        Ok(&self.buf[start..self.pos])
    }
}

/// Parses a TLS record holding a ClientHello.
///
/// `None` when the bytes are not a handshake record with versions
/// 0x0301–0x0304 and handshake type 1, or when lengths are inconsistent.
/// A hello cut short before its extensions is still a hello, just without
/// an SNI.
pub fn parse_client_hello(payload: &[u8]) -> Option<ClientHello> {
    if payload.len() < 6 || payload[0] != CONTENT_HANDSHAKE {
        return None;
    }
    if payload[1] != 0x03 || !(0x01..=0x04).contains(&payload[2]) {
        return None;
    }
    let record_len = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    let body = &payload[5..payload.len().min(5 + record_len)];
    if body.first() != Some(&HANDSHAKE_CLIENT_HELLO) {
        return None;
    }
    match hello_sni(body) {
        Ok(sni) => Some(ClientHello { sni }),
        Err(Stop::Truncated) => Some(ClientHello { sni: None }),
        Err(Stop::Malformed) => None,
    }
}

/// SNI host name of a ClientHello, lowercased.
pub fn parse_tls_client_hello(payload: &[u8]) -> Option<String> {
    parse_client_hello(payload)?.sni
}

fn hello_sni(body: &[u8]) -> Result<Option<String>, Stop> {
    let mut c = Cursor { buf: body, pos: 1 };
    let hs_len = ((c.u8()? as usize) << 16) | c.u16()? as usize;
    // Bound everything by the handshake length when it is fully present.
    let end = (4 + hs_len).min(body.len());
    let mut c = Cursor { buf: &body[..end], pos: 4 };

    c.skip(2 + 32)?; // client_version, random
    let sid = c.u8()? as usize;
    if sid > 32 {
        return Err(Stop::Malformed);
    }
    c.skip(sid)?;
    let suites = c.u16()? as usize;
    if !suites.is_multiple_of(2) {
        return Err(Stop::Malformed);
    }
    c.skip(suites)?;
    let comp = c.u8()? as usize;
    c.skip(comp)?;
    if c.pos == c.buf.len() && end == 4 + hs_len {
        // No extensions block at all.
        return Ok(None);
    }
    let ext_total = c.u16()? as usize;
    let ext_end = c.pos + ext_total;
    if end == 4 + hs_len && ext_end > c.buf.len() {
        return Err(Stop::Malformed);
    }
    while c.pos < ext_end.min(c.buf.len()) {
        let ty = c.u16()?;
        let len = c.u16()? as usize;
        if c.pos + len > ext_end {
            return Err(Stop::Malformed);
        }
        let data = c.take(len)?;
        if ty == EXT_SERVER_NAME {
            return server_name(data);
        }
    }
    if c.pos < ext_end {
        return Err(Stop::Truncated);
    }
    Ok(None)
}

fn server_name(data: &[u8]) -> Result<Option<String>, Stop> {
    let mut c = Cursor { buf: data, pos: 0 };
    let list_len = c.u16()? as usize;
    if list_len + 2 > data.len() {
        return Err(Stop::Malformed);
    }
    while c.pos < 2 + list_len {
        let ty = c.u8()?;
        let len = c.u16()? as usize;
        let name = c.take(len).map_err(|_| Stop::Malformed)?;
        if ty == NAME_TYPE_HOST {
            if name.is_empty() || !name.iter().all(|b| b.is_ascii_graphic()) {
                return Err(Stop::Malformed);
            }
            let host = String::from_utf8_lossy(name).to_ascii_lowercase();
            return Ok(Some(host.trim_end_matches('.').to_string()));
        }
    }
    Ok(None)
}

/// A TLS 1.2-framed ClientHello with a few common extensions and an
/// optional SNI.
pub fn build_client_hello(sni: Option<&str>, random: [u8; 32]) -> Vec<u8> {
    let mut exts = Vec::new();
    if let Some(host) = sni {
        let h = host.as_bytes();
        exts.extend_from_slice(&EXT_SERVER_NAME.to_be_bytes());
        exts.extend_from_slice(&((h.len() + 5) as u16).to_be_bytes());
        exts.extend_from_slice(&((h.len() + 3) as u16).to_be_bytes());
        exts.push(NAME_TYPE_HOST);
        exts.extend_from_slice(&(h.len() as u16).to_be_bytes());
        exts.extend_from_slice(h);
    }
    // supported_groups: x25519, secp256r1
    exts.extend_from_slice(&[0x00, 0x0a, 0x00, 0x06, 0x00, 0x04, 0x00, 0x1d, 0x00, 0x17]);
    // signature_algorithms: ecdsa_secp256r1_sha256, rsa_pss_rsae_sha256
    exts.extend_from_slice(&[0x00, 0x0d, 0x00, 0x06, 0x00, 0x04, 0x04, 0x03, 0x08, 0x04]);
    // supported_versions: TLS 1.3, TLS 1.2
    exts.extend_from_slice(&[0x00, 0x2b, 0x00, 0x05, 0x04, 0x03, 0x04, 0x03, 0x03]);

    let mut hello = vec![0x03, 0x03];
    hello.extend_from_slice(&random);
    hello.push(0); // session id
    let suites: [u16; 4] = [0x1301, 0x1302, 0xc02b, 0xc02f];
    hello.extend_from_slice(&((suites.len() * 2) as u16).to_be_bytes());
    for s in suites {
        hello.extend_from_slice(&s.to_be_bytes());
    }
    hello.extend_from_slice(&[0x01, 0x00]); // null compression
    hello.extend_from_slice(&(exts.len() as u16).to_be_bytes());
    hello.extend_from_slice(&exts);

    let mut hs = vec![HANDSHAKE_CLIENT_HELLO];
    hs.extend_from_slice(&(hello.len() as u32).to_be_bytes()[1..]);
    hs.extend_from_slice(&hello);

    let mut record = vec![CONTENT_HANDSHAKE, 0x03, 0x01];
    record.extend_from_slice(&(hs.len() as u16).to_be_bytes());
    record.extend_from_slice(&hs);
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_round_trips() {
        let b = build_client_hello(Some("API.Google.com"), [7; 32]);
        assert_eq!(parse_tls_client_hello(&b).as_deref(), Some("api.google.com"));
        let b = build_client_hello(None, [7; 32]);
        assert_eq!(parse_client_hello(&b), Some(ClientHello { sni: None }));
    }

    #[test]
    fn http_is_not_tls() {
        assert_eq!(parse_client_hello(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n"), None);
    }

    #[test]
    fn truncated_hello_is_still_a_hello() {
        let b = build_client_hello(Some("cdn.example.net"), [1; 32]);
        // Cut inside the cipher suites.
        let cut = &b[..50];
        assert_eq!(parse_client_hello(cut), Some(ClientHello { sni: None }));
    }

    #[test]
    fn server_hello_and_bad_versions_rejected() {
        let mut b = build_client_hello(Some("a.example"), [1; 32]);
        b[5] = 2;
        assert_eq!(parse_client_hello(&b), None);
        let mut b = build_client_hello(Some("a.example"), [1; 32]);
        b[2] = 0x05;
        assert_eq!(parse_client_hello(&b), None);
        let mut b = build_client_hello(Some("a.example"), [1; 32]);
        b[1] = 0x02;
        assert_eq!(parse_client_hello(&b), None);
    }

    #[test]
    fn inconsistent_extension_length_is_malformed() {
        let mut b = build_client_hello(Some("a.example"), [1; 32]);
        // extensions block length sits right after compression methods
        let ext_len_at = 5 + 4 + 2 + 32 + 1 + 2 + 8 + 2;
        b[ext_len_at] = 0xff;
        assert_eq!(parse_client_hello(&b), None);
    }

    #[test]
    fn garbage_never_panics() {
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..5000 {
            let n = rng.below(300);
            let mut v: Vec<u8> = (0..n).map(|_| rng.below(256) as u8).collect();
            if n > 3 {
                v[0] = 22;
                v[1] = 3;
                v[2] = 1 + rng.below(4) as u8;
            }
            if n > 5 {
                v[5] = 1;
            }
            let _ = parse_client_hello(&v);
        }
    }
}
