use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::MacAddr;
use crate::error::{Error, Result};

/// App labels keyed by client MAC address or VLAN id.
///
/// Text form, one entry per line: `mac <hex-mac> <label>` or
/// `vlan <id> <label>`; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagMap {
    macs: HashMap<MacAddr, String>,
    vlans: HashMap<u16, String>,
}

impl TagMap {
    pub fn insert_mac(&mut self, mac: MacAddr, label: &str) -> std::result::Result<(), String> {
        if self.macs.contains_key(&mac) {
            return Err(format!("duplicate entry for mac {mac}"));
        }
        self.macs.insert(mac, label.to_string());
        Ok(())
    }

    pub fn insert_vlan(&mut self, vlan: u16, label: &str) -> std::result::Result<(), String> {
        if vlan > 4094 {
            return Err(format!("vlan id {vlan} out of range 0-4094"));
        }
        if self.vlans.contains_key(&vlan) {
            return Err(format!("duplicate entry for vlan {vlan}"));
        }
        self.vlans.insert(vlan, label.to_string());
        Ok(())
    }

    pub fn by_mac(&self, mac: &MacAddr) -> Option<&str> {
        self.macs.get(mac).map(String::as_str)
    }

    pub fn by_vlan(&self, vlan: u16) -> Option<&str> {
        self.vlans.get(&vlan).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.macs.len() + self.vlans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = TagMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let err = |msg: String| Error::Parse { line, msg };
            if fields.len() != 3 {
                return Err(err(format!("expected `mac|vlan <key> <label>`, got {content:?}")));
            }
            match fields[0] {
                "mac" => {
                    let mac = fields[1].parse().map_err(err)?;
                    map.insert_mac(mac, fields[2]).map_err(err)?;
                }
                "vlan" => {
                    let vlan: u16 = fields[1].parse().map_err(|_| err(format!("invalid vlan id {:?}", fields[1])))?;
                    map.insert_vlan(vlan, fields[2]).map_err(err)?;
                }
                other => return Err(err(format!("unknown entry kind {other:?}"))),
            }
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds() {
        let m = TagMap::parse("# farm\nmac aa:bb:cc:dd:ee:01 tiktok\nvlan 100 bilibili # rack 2\n\n").unwrap();
        assert_eq!(m.by_mac(&"aa:bb:cc:dd:ee:01".parse().unwrap()), Some("tiktok"));
        assert_eq!(m.by_vlan(100), Some("bilibili"));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn rejects_duplicates_with_line() {
        let e = TagMap::parse("vlan 7 a\nvlan 7 b\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = TagMap::parse("mac aa:bb:cc:dd:ee:01 a\nmac AA-BB-CC-DD-EE-01 b\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(TagMap::parse("vlan 5000 x").is_err());
        assert!(TagMap::parse("port 80 x").is_err());
        assert!(TagMap::parse("mac aa:bb x").is_err());
        assert!(TagMap::parse("vlan 1").is_err());
    }
}
