use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Service domains whose TLS flows are background traffic, not app traffic.
pub const DEFAULT_BLOCKLIST: [&str; 6] =
    ["google.com", "gstatic.com", "googleapis.com", "apple.com", "icloud.com", "cloudflare.com"];

/// Lowercase domain suffixes matched on label boundaries:
/// `google.com` covers `api.google.com` but not `notgoogle.com`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    suffixes: BTreeSet<String>,
}

impl Blocklist {
    pub fn new<I, S>(suffixes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = Blocklist::default();
        for s in suffixes {
            list.insert(s.as_ref());
        }
        list
    }

    /// The shipped list, [`DEFAULT_BLOCKLIST`].
    pub fn shipped() -> Self {
        Self::new(DEFAULT_BLOCKLIST)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn insert(&mut self, suffix: &str) -> bool {
        let s = suffix.trim().trim_matches('.').to_ascii_lowercase();
        if s.is_empty() {
            return false;
        }
        self.suffixes.insert(s)
    }

    pub fn contains_match(&self, host: &str) -> bool {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        // Walk the label boundaries of `host` from longest to shortest suffix.
        let mut rest = host.as_str();
        loop {
            if self.suffixes.contains(rest) {
                return true;
            }
            match rest.find('.') {
                Some(dot) => rest = &rest[dot + 1..],
                None => return false,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.suffixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suffixes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.suffixes.iter().map(String::as_str)
    }

    /// One suffix per line, `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut list = Blocklist::default();
        for (i, raw) in text.lines().enumerate() {
            let entry = raw.split('#').next().unwrap_or("").trim();
            if entry.is_empty() {
                continue;
            }
            if entry.split_whitespace().count() != 1
                || !entry.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
            {
                return Err(Error::Parse { line: i + 1, msg: format!("invalid domain suffix {entry:?}") });
            }
            list.insert(entry);
        }
        Ok(list)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_boundary_matching() {
        let b = Blocklist::new(["google.com"]);
        assert!(b.contains_match("google.com"));
        assert!(b.contains_match("api.google.com"));
        assert!(b.contains_match("A.B.Google.COM."));
        assert!(!b.contains_match("notgoogle.com"));
        assert!(!b.contains_match("google.com.evil.net"));
        assert!(!b.contains_match("com"));
    }

    #[test]
    fn parse_normalizes_and_reports_lines() {
        let b = Blocklist::parse("# services\n.Apple.com\n\ngstatic.com # fonts\n").unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), ["apple.com", "gstatic.com"]);
        let e = Blocklist::parse("ok.com\nbad domain\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn shipped_list() {
        let b = Blocklist::shipped();
        assert_eq!(b.len(), 6);
        assert!(b.contains_match("play.googleapis.com"));
        assert!(!b.contains_match("cdn.bilibili.com"));
    }
}
