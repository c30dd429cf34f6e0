use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use xxhash_rust::xxh3::xxh3_64;

use super::NodeKind;
use crate::text::normalize_ws;

/// Identifier of the digest algorithm; part of the on-disk format string.
pub const HASH_ALGORITHM: &str = "xxh3-64";

/// 64-bit node digest, rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u64);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Digest {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Digest)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Digest over kind, depth and the sibling-index path from the root.
pub fn structural_digest(kind: NodeKind, path: &[usize]) -> Digest {
    let mut buf = Vec::with_capacity(32 + 8 * path.len());
    buf.extend_from_slice(b"S\0");
    buf.extend_from_slice(kind.as_str().as_bytes());
    buf.push(0);
    buf.extend_from_slice(&(path.len() as u64).to_le_bytes());
    for idx in path {
        buf.extend_from_slice(&(*idx as u64).to_le_bytes());
    }
    Digest(xxh3_64(&buf))
}

/// Digest over kind, normalized own text and the children's content digests
/// in order.
pub fn content_digest(kind: NodeKind, text: &str, children: &[Digest]) -> Digest {
    let text = normalize_ws(text);
    let mut buf = Vec::with_capacity(24 + text.len() + 8 * children.len());
    buf.extend_from_slice(b"C\0");
    buf.extend_from_slice(kind.as_str().as_bytes());
    buf.push(0);
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    buf.extend_from_slice(&(children.len() as u64).to_le_bytes());
    for c in children {
        buf.extend_from_slice(&c.0.to_le_bytes());
    }
    Digest(xxh3_64(&buf))
}
