//! Data file for the outer-planet N-body problem.
//!
//! Plain `key = value` lines, `#` comments, one decimal value per line.
//! Required keys: `k2`, `m0`..`m5`, `q1`..`q15`, `v1`..`v15`; optional
//! `verified` (0 or 1). A SHA-256 digest of the file bytes is stored beside
//! it as `<file>.sha256`.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/c5_outer_planets.txt");
const BUNDLED_SHA256: &str = include_str!("../../data/c5_outer_planets.txt.sha256");

pub const BODIES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct C5Data {
    pub k2: f64,
    /// `masses[0]` is the central body.
    pub masses: [f64; BODIES + 1],
    pub positions: [f64; 3 * BODIES],
    pub velocities: [f64; 3 * BODIES],
    pub verified: bool,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl C5Data {
    /// The data file compiled into the crate.
    pub fn bundled() -> Result<Self> {
        Self::parse_checked(BUNDLED, BUNDLED_SHA256)
    }

    /// Reads `path` and verifies it against `path.sha256`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut sum_path = path.as_os_str().to_owned();
        sum_path.push(".sha256");
        let digest = std::fs::read_to_string(&sum_path)
            .map_err(|e| Error::Data(format!("{}: {e}", Path::new(&sum_path).display())))?;
        Self::parse_checked(&text, &digest)
    }

    pub fn parse_checked(text: &str, expected_sha256: &str) -> Result<Self> {
        let actual = sha256_hex(text.as_bytes());
        let expected = expected_sha256.split_whitespace().next().unwrap_or("");
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(Error::Data(format!(
                "checksum mismatch: expected {expected}, file hashes to {actual}"
            )));
        }
        let mut data = Self::parse(text)?;
        data.sha256 = actual;
        Ok(data)
    }

    /// Parses without checksum verification.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Data(format!("line {}: {:?} is not a number", lineno + 1, value.trim()))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!("line {}: non-finite value", lineno + 1)));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(Error::Data(format!("duplicate key {key}")));
            }
        }

        let mut take = |key: String| {
            values
                .remove(&key)
                .ok_or_else(|| Error::Data(format!("missing key {key}")))
        };
        let k2 = take("k2".into())?;
        let mut masses = [0.0; BODIES + 1];
        for (i, m) in masses.iter_mut().enumerate() {
            *m = take(format!("m{i}"))?;
        }
        let mut positions = [0.0; 3 * BODIES];
        for (i, q) in positions.iter_mut().enumerate() {
            *q = take(format!("q{}", i + 1))?;
        }
        let mut velocities = [0.0; 3 * BODIES];
        for (i, v) in velocities.iter_mut().enumerate() {
            *v = take(format!("v{}", i + 1))?;
        }
        let verified = match values.remove("verified") {
            None => false,
            Some(0.0) => false,
            Some(1.0) => true,
            Some(v) => return Err(Error::Data(format!("verified must be 0 or 1, got {v}"))),
        };
        if let Some(extra) = values.keys().next() {
            return Err(Error::Data(format!("unknown key {extra}")));
        }
        if k2 <= 0.0 || masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::Data("k2 and masses must be positive".into()));
        }
        Ok(Self {
            k2,
            masses,
            positions,
            velocities,
            verified,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.positions.iter().chain(&self.velocities).copied().collect()
    }
}
