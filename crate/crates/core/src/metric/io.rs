//! JSON encodings of spaces and membership certificates.
//!
//! A space file is `{"labels": [...], "sq_dist": [[[num, den], ...], ...]}`
//! holding the full symmetric matrix row-major. Integers are JSON numbers when
//! they fit in 64 bits and decimal strings otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddedSpace, Membership, SpaceDistances};
use crate::error::{Error, Result};
use crate::rational::{decode_rational, encode_rational, JsonRational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub labels: Vec<String>,
    pub sq_dist: Vec<Vec<JsonRational>>,
}

impl SpaceFile {
    pub fn from_space(space: &SpaceDistances) -> Self {
        Self {
            labels: space.labels().to_vec(),
            sq_dist: space
                .rows()
                .iter()
                .map(|row| row.iter().map(encode_rational).collect())
                .collect(),
        }
    }

    pub fn to_space(&self) -> Result<SpaceDistances> {
        let rows = self
            .sq_dist
            .iter()
            .map(|row| row.iter().map(decode_rational).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        SpaceDistances::new(self.labels.clone(), rows)
    }
}

pub fn space_to_json(space: &SpaceDistances) -> String {
    serde_json::to_string_pretty(&SpaceFile::from_space(space)).expect("space file serializes")
}

pub fn space_from_json(text: &str) -> Result<SpaceDistances> {
    let file: SpaceFile = serde_json::from_str(text)?;
    file.to_space()
}

pub fn read_space(path: impl AsRef<Path>) -> Result<SpaceDistances> {
    space_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_space(path: impl AsRef<Path>, space: &SpaceDistances) -> Result<()> {
    std::fs::write(path, space_to_json(space) + "\n")?;
    Ok(())
}

/// SHA-256 of the compact canonical encoding of the space.
pub fn space_hash(space: &SpaceDistances) -> String {
    let compact = serde_json::to_string(&SpaceFile::from_space(space)).expect("space file serializes");
    hex::encode(Sha256::digest(compact.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateFile {
    Member {
        labels: Vec<String>,
        pivots: Vec<JsonRational>,
        determinant: JsonRational,
    },
    NonMember {
        labels: Vec<String>,
        pivot_index: usize,
        minor: JsonRational,
    },
}

impl CertificateFile {
    pub fn new(space: &SpaceDistances, membership: &Membership) -> Self {
        let labels = space.labels().to_vec();
        match membership {
            Membership::Member(g) => Self::Member {
                labels,
                pivots: g
                    .pd_certificate()
                    .expect("member carries pivots")
                    .iter()
                    .map(encode_rational)
                    .collect(),
                determinant: encode_rational(&g.determinant().expect("member carries pivots")),
            },
            Membership::NonMember(r) => Self::NonMember {
                labels,
                pivot_index: r.pivot_index,
                minor: encode_rational(&r.minor),
            },
        }
    }
}

/// Float coordinates sidecar, `{"coords": [[...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordsFile {
    pub labels: Vec<String>,
    pub coords: Vec<Vec<f64>>,
}

impl CoordsFile {
    pub fn new(labels: Vec<String>, embedded: &EmbeddedSpace) -> Result<Self> {
        if labels.len() != embedded.len() {
            return Err(Error::Malformed("label count does not match coordinates".into()));
        }
        Ok(Self {
            labels,
            coords: embedded.rows().map(<[f64]>::to_vec).collect(),
        })
    }
}
