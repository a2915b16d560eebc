//! Envelopes, party identifiers and the newline-delimited JSON transcript.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PartyId {
    Client(usize),
    ServerP,
    ServerA,
}

impl PartyId {
    pub fn is_client(&self) -> bool {
        matches!(self, PartyId::Client(_))
    }

    pub fn is_server(&self) -> bool {
        !self.is_client()
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Client(i) => write!(f, "client-{i}"),
            PartyId::ServerP => f.write_str("server-p"),
            PartyId::ServerA => f.write_str("server-a"),
        }
    }
}

impl FromStr for PartyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "server-p" => Ok(PartyId::ServerP),
            "server-a" => Ok(PartyId::ServerA),
            _ => s
                .strip_prefix("client-")
                .and_then(|i| i.parse().ok())
                .map(PartyId::Client)
                .ok_or_else(|| Error::Format(format!("unknown party {s:?}"))),
        }
    }
}

impl From<PartyId> for String {
    fn from(p: PartyId) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PartyId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// The closed message alphabet of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    #[serde(rename = "pk_broadcast")]
    PkBroadcast,
    #[serde(rename = "enc_xi")]
    EncXi,
    #[serde(rename = "enc_Xi_sum")]
    EncXiSum,
    #[serde(rename = "enc_count")]
    EncCount,
    #[serde(rename = "count_result")]
    CountResult,
    #[serde(rename = "enc_offset_start")]
    EncOffsetStart,
    #[serde(rename = "noise_matrix")]
    NoiseMatrix,
    #[serde(rename = "masked_matrix")]
    MaskedMatrix,
    #[serde(rename = "noise_sum")]
    NoiseSum,
    #[serde(rename = "score_vector")]
    ScoreVector,
    #[serde(rename = "outlier_policy")]
    OutlierPolicy,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_string(self).expect("message kinds serialize");
        f.write_str(json.trim_matches('"'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: MessageKind,
    pub payload: String,
}

/// Ordered log of every envelope sent during a round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<Envelope>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an envelope, assigning the next sequence number.
    pub fn record(&mut self, from: PartyId, to: PartyId, kind: MessageKind, payload: String) -> &Envelope {
        let seq = self.entries.last().map_or(0, |e| e.seq + 1);
        self.entries.push(Envelope {
            seq,
            from,
            to,
            kind,
            payload,
        });
        self.entries.last().unwrap()
    }

    /// Appends an envelope verbatim. Intended for tampering tests.
    pub fn push_raw(&mut self, envelope: Envelope) {
        self.entries.push(envelope);
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("envelopes serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut entries: Vec<Envelope> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let env: Envelope = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(prev) = entries.last() {
                if env.seq <= prev.seq {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("sequence number {} does not follow {}", env.seq, prev.seq),
                    });
                }
            }
            entries.push(env);
        }
        Ok(Self { entries })
    }

    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(self.to_ndjson().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ndjson())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}
