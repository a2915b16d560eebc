//! Structural privacy audit of a transcript.
//!
//! The audit inspects only what crossed the wire. Violations are reported as
//! findings; auditing never fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use base64::Engine;
use serde::Serialize;

use super::parties::DetectionConfig;
use super::transcript::{Envelope, MessageKind, PartyId, Transcript};
use super::wire;
use crate::paillier::PublicKey;

/// Ciphertexts are at least this wide; anything narrower is a plaintext in disguise.
const MIN_CIPHERTEXT_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCheck {
    /// The auxiliary server sees only keys, ciphertexts and noise.
    AuxiliaryView,
    /// The principal server sees only keys, masked sums, the noise sum and config.
    PrincipalView,
    /// Clients never talk to each other directly.
    NoClientChannel,
    /// No server receives a client's sample size in the clear.
    NoPlaintextCounts,
}

impl AuditCheck {
    pub const ALL: [AuditCheck; 4] = [
        AuditCheck::AuxiliaryView,
        AuditCheck::PrincipalView,
        AuditCheck::NoClientChannel,
        AuditCheck::NoPlaintextCounts,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AuditCheck::AuxiliaryView => "(a) auxiliary server receives only keys, ciphertexts and noise",
            AuditCheck::PrincipalView => "(b) principal server receives no plain or transformed rows",
            AuditCheck::NoClientChannel => "(c) no client-to-client messages",
            AuditCheck::NoPlaintextCounts => "(d) no plaintext local counts reach a server",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: AuditCheck,
    pub passed: bool,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub envelopes: usize,
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, which: AuditCheck) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.check == which)
            .expect("every check is present in a report")
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "audited {} envelopes", self.envelopes)?;
        for c in &self.checks {
            writeln!(f, "{} {}", if c.passed { "PASS" } else { "FAIL" }, c.check.label())?;
            for finding in &c.findings {
                writeln!(f, "    {finding}")?;
            }
        }
        Ok(())
    }
}

fn describe(env: &Envelope) -> String {
    format!("seq {}: {} {} -> {}", env.seq, env.kind, env.from, env.to)
}

/// Checks that every dot-joined field is a ciphertext-sized integer.
fn ciphertext_payload(env: &Envelope) -> Result<(), String> {
    let fields = wire::hex_fields(&env.payload).map_err(|e| format!("{}: {e}", describe(env)))?;
    match fields.iter().find(|x| x.bits() <= MIN_CIPHERTEXT_BITS) {
        Some(x) => Err(format!("{}: field {x:#x} is too small to be a ciphertext", describe(env))),
        None => Ok(()),
    }
}

fn pk_payload(env: &Envelope) -> Result<(), String> {
    let valid = env
        .payload
        .split_once('.')
        .is_some_and(|(owner, n)| wire::decode_u64(owner).is_ok() && PublicKey::from_hex(n).is_ok());
    if valid {
        Ok(())
    } else {
        Err(format!("{}: not a public key", describe(env)))
    }
}

fn matrix_rows(env: &Envelope) -> Result<usize, String> {
    wire::decode_matrix(&env.payload)
        .map(|m| m.rows())
        .map_err(|e| format!("{}: {e}", describe(env)))
}

fn check(which: AuditCheck, findings: Vec<String>) -> CheckResult {
    CheckResult {
        check: which,
        passed: findings.is_empty(),
        findings,
    }
}

/// The total sample size as announced by `count_result` messages, if consistent.
fn announced_total(entries: &[Envelope]) -> Option<u64> {
    let values: BTreeSet<Option<u64>> = entries
        .iter()
        .filter(|e| e.kind == MessageKind::CountResult)
        .map(|e| wire::decode_u64(&e.payload).ok())
        .collect();
    match values.into_iter().collect::<Vec<_>>().as_slice() {
        [Some(n)] => Some(*n),
        _ => None,
    }
}

fn audit_auxiliary(entries: &[Envelope]) -> CheckResult {
    let mut findings = Vec::new();
    for env in entries.iter().filter(|e| e.to == PartyId::ServerA) {
        let verdict = match env.kind {
            MessageKind::PkBroadcast => pk_payload(env),
            MessageKind::EncXi | MessageKind::EncCount => ciphertext_payload(env),
            MessageKind::NoiseMatrix => matrix_rows(env).map(|_| ()),
            // the public total, relayed by the designated client
            MessageKind::CountResult => Ok(()),
            other => Err(format!("{}: {other} must never reach the auxiliary server", describe(env))),
        };
        findings.extend(verdict.err());
        if !env.from.is_client() {
            findings.push(format!("{}: unexpected sender", describe(env)));
        }
    }
    check(AuditCheck::AuxiliaryView, findings)
}

fn audit_principal(entries: &[Envelope]) -> CheckResult {
    let mut findings = Vec::new();
    let total = announced_total(entries);
    let mut masked_from: BTreeMap<PartyId, usize> = BTreeMap::new();
    for env in entries.iter().filter(|e| e.to == PartyId::ServerP) {
        let verdict = match env.kind {
            MessageKind::PkBroadcast => pk_payload(env),
            MessageKind::CountResult => Ok(()),
            MessageKind::MaskedMatrix if env.from.is_client() => {
                *masked_from.entry(env.from).or_default() += 1;
                matrix_rows(env).and_then(|rows| match total {
                    Some(n) if rows as u64 == n => Ok(()),
                    _ => Err(format!(
                        "{}: {rows}-row matrix is not a full-size masked contribution",
                        describe(env)
                    )),
                })
            }
            MessageKind::NoiseSum if env.from == PartyId::ServerA => matrix_rows(env).map(|_| ()),
            MessageKind::OutlierPolicy => base64::engine::general_purpose::STANDARD
                .decode(&env.payload)
                .ok()
                .and_then(|json| serde_json::from_slice::<DetectionConfig>(&json).ok())
                .map(|_| ())
                .ok_or_else(|| format!("{}: payload is not a detection configuration", describe(env))),
            other => Err(format!("{}: {other} must never reach the principal server", describe(env))),
        };
        findings.extend(verdict.err());
    }
    for (client, times) in masked_from {
        if times > 1 {
            findings.push(format!("{client} sent {times} masked matrices"));
        }
    }
    check(AuditCheck::PrincipalView, findings)
}

fn audit_client_channel(entries: &[Envelope]) -> CheckResult {
    let findings = entries
        .iter()
        .filter(|e| e.from.is_client() && e.to.is_client())
        .map(describe)
        .collect();
    check(AuditCheck::NoClientChannel, findings)
}

fn audit_counts(entries: &[Envelope]) -> CheckResult {
    let mut findings = Vec::new();
    let to_server = |e: &&Envelope| e.to.is_server();
    if announced_total(entries).is_none() && entries.iter().any(|e| e.kind == MessageKind::CountResult) {
        findings.push("count_result messages disagree on the total".to_string());
    }
    for env in entries.iter().filter(to_server) {
        if matches!(env.kind, MessageKind::EncCount | MessageKind::EncXi | MessageKind::EncOffsetStart) {
            findings.extend(ciphertext_payload(env).err());
        }
    }
    // Offsets only ever travel encrypted, even between A and the clients.
    for env in entries.iter().filter(|e| e.kind == MessageKind::EncOffsetStart) {
        findings.extend(ciphertext_payload(env).err());
    }
    check(AuditCheck::NoPlaintextCounts, findings)
}

pub fn audit_transcript(transcript: &Transcript) -> AuditReport {
    let entries = transcript.entries();
    AuditReport {
        envelopes: entries.len(),
        checks: vec![
            audit_auxiliary(entries),
            audit_principal(entries),
            audit_client_channel(entries),
            audit_counts(entries),
        ],
    }
}
