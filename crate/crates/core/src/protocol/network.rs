//! In-process transport. Every delivered envelope is recorded in the
//! transcript before it reaches the recipient's inbox.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::transcript::{Envelope, MessageKind, PartyId, Transcript};

#[derive(Debug, Default)]
pub struct Network {
    transcript: Transcript,
    inboxes: BTreeMap<PartyId, VecDeque<Envelope>>,
    silenced: BTreeSet<PartyId>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, from: PartyId, to: PartyId, kind: MessageKind, payload: String) {
        if self.silenced.contains(&from) {
            log::debug!("dropping {kind} from silenced {from}");
            return;
        }
        let env = self.transcript.record(from, to, kind, payload).clone();
        self.inboxes.entry(to).or_default().push_back(env);
    }

    /// Oldest pending envelope of `kind` addressed to `at`.
    pub fn recv(&mut self, at: PartyId, kind: MessageKind) -> Option<Envelope> {
        let inbox = self.inboxes.get_mut(&at)?;
        let pos = inbox.iter().position(|e| e.kind == kind)?;
        inbox.remove(pos)
    }

    /// All pending envelopes of `kind` addressed to `at`, in delivery order.
    pub fn recv_all(&mut self, at: PartyId, kind: MessageKind) -> Vec<Envelope> {
        let Some(inbox) = self.inboxes.get_mut(&at) else {
            return Vec::new();
        };
        let (matching, rest): (VecDeque<_>, VecDeque<_>) = inbox.drain(..).partition(|e| e.kind == kind);
        *inbox = rest;
        matching.into()
    }

    /// Drops every later message sent by `party`, simulating a silent dropout.
    pub fn silence(&mut self, party: PartyId) {
        self.silenced.insert(party);
    }

    pub fn pending(&self, at: PartyId) -> usize {
        self.inboxes.get(&at).map_or(0, VecDeque::len)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
