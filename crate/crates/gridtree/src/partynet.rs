//! Deterministic simulated multi-party runtime: parties as addressable state
//! holders, a message bus that logs every transfer, and cost counters. All
//! protocols run on top of this scheduler; the transcript doubles as the
//! input for privacy audits and for the cost-model validation.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Fragment, GridPartition};
use crate::error::ProtocolError;

/// Party coordinate `P_ij`: vertical group `i`, horizontal group `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId {
    pub i: usize,
    pub j: usize,
}

impl PartyId {
    pub fn new(i: usize, j: usize) -> Self {
        PartyId { i, j }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}.{}", self.i, self.j)
    }
}

/// Message endpoint: a single party or everyone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Party(PartyId),
    All,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Party(p) => write!(f, "{p}"),
            Endpoint::All => write!(f, "all"),
        }
    }
}

/// One logged message.
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub round: u64,
    pub from: String,
    pub to: String,
    pub bytes: u64,
    pub tag: String,
}

/// Ordered message log plus per-party computation counters.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub cipher_ops: BTreeMap<String, u64>,
    pub circuit_units: BTreeMap<String, u64>,
}

impl Transcript {
    /// One JSON object per line, in message order.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Aggregate counters over a transcript.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub messages: u64,
    pub bytes: u64,
    pub cipher_ops: u64,
    pub circuit_units: u64,
}

/// Aggregates consistent with the transcript entries.
pub fn snapshot_counters(transcript: &Transcript) -> CostCounters {
    CostCounters {
        messages: transcript.entries.len() as u64,
        bytes: transcript.entries.iter().map(|e| e.bytes).sum(),
        cipher_ops: transcript.cipher_ops.values().sum(),
        circuit_units: transcript.circuit_units.values().sum(),
    }
}

/// What a party saw in one message or announcement. Semi-honest parties
/// remember everything; the visibility audit scans these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservedValue {
    Num(u64),
    Text(String),
    Items(Vec<String>),
    /// Ciphertexts, masked inputs and other material with no plaintext view.
    Opaque(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Observation {
    pub tag: String,
    pub value: ObservedValue,
}

/// Private payload a party holds for one tree node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodePayload {
    Interior {
        attribute: String,
        branches: BTreeMap<String, String>,
    },
    Leaf {
        class: String,
    },
}

/// One party: its fragment, the tree payloads it is allowed to hold and
/// everything it has observed on the wire.
#[derive(Debug, Clone)]
pub struct Party {
    pub id: PartyId,
    pub fragment: Fragment,
    pub node_payloads: BTreeMap<String, NodePayload>,
    pub observations: Vec<Observation>,
}

/// Knobs shared by every protocol run.
#[derive(Debug, Clone, Copy)]
pub struct NetConfig {
    /// Commutative-cipher key length in bits.
    pub key_bits: u32,
    /// Taylor series length for the ln-share construction.
    pub taylor_terms: u32,
    /// Fractional bits of the fixed-point share domain.
    pub frac_bits: u32,
    /// Width of the share modulus (2^share_bits).
    pub share_bits: u32,
    /// Padded size of every item set in the set protocols.
    pub agreed_size: usize,
    /// Allows plaintext rendering of distributed trees.
    pub test_mode: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            key_bits: 128,
            taylor_terms: 10,
            frac_bits: 26,
            share_bits: 62,
            agreed_size: 0,
            test_mode: false,
        }
    }
}

/// The scheduler: party states, the message bus and the RNG for one run.
pub struct Network {
    pub cfg: NetConfig,
    pub v: usize,
    pub h: usize,
    parties: BTreeMap<PartyId, Party>,
    transcript: Transcript,
    rng: ChaCha12Rng,
    round: u64,
    nonce: u64,
    pending: VecDeque<(PartyId, String)>,
}

impl Network {
    pub fn new(
        partition: &GridPartition,
        fragments: &BTreeMap<(usize, usize), Fragment>,
        cfg: NetConfig,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let mut parties = BTreeMap::new();
        for (i, j) in partition.parties() {
            let frag = fragments
                .get(&(i, j))
                .ok_or_else(|| ProtocolError::ConfigError(format!("no fragment for P{i}.{j}")))?;
            let id = PartyId::new(i, j);
            parties.insert(
                id,
                Party {
                    id,
                    fragment: frag.clone(),
                    node_payloads: BTreeMap::new(),
                    observations: Vec::new(),
                },
            );
        }
        Ok(Network {
            cfg,
            v: partition.v,
            h: partition.h,
            parties,
            transcript: Transcript::default(),
            rng: ChaCha12Rng::seed_from_u64(seed),
            round: 0,
            nonce: 0,
            pending: VecDeque::new(),
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    /// Run-unique counter, used to salt dummy items so they never collide.
    pub fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce
    }

    pub fn party(&self, id: PartyId) -> &Party {
        &self.parties[&id]
    }

    pub fn party_ids(&self) -> Vec<PartyId> {
        self.parties.keys().copied().collect()
    }

    /// Parties of vertical group `i`, ordered by layer.
    pub fn group(&self, i: usize) -> Vec<PartyId> {
        (1..=self.h).map(|j| PartyId::new(i, j)).collect()
    }

    /// Parties of horizontal layer `j`, ordered by group.
    pub fn layer(&self, j: usize) -> Vec<PartyId> {
        (1..=self.v).map(|i| PartyId::new(i, j)).collect()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn message_count(&self) -> usize {
        self.transcript.entries.len()
    }

    pub fn store_payload(&mut self, id: PartyId, node: &str, payload: NodePayload) {
        self.parties
            .get_mut(&id)
            .expect("party registered")
            .node_payloads
            .insert(node.to_string(), payload);
    }

    fn log(&mut self, from: Endpoint, to: Endpoint, bytes: u64, tag: &str) {
        self.round += 1;
        self.transcript.entries.push(TranscriptEntry {
            round: self.round,
            from: from.to_string(),
            to: to.to_string(),
            bytes: bytes.max(1),
            tag: tag.to_string(),
        });
    }

    fn observe(&mut self, id: PartyId, tag: &str, value: ObservedValue) {
        self.parties
            .get_mut(&id)
            .expect("party registered")
            .observations
            .push(Observation {
                tag: tag.to_string(),
                value,
            });
    }

    /// Point-to-point transfer of a ring element of a 2^bits domain.
    pub fn send_mod(&mut self, from: PartyId, to: PartyId, tag: &str, value: u64, bits: u32) {
        self.log(
            Endpoint::Party(from),
            Endpoint::Party(to),
            u64::from(bits).div_ceil(8),
            tag,
        );
        self.observe(to, tag, ObservedValue::Num(value));
    }

    /// Point-to-point transfer of `count` ciphertexts of the commutative
    /// cipher. The receiver's view is opaque.
    pub fn send_ciphers(&mut self, from: PartyId, to: PartyId, tag: &str, count: usize) {
        let bytes = count as u64 * u64::from(self.cfg.key_bits + 7) / 8;
        self.log(Endpoint::Party(from), Endpoint::Party(to), bytes, tag);
        self.observe(to, tag, ObservedValue::Opaque(format!("ciphers[{count}]")));
    }

    /// Point-to-point transfer of opaque circuit material (masked inputs,
    /// garbled tables); only the charged size is visible.
    pub fn send_opaque(&mut self, from: PartyId, to: PartyId, tag: &str, bytes: u64, label: &str) {
        self.log(Endpoint::Party(from), Endpoint::Party(to), bytes, tag);
        self.observe(to, tag, ObservedValue::Opaque(label.to_string()));
    }

    /// Point-to-point transfer of a plaintext token.
    pub fn send_text(&mut self, from: PartyId, to: PartyId, tag: &str, text: &str) {
        self.log(
            Endpoint::Party(from),
            Endpoint::Party(to),
            text.len() as u64,
            tag,
        );
        self.observe(to, tag, ObservedValue::Text(text.to_string()));
    }

    /// Broadcast of a numeric result.
    pub fn announce_num(&mut self, from: PartyId, tag: &str, value: u64, bits: u32) {
        self.log(
            Endpoint::Party(from),
            Endpoint::All,
            u64::from(bits).div_ceil(8),
            tag,
        );
        for id in self.party_ids() {
            self.observe(id, tag, ObservedValue::Num(value));
        }
    }

    /// Broadcast of a plaintext token.
    pub fn announce_text(&mut self, from: PartyId, tag: &str, text: &str) {
        self.log(Endpoint::Party(from), Endpoint::All, text.len() as u64, tag);
        for id in self.party_ids() {
            self.observe(id, tag, ObservedValue::Text(text.to_string()));
        }
    }

    /// Broadcast of a plaintext item set.
    pub fn announce_items(&mut self, from: PartyId, tag: &str, items: &[String]) {
        let bytes = items.iter().map(|i| i.len() as u64 + 1).sum();
        self.log(Endpoint::Party(from), Endpoint::All, bytes, tag);
        for id in self.party_ids() {
            self.observe(id, tag, ObservedValue::Items(items.to_vec()));
        }
    }

    /// Deliver a result to a single party without broadcasting it. A party
    /// revealing to itself is local knowledge, not a message.
    pub fn reveal_to(&mut self, from: PartyId, to: PartyId, tag: &str, value: ObservedValue) {
        if from != to {
            let bytes = match &value {
                ObservedValue::Num(_) => 8,
                ObservedValue::Text(t) => t.len() as u64,
                ObservedValue::Items(items) => items.iter().map(|i| i.len() as u64 + 1).sum(),
                ObservedValue::Opaque(_) => 8,
            };
            self.log(Endpoint::Party(from), Endpoint::Party(to), bytes, tag);
        }
        self.observe(to, tag, value);
    }

    pub fn charge_cipher_ops(&mut self, id: PartyId, ops: u64) {
        *self
            .transcript
            .cipher_ops
            .entry(id.to_string())
            .or_insert(0) += ops;
    }

    pub fn charge_circuit_units(&mut self, id: PartyId, units: u64) {
        *self
            .transcript
            .circuit_units
            .entry(id.to_string())
            .or_insert(0) += units;
    }

    /// Two-phase delivery: enqueue a control token for later pickup. A token
    /// still queued when the run ends is a protocol hang.
    pub fn post(&mut self, from: PartyId, to: PartyId, tag: &str, token: &str) {
        self.log(
            Endpoint::Party(from),
            Endpoint::Party(to),
            token.len() as u64,
            tag,
        );
        self.pending.push_back((to, token.to_string()));
    }

    /// Pick up the oldest token queued for `to`.
    pub fn deliver(&mut self, to: PartyId, tag: &str) -> Result<String, ProtocolError> {
        let pos = self
            .pending
            .iter()
            .position(|(t, _)| *t == to)
            .ok_or_else(|| ProtocolError::ProtocolHang(format!("no pending token for {to}")))?;
        let (_, token) = self.pending.remove(pos).unwrap();
        self.observe(to, tag, ObservedValue::Text(token.clone()));
        Ok(token)
    }

    fn finish(&self) -> Result<(), ProtocolError> {
        if let Some((to, token)) = self.pending.front() {
            return Err(ProtocolError::ProtocolHang(format!(
                "token `{token}` for {to} was never delivered"
            )));
        }
        Ok(())
    }

    /// Iterate all parties (read-only), for audits and rendering.
    pub fn parties(&self) -> impl Iterator<Item = &Party> {
        self.parties.values()
    }
}

/// Build a network over the partition, run `program` on it and return the
/// program result together with the full transcript.
pub fn run_protocol<T>(
    partition: &GridPartition,
    fragments: &BTreeMap<(usize, usize), Fragment>,
    cfg: NetConfig,
    seed: u64,
    program: impl FnOnce(&mut Network) -> Result<T, ProtocolError>,
) -> Result<(T, Transcript), ProtocolError> {
    let mut net = Network::new(partition, fragments, cfg, seed)?;
    let result = program(&mut net)?;
    net.finish()?;
    Ok((result, net.transcript))
}
