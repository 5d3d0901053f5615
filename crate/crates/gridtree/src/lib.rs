//! Privacy-preserving ID3 over horizontally, vertically and grid partitioned
//! data, built from simulated semi-honest multi-party protocols.
//!
//! The toolkit loads a relation, splits it into per-party fragments
//! ([`dataset`]), and induces a decision tree jointly across the parties
//! without any party learning foreign attribute names, attribute values or
//! class labels beyond the declared protocol outputs ([`protocols`]). The
//! building blocks — secure sum, commutative encryption, secure union and
//! intersection-size, and the x·ln(x) share protocol — live in [`smpc`] and
//! run over a deterministic simulated network ([`partynet`]) whose
//! transcripts feed both the privacy audit and the communication-cost
//! validation ([`costmodel`]).

pub mod cli;
pub mod costmodel;
pub mod dataset;
pub mod error;
pub mod id3;
pub mod partynet;
pub mod protocols;
pub mod smpc;
pub mod synth;
