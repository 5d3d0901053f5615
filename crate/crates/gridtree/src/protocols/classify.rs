//! Distributed classification: control starts at the root's owner and hops
//! from owner to owner as the decision path crosses group boundaries. Each
//! owner looks up its private split payload, reads the tuple's value for its
//! own attribute and forwards control under the child's node id; bystanders
//! see node ids and nothing else.


use crate::error::ProtocolError;
use crate::partynet::{Network, NodePayload, ObservedValue, PartyId};

use super::DistributedTree;

/// Result of one classification run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyOutcome {
    pub class: String,
    /// Control transfers between owners along the path.
    pub hops: usize,
}

/// Classify the tuple with id `tuple_id`, whose values live at the parties
/// of horizontal layer `layer` (each party holding the values of its own
/// attributes), starting from `start` (normally the root).
pub fn classify_distributed(
    net: &mut Network,
    tree: &DistributedTree,
    layer: usize,
    tuple_id: &str,
    start: &str,
) -> Result<ClassifyOutcome, ProtocolError> {
    let mut current = start.to_string();
    let mut owner = tree.node(&current)?.owner_group;
    let mut hops = 0;
    loop {
        let node = tree.node(&current)?;
        let holder = PartyId::new(node.owner_group, layer);
        let payload = net
            .party(holder)
            .node_payloads
            .get(&current)
            .cloned()
            .ok_or_else(|| ProtocolError::DanglingNode(current.clone()))?;
        match payload {
            NodePayload::Leaf { class } => {
                net.reveal_to(
                    holder,
                    PartyId::new(1, layer),
                    "classification",
                    ObservedValue::Text(class.clone()),
                );
                return Ok(ClassifyOutcome { class, hops });
            }
            NodePayload::Interior {
                attribute,
                branches,
            } => {
                let value = net
                    .party(holder)
                    .fragment
                    .value_of(tuple_id, &attribute)
                    .map(str::to_string)
                    .ok_or_else(|| ProtocolError::UnseenValue {
                        node: current.clone(),
                        value: format!("<no local value for tuple {tuple_id}>"),
                    })?;
                let child = branches
                    .get(&value)
                    .cloned()
                    .ok_or_else(|| ProtocolError::UnseenValue {
                        node: current.clone(),
                        value,
                    })?;
                let child_owner = tree.node(&child)?.owner_group;
                if child_owner != owner {
                    // control passes to the next owner, carrying only the id
                    let next_holder = PartyId::new(child_owner, layer);
                    net.post(holder, next_holder, "control-transfer", &child);
                    let token = net.deliver(next_holder, "control-transfer")?;
                    debug_assert_eq!(token, child);
                    hops += 1;
                }
                owner = child_owner;
                current = child;
            }
        }
    }
}

/// Classification hop messages recorded in a transcript slice.
pub fn count_control_transfers(entries: &[crate::partynet::TranscriptEntry]) -> usize {
    entries
        .iter()
        .filter(|e| e.tag == "control-transfer")
        .count()
}
