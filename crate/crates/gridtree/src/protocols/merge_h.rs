//! Grid protocol, first evaluation order: merge horizontally, develop
//! vertically. Parties on the same horizontal layer share an encryption key,
//! so the per-group unions (computed over each group's `h` parties) all end
//! up encrypted under the same key composition and can be intersected
//! directly — no intersection-size protocol and no decryption are needed.
//! Each group's head party then counts tuples per attribute value on the
//! encrypted sets, computes its gains in the clear, and a circuit picks the
//! best group.

use std::collections::BTreeMap;

use crate::error::ProtocolError;
use crate::id3::{info_gain, ClassHistogram};
use crate::partynet::{Network, NodePayload, ObservedValue, PartyId};
use crate::smpc::cipher::CommutativeKey;
use crate::smpc::circuits::{
    ideal_circuit_eval, CircuitFn, CircuitInput, CircuitOutput, CircuitValue, IdealCircuitSpec,
    Recipient,
};
use crate::smpc::setops::{secure_union_encrypted, EncryptedSet};

use super::{
    builder_setup, filter_ids, remaining_attrs_empty, root_contexts, DistributedTree,
    NodeContexts, SkeletonKind, TreeBuilder,
};

/// Run the horizontal-merge grid protocol (`v, h >= 2`); the class attribute
/// must live in the last vertical group.
pub fn ppid3_grid_hmerge(
    net: &mut Network,
    attr_positions: &BTreeMap<String, usize>,
    class_attr: &str,
) -> Result<DistributedTree, ProtocolError> {
    if net.v < 2 || net.h < 2 {
        return Err(ProtocolError::ConfigError(format!(
            "grid protocols need v, h >= 2, got {}x{}",
            net.v, net.h
        )));
    }
    if net
        .party(PartyId::new(net.v, 1))
        .fragment
        .column_index(class_attr)
        .is_none()
    {
        return Err(ProtocolError::ConfigError(
            "class attribute must be held by the last vertical group".into(),
        ));
    }
    let mut builder = builder_setup(net, attr_positions, class_attr)?;
    // one key per horizontal layer, shared by the parties of that layer
    let layer_keys: Vec<CommutativeKey> = (0..net.h)
        .map(|_| CommutativeKey::generate(net.cfg.key_bits, net.rng()))
        .collect::<Result<_, _>>()?;
    let contexts = root_contexts(net);
    let remaining = builder.group_attrs.clone();
    let root = build_node(
        net,
        &mut builder,
        &layer_keys,
        &contexts,
        &remaining,
        "r",
    )?;
    Ok(builder.into_tree(root))
}

/// Union of one vertical group's per-layer id sets, fully encrypted under
/// the shared layer keys, ending up at the group head.
fn group_union(
    net: &mut Network,
    builder: &TreeBuilder,
    layer_keys: &[CommutativeKey],
    group: usize,
    sets: Vec<Vec<String>>,
    tag: &str,
) -> Result<EncryptedSet, ProtocolError> {
    let parties = net.group(group);
    let keys: Vec<&CommutativeKey> = layer_keys.iter().collect();
    secure_union_encrypted(net, &parties, &keys, &sets, builder.agreed_size, tag)
}

/// The per-node merged sets: one context union per vertical group and one
/// class union per class value (held by the class group).
fn node_unions(
    net: &mut Network,
    builder: &TreeBuilder,
    layer_keys: &[CommutativeKey],
    contexts: &NodeContexts,
) -> Result<(Vec<EncryptedSet>, Vec<EncryptedSet>), ProtocolError> {
    let mut unions = Vec::with_capacity(net.v);
    for i in 1..=net.v {
        let sets: Vec<Vec<String>> = (1..=net.h)
            .map(|j| contexts[&PartyId::new(i, j)].iter().cloned().collect())
            .collect();
        unions.push(group_union(net, builder, layer_keys, i, sets, "merge-union")?);
    }
    let v = net.v;
    let mut class_sets = Vec::with_capacity(builder.class_values.len());
    for class in &builder.class_values {
        let sets: Vec<Vec<String>> = (1..=net.h)
            .map(|j| {
                let p = PartyId::new(v, j);
                filter_ids(net, p, &contexts[&p], &builder.class_attr, class)
                    .into_iter()
                    .collect()
            })
            .collect();
        class_sets.push(group_union(net, builder, layer_keys, v, sets, "class-union")?);
    }
    Ok((unions, class_sets))
}

/// Ship every encrypted union the recipient does not already hold to it.
fn ship_sets(net: &mut Network, sets: &[EncryptedSet], to: PartyId, tag: &str) {
    for set in sets {
        if set.holder != to {
            net.send_ciphers(set.holder, to, tag, set.items.len());
        }
    }
}

fn class_hist(counts: &[u64]) -> ClassHistogram {
    ClassHistogram::from_counts(
        counts
            .iter()
            .enumerate()
            .map(|(slot, c)| (format!("{slot}"), *c)),
    )
}

fn build_node(
    net: &mut Network,
    builder: &mut TreeBuilder,
    layer_keys: &[CommutativeKey],
    contexts: &NodeContexts,
    remaining: &[Vec<String>],
    path: &str,
) -> Result<String, ProtocolError> {
    let node_id = builder.node_id(path);
    let class_rep = PartyId::new(net.v, 1);
    let class_group = net.v;

    // 1. emptiness of the joint attribute set
    if remaining_attrs_empty(net, builder, remaining)? {
        let (unions, class_sets) = node_unions(net, builder, layer_keys, contexts)?;
        ship_sets(net, &unions, class_rep, "merge-union");
        let counts = class_counts_at_rep(&unions, &class_sets);
        let spec = IdealCircuitSpec {
            name: "most-frequent-class".into(),
            function: CircuitFn::MostFrequent,
            providers: vec![class_rep],
            recipients: net
                .group(class_group)
                .into_iter()
                .map(Recipient::Party)
                .collect(),
            input_magnitude: builder.agreed_size as u64,
            taylor_terms: 1,
        };
        let out = ideal_circuit_eval(
            net,
            &spec,
            &[CircuitInput {
                from: class_rep,
                values: counts.iter().map(|&c| CircuitValue::Num(c)).collect(),
            }],
        )?;
        let slot = match out {
            CircuitOutput::Index(idx) => idx,
            _ => return Err(ProtocolError::SpecError("most-frequent non-index".into())),
        };
        return Ok(make_leaf(net, builder, &node_id, slot));
    }

    // 2. class label test on the merged, still encrypted sets
    let (unions, class_sets) = node_unions(net, builder, layer_keys, contexts)?;
    ship_sets(net, &unions, class_rep, "merge-union");
    let counts = class_counts_at_rep(&unions, &class_sets);
    let spec = IdealCircuitSpec {
        name: "single-class".into(),
        function: CircuitFn::AllZeroExceptOne,
        providers: vec![class_rep],
        recipients: net
            .group(class_group)
            .into_iter()
            .map(Recipient::Party)
            .collect(),
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: 1,
    };
    let out = ideal_circuit_eval(
        net,
        &spec,
        &[CircuitInput {
            from: class_rep,
            values: counts.iter().map(|&c| CircuitValue::Num(c)).collect(),
        }],
    )?;
    let uniform = match out {
        CircuitOutput::OptIndex(opt) => opt,
        _ => return Err(ProtocolError::SpecError("single-class non-optindex".into())),
    };
    net.announce_text(
        class_rep,
        "class-uniform",
        if uniform.is_some() { "true" } else { "false" },
    );
    if let Some(slot) = uniform {
        return Ok(make_leaf(net, builder, &node_id, slot));
    }

    // 3. default case: every group head receives the foreign unions, counts
    // tuples per value of its remaining attributes on the encrypted sets and
    // computes its gains in the clear
    let mut best_per_group: Vec<(f64, u64)> = Vec::with_capacity(net.v);
    let mut best_attr_per_group: Vec<Option<(String, Vec<String>)>> = Vec::with_capacity(net.v);
    for i in 1..=net.v {
        let rep = PartyId::new(i, 1);
        if remaining[i - 1].is_empty() {
            best_per_group.push((-1.0, u64::MAX));
            best_attr_per_group.push(None);
            continue;
        }
        let parent_counts = class_counts_at_rep(&unions, &class_sets);
        let parent = class_hist(&parent_counts);
        let mut best: Option<(f64, u64, String, Vec<String>)> = None;
        for attr in &remaining[i - 1] {
            // the merged sets travel to the counting head once per attribute
            ship_sets(net, &unions, rep, "merge-union");
            if i != class_group {
                ship_sets(net, &class_sets, rep, "class-union");
            }
            let mut children = Vec::new();
            let mut present = Vec::new();
            for value in &builder.domains[attr] {
                let sets: Vec<Vec<String>> = (1..=net.h)
                    .map(|j| {
                        let p = PartyId::new(i, j);
                        filter_ids(net, p, &contexts[&p], attr, value)
                            .into_iter()
                            .collect()
                    })
                    .collect();
                let value_union =
                    group_union(net, builder, layer_keys, i, sets, "value-union")?;
                let child_counts: Vec<u64> = class_sets
                    .iter()
                    .map(|c| value_union.intersection_size(unions.iter().chain([c])))
                    .collect();
                if child_counts.iter().sum::<u64>() > 0 {
                    present.push(value.clone());
                }
                children.push(class_hist(&child_counts));
            }
            let gain = info_gain(&parent, &children)?;
            let pos = builder.position(attr);
            if best
                .as_ref()
                .is_none_or(|(bg, bp, _, _)| {
                    gain > *bg + crate::id3::GAIN_EPS
                        || ((gain - *bg).abs() <= crate::id3::GAIN_EPS && pos < *bp)
                })
            {
                best = Some((gain, pos, attr.clone(), present));
            }
        }
        let (gain, pos, attr, present) = best.expect("group has remaining attributes");
        best_per_group.push((gain, pos));
        best_attr_per_group.push(Some((attr, present)));
    }

    // cross-group argmax over the heads' plaintext gains
    let providers: Vec<PartyId> = (1..=net.v).map(|i| PartyId::new(i, 1)).collect();
    let argmax_spec = IdealCircuitSpec {
        name: "best-group".into(),
        function: CircuitFn::ArgmaxGains,
        providers: providers.clone(),
        recipients: vec![Recipient::All],
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: 1,
    };
    let inputs: Vec<CircuitInput> = providers
        .iter()
        .zip(best_per_group.iter())
        .map(|(p, (gain, pos))| CircuitInput {
            from: *p,
            values: vec![CircuitValue::Real(*gain), CircuitValue::Num(*pos)],
        })
        .collect();
    let winner_group = match ideal_circuit_eval(net, &argmax_spec, &inputs)? {
        CircuitOutput::Index(idx) => idx + 1,
        _ => return Err(ProtocolError::SpecError("argmax non-index".into())),
    };
    let (attr, present_values) = best_attr_per_group[winner_group - 1]
        .clone()
        .expect("winning group has a candidate");

    // the winning head tells its group the node's attribute and values
    let rep = PartyId::new(winner_group, 1);
    for j in 2..=net.h {
        let mut payload = vec![attr.clone()];
        payload.extend(present_values.iter().cloned());
        net.reveal_to(
            rep,
            PartyId::new(winner_group, j),
            "split-detail",
            ObservedValue::Items(payload),
        );
    }

    builder.add_node(&node_id, winner_group, SkeletonKind::Interior);
    net.announce_text(rep, "node", &format!("{node_id} interior g{winner_group}"));
    let mut next_remaining = remaining.to_vec();
    next_remaining[winner_group - 1].retain(|a| *a != attr);

    let mut branches = BTreeMap::new();
    for (ordinal, value) in present_values.iter().enumerate() {
        let child_contexts: NodeContexts = contexts
            .iter()
            .map(|(p, ctx)| {
                if p.i == winner_group {
                    (*p, filter_ids(net, *p, ctx, &attr, value))
                } else {
                    (*p, ctx.clone())
                }
            })
            .collect();
        let child_id = build_node(
            net,
            builder,
            layer_keys,
            &child_contexts,
            &next_remaining,
            &format!("{path}.{ordinal}"),
        )?;
        builder.add_child(&node_id, &child_id);
        branches.insert(value.clone(), child_id);
    }
    for j in 1..=net.h {
        net.store_payload(
            PartyId::new(winner_group, j),
            &node_id,
            NodePayload::Interior {
                attribute: attr.clone(),
                branches: branches.clone(),
            },
        );
    }
    Ok(node_id)
}

/// Per-class tuple counts at the current node: the intersection of all the
/// merged context unions with each class union, computed locally on
/// ciphertexts by whoever holds them.
fn class_counts_at_rep(unions: &[EncryptedSet], class_sets: &[EncryptedSet]) -> Vec<u64> {
    class_sets
        .iter()
        .map(|c| {
            unions[0].intersection_size(unions.iter().skip(1).chain([c]))
        })
        .collect()
}

fn make_leaf(
    net: &mut Network,
    builder: &mut TreeBuilder,
    node_id: &str,
    class_slot: usize,
) -> String {
    let class = builder.class_values[class_slot].clone();
    builder.add_node(node_id, net.v, SkeletonKind::Leaf);
    for j in 1..=net.h {
        net.store_payload(
            PartyId::new(net.v, j),
            node_id,
            NodePayload::Leaf {
                class: class.clone(),
            },
        );
    }
    net.announce_text(PartyId::new(net.v, 1), "node", &format!("{node_id} leaf"));
    node_id.to_string()
}
