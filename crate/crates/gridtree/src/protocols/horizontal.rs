//! Privacy-preserving ID3 over horizontally partitioned data with more than
//! two parties. Every party holds the full schema, so the induced tree is a
//! joint output known to all of them; what stays private are the individual
//! tuples. Class counts for majority leaves go through the secure sum
//! protocol, the uniform-class check through the union variant, and the
//! best-attribute selection through masked partial sums feeding the x·ln(x)
//! protocol and an argmax circuit.

use std::collections::BTreeMap;

use crate::error::ProtocolError;
use crate::partynet::{Network, NodePayload, PartyId};
use crate::smpc::circuits::{
    ideal_circuit_eval, CircuitFn, CircuitInput, CircuitOutput, CircuitValue, IdealCircuitSpec,
    Recipient,
};
use crate::smpc::setops::{secure_union, secure_union_class_variant, ClassInput, ClassVerdict};
use crate::smpc::xlnx::x_ln_x_or_zero;
use crate::smpc::{partial_masked_sum, secure_sum, Share, ShareDomain, SumDomain};

use super::{
    builder_setup, filter_ids, root_contexts, DistributedTree, NodeContexts, SkeletonKind,
    TreeBuilder,
};

/// Run the horizontal protocol over a `v = 1` partition with more than two
/// parties. The class attribute is shared by everyone, so leaf payloads and
/// split payloads are stored at every party.
pub fn ppid3_horizontal(
    net: &mut Network,
    attr_positions: &BTreeMap<String, usize>,
    class_attr: &str,
) -> Result<DistributedTree, ProtocolError> {
    if net.v != 1 {
        return Err(ProtocolError::ConfigError(format!(
            "horizontal protocol needs v = 1, got v = {}",
            net.v
        )));
    }
    if net.h <= 2 {
        return Err(ProtocolError::TooFewParties(net.h));
    }
    let mut builder = builder_setup(net, attr_positions, class_attr)?;
    let parties = net.group(1);
    let contexts = root_contexts(net);
    let remaining = builder.group_attrs[0].clone();
    let root = build_node(net, &mut builder, &parties, &contexts, &remaining, "r")?;
    Ok(builder.into_tree(root))
}

fn build_node(
    net: &mut Network,
    builder: &mut TreeBuilder,
    parties: &[PartyId],
    contexts: &NodeContexts,
    remaining: &[String],
    path: &str,
) -> Result<String, ProtocolError> {
    let node_id = builder.node_id(path);

    // emptiness test on the attribute set: public knowledge here, since all
    // parties share the schema and see every split
    if remaining.is_empty() {
        return majority_leaf(net, builder, parties, contexts, &node_id);
    }

    // class label test via the union variant
    let class_inputs: Vec<ClassInput> = parties
        .iter()
        .map(|p| {
            let frag = &net.party(*p).fragment;
            let mut values: Vec<&str> = contexts[p]
                .iter()
                .filter_map(|id| frag.value_of(id, &builder.class_attr))
                .collect();
            values.sort();
            values.dedup();
            match values.as_slice() {
                [] => ClassInput::Empty,
                [single] => ClassInput::Value(single.to_string()),
                _ => ClassInput::Bottom,
            }
        })
        .collect();
    if let ClassVerdict::Uniform(class) =
        secure_union_class_variant(net, parties, &class_inputs)?
    {
        builder.add_node(&node_id, 1, SkeletonKind::Leaf);
        for p in parties {
            net.store_payload(*p, &node_id, NodePayload::Leaf { class: class.clone() });
        }
        net.announce_text(parties[0], "node", &format!("{node_id} leaf"));
        return Ok(node_id);
    }

    // default case: best attribute via masked sums + x ln x + argmax circuit
    let alice = parties[0];
    let bob = *parties.last().unwrap();
    let mut gain_inputs_a = Vec::new();
    let mut gain_inputs_b = Vec::new();
    for attr in remaining {
        let (e_a, e_b) = attribute_expression_shares(net, builder, parties, contexts, attr)?;
        gain_inputs_a.push(CircuitValue::Num(e_a.raw));
        gain_inputs_a.push(CircuitValue::Num(builder.position(attr)));
        gain_inputs_b.push(CircuitValue::Num(e_b.raw));
    }
    let argmax_spec = IdealCircuitSpec {
        name: "best-attribute".into(),
        function: CircuitFn::ArgmaxGainShares {
            domain: ShareDomain::fixed(builder.share_domain.modulus_bits, net.cfg.frac_bits),
        },
        providers: vec![alice, bob],
        recipients: vec![Recipient::All],
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: net.cfg.taylor_terms,
    };
    let winner = match ideal_circuit_eval(
        net,
        &argmax_spec,
        &[
            CircuitInput {
                from: alice,
                values: gain_inputs_a,
            },
            CircuitInput {
                from: bob,
                values: gain_inputs_b,
            },
        ],
    )? {
        CircuitOutput::Index(idx) => remaining[idx].clone(),
        _ => return Err(ProtocolError::SpecError("argmax returned non-index".into())),
    };

    // the split attribute is part of the joint output in the horizontal case
    net.announce_text(alice, "split-attribute", &winner);

    // branch values: union of the locally present values of the winner
    let value_sets: Vec<Vec<String>> = parties
        .iter()
        .map(|p| {
            let frag = &net.party(*p).fragment;
            let mut vals: Vec<String> = contexts[p]
                .iter()
                .filter_map(|id| frag.value_of(id, &winner).map(str::to_string))
                .collect();
            vals.sort();
            vals.dedup();
            vals
        })
        .collect();
    let branch_values = secure_union(
        net,
        parties,
        &value_sets,
        builder.domains[&winner].len(),
    )?;

    builder.add_node(&node_id, 1, SkeletonKind::Interior);
    net.announce_text(alice, "node", &format!("{node_id} interior g1"));
    let next_remaining: Vec<String> = remaining
        .iter()
        .filter(|a| **a != winner)
        .cloned()
        .collect();
    let mut branches = BTreeMap::new();
    for (ordinal, value) in branch_values.iter().enumerate() {
        let child_contexts: NodeContexts = parties
            .iter()
            .map(|p| (*p, filter_ids(net, *p, &contexts[p], &winner, value)))
            .collect();
        let child_id = build_node(
            net,
            builder,
            parties,
            &child_contexts,
            &next_remaining,
            &format!("{path}.{ordinal}"),
        )?;
        builder.add_child(&node_id, &child_id);
        branches.insert(value.clone(), child_id);
    }
    for p in parties {
        net.store_payload(
            *p,
            &node_id,
            NodePayload::Interior {
                attribute: winner.clone(),
                branches: branches.clone(),
            },
        );
    }
    Ok(node_id)
}

/// Expression shares whose argmax across attributes equals the information
/// gain argmax: sum over values and classes of x·ln(x) of the joint counts,
/// minus the per-value terms. Counts never leave the parties; each one is
/// reduced to a share pair by a masked partial sum and pushed through the
/// x·ln(x) protocol.
fn attribute_expression_shares(
    net: &mut Network,
    builder: &TreeBuilder,
    parties: &[PartyId],
    contexts: &NodeContexts,
    attr: &str,
) -> Result<(Share, Share), ProtocolError> {
    let alice = parties[0];
    let bob = *parties.last().unwrap();
    let fixed = ShareDomain::fixed(builder.share_domain.modulus_bits, net.cfg.frac_bits);
    let mut e_a = Share::from_raw(0, fixed);
    let mut e_b = Share::from_raw(0, fixed);
    let values = builder.domains[attr].clone();
    let classes = builder.class_values.clone();
    for value in &values {
        // N_v: tuples at this node with attr = value
        let counts: Vec<u64> = parties
            .iter()
            .map(|p| filter_ids(net, *p, &contexts[p], attr, value).len() as u64)
            .collect();
        let (x_a, x_b) =
            partial_masked_sum(net, parties, &counts, builder.share_domain, "gain-count")?;
        let (s_a, s_b) = x_ln_x_or_zero(net, alice, bob, &x_a, &x_b, net.cfg.taylor_terms)?;
        e_a = e_a.add(&s_a.neg());
        e_b = e_b.add(&s_b.neg());
        for class in &classes {
            // N_{v,c}: same, restricted to one class value
            let counts: Vec<u64> = parties
                .iter()
                .map(|p| {
                    let frag = &net.party(*p).fragment;
                    filter_ids(net, *p, &contexts[p], attr, value)
                        .iter()
                        .filter(|id| frag.value_of(id, &builder.class_attr) == Some(class))
                        .count() as u64
                })
                .collect();
            let (x_a, x_b) =
                partial_masked_sum(net, parties, &counts, builder.share_domain, "gain-count")?;
            let (s_a, s_b) =
                x_ln_x_or_zero(net, alice, bob, &x_a, &x_b, net.cfg.taylor_terms)?;
            e_a = e_a.add(&s_a);
            e_b = e_b.add(&s_b);
        }
    }
    Ok((e_a, e_b))
}

/// Majority-class leaf: one announced secure sum per class value, then every
/// party picks the same maximum (lowest class value on ties).
fn majority_leaf(
    net: &mut Network,
    builder: &mut TreeBuilder,
    parties: &[PartyId],
    contexts: &NodeContexts,
    node_id: &str,
) -> Result<String, ProtocolError> {
    let sum_domain = SumDomain::pow2_above(builder.agreed_size as u64);
    let mut best: Option<(u64, &String)> = None;
    for class in &builder.class_values {
        let counts: Vec<u64> = parties
            .iter()
            .map(|p| {
                let frag = &net.party(*p).fragment;
                contexts[p]
                    .iter()
                    .filter(|id| frag.value_of(id, &builder.class_attr) == Some(class))
                    .count() as u64
            })
            .collect();
        let total = secure_sum(net, parties, &counts, &sum_domain)?;
        if best.is_none_or(|(b, _)| total > b) {
            best = Some((total, class));
        }
    }
    let class = best.expect("class domain is non-empty").1.clone();
    builder.add_node(node_id, 1, SkeletonKind::Leaf);
    for p in parties {
        net.store_payload(*p, node_id, NodePayload::Leaf { class: class.clone() });
    }
    net.announce_text(parties[0], "node", &format!("{node_id} leaf"));
    Ok(node_id.to_string())
}
