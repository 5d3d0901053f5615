//! Grid protocol, second evaluation order: merge vertically, develop
//! horizontally. Parties on the same horizontal layer intersect their
//! context sets through the intersection-size protocol, the per-layer counts
//! are added across layers by masked sums, and the resulting share pairs
//! feed the x·ln(x) protocol and a grouped argmax circuit. Counts, gains and
//! the winning attribute never surface; only the winning group does.

use std::collections::BTreeMap;

use crate::error::ProtocolError;
use crate::partynet::{Network, NodePayload, PartyId};
use crate::smpc::circuits::{
    ideal_circuit_eval, CircuitFn, CircuitInput, CircuitOutput, CircuitValue, IdealCircuitSpec,
    Recipient,
};
use crate::smpc::setops::secure_intersection_size_inner;
use crate::smpc::xlnx::x_ln_x_or_zero;
use crate::smpc::{Share, ShareDomain};

use super::{
    builder_setup, filter_ids, layer_counts_to_shares, remaining_attrs_empty, root_contexts,
    DistributedTree, NodeContexts, SkeletonKind, TreeBuilder,
};

/// Run the vertical-merge grid protocol (`v, h >= 2`); the class attribute
/// must live in the last vertical group.
pub fn ppid3_grid_vmerge(
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
    let contexts = root_contexts(net);
    let remaining = builder.group_attrs.clone();
    let root = build_node(net, &mut builder, &contexts, &remaining, "r")?;
    Ok(builder.into_tree(root))
}

/// Optional per-owner filters for one layer intersection.
#[derive(Clone, Copy)]
struct CountQuery<'a> {
    /// Restrict the owning group's set to `attr = value`.
    value_filter: Option<(usize, &'a str, &'a str)>,
    /// Restrict the class group's set to one class value.
    class_filter: Option<&'a str>,
}

/// One vertical merge: the layer's parties intersect their (possibly
/// filtered) context sets; the size is revealed to the given layer member.
fn layer_count(
    net: &mut Network,
    builder: &TreeBuilder,
    contexts: &NodeContexts,
    layer: usize,
    query: CountQuery,
    recipient: PartyId,
) -> Result<u64, ProtocolError> {
    let parties = net.layer(layer);
    let class_group = net.v;
    let sets: Vec<Vec<String>> = (1..=net.v)
        .map(|i| {
            let p = PartyId::new(i, layer);
            let mut ids = contexts[&p].clone();
            if let Some((group, attr, value)) = query.value_filter {
                if group == i {
                    ids = filter_ids(net, p, &ids, attr, value);
                }
            }
            if let Some(class) = query.class_filter {
                if i == class_group {
                    ids = filter_ids(net, p, &ids, &builder.class_attr, class);
                }
            }
            ids.into_iter().collect()
        })
        .collect();
    secure_intersection_size_inner(net, &parties, &sets, builder.agreed_size, &[recipient])
}

/// Per-layer counts for one query, collected at one group's parties, then
/// reduced to a cross-layer share pair at the group's first and last member.
fn merged_count_shares(
    net: &mut Network,
    builder: &TreeBuilder,
    contexts: &NodeContexts,
    group: usize,
    query: CountQuery,
) -> Result<(Share, Share), ProtocolError> {
    let mut counts = Vec::with_capacity(net.h);
    for j in 1..=net.h {
        counts.push(layer_count(
            net,
            builder,
            contexts,
            j,
            query,
            PartyId::new(group, j),
        )?);
    }
    let reps = net.group(group);
    layer_counts_to_shares(net, &reps, &counts, builder.share_domain, "layer-sum")
}

/// Share pairs of the per-class totals at this node, held by the class
/// group's first and last parties.
fn class_total_shares(
    net: &mut Network,
    builder: &TreeBuilder,
    contexts: &NodeContexts,
) -> Result<Vec<(Share, Share)>, ProtocolError> {
    let class_values = builder.class_values.clone();
    class_values
        .iter()
        .map(|class| {
            merged_count_shares(
                net,
                builder,
                contexts,
                net.v,
                CountQuery {
                    value_filter: None,
                    class_filter: Some(class),
                },
            )
        })
        .collect()
}

/// Per-value count share pairs of one candidate attribute.
type ValueCountShares = Vec<(String, (Share, Share))>;

fn share_pair_inputs(pairs: &[(Share, Share)]) -> (Vec<CircuitValue>, Vec<CircuitValue>) {
    (
        pairs.iter().map(|(a, _)| CircuitValue::Num(a.raw)).collect(),
        pairs.iter().map(|(_, b)| CircuitValue::Num(b.raw)).collect(),
    )
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

fn build_node(
    net: &mut Network,
    builder: &mut TreeBuilder,
    contexts: &NodeContexts,
    remaining: &[Vec<String>],
    path: &str,
) -> Result<String, ProtocolError> {
    let node_id = builder.node_id(path);
    let class_group = net.v;
    let class_head = PartyId::new(class_group, 1);
    let class_tail = PartyId::new(class_group, net.h);

    // 1. emptiness of the joint attribute set
    if remaining_attrs_empty(net, builder, remaining)? {
        let pairs = class_total_shares(net, builder, contexts)?;
        let (a_vals, b_vals) = share_pair_inputs(&pairs);
        let spec = IdealCircuitSpec {
            name: "most-frequent-class".into(),
            function: CircuitFn::MostFrequentShares {
                domain: builder.share_domain,
            },
            providers: vec![class_head, class_tail],
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
            &[
                CircuitInput {
                    from: class_head,
                    values: a_vals,
                },
                CircuitInput {
                    from: class_tail,
                    values: b_vals,
                },
            ],
        )?;
        let slot = match out {
            CircuitOutput::Index(idx) => idx,
            _ => return Err(ProtocolError::SpecError("most-frequent non-index".into())),
        };
        return Ok(make_leaf(net, builder, &node_id, slot));
    }

    // 2. class label test: all per-class sums zero except one?
    let pairs = class_total_shares(net, builder, contexts)?;
    let (a_vals, b_vals) = share_pair_inputs(&pairs);
    let spec = IdealCircuitSpec {
        name: "single-class".into(),
        function: CircuitFn::AllZeroExceptOneShares {
            domain: builder.share_domain,
        },
        providers: vec![class_head, class_tail],
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
        &[
            CircuitInput {
                from: class_head,
                values: a_vals,
            },
            CircuitInput {
                from: class_tail,
                values: b_vals,
            },
        ],
    )?;
    let uniform = match out {
        CircuitOutput::OptIndex(opt) => opt,
        _ => return Err(ProtocolError::SpecError("single-class non-optindex".into())),
    };
    net.announce_text(
        class_head,
        "class-uniform",
        if uniform.is_some() { "true" } else { "false" },
    );
    if let Some(slot) = uniform {
        return Ok(make_leaf(net, builder, &node_id, slot));
    }

    // 3. default case: per attribute, the 1 + d + m + d*m merged counts feed
    // x ln x between the owning group's first and last parties; a grouped
    // argmax circuit picks the winner across groups
    let fixed = ShareDomain::fixed(builder.share_domain.modulus_bits, net.cfg.frac_bits);
    let mut circuit_inputs: Vec<CircuitInput> = Vec::new();
    // per group: the value-count share pairs of each candidate, kept for the
    // branch presence test of the winner
    let mut value_pairs_per_group: Vec<Vec<ValueCountShares>> = Vec::new();
    for i in 1..=net.v {
        let head = PartyId::new(i, 1);
        let tail = PartyId::new(i, net.h);
        let mut a_vals = Vec::new();
        let mut b_vals = Vec::new();
        let mut group_value_pairs = Vec::new();
        for attr in &remaining[i - 1] {
            let mut e_a = Share::from_raw(0, fixed);
            let mut e_b = Share::from_raw(0, fixed);
            // N: tuples reaching the node
            let (n_a, n_b) = merged_count_shares(
                net,
                builder,
                contexts,
                i,
                CountQuery {
                    value_filter: None,
                    class_filter: None,
                },
            )?;
            let (s_a, s_b) = x_ln_x_or_zero(net, head, tail, &n_a, &n_b, net.cfg.taylor_terms)?;
            e_a = e_a.add(&s_a);
            e_b = e_b.add(&s_b);
            // N_c: per class value
            for class in &builder.class_values.clone() {
                let (c_a, c_b) = merged_count_shares(
                    net,
                    builder,
                    contexts,
                    i,
                    CountQuery {
                        value_filter: None,
                        class_filter: Some(class),
                    },
                )?;
                let (s_a, s_b) =
                    x_ln_x_or_zero(net, head, tail, &c_a, &c_b, net.cfg.taylor_terms)?;
                e_a = e_a.add(&s_a.neg());
                e_b = e_b.add(&s_b.neg());
            }
            // N_a and N_ac: per attribute value, plain and per class
            let mut pairs_for_attr = Vec::new();
            for value in &builder.domains[attr].clone() {
                let (va, vb) = merged_count_shares(
                    net,
                    builder,
                    contexts,
                    i,
                    CountQuery {
                        value_filter: Some((i, attr, value)),
                        class_filter: None,
                    },
                )?;
                let (s_a, s_b) =
                    x_ln_x_or_zero(net, head, tail, &va, &vb, net.cfg.taylor_terms)?;
                e_a = e_a.add(&s_a.neg());
                e_b = e_b.add(&s_b.neg());
                pairs_for_attr.push((value.clone(), (va, vb)));
                for class in &builder.class_values.clone() {
                    let (ca, cb) = merged_count_shares(
                        net,
                        builder,
                        contexts,
                        i,
                        CountQuery {
                            value_filter: Some((i, attr, value)),
                            class_filter: Some(class),
                        },
                    )?;
                    let (s_a, s_b) =
                        x_ln_x_or_zero(net, head, tail, &ca, &cb, net.cfg.taylor_terms)?;
                    e_a = e_a.add(&s_a);
                    e_b = e_b.add(&s_b);
                }
            }
            a_vals.push(CircuitValue::Num(e_a.raw));
            a_vals.push(CircuitValue::Num(builder.position(attr)));
            b_vals.push(CircuitValue::Num(e_b.raw));
            group_value_pairs.push(pairs_for_attr);
        }
        circuit_inputs.push(CircuitInput {
            from: head,
            values: a_vals,
        });
        circuit_inputs.push(CircuitInput {
            from: tail,
            values: b_vals,
        });
        value_pairs_per_group.push(group_value_pairs);
    }
    let providers: Vec<PartyId> = circuit_inputs.iter().map(|i| i.from).collect();
    let argmax_spec = IdealCircuitSpec {
        name: "best-group".into(),
        function: CircuitFn::ArgmaxGroupedShares { domain: fixed },
        providers,
        recipients: vec![Recipient::All],
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: net.cfg.taylor_terms,
    };
    let (winner_group, slot) = match ideal_circuit_eval(net, &argmax_spec, &circuit_inputs)? {
        CircuitOutput::GroupSlot { group, slot } => (group + 1, slot),
        _ => return Err(ProtocolError::SpecError("argmax non-group-slot".into())),
    };
    let attr = remaining[winner_group - 1][slot].clone();
    let win_head = PartyId::new(winner_group, 1);
    let win_tail = PartyId::new(winner_group, net.h);
    // the winning slot goes to the winning group only
    for j in 1..=net.h {
        net.reveal_to(
            win_head,
            PartyId::new(winner_group, j),
            "split-slot",
            crate::partynet::ObservedValue::Num(slot as u64),
        );
    }

    // branch presence from the kept N_a share pairs
    let win_pairs = &value_pairs_per_group[winner_group - 1][slot];
    let (a_vals, b_vals): (Vec<CircuitValue>, Vec<CircuitValue>) = (
        win_pairs
            .iter()
            .map(|(_, (a, _))| CircuitValue::Num(a.raw))
            .collect(),
        win_pairs
            .iter()
            .map(|(_, (_, b))| CircuitValue::Num(b.raw))
            .collect(),
    );
    let presence_spec = IdealCircuitSpec {
        name: "branch-presence".into(),
        function: CircuitFn::ArePositive {
            domain: builder.share_domain,
        },
        providers: vec![win_head, win_tail],
        recipients: net
            .group(winner_group)
            .into_iter()
            .map(Recipient::Party)
            .collect(),
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: 1,
    };
    let flags = match ideal_circuit_eval(
        net,
        &presence_spec,
        &[
            CircuitInput {
                from: win_head,
                values: a_vals,
            },
            CircuitInput {
                from: win_tail,
                values: b_vals,
            },
        ],
    )? {
        CircuitOutput::Flags(f) => f,
        _ => return Err(ProtocolError::SpecError("presence non-flags".into())),
    };
    let present_values: Vec<String> = win_pairs
        .iter()
        .zip(flags.iter())
        .filter(|(_, &present)| present)
        .map(|((value, _), _)| value.clone())
        .collect();

    builder.add_node(&node_id, winner_group, SkeletonKind::Interior);
    net.announce_text(
        win_head,
        "node",
        &format!("{node_id} interior g{winner_group}"),
    );
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
