//! The privacy-preserving tree protocols: ID3 over horizontally partitioned
//! data for more than two parties, the two grid evaluation orders (merge
//! horizontally / develop vertically, and the reverse), and distributed
//! classification over the resulting tree.
//!
//! All three induction protocols produce a [`DistributedTree`]: a public
//! skeleton of node ids, owner groups and child links, with the actual split
//! attributes, branch values and leaf labels held only by the parties
//! entitled to them.

mod classify;
mod horizontal;
mod merge_h;
mod merge_v;

pub use classify::{classify_distributed, count_control_transfers, ClassifyOutcome};
pub use horizontal::ppid3_horizontal;
pub use merge_h::ppid3_grid_hmerge;
pub use merge_v::ppid3_grid_vmerge;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GridPartition, Relation};
use crate::error::ProtocolError;
use crate::id3::PlainTree;
use crate::partynet::{Network, NodePayload, ObservedValue, PartyId};
use crate::smpc::circuits::{
    ideal_circuit_eval, CircuitFn, CircuitInput, CircuitOutput, CircuitValue, IdealCircuitSpec,
    Recipient,
};
use crate::smpc::{partial_masked_sum, Share, ShareDomain};

/// Width of the share modulus used for masked sums and gain accumulation.
pub const SHARE_BITS: u32 = 62;

/// Absolute tolerance on a reconstructed x·ln(x) value.
pub const TAU_XLNX: f64 = 1e-3;

/// Tolerance on information gain (base-2, per-tuple scale) below which two
/// attribute choices are considered interchangeable. The x·ln(x) error enters
/// the comparison once per accumulated expression, scaled down by N·ln 2.
pub fn tau_gain(n_tuples: u64) -> f64 {
    10.0 * TAU_XLNX / (n_tuples.max(1) as f64 * std::f64::consts::LN_2)
}

/// Public skeleton node of a distributed tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonNode {
    pub owner_group: usize,
    pub kind: SkeletonKind,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkeletonKind {
    Leaf,
    Interior,
}

/// The public view of a jointly induced tree: every party knows the node
/// ids, which group owns each decision, and the child links — nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributedTree {
    pub root: String,
    pub nodes: BTreeMap<String, SkeletonNode>,
}

impl DistributedTree {
    pub fn node(&self, id: &str) -> Result<&SkeletonNode, ProtocolError> {
        self.nodes
            .get(id)
            .ok_or_else(|| ProtocolError::DanglingNode(id.to_string()))
    }
}

/// Per-party tuple-id sets consistent with the path to the current node,
/// each filtered only on that party's own attributes.
pub type NodeContexts = BTreeMap<PartyId, BTreeSet<String>>;

/// Root contexts: every party starts with its full fragment.
pub fn root_contexts(net: &Network) -> NodeContexts {
    net.parties()
        .map(|p| (p.id, p.fragment.ids().into_iter().collect()))
        .collect()
}

/// Shared recursion state of a tree-building run.
pub(crate) struct TreeBuilder {
    pub run_id: String,
    pub nodes: BTreeMap<String, SkeletonNode>,
    /// Decision attributes per vertical group, ordered by schema position.
    pub group_attrs: Vec<Vec<String>>,
    /// Group-internal value domains, sorted.
    pub domains: BTreeMap<String, Vec<String>>,
    /// Global schema rank of every decision attribute; fed into argmax
    /// circuits as the deterministic tie-break, never revealed to parties.
    pub positions: BTreeMap<String, usize>,
    /// Class value domain, sorted; known to the class-holding group.
    pub class_values: Vec<String>,
    pub class_attr: String,
    pub agreed_size: usize,
    pub share_domain: ShareDomain,
}

impl TreeBuilder {
    pub fn node_id(&self, path: &str) -> String {
        format!("{}/{}", self.run_id, path)
    }

    pub fn add_node(&mut self, id: &str, owner_group: usize, kind: SkeletonKind) {
        self.nodes.insert(
            id.to_string(),
            SkeletonNode {
                owner_group,
                kind,
                children: Vec::new(),
            },
        );
    }

    pub fn add_child(&mut self, parent: &str, child: &str) {
        self.nodes
            .get_mut(parent)
            .expect("parent exists")
            .children
            .push(child.to_string());
    }

    pub fn position(&self, attr: &str) -> u64 {
        self.positions.get(attr).copied().unwrap_or(usize::MAX) as u64
    }

    pub fn into_tree(self, root: String) -> DistributedTree {
        DistributedTree {
            root,
            nodes: self.nodes,
        }
    }
}

/// Build the common recursion state. Value domains are synchronized within
/// each vertical group: attribute co-owners exchange the value sets of their
/// shared columns, which stays inside the group.
pub(crate) fn builder_setup(
    net: &mut Network,
    attr_positions: &BTreeMap<String, usize>,
    class_attr: &str,
) -> Result<TreeBuilder, ProtocolError> {
    let run_id = format!("{:08x}", net.rng().gen::<u32>());
    let mut group_attrs = Vec::with_capacity(net.v);
    let mut domains: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for i in 1..=net.v {
        // the group's columns, key column excluded
        let group_cols: Vec<String> = net
            .party(PartyId::new(i, 1))
            .fragment
            .columns
            .iter()
            .skip(1)
            .cloned()
            .collect();
        let mut attrs: Vec<String> = group_cols
            .iter()
            .filter(|a| *a != class_attr)
            .cloned()
            .collect();
        attrs.sort_by_key(|a| attr_positions.get(a).copied().unwrap_or(usize::MAX));
        // group-internal domain sync: members report their local value sets
        // to the group head, which shares the merged domains back
        let head = PartyId::new(i, 1);
        for j in 1..=net.h {
            let member = PartyId::new(i, j);
            for attr in &group_cols {
                let local: Vec<String> = net
                    .party(member)
                    .fragment
                    .local_domain(attr)
                    .into_iter()
                    .collect();
                if member != head {
                    net.send_text(member, head, "domain-sync", &format!("{}", local.len()));
                }
                domains.entry(attr.clone()).or_default().extend(local);
            }
        }
        for j in 2..=net.h {
            let member = PartyId::new(i, j);
            for attr in &group_cols {
                let merged: Vec<String> = domains[attr].iter().cloned().collect();
                net.reveal_to(head, member, "domain-sync", ObservedValue::Items(merged));
            }
        }
        group_attrs.push(attrs);
    }
    let class_values: Vec<String> = domains
        .get(class_attr)
        .map(|s| s.iter().cloned().collect())
        .unwrap_or_default();
    if class_values.is_empty() {
        return Err(ProtocolError::ConfigError(
            "class attribute has no values".into(),
        ));
    }
    let total_tuples: usize = (1..=net.h)
        .map(|j| net.party(PartyId::new(1, j)).fragment.rows.len())
        .sum();
    if total_tuples == 0 {
        return Err(ProtocolError::Id3(crate::error::Id3Error::EmptyTraining));
    }
    let agreed_size = if net.cfg.agreed_size > 0 {
        net.cfg.agreed_size
    } else {
        total_tuples
    };
    Ok(TreeBuilder {
        run_id,
        nodes: BTreeMap::new(),
        group_attrs,
        domains: domains
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
        positions: attr_positions.clone(),
        class_values,
        class_attr: class_attr.to_string(),
        agreed_size,
        share_domain: ShareDomain::counts(SHARE_BITS),
    })
}

/// Ids in a party's context whose row satisfies `attr = value` (the party
/// must own the attribute).
pub(crate) fn filter_ids(
    net: &Network,
    party: PartyId,
    ctx: &BTreeSet<String>,
    attr: &str,
    value: &str,
) -> BTreeSet<String> {
    let frag = &net.party(party).fragment;
    ctx.iter()
        .filter(|id| frag.value_of(id, attr) == Some(value))
        .cloned()
        .collect()
}

/// The grid emptiness test: one representative per vertical group (layer 1)
/// contributes its group's remaining-attribute count to a masked partial sum
/// and a circuit tells everyone whether the total is zero.
pub(crate) fn remaining_attrs_empty(
    net: &mut Network,
    builder: &TreeBuilder,
    remaining: &[Vec<String>],
) -> Result<bool, ProtocolError> {
    let reps: Vec<PartyId> = (1..=remaining.len()).map(|i| PartyId::new(i, 1)).collect();
    let counts: Vec<u64> = remaining.iter().map(|r| r.len() as u64).collect();
    let (mask_share, masked) =
        partial_masked_sum(net, &reps, &counts, builder.share_domain, "attrs-left")?;
    let spec = IdealCircuitSpec {
        name: "attrs-empty".into(),
        function: CircuitFn::IsZeroMasked {
            domain: builder.share_domain,
        },
        providers: vec![*reps.last().unwrap(), reps[0]],
        recipients: vec![Recipient::All],
        input_magnitude: builder.agreed_size as u64,
        taylor_terms: 1,
    };
    let out = ideal_circuit_eval(
        net,
        &spec,
        &[
            CircuitInput {
                from: *reps.last().unwrap(),
                values: vec![CircuitValue::Num(masked.raw)],
            },
            CircuitInput {
                from: reps[0],
                values: vec![CircuitValue::Num(mask_share.raw)],
            },
        ],
    )?;
    match out {
        CircuitOutput::Bool(b) => Ok(b),
        _ => Err(ProtocolError::SpecError("is-zero returned non-bool".into())),
    }
}

/// Turn per-layer counts held by one group's parties into a two-party share
/// pair. With two layers the counts already are a share pair; with more, a
/// masked partial sum runs along the group.
pub(crate) fn layer_counts_to_shares(
    net: &mut Network,
    reps: &[PartyId],
    counts: &[u64],
    domain: ShareDomain,
    tag: &str,
) -> Result<(Share, Share), ProtocolError> {
    if reps.len() == 2 {
        return Ok((
            Share::from_raw(counts[0], domain),
            Share::from_raw(counts[1], domain),
        ));
    }
    partial_masked_sum(net, reps, counts, domain, tag)
}

/// Merge every party's node payloads into one map for rendering and audits.
pub fn collect_payloads(net: &Network) -> BTreeMap<String, BTreeMap<String, NodePayload>> {
    net.parties()
        .map(|p| (p.id.to_string(), p.node_payloads.clone()))
        .collect()
}

/// Which induction protocol to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Horizontal,
    GridHmerge,
    GridVmerge,
}

impl std::str::FromStr for Strategy {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "horizontal" => Ok(Strategy::Horizontal),
            "grid-hmerge" => Ok(Strategy::GridHmerge),
            "grid-vmerge" => Ok(Strategy::GridVmerge),
            other => Err(ProtocolError::ConfigError(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Horizontal => "horizontal",
            Strategy::GridHmerge => "grid-hmerge",
            Strategy::GridVmerge => "grid-vmerge",
        })
    }
}

/// Everything one induction run produces.
pub struct RunOutput {
    pub tree: DistributedTree,
    pub payloads: BTreeMap<String, BTreeMap<String, NodePayload>>,
    pub transcript: crate::partynet::Transcript,
    /// Audit findings collected right after the run (empty means clean).
    pub audit: Vec<String>,
}

/// Partition the relation's fragments onto a fresh network, run the chosen
/// protocol and collect its artifacts.
pub fn run_strategy(
    rel: &Relation,
    partition: &GridPartition,
    strategy: Strategy,
    cfg: crate::partynet::NetConfig,
    seed: u64,
) -> Result<RunOutput, ProtocolError> {
    let fragments = crate::dataset::all_fragments(rel, partition);
    let positions: BTreeMap<String, usize> = rel
        .decision_attrs()
        .into_iter()
        .enumerate()
        .map(|(n, a)| (a, n))
        .collect();
    let class_attr = rel.class_attr.clone();
    let ((tree, payloads, audit), transcript) = crate::partynet::run_protocol(
        partition,
        &fragments,
        cfg,
        seed,
        |net| {
            let tree = match strategy {
                Strategy::Horizontal => ppid3_horizontal(net, &positions, &class_attr)?,
                Strategy::GridHmerge => ppid3_grid_hmerge(net, &positions, &class_attr)?,
                Strategy::GridVmerge => ppid3_grid_vmerge(net, &positions, &class_attr)?,
            };
            let payloads = collect_payloads(net);
            let audit = visibility_audit(net, rel, partition);
            Ok((tree, payloads, audit))
        },
    )?;
    Ok(RunOutput {
        tree,
        payloads,
        transcript,
        audit,
    })
}

/// Reassemble the plaintext tree from the public skeleton and all parties'
/// private payloads. Test-only oracle hook: refuses to run unless test mode
/// is set.
pub fn render_plaintext(
    tree: &DistributedTree,
    payloads: &BTreeMap<String, BTreeMap<String, NodePayload>>,
    test_mode: bool,
) -> Result<PlainTree, ProtocolError> {
    if !test_mode {
        return Err(ProtocolError::Forbidden);
    }
    render_node(tree, payloads, &tree.root)
}

/// Render straight from a finished network.
pub fn render_from_net(net: &Network, tree: &DistributedTree) -> Result<PlainTree, ProtocolError> {
    render_plaintext(tree, &collect_payloads(net), net.cfg.test_mode)
}

fn render_node(
    tree: &DistributedTree,
    payloads: &BTreeMap<String, BTreeMap<String, NodePayload>>,
    id: &str,
) -> Result<PlainTree, ProtocolError> {
    tree.node(id)?;
    let payload = payloads
        .values()
        .find_map(|per_party| per_party.get(id))
        .ok_or_else(|| ProtocolError::DanglingNode(format!("{id} has no payload")))?;
    match payload {
        NodePayload::Leaf { class } => Ok(PlainTree::Leaf {
            class: class.clone(),
        }),
        NodePayload::Interior {
            attribute,
            branches,
        } => {
            let mut children = BTreeMap::new();
            for (value, child_id) in branches {
                children.insert(value.clone(), render_node(tree, payloads, child_id)?);
            }
            Ok(PlainTree::Interior {
                attribute: attribute.clone(),
                children,
            })
        }
    }
}

/// Post-run privacy scan: walks every party's persisted state (payloads and
/// wire observations) and reports any foreign attribute name, attribute
/// value or class label it finds. Tokens are matched exactly, after
/// splitting composite announcements on separators.
pub fn visibility_audit(net: &Network, rel: &Relation, partition: &GridPartition) -> Vec<String> {
    let mut violations = Vec::new();
    let class_group = partition.v;
    let all_attrs: BTreeSet<&String> = rel
        .schema
        .iter()
        .filter(|a| **a != rel.id_attr)
        .collect();
    for party in net.parties() {
        let i = party.id.i;
        let own_attrs: BTreeSet<&String> = partition.attr_groups[i - 1].iter().collect();
        let is_class_holder = i == class_group;
        let mut own_values: BTreeSet<&String> = BTreeSet::new();
        for attr in &own_attrs {
            if let Some(dom) = rel.domains.get(*attr) {
                own_values.extend(dom.iter());
            }
        }
        let foreign_attrs: BTreeSet<&String> =
            all_attrs.difference(&own_attrs).copied().collect();
        let mut foreign_values: BTreeSet<&String> = BTreeSet::new();
        for attr in &foreign_attrs {
            if let Some(dom) = rel.domains.get(*attr) {
                foreign_values.extend(dom.iter());
            }
        }
        foreign_values = foreign_values.difference(&own_values).copied().collect();
        let class_labels: BTreeSet<&String> = rel.domains[&rel.class_attr].iter().collect();

        let check_token = |token: &str, place: &str| -> Option<String> {
            let t = token.to_string();
            if foreign_attrs.contains(&t) {
                Some(format!(
                    "{}: foreign attribute name `{token}` in {place}",
                    party.id
                ))
            } else if foreign_values.contains(&t) {
                Some(format!(
                    "{}: foreign attribute value `{token}` in {place}",
                    party.id
                ))
            } else if !is_class_holder && class_labels.contains(&t) && !own_values.contains(&t) {
                Some(format!("{}: class label `{token}` in {place}", party.id))
            } else {
                None
            }
        };

        for (node, payload) in &party.node_payloads {
            match payload {
                NodePayload::Interior {
                    attribute,
                    branches,
                } => {
                    violations.extend(check_token(attribute, &format!("payload of {node}")));
                    for value in branches.keys() {
                        violations.extend(check_token(value, &format!("payload of {node}")));
                    }
                }
                NodePayload::Leaf { class } => {
                    if !is_class_holder {
                        violations.push(format!(
                            "{}: leaf value `{class}` held by non-class party ({node})",
                            party.id
                        ));
                    }
                }
            }
        }
        for obs in &party.observations {
            match &obs.value {
                ObservedValue::Text(text) => {
                    for token in text.split([':', ',', '/', ' ', '"', '{', '}', '[', ']']) {
                        if !token.is_empty() {
                            violations
                                .extend(check_token(token, &format!("observation `{}`", obs.tag)));
                        }
                    }
                }
                ObservedValue::Items(items) => {
                    for item in items {
                        violations
                            .extend(check_token(item, &format!("observation `{}`", obs.tag)));
                    }
                }
                ObservedValue::Num(_) | ObservedValue::Opaque(_) => {}
            }
        }
    }
    violations
}

/// Owner changes along the root-to-leaf path a tuple follows; distributed
/// classification must produce exactly this many control transfers.
pub fn owner_changes_on_path(
    tree: &DistributedTree,
    payloads: &BTreeMap<String, BTreeMap<String, NodePayload>>,
    tuple: &BTreeMap<String, String>,
) -> Result<usize, ProtocolError> {
    let mut hops = 0;
    let mut current = tree.root.clone();
    loop {
        let node = tree.node(&current)?;
        let payload = payloads
            .values()
            .find_map(|m| m.get(&current))
            .ok_or_else(|| ProtocolError::DanglingNode(current.clone()))?;
        match payload {
            NodePayload::Leaf { .. } => return Ok(hops),
            NodePayload::Interior {
                attribute,
                branches,
            } => {
                let value = tuple
                    .get(attribute)
                    .ok_or_else(|| ProtocolError::UnseenValue {
                        node: current.clone(),
                        value: format!("<no value for {attribute}>"),
                    })?;
                let child = branches
                    .get(value)
                    .ok_or_else(|| ProtocolError::UnseenValue {
                        node: current.clone(),
                        value: value.clone(),
                    })?;
                let child_owner = tree.node(child)?.owner_group;
                if child_owner != node.owner_group {
                    hops += 1;
                }
                current = child.clone();
            }
        }
    }
}
