//! Plaintext ID3: entropy and information gain over class histograms, tree
//! induction and classification. This module is both the gain arithmetic
//! shared with the privacy-preserving protocols and the ground-truth oracle
//! they are checked against.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Relation;
use crate::error::Id3Error;

/// Two gains closer than this are treated as tied and broken by attribute
/// position, so that ties resolve identically no matter how the gain was
/// accumulated.
pub const GAIN_EPS: f64 = 1e-12;

/// Class-value counts at one point of the recursion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassHistogram {
    pub counts: BTreeMap<String, u64>,
}

impl ClassHistogram {
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Self {
        ClassHistogram {
            counts: counts.into_iter().collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn add(&mut self, class: &str) {
        *self.counts.entry(class.to_string()).or_insert(0) += 1;
    }

    /// Number of class values with non-zero count.
    pub fn distinct(&self) -> usize {
        self.counts.values().filter(|&&c| c > 0).count()
    }

    /// Most frequent class value; ties go to the lowest value in domain
    /// order.
    pub fn majority(&self) -> Option<&str> {
        let best = self.counts.values().copied().max().filter(|&c| c > 0)?;
        self.counts
            .iter()
            .find(|(_, &c)| c == best)
            .map(|(k, _)| k.as_str())
    }
}

/// Shannon entropy in bits. Zero-probability terms contribute nothing and the
/// empty histogram has entropy zero.
pub fn entropy(hist: &ClassHistogram) -> f64 {
    let n = hist.total();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut h = 0.0;
    for &c in hist.counts.values() {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Information gain of a split: parent entropy minus the count-weighted
/// entropy of the children.
pub fn info_gain(parent: &ClassHistogram, children: &[ClassHistogram]) -> Result<f64, Id3Error> {
    let n = parent.total();
    let child_total: u64 = children.iter().map(|c| c.total()).sum();
    if n != child_total {
        return Err(Id3Error::HistogramMismatch);
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut conditional = 0.0;
    for child in children {
        let nc = child.total();
        if nc > 0 {
            conditional += (nc as f64 / n as f64) * entropy(child);
        }
    }
    Ok(entropy(parent) - conditional)
}

/// A decision tree over discrete attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlainTree {
    Leaf {
        class: String,
    },
    Interior {
        attribute: String,
        children: BTreeMap<String, PlainTree>,
    },
}

impl PlainTree {
    pub fn depth(&self) -> usize {
        match self {
            PlainTree::Leaf { .. } => 0,
            PlainTree::Interior { children, .. } => {
                1 + children.values().map(|c| c.depth()).max().unwrap_or(0)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            PlainTree::Leaf { .. } => 1,
            PlainTree::Interior { children, .. } => {
                1 + children.values().map(|c| c.node_count()).sum::<usize>()
            }
        }
    }
}

/// Per-split record kept while building, used to judge how close the
/// attribute choice was.
#[derive(Debug, Clone, Serialize)]
pub struct SplitTrace {
    /// Tuples reaching the split.
    pub n: u64,
    pub attribute: String,
    pub best_gain: f64,
    /// Gap to the best gain among the other candidates; infinite when the
    /// split had a single candidate.
    pub margin: f64,
}

fn histogram(rel: &Relation, rows: &[usize], class_idx: usize) -> ClassHistogram {
    let mut hist = ClassHistogram::default();
    for &r in rows {
        hist.add(&rel.tuples[r][class_idx]);
    }
    hist
}

fn partition_rows<'a>(
    rel: &'a Relation,
    rows: &[usize],
    attr_idx: usize,
) -> BTreeMap<&'a str, Vec<usize>> {
    let mut parts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        parts
            .entry(rel.tuples[r][attr_idx].as_str())
            .or_default()
            .push(r);
    }
    parts
}

/// Gain of every candidate attribute at a row subset, in candidate order.
pub fn candidate_gains(rel: &Relation, rows: &[usize], attrs: &[String]) -> Vec<(String, f64)> {
    let class_idx = rel.column_index(&rel.class_attr).unwrap();
    let parent = histogram(rel, rows, class_idx);
    attrs
        .iter()
        .map(|attr| {
            let attr_idx = rel.column_index(attr).unwrap();
            let children: Vec<ClassHistogram> = partition_rows(rel, rows, attr_idx)
                .values()
                .map(|part| histogram(rel, part, class_idx))
                .collect();
            let g = info_gain(&parent, &children).expect("partition preserves totals");
            (attr.clone(), g)
        })
        .collect()
}

/// Pick the highest-gain candidate; ties within [`GAIN_EPS`] go to the
/// earliest candidate. Returns `(index, gain, margin)`.
pub fn argmax_gain(gains: &[(String, f64)]) -> (usize, f64, f64) {
    let mut best = 0;
    for (idx, (_, g)) in gains.iter().enumerate().skip(1) {
        if *g > gains[best].1 + GAIN_EPS {
            best = idx;
        }
    }
    let margin = gains
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, (_, g))| gains[best].1 - g)
        .fold(f64::INFINITY, f64::min);
    (best, gains[best].1, margin)
}

fn build(
    rel: &Relation,
    rows: &[usize],
    attrs: &[String],
    trace: &mut Vec<SplitTrace>,
) -> PlainTree {
    let class_idx = rel.column_index(&rel.class_attr).unwrap();
    let hist = histogram(rel, rows, class_idx);
    if attrs.is_empty() || hist.distinct() == 1 {
        return PlainTree::Leaf {
            class: hist.majority().expect("rows are non-empty").to_string(),
        };
    }
    let gains = candidate_gains(rel, rows, attrs);
    let (best, best_gain, margin) = argmax_gain(&gains);
    let attr = attrs[best].clone();
    trace.push(SplitTrace {
        n: rows.len() as u64,
        attribute: attr.clone(),
        best_gain,
        margin,
    });
    let remaining: Vec<String> = attrs
        .iter()
        .filter(|a| **a != attr)
        .cloned()
        .collect();
    let attr_idx = rel.column_index(&attr).unwrap();
    let children = partition_rows(rel, rows, attr_idx)
        .into_iter()
        .map(|(value, part)| {
            (
                value.to_string(),
                build(rel, &part, &remaining, trace),
            )
        })
        .collect();
    PlainTree::Interior {
        attribute: attr,
        children,
    }
}

/// ID3 induction over the given candidate attributes. The class attribute
/// must not be among the candidates.
pub fn id3_build(rel: &Relation, attrs: &[String]) -> Result<PlainTree, Id3Error> {
    Ok(id3_build_traced(rel, attrs)?.0)
}

/// Like [`id3_build`], additionally reporting every split's gain margin.
pub fn id3_build_traced(
    rel: &Relation,
    attrs: &[String],
) -> Result<(PlainTree, Vec<SplitTrace>), Id3Error> {
    assert!(
        attrs.iter().all(|a| *a != rel.class_attr && *a != rel.id_attr),
        "candidate attributes must exclude the class and key columns"
    );
    if rel.tuples.is_empty() {
        return Err(Id3Error::EmptyTraining);
    }
    let rows: Vec<usize> = (0..rel.tuples.len()).collect();
    let mut trace = Vec::new();
    let tree = build(rel, &rows, attrs, &mut trace);
    Ok((tree, trace))
}

/// Check a tree against the training data without insisting on exact
/// equality with [`id3_build`]: every split must use an attribute whose gain
/// is within `tau(n)` of the best candidate, branches must cover exactly the
/// values present, and every leaf must carry a maximal-count class. This is
/// the acceptance condition for trees whose gain decisions were too close to
/// call.
pub fn verify_tree_gains(
    rel: &Relation,
    tree: &PlainTree,
    tau: &dyn Fn(u64) -> f64,
) -> Result<(), String> {
    let rows: Vec<usize> = (0..rel.tuples.len()).collect();
    verify_node(rel, tree, &rows, &rel.decision_attrs(), tau, "root")
}

fn verify_node(
    rel: &Relation,
    tree: &PlainTree,
    rows: &[usize],
    remaining: &[String],
    tau: &dyn Fn(u64) -> f64,
    path: &str,
) -> Result<(), String> {
    let class_idx = rel.column_index(&rel.class_attr).unwrap();
    let hist = histogram(rel, rows, class_idx);
    match tree {
        PlainTree::Leaf { class } => {
            let max = hist.counts.values().copied().max().unwrap_or(0);
            if hist.counts.get(class).copied().unwrap_or(0) != max {
                return Err(format!(
                    "{path}: leaf class `{class}` is not a majority class"
                ));
            }
            Ok(())
        }
        PlainTree::Interior {
            attribute,
            children,
        } => {
            if !remaining.contains(attribute) {
                return Err(format!("{path}: attribute `{attribute}` reused or unknown"));
            }
            let gains = candidate_gains(rel, rows, remaining);
            let best = gains.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
            let chosen = gains
                .iter()
                .find(|(a, _)| a == attribute)
                .map(|(_, g)| *g)
                .unwrap();
            if chosen < best - tau(rows.len() as u64) {
                return Err(format!(
                    "{path}: split on `{attribute}` (gain {chosen:.6}) but best is {best:.6}"
                ));
            }
            let attr_idx = rel.column_index(attribute).unwrap();
            let parts = partition_rows(rel, rows, attr_idx);
            let present: Vec<&str> = parts.keys().copied().collect();
            let branch_values: Vec<&str> = children.keys().map(|s| s.as_str()).collect();
            if present != branch_values {
                return Err(format!(
                    "{path}: branches {branch_values:?} do not match present values {present:?}"
                ));
            }
            let next: Vec<String> = remaining
                .iter()
                .filter(|a| *a != attribute)
                .cloned()
                .collect();
            for (value, part) in parts {
                verify_node(
                    rel,
                    &children[value],
                    &part,
                    &next,
                    tau,
                    &format!("{path}/{attribute}={value}"),
                )?;
            }
            Ok(())
        }
    }
}

/// Follow the tree for one tuple given as an attribute -> value map.
pub fn classify_plain(
    tree: &PlainTree,
    tuple: &BTreeMap<String, String>,
) -> Result<String, Id3Error> {
    match tree {
        PlainTree::Leaf { class } => Ok(class.clone()),
        PlainTree::Interior {
            attribute,
            children,
        } => {
            let value = tuple.get(attribute).ok_or_else(|| Id3Error::UnseenValue {
                attribute: attribute.clone(),
                value: "<absent>".into(),
            })?;
            let child = children.get(value).ok_or_else(|| Id3Error::UnseenValue {
                attribute: attribute.clone(),
                value: value.clone(),
            })?;
            classify_plain(child, tuple)
        }
    }
}
