//! Relations over discrete attributes and their horizontal / vertical / grid
//! partitions into per-party fragments.
//!
//! A relation has a key column `I` (never used for splitting), a class column
//! and any number of discrete non-key attributes. A grid partition assigns the
//! non-key attributes to `v` vertical groups (the class attribute always lands
//! in group `v`) and the tuples to `h` horizontal groups; party `P_ij` holds
//! the fragment with vertical group `i`'s columns and horizontal group `j`'s
//! rows. `v = 1` is the purely horizontal case and `h = 1` the purely vertical
//! one.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// A relation: schema, key/class column names, rows of string values and the
/// per-attribute value domains inferred from the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub schema: Vec<String>,
    pub id_attr: String,
    pub class_attr: String,
    pub tuples: Vec<Vec<String>>,
    pub domains: BTreeMap<String, BTreeSet<String>>,
}

impl Relation {
    /// Build a relation from a header row and tuple rows, validating key
    /// uniqueness and column presence.
    pub fn new(
        schema: Vec<String>,
        id_attr: &str,
        class_attr: &str,
        tuples: Vec<Vec<String>>,
    ) -> Result<Self, DatasetError> {
        if schema.is_empty() || tuples.is_empty() {
            return Err(DatasetError::EmptyInput);
        }
        for col in [id_attr, class_attr] {
            if !schema.iter().any(|a| a == col) {
                return Err(DatasetError::SchemaError(format!(
                    "column `{col}` not found in header"
                )));
            }
        }
        if id_attr == class_attr {
            return Err(DatasetError::SchemaError(
                "id and class columns must differ".into(),
            ));
        }
        for row in &tuples {
            if row.len() != schema.len() {
                return Err(DatasetError::SchemaError(format!(
                    "row has {} fields, header has {}",
                    row.len(),
                    schema.len()
                )));
            }
        }
        let id_idx = schema.iter().position(|a| a == id_attr).unwrap();
        let mut seen = BTreeSet::new();
        for row in &tuples {
            if !seen.insert(row[id_idx].clone()) {
                return Err(DatasetError::DuplicateKey(row[id_idx].clone()));
            }
        }
        let mut domains: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (idx, attr) in schema.iter().enumerate() {
            let dom = tuples.iter().map(|r| r[idx].clone()).collect();
            domains.insert(attr.clone(), dom);
        }
        Ok(Relation {
            schema,
            id_attr: id_attr.to_string(),
            class_attr: class_attr.to_string(),
            tuples,
            domains,
        })
    }

    pub fn column_index(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == attr)
    }

    /// Non-key attributes in schema order; the class attribute is included.
    pub fn non_key_attrs(&self) -> Vec<String> {
        self.schema
            .iter()
            .filter(|a| **a != self.id_attr)
            .cloned()
            .collect()
    }

    /// Non-key, non-class attributes in schema order (the candidates for
    /// decision nodes).
    pub fn decision_attrs(&self) -> Vec<String> {
        self.schema
            .iter()
            .filter(|a| **a != self.id_attr && **a != self.class_attr)
            .cloned()
            .collect()
    }

    /// Schema position of an attribute among the decision attributes, used as
    /// the deterministic tie-break rank.
    pub fn attr_position(&self, attr: &str) -> Option<usize> {
        self.decision_attrs().iter().position(|a| a == attr)
    }

    pub fn tuple_ids(&self) -> Vec<String> {
        let idx = self.column_index(&self.id_attr).unwrap();
        self.tuples.iter().map(|r| r[idx].clone()).collect()
    }

    /// Row lookup by tuple id.
    pub fn row_by_id(&self, id: &str) -> Option<&Vec<String>> {
        let idx = self.column_index(&self.id_attr).unwrap();
        self.tuples.iter().find(|r| r[idx] == id)
    }

    /// The tuple as an attribute -> value map, key column included.
    pub fn row_map(&self, row: &[String]) -> BTreeMap<String, String> {
        self.schema.iter().cloned().zip(row.iter().cloned()).collect()
    }

    /// Row-order-insensitive equality.
    pub fn same_content(&self, other: &Relation) -> bool {
        if self.schema != other.schema
            || self.id_attr != other.id_attr
            || self.class_attr != other.class_attr
        {
            return false;
        }
        let mut a = self.tuples.clone();
        let mut b = other.tuples.clone();
        a.sort();
        b.sort();
        a == b
    }
}

/// Load a relation from a CSV file with a header row.
pub fn load_relation(
    path: impl AsRef<Path>,
    id_attr: &str,
    class_attr: &str,
) -> Result<Relation, DatasetError> {
    let mut text = String::new();
    std::fs::File::open(path.as_ref())
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DatasetError::Io(e.to_string()))?;
    load_relation_str(&text, id_attr, class_attr)
}

/// Load a relation from CSV text with a header row.
pub fn load_relation_str(
    text: &str,
    id_attr: &str,
    class_attr: &str,
) -> Result<Relation, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let schema: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::Io(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if schema.is_empty() || schema.iter().all(|s| s.is_empty()) {
        return Err(DatasetError::EmptyInput);
    }
    let mut tuples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Io(e.to_string()))?;
        tuples.push(record.iter().map(|s| s.to_string()).collect());
    }
    Relation::new(schema, id_attr, class_attr, tuples)
}

/// Write a relation (or fragment) back out as CSV.
pub fn to_csv(schema: &[String], rows: &[Vec<String>]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(schema).unwrap();
    for row in rows {
        wtr.write_record(row).unwrap();
    }
    String::from_utf8(wtr.into_inner().unwrap()).unwrap()
}

/// Assignment of non-key attributes to `v` vertical groups and tuple ids to
/// `h` horizontal groups. Group indices are 1-based to match the party
/// coordinates `P_ij`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPartition {
    pub v: usize,
    pub h: usize,
    /// `attr_groups[i-1]` holds the attributes of vertical group `i`; the
    /// class attribute is always in the last group.
    pub attr_groups: Vec<Vec<String>>,
    /// `tuple_groups[j-1]` holds the tuple ids of horizontal group `j`.
    pub tuple_groups: Vec<Vec<String>>,
    pub seed: u64,
}

impl GridPartition {
    /// All party coordinates of the grid, row-major by vertical group.
    pub fn parties(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.v {
            for j in 1..=self.h {
                out.push((i, j));
            }
        }
        out
    }

    /// Vertical group that holds a given attribute.
    pub fn group_of_attr(&self, attr: &str) -> Option<usize> {
        self.attr_groups
            .iter()
            .position(|g| g.iter().any(|a| a == attr))
            .map(|p| p + 1)
    }
}

/// One party's piece of the data: the key column plus its vertical group's
/// attributes, restricted to its horizontal group's rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    /// Party coordinate `(i, j)`.
    pub owner: (usize, usize),
    /// Column names, the key column first.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Fragment {
    pub fn column_index(&self, attr: &str) -> Option<usize> {
        self.columns.iter().position(|a| a == attr)
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r[0].clone()).collect()
    }

    /// Value of `attr` for the row with the given tuple id.
    pub fn value_of(&self, id: &str, attr: &str) -> Option<&str> {
        let col = self.column_index(attr)?;
        self.rows
            .iter()
            .find(|r| r[0] == id)
            .map(|r| r[col].as_str())
    }

    /// Distinct values of `attr` over this fragment's rows.
    pub fn local_domain(&self, attr: &str) -> BTreeSet<String> {
        match self.column_index(attr) {
            Some(col) => self.rows.iter().map(|r| r[col].clone()).collect(),
            None => BTreeSet::new(),
        }
    }
}

/// Build a deterministic balanced grid partition. Attributes other than the
/// class go round-robin over all `v` groups in a seeded shuffled order; the
/// class attribute is pinned to group `v`. Tuples go round-robin over the `h`
/// groups, again in a seeded shuffled order.
pub fn make_partition(
    rel: &Relation,
    v: usize,
    h: usize,
    seed: u64,
) -> Result<GridPartition, DatasetError> {
    let non_key = rel.non_key_attrs();
    if v < 1 || v >= non_key.len() {
        return Err(DatasetError::PartitionError(format!(
            "v must satisfy 1 <= v < {} (non-key attribute count), got {v}",
            non_key.len()
        )));
    }
    let n_tuples = rel.tuples.len();
    if h < 1 || h > n_tuples {
        return Err(DatasetError::PartitionError(format!(
            "h must satisfy 1 <= h <= {n_tuples} (tuple count), got {h}"
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut attrs: Vec<String> = rel.decision_attrs();
    attrs.shuffle(&mut rng);
    let mut attr_groups: Vec<Vec<String>> = vec![Vec::new(); v];
    for (n, attr) in attrs.into_iter().enumerate() {
        attr_groups[n % v].push(attr);
    }
    // The class attribute belongs to the last vertical group.
    attr_groups[v - 1].push(rel.class_attr.clone());
    // Groups must be non-empty; with v < |non-key attrs| round-robin
    // guarantees this.
    debug_assert!(attr_groups.iter().all(|g| !g.is_empty()));

    let mut ids = rel.tuple_ids();
    ids.shuffle(&mut rng);
    let mut tuple_groups: Vec<Vec<String>> = vec![Vec::new(); h];
    for (n, id) in ids.into_iter().enumerate() {
        tuple_groups[n % h].push(id);
    }

    Ok(GridPartition {
        v,
        h,
        attr_groups,
        tuple_groups,
        seed,
    })
}

/// Extract the fragment held by party `P_ij`.
pub fn fragment(rel: &Relation, part: &GridPartition, i: usize, j: usize) -> Fragment {
    let mut columns = vec![rel.id_attr.clone()];
    // Keep the group's attributes in schema order inside the fragment.
    for attr in &rel.schema {
        if part.attr_groups[i - 1].iter().any(|a| a == attr) {
            columns.push(attr.clone());
        }
    }
    let col_idx: Vec<usize> = columns
        .iter()
        .map(|a| rel.column_index(a).unwrap())
        .collect();
    let id_idx = rel.column_index(&rel.id_attr).unwrap();
    let ids: BTreeSet<&String> = part.tuple_groups[j - 1].iter().collect();
    let rows = rel
        .tuples
        .iter()
        .filter(|r| ids.contains(&r[id_idx]))
        .map(|r| col_idx.iter().map(|&c| r[c].clone()).collect())
        .collect();
    Fragment {
        owner: (i, j),
        columns,
        rows,
    }
}

/// All fragments of a partition, keyed by party coordinate.
pub fn all_fragments(rel: &Relation, part: &GridPartition) -> BTreeMap<(usize, usize), Fragment> {
    part.parties()
        .into_iter()
        .map(|(i, j)| ((i, j), fragment(rel, part, i, j)))
        .collect()
}

/// Rebuild the original relation from a complete fragment set: join on the
/// key within each horizontal group, then union the groups.
pub fn reassemble(
    part: &GridPartition,
    schema: &[String],
    id_attr: &str,
    class_attr: &str,
    fragments: &BTreeMap<(usize, usize), Fragment>,
) -> Result<Relation, DatasetError> {
    for (i, j) in part.parties() {
        if !fragments.contains_key(&(i, j)) {
            return Err(DatasetError::IncompleteGrid(i, j));
        }
    }
    let mut tuples = Vec::new();
    for j in 1..=part.h {
        // attribute -> value per id, joined across the vertical groups
        let mut joined: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for i in 1..=part.v {
            let frag = &fragments[&(i, j)];
            for row in &frag.rows {
                let entry = joined.entry(row[0].clone()).or_default();
                for (col, val) in frag.columns.iter().zip(row.iter()) {
                    entry.insert(col.clone(), val.clone());
                }
            }
        }
        for (id, mut vals) in joined {
            vals.insert(id_attr.to_string(), id);
            let row: Option<Vec<String>> =
                schema.iter().map(|a| vals.get(a).cloned()).collect();
            match row {
                Some(r) => tuples.push(r),
                None => {
                    return Err(DatasetError::SchemaError(
                        "fragment rows do not cover the full schema".into(),
                    ))
                }
            }
        }
    }
    Relation::new(schema.to_vec(), id_attr, class_attr, tuples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANK_CSV: &str = "\
Cust. nr.,mortgage,account,salary,stock,neg. saldo,Fraudulent?
A11,25.000,104.200,2.200,0,no,no
B12,0,1.001.020,4.4000,1.000,yes,yes
";

    fn weather() -> Relation {
        load_relation_str(crate::synth::WEATHER_CSV, "day", "play").unwrap()
    }

    #[test]
    fn loads_bank_sample_with_six_non_key_attrs() {
        let rel = load_relation_str(BANK_CSV, "Cust. nr.", "Fraudulent?").unwrap();
        assert_eq!(rel.non_key_attrs().len(), 6);
        assert_eq!(rel.tuples.len(), 2);
        assert!(rel.non_key_attrs().contains(&"Fraudulent?".to_string()));
    }

    #[test]
    fn single_row_file_has_singleton_domains() {
        let rel = load_relation_str(
            "id,a,b,c\nx1,p,q,r\n",
            "id",
            "c",
        )
        .unwrap();
        assert_eq!(rel.tuples.len(), 1);
        for attr in rel.schema.iter() {
            assert_eq!(rel.domains[attr].len(), 1);
        }
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let err = load_relation_str(
            "id,a,c\nA11,p,yes\nA11,q,no\n",
            "id",
            "c",
        )
        .unwrap_err();
        assert_eq!(err, DatasetError::DuplicateKey("A11".into()));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let err = load_relation_str("id,a,c\nx,p,q\n", "id", "klass").unwrap_err();
        assert!(matches!(err, DatasetError::SchemaError(_)));
    }

    #[test]
    fn empty_file_is_rejected() {
        let err = load_relation_str("", "id", "c").unwrap_err();
        assert_eq!(err, DatasetError::EmptyInput);
    }

    #[test]
    fn v1_partition_is_horizontal() {
        let rel = weather();
        let part = make_partition(&rel, 1, 2, 7).unwrap();
        assert_eq!(part.attr_groups.len(), 1);
        assert_eq!(part.attr_groups[0].len(), rel.non_key_attrs().len());
        let frag = fragment(&rel, &part, 1, 1);
        assert_eq!(frag.columns.len(), rel.schema.len());
    }

    #[test]
    fn v2_h1_partition_is_vertical() {
        let rel = weather();
        let part = make_partition(&rel, 2, 1, 7).unwrap();
        assert_eq!(part.tuple_groups.len(), 1);
        assert_eq!(part.tuple_groups[0].len(), rel.tuples.len());
        // disjoint attribute blocks
        let a: BTreeSet<_> = part.attr_groups[0].iter().collect();
        let b: BTreeSet<_> = part.attr_groups[1].iter().collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn three_by_three_grid_has_nine_fragments_and_class_in_last_group() {
        let rel = load_relation_str(
            "I,A1,A2,A3,A4,C\nt1,a,b,c,d,yes\nt2,a,b,c,d,no\nt3,x,y,z,w,yes\n",
            "I",
            "C",
        )
        .unwrap();
        let part = make_partition(&rel, 3, 3, 1).unwrap();
        let frags = all_fragments(&rel, &part);
        assert_eq!(frags.len(), 9);
        assert!(part.attr_groups[2].contains(&"C".to_string()));
        assert_eq!(part.group_of_attr("C"), Some(3));
    }

    #[test]
    fn out_of_range_dims_rejected() {
        let rel = weather();
        assert!(matches!(
            make_partition(&rel, 10, 2, 0),
            Err(DatasetError::PartitionError(_))
        ));
        assert!(matches!(
            make_partition(&rel, 2, 1000, 0),
            Err(DatasetError::PartitionError(_))
        ));
    }

    #[test]
    fn partition_then_reassemble_is_identity() {
        let rel = weather();
        for (v, h, seed) in [(1, 1, 0), (1, 3, 0), (2, 3, 5), (3, 2, 9)] {
            let part = make_partition(&rel, v, h, seed).unwrap();
            let frags = all_fragments(&rel, &part);
            let back = reassemble(&part, &rel.schema, &rel.id_attr, &rel.class_attr, &frags)
                .unwrap();
            assert!(back.same_content(&rel), "v={v} h={h} seed={seed}");
        }
    }

    #[test]
    fn missing_fragment_is_detected() {
        let rel = weather();
        let part = make_partition(&rel, 2, 2, 3).unwrap();
        let mut frags = all_fragments(&rel, &part);
        frags.remove(&(2, 1));
        let err = reassemble(&part, &rel.schema, &rel.id_attr, &rel.class_attr, &frags)
            .unwrap_err();
        assert_eq!(err, DatasetError::IncompleteGrid(2, 1));
    }

    #[test]
    fn fragment_row_and_column_invariants() {
        let rel = weather();
        let part = make_partition(&rel, 2, 3, 11).unwrap();
        let frags = all_fragments(&rel, &part);
        // same columns within a vertical group
        for i in 1..=2 {
            let cols: BTreeSet<_> = (1..=3).map(|j| frags[&(i, j)].columns.clone()).collect();
            assert_eq!(cols.len(), 1);
        }
        // same id sets within a horizontal group
        for j in 1..=3 {
            let ids: BTreeSet<_> = (1..=2)
                .map(|i| {
                    let mut v = frags[&(i, j)].ids();
                    v.sort();
                    v
                })
                .collect();
            assert_eq!(ids.len(), 1);
        }
    }
}
