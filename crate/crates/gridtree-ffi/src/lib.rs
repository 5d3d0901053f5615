//! C ABI for the gridtree toolkit: opaque handles, status codes and
//! JSON-valued accessors, so other languages can load relations, partition
//! them, run the privacy-preserving induction protocols and read back the
//! artifacts. The header is generated into `include/gridtree.h` at build
//! time.
//!
//! Conventions: every function returns a [`GtStatus`]; out-parameters are
//! written only on success; strings returned through out-parameters are
//! owned by the caller and must be released with [`gt_string_free`]; handles
//! must be released with their matching `_free` function. The last error
//! message is kept per thread and read with [`gt_last_error`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::str::FromStr;

use gridtree::dataset::{load_relation, load_relation_str, make_partition, GridPartition, Relation};
use gridtree::error::ProtocolError;
use gridtree::id3::{id3_build, PlainTree};
use gridtree::partynet::{snapshot_counters, NetConfig, NodePayload};
use gridtree::protocols::{render_plaintext, run_strategy, DistributedTree, Strategy};

/// Status of one call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    /// The call succeeded.
    GtOk = 0,
    /// A required pointer argument was null.
    GtNullArgument = 1,
    /// Input data or configuration was rejected.
    GtConfig = 2,
    /// A protocol failed while running.
    GtProtocol = 3,
    /// A string was not valid UTF-8.
    GtUtf8 = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

fn config_error(e: impl std::fmt::Display) -> GtStatus {
    set_error(&e.to_string());
    GtStatus::GtConfig
}

fn protocol_status(e: ProtocolError) -> GtStatus {
    let status = match e {
        ProtocolError::ConfigError(_)
        | ProtocolError::TooFewParties(_)
        | ProtocolError::Dataset(_) => GtStatus::GtConfig,
        _ => GtStatus::GtProtocol,
    };
    set_error(&e.to_string());
    status
}

/// A loaded relation.
pub struct GtRelation {
    rel: Relation,
}

/// A grid partition of a relation.
pub struct GtPartition {
    partition: GridPartition,
}

/// The artifacts of one induction run.
pub struct GtRun {
    tree: DistributedTree,
    payloads: BTreeMap<String, BTreeMap<String, NodePayload>>,
    transcript_jsonl: String,
    counters_json: String,
    rendered: Option<PlainTree>,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, GtStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(GtStatus::GtNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid utf-8");
        GtStatus::GtUtf8
    })
}

fn give_string(out: *mut *mut c_char, s: String) -> GtStatus {
    let c = CString::new(s.replace('\0', " ")).unwrap();
    unsafe { *out = c.into_raw() };
    GtStatus::GtOk
}

/// Last error message of the current thread; valid until the next failing
/// call. The pointer must not be freed.
#[no_mangle]
pub extern "C" fn gt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn gt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a relation from a CSV file with a header row.
///
/// # Safety
/// All pointer arguments must be valid; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gt_relation_load(
    path: *const c_char,
    id_col: *const c_char,
    class_col: *const c_char,
    out: *mut *mut GtRelation,
) -> GtStatus {
    if out.is_null() {
        set_error("null out-parameter");
        return GtStatus::GtNullArgument;
    }
    let (path, id_col, class_col) = match (cstr_arg(path), cstr_arg(id_col), cstr_arg(class_col)) {
        (Ok(p), Ok(i), Ok(c)) => (p, i, c),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return e,
    };
    match load_relation(Path::new(path), id_col, class_col) {
        Ok(rel) => {
            *out = Box::into_raw(Box::new(GtRelation { rel }));
            GtStatus::GtOk
        }
        Err(e) => config_error(e),
    }
}

/// Load a relation from in-memory CSV text.
///
/// # Safety
/// All pointer arguments must be valid; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gt_relation_from_csv(
    csv_text: *const c_char,
    id_col: *const c_char,
    class_col: *const c_char,
    out: *mut *mut GtRelation,
) -> GtStatus {
    if out.is_null() {
        set_error("null out-parameter");
        return GtStatus::GtNullArgument;
    }
    let (text, id_col, class_col) =
        match (cstr_arg(csv_text), cstr_arg(id_col), cstr_arg(class_col)) {
            (Ok(t), Ok(i), Ok(c)) => (t, i, c),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return e,
        };
    match load_relation_str(text, id_col, class_col) {
        Ok(rel) => {
            *out = Box::into_raw(Box::new(GtRelation { rel }));
            GtStatus::GtOk
        }
        Err(e) => config_error(e),
    }
}

/// # Safety
/// `rel` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn gt_relation_free(rel: *mut GtRelation) {
    if !rel.is_null() {
        drop(Box::from_raw(rel));
    }
}

/// Number of tuples in the relation.
///
/// # Safety
/// `rel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_relation_tuple_count(
    rel: *const GtRelation,
    out: *mut usize,
) -> GtStatus {
    if rel.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    *out = (*rel).rel.tuples.len();
    GtStatus::GtOk
}

/// Build a seeded balanced grid partition with `v` vertical and `h`
/// horizontal groups.
///
/// # Safety
/// `rel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_partition_make(
    rel: *const GtRelation,
    v: u32,
    h: u32,
    seed: u64,
    out: *mut *mut GtPartition,
) -> GtStatus {
    if rel.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    match make_partition(&(*rel).rel, v as usize, h as usize, seed) {
        Ok(partition) => {
            *out = Box::into_raw(Box::new(GtPartition { partition }));
            GtStatus::GtOk
        }
        Err(e) => config_error(e),
    }
}

/// # Safety
/// `partition` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn gt_partition_free(partition: *mut GtPartition) {
    if !partition.is_null() {
        drop(Box::from_raw(partition));
    }
}

/// Partition spec as JSON `{v, h, attr_groups, tuple_groups, seed}`.
///
/// # Safety
/// `partition` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_partition_to_json(
    partition: *const GtPartition,
    out: *mut *mut c_char,
) -> GtStatus {
    if partition.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    give_string(out, serde_json::to_string(&(*partition).partition).unwrap())
}

/// Run an induction protocol (`"horizontal"`, `"grid-hmerge"` or
/// `"grid-vmerge"`) over the partitioned relation. `test_mode != 0` enables
/// plaintext rendering of the result, for validation harnesses only.
///
/// # Safety
/// `rel` and `partition` must be live handles; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gt_run_protocol(
    rel: *const GtRelation,
    partition: *const GtPartition,
    strategy: *const c_char,
    seed: u64,
    key_bits: u32,
    taylor_terms: u32,
    fixed_point_bits: u32,
    test_mode: i32,
    out: *mut *mut GtRun,
) -> GtStatus {
    if rel.is_null() || partition.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    let strategy = match cstr_arg(strategy) {
        Ok(s) => s,
        Err(e) => return e,
    };
    let strategy = match Strategy::from_str(strategy) {
        Ok(s) => s,
        Err(e) => return protocol_status(e),
    };
    let cfg = NetConfig {
        key_bits,
        taylor_terms,
        frac_bits: fixed_point_bits,
        test_mode: test_mode != 0,
        ..NetConfig::default()
    };
    let rel = &(*rel).rel;
    let partition = &(*partition).partition;
    match run_strategy(rel, partition, strategy, cfg, seed) {
        Ok(output) => {
            let counters = snapshot_counters(&output.transcript);
            let rendered = if test_mode != 0 {
                render_plaintext(&output.tree, &output.payloads, true).ok()
            } else {
                None
            };
            let run = GtRun {
                transcript_jsonl: output.transcript.to_jsonl(),
                counters_json: serde_json::to_string(&counters).unwrap(),
                payloads: output.payloads,
                tree: output.tree,
                rendered,
            };
            *out = Box::into_raw(Box::new(run));
            GtStatus::GtOk
        }
        Err(e) => protocol_status(e),
    }
}

/// # Safety
/// `run` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn gt_run_free(run: *mut GtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Public tree skeleton as JSON: node ids, owner groups and child links.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_tree_json(run: *const GtRun, out: *mut *mut c_char) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    give_string(out, serde_json::to_string(&(*run).tree).unwrap())
}

/// One party's private payloads as JSON; `party` is `"P<i>.<j>"`.
///
/// # Safety
/// `run` must be a live handle; `party` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_party_payload_json(
    run: *const GtRun,
    party: *const c_char,
    out: *mut *mut c_char,
) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    let party = match cstr_arg(party) {
        Ok(p) => p,
        Err(e) => return e,
    };
    match (*run).payloads.get(party) {
        Some(p) => give_string(out, serde_json::to_string(p).unwrap()),
        None => {
            set_error("unknown party");
            GtStatus::GtConfig
        }
    }
}

/// The full message transcript, one JSON object per line.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_transcript_jsonl(
    run: *const GtRun,
    out: *mut *mut c_char,
) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    give_string(out, (*run).transcript_jsonl.clone())
}

/// Aggregate cost counters as JSON.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_counters_json(
    run: *const GtRun,
    out: *mut *mut c_char,
) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    give_string(out, (*run).counters_json.clone())
}

/// Plaintext rendering of the tree; only available when the run was started
/// in test mode.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_rendered_tree_json(
    run: *const GtRun,
    out: *mut *mut c_char,
) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    match &(*run).rendered {
        Some(tree) => give_string(out, serde_json::to_string(tree).unwrap()),
        None => {
            set_error("plaintext rendering is only available in test mode");
            GtStatus::GtConfig
        }
    }
}

/// Classify a tuple (JSON object of attribute -> value) by walking the
/// distributed tree's payloads; writes the class label.
///
/// # Safety
/// `run` must be a live handle; `tuple_json` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_run_classify(
    run: *const GtRun,
    tuple_json: *const c_char,
    out: *mut *mut c_char,
) -> GtStatus {
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    let tuple_json = match cstr_arg(tuple_json) {
        Ok(t) => t,
        Err(e) => return e,
    };
    let tuple: BTreeMap<String, String> = match serde_json::from_str(tuple_json) {
        Ok(t) => t,
        Err(e) => return config_error(format!("bad tuple json: {e}")),
    };
    let run = &*run;
    let mut current = run.tree.root.clone();
    loop {
        let payload = run.payloads.values().find_map(|m| m.get(&current));
        match payload {
            None => return config_error(format!("node `{current}` has no payload")),
            Some(NodePayload::Leaf { class }) => return give_string(out, class.clone()),
            Some(NodePayload::Interior {
                attribute,
                branches,
            }) => {
                let value = match tuple.get(attribute) {
                    Some(v) => v,
                    None => {
                        return config_error(format!("tuple lacks a value for `{attribute}`"))
                    }
                };
                match branches.get(value) {
                    Some(child) => current = child.clone(),
                    None => {
                        return config_error(format!(
                            "no branch for value `{value}` under `{attribute}`"
                        ))
                    }
                }
            }
        }
    }
}

/// Plaintext (non-private) ID3 on a relation, as JSON; the oracle the
/// protocols are validated against.
///
/// # Safety
/// `rel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_plain_id3_json(
    rel: *const GtRelation,
    out: *mut *mut c_char,
) -> GtStatus {
    if rel.is_null() || out.is_null() {
        set_error("null argument");
        return GtStatus::GtNullArgument;
    }
    let rel = &(*rel).rel;
    match id3_build(rel, &rel.decision_attrs()) {
        Ok(tree) => give_string(out, serde_json::to_string(&tree).unwrap()),
        Err(e) => config_error(e),
    }
}

/// ABI version of this library.
#[no_mangle]
pub extern "C" fn gt_abi_version() -> u32 {
    1
}
