//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured evidence. Run with `cargo test -p gridtree --test acceptance
//! -- --nocapture` to see the lines for passing criteria too.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use gridtree::costmodel::{fit_and_compare, SweepPoint};
use gridtree::dataset::{all_fragments, make_partition, GridPartition, Relation};
use gridtree::id3::{classify_plain, id3_build_traced, verify_tree_gains, PlainTree};
use gridtree::partynet::{run_protocol, snapshot_counters, NetConfig, Transcript};
use gridtree::protocols::{
    classify_distributed, collect_payloads, count_control_transfers, owner_changes_on_path,
    ppid3_grid_hmerge, ppid3_grid_vmerge, ppid3_horizontal, render_from_net, run_strategy,
    tau_gain, visibility_audit, Strategy, TAU_XLNX,
};
use gridtree::smpc::cipher::{CommutativeKey, Item};
use gridtree::smpc::setops::{secure_intersection_size, secure_union};
use gridtree::smpc::xlnx::x_ln_x;
use gridtree::smpc::{
    reconstruct_real, secure_sum, secure_sum_with_mask, split_raw, ShareDomain, SumDomain,
};
use gridtree::synth::{random_relation, SynthSpec};

const CASES: u64 = 50;

fn test_config() -> NetConfig {
    NetConfig {
        key_bits: 64,
        test_mode: true,
        ..NetConfig::default()
    }
}

struct ProtocolOutcome {
    name: String,
    rendered: PlainTree,
    audit_violations: Vec<String>,
    classify_mismatches: usize,
    hop_mismatches: usize,
    tuples_classified: usize,
}

struct CaseResult {
    seed: u64,
    rel: Relation,
    oracle: PlainTree,
    margin_safe: bool,
    outcomes: Vec<ProtocolOutcome>,
}

struct Fixture {
    cases: Vec<CaseResult>,
    build_time: Duration,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(build_fixture)
}

fn case_spec(seed: u64) -> SynthSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(7919) ^ 0xACCE);
    if seed.is_multiple_of(10) {
        // a few cases at the tuple-count cap, kept narrow so the trees stay
        // reasonably sized
        return SynthSpec {
            n_tuples: 200,
            n_attrs: rng.gen_range(3..=4),
            n_values: 2,
            n_classes: 2,
        };
    }
    let n_attrs = rng.gen_range(3..=8);
    SynthSpec {
        n_tuples: rng.gen_range(12..=80),
        n_attrs,
        // wide relations use binary attributes so trees stay tractable
        n_values: if n_attrs >= 6 { 2 } else { rng.gen_range(2..=3) },
        n_classes: rng.gen_range(2..=3),
    }
}

fn run_one(
    rel: &Relation,
    part: &GridPartition,
    strategy: Strategy,
    seed: u64,
) -> ProtocolOutcome {
    let fragments = all_fragments(rel, part);
    let positions: BTreeMap<String, usize> = rel
        .decision_attrs()
        .into_iter()
        .enumerate()
        .map(|(n, a)| (a, n))
        .collect();
    let class_attr = rel.class_attr.clone();
    let (outcome, _): (ProtocolOutcome, Transcript) =
        run_protocol(part, &fragments, test_config(), seed, |net| {
            let tree = match strategy {
                Strategy::Horizontal => ppid3_horizontal(net, &positions, &class_attr)?,
                Strategy::GridHmerge => ppid3_grid_hmerge(net, &positions, &class_attr)?,
                Strategy::GridVmerge => ppid3_grid_vmerge(net, &positions, &class_attr)?,
            };
            let rendered = render_from_net(net, &tree)?;
            let audit_violations = visibility_audit(net, rel, part);
            let payloads = collect_payloads(net);
            let id_idx = rel.column_index(&rel.id_attr).unwrap();
            let mut classify_mismatches = 0;
            let mut hop_mismatches = 0;
            let mut tuples_classified = 0;
            for row in &rel.tuples {
                let id = &row[id_idx];
                let layer = (1..=part.h)
                    .find(|j| part.tuple_groups[j - 1].contains(id))
                    .unwrap();
                let tuple = rel.row_map(row);
                let before = net.message_count();
                let got = classify_distributed(net, &tree, layer, id, &tree.root)?;
                let want = classify_plain(&rendered, &tuple).expect("training tuple replays");
                let expected_hops = owner_changes_on_path(&tree, &payloads, &tuple)?;
                let wire_hops =
                    count_control_transfers(&net.transcript().entries[before..]);
                tuples_classified += 1;
                if got.class != want {
                    classify_mismatches += 1;
                }
                if got.hops != expected_hops || wire_hops != expected_hops {
                    hop_mismatches += 1;
                }
            }
            Ok(ProtocolOutcome {
                name: strategy.to_string(),
                rendered,
                audit_violations,
                classify_mismatches,
                hop_mismatches,
                tuples_classified,
            })
        })
        .expect("protocol run succeeds");
    outcome
}

fn build_case(seed: u64) -> CaseResult {
    let spec = case_spec(seed);
    let rel = random_relation(&spec, seed);
    let (oracle, trace) =
        id3_build_traced(&rel, &rel.decision_attrs()).expect("non-empty relation");
    let margin_safe = trace.iter().all(|t| t.margin > tau_gain(t.n));
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xD15);
    let h_horizontal = rng.gen_range(3..=5);
    let v_grid = (2 + (seed as usize % 2)).min(spec.n_attrs);
    let h_grid = rng.gen_range(2..=3);
    let mut outcomes = Vec::new();
    let part_h = make_partition(&rel, 1, h_horizontal, seed).unwrap();
    outcomes.push(run_one(&rel, &part_h, Strategy::Horizontal, seed));
    let part_g = make_partition(&rel, v_grid, h_grid, seed).unwrap();
    outcomes.push(run_one(&rel, &part_g, Strategy::GridHmerge, seed));
    outcomes.push(run_one(&rel, &part_g, Strategy::GridVmerge, seed));
    CaseResult {
        seed,
        rel,
        oracle,
        margin_safe,
        outcomes,
    }
}

fn build_fixture() -> Fixture {
    let start = Instant::now();
    // slight oversubscription keeps the fixture moving while sibling tests
    // share the cores
    let workers = (std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        + 1)
    .min(CASES as usize);
    let mut cases: Vec<CaseResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w as u64..CASES)
                        .step_by(workers)
                        .map(build_case)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("case worker"))
            .collect()
    });
    cases.sort_by_key(|c| c.seed);
    Fixture {
        cases,
        build_time: start.elapsed(),
    }
}

#[test]
fn criterion_1_oracle_equivalence() {
    let fx = fixture();
    let mut margin_safe_cases = 0;
    let mut tolerance_cases = 0;
    let mut tolerance_exact = 0;
    for case in &fx.cases {
        let mut all_exact = true;
        for outcome in &case.outcomes {
            if case.margin_safe {
                assert_eq!(
                    outcome.rendered, case.oracle,
                    "seed {} protocol {}: tree differs from the oracle on a margin-safe case",
                    case.seed, outcome.name
                );
            } else {
                // close call: every split must still be within the gain
                // tolerance of the best candidate
                verify_tree_gains(&case.rel, &outcome.rendered, &tau_gain).unwrap_or_else(|e| {
                    panic!(
                        "seed {} protocol {}: gain tolerance violated: {e}",
                        case.seed, outcome.name
                    )
                });
                all_exact &= outcome.rendered == case.oracle;
            }
        }
        if case.margin_safe {
            margin_safe_cases += 1;
        } else {
            tolerance_cases += 1;
            if all_exact {
                tolerance_exact += 1;
            }
        }
    }
    assert!(
        fx.build_time < Duration::from_secs(300),
        "criterion 1 runtime {:?} exceeds 5 minutes",
        fx.build_time
    );
    println!(
        "criterion 1 (oracle equivalence): PASS — {} cases x 3 protocols in {:?} \
         ({margin_safe_cases} margin-safe cases matched exactly; {tolerance_cases} cases had \
         gain ties within tolerance, of which {tolerance_exact} still matched exactly)",
        fx.cases.len(),
        fx.build_time
    );
}

fn net_for(k: usize, seed: u64) -> (GridPartition, BTreeMap<(usize, usize), gridtree::dataset::Fragment>) {
    let rel = random_relation(
        &SynthSpec {
            n_tuples: k.max(4),
            n_attrs: 3,
            n_values: 2,
            n_classes: 2,
        },
        seed,
    );
    let part = make_partition(&rel, 1, k, seed).unwrap();
    let frags = all_fragments(&rel, &part);
    (part, frags)
}

#[test]
fn criterion_2_primitive_correctness() {
    // secure sum: every modulus up to 32, every party count 3..=6
    let mut sum_checks = 0u64;
    for m in 2..=32u64 {
        for k in 3..=6usize {
            let (part, frags) = net_for(k, m * 100 + k as u64);
            let parties: Vec<_> = (1..=k)
                .map(|j| gridtree::partynet::PartyId::new(1, j))
                .collect();
            let domain = SumDomain::new(m);
            let mut vectors: Vec<Vec<u64>> = vec![
                vec![0; k],
                vec![m - 1; k],
                (0..k as u64).map(|i| i % m).collect(),
            ];
            let mut rng = ChaCha12Rng::seed_from_u64(m * 31 + k as u64);
            for _ in 0..20 {
                vectors.push((0..k).map(|_| rng.gen_range(0..m)).collect());
            }
            if m <= 4 && k == 3 {
                // small domains exhaustively
                vectors.clear();
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            vectors.push(vec![a, b, c]);
                        }
                    }
                }
            }
            for inputs in vectors {
                let expected = inputs.iter().sum::<u64>() % m;
                let (got, _) = run_protocol(&part, &frags, test_config(), 7, |net| {
                    secure_sum(net, &parties, &inputs, &domain)
                })
                .unwrap();
                assert_eq!(got, expected, "m={m} k={k} inputs={inputs:?}");
                sum_checks += 1;
            }
        }
    }

    // cipher laws on a 200-element domain
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let ka = CommutativeKey::generate(128, &mut rng).unwrap();
    let kb = CommutativeKey::generate(128, &mut rng).unwrap();
    for n in 0..200 {
        let item = Item::Real(format!("elem{n}"));
        let g = ka.encode(&item).unwrap();
        assert_eq!(ka.decrypt(&ka.encrypt(&g)), g);
        assert_eq!(ka.encrypt(&kb.encrypt(&g)), kb.encrypt(&ka.encrypt(&g)));
        assert_eq!(ka.encrypt(&g), ka.encrypt(&g));
        assert_eq!(ka.decode(&g).unwrap(), item);
    }

    // set protocols against plaintext oracles, 100 random cases each
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    for case in 0..100 {
        let k = rng.gen_range(3..=5);
        let universe: Vec<String> = (0..50).map(|n| format!("u{n}")).collect();
        let union_sets: Vec<Vec<String>> = (0..k)
            .map(|_| {
                universe
                    .iter()
                    .filter(|_| rng.gen_bool(0.3))
                    .cloned()
                    .collect()
            })
            .collect();
        let inter_sets: Vec<Vec<String>> = (0..k)
            .map(|_| {
                universe
                    .iter()
                    .filter(|_| rng.gen_bool(0.6))
                    .cloned()
                    .collect()
            })
            .collect();
        let union_oracle: Vec<String> = {
            let mut all: Vec<String> = union_sets.iter().flatten().cloned().collect();
            all.sort();
            all.dedup();
            all
        };
        let inter_oracle = inter_sets
            .iter()
            .map(|s| s.iter().cloned().collect::<std::collections::BTreeSet<_>>())
            .reduce(|a, b| a.intersection(&b).cloned().collect())
            .unwrap()
            .len() as u64;
        let (part, frags) = net_for(k, 999 + case);
        let parties: Vec<_> = (1..=k)
            .map(|j| gridtree::partynet::PartyId::new(1, j))
            .collect();
        let ((u, i), _) = run_protocol(&part, &frags, test_config(), case, |net| {
            let u = secure_union(net, &parties, &union_sets, 50)?;
            let i = secure_intersection_size(net, &parties, &inter_sets, 50, &parties.clone())?;
            Ok((u, i))
        })
        .unwrap();
        assert_eq!(u, union_oracle, "union case {case}");
        assert_eq!(i, inter_oracle, "intersection case {case}");
    }

    println!(
        "criterion 2 (primitive correctness): PASS — {sum_checks} secure-sum checks, \
         cipher laws on 200 elements, 100 union and 100 intersection oracle cases"
    );
}

#[test]
fn criterion_3_xlnx_accuracy() {
    let (part, frags) = net_for(2, 3);
    let alice = gridtree::partynet::PartyId::new(1, 1);
    let bob = gridtree::partynet::PartyId::new(1, 2);
    let domain = ShareDomain::counts(62);
    let (max_err, _) = run_protocol(&part, &frags, test_config(), 11, |net| {
        let mut max_err = 0f64;
        for x in 1..=10_000u64 {
            let (x_a, x_b) = split_raw(x, domain, net.rng());
            let (s_a, s_b) = x_ln_x(net, alice, bob, &x_a, &x_b, 10)?;
            let got = reconstruct_real(&s_a, &s_b);
            let want = x as f64 * (x as f64).ln();
            max_err = max_err.max((got - want).abs());
        }
        Ok(max_err)
    })
    .unwrap();
    assert!(
        max_err < TAU_XLNX,
        "max |error| {max_err} exceeds {TAU_XLNX}"
    );
    println!(
        "criterion 3 (x ln x accuracy): PASS — max error {max_err:.3e} over x in [1, 10^4] \
         with 10 Taylor terms (tolerance {TAU_XLNX})"
    );
}

#[test]
fn criterion_4_secure_sum_simulatability() {
    let k = 4usize;
    let mut checked = 0;
    for m in 2..=32u64 {
        let (part, frags) = net_for(k, m);
        let parties: Vec<_> = (1..=k)
            .map(|j| gridtree::partynet::PartyId::new(1, j))
            .collect();
        let domain = SumDomain::new(m);
        for inputs in [
            vec![0, 0, 0, 0],
            vec![1 % m, m - 1, 0, 1 % m],
            vec![m / 2, m / 3, m / 4, m - 1],
        ] {
            // the message observed by each non-initiating party, across the
            // full mask space
            let mut observed: Vec<Vec<u64>> = vec![Vec::new(); k];
            for mask in 0..m {
                let (_, _) = run_protocol(&part, &frags, test_config(), mask, |net| {
                    secure_sum_with_mask(net, &parties, &inputs, &domain, mask)?;
                    for (idx, p) in parties.iter().enumerate().skip(1) {
                        let ring_values: Vec<u64> = net
                            .party(*p)
                            .observations
                            .iter()
                            .filter(|o| o.tag == "secure-sum")
                            .map(|o| match o.value {
                                gridtree::partynet::ObservedValue::Num(n) => n,
                                _ => unreachable!("ring messages are numeric"),
                            })
                            .collect();
                        assert_eq!(ring_values.len(), 1);
                        observed[idx].push(ring_values[0]);
                    }
                    Ok(())
                })
                .unwrap();
            }
            for per_party in observed.iter().skip(1) {
                let mut sorted = per_party.clone();
                sorted.sort_unstable();
                let full: Vec<u64> = (0..m).collect();
                assert_eq!(
                    sorted, full,
                    "m={m} inputs={inputs:?}: observed messages are not uniform over Z_m"
                );
                checked += 1;
            }
        }
    }
    println!(
        "criterion 4 (simulatability): PASS — {checked} party views exactly uniform over Z_m \
         for every m <= 32 under exhaustive mask enumeration"
    );
}

#[test]
fn criterion_5_visibility_audit() {
    let fx = fixture();
    let mut scanned = 0;
    for case in &fx.cases {
        for outcome in &case.outcomes {
            assert!(
                outcome.audit_violations.is_empty(),
                "seed {} protocol {}: {:?}",
                case.seed,
                outcome.name,
                outcome.audit_violations
            );
            scanned += 1;
        }
    }
    println!(
        "criterion 5 (visibility audit): PASS — no foreign attribute names, values or class \
         labels in any party state across {scanned} protocol runs"
    );
}

#[test]
fn criterion_6_complexity_validation() {
    let rel = random_relation(
        &SynthSpec {
            n_tuples: 60,
            n_attrs: 6,
            n_values: 2,
            n_classes: 2,
        },
        1,
    );
    let cfg = NetConfig {
        key_bits: 64,
        ..NetConfig::default()
    };
    let params = |part: &GridPartition| gridtree::costmodel::CostParams {
        h: part.h as u64,
        v: part.v as u64,
        tuples: rel.tuples.len() as u64,
        attrs: rel.decision_attrs().len() as u64,
        class_values: 2,
        max_attr_values: 2,
        key_bits: 64,
        taylor_terms: 10,
    };
    let measure = |strategy: Strategy, v: usize, h: usize| -> SweepPoint {
        let part = make_partition(&rel, v, h, 1).unwrap();
        let out = run_strategy(&rel, &part, strategy, cfg, 1).unwrap();
        SweepPoint {
            params: params(&part),
            counters: snapshot_counters(&out.transcript),
        }
    };
    let hmerge_points: Vec<SweepPoint> = (2..=5)
        .map(|h| measure(Strategy::GridHmerge, 2, h))
        .collect();
    let vmerge_points: Vec<SweepPoint> = (2..=5)
        .map(|v| measure(Strategy::GridVmerge, v, 2))
        .collect();
    let matched_h = measure(Strategy::GridHmerge, 3, 3);
    let matched_v = measure(Strategy::GridVmerge, 3, 3);
    let report = fit_and_compare(&hmerge_points, &vmerge_points, (&matched_h, &matched_v)).unwrap();
    let eh = report.hmerge.exponent_bytes;
    let ev = report.vmerge.exponent_bytes;
    assert!(
        (1.8..=2.2).contains(&eh),
        "hmerge byte exponent over h: {eh:.3} outside 2.0 +/- 0.2"
    );
    assert!(
        (1.8..=2.2).contains(&ev),
        "vmerge byte exponent over v: {ev:.3} outside 2.0 +/- 0.2"
    );
    assert!(
        report.matched.hmerge_bytes < report.matched.vmerge_bytes,
        "matched 3x3: hmerge {} bytes should undercut vmerge {} bytes",
        report.matched.hmerge_bytes,
        report.matched.vmerge_bytes
    );
    println!(
        "criterion 6 (complexity validation): PASS — h-exponent {eh:.3}, v-exponent {ev:.3}, \
         matched 3x3 bytes hmerge {} < vmerge {}",
        report.matched.hmerge_bytes, report.matched.vmerge_bytes
    );
}

#[test]
fn criterion_7_distributed_classification() {
    let fx = fixture();
    let mut tuples = 0;
    for case in &fx.cases {
        for outcome in &case.outcomes {
            assert_eq!(
                outcome.classify_mismatches, 0,
                "seed {} protocol {}: classification mismatches",
                case.seed, outcome.name
            );
            assert_eq!(
                outcome.hop_mismatches, 0,
                "seed {} protocol {}: hop-count mismatches",
                case.seed, outcome.name
            );
            tuples += outcome.tuples_classified;
        }
    }
    println!(
        "criterion 7 (distributed classification): PASS — {tuples} tuple classifications match \
         the centralized result with exact control-transfer counts"
    );
}
