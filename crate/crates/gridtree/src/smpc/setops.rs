//! Multi-party set protocols on commutatively encrypted items. All follow
//! the same four-phase shape: key setup and padding, a ring pass that layers
//! every party's encryption onto every set, routing of the fully encrypted
//! sets to the first two parties, and (where the result is a plaintext set)
//! a decryption ring. Padding dummies carry run-unique nonces, so they never
//! collide with each other or with real items.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::ProtocolError;
use crate::partynet::{Network, PartyId};
use crate::smpc::cipher::{CommutativeKey, GroupElem, Item};

/// A party's item set after padding: real items plus enough dummies to reach
/// the agreed size.
#[derive(Debug, Clone)]
pub struct PaddedItemSet {
    pub items: Vec<GroupElem>,
    pub n_real: usize,
    pub agreed: usize,
}

fn pad_set(
    net: &mut Network,
    key: &CommutativeKey,
    real: &[String],
    agreed: usize,
) -> Result<PaddedItemSet, ProtocolError> {
    if real.len() > agreed {
        return Err(ProtocolError::PaddingOverflow {
            actual: real.len(),
            agreed,
        });
    }
    let mut items = Vec::with_capacity(agreed);
    for s in real {
        items.push(key.encode(&Item::Real(s.clone()))?);
    }
    for _ in real.len()..agreed {
        let nonce = net.next_nonce();
        items.push(key.encode(&Item::Dummy(nonce))?);
    }
    Ok(PaddedItemSet {
        items,
        n_real: real.len(),
        agreed,
    })
}

/// Phase 2: every set travels the ring once, gaining one encryption layer per
/// party; afterwards party `i` holds the fully encrypted set of party
/// `(i+1) mod k`. Returns the held sets tagged with their origin index.
fn ring_encrypt(
    net: &mut Network,
    parties: &[PartyId],
    keys: &[&CommutativeKey],
    sets: Vec<Vec<GroupElem>>,
    tag: &str,
) -> Vec<(usize, Vec<GroupElem>)> {
    let k = parties.len();
    // each party encrypts its own set first
    let mut held: Vec<(usize, Vec<GroupElem>)> = sets
        .into_iter()
        .enumerate()
        .map(|(idx, set)| {
            net.charge_cipher_ops(parties[idx], set.len() as u64);
            (idx, set.iter().map(|g| keys[idx].encrypt(g)).collect())
        })
        .collect();
    for _hop in 1..k {
        // party i sends its held set to i+1, which adds its own layer
        let mut next: Vec<(usize, Vec<GroupElem>)> = Vec::with_capacity(k);
        for i in 0..k {
            let prev = (i + k - 1) % k;
            let (origin, set) = held[prev].clone();
            net.send_ciphers(parties[prev], parties[i], tag, set.len());
            net.charge_cipher_ops(parties[i], set.len() as u64);
            next.push((origin, set.iter().map(|g| keys[i].encrypt(g)).collect()));
        }
        held = next;
    }
    held
}

/// Phase 3 routing: even-positioned holders send to the first party, odd
/// ones to the second, and the last holder always to the second (so no party
/// receives its own fully encrypted set). The second party then forwards its
/// pool to the first. Returns the per-origin sets, all at the first party.
fn route_to_head(
    net: &mut Network,
    parties: &[PartyId],
    held: Vec<(usize, Vec<GroupElem>)>,
    tag: &str,
) -> BTreeMap<usize, Vec<GroupElem>> {
    let k = parties.len();
    let p0 = parties[0];
    let p1 = parties[1];
    let mut at_p0: BTreeMap<usize, Vec<GroupElem>> = BTreeMap::new();
    let mut at_p1: BTreeMap<usize, Vec<GroupElem>> = BTreeMap::new();
    for (i, (origin, set)) in held.into_iter().enumerate() {
        let target = if i == k - 1 || i % 2 == 1 { p1 } else { p0 };
        if parties[i] != target {
            net.send_ciphers(parties[i], target, tag, set.len());
        }
        if target == p0 {
            at_p0.insert(origin, set);
        } else {
            at_p1.insert(origin, set);
        }
    }
    let forwarded: usize = at_p1.values().map(|s| s.len()).sum();
    if forwarded > 0 || !at_p1.is_empty() {
        net.send_ciphers(p1, p0, tag, forwarded);
    }
    at_p0.extend(at_p1);
    at_p0
}

/// Phase 4: the pooled ciphertexts travel the ring once more, each party
/// stripping its own layer; the first party ends up with plaintext encodings.
fn ring_decrypt(
    net: &mut Network,
    parties: &[PartyId],
    keys: &[&CommutativeKey],
    pool: Vec<GroupElem>,
    tag: &str,
) -> Vec<GroupElem> {
    let k = parties.len();
    let mut current = pool;
    for hop in 1..=k {
        let holder = hop % k; // p1 first, back to p0 last
        net.send_ciphers(parties[(hop - 1) % k], parties[holder], tag, current.len());
        net.charge_cipher_ops(parties[holder], current.len() as u64);
        current = current.iter().map(|g| keys[holder].decrypt(g)).collect();
    }
    current
}

/// A fully encrypted, deduplicated union left in the hands of its holder.
/// Two such sets built with the same layer keys are directly comparable.
#[derive(Debug, Clone)]
pub struct EncryptedSet {
    pub holder: PartyId,
    pub items: BTreeSet<GroupElem>,
}

impl EncryptedSet {
    pub fn intersection_size<'a>(&self, others: impl IntoIterator<Item = &'a EncryptedSet>) -> u64 {
        let mut acc = self.items.clone();
        for other in others {
            acc = acc.intersection(&other.items).cloned().collect();
        }
        acc.len() as u64
    }
}

/// Union pipeline up to the encrypted pool (phases 1-3); used directly by
/// the grid protocols, which keep working on the encrypted form.
pub(crate) fn secure_union_encrypted(
    net: &mut Network,
    parties: &[PartyId],
    keys: &[&CommutativeKey],
    sets: &[Vec<String>],
    agreed_size: usize,
    tag: &str,
) -> Result<EncryptedSet, ProtocolError> {
    assert_eq!(parties.len(), keys.len());
    assert_eq!(parties.len(), sets.len());
    let padded: Vec<Vec<GroupElem>> = sets
        .iter()
        .zip(keys.iter())
        .map(|(set, key)| Ok(pad_set(net, key, set, agreed_size)?.items))
        .collect::<Result<_, ProtocolError>>()?;
    let held = ring_encrypt(net, parties, keys, padded, tag);
    let routed = route_to_head(net, parties, held, tag);
    let items: BTreeSet<GroupElem> = routed.into_values().flatten().collect();
    Ok(EncryptedSet {
        holder: parties[0],
        items,
    })
}

/// Secure union: all parties learn exactly the union of the real items.
pub fn secure_union(
    net: &mut Network,
    parties: &[PartyId],
    sets: &[Vec<String>],
    agreed_size: usize,
) -> Result<Vec<String>, ProtocolError> {
    if parties.len() <= 2 {
        return Err(ProtocolError::TooFewParties(parties.len()));
    }
    let keys: Vec<CommutativeKey> = (0..parties.len())
        .map(|_| CommutativeKey::generate(net.cfg.key_bits, net.rng()))
        .collect::<Result<_, _>>()?;
    let key_refs: Vec<&CommutativeKey> = keys.iter().collect();
    let pool = secure_union_encrypted(net, parties, &key_refs, sets, agreed_size, "union")?;
    let decrypted = ring_decrypt(
        net,
        parties,
        &key_refs,
        pool.items.into_iter().collect(),
        "union-decrypt",
    );
    let mut result = BTreeSet::new();
    for elem in &decrypted {
        match keys[0].decode(elem)? {
            Item::Real(s) => {
                result.insert(s);
            }
            Item::Dummy(_) => {} // fake items are removed
            Item::Bottom => {
                return Err(ProtocolError::EncodingError(
                    "unexpected bottom symbol in a plain union".into(),
                ))
            }
        }
    }
    let result: Vec<String> = result.into_iter().collect();
    net.announce_items(parties[0], "union-result", &result);
    Ok(result)
}

/// A party's input to the class-label test: its single local class value, the
/// bottom symbol when it has more than one, or nothing when it holds no
/// tuples at this node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassInput {
    Value(String),
    Bottom,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassVerdict {
    Uniform(String),
    NotUniform,
}

/// Union variant for the class-label test. Every party contributes at most
/// one item; after deduplication of the fully encrypted pool, decryption
/// happens only if a single item remains — otherwise the protocol stops right
/// there and reports that the class values are not uniform.
pub fn secure_union_class_variant(
    net: &mut Network,
    parties: &[PartyId],
    inputs: &[ClassInput],
) -> Result<ClassVerdict, ProtocolError> {
    if parties.len() <= 2 {
        return Err(ProtocolError::TooFewParties(parties.len()));
    }
    assert_eq!(parties.len(), inputs.len());
    let keys: Vec<CommutativeKey> = (0..parties.len())
        .map(|_| CommutativeKey::generate(net.cfg.key_bits, net.rng()))
        .collect::<Result<_, _>>()?;
    let key_refs: Vec<&CommutativeKey> = keys.iter().collect();
    let singletons: Vec<Vec<GroupElem>> = inputs
        .iter()
        .zip(keys.iter())
        .map(|(input, key)| match input {
            ClassInput::Value(s) => Ok(vec![key.encode(&Item::Real(s.clone()))?]),
            ClassInput::Bottom => Ok(vec![key.encode(&Item::Bottom)?]),
            ClassInput::Empty => Ok(Vec::new()),
        })
        .collect::<Result<_, ProtocolError>>()?;
    let held = ring_encrypt(net, parties, &key_refs, singletons, "class-test");
    let routed = route_to_head(net, parties, held, "class-test");
    let pool: BTreeSet<GroupElem> = routed.into_values().flatten().collect();
    let verdict = if pool.len() == 1 {
        let plain = ring_decrypt(
            net,
            parties,
            &key_refs,
            pool.into_iter().collect(),
            "class-test-decrypt",
        );
        match keys[0].decode(&plain[0])? {
            Item::Real(c) => ClassVerdict::Uniform(c),
            Item::Bottom => ClassVerdict::NotUniform,
            Item::Dummy(_) => {
                return Err(ProtocolError::EncodingError(
                    "unexpected dummy in the class-label test".into(),
                ))
            }
        }
    } else {
        // more than one distinct value: stop before any decryption
        ClassVerdict::NotUniform
    };
    let text = match &verdict {
        ClassVerdict::Uniform(c) => format!("uniform:{c}"),
        ClassVerdict::NotUniform => "not-uniform".to_string(),
    };
    net.announce_text(parties[0], "class-test-result", &text);
    Ok(verdict)
}

/// Secure size of set intersection, with the cardinality revealed to the
/// declared recipients. Mirrors the union protocol but keeps the fully
/// encrypted sets apart per origin so the head party can intersect them.
pub fn secure_intersection_size(
    net: &mut Network,
    parties: &[PartyId],
    sets: &[Vec<String>],
    agreed_size: usize,
    recipients: &[PartyId],
) -> Result<u64, ProtocolError> {
    if parties.len() <= 2 {
        return Err(ProtocolError::TooFewParties(parties.len()));
    }
    secure_intersection_size_inner(net, parties, sets, agreed_size, recipients)
}

/// Intersection-size pipeline without the party-count guard; grid protocols
/// call set operations with however many parties the grid dimension gives
/// them, two included.
pub(crate) fn secure_intersection_size_inner(
    net: &mut Network,
    parties: &[PartyId],
    sets: &[Vec<String>],
    agreed_size: usize,
    recipients: &[PartyId],
) -> Result<u64, ProtocolError> {
    assert_eq!(parties.len(), sets.len());
    if parties.len() == 2 {
        return two_party_intersection_size(net, parties, sets, agreed_size, recipients);
    }
    let keys: Vec<CommutativeKey> = (0..parties.len())
        .map(|_| CommutativeKey::generate(net.cfg.key_bits, net.rng()))
        .collect::<Result<_, _>>()?;
    let key_refs: Vec<&CommutativeKey> = keys.iter().collect();
    let padded: Vec<Vec<GroupElem>> = sets
        .iter()
        .zip(keys.iter())
        .map(|(set, key)| Ok(pad_set(net, key, set, agreed_size)?.items))
        .collect::<Result<_, ProtocolError>>()?;
    let held = ring_encrypt(net, parties, &key_refs, padded, "intersection");
    let routed = route_to_head(net, parties, held, "intersection");
    let mut per_origin = routed
        .into_values()
        .map(|set| set.into_iter().collect::<BTreeSet<GroupElem>>());
    let first = per_origin.next().unwrap_or_default();
    let size = per_origin
        .fold(first, |acc, set| acc.intersection(&set).cloned().collect())
        .len() as u64;
    for &r in recipients {
        net.reveal_to(
            parties[0],
            r,
            "intersection-size",
            crate::partynet::ObservedValue::Num(size),
        );
    }
    Ok(size)
}

/// Two parties cannot run the ring protocol meaningfully; they use the
/// symmetric commutative-encryption pattern instead: each side encrypts its
/// padded set, the sets cross once, each side adds the second layer and
/// returns it, and both evaluate the intersection of the doubly encrypted
/// sets locally.
fn two_party_intersection_size(
    net: &mut Network,
    parties: &[PartyId],
    sets: &[Vec<String>],
    agreed_size: usize,
    recipients: &[PartyId],
) -> Result<u64, ProtocolError> {
    let (pa, pb) = (parties[0], parties[1]);
    let key_a = CommutativeKey::generate(net.cfg.key_bits, net.rng())?;
    let key_b = CommutativeKey::generate(net.cfg.key_bits, net.rng())?;
    let set_a = pad_set(net, &key_a, &sets[0], agreed_size)?.items;
    let set_b = pad_set(net, &key_b, &sets[1], agreed_size)?.items;
    let once_a: Vec<GroupElem> = set_a.iter().map(|g| key_a.encrypt(g)).collect();
    let once_b: Vec<GroupElem> = set_b.iter().map(|g| key_b.encrypt(g)).collect();
    net.charge_cipher_ops(pa, once_a.len() as u64);
    net.charge_cipher_ops(pb, once_b.len() as u64);
    net.send_ciphers(pa, pb, "intersection", once_a.len());
    net.send_ciphers(pb, pa, "intersection", once_b.len());
    let twice_a: BTreeSet<GroupElem> = once_a.iter().map(|g| key_b.encrypt(g)).collect();
    let twice_b: BTreeSet<GroupElem> = once_b.iter().map(|g| key_a.encrypt(g)).collect();
    net.charge_cipher_ops(pb, twice_a.len() as u64);
    net.charge_cipher_ops(pa, twice_b.len() as u64);
    // the doubly encrypted sets cross back so both sides can evaluate
    net.send_ciphers(pb, pa, "intersection", twice_a.len());
    net.send_ciphers(pa, pb, "intersection", twice_b.len());
    let size = twice_a.intersection(&twice_b).count() as u64;
    for &r in recipients {
        let from = if r == pa { pa } else { pb };
        net.reveal_to(
            from,
            r,
            "intersection-size",
            crate::partynet::ObservedValue::Num(size),
        );
    }
    Ok(size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{all_fragments, load_relation_str, make_partition};
    use crate::partynet::{run_protocol, NetConfig};
    use crate::synth::WEATHER_CSV;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn with_net<T>(
        k: usize,
        f: impl FnOnce(&mut Network) -> Result<T, ProtocolError>,
    ) -> (T, crate::partynet::Transcript) {
        let rel = load_relation_str(WEATHER_CSV, "day", "play").unwrap();
        let part = make_partition(&rel, 1, k, 0).unwrap();
        let frags = all_fragments(&rel, &part);
        run_protocol(&part, &frags, NetConfig::default(), 31, f).unwrap()
    }

    fn ring(k: usize) -> Vec<PartyId> {
        (1..=k).map(|j| PartyId::new(1, j)).collect()
    }

    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn union_of_overlapping_sets() {
        let sets = vec![strs(&["A", "B"]), strs(&["B", "C"]), strs(&["C", "D"])];
        let (got, _) = with_net(3, |net| secure_union(net, &ring(3), &sets, 4));
        assert_eq!(got, strs(&["A", "B", "C", "D"]));
    }

    #[test]
    fn union_of_identical_sets() {
        let sets = vec![strs(&["x", "y"]); 4];
        let (got, _) = with_net(4, |net| secure_union(net, &ring(4), &sets, 3));
        assert_eq!(got, strs(&["x", "y"]));
    }

    #[test]
    fn union_matches_plaintext_oracle_on_random_sets() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for case in 0..100 {
            let k = rng.gen_range(3..=5);
            let universe: Vec<String> = (0..50).map(|n| format!("u{n}")).collect();
            let sets: Vec<Vec<String>> = (0..k)
                .map(|_| {
                    universe
                        .iter()
                        .filter(|_| rng.gen_bool(0.3))
                        .cloned()
                        .collect()
                })
                .collect();
            let mut expected: Vec<String> =
                sets.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            expected.sort();
            let (got, _) = with_net(k, |net| secure_union(net, &ring(k), &sets, 50));
            assert_eq!(got, expected, "case {case}");
        }
    }

    #[test]
    fn union_requires_three_parties() {
        let (res, _) = with_net(3, |net| {
            Ok(secure_union(net, &ring(2), &[vec![], vec![]], 4))
        });
        assert_eq!(res.unwrap_err(), ProtocolError::TooFewParties(2));
    }

    #[test]
    fn oversized_set_overflows_padding() {
        let sets = vec![strs(&["a", "b", "c"]), strs(&["d"]), strs(&["e"])];
        let (res, _) = with_net(3, |net| Ok(secure_union(net, &ring(3), &sets, 2)));
        assert_eq!(
            res.unwrap_err(),
            ProtocolError::PaddingOverflow {
                actual: 3,
                agreed: 2
            }
        );
    }

    #[test]
    fn no_unencrypted_foreign_item_crosses_the_wire() {
        let sets = vec![strs(&["apple"]), strs(&["pear"]), strs(&["plum"])];
        let ((), transcript) = with_net(3, |net| {
            secure_union(net, &ring(3), &sets, 2)?;
            // every party may see the announced union, but any other
            // observation must be opaque ciphertext material
            for party in net.parties() {
                for obs in &party.observations {
                    if obs.tag == "union-result" {
                        continue;
                    }
                    match &obs.value {
                        crate::partynet::ObservedValue::Opaque(_) => {}
                        other => panic!("{} saw {other:?} under tag {}", party.id, obs.tag),
                    }
                }
            }
            Ok(())
        });
        assert!(transcript.entries.iter().any(|e| e.tag == "union"));
    }

    #[test]
    fn class_variant_uniform_when_all_agree() {
        let inputs = vec![ClassInput::Value("yes".into()); 3];
        let (v, _) = with_net(3, |net| {
            secure_union_class_variant(net, &ring(3), &inputs)
        });
        assert_eq!(v, ClassVerdict::Uniform("yes".into()));
    }

    #[test]
    fn class_variant_bottom_forces_not_uniform() {
        let inputs = vec![
            ClassInput::Value("yes".into()),
            ClassInput::Bottom,
            ClassInput::Value("yes".into()),
        ];
        let (v, _) = with_net(3, |net| {
            secure_union_class_variant(net, &ring(3), &inputs)
        });
        assert_eq!(v, ClassVerdict::NotUniform);
    }

    #[test]
    fn class_variant_two_values_stops_before_decryption() {
        let inputs = vec![
            ClassInput::Value("yes".into()),
            ClassInput::Value("no".into()),
            ClassInput::Value("yes".into()),
        ];
        let (v, transcript) = with_net(3, |net| {
            secure_union_class_variant(net, &ring(3), &inputs)
        });
        assert_eq!(v, ClassVerdict::NotUniform);
        assert!(transcript
            .entries
            .iter()
            .all(|e| e.tag != "class-test-decrypt"));
    }

    #[test]
    fn class_variant_ignores_empty_parties() {
        let inputs = vec![
            ClassInput::Empty,
            ClassInput::Value("no".into()),
            ClassInput::Value("no".into()),
        ];
        let (v, _) = with_net(3, |net| {
            secure_union_class_variant(net, &ring(3), &inputs)
        });
        assert_eq!(v, ClassVerdict::Uniform("no".into()));
    }

    #[test]
    fn class_variant_all_bottom_is_not_uniform() {
        let inputs = vec![ClassInput::Bottom; 3];
        let (v, _) = with_net(3, |net| {
            secure_union_class_variant(net, &ring(3), &inputs)
        });
        assert_eq!(v, ClassVerdict::NotUniform);
    }

    #[test]
    fn intersection_of_identical_sets_is_their_size() {
        let sets = vec![strs(&["a", "b", "c"]); 3];
        let (size, _) = with_net(3, |net| {
            let parties = ring(3);
            secure_intersection_size(net, &parties, &sets, 4, &parties.clone())
        });
        assert_eq!(size, 3);
    }

    #[test]
    fn intersection_of_disjoint_sets_is_zero() {
        let sets = vec![strs(&["a"]), strs(&["b"]), strs(&["c"])];
        let (size, _) = with_net(3, |net| {
            let parties = ring(3);
            secure_intersection_size(net, &parties, &sets, 2, &parties.clone())
        });
        assert_eq!(size, 0);
    }

    #[test]
    fn intersection_matches_plaintext_oracle_on_random_sets() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for case in 0..100 {
            let k = rng.gen_range(3..=5);
            let universe: Vec<String> = (0..50).map(|n| format!("u{n}")).collect();
            let sets: Vec<Vec<String>> = (0..k)
                .map(|_| {
                    universe
                        .iter()
                        .filter(|_| rng.gen_bool(0.6))
                        .cloned()
                        .collect()
                })
                .collect();
            let expected = sets
                .iter()
                .map(|s| s.iter().cloned().collect::<BTreeSet<_>>())
                .reduce(|a, b| a.intersection(&b).cloned().collect())
                .unwrap()
                .len() as u64;
            let (got, _) = with_net(k, |net| {
                let parties = ring(k);
                secure_intersection_size(net, &parties, &sets, 50, &parties.clone())
            });
            assert_eq!(got, expected, "case {case}");
        }
    }

    #[test]
    fn union_bytes_stay_within_twice_the_model_value() {
        // k = 4 parties, sets over a 50-element universe padded to 50,
        // 128-bit keys: the model says about k^2 * |T| * t bits total
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let universe: Vec<String> = (0..50).map(|n| format!("u{n}")).collect();
        let sets: Vec<Vec<String>> = (0..4)
            .map(|_| {
                universe
                    .iter()
                    .filter(|_| rng.gen_bool(0.85))
                    .cloned()
                    .collect()
            })
            .collect();
        let (_, transcript) = with_net(4, |net| secure_union(net, &ring(4), &sets, 50));
        let bytes = crate::partynet::snapshot_counters(&transcript).bytes;
        let model = 4u64 * 4 * 50 * 128 / 8;
        assert!(
            bytes <= 2 * model && bytes >= model / 2,
            "measured {bytes} bytes vs model {model}"
        );
    }

    #[test]
    fn encrypted_union_with_shared_keys_is_cross_comparable() {
        // two unions over the same layer keys: intersection on ciphertexts
        // equals plaintext intersection of the unions
        let ((), _) = with_net(3, |net| {
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            let layer_keys: Vec<CommutativeKey> = (0..3)
                .map(|_| CommutativeKey::generate(net.cfg.key_bits, &mut rng))
                .collect::<Result<_, _>>()?;
            let refs: Vec<&CommutativeKey> = layer_keys.iter().collect();
            let a = secure_union_encrypted(
                net,
                &ring(3),
                &refs,
                &[strs(&["t1", "t2"]), strs(&["t3"]), strs(&["t4"])],
                4,
                "ua",
            )?;
            let b = secure_union_encrypted(
                net,
                &ring(3),
                &refs,
                &[strs(&["t2", "t4"]), strs(&["t5"]), vec![]],
                4,
                "ub",
            )?;
            assert_eq!(a.intersection_size([&b]), 2); // {t2, t4}
            Ok(())
        });
    }
}
