//! Ideal-functionality stand-in for garbled-circuit evaluation. A circuit
//! spec declares who provides inputs, what is computed and who learns the
//! result; evaluation reveals exactly the declared output to the declared
//! recipients and charges the transcript with the costs a real circuit
//! protocol would incur (computation proportional to log of the input
//! magnitude, communication proportional to series length x log x key bits).
//!
//! The evaluator is behind a trait so a real garbled-circuit backend can be
//! swapped in without touching the protocols.

use serde::Serialize;

use crate::error::ProtocolError;
use crate::partynet::{Network, ObservedValue, PartyId};
use crate::smpc::{reconstruct_raw, reconstruct_signed, Share, ShareDomain};

/// Who learns the circuit output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipient {
    All,
    Party(PartyId),
}

/// The functions the protocols evaluate inside circuits. Share-pair inputs
/// arrive as raw ring elements and are reconstructed inside the
/// functionality, never at any party.
#[derive(Debug, Clone, PartialEq)]
pub enum CircuitFn {
    /// `[masked_sum, mask]` in the given share domain: is the true sum zero?
    IsZeroMasked { domain: ShareDomain },
    /// Share pair per candidate: is the reconstructed count positive?
    ArePositive { domain: ShareDomain },
    /// Plain count per candidate: index of the largest, lowest index on ties.
    MostFrequent,
    /// Share pair per candidate: index of the largest reconstructed count.
    MostFrequentShares { domain: ShareDomain },
    /// Plain count per candidate: `Some(index)` iff exactly one is non-zero.
    AllZeroExceptOne,
    /// Share pair per candidate: `Some(index)` iff exactly one is non-zero.
    AllZeroExceptOneShares { domain: ShareDomain },
    /// `(gain, position)` per candidate: index of the best gain, with ties
    /// going to the lowest position.
    ArgmaxGains,
    /// Share pair + position per candidate: argmax of the reconstructed
    /// gains, ties to the lowest position.
    ArgmaxGainShares { domain: ShareDomain },
    /// Like [`CircuitFn::ArgmaxGainShares`], but candidates arrive in groups,
    /// one provider pair per group. Outputs the winning group and the slot of
    /// its best candidate; only the group is meant to become public.
    ArgmaxGroupedShares { domain: ShareDomain },
}

/// One party's contribution to a circuit evaluation.
#[derive(Debug, Clone)]
pub struct CircuitInput {
    pub from: PartyId,
    pub values: Vec<CircuitValue>,
}

#[derive(Debug, Clone, Copy)]
pub enum CircuitValue {
    Num(u64),
    Real(f64),
}

impl CircuitValue {
    fn num(&self) -> Result<u64, ProtocolError> {
        match self {
            CircuitValue::Num(n) => Ok(*n),
            CircuitValue::Real(_) => Err(ProtocolError::SpecError(
                "expected an integer input".into(),
            )),
        }
    }

    fn real(&self) -> Result<f64, ProtocolError> {
        match self {
            CircuitValue::Real(r) => Ok(*r),
            CircuitValue::Num(n) => Ok(*n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CircuitOutput {
    Bool(bool),
    Index(usize),
    OptIndex(Option<usize>),
    Flags(Vec<bool>),
    /// Winning group plus the slot of its best candidate; the observed form
    /// shows only the group, the slot is delivered separately to the group.
    GroupSlot { group: usize, slot: usize },
}

impl CircuitOutput {
    fn observed(&self) -> ObservedValue {
        match self {
            CircuitOutput::Bool(b) => ObservedValue::Text(b.to_string()),
            CircuitOutput::Index(i) => ObservedValue::Num(*i as u64),
            CircuitOutput::OptIndex(None) => ObservedValue::Text("none".into()),
            CircuitOutput::OptIndex(Some(i)) => ObservedValue::Num(*i as u64),
            CircuitOutput::Flags(f) => ObservedValue::Text(
                f.iter().map(|b| if *b { '1' } else { '0' }).collect(),
            ),
            CircuitOutput::GroupSlot { group, .. } => ObservedValue::Num(*group as u64),
        }
    }
}

/// Declared shape and cost profile of one circuit evaluation.
#[derive(Debug, Clone)]
pub struct IdealCircuitSpec {
    pub name: String,
    pub function: CircuitFn,
    /// Input providers; the first acts as the circuit generator and is
    /// charged the computation.
    pub providers: Vec<PartyId>,
    pub recipients: Vec<Recipient>,
    /// Magnitude of the values flowing through the circuit (a tuple count);
    /// its logarithm drives the charged costs.
    pub input_magnitude: u64,
    /// Series length for circuits that embed a Taylor evaluation; 1 for
    /// plain comparisons.
    pub taylor_terms: u32,
}

/// Evaluation backend; [`IdealBackend`] computes in the clear inside the
/// functionality boundary.
pub trait CircuitBackend {
    fn evaluate(
        &self,
        function: &CircuitFn,
        inputs: &[CircuitInput],
    ) -> Result<CircuitOutput, ProtocolError>;
}

#[derive(Debug, Default)]
pub struct IdealBackend;

fn share_pairs(
    inputs: &[CircuitInput],
    domain: ShareDomain,
) -> Result<Vec<(Share, Share)>, ProtocolError> {
    // Every provider supplies the same number of values; pair them up
    // positionally: value n of provider A with value n of provider B.
    if inputs.len() != 2 {
        return Err(ProtocolError::SpecError(format!(
            "share-pair circuit needs exactly 2 providers, got {}",
            inputs.len()
        )));
    }
    if inputs[0].values.len() != inputs[1].values.len() {
        return Err(ProtocolError::SpecError(
            "share-pair providers disagree on arity".into(),
        ));
    }
    inputs[0]
        .values
        .iter()
        .zip(inputs[1].values.iter())
        .map(|(a, b)| {
            Ok((
                Share::from_raw(a.num()?, domain),
                Share::from_raw(b.num()?, domain),
            ))
        })
        .collect()
}

fn argmax_counts(counts: &[u64]) -> usize {
    let mut best = 0;
    for (idx, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = idx;
        }
    }
    best
}

fn exactly_one_nonzero(counts: &[u64]) -> Option<usize> {
    let nonzero: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| i)
        .collect();
    match nonzero.as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}

/// Argmax over (value, position) pairs: larger value wins, ties within the
/// gain tolerance go to the lower position.
fn argmax_positioned(cands: &[(f64, usize)]) -> usize {
    let mut best = 0;
    for idx in 1..cands.len() {
        let (g, pos) = cands[idx];
        let (bg, bpos) = cands[best];
        if g > bg + crate::id3::GAIN_EPS || ((g - bg).abs() <= crate::id3::GAIN_EPS && pos < bpos)
        {
            best = idx;
        }
    }
    best
}

impl CircuitBackend for IdealBackend {
    fn evaluate(
        &self,
        function: &CircuitFn,
        inputs: &[CircuitInput],
    ) -> Result<CircuitOutput, ProtocolError> {
        match function {
            CircuitFn::IsZeroMasked { domain } => {
                let pairs = share_pairs(inputs, *domain)?;
                if pairs.len() != 1 {
                    return Err(ProtocolError::SpecError(
                        "is-zero takes one masked value and one mask".into(),
                    ));
                }
                Ok(CircuitOutput::Bool(
                    reconstruct_raw(&pairs[0].0, &pairs[0].1) == 0,
                ))
            }
            CircuitFn::ArePositive { domain } => {
                let pairs = share_pairs(inputs, *domain)?;
                Ok(CircuitOutput::Flags(
                    pairs
                        .iter()
                        .map(|(a, b)| reconstruct_raw(a, b) > 0)
                        .collect(),
                ))
            }
            CircuitFn::MostFrequent => {
                let counts = flat_nums(inputs)?;
                if counts.is_empty() {
                    return Err(ProtocolError::SpecError("no candidates".into()));
                }
                Ok(CircuitOutput::Index(argmax_counts(&counts)))
            }
            CircuitFn::MostFrequentShares { domain } => {
                let pairs = share_pairs(inputs, *domain)?;
                if pairs.is_empty() {
                    return Err(ProtocolError::SpecError("no candidates".into()));
                }
                let counts: Vec<u64> = pairs.iter().map(|(a, b)| reconstruct_raw(a, b)).collect();
                Ok(CircuitOutput::Index(argmax_counts(&counts)))
            }
            CircuitFn::AllZeroExceptOne => {
                let counts = flat_nums(inputs)?;
                Ok(CircuitOutput::OptIndex(exactly_one_nonzero(&counts)))
            }
            CircuitFn::AllZeroExceptOneShares { domain } => {
                let pairs = share_pairs(inputs, *domain)?;
                let counts: Vec<u64> = pairs.iter().map(|(a, b)| reconstruct_raw(a, b)).collect();
                Ok(CircuitOutput::OptIndex(exactly_one_nonzero(&counts)))
            }
            CircuitFn::ArgmaxGains => {
                // values arrive as (gain, position) pairs, possibly from
                // several providers
                let mut cands = Vec::new();
                for input in inputs {
                    if input.values.len() % 2 != 0 {
                        return Err(ProtocolError::SpecError(
                            "argmax expects (gain, position) pairs".into(),
                        ));
                    }
                    for chunk in input.values.chunks(2) {
                        cands.push((chunk[0].real()?, chunk[1].num()? as usize));
                    }
                }
                if cands.is_empty() {
                    return Err(ProtocolError::SpecError("no candidates".into()));
                }
                Ok(CircuitOutput::Index(argmax_positioned(&cands)))
            }
            CircuitFn::ArgmaxGainShares { domain } => {
                // provider 0 supplies (share, position) pairs, provider 1 the
                // matching counter-shares
                if inputs.len() != 2 {
                    return Err(ProtocolError::SpecError(
                        "share argmax needs exactly 2 providers".into(),
                    ));
                }
                let cands = positioned_share_candidates(&inputs[0], &inputs[1], *domain)?;
                if cands.is_empty() {
                    return Err(ProtocolError::SpecError("no candidates".into()));
                }
                Ok(CircuitOutput::Index(argmax_positioned(&cands)))
            }
            CircuitFn::ArgmaxGroupedShares { domain } => {
                if !inputs.len().is_multiple_of(2) || inputs.is_empty() {
                    return Err(ProtocolError::SpecError(
                        "grouped argmax needs provider pairs".into(),
                    ));
                }
                let mut all: Vec<(usize, usize, (f64, usize))> = Vec::new();
                for g in 0..inputs.len() / 2 {
                    let cands = positioned_share_candidates(
                        &inputs[2 * g],
                        &inputs[2 * g + 1],
                        *domain,
                    )?;
                    for (slot, cand) in cands.into_iter().enumerate() {
                        all.push((g, slot, cand));
                    }
                }
                if all.is_empty() {
                    return Err(ProtocolError::SpecError("no candidates".into()));
                }
                let flat: Vec<(f64, usize)> = all.iter().map(|(_, _, c)| *c).collect();
                let best = argmax_positioned(&flat);
                Ok(CircuitOutput::GroupSlot {
                    group: all[best].0,
                    slot: all[best].1,
                })
            }
        }
    }
}

fn positioned_share_candidates(
    a_input: &CircuitInput,
    b_input: &CircuitInput,
    domain: ShareDomain,
) -> Result<Vec<(f64, usize)>, ProtocolError> {
    if a_input.values.len() != 2 * b_input.values.len() {
        return Err(ProtocolError::SpecError(
            "share argmax providers disagree on arity".into(),
        ));
    }
    a_input
        .values
        .chunks(2)
        .zip(b_input.values.iter())
        .map(|(chunk, b)| {
            let a = Share::from_raw(chunk[0].num()?, domain);
            let b = Share::from_raw(b.num()?, domain);
            let gain = reconstruct_signed(&a, &b) as f64 / domain.scale();
            Ok((gain, chunk[1].num()? as usize))
        })
        .collect()
}

fn flat_nums(inputs: &[CircuitInput]) -> Result<Vec<u64>, ProtocolError> {
    inputs
        .iter()
        .flat_map(|i| i.values.iter())
        .map(|v| v.num())
        .collect()
}

fn log2_ceil(n: u64) -> u64 {
    (64 - n.max(1).leading_zeros()) as u64
}

/// Evaluate a circuit spec: validate arity, charge the modeled costs to the
/// transcript, compute via the backend and deliver the output to the
/// declared recipients only.
pub fn ideal_circuit_eval(
    net: &mut Network,
    spec: &IdealCircuitSpec,
    inputs: &[CircuitInput],
) -> Result<CircuitOutput, ProtocolError> {
    if inputs.len() != spec.providers.len()
        || inputs
            .iter()
            .zip(spec.providers.iter())
            .any(|(i, p)| i.from != *p)
    {
        return Err(ProtocolError::SpecError(format!(
            "circuit `{}`: inputs do not match declared providers",
            spec.name
        )));
    }
    let coordinator = spec.providers[0];
    let logt = log2_ceil(spec.input_magnitude + 1);
    let key_bytes = u64::from(net.cfg.key_bits) / 8;
    let tag = format!("circuit:{}", spec.name);

    // masked inputs travel to the functionality via the coordinator
    for input in inputs.iter().skip(1) {
        net.send_opaque(
            input.from,
            coordinator,
            &tag,
            (input.values.len() as u64).max(1) * key_bytes,
            "masked-input",
        );
    }
    // the garbled circuit itself: n * log|T| * t bits per receiving party
    let circuit_bytes = (u64::from(spec.taylor_terms) * logt * key_bytes).max(1);
    for other in spec.providers.iter().skip(1) {
        net.send_opaque(coordinator, *other, &tag, circuit_bytes, "garbled-circuit");
    }
    net.charge_circuit_units(coordinator, logt.max(1));

    let output = IdealBackend.evaluate(&spec.function, inputs)?;

    for recipient in &spec.recipients {
        match recipient {
            Recipient::All => match output.observed() {
                ObservedValue::Num(n) => net.announce_num(coordinator, &tag, n, 64),
                ObservedValue::Text(t) => net.announce_text(coordinator, &tag, &t),
                other => {
                    let rendered = format!("{other:?}");
                    net.announce_text(coordinator, &tag, &rendered);
                }
            },
            Recipient::Party(p) => {
                net.reveal_to(coordinator, *p, &tag, output.observed());
            }
        }
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{all_fragments, load_relation_str, make_partition};
    use crate::partynet::{run_protocol, NetConfig};
    use crate::smpc::{partial_masked_sum, split_raw};
    use crate::synth::WEATHER_CSV;

    fn with_net<T>(
        f: impl FnOnce(&mut Network) -> Result<T, ProtocolError>,
    ) -> (T, crate::partynet::Transcript) {
        let rel = load_relation_str(WEATHER_CSV, "day", "play").unwrap();
        let part = make_partition(&rel, 1, 4, 0).unwrap();
        let frags = all_fragments(&rel, &part);
        run_protocol(&part, &frags, NetConfig::default(), 11, f).unwrap()
    }

    fn p(j: usize) -> PartyId {
        PartyId::new(1, j)
    }

    #[test]
    fn is_zero_detects_zero_sum_behind_the_mask() {
        let dom = ShareDomain::counts(32);
        let (results, _) = with_net(|net| {
            let mut results = Vec::new();
            for inputs in [[0u64, 0, 0, 0], [0, 2, 0, 1]] {
                let parties: Vec<PartyId> = (1..=4).map(p).collect();
                let (mask_share, masked) =
                    partial_masked_sum(net, &parties, &inputs, dom, "empt")?;
                let spec = IdealCircuitSpec {
                    name: "is-zero".into(),
                    function: CircuitFn::IsZeroMasked { domain: dom },
                    providers: vec![p(4), p(1)],
                    recipients: vec![Recipient::All],
                    input_magnitude: 14,
                    taylor_terms: 1,
                };
                let out = ideal_circuit_eval(
                    net,
                    &spec,
                    &[
                        CircuitInput {
                            from: p(4),
                            values: vec![CircuitValue::Num(masked.raw)],
                        },
                        CircuitInput {
                            from: p(1),
                            values: vec![CircuitValue::Num(mask_share.raw)],
                        },
                    ],
                )?;
                results.push(out);
            }
            Ok(results)
        });
        assert_eq!(results[0], CircuitOutput::Bool(true));
        assert_eq!(results[1], CircuitOutput::Bool(false));
    }

    #[test]
    fn argmax_over_gain_shares_matches_plaintext_argmax() {
        let dom = ShareDomain::fixed(62, 26);
        let gains = [0.31f64, 0.87, 0.42, 0.87];
        let (out, _) = with_net(|net| {
            let mut a_vals = Vec::new();
            let mut b_vals = Vec::new();
            for (pos, g) in gains.iter().enumerate() {
                let enc = Share::from_real(*g, dom)?;
                let (a, b) = split_raw(enc.raw, dom, net.rng());
                a_vals.push(CircuitValue::Num(a.raw));
                a_vals.push(CircuitValue::Num(pos as u64));
                b_vals.push(CircuitValue::Num(b.raw));
            }
            let spec = IdealCircuitSpec {
                name: "argmax".into(),
                function: CircuitFn::ArgmaxGainShares { domain: dom },
                providers: vec![p(1), p(4)],
                recipients: vec![Recipient::All],
                input_magnitude: 100,
                taylor_terms: 1,
            };
            ideal_circuit_eval(
                net,
                &spec,
                &[
                    CircuitInput {
                        from: p(1),
                        values: a_vals,
                    },
                    CircuitInput {
                        from: p(4),
                        values: b_vals,
                    },
                ],
            )
        });
        // plaintext argmax with tie to the lowest position picks index 1
        assert_eq!(out, CircuitOutput::Index(1));
    }

    #[test]
    fn all_zero_except_one_matches_predicate() {
        let (outs, _) = with_net(|net| {
            let spec = IdealCircuitSpec {
                name: "azeo".into(),
                function: CircuitFn::AllZeroExceptOne,
                providers: vec![p(1)],
                recipients: vec![Recipient::Party(p(1))],
                input_magnitude: 14,
                taylor_terms: 1,
            };
            let run = |net: &mut Network, counts: &[u64]| {
                ideal_circuit_eval(
                    net,
                    &spec,
                    &[CircuitInput {
                        from: p(1),
                        values: counts.iter().map(|&c| CircuitValue::Num(c)).collect(),
                    }],
                )
            };
            Ok(vec![
                run(net, &[0, 7, 0])?,
                run(net, &[1, 7, 0])?,
                run(net, &[0, 0, 0])?,
            ])
        });
        assert_eq!(outs[0], CircuitOutput::OptIndex(Some(1)));
        assert_eq!(outs[1], CircuitOutput::OptIndex(None));
        assert_eq!(outs[2], CircuitOutput::OptIndex(None));
    }

    #[test]
    fn output_goes_only_to_declared_recipients() {
        let ((), transcript) = with_net(|net| {
            let dom = ShareDomain::counts(32);
            let (a, b) = split_raw(5, dom, net.rng());
            let spec = IdealCircuitSpec {
                name: "private-out".into(),
                function: CircuitFn::IsZeroMasked { domain: dom },
                providers: vec![p(2), p(3)],
                recipients: vec![Recipient::Party(p(3))],
                input_magnitude: 14,
                taylor_terms: 1,
            };
            ideal_circuit_eval(
                net,
                &spec,
                &[
                    CircuitInput {
                        from: p(2),
                        values: vec![CircuitValue::Num(a.raw)],
                    },
                    CircuitInput {
                        from: p(3),
                        values: vec![CircuitValue::Num(b.raw)],
                    },
                ],
            )?;
            // Only the declared recipient observed a readable output; all
            // other observations of this call are opaque.
            for party in net.parties() {
                for obs in &party.observations {
                    if obs.tag == "circuit:private-out" {
                        match &obs.value {
                            ObservedValue::Opaque(_) => {}
                            other => {
                                assert_eq!(party.id, p(3), "leak to {}: {other:?}", party.id);
                            }
                        }
                    }
                }
            }
            Ok(())
        });
        assert!(transcript
            .entries
            .iter()
            .any(|e| e.tag == "circuit:private-out"));
    }

    #[test]
    fn provider_mismatch_is_a_spec_error() {
        let (res, _) = with_net(|net| {
            let spec = IdealCircuitSpec {
                name: "bad".into(),
                function: CircuitFn::MostFrequent,
                providers: vec![p(1), p(2)],
                recipients: vec![Recipient::All],
                input_magnitude: 1,
                taylor_terms: 1,
            };
            Ok(ideal_circuit_eval(
                net,
                &spec,
                &[CircuitInput {
                    from: p(1),
                    values: vec![CircuitValue::Num(1)],
                }],
            ))
        });
        assert!(matches!(res, Err(ProtocolError::SpecError(_))));
    }
}
