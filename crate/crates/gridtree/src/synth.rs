//! Sample data and seeded random relation generation, used by the report
//! sweeps and the test harness.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::dataset::Relation;

/// The 14-tuple weather toy data set.
pub const WEATHER_CSV: &str = "\
day,outlook,temperature,humidity,wind,play
d1,sunny,hot,high,weak,no
d2,sunny,hot,high,strong,no
d3,overcast,hot,high,weak,yes
d4,rain,mild,high,weak,yes
d5,rain,cool,normal,weak,yes
d6,rain,cool,normal,strong,no
d7,overcast,cool,normal,strong,yes
d8,sunny,mild,high,weak,no
d9,sunny,cool,normal,weak,yes
d10,rain,mild,normal,weak,yes
d11,sunny,mild,normal,strong,yes
d12,overcast,mild,high,strong,yes
d13,overcast,hot,normal,weak,yes
d14,rain,mild,normal,strong,no
";

/// Shape of a generated relation.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub n_tuples: usize,
    pub n_attrs: usize,
    /// Values per decision attribute (at least 2).
    pub n_values: usize,
    /// Values of the class attribute (at least 2).
    pub n_classes: usize,
}

/// Generate a seeded random relation. Attribute values are qualified with the
/// attribute name so that a value string leaking to the wrong party is
/// detectable by the visibility audit.
pub fn random_relation(spec: &SynthSpec, seed: u64) -> Relation {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let mut schema = vec!["id".to_string()];
    for a in 1..=spec.n_attrs {
        schema.push(format!("attr{a}"));
    }
    schema.push("label".to_string());

    // A hidden rule plus noise keeps the trees non-trivial: the class is a
    // function of two random attributes, with a noise fraction re-rolled.
    let rule_a = rng.gen_range(0..spec.n_attrs);
    let rule_b = rng.gen_range(0..spec.n_attrs);
    let mut tuples = Vec::with_capacity(spec.n_tuples);
    for t in 0..spec.n_tuples {
        let mut row = vec![format!("t{t}")];
        let mut vals = Vec::with_capacity(spec.n_attrs);
        for a in 0..spec.n_attrs {
            let val = rng.gen_range(0..spec.n_values);
            vals.push(val);
            row.push(format!("a{}=v{}", a + 1, val));
        }
        let mut class = (vals[rule_a] + vals[rule_b]) % spec.n_classes;
        if rng.gen_bool(0.25) {
            class = rng.gen_range(0..spec.n_classes);
        }
        row.push(format!("c{class}"));
        tuples.push(row);
    }
    Relation::new(schema, "id", "label", tuples).expect("generated relation is valid")
}
