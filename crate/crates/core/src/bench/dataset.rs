use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, Millis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub name: String,
    /// Mean gap between two generated events of this type.
    pub mean_gap_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_events: usize,
    pub type_alphabet: Vec<TypeSpec>,
    pub seed: u64,
    /// Chance that an event's arrival is delayed.
    #[serde(default)]
    pub ooo_probability: f64,
    /// Upper bound of the uniform arrival delay of a displaced event.
    #[serde(default)]
    pub max_displacement_ms: Millis,
    #[serde(default)]
    pub duplicate_count: usize,
    /// Attribute values are drawn uniformly from `0..value_range` as numbers
    /// under the `value` key.
    #[serde(default = "default_value_range")]
    pub value_range: u32,
}

fn default_value_range() -> u32 {
    100
}

impl DatasetSpec {
    /// `n_events` over the given types, each with the same mean gap.
    pub fn uniform(n_events: usize, types: &[&str], mean_gap_seconds: f64, seed: u64) -> Self {
        DatasetSpec {
            n_events,
            type_alphabet: types
                .iter()
                .map(|t| TypeSpec {
                    name: t.to_string(),
                    mean_gap_seconds,
                })
                .collect(),
            seed,
            ooo_probability: 0.0,
            max_displacement_ms: 0,
            duplicate_count: 0,
            value_range: default_value_range(),
        }
    }

    pub fn disordered(mut self, probability: f64, max_displacement_ms: Millis) -> Self {
        self.ooo_probability = probability;
        self.max_displacement_ms = max_displacement_ms;
        self
    }

    pub fn with_duplicates(mut self, n: usize) -> Self {
        self.duplicate_count = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.type_alphabet.is_empty() {
            return Err(Error::Config(
                "dataset needs at least one event type".into(),
            ));
        }
        if self
            .type_alphabet
            .iter()
            .any(|t| t.mean_gap_seconds.is_nan() || t.mean_gap_seconds <= 0.0)
        {
            return Err(Error::Config("mean gaps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ooo_probability) {
            return Err(Error::Config("ooo_probability must lie in [0, 1]".into()));
        }
        if self.max_displacement_ms < 0 {
            return Err(Error::Config(
                "max_displacement_ms must be nonnegative".into(),
            ));
        }
        if self.ooo_probability > 0.0 && self.max_displacement_ms == 0 {
            return Err(Error::Config(
                "displacement needs max_displacement_ms > 0".into(),
            ));
        }
        if self.value_range == 0 {
            return Err(Error::Config("value_range must be positive".into()));
        }
        Ok(())
    }
}

/// An in-order base stream and its delivered variant.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Generation order, `t_arr = t_gen`.
    pub base: Vec<Event>,
    /// Arrival order after displacement and duplicate injection.
    pub variant: Vec<Event>,
}

/// Generate a seeded dataset: per-type Poisson arrivals merged into one
/// stream with strictly increasing generation times; then, independently per
/// event, an arrival delay uniform in `[1, max_displacement_ms]` ms with
/// probability `ooo_probability`; then `duplicate_count` copies of random
/// events delivered after their original.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let exp = |mean: f64, rng: &mut ChaCha8Rng| -> f64 {
        let u: f64 = rng.gen();
        -(1.0 - u).ln() * mean
    };
    let mut next: Vec<f64> = spec
        .type_alphabet
        .iter()
        .map(|t| exp(t.mean_gap_seconds, &mut rng))
        .collect();

    let mut base = Vec::with_capacity(spec.n_events);
    let mut last_t: Millis = -1;
    for i in 0..spec.n_events {
        let (k, _) = next
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty alphabet");
        let ty = &spec.type_alphabet[k];
        let mut t = (next[k] * 1000.0).round() as Millis;
        if t <= last_t {
            t = last_t + 1;
        }
        last_t = t;
        next[k] += exp(ty.mean_gap_seconds, &mut rng);
        let value = rng.gen_range(0..spec.value_range) as f64;
        let mut e = Event::new(format!("{}{i}", ty.name.to_lowercase()), ty.name.clone(), t)
            .with("value", value);
        e.partition = k as u32;
        base.push(e);
    }

    let mut variant: Vec<(Millis, usize, Event)> =
        Vec::with_capacity(base.len() + spec.duplicate_count);
    for (i, e) in base.iter().enumerate() {
        let mut e = e.clone();
        if spec.ooo_probability > 0.0 && rng.gen_bool(spec.ooo_probability) {
            e.t_arr += rng.gen_range(1..=spec.max_displacement_ms);
        }
        variant.push((e.t_arr, i, e));
    }
    if !base.is_empty() {
        for d in 0..spec.duplicate_count {
            let k = rng.gen_range(0..base.len());
            let mut copy = variant[k].2.clone();
            copy.t_arr += rng.gen_range(1..=spec.max_displacement_ms.max(1));
            variant.push((copy.t_arr, base.len() + d, copy));
        }
    }
    variant.sort_by_key(|(t, i, _)| (*t, *i));
    Ok(Dataset {
        base,
        variant: variant.into_iter().map(|(_, _, e)| e).collect(),
    })
}
