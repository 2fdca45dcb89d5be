//! Seeded synthetic datasets with controllable group bias and proxy noise.
//!
//! A [`SynthSpec`] describes a logistic ground truth over standard-normal
//! features, plus groups that each carry a membership rate, an additive
//! label bias, and a proxy flip rate. Generation is deterministic in the
//! seed. The emitted prediction column is the *unbiased* base score, so the
//! biased groups are exactly the ones a calibration audit should flag.
//!
//! Spec files are line-oriented:
//!
//! ```text
//! n = 2000
//! seed = 7
//! weights = 0.8, -0.5, 0.3
//! intercept = -0.2
//! group g1 rate=0.30 err=0.05 bias=-0.20
//! ```

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::schema::DatasetSchema;
use crate::data::table::{resolve, LoadedCsv, TabularData};
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGroup {
    pub name: String,
    pub rate: f64,
    pub err: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub groups: Vec<SynthGroup>,
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut seed = 0u64;
        let mut weights = Vec::new();
        let mut intercept = 0.0;
        let mut groups = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Config {
                line: lineno,
                reason,
            };
            if let Some(rest) = line.strip_prefix("group ") {
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                if tokens.is_empty() {
                    return Err(err("group line needs a name".into()));
                }
                let mut group = SynthGroup {
                    name: tokens[0].to_string(),
                    rate: 0.0,
                    err: 0.0,
                    bias: 0.0,
                };
                for tok in &tokens[1..] {
                    let (key, value) = tok
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, got {tok:?}")))?;
                    let v: f64 = value
                        .parse()
                        .map_err(|_| err(format!("bad number {value:?}")))?;
                    match key {
                        "rate" => group.rate = v,
                        "err" => group.err = v,
                        "bias" => group.bias = v,
                        other => return Err(err(format!("unknown group key {other:?}"))),
                    }
                }
                groups.push(group);
            } else if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                match key {
                    "n" => {
                        n = Some(value.parse().map_err(|_| err(format!("bad n {value:?}")))?)
                    }
                    "seed" => {
                        seed = value
                            .parse()
                            .map_err(|_| err(format!("bad seed {value:?}")))?
                    }
                    "intercept" => {
                        intercept = value
                            .parse()
                            .map_err(|_| err(format!("bad intercept {value:?}")))?
                    }
                    "weights" => {
                        weights = value
                            .split(',')
                            .map(|s| s.trim().parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| err(format!("bad weights {value:?}")))?;
                    }
                    other => return Err(err(format!("unknown key {other:?}"))),
                }
            } else {
                return Err(err(format!("unparseable line {line:?}")));
            }
        }
        let spec = Self {
            n: n.ok_or(Error::Config {
                line: 0,
                reason: "missing `n = <rows>`".into(),
            })?,
            seed,
            weights,
            intercept,
            groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidParameter {
            name: "synth spec",
            reason,
        };
        if self.n == 0 {
            return Err(bad("n must be at least 1".into()));
        }
        if self.weights.is_empty() {
            return Err(bad("weights must name at least one feature".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for g in &self.groups {
            if g.name.is_empty() || !seen.insert(g.name.clone()) {
                return Err(bad(format!("group name {:?} empty or duplicated", g.name)));
            }
            if !(0.0..=1.0).contains(&g.rate) || !(0.0..=1.0).contains(&g.err) {
                return Err(bad(format!(
                    "group {:?}: rate and err must be in [0, 1]",
                    g.name
                )));
            }
            if !g.bias.is_finite() || g.bias.abs() > 1.0 {
                return Err(bad(format!("group {:?}: |bias| must be <= 1", g.name)));
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub table: TabularData,
    pub schema: DatasetSchema,
}

impl SynthOutput {
    pub fn resolve(&self) -> Result<LoadedCsv> {
        resolve(&self.table, &self.schema)
    }
}

/// Generate the table and its matching schema. The proxy error rates in the
/// schema are the rates actually realized in the sample, so certificates
/// computed downstream use measured, not nominal, rates.
pub fn generate_synth(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.weights.len();
    let k = spec.groups.len();
    let mut features = vec![vec![0.0f64; d]; spec.n];
    let mut scores = vec![0.0f64; spec.n];
    let mut labels = vec![0u8; spec.n];
    let mut true_masks = vec![vec![false; spec.n]; k];
    let mut proxy_masks = vec![vec![false; spec.n]; k];
    for i in 0..spec.n {
        let mut z = spec.intercept;
        for (slot, &w) in features[i].iter_mut().zip(&spec.weights) {
            let x: f64 = rng.sample(StandardNormal);
            *slot = x;
            z += w * x;
        }
        let base = sigmoid(z);
        scores[i] = base;
        let mut biased = base;
        for (g, group) in spec.groups.iter().enumerate() {
            let member = rng.random::<f64>() < group.rate;
            true_masks[g][i] = member;
            if member {
                biased += group.bias;
            }
        }
        let p_true = biased.clamp(0.0, 1.0);
        labels[i] = u8::from(rng.random::<f64>() < p_true);
        for (g, group) in spec.groups.iter().enumerate() {
            let flip = rng.random::<f64>() < group.err;
            proxy_masks[g][i] = true_masks[g][i] != flip;
        }
    }
    let mut columns: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    columns.push("score".into());
    columns.push("y".into());
    for g in &spec.groups {
        columns.push(format!("{}_true", g.name));
        columns.push(format!("{}_proxy", g.name));
    }
    let mut rows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut row: Vec<String> = features[i].iter().map(|v| format!("{v}")).collect();
        row.push(format!("{}", scores[i]));
        row.push(format!("{}", labels[i]));
        for g in 0..k {
            row.push(if true_masks[g][i] { "1" } else { "0" }.into());
            row.push(if proxy_masks[g][i] { "1" } else { "0" }.into());
        }
        rows.push(row);
    }
    let mut config = String::new();
    config.push_str("label = y\nprediction = score\n");
    if d > 0 {
        let names: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        config.push_str(&format!("features = {}\n", names.join(", ")));
    }
    for (g, group) in spec.groups.iter().enumerate() {
        let measured = metrics::proxy_error(&true_masks[g], &proxy_masks[g])?;
        config.push_str(&format!(
            "group {} true: {}_true = 1\ngroup {} proxy err={}: {}_proxy = 1\n",
            group.name, group.name, group.name, measured, group.name
        ));
    }
    let schema = DatasetSchema::parse(&config)?;
    Ok(SynthOutput {
        table: TabularData { columns, rows },
        schema,
    })
}
