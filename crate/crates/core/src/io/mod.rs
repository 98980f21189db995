//! Dataset persistence, semi-synthetic augmentation, model snapshots and run
//! manifests.
//!
//! CSV is the interchange format for tabular data. Cells are written with 17
//! significant digits, which round-trips every finite f64 exactly; the
//! binary snapshot path stores raw little-endian bytes and is lossless by
//! construction.

mod manifest;
mod reports;
mod snapshot;

pub use manifest::{file_sha256, DerivedQuantities, RunManifest};
pub use reports::{write_json, write_metrics_csv, write_sweep_csv, write_train_log_csv};
pub use snapshot::{load_model, save_model};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scm::{split_tags, Dataset, Provenance, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    pub covariates: Vec<String>,
    pub treatments: Vec<String>,
    pub outcome: String,
    /// Latent markers. When present, `causal` must be a prefix of
    /// `treatments` and `noncausal` the rest, in order: the observed
    /// treatment layout is always [causal | noncausal].
    #[serde(default)]
    pub causal: Option<Vec<String>>,
    #[serde(default)]
    pub noncausal: Option<Vec<String>>,
}

impl TabularSchema {
    pub fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::Schema("schema needs at least one covariate column".into()));
        }
        if self.treatments.is_empty() {
            return Err(Error::Schema("schema needs at least one treatment column".into()));
        }
        let mut seen = HashSet::new();
        for name in
            self.covariates.iter().chain(self.treatments.iter()).chain([&self.outcome])
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("column '{name}' appears twice in the schema")));
            }
        }
        match (&self.causal, &self.noncausal) {
            (None, None) => Ok(()),
            (Some(c), Some(nc)) => {
                if c.is_empty() {
                    return Err(Error::Schema("causal marker list must not be empty".into()));
                }
                let expected: Vec<&String> = c.iter().chain(nc.iter()).collect();
                let actual: Vec<&String> = self.treatments.iter().collect();
                if expected != actual {
                    return Err(Error::Schema(
                        "latent markers must list the treatment columns in order, causal first"
                            .into(),
                    ));
                }
                Ok(())
            }
            _ => Err(Error::Schema(
                "causal and noncausal markers must be given together".into(),
            )),
        }
    }

    /// Column names for a generated dataset: x0.., t0.., y, with latent
    /// markers when the samples carry them.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        let covariates = (0..dataset.x_dim()).map(|i| format!("x{i}")).collect();
        let treatments: Vec<String> = (0..dataset.t_dim()).map(|i| format!("t{i}")).collect();
        let (causal, noncausal) = match dataset.samples.first().and_then(|s| s.t_causal.as_ref()) {
            Some(tc) => {
                let k = tc.len();
                (Some(treatments[..k].to_vec()), Some(treatments[k..].to_vec()))
            }
            None => (None, None),
        };
        TabularSchema {
            covariates,
            treatments,
            outcome: "y".into(),
            causal,
            noncausal,
        }
    }
}

/// Write the dataset as CSV (header row, 17-significant-digit cells) and
/// return the schema describing it. Both splits are written; the split is
/// not stored and is re-derived from a seed at load time.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<TabularSchema> {
    let schema = TabularSchema::for_dataset(dataset);
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<&str> = schema
        .covariates
        .iter()
        .chain(schema.treatments.iter())
        .map(|s| s.as_str())
        .chain(["y"])
        .collect();
    w.write_record(&header)?;
    for s in &dataset.samples {
        let record: Vec<String> = s
            .x
            .iter()
            .chain(s.t.iter())
            .chain([&s.y])
            .map(|v| format!("{v:.16e}"))
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(schema)
}

pub fn load_csv(path: &Path, schema: &TabularSchema, split_seed: u64) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name);
        let first = hits.next().map(|(i, _)| i).ok_or_else(|| {
            Error::Schema(format!("column '{name}' not found in '{}'", path.display()))
        })?;
        if hits.next().is_some() {
            return Err(Error::Schema(format!(
                "column '{name}' appears more than once in '{}'",
                path.display()
            )));
        }
        Ok(first)
    };
    let x_idx: Vec<usize> =
        schema.covariates.iter().map(|n| index_of(n)).collect::<Result<_>>()?;
    let t_idx: Vec<usize> =
        schema.treatments.iter().map(|n| index_of(n)).collect::<Result<_>>()?;
    let y_idx = index_of(&schema.outcome)?;
    let n_causal = schema.causal.as_ref().map(|c| c.len());

    let mut samples = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                row: r + 1,
                col: idx + 1,
                msg: "row is shorter than the header".into(),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                row: r + 1,
                col: idx + 1,
                msg: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    col: idx + 1,
                    msg: format!("non-finite value '{raw}'"),
                });
            }
            Ok(v)
        };
        let x = x_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        let t = t_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        let y = cell(y_idx)?;
        let (t_causal, t_noncausal) = match n_causal {
            Some(k) => (Some(t[..k].to_vec()), Some(t[k..].to_vec())),
            None => (None, None),
        };
        samples.push(Sample { x, t, y, t_causal, t_noncausal });
    }
    if samples.is_empty() {
        return Err(Error::Schema(format!("no data rows in '{}'", path.display())));
    }
    Ok(Dataset {
        split: split_tags(samples.len(), split_seed),
        samples,
        provenance: Provenance::External { path: path.display().to_string(), split_seed },
    })
}

/// Append `extra_dims` covariate-correlated columns to every treatment:
/// coupling·(x·P) + Normal(0, noise_std), with P a fixed random projection
/// scaled by 1/sqrt(dim x). The outcome is untouched, so the new columns
/// are non-causal by construction; existing latent markers are preserved
/// and a dataset without them gets its original treatment marked causal.
pub fn augment_noncausal(
    dataset: &Dataset,
    extra_dims: usize,
    coupling: f64,
    noise_std: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if extra_dims == 0 {
        return Err(Error::Config("augmentation needs extra_dims >= 1".into()));
    }
    if !coupling.is_finite() {
        return Err(Error::Config(format!("coupling must be finite, got {coupling}")));
    }
    if !noise_std.is_finite() || noise_std < 0.0 {
        return Err(Error::Config(format!("noise_std must be finite and >= 0, got {noise_std}")));
    }
    let Some(first) = dataset.samples.first() else {
        return Err(Error::Config("cannot augment an empty dataset".into()));
    };
    let x_dim = first.x.len();
    let seed = rng.seed();
    let scale = 1.0 / (x_dim as f64).sqrt();
    let projection: Vec<Vec<f64>> =
        (0..x_dim).map(|_| rng.normal_vec(extra_dims).iter().map(|v| v * scale).collect()).collect();

    let mut samples = Vec::with_capacity(dataset.n());
    for s in &dataset.samples {
        let mut new_cols = vec![0.0; extra_dims];
        for (xi, prow) in s.x.iter().zip(&projection) {
            for (c, p) in new_cols.iter_mut().zip(prow) {
                *c += xi * p;
            }
        }
        for c in new_cols.iter_mut() {
            *c = coupling * *c + noise_std * rng.normal();
        }
        let t_causal = s.t_causal.clone().unwrap_or_else(|| s.t.clone());
        let mut t_noncausal = s.t_noncausal.clone().unwrap_or_default();
        t_noncausal.extend_from_slice(&new_cols);
        let mut t = s.t.clone();
        t.extend_from_slice(&new_cols);
        samples.push(Sample { x: s.x.clone(), t, y: s.y, t_causal: Some(t_causal), t_noncausal: Some(t_noncausal) });
    }
    Ok(Dataset {
        samples,
        split: dataset.split.clone(),
        provenance: Provenance::Augmented {
            base: Box::new(dataset.provenance.clone()),
            extra_dims,
            coupling,
            noise_std,
            seed,
        },
    })
}
