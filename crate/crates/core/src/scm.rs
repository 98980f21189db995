//! Synthetic data from linear structural causal models.
//!
//! Two generators share one parameter block. `generate_synthetic` is the
//! multi-dimensional benchmark: covariates x confound both treatment blocks,
//! only the causal block reaches the outcome. `generate_linear_scm` is the
//! scalar construction used by the bias demonstration. Both keep the latent
//! ground truth on every sample so perturbation operators and analytic CATE
//! oracles stay exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScmParams {
    pub n: usize,
    pub dim_causal: usize,
    pub dim_noncausal: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub delta: f64,
    pub y_noise_std: f64,
    pub latent_noise_std: f64,
    pub seed: u64,
}

impl Default for ScmParams {
    fn default() -> Self {
        ScmParams {
            n: 1000,
            dim_causal: 5,
            dim_noncausal: 5,
            alpha: 1.0,
            beta: 1.0,
            rho: 1.0,
            delta: 1.0,
            y_noise_std: 0.5,
            latent_noise_std: 1.0,
            seed: 0,
        }
    }
}

impl ScmParams {
    /// dim_noncausal = 0 is allowed: the semi-synthetic pipeline generates a
    /// purely causal core and appends correlated non-causal dimensions
    /// afterwards. Identifiability arguments additionally need
    /// latent_noise_std > 0; 0 is still accepted because the noiseless case
    /// is what makes the analytic oracles exact.
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!(
                "n = {} is too small, the 70/30 split degenerates below 10",
                self.n
            )));
        }
        if self.dim_causal < 1 {
            return Err(Error::Config("dim_causal must be at least 1".into()));
        }
        if self.y_noise_std < 0.0 || !self.y_noise_std.is_finite() {
            return Err(Error::Config(format!("y_noise_std must be finite and >= 0, got {}", self.y_noise_std)));
        }
        if self.latent_noise_std < 0.0 || !self.latent_noise_std.is_finite() {
            return Err(Error::Config(format!(
                "latent_noise_std must be finite and >= 0, got {}",
                self.latent_noise_std
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho", self.rho),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn t_dim(&self) -> usize {
        self.dim_causal + self.dim_noncausal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub y: f64,
    /// Latent ground truth; present on generated or augmented data. The
    /// observed t is always [t_causal | t_noncausal] (identity mixing).
    pub t_causal: Option<Vec<f64>>,
    pub t_noncausal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic(ScmParams),
    LinearScm(ScmParams),
    External { path: String, split_seed: u64 },
    Augmented { base: Box<Provenance>, extra_dims: usize, coupling: f64, noise_std: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Vec<SplitTag>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn x_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn t_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.t.len())
    }

    pub fn indices_of(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn split_samples(&self, tag: SplitTag) -> impl Iterator<Item = &Sample> {
        self.samples.iter().zip(&self.split).filter(move |(_, &t)| t == tag).map(|(s, _)| s)
    }

    /// (X, T, Y) matrices for one split, rows in dataset order.
    pub fn matrices(&self, tag: SplitTag) -> (Tensor2, Tensor2, Tensor2) {
        let idx = self.indices_of(tag);
        let mut x = Vec::with_capacity(idx.len() * self.x_dim());
        let mut t = Vec::with_capacity(idx.len() * self.t_dim());
        let mut y = Vec::with_capacity(idx.len());
        for &i in &idx {
            x.extend_from_slice(&self.samples[i].x);
            t.extend_from_slice(&self.samples[i].t);
            y.push(self.samples[i].y);
        }
        (
            Tensor2::from_vec(idx.len(), self.x_dim(), x).expect("x block"),
            Tensor2::from_vec(idx.len(), self.t_dim(), t).expect("t block"),
            Tensor2::from_vec(idx.len(), 1, y).expect("y block"),
        )
    }
}

/// 70/30 split tags: deterministic in (n, seed), independent of content.
pub fn split_tags(n: usize, seed: u64) -> Vec<SplitTag> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::seed_from(seed).derive("split").shuffle(&mut order);
    let train_n = n * 7 / 10;
    let mut tags = vec![SplitTag::Eval; n];
    for &i in order.iter().take(train_n) {
        tags[i] = SplitTag::Train;
    }
    tags
}

/// Structural equations of the synthetic generator, exposed so tests can
/// force latent values. Given covariates and noise, returns (t, y).
/// y sums mask*t + x over all dimensions; the outcome noise enters once per
/// sample, not per dimension.
pub fn synthetic_structural(
    params: &ScmParams,
    x: &[f64],
    t_noise: &[f64],
    y_noise: f64,
) -> (Vec<f64>, f64) {
    let m = params.dim_causal;
    let t: Vec<f64> = x.iter().zip(t_noise).map(|(&xi, &ni)| xi + params.latent_noise_std * ni).collect();
    let mut y = params.y_noise_std * y_noise;
    for j in 0..x.len() {
        if j < m {
            y += t[j];
        }
        y += x[j];
    }
    (t, y)
}

pub fn generate_synthetic(params: &ScmParams) -> Result<Dataset> {
    params.validate()?;
    let dim = params.t_dim();
    let root = Rng::seed_from(params.seed);
    let mut noise = root.derive("synthetic");
    let mut samples = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let x = noise.normal_vec(dim);
        let t_noise = noise.normal_vec(dim);
        let y_noise = noise.normal();
        let (t, y) = synthetic_structural(params, &x, &t_noise, y_noise);
        samples.push(Sample {
            t_causal: Some(t[..params.dim_causal].to_vec()),
            t_noncausal: Some(t[params.dim_causal..].to_vec()),
            x,
            t,
            y,
        });
    }
    Ok(Dataset {
        split: split_tags(params.n, params.seed),
        samples,
        provenance: Provenance::Synthetic(params.clone()),
    })
}

/// Structural equations of the scalar linear SCM: X = eps_x,
/// T_C = alpha X + eps_tc, T_nC = beta X + eps_tnc, Y = rho T_C + delta X + eps_y.
/// Noise arguments are the raw standard normals; stds are applied here.
pub fn linear_structural(
    params: &ScmParams,
    eps_x: f64,
    eps_tc: f64,
    eps_tnc: f64,
    eps_y: f64,
) -> (f64, f64, f64, f64) {
    let x = eps_x;
    let t_c = params.alpha * x + params.latent_noise_std * eps_tc;
    let t_nc = params.beta * x + params.latent_noise_std * eps_tnc;
    let y = params.rho * t_c + params.delta * x + params.y_noise_std * eps_y;
    (x, t_c, t_nc, y)
}

pub fn generate_linear_scm(params: &ScmParams) -> Result<Dataset> {
    params.validate()?;
    if params.dim_causal != 1 || params.dim_noncausal != 1 {
        return Err(Error::Config(format!(
            "the linear SCM is scalar per latent block; got dim_causal {} / dim_noncausal {}",
            params.dim_causal, params.dim_noncausal
        )));
    }
    let root = Rng::seed_from(params.seed);
    let mut noise = root.derive("linear-scm");
    let mut samples = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let (x, t_c, t_nc, y) =
            linear_structural(params, noise.normal(), noise.normal(), noise.normal(), noise.normal());
        samples.push(Sample {
            x: vec![x],
            t: vec![t_c, t_nc],
            y,
            t_causal: Some(vec![t_c]),
            t_noncausal: Some(vec![t_nc]),
        });
    }
    Ok(Dataset {
        split: split_tags(params.n, params.seed),
        samples,
        provenance: Provenance::LinearScm(params.clone()),
    })
}

/// Analytic E[Y | do(T_C), X=x] - E[Y | do(T_C'), X=x] for generated data.
/// Augmented datasets defer to their base generator; external data has no
/// oracle.
pub fn true_cate(
    provenance: &Provenance,
    t_causal: &[f64],
    t_causal_other: &[f64],
    _x: &[f64],
) -> Result<f64> {
    if t_causal.len() != t_causal_other.len() {
        return Err(Error::Shape(format!(
            "causal treatment lengths differ: {} vs {}",
            t_causal.len(),
            t_causal_other.len()
        )));
    }
    match provenance {
        Provenance::Synthetic(p) => {
            if t_causal.len() != p.dim_causal {
                return Err(Error::Shape(format!(
                    "expected {} causal dims, got {}",
                    p.dim_causal,
                    t_causal.len()
                )));
            }
            Ok(t_causal.iter().zip(t_causal_other).map(|(a, b)| a - b).sum())
        }
        Provenance::LinearScm(p) => {
            if t_causal.len() != 1 {
                return Err(Error::Shape("linear SCM has a scalar causal treatment".into()));
            }
            Ok(p.rho * (t_causal[0] - t_causal_other[0]))
        }
        Provenance::Augmented { base, .. } => true_cate(base, t_causal, t_causal_other, _x),
        Provenance::External { .. } => {
            Err(Error::Unsupported("no analytic CATE oracle for externally loaded data".into()))
        }
    }
}

/// Same x, y and t_causal; t_noncausal gets additive Normal(0, noise_scale).
/// The outcome is untouched because t_noncausal never enters it: this is the
/// counterfactual pair construction with a ground-truth effect of zero.
pub fn perturb_noncausal(sample: &Sample, rng: &mut Rng, noise_scale: f64) -> Result<Sample> {
    if noise_scale < 0.0 {
        return Err(Error::Config(format!("noise_scale must be >= 0, got {noise_scale}")));
    }
    let t_c = sample
        .t_causal
        .as_ref()
        .ok_or_else(|| Error::Unsupported("perturb_noncausal needs latent ground truth on the sample".into()))?;
    let t_nc = sample
        .t_noncausal
        .as_ref()
        .ok_or_else(|| Error::Unsupported("perturb_noncausal needs latent ground truth on the sample".into()))?;
    let new_nc: Vec<f64> = t_nc.iter().map(|&v| v + noise_scale * rng.normal()).collect();
    let mut t = t_c.clone();
    t.extend_from_slice(&new_nc);
    Ok(Sample {
        x: sample.x.clone(),
        t,
        y: sample.y,
        t_causal: Some(t_c.clone()),
        t_noncausal: Some(new_nc),
    })
}

/// y <- y + Normal(0, std) on every sample, both splits.
pub fn perturb_outcome_noise(dataset: &Dataset, std: f64, rng: &mut Rng) -> Result<Dataset> {
    if std < 0.0 {
        return Err(Error::Config(format!("outcome noise std must be >= 0, got {std}")));
    }
    let mut out = dataset.clone();
    for s in &mut out.samples {
        s.y += std * rng.normal();
    }
    Ok(out)
}
