//! Metrics and experiment protocols.
//!
//! PEHE is measured on matched eval pairs: the original sample against a
//! copy whose non-causal treatment block was re-noised. Because the pair
//! shares covariates, causal treatment and the outcome-noise draw, the true
//! effect gap is zero and PEHE isolates how much the model reacts to
//! information it should ignore.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, r2_total, with_intercept};
use crate::model::{train_any, Mode, ModelFamily, OutcomePredictor, TrainConfig, TrainedModel};
use crate::rng::Rng;
use crate::scm::{
    generate_synthetic, linear_structural, perturb_noncausal, perturb_outcome_noise, Dataset,
    Sample, ScmParams, SplitTag,
};
use crate::tensor::Tensor2;

/// Noise scale for the perturbed halves of eval pairs where no explicit
/// scale is requested (single-point evaluations and the outcome-noise sweep).
pub const DEFAULT_EVAL_NOISE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub pehe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStderr {
    pub mae: f64,
    pub rmse: f64,
    pub pehe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub pehe: f64,
    pub per_seed: Vec<SeedMetrics>,
    /// Standard error of the mean over seeds; absent with fewer than 2 seeds.
    pub stderr: Option<MetricStderr>,
}

impl MetricsReport {
    pub fn from_per_seed(mut per_seed: Vec<SeedMetrics>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::Config("metrics report needs at least one seed".into()));
        }
        per_seed.sort_by_key(|m| m.seed);
        let k = per_seed.len() as f64;
        let mean = |f: &dyn Fn(&SeedMetrics) -> f64| per_seed.iter().map(|m| f(m)).sum::<f64>() / k;
        let mae = mean(&|m| m.mae);
        let rmse = mean(&|m| m.rmse);
        let pehe = mean(&|m| m.pehe);
        let stderr = if per_seed.len() >= 2 {
            let se = |f: &dyn Fn(&SeedMetrics) -> f64, mu: f64| {
                let var = per_seed.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            };
            Some(MetricStderr {
                mae: se(&|m| m.mae, mae),
                rmse: se(&|m| m.rmse, rmse),
                pehe: se(&|m| m.pehe, pehe),
            })
        } else {
            None
        };
        Ok(MetricsReport { mae, rmse, pehe, per_seed, stderr })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub variant: String,
    /// One report per axis point; None marks a point whose training aborted.
    pub points: Vec<Option<MetricsReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub curves: Vec<SweepCurve>,
}

/// A named model configuration entered into sweeps. The config's seed field
/// is overridden by each run's seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub family: ModelFamily,
    pub mode: Mode,
    pub config: TrainConfig,
}

/// Root of the expected squared difference between the model's effect for a
/// treatment pair and the realized outcome gap:
/// sqrt( (1/n) Σ [ (f(x,t) − f(x,t')) − (y − y') ]² ).
pub fn pehe(model: &dyn OutcomePredictor, pairs: &[(Sample, Sample)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("PEHE needs at least one eval pair".into()));
    }
    let mut acc = 0.0;
    for (a, b) in pairs {
        let fa = model.predict_one(&a.x, &a.t)?;
        let fb = model.predict_one(&b.x, &b.t)?;
        acc += ((fa - fb) - (a.y - b.y)).powi(2);
    }
    Ok((acc / pairs.len() as f64).sqrt())
}

/// MAE and RMSE over the eval split.
pub fn mae_rmse(model: &dyn OutcomePredictor, dataset: &Dataset) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for s in dataset.split_samples(SplitTag::Eval) {
        let r = model.predict_one(&s.x, &s.t)? - s.y;
        abs += r.abs();
        sq += r * r;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("eval split is empty".into()));
    }
    Ok((abs / n as f64, (sq / n as f64).sqrt()))
}

/// Pair every eval-split sample with a non-causally perturbed copy.
pub fn make_eval_pairs(
    dataset: &Dataset,
    noise_scale: f64,
    rng: &mut Rng,
) -> Result<Vec<(Sample, Sample)>> {
    let mut pairs = Vec::new();
    for s in dataset.split_samples(SplitTag::Eval) {
        pairs.push((s.clone(), perturb_noncausal(s, rng, noise_scale)?));
    }
    if pairs.is_empty() {
        return Err(Error::Config("eval split is empty".into()));
    }
    Ok(pairs)
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    for w in values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(format!("{name} grid must be strictly increasing")));
        }
    }
    if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::Config(format!("{name} grid values must be finite and >= 0")));
    }
    Ok(())
}

/// The 11-level outcome-noise grid, 0.0 through 1.0 in steps of 0.1.
pub fn default_noise_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Default test-time perturbation grid for the reducible sweep.
pub fn default_perturbation_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn train_and_score(
    variant: &Variant,
    dataset: &Dataset,
    seed: u64,
    pair_streams: &[(usize, f64)], // (axis point index, perturbation scale)
) -> Result<Option<Vec<SeedMetrics>>> {
    let mut config = variant.config.clone();
    config.seed = seed;
    let (model, log) = train_any(dataset, variant.family, variant.mode, &config)?;
    if log.diverged {
        log::warn!(
            "training aborted at epoch {:?} (variant {}, seed {seed}); point marked failed",
            log.aborted_at,
            variant.name
        );
        return Ok(None);
    }
    let (mae, rmse) = mae_rmse(&model, dataset)?;
    let mut out = Vec::with_capacity(pair_streams.len());
    for &(point, scale) in pair_streams {
        // pair draws depend only on (seed, point) so every variant is scored
        // on identical pairs
        let mut rng = Rng::seed_from(seed).derive_indexed("eval-pairs", point as u64);
        let pairs = make_eval_pairs(dataset, scale, &mut rng)?;
        out.push(SeedMetrics { seed, mae, rmse, pehe: pehe(&model, &pairs)? });
    }
    Ok(Some(out))
}

fn assemble(
    axis_name: &str,
    axis_values: &[f64],
    seeds: &[u64],
    variants: &[Variant],
    cells: HashMap<(usize, usize, u64), Option<SeedMetrics>>,
) -> Result<SweepResult> {
    let mut curves = Vec::with_capacity(variants.len());
    for (vi, variant) in variants.iter().enumerate() {
        let mut points = Vec::with_capacity(axis_values.len());
        for pi in 0..axis_values.len() {
            let mut per_seed = Vec::with_capacity(seeds.len());
            let mut failed = false;
            for &seed in seeds {
                match cells.get(&(vi, pi, seed)).and_then(|c| c.as_ref()) {
                    Some(m) => per_seed.push(m.clone()),
                    None => failed = true,
                }
            }
            points.push(if failed { None } else { Some(MetricsReport::from_per_seed(per_seed)?) });
        }
        curves.push(SweepCurve { variant: variant.name.clone(), points });
    }
    Ok(SweepResult {
        axis_name: axis_name.into(),
        axis_values: axis_values.to_vec(),
        seeds: seeds.to_vec(),
        curves,
    })
}

fn check_sweep_args(variants: &[Variant], seeds: &[u64]) -> Result<()> {
    if variants.is_empty() {
        return Err(Error::Config("sweep needs at least one variant".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("sweep seeds must be distinct".into()));
    }
    Ok(())
}

/// Outcome-noise sweep: at each grid level, inject that much irreducible
/// noise into a shared noiseless base dataset, retrain every variant per
/// seed, and score PEHE on re-noised eval pairs.
pub fn irreducible_sweep(
    variants: &[Variant],
    params: &ScmParams,
    stds: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    check_axis("y-noise", stds)?;
    check_sweep_args(variants, seeds)?;
    let mut base_params = params.clone();
    base_params.y_noise_std = 0.0; // the grid owns the noise level
    let base = generate_synthetic(&base_params)?;
    let noise_root = Rng::seed_from(params.seed);
    let datasets = stds
        .iter()
        .enumerate()
        .map(|(i, &std)| {
            let mut rng = noise_root.derive_indexed("outcome-noise", i as u64);
            perturb_outcome_noise(&base, std, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for vi in 0..variants.len() {
        for pi in 0..stds.len() {
            for &seed in seeds {
                tasks.push((vi, pi, seed));
            }
        }
    }
    let cells = tasks
        .par_iter()
        .map(|&(vi, pi, seed)| {
            let streams = [(pi, DEFAULT_EVAL_NOISE_SCALE)];
            let scored = train_and_score(&variants[vi], &datasets[pi], seed, &streams)?;
            Ok(((vi, pi, seed), scored.map(|mut v| v.remove(0))))
        })
        .collect::<Result<HashMap<_, _>>>()?;
    assemble("y_noise_std", stds, seeds, variants, cells)
}

/// Test-time perturbation sweep: train each variant once per seed on the
/// given dataset, then score PEHE while scaling the eval-pair perturbation.
pub fn reducible_sweep(
    variants: &[Variant],
    dataset: &Dataset,
    noise_scales: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    check_axis("perturbation", noise_scales)?;
    check_sweep_args(variants, seeds)?;
    let has_latents = dataset.samples.first().is_some_and(|s| s.t_noncausal.is_some());
    if !has_latents {
        return Err(Error::Unsupported(
            "reducible sweep needs latent ground truth (generated or augmented data)".into(),
        ));
    }

    let mut tasks = Vec::new();
    for vi in 0..variants.len() {
        for &seed in seeds {
            tasks.push((vi, seed));
        }
    }
    let streams: Vec<(usize, f64)> = noise_scales.iter().copied().enumerate().collect();
    let runs = tasks
        .par_iter()
        .map(|&(vi, seed)| {
            let scored = train_and_score(&variants[vi], dataset, seed, &streams)?;
            Ok(((vi, seed), scored))
        })
        .collect::<Result<HashMap<_, _>>>()?;

    let mut cells = HashMap::new();
    for (&(vi, seed), scored) in &runs {
        match scored {
            Some(points) => {
                for (pi, m) in points.iter().enumerate() {
                    cells.insert((vi, pi, seed), Some(m.clone()));
                }
            }
            None => {
                for pi in 0..noise_scales.len() {
                    cells.insert((vi, pi, seed), None);
                }
            }
        }
    }
    assemble("noncausal_noise_scale", noise_scales, seeds, variants, cells)
}

/// Linear-probe the treatment representation on the eval split: R² from
/// ψ(t) to the causal latents, and to the covariate-independent part of the
/// non-causal latents. Regressing x out of the non-causal target matters:
/// t_noncausal itself is predictable from ψ(t) through the shared covariate,
/// so the raw R² would not measure leaked non-causal information.
pub fn identifiability_probe(model: &TrainedModel, dataset: &Dataset) -> Result<(f64, f64)> {
    let psi = eval_representations(model, dataset)?;
    probe_representation(&psi, dataset)
}

fn eval_representations(model: &TrainedModel, dataset: &Dataset) -> Result<Tensor2> {
    let rows = dataset
        .split_samples(SplitTag::Eval)
        .map(|s| model.treatment_representation(&s.t))
        .collect::<Result<Vec<_>>>()?;
    Tensor2::from_rows(&rows)
}

/// Probe engine over a precomputed representation matrix whose rows align
/// with the eval split.
pub fn probe_representation(psi: &Tensor2, dataset: &Dataset) -> Result<(f64, f64)> {
    let eval: Vec<&Sample> = dataset.split_samples(SplitTag::Eval).collect();
    if eval.len() != psi.rows() {
        return Err(Error::Shape(format!(
            "representation has {} rows, eval split has {}",
            psi.rows(),
            eval.len()
        )));
    }
    let latents = |f: &dyn Fn(&Sample) -> Option<&Vec<f64>>| -> Result<Tensor2> {
        let rows = eval
            .iter()
            .map(|s| {
                f(s).cloned()
                    .ok_or_else(|| Error::Unsupported("probe needs latent ground truth".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor2::from_rows(&rows)
    };
    let t_c = latents(&|s| s.t_causal.as_ref())?;
    let t_nc = latents(&|s| s.t_noncausal.as_ref())?;
    let x = Tensor2::from_rows(&eval.iter().map(|s| s.x.clone()).collect::<Vec<_>>())?;

    let xd = with_intercept(&x);
    let x_fit = lstsq(&xd, &t_nc)?;
    let nc_resid = t_nc.sub(&xd.matmul(&x_fit.coeffs));

    let design = with_intercept(psi);
    let causal_fit = lstsq(&design, &t_c)?;
    let r2_causal = r2_total(&design.matmul(&causal_fit.coeffs), &t_c)?;
    let nc_fit = lstsq(&design, &nc_resid)?;
    let r2_noncausal = r2_total(&design.matmul(&nc_fit.coeffs), &nc_resid)?;
    Ok((r2_causal, r2_noncausal))
}

/// Mean representation shift under non-causal perturbation, normalized by
/// the mean shift to a different anchor (the next eval sample). Scale-free:
/// a representation that ignores the non-causal block scores near 0.
pub fn representation_invariance_ratio(
    model: &TrainedModel,
    dataset: &Dataset,
    noise_scale: f64,
    rng: &mut Rng,
) -> Result<f64> {
    invariance_ratio_of(&|t| model.treatment_representation(t), dataset, noise_scale, rng)
}

pub fn invariance_ratio_of(
    repr: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    dataset: &Dataset,
    noise_scale: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let eval: Vec<&Sample> = dataset.split_samples(SplitTag::Eval).collect();
    if eval.len() < 2 {
        return Err(Error::Config("invariance ratio needs at least 2 eval samples".into()));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
    };
    let reprs: Vec<Vec<f64>> = eval.iter().map(|s| repr(&s.t)).collect::<Result<_>>()?;
    let mut num = 0.0;
    for (s, r) in eval.iter().zip(&reprs) {
        let p = perturb_noncausal(s, rng, noise_scale)?;
        num += dist(r, &repr(&p.t)?);
    }
    let mut den = 0.0;
    for i in 0..reprs.len() {
        den += dist(&reprs[i], &reprs[(i + 1) % reprs.len()]);
    }
    if den == 0.0 {
        return Err(Error::Numeric(
            "invariance ratio undefined: representation is constant across anchors".into(),
        ));
    }
    Ok(num / den)
}

/// The λ-family of outcome models over the scalar linear SCM:
/// f(t_c, t_nc, x) = ρ·t_c + λ·(δ/β)·t_nc + (1−λ)·δ·x. At λ=0 this is the
/// true structural model; every λ>0 member routes part of the covariate
/// effect through the non-causal treatment while agreeing with the truth
/// whenever t_nc sits on its conditional mean β·x.
pub fn lambda_family_predict(params: &ScmParams, lambda: f64, t_c: f64, t_nc: f64, x: f64) -> f64 {
    params.rho * t_c + lambda * (params.delta / params.beta) * t_nc + (1.0 - lambda) * params.delta * x
}

fn check_theorem1_args(params: &ScmParams, lambda: f64) -> Result<()> {
    params.validate()?;
    if params.beta == 0.0 {
        return Err(Error::Config("the bias construction needs beta != 0".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Analytic gaps for the λ-family model.
///
/// On the observational distribution with t_nc at its conditional mean β·x
/// the λ-terms cancel: λ·(δ/β)·(βx) + (1−λ)·δ·x = δ·x, so the model equals
/// the true E[Y | t_c, x] and the conditional-mean gap is exactly zero. For
/// a treatment pair differing only by delta_tnc in the non-causal
/// coordinate, the model's effect estimate is off by λ·(δ/β)·delta_tnc
/// while the true effect is zero.
pub fn theorem1_demo(params: &ScmParams, lambda: f64, delta_tnc: f64) -> Result<(f64, f64)> {
    check_theorem1_args(params, lambda)?;
    if !delta_tnc.is_finite() {
        return Err(Error::Config(format!("delta_tnc must be finite, got {delta_tnc}")));
    }
    Ok((0.0, lambda * (params.delta / params.beta) * delta_tnc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Mc {
    pub conditional_mean_gap: f64,
    pub conditional_mean_se: f64,
    pub intervention_gap: f64,
    pub intervention_se: f64,
    pub draws: usize,
}

/// Monte-Carlo check of `theorem1_demo`: evaluate the λ-family model
/// numerically over fresh draws of the linear SCM and average both gaps.
pub fn theorem1_mc(
    params: &ScmParams,
    lambda: f64,
    delta_tnc: f64,
    draws: usize,
    rng: &mut Rng,
) -> Result<Theorem1Mc> {
    check_theorem1_args(params, lambda)?;
    if draws < 2 {
        return Err(Error::Config("Monte-Carlo check needs at least 2 draws".into()));
    }
    let mut cond = Vec::with_capacity(draws);
    let mut inter = Vec::with_capacity(draws);
    for _ in 0..draws {
        let (x, t_c, t_nc, _) =
            linear_structural(params, rng.normal(), rng.normal(), rng.normal(), rng.normal());
        let on_mean = lambda_family_predict(params, lambda, t_c, params.beta * x, x);
        cond.push(on_mean - (params.rho * t_c + params.delta * x));
        let f = lambda_family_predict(params, lambda, t_c, t_nc, x);
        let f_shifted = lambda_family_predict(params, lambda, t_c, t_nc - delta_tnc, x);
        inter.push(f - f_shifted);
    }
    // Compensated sums: with a linear outcome family the per-draw gaps are
    // constant, so naive accumulation error over 1e5 draws would dominate
    // the (near-zero) standard error.
    let kahan_sum = |it: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0, 0.0);
        for v in it {
            let y = v - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    };
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mu = kahan_sum(&mut v.iter().copied()) / n;
        let var = kahan_sum(&mut v.iter().map(|s| (s - mu).powi(2))) / (n - 1.0);
        (mu, (var / n).sqrt())
    };
    let (cm, cse) = stats(&cond);
    let (im, ise) = stats(&inter);
    Ok(Theorem1Mc {
        conditional_mean_gap: cm,
        conditional_mean_se: cse,
        intervention_gap: im,
        intervention_se: ise,
        draws,
    })
}
