//! One function per subcommand. Each writes its artifacts into the --out
//! directory and finishes with a manifest recording the merged config.

use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde_json::json;

use cate_core::eval::{
    identifiability_probe, irreducible_sweep, make_eval_pairs, mae_rmse, pehe, reducible_sweep,
    representation_invariance_ratio, theorem1_demo, theorem1_mc, MetricsReport, SeedMetrics,
    SweepResult, Variant,
};
use cate_core::io::{
    augment_noncausal, file_sha256, load_csv, load_model, save_csv, save_model, write_json,
    write_metrics_csv, write_sweep_csv, write_train_log_csv, RunManifest, TabularSchema,
};
use cate_core::model::{self, mining_summary, Mode, ModelFamily, TrainedModel};
use cate_core::plot;
use cate_core::rng::Rng;
use cate_core::scm::{generate_linear_scm, generate_synthetic, Dataset, Provenance};
use cate_core::{Error, Result};

use crate::config::{resolve_train, RunConfig, TrainFlags};

/// A .json dataset round-trips exactly (split and latents included); a .csv
/// needs its schema.json sidecar and re-derives the 70/30 split from the
/// run seed.
fn load_dataset(path: &Path, split_seed: u64) -> Result<Dataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let text = fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
        Some("csv") => {
            let schema_path = path.with_file_name("schema.json");
            let text = fs::read_to_string(&schema_path).map_err(|e| {
                Error::Schema(format!(
                    "need schema '{}' next to '{}': {e}",
                    schema_path.display(),
                    path.display()
                ))
            })?;
            let schema: TabularSchema = serde_json::from_str(&text)?;
            load_csv(path, &schema, split_seed)
        }
        _ => Err(Error::Unsupported(format!(
            "cannot load '{}': expected a .json or .csv dataset",
            path.display()
        ))),
    }
}

pub fn generate(
    out: &Path,
    cfg: &RunConfig,
    generator: &str,
    n: Option<usize>,
    augment: bool,
) -> Result<()> {
    let mut params = cfg.scm.clone();
    if let Some(n) = n {
        params.n = n;
    }
    params.validate()?;
    let mut dataset = match generator {
        "synthetic" => generate_synthetic(&params)?,
        "linear" => generate_linear_scm(&params)?,
        other => {
            return Err(Error::Config(format!(
                "unknown generator '{other}' (expected 'synthetic' or 'linear')"
            )))
        }
    };
    if augment {
        let a = &cfg.augment;
        let mut rng = Rng::seed_from(params.seed).derive("augment");
        dataset = augment_noncausal(&dataset, a.extra_dims, a.coupling, a.noise_std, &mut rng)?;
    }

    let csv_path = out.join("data.csv");
    let schema = save_csv(&dataset, &csv_path)?;
    write_json(&schema, &out.join("schema.json"))?;
    write_json(&dataset, &out.join("dataset.json"))?;

    let mut manifest = RunManifest::new(
        "generate",
        vec![params.seed],
        json!({ "run": cfg, "effective_scm": params, "generator": generator, "augment": augment }),
    );
    manifest.dataset_sha256 = Some(file_sha256(&csv_path)?);
    manifest.save(&out.join("manifest.json"))?;

    println!(
        "wrote {} samples ({} treatment dims, {} covariate dims) to {}",
        dataset.n(),
        dataset.t_dim(),
        dataset.x_dim(),
        out.display()
    );
    Ok(())
}

pub fn train(
    out: &Path,
    cfg: &RunConfig,
    data: &Path,
    family: ModelFamily,
    mode: Mode,
    flags: &TrainFlags,
) -> Result<()> {
    let dataset = load_dataset(data, cfg.scm.seed)?;
    let tc = resolve_train(cfg, &dataset.provenance, flags)?;
    info!(
        "training {family:?} {mode:?} on {} samples: {} epochs, weight {}, margin {}, seed {}",
        dataset.n(),
        tc.epochs,
        tc.contrastive_weight,
        tc.margin,
        tc.seed
    );
    let (trained, log) = model::train_any(&dataset, family, mode, &tc)?;

    save_model(&trained, &out.join("model.snapshot"))?;
    write_train_log_csv(&log, &out.join("train_log.csv"))?;

    let mut manifest = RunManifest::new(
        "train",
        vec![tc.seed],
        json!({ "run": cfg, "effective_train": tc, "family": family, "mode": mode, "data": data }),
    );
    manifest.dataset_sha256 = Some(file_sha256(data)?);
    manifest.derived.mined_epsilon = log.mined_epsilon;
    if matches!(mode, Mode::Contrastive) {
        let (edges, _) = mining_summary(&dataset, &tc.mining)?;
        manifest.derived.bucket_edges = edges;
    }
    manifest.save(&out.join("manifest.json"))?;

    if log.diverged {
        return Err(Error::Numeric(format!(
            "training diverged at epoch {}; snapshot holds the last finite parameters",
            log.aborted_at.unwrap_or(0)
        )));
    }
    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} epochs: huber {:.6}, triplet {:.6} ({} triples)",
            log.epochs.len(),
            last.huber,
            last.triplet,
            last.n_triples
        );
    }
    Ok(())
}

pub fn eval(
    out: &Path,
    cfg: &RunConfig,
    data: &Path,
    snapshot: Option<&Path>,
    family: ModelFamily,
    mode: Mode,
) -> Result<()> {
    let dataset = load_dataset(data, cfg.scm.seed)?;
    let (report, seeds) = match snapshot {
        Some(mp) => {
            let model = load_model(mp)?;
            let seed = cfg.train.seed.unwrap_or(0);
            let m = score(&model, &dataset, cfg, seed)?;
            (MetricsReport::from_per_seed(vec![m])?, vec![seed])
        }
        None => {
            let tc0 = resolve_train(cfg, &dataset.provenance, &TrainFlags::default())?;
            let seeds = cfg.eval.seeds.clone();
            info!("training {} fresh {mode:?} models for the aggregate", seeds.len());
            let per: Vec<SeedMetrics> = seeds
                .par_iter()
                .map(|&s| {
                    let mut tc = tc0.clone();
                    tc.seed = s;
                    let (m, log) = model::train_any(&dataset, family, mode, &tc)?;
                    if log.diverged {
                        return Err(Error::Numeric(format!("seed {s} diverged during eval")));
                    }
                    score(&m, &dataset, cfg, s)
                })
                .collect::<Result<_>>()?;
            (MetricsReport::from_per_seed(per)?, seeds)
        }
    };

    write_metrics_csv(&report, &out.join("metrics.csv"))?;
    write_json(&report, &out.join("metrics.json"))?;
    let mut manifest = RunManifest::new(
        "eval",
        seeds,
        json!({ "run": cfg, "data": data, "model": snapshot, "family": family, "mode": mode }),
    );
    manifest.dataset_sha256 = Some(file_sha256(data)?);
    manifest.save(&out.join("manifest.json"))?;

    println!("mae {:.4}  rmse {:.4}  pehe {:.4}", report.mae, report.rmse, report.pehe);
    Ok(())
}

fn score(model: &TrainedModel, dataset: &Dataset, cfg: &RunConfig, seed: u64) -> Result<SeedMetrics> {
    let (mae, rmse) = mae_rmse(model, dataset)?;
    let mut rng = Rng::seed_from(seed).derive("eval-pairs");
    let pairs = make_eval_pairs(dataset, cfg.eval.noise_scale, &mut rng)?;
    Ok(SeedMetrics { seed, mae, rmse, pehe: pehe(model, &pairs)? })
}

pub fn sweep(
    out: &Path,
    cfg: &RunConfig,
    axis: &str,
    data: Option<&Path>,
    family: ModelFamily,
    svg: bool,
) -> Result<()> {
    let sweep: SweepResult = match axis {
        "y-noise" => {
            let provenance = Provenance::Synthetic(cfg.scm.clone());
            let variants = standing_variants(cfg, &provenance, family)?;
            irreducible_sweep(&variants, &cfg.scm, &cfg.sweep.y_noise_grid, &cfg.sweep.seeds)?
        }
        "noncausal-noise" => {
            let dataset = match data {
                Some(p) => load_dataset(p, cfg.scm.seed)?,
                None => generate_synthetic(&cfg.scm)?,
            };
            let variants = standing_variants(cfg, &dataset.provenance, family)?;
            reducible_sweep(&variants, &dataset, &cfg.sweep.noncausal_noise_grid, &cfg.sweep.seeds)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown axis '{other}' (expected 'y-noise' or 'noncausal-noise')"
            )))
        }
    };

    write_sweep_csv(&sweep, &out.join("sweep.csv"))?;
    write_json(&sweep, &out.join("sweep.json"))?;
    if svg {
        for metric in ["pehe", "mae"] {
            let rendered = plot::render_line_plot(&plot::sweep_to_plot(&sweep, metric)?)?;
            plot::write_svg(&rendered, &out.join(format!("{metric}.svg")))?;
        }
    }
    let manifest = RunManifest::new(
        "sweep",
        cfg.sweep.seeds.clone(),
        json!({ "run": cfg, "axis": axis, "family": family, "data": data }),
    );
    manifest.save(&out.join("manifest.json"))?;

    for curve in &sweep.curves {
        let done = curve.points.iter().filter(|p| p.is_some()).count();
        println!(
            "{}: {done}/{} grid points, pehe {}",
            curve.variant,
            sweep.axis_values.len(),
            curve
                .points
                .iter()
                .map(|p| p.as_ref().map_or("failed".into(), |r| format!("{:.3}", r.pehe)))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    Ok(())
}

/// The two curves every sweep compares. Both share the resolved training
/// settings; only the loss differs.
fn standing_variants(
    cfg: &RunConfig,
    provenance: &Provenance,
    family: ModelFamily,
) -> Result<Vec<Variant>> {
    let tc = resolve_train(cfg, provenance, &TrainFlags::default())?;
    Ok(vec![
        Variant { name: "plain".into(), family, mode: Mode::Plain, config: tc.clone() },
        Variant { name: "contrastive".into(), family, mode: Mode::Contrastive, config: tc },
    ])
}

pub fn theorem1(out: &Path, cfg: &RunConfig, lambda: f64, delta_tnc: f64, draws: usize) -> Result<()> {
    let params = &cfg.scm;
    let (cond_gap, intervention_gap) = theorem1_demo(params, lambda, delta_tnc)?;
    let mut rng = Rng::seed_from(params.seed).derive("theorem1");
    let mc = theorem1_mc(params, lambda, delta_tnc, draws, &mut rng)?;

    let report = json!({
        "lambda": lambda,
        "delta_tnc": delta_tnc,
        "analytic_conditional_mean_gap": cond_gap,
        "analytic_intervention_gap": intervention_gap,
        "monte_carlo": mc,
        "scm": params,
    });
    write_json(&report, &out.join("theorem1.json"))?;
    let manifest = RunManifest::new("theorem1", vec![params.seed], report);
    manifest.save(&out.join("manifest.json"))?;

    println!(
        "analytic intervention gap {intervention_gap:.6}; monte-carlo {:.6} (se {:.2e}, {} draws)",
        mc.intervention_gap, mc.intervention_se, mc.draws
    );
    println!(
        "analytic conditional-mean gap {cond_gap:.6}; monte-carlo {:.6} (se {:.2e})",
        mc.conditional_mean_gap, mc.conditional_mean_se
    );
    Ok(())
}

pub fn probe(out: &Path, cfg: &RunConfig, snapshot: &Path, data: &Path) -> Result<()> {
    let dataset = load_dataset(data, cfg.scm.seed)?;
    let model = load_model(snapshot)?;
    let (r2_causal, r2_noncausal) = identifiability_probe(&model, &dataset)?;
    let mut rng = Rng::seed_from(cfg.scm.seed).derive("probe-perturb");
    let invariance_ratio =
        representation_invariance_ratio(&model, &dataset, cfg.eval.noise_scale, &mut rng)?;

    let report = json!({
        "r2_causal": r2_causal,
        "r2_noncausal": r2_noncausal,
        "invariance_ratio": invariance_ratio,
    });
    write_json(&report, &out.join("probe.json"))?;
    let manifest = RunManifest::new(
        "probe",
        vec![cfg.scm.seed],
        json!({ "run": cfg, "model": snapshot, "data": data }),
    );
    manifest.save(&out.join("manifest.json"))?;

    println!(
        "r2_causal {r2_causal:.4}  r2_noncausal {r2_noncausal:.4}  invariance_ratio {invariance_ratio:.4}"
    );
    Ok(())
}
