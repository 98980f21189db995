//! Mini-batch trainer for the two-branch network.
//!
//! One Adam step per batch over Huber(pred, y) plus, in contrastive mode,
//! `contrastive_weight` times the triplet loss on the treatment
//! representation. Positives and negatives are mined on the train split
//! (bucketed covariates, outcome gap threshold) and their treatment rows are
//! stacked under the batch so the branch is forwarded once per step.
//!
//! Randomness is split into independent streams per concern (init, batch
//! shuffling, mining) so switching the contrastive term on or off does not
//! shift anything else. With `contrastive_weight = 0` the contrastive run
//! reproduces the plain run parameter for parameter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CateModel, Mode};
use crate::error::{Error, Result};
use crate::mining::{build_index, identity_g, mine_triplets, set_epsilon_by_quantile, BucketIndex, TripletBatch};
use crate::nn::{self, adam_step, huber_loss, triplet_loss, AdamState};
use crate::rng::Rng;
use crate::scm::{Dataset, SplitTag};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    /// How many leading covariate coordinates the bucketing function keeps.
    pub g_dims: usize,
    pub buckets_per_dim: usize,
    /// Fixed outcome-gap threshold; when unset it is set to
    /// `epsilon_quantile` of the within-bucket outcome gaps.
    pub epsilon: Option<f64>,
    pub epsilon_quantile: f64,
    /// Triplets drawn per anchor and epoch.
    pub per_anchor: usize,
    pub remine_each_epoch: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            g_dims: 2,
            buckets_per_dim: 3,
            epsilon: None,
            epsilon_quantile: 0.1,
            per_anchor: 1,
            remine_each_epoch: true,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_dims == 0 {
            return Err(Error::Config("mining g_dims must be >= 1".into()));
        }
        if self.buckets_per_dim == 0 {
            return Err(Error::Config("buckets_per_dim must be >= 1".into()));
        }
        if self.per_anchor == 0 {
            return Err(Error::Config("per_anchor must be >= 1".into()));
        }
        if let Some(e) = self.epsilon {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::Config(format!("epsilon must be finite and >= 0, got {e}")));
            }
        } else if !(self.epsilon_quantile > 0.0 && self.epsilon_quantile < 1.0) {
            return Err(Error::Config(format!(
                "epsilon_quantile must be in (0, 1), got {}",
                self.epsilon_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub huber_delta: f64,
    pub contrastive_weight: f64,
    pub margin: f64,
    pub seed: u64,
    pub mining: MiningConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            lr: 1e-4,
            huber_delta: 1.0,
            contrastive_weight: 0.1,
            margin: 30.0,
            seed: 0,
            mining: MiningConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::Config(format!("huber_delta must be positive, got {}", self.huber_delta)));
        }
        if !(self.contrastive_weight.is_finite() && self.contrastive_weight >= 0.0) {
            return Err(Error::Config(format!(
                "contrastive_weight must be >= 0, got {}",
                self.contrastive_weight
            )));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        self.mining.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean Huber loss over the epoch, weighted by batch size.
    pub huber: f64,
    /// Mean (unweighted) triplet loss over the epoch's mined triples.
    pub triplet: f64,
    pub n_triples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Threshold actually used for mining; None in plain mode, 0 when the
    /// outcome gaps were too degenerate to mine.
    pub mined_epsilon: Option<f64>,
    pub diverged: bool,
    /// Epoch that blew up. Parameters are rolled back to the last epoch that
    /// finished with finite losses.
    pub aborted_at: Option<usize>,
}

/// Bucket the train covariates and resolve the outcome-gap threshold. A
/// threshold of zero disables mining (returns no index) with a warning.
pub(super) fn prepare_mining(
    x: &Tensor2,
    y: &[f64],
    mining: &MiningConfig,
) -> Result<(Option<BucketIndex>, f64)> {
    mining.validate()?;
    let g = identity_g(mining.g_dims);
    let index = build_index(x, &g, mining.buckets_per_dim)?;
    let epsilon = match mining.epsilon {
        Some(e) => e,
        None => set_epsilon_by_quantile(y, mining.epsilon_quantile, &index)?,
    };
    if epsilon <= 0.0 {
        log::warn!("mining epsilon is 0; the contrastive term is disabled for this run");
        return Ok((None, 0.0));
    }
    Ok((Some(index), epsilon))
}

/// What a contrastive run mines on this dataset: covariate bucket edges and
/// the resolved outcome-gap threshold. Recomputed for manifests; bucketing
/// and the quantile threshold consume no randomness, so this matches what
/// `train` uses.
pub fn mining_summary(
    dataset: &Dataset,
    mining: &MiningConfig,
) -> Result<(Option<Vec<Vec<f64>>>, f64)> {
    let (x, _, y) = dataset.matrices(SplitTag::Train);
    if x.rows() == 0 {
        return Err(Error::Config("train split is empty".into()));
    }
    let (index, epsilon) = prepare_mining(&x, y.data(), mining)?;
    Ok((index.map(|i| i.bucket_edges), epsilon))
}

pub(super) fn group_by_anchor(batch: Option<&TripletBatch>) -> HashMap<usize, Vec<(usize, usize)>> {
    let mut by_anchor: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    if let Some(b) = batch {
        for &(a, p, n) in &b.triples {
            by_anchor.entry(a).or_default().push((p, n));
        }
    }
    by_anchor
}

/// Triples whose anchor landed in this batch, rewritten to
/// (batch-local anchor, global positive, global negative).
pub(super) fn collect_batch_triples(
    rows: &[usize],
    by_anchor: &HashMap<usize, Vec<(usize, usize)>>,
) -> Vec<(usize, usize, usize)> {
    let mut triples = Vec::new();
    for (local, &global) in rows.iter().enumerate() {
        if let Some(pns) = by_anchor.get(&global) {
            for &(p, n) in pns {
                triples.push((local, p, n));
            }
        }
    }
    triples
}

/// True when the failure is numeric blow-up (handled by aborting the run)
/// rather than a structural bug that must propagate.
pub(super) fn is_divergence(err: &Error) -> bool {
    matches!(err, Error::Numeric(_))
}

struct BatchGrads {
    huber: f64,
    triplet: f64,
    flat: Vec<f64>, // t-branch, x-branch, head
}

fn network_batch_grads(
    model: &mut CateModel,
    xb: &Tensor2,
    tb: &Tensor2,
    yb: &Tensor2,
    t_full: &Tensor2,
    triples: &[(usize, usize, usize)],
    weight: f64,
    margin: f64,
    delta: f64,
) -> Result<BatchGrads> {
    let b = xb.rows();
    let k = triples.len();
    let repr = model.repr_dim();

    // Positive and negative treatment rows ride under the batch so the
    // branch is forwarded (and its caches filled) exactly once per step.
    let t_in = if k > 0 {
        let pos: Vec<usize> = triples.iter().map(|&(_, p, _)| p).collect();
        let neg: Vec<usize> = triples.iter().map(|&(_, _, n)| n).collect();
        Tensor2::vstack(&[tb, &t_full.gather_rows(&pos), &t_full.gather_rows(&neg)])?
    } else {
        tb.clone()
    };
    let ht_all = nn::forward(&mut model.t_branch, &t_in)?;
    let hx = nn::forward(&mut model.x_branch, xb)?;
    let ht = ht_all.slice_rows(0, b);
    let h = Tensor2::hcat(&[&ht, &hx])?;
    let pred = nn::forward(&mut model.head, &h)?;
    let (hl, dpred) = huber_loss(&pred, yb, delta)?;
    let (head_grads, dh) = nn::backward(&mut model.head, &dpred)?;
    let dht = dh.slice_cols(0, repr);
    let dhx = dh.slice_cols(repr, dh.cols());

    let mut upstream_t = Tensor2::zeros(t_in.rows(), repr);
    for i in 0..b {
        upstream_t.row_mut(i).copy_from_slice(dht.row(i));
    }
    let mut tl = 0.0;
    if k > 0 {
        let anchors: Vec<usize> = triples.iter().map(|&(a, _, _)| a).collect();
        let ha = ht_all.gather_rows(&anchors);
        let hp = ht_all.slice_rows(b, b + k);
        let hn = ht_all.slice_rows(b + k, b + 2 * k);
        let (l, da, dp, dn) = triplet_loss(&ha, &hp, &hn, margin)?;
        tl = l;
        for (idx, &(a, _, _)) in triples.iter().enumerate() {
            for j in 0..repr {
                let v = upstream_t.get(a, j) + weight * da.get(idx, j);
                upstream_t.set(a, j, v);
                upstream_t.set(b + idx, j, weight * dp.get(idx, j));
                upstream_t.set(b + k + idx, j, weight * dn.get(idx, j));
            }
        }
    }
    let (t_grads, _) = nn::backward(&mut model.t_branch, &upstream_t)?;
    let (x_grads, _) = nn::backward(&mut model.x_branch, &dhx)?;

    let mut flat = nn::flatten_grads(&t_grads);
    flat.extend(nn::flatten_grads(&x_grads));
    flat.extend(nn::flatten_grads(&head_grads));
    Ok(BatchGrads { huber: hl, triplet: tl, flat })
}

pub fn train(dataset: &Dataset, mode: Mode, config: &TrainConfig) -> Result<(CateModel, TrainLog)> {
    config.validate()?;
    let (x, t, y) = dataset.matrices(SplitTag::Train);
    let n = x.rows();
    if n == 0 {
        return Err(Error::Config("train split is empty".into()));
    }
    let root = Rng::seed_from(config.seed);
    let mut init_rng = root.derive("init");
    let mut shuffle_rng = root.derive("shuffle");
    let mut mine_rng = root.derive("mine");

    let mut model = CateModel::new(
        t.cols(),
        x.cols(),
        mode,
        config.contrastive_weight,
        config.margin,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(model.param_count(), config.lr);

    let contrastive = mode == Mode::Contrastive;
    let (index, epsilon) = if contrastive {
        prepare_mining(&x, y.data(), &config.mining)?
    } else {
        (None, 0.0)
    };

    let mut log = TrainLog {
        epochs: Vec::with_capacity(config.epochs),
        mined_epsilon: if contrastive { Some(epsilon) } else { None },
        diverged: false,
        aborted_at: None,
    };
    let mut last_good = model.params();
    let mut batch: Option<TripletBatch> = None;

    for epoch in 0..config.epochs {
        if let Some(ref idx) = index {
            if batch.is_none() || config.mining.remine_each_epoch {
                batch = Some(mine_triplets(idx, y.data(), epsilon, config.mining.per_anchor, &mut mine_rng)?);
            }
        }
        let by_anchor = group_by_anchor(batch.as_ref());

        let mut order: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut order);

        let mut huber_sum = 0.0;
        let mut triplet_sum = 0.0;
        let mut n_triples = 0usize;
        let mut failed = false;
        for rows in order.chunks(config.batch_size) {
            let xb = x.gather_rows(rows);
            let tb = t.gather_rows(rows);
            let yb = y.gather_rows(rows);
            let triples = collect_batch_triples(rows, &by_anchor);
            let g = network_batch_grads(
                &mut model,
                &xb,
                &tb,
                &yb,
                &t,
                &triples,
                config.contrastive_weight,
                config.margin,
                config.huber_delta,
            )?;
            huber_sum += g.huber * rows.len() as f64;
            triplet_sum += g.triplet * triples.len() as f64;
            n_triples += triples.len();
            let mut params = model.params();
            match adam_step(&mut adam, &mut params, &g.flat) {
                Ok(()) => model.set_params(&params)?,
                Err(e) if is_divergence(&e) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let huber = huber_sum / n as f64;
        let triplet = if n_triples > 0 { triplet_sum / n_triples as f64 } else { 0.0 };
        if failed || !huber.is_finite() || !triplet.is_finite() {
            model.set_params(&last_good)?;
            log.diverged = true;
            log.aborted_at = Some(epoch);
            break;
        }
        last_good = model.params();
        log.epochs.push(EpochLog { epoch, huber, triplet, n_triples });
    }
    Ok((model, log))
}
