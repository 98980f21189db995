//! Linear CATE model: closed-form fitting and an iterative twin.
//!
//! `fit_ols` is the brute-force oracle (normal equations, exact), used by
//! the bias demonstration. `train_linear` trains the same functional form
//! with Adam/Huber plus the optional triplet term, mirroring the network
//! trainer for the linear experiment family.

use serde::{Deserialize, Serialize};

use super::train::{
    collect_batch_triples, group_by_anchor, is_divergence, prepare_mining, EpochLog, TrainConfig,
    TrainLog,
};
use super::{Mode, OutcomePredictor};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, with_intercept};
use crate::mining::mine_triplets;
use crate::nn::{adam_step, huber_loss, triplet_loss, AdamState};
use crate::rng::Rng;
use crate::scm::{Dataset, SplitTag};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCateModel {
    pub w_t: Vec<f64>,
    pub w_x: Vec<f64>,
    pub bias: f64,
}

impl LinearCateModel {
    pub fn zeros(t_dim: usize, x_dim: usize) -> Self {
        LinearCateModel { w_t: vec![0.0; t_dim], w_x: vec![0.0; x_dim], bias: 0.0 }
    }

    pub fn predict(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        if x.len() != self.w_x.len() || t.len() != self.w_t.len() {
            return Err(Error::Config(format!(
                "linear model takes x[{}] t[{}], got x[{}] t[{}]",
                self.w_x.len(),
                self.w_t.len(),
                x.len(),
                t.len()
            )));
        }
        let wt: f64 = self.w_t.iter().zip(t).map(|(w, v)| w * v).sum();
        let wx: f64 = self.w_x.iter().zip(x).map(|(w, v)| w * v).sum();
        Ok(wt + wx + self.bias)
    }

    /// psi(t) = w_t ⊙ t, the treatment weights applied onto the treatment.
    pub fn treatment_representation(&self, t: &[f64]) -> Vec<f64> {
        self.w_t.iter().zip(t).map(|(w, v)| w * v).collect()
    }
}

impl OutcomePredictor for LinearCateModel {
    fn predict_one(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        self.predict(x, t)
    }
}

pub struct OlsFit {
    pub model: LinearCateModel,
    /// True when the design was rank deficient and the 1e-8 ridge kicked in.
    pub ridge_fallback: bool,
}

/// Exact least squares of y on (t, x) over the train split. With
/// `include_noncausal = false` only the causal treatment block enters the
/// design; the returned w_t keeps full width with zeros on the excluded
/// columns.
pub fn fit_ols(dataset: &Dataset, include_noncausal: bool) -> Result<OlsFit> {
    let (x, t, y) = dataset.matrices(SplitTag::Train);
    if x.rows() == 0 {
        return Err(Error::Config("fit_ols needs a non-empty train split".into()));
    }
    let t_dim = t.cols();
    let m = if include_noncausal {
        t_dim
    } else {
        let first = dataset.split_samples(SplitTag::Train).next().expect("non-empty");
        first
            .t_causal
            .as_ref()
            .ok_or_else(|| Error::Unsupported("causal-only OLS needs latent ground truth".into()))?
            .len()
    };
    let t_used = if m == t_dim { t.clone() } else { t.slice_cols(0, m) };
    let design = with_intercept(&Tensor2::hcat(&[&t_used, &x])?);
    let fit = lstsq(&design, &y)?;
    let c = fit.coeffs;
    let mut w_t = vec![0.0; t_dim];
    for j in 0..m {
        w_t[j] = c.get(j, 0);
    }
    let w_x: Vec<f64> = (0..x.cols()).map(|k| c.get(m + k, 0)).collect();
    let bias = c.get(m + x.cols(), 0);
    Ok(OlsFit { model: LinearCateModel { w_t, w_x, bias }, ridge_fallback: fit.ridge_fallback })
}

struct LinearGrads {
    huber: f64,
    triplet: f64,
    flat: Vec<f64>, // [d w_t | d w_x | d bias]
}

fn linear_batch_grads(
    model: &LinearCateModel,
    xb: &Tensor2,
    tb: &Tensor2,
    yb: &Tensor2,
    t_full: &Tensor2,
    triples: &[(usize, usize, usize)], // (batch-local anchor, global pos, global neg)
    weight: f64,
    margin: f64,
    delta: f64,
) -> Result<LinearGrads> {
    let t_dim = model.w_t.len();
    let x_dim = model.w_x.len();
    let mut pred = Tensor2::zeros(xb.rows(), 1);
    for i in 0..xb.rows() {
        pred.set(i, 0, model.predict(xb.row(i), tb.row(i))?);
    }
    let (hl, dpred) = huber_loss(&pred, yb, delta)?;
    let mut d_wt = dpred.transpose().matmul(tb).into_data();
    let mut d_wx = dpred.transpose().matmul(xb).into_data();
    let d_b: f64 = dpred.data().iter().sum();

    let mut tl = 0.0;
    if !triples.is_empty() && weight > 0.0 {
        let psi_of = |row: &[f64]| -> Vec<f64> { model.treatment_representation(row) };
        let t_a = Tensor2::from_rows(&triples.iter().map(|&(a, _, _)| psi_of(tb.row(a))).collect::<Vec<_>>())?;
        let t_p = Tensor2::from_rows(&triples.iter().map(|&(_, p, _)| psi_of(t_full.row(p))).collect::<Vec<_>>())?;
        let t_n = Tensor2::from_rows(&triples.iter().map(|&(_, _, n)| psi_of(t_full.row(n))).collect::<Vec<_>>())?;
        let (l, da, dp, dn) = triplet_loss(&t_a, &t_p, &t_n, margin)?;
        tl = l;
        // psi_j = w_j t_j, so d psi_j / d w_j = t_j per row
        for (k, &(a, p, n)) in triples.iter().enumerate() {
            for j in 0..t_dim {
                d_wt[j] += weight
                    * (da.get(k, j) * tb.get(a, j)
                        + dp.get(k, j) * t_full.get(p, j)
                        + dn.get(k, j) * t_full.get(n, j));
            }
        }
        let _ = &d_b; // bias untouched by the triplet term
    }

    let mut flat = Vec::with_capacity(t_dim + x_dim + 1);
    flat.append(&mut d_wt);
    flat.append(&mut d_wx);
    flat.push(d_b);
    Ok(LinearGrads { huber: hl, triplet: tl, flat })
}

/// Iterative trainer for the linear model: Adam over Huber plus the weighted
/// triplet term on psi(t). Mirrors `train` for the network model, including
/// divergence handling (abort, restore last finished epoch).
pub fn train_linear(
    dataset: &Dataset,
    mode: Mode,
    config: &TrainConfig,
) -> Result<(LinearCateModel, TrainLog)> {
    config.validate()?;
    let (x, t, y) = dataset.matrices(SplitTag::Train);
    let n = x.rows();
    if n == 0 {
        return Err(Error::Config("train split is empty".into()));
    }
    let root = Rng::seed_from(config.seed);
    let mut shuffle_rng = root.derive("shuffle");
    let mut mine_rng = root.derive("mine");

    let mut model = LinearCateModel::zeros(t.cols(), x.cols());
    let mut adam = AdamState::new(t.cols() + x.cols() + 1, config.lr);

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
    let mut last_good = pack(&model);
    let mut batch = None;

    for epoch in 0..config.epochs {
        if let Some(ref idx) = index {
            if epsilon > 0.0 && (batch.is_none() || config.mining.remine_each_epoch) {
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
            let g = linear_batch_grads(
                &model,
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
            let mut params = pack(&model);
            match adam_step(&mut adam, &mut params, &g.flat) {
                Ok(()) => unpack(&mut model, &params),
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
            unpack(&mut model, &last_good);
            log.diverged = true;
            log.aborted_at = Some(epoch);
            break;
        }
        last_good = pack(&model);
        log.epochs.push(EpochLog { epoch, huber, triplet, n_triples });
    }
    Ok((model, log))
}

fn pack(m: &LinearCateModel) -> Vec<f64> {
    let mut v = m.w_t.clone();
    v.extend_from_slice(&m.w_x);
    v.push(m.bias);
    v
}

fn unpack(m: &mut LinearCateModel, flat: &[f64]) {
    let t = m.w_t.len();
    let x = m.w_x.len();
    m.w_t.copy_from_slice(&flat[..t]);
    m.w_x.copy_from_slice(&flat[t..t + x]);
    m.bias = flat[t + x];
}
