//! CATE estimators: the two-branch network and the linear variant.
//!
//! The network splits into a treatment sub-network (two layers, hidden 32,
//! identity output so representation distances stay alive), a covariate
//! sub-network (one layer), and a joint head over the concatenated hidden
//! states (64 and 32 wide, scalar out). The contrastive variant adds a
//! triplet loss on the treatment representation h_t during training.

mod linear;
mod train;

pub use linear::{fit_ols, train_linear, LinearCateModel, OlsFit};
pub use train::{mining_summary, train, EpochLog, MiningConfig, TrainConfig, TrainLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, DenseLayer};
use crate::rng::Rng;
use crate::scm::Dataset;
use crate::tensor::Tensor2;

pub const T_HIDDEN: usize = 32;
pub const X_HIDDEN: usize = 32;
pub const HEAD_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Contrastive,
}

/// Which estimator family a run trains: the two-branch network or the
/// linear model used for the first experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Network,
    Linear,
}

/// Train either family behind the snapshot-level `TrainedModel` type.
pub fn train_any(
    dataset: &Dataset,
    family: ModelFamily,
    mode: Mode,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainLog)> {
    match family {
        ModelFamily::Network => {
            let (m, log) = train::train(dataset, mode, config)?;
            Ok((TrainedModel::Network(m), log))
        }
        ModelFamily::Linear => {
            let (m, log) = linear::train_linear(dataset, mode, config)?;
            Ok((TrainedModel::Linear(m), log))
        }
    }
}

#[derive(Debug, Clone)]
pub struct CateModel {
    pub t_branch: Vec<DenseLayer>,
    pub x_branch: Vec<DenseLayer>,
    pub head: Vec<DenseLayer>,
    pub mode: Mode,
    pub contrastive_weight: f64,
    pub margin: f64,
}

impl CateModel {
    /// Fresh model with Glorot weights. Initialization order (t-branch,
    /// x-branch, head) is fixed; the caller passes a dedicated stream.
    pub fn new(
        t_dim: usize,
        x_dim: usize,
        mode: Mode,
        contrastive_weight: f64,
        margin: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if t_dim == 0 || x_dim == 0 {
            return Err(Error::Config("treatment and covariate dims must be positive".into()));
        }
        if contrastive_weight < 0.0 {
            return Err(Error::Config(format!("contrastive_weight must be >= 0, got {contrastive_weight}")));
        }
        if margin <= 0.0 {
            return Err(Error::Config(format!("margin must be positive, got {margin}")));
        }
        let t_branch = vec![
            DenseLayer::glorot(t_dim, T_HIDDEN, Activation::Relu, rng),
            DenseLayer::glorot(T_HIDDEN, T_HIDDEN, Activation::Identity, rng),
        ];
        let x_branch = vec![DenseLayer::glorot(x_dim, X_HIDDEN, Activation::Relu, rng)];
        let head = vec![
            DenseLayer::glorot(T_HIDDEN + X_HIDDEN, HEAD_HIDDEN[0], Activation::Relu, rng),
            DenseLayer::glorot(HEAD_HIDDEN[0], HEAD_HIDDEN[1], Activation::Relu, rng),
            DenseLayer::glorot(HEAD_HIDDEN[1], 1, Activation::Identity, rng),
        ];
        Ok(CateModel { t_branch, x_branch, head, mode, contrastive_weight, margin })
    }

    pub fn t_dim(&self) -> usize {
        self.t_branch[0].in_dim()
    }

    pub fn x_dim(&self) -> usize {
        self.x_branch[0].in_dim()
    }

    pub fn repr_dim(&self) -> usize {
        self.t_branch.last().expect("nonempty branch").out_dim()
    }

    /// Flat parameter vector, order: t-branch, x-branch, head.
    pub fn params(&self) -> Vec<f64> {
        let mut p = nn::flatten_params(&self.t_branch);
        p.extend(nn::flatten_params(&self.x_branch));
        p.extend(nn::flatten_params(&self.head));
        p
    }

    pub fn param_count(&self) -> usize {
        nn::param_count(&self.t_branch) + nn::param_count(&self.x_branch) + nn::param_count(&self.head)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let nt = nn::param_count(&self.t_branch);
        let nx = nn::param_count(&self.x_branch);
        nn::set_params(&mut self.t_branch, &flat[..nt])?;
        nn::set_params(&mut self.x_branch, &flat[nt..nt + nx])?;
        nn::set_params(&mut self.head, &flat[nt + nx..])
    }

    pub fn predict_batch(&self, x: &Tensor2, t: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.x_dim() || t.cols() != self.t_dim() {
            return Err(Error::Config(format!(
                "model takes x[{}] t[{}], got x[{}] t[{}]",
                self.x_dim(),
                self.t_dim(),
                x.cols(),
                t.cols()
            )));
        }
        let ht = nn::infer(&self.t_branch, t)?;
        let hx = nn::infer(&self.x_branch, x)?;
        let h = Tensor2::hcat(&[&ht, &hx])?;
        nn::infer(&self.head, &h)
    }

    pub fn predict(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        let xb = Tensor2::from_vec(1, x.len(), x.to_vec())?;
        let tb = Tensor2::from_vec(1, t.len(), t.to_vec())?;
        Ok(self.predict_batch(&xb, &tb)?.get(0, 0))
    }

    pub fn treatment_representation_batch(&self, t: &Tensor2) -> Result<Tensor2> {
        if t.cols() != self.t_dim() {
            return Err(Error::Config(format!(
                "model takes t[{}], got t[{}]",
                self.t_dim(),
                t.cols()
            )));
        }
        nn::infer(&self.t_branch, t)
    }

    pub fn treatment_representation(&self, t: &[f64]) -> Result<Vec<f64>> {
        let tb = Tensor2::from_vec(1, t.len(), t.to_vec())?;
        Ok(self.treatment_representation_batch(&tb)?.into_data())
    }
}

/// Anything that predicts a scalar outcome from (x, t). Metrics are written
/// against this so oracle predictors slot in next to trained models.
pub trait OutcomePredictor {
    fn predict_one(&self, x: &[f64], t: &[f64]) -> Result<f64>;
}

impl OutcomePredictor for CateModel {
    fn predict_one(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        self.predict(x, t)
    }
}

/// Closure adapter for oracle predictors in tests and demos.
pub struct FnPredictor<F: Fn(&[f64], &[f64]) -> f64>(pub F);

impl<F: Fn(&[f64], &[f64]) -> f64> OutcomePredictor for FnPredictor<F> {
    fn predict_one(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        Ok((self.0)(x, t))
    }
}

/// A trained estimator of either family, as persisted in snapshots.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Network(CateModel),
    Linear(LinearCateModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Network(m) => m.predict(x, t),
            TrainedModel::Linear(m) => m.predict(x, t),
        }
    }

    pub fn treatment_representation(&self, t: &[f64]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Network(m) => m.treatment_representation(t),
            TrainedModel::Linear(m) => Ok(m.treatment_representation(t)),
        }
    }
}

impl OutcomePredictor for TrainedModel {
    fn predict_one(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        self.predict(x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_predict_zero() {
        let mut rng = Rng::seed_from(0);
        let mut m = CateModel::new(10, 10, Mode::Plain, 0.0, 30.0, &mut rng).unwrap();
        m.set_params(&vec![0.0; m.param_count()]).unwrap();
        let y = m.predict(&[1.0; 10], &[2.0; 10]).unwrap();
        assert_eq!(y, 0.0);
        let r = m.treatment_representation(&[3.0; 10]).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert_eq!(r.len(), 32);
    }

    #[test]
    fn head_input_matches_branch_widths() {
        let mut rng = Rng::seed_from(1);
        let m = CateModel::new(7, 4, Mode::Contrastive, 0.1, 30.0, &mut rng).unwrap();
        assert_eq!(m.head[0].in_dim(), m.repr_dim() + m.x_branch.last().unwrap().out_dim());
        assert_eq!(m.head.last().unwrap().out_dim(), 1);
        assert_eq!(m.t_dim(), 7);
        assert_eq!(m.x_dim(), 4);
    }

    #[test]
    fn predict_rejects_wrong_widths() {
        let mut rng = Rng::seed_from(2);
        let m = CateModel::new(10, 10, Mode::Plain, 0.0, 30.0, &mut rng).unwrap();
        assert!(m.predict(&[0.0; 3], &[0.0; 10]).is_err());
        assert!(m.predict(&[0.0; 10], &[0.0; 3]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = Rng::seed_from(3);
        let mut m = CateModel::new(5, 5, Mode::Plain, 0.0, 30.0, &mut rng).unwrap();
        let p = m.params();
        let mut p2 = p.clone();
        p2[0] += 1.0;
        *p2.last_mut().unwrap() -= 2.0;
        m.set_params(&p2).unwrap();
        assert_eq!(m.params(), p2);
    }

    #[test]
    fn constructor_validates_hyperparameters() {
        let mut rng = Rng::seed_from(4);
        assert!(CateModel::new(5, 5, Mode::Contrastive, -0.1, 30.0, &mut rng).is_err());
        assert!(CateModel::new(5, 5, Mode::Contrastive, 0.1, 0.0, &mut rng).is_err());
        assert!(CateModel::new(0, 5, Mode::Plain, 0.0, 30.0, &mut rng).is_err());
    }

    #[test]
    fn fn_predictor_wraps_closures() {
        let p = FnPredictor(|x: &[f64], t: &[f64]| x[0] + t[0]);
        assert_eq!(p.predict_one(&[1.0], &[2.0]).unwrap(), 3.0);
    }
}
