//! Dense layers, losses and Adam.
//!
//! Layers cache their forward inputs and pre-activations, so the usual cycle
//! is forward -> loss -> backward -> adam_step. Calling backward without a
//! preceding forward is a state error, not UB. Analytic gradients are checked
//! against central finite differences in the tests below; the checker itself
//! lives in [`gradcheck`] so integration suites can rerun it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative at pre-activation z. ReLU at exactly 0 uses subgradient 0.
    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Cache {
    input: Tensor2,
    preact: Tensor2,
}

/// Fully connected layer, weights stored in_dim x out_dim.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub activation: Activation,
    cache: Option<Cache>,
}

impl DenseLayer {
    pub fn new(w: Tensor2, b: Vec<f64>, activation: Activation) -> Result<Self> {
        if b.len() != w.cols() {
            return Err(Error::Shape(format!(
                "bias has {} entries, weights give {}",
                b.len(),
                w.cols()
            )));
        }
        Ok(DenseLayer { w, b, activation, cache: None })
    }

    /// Glorot-uniform init: U(-a, a) with a = sqrt(6 / (in + out)).
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim).map(|_| (rng.uniform() * 2.0 - 1.0) * a).collect();
        DenseLayer {
            w: Tensor2::from_vec(in_dim, out_dim, data).expect("glorot shape"),
            b: vec![0.0; out_dim],
            activation,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    fn check_input(&self, input: &Tensor2) -> Result<()> {
        if input.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "layer expects {} inputs, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    /// Forward pass without touching the backward cache.
    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let z = input.matmul(&self.w).add_row(&self.b);
        Ok(z.map(|v| self.activation.apply(v)))
    }

    /// Forward pass that caches input and pre-activations for backward.
    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let z = input.matmul(&self.w).add_row(&self.b);
        let out = z.map(|v| self.activation.apply(v));
        self.cache = Some(Cache { input: input.clone(), preact: z });
        Ok(out)
    }

    /// Consumes the cache; returns parameter gradients and the input gradient.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<(LayerGrads, Tensor2)> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        if upstream.rows() != cache.preact.rows() || upstream.cols() != cache.preact.cols() {
            return Err(Error::Shape(format!(
                "upstream grad is {}x{}, layer output was {}x{}",
                upstream.rows(),
                upstream.cols(),
                cache.preact.rows(),
                cache.preact.cols()
            )));
        }
        let dz = upstream.zip_map(&cache.preact, |g, z| g * self.activation.deriv(z));
        let dw = cache.input.transpose().matmul(&dz);
        let db = dz.col_sums();
        let dx = dz.matmul(&self.w.transpose());
        Ok((LayerGrads { dw, db }, dx))
    }
}

/// Gradients shaped like a layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Tensor2,
    pub db: Vec<f64>,
}

pub fn dense_forward(layer: &mut DenseLayer, input: &Tensor2) -> Result<Tensor2> {
    layer.forward(input)
}

/// Runs a layer stack forward, caching for backward.
pub fn forward(layers: &mut [DenseLayer], input: &Tensor2) -> Result<Tensor2> {
    let mut x = input.clone();
    for layer in layers.iter_mut() {
        x = layer.forward(&x)?;
    }
    Ok(x)
}

/// Forward without caching (prediction path).
pub fn infer(layers: &[DenseLayer], input: &Tensor2) -> Result<Tensor2> {
    let mut x = input.clone();
    for layer in layers {
        x = layer.infer(&x)?;
    }
    Ok(x)
}

/// Backpropagates `upstream` through the stack. Returns per-layer gradients
/// (same order as `layers`) and the gradient w.r.t. the stack input.
pub fn backward(layers: &mut [DenseLayer], upstream: &Tensor2) -> Result<(Vec<LayerGrads>, Tensor2)> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = upstream.clone();
    for layer in layers.iter_mut().rev() {
        let (lg, dx) = layer.backward(&g)?;
        grads.push(lg);
        g = dx;
    }
    grads.reverse();
    Ok((grads, g))
}

// Parameter flattening. Order is fixed (per layer: weights row-major, then
// bias) and shared by Adam and the snapshot format.

pub fn param_count(layers: &[DenseLayer]) -> usize {
    layers.iter().map(|l| l.w.data().len() + l.b.len()).sum()
}

pub fn flatten_params(layers: &[DenseLayer]) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(layers));
    for l in layers {
        out.extend_from_slice(l.w.data());
        out.extend_from_slice(&l.b);
    }
    out
}

pub fn set_params(layers: &mut [DenseLayer], params: &[f64]) -> Result<()> {
    if params.len() != param_count(layers) {
        return Err(Error::Shape(format!(
            "stack has {} parameters, got {}",
            param_count(layers),
            params.len()
        )));
    }
    let mut off = 0;
    for l in layers {
        let wn = l.w.data().len();
        l.w.data_mut().copy_from_slice(&params[off..off + wn]);
        off += wn;
        let bn = l.b.len();
        l.b.copy_from_slice(&params[off..off + bn]);
        off += bn;
    }
    Ok(())
}

pub fn flatten_grads(grads: &[LayerGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.dw.data());
        out.extend_from_slice(&g.db);
    }
    out
}

// Losses. Both return the scalar together with gradients w.r.t. their inputs;
// gradients are already divided by the averaging count.

/// Mean Huber loss and d loss / d pred.
pub fn huber_loss(pred: &Tensor2, target: &Tensor2, delta: f64) -> Result<(f64, Tensor2)> {
    if delta <= 0.0 {
        return Err(Error::Config(format!("huber delta must be positive, got {delta}")));
    }
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::Shape(format!(
            "pred {}x{} vs target {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = (pred.rows() * pred.cols()) as f64;
    let mut loss = 0.0;
    let grad = pred.zip_map(target, |p, t| {
        let r = p - t;
        if r.abs() <= delta {
            loss += 0.5 * r * r;
            r / n
        } else {
            loss += delta * (r.abs() - 0.5 * delta);
            delta * r.signum() / n
        }
    });
    Ok((loss / n, grad))
}

/// Mean triplet loss max(0, ||a-p||^2 - ||a-n||^2 + margin) over rows, with
/// gradients w.r.t. all three inputs. Clipped rows contribute zero gradient.
pub fn triplet_loss(
    anchor: &Tensor2,
    positive: &Tensor2,
    negative: &Tensor2,
    margin: f64,
) -> Result<(f64, Tensor2, Tensor2, Tensor2)> {
    if margin <= 0.0 {
        return Err(Error::Config(format!("triplet margin must be positive, got {margin}")));
    }
    let shape = (anchor.rows(), anchor.cols());
    if shape != (positive.rows(), positive.cols()) || shape != (negative.rows(), negative.cols()) {
        return Err(Error::Shape("triplet inputs must share shape".into()));
    }
    let (rows, cols) = shape;
    let mut loss = 0.0;
    let mut da = Tensor2::zeros(rows, cols);
    let mut dp = Tensor2::zeros(rows, cols);
    let mut dn = Tensor2::zeros(rows, cols);
    if rows == 0 {
        return Ok((0.0, da, dp, dn));
    }
    let inv = 1.0 / rows as f64;
    for i in 0..rows {
        let a = anchor.row(i);
        let p = positive.row(i);
        let nr = negative.row(i);
        let mut d_ap = 0.0;
        let mut d_an = 0.0;
        for c in 0..cols {
            d_ap += (a[c] - p[c]) * (a[c] - p[c]);
            d_an += (a[c] - nr[c]) * (a[c] - nr[c]);
        }
        let v = d_ap - d_an + margin;
        if v > 0.0 {
            loss += v;
            for c in 0..cols {
                da.set(i, c, 2.0 * (nr[c] - p[c]) * inv);
                dp.set(i, c, -2.0 * (a[c] - p[c]) * inv);
                dn.set(i, c, 2.0 * (a[c] - nr[c]) * inv);
            }
        }
    }
    Ok((loss * inv, da, dp, dn))
}

// Adam over one flattened parameter vector.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        }
    }
}

/// One Adam update with bias correction. Advances `state.step` by exactly 1.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam state holds {} parameters, got params {} / grads {}",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient {} at flat index {i} (step {})",
            grads[i],
            state.step + 1
        )));
    }
    state.step += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] -= state.lr * mhat / (vhat.sqrt() + state.epsilon);
    }
    Ok(())
}

pub mod gradcheck {
    //! Central finite differences for validating analytic gradients.

    /// Numeric gradient of `f` at `x`, central differences with step `h`.
    pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut xs = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = xs[i];
            xs[i] = orig + h;
            let fp = f(&xs);
            xs[i] = orig - h;
            let fm = f(&xs);
            xs[i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    /// Entrywise |a - n| / max(|a|, |n|, 1): relative where gradients are
    /// large, absolute where they vanish (plain relative error explodes on
    /// finite-difference noise near zero).
    pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        assert_eq!(analytic.len(), numeric.len());
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{fd_grad, max_rel_err};
    use super::*;

    const FD_H: f64 = 1e-5;
    const FD_TOL: f64 = 1e-4;

    fn tensor(rows: usize, cols: usize, data: &[f64]) -> Tensor2 {
        Tensor2::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn forward_zero_weights_gives_zero() {
        let mut l = DenseLayer::new(Tensor2::zeros(3, 2), vec![0.0; 2], Activation::Identity).unwrap();
        let out = l.forward(&tensor(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.5, 0.5])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identity_weights_passes_input_through() {
        let w = tensor(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mut l = DenseLayer::new(w, vec![0.0; 2], Activation::Identity).unwrap();
        let x = tensor(3, 2, &[1.0, 2.0, -3.0, 4.0, 0.0, -1.0]);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_relu_clips_forced_negative_preact() {
        // W = [[1],[1]], b = [-1], input [0.2, 0.3] -> pre-act -0.5 -> 0
        let w = tensor(2, 1, &[1.0, 1.0]);
        let mut l = DenseLayer::new(w, vec![-1.0], Activation::Relu).unwrap();
        let out = l.forward(&tensor(1, 2, &[0.2, 0.3])).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let mut l = DenseLayer::glorot(3, 2, Activation::Identity, &mut Rng::seed_from(0));
        let err = l.forward(&Tensor2::zeros(1, 4)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut l = DenseLayer::glorot(2, 2, Activation::Identity, &mut Rng::seed_from(0));
        let err = l.backward(&Tensor2::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn backward_twice_without_reforward_is_a_state_error() {
        let mut l = DenseLayer::glorot(2, 2, Activation::Identity, &mut Rng::seed_from(0));
        l.forward(&Tensor2::zeros(1, 2)).unwrap();
        l.backward(&Tensor2::zeros(1, 2)).unwrap();
        assert!(matches!(l.backward(&Tensor2::zeros(1, 2)), Err(Error::State(_))));
    }

    #[test]
    fn backward_sum_loss_linear_case() {
        // Identity layer, L = sum of outputs: dW columns are input column
        // sums, db entries are the batch size.
        let mut l = DenseLayer::glorot(3, 2, Activation::Identity, &mut Rng::seed_from(1));
        let x = tensor(4, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let out = l.forward(&x).unwrap();
        let ones = Tensor2::filled(out.rows(), out.cols(), 1.0);
        let (g, _) = l.backward(&ones).unwrap();
        let col_sums = x.col_sums();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g.dw.get(i, j) - col_sums[i]).abs() < 1e-12);
            }
        }
        assert!(g.db.iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        // b = -x W makes the pre-activation exactly 0; upstream must not leak.
        let w = tensor(1, 1, &[2.0]);
        let mut l = DenseLayer::new(w, vec![-2.0], Activation::Relu).unwrap();
        l.forward(&tensor(1, 1, &[1.0])).unwrap();
        let (g, dx) = l.backward(&tensor(1, 1, &[5.0])).unwrap();
        assert_eq!(g.dw.data(), &[0.0]);
        assert_eq!(g.db, vec![0.0]);
        assert_eq!(dx.data(), &[0.0]);
    }

    #[test]
    fn huber_loss_matches_hand_values() {
        let zero = tensor(1, 1, &[0.0]);
        let (l0, g0) = huber_loss(&zero, &zero, 1.0).unwrap();
        assert_eq!(l0, 0.0);
        assert_eq!(g0.data(), &[0.0]);

        // quadratic branch: r = 0.5
        let (l1, g1) = huber_loss(&tensor(1, 1, &[0.5]), &zero, 1.0).unwrap();
        assert!((l1 - 0.125).abs() < 1e-15);
        assert!((g1.data()[0] - 0.5).abs() < 1e-15);

        // linear branch: r = 2
        let (l2, g2) = huber_loss(&tensor(1, 1, &[2.0]), &zero, 1.0).unwrap();
        assert!((l2 - 1.5).abs() < 1e-15);
        assert!((g2.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn huber_rejects_nonpositive_delta() {
        let t = Tensor2::zeros(1, 1);
        assert!(matches!(huber_loss(&t, &t, 0.0), Err(Error::Config(_))));
        assert!(matches!(huber_loss(&t, &t, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn triplet_loss_hand_values() {
        // a = p = n: both distances 0, loss = margin.
        let x = tensor(1, 2, &[0.3, -0.7]);
        let (l, da, dp, dn) = triplet_loss(&x, &x, &x, 30.0).unwrap();
        assert!((l - 30.0).abs() < 1e-15);
        // active triplet, but p = n makes the anchor gradient cancel
        assert!(da.data().iter().all(|&v| v == 0.0));
        assert!(dp.data().iter().zip(dn.data()).all(|(&a, &b)| a == -b));

        // scalar check: a=0, p=1, n=3, margin 30 -> 1 - 9 + 30 = 22
        let (l2, ..) = triplet_loss(
            &tensor(1, 1, &[0.0]),
            &tensor(1, 1, &[1.0]),
            &tensor(1, 1, &[3.0]),
            30.0,
        )
        .unwrap();
        assert!((l2 - 22.0).abs() < 1e-15);
    }

    #[test]
    fn triplet_clipped_rows_are_silent() {
        // ||a-p||^2 = 0, ||a-n||^2 = 2 * margin -> clipped: loss 0, grads 0.
        let margin = 5.0_f64;
        let a = tensor(1, 1, &[0.0]);
        let n = tensor(1, 1, &[(2.0 * margin).sqrt()]);
        let (l, da, dp, dn) = triplet_loss(&a, &a, &n, margin).unwrap();
        assert_eq!(l, 0.0);
        assert!(da.data().iter().all(|&v| v == 0.0));
        assert!(dp.data().iter().all(|&v| v == 0.0));
        assert!(dn.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradients_leave_params_unchanged() {
        let mut st = AdamState::new(3, 1e-4);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut st, &mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let lr = 1e-4;
        let mut st = AdamState::new(2, lr);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut st, &mut p, &[0.3, -0.02]).unwrap();
        assert!((p[0] - (-lr)).abs() < 1e-9, "got {}", p[0]);
        assert!((p[1] - lr).abs() < 1e-9, "got {}", p[1]);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut st = AdamState::new(2, 1e-3);
            let mut p = vec![0.1, 0.2];
            for _ in 0..50 {
                adam_step(&mut st, &mut p, &[0.7, -0.1]).unwrap();
            }
            (p[0].to_bits(), p[1].to_bits())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut st = AdamState::new(1, 1e-4);
        let mut p = vec![0.0];
        let err = adam_step(&mut st, &mut p, &[f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(st.step, 0, "failed step must not advance the counter");
    }

    fn random_stack(rng: &mut Rng, dims: &[usize], acts: &[Activation]) -> Vec<DenseLayer> {
        dims.windows(2)
            .zip(acts)
            .map(|(d, &a)| DenseLayer::glorot(d[0], d[1], a, rng))
            .collect()
    }

    #[test]
    fn gradcheck_huber_through_random_stacks() {
        let mut rng = Rng::seed_from(2024);
        for trial in 0..5 {
            let dims = [4, 8, 5, 1];
            let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
            let mut layers = random_stack(&mut rng, &dims, &acts);
            let x = Tensor2::from_vec(6, 4, rng.normal_vec(24)).unwrap();
            let target = Tensor2::from_vec(6, 1, rng.normal_vec(6)).unwrap();

            let out = forward(&mut layers, &x).unwrap();
            let (_, dpred) = huber_loss(&out, &target, 1.0).unwrap();
            let (grads, _) = backward(&mut layers, &dpred).unwrap();
            let analytic = flatten_grads(&grads);

            let base = flatten_params(&layers);
            let numeric = fd_grad(
                |p| {
                    set_params(&mut layers, p).unwrap();
                    let out = infer(&layers, &x).unwrap();
                    huber_loss(&out, &target, 1.0).unwrap().0
                },
                &base,
                FD_H,
            );
            set_params(&mut layers, &base).unwrap();
            let err = max_rel_err(&analytic, &numeric);
            assert!(err < FD_TOL, "trial {trial} rel err {err}");
        }
    }

    #[test]
    fn gradcheck_triplet_through_random_stack() {
        // The training loop computes anchor/positive/negative in one stacked
        // forward; the check mirrors that exactly.
        let mut rng = Rng::seed_from(77);
        let dims = [3, 6, 4];
        let acts = [Activation::Relu, Activation::Identity];
        let mut layers = random_stack(&mut rng, &dims, &acts);
        let b = 5;
        let x = Tensor2::from_vec(3 * b, 3, rng.normal_vec(9 * b)).unwrap();
        let margin = 2.0;

        let out = forward(&mut layers, &x).unwrap();
        let (a, p, n) = (out.slice_rows(0, b), out.slice_rows(b, 2 * b), out.slice_rows(2 * b, 3 * b));
        let (_, da, dp, dn) = triplet_loss(&a, &p, &n, margin).unwrap();
        let upstream = Tensor2::vstack(&[&da, &dp, &dn]).unwrap();
        let (grads, _) = backward(&mut layers, &upstream).unwrap();
        let analytic = flatten_grads(&grads);

        let base = flatten_params(&layers);
        let numeric = fd_grad(
            |pv| {
                set_params(&mut layers, pv).unwrap();
                let out = infer(&layers, &x).unwrap();
                let (a, p, n) =
                    (out.slice_rows(0, b), out.slice_rows(b, 2 * b), out.slice_rows(2 * b, 3 * b));
                triplet_loss(&a, &p, &n, margin).unwrap().0
            },
            &base,
            FD_H,
        );
        set_params(&mut layers, &base).unwrap();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < FD_TOL, "rel err {err}");
    }

    #[test]
    fn gradcheck_input_gradient() {
        let mut rng = Rng::seed_from(31);
        let dims = [4, 7, 1];
        let acts = [Activation::Relu, Activation::Identity];
        let mut layers = random_stack(&mut rng, &dims, &acts);
        let x = Tensor2::from_vec(3, 4, rng.normal_vec(12)).unwrap();
        let target = Tensor2::from_vec(3, 1, rng.normal_vec(3)).unwrap();

        let out = forward(&mut layers, &x).unwrap();
        let (_, dpred) = huber_loss(&out, &target, 1.0).unwrap();
        let (_, dx) = backward(&mut layers, &dpred).unwrap();

        let base = x.data().to_vec();
        let numeric = fd_grad(
            |xv| {
                let xt = Tensor2::from_vec(3, 4, xv.to_vec()).unwrap();
                let out = infer(&layers, &xt).unwrap();
                huber_loss(&out, &target, 1.0).unwrap().0
            },
            &base,
            FD_H,
        );
        let err = max_rel_err(dx.data(), &numeric);
        assert!(err < FD_TOL, "rel err {err}");
    }

    #[test]
    fn flatten_set_round_trip() {
        let mut rng = Rng::seed_from(8);
        let mut layers = random_stack(&mut rng, &[3, 5, 2], &[Activation::Relu, Activation::Identity]);
        let p = flatten_params(&layers);
        assert_eq!(p.len(), param_count(&layers));
        let mut p2 = p.clone();
        for v in &mut p2 {
            *v += 1.0;
        }
        set_params(&mut layers, &p2).unwrap();
        assert_eq!(flatten_params(&layers), p2);
        assert!(set_params(&mut layers, &p2[1..]).is_err());
    }
}
