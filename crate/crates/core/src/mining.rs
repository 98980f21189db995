//! Outcome-bucketed triplet mining.
//!
//! Anchors pair with bucket-mates: similar outcome (|y - y'| <= epsilon)
//! makes a positive, dissimilar makes a negative. Buckets come from
//! equal-frequency cuts on a covariate representation g(x), so "similar
//! covariates" means same composite bucket.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::quantile;
use crate::rng::Rng;
use crate::tensor::Tensor2;

#[derive(Debug, Clone)]
pub struct BucketIndex {
    /// Interior cut points per g-dimension, ascending. A value v lands left
    /// of an edge when v <= edge.
    pub bucket_edges: Vec<Vec<f64>>,
    /// sample index -> flat bucket id
    pub bucket_of: Vec<usize>,
    /// flat bucket id -> member sample indices (ascending)
    pub members: Vec<Vec<usize>>,
}

impl BucketIndex {
    pub fn n_buckets(&self) -> usize {
        self.members.len()
    }

    pub fn occupied_buckets(&self) -> usize {
        self.members.iter().filter(|m| !m.is_empty()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    /// (anchor, positive, negative) sample indices.
    pub triples: Vec<(usize, usize, usize)>,
    pub epsilon: f64,
}

impl TripletBatch {
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }
}

/// g(x) = the first `dims` coordinates (clamped to what's available).
pub fn identity_g(dims: usize) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x: &[f64]| x[..dims.min(x.len())].to_vec()
}

/// Equal-frequency bucketing of g(x) per output dimension. Composite bucket
/// id is the mixed-radix encoding of the per-dimension bins. Asking for more
/// buckets than samples falls back to one bucket per sample with a warning.
pub fn build_index(
    covariates: &Tensor2,
    g: &dyn Fn(&[f64]) -> Vec<f64>,
    buckets_per_dim: usize,
) -> Result<BucketIndex> {
    if buckets_per_dim < 1 {
        return Err(Error::Config("buckets_per_dim must be at least 1".into()));
    }
    let n = covariates.rows();
    if n == 0 {
        return Err(Error::Config("cannot bucket an empty covariate matrix".into()));
    }
    let g_dim = g(covariates.row(0)).len();
    if g_dim == 0 {
        return Err(Error::Config("g(x) must have at least one output dimension".into()));
    }
    let mut b = buckets_per_dim;
    if b > n {
        warn!("requested {b} buckets per dim with only {n} samples; falling back to {n}");
        b = n;
    }
    let total = b.checked_pow(g_dim as u32).filter(|&t| t <= 1_000_000).ok_or_else(|| {
        Error::Config(format!("{b} buckets over {g_dim} dims is too many composite buckets"))
    })?;

    let mut gx = Vec::with_capacity(n);
    for i in 0..n {
        let v = g(covariates.row(i));
        if v.len() != g_dim {
            return Err(Error::Config(format!(
                "g(x) output length changed from {g_dim} to {} at row {i}",
                v.len()
            )));
        }
        gx.push(v);
    }

    let mut bucket_edges = Vec::with_capacity(g_dim);
    for d in 0..g_dim {
        let col: Vec<f64> = gx.iter().map(|v| v[d]).collect();
        let mut edges = Vec::with_capacity(b - 1);
        for k in 1..b {
            edges.push(quantile(&col, k as f64 / b as f64)?);
        }
        bucket_edges.push(edges);
    }

    let mut bucket_of = Vec::with_capacity(n);
    let mut members = vec![Vec::new(); total];
    for (i, v) in gx.iter().enumerate() {
        let mut id = 0;
        for d in 0..g_dim {
            let bin = bucket_edges[d].partition_point(|e| v[d] > *e);
            id = id * b + bin;
        }
        bucket_of.push(id);
        members[id].push(i);
    }
    Ok(BucketIndex { bucket_edges, bucket_of, members })
}

/// Up to `per_anchor` triples per anchor, positives and negatives drawn
/// uniformly (with replacement across draws) from qualifying bucket-mates.
/// Anchors lacking either candidate kind yield nothing; an empty batch is a
/// valid result and the caller decides how loudly to complain.
pub fn mine_triplets(
    index: &BucketIndex,
    outcomes: &[f64],
    epsilon: f64,
    per_anchor: usize,
    rng: &mut Rng,
) -> Result<TripletBatch> {
    if epsilon <= 0.0 {
        return Err(Error::Config(format!("mining epsilon must be positive, got {epsilon}")));
    }
    if outcomes.len() != index.bucket_of.len() {
        return Err(Error::Shape(format!(
            "{} outcomes for an index over {} samples",
            outcomes.len(),
            index.bucket_of.len()
        )));
    }
    if per_anchor == 0 {
        return Err(Error::Config("per_anchor must be at least 1".into()));
    }
    let mut triples = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for a in 0..outcomes.len() {
        let mates = &index.members[index.bucket_of[a]];
        if mates.len() < 3 {
            continue;
        }
        pos.clear();
        neg.clear();
        for &m in mates {
            if m == a {
                continue;
            }
            if (outcomes[m] - outcomes[a]).abs() <= epsilon {
                pos.push(m);
            } else {
                neg.push(m);
            }
        }
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        for _ in 0..per_anchor {
            triples.push((a, pos[rng.below(pos.len())], neg[rng.below(neg.len())]));
        }
    }
    Ok(TripletBatch { triples, epsilon })
}

/// Data-adaptive epsilon: the q-th quantile of within-bucket |y - y'| gaps
/// (all pairs). Returns the 0 sentinel, with a warning, when the gaps are
/// degenerate; callers treat 0 as "mining disabled".
pub fn set_epsilon_by_quantile(outcomes: &[f64], q: f64, index: &BucketIndex) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("epsilon quantile must be in (0, 1), got {q}")));
    }
    if outcomes.len() != index.bucket_of.len() {
        return Err(Error::Shape(format!(
            "{} outcomes for an index over {} samples",
            outcomes.len(),
            index.bucket_of.len()
        )));
    }
    let mut gaps = Vec::new();
    for mates in &index.members {
        for (i, &a) in mates.iter().enumerate() {
            for &b in &mates[i + 1..] {
                gaps.push((outcomes[a] - outcomes[b]).abs());
            }
        }
    }
    if gaps.is_empty() {
        warn!("no within-bucket pairs exist; disabling mining (epsilon = 0)");
        return Ok(0.0);
    }
    let eps = quantile(&gaps, q)?;
    if eps == 0.0 {
        warn!("within-bucket outcome gaps are degenerate at q = {q}; disabling mining (epsilon = 0)");
    }
    Ok(eps)
}
