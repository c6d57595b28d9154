//! Finitely supported positive measures, total-variation distance, and the
//! ordered perturbations used by the stability experiments.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A finitely supported measure: ordered nodes in `R^d` with nonnegative
/// weights. Node ordering is significant and preserved by every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// How two measures' supports are matched before taking the weight-vector
/// l1 difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportAlignment {
    /// Position-wise: both measures must share an ordered support prefix;
    /// the shorter weight vector is zero-padded.
    ByIndex,
    /// Exact coordinate matching (bitwise); nodes present in only one
    /// measure contribute their full weight.
    ByCoordinateExact,
}

impl DiscreteMeasure {
    /// General constructor: weights may be zero but not negative.
    pub fn new(dim: usize, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if nodes.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        for (i, x) in nodes.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "node {i} has {} coordinates, expected {dim}",
                    x.len()
                )));
            }
            if !x.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!("weight {i} is {w}")));
            }
        }
        Ok(Self { dim, nodes, weights })
    }

    /// Strict constructor: additionally rejects zero weights.
    pub fn new_strict(dim: usize, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, &w)| w == 0.0) {
            return Err(Error::InvalidArgument(format!("weight {i} is {w} (strict mode)")));
        }
        Self::new(dim, nodes, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Total mass: the l1 norm of the weight vector.
pub fn total_mass(m: &DiscreteMeasure) -> f64 {
    m.weights.iter().map(|w| w.abs()).sum()
}

/// Total-variation distance `|a - b| / (|a| + |b|)` on the aligned weight
/// vectors. Lies in `[0, 1]` for nonnegative measures.
pub fn tv_distance(a: &DiscreteMeasure, b: &DiscreteMeasure, align: SupportAlignment) -> Result<f64> {
    let denom = total_mass(a) + total_mass(b);
    if denom == 0.0 {
        return Err(Error::BothZero);
    }
    let diff = match align {
        SupportAlignment::ByIndex => {
            let shared = a.len().min(b.len());
            for i in 0..shared {
                if a.nodes[i] != b.nodes[i] {
                    return Err(Error::UnalignableSupports(i));
                }
            }
            let mut d = 0.0;
            let long = a.len().max(b.len());
            for i in 0..long {
                let wa = a.weights.get(i).copied().unwrap_or(0.0);
                let wb = b.weights.get(i).copied().unwrap_or(0.0);
                d += (wa - wb).abs();
            }
            d
        }
        SupportAlignment::ByCoordinateExact => {
            use std::collections::HashMap;
            let key = |x: &[f64]| -> Vec<u64> { x.iter().map(|c| c.to_bits()).collect() };
            let mut table: HashMap<Vec<u64>, f64> = HashMap::new();
            for (x, &w) in a.nodes.iter().zip(&a.weights) {
                *table.entry(key(x)).or_insert(0.0) += w;
            }
            for (x, &w) in b.nodes.iter().zip(&b.weights) {
                *table.entry(key(x)).or_insert(0.0) -= w;
            }
            table.values().map(|v| v.abs()).sum()
        }
    };
    Ok(diff / denom)
}

/// Random mean-zero weight displacement hitting a prescribed TV distance.
///
/// Draws iid symmetric displacements, projects to zero mean, scales to the
/// target l1 difference, and shrinks uniformly if any weight would become
/// nonpositive. Deterministic for a fixed seed. The result satisfies
/// `|tv(m, m') - target_tv| <= 0.01 * target_tv`.
pub fn perturb_weights(m: &DiscreteMeasure, target_tv: f64, rng_seed: u64) -> Result<DiscreteMeasure> {
    if !(0.0..1.0).contains(&target_tv) {
        return Err(Error::InvalidArgument(format!("target_tv {target_tv} not in [0,1)")));
    }
    if target_tv == 0.0 {
        return Ok(m.clone());
    }
    let n = m.len();
    if n < 2 {
        return Err(Error::TargetUnreachable { target: target_tv });
    }
    let mass = total_mass(m);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // Zero-mean displacement keeps total mass fixed, so the perturbed mass
    // equals the original and tv = ||d||_1 / (2 mass) scales linearly in d.
    for _attempt in 0..64 {
        let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        for di in d.iter_mut() {
            *di -= mean;
        }
        let l1: f64 = d.iter().map(|v| v.abs()).sum();
        if l1 == 0.0 {
            continue;
        }
        let scale = target_tv * 2.0 * mass / l1;
        // Largest uniform shrink keeping every weight strictly positive.
        let mut gamma: f64 = 1.0;
        for (w, di) in m.weights.iter().zip(&d) {
            let step = scale * di;
            if *w + step <= 0.0 {
                gamma = gamma.min(0.99 * w / (-step));
            }
        }
        if gamma < 0.99 {
            continue; // shrink would miss the 1% tolerance; redraw
        }
        let weights: Vec<f64> = m
            .weights
            .iter()
            .zip(&d)
            .map(|(w, di)| w + gamma * scale * di)
            .collect();
        if weights.iter().any(|w| *w <= 0.0) {
            continue;
        }
        return DiscreteMeasure::new_strict(m.dim, m.nodes.clone(), weights);
    }
    Err(Error::TargetUnreachable { target: target_tv })
}

/// Append new nodes with equal weights so the TV distance to the original
/// measure equals `target_tv` exactly; the original prefix is untouched.
pub fn append_nodes(
    m: &DiscreteMeasure,
    new_nodes: Vec<Vec<f64>>,
    target_tv: f64,
) -> Result<DiscreteMeasure> {
    if !(0.0 < target_tv && target_tv < 1.0) {
        return Err(Error::InvalidArgument(format!("target_tv {target_tv} not in (0,1)")));
    }
    if new_nodes.is_empty() {
        return Err(Error::InvalidArgument("new_nodes is empty".into()));
    }
    let mass = total_mass(m);
    // tv = eps / (2 mass + eps)  =>  eps = 2 mass tv / (1 - tv)
    let eps = 2.0 * mass * target_tv / (1.0 - target_tv);
    let each = eps / new_nodes.len() as f64;
    let mut nodes = m.nodes.clone();
    let mut weights = m.weights.clone();
    for x in new_nodes {
        nodes.push(x);
        weights.push(each);
    }
    DiscreteMeasure::new(m.dim, nodes, weights)
}
