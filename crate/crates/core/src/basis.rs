//! Multi-index sets, product bases, Vandermonde row evaluation, and
//! single-pass moment accumulation.

use crate::error::{Error, Result};
use crate::io_stream::NodeStream;
use std::sync::Arc;

/// A deterministically ordered (graded lexicographic) set of multi-indices.
/// Cardinality equals the dimension of the spanned function space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexSetKind {
    /// Hyperbolic cross: prod(alpha_i + 1) <= r + 1.
    Hc,
    /// Total degree: ||alpha||_1 <= r.
    Td,
    /// lp ball: ||alpha||_p <= r for a given p > 0.
    PNorm(f64),
}

impl MultiIndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Keeps the leading `n` indices. Because the ordering is graded
    /// lexicographic, the result spans a nested subspace of the original.
    pub fn truncated(mut self, n: usize) -> Self {
        self.indices.truncate(n);
        self
    }
}

const MAX_SET_SIZE: usize = 1 << 22;

/// Build a standard multi-index set, graded-lex ordered.
pub fn multi_index_set(kind: IndexSetKind, r: f64, d: usize) -> Result<MultiIndexSet> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidArgument(format!("r = {r} must be finite and >= 0")));
    }
    if let IndexSetKind::PNorm(p) = kind {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!("p = {p} must be positive")));
        }
    }
    let admits = |alpha: &[u32]| -> bool {
        match kind {
            IndexSetKind::Td => alpha.iter().map(|&a| a as u64).sum::<u64>() as f64 <= r,
            IndexSetKind::Hc => {
                let mut prod: f64 = 1.0;
                for &a in alpha {
                    prod *= a as f64 + 1.0;
                }
                prod <= (r + 1.0) * (1.0 + 1e-12)
            }
            IndexSetKind::PNorm(p) => {
                let s: f64 = alpha.iter().map(|&a| (a as f64).powf(p)).sum();
                s <= r.powf(p) * (1.0 + 1e-12)
            }
        }
    };
    // Per-coordinate bound: a single coordinate already has to qualify.
    let axis_max: u32 = match kind {
        IndexSetKind::Td | IndexSetKind::PNorm(_) => r.floor() as u32,
        IndexSetKind::Hc => r.floor() as u32,
    };
    let mut indices = Vec::new();
    let mut alpha = vec![0u32; d];
    enumerate(&mut alpha, 0, axis_max, &admits, &mut indices)?;
    indices.sort_by(|a, b| {
        let ga: u64 = a.iter().map(|&x| x as u64).sum();
        let gb: u64 = b.iter().map(|&x| x as u64).sum();
        ga.cmp(&gb).then_with(|| a.cmp(b))
    });
    Ok(MultiIndexSet { dim: d, indices })
}

fn enumerate(
    alpha: &mut Vec<u32>,
    axis: usize,
    axis_max: u32,
    admits: &dyn Fn(&[u32]) -> bool,
    out: &mut Vec<Vec<u32>>,
) -> Result<()> {
    if axis == alpha.len() {
        if admits(alpha) {
            if out.len() >= MAX_SET_SIZE {
                return Err(Error::InvalidArgument(format!(
                    "multi-index set exceeds {MAX_SET_SIZE} entries"
                )));
            }
            out.push(alpha.clone());
        }
        return Ok(());
    }
    for a in 0..=axis_max {
        alpha[axis] = a;
        // Prefix pruning: if the prefix alone is inadmissible with zeros in
        // the remaining axes, larger values of this axis cannot help.
        let mut probe = alpha.clone();
        for p in probe.iter_mut().skip(axis + 1) {
            *p = 0;
        }
        if !admits(&probe) {
            break;
        }
        enumerate(alpha, axis + 1, axis_max, admits, out)?;
    }
    alpha[axis] = 0;
    Ok(())
}

/// Univariate families the product basis can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Monomial,
    Legendre,
    Chebyshev,
    HermiteProbabilists,
    BesselJ,
}

/// Callback signature for user-supplied bases: fills the row for one point.
pub type RowCallback = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Specification of the N-dimensional function space and the Vandermonde
/// row map `v(x)`.
#[derive(Clone)]
pub enum BasisSpec {
    Product {
        family: Family,
        index_set: MultiIndexSet,
        /// Optional per-axis affine map `x -> scale*x + shift` applied
        /// before the univariate evaluation. Identity when `None`.
        affine: Option<Vec<(f64, f64)>>,
    },
    Custom {
        dim: usize,
        n: usize,
        eval: RowCallback,
    },
}

impl std::fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisSpec::Product { family, index_set, affine } => f
                .debug_struct("Product")
                .field("family", family)
                .field("n", &index_set.len())
                .field("affine", &affine.is_some())
                .finish(),
            BasisSpec::Custom { dim, n, .. } => {
                f.debug_struct("Custom").field("dim", dim).field("n", n).finish()
            }
        }
    }
}

impl BasisSpec {
    pub fn product(family: Family, index_set: MultiIndexSet) -> Self {
        BasisSpec::Product { family, index_set, affine: None }
    }

    pub fn with_affine(self, affine: Vec<(f64, f64)>) -> Result<Self> {
        match self {
            BasisSpec::Product { family, index_set, .. } => {
                if affine.len() != index_set.dim() {
                    return Err(Error::InvalidArgument("affine map length != dim".into()));
                }
                Ok(BasisSpec::Product { family, index_set, affine: Some(affine) })
            }
            BasisSpec::Custom { .. } => {
                Err(Error::InvalidArgument("affine map not supported on custom bases".into()))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::Product { index_set, .. } => index_set.dim(),
            BasisSpec::Custom { dim, .. } => *dim,
        }
    }

    /// N = dim(V): length of every evaluated row.
    pub fn n(&self) -> usize {
        match self {
            BasisSpec::Product { index_set, .. } => index_set.len(),
            BasisSpec::Custom { n, .. } => *n,
        }
    }

    /// Highest univariate order appearing in any multi-index (product bases).
    fn max_order(&self) -> u32 {
        match self {
            BasisSpec::Product { index_set, .. } => index_set
                .indices()
                .iter()
                .flat_map(|a| a.iter().copied())
                .max()
                .unwrap_or(0),
            BasisSpec::Custom { .. } => 0,
        }
    }
}

/// BesselJ power-series arguments are validated on this interval only.
pub const BESSELJ_MAX_ABS_ARG: f64 = 12.0;

/// Fill `out[q]` with `f_q(t)` for q = 0..=order via the family's
/// three-term recurrence (or series for BesselJ).
fn eval_univariate(family: Family, t: f64, out: &mut [f64]) -> Result<()> {
    let order = out.len() - 1;
    match family {
        Family::Monomial => {
            out[0] = 1.0;
            for q in 1..=order {
                out[q] = out[q - 1] * t;
            }
        }
        Family::Legendre => {
            out[0] = 1.0;
            if order >= 1 {
                out[1] = t;
            }
            for q in 1..order {
                let qf = q as f64;
                out[q + 1] = ((2.0 * qf + 1.0) * t * out[q] - qf * out[q - 1]) / (qf + 1.0);
            }
        }
        Family::Chebyshev => {
            out[0] = 1.0;
            if order >= 1 {
                out[1] = t;
            }
            for q in 1..order {
                out[q + 1] = 2.0 * t * out[q] - out[q - 1];
            }
        }
        Family::HermiteProbabilists => {
            out[0] = 1.0;
            if order >= 1 {
                out[1] = t;
            }
            for q in 1..order {
                out[q + 1] = t * out[q] - q as f64 * out[q - 1];
            }
        }
        Family::BesselJ => {
            if t.abs() > BESSELJ_MAX_ABS_ARG {
                return Err(Error::EvaluationDomain(format!(
                    "|{t}| > {BESSELJ_MAX_ABS_ARG} for BesselJ series"
                )));
            }
            for (q, o) in out.iter_mut().enumerate() {
                *o = bessel_j(q as u32, t);
            }
        }
    }
    Ok(())
}

/// Integer-order Bessel function of the first kind by ascending power
/// series. Accurate to ~1e-12 absolute for |x| <= 12.
fn bessel_j(order: u32, x: f64) -> f64 {
    let half = x / 2.0;
    // term_0 = (x/2)^q / q!
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let mut sum = term;
    let q = order as f64;
    for m in 1..=80u32 {
        let mf = m as f64;
        term *= -(half * half) / (mf * (mf + q));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Evaluate the Vandermonde row `v(x)`: entry n is the d-fold product of
/// univariate functions for the n-th multi-index.
pub fn eval_row(basis: &BasisSpec, x: &[f64], out: &mut [f64]) -> Result<()> {
    if x.len() != basis.dim() {
        return Err(Error::DimensionMismatch { stream: x.len(), basis: basis.dim() });
    }
    if !x.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    debug_assert_eq!(out.len(), basis.n());
    match basis {
        BasisSpec::Custom { eval, .. } => {
            eval(x, out);
            Ok(())
        }
        BasisSpec::Product { family, index_set, affine } => {
            let order = basis.max_order() as usize;
            let d = index_set.dim();
            // univariate table: uni[j][q] = f_q(mapped x_j)
            let mut uni = vec![0.0; d * (order + 1)];
            for j in 0..d {
                let t = match affine {
                    Some(maps) => maps[j].0 * x[j] + maps[j].1,
                    None => x[j],
                };
                eval_univariate(*family, t, &mut uni[j * (order + 1)..(j + 1) * (order + 1)])?;
            }
            for (n, alpha) in index_set.indices().iter().enumerate() {
                let mut prod = 1.0;
                for (j, &a) in alpha.iter().enumerate() {
                    prod *= uni[j * (order + 1) + a as usize];
                }
                out[n] = prod;
            }
            Ok(())
        }
    }
}

/// Convenience allocating variant of [`eval_row`].
pub fn eval_row_vec(basis: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; basis.n()];
    eval_row(basis, x, &mut out)?;
    Ok(out)
}

/// The moment vector eta of the measure against the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub values: Vec<f64>,
}

/// Single-pass moment accumulation `eta_n = sum_m w_m v_n(x_m)` with
/// Neumaier compensated summation, O(N) memory.
pub fn stream_moments(basis: &BasisSpec, source: &mut dyn NodeStream) -> Result<MomentVector> {
    let n = basis.n();
    let mut sum = vec![0.0f64; n];
    let mut comp = vec![0.0f64; n];
    let mut row = vec![0.0f64; n];
    while let Some(node) = source.next_node()? {
        eval_row(basis, &node.coords, &mut row)?;
        for i in 0..n {
            let term = node.weight * row[i];
            let t = sum[i] + term;
            comp[i] += if sum[i].abs() >= term.abs() {
                (sum[i] - t) + term
            } else {
                (term - t) + sum[i]
            };
            sum[i] = t;
        }
    }
    for i in 0..n {
        sum[i] += comp[i];
    }
    Ok(MomentVector { values: sum })
}

/// Parse the CLI basis grammar `family:KIND:r[:p]`,
/// e.g. `legendre:TD:10`, `besselj:PNORM:25:0.3333333333`.
pub fn parse_basis_spec(s: &str, d: usize) -> Result<BasisSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "basis spec '{s}' must be family:KIND:r[:p]"
        )));
    }
    let family = match parts[0].to_ascii_lowercase().as_str() {
        "monomial" => Family::Monomial,
        "legendre" => Family::Legendre,
        "chebyshev" => Family::Chebyshev,
        "hermite" => Family::HermiteProbabilists,
        "besselj" => Family::BesselJ,
        other => return Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
    };
    let r: f64 = parts[2]
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad r '{}'", parts[2])))?;
    let kind = match parts[1].to_ascii_uppercase().as_str() {
        "HC" => IndexSetKind::Hc,
        "TD" => IndexSetKind::Td,
        "PNORM" => {
            let p: f64 = parts
                .get(3)
                .ok_or_else(|| Error::InvalidArgument("PNORM requires :p".into()))?
                .parse()
                .map_err(|_| Error::InvalidArgument("bad p".into()))?;
            IndexSetKind::PNorm(p)
        }
        other => return Err(Error::InvalidArgument(format!("unknown index-set kind '{other}'"))),
    };
    Ok(BasisSpec::product(family, multi_index_set(kind, r, d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io_stream::VecStream;
    use approx::assert_relative_eq;

    #[test]
    fn index_set_cardinalities_match_published_rules() {
        assert_eq!(multi_index_set(IndexSetKind::Td, 10.0, 2).unwrap().len(), 66);
        assert_eq!(multi_index_set(IndexSetKind::Hc, 20.0, 2).unwrap().len(), 70);
        assert_eq!(
            multi_index_set(IndexSetKind::PNorm(1.0 / 3.0), 25.0, 2).unwrap().len(),
            70
        );
        assert_eq!(multi_index_set(IndexSetKind::Hc, 11.0, 3).unwrap().len(), 74);
    }

    #[test]
    fn index_set_r_zero_is_origin() {
        for kind in [IndexSetKind::Hc, IndexSetKind::Td, IndexSetKind::PNorm(2.0)] {
            let s = multi_index_set(kind, 0.0, 3).unwrap();
            assert_eq!(s.indices(), &[vec![0, 0, 0]]);
        }
    }

    #[test]
    fn index_set_graded_lex_no_duplicates() {
        let s = multi_index_set(IndexSetKind::Td, 4.0, 3).unwrap();
        for w in s.indices().windows(2) {
            let ga: u32 = w[0].iter().sum();
            let gb: u32 = w[1].iter().sum();
            assert!(ga < gb || (ga == gb && w[0] < w[1]), "{:?} !< {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn eval_row_monomial_td1_graded_lex() {
        let b = BasisSpec::product(Family::Monomial, multi_index_set(IndexSetKind::Td, 1.0, 2).unwrap());
        let row = eval_row_vec(&b, &[0.5, 2.0]).unwrap();
        // graded-lex order {(0,0),(0,1),(1,0)} -> (1, x2, x1)
        assert_eq!(row, vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn legendre_at_one_is_one() {
        let mut out = [0.0; 5];
        eval_univariate(Family::Legendre, 1.0, &mut out).unwrap();
        for v in out {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn legendre_product_value() {
        // L2(0.5) * L1(-0.5) = (-0.125)(-0.5) = 0.0625
        let mut out = [0.0; 3];
        eval_univariate(Family::Legendre, 0.5, &mut out).unwrap();
        assert_relative_eq!(out[2], -0.125, epsilon = 1e-15);
        let mut out2 = [0.0; 2];
        eval_univariate(Family::Legendre, -0.5, &mut out2).unwrap();
        assert_relative_eq!(out[2] * out2[1], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn recurrences_match_closed_forms_low_degree() {
        for &t in &[-0.9, -0.3, 0.0, 0.4, 0.8] {
            let mut l = [0.0; 5];
            eval_univariate(Family::Legendre, t, &mut l).unwrap();
            assert_relative_eq!(l[2], 0.5 * (3.0 * t * t - 1.0), epsilon = 1e-14);
            assert_relative_eq!(l[3], 0.5 * (5.0 * t * t * t - 3.0 * t), epsilon = 1e-14);
            assert_relative_eq!(
                l[4],
                0.125 * (35.0 * t.powi(4) - 30.0 * t * t + 3.0),
                epsilon = 1e-14
            );
            let mut c = [0.0; 5];
            eval_univariate(Family::Chebyshev, t, &mut c).unwrap();
            assert_relative_eq!(c[3], 4.0 * t * t * t - 3.0 * t, epsilon = 1e-14);
            assert_relative_eq!(c[4], 8.0 * t.powi(4) - 8.0 * t * t + 1.0, epsilon = 1e-14);
            let mut h = [0.0; 5];
            eval_univariate(Family::HermiteProbabilists, t, &mut h).unwrap();
            assert_relative_eq!(h[3], t * t * t - 3.0 * t, epsilon = 1e-14);
            assert_relative_eq!(h[4], t.powi(4) - 6.0 * t * t + 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn besselj_zero_crossing_and_domain() {
        // first zero of J0
        assert!(bessel_j(0, 2.404825557695773).abs() < 1e-12);
        assert_relative_eq!(bessel_j(0, 0.0), 1.0);
        assert_relative_eq!(bessel_j(1, 0.0), 0.0);
        let mut out = [0.0; 2];
        assert!(matches!(
            eval_univariate(Family::BesselJ, 13.0, &mut out),
            Err(Error::EvaluationDomain(_))
        ));
    }

    #[test]
    fn stream_moments_hand_sums() {
        let b = BasisSpec::product(Family::Monomial, multi_index_set(IndexSetKind::Td, 1.0, 1).unwrap());
        // single node, weight 1 -> eta = row
        let mut s = VecStream::new(1, vec![(vec![0.3], 1.0)]);
        let eta = stream_moments(&b, &mut s).unwrap();
        assert_eq!(eta.values, vec![1.0, 0.3]);
        // nodes (0, 0.5, 1), weights 1/3 -> eta = (1, 0.5)
        let mut s = VecStream::new(
            1,
            vec![(vec![0.0], 1.0 / 3.0), (vec![0.5], 1.0 / 3.0), (vec![1.0], 1.0 / 3.0)],
        );
        let eta = stream_moments(&b, &mut s).unwrap();
        assert_relative_eq!(eta.values[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(eta.values[1], 0.5, epsilon = 1e-15);
        // all-zero weights -> zero vector
        let mut s = VecStream::new(1, vec![(vec![0.1], 0.0), (vec![0.7], 0.0)]);
        let eta = stream_moments(&b, &mut s).unwrap();
        assert_eq!(eta.values, vec![0.0, 0.0]);
    }

    #[test]
    fn stream_moments_order_insensitive() {
        use rand::{Rng, SeedableRng};
        let b = BasisSpec::product(Family::Legendre, multi_index_set(IndexSetKind::Td, 10.0, 2).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = 20_000;
        let nodes: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| (vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], 1.0 / m as f64))
            .collect();
        let mut rev = nodes.clone();
        rev.reverse();
        let a = stream_moments(&b, &mut VecStream::new(2, nodes)).unwrap();
        let c = stream_moments(&b, &mut VecStream::new(2, rev)).unwrap();
        let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = a
            .values
            .iter()
            .zip(&c.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-13 * norm.max(1.0), "diff={diff} norm={norm}");
    }

    #[test]
    fn parse_grammar() {
        let b = parse_basis_spec("legendre:TD:10", 2).unwrap();
        assert_eq!(b.n(), 66);
        let b = parse_basis_spec("besselj:PNORM:25:0.3333333333", 2).unwrap();
        assert_eq!(b.n(), 70);
        assert!(parse_basis_spec("legendre:XX:10", 2).is_err());
        assert!(parse_basis_spec("nope:TD:10", 2).is_err());
    }
}
