//! Runtime-selectable pruning strategies. Each method implements
//! `PruneStrategy` and is looked up by name, so the CLI and harness can
//! treat streaming and dense pruners uniformly.

use crate::baselines::{lp_prune, nnls_prune, LpProblem};
use crate::basis::{stream_moments, BasisSpec};
use crate::error::{Error, Result};
use crate::io_stream::NodeSource;
use crate::pruning::{
    csp, scsp, BasisRowStream, KernelBackend, PruneResult, RowStream, SigSelectPolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct PruneOptions {
    /// Window slack for the streaming methods (window holds N + k rows).
    pub k: usize,
    pub sigselect: SigSelectPolicy,
    /// Seed for methods with random internals (the LP cost vector).
    pub seed: u64,
    /// Dense methods refuse inputs larger than this.
    pub max_dense_nodes: usize,
    /// Fixed LP cost vector; overrides the seeded random one.
    pub lp_cost: Option<Vec<f64>>,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions {
            k: 1,
            sigselect: SigSelectPolicy::MinAbsC,
            seed: 0,
            max_dense_nodes: 100_000,
            lp_cost: None,
        }
    }
}

pub trait PruneStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether the method runs in bounded memory over a single pass.
    fn streaming(&self) -> bool;
    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult>;
}

pub const METHOD_NAMES: [&str; 5] = ["gscsp", "scsp", "csp", "nnls", "lp"];

/// Looks a strategy up by its registered name.
pub fn strategy_by_name(name: &str) -> Result<Box<dyn PruneStrategy>> {
    match name {
        "gscsp" => Ok(Box::new(Gscsp)),
        "scsp" => Ok(Box::new(Scsp)),
        "csp" => Ok(Box::new(Csp)),
        "nnls" => Ok(Box::new(Nnls)),
        "lp" => Ok(Box::new(Lp)),
        other => Err(Error::UnknownMethod(other.to_string())),
    }
}

struct Gscsp;
struct Scsp;
struct Csp;
struct Nnls;
struct Lp;

fn run_streaming(
    source: &dyn NodeSource,
    basis: &BasisSpec,
    opts: &PruneOptions,
    backend: KernelBackend,
) -> Result<PruneResult> {
    let mut stream = source.open()?;
    let mut rows = BasisRowStream::new(basis, stream.as_mut())?;
    scsp(&mut rows, opts.k, &opts.sigselect, backend)
}

impl PruneStrategy for Gscsp {
    fn name(&self) -> &'static str {
        "gscsp"
    }

    fn streaming(&self) -> bool {
        true
    }

    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult> {
        run_streaming(source, basis, opts, KernelBackend::GivensWindow)
    }
}

impl PruneStrategy for Scsp {
    fn name(&self) -> &'static str {
        "scsp"
    }

    fn streaming(&self) -> bool {
        true
    }

    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult> {
        run_streaming(source, basis, opts, KernelBackend::DenseQr)
    }
}

/// Materialized M x N matrix plus weights for the dense methods.
pub struct DenseInput {
    pub rows: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_cols: usize,
}

/// Evaluates the full matrix in memory; refuses streams longer than the
/// configured dense cap.
pub fn materialize(
    source: &dyn NodeSource,
    basis: &BasisSpec,
    max_nodes: usize,
) -> Result<DenseInput> {
    let n = basis.n();
    let mut stream = source.open()?;
    let mut rows = BasisRowStream::new(basis, stream.as_mut())?;
    let mut mat = Vec::new();
    let mut weights = Vec::new();
    let mut buf = vec![0.0; n];
    while let Some((w, _)) = rows.next_row(&mut buf)? {
        if weights.len() >= max_nodes {
            return Err(Error::InvalidArgument(format!(
                "dense method input exceeds {max_nodes} nodes; use a streaming method"
            )));
        }
        mat.extend_from_slice(&buf);
        weights.push(w);
    }
    Ok(DenseInput { rows: mat, weights, n_cols: n })
}

impl PruneStrategy for Csp {
    fn name(&self) -> &'static str {
        "csp"
    }

    fn streaming(&self) -> bool {
        false
    }

    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult> {
        let dense = materialize(source, basis, opts.max_dense_nodes)?;
        csp(&dense.rows, dense.n_cols, &dense.weights, &opts.sigselect)
    }
}

impl PruneStrategy for Nnls {
    fn name(&self) -> &'static str {
        "nnls"
    }

    fn streaming(&self) -> bool {
        false
    }

    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult> {
        let dense = materialize(source, basis, opts.max_dense_nodes)?;
        let mut stream = source.open()?;
        let eta = stream_moments(basis, stream.as_mut())?;
        nnls_prune(&dense.rows, dense.n_cols, &eta.values, 1e-12)
    }
}

impl PruneStrategy for Lp {
    fn name(&self) -> &'static str {
        "lp"
    }

    fn streaming(&self) -> bool {
        false
    }

    fn prune(
        &self,
        source: &dyn NodeSource,
        basis: &BasisSpec,
        opts: &PruneOptions,
    ) -> Result<PruneResult> {
        let dense = materialize(source, basis, opts.max_dense_nodes)?;
        let mut stream = source.open()?;
        let eta = stream_moments(basis, stream.as_mut())?;
        let m = dense.weights.len();
        let cost = match &opts.lp_cost {
            Some(c) if c.len() == m => c.clone(),
            Some(c) => {
                return Err(Error::InvalidArgument(format!(
                    "lp cost length {} does not match node count {m}",
                    c.len()
                )))
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
            }
        };
        lp_prune(&LpProblem {
            vandermonde: dense.rows,
            n_cols: dense.n_cols,
            eta: eta.values,
            cost,
            feasible_start: Some(dense.weights),
        })
    }
}
