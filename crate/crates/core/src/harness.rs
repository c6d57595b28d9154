//! Experiment drivers: stability curves under controlled perturbations,
//! runtime/op-count benchmarks, and moment verification reports. Every
//! record carries its seed so reruns reproduce all numeric fields (wall
//! time aside) exactly.

use crate::basis::{eval_row, stream_moments, BasisSpec};
use crate::error::Result;
use crate::io_stream::{rejection_sampler, DomainSpec, NodeSource, NodeStream, VecSource};
use crate::measure::DiscreteMeasure;
use crate::pruning::PruneResult;
use crate::registry::{strategy_by_name, PruneOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Zero-mean weight displacements on the existing support.
    Weights,
    /// Append a handful of low-mass nodes to the end of the stream.
    AppendFew,
    /// Append as many nodes as the base rule holds.
    AppendMany,
}

impl PerturbationKind {
    pub fn label(&self) -> &'static str {
        match self {
            PerturbationKind::Weights => "weights",
            PerturbationKind::AppendFew => "append_few",
            PerturbationKind::AppendMany => "append_many",
        }
    }

    fn append_count(&self, base_len: usize) -> usize {
        match self {
            PerturbationKind::Weights => 0,
            PerturbationKind::AppendFew => 10,
            PerturbationKind::AppendMany => base_len,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityRecord {
    pub method: String,
    pub kind: &'static str,
    pub delta: f64,
    pub d_tv: f64,
    pub rep: u32,
    pub seed: u64,
    /// Per-cell failure, recorded instead of aborting the grid.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    pub kind: PerturbationKind,
    pub deltas: Vec<f64>,
    pub reps: u32,
    pub methods: Vec<String>,
    pub seed: u64,
    /// Appended LP cost entries are 1 by default; setting this draws them
    /// uniformly at random instead, which destabilizes the LP baseline.
    pub lp_random_appended_cost: bool,
    pub k: usize,
}

/// Prunes a base rule and each perturbed copy with every requested
/// method, then records the aligned total-variation distance between the
/// two pruned rules for each (method, delta, rep) cell.
///
/// Alignment is by global index over the union support: base nodes keep
/// their stream positions in both runs and appended nodes extend them, so
/// weight vectors can be compared entrywise. One LP cost vector is drawn
/// up front and held fixed across the whole grid.
pub fn stability_experiment(
    base: &DiscreteMeasure,
    basis: &BasisSpec,
    domain: &DomainSpec,
    cfg: &StabilityConfig,
) -> Vec<StabilityRecord> {
    let m = base.weights().len();
    let append = cfg.kind.append_count(m);
    let mut cost_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base_cost: Vec<f64> = (0..m).map(|_| cost_rng.gen_range(0.0..1.0)).collect();

    let mut records = Vec::new();
    for method in &cfg.methods {
        // the unperturbed pruned rule, shared by every cell of this method
        let base_pruned = prune_measure(method, base, basis, cfg.k, Some(&base_cost), cfg.seed);
        for &delta in &cfg.deltas {
            for rep in 0..cfg.reps {
                let cell_seed = cell_seed(cfg.seed, delta, rep);
                let record = run_cell(
                    method,
                    base,
                    basis,
                    domain,
                    cfg,
                    &base_pruned,
                    &base_cost,
                    append,
                    delta,
                    rep,
                    cell_seed,
                );
                records.push(record);
            }
        }
    }
    records
}

fn cell_seed(seed: u64, delta: f64, rep: u32) -> u64 {
    // cheap stable mix; cells depend on (delta, rep) but not the method,
    // so all methods see identical perturbed instances
    let mut h = seed ^ delta.to_bits().rotate_left(17);
    h = h.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ u64::from(rep) << 7;
    h.wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    method: &str,
    base: &DiscreteMeasure,
    basis: &BasisSpec,
    domain: &DomainSpec,
    cfg: &StabilityConfig,
    base_pruned: &Result<PruneResult>,
    base_cost: &[f64],
    append: usize,
    delta: f64,
    rep: u32,
    cell_seed: u64,
) -> StabilityRecord {
    let fail = |msg: String| StabilityRecord {
        method: method.to_string(),
        kind: cfg.kind.label(),
        delta,
        d_tv: f64::NAN,
        rep,
        seed: cell_seed,
        error: Some(msg),
    };

    let nu = match base_pruned {
        Ok(r) => r,
        Err(e) => return fail(format!("base prune: {e}")),
    };

    // build the perturbed measure and its cost vector
    let (perturbed, cost) = if cfg.kind == PerturbationKind::Weights {
        match crate::measure::perturb_weights(base, delta, cell_seed) {
            Ok(p) => (p, base_cost.to_vec()),
            Err(e) => return fail(format!("perturb: {e}")),
        }
    } else {
        let mut s = rejection_sampler(domain.clone(), append as u64, cell_seed);
        let mut nodes = Vec::with_capacity(append);
        loop {
            match s.next_node() {
                Ok(Some(node)) => nodes.push(node.coords),
                Ok(None) => break,
                Err(e) => return fail(format!("sample: {e}")),
            }
        }
        let p = match crate::measure::append_nodes(base, nodes, delta) {
            Ok(p) => p,
            Err(e) => return fail(format!("append: {e}")),
        };
        let mut cost = base_cost.to_vec();
        if cfg.lp_random_appended_cost {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed ^ 0xc0f3);
            cost.extend((0..append).map(|_| rng.gen_range(0.0..1.0)));
        } else {
            cost.extend(std::iter::repeat(1.0).take(append));
        }
        (p, cost)
    };

    let nu_tilde = match prune_measure(method, &perturbed, basis, cfg.k, Some(&cost), cell_seed) {
        Ok(r) => r,
        Err(e) => return fail(format!("perturbed prune: {e}")),
    };

    let union_len = base.weights().len() + append;
    let d_tv = scattered_tv(union_len, nu, &nu_tilde);
    StabilityRecord {
        method: method.to_string(),
        kind: cfg.kind.label(),
        delta,
        d_tv,
        rep,
        seed: cell_seed,
        error: None,
    }
}

/// Runs one registered method on an in-memory measure.
pub fn prune_measure(
    method: &str,
    measure: &DiscreteMeasure,
    basis: &BasisSpec,
    k: usize,
    lp_cost: Option<&[f64]>,
    seed: u64,
) -> Result<PruneResult> {
    let source = VecSource::from_measure(measure);
    let opts = PruneOptions {
        k,
        seed,
        lp_cost: lp_cost.map(|c| c.to_vec()),
        max_dense_nodes: measure.weights().len().max(1),
        ..Default::default()
    };
    strategy_by_name(method)?.prune(&source, basis, &opts)
}

/// Total-variation distance between two pruned rules whose global indices
/// address a shared stream of `len` nodes.
pub fn scattered_tv(len: usize, a: &PruneResult, b: &PruneResult) -> f64 {
    let mut wa = vec![0.0f64; len];
    let mut wb = vec![0.0f64; len];
    for (&g, &w) in a.kept_global.iter().zip(&a.kept_weights) {
        wa[g as usize - 1] = w;
    }
    for (&g, &w) in b.kept_global.iter().zip(&b.kept_weights) {
        wb[g as usize - 1] = w;
    }
    let mass: f64 = wa.iter().sum::<f64>() + wb.iter().sum::<f64>();
    let diff: f64 = wa.iter().zip(&wb).map(|(x, y)| (x - y).abs()).sum();
    diff / mass
}

pub fn write_stability_csv(path: impl AsRef<Path>, records: &[StabilityRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "method,kind,delta,d_tv,rep,seed,error")?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.method,
            r.kind,
            r.delta,
            r.d_tv,
            r.rep,
            r.seed,
            r.error.as_deref().unwrap_or("")
        )?;
    }
    f.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// timing benchmark

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<String>,
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub reps: u32,
    pub seed: u64,
    /// Dense methods skip cells above this size instead of thrashing.
    pub dense_cap: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec!["gscsp".into()],
            m_grid: vec![10_000],
            n_grid: vec![8],
            reps: 3,
            seed: 0,
            dense_cap: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub method: String,
    pub m: usize,
    pub n: usize,
    /// Mean wall time over reps, seconds.
    pub seconds: f64,
    pub iterations: Option<u64>,
    pub startup_ops: Option<u64>,
    pub max_iteration_ops: Option<u64>,
    pub total_ops: Option<u64>,
    pub seed: u64,
    pub skipped: Option<String>,
}

/// Times each method on synthetic instances with iid uniform (0,1)
/// matrix entries and weights; one record per (method, M, N) cell, wall
/// time averaged over reps. All methods see the same instances.
pub fn timing_benchmark(cfg: &BenchConfig) -> Vec<BenchRecord> {
    let mut records = Vec::new();
    if cfg.reps == 0 {
        return records;
    }
    for &n in &cfg.n_grid {
        for &m in &cfg.m_grid {
            for method in &cfg.methods {
                records.push(bench_cell(cfg, method, m, n));
            }
        }
    }
    records
}

fn bench_cell(cfg: &BenchConfig, method: &str, m: usize, n: usize) -> BenchRecord {
    let mut record = BenchRecord {
        method: method.to_string(),
        m,
        n,
        seconds: 0.0,
        iterations: None,
        startup_ops: None,
        max_iteration_ops: None,
        total_ops: None,
        seed: cfg.seed,
        skipped: None,
    };
    let streaming = match strategy_by_name(method) {
        Ok(s) => s.streaming(),
        Err(e) => {
            record.skipped = Some(e.to_string());
            return record;
        }
    };
    if !streaming && m > cfg.dense_cap {
        record.skipped = Some(format!("dense method capped at {} nodes", cfg.dense_cap));
        return record;
    }
    if method == "csp" && (m * n) * m > 4_000_000_000 {
        record.skipped = Some("csp runtime is quadratic in M".to_string());
        return record;
    }
    let mut total = 0.0;
    for rep in 0..cfg.reps {
        let seed = cell_seed(cfg.seed, (m as f64) * (n as f64), rep);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let measure = DiscreteMeasure::new(n, nodes, weights).expect("valid instance");
        // the identity "basis": row j of the matrix is node j's coordinates
        let basis = BasisSpec::Custom {
            dim: n,
            n,
            eval: std::sync::Arc::new(|x: &[f64], out: &mut [f64]| out.copy_from_slice(x)),
        };
        let start = Instant::now();
        let out = prune_measure(method, &measure, &basis, 1, None, seed);
        total += start.elapsed().as_secs_f64();
        match out {
            Ok(r) => {
                record.iterations = Some(r.iterations);
                if method == "gscsp" {
                    record.startup_ops = Some(r.diagnostics.startup_ops);
                    record.max_iteration_ops = Some(r.diagnostics.max_iteration_ops);
                    record.total_ops = Some(r.diagnostics.total_ops);
                }
            }
            Err(e) => {
                record.skipped = Some(e.to_string());
                return record;
            }
        }
    }
    record.seconds = total / cfg.reps as f64;
    record
}

pub fn write_bench_csv(path: impl AsRef<Path>, records: &[BenchRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "method,m,n,seconds,iterations,startup_ops,max_iteration_ops,total_ops,seed,skipped"
    )?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.m,
            r.n,
            r.seconds,
            opt(r.iterations),
            opt(r.startup_ops),
            opt(r.max_iteration_ops),
            opt(r.total_ops),
            r.seed,
            r.skipped.as_deref().unwrap_or("")
        )?;
    }
    f.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// moment verification

#[derive(Debug, Clone)]
pub struct MomentReport {
    /// Relative residual between the stream moments and the pruned rule's.
    pub residual: f64,
    pub kept: usize,
    pub min_weight: f64,
    pub max_weight: f64,
    /// Set when the residual exceeds 1e-8 (near rank deficiency or drift).
    pub flagged: bool,
}

/// Re-opens the source twice: once to accumulate the reference moments,
/// once to look up the coordinates of the kept nodes.
pub fn moment_report(
    result: &PruneResult,
    basis: &BasisSpec,
    source: &dyn NodeSource,
) -> Result<MomentReport> {
    let eta = {
        let mut s = source.open()?;
        stream_moments(basis, s.as_mut())?.values
    };
    let kept_nodes = collect_kept_nodes(source, &result.kept_global)?;
    let n = basis.n();
    let mut pruned = vec![0.0f64; n];
    let mut row = vec![0.0f64; n];
    for (coords, &w) in kept_nodes.iter().zip(&result.kept_weights) {
        eval_row(basis, coords, &mut row)?;
        for j in 0..n {
            pruned[j] += w * row[j];
        }
    }
    let norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = eta
        .iter()
        .zip(&pruned)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let residual = if norm > 0.0 { diff / norm } else { diff };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &w in &result.kept_weights {
        lo = lo.min(w);
        hi = hi.max(w);
    }
    Ok(MomentReport {
        residual,
        kept: result.kept_weights.len(),
        min_weight: if lo.is_finite() { lo } else { 0.0 },
        max_weight: if hi.is_finite() { hi } else { 0.0 },
        flagged: residual > 1e-8,
    })
}

/// Scans the source once and returns the coordinates of the requested
/// global indices, in the same order as `kept_global` (which must be
/// ascending).
pub fn collect_kept_nodes(source: &dyn NodeSource, kept_global: &[u64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(kept_global.len());
    let mut s = source.open()?;
    let mut want = kept_global.iter().copied().peekable();
    while let Some(node) = s.next_node()? {
        match want.peek() {
            None => break,
            Some(&g) if g == node.global_index => {
                out.push(node.coords);
                want.next();
            }
            _ => {}
        }
    }
    if out.len() != kept_global.len() {
        return Err(crate::error::Error::InvalidArgument(format!(
            "source ended before locating {} of {} kept nodes",
            kept_global.len() - out.len(),
            kept_global.len()
        )));
    }
    Ok(out)
}
