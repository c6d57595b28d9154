//! Command-line driver: prune rules from files or generators, perturb
//! rules for stability studies, compare rules, and run benchmarks.

use clap::{Parser, Subcommand};
use quadprune::basis::parse_basis_spec;
use quadprune::error::{Error, Result};
use quadprune::harness::{
    collect_kept_nodes, moment_report, timing_benchmark, write_bench_csv, BenchConfig,
};
use quadprune::io_stream::{
    read_rule_csv, write_rule_csv, BinarySource, CsvSource, DomainSpec, GeneratorSource,
    Indicator, NodeSource,
};
use quadprune::measure::{
    append_nodes, perturb_weights, tv_distance, DiscreteMeasure, SupportAlignment,
};
use quadprune::pruning::SigSelectPolicy;
use quadprune::registry::{strategy_by_name, PruneOptions};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "quadprune",
    about = "Prune large positive quadrature rules to at most N nodes while \
             exactly preserving N moments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune an input rule down to at most dim(V) nodes.
    Prune {
        /// Rule source: a .csv / .bin path, or gen:SHAPE[:d]:M
        /// (shapes: disk, box:<d>, annulus, shell).
        #[arg(long)]
        input: String,
        /// Basis grammar family:KIND:r[:p], e.g. legendre:TD:10 or
        /// besselj:PNORM:25:0.3333333333333333.
        #[arg(long)]
        basis: String,
        #[arg(long, value_parser = ["gscsp", "scsp", "csp", "nnls", "lp"])]
        method: String,
        /// Window slack for the streaming methods.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "minabs", value_parser = ["minabs", "plus", "minus"])]
        sigselect: String,
        /// Re-open the source after pruning and report the independent
        /// moment residual.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Node cap for the dense methods (csp, nnls, lp).
        #[arg(long, default_value_t = 100_000)]
        max_dense: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Apply a controlled total-variation perturbation to a rule.
    Perturb {
        #[arg(long)]
        input: String,
        #[arg(long, value_parser = ["weights", "append"])]
        mode: String,
        /// Target total-variation distance from the input rule.
        #[arg(long)]
        tv: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of appended nodes in append mode.
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the distance between two rule files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "tv", value_parser = ["tv"])]
        metric: String,
        /// coords matches nodes by exact coordinates; index matches by
        /// position in the file.
        #[arg(long, default_value = "coords", value_parser = ["coords", "index"])]
        align: String,
    },
    /// Time methods on synthetic instances over (M, N) grids.
    Bench {
        /// Comma-separated method names.
        #[arg(long, default_value = "gscsp")]
        method: String,
        #[arg(long, default_value = "8")]
        n_grid: String,
        #[arg(long, default_value = "10000")]
        m_grid: String,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Prune {
            input,
            basis,
            method,
            k,
            sigselect,
            verify,
            seed,
            max_dense,
            output,
        } => {
            let source = resolve_input(&input, seed)?;
            let basis = parse_basis_spec(&basis, source.dim())?;
            let opts = PruneOptions {
                k,
                sigselect: match sigselect.as_str() {
                    "plus" => SigSelectPolicy::ForcePlus,
                    "minus" => SigSelectPolicy::ForceMinus,
                    _ => SigSelectPolicy::MinAbsC,
                },
                seed,
                max_dense_nodes: max_dense,
                lp_cost: None,
            };
            let strategy = strategy_by_name(&method)?;
            let result = strategy.prune(source.as_ref(), &basis, &opts)?;
            let nodes = collect_kept_nodes(source.as_ref(), &result.kept_global)?;
            let rule =
                DiscreteMeasure::new_strict(source.dim(), nodes, result.kept_weights.clone())?;
            write_rule_csv(&output, &rule)?;
            println!(
                "kept {} nodes in {} iterations -> {}",
                rule.weights().len(),
                result.iterations,
                output.display()
            );
            if verify {
                let report = moment_report(&result, &basis, source.as_ref())?;
                println!(
                    "verify: residual {:.3e} min_w {:.3e} max_w {:.3e}{}",
                    report.residual,
                    report.min_weight,
                    report.max_weight,
                    if report.flagged { " FLAGGED" } else { "" }
                );
            }
            Ok(())
        }
        Command::Perturb { input, mode, tv, seed, count, output } => {
            let source = resolve_input(&input, seed)?;
            let rule = materialize_measure(source.as_ref())?;
            let perturbed = match mode.as_str() {
                "weights" => perturb_weights(&rule, tv, seed)?,
                _ => {
                    // appended nodes are sampled uniformly over the
                    // bounding box of the existing support
                    let d = rule.dim();
                    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
                    for node in rule.nodes() {
                        for (j, &x) in node.iter().enumerate() {
                            bounds[j].0 = bounds[j].0.min(x);
                            bounds[j].1 = bounds[j].1.max(x);
                        }
                    }
                    for b in bounds.iter_mut() {
                        if b.0 >= b.1 {
                            *b = (b.0 - 0.5, b.0 + 0.5);
                        }
                    }
                    let domain = DomainSpec { bounds, indicator: Indicator::Box };
                    let gen = GeneratorSource { domain, count: count as u64, seed };
                    let mut stream = gen.open()?;
                    let mut nodes = Vec::with_capacity(count);
                    while let Some(node) = stream.next_node()? {
                        nodes.push(node.coords);
                    }
                    append_nodes(&rule, nodes, tv)?
                }
            };
            write_rule_csv(&output, &perturbed)?;
            println!(
                "wrote {} nodes (target tv {tv}) -> {}",
                perturbed.weights().len(),
                output.display()
            );
            Ok(())
        }
        Command::Compare { a, b, metric: _, align } => {
            let da = csv_dim(&a)?;
            let ra = read_rule_csv(&a, da)?;
            let rb = read_rule_csv(&b, csv_dim(&b)?)?;
            let alignment = match align.as_str() {
                "index" => SupportAlignment::ByIndex,
                _ => SupportAlignment::ByCoordinateExact,
            };
            let d = tv_distance(&ra, &rb, alignment)?;
            println!("{d}");
            Ok(())
        }
        Command::Bench { method, n_grid, m_grid, reps, seed, output } => {
            let cfg = BenchConfig {
                methods: method.split(',').map(str::to_string).collect(),
                m_grid: parse_grid(&m_grid)?,
                n_grid: parse_grid(&n_grid)?,
                reps,
                seed,
                dense_cap: 100_000,
            };
            let records = timing_benchmark(&cfg);
            write_bench_csv(&output, &records)?;
            println!("wrote {} records -> {}", records.len(), output.display());
            Ok(())
        }
    }
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad grid entry '{t}'")))
        })
        .collect()
}

/// Maps an `--input` argument to a re-openable node source.
fn resolve_input(input: &str, seed: u64) -> Result<Box<dyn NodeSource>> {
    if let Some(spec) = input.strip_prefix("gen:") {
        return generator_from_spec(spec, seed);
    }
    if input.ends_with(".bin") {
        return Ok(Box::new(BinarySource::new(input)?));
    }
    if input.ends_with(".csv") {
        let dim = csv_dim(input)?;
        return Ok(Box::new(CsvSource::new(input, dim)));
    }
    Err(Error::InvalidArgument(format!(
        "input '{input}' is not a .csv/.bin path or a gen: spec"
    )))
}

/// `SHAPE[:d]:M` with shapes disk (2D unit disk), box:<d> (unit box),
/// annulus (2D, radii 0.5..1), shell (3D torus-like shell).
fn generator_from_spec(spec: &str, seed: u64) -> Result<Box<dyn NodeSource>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("bad generator spec 'gen:{spec}'"));
    let count = |s: &str| -> Result<u64> { s.parse().map_err(|_| bad()) };
    let domain = match (parts.first().copied(), parts.len()) {
        (Some("disk"), 2) => DomainSpec::unit_disk(),
        (Some("annulus"), 2) => DomainSpec {
            bounds: vec![(-1.0, 1.0); 2],
            indicator: Indicator::Annulus {
                center: vec![0.0, 0.0],
                r_inner: 0.5,
                r_outer: 1.0,
            },
        },
        (Some("shell"), 2) => DomainSpec {
            bounds: vec![(-1.0, 1.0), (-1.0, 1.0), (-0.5, 0.5)],
            indicator: Indicator::Shell { major: 0.7, minor: 0.25 },
        },
        (Some("box"), 3) => {
            let d: usize = parts[1].parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            DomainSpec::unit_box(d)
        }
        _ => return Err(bad()),
    };
    let m = count(parts.last().unwrap())?;
    Ok(Box::new(GeneratorSource { domain, count: m, seed }))
}

/// Infers the dimension of a rule CSV from its `x1,...,xd,w` header.
fn csv_dim(path: impl AsRef<std::path::Path>) -> Result<usize> {
    use std::io::BufRead;
    let f = std::fs::File::open(path.as_ref())?;
    let mut header = String::new();
    std::io::BufReader::new(f).read_line(&mut header)?;
    let cols = header.trim().split(',').count();
    if cols < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be x1,...,xd,w".to_string(),
        });
    }
    Ok(cols - 1)
}

/// Loads every node of a source into memory (perturbation works on whole
/// measures, not streams).
fn materialize_measure(source: &dyn NodeSource) -> Result<DiscreteMeasure> {
    let mut stream = source.open()?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    while let Some(node) = stream.next_node()? {
        nodes.push(node.coords);
        weights.push(node.weight);
    }
    DiscreteMeasure::new_strict(source.dim(), nodes, weights)
}
