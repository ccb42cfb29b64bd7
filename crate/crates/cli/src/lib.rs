//! Command implementations behind the `ensemble` binary. Each command writes
//! its report to the supplied writer and returns the process exit status.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ensemble_core::analysis::{summarize_ensemble, write_csv_tables, ChainColumns, EnactedMetrics, EnactedShares};
use ensemble_core::chain::chain_rng;
use ensemble_core::diagnostics::{
    default_grid, sample_size_report, DiagnosticsConfig, MeasureSeries, SampleSizeReport,
};
use ensemble_core::graph::{self, GraphFile};
use ensemble_core::metrics::{CompetitiveBand, SwingSpec};
use ensemble_core::partition::{self, load_plan, max_deviation, save_plan};
use ensemble_core::records::{read_measure_series, write_record, Measure, RecordReader};
use ensemble_core::synthetic::county_grid;
use ensemble_core::{compute_record, load_graph, save_graph, BalanceSpec, Chain, ChainConfig, Execution, MetricsSpec};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Bad flag combinations detected after parsing; exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser, Debug)]
#[command(
    name = "ensemble",
    version,
    about = "County-weighted ReCom ensembles and their diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a graph file against every invariant.
    Validate(ValidateArgs),
    /// Draw a balanced, contiguous seed plan.
    Seed(SeedArgs),
    /// Run one chain and stream a metric record per step.
    Run(RunArgs),
    /// Summarize metric streams into tables and an enacted-plan overlay.
    Analyze(AnalyzeArgs),
    /// Sample-size diagnostics across independent chains.
    Diagnose(DiagnoseArgs),
    /// Contract small counties, or an explicit node set, into single nodes.
    Merge(MergeArgs),
    /// Write a synthetic grid graph with rectangular counties.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    pub graph: PathBuf,
}

#[derive(Args, Debug)]
pub struct SeedArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub districts: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Seed plan CSV (`node_id,district`).
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub steps: u64,
    /// County weight w: intra-county edges draw from U[0, w].
    #[arg(long, default_value_t = 20.0)]
    pub weight: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    /// RNG stream; lets chains sharing a seed stay independent.
    #[arg(long, default_value_t = 0)]
    pub chain_index: u64,
    /// Comma-separated election ids (default: all in the graph).
    #[arg(long, value_delimiter = ',')]
    pub elections: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub snapshot_every: u64,
    /// Write a plan CSV every `--snapshot-every` steps into this directory.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// One JSONL file per chain.
    #[arg(long, num_args = 1.., required = true)]
    pub metrics: Vec<PathBuf>,
    /// Enacted plan CSV; needs `--graph`.
    #[arg(long, requires = "graph")]
    pub enacted_plan: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Enacted district shares as JSON, instead of plan + graph.
    #[arg(long, conflicts_with = "enacted_plan")]
    pub enacted_shares: Option<PathBuf>,
    /// `ELECTION=SHARE`: statewide share used for the enacted plan's swing.
    #[arg(long, value_parser = parse_swing)]
    pub swing: Vec<(String, f64)>,
    /// Summary JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// One JSONL file per chain; at least two.
    #[arg(long, num_args = 1.., required = true)]
    pub metrics: Vec<PathBuf>,
    /// e.g. `gov:rank1`, `gov:seats`, `counties_split` (default: every
    /// ranked share and seat count).
    #[arg(long, value_delimiter = ',')]
    pub measure: Vec<String>,
    /// Chain lengths to evaluate (default: 47 points from len/20 to len).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    /// Smallest grid length used in the fits (default: first grid point).
    #[arg(long)]
    pub fit_min: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub target: f64,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Every pairwise distance as `measure,n,d`.
    #[arg(long)]
    pub points_csv: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Contract every county with population below this.
    #[arg(long, default_value_t = 0)]
    pub threshold: u64,
    /// Comma-separated node ids to contract into one node.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Counties per side; the grid has `blocks²` counties.
    #[arg(long, default_value_t = 2)]
    pub county_blocks: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_swing(s: &str) -> Result<(String, f64), String> {
    let (e, v) = s.rsplit_once('=').ok_or("expected ELECTION=SHARE")?;
    let v: f64 = v.parse().map_err(|_| format!("bad share \"{v}\""))?;
    Ok((e.to_string(), v))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Validate(a) => cmd_validate(&a, out),
        Command::Seed(a) => cmd_seed(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Diagnose(a) => cmd_diagnose(&a, out),
        Command::Merge(a) => cmd_merge(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

#[derive(Serialize)]
struct Violation {
    kind: &'static str,
    message: String,
}

#[derive(Serialize)]
struct ValidationReport {
    format_version: u32,
    valid: bool,
    violations: Vec<Violation>,
}

/// Prints a JSON violation list; exit 0 iff the graph is valid.
pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let errors = match File::open(&args.graph) {
        Err(e) => vec![graph::GraphError::Io(e)],
        Ok(f) => match serde_json::from_reader::<_, GraphFile>(std::io::BufReader::new(f)) {
            Err(e) => vec![graph::GraphError::Parse(e)],
            Ok(file) => graph::check(&file),
        },
    };
    let report = ValidationReport {
        format_version: REPORT_FORMAT_VERSION,
        valid: errors.is_empty(),
        violations: errors
            .iter()
            .map(|e| Violation {
                kind: e.kind(),
                message: e.to_string(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(if report.valid { 0 } else { 1 })
}

pub fn cmd_seed(args: &SeedArgs, out: &mut dyn Write) -> Result<i32> {
    let graph = load_graph(&args.graph).with_context(|| format!("loading {}", args.graph.display()))?;
    let spec = BalanceSpec::for_graph(&graph, args.districts, args.tol)?;
    let mut rng = chain_rng(args.rng_seed, 0);
    let plan = partition::seed_plan(&graph, args.districts, &spec, &mut rng)?;
    save_plan(&graph, &plan, &args.out)?;
    writeln!(out, "max_deviation {:.6}", max_deviation(&plan, &spec))?;
    for (d, p) in plan.district_populations().iter().enumerate() {
        writeln!(out, "district {d} population {p}")?;
    }
    Ok(0)
}

/// One JSONL line per step. Byte-identical for identical arguments.
pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let graph = load_graph(&args.graph).with_context(|| format!("loading {}", args.graph.display()))?;
    let seed = load_plan(&graph, &args.plan, None).with_context(|| format!("loading {}", args.plan.display()))?;
    let metrics = MetricsSpec::for_graph(&graph, args.elections.as_deref())?;
    let cfg = ChainConfig {
        chain_index: args.chain_index,
        ..ChainConfig::new(seed.k(), args.weight, args.tol, args.steps, args.rng_seed)
    };
    if args.snapshot_every == 0 {
        return Err(UsageError("--snapshot-every must be positive".into()).into());
    }
    if let Some(dir) = &args.snapshot_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut chain = Chain::new(&graph, seed, cfg, metrics)?;
    let mut w = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    for _ in 0..args.steps {
        let rec = chain.next_record()?;
        write_record(&mut w, &rec)?;
        if let Some(dir) = &args.snapshot_dir {
            if rec.step % args.snapshot_every == 0 {
                save_plan(&graph, chain.plan(), dir.join(format!("plan_{:09}.csv", rec.step)))?;
            }
        }
    }
    w.flush()?;
    writeln!(out, "wrote {} records to {}", args.steps, args.out.display())?;
    Ok(0)
}

fn swing_overrides(pairs: &[(String, f64)]) -> Result<BTreeMap<String, SwingSpec>> {
    pairs
        .iter()
        .map(|(e, s)| Ok((e.clone(), SwingSpec::new(*s)?)))
        .collect()
}

fn enacted_metrics(args: &AnalyzeArgs) -> Result<Option<EnactedMetrics>> {
    let overrides = swing_overrides(&args.swing)?;
    if let Some(path) = &args.enacted_shares {
        let mut shares: EnactedShares =
            serde_json::from_reader(File::open(path)?).with_context(|| format!("reading {}", path.display()))?;
        for (e, s) in &overrides {
            let entry = shares
                .elections
                .get_mut(e)
                .with_context(|| format!("--swing names unknown election \"{e}\""))?;
            entry.statewide_share = Some(s.statewide_share);
            entry.statewide_votes = None;
        }
        return Ok(Some(shares.to_metrics(CompetitiveBand::default())?));
    }
    let (Some(plan_path), Some(graph_path)) = (&args.enacted_plan, &args.graph) else {
        return Ok(None);
    };
    let graph = load_graph(graph_path)?;
    let plan = load_plan(&graph, plan_path, None)?;
    let mut spec = MetricsSpec::for_graph(&graph, None)?;
    for e in &mut spec.elections {
        if let Some(s) = overrides.get(&e.name) {
            e.swing = *s;
        }
    }
    Ok(Some(EnactedMetrics::from_record(&compute_record(
        &graph, &plan, &spec, 0,
    )?)))
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let chains = args
        .metrics
        .iter()
        .map(|p| ChainColumns::load(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = chains.iter().position(ChainColumns::is_empty) {
        bail!("{} holds no metric records", args.metrics[i].display());
    }
    let enacted = enacted_metrics(args)?;
    let summary = summarize_ensemble(&chains, enacted.as_ref())?;
    if let Some(dir) = &args.csv_dir {
        write_csv_tables(&summary, dir)?;
    }
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, &summary)?;
            writeln!(w)?;
            w.flush()?;
            writeln!(out, "summarized {} plans from {} chains", summary.plans, summary.chains)?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *out, &summary)?;
            writeln!(out)?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
pub struct DiagnosticsOutput {
    pub format_version: u32,
    pub chains: usize,
    pub chain_length: usize,
    pub config: DiagnosticsConfig,
    /// Measures constant across every chain.
    pub skipped: Vec<String>,
    #[serde(flatten)]
    pub report: SampleSizeReport,
}

pub fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> Result<i32> {
    if args.metrics.len() < 2 {
        return Err(UsageError(format!(
            "diagnose needs at least 2 chains (got {}): the KS criterion compares chains pairwise",
            args.metrics.len()
        ))
        .into());
    }
    let measures: Vec<Measure> = if args.measure.is_empty() {
        let first = RecordReader::open(&args.metrics[0])?
            .next()
            .with_context(|| format!("{} holds no metric records", args.metrics[0].display()))??;
        Measure::defaults_for(&first)
    } else {
        args.measure.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };

    let mut per_measure: Vec<Vec<Vec<f64>>> = vec![Vec::new(); measures.len()];
    for path in &args.metrics {
        let series = read_measure_series(path, &measures).with_context(|| format!("reading {}", path.display()))?;
        for (slot, s) in per_measure.iter_mut().zip(series) {
            slot.push(s);
        }
    }
    let shortest = per_measure
        .first()
        .and_then(|c| c.iter().map(Vec::len).min())
        .unwrap_or(0);
    if shortest == 0 {
        bail!("a metrics file holds no records");
    }

    let mut cfg = DiagnosticsConfig::for_length(shortest);
    if let Some(grid) = &args.grid {
        cfg.grid = grid.clone();
        cfg.fit_min_n = grid.iter().copied().min().unwrap_or(1);
    } else {
        cfg.grid = default_grid(shortest);
    }
    if let Some(m) = args.fit_min {
        cfg.fit_min_n = m;
    }
    cfg.target = args.target;

    // A measure that never moves has no autocorrelation and no KS spread;
    // it is listed as skipped rather than failing the whole report.
    let mut skipped = Vec::new();
    let mut series = Vec::new();
    for (m, chains) in measures.iter().zip(per_measure) {
        let first = chains[0][0];
        if chains.iter().all(|c| c.iter().all(|&v| v == first)) {
            skipped.push(m.to_string());
        } else {
            series.push(MeasureSeries {
                name: m.to_string(),
                chains,
            });
        }
    }
    if series.is_empty() {
        bail!(
            "every selected measure is constant across all chains: {}",
            skipped.join(", ")
        );
    }
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let report = sample_size_report(&series, &cfg, exec)?;

    if let Some(path) = &args.points_csv {
        write_points_csv(path, &report)?;
    }
    let output = DiagnosticsOutput {
        format_version: REPORT_FORMAT_VERSION,
        chains: args.metrics.len(),
        chain_length: shortest,
        config: cfg,
        skipped,
        report,
    };
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, &output)?;
            writeln!(w)?;
            w.flush()?;
            writeln!(out, "recommended_n {}", output.report.recommended_n)?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *out, &output)?;
            writeln!(out)?;
        }
    }
    Ok(0)
}

fn write_points_csv(path: &Path, report: &SampleSizeReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "measure,n,d")?;
    for (name, m) in &report.per_measure {
        for p in &m.points {
            for d in &p.values {
                writeln!(w, "{name},{},{d}", p.n)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_merge(args: &MergeArgs, out: &mut dyn Write) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let mut merged = graph.merge_small_counties(args.threshold);
    if !args.nodes.is_empty() {
        merged = merged.merge_nodes(&args.nodes)?;
    }
    save_graph(&merged, &args.out)?;
    writeln!(out, "{} nodes -> {} nodes", graph.node_count(), merged.node_count())?;
    Ok(0)
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<i32> {
    if args.rows == 0 || args.cols == 0 || args.county_blocks == 0 {
        return Err(UsageError("--rows, --cols and --county-blocks must be positive".into()).into());
    }
    let g = county_grid(args.rows, args.cols, args.county_blocks);
    save_graph(&g, &args.out)?;
    writeln!(
        out,
        "{} nodes, {} edges, {} counties",
        g.node_count(),
        g.edge_count(),
        g.counties().len()
    )?;
    Ok(0)
}
