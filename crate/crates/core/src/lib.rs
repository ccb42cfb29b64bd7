//! Ensemble analysis for graph-based districting.
//!
//! * [`graph`]: precinct dual graph, validation, county merging.
//! * [`partition`]: plans, contiguity and balance checks, seed plans.
//! * [`chain`]: county-weighted ReCom and the chain driver.
//! * [`metrics`]: per-plan partisan, split, perimeter and competitiveness measures.
//! * [`diagnostics`]: KS statistics, autocorrelation and sample-size criteria.
//! * [`analysis`]: ensemble summaries built from metric streams.
//!
//! Batch helpers run on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise; see [`exec`].

pub mod analysis;
pub mod chain;
pub mod diagnostics;
pub mod exec;
pub mod graph;
pub mod metrics;
pub mod partition;
pub mod records;
pub mod synthetic;

pub use chain::{run_chain, run_chains, Chain, ChainConfig, ChainError};
pub use exec::Execution;
pub use graph::{load_graph, save_graph, DualGraph};
pub use metrics::{compute_record, MetricRecord, MetricsSpec};
pub use partition::{seed_plan, BalanceSpec, Plan};
