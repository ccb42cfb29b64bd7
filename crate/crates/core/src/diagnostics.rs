//! Convergence and sample-size diagnostics for ensembles.
//!
//! Two criteria decide whether chains of length n are long enough:
//!
//! * between chains: the expected two-sample KS distance `E(D_{n,n})` between
//!   independent chains, modelled as `a / sqrt(n)` and fitted by least
//!   squares, must be at most a target (0.01 by default);
//! * within a chain: n must be a large multiple (1000 by default) of the lag
//!   at which the autocorrelation first drops to 0.01 or below.
//!
//! Quantile fits `b / sqrt(n)` and `c / sqrt(n)` through the 5% and 95%
//! sample quantiles of the pairwise distances give a 90% prediction band.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::exec::{map_indexed, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("lag {lag} needs a series longer than {len}")]
    LagTooLong { lag: usize, len: usize },
    #[error("autocorrelation never fell to {threshold} within {max_lag} lags")]
    NonDecaying { threshold: f64, max_lag: usize },
    #[error("curve fit needs at least two distinct n values, got {0}")]
    TooFewPoints(usize),
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("series of length {got} is shorter than n = {need}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("quantile level {0} outside [0, 1]")]
    QuantileLevel(f64),
    #[error("rank {rank} out of range for {k} districts")]
    RankOutOfRange { rank: usize, k: usize },
    #[error("enacted plan has {got} shares, ensemble rows have {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no grid point at or above the fitting minimum {0}")]
    NoFitPoints(usize),
    #[error("measure \"{measure}\", chain {chain}")]
    InMeasure {
        measure: String,
        chain: usize,
        #[source]
        source: Box<DiagnosticsError>,
    },
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical CDF, `F(x)` = fraction of the sample at or below `x`.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self, DiagnosticsError> {
        if sample.is_empty() {
            return Err(DiagnosticsError::EmptySample);
        }
        Ok(Ecdf {
            sorted: sorted_copy(sample),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// KS distance between two ascending samples by a merge sweep. Ties are
/// stepped over together, so discrete data is handled exactly.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `sup_x |F1(x) - F2(x)|` for two samples.
pub fn ks_two_sample(s1: &[f64], s2: &[f64]) -> Result<f64, DiagnosticsError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    Ok(ks_sorted(&sorted_copy(s1), &sorted_copy(s2)))
}

/// KS distance on the first `n` entries of every pair of series, in the
/// order (0,1), (0,2), ..., (m-2,m-1).
pub fn pairwise_ks(series: &[Vec<f64>], n: usize) -> Result<Vec<f64>, DiagnosticsError> {
    pairwise_ks_with(series, n, Execution::default())
}

pub fn pairwise_ks_with(series: &[Vec<f64>], n: usize, exec: Execution) -> Result<Vec<f64>, DiagnosticsError> {
    if n == 0 {
        return Err(DiagnosticsError::EmptySample);
    }
    for s in series {
        if s.len() < n {
            return Err(DiagnosticsError::SeriesTooShort { need: n, got: s.len() });
        }
    }
    let prefixes: Vec<Vec<f64>> = map_indexed(exec, series.len(), |i| sorted_copy(&series[i][..n]));
    let pairs: Vec<(usize, usize)> = (0..series.len())
        .flat_map(|i| (i + 1..series.len()).map(move |j| (i, j)))
        .collect();
    Ok(map_indexed(exec, pairs.len(), |p| {
        let (i, j) = pairs[p];
        ks_sorted(&prefixes[i], &prefixes[j])
    }))
}

/// Mean-centred series and its lag-0 autocovariance.
fn centred(series: &[f64]) -> Result<(Vec<f64>, f64), DiagnosticsError> {
    if series.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let c: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = c.iter().map(|x| x * x).sum::<f64>() / n;
    if c0 <= 0.0 {
        return Err(DiagnosticsError::ZeroVariance);
    }
    Ok((c, c0))
}

fn acf_at(c: &[f64], c0: f64, lag: usize) -> f64 {
    let m = c.len() - lag;
    let s: f64 = c[..m].iter().zip(&c[lag..]).map(|(x, y)| x * y).sum();
    s / m as f64 / c0
}

/// Sample autocorrelation at `lag`: the lag covariance averaged over its
/// `len - lag` products, divided by the lag-0 variance.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64, DiagnosticsError> {
    if lag >= series.len() {
        return Err(DiagnosticsError::LagTooLong { lag, len: series.len() });
    }
    let (c, c0) = centred(series)?;
    Ok(acf_at(&c, c0, lag))
}

/// Smallest lag ≥ 1 whose autocorrelation is at most `threshold`, searching
/// up to half the series length.
pub fn decay_lag(series: &[f64], threshold: f64) -> Result<usize, DiagnosticsError> {
    let (c, c0) = centred(series)?;
    let max_lag = series.len() / 2;
    (1..=max_lag)
        .find(|&lag| acf_at(&c, c0, lag) <= threshold)
        .ok_or(DiagnosticsError::NonDecaying { threshold, max_lag })
}

/// Least-squares fit of `y = coefficient / sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsFit {
    pub coefficient: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

impl KsFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.coefficient / n.sqrt()
    }
}

pub fn fit_inverse_sqrt(points: &[(f64, f64)]) -> Result<KsFit, DiagnosticsError> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(DiagnosticsError::TooFewPoints(distinct.len()));
    }
    let num: f64 = points.iter().map(|&(n, y)| y / n.sqrt()).sum();
    let den: f64 = points.iter().map(|&(n, _)| 1.0 / n).sum();
    let a = num / den;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|&(n, y)| (y - a / n.sqrt()).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(KsFit {
        coefficient: a,
        r_squared,
        points: points.to_vec(),
    })
}

/// Smallest n with `a / sqrt(n) <= target`, at least 1.
pub fn required_sample_size(a: f64, target: f64) -> u64 {
    assert!(target > 0.0, "target must be positive");
    if a <= 0.0 {
        return 1;
    }
    let x = (a / target).powi(2);
    // (17.65 / 0.01)^2 lands a hair below 3115225; snap float noise.
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (n as u64).max(1)
}

/// Empirical quantile, linear interpolation at 0-based position `q (n - 1)`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64, DiagnosticsError> {
    if values.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(DiagnosticsError::QuantileLevel(q));
    }
    Ok(quantile_sorted(&sorted_copy(values), q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The distances observed at one chain length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub q_lo: f64,
    pub q_hi: f64,
}

impl GridPoint {
    pub fn new(n: usize, values: Vec<f64>, q_lo: f64, q_hi: f64) -> Result<Self, DiagnosticsError> {
        if values.is_empty() {
            return Err(DiagnosticsError::EmptySample);
        }
        let sorted = sorted_copy(&values);
        Ok(GridPoint {
            n,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q_lo: quantile_sorted(&sorted, q_lo),
            q_hi: quantile_sorted(&sorted, q_hi),
            values,
        })
    }
}

/// Fits `b / sqrt(n)` and `c / sqrt(n)` through the lower and upper sample
/// quantiles at each n.
pub fn prediction_interval(
    points_by_n: &[(usize, Vec<f64>)],
    q_lo: f64,
    q_hi: f64,
) -> Result<(KsFit, KsFit), DiagnosticsError> {
    let mut lo = Vec::with_capacity(points_by_n.len());
    let mut hi = Vec::with_capacity(points_by_n.len());
    for (n, values) in points_by_n {
        lo.push((*n as f64, quantile(values, q_lo)?));
        hi.push((*n as f64, quantile(values, q_hi)?));
    }
    Ok((fit_inverse_sqrt(&lo)?, fit_inverse_sqrt(&hi)?))
}

/// Settings for [`sample_size_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    /// Chain lengths at which pairwise distances are computed.
    pub grid: Vec<usize>,
    /// Grid points below this are reported but not fitted.
    pub fit_min_n: usize,
    pub target: f64,
    pub autocorr_threshold: f64,
    pub autocorr_multiple: u64,
    pub q_lo: f64,
    pub q_hi: f64,
}

impl DiagnosticsConfig {
    /// 47 evenly spaced lengths from 1/20 of the chain length to the full
    /// length (100,000 to 2,000,000 for 2M-step chains).
    pub fn for_length(len: usize) -> Self {
        let grid = default_grid(len);
        DiagnosticsConfig {
            fit_min_n: grid.first().copied().unwrap_or(1),
            grid,
            target: 0.01,
            autocorr_threshold: 0.01,
            autocorr_multiple: 1000,
            q_lo: 0.05,
            q_hi: 0.95,
        }
    }
}

pub fn default_grid(len: usize) -> Vec<usize> {
    const POINTS: usize = 47;
    let lo = (len / 20).max(1) as f64;
    let hi = len as f64;
    let mut grid: Vec<usize> = (0..POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (POINTS - 1) as f64).round() as usize)
        .filter(|&n| n >= 1)
        .collect();
    grid.dedup();
    grid
}

/// One measure observed in several independent chains.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSeries {
    pub name: String,
    pub chains: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub a: KsFit,
    pub b: KsFit,
    pub c: KsFit,
    pub required_n_ks: u64,
    pub decay_lags: Vec<usize>,
    pub decay_lag: usize,
    pub required_n_autocorr: u64,
    pub recommended_n: u64,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSizeReport {
    pub per_measure: BTreeMap<String, MeasureReport>,
    pub recommended_n: u64,
}

fn measure_report(
    m: &MeasureSeries,
    cfg: &DiagnosticsConfig,
    exec: Execution,
) -> Result<MeasureReport, DiagnosticsError> {
    if m.chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains(m.chains.len()));
    }
    let shortest = m.chains.iter().map(Vec::len).min().unwrap_or(0);
    let mut points = Vec::new();
    for &n in &cfg.grid {
        if n == 0 || n > shortest {
            continue;
        }
        let d = pairwise_ks_with(&m.chains, n, exec)?;
        points.push(GridPoint::new(n, d, cfg.q_lo, cfg.q_hi)?);
    }
    let fitted: Vec<&GridPoint> = points.iter().filter(|p| p.n >= cfg.fit_min_n).collect();
    if fitted.is_empty() {
        return Err(DiagnosticsError::NoFitPoints(cfg.fit_min_n));
    }
    let a = fit_inverse_sqrt(&fitted.iter().map(|p| (p.n as f64, p.mean)).collect::<Vec<_>>())?;
    let b = fit_inverse_sqrt(&fitted.iter().map(|p| (p.n as f64, p.q_lo)).collect::<Vec<_>>())?;
    let c = fit_inverse_sqrt(&fitted.iter().map(|p| (p.n as f64, p.q_hi)).collect::<Vec<_>>())?;
    let required_n_ks = required_sample_size(a.coefficient, cfg.target);

    let lags = map_indexed(exec, m.chains.len(), |i| {
        decay_lag(&m.chains[i], cfg.autocorr_threshold)
    });
    let decay_lags = lags
        .into_iter()
        .enumerate()
        .map(|(chain, r)| {
            r.map_err(|e| DiagnosticsError::InMeasure {
                measure: m.name.clone(),
                chain,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let decay_lag = decay_lags.iter().copied().max().unwrap_or(0);
    let required_n_autocorr = decay_lag as u64 * cfg.autocorr_multiple;
    Ok(MeasureReport {
        a,
        b,
        c,
        required_n_ks,
        decay_lags,
        decay_lag,
        required_n_autocorr,
        recommended_n: required_n_ks.max(required_n_autocorr),
        points,
    })
}

/// Applies both sample-size criteria to every measure.
pub fn sample_size_report(
    measures: &[MeasureSeries],
    cfg: &DiagnosticsConfig,
    exec: Execution,
) -> Result<SampleSizeReport, DiagnosticsError> {
    let mut per_measure = BTreeMap::new();
    for m in measures {
        per_measure.insert(m.name.clone(), measure_report(m, cfg, exec)?);
    }
    let recommended_n = per_measure.values().map(|r| r.recommended_n).max().unwrap_or(1);
    Ok(SampleSizeReport {
        per_measure,
        recommended_n,
    })
}

/// Where an enacted plan's ranked shares sit in the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremeRankStats {
    /// Per rank, fraction of plans strictly below the enacted share.
    pub below_fraction: Vec<f64>,
    /// Per rank, fraction of plans strictly above the enacted share.
    pub above_fraction: Vec<f64>,
    /// 0-based rank where the enacted plan is most extreme.
    pub most_extreme_rank: usize,
    /// Tail mass of the enacted plan at that rank.
    pub tail: f64,
    /// Fraction of plans with at least one rank as far into either tail.
    pub joint_probability: f64,
}

/// `ensemble[p]` is plan p's ascending share vector.
pub fn extreme_rank_stats(ensemble: &[Vec<f64>], enacted: &[f64]) -> Result<ExtremeRankStats, DiagnosticsError> {
    extreme_rank_stats_with(ensemble, enacted, Execution::default())
}

pub fn extreme_rank_stats_with(
    ensemble: &[Vec<f64>],
    enacted: &[f64],
    exec: Execution,
) -> Result<ExtremeRankStats, DiagnosticsError> {
    if ensemble.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let k = enacted.len();
    if let Some(row) = ensemble.iter().find(|r| r.len() != k) {
        return Err(DiagnosticsError::ShapeMismatch {
            expected: row.len(),
            got: k,
        });
    }
    let total = ensemble.len() as f64;
    let columns: Vec<Vec<f64>> = map_indexed(exec, k, |r| {
        sorted_copy(&ensemble.iter().map(|row| row[r]).collect::<Vec<_>>())
    });
    let below = |col: &[f64], v: f64| col.partition_point(|&x| x < v) as f64 / total;
    let above = |col: &[f64], v: f64| (col.len() - col.partition_point(|&x| x <= v)) as f64 / total;

    let below_fraction: Vec<f64> = (0..k).map(|r| below(&columns[r], enacted[r])).collect();
    let above_fraction: Vec<f64> = (0..k).map(|r| above(&columns[r], enacted[r])).collect();
    let (most_extreme_rank, tail) = (0..k)
        .map(|r| (r, below_fraction[r].min(above_fraction[r])))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap_or((0, 0.0));

    let hits = map_indexed(exec, ensemble.len(), |p| {
        let row = &ensemble[p];
        (0..k).any(|r| below(&columns[r], row[r]) <= tail || above(&columns[r], row[r]) <= tail)
    });
    let joint_probability = hits.iter().filter(|&&h| h).count() as f64 / total;
    Ok(ExtremeRankStats {
        below_fraction,
        above_fraction,
        most_extreme_rank,
        tail,
        joint_probability,
    })
}

/// Box-plot statistics: 1st, 25th, 50th, 75th and 99th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub p1: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p99: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Result<Self, DiagnosticsError> {
        if values.is_empty() {
            return Err(DiagnosticsError::EmptySample);
        }
        let s = sorted_copy(values);
        Ok(BoxStats {
            p1: quantile_sorted(&s, 0.01),
            p25: quantile_sorted(&s, 0.25),
            p50: quantile_sorted(&s, 0.50),
            p75: quantile_sorted(&s, 0.75),
            p99: quantile_sorted(&s, 0.99),
        })
    }
}

/// Box-plot statistics of the 0-based `rank` column.
pub fn rank_percentiles(ensemble: &[Vec<f64>], rank: usize) -> Result<BoxStats, DiagnosticsError> {
    let k = ensemble.first().map_or(0, Vec::len);
    if rank >= k {
        return Err(DiagnosticsError::RankOutOfRange { rank, k });
    }
    BoxStats::of(&ensemble.iter().map(|row| row[rank]).collect::<Vec<_>>())
}

/// Mean of per-chain means and its standard error across chains.
pub fn cross_chain_mean_se(chains: &[Vec<f64>]) -> Result<(f64, f64), DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains(chains.len()));
    }
    let means: Vec<f64> = chains
        .iter()
        .map(|c| {
            if c.is_empty() {
                Err(DiagnosticsError::EmptySample)
            } else {
                Ok(c.iter().sum::<f64>() / c.len() as f64)
            }
        })
        .collect::<Result<_, _>>()?;
    let m = means.len() as f64;
    let mean = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
